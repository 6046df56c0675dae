use forge_core::trajectory::normalize;
use forge_core::{Bounds, RouteDataset, Trajectory};
use forge_nn::{AdamConfig, ParameterStore, Tape, Tensor};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{ConfluxVae, ModelConfig, ModelWeights, VaeError};

/// Independent generator `k` of the family selected by `seed`.
pub(crate) fn stream(seed: u64, k: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(k);
    r
}

const INIT_STREAM: u64 = 0;
const SHUFFLE_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;

/// Sample-weighted means over one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub total: f64,
    pub recon: f64,
    pub kl: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub weights: ModelWeights,
    pub history: Vec<EpochLoss>,
}

/// Normalize trajectories into one `[B, L, 2]` tensor.
pub fn to_batch(trajs: &[Trajectory], bounds: &Bounds) -> Result<Tensor, VaeError> {
    let len = trajs.first().map(Trajectory::len).ok_or(VaeError::EmptyDataset)?;
    let mut data = Vec::with_capacity(trajs.len() * len * 2);
    for t in trajs {
        if t.len() != len {
            return Err(VaeError::SequenceLength { expected: len, found: t.len() });
        }
        data.extend_from_slice(normalize(t, bounds)?.as_flat());
    }
    Ok(Tensor::new(vec![trajs.len(), len, 2], data)?)
}

/// Model state handed to the [`train_with`] callback at the end of an epoch.
pub struct Progress<'a> {
    pub loss: &'a EpochLoss,
    pub model: &'a ConfluxVae,
    pub store: &'a ParameterStore,
}

impl Progress<'_> {
    /// Noise-free reconstruction error `mse(decode(mu(x)), x)` of a batch.
    pub fn reconstruction_mse(&self, x: &Tensor) -> Result<f64, VaeError> {
        let mut tape = Tape::new();
        let p = self.store.bind(&mut tape);
        let xv = tape.constant(x.clone());
        let (mu, _) = self.model.encode(&mut tape, &p, xv)?;
        let y = self.model.decode(&mut tape, &p, mu)?;
        let r = tape.mse(y, xv)?;
        Ok(tape.value(r).item())
    }
}

pub fn train(ds: &RouteDataset, cfg: &ModelConfig, seed: u64) -> Result<TrainOutcome, VaeError> {
    train_with(ds, cfg, seed, |_| Ok(()))
}

/// [`train`] with a callback after every epoch; an error from the callback
/// stops training.
pub fn train_with(
    ds: &RouteDataset,
    cfg: &ModelConfig,
    seed: u64,
    mut on_epoch: impl FnMut(&Progress) -> Result<(), VaeError>,
) -> Result<TrainOutcome, VaeError> {
    cfg.validate()?;
    if ds.is_empty() {
        return Err(VaeError::EmptyDataset);
    }
    ds.validate()?;
    let all = to_batch(&ds.trajectories, &ds.bounds)?;
    if all.shape()[1] != cfg.seq_len {
        return Err(VaeError::SequenceLength { expected: cfg.seq_len, found: all.shape()[1] });
    }
    let row = cfg.seq_len * 2;
    let n = ds.len();

    let (model, mut store) = ConfluxVae::new(cfg, &mut stream(seed, INIT_STREAM))?;
    let mut order_rng = stream(seed, SHUFFLE_STREAM);
    let mut noise_rng = stream(seed, NOISE_STREAM);
    let adam = AdamConfig { lr: cfg.learning_rate, ..Default::default() };
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut order_rng);
        let (mut total, mut recon, mut kl) = (0.0, 0.0, 0.0);
        for batch in order.chunks(cfg.batch_size) {
            let b = batch.len();
            let mut data = Vec::with_capacity(b * row);
            for &i in batch {
                data.extend_from_slice(&all.data()[i * row..(i + 1) * row]);
            }
            let x = Tensor::new(vec![b, cfg.seq_len, 2], data)?;
            let eps = Tensor::from_fn(&[b, cfg.latent_dim], |_| noise_rng.sample(StandardNormal));
            let mut tape = Tape::new();
            let p = store.bind(&mut tape);
            let x = tape.constant(x);
            let terms = model.loss(&mut tape, &p, x, eps)?;
            let mut grads = tape.backward(terms.total)?;
            store.set_grads(&p, &mut grads);
            store.adam_step(&adam)?;
            let w = b as f64;
            total += w * tape.value(terms.total).item();
            recon += w * tape.value(terms.recon).item();
            kl += w * tape.value(terms.kl).item();
        }
        let n = n as f64;
        let e = EpochLoss { epoch, total: total / n, recon: recon / n, kl: kl / n };
        on_epoch(&Progress { loss: &e, model: &model, store: &store })?;
        history.push(e);
    }
    let weights = ModelWeights::from_store(cfg.clone(), ds.bounds, ds.dt, seed, &store);
    Ok(TrainOutcome { weights, history })
}
