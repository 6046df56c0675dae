use forge_core::{GeoPoint, TimedState, Trajectory};
use forge_nn::{Tape, Tensor};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::train::stream;
use crate::{ModelWeights, VaeError};

/// Prior draw for sample `index` under `seed`. Each index has its own
/// generator stream, so any sample can be produced without the others.
pub fn latent_sample(seed: u64, index: u64, dim: usize) -> Vec<f64> {
    let mut rng = stream(seed, index);
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

/// `count` trajectories decoded from the prior, ids `gen00000, ...`.
pub fn generate(weights: &ModelWeights, count: usize, seed: u64) -> Result<Vec<Trajectory>, VaeError> {
    generate_from(weights, seed, 0, count)
}

/// Samples `first..first + count` of the sequence [`generate`] produces;
/// concatenating consecutive ranges gives the same trajectories as one call.
pub fn generate_from(weights: &ModelWeights, seed: u64, first: u64, count: usize) -> Result<Vec<Trajectory>, VaeError> {
    let (model, store) = weights.instantiate()?;
    let cfg = model.config();
    let b = weights.bounds;
    let mut tape = Tape::new();
    let p = store.bind(&mut tape);
    let base = tape.len();
    let mut out = Vec::with_capacity(count);
    for k in first..first + count as u64 {
        let z = tape.constant(Tensor::new(vec![1, cfg.latent_dim], latent_sample(seed, k, cfg.latent_dim))?);
        let y = model.decode(&mut tape, &p, z)?;
        let states = tape
            .value(y)
            .data()
            .chunks_exact(2)
            .enumerate()
            .map(|(i, u)| {
                let g = b.from_unit([u[0], u[1]]);
                // affine rounding can spill one ulp past the box
                let pos = GeoPoint { lat: g.lat.clamp(b.lat_min, b.lat_max), lon: g.lon.clamp(b.lon_min, b.lon_max) };
                TimedState { t: i as f64 * weights.dt_s, pos }
            })
            .collect();
        out.push(Trajectory::uniform(format!("gen{k:05}"), states, weights.dt_s)?);
        tape.truncate(base);
    }
    Ok(out)
}

/// `decode(encode(x).mu)` for a `[B, L, 2]` batch of normalized sequences.
pub fn reconstruct(weights: &ModelWeights, x: &Tensor) -> Result<Tensor, VaeError> {
    let (model, store) = weights.instantiate()?;
    let mut tape = Tape::new();
    let p = store.bind(&mut tape);
    let x = tape.constant(x.clone());
    let (mu, _) = model.encode(&mut tape, &p, x)?;
    let y = model.decode(&mut tape, &p, mu)?;
    Ok(tape.value(y).clone())
}
