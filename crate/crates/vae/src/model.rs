use forge_nn::layers::{CeConv, Conv1d, ConvTranspose1d, Dense};
use forge_nn::{Bound, NnError, ParameterStore, Tape, Tensor, Var};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::{ModelConfig, VaeError};

/// One latent draw per row: `z = mu + exp(logvar / 2) * eps`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentCode {
    pub mu: Tensor,
    pub logvar: Tensor,
    pub eps: Tensor,
    pub z: Tensor,
}

/// Draw `eps ~ N(0, I)` and form `z` outside any tape.
pub fn reparameterize<R: Rng>(mu: &Tensor, logvar: &Tensor, rng: &mut R) -> Result<LatentCode, VaeError> {
    if mu.shape() != logvar.shape() {
        return Err(NnError::shape("reparameterize", format!("{:?} vs {:?}", mu.shape(), logvar.shape())).into());
    }
    let eps = Tensor::from_fn(mu.shape(), |_| rng.sample(StandardNormal));
    let z = mu
        .data()
        .iter()
        .zip(logvar.data())
        .zip(eps.data())
        .map(|((m, lv), e)| m + (0.5 * lv).exp() * e)
        .collect();
    let z = Tensor::new(mu.shape().to_vec(), z)?;
    Ok(LatentCode { mu: mu.clone(), logvar: logvar.clone(), eps, z })
}

/// `(total, recon, kl)` with `total = recon + beta * kl`.
pub fn total_loss(x: &Tensor, x_hat: &Tensor, mu: &Tensor, logvar: &Tensor, beta: f64) -> Result<(f64, f64, f64), VaeError> {
    let mut tape = Tape::new();
    let (x, x_hat) = (tape.constant(x.clone()), tape.constant(x_hat.clone()));
    let (mu, logvar) = (tape.constant(mu.clone()), tape.constant(logvar.clone()));
    let recon = tape.mse(x_hat, x)?;
    let kl = tape.kl_divergence(mu, logvar)?;
    let (r, k) = (tape.value(recon).item(), tape.value(kl).item());
    Ok((r + beta * k, r, k))
}

#[derive(Debug, Clone, PartialEq)]
enum Block {
    Conflux(CeConv),
    /// `h + relu(conv2(h))` with `h = relu(conv1(x))`
    ConvResidual(Conv1d, Conv1d),
    Plain(Conv1d),
}

impl Block {
    fn new<R: Rng>(store: &mut ParameterStore, name: &str, cfg: &ModelConfig, rng: &mut R) -> Result<Self, NnError> {
        let (c, k) = (cfg.hidden_channels, cfg.kernel_size);
        Ok(if cfg.ablation.disable_conflux_block {
            Block::Plain(Conv1d::new(store, &format!("{name}.conv"), c, c, k, rng)?)
        } else if cfg.ablation.disable_conflux_ema {
            Block::ConvResidual(
                Conv1d::new(store, &format!("{name}.conv"), c, c, k, rng)?,
                Conv1d::new(store, &format!("{name}.res"), c, c, k, rng)?,
            )
        } else {
            Block::Conflux(CeConv::new(store, name, &cfg.block_config(), rng)?)
        })
    }

    fn forward(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var, NnError> {
        match self {
            Block::Conflux(b) => b.forward(tape, p, x),
            Block::ConvResidual(c1, c2) => {
                let h = c1.forward(tape, p, x)?;
                let h = tape.relu(h);
                let r = c2.forward(tape, p, h)?;
                let r = tape.relu(r);
                tape.add(h, r)
            }
            Block::Plain(c) => {
                let h = c.forward(tape, p, x)?;
                Ok(tape.relu(h))
            }
        }
    }
}

/// Tape handles of one forward pass through encoder, sampler and decoder.
#[derive(Debug, Clone, Copy)]
pub struct LossTerms {
    pub mu: Var,
    pub logvar: Var,
    pub x_hat: Var,
    pub recon: Var,
    pub kl: Var,
    pub total: Var,
}

/// Layer structure of the model; the weights live in a [`ParameterStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct ConfluxVae {
    cfg: ModelConfig,
    enc1: Conv1d,
    enc2: Conv1d,
    enc_block: Block,
    mu: Dense,
    logvar: Dense,
    dec_in: Dense,
    dec_block: Block,
    dec1: ConvTranspose1d,
    dec2: ConvTranspose1d,
}

impl ConfluxVae {
    /// Build the layers and register freshly initialised weights.
    pub fn new<R: Rng>(cfg: &ModelConfig, rng: &mut R) -> Result<(Self, ParameterStore), VaeError> {
        cfg.validate()?;
        let mut s = ParameterStore::new();
        let (c, k, l, j) = (cfg.hidden_channels, cfg.kernel_size, cfg.seq_len, cfg.latent_dim);
        let enc1 = Conv1d::new(&mut s, "enc.conv1", cfg.in_channels, c, k, rng)?;
        let enc2 = Conv1d::new(&mut s, "enc.conv2", c, c, k, rng)?;
        let enc_block = Block::new(&mut s, "enc.block", cfg, rng)?;
        let mu = Dense::new(&mut s, "enc.mu", c * l, j, rng)?;
        let logvar = Dense::new(&mut s, "enc.logvar", c * l, j, rng)?;
        let dec_in = Dense::new(&mut s, "dec.fc", j, c * l, rng)?;
        let dec_block = Block::new(&mut s, "dec.block", cfg, rng)?;
        let dec1 = ConvTranspose1d::new(&mut s, "dec.deconv1", c, c, k, rng)?;
        let dec2 = ConvTranspose1d::new(&mut s, "dec.deconv2", c, cfg.in_channels, k, rng)?;
        let model = Self { cfg: cfg.clone(), enc1, enc2, enc_block, mu, logvar, dec_in, dec_block, dec1, dec2 };
        Ok((model, s))
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    fn check_input(&self, tape: &Tape, x: Var) -> Result<usize, VaeError> {
        let s = tape.value(x).shape();
        if s.len() != 3 || s[1] != self.cfg.seq_len || s[2] != self.cfg.in_channels {
            return Err(NnError::shape(
                "encode",
                format!("input {s:?}, expected [B, {}, {}]", self.cfg.seq_len, self.cfg.in_channels),
            )
            .into());
        }
        Ok(s[0])
    }

    /// `[B, L, 2] -> (mu [B, J], logvar [B, J])`, logvar clamped.
    pub fn encode(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<(Var, Var), VaeError> {
        let b = self.check_input(tape, x)?;
        let h = tape.swap_last2(x)?;
        let h = self.enc1.forward(tape, p, h)?;
        let h = tape.relu(h);
        let h = self.enc2.forward(tape, p, h)?;
        let h = tape.relu(h);
        let h = self.enc_block.forward(tape, p, h)?;
        let flat = tape.reshape(h, &[b, self.cfg.hidden_channels * self.cfg.seq_len])?;
        let mu = self.mu.forward(tape, p, flat)?;
        let lv = self.logvar.forward(tape, p, flat)?;
        let c = self.cfg.logvar_clamp;
        Ok((mu, tape.clamp(lv, -c, c)))
    }

    /// `[B, J] -> [B, L, 2]` in `(0, 1)`.
    pub fn decode(&self, tape: &mut Tape, p: &Bound, z: Var) -> Result<Var, VaeError> {
        let s = tape.value(z).shape();
        if s.len() != 2 || s[1] != self.cfg.latent_dim {
            return Err(NnError::shape("decode", format!("latent {s:?}, expected [B, {}]", self.cfg.latent_dim)).into());
        }
        let b = s[0];
        let h = self.dec_in.forward(tape, p, z)?;
        let h = tape.reshape(h, &[b, self.cfg.hidden_channels, self.cfg.seq_len])?;
        let h = self.dec_block.forward(tape, p, h)?;
        let h = self.dec1.forward(tape, p, h)?;
        let h = tape.relu(h);
        let h = self.dec2.forward(tape, p, h)?;
        let h = tape.sigmoid(h);
        Ok(tape.swap_last2(h)?)
    }

    /// Full objective for a batch `x [B, L, 2]` with sampler noise `eps [B, J]`.
    pub fn loss(&self, tape: &mut Tape, p: &Bound, x: Var, eps: Tensor) -> Result<LossTerms, VaeError> {
        let (mu, logvar) = self.encode(tape, p, x)?;
        let z = tape.reparameterize(mu, logvar, eps)?;
        let x_hat = self.decode(tape, p, z)?;
        let recon = tape.mse(x_hat, x)?;
        let kl = tape.kl_divergence(mu, logvar)?;
        let total = tape.axpy(recon, kl, self.cfg.effective_beta())?;
        Ok(LossTerms { mu, logvar, x_hat, recon, kl, total })
    }
}
