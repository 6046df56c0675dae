//! Parameterised layers. Each layer registers its tensors in a
//! [`ParameterStore`] under a name prefix and looks them up again through a
//! [`Bound`] at forward time.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::params::{Bound, ParameterStore};
use crate::tape::{Tape, Var};
use crate::{NnError, Tensor};

/// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform<R: Rng>(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::from_fn(shape, |_| rng.random_range(-a..a))
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    w: String,
    b: String,
    pub n_in: usize,
    pub n_out: usize,
}

impl Dense {
    pub fn new<R: Rng>(store: &mut ParameterStore, name: &str, n_in: usize, n_out: usize, rng: &mut R) -> Result<Self, NnError> {
        let (w, b) = (format!("{name}.w"), format!("{name}.b"));
        store.insert(&w, glorot_uniform(&[n_in, n_out], n_in, n_out, rng))?;
        store.insert(&b, Tensor::zeros(&[n_out]))?;
        Ok(Self { w, b, n_in, n_out })
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var, NnError> {
        tape.dense(x, p.get(&self.w)?, p.get(&self.b)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d {
    w: String,
    b: String,
    pub c_in: usize,
    pub c_out: usize,
    pub k: usize,
}

impl Conv1d {
    pub fn new<R: Rng>(
        store: &mut ParameterStore,
        name: &str,
        c_in: usize,
        c_out: usize,
        k: usize,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        if k % 2 == 0 {
            return Err(NnError::InvalidConfig(format!("{name}: kernel size {k} must be odd")));
        }
        let (w, b) = (format!("{name}.w"), format!("{name}.b"));
        store.insert(&w, glorot_uniform(&[c_out, c_in, k], c_in * k, c_out * k, rng))?;
        store.insert(&b, Tensor::zeros(&[c_out]))?;
        Ok(Self { w, b, c_in, c_out, k })
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var, NnError> {
        tape.conv1d(x, p.get(&self.w)?, Some(p.get(&self.b)?))
    }
}

/// Kernel stored as `[c_in, c_out, k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvTranspose1d {
    w: String,
    b: String,
    pub c_in: usize,
    pub c_out: usize,
    pub k: usize,
}

impl ConvTranspose1d {
    pub fn new<R: Rng>(
        store: &mut ParameterStore,
        name: &str,
        c_in: usize,
        c_out: usize,
        k: usize,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        if k % 2 == 0 {
            return Err(NnError::InvalidConfig(format!("{name}: kernel size {k} must be odd")));
        }
        let (w, b) = (format!("{name}.w"), format!("{name}.b"));
        store.insert(&w, glorot_uniform(&[c_in, c_out, k], c_in * k, c_out * k, rng))?;
        store.insert(&b, Tensor::zeros(&[c_out]))?;
        Ok(Self { w, b, c_in, c_out, k })
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var, NnError> {
        tape.conv1d_transpose(x, p.get(&self.w)?, Some(p.get(&self.b)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmaBranchConfig {
    pub d_in: usize,
    pub d_branch: usize,
    pub heads: usize,
    /// One initial decay per head.
    pub decay_init: Vec<f64>,
}

impl EmaBranchConfig {
    /// Head decays log-spaced over `[0.01, 0.5]`.
    pub fn log_spaced(d_in: usize, d_branch: usize, heads: usize) -> Self {
        let (lo, hi) = (0.01f64.ln(), 0.5f64.ln());
        let decay_init = (0..heads)
            .map(|h| if heads == 1 { (0.5 * (lo + hi)).exp() } else { (lo + (hi - lo) * h as f64 / (heads - 1) as f64).exp() })
            .collect();
        Self { d_in, d_branch, heads, decay_init }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        let bad = |m: String| Err(NnError::InvalidConfig(m));
        if self.d_in == 0 || self.d_branch == 0 || self.heads == 0 {
            return bad("EMA branch sizes must be positive".into());
        }
        if self.d_branch % self.heads != 0 {
            return bad(format!("d_branch {} not divisible by {} heads", self.d_branch, self.heads));
        }
        if self.decay_init.len() != self.heads {
            return bad(format!("{} decays for {} heads", self.decay_init.len(), self.heads));
        }
        if self.decay_init.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
            return bad("decays must lie in (0, 1)".into());
        }
        Ok(())
    }
}

/// Input projection (no bias), per-channel EMA scan with `alpha =
/// sigmoid(rho)`, output projection with bias. Operates on `[B, L, d_in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiHeadEma {
    pub cfg: EmaBranchConfig,
    w_in: String,
    rho: String,
    out: Dense,
}

impl MultiHeadEma {
    pub fn new<R: Rng>(store: &mut ParameterStore, name: &str, cfg: EmaBranchConfig, rng: &mut R) -> Result<Self, NnError> {
        cfg.validate()?;
        let w_in = format!("{name}.w_in");
        let rho = format!("{name}.rho");
        store.insert(&w_in, glorot_uniform(&[cfg.d_in, cfg.d_branch], cfg.d_in, cfg.d_branch, rng))?;
        let per_head = cfg.d_branch / cfg.heads;
        let r = Tensor::from_fn(&[cfg.d_branch], |c| logit(cfg.decay_init[c / per_head]));
        store.insert(&rho, r)?;
        let out = Dense::new(store, &format!("{name}.out"), cfg.d_branch, cfg.d_in, rng)?;
        Ok(Self { cfg, w_in, rho, out })
    }

    pub fn output_weight_name(&self) -> &str {
        &self.out.w
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var, NnError> {
        let h = tape.matmul(x, p.get(&self.w_in)?)?;
        let alpha = tape.sigmoid(p.get(&self.rho)?);
        let e = tape.ema_scan(h, alpha)?;
        self.out.forward(tape, p, e)
    }
}

/// `x + sum_i softmax(logits)_i * y_i`
pub fn conflux_fuse(tape: &mut Tape, x: Var, ys: &[Var], gate_logits: Var) -> Result<Var, NnError> {
    let w = tape.softmax(gate_logits)?;
    let s = tape.weighted_sum(ys, w)?;
    tape.add(x, s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CeConvConfig {
    pub channels: usize,
    pub kernel: usize,
    /// `(d_branch, heads)` per branch.
    pub branches: Vec<(usize, usize)>,
}

impl CeConvConfig {
    pub fn with_channels(channels: usize) -> Self {
        Self { channels, kernel: 3, branches: vec![(32, 4), (64, 8), (128, 16)] }
    }
}

/// Convolution + ReLU followed by three multi-head EMA branches fused into
/// a residual by a softmax gate. Operates on `[B, C, L]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CeConv {
    pub conv: Conv1d,
    pub branches: Vec<MultiHeadEma>,
    gate: String,
}

impl CeConv {
    pub fn new<R: Rng>(store: &mut ParameterStore, name: &str, cfg: &CeConvConfig, rng: &mut R) -> Result<Self, NnError> {
        if cfg.branches.is_empty() {
            return Err(NnError::InvalidConfig(format!("{name}: at least one EMA branch required")));
        }
        let conv = Conv1d::new(store, &format!("{name}.conv"), cfg.channels, cfg.channels, cfg.kernel, rng)?;
        let branches = cfg
            .branches
            .iter()
            .enumerate()
            .map(|(i, &(d, h))| {
                MultiHeadEma::new(store, &format!("{name}.ema{i}"), EmaBranchConfig::log_spaced(cfg.channels, d, h), rng)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let gate = format!("{name}.gate");
        store.insert(&gate, Tensor::zeros(&[cfg.branches.len()]))?;
        Ok(Self { conv, branches, gate })
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var, NnError> {
        let h = self.conv.forward(tape, p, x)?;
        let h = tape.relu(h);
        let t = tape.swap_last2(h)?;
        let ys = self.branches.iter().map(|b| b.forward(tape, p, t)).collect::<Result<Vec<_>, _>>()?;
        let fused = conflux_fuse(tape, t, &ys, p.get(&self.gate)?)?;
        tape.swap_last2(fused)
    }
}
