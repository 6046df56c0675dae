use forge_nn::layers::CeConvConfig;
use serde::{Deserialize, Serialize};

use crate::VaeError;

/// Independent switches for the ablation variants.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Ablation {
    /// Replace the EMA residual of each block with a second conv + ReLU residual.
    pub disable_conflux_ema: bool,
    /// Replace each whole block with a single conv + ReLU.
    pub disable_conflux_block: bool,
    /// Train on reconstruction error alone.
    pub disable_beta_kl: bool,
    /// Skip smoothing of generated tracks. Read by the pipeline, not the model.
    pub disable_sg_filter: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub seq_len: usize,
    pub in_channels: usize,
    pub hidden_channels: usize,
    pub latent_dim: usize,
    pub beta: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub kernel_size: usize,
    /// `(width, heads)` of each EMA branch.
    pub ema_branches: Vec<(usize, usize)>,
    pub logvar_clamp: f64,
    pub ablation: Ablation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            seq_len: 64,
            in_channels: 2,
            hidden_channels: 64,
            latent_dim: 100,
            beta: 1e-3,
            epochs: 500,
            batch_size: 64,
            learning_rate: 1e-3,
            kernel_size: 3,
            ema_branches: vec![(32, 4), (64, 8), (128, 16)],
            logvar_clamp: 10.0,
            ablation: Ablation::default(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), VaeError> {
        let bad = |m: &str| Err(VaeError::InvalidConfig(m.to_string()));
        if self.seq_len < 4 {
            return bad("seq_len must be at least 4");
        }
        if self.latent_dim < 1 {
            return bad("latent_dim must be at least 1");
        }
        if self.in_channels != 2 {
            return bad("in_channels must be 2 (lat, lon)");
        }
        if self.hidden_channels == 0 || self.batch_size == 0 {
            return bad("hidden_channels and batch_size must be positive");
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return bad("beta must be finite and non-negative");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if self.kernel_size % 2 == 0 {
            return bad("kernel_size must be odd");
        }
        if !(self.logvar_clamp.is_finite() && self.logvar_clamp > 0.0) {
            return bad("logvar_clamp must be positive");
        }
        if self.ema_branches.is_empty() {
            return bad("at least one EMA branch is required");
        }
        if let Some(&(d, h)) = self.ema_branches.iter().find(|(d, h)| *h == 0 || d % h != 0) {
            return Err(VaeError::InvalidConfig(format!("EMA branch width {d} not divisible into {h} heads")));
        }
        Ok(())
    }

    pub(crate) fn block_config(&self) -> CeConvConfig {
        CeConvConfig { channels: self.hidden_channels, kernel: self.kernel_size, branches: self.ema_branches.clone() }
    }

    /// Weight on the KL term actually used in the objective.
    pub fn effective_beta(&self) -> f64 {
        if self.ablation.disable_beta_kl {
            0.0
        } else {
            self.beta
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let c = ModelConfig::default();
        c.validate().unwrap();
        assert_eq!((c.latent_dim, c.batch_size, c.epochs), (100, 64, 500));
    }

    #[test]
    fn rejects_bad_values() {
        for c in [
            ModelConfig { seq_len: 3, ..Default::default() },
            ModelConfig { latent_dim: 0, ..Default::default() },
            ModelConfig { beta: -1e-3, ..Default::default() },
            ModelConfig { kernel_size: 4, ..Default::default() },
            ModelConfig { ema_branches: vec![(30, 4)], ..Default::default() },
        ] {
            assert!(matches!(c.validate(), Err(VaeError::InvalidConfig(_))), "{c:?}");
        }
    }

    #[test]
    fn unknown_json_fields_rejected() {
        assert!(serde_json::from_str::<ModelConfig>(r#"{"latent_dim": 8, "dropout": 0.1}"#).is_err());
        let c: ModelConfig = serde_json::from_str(r#"{"latent_dim": 8, "ablation": {"disable_beta_kl": true}}"#).unwrap();
        assert_eq!(c.latent_dim, 8);
        assert_eq!(c.effective_beta(), 0.0);
    }
}
