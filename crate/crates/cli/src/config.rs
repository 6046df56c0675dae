use std::collections::BTreeSet;
use std::path::Path;

use forge_core::encounter::ScenarioConfig;
use forge_core::preprocess::RouteSpec;
use forge_core::smoothing::{SavgolFilter, SavgolParams};
use forge_core::synth::SynthKind;
use forge_core::RegionOfInterest;
use forge_vae::ModelConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Seeds {
    pub synth: u64,
    pub train: u64,
    pub generate: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self { synth: 1, train: 1, generate: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSection {
    pub kind: SynthKind,
    pub count: usize,
}

impl Default for SynthSection {
    fn default() -> Self {
        Self { kind: SynthKind::Crossing, count: 300 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerateSection {
    pub count: usize,
}

impl Default for GenerateSection {
    fn default() -> Self {
        Self { count: 1000 }
    }
}

/// Everything the pipeline commands read besides their input artifacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub routes: Vec<RouteSpec>,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub scenario: ScenarioConfig,
    pub roi: RegionOfInterest,
    #[serde(default)]
    pub smoothing: SavgolParams,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default)]
    pub synth: SynthSection,
    #[serde(default)]
    pub generate: GenerateSection,
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_str(text)
            .map_err(|e| CliError::Validation(format!("line {}, column {}: {e}", e.line(), e.column())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| e.context(path))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Validation(m));
        if self.routes.is_empty() {
            return bad("at least one route is required".into());
        }
        let mut names = BTreeSet::new();
        for r in &self.routes {
            if !names.insert(r.name.as_str()) {
                return bad(format!("duplicate route name {}", r.name));
            }
            if r.window_steps != self.model.seq_len {
                return bad(format!(
                    "route {}: window_steps {} differs from model.seq_len {}",
                    r.name, r.window_steps, self.model.seq_len
                ));
            }
            if let Err(e) = r.start_box.validate().and(r.end_box.validate()) {
                return bad(format!("route {}: {e}", r.name));
            }
            if !(r.dt_s.is_finite() && r.dt_s > 0.0) {
                return bad(format!("route {}: dt_s must be positive", r.name));
            }
        }
        self.model.validate().map_err(|e| CliError::Validation(e.to_string()))?;
        self.scenario.validate().map_err(|e| CliError::Validation(e.to_string()))?;
        SavgolFilter::new(self.smoothing).map_err(|e| CliError::Validation(format!("smoothing: {e}")))?;
        if self.synth.count == 0 || self.generate.count == 0 {
            return bad("synth.count and generate.count must be positive".into());
        }
        Ok(())
    }

    pub fn route(&self, name: &str) -> Result<&RouteSpec, CliError> {
        self.routes.iter().find(|r| r.name == name).ok_or_else(|| {
            let known: Vec<&str> = self.routes.iter().map(|r| r.name.as_str()).collect();
            CliError::Validation(format!("unknown route {name} (config has {})", known.join(", ")))
        })
    }
}
