use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gate::{GateConfig, DEFAULT_BETA_MAX, DEFAULT_WARMUP_RATIO};
use crate::hf::{DEFAULT_CLAMP_HI, DEFAULT_LEVELS};
use crate::intensity::IntensityConfig;
use crate::severity::{FixtureScorer, MockScorer, RemoteScorer, Scorer, ScorerConfig};
use crate::synth::SynthConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ScorerKind {
    #[default]
    Mock,
    Remote,
    Fixture,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScorerSection {
    pub kind: ScorerKind,
    /// JSON answer table used by the fixture scorer.
    pub fixture: Option<PathBuf>,
    pub remote: ScorerConfig,
}

impl ScorerSection {
    pub fn build(&self) -> Result<Box<dyn Scorer>> {
        Ok(match self.kind {
            ScorerKind::Mock => Box::new(MockScorer),
            ScorerKind::Fixture => {
                let path = self
                    .fixture
                    .as_ref()
                    .ok_or_else(|| Error::invalid("fixture scorer selected without a fixture file"))?;
                Box::new(FixtureScorer::from_path(path)?)
            }
            ScorerKind::Remote => Box::new(RemoteScorer::from_env(self.remote.clone())?),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HfSection {
    pub levels: usize,
    pub clamp_hi: f64,
}

impl Default for HfSection {
    fn default() -> Self {
        Self {
            levels: DEFAULT_LEVELS,
            clamp_hi: DEFAULT_CLAMP_HI,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GateSection {
    /// Modulation strength used at inference; `beta_max` when unset.
    pub beta: Option<f64>,
    pub beta_max: f64,
    pub warmup_ratio: f64,
}

impl Default for GateSection {
    fn default() -> Self {
        Self {
            beta: None,
            beta_max: DEFAULT_BETA_MAX,
            warmup_ratio: DEFAULT_WARMUP_RATIO,
        }
    }
}

impl GateSection {
    pub fn schedule(&self) -> GateConfig {
        GateConfig {
            beta_max: self.beta_max,
            warmup_ratio: self.warmup_ratio,
        }
    }

    pub fn beta(&self) -> f64 {
        self.beta.unwrap_or(self.beta_max)
    }
}

/// Everything a command can be configured with; loaded from TOML.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub output_dir: Option<PathBuf>,
    /// Also write color heatmaps next to the maps.
    pub visualize: bool,
    pub scorer: ScorerSection,
    pub hf: HfSection,
    pub intensity: IntensityConfig,
    pub gate: GateSection,
    pub synth: SynthConfig,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::invalid(format!("config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.hf.levels < 1 {
            return Err(Error::invalid("hf levels must be at least 1"));
        }
        if !(self.hf.clamp_hi > 0.0) {
            return Err(Error::invalid("hf clamp_hi must be positive"));
        }
        self.intensity.validate()?;
        self.gate.schedule().validate()?;
        let beta = self.gate.beta();
        if !(0.0..=self.gate.beta_max).contains(&beta) {
            return Err(Error::invalid(format!(
                "beta {beta} must lie in [0, beta_max = {}]",
                self.gate.beta_max
            )));
        }
        self.synth.validate()?;
        if self.scorer.kind == ScorerKind::Remote {
            self.scorer.remote.validate()?;
        }
        Ok(())
    }
}
