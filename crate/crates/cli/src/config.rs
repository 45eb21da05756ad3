//! Run configuration: one TOML file with a section per stage. Unknown keys
//! are rejected and the effective configuration is written next to every
//! command's outputs.

use std::path::Path;

use mvdet_core::header::ExperimentConfig;
use mvdet_core::synth::{ProposalConfig, SceneSpec};
use mvdet_core::{BevConfig, MaskConfig, ThresholdTable};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const SEED_ENV: &str = "MVDET_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JitterConfig {
    /// Standard deviation of the PCA coefficients.
    pub sigma: f64,
}

impl Default for JitterConfig {
    fn default() -> Self {
        Self { sigma: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub bev: BevConfig,
    pub mask: MaskConfig,
    pub thresholds: ThresholdTable,
    pub scene: SceneSpec,
    pub proposals: ProposalConfig,
    /// Self-contained: carries its own scene, mask and BEV settings.
    pub experiment: ExperimentConfig,
    pub jitter: JitterConfig,
}

impl RunConfig {
    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::input(p, e))?;
                Self::parse(&text).map_err(|e| CliError::input(p, e))
            }
        }
    }

    /// Applies the seed override: the flag wins over the environment, which
    /// wins over the file.
    pub fn resolve_seed(&mut self, flag: Option<u64>, env: Option<&str>) -> Result<()> {
        if let Some(s) = flag {
            self.seed = s;
        } else if let Some(v) = env {
            self.seed = v.trim().parse().map_err(|_| CliError::Usage(format!("{SEED_ENV}={v:?} is not an integer")))?;
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is representable in TOML")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |e: String| Err(CliError::Usage(format!("invalid configuration: {e}")));
        if let Err(e) = self.bev.validate() {
            return bad(e.to_string());
        }
        if let Err(e) = self.mask.validate() {
            return bad(e.to_string());
        }
        if let Err(e) = self.scene.validate() {
            return bad(e.to_string());
        }
        if let Err(e) = self.experiment.train.validate() {
            return bad(e.to_string());
        }
        if !(self.jitter.sigma >= 0.0 && self.jitter.sigma.is_finite()) {
            return bad(format!("jitter.sigma {} must be finite and non-negative", self.jitter.sigma));
        }
        Ok(())
    }
}
