//! Run configuration: a TOML file with top-level run settings and one
//! section per scenario. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::scenario::case_control::CaseControlConfig;
use crate::scenario::normal_mean::NormalMeanConfig;
use crate::scenario::twophase_linear::TwoPhaseLinearConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    NormalMean,
    CaseControl,
    TwoPhaseLinear,
}

impl ScenarioKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::NormalMean => "normal_mean",
            ScenarioKind::CaseControl => "case_control",
            ScenarioKind::TwoPhaseLinear => "two_phase_linear",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationConfig {
    pub scenario: Option<ScenarioKind>,
    pub replicates: usize,
    pub seed: u64,
    /// Worker threads; 0 means one per core.
    pub threads: usize,
    pub output_dir: PathBuf,
    pub normal_mean: NormalMeanConfig,
    pub case_control: CaseControlConfig,
    pub two_phase_linear: TwoPhaseLinearConfig,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            scenario: None,
            replicates: 2000,
            seed: 1,
            threads: 0,
            output_dir: PathBuf::from("ntlab-out"),
            normal_mean: NormalMeanConfig::default(),
            case_control: CaseControlConfig::default(),
            two_phase_linear: TwoPhaseLinearConfig::default(),
        }
    }
}

impl SimulationConfig {
    /// Parse TOML text. Every unknown key is reported, not just the first.
    pub fn parse(text: &str) -> Result<Self> {
        let de = toml::de::Deserializer::parse(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut unknown = Vec::new();
        let cfg: Self = serde_ignored::deserialize(de, |path| unknown.push(path.to_string()))
            .map_err(|e| Error::Config(e.to_string()))?;
        if !unknown.is_empty() {
            return Err(Error::Config(format!("unknown configuration keys: {}", unknown.join(", "))));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be positive".into()));
        }
        if self.seed > i64::MAX as u64 {
            // TOML integers are signed 64-bit; keep the resolved config round-trippable.
            return Err(Error::Config(format!("seed must be at most {}", i64::MAX)));
        }
        match self.scenario {
            Some(ScenarioKind::NormalMean) => self.normal_mean.validate(),
            Some(ScenarioKind::CaseControl) => self.case_control.validate(),
            Some(ScenarioKind::TwoPhaseLinear) => self.two_phase_linear.validate(),
            None => Ok(()),
        }
    }

    /// The resolved configuration as TOML, as embedded in run outputs.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Hex SHA-256 of [`Self::to_toml`].
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.to_toml()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(SimulationConfig::parse("").unwrap(), SimulationConfig::default());
    }

    #[test]
    fn sections_are_read() {
        let cfg = SimulationConfig::parse(
            "scenario = \"normal_mean\"\nreplicates = 50\nseed = 9\n[normal_mean]\nmu = 0.5\nkappa_grid = [0.0, 1.0]\n",
        )
        .unwrap();
        assert_eq!(cfg.scenario, Some(ScenarioKind::NormalMean));
        assert_eq!(cfg.replicates, 50);
        assert_eq!(cfg.normal_mean.mu, 0.5);
        assert_eq!(cfg.normal_mean.kappa_grid, vec![0.0, 1.0]);
        assert_eq!(cfg.normal_mean.n, NormalMeanConfig::default().n);
    }

    #[test]
    fn unknown_keys_are_all_listed() {
        let err = SimulationConfig::parse("replicate = 3\n[normal_mean]\nsigma = 1.0\n").unwrap_err().to_string();
        assert!(err.contains("replicate"), "{err}");
        assert!(err.contains("normal_mean.sigma"), "{err}");
    }

    #[test]
    fn zero_replicates_rejected() {
        let cfg = SimulationConfig::parse("replicates = 0").unwrap();
        assert!(cfg.validate().unwrap_err().to_string().contains("replicates must be positive"));
    }

    #[test]
    fn resolved_config_round_trips() {
        let mut cfg = SimulationConfig::default();
        cfg.scenario = Some(ScenarioKind::CaseControl);
        cfg.seed = 12345;
        let text = cfg.to_toml().unwrap();
        assert_eq!(SimulationConfig::parse(&text).unwrap(), cfg);
        assert_eq!(cfg.hash().unwrap().len(), 64);
    }
}
