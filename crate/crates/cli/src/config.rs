use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tde_core::ingest::IngestConfig;
use tde_core::scenario::{SweepParameter, SweepSpec};
use tde_core::ScenarioConfig;

use crate::CliError;

/// Contents of a TOML run configuration. Every section is optional and falls
/// back to the reference defaults.
///
/// ```toml
/// output = "fs_sweep.csv"
///
/// [scenario]
/// snr_db = 40.0
/// bandwidth_ratio = 0.4
/// methods = ["sinc", "whittaker_shannon"]
///
/// [sweep]
/// parameter = "rate_hz"
/// values = [2000, 8000, 48000]
///
/// [[ingest.measurements]]
/// audio = "SL1.wav"
/// geometry = "SL1.json"
///
/// [ingest.protocol]
/// factor = 500
/// ```
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub output: Option<PathBuf>,
    pub scenario: ScenarioConfig,
    pub sweep: Option<SweepSection>,
    pub ingest: Option<IngestSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestSection {
    pub measurements: Vec<MeasurementFiles>,
    pub protocol: IngestConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementFiles {
    pub audio: PathBuf,
    pub geometry: PathBuf,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn sweep_spec(&self) -> Result<SweepSpec, CliError> {
        let s = self
            .sweep
            .as_ref()
            .ok_or_else(|| CliError::Config("sweep needs a [sweep] section".into()))?;
        Ok(SweepSpec {
            parameter: s.parameter,
            values: s.values.clone(),
            base: self.scenario.clone(),
        })
    }

    /// SHA-256 of the resolved configuration (defaults filled in), ignoring
    /// the output path.
    pub fn hash(&self) -> String {
        let resolved = Self {
            output: None,
            ..self.clone()
        };
        let canonical = serde_json::to_string(&resolved).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_unknown_keys() {
        let c = RunConfig::parse("").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.scenario.rate_hz, 8000.0);
        let err = RunConfig::parse("[scenario]\nfss = 8000\n").unwrap_err();
        assert!(err.to_string().contains("fss"), "{err}");
        assert!(RunConfig::parse("colour = 1").is_err());
        assert!(RunConfig::parse("[ingest.protocol]\nwindw_ms = 2").is_err());
    }

    #[test]
    fn sections() {
        let c = RunConfig::parse(
            "[scenario]\nsnr_db = inf\nmethods = [\"sinc\"]\n[sweep]\nparameter = \"factor\"\nvalues = [1, 200]\n",
        )
        .unwrap();
        assert!(c.scenario.snr_db.is_infinite());
        let spec = c.sweep_spec().unwrap();
        assert_eq!(spec.parameter, SweepParameter::Factor);
        assert_eq!(spec.values, vec![1.0, 200.0]);
        assert!(RunConfig::default().sweep_spec().is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.scenario.seed = 2;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
        let moved = RunConfig {
            output: Some("x.csv".into()),
            ..a.clone()
        };
        assert_eq!(moved.hash(), a.hash());
    }
}
