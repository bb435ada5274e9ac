use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::DEFAULT_BAND;
use crate::data::{io::write_file, ClipShape};
use crate::diffusion::{ScheduleKind, TrainerConfig};
use crate::error::{Error, Result};
use crate::guidance::GuidanceConfig;
use crate::model::ModelConfig;

/// Corpus sizes used by the pipeline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    /// Training clips, synthesized from `seed`.
    pub train_n: usize,
    /// Held-out clips for inversion, editing and metrics.
    pub eval_n: usize,
    /// Seed of the held-out corpus; the training corpus uses the run seed.
    pub eval_seed: u64,
    pub shape: ClipShape,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            train_n: 2048,
            eval_n: 32,
            eval_seed: 1234,
            shape: ClipShape::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Probe steps; empty means `{0.2T, 0.4T, 0.6T}`.
    pub timesteps: Vec<usize>,
    pub band: usize,
    /// Held-out clips averaged per profile.
    pub clips: usize,
    /// Low-frequency fraction a block must exceed to count as sketching.
    pub threshold: f64,
    pub noise_seed: u64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            timesteps: Vec::new(),
            band: DEFAULT_BAND,
            clips: 8,
            threshold: 0.95,
            noise_seed: 99,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub data: Option<PathBuf>,
    pub ckpt: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

/// Everything a command needs, merged from a JSON file and flags.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub model: ModelConfig,
    pub schedule: ScheduleKind,
    pub trainer: TrainerConfig,
    pub guidance: GuidanceConfig,
    pub corpus: CorpusConfig,
    pub analysis: AnalysisConfig,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            model: ModelConfig::default(),
            schedule: ScheduleKind::Cosine,
            trainer: TrainerConfig::default(),
            guidance: GuidanceConfig::default(),
            corpus: CorpusConfig::default(),
            analysis: AnalysisConfig::default(),
            paths: Paths::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// The file at `path`, or defaults.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.trainer.validate()?;
        self.guidance.validate_for(&self.model)?;
        let s = self.corpus.shape;
        if (s.frames, s.height, s.width) != (self.model.frames, self.model.height, self.model.width) {
            return Err(Error::Config(format!(
                "corpus clips {}x{}x{} do not match model {}x{}x{}",
                s.frames, s.height, s.width, self.model.frames, self.model.height, self.model.width
            )));
        }
        if self.corpus.train_n == 0 || self.corpus.eval_n == 0 || self.analysis.clips == 0 {
            return Err(Error::Config("corpus sizes and analysis clips must be positive".into()));
        }
        if let Some(&t) = self.analysis.timesteps.iter().find(|&&t| t == 0 || t > self.model.timesteps) {
            return Err(Error::Config(format!(
                "analysis timestep {t} outside [1, {}]",
                self.model.timesteps
            )));
        }
        Ok(())
    }

    /// Canonical pretty JSON of the resolved configuration.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn sha256(&self) -> Result<String> {
        Ok(sha256_hex(self.to_json()?.as_bytes()))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes `bytes` to `path` plus a `path.sha256` sidecar naming the content
/// and the resolved-config hashes.
pub fn write_artifact(path: &Path, bytes: &[u8], config_hash: &str) -> Result<()> {
    write_file(path, bytes)?;
    sidecar(path, config_hash)
}

/// Sidecar for a file already on disk.
pub fn sidecar(path: &Path, config_hash: &str) -> Result<()> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let line = format!("{}  {name}\nconfig {config_hash}\n", sha256_hex(&bytes));
    let mut side = path.as_os_str().to_owned();
    side.push(".sha256");
    write_file(Path::new(&side), line.as_bytes())
}

/// Writes `resolved_config.json` into `dir` and returns its hash.
pub fn write_resolved(dir: &Path, cfg: &RunConfig) -> Result<String> {
    let hash = cfg.sha256()?;
    write_artifact(&dir.join("resolved_config.json"), cfg.to_json()?.as_bytes(), &hash)?;
    Ok(hash)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_roundtrip_and_reject_unknown_keys() {
        let cfg = RunConfig::default();
        let back: RunConfig = serde_json::from_str(&cfg.to_json().unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert!(serde_json::from_str::<RunConfig>(r#"{"sed": 1}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"guidance": {"lamda": 1}}"#).is_err());
        let partial: RunConfig = serde_json::from_str(r#"{"seed": 5, "guidance": {"k": 3}}"#).unwrap();
        assert_eq!((partial.seed, partial.guidance.k, partial.guidance.lambda), (5, 3, 12.5));
    }

    #[test]
    fn mismatched_corpus_shape_is_rejected() {
        let mut cfg = RunConfig::default();
        cfg.corpus.shape.frames = 4;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }
}
