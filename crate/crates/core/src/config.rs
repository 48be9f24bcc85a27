//! Study configuration: one JSON file, individual fields overridable from the command line.

use crate::frontends::{FrontendKind, FrontendParams};
use crate::models::ModelKind;
use crate::stimulus::BankConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("config is not valid JSON for this schema: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Everything a study run depends on.
///
/// `frontends = None` means the three built-in front-ends with defaults for the
/// bank's sample rate; an empty list disables them (external embeddings only).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub seed: Option<u64>,
    pub out: PathBuf,
    pub alpha: f64,
    pub bank: BankConfig,
    pub frontends: Option<Vec<FrontendParams>>,
    /// Directories of interchange files produced elsewhere (one or more representations each).
    pub embedding_dirs: Vec<PathBuf>,
    pub models: Vec<ModelKind>,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            seed: None,
            out: PathBuf::from("out"),
            alpha: 0.01,
            bank: BankConfig::default(),
            frontends: None,
            embedding_dirs: Vec::new(),
            models: vec![ModelKind::PitchHeight, ModelKind::ChromaBinary],
        }
    }
}

impl StudyConfig {
    /// Reads a config file. Relative `embedding_dirs` are taken relative to the file.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg: StudyConfig = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for d in &mut cfg.embedding_dirs {
            if d.is_relative() {
                *d = base.join(&*d);
            }
        }
        Ok(cfg)
    }

    pub fn frontend_params(&self) -> Vec<FrontendParams> {
        match &self.frontends {
            Some(list) => list.clone(),
            None => FrontendKind::ALL
                .iter()
                .map(|&k| FrontendParams::default_for(k, self.bank.sample_rate_hz))
                .collect(),
        }
    }

    pub fn seed(&self) -> Result<u64, ConfigError> {
        self.seed
            .ok_or_else(|| ConfigError::Invalid("a seed is required (set \"seed\" or pass --seed)".into()))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        self.seed()?;
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return invalid(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        self.bank.validate().map_err(|e| ConfigError::Invalid(format!("bank: {e}")))?;
        let fronts = self.frontend_params();
        for (i, p) in fronts.iter().enumerate() {
            p.validate(self.bank.sample_rate_hz)
                .map_err(|e| ConfigError::Invalid(format!("frontend {}: {e}", p.kind)))?;
            if fronts[..i].iter().any(|q| q.kind == p.kind) {
                return invalid(format!("frontend {} listed twice", p.kind));
            }
        }
        if fronts.is_empty() && self.embedding_dirs.is_empty() {
            return invalid("no representations: frontends is empty and no embedding_dirs given".into());
        }
        if self.models.is_empty() {
            return invalid("at least one model is required".into());
        }
        for (i, m) in self.models.iter().enumerate() {
            if self.models[..i].contains(m) {
                return invalid(format!("model {m} listed twice"));
            }
        }
        if self.bank.note_midis().len() < 3 {
            return invalid("the bank needs at least 3 notes for rank correlation".into());
        }
        if self.bank.instruments_per_family * self.bank.families.len() < 2 {
            return invalid("a study needs at least 2 instruments".into());
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON of this config with defaults filled in,
    /// excluding the output directory.
    pub fn hash(&self) -> String {
        #[derive(Serialize)]
        struct Canonical<'a> {
            seed: Option<u64>,
            alpha: f64,
            bank: &'a BankConfig,
            frontends: Vec<FrontendParams>,
            embedding_dirs: &'a [PathBuf],
            models: &'a [ModelKind],
        }
        hash_json(&Canonical {
            seed: self.seed,
            alpha: self.alpha,
            bank: &self.bank,
            frontends: self.frontend_params(),
            embedding_dirs: &self.embedding_dirs,
            models: &self.models,
        })
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub(crate) fn hash_json<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("config values serialize");
    hex(&Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seeded() -> StudyConfig {
        StudyConfig {
            seed: Some(1),
            ..StudyConfig::default()
        }
    }

    #[test]
    fn default_config_is_valid_once_seeded() {
        assert!(StudyConfig::default().validate().is_err());
        seeded().validate().unwrap();
        assert_eq!(seeded().frontend_params().len(), 3);
    }

    #[test]
    fn bad_fields_are_rejected() {
        for alpha in [0.0, 1.0, -0.1, f64::NAN] {
            assert!(StudyConfig { alpha, ..seeded() }.validate().is_err());
        }
        assert!(StudyConfig { models: vec![], ..seeded() }.validate().is_err());
        assert!(StudyConfig {
            models: vec![ModelKind::PitchHeight, ModelKind::PitchHeight],
            ..seeded()
        }
        .validate()
        .is_err());
        assert!(StudyConfig { frontends: Some(vec![]), ..seeded() }.validate().is_err());
        let mut twice = seeded();
        twice.frontends = Some(vec![FrontendParams::mel(16000), FrontendParams::mel(16000)]);
        assert!(twice.validate().is_err());
    }

    #[test]
    fn parsing_rejects_unknown_fields_and_fills_defaults() {
        let cfg: StudyConfig = serde_json::from_str(r#"{"seed": 3, "alpha": 0.05}"#).unwrap();
        assert_eq!(cfg.bank, BankConfig::default());
        assert_eq!(cfg.alpha, 0.05);
        assert!(serde_json::from_str::<StudyConfig>(r#"{"sead": 3}"#).is_err());
    }

    #[test]
    fn hash_tracks_content_not_output_dir() {
        let a = seeded();
        let b = StudyConfig { out: "elsewhere".into(), ..seeded() };
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), StudyConfig { seed: Some(2), ..seeded() }.hash());
        // explicit defaults hash like implicit ones
        let c = StudyConfig { frontends: Some(a.frontend_params()), ..seeded() };
        assert_eq!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn load_resolves_relative_embedding_dirs() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("study.json");
        fs::write(&p, r#"{"seed": 1, "embedding_dirs": ["emb", "/abs/emb"]}"#).unwrap();
        let cfg = StudyConfig::load(&p).unwrap();
        assert_eq!(cfg.embedding_dirs, vec![dir.path().join("emb"), PathBuf::from("/abs/emb")]);
        assert!(matches!(StudyConfig::load(&dir.path().join("missing.json")), Err(ConfigError::Read { .. })));
    }
}
