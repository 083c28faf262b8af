use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::augment::DEFAULT_FACTOR;
use crate::error::{Error, Result};
use crate::train::TrainingConfig;
use crate::unet::{ArchitectureKind, UNetConfig};
use crate::volume_io::DEFAULT_SLICE_BUDGET;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Raw scans (`.nii` or `.npy`).
    pub scans: Vec<PathBuf>,
    /// Brain masks, one per scan, same order.
    pub masks: Vec<PathBuf>,
    /// Root of an augmented tree written by `augment`.
    pub augmented: Option<PathBuf>,
    pub factor: usize,
    /// Slices kept in memory while training.
    pub slice_budget: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            scans: Vec::new(),
            masks: Vec::new(),
            augmented: None,
            factor: DEFAULT_FACTOR,
            slice_budget: DEFAULT_SLICE_BUDGET,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictConfig {
    pub checkpoint: Option<PathBuf>,
    pub input: Option<PathBuf>,
    /// Optional brain mask for scoring the prediction.
    pub ground_truth: Option<PathBuf>,
    /// Slices per forward pass.
    pub batch_size: usize,
}

impl Default for PredictConfig {
    fn default() -> Self {
        Self {
            checkpoint: None,
            input: None,
            ground_truth: None,
            batch_size: 4,
        }
    }
}

/// Everything a subcommand needs. Loaded from TOML; `defaults` prints the
/// full set as flat dotted keys.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub arch: ArchitectureKind,
    pub seed: u64,
    pub out: PathBuf,
    pub model: UNetConfig,
    pub train: TrainingConfig,
    pub data: DataConfig,
    pub predict: PredictConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            arch: ArchitectureKind::Vanilla,
            seed: 0,
            out: PathBuf::from("out"),
            model: UNetConfig::default(),
            train: TrainingConfig::default(),
            data: DataConfig::default(),
            predict: PredictConfig::default(),
        }
    }
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut Vec<String>) {
    for (key, value) in table {
        let name = if prefix.is_empty() {
            key.clone()
        } else {
            format!("{prefix}.{key}")
        };
        match value {
            toml::Value::Table(t) => flatten(&name, t, out),
            v => out.push(format!("{name} = {v}")),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| e.in_file(path))
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        if self.data.factor == 0 {
            return Err(Error::Config("data.factor must be at least 1".into()));
        }
        if self.data.slice_budget == 0 || self.predict.batch_size == 0 {
            return Err(Error::Config(
                "data.slice_budget and predict.batch_size must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Training settings with the run seed applied.
    pub fn training(&self) -> TrainingConfig {
        TrainingConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }

    /// The config as `key = value` lines with dotted keys, sorted within
    /// each section. Parsing the output gives back the same config.
    pub fn to_flat_toml(&self) -> String {
        let value = toml::Table::try_from(self).expect("config serializes to a table");
        let mut lines = Vec::new();
        flatten("", &value, &mut lines);
        let mut text = lines.join("\n");
        text.push('\n');
        text
    }

    /// SHA-256 of [`RunConfig::to_flat_toml`], hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_flat_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_flat_keys() {
        let cfg = RunConfig::default();
        let text = cfg.to_flat_toml();
        assert!(text.contains("model.base_filters = 32"), "{text}");
        assert!(text.contains("train.learning_rate = 0.00001"), "{text}");
        assert!(text.lines().all(|l| !l.starts_with('[')));
        assert_eq!(RunConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_files_fill_in_defaults() {
        let cfg =
            RunConfig::from_toml_str("arch = \"dense\"\nseed = 7\nmodel.base_filters = 8\n[train]\nbatch_size = 4\n")
                .unwrap();
        assert_eq!(cfg.arch, ArchitectureKind::Dense);
        assert_eq!(cfg.model.base_filters, 8);
        assert_eq!(cfg.model.depth, 4);
        assert_eq!(cfg.train.batch_size, 4);
        assert_eq!(cfg.training().seed, 7);
    }

    #[test]
    fn unknown_and_invalid_keys_are_config_errors() {
        for text in [
            "colour = 1",
            "train.seed = 3",
            "arch = \"wide\"",
            "model.height = 100",
            "data.factor = 0",
        ] {
            assert!(
                matches!(RunConfig::from_toml_str(text), Err(Error::Config(_))),
                "{text}"
            );
        }
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
