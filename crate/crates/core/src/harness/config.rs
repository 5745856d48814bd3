use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::TailProfile;
use crate::error::{Error, Result};
use crate::fairfal::FairFalConfig;
use crate::federation::FederationConfig;
use crate::model::{Architecture, TrainConfig};
use crate::strategies::Strategy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    #[default]
    Blobs,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub kind: DatasetKind,
    // blobs
    pub num_classes: usize,
    pub per_class: usize,
    pub test_per_class: usize,
    pub dim: usize,
    pub separation: f64,
    // csv
    pub path: Option<PathBuf>,
    pub test_path: Option<PathBuf>,
    /// Share of the smallest class held out per class when no `test_path` is given.
    pub test_fraction: f64,
    /// Seed of data generation, long-tail subsampling and the test split.
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            kind: DatasetKind::Blobs,
            num_classes: 10,
            per_class: 300,
            test_per_class: 100,
            dim: 16,
            separation: 4.0,
            path: None,
            test_path: None,
            test_fraction: 0.2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartitionConfig {
    pub num_clients: usize,
    pub alpha: f64,
    pub rho: f64,
    pub tail: TailProfile,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        Self {
            num_clients: 10,
            alpha: 100.0,
            rho: 20.0,
            tail: TailProfile::Exponential,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Hidden width; 0 trains a linear model.
    pub hidden: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { hidden: 32 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FederationSection {
    pub comm_rounds: usize,
    pub local_epochs: usize,
    /// Defaults to `min(comm_rounds * local_epochs, 200)`.
    pub local_model_epochs: Option<usize>,
    /// Start each cycle's federation from the previous global model instead
    /// of the shared initialization.
    pub warm_start: bool,
}

impl Default for FederationSection {
    fn default() -> Self {
        Self {
            comm_rounds: 100,
            local_epochs: 5,
            local_model_epochs: None,
            warm_start: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    /// Communication round from which the learning rate is decayed.
    pub lr_decay_round: Option<usize>,
    pub lr_decay_factor: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            lr: 0.01,
            momentum: 0.9,
            weight_decay: 1e-5,
            batch_size: 64,
            lr_decay_round: Some(75),
            lr_decay_factor: 0.1,
        }
    }
}

/// Full description of an experiment, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub strategy: String,
    pub al_cycles: usize,
    pub per_cycle_fraction: f64,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    /// Worker threads; 0 uses all cores. Capped by `FAIRFAL_THREADS`.
    pub threads: usize,
    pub dataset: DatasetConfig,
    pub partition: PartitionConfig,
    pub model: ModelConfig,
    pub federation: FederationSection,
    pub train: TrainSection,
    pub fairfal: FairFalConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            strategy: "fairfal".into(),
            al_cycles: 9,
            per_cycle_fraction: 0.05,
            seeds: vec![1, 2, 3, 4, 5],
            output_dir: PathBuf::from("out"),
            threads: 0,
            dataset: DatasetConfig::default(),
            partition: PartitionConfig::default(),
            model: ModelConfig::default(),
            federation: FederationSection::default(),
            train: TrainSection::default(),
            fairfal: FairFalConfig::default(),
        }
    }
}

fn config_err(key: &str, msg: impl Into<String>) -> Error {
    Error::Config {
        key: key.into(),
        msg: msg.into(),
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text)
            .map_err(|e| config_err("<document>", e.to_string().trim()))?;
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let key = e.path().to_string();
            config_err(&key, e.into_inner().to_string().trim())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| e.context(format!("config {}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn strategy(&self) -> Result<Strategy> {
        self.strategy
            .parse()
            .map_err(|e: Error| config_err("strategy", e.to_string()))
    }

    pub fn architecture(&self, input_dim: usize, num_classes: usize) -> Architecture {
        Architecture::mlp(input_dim, self.model.hidden, num_classes)
    }

    pub fn federation_config(&self) -> FederationConfig {
        let f = &self.federation;
        let t = &self.train;
        FederationConfig {
            comm_rounds: f.comm_rounds,
            local_epochs: f.local_epochs,
            local_model_epochs: f
                .local_model_epochs
                .unwrap_or_else(|| (f.comm_rounds * f.local_epochs).min(200)),
            train: TrainConfig {
                lr: t.lr,
                momentum: t.momentum,
                weight_decay: t.weight_decay,
                batch_size: t.batch_size,
                epochs: f.local_epochs,
                lr_decay_at: t.lr_decay_round,
                lr_decay_factor: t.lr_decay_factor,
                seed: 0,
            },
        }
    }

    /// Checks every invariant, naming the offending key.
    pub fn validate(&self) -> Result<()> {
        self.strategy()?;
        if self.al_cycles == 0 {
            return Err(config_err("al_cycles", "must be >= 1"));
        }
        if !(self.per_cycle_fraction > 0.0 && self.per_cycle_fraction <= 1.0) {
            return Err(config_err("per_cycle_fraction", "must be in (0, 1]"));
        }
        if self.seeds.is_empty() {
            return Err(config_err("seeds", "must not be empty"));
        }
        let d = &self.dataset;
        match d.kind {
            DatasetKind::Blobs => {
                if d.num_classes < 2 {
                    return Err(config_err("dataset.num_classes", "must be >= 2"));
                }
                if d.per_class == 0 {
                    return Err(config_err("dataset.per_class", "must be >= 1"));
                }
                if d.test_per_class == 0 {
                    return Err(config_err("dataset.test_per_class", "must be >= 1"));
                }
                if d.dim < 2 {
                    return Err(config_err("dataset.dim", "must be >= 2"));
                }
                if !(d.separation > 0.0) {
                    return Err(config_err("dataset.separation", "must be > 0"));
                }
            }
            DatasetKind::Csv => {
                if d.path.is_none() {
                    return Err(config_err("dataset.path", "required for csv datasets"));
                }
                if d.test_path.is_none() && !(d.test_fraction > 0.0 && d.test_fraction < 1.0) {
                    return Err(config_err("dataset.test_fraction", "must be in (0, 1)"));
                }
            }
        }
        let p = &self.partition;
        if p.num_clients == 0 {
            return Err(config_err("partition.num_clients", "must be >= 1"));
        }
        if !(p.alpha > 0.0) {
            return Err(config_err("partition.alpha", "must be > 0"));
        }
        if !(p.rho >= 1.0) {
            return Err(config_err("partition.rho", "must be >= 1"));
        }
        let f = &self.federation;
        if f.comm_rounds == 0 {
            return Err(config_err("federation.comm_rounds", "must be >= 1"));
        }
        if f.local_epochs == 0 {
            return Err(config_err("federation.local_epochs", "must be >= 1"));
        }
        if f.local_model_epochs == Some(0) {
            return Err(config_err("federation.local_model_epochs", "must be >= 1"));
        }
        self.federation_config()
            .train
            .validate()
            .map_err(|e| config_err("train", e.to_string()))?;
        self.fairfal
            .validate()
            .map_err(|e| config_err("fairfal", e.to_string()))?;
        Ok(())
    }
}
