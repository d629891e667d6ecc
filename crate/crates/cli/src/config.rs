//! Run configuration for `train`.
//!
//! Precedence: command-line flags override values from the config file, which
//! override the defaults below. Relative paths in the file are resolved
//! against the directory containing the file.

use std::path::{Path, PathBuf};

use guided_proto::inference::Scheme;
use guided_proto::{SynthParams, TaxonomyFormat, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::io;

/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_VAR: &str = "GUIDED_PROTO_OUTPUT_ROOT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    #[default]
    Median,
    Mean,
}

impl Aggregation {
    pub fn apply(self, values: &[f64]) -> f64 {
        match self {
            Aggregation::Median => guided_proto::linalg::median(values).unwrap_or(f64::NAN),
            Aggregation::Mean => values.iter().sum::<f64>() / values.len() as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub taxonomy: Option<PathBuf>,
    /// Inferred from the taxonomy file extension when absent.
    pub taxonomy_format: Option<TaxonomyFormat>,
    /// Labelled CSV; synthetic data is generated when absent.
    pub dataset: Option<PathBuf>,
    pub label_column: String,
    pub synthetic: SynthParams,
    /// Seed of data generation and of the train/test split.
    pub data_seed: u64,
    pub test_fraction: f64,
    pub output_dir: Option<PathBuf>,
    pub scheme: Scheme,
    pub aggregation: Aggregation,
    /// One training run per seed.
    pub seeds: Vec<u64>,
    /// Seeds trained concurrently. Results do not depend on it.
    pub threads: usize,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            taxonomy: None,
            taxonomy_format: None,
            dataset: None,
            label_column: "label".into(),
            synthetic: SynthParams::default(),
            data_seed: 0,
            test_fraction: 0.5,
            output_dir: None,
            scheme: Scheme::MaxProb,
            aggregation: Aggregation::Median,
            seeds: vec![0],
            threads: 1,
            train: TrainConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let mut config: Self = io::read_json(path)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut config.taxonomy, &mut config.dataset, &mut config.output_dir]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }

    /// Output directory: configured, else `$GUIDED_PROTO_OUTPUT_ROOT/<name>`, else `runs/<name>`.
    pub fn resolve_output_dir(&mut self, name: &str) {
        if self.output_dir.is_none() {
            let root = std::env::var_os(OUTPUT_ROOT_VAR).map_or_else(|| PathBuf::from("runs"), PathBuf::from);
            self.output_dir = Some(root.join(name));
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        let Some(tax) = &self.taxonomy else {
            return Err(CliError::usage("config: `taxonomy` is required"));
        };
        for p in [Some(tax), self.dataset.as_ref()].into_iter().flatten() {
            if !p.exists() {
                return Err(CliError::usage(format!("config: {} does not exist", p.display())));
            }
        }
        if self.seeds.is_empty() {
            return Err(CliError::usage("config: `seeds` must not be empty"));
        }
        if self.threads == 0 {
            return Err(CliError::usage("config: `threads` must be >= 1"));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(CliError::usage("config: `test_fraction` must be in (0, 1)"));
        }
        self.train.validate().map_err(|e| CliError::core("config", e))
    }
}
