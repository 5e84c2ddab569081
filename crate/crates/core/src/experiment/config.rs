use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::synth::SyntheticConfig;
use crate::error::{Error, Result};
use crate::metrics::{MetricConfig, WgfMode};
use crate::preprocess::PreprocessConfig;
use crate::regularizers::{RegularizerConfig, RegularizerKind};
use crate::scoring::{Batch, LossKind, ModelKind, TrainConfig};
use crate::seeds::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pipeline {
    Baseline,
    Preprocess,
    Regularized,
}

impl Pipeline {
    pub fn as_str(self) -> &'static str {
        match self {
            Pipeline::Baseline => "baseline",
            Pipeline::Preprocess => "preprocess",
            Pipeline::Regularized => "regularized",
        }
    }
}

fn default_train_fraction() -> f64 {
    0.7
}

/// Where the data comes from. Relative paths resolve against the working
/// directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    Synthetic {
        #[serde(default)]
        synthetic: SyntheticConfig,
        #[serde(default = "default_train_fraction")]
        train_fraction: f64,
    },
    Csv {
        path: PathBuf,
        /// Creator-provided test file; when present no split is made.
        #[serde(default)]
        test_path: Option<PathBuf>,
        /// TOML or JSON feature schema.
        schema: PathBuf,
        #[serde(default = "default_train_fraction")]
        train_fraction: f64,
        /// Directory for parsed-table caches.
        #[serde(default)]
        cache_dir: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Defaults to the kind's natural loss.
    #[serde(default)]
    pub loss: Option<LossKind>,
    #[serde(default)]
    pub train: TrainConfig,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            kind: ModelKind::LogisticRegression,
            loss: None,
            train: TrainConfig::default(),
        }
    }
}

impl ModelSpec {
    pub fn loss(&self) -> LossKind {
        self.loss.unwrap_or(self.kind.default_loss())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    pub kind: RegularizerKind,
    pub lambdas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default = "default_trials")]
    pub trials: usize,
    pub grid: Vec<SweepGrid>,
}

fn default_trials() -> usize {
    5
}

pub(crate) fn default_finetune() -> TrainConfig {
    TrainConfig {
        epochs: 50,
        batch: Batch::Size(256),
        ..TrainConfig::default()
    }
}

/// A complete, declarative description of one experiment. Together with
/// `seed` it determines every output byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    /// Master seed; every randomized stage derives its own seed from it and
    /// any per-stage seed in the file is ignored.
    #[serde(default)]
    pub seed: u64,
    pub pipeline: Pipeline,
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub model: ModelSpec,
    /// Required for the regularized pipeline; supplies bin count and
    /// bandwidth to sweeps.
    #[serde(default)]
    pub regularizer: Option<RegularizerConfig>,
    /// Fine-tuning schedule for the regularized pipeline and sweeps.
    #[serde(default = "default_finetune")]
    pub finetune: TrainConfig,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub metrics: MetricConfig,
    #[serde(default)]
    pub preprocess: PreprocessConfig,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

/// Stream numbers for [`derive_seed`].
pub(crate) mod stream {
    pub const SYNTHETIC: u64 = 0;
    pub const SPLIT: u64 = 1;
    pub const BASELINE: u64 = 2;
    pub const FINETUNE: u64 = 3;
    pub const SWEEP: u64 = 4;
    pub const WGF_SAMPLING: u64 = 5;
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self =
            toml::from_str(text).map_err(|e| Error::invalid(format!("experiment config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::invalid(format!("experiment config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::invalid("experiment name is empty"));
        }
        match &self.dataset {
            DatasetSpec::Synthetic {
                synthetic,
                train_fraction,
            } => {
                synthetic.validate()?;
                check_fraction(*train_fraction)?;
            }
            DatasetSpec::Csv { train_fraction, .. } => check_fraction(*train_fraction)?,
        }
        self.model.train.validate()?;
        self.finetune.validate()?;
        if let Some(r) = &self.regularizer {
            r.validate()?;
        }
        if self.pipeline == Pipeline::Regularized && self.regularizer.is_none() && self.sweep.is_none() {
            return Err(Error::invalid(
                "regularized pipeline needs a [regularizer] or [sweep] section",
            ));
        }
        if let Some(s) = &self.sweep {
            if s.trials == 0 {
                return Err(Error::invalid("sweep needs at least one trial"));
            }
            if s.grid.is_empty() || s.grid.iter().any(|g| g.lambdas.is_empty()) {
                return Err(Error::invalid("sweep grid has no lambdas"));
            }
            if let Some(l) = s.grid.iter().flat_map(|g| &g.lambdas).find(|l| !(**l >= 0.0)) {
                return Err(Error::invalid(format!("lambda {l} must be >= 0")));
            }
        }
        if self.metrics.threshold_grid < 2 || self.metrics.epsilon_grid < 2 {
            return Err(Error::invalid("metric grids need at least two points"));
        }
        if self.preprocess.histogram_bins == 0 || self.preprocess.neighbor_count == 0 {
            return Err(Error::invalid("histogram bins and neighbour count must be positive"));
        }
        Ok(())
    }

    pub(crate) fn stage_seed(&self, stream: u64) -> u64 {
        derive_seed(self.seed, stream)
    }

    pub(crate) fn baseline_train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.stage_seed(stream::BASELINE),
            ..self.model.train.clone()
        }
    }

    pub(crate) fn finetune_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.stage_seed(stream::FINETUNE),
            ..self.finetune.clone()
        }
    }

    pub(crate) fn metric_config(&self) -> MetricConfig {
        let mut m = self.metrics;
        if let WgfMode::Sampled { seed, .. } = &mut m.wgf_mode {
            *seed = self.stage_seed(stream::WGF_SAMPLING);
        }
        m
    }

    /// Bin count and bandwidth handed to sweeps.
    pub(crate) fn regularizer_shape(&self) -> (usize, Option<f64>) {
        self.regularizer
            .map(|r| (r.bin_count, r.bandwidth))
            .unwrap_or((crate::regularizers::DEFAULT_BIN_COUNT, None))
    }
}

fn check_fraction(f: f64) -> Result<()> {
    if f > 0.0 && f < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("train fraction {f} outside (0, 1)")))
    }
}
