//! Pre-processing for inter- and within-group fair scoring.
//!
//! A baseline scorer is trained for accuracy, then each group's feature
//! vectors are mapped into a canonical population domain. Histogram
//! specification matches each group's score distribution to the
//! population's, feature correspondences pair group and population
//! individuals by score, and a per-group k-d tree interpolates the mapping
//! for unseen individuals. Regularized fine-tuning (EMD and Gaussian KL) is
//! provided for comparison, along with the metrics that quantify both kinds
//! of fairness. The [`experiment`] module wires these into configurable,
//! seeded runs, λ sweeps and matched comparisons.

mod binio;
pub mod correspondence;
pub mod histogram;
pub mod kdtree;
pub mod mapping;
pub mod metrics;
pub mod preprocess;
pub mod data;
pub mod error;
pub mod experiment;
pub mod matrix;
pub mod regularizers;
pub mod scoring;
pub mod seeds;

pub use data::{Dataset, FeatureSchema, GroupId, SplitDataset};
pub use error::{Error, Result};
pub use experiment::{
    compare_pipelines, run_experiment, run_sweep, Comparison, ExperimentConfig, Matching, Pipeline,
    RunReport, SweepReport,
};
pub use matrix::Matrix;
pub use metrics::{FairnessReport, MetricConfig, WgfMode};
pub use preprocess::{PreprocessConfig, Preprocessor};
pub use regularizers::{finetune, lambda_sweep, RegularizerConfig, RegularizerKind};
pub use scoring::{classify, LossKind, ModelKind, ScoringModel, TrainConfig};
