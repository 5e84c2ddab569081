//! End-to-end experiment orchestration: configuration, the staged pipeline,
//! λ sweeps, matched comparisons and output emission.

pub mod compare;
pub mod config;
pub mod pipeline;
pub mod report;
pub mod synth;

pub use compare::{compare_pipelines, compare_results, Comparison, Matching, Selection};
pub use config::{DatasetSpec, ExperimentConfig, ModelSpec, Pipeline, SweepGrid, SweepSpec};
pub use pipeline::{run_experiment, run_sweep, PipelineResult, RunReport, SweepReport};
pub use report::{emit_comparison, emit_report, emit_sweep};
pub use synth::{generate_synthetic, SyntheticConfig};
