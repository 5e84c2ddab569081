use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{stream, DatasetSpec, ExperimentConfig, Pipeline};
use super::synth::generate_synthetic;
use crate::data::{
    load_pre_split, load_table_cached, load_table_counted, split_dataset, Dataset, Encoder,
    FeatureSchema, GroupId, SplitDataset,
};
use crate::error::{Error, Result};
use crate::metrics::{kendall_tau, FairnessReport};
use crate::preprocess::Preprocessor;
use crate::regularizers::{
    finetune, lambda_sweep, RegularizerConfig, SweepSettings, SweepSummary, SweepTable,
};
use crate::scoring::{train_baseline, ScoringModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseTiming {
    pub phase: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupScores {
    pub group: GroupId,
    pub name: String,
    pub row_ids: Vec<usize>,
    pub scores: Vec<f64>,
    pub baseline_scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupTau {
    pub group: GroupId,
    pub tau: f64,
}

/// Test-set outcome of one pipeline, judged against the baseline scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineResult {
    pub pipeline: Pipeline,
    pub fairness: FairnessReport,
    /// Within-group rank agreement with the baseline scores.
    pub kendall_tau: Vec<GroupTau>,
    pub scores: Vec<GroupScores>,
}

impl PipelineResult {
    pub fn label(&self) -> &'static str {
        self.pipeline.as_str()
    }

    pub fn min_kendall_tau(&self) -> f64 {
        self.kendall_tau.iter().map(|t| t.tau).fold(f64::INFINITY, f64::min)
    }
}

/// Trained artifacts, kept out of the JSON report.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifacts {
    pub baseline: ScoringModel,
    pub preprocessor: Option<Preprocessor>,
    pub tuned: Option<ScoringModel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: ExperimentConfig,
    /// Rows dropped at ingest (unknown group or label).
    pub dropped_rows: usize,
    /// Test rows removed because their group has no training rows.
    pub unseen_group_rows: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub group_names: Vec<String>,
    /// Baseline first, then the configured pipeline (if different).
    pub pipelines: Vec<PipelineResult>,
    /// Wall-clock per phase; excluded from the report so reruns are
    /// byte-identical.
    #[serde(skip)]
    pub timing: Vec<PhaseTiming>,
    #[serde(skip)]
    pub artifacts: Option<Artifacts>,
}

impl RunReport {
    pub fn pipeline(&self, p: Pipeline) -> Option<&PipelineResult> {
        self.pipelines.iter().find(|r| r.pipeline == p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub config: ExperimentConfig,
    pub unseen_group_rows: usize,
    pub baseline: PipelineResult,
    pub tables: Vec<SweepTable>,
    pub summary: Vec<SweepSummary>,
    #[serde(skip)]
    pub timing: Vec<PhaseTiming>,
}

/// Refuses to fit anything once test data has been looked at.
#[derive(Debug, Default)]
pub(crate) struct LeakageGuard {
    test_opened_by: Option<&'static str>,
}

impl LeakageGuard {
    pub fn fit(&self, stage: &'static str) -> Result<()> {
        match self.test_opened_by {
            Some(by) => Err(Error::Leakage(format!(
                "stage '{stage}' would fit on data after '{by}' read the test set"
            ))),
            None => Ok(()),
        }
    }

    pub fn open_test(&mut self, stage: &'static str) {
        self.test_opened_by.get_or_insert(stage);
    }
}

#[derive(Default)]
struct Clock {
    phases: Vec<PhaseTiming>,
}

impl Clock {
    fn stage<T>(&mut self, name: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f().map_err(|e| e.in_stage(name));
        self.phases.push(PhaseTiming {
            phase: name.to_string(),
            seconds: start.elapsed().as_secs_f64(),
        });
        out
    }
}

/// Load or generate the data and split it. Nothing is fitted here.
fn ingest(config: &ExperimentConfig) -> Result<(SplitDataset, usize)> {
    let split_seed = config.stage_seed(stream::SPLIT);
    match &config.dataset {
        DatasetSpec::Synthetic {
            synthetic,
            train_fraction,
        } => {
            let ds = generate_synthetic(synthetic, config.stage_seed(stream::SYNTHETIC))?;
            Ok((split_dataset(&ds, *train_fraction, split_seed)?, 0))
        }
        DatasetSpec::Csv {
            path,
            test_path,
            schema,
            train_fraction,
            cache_dir,
        } => {
            let text = std::fs::read_to_string(schema).map_err(|e| Error::io(schema, e))?;
            let schema = FeatureSchema::from_str_auto(&text)?;
            if let Some(test_path) = test_path {
                return load_pre_split(path, test_path, &schema);
            }
            let (ds, dropped) = match cache_dir {
                // the cache holds only surviving rows, so no drop count
                Some(dir) => (load_table_cached(path, &schema, dir)?, 0),
                None => load_table_counted(path, &schema)?,
            };
            Ok((split_dataset(&ds, *train_fraction, split_seed)?, dropped))
        }
    }
}

fn group_scores(test: &Dataset, scores: &[f64], baseline: &[f64]) -> Vec<GroupScores> {
    (1..=test.group_count())
        .filter_map(|g| {
            let idx = test.group_indices(g);
            (!idx.is_empty()).then(|| GroupScores {
                group: g,
                name: test.group_names()[g - 1].clone(),
                row_ids: idx.iter().map(|&i| test.row_ids()[i]).collect(),
                scores: idx.iter().map(|&i| scores[i]).collect(),
                baseline_scores: idx.iter().map(|&i| baseline[i]).collect(),
            })
        })
        .collect()
}

fn evaluate(
    config: &ExperimentConfig,
    pipeline: Pipeline,
    test: &Dataset,
    q: &[f64],
    r: &[f64],
) -> Result<PipelineResult> {
    let fairness = FairnessReport::compute(q, r, test.labels(), test.groups(), &config.metric_config())?;
    let scores = group_scores(test, q, r);
    let kendall_tau = scores
        .iter()
        .map(|g| GroupTau {
            group: g.group,
            tau: kendall_tau(&g.baseline_scores, &g.scores),
        })
        .collect();
    Ok(PipelineResult {
        pipeline,
        fairness,
        kendall_tau,
        scores,
    })
}

struct Trained {
    split: SplitDataset,
    dropped: usize,
    unseen: usize,
    encoder: Encoder,
    train: Dataset,
    baseline: ScoringModel,
}

/// Ingest, fit the encoder and train the baseline, all on training rows.
fn fit_baseline(config: &ExperimentConfig, guard: &LeakageGuard, clock: &mut Clock) -> Result<Trained> {
    let (mut split, dropped) = clock.stage("ingest", || ingest(config))?;
    // No mapping exists for a group never seen in training, so its test
    // rows are removed and counted.
    let keep: Vec<usize> = (0..split.test.len())
        .filter(|&i| split.train.groups().contains(&split.test.groups()[i]))
        .collect();
    let unseen = split.test.len() - keep.len();
    if unseen > 0 {
        log::warn!("dropping {unseen} test rows from groups absent in training");
        split.test = split.test.subset(&keep);
    }
    let (encoder, train) = clock.stage("encode", || {
        guard.fit("encode")?;
        let encoder = Encoder::fit(&split.train)?;
        let train = encoder.transform(&split.train)?;
        Ok((encoder, train))
    })?;
    let baseline = clock.stage("baseline", || {
        guard.fit("baseline")?;
        let tc = config.baseline_train_config();
        Ok(train_baseline(&train, config.model.kind, config.model.loss(), &tc)?.model)
    })?;
    Ok(Trained {
        split,
        dropped,
        unseen,
        encoder,
        train,
        baseline,
    })
}

/// Run one pipeline end to end. When `output_dir` is set the report and
/// artifacts are written there as well.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunReport> {
    config.validate()?;
    let mut clock = Clock::default();
    let mut guard = LeakageGuard::default();
    let t = fit_baseline(config, &guard, &mut clock)?;

    let preprocessor = match config.pipeline {
        Pipeline::Preprocess => Some(clock.stage("preprocess", || {
            guard.fit("preprocess")?;
            Preprocessor::fit(&t.baseline, &t.train, &config.preprocess)
        })?),
        _ => None,
    };
    let tuned = match config.pipeline {
        Pipeline::Regularized => Some(clock.stage("finetune", || {
            guard.fit("finetune")?;
            let reg: RegularizerConfig = config
                .regularizer
                .ok_or_else(|| Error::invalid("regularized pipeline needs a [regularizer] section"))?;
            Ok(finetune(&t.baseline, &t.train, &reg, &config.finetune_config())?.model)
        })?),
        _ => None,
    };

    let (test, r, q) = clock.stage("score", || {
        guard.open_test("score");
        let test = t.encoder.transform(&t.split.test)?;
        let r = t.baseline.score(test.features())?;
        let q = match (&preprocessor, &tuned) {
            (Some(p), _) => t.baseline.score(p.transform(&test)?.features())?,
            (_, Some(m)) => m.score(test.features())?,
            _ => r.clone(),
        };
        Ok((test, r, q))
    })?;

    let pipelines = clock.stage("metrics", || {
        let mut out = vec![evaluate(config, Pipeline::Baseline, &test, &r, &r)?];
        if config.pipeline != Pipeline::Baseline {
            out.push(evaluate(config, config.pipeline, &test, &q, &r)?);
        }
        Ok(out)
    })?;

    let report = RunReport {
        config: config.clone(),
        dropped_rows: t.dropped,
        unseen_group_rows: t.unseen,
        train_size: t.train.len(),
        test_size: test.len(),
        group_names: t.train.group_names().to_vec(),
        pipelines,
        timing: clock.phases,
        artifacts: Some(Artifacts {
            baseline: t.baseline,
            preprocessor,
            tuned,
        }),
    };
    if let Some(dir) = &config.output_dir {
        super::report::emit_report(&report, dir).map_err(|e| e.in_stage("emit"))?;
    }
    Ok(report)
}

/// Train the baseline, then fine-tune it for every `kind × λ × trial` in the
/// config's `[sweep]` section.
pub fn run_sweep(config: &ExperimentConfig) -> Result<SweepReport> {
    config.validate()?;
    let spec = config
        .sweep
        .as_ref()
        .ok_or_else(|| Error::invalid("config has no [sweep] section"))?;
    let mut clock = Clock::default();
    let mut guard = LeakageGuard::default();
    let t = fit_baseline(config, &guard, &mut clock)?;
    guard.open_test("sweep");
    let test = clock.stage("score", || t.encoder.transform(&t.split.test))?;
    let (bin_count, bandwidth) = config.regularizer_shape();
    let settings = SweepSettings {
        train: config.finetune_config(),
        bin_count,
        bandwidth,
        metrics: config.metric_config(),
        seed: config.stage_seed(stream::SWEEP),
    };
    // Fine-tuning inside the sweep reads only `t.train`; the test set is
    // used for evaluation alone.
    let tables = clock.stage("sweep", || {
        spec.grid
            .iter()
            .map(|g| lambda_sweep(&t.baseline, &t.train, &test, g.kind, &g.lambdas, spec.trials, &settings))
            .collect::<Result<Vec<_>>>()
    })?;
    let baseline = clock.stage("metrics", || {
        let r = t.baseline.score(test.features())?;
        evaluate(config, Pipeline::Baseline, &test, &r, &r)
    })?;
    let summary = tables.iter().flat_map(|t| t.summary()).collect();
    let report = SweepReport {
        config: config.clone(),
        unseen_group_rows: t.unseen,
        baseline,
        tables,
        summary,
        timing: clock.phases,
    };
    if let Some(dir) = &config.output_dir {
        super::report::emit_sweep(&report, dir).map_err(|e| e.in_stage("emit"))?;
    }
    Ok(report)
}
