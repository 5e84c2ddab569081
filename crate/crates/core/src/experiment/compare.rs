//! Matched comparison of the pre-processing pipeline against regularized
//! fine-tuning: pick the λ whose average of one fairness measure is nearest
//! the pre-processing value, then tabulate the other measure's curve.

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Pipeline};
use super::pipeline::{run_experiment, run_sweep, PipelineResult};
use crate::error::{Error, Result};
use crate::metrics::FairnessReport;
use crate::regularizers::{RegularizerKind, SweepTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Matching {
    /// Match average Δ_WGF, tabulate the CV curve.
    MatchWgf,
    /// Match Δ_TIDP, tabulate the Δ_WGF curve.
    MatchTidp,
}

impl Matching {
    fn matched_value(self, r: &FairnessReport) -> f64 {
        match self {
            Matching::MatchWgf => r.delta_wgf_avg,
            Matching::MatchTidp => r.delta_tidp,
        }
    }

    fn curve(self, r: &FairnessReport) -> Vec<(f64, f64)> {
        match self {
            Matching::MatchWgf => r.cv_curve.clone(),
            Matching::MatchTidp => r.wgf_curve.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    /// `<model>/<regularizer>`.
    pub label: String,
    pub kind: RegularizerKind,
    pub lambda: f64,
    /// Trial means at the selected λ.
    pub delta_tidp: f64,
    pub delta_wgf_avg: f64,
    /// `|matched mean - preprocess value|`.
    pub distance: f64,
    /// Trial-mean curve of the tabulated measure.
    pub curve: Vec<f64>,
    /// Share of grid points where the pre-processing curve is no higher.
    pub preprocess_no_worse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub matching: Matching,
    /// The pre-processing value the sweeps were matched to.
    pub target: f64,
    pub grid: Vec<f64>,
    pub preprocess_curve: Vec<f64>,
    pub preprocess_delta_tidp: f64,
    pub preprocess_delta_wgf_avg: f64,
    pub selections: Vec<Selection>,
}

/// The λ of `table` (restricted to `kind`) whose trial-mean matched measure
/// is nearest `target`; ties go to the lower λ.
pub fn select_lambda(table: &SweepTable, kind: RegularizerKind, target: f64, matching: Matching) -> Result<f64> {
    let mut lambdas: Vec<f64> = table
        .rows()
        .filter(|r| r.kind == kind)
        .map(|r| r.lambda)
        .collect();
    lambdas.sort_by(f64::total_cmp);
    lambdas.dedup();
    let mut best: Option<(f64, f64)> = None;
    for lambda in lambdas {
        let values: Vec<f64> = table
            .cells
            .iter()
            .filter(|c| c.row.kind == kind && c.row.lambda == lambda)
            .map(|c| matching.matched_value(&c.report))
            .collect();
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let dist = (mean - target).abs();
        if best.is_none_or(|(d, _)| dist < d) {
            best = Some((dist, lambda));
        }
    }
    best.map(|(_, l)| l)
        .ok_or_else(|| Error::invalid(format!("sweep has no {kind} rows")))
}

fn mean_curve(curves: &[Vec<(f64, f64)>]) -> Vec<f64> {
    let n = curves.len() as f64;
    (0..curves[0].len())
        .map(|j| curves.iter().map(|c| c[j].1).sum::<f64>() / n)
        .collect()
}

/// Compare one pre-processing result with already-run sweeps, each labelled
/// by its model.
pub fn compare_results(
    preprocess: &PipelineResult,
    sweeps: &[(String, &SweepTable)],
    matching: Matching,
) -> Result<Comparison> {
    if preprocess.pipeline != Pipeline::Preprocess {
        return Err(Error::invalid("first argument must be a preprocess result"));
    }
    if sweeps.iter().all(|(_, t)| t.cells.is_empty()) {
        return Err(Error::invalid("comparison needs a nonempty regularizer sweep"));
    }
    let target = matching.matched_value(&preprocess.fairness);
    let pre_curve = matching.curve(&preprocess.fairness);
    let grid: Vec<f64> = pre_curve.iter().map(|p| p.0).collect();
    let preprocess_curve: Vec<f64> = pre_curve.iter().map(|p| p.1).collect();
    let mut selections = Vec::new();
    for (model, table) in sweeps {
        let mut kinds: Vec<RegularizerKind> = table.rows().map(|r| r.kind).collect();
        kinds.dedup();
        for kind in kinds {
            let lambda = select_lambda(table, kind, target, matching)?;
            let cells: Vec<_> = table
                .cells
                .iter()
                .filter(|c| c.row.kind == kind && c.row.lambda == lambda)
                .collect();
            let curves: Vec<Vec<(f64, f64)>> = cells.iter().map(|c| matching.curve(&c.report)).collect();
            if curves.iter().any(|c| c.len() != grid.len()) {
                return Err(Error::invalid("sweep and preprocess metric grids differ"));
            }
            let curve = mean_curve(&curves);
            let n = cells.len() as f64;
            let delta_tidp = cells.iter().map(|c| c.row.delta_tidp).sum::<f64>() / n;
            let delta_wgf_avg = cells.iter().map(|c| c.row.delta_wgf_avg).sum::<f64>() / n;
            let matched = match matching {
                Matching::MatchWgf => delta_wgf_avg,
                Matching::MatchTidp => delta_tidp,
            };
            let no_worse = preprocess_curve
                .iter()
                .zip(&curve)
                .filter(|(p, r)| p <= r)
                .count() as f64
                / grid.len().max(1) as f64;
            selections.push(Selection {
                label: format!("{model}/{kind}"),
                kind,
                lambda,
                delta_tidp,
                delta_wgf_avg,
                distance: (matched - target).abs(),
                curve,
                preprocess_no_worse: no_worse,
            });
        }
    }
    Ok(Comparison {
        matching,
        target,
        grid,
        preprocess_curve,
        preprocess_delta_tidp: preprocess.fairness.delta_tidp,
        preprocess_delta_wgf_avg: preprocess.fairness.delta_wgf_avg,
        selections,
    })
}

/// Run exactly one preprocess config and every config carrying a `[sweep]`
/// section, then compare. All configs should describe the same data and
/// seed so that they share a baseline.
pub fn compare_pipelines(configs: &[ExperimentConfig], matching: Matching) -> Result<Comparison> {
    let pre: Vec<&ExperimentConfig> = configs
        .iter()
        .filter(|c| c.pipeline == Pipeline::Preprocess)
        .collect();
    if pre.len() != 1 {
        return Err(Error::invalid(format!(
            "comparison needs exactly one preprocess config, got {}",
            pre.len()
        )));
    }
    let sweep_configs: Vec<&ExperimentConfig> = configs
        .iter()
        .filter(|c| c.pipeline == Pipeline::Regularized && c.sweep.is_some())
        .collect();
    if sweep_configs.is_empty() {
        return Err(Error::invalid("comparison needs at least one regularized sweep config"));
    }
    let run = run_experiment(pre[0])?;
    let preprocess = run
        .pipeline(Pipeline::Preprocess)
        .expect("preprocess run reports its pipeline");
    let sweeps = sweep_configs
        .iter()
        .map(|c| run_sweep(c))
        .collect::<Result<Vec<_>>>()?;
    let labelled: Vec<(String, &SweepTable)> = sweep_configs
        .iter()
        .zip(&sweeps)
        .flat_map(|(c, s)| {
            s.tables
                .iter()
                .map(move |t| (c.model.kind.as_str().to_string(), t))
        })
        .collect();
    compare_results(preprocess, &labelled, matching)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{FairnessReport, MetricConfig};
    use crate::regularizers::{SweepCell, SweepRow};

    fn report(tidp: f64, wgf: f64) -> FairnessReport {
        FairnessReport {
            threshold_grid_size: 3,
            epsilon_grid_size: 3,
            cv_curve: vec![(0.0, 0.0), (0.5, tidp * 3.0), (1.0, 0.0)],
            delta_tidp: tidp,
            wgf_curve: vec![(0.0, 1.0), (0.25, wgf * 3.0 - 1.0), (0.5, 0.0)],
            delta_wgf_avg: wgf,
            delta_wgf_standard_error: None,
            accuracy_at_half: 0.8,
            auc: Some(0.9),
        }
    }

    fn cell(kind: RegularizerKind, lambda: f64, tidp: f64, wgf: f64) -> SweepCell {
        SweepCell {
            row: SweepRow {
                kind,
                lambda,
                trial: 0,
                delta_tidp: tidp,
                delta_wgf_avg: wgf,
                accuracy: 0.8,
                auc: Some(0.9),
            },
            report: report(tidp, wgf),
        }
    }

    fn preprocess(tidp: f64, wgf: f64) -> PipelineResult {
        PipelineResult {
            pipeline: Pipeline::Preprocess,
            fairness: report(tidp, wgf),
            kendall_tau: vec![],
            scores: vec![],
        }
    }

    #[test]
    fn exact_match_selected() {
        let t = SweepTable {
            cells: vec![
                cell(RegularizerKind::Emd, 0.0, 0.2, 0.0),
                cell(RegularizerKind::Emd, 1.0, 0.1, 0.4),
                cell(RegularizerKind::Emd, 2.0, 0.05, 0.6),
            ],
        };
        assert_eq!(select_lambda(&t, RegularizerKind::Emd, 0.4, Matching::MatchWgf).unwrap(), 1.0);
        assert_eq!(select_lambda(&t, RegularizerKind::Emd, 0.05, Matching::MatchTidp).unwrap(), 2.0);
    }

    #[test]
    fn ties_go_to_lower_lambda() {
        let t = SweepTable {
            cells: vec![
                cell(RegularizerKind::Emd, 3.0, 0.1, 0.5),
                cell(RegularizerKind::Emd, 1.0, 0.2, 0.25),
            ],
        };
        // 0.25 and 0.5 are both 0.125 from 0.375
        assert_eq!(select_lambda(&t, RegularizerKind::Emd, 0.375, Matching::MatchWgf).unwrap(), 1.0);
    }

    #[test]
    fn comparison_tabulates_curves() {
        let t = SweepTable {
            cells: vec![
                cell(RegularizerKind::KlGaussian, 0.0, 0.2, 0.0),
                cell(RegularizerKind::KlGaussian, 1.0, 0.1, 0.3),
            ],
        };
        let c = compare_results(&preprocess(0.01, 0.3), &[("lr".into(), &t)], Matching::MatchWgf).unwrap();
        assert_eq!(c.selections.len(), 1);
        let s = &c.selections[0];
        assert_eq!(s.label, "lr/kl_gaussian");
        assert_eq!(s.lambda, 1.0);
        assert_eq!(c.grid, vec![0.0, 0.5, 1.0]);
        assert_eq!(s.preprocess_no_worse, 1.0);
        assert!(compare_results(&preprocess(0.0, 0.0), &[("lr".into(), &SweepTable::default())], Matching::MatchWgf).is_err());
    }

    #[test]
    fn pipeline_argument_errors() {
        assert!(compare_pipelines(&[], Matching::MatchWgf).is_err());
        let _ = MetricConfig::default();
    }
}
