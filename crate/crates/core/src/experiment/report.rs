//! Writing run, sweep and comparison outputs. Every file is first written
//! into a staging directory and moved into place only once all of them
//! succeeded, so a failed emit leaves no partial output behind.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::compare::Comparison;
use super::pipeline::{PhaseTiming, PipelineResult, RunReport, SweepReport};
use crate::error::{Error, Result};
use crate::mapping::write_mappings;

const STAGING: &str = ".staging";

struct Staging {
    dir: PathBuf,
    staging: PathBuf,
    files: Vec<String>,
    committed: bool,
}

impl Staging {
    fn new(dir: &Path) -> Result<Self> {
        let staging = dir.join(STAGING);
        if staging.exists() {
            fs::remove_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
        }
        fs::create_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            staging,
            files: Vec::new(),
            committed: false,
        })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.staging.join(name);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| Error::invalid(format!("serializing {name}: {e}")))?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    fn csv(&mut self, name: &str, header: &[String], rows: &[Vec<String>]) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| Error::invalid(format!("writing {name}: {e}"));
        w.write_record(header).map_err(err)?;
        for r in rows {
            w.write_record(r).map_err(err)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::invalid(format!("writing {name}: {e}")))?;
        self.write(name, &bytes)
    }

    fn commit(mut self) -> Result<Vec<PathBuf>> {
        let mut out = Vec::with_capacity(self.files.len());
        for name in &self.files {
            let from = self.staging.join(name);
            let to = self.dir.join(name);
            fs::rename(&from, &to).map_err(|e| Error::io(&to, e))?;
            out.push(to);
        }
        fs::remove_dir_all(&self.staging).map_err(|e| Error::io(&self.staging, e))?;
        self.committed = true;
        Ok(out)
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        if !self.committed {
            let _ = fs::remove_dir_all(&self.staging);
        }
    }
}

/// Keeps file names portable whatever the group is called.
fn file_token(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect()
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Curve table with one grid column and one column per pipeline.
fn curve_rows(
    results: &[&PipelineResult],
    pick: impl Fn(&PipelineResult) -> &[(f64, f64)],
) -> Vec<Vec<String>> {
    let Some(first) = results.first() else {
        return Vec::new();
    };
    (0..pick(first).len())
        .map(|j| {
            let mut row = vec![num(pick(first)[j].0)];
            row.extend(results.iter().map(|r| num(pick(r)[j].1)));
            row
        })
        .collect()
}

fn performance_rows(results: &[&PipelineResult]) -> Vec<Vec<String>> {
    results
        .iter()
        .map(|r| {
            let f = &r.fairness;
            vec![
                r.label().to_string(),
                num(f.accuracy_at_half),
                opt(f.auc),
                num(f.delta_tidp),
                num(f.delta_wgf_avg),
                opt(f.delta_wgf_standard_error),
                opt((!r.kendall_tau.is_empty()).then(|| r.min_kendall_tau())),
            ]
        })
        .collect()
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

fn write_pipeline_tables(stage: &mut Staging, results: &[&PipelineResult]) -> Result<()> {
    let mut header = vec!["threshold".to_string()];
    header.extend(results.iter().map(|r| r.label().to_string()));
    stage.csv("tidp_curve.csv", &header, &curve_rows(results, |r| &r.fairness.cv_curve))?;
    header[0] = "epsilon".into();
    stage.csv("wgf_curve.csv", &header, &curve_rows(results, |r| &r.fairness.wgf_curve))?;
    stage.csv(
        "performance.csv",
        &strings(&[
            "pipeline",
            "accuracy",
            "auc",
            "delta_tidp",
            "delta_wgf_avg",
            "delta_wgf_standard_error",
            "min_kendall_tau",
        ]),
        &performance_rows(results),
    )?;
    for r in results {
        for g in &r.scores {
            let rows: Vec<Vec<String>> = g
                .row_ids
                .iter()
                .zip(&g.scores)
                .zip(&g.baseline_scores)
                .map(|((id, s), b)| vec![id.to_string(), num(*s), num(*b)])
                .collect();
            stage.csv(
                &format!("scores_{}_{}.csv", r.label(), file_token(&g.name)),
                &strings(&["row_id", "score", "baseline_score"]),
                &rows,
            )?;
        }
    }
    Ok(())
}

fn model_bytes(m: &crate::scoring::ScoringModel, name: &str) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    m.write_to(&mut buf)
        .map_err(|e| Error::invalid(format!("encoding {name}: {e}")))?;
    Ok(buf)
}

/// Write `report.json`, `timing.json`, per-pipeline per-group score CSVs,
/// `tidp_curve.csv`, `wgf_curve.csv`, `performance.csv` and, when present,
/// the trained artifacts (`baseline.fmmd`, `mappings.fmkd`, `tuned.fmmd`).
pub fn emit_report(report: &RunReport, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let mut stage = Staging::new(dir.as_ref())?;
    stage.json("report.json", report)?;
    stage.json::<Vec<PhaseTiming>>("timing.json", &report.timing)?;
    let results: Vec<&PipelineResult> = report.pipelines.iter().collect();
    write_pipeline_tables(&mut stage, &results)?;
    if let Some(a) = &report.artifacts {
        stage.write("baseline.fmmd", &model_bytes(&a.baseline, "baseline.fmmd")?)?;
        if let Some(p) = &a.preprocessor {
            let mut buf = Vec::new();
            write_mappings(&mut buf, p.mappings())
                .map_err(|e| Error::invalid(format!("encoding mappings.fmkd: {e}")))?;
            stage.write("mappings.fmkd", &buf)?;
        }
        if let Some(m) = &a.tuned {
            stage.write("tuned.fmmd", &model_bytes(m, "tuned.fmmd")?)?;
        }
    }
    stage.commit()
}

/// Write `sweep_report.json`, `sweep.csv`, `sweep_summary.csv` and
/// `timing.json`.
pub fn emit_sweep(report: &SweepReport, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let mut stage = Staging::new(dir.as_ref())?;
    stage.json("sweep_report.json", report)?;
    stage.json::<Vec<PhaseTiming>>("timing.json", &report.timing)?;
    let mut buf = Vec::new();
    for (i, t) in report.tables.iter().enumerate() {
        let mut part = Vec::new();
        t.write_csv(&mut part)?;
        // keep one header line
        let skip = if i == 0 { 0 } else { part.iter().position(|&b| b == b'\n').map_or(0, |p| p + 1) };
        buf.extend_from_slice(&part[skip..]);
    }
    stage.write("sweep.csv", &buf)?;
    let rows: Vec<Vec<String>> = report
        .summary
        .iter()
        .map(|s| {
            vec![
                s.kind.to_string(),
                num(s.lambda),
                s.trials.to_string(),
                num(s.delta_tidp_mean),
                num(s.delta_tidp_std),
                num(s.delta_wgf_mean),
                num(s.delta_wgf_std),
                num(s.accuracy_mean),
            ]
        })
        .collect();
    stage.csv(
        "sweep_summary.csv",
        &strings(&[
            "kind",
            "lambda",
            "trials",
            "delta_tidp_mean",
            "delta_tidp_std",
            "delta_wgf_mean",
            "delta_wgf_std",
            "accuracy_mean",
        ]),
        &rows,
    )?;
    stage.commit()
}

/// Write `comparison.json` and `comparison_curves.csv` (grid, preprocess,
/// then one column per selection).
pub fn emit_comparison(c: &Comparison, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let mut stage = Staging::new(dir.as_ref())?;
    stage.json("comparison.json", c)?;
    let grid_name = match c.matching {
        super::compare::Matching::MatchWgf => "threshold",
        super::compare::Matching::MatchTidp => "epsilon",
    };
    let mut header = strings(&[grid_name, "preprocess"]);
    header.extend(c.selections.iter().map(|s| format!("{}@{}", s.label, s.lambda)));
    let rows: Vec<Vec<String>> = c
        .grid
        .iter()
        .enumerate()
        .map(|(j, g)| {
            let mut row = vec![num(*g), num(c.preprocess_curve[j])];
            row.extend(c.selections.iter().map(|s| num(s.curve[j])));
            row
        })
        .collect();
    stage.csv("comparison_curves.csv", &header, &rows)?;
    stage.commit()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::config::Pipeline;
    use crate::experiment::pipeline::run_experiment;

    fn small_run() -> RunReport {
        let mut c = crate::experiment::pipeline::tests::synthetic_config(Pipeline::Preprocess, 0.2, 150);
        c.output_dir = None;
        run_experiment(&c).unwrap()
    }

    #[test]
    fn writes_every_file_and_round_trips() {
        let report = small_run();
        let dir = tempfile::tempdir().unwrap();
        let files = emit_report(&report, dir.path()).unwrap();
        let names: Vec<String> = files
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect();
        for want in [
            "report.json",
            "timing.json",
            "tidp_curve.csv",
            "wgf_curve.csv",
            "performance.csv",
            "scores_baseline_1.csv",
            "scores_preprocess_2.csv",
            "baseline.fmmd",
            "mappings.fmkd",
        ] {
            assert!(names.iter().any(|n| n == want), "missing {want}");
        }
        assert!(!dir.path().join(STAGING).exists());
        let text = fs::read_to_string(dir.path().join("report.json")).unwrap();
        let back: RunReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back.pipelines, report.pipelines);
        assert_eq!(back.config, report.config);
        let tidp = fs::read_to_string(dir.path().join("tidp_curve.csv")).unwrap();
        assert!(tidp.starts_with("threshold,baseline,preprocess\n"));
        assert_eq!(tidp.lines().count(), 1002);
        let again = tempfile::tempdir().unwrap();
        emit_report(&small_run(), again.path()).unwrap();
        assert_eq!(text, fs::read_to_string(again.path().join("report.json")).unwrap());
    }

    #[test]
    fn degenerate_report_is_valid_json() {
        let mut report = small_run();
        report.pipelines.clear();
        report.artifacts = None;
        let dir = tempfile::tempdir().unwrap();
        emit_report(&report, dir.path()).unwrap();
        let v: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
        assert_eq!(v["pipelines"], serde_json::json!([]));
        let tidp = fs::read_to_string(dir.path().join("tidp_curve.csv")).unwrap();
        assert_eq!(tidp, "threshold\n");
    }

    #[test]
    fn failed_emit_leaves_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("out");
        fs::write(&blocker, b"not a directory").unwrap();
        assert!(emit_report(&small_run(), &blocker).is_err());
        assert_eq!(fs::read(&blocker).unwrap(), b"not a directory");
    }

    #[test]
    fn tokens_are_portable() {
        assert_eq!(file_token("African-American"), "African-American");
        assert_eq!(file_token("a b/c"), "a_b_c");
    }
}
