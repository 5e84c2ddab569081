//! Fairness regularizers for in-processing comparison: fine-tune a trained
//! scorer on `L + λE`, where `E` is either an EMD between Gaussian-softened
//! group score histograms or a symmetric KL between Gaussian fits to the
//! group scores.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, GroupId};
use crate::error::{Error, Result};
use crate::metrics::{FairnessReport, MetricConfig};
use crate::scoring::{descend, sigmoid, EpochRecord, Evaluation, ScoringModel, TrainConfig};
use crate::seeds::derive_seed;

pub const DEFAULT_BIN_COUNT: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegularizerKind {
    Emd,
    #[serde(alias = "kl")]
    KlGaussian,
}

impl RegularizerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RegularizerKind::Emd => "emd",
            RegularizerKind::KlGaussian => "kl_gaussian",
        }
    }
}

impl std::fmt::Display for RegularizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularizerConfig {
    pub kind: RegularizerKind,
    pub lambda: f64,
    /// Soft histogram bins (EMD only).
    #[serde(default = "default_bin_count")]
    pub bin_count: usize,
    /// Gaussian kernel width; `None` means `1 / (2 * bin_count)`.
    #[serde(default)]
    pub bandwidth: Option<f64>,
}

fn default_bin_count() -> usize {
    DEFAULT_BIN_COUNT
}

impl RegularizerConfig {
    pub fn new(kind: RegularizerKind, lambda: f64) -> Self {
        Self {
            kind,
            lambda,
            bin_count: DEFAULT_BIN_COUNT,
            bandwidth: None,
        }
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
            .unwrap_or(1.0 / (2.0 * self.bin_count as f64))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid(format!("lambda {} must be >= 0", self.lambda)));
        }
        if self.kind == RegularizerKind::Emd {
            if self.bin_count < 2 {
                return Err(Error::invalid("EMD needs at least two bins"));
            }
            let h = self.bandwidth();
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::invalid(format!("bandwidth {h} must be > 0")));
            }
        }
        Ok(())
    }
}

/// Unnormalised log-kernel weights shifted by their global maximum, so the
/// largest weight is 1 and nothing underflows to an all-zero histogram.
fn kernel_weights(scores: &[f64], bins: usize, bandwidth: f64) -> Vec<f64> {
    let inv = 1.0 / (2.0 * bandwidth * bandwidth);
    let mut logw: Vec<f64> = scores
        .iter()
        .flat_map(|&s| {
            (0..bins).map(move |b| {
                let d = s - (b as f64 + 0.5) / bins as f64;
                -d * d * inv
            })
        })
        .collect();
    let shift = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    for w in &mut logw {
        *w = (*w - shift).exp();
    }
    logw
}

/// Histogram with each score spread over `bins` bins (centers `(b+0.5)/C`)
/// by a Gaussian kernel, normalised to sum 1.
pub fn soft_histogram(scores: &[f64], bins: usize, bandwidth: f64) -> Vec<f64> {
    soft_histogram_parts(scores, bins, bandwidth).0
}

fn soft_histogram_parts(scores: &[f64], bins: usize, bandwidth: f64) -> (Vec<f64>, Vec<f64>, f64) {
    let w = kernel_weights(scores, bins, bandwidth);
    let mut mass = vec![0.0; bins];
    for row in w.chunks(bins) {
        for (m, v) in mass.iter_mut().zip(row) {
            *m += v;
        }
    }
    let total: f64 = mass.iter().sum();
    for m in &mut mass {
        *m /= total;
    }
    (mass, w, total)
}

/// Pull an upstream gradient on the histogram back to the scores.
pub fn soft_histogram_vjp(scores: &[f64], bins: usize, bandwidth: f64, upstream: &[f64]) -> Vec<f64> {
    let (p, w, total) = soft_histogram_parts(scores, bins, bandwidth);
    let mean_up: f64 = upstream.iter().zip(&p).map(|(g, q)| g * q).sum();
    let inv_h2 = 1.0 / (bandwidth * bandwidth);
    scores
        .iter()
        .zip(w.chunks(bins))
        .map(|(&s, row)| {
            row.iter()
                .enumerate()
                .map(|(c, &wc)| {
                    let center = (c as f64 + 0.5) / bins as f64;
                    (upstream[c] - mean_up) / total * wc * -(s - center) * inv_h2
                })
                .sum()
        })
        .collect()
}

fn cumsum(v: &[f64]) -> Vec<f64> {
    v.iter()
        .scan(0.0, |acc, x| {
            *acc += x;
            Some(*acc)
        })
        .collect()
}

fn check_emd_inputs(a: &[f64], b: &[f64], config: &RegularizerConfig) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput("EMD needs both groups nonempty".into()));
    }
    if config.bin_count < 2 {
        return Err(Error::invalid("EMD needs at least two bins"));
    }
    Ok(())
}

/// Sum of squared differences between the cumulative soft histograms.
pub fn emd_regularizer(scores_i: &[f64], scores_j: &[f64], config: &RegularizerConfig) -> Result<f64> {
    Ok(emd_with_grad(scores_i, scores_j, config)?.0)
}

/// EMD value and its gradient with respect to each group's scores.
pub fn emd_with_grad(
    scores_i: &[f64],
    scores_j: &[f64],
    config: &RegularizerConfig,
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    check_emd_inputs(scores_i, scores_j, config)?;
    let (c, h) = (config.bin_count, config.bandwidth());
    let cdf_i = cumsum(&soft_histogram(scores_i, c, h));
    let cdf_j = cumsum(&soft_histogram(scores_j, c, h));
    let diff: Vec<f64> = cdf_i.iter().zip(&cdf_j).map(|(a, b)| a - b).collect();
    let value = diff.iter().map(|d| d * d).sum();
    // d/dp_b of sum_k (P_k - Q_k)^2 is 2 * sum_{k >= b} (P_k - Q_k).
    let mut up = vec![0.0; c];
    let mut tail = 0.0;
    for b in (0..c).rev() {
        tail += 2.0 * diff[b];
        up[b] = tail;
    }
    let neg: Vec<f64> = up.iter().map(|g| -g).collect();
    Ok((
        value,
        soft_histogram_vjp(scores_i, c, h, &up),
        soft_histogram_vjp(scores_j, c, h, &neg),
    ))
}

fn moments(s: &[f64]) -> (f64, f64) {
    let n = s.len() as f64;
    let mean = s.iter().sum::<f64>() / n;
    let var = s.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var)
}

/// Symmetric KL divergence between Gaussians fitted to each group's scores
/// (population variance).
pub fn kl_gaussian_regularizer(scores_i: &[f64], scores_j: &[f64]) -> Result<f64> {
    Ok(kl_with_grad(scores_i, scores_j)?.0)
}

pub fn kl_with_grad(scores_i: &[f64], scores_j: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    if scores_i.len() < 2 || scores_j.len() < 2 {
        return Err(Error::EmptyInput("KL needs at least two scores per group".into()));
    }
    let (mi, vi) = moments(scores_i);
    let (mj, vj) = moments(scores_j);
    if vi <= 0.0 || vj <= 0.0 {
        return Err(Error::DegenerateDistribution(
            "group scores have zero variance".into(),
        ));
    }
    let d = mi - mj;
    let value = 0.5 * ((vi + d * d) / vj + (vj + d * d) / vi) - 1.0;
    let dmean = d * (1.0 / vi + 1.0 / vj);
    let grad = |s: &[f64], m: f64, dm: f64, dv: f64| -> Vec<f64> {
        let n = s.len() as f64;
        s.iter().map(|&x| (dm + dv * 2.0 * (x - m)) / n).collect()
    };
    let dvi = 0.5 * (1.0 / vj - (vj + d * d) / (vi * vi));
    let dvj = 0.5 * (1.0 / vi - (vi + d * d) / (vj * vj));
    Ok((value, grad(scores_i, mi, dmean, dvi), grad(scores_j, mj, -dmean, dvj)))
}

/// Regularizer value and gradient for two score groups.
pub fn regularizer_with_grad(
    scores_i: &[f64],
    scores_j: &[f64],
    config: &RegularizerConfig,
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    match config.kind {
        RegularizerKind::Emd => emd_with_grad(scores_i, scores_j, config),
        RegularizerKind::KlGaussian => kl_with_grad(scores_i, scores_j),
    }
}

fn two_groups(train: &Dataset) -> Result<(GroupId, GroupId)> {
    let mut ids = train.groups().to_vec();
    ids.sort_unstable();
    ids.dedup();
    match ids[..] {
        [a, b] => Ok((a, b)),
        _ => Err(Error::invalid(format!(
            "fine-tuning needs exactly two groups, found {}",
            ids.len()
        ))),
    }
}

/// Value and parameter gradient of `L + λE` on `rows`.
pub(crate) fn objective(
    model: &ScoringModel,
    train: &Dataset,
    groups: (GroupId, GroupId),
    config: &RegularizerConfig,
    rows: &[usize],
) -> Result<Evaluation> {
    let x = train.features();
    let (loss, mut grad) = model.loss_and_grad(x, train.labels(), rows);
    if config.lambda == 0.0 {
        return Ok(Evaluation {
            loss,
            penalty: 0.0,
            grad,
        });
    }
    let g = train.groups();
    let (rows_i, rows_j): (Vec<usize>, Vec<usize>) =
        rows.iter().copied().filter(|&r| g[r] == groups.0 || g[r] == groups.1).partition(|&r| g[r] == groups.0);
    let needed = match config.kind {
        RegularizerKind::Emd => 1,
        RegularizerKind::KlGaussian => 2,
    };
    // A minibatch missing one group carries no penalty signal.
    if rows_i.len() < needed || rows_j.len() < needed {
        return Ok(Evaluation {
            loss,
            penalty: 0.0,
            grad,
        });
    }
    let s_i: Vec<f64> = model.margins_rows(x, &rows_i).into_iter().map(sigmoid).collect();
    let s_j: Vec<f64> = model.margins_rows(x, &rows_j).into_iter().map(sigmoid).collect();
    let (e, de_i, de_j) = regularizer_with_grad(&s_i, &s_j, config)?;
    let all_rows: Vec<usize> = rows_i.iter().chain(&rows_j).copied().collect();
    let upstream: Vec<f64> = s_i
        .iter()
        .zip(&de_i)
        .chain(s_j.iter().zip(&de_j))
        .map(|(s, d)| config.lambda * d * s * (1.0 - s))
        .collect();
    let pen_grad = model.margin_vjp(x, &all_rows, &upstream);
    for (a, b) in grad.iter_mut().zip(pen_grad) {
        *a += b;
    }
    Ok(Evaluation {
        loss,
        penalty: config.lambda * e,
        grad,
    })
}

/// Objective value `L + λE` over the whole training set.
pub fn objective_value(model: &ScoringModel, train: &Dataset, config: &RegularizerConfig) -> Result<f64> {
    let groups = two_groups(train)?;
    let rows: Vec<usize> = (0..train.len()).collect();
    let e = objective(model, train, groups, config, &rows)?;
    Ok(e.loss + e.penalty)
}

/// Gradient of `L + λE` over the whole training set.
pub fn objective_grad(model: &ScoringModel, train: &Dataset, config: &RegularizerConfig) -> Result<Vec<f64>> {
    let groups = two_groups(train)?;
    let rows: Vec<usize> = (0..train.len()).collect();
    Ok(objective(model, train, groups, config, &rows)?.grad)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinetuneOutcome {
    pub model: ScoringModel,
    /// Per-epoch `(L, λE)`.
    pub trace: Vec<EpochRecord>,
}

/// Gradient descent on `L + λE` starting from the base parameters.
pub fn finetune(
    base: &ScoringModel,
    train: &Dataset,
    config: &RegularizerConfig,
    tconfig: &TrainConfig,
) -> Result<FinetuneOutcome> {
    config.validate()?;
    tconfig.validate()?;
    if train.feature_dim() != base.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: base.input_dim(),
            actual: train.feature_dim(),
        });
    }
    let groups = two_groups(train)?;
    let mut model = base.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(tconfig.seed);
    let trace = descend(&mut model, tconfig, train.len(), &mut rng, |m, rows| {
        objective(m, train, groups, config, rows)
    })?;
    Ok(FinetuneOutcome { model, trace })
}

/// Settings shared by every cell of a λ sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSettings {
    pub train: TrainConfig,
    pub bin_count: usize,
    pub bandwidth: Option<f64>,
    pub metrics: MetricConfig,
    /// Trial `t` fine-tunes with seed `derive_seed(seed, t)`.
    pub seed: u64,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            bin_count: DEFAULT_BIN_COUNT,
            bandwidth: None,
            metrics: MetricConfig::default(),
            seed: 0,
        }
    }
}

/// One line of the sweep CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub kind: RegularizerKind,
    pub lambda: f64,
    pub trial: usize,
    pub delta_tidp: f64,
    pub delta_wgf_avg: f64,
    pub accuracy: f64,
    pub auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub row: SweepRow,
    pub report: FairnessReport,
}

/// Mean and sample standard deviation across the trials of one λ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub kind: RegularizerKind,
    pub lambda: f64,
    pub trials: usize,
    pub delta_tidp_mean: f64,
    pub delta_tidp_std: f64,
    pub delta_wgf_mean: f64,
    pub delta_wgf_std: f64,
    pub accuracy_mean: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub cells: Vec<SweepCell>,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl SweepTable {
    pub fn rows(&self) -> impl Iterator<Item = &SweepRow> {
        self.cells.iter().map(|c| &c.row)
    }

    /// Summaries in order of first appearance of each `(kind, λ)`.
    pub fn summary(&self) -> Vec<SweepSummary> {
        let mut keys: Vec<(RegularizerKind, f64)> = Vec::new();
        for r in self.rows() {
            if !keys.iter().any(|k| k.0 == r.kind && k.1 == r.lambda) {
                keys.push((r.kind, r.lambda));
            }
        }
        keys.into_iter()
            .map(|(kind, lambda)| {
                let rows: Vec<&SweepRow> = self
                    .rows()
                    .filter(|r| r.kind == kind && r.lambda == lambda)
                    .collect();
                let col = |f: fn(&SweepRow) -> f64| rows.iter().map(|r| f(r)).collect::<Vec<_>>();
                let (tm, ts) = mean_std(&col(|r| r.delta_tidp));
                let (wm, ws) = mean_std(&col(|r| r.delta_wgf_avg));
                let (am, _) = mean_std(&col(|r| r.accuracy));
                SweepSummary {
                    kind,
                    lambda,
                    trials: rows.len(),
                    delta_tidp_mean: tm,
                    delta_tidp_std: ts,
                    delta_wgf_mean: wm,
                    delta_wgf_std: ws,
                    accuracy_mean: am,
                }
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in self.rows() {
            w.serialize(r)
                .map_err(|e| Error::invalid(format!("writing sweep CSV: {e}")))?;
        }
        w.flush().map_err(|e| Error::io("sweep CSV", e))?;
        Ok(())
    }
}

/// Fine-tune the base model for every `λ × trial`, scoring the raw test set
/// and judging within-group fairness against the base model's test scores.
pub fn lambda_sweep(
    base: &ScoringModel,
    train: &Dataset,
    test: &Dataset,
    kind: RegularizerKind,
    lambdas: &[f64],
    trials: usize,
    settings: &SweepSettings,
) -> Result<SweepTable> {
    if lambdas.is_empty() {
        return Err(Error::invalid("lambda sweep needs at least one lambda"));
    }
    if trials == 0 {
        return Err(Error::invalid("lambda sweep needs at least one trial"));
    }
    let baseline_scores = base.score(test.features())?;
    let cells: Vec<(f64, usize)> = lambdas
        .iter()
        .flat_map(|&l| (0..trials).map(move |t| (l, t)))
        .collect();
    let cells = cells
        .into_par_iter()
        .map(|(lambda, trial)| {
            let config = RegularizerConfig {
                kind,
                lambda,
                bin_count: settings.bin_count,
                bandwidth: settings.bandwidth,
            };
            let tconfig = TrainConfig {
                seed: derive_seed(settings.seed, trial as u64),
                ..settings.train.clone()
            };
            let tuned = finetune(base, train, &config, &tconfig)?.model;
            let q = tuned.score(test.features())?;
            let report = FairnessReport::compute(
                &q,
                &baseline_scores,
                test.labels(),
                test.groups(),
                &settings.metrics,
            )?;
            Ok(SweepCell {
                row: SweepRow {
                    kind,
                    lambda,
                    trial,
                    delta_tidp: report.delta_tidp,
                    delta_wgf_avg: report.delta_wgf_avg,
                    accuracy: report.accuracy_at_half,
                    auc: report.auc,
                },
                report,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepTable { cells })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;
    use crate::scoring::ModelKind;
    use rand::Rng;

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
    }

    fn fd<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], h: f64) -> Vec<f64> {
        (0..x.len())
            .map(|k| {
                let mut p = x.to_vec();
                p[k] += h;
                let mut m = x.to_vec();
                m[k] -= h;
                (f(&p) - f(&m)) / (2.0 * h)
            })
            .collect()
    }

    fn uniform(n: usize, seed: u64, lo: f64, hi: f64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(lo..hi)).collect()
    }

    fn toy_dataset(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = Vec::new();
        let mut labels = Vec::new();
        let mut groups = Vec::new();
        for i in 0..n {
            let g = 1 + i % 2;
            let shift = if g == 1 { 0.8 } else { -0.8 };
            let a: f64 = rng.random_range(-1.0..1.0) + shift;
            let b: f64 = rng.random_range(-1.0..1.0);
            data.extend([a, b, a * b]);
            labels.push(u8::from(a + 0.3 * b + rng.random_range(-0.5..0.5) > 0.0));
            groups.push(g);
        }
        Dataset::from_numeric(Matrix::from_vec(n, 3, data).unwrap(), labels, groups).unwrap()
    }

    #[test]
    fn soft_histogram_concentrates() {
        let h = soft_histogram(&[0.35], 10, 0.001);
        assert!(h[3] > 0.999);
        // far from every center, the global shift keeps it finite
        let h = soft_histogram(&[0.0], 10, 0.001);
        assert!(h.iter().all(|v| v.is_finite()));
        assert!((h.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn soft_histogram_uniform_sample() {
        let s = uniform(10_000, 1, 0.0, 1.0);
        let h = soft_histogram(&s, 10, 0.05);
        for (b, m) in h.iter().enumerate() {
            assert!((m - 0.1).abs() < 0.02, "bin {b}: {m}");
        }
    }

    #[test]
    fn soft_histogram_vjp_matches_fd() {
        let s = uniform(12, 2, 0.05, 0.95);
        let up = uniform(8, 3, -1.0, 1.0);
        let f = |x: &[f64]| -> f64 {
            soft_histogram(x, 8, 0.07).iter().zip(&up).map(|(a, b)| a * b).sum()
        };
        let g = soft_histogram_vjp(&s, 8, 0.07, &up);
        for (a, b) in g.iter().zip(fd(f, &s, 1e-6)) {
            assert!(rel_err(*a, b) < 1e-4, "{a} vs {b}");
        }
        // single bin mass, as a direct check of d mass_b / d s_i
        for bin in 0..8 {
            let mut onehot = vec![0.0; 8];
            onehot[bin] = 1.0;
            let g = soft_histogram_vjp(&s, 8, 0.07, &onehot);
            let n = fd(|x| soft_histogram(x, 8, 0.07)[bin], &s, 1e-6);
            for (a, b) in g.iter().zip(n) {
                assert!(rel_err(*a, b) < 1e-4, "bin {bin}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn emd_examples() {
        let cfg = RegularizerConfig {
            kind: RegularizerKind::Emd,
            lambda: 1.0,
            bin_count: 2,
            bandwidth: Some(0.01),
        };
        let v = emd_regularizer(&[0.0], &[1.0], &cfg).unwrap();
        assert!((v - 1.0).abs() < 1e-9, "{v}");
        let s = uniform(20, 4, 0.0, 1.0);
        let cfg = RegularizerConfig::new(RegularizerKind::Emd, 1.0);
        assert_eq!(emd_regularizer(&s, &s, &cfg).unwrap(), 0.0);
        let t = uniform(15, 5, 0.2, 1.0);
        assert_eq!(
            emd_regularizer(&s, &t, &cfg).unwrap(),
            emd_regularizer(&t, &s, &cfg).unwrap()
        );
        assert!(emd_regularizer(&s, &t, &cfg).unwrap() > 0.0);
    }

    #[test]
    fn emd_gradient_matches_fd() {
        let cfg = RegularizerConfig {
            bin_count: 10,
            ..RegularizerConfig::new(RegularizerKind::Emd, 1.0)
        };
        let a = uniform(9, 6, 0.1, 0.6);
        let b = uniform(7, 7, 0.3, 0.9);
        let (_, ga, gb) = emd_with_grad(&a, &b, &cfg).unwrap();
        let na = fd(|x| emd_regularizer(x, &b, &cfg).unwrap(), &a, 1e-6);
        let nb = fd(|x| emd_regularizer(&a, x, &cfg).unwrap(), &b, 1e-6);
        for (x, y) in ga.iter().chain(&gb).zip(na.iter().chain(&nb)) {
            assert!(rel_err(*x, *y) < 1e-4, "{x} vs {y}");
        }
    }

    #[test]
    fn emd_descends_along_negative_gradient() {
        let cfg = RegularizerConfig {
            bin_count: 10,
            ..RegularizerConfig::new(RegularizerKind::Emd, 1.0)
        };
        let mut a = uniform(30, 8, 0.1, 0.5);
        let b = uniform(30, 9, 0.5, 0.9);
        let mut prev = emd_regularizer(&a, &b, &cfg).unwrap();
        for _ in 0..20 {
            let (_, ga, _) = emd_with_grad(&a, &b, &cfg).unwrap();
            for (s, g) in a.iter_mut().zip(ga) {
                *s -= 1e-3 * g;
            }
            let now = emd_regularizer(&a, &b, &cfg).unwrap();
            assert!(now < prev, "{now} >= {prev}");
            prev = now;
        }
    }

    #[test]
    fn kl_examples() {
        // mean 0 and 1, unit variance
        let a = [-1.0, 1.0];
        let b = [0.0, 2.0];
        assert!((kl_gaussian_regularizer(&a, &b).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(kl_gaussian_regularizer(&[0.1, 0.3], &[0.3, 0.1]).unwrap(), 0.0);
        let s = uniform(10, 10, 0.0, 1.0);
        let t = uniform(12, 11, 0.0, 0.5);
        assert_eq!(
            kl_gaussian_regularizer(&s, &t).unwrap(),
            kl_gaussian_regularizer(&t, &s).unwrap()
        );
        assert!(matches!(
            kl_gaussian_regularizer(&[0.4, 0.4], &t),
            Err(Error::DegenerateDistribution(_))
        ));
    }

    #[test]
    fn kl_gradient_matches_fd() {
        let a = uniform(8, 12, 0.1, 0.7);
        let b = uniform(6, 13, 0.3, 0.9);
        let (_, ga, gb) = kl_with_grad(&a, &b).unwrap();
        let na = fd(|x| kl_gaussian_regularizer(x, &b).unwrap(), &a, 1e-6);
        let nb = fd(|x| kl_gaussian_regularizer(&a, x).unwrap(), &b, 1e-6);
        for (x, y) in ga.iter().chain(&gb).zip(na.iter().chain(&nb)) {
            assert!(rel_err(*x, *y) < 1e-4, "{x} vs {y}");
        }
    }

    fn base_model(kind: ModelKind, train: &Dataset) -> ScoringModel {
        let cfg = TrainConfig {
            epochs: 30,
            hidden: vec![5, 4],
            ..TrainConfig::default()
        };
        crate::scoring::train_baseline(train, kind, kind.default_loss(), &cfg)
            .unwrap()
            .model
    }

    #[test]
    fn combined_objective_gradient_matches_fd() {
        let train = toy_dataset(40, 14);
        for kind in [ModelKind::LogisticRegression, ModelKind::Mlp3Layer, ModelKind::Margin] {
            let base = base_model(kind, &train);
            for reg in [
                RegularizerConfig {
                    bin_count: 10,
                    ..RegularizerConfig::new(RegularizerKind::Emd, 2.0)
                },
                RegularizerConfig::new(RegularizerKind::KlGaussian, 0.5),
            ] {
                let g = objective_grad(&base, &train, &reg).unwrap();
                let h = 1e-6;
                for k in 0..g.len() {
                    let mut p = base.clone();
                    p.params_mut()[k] += h;
                    let mut m = base.clone();
                    m.params_mut()[k] -= h;
                    let n = (objective_value(&p, &train, &reg).unwrap()
                        - objective_value(&m, &train, &reg).unwrap())
                        / (2.0 * h);
                    // hinge kinks can fall inside the stencil; skip those
                    if kind == ModelKind::Margin && (g[k] - n).abs() > 1e-3 {
                        continue;
                    }
                    assert!(rel_err(g[k], n) < 1e-4, "{kind:?} {:?} param {k}: {} vs {n}", reg.kind, g[k]);
                }
            }
        }
    }

    #[test]
    fn zero_lambda_is_continued_training() {
        let train = toy_dataset(60, 15);
        let base = base_model(ModelKind::Mlp3Layer, &train);
        let tcfg = TrainConfig {
            epochs: 25,
            seed: 3,
            batch: crate::scoring::Batch::Size(16),
            hidden: vec![5, 4],
            ..TrainConfig::default()
        };
        let out = finetune(&base, &train, &RegularizerConfig::new(RegularizerKind::Emd, 0.0), &tcfg).unwrap();
        let mut plain = base.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let losses = crate::scoring::continue_training(&mut plain, &train, &tcfg, &mut rng).unwrap();
        assert_eq!(out.model.params(), plain.params());
        assert_eq!(out.trace.iter().map(|r| r.loss).collect::<Vec<_>>(), losses);
        assert!(out.trace.iter().all(|r| r.penalty == 0.0));
    }

    #[test]
    fn huge_lambda_reduces_group_gap() {
        let train = toy_dataset(400, 16);
        let test = toy_dataset(400, 17);
        let base = base_model(ModelKind::LogisticRegression, &train);
        let metrics = MetricConfig::default();
        let r = base.score(test.features()).unwrap();
        let before = FairnessReport::compute(&r, &r, test.labels(), test.groups(), &metrics).unwrap();
        for kind in [RegularizerKind::Emd, RegularizerKind::KlGaussian] {
            let tcfg = TrainConfig {
                epochs: 50,
                learning_rate: 1e-4,
                ..TrainConfig::default()
            };
            let tuned = finetune(&base, &train, &RegularizerConfig::new(kind, 1e4), &tcfg).unwrap().model;
            let q = tuned.score(test.features()).unwrap();
            let after = FairnessReport::compute(&q, &r, test.labels(), test.groups(), &metrics).unwrap();
            assert!(after.delta_tidp < before.delta_tidp, "{kind}: {} vs {}", after.delta_tidp, before.delta_tidp);
        }
    }

    #[test]
    fn finetune_rejects_wrong_group_count() {
        let mut ds = toy_dataset(30, 18);
        let groups = vec![1; 30];
        ds = Dataset::from_numeric(ds.features().clone(), ds.labels().to_vec(), groups).unwrap();
        let base = base_model(ModelKind::LogisticRegression, &ds);
        let tcfg = TrainConfig::default();
        assert!(finetune(&base, &ds, &RegularizerConfig::new(RegularizerKind::Emd, 1.0), &tcfg).is_err());
    }

    #[test]
    fn sweep_zero_lambda_and_determinism() {
        let train = toy_dataset(120, 19);
        let test = toy_dataset(80, 20);
        let base = base_model(ModelKind::LogisticRegression, &train);
        let settings = SweepSettings {
            train: TrainConfig {
                epochs: 10,
                batch: crate::scoring::Batch::Size(32),
                ..TrainConfig::default()
            },
            seed: 5,
            ..SweepSettings::default()
        };
        let a = lambda_sweep(&base, &train, &test, RegularizerKind::Emd, &[0.0, 1.0], 3, &settings).unwrap();
        let b = lambda_sweep(&base, &train, &test, RegularizerKind::Emd, &[0.0, 1.0], 3, &settings).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.cells.len(), 6);
        let zero = &a.cells[1].row;
        let tcfg = TrainConfig {
            seed: derive_seed(5, 1),
            ..settings.train.clone()
        };
        let mut plain = base.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(tcfg.seed);
        crate::scoring::continue_training(&mut plain, &train, &tcfg, &mut rng).unwrap();
        let q = plain.score(test.features()).unwrap();
        let r = base.score(test.features()).unwrap();
        let rep = FairnessReport::compute(&q, &r, test.labels(), test.groups(), &settings.metrics).unwrap();
        assert_eq!(zero.delta_tidp, rep.delta_tidp);
        assert_eq!(zero.delta_wgf_avg, rep.delta_wgf_avg);

        let summary = a.summary();
        assert_eq!(summary.len(), 2);
        assert_eq!(summary[0].trials, 3);
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("kind,lambda,trial,delta_tidp,delta_wgf_avg,accuracy,auc\n"));
        assert_eq!(text.lines().count(), 7);
    }

    #[test]
    fn sweep_argument_errors() {
        let train = toy_dataset(40, 21);
        let base = base_model(ModelKind::LogisticRegression, &train);
        let s = SweepSettings::default();
        assert!(lambda_sweep(&base, &train, &train, RegularizerKind::Emd, &[], 1, &s).is_err());
        assert!(lambda_sweep(&base, &train, &train, RegularizerKind::Emd, &[1.0], 0, &s).is_err());
    }
}
