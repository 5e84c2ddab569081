//! Inter-group fairness (CV score, threshold-averaged gap), within-group
//! fairness (signed-distance preservation between two scorings) and
//! predictive performance.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::GroupId;
use crate::error::{Error, Result};
use crate::scoring::classify;

/// Thresholds in the Δ_TIDP grid.
pub const DEFAULT_THRESHOLD_GRID: usize = 1001;
/// Points in the ε grid over `[0, 0.5]`.
pub const DEFAULT_EPSILON_GRID: usize = 51;
/// Upper end of the ε range the within-group average runs over.
pub const EPSILON_MAX: f64 = 0.5;

/// `d(x, y)` when `x <= y`, `-d(x, y)` otherwise.
#[inline]
pub fn signed_distance(x: f64, y: f64) -> f64 {
    let d = (x - y).abs();
    if x <= y {
        d
    } else {
        -d
    }
}

fn positive_rate(sorted: &[f64], t: f64) -> f64 {
    let at_or_below = sorted.partition_point(|&s| s <= t);
    (sorted.len() - at_or_below) as f64 / sorted.len() as f64
}

fn sorted_copy(v: &[f64]) -> Vec<f64> {
    let mut v = v.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// `|P(score > t | g1) - P(score > t | g2)|`.
pub fn cv_score(scores_g1: &[f64], scores_g2: &[f64], t: f64) -> Result<f64> {
    if scores_g1.is_empty() || scores_g2.is_empty() {
        return Err(Error::EmptyInput("CV score needs both groups nonempty".into()));
    }
    let rate = |s: &[f64]| s.iter().filter(|&&v| v > t).count() as f64 / s.len() as f64;
    Ok((rate(scores_g1) - rate(scores_g2)).abs())
}

/// `n` evenly spaced points from 0 to `hi`, both ends included.
pub fn uniform_grid(n: usize, hi: f64) -> Vec<f64> {
    let last = (n - 1) as f64;
    (0..n).map(|j| hi * j as f64 / last).collect()
}

/// A metric evaluated over a grid, with its arithmetic mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub average: f64,
}

impl Curve {
    fn new(grid: Vec<f64>, values: Vec<f64>) -> Self {
        let average = if values.is_empty() {
            0.0
        } else {
            values.iter().sum::<f64>() / values.len() as f64
        };
        Self {
            grid,
            values,
            average,
        }
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.grid.iter().copied().zip(self.values.iter().copied())
    }
}

/// CV score over `grid_size` thresholds spanning `[0, 1]`; the average is
/// Δ_TIDP.
pub fn delta_tidp(scores_g1: &[f64], scores_g2: &[f64], grid_size: usize) -> Result<Curve> {
    if grid_size < 2 {
        return Err(Error::invalid(format!("grid size {grid_size} < 2")));
    }
    if scores_g1.is_empty() || scores_g2.is_empty() {
        return Err(Error::EmptyInput("CV score needs both groups nonempty".into()));
    }
    let (a, b) = (sorted_copy(scores_g1), sorted_copy(scores_g2));
    let grid = uniform_grid(grid_size, 1.0);
    let values = grid
        .iter()
        .map(|&t| (positive_rate(&a, t) - positive_rate(&b, t)).abs())
        .collect();
    Ok(Curve::new(grid, values))
}

fn check_wgf_inputs(q: &[f64], r: &[f64], groups: &[GroupId]) -> Result<Vec<Vec<usize>>> {
    if q.len() != r.len() || q.len() != groups.len() {
        return Err(Error::invalid(format!(
            "score vectors ({}, {}) and groups ({}) differ in length",
            q.len(),
            r.len(),
            groups.len()
        )));
    }
    if let Some(s) = q.iter().chain(r).find(|s| !(0.0..=1.0).contains(*s)) {
        return Err(Error::invalid(format!("score {s} outside [0, 1]")));
    }
    let max_group = groups.iter().copied().max().unwrap_or(0);
    let mut members = vec![Vec::new(); max_group + 1];
    for (i, &g) in groups.iter().enumerate() {
        members[g].push(i);
    }
    members.retain(|m| m.len() >= 2);
    if members.is_empty() {
        return Err(Error::UndefinedMetric(
            "within-group fairness needs a group with at least two members".into(),
        ));
    }
    Ok(members)
}

#[inline]
fn pair_change(q: &[f64], r: &[f64], i: usize, j: usize) -> f64 {
    (signed_distance(q[i], q[j]) - signed_distance(r[i], r[j])).abs()
}

/// Fraction of within-group pairs whose signed score distance changes by
/// more than `epsilon` between scorings `q` and `r`.
pub fn delta_wgf(q: &[f64], r: &[f64], groups: &[GroupId], epsilon: f64) -> Result<f64> {
    if !(epsilon >= 0.0) {
        return Err(Error::invalid(format!("epsilon {epsilon} must be >= 0")));
    }
    let members = check_wgf_inputs(q, r, groups)?;
    let mut violations = 0u64;
    let mut denom = 0u64;
    for m in &members {
        let n = m.len() as u64;
        denom += n * (n - 1);
        violations += (0..m.len())
            .into_par_iter()
            .map(|a| {
                (a + 1..m.len())
                    .filter(|&b| pair_change(q, r, m[a], m[b]) > epsilon)
                    .count() as u64
            })
            .sum::<u64>();
    }
    Ok(2.0 * violations as f64 / denom as f64)
}

/// How Δ_WGF curves treat very large groups.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum WgfMode {
    /// Every within-group pair.
    Exact,
    /// Groups with more than `max_exact_pairs` pairs are estimated from
    /// `samples` uniformly drawn pairs.
    Sampled {
        max_exact_pairs: u64,
        samples: usize,
        seed: u64,
    },
}

impl Default for WgfMode {
    fn default() -> Self {
        WgfMode::Exact
    }
}

impl WgfMode {
    pub fn sampled(seed: u64) -> Self {
        WgfMode::Sampled {
            max_exact_pairs: 100_000,
            samples: 100_000,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WgfEstimate {
    pub curve: Curve,
    /// Standard error of the curve average; `None` when every pair was used.
    pub standard_error: Option<f64>,
}

/// Δ_WGF over `grid_size` values of ε spanning `[0, 0.5]`, using every pair.
pub fn wgf_curve(q: &[f64], r: &[f64], groups: &[GroupId], grid_size: usize) -> Result<Curve> {
    Ok(wgf_curve_with(q, r, groups, grid_size, WgfMode::Exact)?.curve)
}

pub fn wgf_curve_with(
    q: &[f64],
    r: &[f64],
    groups: &[GroupId],
    grid_size: usize,
    mode: WgfMode,
) -> Result<WgfEstimate> {
    if grid_size < 2 {
        return Err(Error::invalid(format!("grid size {grid_size} < 2")));
    }
    let members = check_wgf_inputs(q, r, groups)?;
    let grid = uniform_grid(grid_size, EPSILON_MAX);
    // exceed[k] counts pairs whose change exceeds exactly the first k grid
    // points, so pairs above grid point j are sum(exceed[j+1..]).
    let bucket = |d: f64| grid.partition_point(|&e| e < d);

    let total_pairs: f64 = members
        .iter()
        .map(|m| (m.len() * (m.len() - 1) / 2) as f64)
        .sum();
    let mut fractions = vec![0.0; grid_size];
    let mut variance = 0.0;
    let mut sampled_any = false;

    for (gi, m) in members.iter().enumerate() {
        let pairs = (m.len() * (m.len() - 1) / 2) as u64;
        let weight = pairs as f64 / total_pairs;
        let sampling = match mode {
            WgfMode::Sampled {
                max_exact_pairs,
                samples,
                seed,
            } if pairs > max_exact_pairs && samples > 0 => Some((samples, seed)),
            _ => None,
        };
        let mut exceed = vec![0u64; grid_size + 1];
        let used: f64;
        match sampling {
            None => {
                let partial = (0..m.len())
                    .into_par_iter()
                    .fold(
                        || vec![0u64; grid_size + 1],
                        |mut acc, a| {
                            for b in a + 1..m.len() {
                                acc[bucket(pair_change(q, r, m[a], m[b]))] += 1;
                            }
                            acc
                        },
                    )
                    .reduce(
                        || vec![0u64; grid_size + 1],
                        |mut x, y| {
                            x.iter_mut().zip(y).for_each(|(a, b)| *a += b);
                            x
                        },
                    );
                exceed = partial;
                used = pairs as f64;
            }
            Some((samples, seed)) => {
                sampled_any = true;
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (gi as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
                let mut per_sample = Vec::with_capacity(samples);
                for _ in 0..samples {
                    let a = rng.random_range(0..m.len());
                    let mut b = rng.random_range(0..m.len() - 1);
                    if b >= a {
                        b += 1;
                    }
                    let k = bucket(pair_change(q, r, m[a], m[b]));
                    exceed[k] += 1;
                    // share of the grid this pair violates
                    per_sample.push(k as f64 / grid_size as f64);
                }
                let mean = per_sample.iter().sum::<f64>() / samples as f64;
                let var = per_sample.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
                    / (samples.max(2) - 1) as f64;
                variance += weight * weight * var / samples as f64;
                used = samples as f64;
            }
        }
        let mut above = 0u64;
        for j in (0..grid_size).rev() {
            above += exceed[j + 1];
            fractions[j] += weight * above as f64 / used;
        }
    }
    Ok(WgfEstimate {
        curve: Curve::new(grid, fractions),
        standard_error: sampled_any.then(|| variance.sqrt()),
    })
}

/// Fraction of rows with `score > threshold` matching the label.
pub fn accuracy(scores: &[f64], labels: &[u8], threshold: f64) -> f64 {
    if scores.is_empty() {
        return 0.0;
    }
    let predicted = classify(scores, threshold);
    predicted.iter().zip(labels).filter(|(p, y)| p == y).count() as f64 / scores.len() as f64
}

/// Area under the ROC curve from the Mann–Whitney U statistic, with tied
/// scores given their mid-rank.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::invalid("scores and labels differ in length"));
    }
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::AucUndefined {
            accuracy: accuracy(scores, labels, 0.5),
        });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1..=j+1 share their mean
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum_pos += mid * order[i..=j].iter().filter(|&&k| labels[k] == 1).count() as f64;
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Performance {
    pub accuracy_at_half: f64,
    pub auc: f64,
}

/// Accuracy at threshold 0.5 and AUC. A single-class label vector yields
/// [`Error::AucUndefined`] carrying the accuracy.
pub fn performance(scores: &[f64], labels: &[u8]) -> Result<Performance> {
    let auc = auc(scores, labels)?;
    Ok(Performance {
        accuracy_at_half: accuracy(scores, labels, 0.5),
        auc,
    })
}

/// Kendall's tau-b rank correlation.
pub fn kendall_tau(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (concordant, discordant, ties_a, ties_b) = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut acc = (0i64, 0i64, 0i64, 0i64);
            for j in i + 1..n {
                let da = (a[i] - a[j]).partial_cmp(&0.0).map_or(0, |o| o as i64);
                let db = (b[i] - b[j]).partial_cmp(&0.0).map_or(0, |o| o as i64);
                match (da, db) {
                    (0, 0) => {}
                    (0, _) => acc.2 += 1,
                    (_, 0) => acc.3 += 1,
                    _ if da == db => acc.0 += 1,
                    _ => acc.1 += 1,
                }
            }
            acc
        })
        .reduce(
            || (0, 0, 0, 0),
            |x, y| (x.0 + y.0, x.1 + y.1, x.2 + y.2, x.3 + y.3),
        );
    let (c, d) = (concordant as f64, discordant as f64);
    let denom = ((c + d + ties_a as f64) * (c + d + ties_b as f64)).sqrt();
    if denom == 0.0 {
        return 0.0;
    }
    (c - d) / denom
}

/// Grid sizes and Δ_WGF treatment used for a [`FairnessReport`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricConfig {
    pub threshold_grid: usize,
    pub epsilon_grid: usize,
    pub wgf_mode: WgfMode,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            threshold_grid: DEFAULT_THRESHOLD_GRID,
            epsilon_grid: DEFAULT_EPSILON_GRID,
            wgf_mode: WgfMode::Exact,
        }
    }
}

/// All fairness and performance measures for one scoring `q` of a test set,
/// judged against the baseline scoring `r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub threshold_grid_size: usize,
    pub epsilon_grid_size: usize,
    /// `(t, CV(t))`.
    pub cv_curve: Vec<(f64, f64)>,
    pub delta_tidp: f64,
    /// `(ε, Δ_WGF(ε))`.
    pub wgf_curve: Vec<(f64, f64)>,
    pub delta_wgf_avg: f64,
    pub delta_wgf_standard_error: Option<f64>,
    pub accuracy_at_half: f64,
    /// `None` when the test labels hold a single class.
    pub auc: Option<f64>,
}

impl FairnessReport {
    /// Requires exactly two groups among `groups`.
    pub fn compute(
        q: &[f64],
        r: &[f64],
        labels: &[u8],
        groups: &[GroupId],
        config: &MetricConfig,
    ) -> Result<Self> {
        let mut ids: Vec<GroupId> = groups.to_vec();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != 2 {
            return Err(Error::invalid(format!(
                "inter-group fairness needs exactly two groups, found {}",
                ids.len()
            )));
        }
        let pick = |g: GroupId| -> Vec<f64> {
            q.iter()
                .zip(groups)
                .filter_map(|(&s, &gg)| (gg == g).then_some(s))
                .collect()
        };
        let tidp = delta_tidp(&pick(ids[0]), &pick(ids[1]), config.threshold_grid)?;
        let wgf = wgf_curve_with(q, r, groups, config.epsilon_grid, config.wgf_mode)?;
        let (accuracy_at_half, auc) = match performance(q, labels) {
            Ok(p) => (p.accuracy_at_half, Some(p.auc)),
            Err(Error::AucUndefined { accuracy }) => (accuracy, None),
            Err(e) => return Err(e),
        };
        Ok(Self {
            threshold_grid_size: config.threshold_grid,
            epsilon_grid_size: config.epsilon_grid,
            cv_curve: tidp.points().collect(),
            delta_tidp: tidp.average,
            wgf_curve: wgf.curve.points().collect(),
            delta_wgf_avg: wgf.curve.average,
            delta_wgf_standard_error: wgf.standard_error,
            accuracy_at_half,
            auc,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Direct transcription of the pairwise Δ_WGF formula.
    fn brute_wgf(q: &[f64], r: &[f64], groups: &[GroupId], eps: f64) -> f64 {
        let mut num = 0usize;
        let mut sizes = std::collections::HashMap::new();
        for &g in groups {
            *sizes.entry(g).or_insert(0usize) += 1;
        }
        for i in 0..q.len() {
            for j in 0..q.len() {
                if i < j && groups[i] == groups[j] {
                    let lhs = signed_distance(q[i], q[j]);
                    let rhs = signed_distance(r[i], r[j]);
                    if (lhs - rhs).abs() > eps {
                        num += 1;
                    }
                }
            }
        }
        let den: usize = sizes.values().map(|n| n * (n - 1)).sum();
        2.0 * num as f64 / den as f64
    }

    #[test]
    fn signed_distance_cases() {
        assert_eq!(signed_distance(0.3, 0.3), 0.0);
        assert_eq!(signed_distance(0.25, 0.5), 0.25);
        assert_eq!(signed_distance(0.75, 0.5), -0.25);
    }

    #[test]
    fn cv_examples() {
        assert_eq!(cv_score(&[0.3, 0.7], &[0.3, 0.7], 0.4).unwrap(), 0.0);
        assert_eq!(cv_score(&[0.9], &[0.1], 0.5).unwrap(), 1.0);
        assert_eq!(cv_score(&[0.2, 0.8], &[0.4, 0.6], 0.5).unwrap(), 0.0);
        assert!(matches!(cv_score(&[], &[0.1], 0.5), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn tidp_point_masses() {
        let c = delta_tidp(&[0.4], &[0.6], 1001).unwrap();
        // CV is 1 exactly for t in [0.4, 0.6): grid points 400..=599.
        assert_eq!(c.values.iter().filter(|&&v| v == 1.0).count(), 200);
        assert!((c.average - 200.0 / 1001.0).abs() < 1e-15);
        assert!((c.average - 0.2).abs() <= 1e-3);
        assert_eq!(delta_tidp(&[0.4], &[0.4], 11).unwrap().average, 0.0);
    }

    #[test]
    fn tidp_shift_matches_analytic_gap() {
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a: Vec<f64> = (0..20_000).map(|_| 0.1 + 0.8 * rng.random::<f64>()).collect();
        let b: Vec<f64> = a.iter().map(|v| v - 0.1).collect();
        let c = delta_tidp(&a, &b, 1001).unwrap();
        // Uniform on [0.1,0.9] vs [0,0.8]: CDF gap is 0.1/0.8 on [0.1,0.8],
        // ramps at the ends; integral = 0.1.
        assert!((c.average - 0.1).abs() < 0.02, "{}", c.average);
    }

    #[test]
    fn tidp_cv_curve_matches_cv_score() {
        let a = [0.1, 0.35, 0.5, 0.5, 0.92];
        let b = [0.2, 0.5, 0.77];
        let c = delta_tidp(&a, &b, 101).unwrap();
        for (t, v) in c.points() {
            assert_eq!(v, cv_score(&a, &b, t).unwrap());
        }
    }

    #[test]
    fn example_one_pairs() {
        let r = [0.50, 0.25, 0.75, 0.50];
        let q = [0.50, 0.25, 0.25, 0.50];
        let g = [1, 1, 2, 2];
        assert_eq!(delta_wgf(&q, &r, &g, 0.1).unwrap(), 0.5);
        assert_eq!(delta_wgf(&r, &r, &g, 0.0).unwrap(), 0.0);
        let c = wgf_curve(&q, &r, &g, 51).unwrap();
        assert!(c.values[..50].iter().all(|&v| v == 0.5));
        assert_eq!(c.values[50], 0.0);
        assert!((c.average - 25.0 / 51.0).abs() < 1e-15);
    }

    #[test]
    fn singleton_groups_undefined() {
        assert!(matches!(
            delta_wgf(&[0.1, 0.2], &[0.1, 0.2], &[1, 2], 0.1),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn singleton_groups_contribute_nothing() {
        let q = [0.1, 0.9, 0.3];
        let r = [0.9, 0.1, 0.3];
        assert_eq!(delta_wgf(&q, &r, &[1, 1, 2], 0.1).unwrap(), 1.0);
    }

    #[test]
    fn wgf_matches_brute_force_on_random_instance() {
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let q: Vec<f64> = (0..50).map(|_| rng.random()).collect();
        let r: Vec<f64> = (0..50).map(|_| rng.random()).collect();
        let g: Vec<GroupId> = (0..50).map(|_| rng.random_range(1..=2)).collect();
        for eps in [0.0, 0.05, 0.1, 0.3, 0.5] {
            assert_eq!(delta_wgf(&q, &r, &g, eps).unwrap(), brute_wgf(&q, &r, &g, eps));
        }
        let curve = wgf_curve(&q, &r, &g, 51).unwrap();
        for (eps, v) in curve.points() {
            let b = brute_wgf(&q, &r, &g, eps);
            assert!((v - b).abs() < 1e-12, "eps {eps}: {v} vs {b}");
        }
    }

    #[test]
    fn monotone_transform_reaches_zero_past_max_change() {
        let r = [0.1, 0.2, 0.4, 0.7, 0.3, 0.6];
        let q: Vec<f64> = r.iter().map(|v| 0.5 * v + 0.2).collect();
        let g = [1, 1, 1, 1, 2, 2];
        let mut max_change: f64 = 0.0;
        for i in 0..6 {
            for j in 0..6 {
                if g[i] == g[j] {
                    max_change = max_change.max(pair_change(&q, &r, i, j));
                }
            }
        }
        let c = wgf_curve(&q, &r, &g, 51).unwrap();
        for (eps, v) in c.points() {
            if eps >= max_change {
                assert_eq!(v, 0.0);
            }
        }
    }

    #[test]
    fn sampled_estimate_close_to_exact() {
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let r: Vec<f64> = (0..1200).map(|_| rng.random()).collect();
        let q: Vec<f64> = r.iter().map(|v| (v * v + 0.05 * rng.random::<f64>()).min(1.0)).collect();
        let g: Vec<GroupId> = (0..1200).map(|i| 1 + i % 2).collect();
        let exact = wgf_curve(&q, &r, &g, 51).unwrap();
        let est = wgf_curve_with(&q, &r, &g, 51, WgfMode::sampled(9)).unwrap();
        let se = est.standard_error.expect("sampling active");
        assert!(se > 0.0);
        assert!((est.curve.average - exact.average).abs() < 5.0 * se + 1e-3);
        let small = wgf_curve_with(&q[..100], &r[..100], &g[..100], 51, WgfMode::sampled(9)).unwrap();
        assert_eq!(small.standard_error, None);
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.0, 1.0, 1.0, 0.0], &[0, 1, 1, 0]).unwrap(), 1.0);
        assert_eq!(auc(&[0.3; 6], &[0, 1, 0, 1, 1, 0]).unwrap(), 0.5);
        assert_eq!(auc(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1]).unwrap(), 0.75);
        let p = performance(&[0.0, 1.0, 1.0, 0.0], &[0, 1, 1, 0]).unwrap();
        assert_eq!(p.accuracy_at_half, 1.0);
        match performance(&[0.9, 0.2], &[1, 1]) {
            Err(Error::AucUndefined { accuracy }) => assert_eq!(accuracy, 0.5),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn kendall_basics() {
        assert_eq!(kendall_tau(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]), 1.0);
        assert_eq!(kendall_tau(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), -1.0);
    }

    #[test]
    fn report_two_groups_only() {
        let s = [0.2, 0.4, 0.6, 0.8];
        let y = [0, 0, 1, 1];
        let cfg = MetricConfig::default();
        let rep = FairnessReport::compute(&s, &s, &y, &[1, 2, 1, 2], &cfg).unwrap();
        assert_eq!(rep.delta_wgf_avg, 0.0);
        assert_eq!(rep.auc, Some(1.0));
        assert_eq!(rep.cv_curve.len(), 1001);
        assert_eq!(rep.wgf_curve.len(), 51);
        assert!(FairnessReport::compute(&s, &s, &y, &[1, 1, 1, 1], &cfg).is_err());
    }

    proptest! {
        #[test]
        fn wgf_equals_brute_force(
            data in prop::collection::vec((0.0f64..=1.0, 0.0f64..=1.0, 1usize..=3), 2..120),
            eps in 0.0f64..0.6,
        ) {
            let q: Vec<f64> = data.iter().map(|d| d.0).collect();
            let r: Vec<f64> = data.iter().map(|d| d.1).collect();
            let g: Vec<GroupId> = data.iter().map(|d| d.2).collect();
            match delta_wgf(&q, &r, &g, eps) {
                Ok(v) => prop_assert_eq!(v, brute_wgf(&q, &r, &g, eps)),
                Err(Error::UndefinedMetric(_)) => {}
                Err(e) => return Err(TestCaseError::fail(e.to_string())),
            }
        }

        #[test]
        fn wgf_nonincreasing_in_epsilon(
            data in prop::collection::vec((0.0f64..=1.0, 0.0f64..=1.0), 2..80),
        ) {
            let q: Vec<f64> = data.iter().map(|d| d.0).collect();
            let r: Vec<f64> = data.iter().map(|d| d.1).collect();
            let g = vec![1; q.len()];
            let c = wgf_curve(&q, &r, &g, 51).unwrap();
            for w in c.values.windows(2) {
                prop_assert!(w[1] <= w[0]);
            }
            prop_assert_eq!(wgf_curve(&r, &r, &g, 51).unwrap().average, 0.0);
        }

        #[test]
        fn tidp_symmetric_and_zero_on_self(
            a in prop::collection::vec(0.0f64..=1.0, 1..60),
            b in prop::collection::vec(0.0f64..=1.0, 1..60),
        ) {
            prop_assert_eq!(delta_tidp(&a, &a, 101).unwrap().average, 0.0);
            prop_assert_eq!(
                delta_tidp(&a, &b, 101).unwrap().values,
                delta_tidp(&b, &a, 101).unwrap().values
            );
        }

        #[test]
        fn auc_invariant_under_increasing_transform(
            data in prop::collection::vec((0.0f64..1.0, 0u8..2), 2..80),
        ) {
            let s: Vec<f64> = data.iter().map(|d| d.0).collect();
            let y: Vec<u8> = data.iter().map(|d| d.1).collect();
            prop_assume!(y.contains(&0) && y.contains(&1));
            let t: Vec<f64> = s.iter().map(|v| (3.0 * v).exp() - 0.5).collect();
            prop_assert!((auc(&s, &y).unwrap() - auc(&t, &y).unwrap()).abs() < 1e-12);
        }
    }
}
