//! Histogram specification of score distributions.
//!
//! A group's scores are pushed through its own empirical CDF and then
//! through the generalized inverse of the reference histogram's CDF. The
//! composite transform is nondecreasing, so the relative order of scores
//! within the group survives the matching.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default bin count for histogram specification.
pub const DEFAULT_BINS: usize = 100;

/// Equal-width histogram over `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreHistogram {
    bin_edges: Vec<f64>,
    counts: Vec<u64>,
    cdf: Vec<f64>,
}

impl ScoreHistogram {
    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn bin_edges(&self) -> &[f64] {
        &self.bin_edges
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn cdf(&self) -> &[f64] {
        &self.cdf
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Bin holding `s`: the last bin whose left edge is `<= s`, so `1.0`
    /// lands in the final bin.
    pub fn bin_of(&self, s: f64) -> usize {
        bin_index(&self.bin_edges, s)
    }

    /// Generalized inverse of the CDF: the first bin whose cumulative mass
    /// reaches `p`, linearly interpolated inside that bin.
    pub fn quantile(&self, p: f64) -> f64 {
        let b = self
            .cdf
            .partition_point(|&c| c < p)
            .min(self.bins() - 1);
        let lo = if b == 0 { 0.0 } else { self.cdf[b - 1] };
        let hi = self.cdf[b];
        let frac = if hi > lo {
            ((p - lo) / (hi - lo)).clamp(0.0, 1.0)
        } else {
            1.0
        };
        let left = self.bin_edges[b];
        let right = self.bin_edges[b + 1];
        (left + frac * (right - left)).min(right)
    }
}

fn edges(bins: usize) -> Vec<f64> {
    (0..=bins).map(|b| b as f64 / bins as f64).collect()
}

fn bin_index(edges: &[f64], s: f64) -> usize {
    let bins = edges.len() - 1;
    let mut b = ((s * bins as f64).floor().max(0.0) as usize).min(bins - 1);
    while b > 0 && s < edges[b] {
        b -= 1;
    }
    while b + 1 < bins && s >= edges[b + 1] {
        b += 1;
    }
    b
}

fn check_scores(scores: &[f64], what: &str) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::EmptyInput(format!("{what} scores are empty")));
    }
    if let Some(s) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
        return Err(Error::invalid(format!("{what} score {s} outside [0, 1]")));
    }
    Ok(())
}

fn check_bins(bins: usize) -> Result<()> {
    if bins < 2 {
        return Err(Error::invalid(format!("bin count {bins} < 2")));
    }
    Ok(())
}

pub fn build_histogram(scores: &[f64], bins: usize) -> Result<ScoreHistogram> {
    check_bins(bins)?;
    check_scores(scores, "histogram")?;
    let bin_edges = edges(bins);
    let mut counts = vec![0u64; bins];
    for &s in scores {
        counts[bin_index(&bin_edges, s)] += 1;
    }
    let total = scores.len() as f64;
    let mut acc = 0u64;
    let cdf = counts
        .iter()
        .map(|&c| {
            acc += c;
            acc as f64 / total
        })
        .collect();
    Ok(ScoreHistogram {
        bin_edges,
        counts,
        cdf,
    })
}

/// Map `source` so its distribution matches `reference`.
///
/// Each value goes to `G^-1(F(x))`, where `F` is the empirical CDF of the
/// source and `G^-1` is [`ScoreHistogram::quantile`] of the reference
/// histogram. Equal inputs give equal outputs.
pub fn histogram_specify(source: &[f64], reference: &[f64], bins: usize) -> Result<Vec<f64>> {
    check_bins(bins)?;
    check_scores(source, "source")?;
    let target = build_histogram(reference, bins)?;
    let mut sorted = source.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    Ok(source
        .iter()
        .map(|&x| {
            let rank = sorted.partition_point(|&v| v <= x);
            target.quantile(rank as f64 / n)
        })
        .collect())
}

/// Two-sample Kolmogorov–Smirnov statistic.
pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}
