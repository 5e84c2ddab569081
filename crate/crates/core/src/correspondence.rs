//! Feature correspondences: each group training row is paired with the
//! population training row whose baseline score is nearest to the group
//! row's matched score. Ties go to the lowest population index.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::data::GroupId;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrespondenceTable {
    pub group_id: GroupId,
    /// `(group_row_index, population_row_index)`, one entry per group row in
    /// group row order.
    pub pairs: Vec<(usize, usize)>,
    pub matched_scores: Vec<f64>,
}

impl CorrespondenceTable {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Population row corresponding to group row `n`.
    pub fn population_index(&self, n: usize) -> usize {
        self.pairs[n].1
    }
}

pub fn build_correspondences(
    group_id: GroupId,
    matched_group_scores: &[f64],
    population_scores: &[f64],
) -> Result<CorrespondenceTable> {
    Ok(build_counted(group_id, matched_group_scores, population_scores)?.0)
}

/// Also returns the number of score comparisons performed, excluding the
/// sort.
pub(crate) fn build_counted(
    group_id: GroupId,
    matched: &[f64],
    population: &[f64],
) -> Result<(CorrespondenceTable, usize)> {
    if matched.is_empty() || population.is_empty() {
        return Err(Error::EmptyInput("correspondence inputs are empty".into()));
    }
    if let Some(v) = matched.iter().chain(population).find(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("non-finite score {v}")));
    }
    let mut sorted: Vec<(f64, usize)> = population.iter().copied().zip(0..).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut comparisons = 0usize;
    let pairs = matched
        .iter()
        .enumerate()
        .map(|(n, &a)| {
            let split = sorted.partition_point(|&(v, _)| {
                comparisons += 1;
                v < a
            });
            // Nearest candidates sit either side of `split`. Rounding can make
            // distinct values equidistant, so each side collects every entry
            // at its best distance and keeps the lowest index.
            let mut best: Option<(f64, usize)> = None;
            let mut offer = |d: f64, idx: usize| {
                best = match best {
                    None => Some((d, idx)),
                    Some((bd, bi)) => match d.partial_cmp(&bd).unwrap_or(Ordering::Equal) {
                        Ordering::Less => Some((d, idx)),
                        Ordering::Equal => Some((bd, bi.min(idx))),
                        Ordering::Greater => Some((bd, bi)),
                    },
                };
            };
            if split > 0 {
                let d0 = (a - sorted[split - 1].0).abs();
                let mut i = split;
                while i > 0 && (a - sorted[i - 1].0).abs() == d0 {
                    comparisons += 1;
                    offer(d0, sorted[i - 1].1);
                    i -= 1;
                }
            }
            if split < sorted.len() {
                let d0 = (a - sorted[split].0).abs();
                let mut i = split;
                while i < sorted.len() && (a - sorted[i].0).abs() == d0 {
                    comparisons += 1;
                    offer(d0, sorted[i].1);
                    i += 1;
                }
            }
            (n, best.expect("population is nonempty").1)
        })
        .collect();
    Ok((
        CorrespondenceTable {
            group_id,
            pairs,
            matched_scores: matched.to_vec(),
        },
        comparisons,
    ))
}
