//! Per-group maps `T` from a group's feature domain into the canonical
//! population domain.
//!
//! A new vector is located among the group's training vectors with a k-d
//! tree; its nearest neighbours vote with inverse-distance weights, and the
//! output is the same weighted combination of the neighbours' corresponding
//! population vectors.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binio::{BinReader, BinWriter, MAX_LEN};
use crate::correspondence::CorrespondenceTable;
use crate::data::{Dataset, GroupId};
use crate::error::{Error, Result};
use crate::kdtree::{KdTree, Node};
use crate::matrix::Matrix;

/// Neighbour count used to interpolate the mapping.
pub const DEFAULT_NEIGHBOR_COUNT: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonicalMapping {
    group_id: GroupId,
    tree: KdTree,
    correspondences: CorrespondenceTable,
    population_features: Matrix,
    neighbor_count: usize,
}

impl CanonicalMapping {
    /// `group_features` are the group's training vectors, in the row order
    /// used by `correspondences`.
    pub fn new(
        group_id: GroupId,
        group_features: Matrix,
        correspondences: CorrespondenceTable,
        population_features: Matrix,
        neighbor_count: usize,
    ) -> Result<Self> {
        let tree = KdTree::build(group_features)?;
        Self::from_parts(group_id, tree, correspondences, population_features, neighbor_count)
    }

    fn from_parts(
        group_id: GroupId,
        tree: KdTree,
        correspondences: CorrespondenceTable,
        population_features: Matrix,
        neighbor_count: usize,
    ) -> Result<Self> {
        let n = tree.len();
        if correspondences.len() != n {
            return Err(Error::invalid(format!(
                "{} correspondences for {n} group points",
                correspondences.len()
            )));
        }
        if correspondences.group_id != group_id {
            return Err(Error::invalid("correspondence table belongs to another group"));
        }
        if population_features.cols() != tree.dim() {
            return Err(Error::DimensionMismatch {
                expected: tree.dim(),
                actual: population_features.cols(),
            });
        }
        for (pos, &(g, p)) in correspondences.pairs.iter().enumerate() {
            if g != pos || p >= population_features.rows() {
                return Err(Error::invalid(format!("malformed correspondence {pos}: ({g}, {p})")));
            }
        }
        if neighbor_count == 0 || neighbor_count > n {
            return Err(Error::invalid(format!(
                "neighbour count {neighbor_count} outside 1..={n}"
            )));
        }
        Ok(Self {
            group_id,
            tree,
            correspondences,
            population_features,
            neighbor_count,
        })
    }

    pub fn group_id(&self) -> GroupId {
        self.group_id
    }

    pub fn neighbor_count(&self) -> usize {
        self.neighbor_count
    }

    pub fn tree(&self) -> &KdTree {
        &self.tree
    }

    pub fn correspondences(&self) -> &CorrespondenceTable {
        &self.correspondences
    }

    pub fn population_features(&self) -> &Matrix {
        &self.population_features
    }

    /// Inverse-distance weights over the nearest group training points. An
    /// exact match takes all the weight (lowest index first).
    pub fn weights(&self, f_new: &[f64]) -> Result<(Vec<usize>, Vec<f64>)> {
        if !f_new.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("feature vector must be finite"));
        }
        let nb = self.tree.knn(f_new, self.neighbor_count)?;
        if nb.distances[0] == 0.0 {
            let mut w = vec![0.0; nb.indices.len()];
            w[0] = 1.0;
            return Ok((nb.indices, w));
        }
        let inv: Vec<f64> = nb.distances.iter().map(|d| 1.0 / d).collect();
        let total: f64 = inv.iter().sum();
        Ok((nb.indices, inv.into_iter().map(|v| v / total).collect()))
    }

    /// `T(f_new)`: the weighted combination of corresponding population
    /// vectors.
    pub fn map_to_canonical(&self, f_new: &[f64]) -> Result<Vec<f64>> {
        let (indices, weights) = self.weights(f_new)?;
        let mut out = vec![0.0; self.tree.dim()];
        for (&n, &w) in indices.iter().zip(&weights) {
            if w == 0.0 {
                continue;
            }
            let p = self
                .population_features
                .row(self.correspondences.population_index(n));
            for (o, v) in out.iter_mut().zip(p) {
                *o += w * v;
            }
        }
        Ok(out)
    }

    /// Map every row of a test set drawn from this mapping's group. Labels,
    /// groups and row ids pass through.
    pub fn map_dataset(&self, group_test: &Dataset) -> Result<Dataset> {
        if let Some(&g) = group_test.groups().iter().find(|&&g| g != self.group_id) {
            return Err(Error::invalid(format!(
                "row from group {g} passed to the mapping of group {}",
                self.group_id
            )));
        }
        let x = group_test.features();
        if x.cols() != self.tree.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.tree.dim(),
                actual: x.cols(),
            });
        }
        let rows: Vec<Vec<f64>> = (0..x.rows())
            .into_par_iter()
            .map(|i| self.map_to_canonical(x.row(i)))
            .collect::<Result<_>>()?;
        let mapped = if rows.is_empty() {
            Matrix::empty(x.cols())
        } else {
            Matrix::from_rows(&rows)?
        };
        group_test.with_features(mapped, group_test.columns().to_vec())
    }
}

const MAGIC: &[u8; 4] = b"FMKD";
const VERSION: u8 = 1;

/// Write mappings as `b"FMKD"`, version, `u64` count, then per mapping: group
/// id, neighbour count, leaf size, the tree points, permutation and nodes,
/// the correspondence pairs and matched scores, and the population feature
/// block. Little-endian `u64` / `f64` throughout.
pub fn write_mappings<W: Write>(out: W, mappings: &[CanonicalMapping]) -> std::io::Result<()> {
    let mut w = BinWriter::new(out);
    w.bytes(MAGIC)?;
    w.u8(VERSION)?;
    w.usize(mappings.len())?;
    for m in mappings {
        w.usize(m.group_id)?;
        w.usize(m.neighbor_count)?;
        w.usize(m.tree.leaf_size())?;
        write_matrix(&mut w, m.tree.points())?;
        for &p in m.tree.perm() {
            w.usize(p)?;
        }
        w.usize(m.tree.nodes().len())?;
        for node in m.tree.nodes() {
            match *node {
                Node::Leaf { start, end } => {
                    w.u8(0)?;
                    w.usize(start)?;
                    w.usize(end)?;
                }
                Node::Split {
                    axis,
                    value,
                    left,
                    right,
                } => {
                    w.u8(1)?;
                    w.usize(axis)?;
                    w.f64(value)?;
                    w.usize(left)?;
                    w.usize(right)?;
                }
            }
        }
        w.usize(m.correspondences.pairs.len())?;
        for &(g, p) in &m.correspondences.pairs {
            w.usize(g)?;
            w.usize(p)?;
        }
        w.f64s(&m.correspondences.matched_scores)?;
        write_matrix(&mut w, &m.population_features)?;
    }
    w.into_inner().flush()
}

fn write_matrix<W: Write>(w: &mut BinWriter<W>, m: &Matrix) -> std::io::Result<()> {
    w.usize(m.rows())?;
    w.usize(m.cols())?;
    w.f64s(m.as_slice())
}

fn read_matrix<R: Read>(r: &mut BinReader<R>) -> Result<Matrix> {
    let rows = r.len(MAX_LEN)?;
    let cols = r.len(MAX_LEN)?;
    let data = r.f64s(rows * cols)?;
    Matrix::from_vec(rows, cols, data)
}

pub fn read_mappings<R: Read>(input: R) -> Result<Vec<CanonicalMapping>> {
    let mut r = BinReader::new(input, "mapping");
    r.expect_magic(MAGIC, VERSION)?;
    let count = r.len(1 << 20)?;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let group_id = r.len(MAX_LEN)?;
        let neighbor_count = r.len(MAX_LEN)?;
        let leaf_size = r.len(MAX_LEN)?;
        let points = read_matrix(&mut r)?;
        let perm = (0..points.rows())
            .map(|_| r.len(MAX_LEN))
            .collect::<Result<Vec<_>>>()?;
        let n_nodes = r.len(MAX_LEN)?;
        let mut nodes = Vec::with_capacity(n_nodes.min(1 << 20));
        for _ in 0..n_nodes {
            nodes.push(match r.u8()? {
                0 => Node::Leaf {
                    start: r.len(MAX_LEN)?,
                    end: r.len(MAX_LEN)?,
                },
                1 => Node::Split {
                    axis: r.len(MAX_LEN)?,
                    value: r.f64()?,
                    left: r.len(MAX_LEN)?,
                    right: r.len(MAX_LEN)?,
                },
                t => return Err(r.format_err(format!("node tag {t}"))),
            });
        }
        let n_pairs = r.len(MAX_LEN)?;
        let mut pairs = Vec::with_capacity(n_pairs.min(1 << 20));
        for _ in 0..n_pairs {
            pairs.push((r.len(MAX_LEN)?, r.len(MAX_LEN)?));
        }
        let matched_scores = r.f64s(n_pairs)?;
        let population_features = read_matrix(&mut r)?;
        let tree = KdTree::from_parts(points, perm, nodes, leaf_size)?;
        out.push(CanonicalMapping::from_parts(
            group_id,
            tree,
            CorrespondenceTable {
                group_id,
                pairs,
                matched_scores,
            },
            population_features,
            neighbor_count,
        )?);
    }
    r.expect_eof()?;
    Ok(out)
}
