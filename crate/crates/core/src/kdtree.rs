//! Exact k-nearest-neighbour search with a k-d tree.
//!
//! Nodes split on the axis of maximum spread at the median point; buckets of
//! at most [`DEFAULT_LEAF_SIZE`] points form the leaves. Queries are exact:
//! results equal a linear scan ordered by (distance, point index).

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{squared_distance, Matrix};

pub const DEFAULT_LEAF_SIZE: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Node {
    /// Points `perm[start..end]`.
    Leaf { start: usize, end: usize },
    /// Left subtree holds coordinates `<= value`, right `>= value`.
    Split {
        axis: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KdTree {
    points: Matrix,
    perm: Vec<usize>,
    nodes: Vec<Node>,
    leaf_size: usize,
}

/// Neighbours sorted by ascending distance, then ascending index.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighbors {
    pub indices: Vec<usize>,
    pub distances: Vec<f64>,
}

#[derive(Clone, Copy, PartialEq)]
struct Candidate {
    dist2: f64,
    index: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist2
            .total_cmp(&other.dist2)
            .then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl KdTree {
    pub fn build(points: Matrix) -> Result<Self> {
        Self::with_leaf_size(points, DEFAULT_LEAF_SIZE)
    }

    pub fn with_leaf_size(points: Matrix, leaf_size: usize) -> Result<Self> {
        if points.rows() == 0 {
            return Err(Error::EmptyInput("k-d tree needs at least one point".into()));
        }
        if leaf_size == 0 {
            return Err(Error::invalid("leaf size must be positive"));
        }
        if !points.all_finite() {
            return Err(Error::invalid("k-d tree points must be finite"));
        }
        let mut tree = Self {
            perm: (0..points.rows()).collect(),
            points,
            nodes: Vec::new(),
            leaf_size,
        };
        tree.build_node(0, tree.points.rows());
        Ok(tree)
    }

    /// Reassemble a tree from stored parts, checking structural invariants.
    pub(crate) fn from_parts(
        points: Matrix,
        perm: Vec<usize>,
        nodes: Vec<Node>,
        leaf_size: usize,
    ) -> Result<Self> {
        let bad = |m: &str| Error::Format {
            kind: "k-d tree",
            message: m.to_string(),
        };
        if perm.len() != points.rows() || nodes.is_empty() {
            return Err(bad("size mismatch"));
        }
        let mut seen = vec![false; perm.len()];
        for &p in &perm {
            if p >= seen.len() || std::mem::replace(&mut seen[p], true) {
                return Err(bad("permutation is not a bijection"));
            }
        }
        for node in &nodes {
            match *node {
                Node::Leaf { start, end } if start > end || end > perm.len() => {
                    return Err(bad("leaf range out of bounds"))
                }
                Node::Split {
                    axis, left, right, ..
                } if axis >= points.cols() || left >= nodes.len() || right >= nodes.len() => {
                    return Err(bad("split node out of bounds"))
                }
                _ => {}
            }
        }
        Ok(Self {
            points,
            perm,
            nodes,
            leaf_size,
        })
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { start, end });
        if end - start <= self.leaf_size {
            return id;
        }
        let dim = self.points.cols();
        let (mut axis, mut spread) = (0, -1.0);
        for a in 0..dim {
            let (lo, hi) = self.perm[start..end]
                .iter()
                .map(|&i| self.points.get(i, a))
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                    (lo.min(v), hi.max(v))
                });
            if hi - lo > spread {
                spread = hi - lo;
                axis = a;
            }
        }
        if spread <= 0.0 {
            // All points identical.
            return id;
        }
        let mid = (end - start) / 2;
        let points = &self.points;
        self.perm[start..end].select_nth_unstable_by(mid, |&a, &b| {
            points
                .get(a, axis)
                .total_cmp(&points.get(b, axis))
                .then(a.cmp(&b))
        });
        let value = self.points.get(self.perm[start + mid], axis);
        let left = self.build_node(start, start + mid);
        let right = self.build_node(start + mid, end);
        self.nodes[id] = Node::Split {
            axis,
            value,
            left,
            right,
        };
        id
    }

    pub fn len(&self) -> usize {
        self.points.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.cols()
    }

    pub fn points(&self) -> &Matrix {
        &self.points
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub(crate) fn perm(&self) -> &[usize] {
        &self.perm
    }

    pub fn leaf_size(&self) -> usize {
        self.leaf_size
    }

    /// Number of nodes on the longest root-to-leaf path.
    pub fn height(&self) -> usize {
        fn go(nodes: &[Node], id: usize) -> usize {
            match nodes[id] {
                Node::Leaf { .. } => 1,
                Node::Split { left, right, .. } => 1 + go(nodes, left).max(go(nodes, right)),
            }
        }
        go(&self.nodes, 0)
    }

    /// Point indices in leaf order; each index appears exactly once.
    pub fn leaf_points(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.len());
        let mut stack = vec![0];
        while let Some(id) = stack.pop() {
            match self.nodes[id] {
                Node::Leaf { start, end } => out.extend_from_slice(&self.perm[start..end]),
                Node::Split { left, right, .. } => {
                    stack.push(right);
                    stack.push(left);
                }
            }
        }
        out
    }

    /// The `k` nearest stored points to `query` by Euclidean distance.
    pub fn knn(&self, query: &[f64], k: usize) -> Result<Neighbors> {
        if query.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: query.len(),
            });
        }
        if k == 0 || k > self.len() {
            return Err(Error::invalid(format!(
                "neighbour count {k} outside 1..={}",
                self.len()
            )));
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.search(0, query, k, &mut heap);
        let mut found = heap.into_sorted_vec();
        found.truncate(k);
        Ok(Neighbors {
            indices: found.iter().map(|c| c.index).collect(),
            distances: found.iter().map(|c| c.dist2.sqrt()).collect(),
        })
    }

    fn search(&self, id: usize, query: &[f64], k: usize, heap: &mut BinaryHeap<Candidate>) {
        match self.nodes[id] {
            Node::Leaf { start, end } => {
                for &index in &self.perm[start..end] {
                    let c = Candidate {
                        dist2: squared_distance(self.points.row(index), query),
                        index,
                    };
                    if heap.len() < k {
                        heap.push(c);
                    } else if c < *heap.peek().expect("heap is full") {
                        heap.pop();
                        heap.push(c);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = query[axis] - value;
                let (near, far) = if diff < 0.0 {
                    (left, right)
                } else {
                    (right, left)
                };
                self.search(near, query, k, heap);
                // `<=` keeps equidistant points with lower indices reachable.
                if heap.len() < k || diff * diff <= heap.peek().expect("heap is full").dist2 {
                    self.search(far, query, k, heap);
                }
            }
        }
    }
}
