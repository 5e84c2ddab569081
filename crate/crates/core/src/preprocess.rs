//! The full pre-processing pipeline fitted on training data: histogram
//! specification of each group's scores onto the population's, score-based
//! feature correspondences, and per-group canonical mappings.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::correspondence::build_correspondences;
use crate::data::{partition_groups, Dataset, GroupId};
use crate::error::{Error, Result};
use crate::histogram::{histogram_specify, DEFAULT_BINS};
use crate::mapping::{read_mappings, write_mappings, CanonicalMapping, DEFAULT_NEIGHBOR_COUNT};
use crate::matrix::Matrix;
use crate::scoring::ScoringModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub histogram_bins: usize,
    /// Capped at each group's training size.
    pub neighbor_count: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            histogram_bins: DEFAULT_BINS,
            neighbor_count: DEFAULT_NEIGHBOR_COUNT,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Preprocessor {
    mappings: Vec<CanonicalMapping>,
}

impl Preprocessor {
    /// Fit one mapping per training group from the baseline model's training
    /// scores. Nothing here looks at test data.
    pub fn fit(model: &ScoringModel, train: &Dataset, config: &PreprocessConfig) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::EmptyInput("training set is empty".into()));
        }
        if config.neighbor_count == 0 {
            return Err(Error::invalid("neighbour count must be positive"));
        }
        let population = model.score(train.features())?;
        let mut mappings = Vec::new();
        for part in partition_groups(train) {
            let g = part.groups()[0];
            let scores = model.score(part.features())?;
            let matched = histogram_specify(&scores, &population, config.histogram_bins)?;
            let corr = build_correspondences(g, &matched, &population)?;
            let k = config.neighbor_count.min(part.len());
            mappings.push(CanonicalMapping::new(
                g,
                part.features().clone(),
                corr,
                train.features().clone(),
                k,
            )?);
        }
        Ok(Self { mappings })
    }

    pub fn from_mappings(mut mappings: Vec<CanonicalMapping>) -> Result<Self> {
        mappings.sort_by_key(|m| m.group_id());
        if mappings.windows(2).any(|w| w[0].group_id() == w[1].group_id()) {
            return Err(Error::invalid("two mappings for the same group"));
        }
        Ok(Self { mappings })
    }

    pub fn mappings(&self) -> &[CanonicalMapping] {
        &self.mappings
    }

    pub fn mapping(&self, group: GroupId) -> Option<&CanonicalMapping> {
        self.mappings.iter().find(|m| m.group_id() == group)
    }

    /// Map every row through its group's mapping, keeping row order, labels
    /// and groups.
    pub fn transform(&self, data: &Dataset) -> Result<Dataset> {
        let x = data.features();
        let rows: Vec<Vec<f64>> = (0..data.len())
            .into_par_iter()
            .map(|i| {
                let g = data.groups()[i];
                self.mapping(g)
                    .ok_or_else(|| Error::invalid(format!("no mapping fitted for group {g}")))?
                    .map_to_canonical(x.row(i))
            })
            .collect::<Result<_>>()?;
        let mapped = if rows.is_empty() {
            Matrix::empty(x.cols())
        } else {
            Matrix::from_rows(&rows)?
        };
        data.with_features(mapped, data.columns().to_vec())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        write_mappings(&mut out, &self.mappings).map_err(|e| Error::io(path, e))?;
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_mappings(read_mappings(BufReader::new(file))?)
    }
}
