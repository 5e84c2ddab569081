use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{ColumnKind, Dataset, FeatureColumn};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum ColumnPlan {
    /// `(x - mean) / std`; a constant column only gets centred.
    Standardize { name: String, mean: f64, std: f64 },
    OneHot { name: String, levels: Vec<String> },
}

/// Column encoding fitted on training data and frozen for later use.
///
/// Numeric columns are standardized with population statistics; categorical
/// and binary columns expand to one indicator per observed category. A test
/// category that was never seen in training encodes as an all-zeros block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    plans: Vec<ColumnPlan>,
}

impl Encoder {
    pub fn fit(train: &Dataset) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::EmptyInput("cannot fit encoder on zero rows".into()));
        }
        let x = train.features();
        let n = x.rows() as f64;
        let mut plans = Vec::with_capacity(train.columns().len());
        for (j, col) in train.columns().iter().enumerate() {
            let plan = match col {
                FeatureColumn::Categorical { name, kind, levels } => {
                    let mut seen = vec![false; levels.len()];
                    for i in 0..x.rows() {
                        seen[x.get(i, j) as usize] = true;
                    }
                    let observed: Vec<String> = levels
                        .iter()
                        .zip(&seen)
                        .filter_map(|(l, &s)| s.then(|| l.clone()))
                        .collect();
                    if observed.len() < 2 {
                        return Err(Error::Schema(format!(
                            "column '{name}' has {} observed categories, need at least 2",
                            observed.len()
                        )));
                    }
                    if *kind == ColumnKind::Binary && observed.len() > 2 {
                        return Err(Error::Schema(format!(
                            "binary column '{name}' has {} categories",
                            observed.len()
                        )));
                    }
                    ColumnPlan::OneHot {
                        name: name.clone(),
                        levels: observed,
                    }
                }
                other => {
                    let mean = (0..x.rows()).map(|i| x.get(i, j)).sum::<f64>() / n;
                    let var = (0..x.rows())
                        .map(|i| (x.get(i, j) - mean).powi(2))
                        .sum::<f64>()
                        / n;
                    let std = var.sqrt();
                    ColumnPlan::Standardize {
                        name: other.name(),
                        mean,
                        std: if std > 0.0 { std } else { 1.0 },
                    }
                }
            };
            plans.push(plan);
        }
        Ok(Self { plans })
    }

    /// Encoded feature width.
    pub fn width(&self) -> usize {
        self.plans
            .iter()
            .map(|p| match p {
                ColumnPlan::Standardize { .. } => 1,
                ColumnPlan::OneHot { levels, .. } => levels.len(),
            })
            .sum()
    }

    pub fn output_columns(&self) -> Vec<FeatureColumn> {
        let mut out = Vec::with_capacity(self.width());
        for p in &self.plans {
            match p {
                ColumnPlan::Standardize { name, .. } => {
                    out.push(FeatureColumn::Numeric { name: name.clone() })
                }
                ColumnPlan::OneHot { name, levels } => {
                    out.extend(levels.iter().map(|l| FeatureColumn::Indicator {
                        source: name.clone(),
                        level: l.clone(),
                    }))
                }
            }
        }
        out
    }

    pub fn transform(&self, data: &Dataset) -> Result<Dataset> {
        if data.columns().len() != self.plans.len() {
            return Err(Error::DimensionMismatch {
                expected: self.plans.len(),
                actual: data.columns().len(),
            });
        }
        // For each one-hot column: data-local category index -> output offset.
        let mut remaps: Vec<Option<Vec<Option<usize>>>> = Vec::with_capacity(self.plans.len());
        for (plan, col) in self.plans.iter().zip(data.columns()) {
            match (plan, col) {
                (ColumnPlan::OneHot { name, levels }, FeatureColumn::Categorical { name: cn, levels: local, .. })
                    if name == cn =>
                {
                    let pos: HashMap<&str, usize> =
                        levels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
                    remaps.push(Some(local.iter().map(|l| pos.get(l.as_str()).copied()).collect()));
                }
                (ColumnPlan::Standardize { name, .. }, c)
                    if !matches!(c, FeatureColumn::Categorical { .. }) && *name == c.name() =>
                {
                    remaps.push(None)
                }
                (plan, c) => {
                    return Err(Error::Schema(format!(
                        "column '{}' does not match the fitted encoding {:?}",
                        c.name(),
                        plan_name(plan)
                    )))
                }
            }
        }

        let x = data.features();
        let width = self.width();
        let mut out = Matrix::zeros(x.rows(), width);
        let mut unseen = 0usize;
        for i in 0..x.rows() {
            let row = out.row_mut(i);
            let mut offset = 0;
            for (j, (plan, remap)) in self.plans.iter().zip(&remaps).enumerate() {
                let v = x.get(i, j);
                match plan {
                    ColumnPlan::Standardize { mean, std, .. } => {
                        row[offset] = (v - mean) / std;
                        offset += 1;
                    }
                    ColumnPlan::OneHot { levels, .. } => {
                        let remap = remap.as_ref().expect("one-hot remap");
                        match remap[v as usize] {
                            Some(k) => row[offset + k] = 1.0,
                            None => unseen += 1,
                        }
                        offset += levels.len();
                    }
                }
            }
        }
        if unseen > 0 {
            log::warn!("{unseen} categorical values unseen at fit time encoded as all zeros");
        }
        data.with_features(out, self.output_columns())
    }
}

fn plan_name(plan: &ColumnPlan) -> &str {
    match plan {
        ColumnPlan::Standardize { name, .. } | ColumnPlan::OneHot { name, .. } => name,
    }
}

/// Fit an encoder on `dataset` and apply it to the same rows.
pub fn encode_features(dataset: &Dataset) -> Result<Dataset> {
    Encoder::fit(dataset)?.transform(dataset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{read_table, ColumnSpec, FeatureSchema};

    fn schema() -> FeatureSchema {
        FeatureSchema::new(
            vec![
                ColumnSpec::new("x", ColumnKind::Numeric),
                ColumnSpec::new("c", ColumnKind::Categorical),
            ],
            "g",
            "y",
        )
        .unwrap()
    }

    #[test]
    fn one_hot_and_standardize() {
        let csv = "x,c,g,y\n1,a,A,0\n2,b,B,1\n3,c,A,1\n";
        let (ds, _) = read_table(csv.as_bytes(), &schema()).unwrap();
        let enc = encode_features(&ds).unwrap();
        assert_eq!(enc.feature_dim(), 1 + 3);
        // Population sigma of {1,2,3} is sqrt(2/3).
        let z = 1.0 / (2.0f64 / 3.0).sqrt();
        let expected = [[-z, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [z, 0.0, 0.0, 1.0]];
        for (i, e) in expected.iter().enumerate() {
            for (a, b) in enc.features().row(i).iter().zip(e) {
                assert!((a - b).abs() < 1e-12, "row {i}: {a} vs {b}");
            }
        }
        assert!((z - 1.224744871391589).abs() < 1e-12);
    }

    #[test]
    fn unseen_test_category_is_all_zeros() {
        let (train, _) = read_table("x,c,g,y\n1,a,A,0\n2,b,B,1\n".as_bytes(), &schema()).unwrap();
        let (test, _) = read_table("x,c,g,y\n1,z,A,0\n2,a,B,1\n".as_bytes(), &schema()).unwrap();
        let encoder = Encoder::fit(&train).unwrap();
        let out = encoder.transform(&test).unwrap();
        assert_eq!(&out.features().row(0)[1..], &[0.0, 0.0]);
        assert_eq!(&out.features().row(1)[1..], &[1.0, 0.0]);
    }

    #[test]
    fn single_category_rejected() {
        let (ds, _) = read_table("x,c,g,y\n1,a,A,0\n2,a,B,1\n".as_bytes(), &schema()).unwrap();
        assert!(matches!(Encoder::fit(&ds), Err(Error::Schema(_))));
    }

    #[test]
    fn numeric_only_keeps_width_and_is_idempotent() {
        let m = Matrix::from_rows(&[[1.0, 10.0], [2.0, 30.0], [4.0, 20.0]]).unwrap();
        let ds = Dataset::from_numeric(m, vec![0, 1, 0], vec![1, 1, 2]).unwrap();
        let once = encode_features(&ds).unwrap();
        let twice = encode_features(&once).unwrap();
        assert_eq!(once.feature_dim(), 2);
        for (a, b) in once.features().as_slice().iter().zip(twice.features().as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
