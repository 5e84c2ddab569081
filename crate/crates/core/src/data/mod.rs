//! Tabular ingestion: CSV loading, one-hot encoding, seeded splits and
//! partitioning by sensitive group.
//!
//! Group ids are dense integers `1..=G` assigned in order of first
//! appearance (or by the schema's explicit `groups` list).

mod cache;
mod encode;
mod schema;

use std::collections::HashMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub use cache::{cache_key, load_table_cached, read_dataset, write_dataset};
pub use encode::{encode_features, Encoder};
pub use schema::{ColumnKind, ColumnSpec, FeatureSchema};

/// Group identifier, `1..=G`.
pub type GroupId = usize;

/// Layout of one column of a [`Dataset`]'s feature matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FeatureColumn {
    Numeric { name: String },
    /// Holds category indices into `levels` until encoded.
    Categorical {
        name: String,
        kind: ColumnKind,
        levels: Vec<String>,
    },
    /// One indicator of an encoded categorical column.
    Indicator { source: String, level: String },
}

impl FeatureColumn {
    pub fn name(&self) -> String {
        match self {
            FeatureColumn::Numeric { name } | FeatureColumn::Categorical { name, .. } => {
                name.clone()
            }
            FeatureColumn::Indicator { source, level } => format!("{source}={level}"),
        }
    }
}

/// Feature matrix with labels and group ids for `N` individuals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    features: Matrix,
    labels: Vec<u8>,
    groups: Vec<GroupId>,
    columns: Vec<FeatureColumn>,
    group_names: Vec<String>,
    row_ids: Vec<usize>,
    schema: FeatureSchema,
}

impl Dataset {
    /// Assemble a dataset; `row_ids` default to `0..N`.
    pub fn new(
        features: Matrix,
        labels: Vec<u8>,
        groups: Vec<GroupId>,
        columns: Vec<FeatureColumn>,
        group_names: Vec<String>,
        schema: FeatureSchema,
    ) -> Result<Self> {
        let row_ids = (0..features.rows()).collect();
        Self::with_row_ids(features, labels, groups, columns, group_names, schema, row_ids)
    }

    pub(crate) fn with_row_ids(
        features: Matrix,
        labels: Vec<u8>,
        groups: Vec<GroupId>,
        columns: Vec<FeatureColumn>,
        group_names: Vec<String>,
        schema: FeatureSchema,
        row_ids: Vec<usize>,
    ) -> Result<Self> {
        let n = features.rows();
        for (what, len) in [
            ("labels", labels.len()),
            ("groups", groups.len()),
            ("row ids", row_ids.len()),
        ] {
            if len != n {
                return Err(Error::invalid(format!(
                    "{what} has {len} entries but features have {n} rows"
                )));
            }
        }
        if columns.len() != features.cols() {
            return Err(Error::DimensionMismatch {
                expected: features.cols(),
                actual: columns.len(),
            });
        }
        if !features.all_finite() {
            return Err(Error::invalid("feature matrix has non-finite entries"));
        }
        if let Some(&y) = labels.iter().find(|&&y| y > 1) {
            return Err(Error::invalid(format!("label {y} is not 0 or 1")));
        }
        if let Some(&g) = groups
            .iter()
            .find(|&&g| g == 0 || g > group_names.len())
        {
            return Err(Error::invalid(format!(
                "group id {g} outside 1..={}",
                group_names.len()
            )));
        }
        Ok(Self {
            features,
            labels,
            groups,
            columns,
            group_names,
            row_ids,
            schema,
        })
    }

    /// Numeric dataset with generated column names `x0..`, e.g. for tests
    /// and synthetic data.
    pub fn from_numeric(features: Matrix, labels: Vec<u8>, groups: Vec<GroupId>) -> Result<Self> {
        let names: Vec<String> = (0..features.cols()).map(|j| format!("x{j}")).collect();
        let n_groups = groups.iter().copied().max().unwrap_or(0);
        let group_names = (1..=n_groups).map(|g| g.to_string()).collect();
        let schema = FeatureSchema::all_numeric(names.clone(), "group", "label")?;
        let columns = names
            .into_iter()
            .map(|name| FeatureColumn::Numeric { name })
            .collect();
        Self::new(features, labels, groups, columns, group_names, schema)
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn groups(&self) -> &[GroupId] {
        &self.groups
    }

    pub fn columns(&self) -> &[FeatureColumn] {
        &self.columns
    }

    pub fn group_names(&self) -> &[String] {
        &self.group_names
    }

    pub fn group_count(&self) -> usize {
        self.group_names.len()
    }

    /// Row indices into the source table this dataset was derived from.
    pub fn row_ids(&self) -> &[usize] {
        &self.row_ids
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn has_both_classes(&self) -> bool {
        self.labels.contains(&0) && self.labels.contains(&1)
    }

    /// Rows at `indices`, in that order. Row ids are carried over.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            groups: indices.iter().map(|&i| self.groups[i]).collect(),
            columns: self.columns.clone(),
            group_names: self.group_names.clone(),
            row_ids: indices.iter().map(|&i| self.row_ids[i]).collect(),
            schema: self.schema.clone(),
        }
    }

    /// Same rows with a replaced feature matrix (row count must match).
    pub fn with_features(&self, features: Matrix, columns: Vec<FeatureColumn>) -> Result<Self> {
        Self::with_row_ids(
            features,
            self.labels.clone(),
            self.groups.clone(),
            columns,
            self.group_names.clone(),
            self.schema.clone(),
            self.row_ids.clone(),
        )
    }

    /// Indices of rows belonging to `group`.
    pub fn group_indices(&self, group: GroupId) -> Vec<usize> {
        self.groups
            .iter()
            .enumerate()
            .filter_map(|(i, &g)| (g == group).then_some(i))
            .collect()
    }
}

/// Train/test pair sharing one schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitDataset {
    pub train: Dataset,
    pub test: Dataset,
    /// `None` when the split came from separate files.
    pub seed: Option<u64>,
}

/// Load a CSV table. Categorical columns hold category indices until
/// [`encode_features`] runs.
pub fn load_table(path: impl AsRef<Path>, schema: &FeatureSchema) -> Result<Dataset> {
    Ok(load_table_counted(path, schema)?.0)
}

/// Like [`load_table`], also returning how many rows were dropped because
/// their sensitive value is not in `schema.groups`.
pub fn load_table_counted(
    path: impl AsRef<Path>,
    schema: &FeatureSchema,
) -> Result<(Dataset, usize)> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_table(file, schema)
}

/// Parse CSV text from any reader.
pub fn read_table<R: std::io::Read>(reader: R, schema: &FeatureSchema) -> Result<(Dataset, usize)> {
    schema.validate()?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse {
            row: 0,
            message: e.to_string(),
        })?
        .clone();
    if headers.is_empty() {
        return Err(Error::EmptyInput("table has no header row".into()));
    }
    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("missing column '{name}'")))
    };
    let feature_pos: Vec<usize> = schema
        .columns
        .iter()
        .map(|c| find(&c.name))
        .collect::<Result<_>>()?;
    let sensitive_pos = find(&schema.sensitive_column)?;
    let label_pos = find(&schema.label_column)?;

    let mut group_names = schema.groups.clone();
    let fixed_groups = !group_names.is_empty();
    let mut group_lookup: HashMap<String, GroupId> = group_names
        .iter()
        .enumerate()
        .map(|(i, g)| (g.clone(), i + 1))
        .collect();
    let mut levels: Vec<Vec<String>> = vec![Vec::new(); schema.columns.len()];
    let mut level_lookup: Vec<HashMap<String, usize>> = vec![HashMap::new(); schema.columns.len()];

    let k = schema.columns.len();
    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut groups = Vec::new();
    let mut row_ids = Vec::new();
    let mut dropped = 0usize;

    for (i, record) in rdr.records().enumerate() {
        // 1-based data row number, header excluded.
        let row = i + 1;
        let record = record.map_err(|e| Error::Parse {
            row,
            message: e.to_string(),
        })?;
        let cell = |pos: usize| record.get(pos).unwrap_or("");

        let sensitive = cell(sensitive_pos);
        let group = match group_lookup.get(sensitive) {
            Some(&g) => g,
            None if fixed_groups => {
                dropped += 1;
                continue;
            }
            None => {
                group_names.push(sensitive.to_string());
                let g = group_names.len();
                group_lookup.insert(sensitive.to_string(), g);
                g
            }
        };

        let label = schema.parse_label(cell(label_pos)).ok_or_else(|| Error::Parse {
            row,
            message: format!(
                "label '{}' in column '{}' is not a valid binary label",
                cell(label_pos),
                schema.label_column
            ),
        })?;

        for (j, (spec, &pos)) in schema.columns.iter().zip(&feature_pos).enumerate() {
            let raw = cell(pos);
            let value = match spec.kind {
                ColumnKind::Numeric => {
                    let v: f64 = raw.parse().map_err(|_| Error::Parse {
                        row,
                        message: format!("column '{}': '{raw}' is not numeric", spec.name),
                    })?;
                    if !v.is_finite() {
                        return Err(Error::Parse {
                            row,
                            message: format!("column '{}': non-finite value", spec.name),
                        });
                    }
                    v
                }
                ColumnKind::Categorical | ColumnKind::Binary => {
                    let idx = *level_lookup[j].entry(raw.to_string()).or_insert_with(|| {
                        levels[j].push(raw.to_string());
                        levels[j].len() - 1
                    });
                    idx as f64
                }
            };
            data.push(value);
        }
        labels.push(label);
        groups.push(group);
        row_ids.push(i);
    }

    if labels.is_empty() {
        return Err(Error::EmptyInput("table has no data rows".into()));
    }
    if dropped > 0 {
        log::warn!("dropped {dropped} rows whose sensitive value is not a known group");
    }

    let columns = schema
        .columns
        .iter()
        .zip(levels)
        .map(|(spec, levels)| match spec.kind {
            ColumnKind::Numeric => FeatureColumn::Numeric {
                name: spec.name.clone(),
            },
            kind => FeatureColumn::Categorical {
                name: spec.name.clone(),
                kind,
                levels,
            },
        })
        .collect();
    let features = Matrix::from_vec(labels.len(), k, data)?;
    let ds = Dataset::with_row_ids(
        features,
        labels,
        groups,
        columns,
        group_names,
        schema.clone(),
        row_ids,
    )?;
    Ok((ds, dropped))
}

/// Load creator-provided train and test files. Test rows whose group was not
/// seen in training are dropped (and counted in the returned value).
pub fn load_pre_split(
    train_path: impl AsRef<Path>,
    test_path: impl AsRef<Path>,
    schema: &FeatureSchema,
) -> Result<(SplitDataset, usize)> {
    let (train, dropped_train) = load_table_counted(train_path, schema)?;
    let aligned = schema.clone().with_groups(train.group_names().to_vec());
    let (test, dropped_test) = load_table_counted(test_path, &aligned)?;
    Ok((
        SplitDataset {
            train,
            test,
            seed: None,
        },
        dropped_train + dropped_test,
    ))
}

/// Seeded uniform shuffle followed by a prefix split of
/// `floor(train_fraction * N)` training rows.
pub fn split_dataset(dataset: &Dataset, train_fraction: f64, seed: u64) -> Result<SplitDataset> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "train fraction {train_fraction} outside (0, 1)"
        )));
    }
    let n = dataset.len();
    if n < 2 {
        return Err(Error::invalid(format!("cannot split {n} rows")));
    }
    if !dataset.has_both_classes() {
        return Err(Error::invalid("dataset must contain both classes"));
    }
    let n_train = (train_fraction * n as f64).floor() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::invalid(format!(
            "fraction {train_fraction} of {n} rows leaves an empty side"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let (train_idx, test_idx) = order.split_at(n_train);
    Ok(SplitDataset {
        train: dataset.subset(train_idx),
        test: dataset.subset(test_idx),
        seed: Some(seed),
    })
}

/// One dataset per group id present, in ascending id order; rows keep their
/// original relative order and row ids.
pub fn partition_groups(dataset: &Dataset) -> Vec<Dataset> {
    (1..=dataset.group_count())
        .map(|g| dataset.group_indices(g))
        .filter(|idx| !idx.is_empty())
        .map(|idx| dataset.subset(&idx))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema_age_sex() -> FeatureSchema {
        FeatureSchema::new(
            vec![ColumnSpec::new("age", ColumnKind::Numeric)],
            "sex",
            "label",
        )
        .unwrap()
    }

    #[test]
    fn loads_three_rows() {
        let csv = "age,sex,label\n30,F,0\n40,M,1\n50,F,1\n";
        let (ds, dropped) = read_table(csv.as_bytes(), &schema_age_sex()).unwrap();
        assert_eq!(dropped, 0);
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.feature_dim(), 1);
        assert_eq!(ds.groups(), &[1, 2, 1]);
        assert_eq!(ds.group_names(), &["F".to_string(), "M".to_string()]);
        assert_eq!(ds.labels(), &[0, 1, 1]);
    }

    #[test]
    fn bad_label_names_row() {
        let csv = "age,sex,label\n30,F,0\n40,M,2\n";
        match read_table(csv.as_bytes(), &schema_age_sex()) {
            Err(Error::Parse { row, .. }) => assert_eq!(row, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn non_numeric_value_names_row() {
        let csv = "age,sex,label\n30,F,0\nold,M,1\n";
        match read_table(csv.as_bytes(), &schema_age_sex()) {
            Err(Error::Parse { row, message }) => {
                assert_eq!(row, 2);
                assert!(message.contains("age"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn missing_column_is_schema_error() {
        let csv = "age,gender,label\n30,F,0\n";
        assert!(matches!(
            read_table(csv.as_bytes(), &schema_age_sex()),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn empty_file() {
        assert!(matches!(
            read_table("".as_bytes(), &schema_age_sex()),
            Err(Error::EmptyInput(_))
        ));
        assert!(matches!(
            read_table("age,sex,label\n".as_bytes(), &schema_age_sex()),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn fixed_groups_drop_unknown_rows() {
        let schema = schema_age_sex().with_groups(vec!["M".into(), "F".into()]);
        let csv = "age,sex,label\n30,F,0\n40,X,1\n50,M,1\n";
        let (ds, dropped) = read_table(csv.as_bytes(), &schema).unwrap();
        assert_eq!(dropped, 1);
        assert_eq!(ds.groups(), &[2, 1]);
        assert_eq!(ds.row_ids(), &[0, 2]);
    }

    fn toy(n: usize) -> Dataset {
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64]).collect();
        let labels = (0..n).map(|i| (i % 2) as u8).collect();
        let groups = (0..n).map(|i| 1 + (i % 2)).collect();
        Dataset::from_numeric(Matrix::from_rows(&rows).unwrap(), labels, groups).unwrap()
    }

    #[test]
    fn split_sizes() {
        let s = split_dataset(&toy(10), 0.7, 1).unwrap();
        assert_eq!(s.train.len(), 7);
        assert_eq!(s.test.len(), 3);
    }

    #[test]
    fn compas_sized_split() {
        let s = split_dataset(&toy(5278), 0.7, 9).unwrap();
        assert_eq!(s.train.len(), 3694);
    }

    #[test]
    fn split_is_deterministic_and_disjoint() {
        let ds = toy(50);
        let a = split_dataset(&ds, 0.7, 42).unwrap();
        let b = split_dataset(&ds, 0.7, 42).unwrap();
        assert_eq!(a.train.row_ids(), b.train.row_ids());
        assert_eq!(a.test.row_ids(), b.test.row_ids());
        let mut all: Vec<usize> = a.train.row_ids().iter().chain(a.test.row_ids()).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..50).collect::<Vec<_>>());
        let c = split_dataset(&ds, 0.7, 43).unwrap();
        assert_ne!(a.train.row_ids(), c.train.row_ids());
    }

    #[test]
    fn split_rejects_bad_fraction() {
        let ds = toy(10);
        for f in [0.0, 1.0, -0.5, 1.5, f64::NAN] {
            assert!(matches!(split_dataset(&ds, f, 0), Err(Error::InvalidArgument(_))));
        }
    }

    #[test]
    fn split_requires_both_classes() {
        let m = Matrix::from_rows(&[[0.0], [1.0], [2.0]]).unwrap();
        let ds = Dataset::from_numeric(m, vec![1, 1, 1], vec![1, 1, 1]).unwrap();
        assert!(split_dataset(&ds, 0.5, 0).is_err());
    }

    #[test]
    fn partition_two_groups() {
        let m = Matrix::from_rows(&[[0.0], [1.0], [2.0], [3.0]]).unwrap();
        let ds = Dataset::from_numeric(m, vec![0, 1, 0, 1], vec![1, 2, 1, 2]).unwrap();
        let parts = partition_groups(&ds);
        assert_eq!(parts.len(), 2);
        assert_eq!(parts[0].row_ids(), &[0, 2]);
        assert_eq!(parts[1].row_ids(), &[1, 3]);
        assert_eq!(parts[1].features().row(0), &[1.0]);
    }

    #[test]
    fn partition_single_group_is_identity() {
        let m = Matrix::from_rows(&[[0.0], [1.0]]).unwrap();
        let ds = Dataset::from_numeric(m, vec![0, 1], vec![1, 1]).unwrap();
        let parts = partition_groups(&ds);
        assert_eq!(parts, vec![ds]);
    }
}
