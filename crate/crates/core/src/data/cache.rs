//! Binary dataset cache.
//!
//! Layout: `b"FMDS"`, version byte, `u64` metadata length, JSON metadata
//! (schema, column layout, group names, row ids), `u64` rows, `u64` feature
//! columns, then one row-major record per individual of little-endian `f64`:
//! the features followed by the label and the group id.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{load_table, Dataset, FeatureColumn, FeatureSchema};
use crate::binio::{BinReader, BinWriter, MAX_LEN};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

const MAGIC: &[u8; 4] = b"FMDS";
const VERSION: u8 = 1;

#[derive(Serialize, Deserialize)]
struct Meta {
    schema: FeatureSchema,
    columns: Vec<FeatureColumn>,
    group_names: Vec<String>,
    row_ids: Vec<usize>,
}

pub fn write_dataset<W: Write>(out: W, ds: &Dataset) -> std::io::Result<()> {
    let meta = Meta {
        schema: ds.schema.clone(),
        columns: ds.columns.clone(),
        group_names: ds.group_names.clone(),
        row_ids: ds.row_ids.clone(),
    };
    let meta = serde_json::to_vec(&meta).map_err(std::io::Error::other)?;
    let mut w = BinWriter::new(out);
    w.bytes(MAGIC)?;
    w.u8(VERSION)?;
    w.usize(meta.len())?;
    w.bytes(&meta)?;
    w.usize(ds.len())?;
    w.usize(ds.feature_dim())?;
    for i in 0..ds.len() {
        w.f64s(ds.features.row(i))?;
        w.f64(f64::from(ds.labels[i]))?;
        w.f64(ds.groups[i] as f64)?;
    }
    w.into_inner().flush()
}

pub fn read_dataset<R: Read>(input: R) -> Result<Dataset> {
    let mut r = BinReader::new(input, "dataset cache");
    r.expect_magic(MAGIC, VERSION)?;
    let meta_len = r.len(MAX_LEN)?;
    let meta: Meta = serde_json::from_slice(&r.bytes(meta_len)?)
        .map_err(|e| r.format_err(format!("metadata: {e}")))?;
    let rows = r.len(MAX_LEN)?;
    let cols = r.len(MAX_LEN)?;
    let mut data = Vec::with_capacity(rows * cols);
    let mut labels = Vec::with_capacity(rows);
    let mut groups = Vec::with_capacity(rows);
    for _ in 0..rows {
        data.extend(r.f64s(cols)?);
        let y = r.f64()?;
        let g = r.f64()?;
        if !(y == 0.0 || y == 1.0) || g < 1.0 || g.fract() != 0.0 {
            return Err(r.format_err("corrupt label or group field"));
        }
        labels.push(y as u8);
        groups.push(g as usize);
    }
    r.expect_eof()?;
    Dataset::with_row_ids(
        Matrix::from_vec(rows, cols, data)?,
        labels,
        groups,
        meta.columns,
        meta.group_names,
        meta.schema,
        meta.row_ids,
    )
}

/// Hex SHA-256 over the raw file bytes and the canonical schema JSON.
pub fn cache_key(file_bytes: &[u8], schema: &FeatureSchema) -> String {
    let mut h = Sha256::new();
    h.update(Sha256::digest(file_bytes));
    h.update(serde_json::to_vec(schema).expect("schema serializes"));
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Load `path` through a cache directory keyed by (file hash, schema hash).
pub fn load_table_cached(
    path: impl AsRef<Path>,
    schema: &FeatureSchema,
    cache_dir: impl AsRef<Path>,
) -> Result<Dataset> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let key = cache_key(&bytes, schema);
    let cache_dir = cache_dir.as_ref();
    let cached: PathBuf = cache_dir.join(format!("{key}.fmds"));
    if let Ok(f) = File::open(&cached) {
        match read_dataset(BufReader::new(f)) {
            Ok(ds) => return Ok(ds),
            Err(e) => log::warn!("ignoring unreadable cache {}: {e}", cached.display()),
        }
    }
    let ds = load_table(path, schema)?;
    std::fs::create_dir_all(cache_dir).map_err(|e| Error::io(cache_dir, e))?;
    let tmp = cache_dir.join(format!("{key}.fmds.tmp"));
    let f = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    write_dataset(BufWriter::new(f), &ds).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, &cached).map_err(|e| Error::io(&cached, e))?;
    Ok(ds)
}
