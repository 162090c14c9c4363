//! On-disk datasets for the random-effects model.
//!
//! A dataset is a pair of files: `<stem>.bin` holds the arrays `Y`, `X`, `Z`
//! back to back as little-endian `f64` in column-major order, preceded by the
//! 8-byte magic `SPXDATA1`; `<stem>.json` records the shapes, byte offsets
//! and whatever generation metadata the caller supplies.
//!
//! External data can be imported from CSV with a header row: a `y` column,
//! covariate columns named `x…` and random-effect columns named `z…`, in
//! file order.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::logistic::LogisticREModel;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"SPXDATA1";
pub const DATASET_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrayEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    /// Byte offset of the first value in the binary file.
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub schema_version: u32,
    pub layout: String,
    pub arrays: Vec<ArrayEntry>,
    #[serde(default)]
    pub metadata: serde_json::Value,
}

fn paths(stem: &Path) -> (PathBuf, PathBuf) {
    (stem.with_extension("bin"), stem.with_extension("json"))
}

pub fn save_dataset(stem: &Path, model: &LogisticREModel, metadata: serde_json::Value) -> Result<()> {
    let (bin, json) = paths(stem);
    let mut bytes = MAGIC.to_vec();
    let mut arrays = Vec::new();
    let y = DMatrix::from_column_slice(model.n_obs(), 1, model.y().as_slice());
    for (name, m) in [("y", &y), ("x", model.x()), ("z", model.z())] {
        arrays.push(ArrayEntry {
            name: name.into(),
            rows: m.nrows(),
            cols: m.ncols(),
            offset: bytes.len(),
        });
        for v in m.as_slice() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    let sidecar = Sidecar {
        schema_version: DATASET_SCHEMA_VERSION,
        layout: "f64 little-endian, column-major".into(),
        arrays,
        metadata,
    };
    fs::write(&bin, bytes)?;
    fs::write(&json, serde_json::to_string_pretty(&sidecar)?)?;
    Ok(())
}

pub fn load_dataset(stem: &Path) -> Result<(LogisticREModel, Sidecar)> {
    let (bin, json) = paths(stem);
    let sidecar: Sidecar = serde_json::from_str(&fs::read_to_string(&json)?)?;
    if sidecar.schema_version != DATASET_SCHEMA_VERSION {
        return Err(Error::unsupported(format!(
            "dataset schema version {} (expected {DATASET_SCHEMA_VERSION})",
            sidecar.schema_version
        )));
    }
    let mut bytes = Vec::new();
    fs::File::open(&bin)?.read_to_end(&mut bytes)?;
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::invalid(format!("{} is not a dataset file", bin.display())));
    }
    let array = |name: &str| -> Result<DMatrix<f64>> {
        let e = sidecar
            .arrays
            .iter()
            .find(|a| a.name == name)
            .ok_or_else(|| Error::invalid(format!("sidecar has no array `{name}`")))?;
        let end = e.offset + 8 * e.rows * e.cols;
        let raw = bytes
            .get(e.offset..end)
            .ok_or_else(|| Error::invalid(format!("array `{name}` runs past the end of the file")))?;
        let values: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        Ok(DMatrix::from_vec(e.rows, e.cols, values))
    };
    let y = array("y")?;
    let model = LogisticREModel::new(array("x")?, array("z")?, DVector::from_column_slice(y.as_slice()))?;
    Ok((model, sidecar))
}

pub fn import_csv(path: &Path) -> Result<LogisticREModel> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let pick = |prefix: &str| -> Vec<usize> {
        headers
            .iter()
            .enumerate()
            .filter(|(_, h)| h.trim().starts_with(prefix))
            .map(|(i, _)| i)
            .collect()
    };
    let y_col = headers
        .iter()
        .position(|h| h.trim() == "y")
        .ok_or_else(|| Error::invalid("CSV needs a `y` column"))?;
    let (x_cols, z_cols) = (pick("x"), pick("z"));
    let (mut y, mut x, mut z) = (Vec::new(), Vec::new(), Vec::new());
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let get = |i: usize| -> Result<f64> {
            record
                .get(i)
                .unwrap_or("")
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::invalid(format!("row {}: column {i}: {e}", line + 2)))
        };
        y.push(get(y_col)?);
        for &c in &x_cols {
            x.push(get(c)?);
        }
        for &c in &z_cols {
            z.push(get(c)?);
        }
    }
    let n = y.len();
    LogisticREModel::new(
        DMatrix::from_row_slice(n, x_cols.len(), &x),
        DMatrix::from_row_slice(n, z_cols.len(), &z),
        DVector::from_vec(y),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::logistic::{generate_synthetic, SyntheticSpec};

    #[test]
    fn binary_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SyntheticSpec {
            n_obs: 12,
            n_covariates: 4,
            n_effects: 2,
            ..SyntheticSpec::desk()
        };
        let inst = generate_synthetic(&spec).unwrap();
        let stem = dir.path().join("data");
        save_dataset(&stem, &inst.model, serde_json::to_value(&spec).unwrap()).unwrap();
        let (back, sidecar) = load_dataset(&stem).unwrap();
        assert_eq!(back, inst.model);
        assert_eq!(sidecar.metadata["n_obs"], 12);
    }

    #[test]
    fn csv_import() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        fs::write(&path, "y,x1,x2,z1\n1,0.5,2,1\n0,-1,3,1\n").unwrap();
        let model = import_csv(&path).unwrap();
        assert_eq!((model.n_obs(), model.n_covariates(), model.n_effects()), (2, 2, 1));
        assert_eq!(model.x()[(1, 1)], 3.0);
        fs::write(&path, "y,x1,z1\n2,0,1\n").unwrap();
        assert!(import_csv(&path).is_err());
    }
}
