//! Row-major nested-array encoding of matrices, plus file helpers.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{de::DeserializeOwned, Serialize};

use crate::error::{Error, Result};

pub(crate) fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// `ncols` is used when there are no rows to infer it from.
pub(crate) fn from_rows(rows: &[Vec<f64>], ncols: usize, what: &str) -> Result<DMatrix<f64>> {
    let c = rows.first().map_or(ncols, Vec::len);
    if rows.iter().any(|r| r.len() != c) {
        return Err(Error::Dimension(format!("{what}: ragged rows")));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Invalid(format!("{what}: non-finite entry")));
    }
    Ok(DMatrix::from_fn(rows.len(), c, |i, j| rows[i][j]))
}

pub(crate) fn vec_from(v: &[f64], what: &str) -> Result<DVector<f64>> {
    if v.iter().any(|x| x.is_nan()) {
        return Err(Error::Invalid(format!("{what}: NaN entry")));
    }
    Ok(DVector::from_column_slice(v))
}

/// Serialize to pretty JSON. Floats use the shortest representation that
/// parses back to the identical bit pattern.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)?)
}

pub fn from_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    Ok(serde_json::from_str(text)?)
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    std::fs::write(path, to_json(value)? + "\n")?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    from_json(&std::fs::read_to_string(path)?)
}
