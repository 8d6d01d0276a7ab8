use std::collections::HashSet;

use crate::error::{Error, Result};

/// Row-major sample × feature matrix with one identifier per row.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    ids: Vec<String>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>, ids: Vec<String>) -> Result<Self> {
        if rows == 0 {
            return Err(Error::InsufficientSamples { needed: 1, got: 0 });
        }
        if cols == 0 {
            return Err(Error::InvalidInput("feature dimension must be ≥ 1".into()));
        }
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {rows}×{cols} matrix",
                data.len()
            )));
        }
        if ids.len() != rows {
            return Err(Error::DimensionMismatch(format!(
                "{} ids for {rows} rows",
                ids.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite value at row {}, column {}",
                pos / cols,
                pos % cols
            )));
        }
        let mut seen = HashSet::with_capacity(rows);
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::InvalidInput(format!("duplicate row id `{id}`")));
            }
        }
        Ok(Self {
            rows,
            cols,
            data,
            ids,
        })
    }

    /// Builds a matrix whose ids are the row indices `0..rows`.
    pub fn from_rows_indexed(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        let ids = (0..rows).map(|i| i.to_string()).collect();
        Self::new(rows, cols, data, ids)
    }

    pub fn from_row_vecs(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        let data = rows.iter().flatten().copied().collect();
        Self::from_rows_indexed(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols)
    }

    pub fn into_parts(self) -> (usize, usize, Vec<f64>, Vec<String>) {
        (self.rows, self.cols, self.data, self.ids)
    }
}

/// Per-sample class posteriors; every row is a probability distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMatrix {
    rows: usize,
    classes: usize,
    data: Vec<f64>,
}

impl ProbabilityMatrix {
    pub const ROW_SUM_TOLERANCE: f64 = 1e-6;

    pub fn new(rows: usize, classes: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || classes == 0 {
            return Err(Error::InvalidInput("empty probability matrix".into()));
        }
        if data.len() != rows * classes {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {rows}×{classes} matrix",
                data.len()
            )));
        }
        for (i, row) in data.chunks_exact(classes).enumerate() {
            if let Some(bad) = row.iter().find(|p| !(0.0..=1.0).contains(*p)) {
                return Err(Error::InvalidInput(format!(
                    "probability {bad} outside [0, 1] in row {i}"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > Self::ROW_SUM_TOLERANCE {
                return Err(Error::InvalidInput(format!(
                    "row {i} sums to {sum}, expected 1"
                )));
            }
        }
        Ok(Self {
            rows,
            classes,
            data,
        })
    }

    pub fn from_row_vecs(rows: &[Vec<f64>]) -> Result<Self> {
        let classes = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != classes) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        Self::new(rows.len(), classes, rows.iter().flatten().copied().collect())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.classes..(i + 1) * self.classes]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}
