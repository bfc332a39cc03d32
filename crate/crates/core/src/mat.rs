//! Minimal column-major f64 matrix used by the float model and reference
//! implementations. Column-major matches the packed weight layout, where one
//! column is the unit of work.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MatF {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl MatF {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Builds from a column-major buffer.
    pub fn from_col_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dims("MatF buffer", rows * cols, data.len()));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds from a row-major buffer (the interchange order of the float
    /// model files), transposing into column-major storage.
    pub fn from_row_major(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dims("MatF buffer", rows * cols, data.len()));
        }
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.data[j * rows + i] = data[i * cols + j];
            }
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn col(&self, j: usize) -> &[f64] {
        assert!(j < self.cols, "column {j} out of range");
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.rows + i]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[j * self.rows + i] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Row-major copy of the contents (for writing interchange files).
    pub fn to_row_major(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.data.len()];
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[i * self.cols + j] = self.data[j * self.rows + i];
            }
        }
        out
    }

    /// y = A x.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::dims("matvec input", self.cols, x.len()));
        }
        let mut y = vec![0.0; self.rows];
        for (j, &xj) in x.iter().enumerate() {
            let col = self.col(j);
            for (yi, &aij) in y.iter_mut().zip(col) {
                *yi += aij * xj;
            }
        }
        Ok(y)
    }
}
