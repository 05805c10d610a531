//! Frame-by-tool matrices: predictions, regression targets and labels.

use crate::scalar::sigmoid_scalar;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MatrixError {
    #[error("row length {got} does not match tool count {want}")]
    RowLength { want: usize, got: usize },
    #[error("dimension mismatch: {a_rows}x{a_cols} vs {b_rows}x{b_cols}")]
    DimMismatch {
        a_rows: usize,
        a_cols: usize,
        b_rows: usize,
        b_cols: usize,
    },
    #[error("label values must be -1 or +1")]
    BadLabel,
    #[error("empty sequence")]
    Empty,
    #[error("probability outside [0, 1]")]
    BadProbability,
}

/// Row-major frames-by-tools matrix of f64 values.
#[derive(Clone, Debug, PartialEq)]
pub struct SeqMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl SeqMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        SeqMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, MatrixError> {
        if rows.is_empty() {
            return Err(MatrixError::Empty);
        }
        let cols = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(MatrixError::RowLength {
                    want: cols,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(SeqMatrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn from_flat(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, MatrixError> {
        if data.len() != rows * cols {
            return Err(MatrixError::RowLength {
                want: rows * cols,
                got: data.len(),
            });
        }
        Ok(SeqMatrix { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.cols..(t + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, t: usize) -> &mut [f64] {
        &mut self.data[t * self.cols..(t + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, t: usize, j: usize) -> f64 {
        self.data[t * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, t: usize, j: usize, v: f64) {
        self.data[t * self.cols + j] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        SeqMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// self += k * other
    pub fn axpy(&mut self, k: f64, other: &SeqMatrix) -> Result<(), MatrixError> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(MatrixError::DimMismatch {
                a_rows: self.rows,
                a_cols: self.cols,
                b_rows: other.rows,
                b_cols: other.cols,
            });
        }
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += k * b;
        }
        Ok(())
    }

    /// Elementwise logistic map (logits to probabilities).
    pub fn sigmoid(&self) -> Self {
        self.map(sigmoid_scalar)
    }

    /// New matrix containing the given rows, in order.
    pub fn gather_rows(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &t in indices {
            data.extend_from_slice(self.row(t));
        }
        SeqMatrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Per-frame, per-tool binary usage labels encoded as -1 / +1.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMatrix {
    rows: usize,
    tools: usize,
    data: Vec<i8>,
}

impl LabelMatrix {
    pub fn new(rows: usize, tools: usize, data: Vec<i8>) -> Result<Self, MatrixError> {
        if data.len() != rows * tools {
            return Err(MatrixError::RowLength {
                want: rows * tools,
                got: data.len(),
            });
        }
        if data.iter().any(|&v| v != 1 && v != -1) {
            return Err(MatrixError::BadLabel);
        }
        Ok(LabelMatrix { rows, tools, data })
    }

    /// All-negative labels.
    pub fn all_off(rows: usize, tools: usize) -> Self {
        LabelMatrix {
            rows,
            tools,
            data: vec![-1; rows * tools],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn tools(&self) -> usize {
        self.tools
    }

    #[inline]
    pub fn get(&self, t: usize, tool: usize) -> i8 {
        self.data[t * self.tools + tool]
    }

    #[inline]
    pub fn set(&mut self, t: usize, tool: usize, v: i8) {
        debug_assert!(v == 1 || v == -1);
        self.data[t * self.tools + tool] = v;
    }

    #[inline]
    pub fn row(&self, t: usize) -> &[i8] {
        &self.data[t * self.tools..(t + 1) * self.tools]
    }

    pub fn data(&self) -> &[i8] {
        &self.data
    }

    pub fn gather_rows(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.tools);
        for &t in indices {
            data.extend_from_slice(self.row(t));
        }
        LabelMatrix {
            rows: indices.len(),
            tools: self.tools,
            data,
        }
    }

    /// Fraction of positive frames per tool.
    pub fn prevalence(&self) -> Vec<f64> {
        let mut counts = vec![0usize; self.tools];
        for t in 0..self.rows {
            for (j, &v) in self.row(t).iter().enumerate() {
                if v == 1 {
                    counts[j] += 1;
                }
            }
        }
        counts
            .into_iter()
            .map(|c| c as f64 / self.rows as f64)
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ValueKind {
    Logits,
    Probabilities,
}

/// A per-frame prediction track for one video or subsequence.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionSequence {
    pub values: SeqMatrix,
    pub kind: ValueKind,
    pub video: String,
    /// Subsequence index when this track came out of temporal subsampling.
    pub subseq: Option<usize>,
}

impl PredictionSequence {
    pub fn new(
        values: SeqMatrix,
        kind: ValueKind,
        video: impl Into<String>,
    ) -> Result<Self, MatrixError> {
        if values.rows() == 0 {
            return Err(MatrixError::Empty);
        }
        if kind == ValueKind::Probabilities
            && values.data().iter().any(|&v| !(0.0..=1.0).contains(&v))
        {
            return Err(MatrixError::BadProbability);
        }
        Ok(PredictionSequence {
            values,
            kind,
            video: video.into(),
            subseq: None,
        })
    }

    pub fn len(&self) -> usize {
        self.values.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.rows() == 0
    }

    pub fn tools(&self) -> usize {
        self.values.cols()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_values_validated() {
        assert!(LabelMatrix::new(1, 2, vec![1, 0]).is_err());
        assert!(LabelMatrix::new(1, 2, vec![1, -1]).is_ok());
    }

    #[test]
    fn probability_sequence_validated() {
        let m = SeqMatrix::from_rows(&[vec![0.5, 1.2]]).unwrap();
        assert!(PredictionSequence::new(m, ValueKind::Probabilities, "v").is_err());
        let m = SeqMatrix::from_rows(&[vec![0.5, 1.0]]).unwrap();
        assert!(PredictionSequence::new(m, ValueKind::Probabilities, "v").is_ok());
    }

    #[test]
    fn empty_sequence_rejected() {
        let m = SeqMatrix::zeros(0, 3);
        assert!(PredictionSequence::new(m, ValueKind::Logits, "v").is_err());
    }

    #[test]
    fn gather_rows_orders() {
        let m = SeqMatrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0]]).unwrap();
        let g = m.gather_rows(&[2, 0]);
        assert_eq!(g.data(), &[2.0, 0.0]);
    }
}
