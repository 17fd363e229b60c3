//! Dense row-major tensors in double precision.
//!
//! Every tensor is validated on construction: dimension sizes are positive,
//! the value count matches the shape product, and all entries are finite.
//! Tensors are immutable through the public API, so they are safe to share
//! read-only across threads.

use super::rng::SplitMix64;
use thiserror::Error;

/// Errors raised by the numerics substrate.
#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("invalid shape {shape:?}: {reason}")]
    InvalidShape { shape: Vec<usize>, reason: String },
    #[error("{op} produced non-finite values")]
    NonFinite { op: &'static str },
    #[error("{op}: {reason}")]
    InvalidArgument { op: &'static str, reason: String },
}

/// A dense matrix/vector of `f64` values stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    values: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor, checking the shape/value-count/finiteness invariants.
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self, NumericsError> {
        if shape.is_empty() || shape.iter().any(|&d| d == 0) {
            return Err(NumericsError::InvalidShape {
                shape,
                reason: "dimension sizes must be positive".into(),
            });
        }
        let count: usize = shape.iter().product();
        if values.len() != count {
            return Err(NumericsError::InvalidShape {
                shape,
                reason: format!("expected {} values, got {}", count, values.len()),
            });
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(NumericsError::NonFinite { op: "Tensor::new" });
        }
        Ok(Self { shape, values })
    }

    /// A `rows x cols` matrix from row-major values.
    pub fn matrix(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self, NumericsError> {
        Self::new(vec![rows, cols], values)
    }

    /// A `1 x n` row vector.
    pub fn row(values: Vec<f64>) -> Result<Self, NumericsError> {
        let n = values.len();
        Self::new(vec![1, n], values)
    }

    /// A `1 x 1` scalar.
    pub fn scalar(value: f64) -> Result<Self, NumericsError> {
        Self::new(vec![1, 1], vec![value])
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        assert!(rows > 0 && cols > 0, "dimensions must be positive");
        assert!(value.is_finite());
        Self {
            shape: vec![rows, cols],
            values: vec![value; rows * cols],
        }
    }

    /// Uniform values in `[lo, hi)` drawn from the given stream.
    pub fn uniform(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut SplitMix64) -> Self {
        assert!(rows > 0 && cols > 0, "dimensions must be positive");
        let values = (0..rows * cols).map(|_| rng.uniform(lo, hi)).collect();
        Self {
            shape: vec![rows, cols],
            values,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn numel(&self) -> usize {
        self.values.len()
    }

    /// Row count; all substrate ops work on 2-D tensors.
    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        self.shape.get(1).copied().unwrap_or(1)
    }

    pub fn is_matrix(&self) -> bool {
        self.shape.len() == 2
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols() + col]
    }

    pub fn row_slice(&self, row: usize) -> &[f64] {
        let c = self.cols();
        &self.values[row * c..(row + 1) * c]
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}
