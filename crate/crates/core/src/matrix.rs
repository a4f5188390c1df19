//! Dense row-major matrix container.

use crate::error::{Error, Result};
use crate::real::Real;
use ndarray::Array2;

/// Dense real matrix, row-major, with finite entries and immutable
/// dimensions. Carrier for every matrix in the pipeline (data `Y`, mask
/// `W`, predictor `M`, its low-rank part `Z`, probabilities `Θ`, target
/// `A`).
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix<T> {
    data: Array2<T>,
}

impl<T: Real> DenseMatrix<T> {
    /// Build from row-major values, checking length and finiteness.
    pub fn new(n_rows: usize, n_cols: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != n_rows * n_cols {
            return Err(Error::invalid(format!(
                "value buffer has length {}, expected {}x{}",
                values.len(),
                n_rows,
                n_cols
            )));
        }
        let data = Array2::from_shape_vec((n_rows, n_cols), values)
            .map_err(|e| Error::invalid(e.to_string()))?;
        Self::from_array(data)
    }

    /// Wrap an existing array, checking every entry is finite.
    pub fn from_array(data: Array2<T>) -> Result<Self> {
        // Normalize to standard (row-major, contiguous) layout so
        // `values()` can expose the flat buffer.
        let data = if data.is_standard_layout() {
            data
        } else {
            data.as_standard_layout().to_owned()
        };
        for ((i, j), v) in data.indexed_iter() {
            if !v.is_finite() {
                return Err(Error::NonFinite { row: i, col: j });
            }
        }
        Ok(DenseMatrix { data })
    }

    /// All-zero matrix.
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        DenseMatrix {
            data: Array2::zeros((n_rows, n_cols)),
        }
    }

    /// Constant matrix `c · J`.
    pub fn constant(n_rows: usize, n_cols: usize, c: T) -> Self {
        DenseMatrix {
            data: Array2::from_elem((n_rows, n_cols), c),
        }
    }

    /// Build entrywise from a function of the index pair.
    pub fn from_shape_fn(n_rows: usize, n_cols: usize, f: impl FnMut((usize, usize)) -> T) -> Self {
        DenseMatrix {
            data: Array2::from_shape_fn((n_rows, n_cols), f),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.data.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.data.nrows(), self.data.ncols())
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> T {
        self.data[(row, col)]
    }

    /// Row-major flat view of the entries.
    pub fn values(&self) -> &[T] {
        self.data.as_slice().expect("standard layout guaranteed")
    }

    /// Borrow the underlying array.
    pub fn array(&self) -> &Array2<T> {
        &self.data
    }

    /// Take the underlying array.
    pub fn into_array(self) -> Array2<T> {
        self.data
    }

    /// Wrap an array that is already known to be finite (internal use;
    /// solvers maintain finiteness by construction).
    pub(crate) fn from_array_unchecked(data: Array2<T>) -> Self {
        debug_assert!(data.iter().all(|v| v.is_finite()));
        let data = if data.is_standard_layout() {
            data
        } else {
            data.as_standard_layout().to_owned()
        };
        DenseMatrix { data }
    }

    /// Check shapes agree, used by binary entrywise operations.
    pub(crate) fn check_same_shape(&self, other: &Self, context: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::DimensionMismatch {
                context,
                expected: self.shape(),
                got: other.shape(),
            });
        }
        Ok(())
    }

    /// Sum of all entries.
    pub fn sum(&self) -> T {
        self.data.sum()
    }

    /// Mean of all entries.
    pub fn mean(&self) -> T {
        self.data.mean().unwrap_or_else(T::zero)
    }

    /// Largest absolute entry (zero for an empty matrix).
    pub fn max_abs(&self) -> T {
        self.data
            .iter()
            .fold(T::zero(), |acc, &v| acc.max(v.abs()))
    }

    /// Frobenius norm.
    pub fn frobenius(&self) -> T {
        self.data
            .iter()
            .fold(T::zero(), |acc, &v| acc + v * v)
            .sqrt()
    }

    /// Entrywise map.
    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        DenseMatrix {
            data: self.data.mapv(|v| f(v)),
        }
    }

    /// `self - other`.
    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other, "matrix subtraction")?;
        Ok(DenseMatrix {
            data: &self.data - &other.data,
        })
    }

    /// Entrywise (Hadamard) product.
    pub fn hadamard(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other, "Hadamard product")?;
        Ok(DenseMatrix {
            data: &self.data * &other.data,
        })
    }

    /// True when every entry is 0 or 1 exactly.
    pub fn is_binary(&self) -> bool {
        self.data.iter().all(|&v| v == T::zero() || v == T::one())
    }
}
