//! Mode-indexed tuples of equally sized real matrices.
//!
//! Arithmetic on a [`MatrixFamily`] is element-wise over the modes: the
//! product of two families multiplies matching modes, and scaling by a
//! vector of scalars scales each mode by its own coefficient.

use std::ops::Index;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixFamily {
    mats: Vec<Mat>,
}

impl MatrixFamily {
    /// Builds a family, rejecting an empty list or non-uniform shapes.
    pub fn new(mats: Vec<Mat>) -> Result<Self> {
        let first = mats
            .first()
            .ok_or_else(|| Error::InvalidInput("matrix family needs at least one mode".into()))?;
        let shape = first.shape();
        for (i, m) in mats.iter().enumerate().skip(1) {
            if m.shape() != shape {
                return Err(Error::DimensionMismatch {
                    context: "matrix family",
                    expected: format!("{}x{}", shape.0, shape.1),
                    found: format!("{}x{} at mode {}", m.nrows(), m.ncols(), i + 1),
                });
            }
        }
        Ok(Self { mats })
    }

    pub fn from_fn(modes: usize, mut f: impl FnMut(usize) -> Mat) -> Result<Self> {
        Self::new((0..modes).map(&mut f).collect())
    }

    pub fn zeros(modes: usize, rows: usize, cols: usize) -> Self {
        assert!(modes >= 1, "matrix family needs at least one mode");
        Self {
            mats: vec![Mat::zeros(rows, cols); modes],
        }
    }

    pub fn identity(modes: usize, n: usize) -> Self {
        Self::repeat(modes, Mat::identity(n, n))
    }

    /// The same matrix at every mode.
    pub fn repeat(modes: usize, m: Mat) -> Self {
        assert!(modes >= 1, "matrix family needs at least one mode");
        Self {
            mats: vec![m; modes],
        }
    }

    pub fn modes(&self) -> usize {
        self.mats.len()
    }

    /// (rows, cols) shared by every mode.
    pub fn shape(&self) -> (usize, usize) {
        self.mats[0].shape()
    }

    pub fn is_square(&self) -> bool {
        let (r, c) = self.shape();
        r == c
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Mat> {
        self.mats.iter()
    }

    pub fn as_slice(&self) -> &[Mat] {
        &self.mats
    }

    pub fn into_inner(self) -> Vec<Mat> {
        self.mats
    }

    pub fn map(&self, f: impl FnMut(&Mat) -> Mat) -> Result<Self> {
        Self::new(self.mats.iter().map(f).collect())
    }

    pub fn transpose(&self) -> Self {
        Self {
            mats: self.mats.iter().map(|m| m.transpose()).collect(),
        }
    }

    pub fn scale(&self, alpha: f64) -> Self {
        Self {
            mats: self.mats.iter().map(|m| m * alpha).collect(),
        }
    }

    /// Mode-wise scaling `(a_1 Y_1, ..., a_N Y_N)`.
    pub fn scale_modes(&self, coeffs: &[f64]) -> Result<Self> {
        self.check_modes(coeffs.len(), "mode-wise scaling")?;
        Ok(Self {
            mats: self.mats.iter().zip(coeffs).map(|(m, a)| m * *a).collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same(other, "family sum")?;
        Ok(Self {
            mats: self.mats.iter().zip(&other.mats).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same(other, "family difference")?;
        Ok(Self {
            mats: self.mats.iter().zip(&other.mats).map(|(a, b)| a - b).collect(),
        })
    }

    /// Mode-wise matrix product `(Y_1 Z_1, ..., Y_N Z_N)`.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.check_modes(other.modes(), "family product")?;
        if self.shape().1 != other.shape().0 {
            return Err(Error::dims(
                "family product",
                format!("{} rows on the right", self.shape().1),
                other.shape().0,
            ));
        }
        Ok(Self {
            mats: self.mats.iter().zip(&other.mats).map(|(a, b)| a * b).collect(),
        })
    }

    /// `<Y, Z> = sum_i Tr(Y_i' Z_i)`.
    pub fn inner(&self, other: &Self) -> Result<f64> {
        self.check_same(other, "inner product")?;
        Ok(self
            .mats
            .iter()
            .zip(&other.mats)
            .map(|(a, b)| a.component_mul(b).sum())
            .sum())
    }

    pub fn norm(&self) -> f64 {
        self.mats.iter().map(|m| m.norm_squared()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.mats.iter().map(|m| m.amax()).fold(0.0, f64::max)
    }

    /// Largest mode-wise Frobenius norm of the difference.
    pub fn max_mode_distance(&self, other: &Self) -> Result<f64> {
        self.check_same(other, "family distance")?;
        Ok(self
            .mats
            .iter()
            .zip(&other.mats)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }

    pub fn symmetrize(&mut self) {
        for m in &mut self.mats {
            crate::linalg::symmetrize_in_place(m);
        }
    }

    /// Column-stacked per mode, modes concatenated in index order.
    pub fn vectorize(&self) -> DVector<f64> {
        let (r, c) = self.shape();
        let mut out = DVector::zeros(self.modes() * r * c);
        for (k, m) in self.mats.iter().enumerate() {
            out.rows_mut(k * r * c, r * c).copy_from_slice(m.as_slice());
        }
        out
    }

    /// Inverse of [`MatrixFamily::vectorize`].
    pub fn from_vector(v: &DVector<f64>, modes: usize, rows: usize, cols: usize) -> Result<Self> {
        if v.len() != modes * rows * cols {
            return Err(Error::dims("unvectorize", modes * rows * cols, v.len()));
        }
        let block = rows * cols;
        Self::from_fn(modes, |k| {
            Mat::from_column_slice(rows, cols, &v.as_slice()[k * block..(k + 1) * block])
        })
    }

    pub(crate) fn check_modes(&self, modes: usize, context: &'static str) -> Result<()> {
        if self.modes() != modes {
            return Err(Error::dims(
                context,
                format!("{} modes", self.modes()),
                format!("{modes} modes"),
            ));
        }
        Ok(())
    }

    pub(crate) fn check_same(&self, other: &Self, context: &'static str) -> Result<()> {
        self.check_modes(other.modes(), context)?;
        if self.shape() != other.shape() {
            let (a, b) = (self.shape(), other.shape());
            return Err(Error::dims(
                context,
                format!("{}x{}", a.0, a.1),
                format!("{}x{}", b.0, b.1),
            ));
        }
        Ok(())
    }
}

impl Index<usize> for MatrixFamily {
    type Output = Mat;

    fn index(&self, i: usize) -> &Mat {
        &self.mats[i]
    }
}

impl<'a> IntoIterator for &'a MatrixFamily {
    type Item = &'a Mat;
    type IntoIter = std::slice::Iter<'a, Mat>;

    fn into_iter(self) -> Self::IntoIter {
        self.mats.iter()
    }
}
