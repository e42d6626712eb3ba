use std::fmt;

use crate::error::{Error, Result};

/// Dense real vector of fixed dimension with finite components.
#[derive(Debug, Clone, PartialEq)]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(components: Vec<f64>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidParameter {
                name: "vector",
                reason: "dimension must be at least 1".into(),
            });
        }
        if components.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("vector components".into()));
        }
        Ok(Self(components))
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "vector dimension must be at least 1");
        Self(vec![0.0; dim])
    }

    pub(crate) fn from_slice_unchecked(x: &[f64]) -> Self {
        Self(x.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn ensure_dim(&self, dim: usize) -> Result<()> {
        if self.dim() == dim {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: dim,
                found: self.dim(),
            })
        }
    }

    pub fn dot(&self, other: &Vector) -> Result<f64> {
        other.ensure_dim(self.dim())?;
        Ok(dot(&self.0, &other.0))
    }

    pub fn norm_sq(&self) -> f64 {
        dot(&self.0, &self.0)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn norm_inf(&self) -> f64 {
        self.0.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    pub fn add(&self, other: &Vector) -> Result<Vector> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Vector) -> Result<Vector> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, factor: f64) -> Result<Vector> {
        Vector::new(self.0.iter().map(|c| c * factor).collect())
    }

    /// Convex (or affine) combination `wa * self + wb * other`.
    pub fn combine(&self, wa: f64, other: &Vector, wb: f64) -> Result<Vector> {
        self.zip_with(other, |a, b| wa * a + wb * b)
    }

    fn zip_with(&self, other: &Vector, f: impl Fn(f64, f64) -> f64) -> Result<Vector> {
        other.ensure_dim(self.dim())?;
        Vector::new(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }
}

impl fmt::Display for Vector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// Row-major square matrix, used for mean-field generators.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix {
    dim: usize,
    entries: Vec<f64>,
}

impl SquareMatrix {
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let dim = rows.len();
        if dim == 0 {
            return Err(Error::InvalidParameter {
                name: "matrix",
                reason: "empty".into(),
            });
        }
        let mut entries = Vec::with_capacity(dim * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            entries.extend_from_slice(row);
        }
        if entries.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("matrix entries".into()));
        }
        Ok(Self { dim, entries })
    }

    pub fn scaled_identity(dim: usize, factor: f64) -> Self {
        let mut entries = vec![0.0; dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = factor;
        }
        Self { dim, entries }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries[row * self.dim + col]
    }

    pub fn apply(&self, x: &Vector) -> Result<Vector> {
        x.ensure_dim(self.dim)?;
        let mut out = vec![0.0; self.dim];
        self.apply_into(x.as_slice(), &mut out);
        Vector::new(out)
    }

    pub(crate) fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot(&self.entries[i * self.dim..(i + 1) * self.dim], x);
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
