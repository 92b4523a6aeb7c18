use std::ops::{Deref, Index};

use crate::error::{Error, Result};

/// Flat vector of model parameters; the coordinate system every analysis
/// works in.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    /// Wraps `values`, rejecting NaN and infinities.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|x| !x.is_finite()) {
            return Err(Error::non_finite(format!("parameter coordinate {i}")));
        }
        Ok(ParamVector(values))
    }

    pub fn zeros(d: usize) -> Self {
        ParamVector(vec![0.0; d])
    }

    pub fn basis(d: usize, i: usize) -> Self {
        let mut v = vec![0.0; d];
        v[i] = 1.0;
        ParamVector(v)
    }

    #[cfg(test)]
    pub(crate) fn from_vec_unchecked(values: Vec<f64>) -> Self {
        ParamVector(values)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn check_dim(&self, d: usize) -> Result<()> {
        if self.dim() == d {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected: d, got: self.dim() })
        }
    }

    fn assert_same_dim(&self, other: &ParamVector) {
        assert_eq!(self.dim(), other.dim(), "ParamVector dimension mismatch");
    }

    pub fn dot(&self, other: &ParamVector) -> f64 {
        self.assert_same_dim(other);
        dot(&self.0, &other.0)
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn norm_inf(&self) -> f64 {
        self.0.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    /// `self + a·x`.
    pub fn axpy(&self, a: f64, x: &ParamVector) -> ParamVector {
        self.assert_same_dim(x);
        ParamVector(self.0.iter().zip(&x.0).map(|(s, x)| s + a * x).collect())
    }

    pub fn scaled(&self, a: f64) -> ParamVector {
        ParamVector(self.0.iter().map(|x| a * x).collect())
    }

    pub fn sub(&self, other: &ParamVector) -> ParamVector {
        self.axpy(-1.0, other)
    }

    pub fn add(&self, other: &ParamVector) -> ParamVector {
        self.axpy(1.0, other)
    }

    /// Unit vector in the same direction; `None` for the zero vector.
    pub fn normalized(&self) -> Option<ParamVector> {
        let n = self.norm();
        (n > 0.0 && n.is_finite()).then(|| self.scaled(1.0 / n))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    /// Flips the sign so that the first coordinate that is not negligible
    /// (relative to the largest) is positive.
    pub fn canonical_sign(mut self) -> ParamVector {
        let scale = self.norm_inf();
        if let Some(&first) = self.0.iter().find(|x| x.abs() > 1e-10 * scale) {
            if first < 0.0 {
                self.0.iter_mut().for_each(|x| *x = -*x);
            }
        }
        self
    }
}

impl Deref for ParamVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl Index<usize> for ParamVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl From<ParamVector> for Vec<f64> {
    fn from(p: ParamVector) -> Self {
        p.0
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
