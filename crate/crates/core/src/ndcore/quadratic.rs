use super::operator::Objective;
use super::scalar::Scalar;
use super::tape::{Tape, Var};
use crate::error::{Error, Result};

/// `f(θ) = ½·θᵀAθ + bᵀθ + c` for a fixed symmetric `A`. Constant Hessian,
/// one term; used as an explicit operator in tests and in the CLI's
/// quadratic mode.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    dim: usize,
    matrix: Curvature,
    linear: Vec<f64>,
    offset: f64,
}

#[derive(Debug, Clone, PartialEq)]
enum Curvature {
    Diagonal(Vec<f64>),
    Dense(Vec<f64>),
}

impl Quadratic {
    pub fn diagonal(diag: Vec<f64>) -> Self {
        let dim = diag.len();
        Quadratic { dim, matrix: Curvature::Diagonal(diag), linear: vec![0.0; dim], offset: 0.0 }
    }

    /// Dense symmetric matrix given row-major.
    pub fn dense(dim: usize, rows: Vec<f64>) -> Result<Self> {
        if rows.len() != dim * dim {
            return Err(Error::DimensionMismatch { expected: dim * dim, got: rows.len() });
        }
        for i in 0..dim {
            for j in 0..i {
                let (a, b) = (rows[i * dim + j], rows[j * dim + i]);
                if (a - b).abs() > 1e-12 * (1.0 + a.abs().max(b.abs())) {
                    return Err(Error::invalid(format!("matrix not symmetric at ({i},{j})")));
                }
            }
        }
        Ok(Quadratic { dim, matrix: Curvature::Dense(rows), linear: vec![0.0; dim], offset: 0.0 })
    }

    pub fn with_linear(mut self, b: Vec<f64>) -> Result<Self> {
        if b.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: b.len() });
        }
        self.linear = b;
        Ok(self)
    }

    pub fn with_offset(mut self, c: f64) -> Self {
        self.offset = c;
        self
    }

    /// Entry `A[i][j]`.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        match &self.matrix {
            Curvature::Diagonal(d) => {
                if i == j {
                    d[i]
                } else {
                    0.0
                }
            }
            Curvature::Dense(m) => m[i * self.dim + j],
        }
    }
}

impl Objective for Quadratic {
    fn dim(&self) -> usize {
        self.dim
    }

    fn terms(&self) -> usize {
        1
    }

    fn record<S: Scalar>(&self, tape: &mut Tape<S>, _term: usize) -> Result<Var> {
        let x: Vec<Var> = tape.inputs().collect();
        let ax: Vec<Var> = match &self.matrix {
            Curvature::Diagonal(d) => x.iter().zip(d).map(|(&xi, &a)| tape.scale(xi, a)).collect(),
            Curvature::Dense(m) => {
                let zero = tape.constant(S::zero());
                m.chunks(self.dim).map(|row| tape.affine_const(&x, row, zero)).collect()
            }
        };
        let quad = tape.dot(&x, &ax);
        let half = tape.scale(quad, 0.5);
        let off = tape.constant(S::constant(self.offset));
        let lin = tape.affine_const(&x, &self.linear, off);
        Ok(tape.add(half, lin))
    }
}
