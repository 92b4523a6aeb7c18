//! Extreme eigenpairs of symmetric operators that are only available through
//! matrix-vector products, plus a dense eigendecomposition used to validate
//! them on small problems.

mod jacobi;
mod lanczos;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndcore::{LossOperator, Objective, ParamVector};

pub use jacobi::symmetric_eigen;
pub use lanczos::{lanczos, LanczosConfig, LanczosOutcome};

/// A symmetric linear map `v ↦ A·v`.
pub trait SymmetricOperator {
    fn dim(&self) -> usize;
    fn apply(&self, v: &[f64]) -> Result<Vec<f64>>;
}

/// The Hessian of a loss operator at a fixed point.
pub struct HessianAt<'a, O> {
    op: &'a LossOperator<O>,
    theta: &'a ParamVector,
}

impl<'a, O: Objective> HessianAt<'a, O> {
    pub fn new(op: &'a LossOperator<O>, theta: &'a ParamVector) -> Result<Self> {
        theta.check_dim(op.dim())?;
        Ok(HessianAt { op, theta })
    }
}

impl<O: Objective> SymmetricOperator for HessianAt<'_, O> {
    fn dim(&self) -> usize {
        self.op.dim()
    }

    fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        let v = ParamVector::new(v.to_vec())?;
        Ok(self.op.hvp(self.theta, &v)?.into_vec())
    }
}

/// `v ↦ −A·v`.
pub struct Negated<'a, A: ?Sized>(pub &'a A);

impl<A: SymmetricOperator + ?Sized> SymmetricOperator for Negated<'_, A> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        let mut w = self.0.apply(v)?;
        w.iter_mut().for_each(|x| *x = -*x);
        Ok(w)
    }
}

/// Explicit dense symmetric matrix (row-major).
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSymmetric {
    n: usize,
    rows: Vec<f64>,
}

impl DenseSymmetric {
    pub fn new(n: usize, rows: Vec<f64>) -> Result<Self> {
        if rows.len() != n * n {
            return Err(Error::DimensionMismatch { expected: n * n, got: rows.len() });
        }
        Ok(DenseSymmetric { n, rows })
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut rows = vec![0.0; n * n];
        for (i, &x) in diag.iter().enumerate() {
            rows[i * n + i] = x;
        }
        DenseSymmetric { n, rows }
    }

    pub fn rows(&self) -> &[f64] {
        &self.rows
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.rows[i * self.n + j]
    }
}

impl SymmetricOperator for DenseSymmetric {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: v.len() });
        }
        Ok(self.rows.chunks(self.n).map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    /// Algebraically largest eigenvalues.
    LA,
    /// Algebraically smallest eigenvalues.
    SA,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::LA => "LA",
            Side::SA => "SA",
        })
    }
}

impl FromStr for Side {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "LA" | "la" => Ok(Side::LA),
            "SA" | "sa" => Ok(Side::SA),
            other => Err(Error::invalid(format!("unknown side {other:?}, expected LA or SA"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub lambda: f64,
    /// Unit norm; first non-negligible coordinate positive.
    pub vector: ParamVector,
    /// `‖A·v − λ·v‖₂`.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumReport {
    pub step: u64,
    pub side: Side,
    pub k: usize,
    /// LA: descending eigenvalues. SA: ascending.
    pub pairs: Vec<EigenPair>,
    pub converged: Vec<bool>,
    /// Operator applications spent, including residual checks.
    pub applications: u64,
    pub subset_id: String,
    pub l2: f64,
}

impl SpectrumReport {
    pub fn all_converged(&self) -> bool {
        self.converged.iter().all(|&c| c)
    }

    pub fn ensure_converged(self) -> Result<Self> {
        if self.all_converged() {
            Ok(self)
        } else {
            Err(Error::NonConverged { residuals: self.pairs.iter().map(|p| p.residual).collect() })
        }
    }

    /// Converged pairs only.
    pub fn converged_pairs(&self) -> impl Iterator<Item = &EigenPair> {
        self.pairs.iter().zip(&self.converged).filter(|(_, &c)| c).map(|(p, _)| p)
    }
}

/// `k` extreme eigenpairs on one side of any symmetric operator. SA runs the
/// same iteration on the negated operator.
pub fn extreme_pairs<A: SymmetricOperator + ?Sized>(
    a: &A,
    k: usize,
    side: Side,
    cfg: &LanczosConfig,
) -> Result<LanczosOutcome> {
    match side {
        Side::LA => lanczos(a, k, cfg),
        Side::SA => {
            let mut out = lanczos(&Negated(a), k, cfg)?;
            for p in &mut out.pairs {
                p.lambda = -p.lambda;
            }
            Ok(out)
        }
    }
}

/// `k` extreme Hessian eigenpairs at `theta`, with per-pair convergence
/// flags. See [`lanczos_extreme`] for the strict variant.
pub fn lanczos_extreme_flagged<O: Objective>(
    op: &LossOperator<O>,
    theta: &ParamVector,
    k: usize,
    side: Side,
    cfg: &LanczosConfig,
) -> Result<SpectrumReport> {
    let h = HessianAt::new(op, theta)?;
    let out = extreme_pairs(&h, k, side, cfg)?;
    Ok(SpectrumReport {
        step: 0,
        side,
        k,
        pairs: out.pairs,
        converged: out.converged,
        applications: out.applications,
        subset_id: String::new(),
        l2: op.l2(),
    })
}

/// `k` extreme Hessian eigenpairs at `theta`; fails with
/// [`Error::NonConverged`] unless every pair meets the tolerance.
pub fn lanczos_extreme<O: Objective>(
    op: &LossOperator<O>,
    theta: &ParamVector,
    k: usize,
    side: Side,
    cfg: &LanczosConfig,
) -> Result<SpectrumReport> {
    lanczos_extreme_flagged(op, theta, k, side, cfg)?.ensure_converged()
}

/// `vᵀH(θ)v / vᵀv` from one Hessian-vector product.
pub fn rayleigh<O: Objective>(op: &LossOperator<O>, theta: &ParamVector, v: &ParamVector) -> Result<f64> {
    let vv = v.dot(v);
    if vv == 0.0 {
        return Err(Error::Degenerate("Rayleigh quotient of the zero vector".into()));
    }
    let hv = op.hvp(theta, v)?;
    Ok(v.dot(&hv) / vv)
}

pub const DEFAULT_DENSE_CAP: usize = 600;

#[derive(Debug, Clone)]
pub struct DenseSpectrum {
    /// Every eigenpair, descending.
    pub pairs: Vec<EigenPair>,
    /// `‖H − Hᵀ‖_F / ‖H‖_F` of the matrix before symmetrization.
    pub asymmetry: f64,
    /// The symmetrized matrix, row-major.
    pub matrix: DenseSymmetric,
}

/// Materializes `A` column by column and symmetrizes it.
pub fn materialize<A: SymmetricOperator + ?Sized>(a: &A, cap: usize) -> Result<(DenseSymmetric, f64)> {
    let d = a.dim();
    if d > cap {
        return Err(Error::CapExceeded { d, cap });
    }
    let mut cols = Vec::with_capacity(d);
    for i in 0..d {
        let mut e = vec![0.0; d];
        e[i] = 1.0;
        cols.push(a.apply(&e)?);
    }
    let mut rows = vec![0.0; d * d];
    let (mut diff, mut norm) = (0.0, 0.0);
    for i in 0..d {
        for j in 0..d {
            // cols[j][i] is entry (i, j).
            let (hij, hji) = (cols[j][i], cols[i][j]);
            rows[i * d + j] = 0.5 * (hij + hji);
            diff += (hij - hji).powi(2);
            norm += hij * hij;
        }
    }
    let asymmetry = if norm > 0.0 { (diff / norm).sqrt() } else { 0.0 };
    Ok((DenseSymmetric { n: d, rows }, asymmetry))
}

/// Full spectrum of a dense symmetric matrix, descending.
pub fn dense_spectrum(m: &DenseSymmetric) -> Vec<EigenPair> {
    let n = m.n;
    let eig = SymmetricEigen::new(DMatrix::from_row_slice(n, n, &m.rows));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    order
        .into_iter()
        .map(|i| {
            let lambda = eig.eigenvalues[i];
            let col: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
            let vector = ParamVector::new(col).expect("finite eigenvector").canonical_sign();
            let av = m.apply(&vector).expect("matching dimension");
            let residual = av.iter().zip(vector.iter()).map(|(a, v)| (a - lambda * v).powi(2)).sum::<f64>().sqrt();
            EigenPair { lambda, vector, residual }
        })
        .collect()
}

/// Every Hessian eigenpair at `theta` from `d` Hessian-vector products and a
/// dense symmetric eigendecomposition. Limited to `d <= cap`.
pub fn dense_eig_oracle<O: Objective>(op: &LossOperator<O>, theta: &ParamVector, cap: usize) -> Result<DenseSpectrum> {
    let h = HessianAt::new(op, theta)?;
    let (matrix, asymmetry) = materialize(&h, cap)?;
    Ok(DenseSpectrum { pairs: dense_spectrum(&matrix), asymmetry, matrix })
}
