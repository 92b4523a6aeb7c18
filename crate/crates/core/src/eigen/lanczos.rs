use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::jacobi::symmetric_eigen;
use super::{EigenPair, SymmetricOperator};
use crate::data::rng;
use crate::error::{Error, Result};
use crate::ndcore::ParamVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LanczosConfig {
    /// A Ritz pair is converged once `‖Av − λv‖ ≤ tol·max(1, |λ|)`.
    pub tol: f64,
    /// Budget of operator applications across all restarts.
    pub max_iter: usize,
    pub seed: u64,
    /// Krylov dimension; defaults to `min(d, max(4k, 64))`.
    pub krylov_dim: Option<usize>,
}

impl Default for LanczosConfig {
    fn default() -> Self {
        LanczosConfig { tol: 1e-8, max_iter: 5000, seed: 0, krylov_dim: None }
    }
}

#[derive(Debug, Clone)]
pub struct LanczosOutcome {
    /// Largest first.
    pub pairs: Vec<EigenPair>,
    pub converged: Vec<bool>,
    pub applications: u64,
    pub restarts: usize,
}

struct Counted<'a, A: ?Sized> {
    a: &'a A,
    applications: u64,
}

impl<A: SymmetricOperator + ?Sized> Counted<'_, A> {
    fn apply(&mut self, v: &[f64]) -> Result<Vec<f64>> {
        self.applications += 1;
        self.a.apply(v)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Removes the components of `w` along the orthonormal `basis`, twice.
/// Returns the accumulated coefficients.
fn orthogonalize(basis: &[Vec<f64>], w: &mut [f64]) -> Vec<f64> {
    let mut coeffs = vec![0.0; basis.len()];
    for _ in 0..2 {
        for (c, v) in coeffs.iter_mut().zip(basis) {
            let h = dot(v, w);
            axpy(w, -h, v);
            *c += h;
        }
    }
    coeffs
}

/// Seeded random unit vector orthogonal to `basis`, or `None` when the basis
/// already spans the space.
fn fresh_direction(basis: &[Vec<f64>], d: usize, seed: &mut u64) -> Option<Vec<f64>> {
    for _ in 0..8 {
        let mut r = rng(*seed);
        *seed = seed.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut w: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut r)).collect();
        let n0 = norm(&w);
        orthogonalize(basis, &mut w);
        let n1 = norm(&w);
        if n1 > 1e-8 * n0 {
            w.iter_mut().for_each(|x| *x /= n1);
            return Some(w);
        }
    }
    None
}

/// Largest `k` eigenpairs of a symmetric operator.
///
/// Lanczos with full reorthogonalization and thick restarts: the projected
/// matrix `VᵀAV` is accumulated column by column, its wanted Ritz vectors
/// seed the next cycle together with the current residual direction, and
/// iteration stops once all `k` pairs meet the tolerance or the
/// application budget runs out. Reported residuals are recomputed with one
/// extra application per pair.
pub fn lanczos<A: SymmetricOperator + ?Sized>(a: &A, k: usize, cfg: &LanczosConfig) -> Result<LanczosOutcome> {
    let d = a.dim();
    if k == 0 || k > d {
        return Err(Error::invalid(format!("k must be in 1..={d}, got {k}")));
    }
    if !(cfg.tol > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    let m = cfg.krylov_dim.unwrap_or(d.min((4 * k).max(64))).clamp(k.min(d), d);
    let keep = ((m + k) / 2).max(k).min(m.saturating_sub(1)).max(1);
    let mut op = Counted { a, applications: 0 };
    let mut seed = cfg.seed;

    let mut basis: Vec<Vec<f64>> = vec![fresh_direction(&[], d, &mut seed).expect("d >= 1")];
    // Projected matrix, row-major with stride m.
    let mut t = vec![0.0; m * m];
    let mut filled = 0; // columns of t computed so far
    let mut restarts = 0;
    let budget = cfg.max_iter.max(1) as u64;

    loop {
        let mut residual = vec![0.0; d];
        let mut beta = 0.0;
        while filled < basis.len() && op.applications < budget {
            let j = filled;
            let mut w = op.apply(&basis[j])?;
            let h = orthogonalize(&basis, &mut w);
            for (i, &hi) in h.iter().enumerate() {
                t[i * m + j] = hi;
                t[j * m + i] = hi;
            }
            filled += 1;
            beta = norm(&w);
            if basis.len() < m {
                let scale = h.iter().fold(0.0f64, |s, x| s.max(x.abs())).max(1e-300);
                if beta > 1e-12 * scale {
                    w.iter_mut().for_each(|x| *x /= beta);
                    basis.push(w);
                } else if let Some(v) = fresh_direction(&basis, d, &mut seed) {
                    beta = 0.0;
                    basis.push(v);
                } else {
                    beta = 0.0;
                    break;
                }
            } else {
                residual = w;
            }
        }

        let size = filled;
        let mut small = vec![0.0; size * size];
        for i in 0..size {
            small[i * size..(i + 1) * size].copy_from_slice(&t[i * m..i * m + size]);
        }
        let (vals, vecs) = symmetric_eigen(&small, size);
        // Descending order of Ritz values.
        let order: Vec<usize> = (0..size).rev().collect();
        let wanted = k.min(size);
        let estimate = |c: usize| beta * vecs[(size - 1) * size + c].abs();
        let ok = |c: usize| estimate(c) <= cfg.tol * vals[c].abs().max(1.0);
        let done = order[..wanted].iter().all(|&c| ok(c)) && wanted == k;
        let exhausted = op.applications >= budget || size == d;

        let stalled = basis.len() < m && filled == basis.len();
        if done || exhausted || stalled {
            return finish(&mut op, &basis[..size], &vecs, &order[..wanted], cfg, restarts);
        }

        // Thick restart: keep the leading Ritz vectors and the residual
        // direction.
        restarts += 1;
        let kept: Vec<Vec<f64>> =
            order[..keep.min(size)].iter().map(|&c| ritz_vector(&basis[..size], &vecs, size, c)).collect();
        let mut new_t = vec![0.0; m * m];
        for (i, &c) in order[..kept.len()].iter().enumerate() {
            new_t[i * m + i] = vals[c];
        }
        let mut basis_next = kept;
        let mut r = residual;
        let rn = norm(&r);
        orthogonalize(&basis_next, &mut r);
        let rn2 = norm(&r);
        if rn2 > 1e-10 * rn.max(1e-300) && rn2 > 0.0 {
            r.iter_mut().for_each(|x| *x /= rn2);
            basis_next.push(r);
        } else if let Some(v) = fresh_direction(&basis_next, d, &mut seed) {
            basis_next.push(v);
        }
        filled = order[..keep.min(size)].len();
        basis = basis_next;
        t = new_t;
    }
}

fn ritz_vector(basis: &[Vec<f64>], vecs: &[f64], size: usize, c: usize) -> Vec<f64> {
    let d = basis[0].len();
    let mut u = vec![0.0; d];
    for (i, v) in basis.iter().enumerate() {
        axpy(&mut u, vecs[i * size + c], v);
    }
    let n = norm(&u);
    u.iter_mut().for_each(|x| *x /= n);
    u
}

fn finish<A: SymmetricOperator + ?Sized>(
    op: &mut Counted<'_, A>,
    basis: &[Vec<f64>],
    vecs: &[f64],
    wanted: &[usize],
    cfg: &LanczosConfig,
    restarts: usize,
) -> Result<LanczosOutcome> {
    let size = basis.len();
    let mut pairs = Vec::with_capacity(wanted.len());
    let mut converged = Vec::with_capacity(wanted.len());
    for &c in wanted {
        let u = ritz_vector(basis, vecs, size, c);
        let au = op.apply(&u)?;
        let lambda = dot(&u, &au);
        let residual = au.iter().zip(&u).map(|(x, y)| (x - lambda * y).powi(2)).sum::<f64>().sqrt();
        converged.push(residual <= cfg.tol * lambda.abs().max(1.0));
        let vector = ParamVector::new(u)?.canonical_sign();
        pairs.push(EigenPair { lambda, vector, residual });
    }
    Ok(LanczosOutcome { pairs, converged, applications: op.applications, restarts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigen::DenseSymmetric;

    #[test]
    fn rejects_bad_k() {
        let a = DenseSymmetric::diagonal(&[1.0, 2.0]);
        assert!(lanczos(&a, 0, &LanczosConfig::default()).is_err());
        assert!(lanczos(&a, 3, &LanczosConfig::default()).is_err());
    }

    #[test]
    fn restarts_with_small_krylov_space() {
        let diag: Vec<f64> = (0..300).map(|i| (i as f64 * 0.37).sin() * 10.0 + i as f64 * 0.01).collect();
        let a = DenseSymmetric::diagonal(&diag);
        let cfg = LanczosConfig { krylov_dim: Some(20), max_iter: 20_000, ..Default::default() };
        let out = lanczos(&a, 4, &cfg).unwrap();
        let mut sorted = diag.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        assert!(out.restarts > 0);
        for (p, want) in out.pairs.iter().zip(&sorted) {
            assert!((p.lambda - want).abs() < 1e-8, "{} vs {}", p.lambda, want);
        }
        assert!(out.converged.iter().all(|&c| c));
    }

    #[test]
    fn budget_exhaustion_is_flagged() {
        let diag: Vec<f64> = (0..500).map(|i| 1.0 + 1e-6 * i as f64).collect();
        let a = DenseSymmetric::diagonal(&diag);
        let cfg = LanczosConfig { krylov_dim: Some(8), max_iter: 16, ..Default::default() };
        let out = lanczos(&a, 3, &cfg).unwrap();
        assert_eq!(out.pairs.len(), 3);
        assert!(out.applications <= 16 + 3);
    }
}
