//! Curvature diagnostics along Hessian eigendirections: curvature of a fixed
//! direction across a trajectory, the true loss against its quadratic model
//! along a direction, least-squares curvature fits at a finite scale, and
//! empirically optimal step sizes.

use serde::Serialize;

use crate::eigen::{rayleigh, EigenPair};
use crate::error::{Error, Result};
use crate::ndcore::{LossOperator, Objective, ParamVector};
use crate::train::Checkpoint;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvatureSeries {
    pub t0: u64,
    pub probe_lambda: f64,
    /// `(t, vᵀH(t)v)` for each checkpoint, in trajectory order.
    pub samples: Vec<(u64, f64)>,
}

impl CurvatureSeries {
    pub fn at(&self, t: u64) -> Option<f64> {
        self.samples.iter().find(|(s, _)| *s == t).map(|&(_, c)| c)
    }
}

/// Curvature of a probe eigenvector, computed at `t0`, under the Hessian of
/// every checkpoint. The same operator (and so the same fixed subset) is
/// used throughout.
pub fn curvature_over_time<O: Objective>(
    op: &LossOperator<O>,
    checkpoints: &[Checkpoint],
    t0: u64,
    probe: &EigenPair,
) -> Result<CurvatureSeries> {
    if checkpoints.is_empty() {
        return Err(Error::MissingCheckpoint { step: t0, available: vec![] });
    }
    if !checkpoints.iter().any(|c| c.step == t0) {
        return Err(Error::MissingCheckpoint { step: t0, available: checkpoints.iter().map(|c| c.step).collect() });
    }
    probe.vector.check_dim(op.dim())?;
    let samples =
        checkpoints.iter().map(|c| Ok((c.step, rayleigh(op, &c.theta, &probe.vector)?))).collect::<Result<Vec<_>>>()?;
    Ok(CurvatureSeries { t0, probe_lambda: probe.lambda, samples })
}

/// True loss `L(θ − α·s·v)` against the quadratic model
/// `L(θ) − α·s² + ½·α²·s²·λ`, with `s = g(θ)ᵀv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossProfile {
    pub lambda: f64,
    pub projection: f64,
    pub base_loss: f64,
    pub alpha_max: f64,
    pub alphas: Vec<f64>,
    /// `None` where the loss was not finite.
    pub true_loss: Vec<Option<f64>>,
    pub quad_model: Vec<f64>,
}

impl LossProfile {
    /// Largest `|true − model|` over the finite points.
    pub fn max_gap(&self) -> f64 {
        self.true_loss.iter().zip(&self.quad_model).filter_map(|(t, q)| t.map(|t| (t - q).abs())).fold(0.0, f64::max)
    }
}

/// Symmetric grid of `n` points on `[−alpha_max, alpha_max]`; `n` must be
/// odd so that 0 is included exactly.
pub fn symmetric_grid(alpha_max: f64, n: usize) -> Result<Vec<f64>> {
    if n < 3 || n.is_multiple_of(2) {
        return Err(Error::invalid(format!("profile needs an odd number of points >= 3, got {n}")));
    }
    if !(alpha_max > 0.0 && alpha_max.is_finite()) {
        return Err(Error::invalid("alpha_max must be positive"));
    }
    let h = (n / 2) as f64;
    Ok((0..n).map(|j| alpha_max * (j as f64 - h) / h).collect())
}

pub fn quadratic_model(base_loss: f64, projection: f64, lambda: f64, alpha: f64) -> f64 {
    let s2 = projection * projection;
    base_loss - alpha * s2 + 0.5 * alpha * alpha * s2 * lambda
}

fn displaced_loss<O: Objective>(
    op: &LossOperator<O>,
    theta: &ParamVector,
    direction: &ParamVector,
    step: f64,
) -> Result<Option<f64>> {
    if step == 0.0 {
        return op.loss(theta).map(Some);
    }
    let point = theta.axpy(-step, direction);
    if !point.is_finite() {
        return Ok(None);
    }
    match op.loss(&point) {
        Ok(l) => Ok(Some(l)),
        Err(Error::NonFinite { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

pub fn directional_loss_profile<O: Objective>(
    op: &LossOperator<O>,
    theta: &ParamVector,
    pair: &EigenPair,
    alpha_max: f64,
    n_points: usize,
) -> Result<LossProfile> {
    pair.vector.check_dim(op.dim())?;
    let alphas = symmetric_grid(alpha_max, n_points)?;
    let (base_loss, grad) = op.loss_and_grad(theta)?;
    let s = grad.dot(&pair.vector);
    let mut true_loss = Vec::with_capacity(alphas.len());
    for &a in &alphas {
        true_loss.push(if a == 0.0 { Some(base_loss) } else { displaced_loss(op, theta, &pair.vector, a * s)? });
    }
    let quad_model = alphas.iter().map(|&a| quadratic_model(base_loss, s, pair.lambda, a)).collect();
    Ok(LossProfile { lambda: pair.lambda, projection: s, base_loss, alpha_max, alphas, true_loss, quad_model })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadraticFit {
    pub lambda: f64,
    pub alpha_max: f64,
    /// Fitted curvature `2·c₂` in arc length `u = α·s`; `None` when the fit
    /// is degenerate.
    pub curvature: Option<f64>,
    pub coefficients: Option<[f64; 3]>,
    /// Root-mean-square residual of the fit.
    pub residual: f64,
    pub degenerate: bool,
}

/// Least-squares `c₀ + c₁u + c₂u²` through the finite profile points, in
/// the arc-length coordinate `u = α·s`.
pub fn quadratic_fit(profile: &LossProfile) -> QuadraticFit {
    let degenerate = QuadraticFit {
        lambda: profile.lambda,
        alpha_max: profile.alpha_max,
        curvature: None,
        coefficients: None,
        residual: f64::NAN,
        degenerate: true,
    };
    let pts: Vec<(f64, f64)> = profile
        .alphas
        .iter()
        .zip(&profile.true_loss)
        .filter_map(|(&a, l)| l.map(|l| (a * profile.projection, l)))
        .collect();
    let h = pts.iter().fold(0.0f64, |m, (u, _)| m.max(u.abs()));
    let mut distinct: Vec<f64> = pts.iter().map(|p| p.0).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if profile.projection == 0.0 || h == 0.0 || !h.is_finite() || distinct.len() < 3 {
        return degenerate;
    }
    let xs: Vec<f64> = pts.iter().map(|(u, _)| u / h).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let Some(c) = least_squares_quadratic(&xs, &ys) else {
        return degenerate;
    };
    let coefficients = [c[0], c[1] / h, c[2] / (h * h)];
    let residual = (xs.iter().zip(&ys).map(|(x, y)| (y - (c[0] + c[1] * x + c[2] * x * x)).powi(2)).sum::<f64>()
        / xs.len() as f64)
        .sqrt();
    QuadraticFit {
        lambda: profile.lambda,
        alpha_max: profile.alpha_max,
        curvature: Some(2.0 * coefficients[2]),
        coefficients: Some(coefficients),
        residual,
        degenerate: false,
    }
}

/// Least squares on the columns `[1, x, x²]` via Householder QR.
fn least_squares_quadratic(xs: &[f64], ys: &[f64]) -> Option<[f64; 3]> {
    let n = xs.len();
    let mut a: Vec<[f64; 3]> = xs.iter().map(|&x| [1.0, x, x * x]).collect();
    let mut b = ys.to_vec();
    let mut r = [[0.0; 3]; 3];
    for col in 0..3 {
        let norm = (col..n).map(|i| a[i][col].powi(2)).sum::<f64>().sqrt();
        if norm == 0.0 {
            return None;
        }
        let alpha = if a[col][col] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (col..n).map(|i| a[i][col]).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 > 0.0 {
            for c in col..3 {
                let proj: f64 = (col..n).map(|i| v[i - col] * a[i][c]).sum::<f64>() * 2.0 / vnorm2;
                for i in col..n {
                    a[i][c] -= proj * v[i - col];
                }
            }
            let proj: f64 = (col..n).map(|i| v[i - col] * b[i]).sum::<f64>() * 2.0 / vnorm2;
            for i in col..n {
                b[i] -= proj * v[i - col];
            }
        }
        for c in col..3 {
            r[col][c] = a[col][c];
        }
    }
    let scale = r[0][0].abs();
    if (0..3).any(|i| r[i][i].abs() <= 1e-12 * scale) {
        return None;
    }
    let mut c = [0.0; 3];
    for i in (0..3).rev() {
        let tail: f64 = (i + 1..3).map(|j| r[i][j] * c[j]).sum();
        c[i] = (b[i] - tail) / r[i][i];
    }
    Some(c)
}

/// Step grid for the greedy line search: 0 plus `per_sign` log-spaced
/// magnitudes on `[alpha_min, alpha_max]` for each sign, refined by golden
/// section between the neighbors of the best grid point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepGrid {
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub per_sign: usize,
    pub golden_iters: usize,
}

impl Default for StepGrid {
    fn default() -> Self {
        StepGrid { alpha_min: 1e-4, alpha_max: 100.0, per_sign: 64, golden_iters: 30 }
    }
}

impl StepGrid {
    /// Ascending grid values, `2·per_sign + 1` of them.
    pub fn values(&self) -> Result<Vec<f64>> {
        if !(self.alpha_min > 0.0 && self.alpha_max > self.alpha_min && self.alpha_max.is_finite()) {
            return Err(Error::invalid("step grid needs 0 < alpha_min < alpha_max"));
        }
        if self.per_sign < 2 {
            return Err(Error::invalid("step grid needs at least 2 points per sign"));
        }
        let (lo, hi) = (self.alpha_min.ln(), self.alpha_max.ln());
        let n = self.per_sign;
        let mut mags: Vec<f64> = (0..n).map(|i| (lo + (hi - lo) * i as f64 / (n - 1) as f64).exp()).collect();
        mags[0] = self.alpha_min;
        mags[n - 1] = self.alpha_max;
        let mut grid: Vec<f64> = mags.iter().rev().map(|m| -m).collect();
        grid.push(0.0);
        grid.extend(mags);
        Ok(grid)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LineSearchResult {
    pub index: usize,
    pub lambda: f64,
    pub projection: f64,
    pub alpha_star: f64,
    pub base_loss: f64,
    pub achieved_loss: f64,
    /// `L(θ) − min loss`, never negative.
    pub improvement: f64,
    /// The minimizer is a grid endpoint.
    pub boundary: bool,
    /// `s = 0`: the direction is orthogonal to the gradient.
    pub degenerate: bool,
}

impl LineSearchResult {
    pub fn inv_alpha_star(&self) -> f64 {
        1.0 / self.alpha_star
    }

    pub fn abs_alpha_lambda(&self) -> f64 {
        (self.alpha_star * self.lambda).abs()
    }
}

const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// Greedy line search for `argmin_α L(θ − α·s·v)`.
pub fn optimal_step_search<O: Objective>(
    op: &LossOperator<O>,
    theta: &ParamVector,
    pair: &EigenPair,
    grid: &StepGrid,
) -> Result<LineSearchResult> {
    pair.vector.check_dim(op.dim())?;
    let alphas = grid.values()?;
    let (base_loss, g) = op.loss_and_grad(theta)?;
    let s = g.dot(&pair.vector);
    let mut result = LineSearchResult {
        index: 0,
        lambda: pair.lambda,
        projection: s,
        alpha_star: 0.0,
        base_loss,
        achieved_loss: base_loss,
        improvement: 0.0,
        boundary: false,
        degenerate: s == 0.0,
    };
    if s == 0.0 {
        return Ok(result);
    }
    let f = |a: f64| -> Result<f64> {
        if a == 0.0 {
            return Ok(base_loss);
        }
        Ok(displaced_loss(op, theta, &pair.vector, a * s)?.unwrap_or(f64::INFINITY))
    };
    let values: Vec<f64> = alphas.iter().map(|&a| f(a)).collect::<Result<_>>()?;
    let (best, &best_val) = values.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).expect("non-empty grid");
    if !best_val.is_finite() {
        return Err(Error::non_finite("every line-search evaluation"));
    }
    let (mut alpha_star, mut min_val) = (alphas[best], best_val);
    let last = alphas.len() - 1;
    if best == 0 || best == last {
        result.boundary = true;
    } else {
        let (mut lo, mut hi) = (alphas[best - 1], alphas[best + 1]);
        let mut x1 = hi - GOLDEN * (hi - lo);
        let mut x2 = lo + GOLDEN * (hi - lo);
        let (mut f1, mut f2) = (f(x1)?, f(x2)?);
        for _ in 0..grid.golden_iters {
            if f1 <= f2 {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - GOLDEN * (hi - lo);
                f1 = f(x1)?;
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + GOLDEN * (hi - lo);
                f2 = f(x2)?;
            }
            for (x, fx) in [(x1, f1), (x2, f2)] {
                if fx < min_val {
                    alpha_star = x;
                    min_val = fx;
                }
            }
        }
    }
    result.alpha_star = alpha_star;
    result.achieved_loss = min_val;
    result.improvement = (base_loss - min_val).max(0.0);
    Ok(result)
}

/// Line search along every pair, indexed by position.
///
/// Directions are independent; up to `jobs` of them are searched
/// concurrently and results keep the input order.
pub fn improvement_report<O: Objective>(
    op: &LossOperator<O>,
    theta: &ParamVector,
    pairs: &[EigenPair],
    grid: &StepGrid,
    jobs: usize,
) -> Result<Vec<LineSearchResult>> {
    if pairs.is_empty() {
        return Err(Error::invalid("improvement report needs at least one eigenpair"));
    }
    let results = crate::par::map(jobs, pairs, |pair| optimal_step_search(op, theta, pair, grid));
    results.into_iter().enumerate().map(|(i, r)| r.map(|r| LineSearchResult { index: i, ..r })).collect()
}

/// Sample Pearson correlation; `None` with fewer than two points or zero
/// variance.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}
