//! Training with a running estimate of the most negative Hessian eigenpair.
//!
//! A tracker keeps a unit vector `ṽ` and minimizes `m(v) = vᵀH(θ)v` over the
//! sphere with projected gradient steps, which is power iteration on
//! `I − 2ηH`. The optimizer alternates an RMSProp step with a step along
//! `[g(θ)ᵀṽ]ṽ` whenever the tracked curvature is clearly negative.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::analysis::{optimal_step_search, StepGrid};
use crate::data::rng;
use crate::eigen::EigenPair;
use crate::error::{Error, Result};
use crate::ndcore::{LossOperator, Objective, ParamVector};
use crate::train::{BatchSampler, RmsPropConfig, TrainerState};

/// How far to move along the tracked direction once the gate opens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// `θ ← θ − β·(gᵀṽ)·ṽ`.
    #[default]
    Fixed,
    /// Greedy line search for the multiplier of `(gᵀṽ)·ṽ`, capped at `β`.
    LineSearch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NegCurveConfig {
    /// Step length multiplier along the tracked direction; zero disables it.
    pub beta: f64,
    /// Tracker step size; defaults to `0.4 / λ̂_max`.
    pub eta: Option<f64>,
    /// Tracker steps taken at the initial point before training starts.
    pub warmup: u64,
    /// The negative step fires only when `λ̃ < −threshold`.
    pub threshold: f64,
    /// Tracker steps after every parameter update.
    #[serde(alias = "K")]
    pub k: usize,
    /// Power iterations used to estimate `λ̂_max` for the default `η`.
    pub power_iters: usize,
    pub step_rule: StepRule,
    /// Evaluate tracker products and the projected gradient on the current
    /// minibatch instead of the fixed subset.
    pub minibatch_tracker: bool,
    pub seed: u64,
}

impl Default for NegCurveConfig {
    fn default() -> Self {
        NegCurveConfig {
            beta: 1.0,
            eta: None,
            warmup: 50,
            threshold: 1e-3,
            k: 1,
            power_iters: 10,
            step_rule: StepRule::Fixed,
            minibatch_tracker: false,
            seed: 0,
        }
    }
}

impl NegCurveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::invalid(format!("beta must be finite and >= 0, got {}", self.beta)));
        }
        if let Some(eta) = self.eta {
            if !(eta > 0.0 && eta.is_finite()) {
                return Err(Error::invalid(format!("eta must be positive, got {eta}")));
            }
        }
        if !(self.threshold >= 0.0) {
            return Err(Error::invalid("threshold must be >= 0"));
        }
        if self.power_iters == 0 {
            return Err(Error::invalid("power_iters must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerState {
    /// Unit vector.
    pub v: ParamVector,
    /// Rayleigh quotient of `v` at the last update.
    pub lambda: f64,
    pub eta: f64,
    pub steps: u64,
    pub reseeds: u64,
    seed: u64,
}

/// Seeded Gaussian direction scaled to unit length.
pub fn random_unit(d: usize, seed: u64) -> ParamVector {
    let mut r = rng(seed);
    loop {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut r)).collect();
        if let Some(u) = ParamVector::new(v).ok().and_then(|v| v.normalized()) {
            return u;
        }
    }
}

impl TrackerState {
    /// Starts from `v` (normalized) and records its Rayleigh quotient.
    pub fn new<O: Objective>(
        op: &LossOperator<O>,
        theta: &ParamVector,
        v: ParamVector,
        eta: f64,
        seed: u64,
    ) -> Result<Self> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::invalid(format!("tracker step size must be positive, got {eta}")));
        }
        v.check_dim(op.dim())?;
        let v = v.normalized().ok_or_else(|| Error::Degenerate("zero tracker start vector".into()))?;
        let lambda = rayleigh_terms(op, theta, &v, None)?;
        Ok(TrackerState { v, lambda, eta, steps: 0, reseeds: 0, seed })
    }
}

fn hvp_on<O: Objective>(
    op: &LossOperator<O>,
    theta: &ParamVector,
    v: &ParamVector,
    terms: Option<&[usize]>,
) -> Result<ParamVector> {
    match terms {
        Some(t) => op.hvp_terms(theta, v, t),
        None => op.hvp(theta, v),
    }
}

fn rayleigh_terms<O: Objective>(
    op: &LossOperator<O>,
    theta: &ParamVector,
    v: &ParamVector,
    terms: Option<&[usize]>,
) -> Result<f64> {
    let hv = hvp_on(op, theta, v, terms)?;
    Ok(v.dot(&hv) / v.dot(v))
}

/// Power-iteration estimate of the largest curvature magnitude at `theta`.
pub fn curvature_scale<O: Objective>(
    op: &LossOperator<O>,
    theta: &ParamVector,
    iters: usize,
    seed: u64,
) -> Result<f64> {
    let mut v = random_unit(op.dim(), seed);
    let mut estimate = 0.0;
    for _ in 0..iters.max(1) {
        let hv = op.hvp(theta, &v)?;
        estimate = v.dot(&hv).abs();
        match hv.normalized() {
            Some(u) => v = u,
            None => break,
        }
    }
    Ok(estimate)
}

/// One projected gradient step on `m(v) = vᵀHv` over the unit sphere:
/// `w = ṽ − 2η·Hṽ`, `ṽ ← w/‖w‖`, then `λ̃ ← ṽᵀHṽ`.
pub fn tracker_step<O: Objective>(op: &LossOperator<O>, theta: &ParamVector, state: &mut TrackerState) -> Result<()> {
    tracker_step_on(op, theta, state, None)
}

fn tracker_step_on<O: Objective>(
    op: &LossOperator<O>,
    theta: &ParamVector,
    state: &mut TrackerState,
    terms: Option<&[usize]>,
) -> Result<()> {
    let hv = hvp_on(op, theta, &state.v, terms)?;
    let w = state.v.axpy(-2.0 * state.eta, &hv);
    state.v = if w.norm() < 1e-12 {
        state.reseeds += 1;
        random_unit(op.dim(), state.seed.wrapping_add(state.reseeds))
    } else {
        w.normalized().expect("norm checked above")
    };
    state.lambda = rayleigh_terms(op, theta, &state.v, terms)?;
    state.steps += 1;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepLog {
    /// Optimizer step index before the update.
    pub t: u64,
    /// Minibatch loss at the start of the step.
    pub loss: f64,
    /// Tracked curvature when the gate was evaluated.
    pub lambda: f64,
    /// `g(θ)ᵀṽ` after the RMSProp step.
    pub g_dot_v: f64,
    pub fired: bool,
}

/// One alternation: an RMSProp step on the minibatch, a gated step along
/// `[g(θ)ᵀṽ]ṽ`, then `k` tracker steps at the new parameters.
///
/// `train_op` provides the minibatch terms for the optimizer; `tracker_op`
/// supplies the curvature and the projected gradient.
pub fn alternating_update<O: Objective, P: Objective>(
    train_op: &LossOperator<O>,
    tracker_op: &LossOperator<P>,
    rms: &mut TrainerState,
    tracker: &mut TrackerState,
    batch: &[usize],
    cfg: &NegCurveConfig,
) -> Result<StepLog> {
    if tracker.steps < cfg.warmup {
        return Err(Error::invalid(format!(
            "tracker has taken {} steps, warmup requires {}",
            tracker.steps, cfg.warmup
        )));
    }
    let t = rms.step;
    let (loss, g) = train_op.loss_and_grad_terms(&rms.theta, batch)?;
    rms.rmsprop_step(&g)?;

    let terms = cfg.minibatch_tracker.then_some(batch);
    let lambda = tracker.lambda;
    let gate = cfg.beta > 0.0 && lambda < -cfg.threshold;
    let mut g_dot_v = f64::NAN;
    let mut fired = false;
    if gate {
        let g = match terms {
            Some(b) => tracker_op.loss_and_grad_terms(&rms.theta, b)?.1,
            None => tracker_op.grad(&rms.theta)?,
        };
        g_dot_v = g.dot(&tracker.v);
        let multiplier = match cfg.step_rule {
            StepRule::Fixed => cfg.beta,
            StepRule::LineSearch => {
                let pair = EigenPair { lambda, vector: tracker.v.clone(), residual: f64::NAN };
                let grid = StepGrid { alpha_min: cfg.beta * 1e-6, alpha_max: cfg.beta, per_sign: 16, golden_iters: 20 };
                let r = optimal_step_search(tracker_op, &rms.theta, &pair, &grid)?;
                if r.degenerate || r.improvement == 0.0 {
                    0.0
                } else {
                    r.alpha_star
                }
            }
        };
        if multiplier != 0.0 && g_dot_v != 0.0 {
            rms.theta = rms.theta.axpy(-multiplier * g_dot_v, &tracker.v);
            if !rms.theta.is_finite() {
                return Err(Error::non_finite(format!("parameters after negative-curvature step {t}")));
            }
            fired = true;
        }
    }
    for _ in 0..cfg.k {
        tracker_step_on(tracker_op, &rms.theta, tracker, terms)?;
    }
    Ok(StepLog { t, loss, lambda, g_dot_v, fired })
}

#[derive(Debug, Clone)]
pub struct NegCurveRun {
    pub log: Vec<StepLog>,
    pub theta: ParamVector,
    /// Full training loss at the final parameters.
    pub final_loss: f64,
    pub eta: f64,
    pub hvp_calls: u64,
}

impl NegCurveRun {
    pub fn fired_count(&self) -> usize {
        self.log.iter().filter(|l| l.fired).count()
    }
}

/// Trains from `theta0` with the alternating optimizer for `total_steps`
/// RMSProp updates. Minibatches come from the same sampler as plain
/// training with `batch_seed`, so runs with `beta = 0` match it exactly.
pub fn run_alternating<O: Objective, P: Objective>(
    train_op: &LossOperator<O>,
    tracker_op: &LossOperator<P>,
    theta0: ParamVector,
    rms_cfg: &RmsPropConfig,
    cfg: &NegCurveConfig,
    total_steps: u64,
    batch_seed: u64,
) -> Result<NegCurveRun> {
    cfg.validate()?;
    if tracker_op.dim() != train_op.dim() {
        return Err(Error::DimensionMismatch { expected: train_op.dim(), got: tracker_op.dim() });
    }
    if cfg.minibatch_tracker && tracker_op.terms() != train_op.terms() {
        return Err(Error::invalid("minibatch tracking needs the tracker and training operators to share terms"));
    }
    let calls0 = tracker_op.hvp_count();
    let n = train_op.terms();
    let mut rms = TrainerState::new(theta0, rms_cfg, rms_cfg.steps_per_epoch(n))?;
    let mut sampler = BatchSampler::new(n, rms_cfg.batch_size, batch_seed);
    let eta = match cfg.eta {
        Some(eta) => eta,
        None => {
            let scale = curvature_scale(tracker_op, &rms.theta, cfg.power_iters, cfg.seed ^ 0x5eed)?;
            if scale == 0.0 {
                return Err(Error::Degenerate("zero curvature at the initial point".into()));
            }
            0.4 / scale
        }
    };
    let start = random_unit(train_op.dim(), cfg.seed);
    let mut tracker = TrackerState::new(tracker_op, &rms.theta, start, eta, cfg.seed)?;
    for _ in 0..cfg.warmup {
        tracker_step(tracker_op, &rms.theta, &mut tracker)?;
    }
    let mut log = Vec::with_capacity(total_steps as usize);
    while rms.step < total_steps {
        let batch = sampler.next_batch();
        log.push(alternating_update(train_op, tracker_op, &mut rms, &mut tracker, &batch, cfg)?);
    }
    let final_loss = train_op.loss(&rms.theta)?;
    Ok(NegCurveRun { log, theta: rms.theta, final_loss, eta, hvp_calls: tracker_op.hvp_count() - calls0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ndcore::Quadratic;
    use crate::train::{train_objective, Schedule};

    fn tracker_on(q: &Quadratic, v: Vec<f64>, eta: f64) -> (LossOperator<&Quadratic>, TrackerState) {
        let op = LossOperator::new(q, 0.0).unwrap();
        let theta = ParamVector::zeros(op.dim());
        let st = TrackerState::new(&op, &theta, ParamVector::new(v).unwrap(), eta, 1).unwrap();
        (op, st)
    }

    #[test]
    fn eigenvector_is_a_fixed_point() {
        let q = Quadratic::diagonal(vec![3.0, 1.0, -2.0]);
        let (op, mut st) = tracker_on(&q, vec![0.0, 0.0, 1.0], 0.1);
        let theta = ParamVector::zeros(3);
        tracker_step(&op, &theta, &mut st).unwrap();
        assert!((st.v[2].abs() - 1.0).abs() < 1e-15);
        assert_eq!(st.lambda, -2.0);
    }

    #[test]
    fn identity_keeps_any_direction() {
        let q = Quadratic::diagonal(vec![1.0; 4]);
        let v0 = ParamVector::new(vec![0.5, -0.5, 0.5, 0.5]).unwrap();
        let (op, mut st) = tracker_on(&q, v0.to_vec(), 0.2);
        tracker_step(&op, &ParamVector::zeros(4), &mut st).unwrap();
        for i in 0..4 {
            assert!((st.v[i] - v0[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn collapsed_step_reseeds() {
        // η = 1/(2λ) maps every vector to zero.
        let q = Quadratic::diagonal(vec![2.0, 2.0]);
        let (op, mut st) = tracker_on(&q, vec![1.0, 0.0], 0.25);
        tracker_step(&op, &ParamVector::zeros(2), &mut st).unwrap();
        assert_eq!(st.reseeds, 1);
        assert!((st.v.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn convex_problem_never_fires() {
        let q = Quadratic::diagonal(vec![1.0, 2.0, 3.0]).with_linear(vec![1.0, 1.0, 1.0]).unwrap();
        let op = LossOperator::new(&q, 0.0).unwrap();
        let rms = RmsPropConfig { base_lr: 0.05, batch_size: 1, ..Default::default() };
        let cfg = NegCurveConfig { warmup: 5, ..Default::default() };
        let run = run_alternating(&op, &op, ParamVector::zeros(3), &rms, &cfg, 30, 3).unwrap();
        assert_eq!(run.fired_count(), 0);
        assert!(run.log.iter().all(|l| l.lambda > 0.0));
    }

    #[test]
    fn zero_beta_matches_plain_rmsprop() {
        let q = Quadratic::diagonal(vec![1.0, -0.5]).with_linear(vec![0.3, 0.2]).unwrap();
        let op = LossOperator::new(&q, 0.0).unwrap();
        let rms = RmsPropConfig { base_lr: 0.01, batch_size: 1, ..Default::default() };
        let cfg = NegCurveConfig { beta: 0.0, warmup: 3, ..Default::default() };
        let theta0 = ParamVector::new(vec![0.1, 0.1]).unwrap();
        let run = run_alternating(&op, &op, theta0.clone(), &rms, &cfg, 25, 9).unwrap();
        let plain =
            train_objective(&op, theta0, &rms, Schedule { total_steps: 25, checkpoint_every: 0, seed: 9 }).unwrap();
        assert_eq!(run.theta, plain.last().unwrap().theta);
        assert_eq!(run.fired_count(), 0);
    }

    #[test]
    fn cold_tracker_is_rejected() {
        let q = Quadratic::diagonal(vec![1.0]);
        let op = LossOperator::new(&q, 0.0).unwrap();
        let mut rms = TrainerState::new(ParamVector::zeros(1), &RmsPropConfig::default(), 1).unwrap();
        let mut tr = TrackerState::new(&op, &ParamVector::zeros(1), ParamVector::basis(1, 0), 0.1, 0).unwrap();
        let cfg = NegCurveConfig::default();
        assert!(alternating_update(&op, &op, &mut rms, &mut tr, &[0], &cfg).is_err());
    }
}
