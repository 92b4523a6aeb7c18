//! A small trained classifier together with its extreme Hessian eigenpairs,
//! ready for interactive queries.

use std::sync::Arc;

use hessianscope::analysis::{directional_loss_profile, optimal_step_search, LossProfile, StepGrid};
use hessianscope::data::{make_blobs, rng};
use hessianscope::eigen::{lanczos_extreme, EigenPair, LanczosConfig, Side};
use hessianscope::model::{init_params, Activation, Batch, MlpObjective, ModelSpec};
use hessianscope::ndcore::{LossOperator, ParamVector};
use hessianscope::negcurve::{curvature_scale, tracker_step, TrackerState};
use hessianscope::train::{train_objective, RmsPropConfig, Schedule};
use hessianscope::{Error, Result};
use rand::Rng;

/// Pairs extracted per side of the spectrum.
pub const PAIRS_PER_SIDE: usize = 4;

/// A `[2, 8, 3]` tanh network (51 parameters) trained on three 2-D blobs.
pub struct Demo {
    op: LossOperator<MlpObjective>,
    theta: ParamVector,
    /// Largest first, then smallest; descending eigenvalue order.
    pairs: Vec<EigenPair>,
    seed: u64,
}

/// Line-search outcome along one eigenvector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepPoint {
    pub lambda: f64,
    pub alpha_star: f64,
    pub improvement: f64,
}

impl Demo {
    pub fn new(seed: u64, train_steps: u64) -> Result<Demo> {
        let data = Arc::new(make_blobs(3, 60, 2, 0.6, seed)?);
        let spec = ModelSpec::new(vec![2, 8, 3], Activation::Tanh, seed)?;
        let op = LossOperator::new(MlpObjective::new(spec.clone(), Batch::full(data))?, 0.0)?;
        let cfg = RmsPropConfig { base_lr: 0.02, ..RmsPropConfig::default() };
        let schedule = Schedule { total_steps: train_steps, checkpoint_every: 0, seed };
        let trajectory = train_objective(&op, init_params(&spec)?, &cfg, schedule)?;
        let theta = trajectory.last().expect("final checkpoint").theta.clone();
        let lanczos = LanczosConfig { seed, ..LanczosConfig::default() };
        let mut pairs = lanczos_extreme(&op, &theta, PAIRS_PER_SIDE, Side::LA, &lanczos)?.pairs;
        let mut sa = lanczos_extreme(&op, &theta, PAIRS_PER_SIDE, Side::SA, &lanczos)?.pairs;
        sa.reverse();
        pairs.extend(sa);
        Ok(Demo { op, theta, pairs, seed })
    }

    pub fn operator(&self) -> &LossOperator<MlpObjective> {
        &self.op
    }

    pub fn theta(&self) -> &ParamVector {
        &self.theta
    }

    pub fn pairs(&self) -> &[EigenPair] {
        &self.pairs
    }

    pub fn loss(&self) -> Result<f64> {
        self.op.loss(&self.theta)
    }

    fn pair(&self, index: usize) -> Result<&EigenPair> {
        self.pairs.get(index).ok_or_else(|| {
            Error::InvalidArgument(format!("eigenpair index {index} out of range 0..{}", self.pairs.len()))
        })
    }

    /// True loss and quadratic model along eigenvector `index`.
    pub fn profile(&self, index: usize, alpha_max: f64, points: usize) -> Result<LossProfile> {
        directional_loss_profile(&self.op, &self.theta, self.pair(index)?, alpha_max, points)
    }

    /// Rayleigh quotients of the smallest-curvature tracker over `steps`
    /// updates, with step size `eta_scale / λmax`.
    pub fn track(&self, eta_scale: f64, steps: usize) -> Result<Vec<f64>> {
        let lambda_max = curvature_scale(&self.op, &self.theta, 20, self.seed)?;
        let mut r = rng(self.seed.wrapping_add(1));
        let start = ParamVector::new((0..self.op.dim()).map(|_| r.random_range(-1.0..1.0)).collect())?;
        let mut state = TrackerState::new(&self.op, &self.theta, start, eta_scale / lambda_max, self.seed)?;
        let mut out = Vec::with_capacity(steps + 1);
        out.push(state.lambda);
        for _ in 0..steps {
            tracker_step(&self.op, &self.theta, &mut state)?;
            out.push(state.lambda);
        }
        Ok(out)
    }

    /// Greedy line search along every eigenvector whose direction is not
    /// orthogonal to the gradient.
    pub fn line_search(&self) -> Result<Vec<StepPoint>> {
        let grid = StepGrid::default();
        let mut out = Vec::new();
        for pair in &self.pairs {
            let r = optimal_step_search(&self.op, &self.theta, pair, &grid)?;
            if !r.degenerate {
                out.push(StepPoint { lambda: r.lambda, alpha_star: r.alpha_star, improvement: r.improvement });
            }
        }
        Ok(out)
    }
}
