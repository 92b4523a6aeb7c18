mod common;

use std::sync::Arc;

use common::{cosine, mlp_op, random_dataset, random_symmetric, random_vector};
use hessianscope::data::{fixed_subset, make_blobs, rng, Dataset, Provenance};
use hessianscope::eigen::{
    dense_eig_oracle, dense_spectrum, extreme_pairs, lanczos_extreme, rayleigh, DenseSymmetric, LanczosConfig, Side,
    SymmetricOperator,
};
use hessianscope::model::{init_params, Activation, Batch, MlpObjective, ModelSpec};
use hessianscope::ndcore::{LossOperator, Objective, ParamVector, Scalar, Tape, Var};
use hessianscope::train::{train_objective, RmsPropConfig, Schedule};
use rand::Rng;

#[test]
fn random_symmetric_extremes_match_dense_oracle() {
    let n = 200;
    let m = DenseSymmetric::new(n, random_symmetric(n, 2024)).unwrap();
    let oracle = dense_spectrum(&m);
    let cfg = LanczosConfig { seed: 3, ..LanczosConfig::default() };
    for side in [Side::LA, Side::SA] {
        let out = extreme_pairs(&m, 5, side, &cfg).unwrap();
        assert!(out.converged.iter().all(|&c| c), "{side}: {:?}", out.converged);
        for (i, p) in out.pairs.iter().enumerate() {
            let o = match side {
                Side::LA => &oracle[i],
                Side::SA => &oracle[n - 1 - i],
            };
            assert!((p.lambda - o.lambda).abs() <= 1e-8 * o.lambda.abs(), "{side} {i}: {} vs {}", p.lambda, o.lambda);
            let c = cosine(&p.vector, &o.vector).abs();
            assert!(c > 1.0 - 1e-8, "{side} {i}: cosine {c}");
            assert!((p.vector.norm() - 1.0).abs() < 1e-10);
            let av = m.apply(&p.vector).unwrap();
            let res: f64 = av.iter().zip(p.vector.iter()).map(|(a, v)| (a - p.lambda * v).powi(2)).sum::<f64>().sqrt();
            assert!(res <= 1e-8 * p.lambda.abs().max(1.0));
        }
    }
}

fn d100_model() -> (LossOperator<MlpObjective>, ParamVector) {
    let op = mlp_op(&[3, 12, 4], Activation::Softplus, random_dataset(20, 3, 4, 17), 0.0);
    assert_eq!(op.dim(), 100);
    let theta = random_vector(100, 1.0, 18);
    (op, theta)
}

#[test]
fn hessian_of_smooth_model_is_symmetric_to_round_off() {
    let (op, theta) = d100_model();
    let dense = dense_eig_oracle(&op, &theta, 600).unwrap();
    assert!(dense.asymmetry < 1e-8, "asymmetry {}", dense.asymmetry);
    assert_eq!(dense.pairs.len(), 100);
    assert!(dense.pairs.windows(2).all(|w| w[0].lambda >= w[1].lambda));
}

#[test]
fn rayleigh_matches_dense_quadratic_form() {
    let (op, theta) = d100_model();
    let dense = dense_eig_oracle(&op, &theta, 600).unwrap();
    for seed in 0..5 {
        let v = random_vector(100, 1.0, 50 + seed);
        let hv = dense.matrix.apply(&v).unwrap();
        let want = v.dot(&ParamVector::new(hv).unwrap()) / v.dot(&v);
        let got = rayleigh(&op, &theta, &v).unwrap();
        assert!((got - want).abs() <= 1e-10 * want.abs().max(1.0), "{got} vs {want}");
    }
}

/// Mean of `½(wᵀx + b − y)²` over a fixed sample list.
struct LinearMse {
    xs: Vec<Vec<f64>>,
    ys: Vec<f64>,
}

impl Objective for LinearMse {
    fn dim(&self) -> usize {
        self.xs[0].len() + 1
    }
    fn terms(&self) -> usize {
        self.xs.len()
    }
    fn record<S: Scalar>(&self, tape: &mut Tape<S>, term: usize) -> hessianscope::Result<Var> {
        let n = self.xs[0].len();
        let w: Vec<Var> = (0..n).map(Var::input).collect();
        let pred = tape.affine_const(&w, &self.xs[term], Var::input(n));
        let r = tape.add_const(pred, S::constant(-self.ys[term]));
        let sq = tape.square(r);
        Ok(tape.scale(sq, 0.5))
    }
}

#[test]
fn linear_least_squares_hessian_is_positive_semidefinite() {
    let mut r = rng(4);
    let xs: Vec<Vec<f64>> = (0..30).map(|_| (0..6).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
    let ys: Vec<f64> = (0..30).map(|_| r.random_range(-1.0..1.0)).collect();
    let op = LossOperator::new(LinearMse { xs, ys }, 0.0).unwrap();
    let theta = random_vector(7, 1.0, 5);
    let dense = dense_eig_oracle(&op, &theta, 600).unwrap();
    let smallest = dense.pairs.last().unwrap().lambda;
    assert!(smallest >= -1e-12, "smallest eigenvalue {smallest}");
}

fn trained_blobs_model(
    per_class: usize,
    spread: f64,
) -> (LossOperator<MlpObjective>, ParamVector, Arc<Dataset>, ModelSpec) {
    let data = Arc::new(make_blobs(3, per_class, 4, spread, 12).unwrap());
    let spec = ModelSpec::new(vec![4, 20, 3], Activation::Tanh, 2).unwrap();
    let op = LossOperator::new(MlpObjective::new(spec.clone(), Batch::full(data.clone())).unwrap(), 0.0).unwrap();
    let cfg = RmsPropConfig { base_lr: 0.01, ..RmsPropConfig::default() };
    let traj = train_objective(
        &op,
        init_params(&spec).unwrap(),
        &cfg,
        Schedule { total_steps: 150, checkpoint_every: 0, seed: 1 },
    )
    .unwrap();
    let theta = traj.last().unwrap().theta.clone();
    (op, theta, data, spec)
}

#[test]
fn trained_model_extremes_lie_in_dense_spectrum() {
    let (op, theta, _, _) = trained_blobs_model(80, 0.4);
    assert!(op.dim() <= 500);
    let dense = dense_eig_oracle(&op, &theta, 600).unwrap();
    let d = dense.pairs.len();
    let cfg = LanczosConfig::default();
    let la = lanczos_extreme(&op, &theta, 5, Side::LA, &cfg).unwrap();
    let sa = lanczos_extreme(&op, &theta, 5, Side::SA, &cfg).unwrap();
    assert!(la.applications >= 1 && sa.applications >= 1);
    for (i, p) in la.pairs.iter().enumerate() {
        let o = &dense.pairs[i];
        assert!((p.lambda - o.lambda).abs() <= 1e-8 * o.lambda.abs().max(1.0), "LA {i}: {} vs {}", p.lambda, o.lambda);
    }
    for (i, p) in sa.pairs.iter().enumerate() {
        let o = &dense.pairs[d - 1 - i];
        assert!((p.lambda - o.lambda).abs() <= 1e-8 * o.lambda.abs().max(1.0), "SA {i}: {} vs {}", p.lambda, o.lambda);
    }
    let min_la = la.pairs.iter().map(|p| p.lambda).fold(f64::INFINITY, f64::min);
    let max_sa = sa.pairs.iter().map(|p| p.lambda).fold(f64::NEG_INFINITY, f64::max);
    assert!(min_la >= max_sa);
    for p in la.pairs.iter().chain(&sa.pairs) {
        let hv = op.hvp(&theta, &p.vector).unwrap();
        let res = hv.axpy(-p.lambda, &p.vector).norm();
        assert!(res <= 1e-8 * p.lambda.abs().max(1.0));
    }
}

#[test]
fn half_subset_top_eigenvalues_track_full_set() {
    let (full, theta, data, spec) = trained_blobs_model(400, 0.8);
    let subset = fixed_subset(&data, 0.5, 77).unwrap();
    let half = LossOperator::new(
        MlpObjective::new(spec, Batch::new(data.clone(), subset.indices().to_vec()).unwrap()).unwrap(),
        0.0,
    )
    .unwrap();
    let cfg = LanczosConfig::default();
    let a = lanczos_extreme(&full, &theta, 5, Side::LA, &cfg).unwrap();
    let b = lanczos_extreme(&half, &theta, 5, Side::LA, &cfg).unwrap();
    for (x, y) in a.pairs.iter().zip(&b.pairs) {
        let rel = (y.lambda - x.lambda).abs() / x.lambda.abs();
        assert!(rel < 0.2, "full {} vs half {}", x.lambda, y.lambda);
    }
}

#[test]
fn dense_oracle_refuses_dimension_above_cap() {
    let data = Arc::new(Dataset::new(vec![0.5; 4], 2, vec![0, 1], 2, Provenance::Memory).unwrap());
    let op = mlp_op(&[2, 30, 2], Activation::Tanh, data, 0.0);
    let err = dense_eig_oracle(&op, &ParamVector::zeros(op.dim()), 50).unwrap_err();
    assert!(err.to_string().contains("152"), "{err}");
}
