mod common;

use common::{fd_grad, fd_hvp, max_rel_err, mlp_op, random_dataset, random_vector};
use hessianscope::model::Activation;
use hessianscope::ndcore::{LossOperator, Objective, ParamVector, Quadratic, Scalar, Tape, Var};
use proptest::prelude::*;

/// `Σ θᵢ³`.
struct CubeSum(usize);

impl Objective for CubeSum {
    fn dim(&self) -> usize {
        self.0
    }
    fn terms(&self) -> usize {
        1
    }
    fn record<S: Scalar>(&self, tape: &mut Tape<S>, _term: usize) -> hessianscope::Result<Var> {
        let cubes: Vec<Var> = (0..self.0).map(|i| tape.powi(Var::input(i), 3)).collect();
        Ok(tape.sum(&cubes))
    }
}

/// `θ₁²·θ₂`.
struct SquareTimes;

impl Objective for SquareTimes {
    fn dim(&self) -> usize {
        2
    }
    fn terms(&self) -> usize {
        1
    }
    fn record<S: Scalar>(&self, tape: &mut Tape<S>, _term: usize) -> hessianscope::Result<Var> {
        let sq = tape.square(Var::input(0));
        Ok(tape.mul(sq, Var::input(1)))
    }
}

fn pv(v: &[f64]) -> ParamVector {
    ParamVector::new(v.to_vec()).unwrap()
}

#[test]
fn diagonal_quadratic_value_gradient_and_hvp() {
    let op = LossOperator::new(Quadratic::diagonal(vec![2.0, -1.0]), 0.0).unwrap();
    let theta = pv(&[1.0, 1.0]);
    assert_eq!(op.loss(&theta).unwrap(), 0.5);
    assert_eq!(op.grad(&theta).unwrap().as_slice(), &[2.0, -1.0]);
    for t in [[1.0, 1.0], [-3.0, 0.25], [0.0, 0.0]] {
        assert_eq!(op.hvp(&pv(&t), &pv(&[1.0, 0.0])).unwrap().as_slice(), &[2.0, 0.0]);
    }
}

#[test]
fn odd_loss_has_zero_gradient_at_origin() {
    let op = LossOperator::new(CubeSum(4), 0.0).unwrap();
    assert_eq!(op.grad(&ParamVector::zeros(4)).unwrap().as_slice(), &[0.0; 4]);
}

#[test]
fn hand_computed_mixed_hessian() {
    let op = LossOperator::new(SquareTimes, 0.0).unwrap();
    let hv = op.hvp(&pv(&[1.0, 1.0]), &pv(&[1.0, 0.0])).unwrap();
    assert_eq!(hv.as_slice(), &[2.0, 2.0]);
    let hv = op.hvp(&pv(&[1.0, 1.0]), &pv(&[0.0, 1.0])).unwrap();
    assert_eq!(hv.as_slice(), &[2.0, 0.0]);
}

#[test]
fn regularizer_adds_half_weighted_square_norm() {
    let data = random_dataset(6, 3, 2, 11);
    let plain = mlp_op(&[3, 4, 2], Activation::Tanh, data.clone(), 0.0);
    let w = 0.03;
    let reg = mlp_op(&[3, 4, 2], Activation::Tanh, data, w);
    let theta = random_vector(plain.dim(), 0.8, 5);
    let diff = reg.loss(&theta).unwrap() - plain.loss(&theta).unwrap();
    let want = w * theta.dot(&theta) / 2.0;
    assert!((diff - want).abs() < 1e-14, "{diff} vs {want}");
}

/// Straight-line forward pass: weights `out × in` row-major then biases per
/// layer, mean softmax cross-entropy via log-sum-exp.
fn oracle_loss(layers: &[usize], act: fn(f64) -> f64, theta: &[f64], xs: &[Vec<f64>], labels: &[usize]) -> f64 {
    let mut total = 0.0;
    for (x, &label) in xs.iter().zip(labels) {
        let mut h = x.clone();
        let mut off = 0;
        for l in 0..layers.len() - 1 {
            let (n_in, n_out) = (layers[l], layers[l + 1]);
            let w = &theta[off..off + n_in * n_out];
            let b = &theta[off + n_in * n_out..off + n_in * n_out + n_out];
            off += n_in * n_out + n_out;
            let mut z = vec![0.0; n_out];
            for j in 0..n_out {
                let mut acc = b[j];
                for k in 0..n_in {
                    acc += w[j * n_in + k] * h[k];
                }
                z[j] = acc;
            }
            h = if l + 2 < layers.len() { z.into_iter().map(act).collect() } else { z };
        }
        let m = h.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + h.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
        total += lse - h[label];
    }
    total / xs.len() as f64
}

#[test]
fn forward_pass_matches_straight_line_oracle() {
    let layers = [4, 6, 3];
    let data = random_dataset(8, 4, 3, 21);
    let xs: Vec<Vec<f64>> = (0..data.len()).map(|i| data.input(i).to_vec()).collect();
    let cases: [(Activation, fn(f64) -> f64); 3] = [
        (Activation::Tanh, f64::tanh),
        (Activation::Relu, |z| z.max(0.0)),
        (Activation::Softplus, |z| if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() }),
    ];
    for (activation, f) in cases {
        let op = mlp_op(&layers, activation, data.clone(), 0.0);
        assert_eq!(op.dim(), 51);
        let theta = random_vector(op.dim(), 1.0, 3);
        let got = op.loss(&theta).unwrap();
        let want = oracle_loss(&layers, f, theta.as_slice(), &xs, data.labels());
        assert!((got - want).abs() < 1e-12, "{activation:?}: {got} vs {want}");
    }
}

#[test]
fn softplus_gradient_matches_central_differences() {
    let data = random_dataset(8, 4, 3, 2);
    let op = mlp_op(&[4, 6, 3], Activation::Softplus, data, 0.0);
    let theta = random_vector(op.dim(), 1.0, 9);
    let g = op.grad(&theta).unwrap();
    let fd = fd_grad(&op, &theta, 1e-4);
    let err = max_rel_err(g.as_slice(), &fd, 1e-3);
    assert!(err < 1e-5, "max relative error {err}");
}

#[test]
fn softplus_hvp_matches_central_differences_of_gradient() {
    let data = random_dataset(8, 4, 3, 4);
    let op = mlp_op(&[4, 6, 3], Activation::Softplus, data, 0.0);
    let theta = random_vector(op.dim(), 1.0, 10);
    for seed in 0..3 {
        let v = random_vector(op.dim(), 1.0, 100 + seed);
        let hv = op.hvp(&theta, &v).unwrap();
        let fd = fd_hvp(&op, &theta, &v, 1e-4);
        let err = max_rel_err(hv.as_slice(), &fd, 1e-3);
        assert!(err < 1e-5, "seed {seed}: max relative error {err}");
    }
}

#[test]
fn directional_derivative_is_second_order_accurate() {
    let data = random_dataset(8, 4, 3, 6);
    let op = mlp_op(&[4, 6, 3], Activation::Tanh, data, 0.01);
    let theta = random_vector(op.dim(), 1.0, 12);
    let v = random_vector(op.dim(), 1.0, 13);
    let exact = op.grad(&theta).unwrap().dot(&v);
    let err = |eps: f64| {
        let fd = (op.loss(&theta.axpy(eps, &v)).unwrap() - op.loss(&theta.axpy(-eps, &v)).unwrap()) / (2.0 * eps);
        (fd - exact).abs()
    };
    let (e1, e2) = (err(1e-2), err(5e-3));
    // Halving ε divides an O(ε²) error by about four.
    assert!(e2 < e1 / 3.0 && e2 > e1 / 5.0, "{e1} then {e2}");
}

#[test]
fn ten_repeated_calls_are_bit_identical() {
    let data = random_dataset(16, 4, 3, 8);
    let op = mlp_op(&[4, 6, 3], Activation::Softplus, data, 0.001);
    let theta = random_vector(op.dim(), 1.0, 14);
    let v = random_vector(op.dim(), 1.0, 15);
    let first = (op.loss(&theta).unwrap(), op.grad(&theta).unwrap(), op.hvp(&theta, &v).unwrap());
    for _ in 0..10 {
        let again = (op.loss(&theta).unwrap(), op.grad(&theta).unwrap(), op.hvp(&theta, &v).unwrap());
        assert_eq!(again.0.to_bits(), first.0.to_bits());
        assert!(again.1.iter().zip(first.1.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert!(again.2.iter().zip(first.2.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}

fn small_tanh_op() -> LossOperator<hessianscope::model::MlpObjective> {
    mlp_op(&[3, 5, 2], Activation::Tanh, random_dataset(5, 3, 2, 30), 0.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hvp_is_linear(seed in 0u64..1_000_000, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let op = small_tanh_op();
        let d = op.dim();
        let theta = random_vector(d, 1.0, seed);
        let u = random_vector(d, 1.0, seed ^ 1);
        let w = random_vector(d, 1.0, seed ^ 2);
        let combo = u.scaled(a).add(&w.scaled(b));
        let lhs = op.hvp(&theta, &combo).unwrap();
        let rhs = op.hvp(&theta, &u).unwrap().scaled(a).add(&op.hvp(&theta, &w).unwrap().scaled(b));
        let scale = rhs.norm_inf().max(lhs.norm_inf()).max(f64::MIN_POSITIVE);
        prop_assert!(lhs.sub(&rhs).norm_inf() / scale < 1e-10);
    }

    #[test]
    fn hvp_is_symmetric(seed in 0u64..1_000_000) {
        let op = small_tanh_op();
        let d = op.dim();
        let theta = random_vector(d, 1.0, seed);
        let u = random_vector(d, 1.0, seed ^ 3);
        let v = random_vector(d, 1.0, seed ^ 4);
        let uhv = u.dot(&op.hvp(&theta, &v).unwrap());
        let vhu = v.dot(&op.hvp(&theta, &u).unwrap());
        prop_assert!((uhv - vhu).abs() <= 1e-8 * uhv.abs().max(vhu.abs()).max(1e-300));
    }
}
