#![allow(dead_code)]

use std::sync::Arc;

use hessianscope::data::{rng, Dataset, Provenance};
use hessianscope::model::{Activation, Batch, MlpObjective, ModelSpec};
use hessianscope::ndcore::{LossOperator, ParamVector};
use rand::Rng;

/// Inputs uniform on `[0, 1]`, labels cycling through the classes.
pub fn random_dataset(n: usize, in_dim: usize, classes: usize, seed: u64) -> Arc<Dataset> {
    let mut r = rng(seed);
    let inputs = (0..n * in_dim).map(|_| r.random_range(0.0..1.0)).collect();
    let labels = (0..n).map(|i| i % classes).collect();
    Arc::new(Dataset::new(inputs, in_dim, labels, classes, Provenance::Memory).unwrap())
}

pub fn mlp_op(layers: &[usize], activation: Activation, data: Arc<Dataset>, l2: f64) -> LossOperator<MlpObjective> {
    let spec = ModelSpec::new(layers.to_vec(), activation, 0).unwrap();
    LossOperator::new(MlpObjective::new(spec, Batch::full(data)).unwrap(), l2).unwrap()
}

/// Entries uniform on `[-scale, scale]`.
pub fn random_vector(d: usize, scale: f64, seed: u64) -> ParamVector {
    let mut r = rng(seed);
    ParamVector::new((0..d).map(|_| r.random_range(-scale..=scale)).collect()).unwrap()
}

/// Symmetric matrix with standard-normal-like entries, row-major.
pub fn random_symmetric(n: usize, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let x: f64 = r.random_range(-1.0..1.0);
            m[i * n + j] = x;
            m[j * n + i] = x;
        }
    }
    m
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Per-coordinate relative error, with the denominator floored at
/// `floor · max|b|` so that near-zero coordinates are compared on the scale
/// of the whole vector.
pub fn max_rel_err(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    a.iter().zip(b).map(|(x, y)| (x - y).abs() / y.abs().max(floor * scale).max(f64::MIN_POSITIVE)).fold(0.0, f64::max)
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Central differences of the gradient along `v`.
pub fn fd_hvp(op: &LossOperator<MlpObjective>, theta: &ParamVector, v: &ParamVector, eps: f64) -> Vec<f64> {
    let gp = op.grad(&theta.axpy(eps, v)).unwrap();
    let gm = op.grad(&theta.axpy(-eps, v)).unwrap();
    gp.iter().zip(gm.iter()).map(|(p, m)| (p - m) / (2.0 * eps)).collect()
}

/// Central differences of the loss along every coordinate.
pub fn fd_grad(op: &LossOperator<MlpObjective>, theta: &ParamVector, eps: f64) -> Vec<f64> {
    (0..theta.dim())
        .map(|i| {
            let e = ParamVector::basis(theta.dim(), i);
            let lp = op.loss(&theta.axpy(eps, &e)).unwrap();
            let lm = op.loss(&theta.axpy(-eps, &e)).unwrap();
            (lp - lm) / (2.0 * eps)
        })
        .collect()
}
