use std::sync::atomic::{AtomicU64, Ordering};

use super::param::{dot, ParamVector};
use super::scalar::{Dual, Scalar};
use super::tape::{Tape, Var};
use crate::error::{Error, Result};

/// A loss written as a mean of per-term contributions, each recorded on a
/// tape whose inputs are the `dim()` parameter coordinates.
///
/// A term is typically one training sample. Implementations must be pure
/// functions of the parameters and the term index.
pub trait Objective: Sync {
    fn dim(&self) -> usize;

    fn terms(&self) -> usize;

    fn record<S: Scalar>(&self, tape: &mut Tape<S>, term: usize) -> Result<Var>;
}

impl<O: Objective> Objective for &O {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn terms(&self) -> usize {
        (**self).terms()
    }
    fn record<S: Scalar>(&self, tape: &mut Tape<S>, term: usize) -> Result<Var> {
        (**self).record(tape, term)
    }
}

/// Deterministic loss with ℓ₂ regularization,
/// `L(θ) = mean_i ℓ_i(θ) + (w/2)·‖θ‖²`, exposing value, gradient and exact
/// Hessian-vector products.
///
/// Terms are always reduced left to right in index order, so repeated calls
/// at equal arguments are bit-identical.
#[derive(Debug)]
pub struct LossOperator<O> {
    objective: O,
    l2: f64,
    hvp_calls: AtomicU64,
}

impl<O: Objective> LossOperator<O> {
    pub fn new(objective: O, l2: f64) -> Result<Self> {
        if !(l2.is_finite() && l2 >= 0.0) {
            return Err(Error::invalid(format!("l2 weight must be finite and >= 0, got {l2}")));
        }
        if objective.terms() == 0 {
            return Err(Error::invalid("objective has no terms"));
        }
        Ok(LossOperator { objective, l2, hvp_calls: AtomicU64::new(0) })
    }

    pub fn objective(&self) -> &O {
        &self.objective
    }

    pub fn dim(&self) -> usize {
        self.objective.dim()
    }

    pub fn terms(&self) -> usize {
        self.objective.terms()
    }

    pub fn l2(&self) -> f64 {
        self.l2
    }

    /// Number of Hessian-vector products evaluated so far.
    pub fn hvp_count(&self) -> u64 {
        self.hvp_calls.load(Ordering::Relaxed)
    }

    fn all_terms(&self) -> Vec<usize> {
        (0..self.terms()).collect()
    }

    fn check_terms(&self, terms: &[usize]) -> Result<()> {
        if terms.is_empty() {
            return Err(Error::invalid("empty term list"));
        }
        if let Some(&t) = terms.iter().find(|&&t| t >= self.terms()) {
            return Err(Error::invalid(format!("term {t} out of range ({})", self.terms())));
        }
        Ok(())
    }

    fn regularizer(&self, theta: &[f64]) -> f64 {
        if self.l2 == 0.0 {
            0.0
        } else {
            0.5 * self.l2 * dot(theta, theta)
        }
    }

    pub fn loss(&self, theta: &ParamVector) -> Result<f64> {
        self.loss_terms(theta, &self.all_terms())
    }

    /// Loss averaged over a subset of the terms (a minibatch).
    pub fn loss_terms(&self, theta: &ParamVector, terms: &[usize]) -> Result<f64> {
        theta.check_dim(self.dim())?;
        self.check_terms(terms)?;
        let mut tape = Tape::new(theta.as_slice());
        let mut total = 0.0;
        for &t in terms {
            tape.truncate();
            let out = self.objective.record(&mut tape, t)?;
            total += tape.value(out);
        }
        let loss = total / terms.len() as f64 + self.regularizer(theta);
        finite_scalar(loss, "loss")
    }

    pub fn grad(&self, theta: &ParamVector) -> Result<ParamVector> {
        self.loss_and_grad(theta).map(|(_, g)| g)
    }

    pub fn loss_and_grad(&self, theta: &ParamVector) -> Result<(f64, ParamVector)> {
        self.loss_and_grad_terms(theta, &self.all_terms())
    }

    pub fn loss_and_grad_terms(&self, theta: &ParamVector, terms: &[usize]) -> Result<(f64, ParamVector)> {
        let d = self.dim();
        theta.check_dim(d)?;
        self.check_terms(terms)?;
        let mut tape = Tape::new(theta.as_slice());
        let mut total = 0.0;
        let mut grad = vec![0.0; d];
        for &t in terms {
            tape.truncate();
            let out = self.objective.record(&mut tape, t)?;
            total += tape.value(out);
            let adj = tape.backward(out);
            for (g, a) in grad.iter_mut().zip(&adj[..d]) {
                *g += a;
            }
        }
        let n = terms.len() as f64;
        let loss = total / n + self.regularizer(theta);
        for (g, th) in grad.iter_mut().zip(theta.iter()) {
            *g = *g / n + self.l2 * th;
        }
        Ok((finite_scalar(loss, "loss")?, finite_vector(grad, "gradient")?))
    }

    /// Exact `H(θ)·v` by running the reverse sweep in dual numbers whose
    /// tangent is seeded with `v` (forward-over-reverse).
    pub fn hvp(&self, theta: &ParamVector, v: &ParamVector) -> Result<ParamVector> {
        self.grad_and_hvp(theta, v).map(|(_, hv)| hv)
    }

    pub fn grad_and_hvp(&self, theta: &ParamVector, v: &ParamVector) -> Result<(ParamVector, ParamVector)> {
        self.grad_and_hvp_terms(theta, v, &self.all_terms())
    }

    /// Hessian-vector product of the loss averaged over a subset of terms.
    pub fn hvp_terms(&self, theta: &ParamVector, v: &ParamVector, terms: &[usize]) -> Result<ParamVector> {
        self.grad_and_hvp_terms(theta, v, terms).map(|(_, hv)| hv)
    }

    pub fn grad_and_hvp_terms(
        &self,
        theta: &ParamVector,
        v: &ParamVector,
        terms: &[usize],
    ) -> Result<(ParamVector, ParamVector)> {
        let d = self.dim();
        theta.check_dim(d)?;
        v.check_dim(d)?;
        self.check_terms(terms)?;
        self.hvp_calls.fetch_add(1, Ordering::Relaxed);
        let inputs: Vec<Dual> = theta.iter().zip(v.iter()).map(|(&t, &e)| Dual::new(t, e)).collect();
        let mut tape = Tape::new(&inputs);
        let mut grad = vec![0.0; d];
        let mut hv = vec![0.0; d];
        for &t in terms {
            tape.truncate();
            let out = self.objective.record(&mut tape, t)?;
            let adj = tape.backward(out);
            for i in 0..d {
                grad[i] += adj[i].re;
                hv[i] += adj[i].eps;
            }
        }
        let n = terms.len() as f64;
        for i in 0..d {
            grad[i] = grad[i] / n + self.l2 * theta[i];
            hv[i] = hv[i] / n + self.l2 * v[i];
        }
        Ok((finite_vector(grad, "gradient")?, finite_vector(hv, "Hessian-vector product")?))
    }
}

fn finite_scalar(x: f64, what: &str) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::non_finite(what))
    }
}

fn finite_vector(v: Vec<f64>, what: &str) -> Result<ParamVector> {
    ParamVector::new(v).map_err(|_| Error::non_finite(what))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ndcore::Quadratic;

    #[test]
    fn l2_term_adds_half_weighted_norm() {
        let q = Quadratic::diagonal(vec![2.0, -1.0]);
        let theta = ParamVector::new(vec![0.3, -1.2]).unwrap();
        let plain = LossOperator::new(&q, 0.0).unwrap().loss(&theta).unwrap();
        let reg = LossOperator::new(&q, 0.25).unwrap().loss(&theta).unwrap();
        let want = 0.25 * (0.09 + 1.44) / 2.0;
        assert!((reg - plain - want).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let q = Quadratic::diagonal(vec![2.0, -1.0]);
        let op = LossOperator::new(&q, 0.0).unwrap();
        let err = op.loss(&ParamVector::zeros(3)).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 2, got: 3 }));
        assert!(op.hvp(&ParamVector::zeros(2), &ParamVector::zeros(1)).is_err());
    }

    #[test]
    fn negative_l2_rejected() {
        let q = Quadratic::diagonal(vec![1.0]);
        assert!(LossOperator::new(&q, -1.0).is_err());
    }

    #[test]
    fn counts_hvp_calls() {
        let q = Quadratic::diagonal(vec![1.0, 2.0]);
        let op = LossOperator::new(&q, 0.0).unwrap();
        let th = ParamVector::zeros(2);
        for _ in 0..3 {
            op.hvp(&th, &th).unwrap();
        }
        assert_eq!(op.hvp_count(), 3);
    }
}
