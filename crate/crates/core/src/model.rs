//! Fully connected softmax classifier addressed through one flat parameter
//! vector.
//!
//! Layout per layer: the `out × in` weight matrix row-major, then the `out`
//! biases. Hidden layers apply the configured activation; the last layer
//! feeds a softmax cross-entropy.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{rng, Dataset};
use crate::error::{Error, Result};
use crate::ndcore::{LossOperator, Objective, ParamVector, Scalar, Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Softplus,
    Tanh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    /// Layer widths from input to output, e.g. `[784, 32, 32, 10]`.
    pub layers: Vec<usize>,
    pub activation: Activation,
    #[serde(default)]
    pub init_seed: u64,
}

impl ModelSpec {
    pub fn new(layers: Vec<usize>, activation: Activation, init_seed: u64) -> Result<Self> {
        let spec = ModelSpec { layers, activation, init_seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.len() < 2 {
            return Err(Error::invalid("a model needs at least an input and an output layer"));
        }
        if let Some(l) = self.layers.iter().position(|&w| w == 0) {
            return Err(Error::invalid(format!("layer {l} has zero width")));
        }
        Ok(())
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0]
    }

    pub fn classes(&self) -> usize {
        *self.layers.last().expect("validated spec")
    }

    /// `(weight offset, fan_in, fan_out)` per layer.
    fn layout(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let mut offset = 0;
        self.layers.windows(2).map(move |w| {
            let start = offset;
            offset += w[0] * w[1] + w[1];
            (start, w[0], w[1])
        })
    }

    pub fn param_count(&self) -> usize {
        self.layers.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        let d = self.param_count();
        if theta.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: theta.len() });
        }
        Ok(())
    }

    /// Class with the highest logit, evaluated without a tape.
    pub fn predict(&self, theta: &ParamVector, x: &[f64]) -> Result<usize> {
        self.check_theta(theta)?;
        let theta = theta.as_slice();
        let mut h = x.to_vec();
        let n_layers = self.layers.len() - 1;
        for (l, (off, fan_in, fan_out)) in self.layout().enumerate() {
            let bias = off + fan_in * fan_out;
            let next: Vec<f64> = (0..fan_out)
                .map(|j| {
                    let row = &theta[off + j * fan_in..off + (j + 1) * fan_in];
                    let z = theta[bias + j] + row.iter().zip(&h).map(|(w, x)| w * x).sum::<f64>();
                    if l + 1 < n_layers {
                        activate_f64(self.activation, z)
                    } else {
                        z
                    }
                })
                .collect();
            h = next;
        }
        Ok(h.iter().enumerate().fold((0, f64::NEG_INFINITY), |best, (i, &z)| if z > best.1 { (i, z) } else { best }).0)
    }

    pub fn accuracy(&self, theta: &ParamVector, data: &Dataset) -> Result<f64> {
        let mut hits = 0usize;
        for i in 0..data.len() {
            hits += usize::from(self.predict(theta, data.input(i))? == data.label(i));
        }
        Ok(hits as f64 / data.len() as f64)
    }
}

fn activate_f64(act: Activation, z: f64) -> f64 {
    match act {
        Activation::Relu => z.max(0.0),
        Activation::Softplus => Scalar::softplus(z),
        Activation::Tanh => z.tanh(),
    }
}

/// Deterministic initialization: weights uniform on `[-√3/√fan_in, √3/√fan_in]`
/// (standard deviation `1/√fan_in`), biases zero.
pub fn init_params(spec: &ModelSpec) -> Result<ParamVector> {
    spec.validate()?;
    let mut rng = rng(spec.init_seed);
    let mut theta = vec![0.0; spec.param_count()];
    for (off, fan_in, fan_out) in spec.layout() {
        let bound = (3.0 / fan_in as f64).sqrt();
        for w in &mut theta[off..off + fan_in * fan_out] {
            *w = rng.random_range(-bound..=bound);
        }
    }
    ParamVector::new(theta)
}

/// A view of some samples of a dataset.
#[derive(Debug, Clone)]
pub struct Batch {
    data: Arc<Dataset>,
    indices: Vec<usize>,
}

impl Batch {
    pub fn new(data: Arc<Dataset>, indices: Vec<usize>) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::invalid("a batch needs at least one sample"));
        }
        if let Some(&i) = indices.iter().find(|&&i| i >= data.len()) {
            return Err(Error::invalid(format!("sample {i} out of range ({})", data.len())));
        }
        Ok(Batch { data, indices })
    }

    pub fn full(data: Arc<Dataset>) -> Self {
        let indices = (0..data.len()).collect();
        Batch { data, indices }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn dataset(&self) -> &Arc<Dataset> {
        &self.data
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }
}

/// Mean softmax cross-entropy of a model over a batch; one term per sample.
#[derive(Debug, Clone)]
pub struct MlpObjective {
    spec: ModelSpec,
    batch: Batch,
}

impl MlpObjective {
    pub fn new(spec: ModelSpec, batch: Batch) -> Result<Self> {
        spec.validate()?;
        let data = batch.dataset();
        if data.in_dim() != spec.in_dim() {
            return Err(Error::DimensionMismatch { expected: spec.in_dim(), got: data.in_dim() });
        }
        if let Some(&i) = batch.indices().iter().find(|&&i| data.label(i) >= spec.classes()) {
            return Err(Error::LabelOutOfRange { label: data.label(i), classes: spec.classes() });
        }
        Ok(MlpObjective { spec, batch })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn batch(&self) -> &Batch {
        &self.batch
    }
}

impl Objective for MlpObjective {
    fn dim(&self) -> usize {
        self.spec.param_count()
    }

    fn terms(&self) -> usize {
        self.batch.len()
    }

    fn record<S: Scalar>(&self, tape: &mut Tape<S>, term: usize) -> Result<Var> {
        let sample = self.batch.indices[term];
        let x = self.batch.data.input(sample);
        let label = self.batch.data.label(sample);
        record_sample_loss(&self.spec, tape, x, label)
    }
}

/// Records the cross-entropy of one sample on `tape`, whose inputs must be
/// the model parameters.
pub fn record_sample_loss<S: Scalar>(spec: &ModelSpec, tape: &mut Tape<S>, x: &[f64], label: usize) -> Result<Var> {
    if tape.num_inputs() != spec.param_count() {
        return Err(Error::DimensionMismatch { expected: spec.param_count(), got: tape.num_inputs() });
    }
    if x.len() != spec.in_dim() {
        return Err(Error::DimensionMismatch { expected: spec.in_dim(), got: x.len() });
    }
    if label >= spec.classes() {
        return Err(Error::LabelOutOfRange { label, classes: spec.classes() });
    }
    let n_layers = spec.layers.len() - 1;
    let mut hidden: Vec<Var> = Vec::new();
    for (l, (off, fan_in, fan_out)) in spec.layout().enumerate() {
        let bias_off = off + fan_in * fan_out;
        let last = l + 1 == n_layers;
        let mut next = Vec::with_capacity(fan_out);
        for j in 0..fan_out {
            let row: Vec<Var> = (off + j * fan_in..off + (j + 1) * fan_in).map(Var::input).collect();
            let bias = Var::input(bias_off + j);
            let z = if l == 0 { tape.affine_const(&row, x, bias) } else { tape.affine(&row, &hidden, bias) };
            let a = if last {
                z
            } else {
                match spec.activation {
                    Activation::Relu => tape.relu(z),
                    Activation::Softplus => tape.softplus(z),
                    Activation::Tanh => tape.tanh(z),
                }
            };
            if !tape.value(a).value().is_finite() {
                return Err(Error::non_finite(format!("layer {l} unit {j}")));
            }
            next.push(a);
        }
        hidden = next;
    }
    Ok(tape.softmax_cross_entropy(&hidden, label))
}

/// Mean cross-entropy of `theta` on `batch`.
pub fn forward_loss(spec: &ModelSpec, theta: &ParamVector, batch: &Batch) -> Result<f64> {
    let op = LossOperator::new(MlpObjective::new(spec.clone(), batch.clone())?, 0.0)?;
    op.loss(theta)
}
