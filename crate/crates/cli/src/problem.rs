//! Turns a configuration into concrete loss operators.

use std::sync::Arc;

use hessianscope::data::{fixed_subset, load_idx, make_blobs, Dataset, Provenance};
use hessianscope::model::{init_params, Batch, MlpObjective, ModelSpec};
use hessianscope::ndcore::{LossOperator, Objective, ParamVector, Quadratic, Scalar, Tape, Var};

use crate::config::{DataConfig, RunConfig};
use crate::error::CliError;

/// Either a network on a dataset slice or an explicit quadratic.
#[derive(Debug, Clone)]
pub enum AnyObjective {
    Mlp(MlpObjective),
    Quadratic(Quadratic),
}

impl Objective for AnyObjective {
    fn dim(&self) -> usize {
        match self {
            AnyObjective::Mlp(m) => m.dim(),
            AnyObjective::Quadratic(q) => q.dim(),
        }
    }

    fn terms(&self) -> usize {
        match self {
            AnyObjective::Mlp(m) => m.terms(),
            AnyObjective::Quadratic(q) => q.terms(),
        }
    }

    fn record<S: Scalar>(&self, tape: &mut Tape<S>, term: usize) -> hessianscope::Result<Var> {
        match self {
            AnyObjective::Mlp(m) => m.record(tape, term),
            AnyObjective::Quadratic(q) => q.record(tape, term),
        }
    }
}

pub type Operator = LossOperator<AnyObjective>;

#[derive(Debug, Clone)]
enum Source {
    Network { spec: ModelSpec, data: Arc<Dataset> },
    Quadratic { q: Quadratic, theta0: ParamVector },
}

#[derive(Debug, Clone)]
pub struct Problem {
    source: Source,
    l2: f64,
    subset_fraction: f64,
    subset_seed: u64,
}

fn check_file(path: &std::path::Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Missing(format!("data file {} does not exist", path.display())))
    }
}

impl Problem {
    pub fn build(cfg: &RunConfig) -> Result<Problem, CliError> {
        let seeds = cfg.seeds();
        let source = match &cfg.data {
            DataConfig::Quadratic { diag, matrix, linear, theta0 } => {
                let mut q = match (diag, matrix) {
                    (Some(d), None) => Quadratic::diagonal(d.clone()),
                    (None, Some(m)) => {
                        let n = m.len();
                        if m.iter().any(|r| r.len() != n) {
                            return Err(CliError::Config("quadratic matrix must be square".into()));
                        }
                        Quadratic::dense(n, m.concat())?
                    }
                    _ => return Err(CliError::Config("quadratic data needs exactly one of diag and matrix".into())),
                };
                if let Some(b) = linear {
                    q = q.with_linear(b.clone())?;
                }
                let theta0 = match theta0 {
                    Some(t) => {
                        let t = ParamVector::new(t.clone())?;
                        t.check_dim(q.dim())?;
                        t
                    }
                    None => ParamVector::zeros(q.dim()),
                };
                Source::Quadratic { q, theta0 }
            }
            data => {
                let spec = cfg.model_spec()?.expect("network data has a model");
                let ds = match data {
                    DataConfig::Blobs { classes, per_class, dim, spread } => {
                        make_blobs(*classes, *per_class, *dim, *spread, seeds.data)?
                    }
                    DataConfig::Idx { images, labels, limit } => {
                        check_file(images)?;
                        check_file(labels)?;
                        let ds = load_idx(images, labels)?;
                        match limit {
                            Some(n) => ds.truncated(*n)?,
                            None => ds,
                        }
                    }
                    DataConfig::Quadratic { .. } => unreachable!("handled above"),
                };
                if ds.in_dim() != spec.in_dim() {
                    return Err(CliError::Config(format!(
                        "model input width {} does not match data dimension {}",
                        spec.in_dim(),
                        ds.in_dim()
                    )));
                }
                if ds.classes() > spec.classes() {
                    return Err(CliError::Config(format!(
                        "model has {} outputs but the data has {} classes",
                        spec.classes(),
                        ds.classes()
                    )));
                }
                Source::Network { spec, data: Arc::new(ds) }
            }
        };
        Ok(Problem { source, l2: cfg.train.l2, subset_fraction: cfg.eigen.subset_fraction, subset_seed: seeds.subset })
    }

    pub fn dim(&self) -> usize {
        match &self.source {
            Source::Network { spec, .. } => spec.param_count(),
            Source::Quadratic { q, .. } => q.dim(),
        }
    }

    pub fn model(&self) -> Option<&ModelSpec> {
        match &self.source {
            Source::Network { spec, .. } => Some(spec),
            Source::Quadratic { .. } => None,
        }
    }

    pub fn provenance(&self) -> Option<Provenance> {
        match &self.source {
            Source::Network { data, .. } => Some(data.provenance().clone()),
            Source::Quadratic { .. } => None,
        }
    }

    pub fn dataset(&self) -> Option<&Arc<Dataset>> {
        match &self.source {
            Source::Network { data, .. } => Some(data),
            Source::Quadratic { .. } => None,
        }
    }

    pub fn initial_params(&self) -> Result<ParamVector, CliError> {
        Ok(match &self.source {
            Source::Network { spec, .. } => init_params(spec)?,
            Source::Quadratic { theta0, .. } => theta0.clone(),
        })
    }

    /// Loss over the whole training set.
    pub fn training_operator(&self) -> Result<Operator, CliError> {
        let obj = match &self.source {
            Source::Network { spec, data } => {
                AnyObjective::Mlp(MlpObjective::new(spec.clone(), Batch::full(data.clone()))?)
            }
            Source::Quadratic { q, .. } => AnyObjective::Quadratic(q.clone()),
        };
        Ok(LossOperator::new(obj, self.l2)?)
    }

    /// Loss over the fixed analysis subset, with the subset identifier.
    pub fn analysis_operator(&self) -> Result<(Operator, String), CliError> {
        match &self.source {
            Source::Network { spec, data } => {
                let subset = fixed_subset(data, self.subset_fraction, self.subset_seed)?;
                let batch = Batch::new(data.clone(), subset.indices().to_vec())?;
                let op = LossOperator::new(AnyObjective::Mlp(MlpObjective::new(spec.clone(), batch)?), self.l2)?;
                Ok((op, subset.id()))
            }
            Source::Quadratic { q, .. } => {
                Ok((LossOperator::new(AnyObjective::Quadratic(q.clone()), self.l2)?, "quadratic".to_string()))
            }
        }
    }
}
