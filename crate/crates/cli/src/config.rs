//! Run configuration: a TOML file, optionally overridden by
//! `HESSIANSCOPE_SEED` and `--set key.path=value` flags, validated before any
//! computation starts.

use std::path::{Path, PathBuf};

use hessianscope::eigen::{LanczosConfig, Side};
use hessianscope::model::{Activation, ModelSpec};
use hessianscope::negcurve::NegCurveConfig;
use hessianscope::train::RmsPropConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const SEED_ENV: &str = "HESSIANSCOPE_SEED";
pub const RESOLVED_CONFIG_FILE: &str = "config.resolved.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; every stochastic component derives its own seed from it.
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Required unless `data.kind = "quadratic"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelConfig>,
    pub data: DataConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub eigen: EigenConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub negcurve: NegCurveConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Full width list, input first and class count last.
    pub layers: Vec<usize>,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataConfig {
    /// Gaussian clusters around separated random centers.
    Blobs { classes: usize, per_class: usize, dim: usize, spread: f64 },
    /// IDX image and label files, gzip-compressed or raw. Relative paths are
    /// resolved against the config file's directory.
    Idx {
        images: PathBuf,
        labels: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        limit: Option<usize>,
    },
    /// Explicit quadratic `½θᵀAθ + bᵀθ`, for testing the pipeline against
    /// closed forms. Exactly one of `diag` and `matrix` gives `A`.
    Quadratic {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        diag: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        matrix: Option<Vec<Vec<f64>>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        linear: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        theta0: Option<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub base_lr: f64,
    pub per_epoch_lr_decay: f64,
    pub rms_decay: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epsilon: f64,
    pub total_steps: u64,
    pub checkpoint_every: u64,
    /// Weight of the `½·l2·‖θ‖²` term, shared by training and analysis.
    pub l2: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let r = RmsPropConfig::default();
        TrainConfig {
            base_lr: r.base_lr,
            per_epoch_lr_decay: r.per_epoch_lr_decay,
            rms_decay: r.rms_decay,
            momentum: r.momentum,
            batch_size: r.batch_size,
            epsilon: r.epsilon,
            total_steps: 1000,
            checkpoint_every: 100,
            l2: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn rmsprop(&self) -> RmsPropConfig {
        RmsPropConfig {
            base_lr: self.base_lr,
            per_epoch_lr_decay: self.per_epoch_lr_decay,
            rms_decay: self.rms_decay,
            momentum: self.momentum,
            batch_size: self.batch_size,
            epsilon: self.epsilon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EigenConfig {
    /// Pairs per side.
    pub k: usize,
    pub sides: Vec<Side>,
    pub tol: f64,
    /// Operator application budget per solve.
    pub max_iter: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub krylov_dim: Option<usize>,
    /// Fraction of the training set in the fixed analysis subset.
    pub subset_fraction: f64,
    /// Checkpoints to decompose; the last checkpoint when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<Vec<u64>>,
    /// Keep unconverged pairs (flagged) instead of failing the command.
    pub allow_unconverged: bool,
}

impl Default for EigenConfig {
    fn default() -> Self {
        let l = LanczosConfig::default();
        EigenConfig {
            k: 5,
            sides: vec![Side::LA, Side::SA],
            tol: l.tol,
            max_iter: l.max_iter,
            krylov_dim: None,
            subset_fraction: 0.05,
            steps: None,
            allow_unconverged: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    /// Checkpoint whose eigenvectors are tracked over time; the first
    /// decomposed step when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t0: Option<u64>,
    /// Checkpoint for profiles, fits and line searches; the last decomposed
    /// step when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub at_step: Option<u64>,
    pub profile_alpha_max: Vec<f64>,
    /// Odd number of grid points per profile.
    pub profile_points: usize,
    pub fit_ranges: Vec<f64>,
    pub linesearch_alpha_min: f64,
    pub linesearch_alpha_max: f64,
    pub linesearch_per_sign: usize,
    pub golden_iters: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            t0: None,
            at_step: None,
            profile_alpha_max: vec![0.1, 1.0],
            profile_points: 41,
            fit_ranges: vec![0.1, 1.0],
            linesearch_alpha_min: 1e-4,
            linesearch_alpha_max: 100.0,
            linesearch_per_sign: 64,
            golden_iters: 30,
        }
    }
}

/// Per-component seeds derived from the master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Seeds {
    pub init: u64,
    pub batches: u64,
    pub data: u64,
    pub subset: u64,
    pub lanczos: u64,
    pub tracker: u64,
}

impl Seeds {
    pub fn from_master(master: u64) -> Seeds {
        let stream = |i: u64| master ^ i.wrapping_mul(0x9e37_79b9_7f4a_7c15);
        Seeds {
            init: stream(1),
            batches: stream(2),
            data: stream(3),
            subset: stream(4),
            lanczos: stream(5),
            tracker: stream(6),
        }
    }
}

impl RunConfig {
    pub fn seeds(&self) -> Seeds {
        Seeds::from_master(self.seed)
    }

    pub fn model_spec(&self) -> Result<Option<ModelSpec>, CliError> {
        match (&self.model, &self.data) {
            (_, DataConfig::Quadratic { .. }) => Ok(None),
            (None, _) => Err(CliError::Config("a [model] section is required for this data kind".into())),
            (Some(m), _) => Ok(Some(ModelSpec::new(m.layers.clone(), m.activation, self.seeds().init)?)),
        }
    }

    pub fn lanczos(&self) -> LanczosConfig {
        LanczosConfig {
            tol: self.eigen.tol,
            max_iter: self.eigen.max_iter,
            seed: self.seeds().lanczos,
            krylov_dim: self.eigen.krylov_dim,
        }
    }

    /// Checks every constraint that does not need the data.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        self.model_spec()?;
        self.train.rmsprop().validate()?;
        if !(self.train.l2 >= 0.0) {
            return bad(format!("train.l2 must be >= 0, got {}", self.train.l2));
        }
        if self.eigen.k == 0 {
            return bad("eigen.k must be >= 1".into());
        }
        if self.eigen.sides.is_empty() {
            return bad("eigen.sides must name at least one side".into());
        }
        if !(self.eigen.subset_fraction > 0.0 && self.eigen.subset_fraction <= 1.0) {
            return bad(format!("eigen.subset_fraction must be in (0, 1], got {}", self.eigen.subset_fraction));
        }
        if !(self.eigen.tol > 0.0) {
            return bad("eigen.tol must be positive".into());
        }
        let a = &self.analysis;
        if a.profile_points < 3 || a.profile_points.is_multiple_of(2) {
            return bad(format!("analysis.profile_points must be odd and >= 3, got {}", a.profile_points));
        }
        for &r in a.profile_alpha_max.iter().chain(&a.fit_ranges) {
            if !(r > 0.0 && r.is_finite()) {
                return bad(format!("profile and fit ranges must be positive, got {r}"));
            }
        }
        if !(a.linesearch_alpha_min > 0.0 && a.linesearch_alpha_max > a.linesearch_alpha_min) {
            return bad("analysis needs 0 < linesearch_alpha_min < linesearch_alpha_max".into());
        }
        if a.linesearch_per_sign < 2 {
            return bad("analysis.linesearch_per_sign must be >= 2".into());
        }
        self.negcurve.validate()?;
        if let DataConfig::Quadratic { diag, matrix, .. } = &self.data {
            if diag.is_some() == matrix.is_some() {
                return bad("quadratic data needs exactly one of diag and matrix".into());
            }
        }
        Ok(())
    }
}

/// A validated configuration together with its canonical text and hash.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: RunConfig,
    /// Canonical TOML written into every output directory.
    pub text: String,
    /// SHA-256 of `text`, lowercase hex.
    pub hash: String,
}

fn parse_value(raw: &str) -> toml::Value {
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Applies `key.path=value`; intermediate tables are created as needed.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{assignment}` is not KEY=VALUE")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("bad override key `{key}`")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur =
            entry.as_table_mut().ok_or_else(|| CliError::Config(format!("override `{key}`: `{p}` is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

fn absolutize(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Parses config text, applies the seed variable and overrides, resolves
/// data paths against `base_dir`, and validates the result.
pub fn resolve(
    text: &str,
    base_dir: &Path,
    seed_env: Option<&str>,
    overrides: &[String],
) -> Result<Resolved, CliError> {
    let mut table: toml::Table = text.parse().map_err(|e| CliError::Config(format!("{e}")))?;
    if let Some(s) = seed_env {
        let seed: u64 = s
            .trim()
            .parse()
            .map_err(|_| CliError::Config(format!("{SEED_ENV} must be an unsigned integer, got `{s}`")))?;
        table.insert("seed".into(), toml::Value::Integer(seed as i64));
    }
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    let mut config: RunConfig =
        toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
    if let DataConfig::Idx { images, labels, .. } = &mut config.data {
        *images = absolutize(base_dir, images);
        *labels = absolutize(base_dir, labels);
    }
    config.output_dir = absolutize(base_dir, &config.output_dir);
    config.validate()?;
    let text = toml::to_string(&config).map_err(|e| CliError::Config(e.to_string()))?;
    let hash = Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect();
    Ok(Resolved { config, text, hash })
}

/// Reads and resolves a config file; relative paths are taken from the
/// file's directory.
pub fn load(path: &Path, overrides: &[String]) -> Result<Resolved, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let base = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let env = std::env::var(SEED_ENV).ok();
    resolve(&text, base, env.as_deref(), overrides)
}
