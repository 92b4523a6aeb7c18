//! On-disk formats: binary parameter snapshots, binary eigenvectors, and
//! trajectory directories.
//!
//! Both binary formats share one little-endian layout:
//!
//! ```text
//! magic    [u8; 4]   "HSCP" (checkpoint) or "HSEV" (eigenvector)
//! version  u32       1
//! d        u64
//! step     u64
//! a        f64       checkpoint: loss     eigenvector: λ
//! b        f64       checkpoint: lr       eigenvector: residual
//! values   [f64; d]
//! ```

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::Provenance;
use crate::eigen::EigenPair;
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::ndcore::ParamVector;
use crate::train::{Checkpoint, RmsPropConfig};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"HSCP";
pub const EIGENVECTOR_MAGIC: [u8; 4] = *b"HSEV";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 40;

fn encode(magic: [u8; 4], step: u64, a: f64, b: f64, values: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * values.len());
    out.extend_from_slice(&magic);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(values.len() as u64).to_le_bytes());
    out.extend_from_slice(&step.to_le_bytes());
    out.extend_from_slice(&a.to_le_bytes());
    out.extend_from_slice(&b.to_le_bytes());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Decoded {
    step: u64,
    a: f64,
    b: f64,
    values: Vec<f64>,
}

fn le_u64(bytes: &[u8]) -> u64 {
    u64::from_le_bytes(bytes.try_into().expect("8 bytes"))
}

fn le_f64(bytes: &[u8]) -> f64 {
    f64::from_le_bytes(bytes.try_into().expect("8 bytes"))
}

fn decode(magic: [u8; 4], bytes: &[u8]) -> Result<Decoded> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated(format!("{} header bytes, need {HEADER_LEN}", bytes.len())));
    }
    let found = u32::from_be_bytes(bytes[0..4].try_into().expect("4 bytes"));
    if bytes[0..4] != magic {
        return Err(Error::BadMagic { expected: u32::from_be_bytes(magic), found });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported format version {version}")));
    }
    let d = le_u64(&bytes[8..16]) as usize;
    let want = d.checked_mul(8).and_then(|n| n.checked_add(HEADER_LEN));
    match want {
        Some(n) if n == bytes.len() => {}
        Some(n) if n > bytes.len() => {
            return Err(Error::Truncated(format!("{} bytes for d = {d}, need {n}", bytes.len())));
        }
        _ => return Err(Error::Format(format!("{} bytes do not match d = {d}", bytes.len()))),
    }
    let values = bytes[HEADER_LEN..].chunks_exact(8).map(le_f64).collect();
    Ok(Decoded { step: le_u64(&bytes[16..24]), a: le_f64(&bytes[24..32]), b: le_f64(&bytes[32..40]), values })
}

pub fn encode_checkpoint(c: &Checkpoint) -> Vec<u8> {
    encode(CHECKPOINT_MAGIC, c.step, c.loss, c.lr, c.theta.as_slice())
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let d = decode(CHECKPOINT_MAGIC, bytes)?;
    Ok(Checkpoint { step: d.step, theta: ParamVector::new(d.values)?, loss: d.a, lr: d.b })
}

pub fn encode_eigenvector(step: u64, pair: &EigenPair) -> Vec<u8> {
    encode(EIGENVECTOR_MAGIC, step, pair.lambda, pair.residual, pair.vector.as_slice())
}

/// Returns the checkpoint step the pair was computed at and the pair.
pub fn decode_eigenvector(bytes: &[u8]) -> Result<(u64, EigenPair)> {
    let d = decode(EIGENVECTOR_MAGIC, bytes)?;
    Ok((d.step, EigenPair { lambda: d.a, vector: ParamVector::new(d.values)?, residual: d.b }))
}

/// Writes `bytes` to a temporary sibling file and renames it over `path`,
/// so readers never observe a partial file.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let name = path.file_name().ok_or_else(|| Error::invalid(format!("no file name in {}", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}

pub fn write_checkpoint(path: impl AsRef<Path>, c: &Checkpoint) -> Result<()> {
    write_atomic(path, &encode_checkpoint(c))
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    decode_checkpoint(&fs::read(path)?)
}

pub fn write_eigenvector(path: impl AsRef<Path>, step: u64, pair: &EigenPair) -> Result<()> {
    write_atomic(path, &encode_eigenvector(step, pair))
}

pub fn read_eigenvector(path: impl AsRef<Path>) -> Result<(u64, EigenPair)> {
    decode_eigenvector(&fs::read(path)?)
}

/// Describes a saved training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format_version: u32,
    /// Parameter count.
    pub dim: usize,
    /// Absent for runs on an explicit quadratic.
    pub model: Option<ModelSpec>,
    pub provenance: Option<Provenance>,
    pub trainer: RmsPropConfig,
    /// How the momentum buffer combines with the scaled gradient.
    pub momentum_composition: String,
    pub batch_seed: u64,
    pub total_steps: u64,
    pub checkpoint_every: u64,
    /// SHA-256 of the resolved configuration that produced the run.
    pub config_hash: String,
    pub steps: Vec<u64>,
    pub files: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
}

pub const MOMENTUM_COMPOSITION: &str = "mom = momentum*mom + lr*g/sqrt(acc+eps); theta -= mom";
pub const MANIFEST_FILE: &str = "manifest.json";

pub fn checkpoint_file_name(step: u64) -> String {
    format!("ckpt_{step:010}.hscp")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub manifest: Manifest,
    pub checkpoints: Vec<Checkpoint>,
}

impl Trajectory {
    pub fn steps(&self) -> Vec<u64> {
        self.checkpoints.iter().map(|c| c.step).collect()
    }

    pub fn checkpoint(&self, step: u64) -> Result<&Checkpoint> {
        self.checkpoints
            .iter()
            .find(|c| c.step == step)
            .ok_or_else(|| Error::MissingCheckpoint { step, available: self.steps() })
    }
}

/// Writes every checkpoint and then the manifest; the manifest lists the
/// files in step order.
pub fn save_trajectory(dir: impl AsRef<Path>, t: &Trajectory) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut manifest = t.manifest.clone();
    manifest.steps = t.steps();
    manifest.files = t.checkpoints.iter().map(|c| checkpoint_file_name(c.step)).collect();
    for (c, f) in t.checkpoints.iter().zip(&manifest.files) {
        write_checkpoint(dir.join(f), c)?;
    }
    let mut json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Format(e.to_string()))?;
    json.push('\n');
    write_atomic(dir.join(MANIFEST_FILE), json.as_bytes())
}

pub fn load_manifest(dir: impl AsRef<Path>) -> Result<Manifest> {
    let text = fs::read_to_string(dir.as_ref().join(MANIFEST_FILE))?;
    let m: Manifest = serde_json::from_str(&text).map_err(|e| Error::Format(format!("manifest: {e}")))?;
    if m.steps.len() != m.files.len() {
        return Err(Error::Format("manifest lists different numbers of steps and files".into()));
    }
    if let Some(spec) = &m.model {
        if spec.param_count() != m.dim {
            return Err(Error::Format(format!(
                "manifest dim {} does not match the model ({})",
                m.dim,
                spec.param_count()
            )));
        }
    }
    Ok(m)
}

pub fn load_trajectory(dir: impl AsRef<Path>) -> Result<Trajectory> {
    let dir = dir.as_ref();
    let manifest = load_manifest(dir)?;
    let d = manifest.dim;
    let mut checkpoints = Vec::with_capacity(manifest.files.len());
    for (&step, file) in manifest.steps.iter().zip(&manifest.files) {
        let c = read_checkpoint(dir.join(file))?;
        c.theta.check_dim(d)?;
        if c.step != step {
            return Err(Error::Format(format!("{file} holds step {}, manifest says {step}", c.step)));
        }
        checkpoints.push(c);
    }
    Ok(Trajectory { manifest, checkpoints })
}

/// Path of the eigenvector file for `(step, side, rank)` inside `dir`.
pub fn eigenvector_path(dir: &Path, step: u64, side: crate::eigen::Side, rank: usize) -> PathBuf {
    dir.join(format!("vec_t{step:010}_{side}_{rank:03}.hsev"))
}
