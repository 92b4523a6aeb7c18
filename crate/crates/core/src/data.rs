//! Datasets: IDX (MNIST) parsing, synthetic Gaussian blobs, and the fixed
//! sample subsets used to evaluate Hessians deterministically.

use std::fs;
use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rand_xoshiro::rand_core::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Seeded generator used everywhere randomness is needed.
pub fn rng(seed: u64) -> Xoshiro256PlusPlus {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

/// In-place Fisher–Yates shuffle.
pub fn shuffle<T, R: Rng>(items: &mut [T], rng: &mut R) {
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i);
        items.swap(i, j);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Idx { images: String, labels: String },
    Blobs { classes: usize, per_class: usize, dim: usize, spread: f64, seed: u64 },
    Memory,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Vec<f64>,
    in_dim: usize,
    labels: Vec<usize>,
    classes: usize,
    provenance: Provenance,
}

impl Dataset {
    pub fn new(
        inputs: Vec<f64>,
        in_dim: usize,
        labels: Vec<usize>,
        classes: usize,
        provenance: Provenance,
    ) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::invalid("dataset must contain at least one sample"));
        }
        if in_dim == 0 || inputs.len() != labels.len() * in_dim {
            return Err(Error::DimensionMismatch { expected: labels.len() * in_dim, got: inputs.len() });
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::LabelOutOfRange { label, classes });
        }
        if inputs.iter().any(|x| !x.is_finite()) {
            return Err(Error::non_finite("dataset inputs"));
        }
        Ok(Dataset { inputs, in_dim, labels, classes, provenance })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.in_dim..(i + 1) * self.in_dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// First `n` samples (or all of them when `n >= len`).
    pub fn truncated(mut self, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("cannot truncate a dataset to zero samples"));
        }
        let n = n.min(self.len());
        self.labels.truncate(n);
        self.inputs.truncate(n * self.in_dim);
        Ok(self)
    }

    /// Counts per class label.
    pub fn histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.classes];
        for &l in &self.labels {
            h[l] += 1;
        }
        h
    }
}

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..]).read_to_end(&mut out)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Truncated(format!("{what} header")))
}

/// Parses an IDX image file. Returns `(count, rows·cols, pixels scaled by 1/255)`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, Vec<f64>)> {
    let magic = be_u32(bytes, 0, "image")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::BadMagic { expected: IDX_IMAGES_MAGIC, found: magic });
    }
    let n = be_u32(bytes, 4, "image")? as usize;
    let rows = be_u32(bytes, 8, "image")? as usize;
    let cols = be_u32(bytes, 12, "image")? as usize;
    let pixels = n * rows * cols;
    let body = &bytes[16..];
    if body.len() < pixels {
        return Err(Error::Truncated(format!("image data: expected {pixels} bytes, found {}", body.len())));
    }
    let data = body[..pixels].iter().map(|&b| f64::from(b) / 255.0).collect();
    Ok((n, rows * cols, data))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    let magic = be_u32(bytes, 0, "label")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::BadMagic { expected: IDX_LABELS_MAGIC, found: magic });
    }
    let n = be_u32(bytes, 4, "label")? as usize;
    let body = &bytes[8..];
    if body.len() < n {
        return Err(Error::Truncated(format!("label data: expected {n} bytes, found {}", body.len())));
    }
    Ok(body[..n].iter().map(|&b| b as usize).collect())
}

/// Loads an IDX image/label pair (optionally gzip-compressed). The class
/// count is one past the largest label.
pub fn load_idx(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<Dataset> {
    let (images, labels) = (images.as_ref(), labels.as_ref());
    let (n, in_dim, pixels) = parse_idx_images(&read_maybe_gz(images)?)?;
    let ys = parse_idx_labels(&read_maybe_gz(labels)?)?;
    if ys.len() != n {
        return Err(Error::CountMismatch { images: n, labels: ys.len() });
    }
    let classes = ys.iter().max().map_or(1, |m| m + 1);
    Dataset::new(
        pixels,
        in_dim,
        ys,
        classes,
        Provenance::Idx { images: images.display().to_string(), labels: labels.display().to_string() },
    )
}

/// Balanced Gaussian clusters around seeded centers in `[-1, 1]^dim`.
///
/// Centers are redrawn (up to a fixed number of attempts) until they are at
/// least 1.0 apart. Samples are interleaved by class.
pub fn make_blobs(classes: usize, per_class: usize, dim: usize, spread: f64, seed: u64) -> Result<Dataset> {
    if classes == 0 || per_class == 0 || dim == 0 {
        return Err(Error::invalid("make_blobs: counts must be positive"));
    }
    if !(spread.is_finite() && spread >= 0.0) {
        return Err(Error::invalid("make_blobs: spread must be finite and >= 0"));
    }
    let mut rng = rng(seed);
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(classes);
    for _ in 0..classes {
        let mut best: Option<(f64, Vec<f64>)> = None;
        for _ in 0..1000 {
            let c: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect();
            let sep = centers
                .iter()
                .map(|o| o.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
                .fold(f64::INFINITY, f64::min);
            if best.as_ref().is_none_or(|(s, _)| sep > *s) {
                best = Some((sep, c));
            }
            if sep >= 1.0 {
                break;
            }
        }
        centers.push(best.expect("at least one attempt").1);
    }
    let mut inputs = Vec::with_capacity(classes * per_class * dim);
    let mut labels = Vec::with_capacity(classes * per_class);
    for _ in 0..per_class {
        for (label, center) in centers.iter().enumerate() {
            for &c in center {
                let z: f64 = StandardNormal.sample(&mut rng);
                inputs.push(c + spread * z);
            }
            labels.push(label);
        }
    }
    Dataset::new(inputs, dim, labels, classes, Provenance::Blobs { classes, per_class, dim, spread, seed })
}

/// Immutable, sorted list of sample indices drawn once with a fixed seed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixedSubset {
    indices: Vec<usize>,
    parent_len: usize,
    seed: u64,
}

impl FixedSubset {
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn parent_len(&self) -> usize {
        self.parent_len
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Short identifier recorded in reports.
    pub fn id(&self) -> String {
        format!("n{}-of{}-seed{}", self.len(), self.parent_len, self.seed)
    }
}

/// Shuffles `0..N` with `seed`, keeps the first `⌈fraction·N⌉` indices and
/// sorts them.
pub fn fixed_subset(ds: &Dataset, fraction: f64, seed: u64) -> Result<FixedSubset> {
    subset_of_len(ds.len(), fraction, seed)
}

pub fn subset_of_len(n: usize, fraction: f64, seed: u64) -> Result<FixedSubset> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid(format!("subset fraction must be in (0, 1], got {fraction}")));
    }
    if n == 0 {
        return Err(Error::invalid("cannot take a subset of an empty dataset"));
    }
    let take = ((fraction * n as f64).ceil() as usize).clamp(1, n);
    let mut all: Vec<usize> = (0..n).collect();
    shuffle(&mut all, &mut rng(seed));
    let mut indices = all[..take].to_vec();
    indices.sort_unstable();
    Ok(FixedSubset { indices, parent_len: n, seed })
}
