mod common;

use std::io::Read;
use std::path::PathBuf;
use std::sync::Arc;

use common::{mlp_op, random_dataset, random_vector};
use hessianscope::data::{fixed_subset, load_idx, make_blobs, Dataset, Provenance};
use hessianscope::model::{init_params, Activation, Batch, MlpObjective, ModelSpec};
use hessianscope::ndcore::LossOperator;
use hessianscope::train::{train_objective, RmsPropConfig, Schedule};

#[test]
fn initial_weights_have_inverse_sqrt_fan_in_spread() {
    let spec = ModelSpec::new(vec![784, 32, 10], Activation::Relu, 1).unwrap();
    let theta = init_params(&spec).unwrap();
    let mut off = 0;
    for w in spec.layers.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let weights = &theta.as_slice()[off..off + fan_in * fan_out];
        let biases = &theta.as_slice()[off + fan_in * fan_out..off + fan_in * fan_out + fan_out];
        off += fan_in * fan_out + fan_out;
        let n = weights.len() as f64;
        let mean = weights.iter().sum::<f64>() / n;
        let std = (weights.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        let want = 1.0 / (fan_in as f64).sqrt();
        assert!((std / want - 1.0).abs() < 0.2, "layer {fan_in}->{fan_out}: std {std}, want {want}");
        assert!(biases.iter().all(|&b| b == 0.0));
    }
    assert_eq!(off, theta.dim());
}

/// Sum with an error-free transformation (TwoSum), carrying the rounding
/// error of every addition in a second word.
fn two_sum_total(xs: &[f64]) -> (f64, f64) {
    let (mut hi, mut lo) = (0.0f64, 0.0f64);
    for &x in xs {
        let s = hi + x;
        let bp = s - hi;
        let err = (hi - (s - bp)) + (x - bp);
        hi = s;
        lo += err;
    }
    (hi, lo)
}

#[test]
fn cross_entropy_matches_direct_probability_in_extended_precision() {
    // A model without hidden layers exposes its logits as `Wx + b`.
    let (in_dim, classes) = (5, 4);
    let data = random_dataset(1, in_dim, classes, 77);
    for seed in 0..20 {
        let op = mlp_op(&[in_dim, classes], Activation::Tanh, data.clone(), 0.0);
        let theta = random_vector(op.dim(), 2.0, seed);
        let x = data.input(0);
        let label = data.label(0);
        let t = theta.as_slice();
        let logits: Vec<f64> = (0..classes)
            .map(|j| t[in_dim * classes + j] + (0..in_dim).map(|k| t[j * in_dim + k] * x[k]).sum::<f64>())
            .collect();
        let exps: Vec<f64> = logits.iter().map(|z| z.exp()).collect();
        let (hi, lo) = two_sum_total(&exps);
        // -ln(e^{z_c} / (hi + lo)) = ln(hi) + ln(1 + lo/hi) - z_c
        let want = hi.ln() + (lo / hi).ln_1p() - logits[label];
        let got = op.loss(&theta).unwrap();
        assert!(got >= 0.0);
        assert!((got - want).abs() <= 1e-14 * want.abs().max(1.0), "seed {seed}: {got} vs {want}");
    }
}

#[test]
fn loss_is_invariant_to_shifting_all_logits() {
    let data = random_dataset(6, 3, 4, 5);
    let op = mlp_op(&[3, 5, 4], Activation::Softplus, data, 0.0);
    let theta = random_vector(op.dim(), 1.0, 6);
    let mut shifted = theta.clone().into_vec();
    let n = shifted.len();
    for b in &mut shifted[n - 4..] {
        *b += 3.7;
    }
    let shifted = hessianscope::ndcore::ParamVector::new(shifted).unwrap();
    let (a, b) = (op.loss(&theta).unwrap(), op.loss(&shifted).unwrap());
    assert!((a - b).abs() < 1e-12, "{a} vs {b}");
}

#[test]
fn blobs_are_linearly_separable() {
    let data = Arc::new(make_blobs(3, 100, 2, 0.2, 1).unwrap());
    let spec = ModelSpec::new(vec![2, 3], Activation::Tanh, 0).unwrap();
    let op = LossOperator::new(MlpObjective::new(spec.clone(), Batch::full(data.clone())).unwrap(), 0.0).unwrap();
    let cfg = RmsPropConfig { base_lr: 0.02, per_epoch_lr_decay: 1.0, batch_size: 300, ..RmsPropConfig::default() };
    let schedule = Schedule { total_steps: 400, checkpoint_every: 0, seed: 2 };
    let trajectory = train_objective(&op, init_params(&spec).unwrap(), &cfg, schedule).unwrap();
    let theta = &trajectory.last().unwrap().theta;
    let acc = spec.accuracy(theta, &data).unwrap();
    assert!(acc > 0.95, "linear probe accuracy {acc}");
}

fn mnist_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist")
}

fn gunzip(path: &PathBuf) -> Vec<u8> {
    let mut out = Vec::new();
    flate2::read::GzDecoder::new(std::fs::File::open(path).unwrap()).read_to_end(&mut out).unwrap();
    out
}

fn be_u32(b: &[u8], at: usize) -> usize {
    u32::from_be_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]]) as usize
}

#[test]
fn bundled_mnist_recount_with_independent_reader() {
    let images = mnist_dir().join("train-images-idx3-ubyte.gz");
    let labels = mnist_dir().join("train-labels-idx1-ubyte.gz");
    let ds = load_idx(&images, &labels).unwrap();

    let img = gunzip(&images);
    let lab = gunzip(&labels);
    assert_eq!(be_u32(&img, 0), 0x803);
    assert_eq!(be_u32(&lab, 0), 0x801);
    let n = be_u32(&lab, 4);
    assert_eq!(be_u32(&img, 4), n);
    let (rows, cols) = (be_u32(&img, 8), be_u32(&img, 12));
    assert_eq!(ds.len(), n);
    assert_eq!(ds.in_dim(), rows * cols);
    assert_eq!(ds.in_dim(), 784);

    let mut hist = vec![0usize; 10];
    for &l in &lab[8..8 + n] {
        hist[l as usize] += 1;
    }
    assert_eq!(ds.histogram(), hist);
    assert_eq!(hist.iter().sum::<usize>(), n);

    for i in [0, n / 2, n - 1] {
        let raw = &img[16 + i * 784..16 + (i + 1) * 784];
        let want: Vec<f64> = raw.iter().map(|&p| p as f64 / 255.0).collect();
        assert_eq!(ds.input(i), &want[..]);
    }
}

#[test]
fn operators_on_the_same_subset_agree_bitwise() {
    let data = random_dataset(40, 3, 2, 3);
    let spec = ModelSpec::new(vec![3, 4, 2], Activation::Softplus, 0).unwrap();
    let subset = fixed_subset(&data, 0.25, 9).unwrap();
    let make = || {
        let batch = Batch::new(data.clone(), subset.indices().to_vec()).unwrap();
        LossOperator::new(MlpObjective::new(spec.clone(), batch).unwrap(), 0.0).unwrap()
    };
    let (a, b) = (make(), make());
    let theta = random_vector(a.dim(), 1.0, 1);
    let v = random_vector(a.dim(), 1.0, 2);
    assert_eq!(a.loss(&theta).unwrap().to_bits(), b.loss(&theta).unwrap().to_bits());
    assert_eq!(a.grad(&theta).unwrap(), b.grad(&theta).unwrap());
    assert_eq!(a.hvp(&theta, &v).unwrap(), b.hvp(&theta, &v).unwrap());
}

#[test]
fn blobs_provenance_records_generator_parameters() {
    let ds: Dataset = make_blobs(2, 5, 3, 0.1, 42).unwrap();
    assert_eq!(ds.provenance(), &Provenance::Blobs { classes: 2, per_class: 5, dim: 3, spread: 0.1, seed: 42 });
}
