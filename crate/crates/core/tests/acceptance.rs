//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when a criterion that could run has failed.
//!
//! `VISNET_ACCEPTANCE=1,2,9` restricts the run to the listed criteria.
//! Criteria 6 and 8 need the real datasets: point `VISNET_MNIST_DIR` at the
//! four canonical MNIST files and `VISNET_CIFAR_DIR` at the six CIFAR-10
//! binary batches.

mod common;

use std::path::PathBuf;
use std::time::Instant;

use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use visnet::config::RunConfig;
use visnet::frontend::{dog_filter, DogParams, FeatureStack, Provenance};
use visnet::ingest::{load_cifar10_dir, load_mnist_dir, parse_cifar10, parse_idx_images, parse_idx_labels, Split};
use visnet::learning::{mahalanobis_distance, mahalanobis_gradient, trace_update, MahalanobisStats};
use visnet::network::{
    forward_network, minmax_normalize, normalize_weights, rbf_activation, InhibitionParams, LayerGeometry, NetworkState, Variant,
};
use visnet::readout::{run_experiment, ExperimentResult};
use visnet::symmetry::{build_dataset, write_dataset, Family, SymmetrySpec, LEVEL_TARGETS};
use visnet::{Error, Image};

// Tolerances and thresholds, one per checked quantity.
const TRACE_TOL: f64 = 1e-12;
const MD_EUCLID_TOL: f64 = 1e-9;
const GRAD_REL_TOL: f64 = 1e-4;
const DOG_TOL: f64 = 1e-6;
const UNIT_NORM_TOL: f64 = 1e-12;
const ORACLE_TOL: f64 = 1e-12;
const LEVEL_TOL: f64 = 0.05;
const PER_LEVEL: usize = 500;
const SQUARE_MIN_MEAN: f64 = 0.70;
const PARTED_MIN_MEAN: f64 = 0.95;
const PAIRED_WINS_OF_10: usize = 8;
const PAIRED_WINS_OF_5: usize = 4;

enum Verdict {
    Pass(String),
    Fail(String),
    /// Could not be checked in this environment; reported as FAIL but does
    /// not fail the run.
    Unavailable(String),
}

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

fn c1_equations() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst_trace = 0.0f64;
    for _ in 0..1000 {
        let eta: f64 = rng.gen();
        let ys: Vec<f64> = (0..rng.gen_range(1..40)).map(|_| rng.gen()).collect();
        let trace = ys.iter().fold(0.0, |t, &y| trace_update(t, y, eta));
        let t = ys.len();
        let closed = (1.0 - eta) * ys.iter().enumerate().map(|(k, y)| eta.powi((t - 1 - k) as i32) * y).sum::<f64>();
        worst_trace = worst_trace.max((trace - closed).abs());
    }

    let mut minmax_ok = true;
    let mut worst_norm = 0.0f64;
    for _ in 0..1000 {
        let v: Vec<f64> = (0..rng.gen_range(2..100)).map(|_| rng.gen_range(-50.0..50.0)).collect();
        let out = minmax_normalize(&v).unwrap();
        let lo = out.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = out.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        minmax_ok &= lo == 0.0 && hi == 1.0 && out.iter().all(|x| (0.0..=1.0).contains(x));
        let w = normalize_weights(&v).unwrap();
        worst_norm = worst_norm.max((w.iter().map(|x| x * x).sum::<f64>().sqrt() - 1.0).abs());
    }

    let mut rbf_ok = true;
    for _ in 0..1000 {
        let x: Vec<f64> = (0..10).map(|_| rng.gen()).collect();
        let c: Vec<f64> = (0..10).map(|_| rng.gen()).collect();
        let sigma = rng.gen_range(0.1..3.0);
        let a = rbf_activation(&x, &c, sigma).unwrap();
        rbf_ok &= a > 0.0 && a <= 1.0 && rbf_activation(&c, &c, sigma).unwrap() == 1.0;
    }

    let mut worst_euclid = 0.0f64;
    let mut worst_grad = 0.0f64;
    let mut grad_cases = 0;
    while grad_cases < 100 {
        let x: Vec<f64> = (0..10).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let mu: Vec<f64> = (0..10).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let euclid = x.iter().zip(&mu).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let identity = MahalanobisStats::from_parts(mu.clone(), vec![1.0; 10], 1, 1e-6).unwrap();
        worst_euclid = worst_euclid.max((mahalanobis_distance(&x, &identity) - euclid).abs());

        let var: Vec<f64> = (0..10).map(|_| rng.gen_range(0.1..3.0)).collect();
        let stats = MahalanobisStats::from_parts(mu, var, 10, 1e-6).unwrap();
        if mahalanobis_distance(&x, &stats) <= 1e-3 {
            continue;
        }
        grad_cases += 1;
        let g = mahalanobis_gradient(&x, &stats);
        let h = 1e-6;
        let fd: Vec<f64> = (0..10)
            .map(|i| {
                let (mut up, mut down) = (x.clone(), x.clone());
                up[i] += h;
                down[i] -= h;
                (mahalanobis_distance(&up, &stats) - mahalanobis_distance(&down, &stats)) / (2.0 * h)
            })
            .collect();
        let err = g.iter().zip(&fd).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let scale = fd.iter().map(|v| v * v).sum::<f64>().sqrt();
        worst_grad = worst_grad.max(err / scale);
    }

    // constant input: interior pixels see the whole kernel
    let p = DogParams::default();
    let c = 0.7;
    let out = dog_filter(&Array2::from_elem((9, 9), c), &p).unwrap();
    let half = p.kernel_size / 2;
    let mut worst_dog = 0.0f64;
    for y in half..9 - half {
        for x in half..9 - half {
            worst_dog = worst_dog.max((out[[y, x]] - (1.0 - p.k) * c).abs());
        }
    }

    let ok = worst_trace <= TRACE_TOL
        && minmax_ok
        && worst_norm <= UNIT_NORM_TOL
        && rbf_ok
        && worst_euclid <= MD_EUCLID_TOL
        && worst_grad < GRAD_REL_TOL
        && worst_dog <= DOG_TOL;
    check(
        ok,
        format!(
            "trace err {worst_trace:.1e}, minmax ok {minmax_ok}, norm err {worst_norm:.1e}, rbf ok {rbf_ok}, \
             md-euclid err {worst_euclid:.1e}, grad rel err {worst_grad:.1e}, dog err {worst_dog:.1e}"
        ),
    )
}

fn c2_forward_oracle() -> Verdict {
    let mut worst = 0.0f64;
    let channels = 3;
    for (salt, variant) in [Variant::Simplified, Variant::Rbf, Variant::Md, Variant::Li].into_iter().enumerate() {
        let layers = (0..4)
            .map(|l| {
                let g = LayerGeometry { grid: 4, patch: 2, in_channels: if l == 0 { channels } else { 1 } };
                let mut layer = common::hand_seeded_layer(g, salt * 4 + l);
                if variant == Variant::Rbf {
                    layer.rbf_sigma = Some(0.5);
                }
                layer
            })
            .collect();
        let net = NetworkState {
            layers,
            provenance: Provenance::GrayGabor,
            variant,
            inhibition: InhibitionParams { radius: 1, strength: 0.5 },
        };
        let data = Array3::from_shape_fn((4, 4, channels), |(y, x, c)| ((y * 7 + x * 5 + c * 3) % 11) as f64 / 10.0);
        let fast = forward_network(&net, &FeatureStack { data: data.clone(), provenance: Provenance::GrayGabor }).unwrap();
        let slow = common::scalar_forward_network(&net, &data);
        for (f, s) in fast.iter().zip(&slow) {
            for (a, b) in f.iter().zip(s.iter()) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    check(worst <= ORACLE_TOL, format!("max |fast - scalar| = {worst:.1e} over 4 variants x 4 layers"))
}

/// Independent vertical-mirror score of a binary image.
fn binary_mirror_score(img: &Array2<f64>) -> f64 {
    let (h, w) = img.dim();
    let (mut union, mut diff) = (0, 0);
    for y in 0..h {
        for x in 0..w {
            let a = img[[y, x]] > 0.5;
            let b = img[[y, w - 1 - x]] > 0.5;
            if a || b {
                union += 1;
                if a != b {
                    diff += 1;
                }
            }
        }
    }
    1.0 - diff as f64 / union as f64
}

fn c3_generators() -> Verdict {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut oracle_mismatch = 0;
    let mut total = 0;
    for family in Family::ALL {
        let spec = SymmetrySpec { count: 5 * PER_LEVEL, seed: 11, ..SymmetrySpec::new(family, 5) };
        let ds = build_dataset(&spec).unwrap();
        let scores = ds.scores.as_ref().unwrap();
        for (i, img) in ds.images.iter().enumerate() {
            worst = worst.max((scores[i] - LEVEL_TARGETS[ds.labels[i]]).abs());
            if let Image::Gray(a) = img {
                if (binary_mirror_score(a) - scores[i]).abs() > 1e-12 {
                    oracle_mismatch += 1;
                }
            }
            total += 1;
        }
    }
    let tmp = tempfile::tempdir().unwrap();
    let mut manifests = Vec::new();
    for run in 0..2 {
        let spec = SymmetrySpec { count: 50, seed: 5, ..SymmetrySpec::named("ROTATED-TRANSLATED-HUMAN-LIKE").unwrap() };
        let dir = tmp.path().join(run.to_string());
        write_dataset(&build_dataset(&spec).unwrap(), &dir).unwrap();
        manifests.push(std::fs::read(dir.join("manifest.csv")).unwrap());
    }
    let deterministic = manifests[0] == manifests[1];
    let secs = start.elapsed().as_secs_f64();
    check(
        worst <= LEVEL_TOL && oracle_mismatch == 0 && deterministic,
        format!(
            "{total} images, max |score - target| = {worst:.4}, oracle mismatches {oracle_mismatch}, \
             deterministic manifests {deterministic}, {secs:.0}s"
        ),
    )
}

fn desk_config(dataset: &str, variant: Variant) -> RunConfig {
    let mut cfg = RunConfig { dataset: dataset.into(), variant, data_count: 1000, grid: 40, n_seeds: 10, ..Default::default() };
    cfg.learning.epochs = 3;
    cfg
}

fn summarize(r: &ExperimentResult) -> String {
    let accs: Vec<String> = r.accuracies().iter().map(|a| format!("{a:.3}")).collect();
    format!("mean {:.4} sd {:.4} [{}]", r.mean().unwrap_or(f64::NAN), r.sd().unwrap_or(f64::NAN), accs.join(" "))
}

fn mean_at_least(cfg: &RunConfig, threshold: f64) -> Verdict {
    let start = Instant::now();
    let r = run_experiment(cfg, None).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let mean = r.mean().unwrap_or(0.0);
    check(
        r.failures() == 0 && mean >= threshold,
        format!("{} {}: {} (need >= {threshold}), {secs:.0}s on {} threads", cfg.dataset, cfg.variant, summarize(&r), rayon::current_num_threads()),
    )
}

/// Runs two configs over the same seeds and counts seeds where `a` beats
/// (`strict`) or matches `b`.
fn paired(a: &RunConfig, b: &RunConfig, strict: bool, needed: usize, label: &str) -> Verdict {
    let start = Instant::now();
    let ra = run_experiment(a, None).unwrap();
    let rb = run_experiment(b, None).unwrap();
    let wins = ra
        .outcomes
        .iter()
        .zip(&rb.outcomes)
        .filter(|(x, y)| match (x.accuracy, y.accuracy) {
            (Some(p), Some(q)) => if strict { p > q } else { p >= q },
            _ => false,
        })
        .count();
    check(
        wins >= needed,
        format!(
            "{label}: {wins}/{} paired seeds (need {needed}); A {} ; B {} ; {:.0}s",
            ra.outcomes.len(),
            summarize(&ra),
            summarize(&rb),
            start.elapsed().as_secs_f64()
        ),
    )
}

fn data_dir(var: &str) -> Option<PathBuf> {
    std::env::var_os(var).map(PathBuf::from).filter(|p| p.is_dir())
}

fn c6_mnist_ordering() -> Verdict {
    let Some(dir) = data_dir("VISNET_MNIST_DIR") else {
        return Verdict::Unavailable("not run: set VISNET_MNIST_DIR to the canonical MNIST files".into());
    };
    let base = RunConfig {
        dataset: "MNIST".into(),
        data_dir: Some(dir),
        image_size: 28,
        train_per_class: 500,
        test_per_class: 100,
        grid: 40,
        n_seeds: 10,
        ..Default::default()
    };
    let mut md = base.clone();
    md.variant = Variant::Md;
    md.learning.epochs = 3;
    let mut simple = base;
    simple.variant = Variant::Simplified;
    simple.learning.epochs = 3;
    paired(&md, &simple, false, PAIRED_WINS_OF_10, "md >= simplified")
}

fn c7_trace_ablation() -> Verdict {
    let mut traced = desk_config("ROTATED-TRANSLATED-TRIANGLE", Variant::Simplified);
    traced.learning.eta = 0.8;
    let mut hebbian = traced.clone();
    hebbian.learning.eta = 0.0;
    paired(&traced, &hebbian, true, PAIRED_WINS_OF_10, "eta 0.8 > eta 0")
}

fn c8_cifar_frontend() -> Verdict {
    let Some(dir) = data_dir("VISNET_CIFAR_DIR") else {
        return Verdict::Unavailable("not run: set VISNET_CIFAR_DIR to the CIFAR-10 binary batches".into());
    };
    let base = RunConfig {
        dataset: "CIFAR-10".into(),
        data_dir: Some(dir),
        train_per_class: 500,
        test_per_class: 100,
        grid: 40,
        n_seeds: 5,
        ..Default::default()
    };
    let mut rgb = base.clone();
    rgb.variant = Variant::LiDogRgb;
    rgb.learning.epochs = 3;
    let mut gray = base;
    gray.variant = Variant::Li;
    gray.learning.epochs = 3;
    paired(&rgb, &gray, false, PAIRED_WINS_OF_5, "li-dog-rgb >= li")
}

fn is_format(r: &visnet::Result<impl Sized>) -> bool {
    matches!(r, Err(Error::Format { .. }))
}

fn c9_loaders() -> Verdict {
    let tmp = tempfile::tempdir().unwrap();
    let mnist = tmp.path().join("mnist");
    let cifar = tmp.path().join("cifar");
    std::fs::create_dir_all(&mnist).unwrap();
    std::fs::create_dir_all(&cifar).unwrap();

    common::write_canonical_mnist(&mnist);
    let m = load_mnist_dir(&mnist).unwrap();
    let mnist_counts = (m.count(Split::Train), m.count(Split::Test));
    let mnist_values = m.images.iter().all(|img| matches!(img, Image::Gray(a) if a.dim() == (28, 28) && a.iter().all(|v| (0.0..=1.0).contains(v))));
    drop(m);

    common::write_canonical_cifar(&cifar);
    let c = load_cifar10_dir(&cifar).unwrap();
    let cifar_counts = (c.count(Split::Train), c.count(Split::Test));
    drop(c);

    // magic and record-length validation
    let mut bad_magic = common::idx_images(2, 2, 2, |_, _| 1);
    bad_magic[3] = 0x01;
    let mut label_magic = common::idx_labels(&[1, 2]);
    label_magic[3] = 0x03;
    let ragged = common::cifar_batch(2, |_| 1, |_, _| 2);
    let validation = is_format(&parse_idx_images(&bad_magic))
        && is_format(&parse_idx_labels(&label_magic))
        && is_format(&parse_cifar10(&ragged[..ragged.len() - 1]));

    // fuzzed truncations of the canonical files, including record boundaries
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let images = std::fs::read(mnist.join("t10k-images-idx3-ubyte")).unwrap();
    let labels = std::fs::read(mnist.join("t10k-labels-idx1-ubyte")).unwrap();
    let mut truncations = 0;
    let mut rejected = 0;
    for _ in 0..200 {
        let at = rng.gen_range(0..images.len());
        rejected += usize::from(is_format(&parse_idx_images(&images[..at])));
        let at = rng.gen_range(0..labels.len());
        rejected += usize::from(is_format(&parse_idx_labels(&labels[..at])));
        truncations += 2;
    }
    let batch = cifar.join("test_batch.bin");
    let full = std::fs::read(&batch).unwrap();
    for i in 0..20 {
        let at = if i % 2 == 0 { rng.gen_range(0..full.len()) } else { rng.gen_range(0..10_000) * 3073 };
        std::fs::write(&batch, &full[..at]).unwrap();
        rejected += usize::from(is_format(&load_cifar10_dir(&cifar)));
        truncations += 1;
    }

    let ok = mnist_counts == (60_000, 10_000) && mnist_values && cifar_counts == (50_000, 10_000) && validation && rejected == truncations;
    check(
        ok,
        format!(
            "MNIST {}/{} (values ok {mnist_values}), CIFAR {}/{}, magic/record checks {validation}, \
             {rejected}/{truncations} truncations rejected as format errors",
            mnist_counts.0, mnist_counts.1, cifar_counts.0, cifar_counts.1
        ),
    )
}

fn main() {
    // `cargo test` passes harness flags such as `--nocapture`; ignore them
    let selected: Option<Vec<usize>> =
        std::env::var("VISNET_ACCEPTANCE").ok().map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let wanted = |n: usize| selected.as_ref().map_or(true, |s| s.contains(&n));

    let criteria: [(usize, &str, fn() -> Verdict); 9] = [
        (1, "equation-level properties", c1_equations),
        (2, "forward pass vs scalar oracle", c2_forward_oracle),
        (3, "symmetry generator contract", c3_generators),
        (4, "TWOCLASSES-SQUARE simplified desk scale", || mean_at_least(&desk_config("TWOCLASSES-SQUARE", Variant::Simplified), SQUARE_MIN_MEAN)),
        (5, "TWOCLASSES-PARTED-SQUARE rbf desk scale", || mean_at_least(&desk_config("TWOCLASSES-PARTED-SQUARE", Variant::Rbf), PARTED_MIN_MEAN)),
        (6, "MNIST md vs simplified ordering", c6_mnist_ordering),
        (7, "trace-rule ablation", c7_trace_ablation),
        (8, "CIFAR-10 frontend ordering", c8_cifar_frontend),
        (9, "loader conformance", c9_loaders),
    ];
    let mut failed = 0;
    for (n, name, run) in criteria {
        if !wanted(n) {
            continue;
        }
        let line = match run() {
            Verdict::Pass(d) => format!("PASS criterion {n} ({name}): {d}"),
            Verdict::Fail(d) => {
                failed += 1;
                format!("FAIL criterion {n} ({name}): {d}")
            }
            Verdict::Unavailable(d) => format!("FAIL criterion {n} ({name}): {d}"),
        };
        println!("{line}");
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
