mod common;

use ndarray::{Array2, Array3};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use visnet::frontend::{dog_filter, make_gabor_bank, opponent_channels, DogParams, GaborParams, Provenance, FeatureStack};
use visnet::ingest::{decode_pnm, encode_pnm, parse_cifar10, parse_idx_images, parse_idx_labels, CIFAR_RECORD_LEN};
use visnet::learning::{
    hebbian_trace_step, mahalanobis_distance, mahalanobis_gradient, trace_update, update_running_stats, MahalanobisStats,
};
use visnet::network::{
    forward_layer, forward_network, lateral_inhibition, minmax_normalize, normalize_weights, rbf_activation, read_model,
    write_model, InhibitionParams, LayerGeometry, NetworkConfig, NetworkState, Variant,
};
use visnet::readout::{evaluate, train_linear, LinearModel, ReadoutParams};
use visnet::symmetry::{symmetry_score, MirrorAxis};
use visnet::{Error, Image};

fn unit(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, len)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

proptest! {
    #[test]
    fn trace_matches_closed_form(ys in unit(1..30), eta in 0.0f64..=1.0) {
        let mut trace = 0.0;
        for &y in &ys {
            trace = trace_update(trace, y, eta);
        }
        let t = ys.len();
        let closed: f64 = (1.0 - eta) * ys.iter().enumerate().map(|(k, y)| eta.powi((t - 1 - k) as i32) * y).sum::<f64>();
        prop_assert!((trace - closed).abs() <= 1e-12);
    }

    #[test]
    fn minmax_lands_in_unit_interval(v in prop::collection::vec(-1e3f64..1e3, 1..200)) {
        let out = minmax_normalize(&v).unwrap();
        prop_assert_eq!(out.len(), v.len());
        prop_assert!(out.iter().all(|&x| (0.0..=1.0).contains(&x)));
        let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        if hi > lo {
            let imin = v.iter().position(|&x| x == lo).unwrap();
            let imax = v.iter().position(|&x| x == hi).unwrap();
            prop_assert_eq!(out[imin], 0.0);
            prop_assert_eq!(out[imax], 1.0);
            for i in 0..v.len() {
                for j in 0..v.len() {
                    if v[i] < v[j] {
                        prop_assert!(out[i] <= out[j]);
                    }
                }
            }
        } else {
            prop_assert!(out.iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn weight_normalization_gives_unit_norm(v in prop::collection::vec(-10.0f64..10.0, 1..100)) {
        prop_assume!(norm(&v) > 1e-9);
        let w = normalize_weights(&v).unwrap();
        prop_assert!((norm(&w) - 1.0).abs() <= 1e-12);
        // same direction
        let cos: f64 = w.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() / norm(&v);
        prop_assert!((cos - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn rbf_is_bounded_and_peaks_at_centre(x in unit(1..20), sigma in 0.05f64..5.0, t in 0.0f64..1.0) {
        let c: Vec<f64> = x.iter().map(|v| 1.0 - v).collect();
        let a = rbf_activation(&x, &c, sigma).unwrap();
        prop_assert!(a > 0.0 || norm(&x.iter().zip(&c).map(|(p, q)| p - q).collect::<Vec<_>>()) > 0.0);
        prop_assert!(a <= 1.0);
        prop_assert_eq!(rbf_activation(&c, &c, sigma).unwrap(), 1.0);
        // moving toward the centre never lowers the response
        let closer: Vec<f64> = x.iter().zip(&c).map(|(p, q)| p + t * (q - p)).collect();
        prop_assert!(rbf_activation(&closer, &c, sigma).unwrap() >= a);
    }

    #[test]
    fn hebbian_step_keeps_unit_rows(w in unit(2..40), scale in 0.0f64..1.0, trace in 0.0f64..1.0, alpha in 0.0f64..1.0) {
        prop_assume!(norm(&w) > 1e-6);
        let mut w = normalize_weights(&w).unwrap();
        let x: Vec<f64> = w.iter().rev().map(|v| v * scale).collect();
        hebbian_trace_step(&mut w, &x, trace, alpha).unwrap();
        prop_assert!((norm(&w) - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn zero_eta_is_plain_hebbian(w in unit(2..20), x_seed in unit(2..20), y in 0.0f64..1.0, alpha in 0.001f64..0.5) {
        let n = w.len().min(x_seed.len());
        prop_assume!(norm(&w[..n]) > 1e-6);
        let start = normalize_weights(&w[..n]).unwrap();
        let x = &x_seed[..n];
        let mut traced = start.clone();
        hebbian_trace_step(&mut traced, x, trace_update(0.7, y, 0.0), alpha).unwrap();
        // Hebbian oracle: w + alpha * y * x, then unit length
        let plain: Vec<f64> = start.iter().zip(x).map(|(wi, xi)| wi + alpha * y * xi).collect();
        let plain = normalize_weights(&plain).unwrap();
        for (a, b) in traced.iter().zip(&plain) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn identity_covariance_is_euclidean(x in unit(1..30), mu_seed in unit(1..30)) {
        let n = x.len().min(mu_seed.len());
        let stats = MahalanobisStats::from_parts(mu_seed[..n].to_vec(), vec![1.0; n], 1, 1e-6).unwrap();
        let euclid = norm(&x[..n].iter().zip(&mu_seed[..n]).map(|(a, b)| a - b).collect::<Vec<_>>());
        prop_assert!((mahalanobis_distance(&x[..n], &stats) - euclid).abs() <= 1e-9);
    }

    #[test]
    fn welford_matches_batch_statistics(rows in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 4), 1..60)) {
        let mut stats = MahalanobisStats::new(4, 1e-6).unwrap();
        for r in &rows {
            update_running_stats(&mut stats, r).unwrap();
        }
        let n = rows.len() as f64;
        for i in 0..4 {
            let mean = rows.iter().map(|r| r[i]).sum::<f64>() / n;
            let var = rows.iter().map(|r| (r[i] - mean).powi(2)).sum::<f64>() / n;
            prop_assert!((stats.mean()[i] - mean).abs() <= 1e-9);
            prop_assert!((stats.var(i) - var.max(1e-6)).abs() <= 1e-9);
        }
    }

    #[test]
    fn symmetry_score_is_mirror_invariant(bits in prop::collection::vec(any::<bool>(), 64)) {
        prop_assume!(bits.iter().any(|&b| b));
        let a = Array2::from_shape_fn((8, 8), |(y, x)| if bits[y * 8 + x] { 1.0 } else { 0.0 });
        let mirrored = Array2::from_shape_fn((8, 8), |(y, x)| a[[y, 7 - x]]);
        let s = symmetry_score(&Image::Gray(a), MirrorAxis::Vertical).unwrap();
        prop_assert_eq!(s, symmetry_score(&Image::Gray(mirrored), MirrorAxis::Vertical).unwrap());
        prop_assert!((0.0..=1.0).contains(&s));
    }

    #[test]
    fn opponent_channels_invert(px in prop::collection::vec(0.0f64..1.0, 3 * 12)) {
        let rgb = Array3::from_shape_vec((3, 4, 3), px).unwrap();
        let back = opponent_channels(&rgb).unwrap().to_rgb();
        prop_assert!(back.iter().zip(rgb.iter()).all(|(a, b)| (a - b).abs() < 1e-9));
    }

    #[test]
    fn dog_filter_is_linear_and_mirror_equivariant(px in unit(49..50), s in 0.0f64..4.0) {
        let img = Array2::from_shape_vec((7, 7), px).unwrap();
        let p = DogParams::default();
        let base = dog_filter(&img, &p).unwrap();
        let scaled = dog_filter(&img.mapv(|v| v * s), &p).unwrap();
        prop_assert!(base.iter().zip(scaled.iter()).all(|(a, b)| (a * s - b).abs() < 1e-12));
        let flip = |m: &Array2<f64>| Array2::from_shape_fn((7, 7), |(y, x)| m[[y, 6 - x]]);
        let of_flipped = dog_filter(&flip(&img), &p).unwrap();
        prop_assert!(flip(&base).iter().zip(of_flipped.iter()).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn lateral_inhibition_only_suppresses(px in unit(36..37), radius in 1usize..3, strength in 0.0f64..2.0) {
        let a = Array2::from_shape_vec((6, 6), px).unwrap();
        let out = lateral_inhibition(&a, &InhibitionParams { radius, strength });
        prop_assert!(out.iter().zip(a.iter()).all(|(o, i)| *o >= 0.0 && o <= i));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn gradient_matches_finite_differences(x in prop::collection::vec(-2.0f64..2.0, 10), mu in prop::collection::vec(-2.0f64..2.0, 10), var in prop::collection::vec(0.1f64..3.0, 10)) {
        let stats = MahalanobisStats::from_parts(mu, var, 5, 1e-6).unwrap();
        let d = mahalanobis_distance(&x, &stats);
        prop_assume!(d > 1e-3);
        let g = mahalanobis_gradient(&x, &stats);
        let h = 1e-6;
        let fd: Vec<f64> = (0..10).map(|i| {
            let mut up = x.clone();
            let mut down = x.clone();
            up[i] += h;
            down[i] -= h;
            (mahalanobis_distance(&up, &stats) - mahalanobis_distance(&down, &stats)) / (2.0 * h)
        }).collect();
        let diff = norm(&g.iter().zip(&fd).map(|(a, b)| a - b).collect::<Vec<_>>());
        prop_assert!(diff / norm(&fd).max(1e-12) < 1e-4);
    }

    #[test]
    fn forward_pass_matches_scalar_oracle(seed in any::<u64>(), variant_ix in 0usize..4, channels in 1usize..4) {
        let variant = [Variant::Simplified, Variant::Rbf, Variant::Md, Variant::Li][variant_ix];
        let mut cfg = NetworkConfig::new(variant, channels);
        cfg.grid = 5;
        cfg.patches = vec![2, 3];
        cfg.inhibition = InhibitionParams { radius: 1, strength: 0.5 };
        let net = NetworkState::init(&cfg, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        use rand::Rng;
        let data = Array3::from_shape_simple_fn((5, 5, channels), || rng.gen::<f64>());
        let stack = FeatureStack { data: data.clone(), provenance: Provenance::GrayGabor };
        let fast = forward_network(&net, &stack).unwrap();
        let slow = common::scalar_forward_network(&net, &data);
        for (f, s) in fast.iter().zip(&slow) {
            prop_assert!(f.iter().zip(s.iter()).all(|(a, b)| (a - b).abs() <= 1e-12));
            prop_assert!(f.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn input_scale_leaves_first_layer_unchanged(seed in any::<u64>(), s in 0.1f64..10.0) {
        let cfg = visnet::config::RunConfig { grid: 20, image_size: 20, ..Default::default() };
        let fe = cfg.frontend().unwrap();
        let net = NetworkState::init(&cfg.network_config(fe.channels()), seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        use rand::Rng;
        let img = Array2::from_shape_simple_fn((20, 20), || rng.gen::<f64>());
        let l = &net.layers[0];
        let a = forward_layer(l, &fe.process(&Image::Gray(img.clone())).unwrap().data, net.variant, &net.inhibition).unwrap();
        let b = forward_layer(l, &fe.process(&Image::Gray(img * s)).unwrap().data, net.variant, &net.inhibition).unwrap();
        prop_assert!(a.iter().zip(b.iter()).all(|(x, y)| (x - y).abs() <= 1e-6));
    }

    #[test]
    fn readout_ignores_row_order(seed in any::<u64>(), n in 6usize..30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        use rand::{seq::SliceRandom, Rng};
        let x = Array2::from_shape_simple_fn((n, 5), || rng.gen::<f64>());
        let y: Vec<usize> = (0..n).map(|i| i % 3).collect();
        let params = ReadoutParams { epochs: 5, seed, ..Default::default() };
        let a = train_linear(&x, &y, &params).unwrap();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let xp = x.select(ndarray::Axis(0), &perm);
        let yp: Vec<usize> = perm.iter().map(|&i| y[i]).collect();
        prop_assert_eq!(&a, &train_linear(&xp, &yp, &params).unwrap());
        prop_assert_eq!(evaluate(&a, &x, &y).unwrap(), evaluate(&a, &xp, &yp).unwrap());
    }
}

// Format fuzzing: every strict prefix of a valid file is a format error.

fn assert_format_error<T: std::fmt::Debug>(r: visnet::Result<T>) -> Result<(), TestCaseError> {
    match r {
        Err(Error::Format { .. }) => Ok(()),
        other => Err(TestCaseError::fail(format!("expected a format error, got {other:?}"))),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn truncated_idx_is_rejected(n in 1usize..5, cut in 0.0f64..1.0) {
        let full = common::idx_images(n, 4, 3, |i, j| (i * 13 + j) as u8);
        prop_assert_eq!(parse_idx_images(&full).unwrap().len(), n);
        let at = (cut * full.len() as f64) as usize;
        assert_format_error(parse_idx_images(&full[..at]))?;
        let labels = common::idx_labels(&vec![3; n]);
        let at = (cut * labels.len() as f64) as usize;
        assert_format_error(parse_idx_labels(&labels[..at]))?;
    }

    #[test]
    fn corrupted_idx_magic_is_rejected(byte in 0usize..4, value in any::<u8>()) {
        let mut full = common::idx_images(2, 2, 2, |_, _| 7);
        prop_assume!(full[byte] != value);
        full[byte] = value;
        assert_format_error(parse_idx_images(&full))?;
    }

    #[test]
    fn truncated_cifar_is_rejected(n in 1usize..3, cut in 0.0f64..1.0) {
        let full = common::cifar_batch(n, |i| i as u8, |i, j| (i + j) as u8);
        prop_assert_eq!(parse_cifar10(&full).unwrap().len(), n);
        let at = (cut * full.len() as f64) as usize;
        prop_assume!(at % CIFAR_RECORD_LEN != 0 || at == 0);
        assert_format_error(parse_cifar10(&full[..at]))?;
    }

    #[test]
    fn truncated_pnm_is_rejected(w in 1usize..6, h in 1usize..6, rgb in any::<bool>(), cut in 0.0f64..1.0) {
        let img = if rgb {
            Image::Rgb(Array3::from_shape_fn((h, w, 3), |(y, x, c)| ((y + x + c) % 256) as f64 / 255.0))
        } else {
            Image::Gray(Array2::from_shape_fn((h, w), |(y, x)| ((y * 3 + x) % 256) as f64 / 255.0))
        };
        let bytes = encode_pnm(&img).unwrap();
        prop_assert_eq!(decode_pnm(&bytes).unwrap(), img);
        let at = (cut * bytes.len() as f64) as usize;
        assert_format_error(decode_pnm(&bytes[..at]))?;
    }

    #[test]
    fn truncated_model_is_rejected(variant_ix in 0usize..5, cut in 0.0f64..1.0) {
        let variant = Variant::ALL[variant_ix];
        let mut cfg = NetworkConfig::new(variant, 2);
        cfg.grid = 3;
        cfg.patches = vec![2, 2];
        let net = NetworkState::init(&cfg, 1).unwrap();
        let mut bytes = Vec::new();
        write_model(&net, &mut bytes).unwrap();
        let back = read_model(bytes.as_slice()).unwrap();
        prop_assert_eq!(back.variant, variant);
        let at = (cut * bytes.len() as f64) as usize;
        assert_format_error(read_model(&bytes[..at]))?;
    }
}

#[test]
fn scalar_oracle_agrees_on_hand_seeded_weights() {
    let g = LayerGeometry { grid: 4, patch: 2, in_channels: 2 };
    let layer = common::hand_seeded_layer(g, 1);
    let input = Array3::from_shape_fn((4, 4, 2), |(y, x, c)| ((y * 5 + x * 3 + c) % 7) as f64 / 7.0);
    for variant in [Variant::Simplified, Variant::Li] {
        let inh = InhibitionParams { radius: 1, strength: 0.3 };
        let fast = forward_layer(&layer, &input, variant, &inh).unwrap();
        let slow = common::scalar_forward_layer(&layer.weights, &g, &input, variant, 1.0, &inh);
        assert!(fast.iter().zip(slow.iter()).all(|(a, b)| (a - b).abs() <= 1e-12));
    }
}

#[test]
fn gabor_bank_size_is_product_of_tunings() {
    let p = GaborParams { frequencies: vec![0.2, 0.5], orientations: vec![0.0, 1.0, 2.0], ..Default::default() };
    assert_eq!(make_gabor_bank(&p).unwrap().len(), 2 * 3 * 2);
    assert_eq!(make_gabor_bank(&GaborParams::default()).unwrap().len(), 32);
}

#[test]
fn random_scores_give_chance_accuracy() {
    // 5 classes, 10,000 balanced rows, random linear model on random features
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    use rand::Rng;
    let x = Array2::from_shape_simple_fn((10_000, 8), || rng.gen::<f64>() - 0.5);
    let y: Vec<usize> = (0..10_000).map(|i| i % 5).collect();
    let model = LinearModel {
        weights: Array2::from_shape_simple_fn((5, 8), || rng.gen::<f64>() - 0.5),
        biases: vec![0.0; 5],
        offset: vec![0.0; 8],
        scale: vec![1.0; 8],
        params: ReadoutParams::default(),
    };
    let acc = evaluate(&model, &x, &y).unwrap();
    assert!((acc - 0.2).abs() <= 0.02, "accuracy {acc}");
}

#[test]
fn xor_is_not_linearly_separable() {
    let x = ndarray::array![[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]];
    let y = [0, 0, 1, 1];
    let m = train_linear(&x, &y, &ReadoutParams::default()).unwrap();
    assert!(evaluate(&m, &x, &y).unwrap() < 1.0);
}

#[test]
fn feature_extraction_leaves_network_untouched() {
    let cfg = visnet::config::RunConfig { grid: 12, image_size: 12, patches: vec![2, 3], ..Default::default() };
    let fe = cfg.frontend().unwrap();
    let net = NetworkState::init(&cfg.network_config(fe.channels()), 3).unwrap();
    let before = net.clone();
    let img = Image::Gray(Array2::from_shape_fn((12, 12), |(y, x)| ((x + y) % 3) as f64 / 2.0));
    let rows = visnet::readout::extract_features(&net, &fe, &[&img, &img]).unwrap();
    assert_eq!(net, before);
    assert_eq!(rows.row(0), rows.row(1));
    assert_eq!(rows.ncols(), 144);
}
