//! Independent reference implementations used as oracles by the
//! integration tests. Everything here is written with plain index loops and
//! shares no code with the library's fast paths.
#![allow(dead_code)]

use ndarray::{Array2, Array3};
use visnet::network::{InhibitionParams, LayerGeometry, LayerState, NetworkState, Variant};

/// Scalar-loop forward pass of one layer.
pub fn scalar_forward_layer(
    weights: &Array2<f64>,
    g: &LayerGeometry,
    input: &Array3<f64>,
    variant: Variant,
    rbf_sigma: f64,
    inhibition: &InhibitionParams,
) -> Array2<f64> {
    let n = g.grid;
    let p = g.patch;
    let c = g.in_channels;
    let half = (p / 2) as i64;
    let mut raw = vec![0.0; n * n];
    for row in 0..n {
        for col in 0..n {
            let mut patch = Vec::with_capacity(p * p * c);
            for dy in 0..p {
                for dx in 0..p {
                    for ch in 0..c {
                        let y = row as i64 + dy as i64 - half;
                        let x = col as i64 + dx as i64 - half;
                        let inside = y >= 0 && x >= 0 && y < n as i64 && x < n as i64;
                        patch.push(if inside { input[[y as usize, x as usize, ch]] } else { 0.0 });
                    }
                }
            }
            let mut norm = 0.0;
            for v in &patch {
                norm += v * v;
            }
            let norm = norm.sqrt();
            if norm > 0.0 {
                for v in patch.iter_mut() {
                    *v /= norm;
                }
            }
            let neuron = row * n + col;
            raw[neuron] = if variant == Variant::Rbf {
                let mut d2 = 0.0;
                for (i, v) in patch.iter().enumerate() {
                    let d = v - weights[[neuron, i]];
                    d2 += d * d;
                }
                (-d2 / (2.0 * rbf_sigma * rbf_sigma)).exp()
            } else {
                let mut s = 0.0;
                for (i, v) in patch.iter().enumerate() {
                    s += v * weights[[neuron, i]];
                }
                s
            };
        }
    }
    let lo = raw.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut act = Array2::zeros((n, n));
    if hi > lo {
        for row in 0..n {
            for col in 0..n {
                act[[row, col]] = (raw[row * n + col] - lo) / (hi - lo);
            }
        }
    }
    if matches!(variant, Variant::Li | Variant::LiDogRgb) && inhibition.strength != 0.0 {
        let r = inhibition.radius as i64;
        let before = act.clone();
        for y in 0..n as i64 {
            for x in 0..n as i64 {
                let mut sum = 0.0;
                let mut count = 0;
                for ny in y - r..=y + r {
                    for nx in x - r..=x + r {
                        if (ny, nx) != (y, x) && ny >= 0 && nx >= 0 && ny < n as i64 && nx < n as i64 {
                            sum += before[[ny as usize, nx as usize]];
                            count += 1;
                        }
                    }
                }
                if count > 0 {
                    let v = before[[y as usize, x as usize]] - inhibition.strength * sum / count as f64;
                    act[[y as usize, x as usize]] = v.max(0.0);
                }
            }
        }
    }
    act
}

/// Scalar-loop forward pass through every layer of `net`.
pub fn scalar_forward_network(net: &NetworkState, input: &Array3<f64>) -> Vec<Array2<f64>> {
    let mut x = input.clone();
    let mut out = Vec::new();
    for layer in &net.layers {
        let act = scalar_forward_layer(&layer.weights, &layer.geometry, &x, net.variant, layer.rbf_sigma.unwrap_or(1.0), &net.inhibition);
        let n = layer.geometry.grid;
        x = Array3::from_shape_fn((n, n, 1), |(y, xx, _)| act[[y, xx]]);
        out.push(act);
    }
    out
}

/// Deterministic, hand-seeded unit-norm weights: row `i` is built from a
/// small integer recipe rather than an RNG.
pub fn hand_seeded_layer(g: LayerGeometry, salt: usize) -> LayerState {
    let mut w = Array2::from_shape_fn((g.neurons(), g.fan_in()), |(i, j)| (((i * 7 + j * 3 + salt) % 11) as f64 + 1.0) / 11.0);
    for mut row in w.rows_mut() {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        row.mapv_inplace(|v| v / norm);
    }
    LayerState { geometry: g, weights: w, traces: vec![0.0; g.neurons()], rbf_sigma: None, md_stats: None }
}

/// Big-endian IDX image file with `n` images of `rows × cols`.
pub fn idx_images(n: usize, rows: usize, cols: usize, pixel: impl Fn(usize, usize) -> u8) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + n * rows * cols);
    out.extend_from_slice(&2051u32.to_be_bytes());
    out.extend_from_slice(&(n as u32).to_be_bytes());
    out.extend_from_slice(&(rows as u32).to_be_bytes());
    out.extend_from_slice(&(cols as u32).to_be_bytes());
    for i in 0..n {
        for j in 0..rows * cols {
            out.push(pixel(i, j));
        }
    }
    out
}

pub fn idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&2049u32.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// CIFAR-10 batch: `n` records of label byte + 3072 pixel bytes.
pub fn cifar_batch(n: usize, label: impl Fn(usize) -> u8, pixel: impl Fn(usize, usize) -> u8) -> Vec<u8> {
    let mut out = Vec::with_capacity(n * 3073);
    for i in 0..n {
        out.push(label(i));
        for j in 0..3072 {
            out.push(pixel(i, j));
        }
    }
    out
}

/// Writes canonical-size MNIST files (60,000 train, 10,000 test).
pub fn write_canonical_mnist(dir: &std::path::Path) {
    let px = |i: usize, j: usize| ((i * 31 + j * 7) % 256) as u8;
    std::fs::write(dir.join("train-images-idx3-ubyte"), idx_images(60_000, 28, 28, px)).unwrap();
    let train: Vec<u8> = (0..60_000).map(|i| (i % 10) as u8).collect();
    std::fs::write(dir.join("train-labels-idx1-ubyte"), idx_labels(&train)).unwrap();
    std::fs::write(dir.join("t10k-images-idx3-ubyte"), idx_images(10_000, 28, 28, px)).unwrap();
    let test: Vec<u8> = (0..10_000).map(|i| (i % 10) as u8).collect();
    std::fs::write(dir.join("t10k-labels-idx1-ubyte"), idx_labels(&test)).unwrap();
}

/// Writes canonical-size CIFAR-10 batches (5 × 10,000 train, 10,000 test).
pub fn write_canonical_cifar(dir: &std::path::Path) {
    let px = |i: usize, j: usize| ((i + j) % 256) as u8;
    for b in 1..=5 {
        std::fs::write(dir.join(format!("data_batch_{b}.bin")), cifar_batch(10_000, |i| (i % 10) as u8, px)).unwrap();
    }
    std::fs::write(dir.join("test_batch.bin"), cifar_batch(10_000, |i| (i % 10) as u8, px)).unwrap();
}
