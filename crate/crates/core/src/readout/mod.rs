//! Linear readout over frozen top-layer activations, and the seeded
//! experiment harness.

mod experiment;

use std::cmp::Ordering;

use ndarray::{Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::frontend::Frontend;
use crate::image::Image;
use crate::network::{forward_network, NetworkState};

pub use experiment::{
    check_compatible, dataset_for_seed, evaluate_for_seed, load_fixed_dataset, run_experiment, run_seed, train_for_seed, write_results,
    ExperimentResult, SeedOutcome, RESULTS_FILE, RESULTS_HEADER, SUMMARY_FILE, SUMMARY_HEADER,
};

/// Hinge-loss SGD settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReadoutParams {
    /// L2 regularization strength.
    pub lambda: f64,
    /// Passes over the training rows.
    pub epochs: usize,
    /// Rescale every feature to zero mean and unit variance over the
    /// training rows before fitting.
    pub standardize: bool,
    pub seed: u64,
}

impl Default for ReadoutParams {
    fn default() -> Self {
        ReadoutParams { lambda: 1e-4, epochs: 50, standardize: true, seed: 0 }
    }
}

impl ReadoutParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::param("readout.lambda", format!("must be positive, got {}", self.lambda)));
        }
        if self.epochs == 0 {
            return Err(Error::param("readout.epochs", "must be >= 1"));
        }
        Ok(())
    }
}

/// One-vs-rest linear classifier.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearModel {
    /// `classes × feature_dim`, acting on standardized features.
    pub weights: Array2<f64>,
    pub biases: Vec<f64>,
    /// Per-feature shift and scale applied before the weights:
    /// `z = (x - offset) / scale`. Identity when standardization is off.
    pub offset: Vec<f64>,
    pub scale: Vec<f64>,
    pub params: ReadoutParams,
}

impl LinearModel {
    pub fn classes(&self) -> usize {
        self.weights.nrows()
    }

    pub fn feature_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn scores(&self, x: ArrayView1<'_, f64>) -> Vec<f64> {
        let z: Vec<f64> = x.iter().zip(self.offset.iter().zip(&self.scale)).map(|(v, (o, s))| (v - o) / s).collect();
        self.weights.outer_iter().zip(&self.biases).map(|(w, b)| w.dot(&ArrayView1::from(&z)) + b).collect()
    }

    /// Highest-scoring class; ties go to the lowest class index.
    pub fn predict(&self, x: ArrayView1<'_, f64>) -> usize {
        argmax(&self.scores(x))
    }
}

pub(crate) fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Top-layer activations of every image, flattened row-major, one row per
/// image.
pub fn extract_features(net: &NetworkState, frontend: &Frontend, images: &[&Image]) -> Result<Array2<f64>> {
    let grid = net.top_grid();
    let dim = grid * grid;
    let rows: Vec<Vec<f64>> = images
        .par_iter()
        .map(|img| {
            let stack = frontend.process(img)?;
            let outputs = forward_network(net, &stack)?;
            let top = outputs.last().ok_or_else(|| Error::Structure("network has no layers".into()))?;
            Ok(top.iter().copied().collect())
        })
        .collect::<Result<_>>()?;
    let mut out = Array2::zeros((images.len(), dim));
    for (mut row, values) in out.outer_iter_mut().zip(rows) {
        row.assign(&ArrayView1::from(&values));
    }
    Ok(out)
}

fn lexicographic(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> Ordering {
    a.iter().zip(b.iter()).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(Ordering::Equal)
}

/// Trains one hinge-loss classifier per class with the Pegasos schedule
/// (step `1 / (lambda * t)`, projection onto the `1 / sqrt(lambda)` ball).
/// The bias is learned as the weight of a constant feature.
///
/// Rows are put in a canonical order first and every epoch reshuffles with
/// a generator seeded from `(seed, epoch)`, so the model does not depend on
/// the order the rows were supplied in.
pub fn train_linear(features: &Array2<f64>, labels: &[usize], params: &ReadoutParams) -> Result<LinearModel> {
    params.validate()?;
    let n = features.nrows();
    if labels.len() != n {
        return Err(Error::Structure(format!("{n} feature rows but {} labels", labels.len())));
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let present = (0..classes).filter(|c| labels.contains(c)).count();
    if present < 2 {
        return Err(Error::param("labels", "training needs at least two classes"));
    }
    let mut canonical: Vec<usize> = (0..n).collect();
    canonical.sort_by(|&a, &b| labels[a].cmp(&labels[b]).then_with(|| lexicographic(features.row(a), features.row(b))));

    let mut schedule = Vec::with_capacity(params.epochs * n);
    for epoch in 0..params.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let mut order = canonical.clone();
        order.shuffle(&mut rng);
        schedule.extend(order);
    }

    let dim = features.ncols();
    let (offset, scale) = if params.standardize { feature_moments(features, &canonical) } else { (vec![0.0; dim], vec![1.0; dim]) };
    let mut z = features.to_owned();
    for mut row in z.outer_iter_mut() {
        for ((v, o), s) in row.iter_mut().zip(&offset).zip(&scale) {
            *v = (*v - o) / s;
        }
    }
    let rows: Vec<(Vec<f64>, f64)> = (0..classes)
        .into_par_iter()
        .map(|class| pegasos(&z, labels, class, &schedule, params.lambda))
        .collect();
    let mut weights = Array2::zeros((classes, dim));
    let mut biases = Vec::with_capacity(classes);
    for (mut row, (w, b)) in weights.axis_iter_mut(Axis(0)).zip(rows) {
        row.assign(&ArrayView1::from(&w));
        biases.push(b);
    }
    Ok(LinearModel { weights, biases, offset, scale, params: *params })
}

/// Per-column mean and population SD, summed in `order` so the result does
/// not depend on how the rows were supplied. Columns that never vary keep
/// scale 1 so they map to zero instead of blowing up.
fn feature_moments(features: &Array2<f64>, order: &[usize]) -> (Vec<f64>, Vec<f64>) {
    let n = features.nrows() as f64;
    let mut mean = vec![0.0; features.ncols()];
    for &i in order {
        mean.iter_mut().zip(features.row(i).iter()).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; features.ncols()];
    for row in order.iter().map(|&i| features.row(i)) {
        for ((s, v), m) in var.iter_mut().zip(row.iter()).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let scale = var.into_iter().map(|s| (s / n).sqrt()).map(|sd| if sd > 1e-12 { sd } else { 1.0 }).collect();
    (mean, scale)
}

/// Binary Pegasos for `class` against the rest. The weight vector is kept
/// as `scale * v` so the shrink step costs O(1). The returned model is the
/// average of the iterates over the second half of the schedule; the last
/// iterate alone still swings by whole steps when `lambda * t` is small.
fn pegasos(features: &Array2<f64>, labels: &[usize], class: usize, schedule: &[usize], lambda: f64) -> (Vec<f64>, f64) {
    let dim = features.ncols();
    let mut v = vec![0.0; dim];
    let mut v_bias = 0.0;
    let mut scale = 1.0;
    let mut sq_norm = 0.0; // of scale * (v, v_bias)
    let radius_sq = 1.0 / lambda;
    let average_from = schedule.len() / 2;
    let mut avg = vec![0.0; dim];
    let mut avg_bias = 0.0;
    for (t, &i) in schedule.iter().enumerate() {
        if t >= average_from && t > 0 {
            // the iterate entering step t
            avg.iter_mut().zip(&v).for_each(|(a, b)| *a += scale * b);
            avg_bias += scale * v_bias;
        }
        let t = (t + 1) as f64;
        let step = 1.0 / (lambda * t);
        let y = if labels[i] == class { 1.0 } else { -1.0 };
        let x = features.row(i);
        let margin = y * scale * (v.iter().zip(x.iter()).map(|(a, b)| a * b).sum::<f64>() + v_bias);
        let shrink = 1.0 - step * lambda;
        if shrink <= 0.0 {
            v.iter_mut().for_each(|a| *a = 0.0);
            v_bias = 0.0;
            scale = 1.0;
            sq_norm = 0.0;
        } else {
            scale *= shrink;
            sq_norm *= shrink * shrink;
        }
        if margin < 1.0 {
            let g = step * y / scale;
            let mut dot = 0.0;
            let mut x_sq = 0.0;
            for (a, &b) in v.iter_mut().zip(x.iter()) {
                dot += *a * b;
                x_sq += b * b;
                *a += g * b;
            }
            dot += v_bias;
            x_sq += 1.0;
            v_bias += g;
            // |s(v + g x)|^2 = |sv|^2 + 2 s^2 g <v, x> + s^2 g^2 |x|^2
            sq_norm += scale * scale * (2.0 * g * dot + g * g * x_sq);
        }
        if sq_norm > radius_sq {
            let f = (radius_sq / sq_norm).sqrt();
            scale *= f;
            sq_norm = radius_sq;
        }
        if scale < 1e-100 {
            v.iter_mut().for_each(|a| *a *= scale);
            v_bias *= scale;
            scale = 1.0;
        }
    }
    avg.iter_mut().zip(&v).for_each(|(a, b)| *a += scale * b);
    avg_bias += scale * v_bias;
    let count = (schedule.len() - average_from.max(1) + 1) as f64;
    (avg.into_iter().map(|a| a / count).collect(), avg_bias / count)
}

/// Fraction of rows whose predicted class equals the label.
pub fn evaluate(model: &LinearModel, features: &Array2<f64>, labels: &[usize]) -> Result<f64> {
    if features.nrows() == 0 {
        return Err(Error::param("features", "cannot evaluate on an empty set"));
    }
    if labels.len() != features.nrows() || features.ncols() != model.feature_dim() {
        return Err(Error::Structure("feature matrix does not match the model or labels".into()));
    }
    let correct = features.outer_iter().zip(labels).filter(|(x, &l)| model.predict(x.view()) == l).count();
    Ok(correct as f64 / labels.len() as f64)
}
