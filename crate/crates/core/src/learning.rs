//! Unsupervised training: the temporal trace rule, the Mahalanobis-gradient
//! rule, and the sequence/epoch loop that drives them.

use ndarray::Array3;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::frontend::{FeatureStack, Frontend};
use crate::image::Image;
use crate::ingest::{LabeledDataset, Split};
use crate::network::{
    activations_as_input, dot, for_each_segment, forward_layer, l2_norm, normalized_patch, LayerGeometry, LayerState, NetworkState, Variant,
};
use crate::symmetry::{apply_transform, TransformRange};

/// Below this Mahalanobis distance the gradient is taken to be zero.
pub const GRADIENT_GUARD: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct LearningParams {
    /// Learning rate.
    pub alpha: f64,
    /// Trace persistence in `[0, 1]`; 0 is plain Hebbian learning.
    pub eta: f64,
    pub epochs: usize,
    /// Views presented per object before the traces are reset.
    pub sequence_length: usize,
    pub seed: u64,
    /// Jitter applied to successive views of a symmetry-set object.
    pub jitter: TransformRange,
}

impl Default for LearningParams {
    fn default() -> Self {
        LearningParams {
            alpha: 0.01,
            eta: 0.8,
            epochs: 5,
            sequence_length: 5,
            seed: 0,
            jitter: TransformRange { rotation_deg: 180.0, translation_frac: 0.2 },
        }
    }
}

impl LearningParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::param("alpha", format!("must be >= 0, got {}", self.alpha)));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::param("eta", format!("must lie in [0, 1], got {}", self.eta)));
        }
        if self.sequence_length == 0 {
            return Err(Error::param("sequence_length", "must be >= 1"));
        }
        self.jitter.validate()
    }
}

/// `(1 - eta) * y + eta * prev`.
pub fn trace_update(prev_trace: f64, y: f64, eta: f64) -> f64 {
    (1.0 - eta) * y + eta * prev_trace
}

/// `w <- (w + alpha * trace * x) / |w + alpha * trace * x|`.
///
/// A zero increment leaves `w` untouched bit for bit.
pub fn hebbian_trace_step(w: &mut [f64], x: &[f64], trace: f64, alpha: f64) -> Result<()> {
    if w.len() != x.len() {
        return Err(Error::param("x", format!("dimension {} does not match weight dimension {}", x.len(), w.len())));
    }
    let gain = alpha * trace;
    if gain == 0.0 {
        return Ok(());
    }
    for (wi, xi) in w.iter_mut().zip(x) {
        *wi += gain * xi;
    }
    renormalize(w)
}

fn renormalize(w: &mut [f64]) -> Result<()> {
    let norm = l2_norm(w);
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::DegenerateWeights);
    }
    let inv = 1.0 / norm;
    w.iter_mut().for_each(|v| *v *= inv);
    Ok(())
}

/// Running mean and diagonal covariance (Welford), variance floored at
/// `epsilon` so the inverse always exists.
#[derive(Clone, Debug, PartialEq)]
pub struct MahalanobisStats {
    mean: Vec<f64>,
    m2: Vec<f64>,
    count: u64,
    epsilon: f64,
}

impl MahalanobisStats {
    pub fn new(dim: usize, epsilon: f64) -> Result<MahalanobisStats> {
        if !(epsilon > 0.0) {
            return Err(Error::param("md.epsilon", "variance floor must be positive"));
        }
        Ok(MahalanobisStats { mean: vec![0.0; dim], m2: vec![0.0; dim], count: 0, epsilon })
    }

    /// Rebuilds statistics from a stored mean, variance, and sample count.
    pub fn from_parts(mean: Vec<f64>, variance: Vec<f64>, count: u64, epsilon: f64) -> Result<MahalanobisStats> {
        if mean.len() != variance.len() {
            return Err(Error::param("variance", "length differs from mean"));
        }
        let mut stats = MahalanobisStats::new(mean.len(), epsilon)?;
        stats.m2 = variance.iter().map(|v| v * count as f64).collect();
        stats.mean = mean;
        stats.count = count;
        Ok(stats)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Population variance of dimension `i`, never below `epsilon`.
    pub fn var(&self, i: usize) -> f64 {
        if self.count == 0 {
            return self.epsilon;
        }
        (self.m2[i] / self.count as f64).max(self.epsilon)
    }

    pub fn variance(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.var(i)).collect()
    }
}

/// One Welford step.
pub fn update_running_stats(stats: &mut MahalanobisStats, x: &[f64]) -> Result<()> {
    if x.len() != stats.dim() {
        return Err(Error::param("x", format!("dimension {} does not match statistics dimension {}", x.len(), stats.dim())));
    }
    stats.count += 1;
    let n = stats.count as f64;
    for ((m, m2), &xi) in stats.mean.iter_mut().zip(stats.m2.iter_mut()).zip(x) {
        let delta = xi - *m;
        *m += delta / n;
        *m2 += delta * (xi - *m);
    }
    Ok(())
}

/// `sqrt(sum_i (x_i - mu_i)^2 / var_i)`.
pub fn mahalanobis_distance(x: &[f64], stats: &MahalanobisStats) -> f64 {
    x.iter()
        .zip(&stats.mean)
        .enumerate()
        .map(|(i, (xi, mi))| (xi - mi) * (xi - mi) / stats.var(i))
        .sum::<f64>()
        .sqrt()
}

/// `Sigma^-1 (x - mu) / D_M(x, mu)`, or zeros when `D_M <= GRADIENT_GUARD`.
pub fn mahalanobis_gradient(x: &[f64], stats: &MahalanobisStats) -> Vec<f64> {
    let d = mahalanobis_distance(x, stats);
    if d <= GRADIENT_GUARD {
        return vec![0.0; x.len()];
    }
    x.iter().zip(&stats.mean).enumerate().map(|(i, (xi, mi))| (xi - mi) / stats.var(i) / d).collect()
}

/// `w <- normalize(w + alpha * (grad D_M(x, mu) - w))`.
pub fn md_weight_step(w: &mut [f64], x: &[f64], stats: &MahalanobisStats, alpha: f64) -> Result<()> {
    if w.len() != x.len() || x.len() != stats.dim() {
        return Err(Error::param("x", "weights, input, and statistics must share a dimension"));
    }
    if alpha == 0.0 {
        return Ok(());
    }
    let grad = mahalanobis_gradient(x, stats);
    for (wi, gi) in w.iter_mut().zip(&grad) {
        *wi += alpha * (gi - *wi);
    }
    renormalize(w)
}

/// How successive views of one training object are produced.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SequenceMode {
    /// Random rotation/translation jitters of the same image.
    Jitter,
    /// Distinct exemplars sharing the object's label.
    SameClass,
}

/// The images the unsupervised phase may see. Labels are used only to build
/// same-class sequences.
pub struct TrainingSet<'a> {
    pub images: Vec<&'a Image>,
    pub labels: Vec<usize>,
    pub mode: SequenceMode,
}

impl<'a> TrainingSet<'a> {
    pub fn from_dataset(dataset: &'a LabeledDataset, mode: SequenceMode) -> TrainingSet<'a> {
        let (images, labels) = dataset
            .iter()
            .filter(|item| item.split == Split::Train)
            .map(|item| (item.image, item.label))
            .unzip();
        TrainingSet { images, labels, mode }
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

/// Trains `net` in place.
///
/// Per epoch the objects are shuffled; each object contributes
/// `sequence_length` consecutive views with the traces reset at the start of
/// the sequence. Every view runs a forward pass bottom-up, updating each
/// layer's traces and weights before feeding the next layer.
pub fn train_network(net: &mut NetworkState, frontend: &Frontend, set: &TrainingSet<'_>, params: &LearningParams) -> Result<()> {
    params.validate()?;
    if set.is_empty() {
        return Err(Error::param("dataset", "no training images"));
    }
    if frontend.provenance() != net.provenance {
        return Err(Error::Structure("frontend does not match the network's input provenance".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let by_class = group_by_label(&set.labels);
    let mut order: Vec<usize> = (0..set.len()).collect();
    for _ in 0..params.epochs {
        order.shuffle(&mut rng);
        for &obj in &order {
            net.layers.iter_mut().for_each(LayerState::reset_traces);
            for view in 0..params.sequence_length {
                let image = match set.mode {
                    SequenceMode::Jitter if view > 0 => {
                        let (rotation, shift) = params.jitter.sample(&mut rng);
                        apply_transform(set.images[obj], rotation, shift)?
                    }
                    SequenceMode::SameClass if view > 0 => {
                        let peers = &by_class[set.labels[obj]];
                        set.images[*peers.choose(&mut rng).expect("object is in its own class")].clone()
                    }
                    _ => set.images[obj].clone(),
                };
                let stack = frontend.process(&image)?;
                present(net, &stack, params, &mut rng)?;
            }
        }
    }
    Ok(())
}

fn group_by_label(labels: &[usize]) -> Vec<Vec<usize>> {
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut groups = vec![Vec::new(); classes];
    for (i, &l) in labels.iter().enumerate() {
        groups[l].push(i);
    }
    groups
}

/// One view: forward through every layer, learning as it goes.
pub fn present(net: &mut NetworkState, stack: &FeatureStack, params: &LearningParams, rng: &mut impl Rng) -> Result<()> {
    let variant = net.variant;
    let inhibition = net.inhibition;
    let mut input = stack.data.as_standard_layout().into_owned();
    for layer in net.layers.iter_mut() {
        let act = forward_layer(layer, &input, variant, &inhibition)?;
        for (trace, &y) in layer.traces.iter_mut().zip(act.iter()) {
            *trace = trace_update(*trace, y, params.eta);
        }
        if params.alpha > 0.0 {
            let degenerate = update_layer(layer, &input, variant, params.alpha)?;
            for n in degenerate {
                log::warn!("weight row {n} collapsed to zero; reinitialising");
                let mut row = layer.weights.row_mut(n);
                row.iter_mut().for_each(|w| *w = rng.gen::<f64>());
                renormalize(row.as_slice_mut().expect("row-major"))?;
            }
        }
        input = activations_as_input(act);
    }
    Ok(())
}

/// Applies the variant's weight rule to every neuron of a layer. Returns the
/// neurons whose rows collapsed to zero.
fn update_layer(layer: &mut LayerState, input: &Array3<f64>, variant: Variant, alpha: f64) -> Result<Vec<usize>> {
    let g = layer.geometry;
    let fan_in = g.fan_in();
    if variant == Variant::Md {
        let stats = layer.md_stats.as_mut().ok_or_else(|| Error::Structure("MD layer without statistics".into()))?;
        let mut buf = vec![0.0; fan_in];
        for n in 0..g.neurons() {
            normalized_patch(input, &g, n, &mut buf);
            update_running_stats(stats, &buf)?;
        }
    }
    let stats = layer.md_stats.as_ref();
    let traces = &layer.traces;
    let data = input.as_slice().expect("standard layout input");
    let weights = layer.weights.as_slice_mut().expect("row-major weights");
    let degenerate = weights
        .par_chunks_mut(fan_in)
        .enumerate()
        .map_init(
            || vec![0.0; fan_in],
            |buf, (n, row)| {
                let step = match (variant, stats) {
                    (Variant::Md, Some(stats)) => {
                        normalized_patch(input, &g, n, buf);
                        md_weight_step(row, buf, stats, alpha)
                    }
                    _ => hebbian_patch_step(row, data, &g, n, traces[n] * alpha),
                };
                match step {
                    Err(Error::DegenerateWeights) => Some(Ok(n)),
                    Err(e) => Some(Err(e)),
                    Ok(()) => None,
                }
            },
        )
        .flatten()
        .collect::<Result<Vec<usize>>>()?;
    Ok(degenerate)
}

/// [`hebbian_trace_step`] with the normalized patch read straight from the
/// layer input instead of a gathered copy.
fn hebbian_patch_step(w: &mut [f64], data: &[f64], g: &LayerGeometry, neuron: usize, gain: f64) -> Result<()> {
    if gain == 0.0 {
        return Ok(());
    }
    let mut xx = 0.0;
    for_each_segment(data, g.grid, g.in_channels, g, neuron, |_, x| xx += dot(x, x));
    if xx == 0.0 {
        return Ok(());
    }
    let scale = gain / xx.sqrt();
    for_each_segment(data, g.grid, g.in_channels, g, neuron, |off, x| {
        for (wi, xi) in w[off..off + x.len()].iter_mut().zip(x) {
            *wi += scale * xi;
        }
    });
    renormalize(w)
}
