//! The four-layer feed-forward hierarchy.
//!
//! Every neuron owns its weights (no sharing) and reads a square patch of the
//! layer below, centred on its own grid position and zero-padded at the
//! borders. The patch is L2-normalized before it meets the weight row. Layer
//! responses are min-max normalized per presentation and, for the inhibition
//! variants, passed through subtractive lateral inhibition.

mod persist;

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::frontend::{FeatureStack, Provenance};
use crate::learning::MahalanobisStats;

pub use persist::{load_model, read_model, save_model, write_model, MODEL_MAGIC, MODEL_VERSION};

/// Network flavour: activation function, learning rule, and frontend.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    Simplified,
    Rbf,
    Md,
    Li,
    LiDogRgb,
}

impl Variant {
    pub const ALL: [Variant; 5] = [Variant::Simplified, Variant::Rbf, Variant::Md, Variant::Li, Variant::LiDogRgb];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Simplified => "simplified",
            Variant::Rbf => "rbf",
            Variant::Md => "md",
            Variant::Li => "li",
            Variant::LiDogRgb => "li-dog-rgb",
        }
    }

    pub(crate) fn tag(self) -> u8 {
        match self {
            Variant::Simplified => 0,
            Variant::Rbf => 1,
            Variant::Md => 2,
            Variant::Li => 3,
            Variant::LiDogRgb => 4,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Variant> {
        Variant::ALL.into_iter().find(|v| v.tag() == tag)
    }

    pub fn uses_inhibition(self) -> bool {
        matches!(self, Variant::Li | Variant::LiDogRgb)
    }

    pub fn provenance(self) -> Provenance {
        match self {
            Variant::LiDogRgb => Provenance::DogRgbGabor,
            _ => Provenance::GrayGabor,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::param("variant", format!("unknown variant `{s}`")))
    }
}

/// Receptive-field wiring of one layer. The presynaptic grid has the same
/// side as the layer's own grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerGeometry {
    pub grid: usize,
    pub patch: usize,
    pub in_channels: usize,
}

impl LayerGeometry {
    pub fn neurons(&self) -> usize {
        self.grid * self.grid
    }

    pub fn fan_in(&self) -> usize {
        self.patch * self.patch * self.in_channels
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid == 0 {
            return Err(Error::param("grid", "must be positive"));
        }
        if self.patch < 2 || self.patch > self.grid {
            return Err(Error::param("patch", format!("{} must lie in [2, grid = {}]", self.patch, self.grid)));
        }
        if self.in_channels == 0 {
            return Err(Error::param("in_channels", "must be positive"));
        }
        Ok(())
    }
}

/// Subtractive surround inhibition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InhibitionParams {
    /// Neighbourhood half-width in grid units.
    pub radius: usize,
    /// Fraction of the surround mean subtracted, in `[0, 1]`.
    pub strength: f64,
}

impl Default for InhibitionParams {
    fn default() -> Self {
        InhibitionParams { radius: 2, strength: 0.5 }
    }
}

impl InhibitionParams {
    pub fn validate(&self) -> Result<()> {
        if self.radius < 1 {
            return Err(Error::param("inhibition.radius", "must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.strength) {
            return Err(Error::param("inhibition.strength", format!("must lie in [0, 1], got {}", self.strength)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerState {
    pub geometry: LayerGeometry,
    /// `neurons × fan_in`, one unit-norm row per neuron.
    pub weights: Array2<f64>,
    pub traces: Vec<f64>,
    pub rbf_sigma: Option<f64>,
    pub md_stats: Option<MahalanobisStats>,
}

impl LayerState {
    /// Random non-negative weights, each row normalized to unit length.
    pub fn random(geometry: LayerGeometry, rng: &mut impl Rng) -> Result<LayerState> {
        geometry.validate()?;
        let mut weights = Array2::from_shape_simple_fn((geometry.neurons(), geometry.fan_in()), || rng.gen::<f64>());
        for mut row in weights.rows_mut() {
            let normalized = normalize_weights(row.as_slice().expect("row-major"))
                .map_err(|_| Error::Structure("random initialisation produced a zero row".into()))?;
            row.as_slice_mut().expect("row-major").copy_from_slice(&normalized);
        }
        Ok(LayerState { geometry, weights, traces: vec![0.0; geometry.neurons()], rbf_sigma: None, md_stats: None })
    }

    pub fn reset_traces(&mut self) {
        self.traces.iter_mut().for_each(|t| *t = 0.0);
    }
}

/// Construction-time settings for a network.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkConfig {
    pub variant: Variant,
    pub grid: usize,
    /// One receptive-field side per layer, bottom to top.
    pub patches: Vec<usize>,
    /// Channel count of the frontend stack.
    pub in_channels: usize,
    pub rbf_sigma: f64,
    pub inhibition: InhibitionParams,
    pub md_epsilon: f64,
}

impl NetworkConfig {
    pub fn new(variant: Variant, in_channels: usize) -> NetworkConfig {
        NetworkConfig {
            variant,
            grid: 80,
            patches: vec![6, 8, 10, 12],
            in_channels,
            rbf_sigma: 0.5,
            inhibition: InhibitionParams::default(),
            md_epsilon: 1e-6,
        }
    }

    pub fn geometries(&self) -> Vec<LayerGeometry> {
        self.patches
            .iter()
            .enumerate()
            .map(|(i, &patch)| LayerGeometry {
                grid: self.grid,
                patch,
                in_channels: if i == 0 { self.in_channels } else { 1 },
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkState {
    pub layers: Vec<LayerState>,
    pub provenance: Provenance,
    pub variant: Variant,
    pub inhibition: InhibitionParams,
}

impl NetworkState {
    /// Seeded random network with the configured geometry.
    pub fn init(config: &NetworkConfig, seed: u64) -> Result<NetworkState> {
        if config.patches.is_empty() {
            return Err(Error::param("layer.patches", "at least one layer is required"));
        }
        if config.variant == Variant::Rbf && !(config.rbf_sigma > 0.0) {
            return Err(Error::param("rbf.sigma", "must be positive"));
        }
        if config.variant.uses_inhibition() {
            config.inhibition.validate()?;
            if config.inhibition.radius >= config.grid {
                return Err(Error::param("inhibition.radius", "must be smaller than the grid"));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(config.patches.len());
        for geometry in config.geometries() {
            let mut layer = LayerState::random(geometry, &mut rng)?;
            match config.variant {
                Variant::Rbf => layer.rbf_sigma = Some(config.rbf_sigma),
                Variant::Md => layer.md_stats = Some(MahalanobisStats::new(geometry.fan_in(), config.md_epsilon)?),
                _ => {}
            }
            layers.push(layer);
        }
        Ok(NetworkState { layers, provenance: config.variant.provenance(), variant: config.variant, inhibition: config.inhibition })
    }

    pub fn top_grid(&self) -> usize {
        self.layers.last().map_or(0, |l| l.geometry.grid)
    }

    /// Checks that each layer's input shape matches the layer below.
    pub fn validate(&self) -> Result<()> {
        for pair in self.layers.windows(2) {
            let (below, above) = (&pair[0].geometry, &pair[1].geometry);
            if above.in_channels != 1 || above.grid != below.grid {
                return Err(Error::Structure(format!(
                    "layer expecting {}x{}x{} cannot follow a {}x{} layer",
                    above.grid, above.grid, above.in_channels, below.grid, below.grid
                )));
            }
        }
        for layer in &self.layers {
            if layer.weights.dim() != (layer.geometry.neurons(), layer.geometry.fan_in()) {
                return Err(Error::Structure("weight matrix does not match layer geometry".into()));
            }
        }
        Ok(())
    }
}

/// Rescales to `[0, 1]` by the vector's own min and max. A constant vector
/// maps to all zeros.
pub fn minmax_normalize(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::param("values", "empty activation vector"));
    }
    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let range = hi - lo;
    if !(range > 0.0) {
        return Ok(vec![0.0; values.len()]);
    }
    Ok(values.iter().map(|&v| ((v - lo) / range).clamp(0.0, 1.0)).collect())
}

/// Divides by the L2 norm.
pub fn normalize_weights(w: &[f64]) -> Result<Vec<f64>> {
    let norm = l2_norm(w);
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::DegenerateWeights);
    }
    Ok(w.iter().map(|v| v / norm).collect())
}

pub(crate) fn l2_norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Dot product with four independent accumulators so it vectorizes.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Gaussian radial basis response `exp(-|x - c|^2 / (2 sigma^2))`.
pub fn rbf_activation(x: &[f64], center: &[f64], sigma: f64) -> Result<f64> {
    if x.len() != center.len() {
        return Err(Error::param("x", format!("dimension {} does not match centre dimension {}", x.len(), center.len())));
    }
    if !(sigma > 0.0) {
        return Err(Error::param("sigma", "must be positive"));
    }
    let d2: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((-d2 / (2.0 * sigma * sigma)).exp())
}

/// Copies the zero-padded patch feeding neuron `(row, col)` into `buf`,
/// laid out `(dy, dx, channel)`.
pub(crate) fn gather_patch(input: &Array3<f64>, geometry: &LayerGeometry, row: usize, col: usize, buf: &mut [f64]) {
    let (h, w, c) = input.dim();
    let data = input.as_slice().expect("standard layout input");
    let p = geometry.patch;
    let half = (p / 2) as isize;
    let stride = p * c;
    for dy in 0..p {
        let sy = row as isize + dy as isize - half;
        let dst_row = &mut buf[dy * stride..(dy + 1) * stride];
        if sy < 0 || sy >= h as isize {
            dst_row.fill(0.0);
            continue;
        }
        for dx in 0..p {
            let sx = col as isize + dx as isize - half;
            let dst = &mut dst_row[dx * c..(dx + 1) * c];
            if sx < 0 || sx >= w as isize {
                dst.fill(0.0);
            } else {
                let at = (sy as usize * w + sx as usize) * c;
                dst.copy_from_slice(&data[at..at + c]);
            }
        }
    }
}

/// Gathers and L2-normalizes a neuron's input patch in place. An all-zero
/// patch stays zero.
pub(crate) fn normalized_patch(input: &Array3<f64>, geometry: &LayerGeometry, neuron: usize, buf: &mut [f64]) {
    let (row, col) = (neuron / geometry.grid, neuron % geometry.grid);
    gather_patch(input, geometry, row, col, buf);
    let norm = l2_norm(buf);
    if norm > 0.0 {
        buf.iter_mut().for_each(|v| *v /= norm);
    }
}

/// Calls `f(offset, slice)` for every in-bounds row segment of a neuron's
/// patch: `slice` is contiguous input and `offset` its position in the
/// `(dy, dx, channel)` fan-in vector. Out-of-bounds positions are the zero
/// padding and are skipped.
#[inline]
pub(crate) fn for_each_segment(data: &[f64], side: usize, channels: usize, geometry: &LayerGeometry, neuron: usize, mut f: impl FnMut(usize, &[f64])) {
    let p = geometry.patch as isize;
    let half = p / 2;
    let (row, col) = ((neuron / geometry.grid) as isize, (neuron % geometry.grid) as isize);
    let n = side as isize;
    let x0 = col - half;
    let dx_lo = (-x0).max(0);
    let dx_hi = (n - x0).min(p);
    if dx_lo >= dx_hi {
        return;
    }
    let c = channels;
    let len = (dx_hi - dx_lo) as usize * c;
    for dy in 0..p {
        let sy = row + dy - half;
        if sy < 0 || sy >= n {
            continue;
        }
        let start = (sy as usize * side + (x0 + dx_lo) as usize) * c;
        f((dy * p + dx_lo) as usize * c, &data[start..start + len]);
    }
}

/// `(w . x, |x|^2)` for a neuron's raw (unnormalized) patch `x`.
#[inline]
pub(crate) fn patch_dot_and_norm(data: &[f64], side: usize, channels: usize, geometry: &LayerGeometry, neuron: usize, w: &[f64]) -> (f64, f64) {
    let mut wx = 0.0;
    let mut xx = 0.0;
    for_each_segment(data, side, channels, geometry, neuron, |off, x| {
        wx += dot(&w[off..off + x.len()], x);
        xx += dot(x, x);
    });
    (wx, xx)
}

fn check_input(layer: &LayerState, input: &Array3<f64>) -> Result<()> {
    let g = &layer.geometry;
    let (h, w, c) = input.dim();
    if h != g.grid || w != g.grid || c != g.in_channels {
        return Err(Error::Structure(format!(
            "layer expects {}x{}x{} input, got {h}x{w}x{c}",
            g.grid, g.grid, g.in_channels
        )));
    }
    if !input.is_standard_layout() {
        return Err(Error::Structure("input must be in standard (row-major) layout".into()));
    }
    Ok(())
}

/// Pre-normalization response of every neuron in raster order.
fn raw_responses(layer: &LayerState, input: &Array3<f64>, variant: Variant) -> Result<Vec<f64>> {
    let g = layer.geometry;
    let sigma = match variant {
        Variant::Rbf => Some(layer.rbf_sigma.ok_or_else(|| Error::Structure("RBF layer without sigma".into()))?),
        _ => None,
    };
    let data = input.as_slice().expect("standard layout input");
    let (side, channels) = (g.grid, g.in_channels);
    let responses = (0..g.neurons())
        .into_par_iter()
        .map(|n| {
            let w = layer.weights.row(n);
            let w = w.as_slice().expect("row-major weights");
            let (wx, xx) = patch_dot_and_norm(data, side, channels, &g, n, w);
            // x is used L2-normalized; a zero patch stays zero
            let (wx_hat, xx_hat) = if xx > 0.0 { (wx / xx.sqrt(), 1.0) } else { (0.0, 0.0) };
            match sigma {
                Some(sigma) => {
                    let d2 = (xx_hat - 2.0 * wx_hat + dot(w, w)).max(0.0);
                    (-d2 / (2.0 * sigma * sigma)).exp()
                }
                None => wx_hat,
            }
        })
        .collect();
    Ok(responses)
}

/// Activations of one layer for one presentation, values in `[0, 1]`.
pub fn forward_layer(layer: &LayerState, input: &Array3<f64>, variant: Variant, inhibition: &InhibitionParams) -> Result<Array2<f64>> {
    check_input(layer, input)?;
    let raw = raw_responses(layer, input, variant)?;
    let g = layer.geometry.grid;
    let act = Array2::from_shape_vec((g, g), minmax_normalize(&raw)?).expect("grid-sized vector");
    Ok(if variant.uses_inhibition() { lateral_inhibition(&act, inhibition) } else { act })
}

/// `a' = max(0, a - strength * mean of the surrounding (2r+1)^2 window)`,
/// the centre excluded and the window clipped at the grid edge.
pub fn lateral_inhibition(activations: &Array2<f64>, params: &InhibitionParams) -> Array2<f64> {
    if params.strength == 0.0 {
        return activations.clone();
    }
    let (h, w) = activations.dim();
    let r = params.radius as isize;
    Array2::from_shape_fn((h, w), |(y, x)| {
        let a = activations[[y, x]];
        let (mut sum, mut count) = (0.0, 0usize);
        for ny in (y as isize - r).max(0)..=(y as isize + r).min(h as isize - 1) {
            for nx in (x as isize - r).max(0)..=(x as isize + r).min(w as isize - 1) {
                if ny == y as isize && nx == x as isize {
                    continue;
                }
                sum += activations[[ny as usize, nx as usize]];
                count += 1;
            }
        }
        if count == 0 {
            return a;
        }
        (a - params.strength * (sum / count as f64)).max(0.0)
    })
}

pub(crate) fn activations_as_input(act: Array2<f64>) -> Array3<f64> {
    let (h, w) = act.dim();
    act.into_shape_with_order((h, w, 1)).expect("same element count")
}

/// Activations of every layer, bottom to top.
pub fn forward_network(net: &NetworkState, stack: &FeatureStack) -> Result<Vec<Array2<f64>>> {
    let mut outputs = Vec::with_capacity(net.layers.len());
    let mut input = stack.data.as_standard_layout().into_owned();
    for layer in &net.layers {
        let act = forward_layer(layer, &input, net.variant, &net.inhibition)?;
        input = activations_as_input(act.clone());
        outputs.push(act);
    }
    Ok(outputs)
}
