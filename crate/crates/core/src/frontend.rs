//! Early-vision frontend: Gabor filter banks over a grayscale image, or
//! difference-of-Gaussians opponent channels followed by a Gabor bank per
//! channel for RGB input.
//!
//! Every stage is a pure function of its inputs.

use std::f64::consts::PI;

use ndarray::{s, Array2, Array3, Axis};

use crate::error::{Error, Result};
use crate::image::{mean_of_planes, Image};

/// Gabor bank configuration. Orientations and phases are in radians,
/// frequencies in cycles per pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct GaborParams {
    pub frequencies: Vec<f64>,
    pub orientations: Vec<f64>,
    pub phases: Vec<f64>,
    /// Envelope width in pixels. `None` links it to the frequency as `0.56 / f`.
    pub sigma: Option<f64>,
    /// Envelope aspect ratio.
    pub gamma: f64,
    pub kernel_size: usize,
}

impl Default for GaborParams {
    fn default() -> Self {
        GaborParams {
            frequencies: vec![0.2, 0.4, 0.6, 0.8],
            orientations: vec![0.0, PI / 4.0, PI / 2.0, 3.0 * PI / 4.0],
            phases: vec![0.0, PI],
            sigma: None,
            gamma: 0.5,
            kernel_size: 11,
        }
    }
}

impl GaborParams {
    pub fn validate(&self) -> Result<()> {
        if self.frequencies.is_empty() || self.frequencies.iter().any(|&f| !(f > 0.0 && f.is_finite())) {
            return Err(Error::param("frequencies", "must be a non-empty list of positive values"));
        }
        if self.orientations.is_empty() || self.orientations.iter().any(|t| !t.is_finite()) {
            return Err(Error::param("orientations", "must be a non-empty list of finite angles"));
        }
        if self.phases.is_empty() || self.phases.iter().any(|p| !p.is_finite()) {
            return Err(Error::param("phases", "must be a non-empty list of finite angles"));
        }
        if let Some(sigma) = self.sigma {
            if !(sigma > 0.0 && sigma.is_finite()) {
                return Err(Error::param("sigma", format!("must be positive, got {sigma}")));
            }
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::param("gamma", format!("must be positive, got {}", self.gamma)));
        }
        if self.kernel_size < 3 || self.kernel_size % 2 == 0 {
            return Err(Error::param("kernel_size", format!("must be odd and >= 3, got {}", self.kernel_size)));
        }
        Ok(())
    }

    pub fn channel_count(&self) -> usize {
        self.frequencies.len() * self.orientations.len() * self.phases.len()
    }

    fn sigma_for(&self, frequency: f64) -> f64 {
        self.sigma.unwrap_or(0.56 / frequency)
    }
}

/// One zero-mean, unit-L2 Gabor kernel and the tuning it was built with.
#[derive(Clone, Debug)]
pub struct GaborKernel {
    pub frequency: f64,
    pub orientation: f64,
    pub phase: f64,
    pub weights: Array2<f64>,
}

/// Kernels ordered frequency-major, then orientation, then phase.
#[derive(Clone, Debug)]
pub struct GaborBank {
    pub kernels: Vec<GaborKernel>,
}

impl GaborBank {
    pub fn len(&self) -> usize {
        self.kernels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernels.is_empty()
    }
}

pub fn make_gabor_bank(params: &GaborParams) -> Result<GaborBank> {
    params.validate()?;
    let mut kernels = Vec::with_capacity(params.channel_count());
    for &frequency in &params.frequencies {
        let sigma = params.sigma_for(frequency);
        for &orientation in &params.orientations {
            for &phase in &params.phases {
                let weights = gabor_kernel(frequency, orientation, phase, sigma, params.gamma, params.kernel_size)?;
                kernels.push(GaborKernel { frequency, orientation, phase, weights });
            }
        }
    }
    Ok(GaborBank { kernels })
}

fn gabor_kernel(frequency: f64, theta: f64, phase: f64, sigma: f64, gamma: f64, size: usize) -> Result<Array2<f64>> {
    let half = (size / 2) as f64;
    let (sin_t, cos_t) = theta.sin_cos();
    let mut k = Array2::from_shape_fn((size, size), |(row, col)| {
        let x = col as f64 - half;
        let y = row as f64 - half;
        let xr = x * cos_t + y * sin_t;
        let yr = -x * sin_t + y * cos_t;
        let envelope = (-(xr * xr + gamma * gamma * yr * yr) / (2.0 * sigma * sigma)).exp();
        envelope * (2.0 * PI * frequency * xr + phase).cos()
    });
    let mean = k.mean().unwrap_or(0.0);
    k.mapv_inplace(|v| v - mean);
    let norm = k.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm <= f64::EPSILON {
        return Err(Error::param("frequencies", format!("kernel for f={frequency} vanishes after mean removal")));
    }
    k.mapv_inplace(|v| v / norm);
    Ok(k)
}

/// Same-size 2-D convolution with zero padding. The kernel must have odd sides.
pub fn convolve_same(image: &Array2<f64>, kernel: &Array2<f64>) -> Array2<f64> {
    let (h, w) = image.dim();
    let (kh, kw) = kernel.dim();
    let (cy, cx) = (kh / 2, kw / 2);
    // correlate the zero-padded image with the flipped kernel
    let pw = w + kw - 1;
    let mut padded = vec![0.0; (h + kh - 1) * pw];
    for (y, row) in image.rows().into_iter().enumerate() {
        for (x, &v) in row.iter().enumerate() {
            padded[(y + cy) * pw + x + cx] = v;
        }
    }
    let flipped: Vec<f64> = (0..kh * kw).map(|i| kernel[[kh - 1 - i / kw, kw - 1 - i % kw]]).collect();
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        let acc = &mut out[y * w..(y + 1) * w];
        for u in 0..kh {
            let src = &padded[(y + u) * pw..(y + u + 1) * pw];
            for (v, &k) in flipped[u * kw..(u + 1) * kw].iter().enumerate() {
                if k == 0.0 {
                    continue;
                }
                for (a, &p) in acc.iter_mut().zip(&src[v..v + w]) {
                    *a += k * p;
                }
            }
        }
    }
    Array2::from_shape_vec((h, w), out).expect("h * w values")
}

/// Bilinear resampling with pixel-centre alignment. Commutes with mirroring.
pub fn resample_bilinear(map: &Array2<f64>, out_h: usize, out_w: usize) -> Array2<f64> {
    let (h, w) = map.dim();
    if h == out_h && w == out_w {
        return map.clone();
    }
    let source = |dst: usize, n_in: usize, n_out: usize| -> (usize, usize, f64) {
        let pos = ((dst as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5).clamp(0.0, (n_in - 1) as f64);
        let lo = pos.floor() as usize;
        let hi = (lo + 1).min(n_in - 1);
        (lo, hi, pos - lo as f64)
    };
    let rows: Vec<_> = (0..out_h).map(|y| source(y, h, out_h)).collect();
    let cols: Vec<_> = (0..out_w).map(|x| source(x, w, out_w)).collect();
    Array2::from_shape_fn((out_h, out_w), |(y, x)| {
        let (y0, y1, fy) = rows[y];
        let (x0, x1, fx) = cols[x];
        let top = map[[y0, x0]] * (1.0 - fx) + map[[y0, x1]] * fx;
        let bottom = map[[y1, x0]] * (1.0 - fx) + map[[y1, x1]] * fx;
        top * (1.0 - fy) + bottom * fy
    })
}

/// Which frontend pipeline produced a stack.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    GrayGabor,
    DogRgbGabor,
}

/// Frontend responses, `height × width × channels`, all non-negative.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureStack {
    pub data: Array3<f64>,
    pub provenance: Provenance,
}

impl FeatureStack {
    pub fn side(&self) -> usize {
        self.data.len_of(Axis(0))
    }

    pub fn channels(&self) -> usize {
        self.data.len_of(Axis(2))
    }
}

/// Rectified Gabor responses of a grayscale image, each map resampled to
/// `out_size × out_size`.
pub fn gabor_frontend(image: &Array2<f64>, bank: &GaborBank, out_size: usize) -> Result<FeatureStack> {
    let data = gabor_maps(image, bank, out_size)?;
    Ok(FeatureStack { data, provenance: Provenance::GrayGabor })
}

fn gabor_maps(image: &Array2<f64>, bank: &GaborBank, out_size: usize) -> Result<Array3<f64>> {
    let (h, w) = image.dim();
    if h == 0 || w == 0 {
        return Err(Error::param("image", "empty image"));
    }
    if out_size < h.max(w) {
        return Err(Error::param("out_size", format!("{out_size} is smaller than the image side {}", h.max(w))));
    }
    if bank.is_empty() {
        return Err(Error::param("bank", "no kernels"));
    }
    let mut data = Array3::zeros((out_size, out_size, bank.len()));
    for (c, kernel) in bank.kernels.iter().enumerate() {
        let mut response = convolve_same(image, &kernel.weights);
        response.mapv_inplace(f64::abs);
        let resampled = resample_bilinear(&response, out_size, out_size);
        data.index_axis_mut(Axis(2), c).assign(&resampled);
    }
    Ok(data)
}

/// Luminance and colour-opponent planes.
#[derive(Clone, Debug, PartialEq)]
pub struct OpponentChannels {
    pub luminance: Array2<f64>,
    pub red_green: Array2<f64>,
    pub blue_green: Array2<f64>,
}

pub fn opponent_channels(rgb: &Array3<f64>) -> Result<OpponentChannels> {
    let planes = rgb.len_of(Axis(2));
    if planes != 3 {
        return Err(Error::param("rgb", format!("expected 3 colour planes, got {planes}")));
    }
    let r = rgb.index_axis(Axis(2), 0);
    let g = rgb.index_axis(Axis(2), 1);
    let b = rgb.index_axis(Axis(2), 2);
    Ok(OpponentChannels { luminance: mean_of_planes(rgb), red_green: &r - &g, blue_green: &b - &g })
}

impl OpponentChannels {
    /// Recovers the RGB image the channels were computed from.
    pub fn to_rgb(&self) -> Array3<f64> {
        let (h, w) = self.luminance.dim();
        let mut out = Array3::zeros((h, w, 3));
        for ((y, x), &l) in self.luminance.indexed_iter() {
            let rg = self.red_green[[y, x]];
            let bg = self.blue_green[[y, x]];
            out[[y, x, 0]] = l + (2.0 * rg - bg) / 3.0;
            out[[y, x, 1]] = l - (rg + bg) / 3.0;
            out[[y, x, 2]] = l + (2.0 * bg - rg) / 3.0;
        }
        out
    }
}

/// Difference-of-Gaussians parameters. Both Gaussians are truncated to
/// `kernel_size` and normalized to unit sum before differencing.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DogParams {
    pub sigma1: f64,
    pub sigma2: f64,
    /// Surround strength.
    pub k: f64,
    pub kernel_size: usize,
}

impl Default for DogParams {
    fn default() -> Self {
        DogParams { sigma1: 1.0, sigma2: 1.2, k: 0.6, kernel_size: 3 }
    }
}

impl DogParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma1 > 0.0 && self.sigma1.is_finite()) {
            return Err(Error::param("sigma1", format!("must be positive, got {}", self.sigma1)));
        }
        // Equal widths are allowed so that k = 1 cancels exactly.
        if !(self.sigma2 >= self.sigma1 && self.sigma2.is_finite()) {
            return Err(Error::param("sigma2", format!("must be >= sigma1, got {}", self.sigma2)));
        }
        if !(0.0..=1.0).contains(&self.k) {
            return Err(Error::param("k", format!("must lie in [0, 1], got {}", self.k)));
        }
        if self.kernel_size == 0 || self.kernel_size % 2 == 0 {
            return Err(Error::param("kernel_size", format!("must be odd, got {}", self.kernel_size)));
        }
        Ok(())
    }
}

fn unit_sum_gaussian(sigma: f64, size: usize) -> Array2<f64> {
    let half = (size / 2) as f64;
    let mut g = Array2::from_shape_fn((size, size), |(row, col)| {
        let (x, y) = (col as f64 - half, row as f64 - half);
        (-(x * x + y * y) / (2.0 * sigma * sigma)).exp()
    });
    let total = g.sum();
    g.mapv_inplace(|v| v / total);
    g
}

/// `G(sigma1) - k * G(sigma2)`, each Gaussian truncated and unit-sum.
pub fn dog_kernel(params: &DogParams) -> Result<Array2<f64>> {
    params.validate()?;
    let center = unit_sum_gaussian(params.sigma1, params.kernel_size);
    let surround = unit_sum_gaussian(params.sigma2, params.kernel_size);
    Ok(center - surround * params.k)
}

pub fn dog_filter(channel: &Array2<f64>, params: &DogParams) -> Result<Array2<f64>> {
    let kernel = dog_kernel(params)?;
    let (h, w) = channel.dim();
    if params.kernel_size > h.min(w) {
        return Err(Error::param("kernel_size", format!("{} exceeds the image side {}", params.kernel_size, h.min(w))));
    }
    Ok(convolve_same(channel, &kernel))
}

/// Opponent decomposition, DoG per channel, then a Gabor bank per channel.
/// Output channels are ordered `[L, RG, BG]`, each block in bank order.
pub fn dog_rgb_frontend(rgb: &Array3<f64>, dog: &DogParams, bank: &GaborBank, out_size: usize) -> Result<FeatureStack> {
    let opp = opponent_channels(rgb)?;
    let n = bank.len();
    let (h, w) = opp.luminance.dim();
    if h == 0 || w == 0 {
        return Err(Error::param("image", "empty image"));
    }
    let mut data = Array3::zeros((out_size, out_size, 3 * n));
    for (block, plane) in [&opp.luminance, &opp.red_green, &opp.blue_green].into_iter().enumerate() {
        let filtered = dog_filter(plane, dog)?;
        let maps = gabor_maps(&filtered, bank, out_size)?;
        data.slice_mut(s![.., .., block * n..(block + 1) * n]).assign(&maps);
    }
    Ok(FeatureStack { data, provenance: Provenance::DogRgbGabor })
}

/// A configured frontend that turns images into feature stacks.
#[derive(Clone, Debug)]
pub enum Frontend {
    Gray { bank: GaborBank, out_size: usize },
    DogRgb { dog: DogParams, bank: GaborBank, out_size: usize },
}

impl Frontend {
    pub fn channels(&self) -> usize {
        match self {
            Frontend::Gray { bank, .. } => bank.len(),
            Frontend::DogRgb { bank, .. } => 3 * bank.len(),
        }
    }

    pub fn out_size(&self) -> usize {
        match self {
            Frontend::Gray { out_size, .. } | Frontend::DogRgb { out_size, .. } => *out_size,
        }
    }

    pub fn provenance(&self) -> Provenance {
        match self {
            Frontend::Gray { .. } => Provenance::GrayGabor,
            Frontend::DogRgb { .. } => Provenance::DogRgbGabor,
        }
    }

    /// RGB input to the grayscale path is first reduced to its luminance.
    /// Grayscale input to the RGB path is rejected.
    pub fn process(&self, image: &Image) -> Result<FeatureStack> {
        match (self, image) {
            (Frontend::Gray { bank, out_size }, img) => gabor_frontend(&img.luminance(), bank, *out_size),
            (Frontend::DogRgb { dog, bank, out_size }, Image::Rgb(rgb)) => dog_rgb_frontend(rgb, dog, bank, *out_size),
            (Frontend::DogRgb { .. }, Image::Gray(_)) => {
                Err(Error::param("image", "the DoG-RGB frontend requires a 3-plane RGB image"))
            }
        }
    }
}
