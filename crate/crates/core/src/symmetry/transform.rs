use ndarray::Array2;
use rand::Rng;

use crate::error::{Error, Result};
use crate::image::Image;

/// Symmetric sampling ranges: rotation in `[-rotation_deg, rotation_deg]`,
/// translation per axis in `[-translation_frac, translation_frac]` of the
/// image side.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransformRange {
    pub rotation_deg: f64,
    pub translation_frac: f64,
}

impl TransformRange {
    pub const FULL: TransformRange = TransformRange { rotation_deg: 180.0, translation_frac: 0.2 };

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=180.0).contains(&self.rotation_deg) {
            return Err(Error::param("rotation_range", format!("{} is outside [0, 180]", self.rotation_deg)));
        }
        if !(0.0..=0.2).contains(&self.translation_frac) {
            return Err(Error::param("translation_range", format!("{} is outside [0, 0.2]", self.translation_frac)));
        }
        Ok(())
    }

    pub fn sample(&self, rng: &mut impl Rng) -> (f64, (f64, f64)) {
        let r = self.rotation_deg;
        let t = self.translation_frac;
        let rotation = if r > 0.0 { rng.gen_range(-r..=r) } else { 0.0 };
        let mut shift = || if t > 0.0 { rng.gen_range(-t..=t) } else { 0.0 };
        let shift = (shift(), shift());
        (rotation, shift)
    }
}

/// Rotates about the image centre (bilinear, zero fill), then translates by
/// a whole number of pixels (`translation` is `(x, y)` as fractions of the
/// width and height). Output keeps the input dimensions.
pub fn apply_transform(image: &Image, rotation_deg: f64, translation: (f64, f64)) -> Result<Image> {
    if !(-180.0..=180.0).contains(&rotation_deg) {
        return Err(Error::param("rotation_deg", format!("{rotation_deg} is outside [-180, 180]")));
    }
    let (tx, ty) = translation;
    if !(-0.2..=0.2).contains(&tx) || !(-0.2..=0.2).contains(&ty) {
        return Err(Error::param("translation_frac", format!("({tx}, {ty}) is outside [-0.2, 0.2]")));
    }
    let (h, w) = (image.height(), image.width());
    let dx = (tx * w as f64).round();
    let dy = (ty * h as f64).round();
    let (sin, cos) = rotation_deg.to_radians().sin_cos();
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    Ok(image.map_planes(|plane| {
        Array2::from_shape_fn((h, w), |(y, x)| {
            let px = x as f64 - dx - cx;
            let py = y as f64 - dy - cy;
            // inverse rotation
            let sx = cos * px + sin * py + cx;
            let sy = -sin * px + cos * py + cy;
            sample_bilinear(plane, sx, sy)
        })
    }))
}

fn sample_bilinear(plane: &Array2<f64>, x: f64, y: f64) -> f64 {
    let (h, w) = plane.dim();
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let at = |yy: f64, xx: f64| -> f64 {
        if yy < 0.0 || xx < 0.0 || yy >= h as f64 || xx >= w as f64 {
            0.0
        } else {
            plane[[yy as usize, xx as usize]]
        }
    };
    let mut v = 0.0;
    for (oy, wy) in [(0.0, 1.0 - fy), (1.0, fy)] {
        for (ox, wx) in [(0.0, 1.0 - fx), (1.0, fx)] {
            let weight = wy * wx;
            if weight != 0.0 {
                v += weight * at(y0 + oy, x0 + ox);
            }
        }
    }
    v
}
