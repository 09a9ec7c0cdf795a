use ndarray::Array2;
use rand::Rng;

use crate::error::{Error, Result};
use crate::image::Image;

/// Mirror axis. `Vertical` compares left and right halves.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MirrorAxis {
    Vertical,
    Horizontal,
}

/// Difference threshold for images whose values are all exactly 0 or 1.
pub const BINARY_THRESHOLD: f64 = 0.5;
/// Difference threshold for every other image.
pub const GRAY_THRESHOLD: f64 = 0.1;

fn mirror(y: usize, x: usize, h: usize, w: usize, axis: MirrorAxis) -> (usize, usize) {
    match axis {
        MirrorAxis::Vertical => (y, w - 1 - x),
        MirrorAxis::Horizontal => (h - 1 - y, x),
    }
}

/// Mirror-symmetry score in `[0, 1]`: one minus the fraction of the object
/// (united with its mirror image) whose pixels disagree with their mirror.
///
/// Object pixels are those above the threshold. RGB images are scored on
/// their luminance.
pub fn symmetry_score(image: &Image, axis: MirrorAxis) -> Result<f64> {
    let lum = image.luminance();
    if lum.is_empty() {
        return Err(Error::param("image", "empty image"));
    }
    let binary = lum.iter().all(|&v| v == 0.0 || v == 1.0);
    let t = if binary { BINARY_THRESHOLD } else { GRAY_THRESHOLD };
    let object = lum.mapv(|v| v > t);
    masked_symmetry_score(&lum, &object, axis, t)
}

/// Same score with an explicit object mask, so a textured background can be
/// excluded. Pixels in the union of the mask and its mirror count as
/// differing when exactly one side is masked or their values differ by more
/// than `threshold`.
pub fn masked_symmetry_score(values: &Array2<f64>, mask: &Array2<bool>, axis: MirrorAxis, threshold: f64) -> Result<f64> {
    if values.dim() != mask.dim() {
        return Err(Error::Structure("mask and image shapes differ".into()));
    }
    let (h, w) = values.dim();
    let mut union = 0usize;
    let mut differing = 0usize;
    for y in 0..h {
        for x in 0..w {
            let (my, mx) = mirror(y, x, h, w, axis);
            let a = mask[[y, x]];
            let b = mask[[my, mx]];
            if a || b {
                union += 1;
                if a != b || (values[[y, x]] - values[[my, mx]]).abs() > threshold {
                    differing += 1;
                }
            }
        }
    }
    if union == 0 {
        return Err(Error::UndefinedScore);
    }
    Ok(1.0 - differing as f64 / union as f64)
}

/// Vertical-axis score of a binary mask.
pub(crate) fn mask_score(mask: &Array2<bool>) -> Result<f64> {
    let (h, w) = mask.dim();
    let mut union = 0usize;
    let mut differing = 0usize;
    for y in 0..h {
        for x in 0..w {
            let a = mask[[y, x]];
            let b = mask[[y, w - 1 - x]];
            union += usize::from(a || b);
            differing += usize::from(a != b);
        }
    }
    if union == 0 {
        return Err(Error::UndefinedScore);
    }
    Ok(1.0 - differing as f64 / union as f64)
}

pub(crate) fn mask_to_image(mask: &Array2<bool>) -> Image {
    Image::Gray(mask.mapv(|b| if b { 1.0 } else { 0.0 }))
}

/// Erodes or grows the right half of `mask` one block at a time until its
/// score falls to `target + tol`. Every block only flips pixels that still
/// agree with their mirror, so each step lowers the score. With
/// `erode_only` the object only loses pixels, so its mass falls with the
/// score. Returns `None` when the walk stalls or overshoots below
/// `target - tol`.
pub(crate) fn degrade_right_half(
    mask: &mut Array2<bool>,
    target: f64,
    tol: f64,
    erode_only: bool,
    rng: &mut impl Rng,
) -> Result<Option<f64>> {
    let (h, w) = mask.dim();
    let mut score = mask_score(mask)?;
    let area = mask.iter().filter(|&&b| b).count();
    let block = ((area as f64).sqrt() / 10.0).floor().max(1.0) as usize;
    let x_start = w.div_ceil(2);
    let cols = (w - x_start).div_ceil(block);
    let rows = h.div_ceil(block);
    let remove_bias: f64 = if erode_only { 1.0 } else { rng.gen_range(0.4..0.9) };

    while score - target > tol {
        let mut removals = Vec::new();
        let mut additions = Vec::new();
        for by in 0..rows {
            for bx in 0..cols {
                let (can_remove, can_add) = block_options(mask, by * block, x_start + bx * block, block);
                if can_remove {
                    removals.push((by, bx));
                }
                if can_add {
                    additions.push((by, bx));
                }
            }
        }
        let remove = match (removals.is_empty(), additions.is_empty()) {
            (true, true) => return Ok(None),
            (false, true) => true,
            (true, false) if erode_only => return Ok(None),
            (true, false) => false,
            (false, false) => rng.gen_bool(remove_bias),
        };
        let pool = if remove { &removals } else { &additions };
        let (by, bx) = pool[rng.gen_range(0..pool.len())];
        for y in by * block..((by + 1) * block).min(h) {
            for x in x_start + bx * block..(x_start + (bx + 1) * block).min(w) {
                let agrees = mask[[y, x]] == mask[[y, w - 1 - x]];
                if agrees && mask[[y, x]] == remove && touches(mask, y, x, remove) {
                    mask[[y, x]] = !remove;
                }
            }
        }
        score = mask_score(mask)?;
    }
    Ok((target - score <= tol).then_some(score))
}

/// Whether a pixel sits on the object boundary: an object pixel next to
/// background (`want_background`) or a background pixel next to the object.
fn touches(mask: &Array2<bool>, y: usize, x: usize, want_background: bool) -> bool {
    let (h, w) = mask.dim();
    let neighbours = [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)];
    neighbours.iter().any(|&(dy, dx)| {
        let ny = y as i64 + dy;
        let nx = x as i64 + dx;
        if ny < 0 || nx < 0 || ny >= h as i64 || nx >= w as i64 {
            return want_background;
        }
        mask[[ny as usize, nx as usize]] != want_background
    })
}

fn block_options(mask: &Array2<bool>, y0: usize, x0: usize, block: usize) -> (bool, bool) {
    let (h, w) = mask.dim();
    let mut can_remove = false;
    let mut can_add = false;
    for y in y0..(y0 + block).min(h) {
        for x in x0..(x0 + block).min(w) {
            if mask[[y, x]] != mask[[y, w - 1 - x]] {
                continue;
            }
            if mask[[y, x]] {
                can_remove |= touches(mask, y, x, true);
            } else {
                can_add |= touches(mask, y, x, false);
            }
        }
    }
    (can_remove, can_add)
}
