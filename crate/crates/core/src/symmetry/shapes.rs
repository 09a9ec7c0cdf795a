//! Shape generators. Each builds a left-right symmetric binary mask, then
//! breaks the symmetry of its right half until the score lands on the
//! level's target.

use ndarray::{Array2, Array3};
use rand::Rng;

use super::score::{degrade_right_half, mask_score, mask_to_image, masked_symmetry_score, MirrorAxis, GRAY_THRESHOLD};
use crate::error::{Error, Result};
use crate::image::Image;

/// Score targets for levels 0 to 4.
pub const LEVEL_TARGETS: [f64; 5] = [1.0, 0.8, 0.6, 0.4, 0.2];
/// Allowed distance between a generated image's score and its target.
pub const TARGET_TOLERANCE: f64 = 0.05;
/// Triangle side as a fraction of the image side.
const TRIANGLE_SIDE: f64 = 0.75;
/// Attempt budget per image before generation gives up.
pub const MAX_ATTEMPTS: usize = 1000;

/// One generated image with its class and measured score.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledImage {
    pub pixels: Image,
    pub label: usize,
    pub measured_symmetry: f64,
}

fn target_for(level: usize) -> Result<f64> {
    LEVEL_TARGETS
        .get(level)
        .copied()
        .ok_or_else(|| Error::param("level", format!("{level} is outside 0..=4")))
}

fn check_size(size: usize, min: usize) -> Result<()> {
    if size < min {
        return Err(Error::param("size", format!("{size} is below the minimum of {min}")));
    }
    Ok(())
}

fn unreachable_target(what: &str, level: usize) -> Error {
    Error::Generation(format!("{what}: level {level} target not reached in {MAX_ATTEMPTS} attempts"))
}

fn binary(mask: Array2<bool>, score: f64, level: usize) -> LabeledImage {
    LabeledImage { pixels: mask_to_image(&mask), label: level, measured_symmetry: score }
}

/// Runs `base` until a symmetric start degrades onto the level target.
fn degrade_loop(
    what: &str,
    level: usize,
    erode_only: bool,
    rng: &mut impl Rng,
    mut base: impl FnMut(&mut dyn rand::RngCore) -> Result<Array2<bool>>,
) -> Result<(Array2<bool>, f64)> {
    let target = target_for(level)?;
    for _ in 0..MAX_ATTEMPTS {
        let mut mask = base(rng)?;
        let score = mask_score(&mask)?;
        if (score - target).abs() <= TARGET_TOLERANCE {
            return Ok((mask, score));
        }
        if let Some(score) = degrade_right_half(&mut mask, target, TARGET_TOLERANCE, erode_only, rng)? {
            return Ok((mask, score));
        }
    }
    Err(unreachable_target(what, level))
}

/// Side length in `[lo, hi] · size` with the same parity as `size`, so the
/// shape centres exactly.
fn centred_side(size: usize, lo: f64, hi: f64, rng: &mut (impl Rng + ?Sized)) -> usize {
    let a = ((size as f64 * lo).round() as usize).max(2);
    let b = ((size as f64 * hi).round() as usize).max(a);
    let mut side = rng.gen_range(a..=b);
    if (size - side.min(size)) % 2 == 1 {
        side = if side + 1 <= size { side + 1 } else { side - 1 };
    }
    side.min(size)
}

pub(crate) fn square_mask(level: usize, size: usize, rng: &mut impl Rng) -> Result<(Array2<bool>, f64)> {
    check_size(size, 8)?;
    degrade_loop("square", level, false, rng, |rng| {
        let side = centred_side(size, 0.35, 0.6, rng);
        let lo = (size - side) / 2;
        let span = lo..lo + side;
        Ok(Array2::from_shape_fn((size, size), |(y, x)| span.contains(&y) && span.contains(&x)))
    })
}

/// Filled centred square; the right half is then eroded or grown in blocks.
pub fn gen_square(level: usize, size: usize, rng: &mut impl Rng) -> Result<LabeledImage> {
    let (mask, score) = square_mask(level, size, rng)?;
    Ok(binary(mask, score, level))
}

/// Membership of a point in an apex-up Sierpinski triangle. `u` is the
/// distance from the vertical axis, `v` the depth below the apex.
fn in_sierpinski(u: f64, v: f64, side: f64, depth: usize) -> bool {
    let height = side * 3f64.sqrt() / 2.0;
    if v < 0.0 || v > height || u > v / 3f64.sqrt() {
        return false;
    }
    if depth == 0 {
        return true;
    }
    if v < height / 2.0 {
        in_sierpinski(u, v, side / 2.0, depth - 1)
    } else {
        // the two lower corners mirror each other; fold onto the right one
        in_sierpinski((u - side / 4.0).abs(), v - height / 2.0, side / 2.0, depth - 1)
    }
}

/// Rasterizes a centred Sierpinski triangle with the given side length.
pub fn sierpinski_raster(depth: usize, side: f64, size: usize) -> Array2<bool> {
    let height = side * 3f64.sqrt() / 2.0;
    let top = (size as f64 - height) / 2.0;
    let axis = size as f64 / 2.0;
    Array2::from_shape_fn((size, size), |(y, x)| {
        let u = (x as f64 + 0.5 - axis).abs();
        in_sierpinski(u, y as f64 + 0.5 - top, side, depth)
    })
}

pub(crate) fn sierpinski_mask(depth: usize, level: usize, size: usize, rng: &mut impl Rng) -> Result<(Array2<bool>, f64)> {
    check_size(size, 8)?;
    // Fixed size and erosion only: the remaining mass then tracks the level
    // and survives rotation, which the transformed variant depends on.
    degrade_loop("triangle", level, true, rng, |_| Ok(sierpinski_raster(depth, size as f64 * TRIANGLE_SIDE, size)))
}

pub fn gen_sierpinski(depth: usize, level: usize, size: usize, rng: &mut impl Rng) -> Result<LabeledImage> {
    let (mask, score) = sierpinski_mask(depth, level, size, rng)?;
    Ok(binary(mask, score, level))
}

/// One vertical strip of a parted square, as half-open pixel ranges.
#[derive(Clone, Copy, Debug)]
struct Segment {
    x0: i64,
    x1: i64,
    y0: i64,
    y1: i64,
}

fn render(segments: &[Segment], size: usize) -> Array2<bool> {
    let mut mask = Array2::from_elem((size, size), false);
    for s in segments {
        for y in s.y0.max(0)..s.y1.min(size as i64) {
            for x in s.x0.max(0)..s.x1.min(size as i64) {
                mask[[y as usize, x as usize]] = true;
            }
        }
    }
    mask
}

fn inside(s: &Segment, size: usize) -> bool {
    s.x0 >= 0 && s.y0 >= 0 && s.x1 <= size as i64 && s.y1 <= size as i64
}

/// Symmetric layout: the square is cut into `parts` vertical strips, mirror
/// pairs share a vertical offset and move apart horizontally by the same gap.
fn parted_layout(parts: usize, size: usize, rng: &mut (impl Rng + ?Sized)) -> Option<(Vec<Segment>, usize)> {
    let side = centred_side(size, 0.3, 0.45, rng);
    if side < 2 * parts || (parts % 2 == 0 && side % 2 == 1) {
        return None;
    }
    let lo = ((size - side) / 2) as i64;
    let s = side as i64;
    let m = parts as i64;
    let mut cuts = vec![0i64; parts + 1];
    for k in 0..=parts / 2 {
        cuts[k] = k as i64 * s / m;
        cuts[parts - k] = s - cuts[k];
    }
    let max_dy = (side / 6) as i64;
    let mut segments = vec![Segment { x0: 0, x1: 0, y0: 0, y1: 0 }; parts];
    let mut shift = 0i64;
    for i in (0..parts.div_ceil(2)).rev() {
        let j = parts - 1 - i;
        let dy = rng.gen_range(-max_dy..=max_dy);
        if i != j {
            shift += rng.gen_range(0..=2);
        }
        let left = Segment { x0: lo + cuts[i] - shift, x1: lo + cuts[i + 1] - shift, y0: lo + dy, y1: lo + dy + s };
        segments[i] = left;
        segments[j] = Segment { x0: size as i64 - left.x1, x1: size as i64 - left.x0, ..left };
    }
    segments.iter().all(|seg| inside(seg, size)).then_some((segments, side * side))
}

pub(crate) fn parted_mask(
    level: usize,
    n_splits: usize,
    size: usize,
    rng: &mut impl Rng,
    someparted: bool,
) -> Result<(Array2<bool>, f64)> {
    if n_splits == 0 {
        return Err(Error::param("n_splits", "must be at least 1"));
    }
    if size % 2 == 1 {
        return Err(Error::param("size", "parted squares need an even image size"));
    }
    let max_parts = n_splits + 1 + if someparted { level } else { 0 };
    check_size(size, (5 * max_parts).max(8))?;
    let target = target_for(level)?;
    for _ in 0..MAX_ATTEMPTS {
        let splits = if someparted { rng.gen_range(n_splits..=n_splits + level) } else { n_splits };
        let parts = splits + 1;
        let Some((mut segments, _)) = parted_layout(parts, size, rng) else { continue };
        let mut mask = render(&segments, size);
        let mut score = mask_score(&mask)?;
        // slide right-hand strips vertically, each in its own fixed direction
        let right: Vec<usize> = (parts.div_ceil(2)..parts).filter(|&j| j != parts - 1 - j).collect();
        let dirs: Vec<i64> = right.iter().map(|_| if rng.gen_bool(0.5) { 1 } else { -1 }).collect();
        let mut stuck = vec![false; right.len()];
        while score - target > TARGET_TOLERANCE && !stuck.iter().all(|&s| s) {
            let k = rng.gen_range(0..right.len());
            if stuck[k] {
                continue;
            }
            let seg = &mut segments[right[k]];
            let moved = Segment { y0: seg.y0 + dirs[k], y1: seg.y1 + dirs[k], ..*seg };
            if !inside(&moved, size) {
                stuck[k] = true;
                continue;
            }
            *seg = moved;
            mask = render(&segments, size);
            score = mask_score(&mask)?;
        }
        if (score - target).abs() <= TARGET_TOLERANCE {
            return Ok((mask, score));
        }
        if score - target > TARGET_TOLERANCE {
            if let Some(s) = degrade_right_half(&mut mask, target, TARGET_TOLERANCE, false, rng)? {
                return Ok((mask, s));
            }
        }
    }
    Err(unreachable_target("parted square", level))
}

/// Square cut into `n_splits + 1` vertical strips that are detached and
/// reattached. With `someparted`, the split count is drawn from
/// `n_splits..=n_splits + level`.
pub fn gen_parted(level: usize, n_splits: usize, size: usize, rng: &mut impl Rng, someparted: bool) -> Result<LabeledImage> {
    let (mask, score) = parted_mask(level, n_splits, size, rng, someparted)?;
    Ok(binary(mask, score, level))
}

#[derive(Clone, Copy, Debug)]
enum Part {
    Rect { x0: i64, x1: i64, y0: i64, y1: i64 },
    Ellipse { cx: f64, cy: f64, rx: f64, ry: f64 },
}

impl Part {
    fn shifted(self, dx: i64, dy: i64) -> Part {
        match self {
            Part::Rect { x0, x1, y0, y1 } => Part::Rect { x0: x0 + dx, x1: x1 + dx, y0: y0 + dy, y1: y1 + dy },
            Part::Ellipse { cx, cy, rx, ry } => Part::Ellipse { cx: cx + dx as f64, cy: cy + dy as f64, rx, ry },
        }
    }

    fn inside(&self, size: usize) -> bool {
        let n = size as i64;
        match *self {
            Part::Rect { x0, x1, y0, y1 } => x0 >= 0 && y0 >= 0 && x1 <= n && y1 <= n,
            Part::Ellipse { cx, cy, rx, ry } => {
                cx - rx >= 0.0 && cy - ry >= 0.0 && cx + rx <= size as f64 && cy + ry <= size as f64
            }
        }
    }

    fn paint(&self, mask: &mut Array2<bool>) {
        let (h, w) = mask.dim();
        match *self {
            Part::Rect { x0, x1, y0, y1 } => {
                for y in y0.max(0)..y1.min(h as i64) {
                    for x in x0.max(0)..x1.min(w as i64) {
                        mask[[y as usize, x as usize]] = true;
                    }
                }
            }
            Part::Ellipse { cx, cy, rx, ry } => {
                for ((y, x), v) in mask.indexed_iter_mut() {
                    let dx = (x as f64 + 0.5 - cx) / rx;
                    let dy = (y as f64 + 0.5 - cy) / ry;
                    if dx * dx + dy * dy <= 1.0 {
                        *v = true;
                    }
                }
            }
        }
    }
}

/// Symmetric stick figure: head, torso, two arms, two legs. Returns the
/// parts with indices of the right arm and right leg.
fn figure(size: usize, rng: &mut (impl Rng + ?Sized)) -> (Vec<Part>, usize, usize) {
    let n = size as i64;
    let u = size as f64 / 32.0;
    let px = |v: f64| (v * u).round().max(1.0) as i64;
    let mirror_x = |x0: i64, x1: i64| (n - x1, n - x0);

    // keep the torso width the same parity as the image so it centres exactly
    let mut torso_w = px(rng.gen_range(6.0..=9.0));
    if (n - torso_w) % 2 == 1 {
        torso_w += 1;
    }
    let torso_h = px(rng.gen_range(9.0..=12.0));
    let head_r = rng.gen_range(2.5..=3.5) * u;
    let arm_w = px(2.0);
    let arm_h = px(rng.gen_range(7.0..=10.0));
    let leg_w = px(rng.gen_range(2.0..=3.0));
    let leg_h = px(rng.gen_range(7.0..=10.0));
    let leg_gap = px(rng.gen_range(0.0..=2.0)).min(torso_w - 2 * leg_w).max(0);

    let total = 2.0 * head_r + torso_h as f64 + leg_h as f64;
    let top = ((size as f64 - total) / 2.0).max(0.0);
    let torso_x0 = (n - torso_w) / 2;
    let torso_y0 = (top + 2.0 * head_r).round() as i64;
    let head = Part::Ellipse { cx: size as f64 / 2.0, cy: top + head_r, rx: head_r * 0.9, ry: head_r };
    let torso = Part::Rect { x0: torso_x0, x1: torso_x0 + torso_w, y0: torso_y0, y1: torso_y0 + torso_h };
    let left_arm = Part::Rect { x0: torso_x0 - arm_w, x1: torso_x0, y0: torso_y0, y1: torso_y0 + arm_h };
    let (rx0, rx1) = mirror_x(torso_x0 - arm_w, torso_x0);
    let right_arm = Part::Rect { x0: rx0, x1: rx1, y0: torso_y0, y1: torso_y0 + arm_h };
    let leg_x1 = n / 2 - leg_gap / 2 - (n % 2 == 0 && leg_gap % 2 == 1) as i64;
    let leg_x1 = leg_x1.min(torso_x0 + torso_w / 2);
    let leg_y0 = torso_y0 + torso_h;
    let left_leg = Part::Rect { x0: leg_x1 - leg_w, x1: leg_x1, y0: leg_y0, y1: leg_y0 + leg_h };
    let (lx0, lx1) = mirror_x(leg_x1 - leg_w, leg_x1);
    let right_leg = Part::Rect { x0: lx0, x1: lx1, y0: leg_y0, y1: leg_y0 + leg_h };
    (vec![head, torso, left_arm, right_arm, left_leg, right_leg], 3, 5)
}

fn paint_all(parts: &[Part], size: usize) -> Array2<bool> {
    let mut mask = Array2::from_elem((size, size), false);
    parts.iter().for_each(|p| p.paint(&mut mask));
    mask
}

pub(crate) fn human_mask(level: usize, size: usize, rng: &mut impl Rng) -> Result<(Array2<bool>, f64)> {
    check_size(size, 24)?;
    let target = target_for(level)?;
    for _ in 0..MAX_ATTEMPTS {
        let (mut parts, arm, leg) = figure(size, rng);
        if !parts.iter().all(|p| p.inside(size)) {
            continue;
        }
        let mut mask = paint_all(&parts, size);
        let mut score = mask_score(&mask)?;
        // displace the right limbs: arms drop or swing out, legs detach down or out
        let moves = [(arm, if rng.gen_bool(0.5) { (0, 1) } else { (1, 0) }), (leg, if rng.gen_bool(0.5) { (0, 1) } else { (1, 0) })];
        let mut stuck = [false; 2];
        let budget = rng.gen_range(0..=size);
        let mut steps = 0;
        while score - target > TARGET_TOLERANCE && !stuck.iter().all(|&s| s) && steps < budget {
            let k = rng.gen_range(0..moves.len());
            let (idx, (dx, dy)) = moves[k];
            let moved = parts[idx].shifted(dx, dy);
            if !moved.inside(size) {
                stuck[k] = true;
                continue;
            }
            parts[idx] = moved;
            mask = paint_all(&parts, size);
            score = mask_score(&mask)?;
            steps += 1;
        }
        if (score - target).abs() <= TARGET_TOLERANCE {
            return Ok((mask, score));
        }
        if score - target > TARGET_TOLERANCE {
            if let Some(s) = degrade_right_half(&mut mask, target, TARGET_TOLERANCE, false, rng)? {
                return Ok((mask, s));
            }
        }
    }
    Err(unreachable_target("human-like figure", level))
}

/// Binary figure built from rectangles and an elliptical head; lower levels
/// displace the right limbs and then erode the right half.
pub fn gen_human_like(level: usize, size: usize, rng: &mut impl Rng) -> Result<LabeledImage> {
    let (mask, score) = human_mask(level, size, rng)?;
    Ok(binary(mask, score, level))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Palette {
    Colored,
    /// Gray object on a gray background, R = G = B everywhere.
    Achromatic,
}

fn random_color(rng: &mut impl Rng, palette: Palette) -> [f64; 3] {
    match palette {
        Palette::Colored => [rng.gen(), rng.gen(), rng.gen()],
        Palette::Achromatic => [rng.gen::<f64>(); 3],
    }
}

fn lum(c: &[f64; 3]) -> f64 {
    (c[0] + c[1] + c[2]) / 3.0
}

/// Colored object of a random shape over a random gradient background.
pub fn gen_rgb_symmetric(level: usize, size: usize, rng: &mut impl Rng) -> Result<LabeledImage> {
    gen_rgb_with_palette(level, size, rng, Palette::Colored)
}

/// Object pixels take a single color, so the masked luminance score equals
/// the shape score. The background is excluded from the mask.
pub fn gen_rgb_with_palette(level: usize, size: usize, rng: &mut impl Rng, palette: Palette) -> Result<LabeledImage> {
    let (mask, _) = match rng.gen_range(0..3) {
        0 => square_mask(level, size, rng)?,
        1 => {
            let depth = rng.gen_range(0..=1);
            sierpinski_mask(depth, level, size, rng)?
        }
        _ if size >= 24 => human_mask(level, size, rng)?,
        _ => square_mask(level, size, rng)?,
    };
    let (object, bg_a, bg_b) = loop {
        let object = random_color(rng, palette);
        let bg_a = random_color(rng, palette);
        let bg_b = random_color(rng, palette);
        let contrast = (lum(&object) - lum(&bg_a)).abs().min((lum(&object) - lum(&bg_b)).abs());
        if contrast >= 0.25 {
            break (object, bg_a, bg_b);
        }
    };
    let angle: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let (sin, cos) = angle.sin_cos();
    let half = size as f64 / 2.0;
    let rgb = Array3::from_shape_fn((size, size, 3), |(y, x, c)| {
        if mask[[y, x]] {
            return object[c];
        }
        let t = (((x as f64 - half) * cos + (y as f64 - half) * sin) / size as f64 + 0.5).clamp(0.0, 1.0);
        bg_a[c] * (1.0 - t) + bg_b[c] * t
    });
    let image = Image::Rgb(rgb);
    let score = masked_symmetry_score(&image.luminance(), &mask, MirrorAxis::Vertical, GRAY_THRESHOLD)?;
    Ok(LabeledImage { pixels: image, label: level, measured_symmetry: score })
}
