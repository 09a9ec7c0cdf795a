//! Generated mirror-symmetry datasets: scoring, shape generators, geometric
//! transforms, and on-disk manifests.

mod score;
mod shapes;
mod transform;

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::ingest::{read_pnm, write_pnm, LabeledDataset, Split};

pub use score::{masked_symmetry_score, symmetry_score, MirrorAxis, BINARY_THRESHOLD, GRAY_THRESHOLD};
pub use shapes::{
    gen_human_like, gen_parted, gen_rgb_symmetric, gen_rgb_with_palette, gen_sierpinski, gen_square, sierpinski_raster,
    LabeledImage, Palette, LEVEL_TARGETS, MAX_ATTEMPTS, TARGET_TOLERANCE,
};
pub use transform::{apply_transform, TransformRange};

pub const MANIFEST_FILE: &str = "manifest.csv";
pub const MANIFEST_HEADER: [&str; 4] = ["filename", "label", "split", "measured_symmetry"];
pub const TRAIN_FRACTION: f64 = 0.8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    Square,
    Triangle,
    PartedSquare,
    SomepartedSquare,
    HumanLike,
    RgbImage,
}

impl Family {
    pub const ALL: [Family; 6] = [
        Family::Square,
        Family::Triangle,
        Family::PartedSquare,
        Family::SomepartedSquare,
        Family::HumanLike,
        Family::RgbImage,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Square => "square",
            Family::Triangle => "triangle",
            Family::PartedSquare => "parted-square",
            Family::SomepartedSquare => "someparted-square",
            Family::HumanLike => "human-like",
            Family::RgbImage => "rgb-image",
        }
    }

    pub fn parse(s: &str) -> Option<Family> {
        Family::ALL.into_iter().find(|f| f.name() == s)
    }

    pub fn is_rgb(self) -> bool {
        self == Family::RgbImage
    }
}

/// Recipe for one generated dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct SymmetrySpec {
    pub family: Family,
    /// 5 uses every level; 2 keeps only the first and last.
    pub levels: usize,
    pub image_size: usize,
    pub count: usize,
    /// Rotation drawn from `[-rotation_range, rotation_range]` degrees.
    pub rotation_range: f64,
    /// Per-axis shift drawn from `[-translation_range, translation_range]`.
    pub translation_range: f64,
    pub seed: u64,
    /// Recursion depth for the triangle family.
    pub depth: usize,
    /// Base split count for the parted families.
    pub n_splits: usize,
}

/// Dataset identifiers accepted by [`SymmetrySpec::named`].
pub const DATASET_NAMES: [&str; 10] = [
    "SQUARE",
    "TWOCLASSES-SQUARE",
    "TRIANGLE",
    "ROTATED-TRANSLATED-TRIANGLE",
    "FIVECLASSES-PARTED-SQUARE",
    "TWOCLASSES-PARTED-SQUARE",
    "FIVECLASSES-SOMEPARTED-SQUARE",
    "TWOCLASSES-SOMEPARTED-SQUARE",
    "ROTATED-TRANSLATED-HUMAN-LIKE",
    "RGB-IMAGE",
];

impl SymmetrySpec {
    pub fn new(family: Family, levels: usize) -> SymmetrySpec {
        SymmetrySpec {
            family,
            levels,
            image_size: 32,
            count: 10_000,
            rotation_range: 0.0,
            translation_range: 0.0,
            seed: 0,
            depth: 2,
            n_splits: if family == Family::SomepartedSquare { 1 } else { 2 },
        }
    }

    /// Preset for a named dataset, with 10,000 images of 32×32 pixels.
    pub fn named(name: &str) -> Result<SymmetrySpec> {
        let (family, levels, transformed) = match name {
            "SQUARE" => (Family::Square, 5, false),
            "TWOCLASSES-SQUARE" => (Family::Square, 2, false),
            "TRIANGLE" => (Family::Triangle, 5, false),
            "ROTATED-TRANSLATED-TRIANGLE" => (Family::Triangle, 5, true),
            "FIVECLASSES-PARTED-SQUARE" => (Family::PartedSquare, 5, false),
            "TWOCLASSES-PARTED-SQUARE" => (Family::PartedSquare, 2, false),
            "FIVECLASSES-SOMEPARTED-SQUARE" => (Family::SomepartedSquare, 5, false),
            "TWOCLASSES-SOMEPARTED-SQUARE" => (Family::SomepartedSquare, 2, false),
            "ROTATED-TRANSLATED-HUMAN-LIKE" => (Family::HumanLike, 5, true),
            "RGB-IMAGE" => (Family::RgbImage, 5, false),
            other => return Err(Error::param("dataset", format!("unknown dataset `{other}`"))),
        };
        let mut spec = SymmetrySpec::new(family, levels);
        if transformed {
            spec.rotation_range = TransformRange::FULL.rotation_deg;
            spec.translation_range = TransformRange::FULL.translation_frac;
        }
        Ok(spec)
    }

    pub fn transform_range(&self) -> TransformRange {
        TransformRange { rotation_deg: self.rotation_range, translation_frac: self.translation_range }
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels != 2 && self.levels != 5 {
            return Err(Error::param("levels", format!("{} classes requested, only 2 or 5 are supported", self.levels)));
        }
        if self.count == 0 {
            return Err(Error::param("count", "must be positive"));
        }
        self.transform_range().validate()
    }

    /// Generator level for a class index: all five levels, or the first and
    /// last when only two classes are used.
    pub fn level_of(&self, class: usize) -> usize {
        if self.levels == 2 {
            [0, 4][class]
        } else {
            class
        }
    }
}

fn item_seed(seed: u64, index: usize) -> u64 {
    // splitmix64 finalizer over seed ^ index
    let mut z = (seed ^ index as u64).wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generates one image of `spec.family` at `level`. Transformed
/// families are rotated and shifted after scoring, so the recorded score
/// describes the shape in its upright pose.
pub fn generate(spec: &SymmetrySpec, level: usize, rng: &mut impl Rng) -> Result<LabeledImage> {
    let size = spec.image_size;
    let mut item = match spec.family {
        Family::Square => gen_square(level, size, rng)?,
        Family::Triangle => gen_sierpinski(spec.depth, level, size, rng)?,
        Family::PartedSquare => gen_parted(level, spec.n_splits, size, rng, false)?,
        Family::SomepartedSquare => gen_parted(level, spec.n_splits, size, rng, true)?,
        Family::HumanLike => gen_human_like(level, size, rng)?,
        Family::RgbImage => gen_rgb_symmetric(level, size, rng)?,
    };
    let range = spec.transform_range();
    if range.rotation_deg > 0.0 || range.translation_frac > 0.0 {
        let (rotation, shift) = range.sample(rng);
        let moved = apply_transform(&item.pixels, rotation, shift)?;
        item.pixels = match moved {
            Image::Gray(a) if !spec.family.is_rgb() => Image::Gray(a.mapv(|v| if v >= 0.5 { 1.0 } else { 0.0 })),
            other => other,
        };
    }
    Ok(item)
}

/// Builds `count` images with classes assigned round-robin (class of item
/// `i` is `i % levels`), each from its own derived seed, then splits 80/20
/// by a seeded shuffle.
pub fn build_dataset(spec: &SymmetrySpec) -> Result<LabeledDataset> {
    spec.validate()?;
    let items: Vec<LabeledImage> = (0..spec.count)
        .into_par_iter()
        .map(|i| {
            let class = i % spec.levels;
            let mut rng = ChaCha8Rng::seed_from_u64(item_seed(spec.seed, i));
            let mut item = generate(spec, spec.level_of(class), &mut rng)?;
            item.label = class;
            Ok(item)
        })
        .collect::<Result<_>>()?;
    let scores = items.iter().map(|it| it.measured_symmetry).collect();
    let labels = items.iter().map(|it| it.label).collect();
    let images = items.into_iter().map(|it| it.pixels).collect();
    let mut ds = LabeledDataset::new(images, labels, vec![Split::Train; spec.count])?;
    ds.scores = Some(scores);
    ds.resplit(TRAIN_FRACTION, spec.seed);
    Ok(ds)
}

fn file_name(index: usize, rgb: bool) -> String {
    format!("{index:05}.{}", if rgb { "ppm" } else { "pgm" })
}

/// Writes every image as PGM/PPM plus `manifest.csv`.
pub fn write_dataset(ds: &LabeledDataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join(MANIFEST_FILE))?;
    w.write_record(MANIFEST_HEADER)?;
    for (i, item) in ds.iter().enumerate() {
        let name = file_name(i, item.image.is_rgb());
        write_pnm(&dir.join(&name), item.image)?;
        let score = ds.scores.as_ref().map_or(String::new(), |s| format!("{:.6}", s[i]));
        w.write_record([name, item.label.to_string(), item.split.as_str().to_string(), score])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a directory written by [`write_dataset`].
pub fn read_dataset(dir: &Path) -> Result<LabeledDataset> {
    let path = dir.join(MANIFEST_FILE);
    let mut r = csv::Reader::from_path(&path)?;
    let header = r.headers()?.clone();
    if header.iter().ne(MANIFEST_HEADER) {
        return Err(Error::format(0, format!("{}: unexpected manifest header", path.display())));
    }
    let (mut images, mut labels, mut split, mut scores) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut all_scored = true;
    for record in r.records() {
        let record = record?;
        let offset = record.position().map_or(0, |p| p.byte());
        let bad = |what: &str| Error::format(offset, format!("{}: bad {what} field", path.display()));
        let name = &record[0];
        if name.contains(['/', '\\']) || name.starts_with('.') {
            return Err(bad("filename"));
        }
        images.push(read_pnm(&dir.join(name))?);
        labels.push(record[1].parse::<usize>().map_err(|_| bad("label"))?);
        split.push(Split::parse(&record[2]).ok_or_else(|| bad("split"))?);
        if record[3].is_empty() {
            all_scored = false;
        } else {
            scores.push(record[3].parse::<f64>().map_err(|_| bad("measured_symmetry"))?);
        }
    }
    let mut ds = LabeledDataset::new(images, labels, split)?;
    ds.scores = all_scored.then_some(scores);
    Ok(ds)
}
