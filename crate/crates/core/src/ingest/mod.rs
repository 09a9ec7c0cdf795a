//! Dataset container plus loaders for the standard benchmarks and the
//! Netpbm files the symmetry generators write.

mod cifar;
mod idx;
mod pnm;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::{mean_of_planes, Image};

pub use cifar::{load_cifar10, load_cifar10_dir, parse_cifar10, CIFAR10_CLASSES, CIFAR_BATCH_RECORDS, CIFAR_RECORD_LEN};
pub use idx::{load_mnist, load_mnist_dir, parse_idx_images, parse_idx_labels, IDX_IMAGE_MAGIC, IDX_LABEL_MAGIC};
pub use pnm::{decode_pnm, encode_pnm, read_pnm, write_pnm};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Split> {
        match s {
            "train" => Some(Split::Train),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

/// Images with class labels and a per-item train/test assignment.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    pub images: Vec<Image>,
    pub labels: Vec<usize>,
    pub split: Vec<Split>,
    pub class_names: Option<Vec<String>>,
    /// Measured mirror symmetry per image, for generated symmetry sets.
    pub scores: Option<Vec<f64>>,
}

/// Borrowed view of one dataset entry.
#[derive(Clone, Copy, Debug)]
pub struct Item<'a> {
    pub image: &'a Image,
    pub label: usize,
    pub split: Split,
}

impl LabeledDataset {
    pub fn new(images: Vec<Image>, labels: Vec<usize>, split: Vec<Split>) -> Result<LabeledDataset> {
        let ds = LabeledDataset { images, labels, split, class_names: None, scores: None };
        ds.validate()?;
        Ok(ds)
    }

    /// Checks equal lengths, uniform image shape, and pixel range.
    pub fn validate(&self) -> Result<()> {
        let n = self.images.len();
        if self.labels.len() != n || self.split.len() != n {
            return Err(Error::Structure(format!(
                "{n} images but {} labels and {} split tags",
                self.labels.len(),
                self.split.len()
            )));
        }
        if let Some(scores) = &self.scores {
            if scores.len() != n {
                return Err(Error::Structure("score count differs from image count".into()));
            }
        }
        if let Some(first) = self.images.first() {
            let shape = (first.height(), first.width(), first.is_rgb());
            for img in &self.images {
                if (img.height(), img.width(), img.is_rgb()) != shape {
                    return Err(Error::Structure("images within a dataset must share dimensions".into()));
                }
            }
        }
        let in_range = |v: &f64| (0.0..=1.0).contains(v);
        for img in &self.images {
            let ok = match img {
                Image::Gray(a) => a.iter().all(in_range),
                Image::Rgb(a) => a.iter().all(in_range),
            };
            if !ok {
                return Err(Error::Structure("pixel values must lie in [0, 1]".into()));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    pub fn iter(&self) -> impl Iterator<Item = Item<'_>> + '_ {
        self.images
            .iter()
            .zip(&self.labels)
            .zip(&self.split)
            .map(|((image, &label), &split)| Item { image, label, split })
    }

    pub fn indices_of(&self, split: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.split[i] == split).collect()
    }

    pub fn count(&self, split: Split) -> usize {
        self.split.iter().filter(|&&s| s == split).count()
    }

    /// New dataset holding the given items, in that order.
    pub fn select(&self, indices: &[usize]) -> LabeledDataset {
        LabeledDataset {
            images: indices.iter().map(|&i| self.images[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            split: indices.iter().map(|&i| self.split[i]).collect(),
            class_names: self.class_names.clone(),
            scores: self.scores.as_ref().map(|s| indices.iter().map(|&i| s[i]).collect()),
        }
    }

    /// Concatenates two datasets with compatible images.
    pub fn concat(mut self, other: LabeledDataset) -> Result<LabeledDataset> {
        self.images.extend(other.images);
        self.labels.extend(other.labels);
        self.split.extend(other.split);
        self.scores = match (self.scores, other.scores) {
            (Some(mut a), Some(b)) => {
                a.extend(b);
                Some(a)
            }
            _ => None,
        };
        self.class_names = self.class_names.or(other.class_names);
        self.validate()?;
        Ok(self)
    }

    /// Seeded stratified subset: up to `train_per_class` training items and
    /// `test_per_class` test items of every class.
    pub fn stratified_subset(&self, train_per_class: usize, test_per_class: usize, seed: u64) -> LabeledDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut chosen = Vec::new();
        for (split, quota) in [(Split::Train, train_per_class), (Split::Test, test_per_class)] {
            for class in 0..self.num_classes() {
                let mut members: Vec<usize> = (0..self.len()).filter(|&i| self.split[i] == split && self.labels[i] == class).collect();
                members.shuffle(&mut rng);
                members.truncate(quota);
                members.sort_unstable();
                chosen.extend(members);
            }
        }
        self.select(&chosen)
    }

    /// Reassigns the split with a seeded shuffle: the first `train_fraction`
    /// of the shuffled order becomes training data.
    pub fn resplit(&mut self, train_fraction: f64, seed: u64) {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_train = (self.len() as f64 * train_fraction).round() as usize;
        for (rank, &i) in order.iter().enumerate() {
            self.split[i] = if rank < n_train { Split::Train } else { Split::Test };
        }
    }
}

/// `(R + G + B) / 3` per pixel. Gray images pass through unchanged.
pub fn to_grayscale(image: &Image) -> Array2<f64> {
    match image {
        Image::Gray(a) => a.clone(),
        Image::Rgb(a) => mean_of_planes(a),
    }
}
