//! CIFAR-10 binary batches: fixed 3,073-byte records, one label byte then
//! 1,024 red, 1,024 green and 1,024 blue bytes, each plane row-major 32×32.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array3;

use super::{LabeledDataset, Split};
use crate::error::{Error, Result};
use crate::image::Image;

pub const CIFAR_RECORD_LEN: usize = 3073;
/// Records in every canonical batch file.
pub const CIFAR_BATCH_RECORDS: usize = 10_000;
const SIDE: usize = 32;
const PLANE: usize = SIDE * SIDE;

pub const CIFAR10_CLASSES: [&str; 10] =
    ["airplane", "automobile", "bird", "cat", "deer", "dog", "frog", "horse", "ship", "truck"];

/// Decodes one batch file's bytes into `(image, label)` pairs.
pub fn parse_cifar10(bytes: &[u8]) -> Result<Vec<(Array3<f64>, usize)>> {
    if bytes.is_empty() {
        return Err(Error::format(0, "empty batch file"));
    }
    let rem = bytes.len() % CIFAR_RECORD_LEN;
    if rem != 0 {
        return Err(Error::format(
            (bytes.len() - rem) as u64,
            format!("length {} is not a multiple of the {CIFAR_RECORD_LEN}-byte record", bytes.len()),
        ));
    }
    bytes
        .chunks_exact(CIFAR_RECORD_LEN)
        .enumerate()
        .map(|(i, rec)| {
            let label = rec[0] as usize;
            if label > 9 {
                return Err(Error::format((i * CIFAR_RECORD_LEN) as u64, format!("label {label} outside 0..=9")));
            }
            let px = &rec[1..];
            let img = Array3::from_shape_fn((SIDE, SIDE, 3), |(y, x, c)| f64::from(px[c * PLANE + y * SIDE + x]) / 255.0);
            Ok((img, label))
        })
        .collect()
}

/// Loads and concatenates batch files. Every item is tagged as training data.
pub fn load_cifar10(batch_paths: &[PathBuf]) -> Result<LabeledDataset> {
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for path in batch_paths {
        for (img, label) in parse_cifar10(&fs::read(path)?)? {
            images.push(Image::Rgb(img));
            labels.push(label);
        }
    }
    let split = vec![Split::Train; images.len()];
    let mut ds = LabeledDataset::new(images, labels, split)?;
    ds.class_names = Some(CIFAR10_CLASSES.iter().map(|s| s.to_string()).collect());
    Ok(ds)
}

/// Loads `data_batch_1.bin` .. `data_batch_5.bin` as training data and
/// `test_batch.bin` as test data. Each file must hold exactly
/// [`CIFAR_BATCH_RECORDS`] records, which catches truncation on a record
/// boundary that the headerless format cannot reveal by itself.
pub fn load_cifar10_dir(dir: &Path) -> Result<LabeledDataset> {
    let train_paths: Vec<PathBuf> = (1..=5).map(|i| dir.join(format!("data_batch_{i}.bin"))).collect();
    let test_path = dir.join("test_batch.bin");
    for path in train_paths.iter().chain([&test_path]) {
        let len = fs::metadata(path)?.len();
        let expected = (CIFAR_BATCH_RECORDS * CIFAR_RECORD_LEN) as u64;
        if len != expected {
            return Err(Error::format(
                len.min(expected),
                format!("{} holds {len} bytes, a canonical batch holds {expected}", path.display()),
            ));
        }
    }
    let train = load_cifar10(&train_paths)?;
    let mut test = load_cifar10(&[test_path])?;
    test.split.iter_mut().for_each(|s| *s = Split::Test);
    train.concat(test)
}
