//! MNIST in IDX format: big-endian headers, unsigned-byte payload.
//!
//! ```text
//! images: magic 0x00000803 (2051) | count u32 | rows u32 | cols u32 | count*rows*cols bytes
//! labels: magic 0x00000801 (2049) | count u32 | count bytes
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use super::{LabeledDataset, Split};
use crate::error::{Error, Result};
use crate::image::Image;

pub const IDX_IMAGE_MAGIC: u32 = 2051;
pub const IDX_LABEL_MAGIC: u32 = 2049;

fn be_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| Error::format(at as u64, format!("truncated header while reading {what}")))
}

fn check_payload(bytes: &[u8], start: usize, expected: usize) -> Result<()> {
    let end = start
        .checked_add(expected)
        .ok_or_else(|| Error::format(4, "header dimensions overflow"))?;
    if bytes.len() < end {
        return Err(Error::format(bytes.len() as u64, format!("truncated payload: expected {expected} bytes after offset {start}")));
    }
    if bytes.len() > end {
        return Err(Error::format(end as u64, "trailing bytes after payload"));
    }
    Ok(())
}

/// Decodes an IDX image file into `rows × cols` arrays scaled to `[0, 1]`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<Vec<Array2<f64>>> {
    let magic = be_u32(bytes, 0, "magic")?;
    if magic != IDX_IMAGE_MAGIC {
        return Err(Error::format(0, format!("bad image magic {magic}, expected {IDX_IMAGE_MAGIC}")));
    }
    let count = be_u32(bytes, 4, "item count")? as usize;
    let rows = be_u32(bytes, 8, "row count")? as usize;
    let cols = be_u32(bytes, 12, "column count")? as usize;
    if rows == 0 || cols == 0 {
        return Err(Error::format(8, format!("degenerate image shape {rows}x{cols}")));
    }
    let per = rows * cols;
    check_payload(bytes, 16, count.checked_mul(per).ok_or_else(|| Error::format(4, "header dimensions overflow"))?)?;
    Ok(bytes[16..]
        .chunks_exact(per)
        .map(|px| Array2::from_shape_fn((rows, cols), |(y, x)| f64::from(px[y * cols + x]) / 255.0))
        .collect())
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    let magic = be_u32(bytes, 0, "magic")?;
    if magic != IDX_LABEL_MAGIC {
        return Err(Error::format(0, format!("bad label magic {magic}, expected {IDX_LABEL_MAGIC}")));
    }
    let count = be_u32(bytes, 4, "item count")? as usize;
    check_payload(bytes, 8, count)?;
    bytes[8..]
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            if l > 9 {
                Err(Error::format((8 + i) as u64, format!("label {l} outside 0..=9")))
            } else {
                Ok(l as usize)
            }
        })
        .collect()
}

/// Loads an image/label file pair. Every item is tagged as training data.
pub fn load_mnist(images_path: &Path, labels_path: &Path) -> Result<LabeledDataset> {
    let images = parse_idx_images(&fs::read(images_path)?)?;
    let labels = parse_idx_labels(&fs::read(labels_path)?)?;
    if images.len() != labels.len() {
        return Err(Error::format(4, format!("{} images but {} labels", images.len(), labels.len())));
    }
    let split = vec![Split::Train; images.len()];
    let mut ds = LabeledDataset::new(images.into_iter().map(Image::Gray).collect(), labels, split)?;
    ds.class_names = Some((0..10).map(|d| d.to_string()).collect());
    Ok(ds)
}

fn find(dir: &Path, names: &[&str]) -> Result<PathBuf> {
    names
        .iter()
        .map(|n| dir.join(n))
        .find(|p| p.is_file())
        .ok_or_else(|| Error::Io(std::io::Error::new(std::io::ErrorKind::NotFound, format!("none of {names:?} in {}", dir.display()))))
}

/// Loads the canonical four files from `dir`: the `train-*` pair tagged as
/// training data and the `t10k-*` pair as test data.
pub fn load_mnist_dir(dir: &Path) -> Result<LabeledDataset> {
    let train = load_mnist(
        &find(dir, &["train-images-idx3-ubyte", "train-images.idx3-ubyte"])?,
        &find(dir, &["train-labels-idx1-ubyte", "train-labels.idx1-ubyte"])?,
    )?;
    let mut test = load_mnist(
        &find(dir, &["t10k-images-idx3-ubyte", "t10k-images.idx3-ubyte"])?,
        &find(dir, &["t10k-labels-idx1-ubyte", "t10k-labels.idx1-ubyte"])?,
    )?;
    test.split.iter_mut().for_each(|s| *s = Split::Test);
    train.concat(test)
}
