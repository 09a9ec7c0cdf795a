//! Pixel containers shared by the loaders, generators, and the frontend.

use ndarray::{Array2, Array3, Axis};

/// A single image with values in `[0, 1]`.
///
/// RGB images are stored `height × width × 3` with planes in R, G, B order.
#[derive(Clone, Debug, PartialEq)]
pub enum Image {
    Gray(Array2<f64>),
    Rgb(Array3<f64>),
}

impl Image {
    pub fn height(&self) -> usize {
        match self {
            Image::Gray(a) => a.nrows(),
            Image::Rgb(a) => a.len_of(Axis(0)),
        }
    }

    pub fn width(&self) -> usize {
        match self {
            Image::Gray(a) => a.ncols(),
            Image::Rgb(a) => a.len_of(Axis(1)),
        }
    }

    pub fn is_rgb(&self) -> bool {
        matches!(self, Image::Rgb(_))
    }

    /// Luminance view: gray images are returned as-is, RGB images are averaged
    /// over their three planes.
    pub fn luminance(&self) -> Array2<f64> {
        match self {
            Image::Gray(a) => a.clone(),
            Image::Rgb(a) => mean_of_planes(a),
        }
    }

    /// Applies `f` to every plane independently.
    pub fn map_planes(&self, mut f: impl FnMut(&Array2<f64>) -> Array2<f64>) -> Image {
        match self {
            Image::Gray(a) => Image::Gray(f(a)),
            Image::Rgb(a) => {
                let planes: Vec<Array2<f64>> =
                    (0..a.len_of(Axis(2))).map(|c| f(&a.index_axis(Axis(2), c).to_owned())).collect();
                let views: Vec<_> = planes.iter().map(|p| p.view()).collect();
                Image::Rgb(ndarray::stack(Axis(2), &views).expect("planes share a shape"))
            }
        }
    }
}

/// Per-pixel `(R + G + B) / 3`.
pub(crate) fn mean_of_planes(rgb: &Array3<f64>) -> Array2<f64> {
    let (h, w, _) = rgb.dim();
    Array2::from_shape_fn((h, w), |(y, x)| (rgb[[y, x, 0]] + rgb[[y, x, 1]] + rgb[[y, x, 2]]) / 3.0)
}
