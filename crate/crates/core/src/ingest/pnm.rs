//! Binary Netpbm: P5 (gray) and P6 (RGB), maxval 255 only.

use std::fs;
use std::path::Path;

use ndarray::{Array2, Array3, Axis};

use crate::error::{Error, Result};
use crate::image::Image;

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn encode_pnm(image: &Image) -> Result<Vec<u8>> {
    let (h, w) = (image.height(), image.width());
    let mut out = match image {
        Image::Gray(_) => format!("P5\n{w} {h}\n255\n").into_bytes(),
        Image::Rgb(a) => {
            if a.len_of(Axis(2)) != 3 {
                return Err(Error::param("image", "PPM output needs exactly 3 planes"));
            }
            format!("P6\n{w} {h}\n255\n").into_bytes()
        }
    };
    match image {
        Image::Gray(a) => out.extend(a.iter().map(|&v| quantize(v))),
        Image::Rgb(a) => out.extend(a.iter().map(|&v| quantize(v))),
    }
    Ok(out)
}

pub fn write_pnm(path: &Path, image: &Image) -> Result<()> {
    fs::write(path, encode_pnm(image)?)?;
    Ok(())
}

struct Header {
    planes: usize,
    width: usize,
    height: usize,
    data_start: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let planes = match bytes.get(0..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        Some(m) => return Err(Error::format(0, format!("unsupported magic {:?}", String::from_utf8_lossy(m)))),
        None => return Err(Error::format(0, "truncated magic")),
    };
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for (k, field) in fields.iter_mut().enumerate() {
        // whitespace and `#` comments may precede every header field
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(Error::format(pos as u64, "truncated header")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::format(pos as u64, "expected a decimal header field"));
        }
        let text = std::str::from_utf8(&bytes[start..pos]).expect("ascii digits");
        *field = text.parse().map_err(|_| Error::format(start as u64, format!("header field `{text}` out of range")))?;
        if k < 2 && *field == 0 {
            return Err(Error::format(start as u64, "zero image dimension"));
        }
    }
    if fields[2] != 255 {
        return Err(Error::format(pos as u64, format!("unsupported maxval {}, only 255 is accepted", fields[2])));
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(Error::format(pos as u64, "missing whitespace before raster")),
    }
    Ok(Header { planes, width: fields[0], height: fields[1], data_start: pos })
}

pub fn decode_pnm(bytes: &[u8]) -> Result<Image> {
    let h = parse_header(bytes)?;
    let expected = h.width * h.height * h.planes;
    let raster = &bytes[h.data_start..];
    if raster.len() < expected {
        return Err(Error::format(bytes.len() as u64, format!("raster truncated: {} of {expected} bytes", raster.len())));
    }
    let scale = |b: u8| f64::from(b) / 255.0;
    Ok(if h.planes == 1 {
        Image::Gray(Array2::from_shape_fn((h.height, h.width), |(y, x)| scale(raster[y * h.width + x])))
    } else {
        Image::Rgb(Array3::from_shape_fn((h.height, h.width, 3), |(y, x, c)| scale(raster[(y * h.width + x) * 3 + c])))
    })
}

pub fn read_pnm(path: &Path) -> Result<Image> {
    decode_pnm(&fs::read(path)?)
}
