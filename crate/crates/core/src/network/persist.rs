//! Little-endian model file.
//!
//! ```text
//! magic        4 bytes  "VNSN"
//! version      u32      1
//! variant      u8       0 simplified, 1 rbf, 2 md, 3 li, 4 li-dog-rgb
//! layer count  u8
//! per layer:
//!   grid         u32
//!   patch        u32
//!   in_channels  u32
//!   weights      f32 x (grid^2 * patch^2 * in_channels), neuron-major,
//!                neurons in raster order, each row laid out (dy, dx, channel)
//!   sigma        f32                       (rbf only)
//!   count        u64                       (md only)
//!   epsilon      f32                       (md only)
//!   mean         f32 x fan_in              (md only)
//!   variance     f32 x fan_in              (md only, already floored)
//! ```

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;

use super::{normalize_weights, LayerGeometry, LayerState, NetworkState, Variant};
use crate::error::{Error, Result};
use crate::learning::MahalanobisStats;

pub const MODEL_MAGIC: &[u8; 4] = b"VNSN";
pub const MODEL_VERSION: u32 = 1;

pub fn write_model(net: &NetworkState, out: &mut impl Write) -> Result<()> {
    out.write_all(MODEL_MAGIC)?;
    out.write_u32::<LittleEndian>(MODEL_VERSION)?;
    out.write_u8(net.variant.tag())?;
    let count = u8::try_from(net.layers.len()).map_err(|_| Error::Structure("more than 255 layers".into()))?;
    out.write_u8(count)?;
    for layer in &net.layers {
        let g = layer.geometry;
        for v in [g.grid, g.patch, g.in_channels] {
            out.write_u32::<LittleEndian>(v as u32)?;
        }
        for &w in layer.weights.iter() {
            out.write_f32::<LittleEndian>(w as f32)?;
        }
        if net.variant == Variant::Rbf {
            let sigma = layer.rbf_sigma.ok_or_else(|| Error::Structure("RBF layer without sigma".into()))?;
            out.write_f32::<LittleEndian>(sigma as f32)?;
        }
        if net.variant == Variant::Md {
            let stats = layer.md_stats.as_ref().ok_or_else(|| Error::Structure("MD layer without statistics".into()))?;
            out.write_u64::<LittleEndian>(stats.count())?;
            out.write_f32::<LittleEndian>(stats.epsilon() as f32)?;
            for &m in stats.mean() {
                out.write_f32::<LittleEndian>(m as f32)?;
            }
            for v in stats.variance() {
                out.write_f32::<LittleEndian>(v as f32)?;
            }
        }
    }
    Ok(())
}

/// Writes to a sibling temporary file and renames it into place, so a failed
/// write never leaves a partial model behind.
pub fn save_model(net: &NetworkState, path: &Path) -> Result<()> {
    let tmp = path.with_extension("partial");
    let result = (|| {
        let mut out = BufWriter::new(File::create(&tmp)?);
        write_model(net, &mut out)?;
        out.flush()?;
        Ok(())
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(e);
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

struct CountingReader<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> Read for CountingReader<R> {
    fn read(&mut self, buf: &mut [u8]) -> std::io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.offset += n as u64;
        Ok(n)
    }
}

impl<R: Read> CountingReader<R> {
    fn u32(&mut self, what: &str) -> Result<u32> {
        let at = self.offset;
        self.read_u32::<LittleEndian>().map_err(|_| Error::format(at, format!("truncated while reading {what}")))
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        let at = self.offset;
        self.read_u8().map_err(|_| Error::format(at, format!("truncated while reading {what}")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        let at = self.offset;
        self.read_u64::<LittleEndian>().map_err(|_| Error::format(at, format!("truncated while reading {what}")))
    }

    fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let at = self.offset;
        let mut raw = vec![0f32; n];
        self.read_f32_into::<LittleEndian>(&mut raw)
            .map_err(|_| Error::format(at, format!("truncated while reading {what}")))?;
        Ok(raw.into_iter().map(f64::from).collect())
    }
}

/// Parses a model. Weight rows are renormalized in double precision after
/// the f32 round trip. Inhibition settings are not stored and come back as
/// defaults.
pub fn read_model(input: impl Read) -> Result<NetworkState> {
    let mut r = CountingReader { inner: input, offset: 0 };
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| Error::format(0, "truncated magic"))?;
    if &magic != MODEL_MAGIC {
        return Err(Error::format(0, format!("bad magic {magic:?}")));
    }
    let version = r.u32("version")?;
    if version != MODEL_VERSION {
        return Err(Error::format(4, format!("unsupported model version {version}")));
    }
    let tag = r.u8("variant")?;
    let variant = Variant::from_tag(tag).ok_or_else(|| Error::format(8, format!("unknown variant tag {tag}")))?;
    let count = r.u8("layer count")? as usize;
    if count == 0 {
        return Err(Error::format(9, "model has no layers"));
    }
    let mut layers = Vec::with_capacity(count);
    for _ in 0..count {
        let at = r.offset;
        let geometry = LayerGeometry {
            grid: r.u32("grid")? as usize,
            patch: r.u32("patch")? as usize,
            in_channels: r.u32("in_channels")? as usize,
        };
        geometry.validate().map_err(|e| Error::format(at, e.to_string()))?;
        let (rows, cols) = (geometry.neurons(), geometry.fan_in());
        let at = r.offset;
        let flat = r.f32s(rows * cols, "weights")?;
        let mut weights = Array2::from_shape_vec((rows, cols), flat).expect("sized by geometry");
        for mut row in weights.rows_mut() {
            let unit = normalize_weights(row.as_slice().expect("row-major")).map_err(|_| Error::format(at, "zero weight row"))?;
            row.as_slice_mut().expect("row-major").copy_from_slice(&unit);
        }
        let mut layer = LayerState { geometry, weights, traces: vec![0.0; rows], rbf_sigma: None, md_stats: None };
        if variant == Variant::Rbf {
            layer.rbf_sigma = Some(r.f32s(1, "sigma")?[0]);
        }
        if variant == Variant::Md {
            let seen = r.u64("stats count")?;
            let at = r.offset;
            let epsilon = r.f32s(1, "epsilon")?[0];
            let mean = r.f32s(cols, "stats mean")?;
            let var = r.f32s(cols, "stats variance")?;
            let stats = MahalanobisStats::from_parts(mean, var, seen, epsilon).map_err(|e| Error::format(at, e.to_string()))?;
            layer.md_stats = Some(stats);
        }
        layers.push(layer);
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(Error::format(r.offset - 1, "trailing bytes after last layer"));
    }
    let net = NetworkState { layers, provenance: variant.provenance(), variant, inhibition: Default::default() };
    net.validate()?;
    Ok(net)
}

pub fn load_model(path: &Path) -> Result<NetworkState> {
    read_model(BufReader::new(File::open(path)?))
}
