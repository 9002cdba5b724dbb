//! Binary greymap (PGM `P5`, maxval 255) output for samples and receptive
//! fields.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::ArrayView2;

use super::transform;
use crate::error::{ensure, Error, Result};
use crate::params::RestrictedParams;

/// A greyscale raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GreyImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GreyImage {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0usize;
        let mut fields = Vec::with_capacity(4);
        while fields.len() < 4 {
            while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
                if bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                } else {
                    pos += 1;
                }
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(Error::format(pos as u64, "PGM header truncated"));
            }
            fields.push((start, String::from_utf8_lossy(&bytes[start..pos]).into_owned()));
        }
        if fields[0].1 != "P5" {
            return Err(Error::format(0, format!("not a P5 greymap: {}", fields[0].1)));
        }
        let num = |(off, s): &(usize, String)| -> Result<usize> {
            s.parse()
                .map_err(|_| Error::format(*off as u64, format!("bad header number {s:?}")))
        };
        let (width, height, maxval) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
        if maxval != 255 {
            return Err(Error::format(fields[3].0 as u64, "only maxval 255 is supported"));
        }
        // exactly one whitespace byte separates the header from the raster
        pos += 1;
        let end = pos + width * height;
        if bytes.len() < end {
            return Err(Error::format(bytes.len() as u64, "PGM raster truncated"));
        }
        Ok(Self {
            width,
            height,
            pixels: bytes[pos..end].to_vec(),
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::decode(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

/// Tile rows of `values` (each reshaped to `tile`) into a grid with
/// `grid_cols` columns. Values go through `to_grey`; empty cells are 0.
fn tile<F: Fn(f64) -> u8>(
    values: ArrayView2<f64>,
    tile: (usize, usize),
    grid_cols: usize,
    to_grey: F,
) -> Result<GreyImage> {
    let (th, tw) = tile;
    ensure(th * tw == values.ncols(), || {
        format!("{} values cannot be shaped as {th}x{tw}", values.ncols())
    })?;
    ensure(grid_cols >= 1, || "grid needs at least one column".to_string())?;
    let n = values.nrows();
    let grid_rows = n.div_ceil(grid_cols).max(1);
    let width = grid_cols * tw;
    let height = grid_rows * th;
    let mut pixels = vec![0u8; width * height];
    for (k, row) in values.rows().into_iter().enumerate() {
        let (gr, gc) = (k / grid_cols, k % grid_cols);
        for r in 0..th {
            for c in 0..tw {
                pixels[(gr * th + r) * width + gc * tw + c] = to_grey(row[r * tw + c]);
            }
        }
    }
    Ok(GreyImage {
        width,
        height,
        pixels,
    })
}

/// Samples in `[-1, 1]` mapped back to grey levels and laid out in a grid.
pub fn image_grid(samples: ArrayView2<f64>, image_shape: (usize, usize), grid_cols: usize) -> Result<GreyImage> {
    tile(samples, image_shape, grid_cols, transform::to_pixel)
}

pub fn export_image_grid(
    samples: ArrayView2<f64>,
    image_shape: (usize, usize),
    grid_cols: usize,
    path: &Path,
) -> Result<()> {
    image_grid(samples, image_shape, grid_cols)?.write(path)
}

/// Scale bounds of an exported receptive-field image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldScale {
    pub min: f64,
    pub max: f64,
    pub g: f64,
}

impl FieldScale {
    pub fn sidecar_text(&self) -> String {
        format!("min={} max={} g={}\n", self.min, self.max, self.g)
    }

    pub fn parse_sidecar(text: &str) -> Option<Self> {
        let mut min = None;
        let mut max = None;
        let mut g = None;
        for part in text.split_whitespace() {
            let (k, v) = part.split_once('=')?;
            let v: f64 = v.parse().ok()?;
            match k {
                "min" => min = Some(v),
                "max" => max = Some(v),
                "g" => g = Some(v),
                _ => return None,
            }
        }
        Some(Self {
            min: min?,
            max: max?,
            g: g?,
        })
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("scale.txt")
}

/// Couplings `W_ia + A_ia` from hidden unit `a` to every visible unit, one
/// row per requested unit, divided by `g` (when `g > 0`).
pub fn receptive_fields(params: &RestrictedParams, neurons: &[usize]) -> Result<ndarray::Array2<f64>> {
    let n_h = params.n_h();
    for &a in neurons {
        ensure(a < n_h, || format!("hidden index {a} out of range (n_h = {n_h})"))?;
    }
    let div = if params.g > 0.0 { params.g } else { 1.0 };
    Ok(ndarray::Array2::from_shape_fn((neurons.len(), params.n_v()), |(k, i)| {
        let a = neurons[k];
        (params.w[[i, a]] + params.a[[i, a]]) / div
    }))
}

/// Write receptive fields as a grid image, linearly mapping
/// `[min, max]` of the scaled couplings onto `[0, 255]`, and record the
/// bounds in a sidecar text file next to `path`.
pub fn export_receptive_fields(
    params: &RestrictedParams,
    neurons: &[usize],
    image_shape: (usize, usize),
    path: &Path,
) -> Result<FieldScale> {
    ensure(!neurons.is_empty(), || "no neurons selected".to_string())?;
    let fields = receptive_fields(params, neurons)?;
    let min = fields.iter().copied().fold(f64::INFINITY, f64::min);
    let max = fields.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = max - min;
    let grid_cols = (neurons.len() as f64).sqrt().ceil() as usize;
    let img = tile(fields.view(), image_shape, grid_cols, |x| {
        if span > 0.0 {
            (255.0 * (x - min) / span).round().clamp(0.0, 255.0) as u8
        } else {
            0
        }
    })?;
    img.write(path)?;
    let scale = FieldScale { min, max, g: params.g };
    let side = sidecar_path(path);
    fs::write(&side, scale.sidecar_text()).map_err(|e| Error::io(side, e))?;
    Ok(scale)
}
