//! Reader and writer for the IDX container used by the MNIST family.
//!
//! Layout: a big-endian magic `0x0000_08_nn` (unsigned-byte payload, `nn`
//! dimensions), `nn` big-endian `u32` sizes, then the raw bytes row-major.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use super::{transform, Dataset};
use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// A parsed unsigned-byte IDX payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::format(offset as u64, "file truncated inside header"))
}

/// Parse an IDX buffer whose magic must equal `expected_magic`. Bytes past
/// the declared payload are ignored.
pub fn parse(bytes: &[u8], expected_magic: u32) -> Result<IdxArray> {
    let magic = read_u32(bytes, 0)?;
    if magic != expected_magic {
        return Err(Error::format(
            0,
            format!("bad magic {magic:#010x}, expected {expected_magic:#010x}"),
        ));
    }
    let ndims = (magic & 0xff) as usize;
    let mut dims = Vec::with_capacity(ndims);
    for d in 0..ndims {
        dims.push(read_u32(bytes, 4 + 4 * d)? as usize);
    }
    let header = 4 + 4 * ndims;
    let len = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::format(4, "dimension product overflows"))?;
    let end = header
        .checked_add(len)
        .ok_or_else(|| Error::format(4, "dimension product overflows"))?;
    if bytes.len() < end {
        return Err(Error::format(
            bytes.len() as u64,
            format!("file truncated: payload needs {len} bytes after offset {header}"),
        ));
    }
    Ok(IdxArray {
        dims,
        data: bytes[header..end].to_vec(),
    })
}

pub fn encode(dims: &[usize], data: &[u8]) -> Vec<u8> {
    assert_eq!(dims.iter().product::<usize>(), data.len());
    let mut out = Vec::with_capacity(4 + 4 * dims.len() + data.len());
    out.extend_from_slice(&(0x0800u32 | dims.len() as u32).to_be_bytes());
    for &d in dims {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(data);
    out
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn write_images(path: &Path, count: usize, rows: usize, cols: usize, pixels: &[u8]) -> Result<()> {
    fs::write(path, encode(&[count, rows, cols], pixels)).map_err(|e| Error::io(path, e))
}

pub fn write_labels(path: &Path, labels: &[u8]) -> Result<()> {
    fs::write(path, encode(&[labels.len()], labels)).map_err(|e| Error::io(path, e))
}

/// Raw images as `(count, rows, cols, pixels)`.
pub fn read_images(path: &Path) -> Result<(usize, usize, usize, Vec<u8>)> {
    let arr = parse(&read_file(path)?, IMAGES_MAGIC)?;
    Ok((arr.dims[0], arr.dims[1], arr.dims[2], arr.data))
}

/// Load an image file (and optionally its labels) and map pixels to
/// `[-1, 1]`.
pub fn load_idx(images: &Path, labels: Option<&Path>) -> Result<Dataset> {
    let (count, rows, cols, pixels) = read_images(images)?;
    let samples = Array2::from_shape_vec((count, rows * cols), pixels)
        .expect("payload length checked by parse")
        .mapv(transform::forward_byte);
    let labels = match labels {
        Some(p) => {
            let arr = parse(&read_file(p)?, LABELS_MAGIC)?;
            if arr.dims[0] != count {
                return Err(Error::format(
                    4,
                    format!("{} labels for {count} images", arr.dims[0]),
                ));
            }
            Some(arr.data)
        }
        None => None,
    };
    Ok(Dataset {
        samples,
        image_shape: Some((rows, cols)),
        labels,
        source: images.display().to_string(),
    })
}
