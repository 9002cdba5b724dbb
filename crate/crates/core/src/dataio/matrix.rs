//! Raw matrix dumps: a 16-byte header (8-byte magic, `u32` rows, `u32`
//! cols, little-endian) followed by row-major little-endian `f64` values.

use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

pub const MATRIX_MAGIC: &[u8; 8] = b"CGMATF64";

pub fn encode_matrix(m: ArrayView2<f64>) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 8 * m.len());
    out.extend_from_slice(MATRIX_MAGIC);
    out.extend_from_slice(&(m.nrows() as u32).to_le_bytes());
    out.extend_from_slice(&(m.ncols() as u32).to_le_bytes());
    for x in m.iter() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn decode_matrix(bytes: &[u8]) -> Result<Array2<f64>> {
    if bytes.len() < 16 {
        return Err(Error::format(bytes.len() as u64, "matrix header truncated"));
    }
    if &bytes[..8] != MATRIX_MAGIC {
        return Err(Error::format(0, "bad matrix magic"));
    }
    let rows = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let need = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| Error::format(8, "matrix dimensions overflow"))?;
    if bytes.len() != 16 + need {
        return Err(Error::format(
            bytes.len().min(16 + need) as u64,
            format!("expected {need} payload bytes, found {}", bytes.len() - 16),
        ));
    }
    let data = bytes[16..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Array2::from_shape_vec((rows, cols), data).expect("length checked"))
}

pub fn write_matrix(path: &Path, m: ArrayView2<f64>) -> Result<()> {
    fs::write(path, encode_matrix(m)).map_err(|e| Error::io(path, e))
}

pub fn read_matrix(path: &Path) -> Result<Array2<f64>> {
    decode_matrix(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn round_trip(rows in 0usize..6, cols in 0usize..6, seed in any::<u64>()) {
            let m = Array2::from_shape_fn((rows, cols), |(r, c)| {
                f64::from_bits(seed.rotate_left((r * 7 + c) as u32) >> 2)
            });
            let bytes = encode_matrix(m.view());
            prop_assert_eq!(bytes.len(), 16 + 8 * rows * cols);
            let back = decode_matrix(&bytes).unwrap();
            prop_assert_eq!(encode_matrix(back.view()), bytes);
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(decode_matrix(b"short").is_err());
        let mut bytes = encode_matrix(Array2::<f64>::zeros((2, 2)).view());
        bytes.pop();
        assert!(decode_matrix(&bytes).is_err());
        bytes[0] = b'X';
        assert!(decode_matrix(&bytes).is_err());
    }
}
