//! Pixel scale `[0, 255]` to activation scale `[-1, 1]` and back.

use crate::error::{ensure, Result};

/// `f(x) = 2x/255 - 1`.
pub fn forward(pixel: f64) -> Result<f64> {
    ensure((0.0..=255.0).contains(&pixel), || {
        format!("pixel value {pixel} outside [0, 255]")
    })?;
    Ok(2.0 * pixel / 255.0 - 1.0)
}

pub fn forward_byte(pixel: u8) -> f64 {
    2.0 * f64::from(pixel) / 255.0 - 1.0
}

/// `f^-1(y) = 255 (y + 1) / 2`, unclamped.
pub fn inverse(value: f64) -> f64 {
    255.0 * (value + 1.0) / 2.0
}

/// Inverse transform rounded to the nearest grey level and clamped to the
/// byte range.
pub fn to_pixel(value: f64) -> u8 {
    inverse(value).round().clamp(0.0, 255.0) as u8
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_and_midpoint() {
        assert_eq!(forward(0.0).unwrap(), -1.0);
        assert_eq!(forward(255.0).unwrap(), 1.0);
        assert_eq!(forward(127.5).unwrap(), 0.0);
        assert!(forward(-0.5).is_err());
        assert!(forward(255.01).is_err());
        assert!(forward(f64::NAN).is_err());
    }

    #[test]
    fn bytes_round_trip_exactly() {
        for p in 0..=255u8 {
            assert_eq!(to_pixel(forward_byte(p)), p);
            assert_eq!(forward(f64::from(p)).unwrap(), forward_byte(p));
        }
    }

    #[test]
    fn out_of_range_values_clamp() {
        assert_eq!(to_pixel(-3.0), 0);
        assert_eq!(to_pixel(2.0), 255);
        assert_eq!(to_pixel(0.0), 128);
        assert_eq!(to_pixel(-1e-9), 127);
    }
}
