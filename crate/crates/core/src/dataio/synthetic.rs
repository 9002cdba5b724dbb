//! Small synthetic datasets for desk-scale runs.

use std::path::PathBuf;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{idx, transform, Dataset};
use crate::error::{ensure, Result};
use crate::rng::{standard_normal, Purpose, StreamKey, StreamRng};

/// Amplitude of the cluster centres `+-m*` of [`SyntheticKind::TwoClusters`].
pub const CLUSTER_AMPLITUDE: f64 = 0.6;

/// Side of the procedurally rendered digit images.
pub const DIGIT_SIDE: usize = 28;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "kebab-case")]
pub enum SyntheticKind {
    /// Points around `+m*` and `-m*` with i.i.d. Gaussian noise of standard
    /// deviation `noise` per component, clipped to `[-1, 1]`. Rows alternate
    /// between the two clusters.
    TwoClusters { noise: f64 },
    /// Full rows or full columns of a square grid set to random `+-1`.
    BarsAndStripes,
    /// 28x28 digit images block-averaged down to a `sqrt(n_v)` square grid.
    /// Images come from an IDX file when `source` is given and are rendered
    /// procedurally otherwise.
    DownscaledDigits {
        #[serde(default)]
        source: Option<PathBuf>,
    },
}

fn square_side(n_v: usize) -> Result<usize> {
    let side = (n_v as f64).sqrt().round() as usize;
    ensure(side * side == n_v && side > 0, || {
        format!("grid datasets need a square n_v, got {n_v}")
    })?;
    Ok(side)
}

pub fn synthetic_dataset(kind: &SyntheticKind, n_s: usize, n_v: usize, seed: u64) -> Result<Dataset> {
    ensure(n_s >= 1 && n_v >= 1, || "dataset dimensions must be >= 1".to_string())?;
    let key = StreamKey::new(seed, Purpose::Synthetic, 0);
    match kind {
        SyntheticKind::TwoClusters { noise } => {
            ensure(noise.is_finite() && *noise >= 0.0, || {
                format!("noise must be >= 0, got {noise}")
            })?;
            let mut rng = key.rng(0);
            let centre: Vec<f64> = (0..n_v)
                .map(|_| if rng.random::<bool>() { CLUSTER_AMPLITUDE } else { -CLUSTER_AMPLITUDE })
                .collect();
            let mut samples = Array2::zeros((n_s, n_v));
            for (mu, mut row) in samples.rows_mut().into_iter().enumerate() {
                let sign = if mu % 2 == 0 { 1.0 } else { -1.0 };
                let mut rng = key.rng(1 + mu as u64);
                for (x, m) in row.iter_mut().zip(&centre) {
                    let jitter = if *noise > 0.0 { noise * standard_normal(&mut rng) } else { 0.0 };
                    *x = (sign * m + jitter).clamp(-1.0, 1.0);
                }
            }
            Ok(Dataset {
                samples,
                image_shape: None,
                labels: Some((0..n_s).map(|mu| (mu % 2) as u8).collect()),
                source: format!("synthetic:two-clusters(noise={noise},seed={seed})"),
            })
        }
        SyntheticKind::BarsAndStripes => {
            let side = square_side(n_v)?;
            let mut samples = Array2::zeros((n_s, n_v));
            let mut labels = Vec::with_capacity(n_s);
            for (mu, mut row) in samples.rows_mut().into_iter().enumerate() {
                let mut rng = key.rng(mu as u64);
                let by_rows: bool = rng.random();
                let lines: Vec<f64> = (0..side)
                    .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
                    .collect();
                for r in 0..side {
                    for c in 0..side {
                        row[r * side + c] = if by_rows { lines[r] } else { lines[c] };
                    }
                }
                labels.push(by_rows as u8);
            }
            Ok(Dataset {
                samples,
                image_shape: Some((side, side)),
                labels: Some(labels),
                source: format!("synthetic:bars-and-stripes(seed={seed})"),
            })
        }
        SyntheticKind::DownscaledDigits { source } => {
            let side = square_side(n_v)?;
            let (images, rows, cols, labels, origin) = match source {
                Some(path) => {
                    let (count, rows, cols, pixels) = idx::read_images(path)?;
                    ensure(count >= n_s, || {
                        format!("{} holds {count} images, {n_s} requested", path.display())
                    })?;
                    let pixels = pixels[..n_s * rows * cols].to_vec();
                    (pixels, rows, cols, None, path.display().to_string())
                }
                None => {
                    let (pixels, labels) = render_digits(n_s, &key);
                    (pixels, DIGIT_SIDE, DIGIT_SIDE, Some(labels), "procedural".to_string())
                }
            };
            let mut samples = Array2::zeros((n_s, n_v));
            for (mu, mut row) in samples.rows_mut().into_iter().enumerate() {
                let img: Vec<f64> = images[mu * rows * cols..(mu + 1) * rows * cols]
                    .iter()
                    .map(|&p| f64::from(p))
                    .collect();
                let small = area_resize(&img, rows, cols, side, side);
                for (x, p) in row.iter_mut().zip(small) {
                    *x = transform::forward(p.clamp(0.0, 255.0))?;
                }
            }
            Ok(Dataset {
                samples,
                image_shape: Some((side, side)),
                labels,
                source: format!("synthetic:downscaled-digits({origin},seed={seed})"),
            })
        }
    }
}

/// Per-axis overlap weights: `w[o][i]` is the fraction of output cell `o`
/// covered by input cell `i`.
fn overlap_weights(n_in: usize, n_out: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = n_in as f64 / n_out as f64;
    (0..n_out)
        .map(|o| {
            let lo = o as f64 * scale;
            let hi = (o + 1) as f64 * scale;
            let first = lo.floor() as usize;
            let last = (hi.ceil() as usize).min(n_in);
            (first..last)
                .filter_map(|i| {
                    let overlap = (hi.min(i as f64 + 1.0) - lo.max(i as f64)).max(0.0);
                    (overlap > 0.0).then_some((i, overlap / scale))
                })
                .collect()
        })
        .collect()
}

/// Area-weighted resampling of a row-major image. Each output pixel is the
/// mean of the input area it covers, so the image mean is preserved.
pub fn area_resize(img: &[f64], rows: usize, cols: usize, out_rows: usize, out_cols: usize) -> Vec<f64> {
    assert_eq!(img.len(), rows * cols);
    let wr = overlap_weights(rows, out_rows);
    let wc = overlap_weights(cols, out_cols);
    let mut out = vec![0.0; out_rows * out_cols];
    for (r, row_w) in wr.iter().enumerate() {
        for (c, col_w) in wc.iter().enumerate() {
            let mut acc = 0.0;
            for &(i, a) in row_w {
                for &(j, b) in col_w {
                    acc += a * b * img[i * cols + j];
                }
            }
            out[r * out_cols + c] = acc;
        }
    }
    out
}

type Stroke = &'static [(f64, f64)];

fn ellipse(cx: f64, cy: f64, rx: f64, ry: f64) -> Vec<(f64, f64)> {
    (0..=24)
        .map(|k| {
            let a = k as f64 / 24.0 * std::f64::consts::TAU;
            (cx + rx * a.cos(), cy + ry * a.sin())
        })
        .collect()
}

fn digit_strokes(d: u8) -> Vec<Vec<(f64, f64)>> {
    const ONE: Stroke = &[(0.38, 0.22), (0.52, 0.1), (0.52, 0.9)];
    const TWO: Stroke = &[
        (0.22, 0.28), (0.32, 0.13), (0.5, 0.08), (0.68, 0.13), (0.76, 0.3),
        (0.68, 0.48), (0.22, 0.9), (0.8, 0.9),
    ];
    const THREE: Stroke = &[
        (0.24, 0.15), (0.5, 0.08), (0.73, 0.2), (0.7, 0.38), (0.45, 0.48),
        (0.73, 0.58), (0.76, 0.78), (0.5, 0.92), (0.22, 0.85),
    ];
    const FOUR: Stroke = &[(0.64, 0.9), (0.64, 0.1), (0.2, 0.65), (0.8, 0.65)];
    const FIVE: Stroke = &[
        (0.76, 0.1), (0.32, 0.1), (0.27, 0.45), (0.55, 0.4), (0.76, 0.55),
        (0.74, 0.8), (0.5, 0.92), (0.24, 0.85),
    ];
    const SIX: Stroke = &[
        (0.7, 0.1), (0.42, 0.28), (0.27, 0.58), (0.31, 0.84), (0.5, 0.92),
        (0.7, 0.8), (0.71, 0.6), (0.5, 0.5), (0.29, 0.6),
    ];
    const SEVEN: Stroke = &[(0.22, 0.1), (0.78, 0.1), (0.42, 0.9)];
    const NINE_TAIL: Stroke = &[(0.72, 0.33), (0.62, 0.9)];
    match d {
        0 => vec![ellipse(0.5, 0.5, 0.26, 0.4)],
        1 => vec![ONE.to_vec()],
        2 => vec![TWO.to_vec()],
        3 => vec![THREE.to_vec()],
        4 => vec![FOUR.to_vec()],
        5 => vec![FIVE.to_vec()],
        6 => vec![SIX.to_vec()],
        7 => vec![SEVEN.to_vec()],
        8 => vec![ellipse(0.5, 0.29, 0.19, 0.19), ellipse(0.5, 0.7, 0.24, 0.22)],
        _ => vec![ellipse(0.5, 0.33, 0.22, 0.22), NINE_TAIL.to_vec()],
    }
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (qx, qy) = (a.0 + t * dx - p.0, a.1 + t * dy - p.1);
    (qx * qx + qy * qy).sqrt()
}

/// One anti-aliased 28x28 digit with random scale, shift, slant and pen
/// width.
fn render_digit(d: u8, rng: &mut StreamRng) -> Vec<u8> {
    let scale = rng.random_range(0.8..1.0);
    let shift = (rng.random_range(-0.06..0.06), rng.random_range(-0.06..0.06));
    let slant = rng.random_range(-0.2..0.2);
    let pen = rng.random_range(0.045..0.08);
    let strokes: Vec<Vec<(f64, f64)>> = digit_strokes(d)
        .into_iter()
        .map(|s| {
            s.into_iter()
                .map(|(x, y)| {
                    let (x, y) = (x - 0.5, y - 0.5);
                    (0.5 + scale * (x - slant * y) + shift.0, 0.5 + scale * y + shift.1)
                })
                .collect()
        })
        .collect();
    let px = 1.0 / DIGIT_SIDE as f64;
    let mut out = vec![0u8; DIGIT_SIDE * DIGIT_SIDE];
    for r in 0..DIGIT_SIDE {
        for c in 0..DIGIT_SIDE {
            let p = ((c as f64 + 0.5) * px, (r as f64 + 0.5) * px);
            let dist = strokes
                .iter()
                .flat_map(|s| s.windows(2).map(move |w| segment_distance(p, w[0], w[1])))
                .fold(f64::INFINITY, f64::min);
            let ink = (1.0 - (dist - pen) / px).clamp(0.0, 1.0);
            out[r * DIGIT_SIDE + c] = (255.0 * ink).round() as u8;
        }
    }
    out
}

/// `n` procedural digits (classes cycling 0..9) and their labels.
pub fn render_digits(n: usize, key: &StreamKey) -> (Vec<u8>, Vec<u8>) {
    let mut pixels = Vec::with_capacity(n * DIGIT_SIDE * DIGIT_SIDE);
    let mut labels = Vec::with_capacity(n);
    for mu in 0..n {
        let d = (mu % 10) as u8;
        let mut rng = key.rng(1_000_000 + mu as u64);
        pixels.extend(render_digit(d, &mut rng));
        labels.push(d);
    }
    (pixels, labels)
}
