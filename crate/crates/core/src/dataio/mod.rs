//! Datasets: IDX ingestion, the pixel transform, synthetic generators,
//! minibatching and image/matrix export.

pub mod idx;
pub mod matrix;
pub mod pgm;
pub mod synthetic;
pub mod transform;

use ndarray::{s, Array2, Axis};
use rand::seq::index;

use crate::error::{ensure, Result};
use crate::rng::{Purpose, StreamKey};

pub use idx::load_idx;
pub use pgm::{export_image_grid, export_receptive_fields};
pub use synthetic::{synthetic_dataset, SyntheticKind};

/// `N_s x N_v` samples in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Array2<f64>,
    pub image_shape: Option<(usize, usize)>,
    /// Kept for diagnostics only; training is unsupervised.
    pub labels: Option<Vec<u8>>,
    pub source: String,
}

impl Dataset {
    pub fn new(samples: Array2<f64>, image_shape: Option<(usize, usize)>, source: impl Into<String>) -> Result<Self> {
        let ds = Self {
            samples,
            image_shape,
            labels: None,
            source: source.into(),
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.samples.iter().all(|x| (-1.0..=1.0).contains(x)), || {
            format!("{}: samples must lie in [-1, 1]", self.source)
        })?;
        if let Some((r, c)) = self.image_shape {
            ensure(r * c == self.n_v(), || {
                format!("image shape {r}x{c} does not match n_v = {}", self.n_v())
            })?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_v(&self) -> usize {
        self.samples.ncols()
    }

    /// First `n` rows.
    pub fn head(&self, n: usize) -> Result<Dataset> {
        ensure(n <= self.len(), || format!("requested {n} rows of {}", self.len()))?;
        Ok(Dataset {
            samples: self.samples.slice(s![..n, ..]).to_owned(),
            image_shape: self.image_shape,
            labels: self.labels.as_ref().map(|l| l[..n].to_vec()),
            source: self.source.clone(),
        })
    }

    /// Split into the first `n_first` rows and the rest.
    pub fn split(&self, n_first: usize) -> Result<(Dataset, Dataset)> {
        ensure(n_first <= self.len(), || format!("cannot split {} rows at {n_first}", self.len()))?;
        let tail = Dataset {
            samples: self.samples.slice(s![n_first.., ..]).to_owned(),
            image_shape: self.image_shape,
            labels: self.labels.as_ref().map(|l| l[n_first..].to_vec()),
            source: self.source.clone(),
        };
        Ok((self.head(n_first)?, tail))
    }

    /// Image shape if known, else the most square factorisation of `n_v`.
    pub fn display_shape(&self) -> (usize, usize) {
        self.image_shape.unwrap_or_else(|| display_shape(self.n_v()))
    }
}

pub fn display_shape(n_v: usize) -> (usize, usize) {
    let mut r = (n_v as f64).sqrt().floor() as usize;
    while r > 1 && n_v % r != 0 {
        r -= 1;
    }
    (r.max(1), n_v / r.max(1))
}

/// Indices of `m` distinct rows, drawn uniformly without replacement as a
/// function of `(seed, epoch)`.
pub fn minibatch_indices(n_s: usize, m: usize, seed: u64, epoch: u64) -> Result<Vec<usize>> {
    ensure(m >= 1 && m <= n_s, || format!("minibatch of {m} from {n_s} rows"))?;
    let mut rng = StreamKey::new(seed, Purpose::Minibatch, epoch).rng(0);
    Ok(index::sample(&mut rng, n_s, m).into_vec())
}

pub fn minibatch(dataset: &Dataset, m: usize, seed: u64, epoch: u64) -> Result<Array2<f64>> {
    let idx = minibatch_indices(dataset.len(), m, seed, epoch)?;
    Ok(dataset.samples.select(Axis(0), &idx))
}
