//! Sample-quality indices: second-moment error, spectrum error,
//! reconstruction error and the adversarial accuracy error.
//!
//! All indices compare a generated set against a data set of the same
//! size. Lower is better; `0` means the compared statistics coincide.

use nalgebra::DMatrix;
use ndarray::{s, Array2, ArrayView2, Axis};
use rayon::prelude::*;

use crate::dynamics::{
    clamped_hidden_preactivation, clamped_visible_closed_form, activations, simulate_free,
};
use crate::error::{ensure, Result};
use crate::params::{Model, RestrictedParams, SimConfig};
use crate::rng::{standard_normal, Purpose, StreamKey};

/// Covariance with population normalisation:
/// `C_ij = <x_i x_j> - <x_i><x_j>` over the rows of `samples`.
pub fn covariance_matrix(samples: ArrayView2<f64>) -> Result<Array2<f64>> {
    let n = samples.nrows();
    ensure(n >= 2, || format!("covariance needs at least 2 rows, got {n}"))?;
    // Shifting by the first row first keeps constant columns exactly zero.
    let shifted = &samples - &samples.row(0);
    let mean = shifted.mean_axis(Axis(0)).expect("n >= 2");
    let centred = shifted - &mean;
    let mut c = centred.t().dot(&centred) / n as f64;
    let d = c.nrows();
    for i in 0..d {
        for j in 0..i {
            c[[i, j]] = c[[j, i]];
        }
    }
    Ok(c)
}

fn same_width(gen: &ArrayView2<f64>, data: &ArrayView2<f64>) -> Result<()> {
    ensure(gen.ncols() == data.ncols(), || {
        format!(
            "generated samples have {} columns, data has {}",
            gen.ncols(),
            data.ncols()
        )
    })
}

/// `E2 = 1/(N_v (N_v - 1)) * sum_{i<j} (C^G_ij - C^D_ij)^2`.
pub fn error_second_moment(gen: ArrayView2<f64>, data: ArrayView2<f64>) -> Result<f64> {
    same_width(&gen, &data)?;
    let n_v = gen.ncols();
    ensure(n_v >= 2, || "second-moment error needs N_v >= 2".to_string())?;
    let cg = covariance_matrix(gen)?;
    let cd = covariance_matrix(data)?;
    let mut acc = 0.0;
    for i in 0..n_v {
        for j in i + 1..n_v {
            acc += (cg[[i, j]] - cd[[i, j]]).powi(2);
        }
    }
    Ok(acc / (n_v * (n_v - 1)) as f64)
}

/// Singular values of `samples`, descending. There are `min(n, N_v)` of
/// them.
pub fn singular_values(samples: ArrayView2<f64>) -> Vec<f64> {
    let (n, d) = samples.dim();
    if n == 0 || d == 0 {
        return Vec::new();
    }
    let m = DMatrix::from_fn(n, d, |r, c| samples[[r, c]]);
    let mut s: Vec<f64> = m.singular_values().iter().map(|x| x.max(0.0)).collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// `Es = 1/n * sum_mu (s^G_mu - s^D_mu)^2` over the `min(n, N_v)` singular
/// values; both sets must be `n x N_v`.
pub fn error_spectrum(gen: ArrayView2<f64>, data: ArrayView2<f64>) -> Result<f64> {
    ensure(gen.dim() == data.dim(), || {
        format!("spectrum error needs equal shapes, got {:?} and {:?}", gen.dim(), data.dim())
    })?;
    ensure(gen.nrows() >= 1, || "spectrum error needs samples".to_string())?;
    let sg = singular_values(gen);
    let sd = singular_values(data);
    let acc: f64 = sg.iter().zip(&sd).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(acc / gen.nrows() as f64)
}

/// Nearest-neighbour fractions `(P_GG, P_DD)` on the stacked set
/// `[gen; data]`. Distances are squared Euclidean; a point is never its
/// own neighbour and ties go to the lowest stacked index.
pub fn nearest_neighbour_fractions(gen: ArrayView2<f64>, data: ArrayView2<f64>) -> Result<(f64, f64)> {
    same_width(&gen, &data)?;
    let n = gen.nrows();
    ensure(n >= 2 && data.nrows() == n, || {
        format!(
            "adversarial accuracy needs equal counts >= 2, got {} and {}",
            n,
            data.nrows()
        )
    })?;
    let stacked = ndarray::concatenate(Axis(0), &[gen, data]).expect("widths checked");
    let total = 2 * n;
    let same: Vec<bool> = (0..total)
        .into_par_iter()
        .map(|i| {
            let xi = stacked.row(i);
            let mut best = usize::MAX;
            let mut best_d = f64::INFINITY;
            for j in 0..total {
                if j == i {
                    continue;
                }
                let d: f64 = xi
                    .iter()
                    .zip(stacked.row(j).iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                if d < best_d {
                    best_d = d;
                    best = j;
                }
            }
            (i < n) == (best < n)
        })
        .collect();
    let p_gg = same[..n].iter().filter(|&&b| b).count() as f64 / n as f64;
    let p_dd = same[n..].iter().filter(|&&b| b).count() as f64 / n as f64;
    Ok((p_gg, p_dd))
}

/// `E_AAI = 0.5 [(P_GG - 0.5)^2 + (P_DD - 0.5)^2]`, in `[0, 0.25]`.
pub fn error_aai(gen: ArrayView2<f64>, data: ArrayView2<f64>) -> Result<f64> {
    let (p_gg, p_dd) = nearest_neighbour_fractions(gen, data)?;
    Ok(0.5 * ((p_gg - 0.5).powi(2) + (p_dd - 0.5).powi(2)))
}

/// Reconstruct `xi` through the hidden layer: clamp the visibles to `xi`
/// to get `h(T)`, then clamp the hiddens to `phi(h(T))` and return
/// `phi(v(T))`. Both stages relax for `cfg.t_target`.
pub fn reconstruct(
    params: &RestrictedParams,
    xi: ArrayView2<f64>,
    h0: ArrayView2<f64>,
    v0: ArrayView2<f64>,
    cfg: &SimConfig,
) -> Result<Array2<f64>> {
    let h = clamped_hidden_preactivation(params, xi, h0, cfg)?;
    clamped_visible_closed_form(params, activations(&h).view(), v0, cfg)
}

/// Mean squared reconstruction error over samples and visible sites.
/// Initial conditions are standard normal: row `r` draws `h0` then `v0`
/// from `key.rng(r)`.
pub fn error_reconstruction(
    model: &Model,
    data: ArrayView2<f64>,
    cfg: &SimConfig,
    key: &StreamKey,
) -> Result<f64> {
    let params = model.as_restricted("reconstruction error")?;
    let (h0, v0) = reconstruction_initial_state(params, data.nrows(), key);
    let rec = reconstruct(params, data, h0.view(), v0.view(), cfg)?;
    ensure(!rec.is_empty(), || "reconstruction error needs samples".to_string())?;
    Ok((&data - &rec).mapv(|x| x * x).mean().expect("non-empty"))
}

pub fn reconstruction_initial_state(
    params: &RestrictedParams,
    rows: usize,
    key: &StreamKey,
) -> (Array2<f64>, Array2<f64>) {
    let mut h0 = Array2::zeros((rows, params.n_h()));
    let mut v0 = Array2::zeros((rows, params.n_v()));
    for r in 0..rows {
        let mut rng = key.rng(r as u64);
        h0.row_mut(r).iter_mut().for_each(|x| *x = standard_normal(&mut rng));
        v0.row_mut(r).iter_mut().for_each(|x| *x = standard_normal(&mut rng));
    }
    (h0, v0)
}

/// The four indices at one evaluation time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub e2: f64,
    pub es: f64,
    /// Only defined for the restricted architecture.
    pub er: Option<f64>,
    pub eaai: f64,
    pub t_star: f64,
    pub n_samples: usize,
}

pub const CSV_HEADER: &str = "epoch,E2,Es,ER,EAAI,wall_seconds";

impl MetricReport {
    /// Indices from an already generated sample matrix.
    pub fn from_samples(
        gen: ArrayView2<f64>,
        data: ArrayView2<f64>,
        er: Option<f64>,
        t_star: f64,
    ) -> Result<Self> {
        Ok(Self {
            e2: error_second_moment(gen, data)?,
            es: error_spectrum(gen, data)?,
            er,
            eaai: error_aai(gen, data)?,
            t_star,
            n_samples: gen.nrows(),
        })
    }

    pub fn csv_row(&self, epoch: u64, wall_seconds: f64) -> String {
        let er = self.er.map(|x| format!("{x:e}")).unwrap_or_default();
        format!(
            "{epoch},{:e},{:e},{er},{:e},{wall_seconds:.3}",
            self.e2, self.es, self.eaai
        )
    }

    /// `key=value` lines for humans and scripts.
    pub fn to_key_values(&self) -> String {
        let er = self.er.map(|x| format!("{x:e}")).unwrap_or_else(|| "n/a".into());
        format!(
            "t_star={}\nn_samples={}\nE2={:e}\nEs={:e}\nER={er}\nEAAI={:e}\n",
            self.t_star, self.n_samples, self.e2, self.es, self.eaai
        )
    }
}

/// Generate `n_eval` free-run samples at `t_star` and score them against
/// the first `n_eval` rows of `data`. `key` seeds the generation; the
/// reconstruction stage uses the matching [`Purpose::Reconstruction`]
/// stream.
pub fn evaluate(
    model: &Model,
    data: ArrayView2<f64>,
    cfg: &SimConfig,
    t_star: f64,
    n_eval: usize,
    key: &StreamKey,
) -> Result<MetricReport> {
    ensure(n_eval >= 2 && n_eval <= data.nrows(), || {
        format!("n_eval = {n_eval} must be in [2, {}]", data.nrows())
    })?;
    ensure(data.ncols() == model.n_v(), || {
        format!("data has {} columns, model has {} visible units", data.ncols(), model.n_v())
    })?;
    let at = cfg.with_target(t_star);
    let held_out = data.slice(s![..n_eval, ..]);
    let gen = simulate_free(model, &at, n_eval, key)?;
    let er = match model {
        Model::Restricted(_) => {
            let rkey = StreamKey::new(key.seed, Purpose::Reconstruction, key.epoch);
            Some(error_reconstruction(model, held_out, &at, &rkey)?)
        }
        _ => None,
    };
    MetricReport::from_samples(gen.visible().view(), held_out, er, t_star)
}
