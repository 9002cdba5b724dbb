//! Model parameters for the three architectures and the integration config.
//!
//! Stored matrices keep unit-order entries; the `1/sqrt(N)` factors of the
//! equations of motion are applied when the effective couplings are built
//! (see [`Couplings`]).

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::rng::{standard_normal, Purpose, StreamKey};

/// Euler integration settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Integration timestep.
    pub dt: f64,
    /// Intrinsic timescale of every neuron.
    pub tau: f64,
    /// Horizon `T` at which activations are harvested.
    pub t_target: f64,
}

impl SimConfig {
    pub fn new(dt: f64, tau: f64, t_target: f64) -> Result<Self> {
        let cfg = Self { dt, tau, t_target };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Settings of the generative runs in the reference experiments.
    pub fn reference() -> Self {
        Self {
            dt: 1.0,
            tau: 10.0,
            t_target: 100.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.dt.is_finite() && self.dt > 0.0, || {
            format!("dt must be positive, got {}", self.dt)
        })?;
        ensure(self.tau.is_finite() && self.tau > 0.0, || {
            format!("tau must be positive, got {}", self.tau)
        })?;
        self.steps_to(self.t_target).map(|_| ())
    }

    /// Same timestep and timescale, different horizon.
    pub fn with_target(&self, t_target: f64) -> Self {
        Self { t_target, ..*self }
    }

    /// Number of Euler steps needed to reach `t`. Horizons that are not an
    /// integer multiple of `dt` are rejected.
    pub fn steps_to(&self, t: f64) -> Result<usize> {
        ensure(t.is_finite() && t >= 0.0, || {
            format!("target time must be non-negative, got {t}")
        })?;
        let n = (t / self.dt).round();
        let tol = 1e-9 * t.abs().max(1.0);
        ensure((n * self.dt - t).abs() <= tol, || {
            format!("target time {t} is not a multiple of dt = {}", self.dt)
        })?;
        Ok(n as usize)
    }

    pub fn steps(&self) -> Result<usize> {
        self.steps_to(self.t_target)
    }

    /// `dt / tau`, the Euler relaxation rate.
    pub fn rate(&self) -> f64 {
        self.dt / self.tau
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    Unrestricted,
    Restricted,
    Deep,
}

impl Architecture {
    pub fn name(self) -> &'static str {
        match self {
            Architecture::Unrestricted => "unrestricted",
            Architecture::Restricted => "restricted",
            Architecture::Deep => "deep",
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            Architecture::Unrestricted => 1,
            Architecture::Restricted => 2,
            Architecture::Deep => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            1 => Some(Architecture::Unrestricted),
            2 => Some(Architecture::Restricted),
            3 => Some(Architecture::Deep),
            _ => None,
        }
    }
}

/// A single recurrently connected layer: fixed random `J`, trainable
/// symmetric `A` and field `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnrestrictedParams {
    pub g: f64,
    pub j: Array2<f64>,
    pub a: Array2<f64>,
    pub b: Array1<f64>,
}

/// Visible and hidden layers with asymmetric fixed couplings `W`
/// (hidden to visible) and `W_tilde` (visible to hidden). The trainable
/// `A` (n_v x n_h) enters the visible equation as `A` and the hidden one
/// as `A^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct RestrictedParams {
    pub g: f64,
    pub w: Array2<f64>,
    pub w_tilde: Array2<f64>,
    pub a: Array2<f64>,
    pub b: Array1<f64>,
    pub c: Array1<f64>,
}

/// Three stacked layers `v - h1 - h2`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeepParams {
    pub g: f64,
    pub w1: Array2<f64>,
    pub w1_tilde: Array2<f64>,
    pub w2: Array2<f64>,
    pub w2_tilde: Array2<f64>,
    pub a1: Array2<f64>,
    pub a2: Array2<f64>,
    pub b: Array1<f64>,
    pub c: Array1<f64>,
    pub d: Array1<f64>,
}

fn check_dims(dims: &[usize], g: f64) -> Result<()> {
    for (i, &n) in dims.iter().enumerate() {
        ensure(n >= 1, || format!("layer {i} dimension must be >= 1"))?;
    }
    ensure(g.is_finite() && g >= 0.0, || {
        format!("gain g must be finite and >= 0, got {g}")
    })
}

/// Gaussian matrix with mean 0 and variance `g`, drawn row-major from
/// its own stream so every fixed matrix is an independent draw.
fn gaussian_matrix(rows: usize, cols: usize, g: f64, seed: u64, id: u64) -> Array2<f64> {
    if g == 0.0 {
        return Array2::zeros((rows, cols));
    }
    let std = g.sqrt();
    let mut rng = StreamKey::new(seed, Purpose::Init, 0).rng(id);
    Array2::from_shape_simple_fn((rows, cols), || std * standard_normal(&mut rng))
}

impl UnrestrictedParams {
    pub fn init(n_v: usize, g: f64, seed: u64) -> Result<Self> {
        check_dims(&[n_v], g)?;
        Ok(Self {
            g,
            j: gaussian_matrix(n_v, n_v, g, seed, 0),
            a: Array2::zeros((n_v, n_v)),
            b: Array1::zeros(n_v),
        })
    }

    pub fn n_v(&self) -> usize {
        self.b.len()
    }
}

impl RestrictedParams {
    pub fn init(n_v: usize, n_h: usize, g: f64, seed: u64) -> Result<Self> {
        check_dims(&[n_v, n_h], g)?;
        Ok(Self {
            g,
            w: gaussian_matrix(n_v, n_h, g, seed, 0),
            w_tilde: gaussian_matrix(n_h, n_v, g, seed, 1),
            a: Array2::zeros((n_v, n_h)),
            b: Array1::zeros(n_v),
            c: Array1::zeros(n_h),
        })
    }

    pub fn n_v(&self) -> usize {
        self.b.len()
    }

    pub fn n_h(&self) -> usize {
        self.c.len()
    }

    /// Effective visible-to-hidden matrix `(W_tilde^T + A) / sqrt(N_v)`,
    /// shaped n_v x n_h so that `drive_h = phi(v) . K`.
    pub(crate) fn hidden_from_visible(&self) -> Array2<f64> {
        let s = 1.0 / (self.n_v() as f64).sqrt();
        (&self.w_tilde.t() + &self.a) * s
    }

    /// Effective hidden-to-visible matrix `(W + A)^T / sqrt(N_h)`,
    /// shaped n_h x n_v.
    pub(crate) fn visible_from_hidden(&self) -> Array2<f64> {
        let s = 1.0 / (self.n_h() as f64).sqrt();
        (&self.w + &self.a).t().to_owned() * s
    }
}

impl DeepParams {
    pub fn init(n_v: usize, n_h1: usize, n_h2: usize, g: f64, seed: u64) -> Result<Self> {
        check_dims(&[n_v, n_h1, n_h2], g)?;
        Ok(Self {
            g,
            w1: gaussian_matrix(n_v, n_h1, g, seed, 0),
            w1_tilde: gaussian_matrix(n_h1, n_v, g, seed, 1),
            w2: gaussian_matrix(n_h1, n_h2, g, seed, 2),
            w2_tilde: gaussian_matrix(n_h2, n_h1, g, seed, 3),
            a1: Array2::zeros((n_v, n_h1)),
            a2: Array2::zeros((n_h1, n_h2)),
            b: Array1::zeros(n_v),
            c: Array1::zeros(n_h1),
            d: Array1::zeros(n_h2),
        })
    }

    pub fn n_v(&self) -> usize {
        self.b.len()
    }

    pub fn n_h1(&self) -> usize {
        self.c.len()
    }

    pub fn n_h2(&self) -> usize {
        self.d.len()
    }
}

/// Any of the three architectures.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Unrestricted(UnrestrictedParams),
    Restricted(RestrictedParams),
    Deep(DeepParams),
}

impl From<UnrestrictedParams> for Model {
    fn from(p: UnrestrictedParams) -> Self {
        Model::Unrestricted(p)
    }
}

impl From<RestrictedParams> for Model {
    fn from(p: RestrictedParams) -> Self {
        Model::Restricted(p)
    }
}

impl From<DeepParams> for Model {
    fn from(p: DeepParams) -> Self {
        Model::Deep(p)
    }
}

impl Model {
    /// Build a fresh, untrained model. `dims` lists the layer sizes from
    /// the visible layer inward and must match the architecture.
    pub fn init(arch: Architecture, dims: &[usize], g: f64, seed: u64) -> Result<Self> {
        match (arch, dims) {
            (Architecture::Unrestricted, &[n_v]) => Ok(UnrestrictedParams::init(n_v, g, seed)?.into()),
            (Architecture::Restricted, &[n_v, n_h]) => {
                Ok(RestrictedParams::init(n_v, n_h, g, seed)?.into())
            }
            (Architecture::Deep, &[n_v, n_h1, n_h2]) => {
                Ok(DeepParams::init(n_v, n_h1, n_h2, g, seed)?.into())
            }
            _ => Err(Error::invalid(format!(
                "{} architecture expects {} layer sizes, got {}",
                arch.name(),
                arch_layers(arch),
                dims.len()
            ))),
        }
    }

    pub fn architecture(&self) -> Architecture {
        match self {
            Model::Unrestricted(_) => Architecture::Unrestricted,
            Model::Restricted(_) => Architecture::Restricted,
            Model::Deep(_) => Architecture::Deep,
        }
    }

    pub fn g(&self) -> f64 {
        match self {
            Model::Unrestricted(p) => p.g,
            Model::Restricted(p) => p.g,
            Model::Deep(p) => p.g,
        }
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        match self {
            Model::Unrestricted(p) => vec![p.n_v()],
            Model::Restricted(p) => vec![p.n_v(), p.n_h()],
            Model::Deep(p) => vec![p.n_v(), p.n_h1(), p.n_h2()],
        }
    }

    pub fn n_v(&self) -> usize {
        self.layer_sizes()[0]
    }

    /// Layer pairs `(from, to)` joined by a trainable coupling, in the order
    /// used by [`Model::trainable_couplings`] and the phase statistics.
    pub fn coupled_pairs(&self) -> Vec<(usize, usize)> {
        match self {
            Model::Unrestricted(_) => vec![(0, 0)],
            Model::Restricted(_) => vec![(0, 1)],
            Model::Deep(_) => vec![(0, 1), (1, 2)],
        }
    }

    pub fn trainable_couplings(&self) -> Vec<&Array2<f64>> {
        match self {
            Model::Unrestricted(p) => vec![&p.a],
            Model::Restricted(p) => vec![&p.a],
            Model::Deep(p) => vec![&p.a1, &p.a2],
        }
    }

    pub fn trainable_couplings_mut(&mut self) -> Vec<&mut Array2<f64>> {
        match self {
            Model::Unrestricted(p) => vec![&mut p.a],
            Model::Restricted(p) => vec![&mut p.a],
            Model::Deep(p) => vec![&mut p.a1, &mut p.a2],
        }
    }

    /// One field per layer.
    pub fn fields(&self) -> Vec<&Array1<f64>> {
        match self {
            Model::Unrestricted(p) => vec![&p.b],
            Model::Restricted(p) => vec![&p.b, &p.c],
            Model::Deep(p) => vec![&p.b, &p.c, &p.d],
        }
    }

    pub fn fields_mut(&mut self) -> Vec<&mut Array1<f64>> {
        match self {
            Model::Unrestricted(p) => vec![&mut p.b],
            Model::Restricted(p) => vec![&mut p.b, &mut p.c],
            Model::Deep(p) => vec![&mut p.b, &mut p.c, &mut p.d],
        }
    }

    pub fn fixed_matrices(&self) -> Vec<&Array2<f64>> {
        match self {
            Model::Unrestricted(p) => vec![&p.j],
            Model::Restricted(p) => vec![&p.w, &p.w_tilde],
            Model::Deep(p) => vec![&p.w1, &p.w1_tilde, &p.w2, &p.w2_tilde],
        }
    }

    pub fn as_restricted(&self, op: &'static str) -> Result<&RestrictedParams> {
        match self {
            Model::Restricted(p) => Ok(p),
            other => Err(Error::UnsupportedArchitecture {
                op,
                arch: other.architecture().name(),
            }),
        }
    }

    /// Scaled effective couplings for the current parameter values.
    pub fn couplings(&self) -> Couplings {
        let fields = self.fields().into_iter().cloned().collect();
        let incoming = match self {
            Model::Unrestricted(p) => {
                let s = 1.0 / (p.n_v() as f64).sqrt();
                vec![vec![(0, (&p.j + &p.a).t().to_owned() * s)]]
            }
            Model::Restricted(p) => vec![
                vec![(1, p.visible_from_hidden())],
                vec![(0, p.hidden_from_visible())],
            ],
            Model::Deep(p) => {
                let sv = 1.0 / (p.n_v() as f64).sqrt();
                let s1 = 1.0 / (p.n_h1() as f64).sqrt();
                let s2 = 1.0 / (p.n_h2() as f64).sqrt();
                vec![
                    vec![(1, (&p.w1 + &p.a1).t().to_owned() * s1)],
                    vec![
                        (0, (&p.w1_tilde.t() + &p.a1) * sv),
                        (2, (&p.w2 + &p.a2).t().to_owned() * s2),
                    ],
                    vec![(1, (&p.w2_tilde.t() + &p.a2) * s1)],
                ]
            }
        };
        Couplings { incoming, fields }
    }
}

fn arch_layers(arch: Architecture) -> usize {
    match arch {
        Architecture::Unrestricted => 1,
        Architecture::Restricted => 2,
        Architecture::Deep => 3,
    }
}

/// Effective, pre-scaled couplings. For target layer `l`,
/// `incoming[l]` lists `(source layer, K)` with `K` shaped
/// `n_source x n_l`, so that for a batch of activations stored as rows the
/// drive is `phi(x_source) . K + field_l`.
#[derive(Debug, Clone)]
pub struct Couplings {
    pub incoming: Vec<Vec<(usize, Array2<f64>)>>,
    pub fields: Vec<Array1<f64>>,
}

impl Couplings {
    pub fn layer_sizes(&self) -> Vec<usize> {
        self.fields.iter().map(|f| f.len()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn steps_must_divide_horizon() {
        let cfg = SimConfig::reference();
        assert_eq!(cfg.steps().unwrap(), 100);
        assert_eq!(cfg.steps_to(0.0).unwrap(), 0);
        assert!(cfg.steps_to(10.5).is_err());
        let fine = SimConfig::new(0.1, 10.0, 2000.0).unwrap();
        assert_eq!(fine.steps().unwrap(), 20_000);
        assert!(SimConfig::new(0.0, 10.0, 1.0).is_err());
        assert!(SimConfig::new(1.0, -1.0, 1.0).is_err());
        assert!(SimConfig::new(1.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn init_rejects_empty_layers() {
        assert!(UnrestrictedParams::init(0, 1.0, 0).is_err());
        assert!(RestrictedParams::init(3, 0, 1.0, 0).is_err());
        assert!(DeepParams::init(3, 2, 0, 1.0, 0).is_err());
        assert!(UnrestrictedParams::init(3, -1.0, 0).is_err());
        assert!(Model::init(Architecture::Deep, &[3, 2], 1.0, 0).is_err());
    }

    #[test]
    fn zero_gain_gives_zero_matrices() {
        let p = UnrestrictedParams::init(2, 0.0, 5).unwrap();
        assert!(p.j.iter().all(|&x| x == 0.0));
        let r = RestrictedParams::init(2, 2, 0.0, 5).unwrap();
        assert!(r.w.iter().chain(r.w_tilde.iter()).all(|&x| x == 0.0));
    }

    #[test]
    fn unrestricted_gaussian_moments() {
        // 10^6 entries: the standard error of the mean is 1e-3 and that of
        // the variance about 1.4e-3.
        let p = UnrestrictedParams::init(1000, 1.0, 11).unwrap();
        let n = p.j.len() as f64;
        let mean = p.j.sum() / n;
        let var = p.j.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 0.004, "mean {mean}");
        assert!((var - 1.0).abs() < 0.01, "var {var}");
        assert!(p.a.iter().all(|&x| x == 0.0));
        assert!(p.b.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn reference_gain_variance() {
        let p = UnrestrictedParams::init(784, 1.5, 3).unwrap();
        let n = p.j.len() as f64;
        let var = p.j.iter().map(|x| x * x).sum::<f64>() / n;
        assert!((var - 1.5).abs() < 0.02, "var {var}");
    }

    #[test]
    fn restricted_shapes_and_independence() {
        let p = RestrictedParams::init(784, 500, 1.5, 1).unwrap();
        assert_eq!(p.w.dim(), (784, 500));
        assert_eq!(p.w_tilde.dim(), (500, 784));
        assert_ne!(p.w_tilde, p.w.t());
        let small = RestrictedParams::init(2, 2, 1.0, 1).unwrap();
        assert_ne!(small.w_tilde, small.w.t());
    }

    #[test]
    fn deep_shapes() {
        let p = DeepParams::init(784, 500, 100, 1.5, 1).unwrap();
        assert_eq!(p.w1.dim(), (784, 500));
        assert_eq!(p.w1_tilde.dim(), (500, 784));
        assert_eq!(p.w2.dim(), (500, 100));
        assert_eq!(p.w2_tilde.dim(), (100, 500));
        assert_eq!(p.a1.dim(), (784, 500));
        assert_eq!(p.a2.dim(), (500, 100));
        assert_ne!(p.w1_tilde, p.w1.t());
        assert_ne!(p.w2_tilde, p.w2.t());
    }

    #[test]
    fn init_is_a_function_of_the_seed() {
        let a = DeepParams::init(5, 4, 3, 1.5, 9).unwrap();
        let b = DeepParams::init(5, 4, 3, 1.5, 9).unwrap();
        let c = DeepParams::init(5, 4, 3, 1.5, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn shared_coupling_enters_both_directions() {
        let mut p = RestrictedParams::init(3, 2, 0.0, 0).unwrap();
        p.a[[2, 1]] = 0.7;
        let to_h = p.hidden_from_visible();
        let to_v = p.visible_from_hidden();
        assert_eq!(to_h[[2, 1]] * 3f64.sqrt(), 0.7);
        assert!((to_v[[1, 2]] * 2f64.sqrt() - 0.7).abs() < 1e-15);
        let nonzero = to_h.iter().filter(|&&x| x != 0.0).count();
        assert_eq!(nonzero, 1);
    }
}
