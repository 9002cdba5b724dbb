//! Euler integration of the free and clamped dynamics.
//!
//! Every layer obeys `tau dx/dt = -x + drive(phi(other layers)) + field`
//! with `phi = tanh`. A batch of independent chains is stored as the rows of
//! one matrix per layer, so a step is a handful of matrix products. All
//! layers advance together from the pre-step state.

use ndarray::linalg::general_mat_mul;
use ndarray::{concatenate, Array1, Array2, ArrayView2, Axis};
use rayon::prelude::*;

use crate::error::{ensure, Error, Result};
use crate::params::{Couplings, DeepParams, Model, RestrictedParams, SimConfig};
use crate::rng::{standard_normal, StreamKey};

/// Chains are integrated in fixed-size blocks. The block layout depends
/// only on the chain count, never on the thread pool.
pub const CHAIN_BLOCK: usize = 32;

#[inline]
pub fn phi(x: f64) -> f64 {
    x.tanh()
}

pub fn activations(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(phi)
}

/// Pre-activations of a batch of chains. `layers[l]` is `chains x n_l`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub layers: Vec<Array2<f64>>,
    pub t: f64,
}

impl ChainState {
    pub fn zeros(sizes: &[usize], chains: usize) -> Self {
        Self {
            layers: sizes.iter().map(|&n| Array2::zeros((chains, n))).collect(),
            t: 0.0,
        }
    }

    /// A single chain from one vector per layer.
    pub fn single(layers: Vec<Array1<f64>>) -> Self {
        Self {
            layers: layers.into_iter().map(|x| x.insert_axis(Axis(0))).collect(),
            t: 0.0,
        }
    }

    /// Standard-normal pre-activations for chains `first..first + count`.
    /// Chain `c` draws all of its layers, in order, from `key.rng(c)`.
    pub fn standard_normal(sizes: &[usize], key: &StreamKey, first: usize, count: usize) -> Self {
        let mut state = Self::zeros(sizes, count);
        for row in 0..count {
            let mut rng = key.rng((first + row) as u64);
            for layer in state.layers.iter_mut() {
                for x in layer.row_mut(row).iter_mut() {
                    *x = standard_normal(&mut rng);
                }
            }
        }
        state
    }

    pub fn chains(&self) -> usize {
        self.layers.first().map_or(0, |l| l.nrows())
    }

    pub fn activations(&self) -> Vec<Array2<f64>> {
        self.layers.iter().map(activations).collect()
    }
}

/// Whether a [`SampleSet`] came from free-running or clamped dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    FreeRun,
    Clamped,
}

/// Activations `phi(x)(t)` of a batch of chains.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    /// One `chains x n_l` matrix per layer; layer 0 is visible.
    pub layers: Vec<Array2<f64>>,
    pub t_collected: f64,
    pub origin: Origin,
}

impl SampleSet {
    pub fn visible(&self) -> &Array2<f64> {
        &self.layers[0]
    }

    pub fn len(&self) -> usize {
        self.layers[0].nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Effective couplings plus the Euler rate, ready to step any number of
/// chains. Building one is the only place the `1/sqrt(N)` factors appear.
#[derive(Debug, Clone)]
pub struct Integrator {
    couplings: Couplings,
    cfg: SimConfig,
}

impl Integrator {
    pub fn new(model: &Model, cfg: &SimConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            couplings: model.couplings(),
            cfg: *cfg,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        self.couplings.layer_sizes()
    }

    fn check_state(&self, state: &ChainState) -> Result<()> {
        let sizes = self.layer_sizes();
        ensure(state.layers.len() == sizes.len(), || {
            format!(
                "state has {} layers, model has {}",
                state.layers.len(),
                sizes.len()
            )
        })?;
        let m = state.chains();
        for (l, (x, &n)) in state.layers.iter().zip(&sizes).enumerate() {
            ensure(x.dim() == (m, n), || {
                format!("layer {l}: state is {:?}, expected ({m}, {n})", x.dim())
            })?;
        }
        Ok(())
    }

    fn check_clamp(&self, state: &ChainState, clamped: &[Option<ArrayView2<f64>>]) -> Result<()> {
        ensure(clamped.len() == state.layers.len(), || {
            format!("clamp list has {} layers", clamped.len())
        })?;
        for (l, c) in clamped.iter().enumerate() {
            if let Some(c) = c {
                ensure(c.dim() == state.layers[l].dim(), || {
                    format!("clamped layer {l} is {:?}, expected {:?}", c.dim(), state.layers[l].dim())
                })?;
            }
        }
        Ok(())
    }

    /// One free Euler step.
    pub fn step(&self, state: &mut ChainState) -> Result<()> {
        self.check_state(state)?;
        let none = vec![None; state.layers.len()];
        self.step_unchecked(state, &none);
        Ok(())
    }

    /// One Euler step with the activations of some layers held fixed.
    /// Pre-activations of clamped layers are left untouched.
    pub fn step_clamped(
        &self,
        state: &mut ChainState,
        clamped: &[Option<ArrayView2<f64>>],
    ) -> Result<()> {
        self.check_state(state)?;
        self.check_clamp(state, clamped)?;
        self.step_unchecked(state, clamped);
        Ok(())
    }

    /// Advance `steps` times.
    pub fn run(
        &self,
        state: &mut ChainState,
        clamped: &[Option<ArrayView2<f64>>],
        steps: usize,
    ) -> Result<()> {
        self.check_state(state)?;
        self.check_clamp(state, clamped)?;
        for _ in 0..steps {
            self.step_unchecked(state, clamped);
        }
        Ok(())
    }

    fn step_unchecked(&self, state: &mut ChainState, clamped: &[Option<ArrayView2<f64>>]) {
        let rate = self.cfg.rate();
        let keep = 1.0 - rate;
        let acts: Vec<Option<Array2<f64>>> = state
            .layers
            .iter()
            .zip(clamped)
            .map(|(x, c)| match c {
                Some(_) => None,
                None => Some(activations(x)),
            })
            .collect();
        let act = |l: usize| -> ArrayView2<f64> {
            match (&clamped[l], &acts[l]) {
                (Some(c), _) => c.view(),
                (None, Some(a)) => a.view(),
                (None, None) => unreachable!(),
            }
        };
        for (l, x) in state.layers.iter_mut().enumerate() {
            if clamped[l].is_some() {
                continue;
            }
            let field = &self.couplings.fields[l];
            let mut drive = Array2::from_shape_fn(x.dim(), |(_, j)| field[j]);
            for (src, k) in &self.couplings.incoming[l] {
                general_mat_mul(1.0, &act(*src), k, 1.0, &mut drive);
            }
            x.zip_mut_with(&drive, |x, &d| *x = keep * *x + rate * d);
        }
        state.t += self.cfg.dt;
    }
}

/// One free Euler step of any architecture.
pub fn euler_step(state: &mut ChainState, model: &Model, cfg: &SimConfig) -> Result<()> {
    Integrator::new(model, cfg)?.step(state)
}

fn blocks(chains: usize) -> Vec<(usize, usize)> {
    (0..chains)
        .step_by(CHAIN_BLOCK)
        .map(|s| (s, CHAIN_BLOCK.min(chains - s)))
        .collect()
}

fn stack_rows(parts: Vec<Vec<Array2<f64>>>, n_layers: usize) -> Vec<Array2<f64>> {
    (0..n_layers)
        .map(|l| {
            let views: Vec<_> = parts.iter().map(|p| p[l].view()).collect();
            concatenate(Axis(0), &views).expect("blocks share column counts")
        })
        .collect()
}

/// Run `m_chains` independent free trajectories from standard-normal
/// initial conditions up to `cfg.t_target` and return all layer
/// activations at that time.
pub fn simulate_free(model: &Model, cfg: &SimConfig, m_chains: usize, key: &StreamKey) -> Result<SampleSet> {
    let mut sets = simulate_free_at(model, cfg, m_chains, key, &[cfg.t_target])?;
    Ok(sets.pop().expect("one horizon requested"))
}

/// Like [`simulate_free`] but harvests activations at several horizons of
/// the same trajectories. Horizons must be non-decreasing. The result at
/// horizon `t` is bit-identical to a separate run stopped at `t`.
pub fn simulate_free_at(
    model: &Model,
    cfg: &SimConfig,
    m_chains: usize,
    key: &StreamKey,
    horizons: &[f64],
) -> Result<Vec<SampleSet>> {
    ensure(m_chains >= 1, || "need at least one chain".to_string())?;
    let integrator = Integrator::new(model, cfg)?;
    let steps: Vec<usize> = horizons
        .iter()
        .map(|&t| cfg.steps_to(t))
        .collect::<Result<_>>()?;
    ensure(steps.windows(2).all(|w| w[0] <= w[1]), || {
        "horizons must be non-decreasing".to_string()
    })?;
    let sizes = model.layer_sizes();
    let none = vec![None; sizes.len()];

    let per_block: Vec<Vec<Vec<Array2<f64>>>> = blocks(m_chains)
        .into_par_iter()
        .map(|(first, count)| {
            let mut state = ChainState::standard_normal(&sizes, key, first, count);
            let mut done = 0;
            let mut out = Vec::with_capacity(steps.len());
            for &s in &steps {
                for _ in done..s {
                    integrator.step_unchecked(&mut state, &none);
                }
                done = s;
                out.push(state.activations());
            }
            out
        })
        .collect();

    let mut per_horizon: Vec<Vec<Vec<Array2<f64>>>> = vec![Vec::new(); steps.len()];
    for block in per_block {
        for (h, acts) in block.into_iter().enumerate() {
            per_horizon[h].push(acts);
        }
    }
    Ok(per_horizon
        .into_iter()
        .zip(&steps)
        .map(|(parts, &s)| SampleSet {
            layers: stack_rows(parts, sizes.len()),
            t_collected: s as f64 * cfg.dt,
            origin: Origin::FreeRun,
        })
        .collect())
}

fn check_rows(x: &ArrayView2<f64>, cols: usize, what: &str) -> Result<()> {
    ensure(x.ncols() == cols, || {
        format!("{what} has {} columns, expected {cols}", x.ncols())
    })
}

fn relax(x0: &ArrayView2<f64>, drive: &Array2<f64>, t: f64, tau: f64) -> Array2<f64> {
    let decay = (-t / tau).exp();
    let mut out = x0.to_owned();
    out.zip_mut_with(drive, |x, &d| *x = *x * decay + d * (1.0 - decay));
    out
}

/// Hidden pre-activations at `cfg.t_target` when the visible activations
/// are clamped to `xi`. With the visible layer fixed, the hidden equation
/// is linear and relaxes exponentially toward its drive. Rows of `xi` and
/// `h0` are independent samples.
pub fn clamped_hidden_preactivation(
    params: &RestrictedParams,
    xi: ArrayView2<f64>,
    h0: ArrayView2<f64>,
    cfg: &SimConfig,
) -> Result<Array2<f64>> {
    cfg.validate()?;
    check_rows(&xi, params.n_v(), "clamped visible batch")?;
    check_rows(&h0, params.n_h(), "hidden initial state")?;
    ensure(xi.nrows() == h0.nrows(), || "xi and h0 row counts differ".to_string())?;
    let mut drive = Array2::from_shape_fn((xi.nrows(), params.n_h()), |(_, a)| params.c[a]);
    general_mat_mul(1.0, &xi, &params.hidden_from_visible(), 1.0, &mut drive);
    Ok(relax(&h0, &drive, cfg.t_target, cfg.tau))
}

/// `phi(h(T))` for hidden units driven by clamped visibles.
pub fn clamped_hidden_closed_form(
    params: &RestrictedParams,
    xi: ArrayView2<f64>,
    h0: ArrayView2<f64>,
    cfg: &SimConfig,
) -> Result<Array2<f64>> {
    Ok(activations(&clamped_hidden_preactivation(params, xi, h0, cfg)?))
}

/// `phi(v(T))` for visible units driven by clamped hidden activations
/// `chi`.
pub fn clamped_visible_closed_form(
    params: &RestrictedParams,
    chi: ArrayView2<f64>,
    v0: ArrayView2<f64>,
    cfg: &SimConfig,
) -> Result<Array2<f64>> {
    cfg.validate()?;
    check_rows(&chi, params.n_h(), "clamped hidden batch")?;
    check_rows(&v0, params.n_v(), "visible initial state")?;
    ensure(chi.nrows() == v0.nrows(), || "chi and v0 row counts differ".to_string())?;
    let mut drive = Array2::from_shape_fn((chi.nrows(), params.n_v()), |(_, i)| params.b[i]);
    general_mat_mul(1.0, &chi, &params.visible_from_hidden(), 1.0, &mut drive);
    Ok(activations(&relax(&v0, &drive, cfg.t_target, cfg.tau)))
}

/// Integrate the two hidden layers of the deep model with the visible
/// activations clamped to `xi`, from standard-normal initial conditions
/// (row `r` draws from `key.rng(r)`). Returns `(phi(h1)(T), phi(h2)(T))`.
pub fn simulate_clamped_deep(
    params: &DeepParams,
    xi: ArrayView2<f64>,
    cfg: &SimConfig,
    key: &StreamKey,
) -> Result<(Array2<f64>, Array2<f64>)> {
    check_rows(&xi, params.n_v(), "clamped visible batch")?;
    let model = Model::Deep(params.clone());
    let integrator = Integrator::new(&model, cfg)?;
    let steps = cfg.steps()?;
    let hidden_sizes = [params.n_h1(), params.n_h2()];

    let parts: Vec<Vec<Array2<f64>>> = blocks(xi.nrows())
        .into_par_iter()
        .map(|(first, count)| {
            let hidden = ChainState::standard_normal(&hidden_sizes, key, first, count);
            let mut state = ChainState {
                layers: vec![
                    Array2::zeros((count, params.n_v())),
                    hidden.layers[0].clone(),
                    hidden.layers[1].clone(),
                ],
                t: 0.0,
            };
            let clamp = [Some(xi.slice(ndarray::s![first..first + count, ..])), None, None];
            for _ in 0..steps {
                integrator.step_unchecked(&mut state, &clamp);
            }
            vec![activations(&state.layers[1]), activations(&state.layers[2])]
        })
        .collect();
    if parts.is_empty() {
        return Ok((
            Array2::zeros((0, params.n_h1())),
            Array2::zeros((0, params.n_h2())),
        ));
    }
    let mut stacked = stack_rows(parts, 2);
    let chi2 = stacked.pop().unwrap();
    let chi1 = stacked.pop().unwrap();
    Ok((chi1, chi2))
}

/// A point of a divergence curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Separation {
    pub t: f64,
    pub distance: f64,
}

/// Follow a reference trajectory and a clone whose pre-activations are
/// displaced by a random vector of norm `delta0`, recording the Euclidean
/// distance between their activations every `record_every` time units
/// (and at `t = 0`) up to `t_probe`.
pub fn chaos_probe(
    model: &Model,
    cfg: &SimConfig,
    delta0: f64,
    t_probe: f64,
    record_every: f64,
    key: &StreamKey,
) -> Result<Vec<Separation>> {
    ensure(delta0 > 0.0 && delta0.is_finite(), || {
        format!("delta0 must be positive, got {delta0}")
    })?;
    let integrator = Integrator::new(model, cfg)?;
    let total = cfg.steps_to(t_probe)?;
    let every = cfg.steps_to(record_every)?;
    ensure(every >= 1, || "record interval must be at least one step".to_string())?;

    let sizes = model.layer_sizes();
    let reference = ChainState::standard_normal(&sizes, key, 0, 1);
    let direction = ChainState::standard_normal(&sizes, key, 1, 1);
    let norm = direction
        .layers
        .iter()
        .flat_map(|l| l.iter())
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt();
    if norm == 0.0 {
        return Err(Error::invalid("degenerate perturbation direction"));
    }
    // Row 0 is the reference, row 1 the perturbed clone.
    let mut state = ChainState {
        layers: reference
            .layers
            .iter()
            .zip(&direction.layers)
            .map(|(x, d)| {
                let perturbed = x + &(d * (delta0 / norm));
                concatenate(Axis(0), &[x.view(), perturbed.view()]).unwrap()
            })
            .collect(),
        t: 0.0,
    };
    let none = vec![None; sizes.len()];
    let distance = |s: &ChainState| -> f64 {
        s.layers
            .iter()
            .flat_map(|l| {
                l.row(0)
                    .iter()
                    .zip(l.row(1).iter())
                    .map(|(a, b)| (phi(*a) - phi(*b)).powi(2))
                    .collect::<Vec<_>>()
            })
            .sum::<f64>()
            .sqrt()
    };
    let mut curve = vec![Separation {
        t: 0.0,
        distance: distance(&state),
    }];
    for step in 1..=total {
        integrator.step_unchecked(&mut state, &none);
        if step % every == 0 {
            curve.push(Separation {
                t: step as f64 * cfg.dt,
                distance: distance(&state),
            });
        }
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{UnrestrictedParams};
    use crate::rng::Purpose;
    use ndarray::array;

    fn key() -> StreamKey {
        StreamKey::new(42, Purpose::NegativePhase, 0)
    }

    #[test]
    fn zero_state_is_a_fixed_point() {
        let model: Model = UnrestrictedParams::init(4, 0.0, 1).unwrap().into();
        let mut state = ChainState::zeros(&[4], 1);
        euler_step(&mut state, &model, &SimConfig::reference()).unwrap();
        assert!(state.layers[0].iter().all(|&x| x == 0.0));
        assert_eq!(state.t, 1.0);

        let deep: Model = DeepParams::init(3, 2, 2, 0.0, 1).unwrap().into();
        let mut s = ChainState::zeros(&[3, 2, 2], 2);
        euler_step(&mut s, &deep, &SimConfig::reference()).unwrap();
        assert!(s.layers.iter().all(|l| l.iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn pure_decay_matches_scalar_recursion() {
        let cfg = SimConfig::reference();
        for model in [
            Model::from(UnrestrictedParams::init(3, 0.0, 1).unwrap()),
            Model::from(RestrictedParams::init(3, 2, 0.0, 1).unwrap()),
            Model::from(DeepParams::init(3, 2, 4, 0.0, 1).unwrap()),
        ] {
            let sizes = model.layer_sizes();
            let mut state = ChainState::standard_normal(&sizes, &key(), 0, 2);
            let mut expected = state.clone();
            let integ = Integrator::new(&model, &cfg).unwrap();
            for _ in 0..100 {
                integ.step(&mut state).unwrap();
                for l in expected.layers.iter_mut() {
                    l.mapv_inplace(|x| (1.0 - 0.1) * x);
                }
            }
            assert_eq!(state.layers, expected.layers);
        }
    }

    #[test]
    fn unit_decay_after_one_and_hundred_steps() {
        let model: Model = UnrestrictedParams::init(3, 0.0, 1).unwrap().into();
        let cfg = SimConfig::reference();
        let mut state = ChainState::single(vec![Array1::ones(3)]);
        euler_step(&mut state, &model, &cfg).unwrap();
        assert!(state.layers[0].iter().all(|&x| (x - 0.9).abs() < 1e-15));
        for _ in 1..100 {
            euler_step(&mut state, &model, &cfg).unwrap();
        }
        // 0.9^100 from the scalar recursion; exp(-10) is the continuum value.
        for &x in state.layers[0].iter() {
            assert!((x - 2.6561398887587544e-05).abs() < 1e-17);
            assert!((x - (-10f64).exp()).abs() > 1e-5);
        }
    }

    #[test]
    fn hidden_decays_while_visible_stays() {
        let model: Model = RestrictedParams::init(2, 2, 0.0, 1).unwrap().into();
        let mut state = ChainState::single(vec![Array1::zeros(2), Array1::ones(2)]);
        euler_step(&mut state, &model, &SimConfig::reference()).unwrap();
        assert_eq!(state.layers[0], array![[0.0, 0.0]]);
        assert!(state.layers[1].iter().all(|&x| (x - 0.9).abs() < 1e-15));
    }

    #[test]
    fn restricted_step_matches_hand_computation() {
        let mut p = RestrictedParams::init(2, 2, 0.0, 1).unwrap();
        p.a[[0, 1]] = 0.5;
        p.b[0] = 0.1;
        p.c[1] = 0.2;
        let mut state = ChainState::single(vec![array![0.3, -0.2], array![0.5, 1.0]]);
        euler_step(&mut state, &p.into(), &SimConfig::reference()).unwrap();
        let expect_v = [0.3069264196094183, -0.18];
        let expect_h = [0.45, 0.9302994561854845];
        for i in 0..2 {
            assert!((state.layers[0][[0, i]] - expect_v[i]).abs() < 1e-14);
            assert!((state.layers[1][[0, i]] - expect_h[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let model: Model = RestrictedParams::init(3, 2, 1.0, 1).unwrap().into();
        let mut bad = ChainState::zeros(&[3, 3], 1);
        assert!(matches!(
            euler_step(&mut bad, &model, &SimConfig::reference()),
            Err(Error::InvalidArgument(_))
        ));
        let mut missing = ChainState::zeros(&[3], 1);
        assert!(euler_step(&mut missing, &model, &SimConfig::reference()).is_err());
    }

    #[test]
    fn free_runs_are_reproducible_and_shaped() {
        let model: Model = RestrictedParams::init(20, 10, 1.5, 3).unwrap().into();
        let cfg = SimConfig::new(1.0, 10.0, 30.0).unwrap();
        let a = simulate_free(&model, &cfg, 70, &key()).unwrap();
        let b = simulate_free(&model, &cfg, 70, &key()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.visible().dim(), (70, 20));
        assert_eq!(a.layers[1].dim(), (70, 10));
        assert_eq!(a.t_collected, 30.0);
        assert!(a.layers.iter().all(|l| l.iter().all(|x| x.abs() < 1.0)));
    }

    #[test]
    fn free_run_of_zero_gain_decays() {
        let model: Model = UnrestrictedParams::init(10, 0.0, 3).unwrap().into();
        let cfg = SimConfig::reference();
        let out = simulate_free(&model, &cfg, 5, &key()).unwrap();
        let init = ChainState::standard_normal(&[10], &key(), 0, 5);
        let bound = 0.9f64.powi(100);
        for r in 0..5 {
            let n0 = init.layers[0].row(r).iter().map(|x| x * x).sum::<f64>().sqrt();
            let n = out.visible().row(r).iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!(n <= bound * n0 * (1.0 + 1e-12));
        }
    }

    #[test]
    fn sweep_matches_separate_runs() {
        let model: Model = UnrestrictedParams::init(12, 1.5, 3).unwrap().into();
        let cfg = SimConfig::reference();
        let sweep = simulate_free_at(&model, &cfg, 40, &key(), &[10.0, 100.0, 250.0]).unwrap();
        for s in &sweep {
            let single = simulate_free(&model, &cfg.with_target(s.t_collected), 40, &key()).unwrap();
            assert_eq!(&single, s);
        }
        assert!(simulate_free_at(&model, &cfg, 4, &key(), &[10.0, 5.0]).is_err());
        assert!(simulate_free(&model, &cfg.with_target(10.5), 4, &key()).is_err());
    }

    #[test]
    fn clamped_hidden_formula_values() {
        // One visible unit clamped to 1 with W_tilde = 0.5 gives a drive of
        // 0.5 on the hidden unit.
        let mut p = RestrictedParams::init(1, 1, 0.0, 0).unwrap();
        p.w_tilde[[0, 0]] = 0.5;
        let xi = array![[1.0]];
        let h0 = array![[0.0]];
        let chi = clamped_hidden_closed_form(&p, xi.view(), h0.view(), &SimConfig::reference()).unwrap();
        assert!((chi[[0, 0]] - 0.4620993047368198).abs() < 1e-14);
        let h = clamped_hidden_preactivation(&p, xi.view(), h0.view(), &SimConfig::reference()).unwrap();
        assert!((h[[0, 0]] - 0.49997730003511875).abs() < 1e-15);

        let h0 = array![[0.8]];
        let at_zero = SimConfig::reference().with_target(0.0);
        let chi0 = clamped_hidden_closed_form(&p, xi.view(), h0.view(), &at_zero).unwrap();
        assert_eq!(chi0[[0, 0]], 0.8f64.tanh());
    }

    #[test]
    fn clamped_visible_formula_values() {
        let mut p = RestrictedParams::init(1, 1, 0.0, 0).unwrap();
        p.b[0] = -0.3;
        let chi = array![[0.4]];
        let v0 = array![[0.0]];
        let out = clamped_visible_closed_form(&p, chi.view(), v0.view(), &SimConfig::reference()).unwrap();
        assert!((out[[0, 0]] - (-0.29130014825600087)).abs() < 1e-14);
        let v0 = array![[0.25]];
        let at_zero = SimConfig::reference().with_target(0.0);
        let same = clamped_visible_closed_form(&p, chi.view(), v0.view(), &at_zero).unwrap();
        assert_eq!(same[[0, 0]], 0.25f64.tanh());
    }

    #[test]
    fn clamped_forms_check_dimensions() {
        let p = RestrictedParams::init(3, 2, 1.0, 0).unwrap();
        let cfg = SimConfig::reference();
        let xi = Array2::zeros((2, 3));
        assert!(clamped_hidden_closed_form(&p, xi.view(), Array2::zeros((2, 3)).view(), &cfg).is_err());
        assert!(clamped_hidden_closed_form(&p, xi.view(), Array2::zeros((1, 2)).view(), &cfg).is_err());
        assert!(clamped_visible_closed_form(&p, xi.view(), Array2::zeros((2, 3)).view(), &cfg).is_err());
    }

    #[test]
    fn euler_converges_to_closed_form() {
        let p = RestrictedParams::init(6, 4, 1.5, 8).unwrap();
        let model: Model = p.clone().into();
        let xi = Array2::from_shape_fn((3, 6), |(r, c)| ((r * 7 + c) as f64 * 0.37).sin());
        let h0 = ChainState::standard_normal(&[4], &key(), 0, 3).layers.remove(0);
        let closed = clamped_hidden_preactivation(&p, xi.view(), h0.view(), &SimConfig::new(0.01, 10.0, 20.0).unwrap()).unwrap();
        let err = |dt: f64| {
            let cfg = SimConfig::new(dt, 10.0, 20.0).unwrap();
            let integ = Integrator::new(&model, &cfg).unwrap();
            let mut state = ChainState {
                layers: vec![Array2::zeros((3, 6)), h0.clone()],
                t: 0.0,
            };
            integ.run(&mut state, &[Some(xi.view()), None], cfg.steps().unwrap()).unwrap();
            (&state.layers[1] - &closed).iter().fold(0.0f64, |m, x| m.max(x.abs()))
        };
        let e1 = err(0.01);
        let e2 = err(0.005);
        assert!(e1 < 1e-3, "{e1}");
        let ratio = e1 / e2;
        assert!((1.6..=2.4).contains(&ratio), "{ratio}");
    }

    #[test]
    fn deep_clamped_reduces_to_restricted() {
        let mut deep = DeepParams::init(5, 4, 3, 1.5, 2).unwrap();
        deep.w2.fill(0.0);
        deep.w2_tilde.fill(0.0);
        deep.c[1] = 0.3;
        let restricted = RestrictedParams {
            g: deep.g,
            w: deep.w1.clone(),
            w_tilde: deep.w1_tilde.clone(),
            a: deep.a1.clone(),
            b: deep.b.clone(),
            c: deep.c.clone(),
        };
        let xi = Array2::from_shape_fn((4, 5), |(r, c)| ((r + 2 * c) as f64 * 0.21).cos());
        let cfg = SimConfig::new(0.01, 10.0, 20.0).unwrap();
        let (chi1, chi2) = simulate_clamped_deep(&deep, xi.view(), &cfg, &key()).unwrap();
        let init = ChainState::standard_normal(&[4, 3], &key(), 0, 4);
        let h0 = init.layers[0].clone();
        let closed = clamped_hidden_closed_form(&restricted, xi.view(), h0.view(), &cfg).unwrap();
        let diff = (&chi1 - &closed).iter().fold(0.0f64, |m, x| m.max(x.abs()));
        assert!(diff < 1e-3, "{diff}");
        // h2 has no drive left, so it decays.
        let bound = 0.999f64.powi(2000);
        for (c, h) in chi2.iter().zip(init.layers[1].iter()) {
            assert!(c.abs() <= bound * h.abs() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn deep_clamped_zero_couplings_decay() {
        let deep = DeepParams::init(3, 2, 2, 0.0, 2).unwrap();
        let xi = array![[0.5, -0.5, 1.0]];
        let (chi1, chi2) = simulate_clamped_deep(&deep, xi.view(), &SimConfig::reference(), &key()).unwrap();
        let init = ChainState::standard_normal(&[2, 2], &key(), 0, 1);
        let bound = 0.9f64.powi(100);
        for (chi, h0) in [(&chi1, &init.layers[0]), (&chi2, &init.layers[1])] {
            for (c, h) in chi.iter().zip(h0.iter()) {
                assert!(c.abs() <= bound * h.abs() * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn probe_contracts_without_couplings() {
        let model: Model = UnrestrictedParams::init(100, 0.0, 1).unwrap().into();
        let cfg = SimConfig::reference();
        let curve = chaos_probe(&model, &cfg, 1e-6, 500.0, 1.0, &key()).unwrap();
        assert_eq!(curve.len(), 501);
        assert!((curve[0].distance - 1e-6).abs() < 1e-6);
        for w in curve.windows(2) {
            assert!(w[1].distance < w[0].distance, "{:?}", w);
        }
        assert!(chaos_probe(&model, &cfg, 0.0, 10.0, 1.0, &key()).is_err());
    }
}
