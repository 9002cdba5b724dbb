//! Contrastive Hebbian training.
//!
//! Each epoch takes a minibatch of `M` data points (positive phase, with
//! the visible layer clamped) and `M` free chains run to the target time
//! (negative phase). Every trainable coupling and field moves by
//! `k * (positive moment - negative moment)`.

use std::time::Instant;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::dataio::{minibatch, Dataset};
use crate::dynamics::{clamped_hidden_closed_form, simulate_clamped_deep, simulate_free};
use crate::error::{ensure, Result};
use crate::metrics::{evaluate, MetricReport};
use crate::params::{Model, SimConfig};
use crate::rng::{standard_normal, Purpose, StreamKey};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Learning rate.
    pub k: f64,
    /// Minibatch size, also the number of free chains per epoch.
    pub m_batch: usize,
    /// Total number of epochs (parameter updates).
    pub epochs: u64,
    pub sim: SimConfig,
    /// Epochs between metric evaluations; 0 disables them.
    pub eval_every: u64,
    /// Epochs between checkpoints; 0 disables them.
    pub checkpoint_every: u64,
    /// Generated and held-out samples per evaluation.
    pub n_eval: usize,
    pub seed: u64,
}

impl TrainConfig {
    /// Hyper-parameters of the reference MNIST experiments.
    pub fn reference(seed: u64) -> Self {
        Self {
            k: 0.01,
            m_batch: 500,
            epochs: 300_000,
            sim: SimConfig::reference(),
            eval_every: 1_000,
            checkpoint_every: 1_000,
            n_eval: 10_000,
            seed,
        }
    }

    pub fn validate(&self, dataset_len: usize) -> Result<()> {
        ensure(self.k.is_finite() && self.k > 0.0, || {
            format!("learning rate must be positive, got {}", self.k)
        })?;
        ensure(self.m_batch >= 1, || "m_batch must be >= 1".to_string())?;
        ensure(self.m_batch <= dataset_len, || {
            format!("m_batch = {} exceeds the {dataset_len} training rows", self.m_batch)
        })?;
        self.sim.validate()
    }
}

/// Empirical moments of one phase: one mean vector per layer and one mean
/// outer product per trainable coupling, ordered as
/// [`Model::coupled_pairs`].
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseStatistics {
    pub first_moments: Vec<Array1<f64>>,
    pub second_moments: Vec<Array2<f64>>,
}

impl PhaseStatistics {
    /// Moments of per-layer activation batches (rows are samples).
    pub fn from_activations(layers: &[ArrayView2<f64>], pairs: &[(usize, usize)]) -> Result<Self> {
        let m = layers.first().map_or(0, |l| l.nrows());
        ensure(m >= 1, || "statistics need at least one sample".to_string())?;
        ensure(layers.iter().all(|l| l.nrows() == m), || {
            "layers disagree on the sample count".to_string()
        })?;
        let first_moments = layers
            .iter()
            .map(|l| l.mean_axis(Axis(0)).expect("m >= 1"))
            .collect();
        let second_moments = pairs
            .iter()
            .map(|&(a, b)| {
                let mut s = layers[a].t().dot(&layers[b]) / m as f64;
                if a == b {
                    mirror_upper(&mut s);
                }
                s
            })
            .collect();
        Ok(Self {
            first_moments,
            second_moments,
        })
    }

    fn check_against(&self, model: &Model) -> Result<()> {
        let sizes = model.layer_sizes();
        ensure(self.first_moments.len() == sizes.len(), || {
            format!(
                "{} first moments for {} layers",
                self.first_moments.len(),
                sizes.len()
            )
        })?;
        for (l, (f, n)) in self.first_moments.iter().zip(&sizes).enumerate() {
            ensure(f.len() == *n, || format!("first moment {l} has length {}, expected {n}", f.len()))?;
        }
        let pairs = model.coupled_pairs();
        ensure(self.second_moments.len() == pairs.len(), || {
            format!("{} second moments for {} couplings", self.second_moments.len(), pairs.len())
        })?;
        for (s, &(a, b)) in self.second_moments.iter().zip(&pairs) {
            ensure(s.dim() == (sizes[a], sizes[b]), || {
                format!("second moment is {:?}, expected {:?}", s.dim(), (sizes[a], sizes[b]))
            })?;
        }
        Ok(())
    }
}

fn mirror_upper(s: &mut Array2<f64>) {
    for i in 0..s.nrows() {
        for j in 0..i {
            s[[i, j]] = s[[j, i]];
        }
    }
}

/// Data-side moments. The unrestricted model uses the data directly; the
/// restricted model adds the closed-form hidden response from random
/// `h0` (row `r` uses `key.rng(r)`); the deep model simulates both hidden
/// layers with the visibles clamped.
pub fn positive_statistics(
    model: &Model,
    minibatch: ArrayView2<f64>,
    sim: &SimConfig,
    key: &StreamKey,
) -> Result<PhaseStatistics> {
    ensure(minibatch.nrows() >= 1, || "empty minibatch".to_string())?;
    ensure(minibatch.ncols() == model.n_v(), || {
        format!("minibatch has {} columns, model has {} visible units", minibatch.ncols(), model.n_v())
    })?;
    let pairs = model.coupled_pairs();
    match model {
        Model::Unrestricted(_) => PhaseStatistics::from_activations(&[minibatch], &pairs),
        Model::Restricted(p) => {
            let mut h0 = Array2::zeros((minibatch.nrows(), p.n_h()));
            for (r, mut row) in h0.rows_mut().into_iter().enumerate() {
                let mut rng = key.rng(r as u64);
                row.iter_mut().for_each(|x| *x = standard_normal(&mut rng));
            }
            let chi = clamped_hidden_closed_form(p, minibatch, h0.view(), sim)?;
            PhaseStatistics::from_activations(&[minibatch, chi.view()], &pairs)
        }
        Model::Deep(p) => {
            let (chi1, chi2) = simulate_clamped_deep(p, minibatch, sim, key)?;
            PhaseStatistics::from_activations(&[minibatch, chi1.view(), chi2.view()], &pairs)
        }
    }
}

/// Model-side moments from `m` free chains run to `sim.t_target`.
pub fn negative_statistics(model: &Model, sim: &SimConfig, m: usize, key: &StreamKey) -> Result<PhaseStatistics> {
    let samples = simulate_free(model, sim, m, key)?;
    let views: Vec<_> = samples.layers.iter().map(|l| l.view()).collect();
    PhaseStatistics::from_activations(&views, &model.coupled_pairs())
}

/// `theta += k (positive - negative)` for every trainable tensor. For the
/// unrestricted model the upper triangle of the update is mirrored so `A`
/// stays exactly symmetric.
pub fn apply_update(model: &mut Model, pos: &PhaseStatistics, neg: &PhaseStatistics, k: f64) -> Result<()> {
    pos.check_against(model)?;
    neg.check_against(model)?;
    let symmetric = matches!(model, Model::Unrestricted(_));
    for ((a, p), n) in model
        .trainable_couplings_mut()
        .into_iter()
        .zip(&pos.second_moments)
        .zip(&neg.second_moments)
    {
        if symmetric {
            let d = a.nrows();
            for i in 0..d {
                for j in i..d {
                    let delta = k * (p[[i, j]] - n[[i, j]]);
                    a[[i, j]] += delta;
                    if j != i {
                        a[[j, i]] += delta;
                    }
                }
            }
        } else {
            ndarray::Zip::from(a).and(p).and(n).for_each(|a, &p, &n| *a += k * (p - n));
        }
    }
    for ((f, p), n) in model
        .fields_mut()
        .into_iter()
        .zip(&pos.first_moments)
        .zip(&neg.first_moments)
    {
        ndarray::Zip::from(f).and(p).and(n).for_each(|f, &p, &n| *f += k * (p - n));
    }
    Ok(())
}

/// One epoch: minibatch, both phases, one update. Every random draw is a
/// function of `(cfg.seed, epoch)`.
pub fn train_epoch(model: &mut Model, dataset: &Dataset, cfg: &TrainConfig, epoch: u64) -> Result<()> {
    ensure(!dataset.is_empty(), || "empty training set".to_string())?;
    let batch = minibatch(dataset, cfg.m_batch, cfg.seed, epoch)?;
    let pos = positive_statistics(
        model,
        batch.view(),
        &cfg.sim,
        &StreamKey::new(cfg.seed, Purpose::PositivePhase, epoch),
    )?;
    let neg = negative_statistics(
        model,
        &cfg.sim,
        cfg.m_batch,
        &StreamKey::new(cfg.seed, Purpose::NegativePhase, epoch),
    )?;
    apply_update(model, &pos, &neg, cfg.k)
}

/// One line of the metric log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub epoch: u64,
    pub report: MetricReport,
    pub wall_seconds: f64,
}

impl LogRow {
    pub fn csv(&self) -> String {
        self.report.csv_row(self.epoch, self.wall_seconds)
    }
}

/// Callbacks of the training loop, invoked synchronously in epoch order.
pub trait TrainHooks {
    fn on_metrics(&mut self, _row: &LogRow) -> Result<()> {
        Ok(())
    }

    fn on_checkpoint(&mut self, _epoch: u64, _model: &Model) -> Result<()> {
        Ok(())
    }
}

/// Hooks that do nothing.
pub struct NoHooks;

impl TrainHooks for NoHooks {}

/// Evaluation at `T* = T` with the stream reserved for `epoch`.
pub fn evaluate_at_epoch(model: &Model, eval_data: &Dataset, cfg: &TrainConfig, epoch: u64) -> Result<MetricReport> {
    evaluate(
        model,
        eval_data.samples.view(),
        &cfg.sim,
        cfg.sim.t_target,
        cfg.n_eval,
        &StreamKey::new(cfg.seed, Purpose::Evaluation, epoch),
    )
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub log: Vec<LogRow>,
}

/// Run epochs `start_epoch..cfg.epochs`. `start_epoch` is the number of
/// updates already applied to `model` (0 for a fresh run).
///
/// Metrics are computed and checkpoints emitted after every multiple of
/// their period and after the last epoch; a fresh run also reports epoch
/// 0. A resumed run does not repeat its starting epoch.
pub fn train(
    mut model: Model,
    start_epoch: u64,
    dataset: &Dataset,
    eval_data: Option<&Dataset>,
    cfg: &TrainConfig,
    hooks: &mut dyn TrainHooks,
) -> Result<TrainOutcome> {
    cfg.validate(dataset.len())?;
    ensure(dataset.n_v() == model.n_v(), || {
        format!("dataset has {} columns, model has {} visible units", dataset.n_v(), model.n_v())
    })?;
    ensure(start_epoch <= cfg.epochs, || {
        format!("start epoch {start_epoch} is past the final epoch {}", cfg.epochs)
    })?;
    let eval_data = eval_data.unwrap_or(dataset);
    if cfg.eval_every > 0 {
        ensure(cfg.n_eval >= 2 && cfg.n_eval <= eval_data.len(), || {
            format!("n_eval = {} must be in [2, {}]", cfg.n_eval, eval_data.len())
        })?;
    }
    let clock = Instant::now();
    let mut log = Vec::new();

    let due = |period: u64, epoch: u64| period > 0 && (epoch % period == 0 || epoch == cfg.epochs);
    let report = |model: &Model, epoch: u64, hooks: &mut dyn TrainHooks, log: &mut Vec<LogRow>| -> Result<()> {
        if due(cfg.eval_every, epoch) {
            let row = LogRow {
                epoch,
                report: evaluate_at_epoch(model, eval_data, cfg, epoch)?,
                wall_seconds: clock.elapsed().as_secs_f64(),
            };
            hooks.on_metrics(&row)?;
            log.push(row);
        }
        if due(cfg.checkpoint_every, epoch) {
            hooks.on_checkpoint(epoch, model)?;
        }
        Ok(())
    };

    if start_epoch == 0 {
        report(&model, 0, hooks, &mut log)?;
    }
    for epoch in start_epoch..cfg.epochs {
        train_epoch(&mut model, dataset, cfg, epoch)?;
        report(&model, epoch + 1, hooks, &mut log)?;
    }
    Ok(TrainOutcome { model, log })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{synthetic_dataset, SyntheticKind};
    use crate::params::{DeepParams, RestrictedParams, UnrestrictedParams};
    use ndarray::array;

    fn key() -> StreamKey {
        StreamKey::new(3, Purpose::PositivePhase, 0)
    }

    #[test]
    fn unrestricted_positive_phase_is_the_data() {
        let model: Model = UnrestrictedParams::init(2, 1.5, 0).unwrap().into();
        let s = positive_statistics(&model, array![[1.0, -1.0]].view(), &SimConfig::reference(), &key()).unwrap();
        assert_eq!(s.second_moments[0][[0, 1]], -1.0);
        assert_eq!(s.second_moments[0][[1, 0]], -1.0);
        assert_eq!(s.first_moments[0], array![1.0, -1.0]);
        assert!(positive_statistics(&model, Array2::zeros((0, 2)).view(), &SimConfig::reference(), &key()).is_err());
    }

    #[test]
    fn restricted_positive_phase_with_zero_couplings() {
        let model: Model = RestrictedParams::init(3, 2, 0.0, 0).unwrap().into();
        // With h0 drawn at random, chi = tanh(h0 e^{-10}) is tiny but not 0.
        let s = positive_statistics(&model, array![[0.5, -1.0, 0.2]].view(), &SimConfig::reference(), &key()).unwrap();
        assert!(s.second_moments[0].iter().all(|x| x.abs() < 1e-3));
        // With h0 = 0 the closed form gives exactly zero.
        let p = model.as_restricted("t").unwrap();
        let chi = clamped_hidden_closed_form(p, array![[0.5, -1.0, 0.2]].view(), Array2::zeros((1, 2)).view(), &SimConfig::reference()).unwrap();
        let stats = PhaseStatistics::from_activations(&[array![[0.5, -1.0, 0.2]].view(), chi.view()], &[(0, 1)]).unwrap();
        assert!(stats.second_moments[0].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn restricted_positive_phase_hand_computation() {
        // W_tilde = [[1, 0], [0, -1]], A = 0, c = 0, h0 = 0:
        // chi_a = tanh((1 - e^{-10}) / sqrt(2) * (W_tilde xi)_a).
        let mut p = RestrictedParams::init(2, 2, 0.0, 0).unwrap();
        p.w_tilde = array![[1.0, 0.0], [0.0, -1.0]];
        let xi = array![[1.0, 0.5], [-0.5, 1.0]];
        let cfg = SimConfig::reference();
        let chi = clamped_hidden_closed_form(&p, xi.view(), Array2::zeros((2, 2)).view(), &cfg).unwrap();
        let s = PhaseStatistics::from_activations(&[xi.view(), chi.view()], &[(0, 1)]).unwrap();
        let f = (1.0 - (-10.0f64).exp()) / 2f64.sqrt();
        let chi_hand = [[(f * 1.0).tanh(), (f * -0.5).tanh()], [(f * -0.5).tanh(), (f * -1.0).tanh()]];
        let xi_hand = [[1.0, 0.5], [-0.5, 1.0]];
        for i in 0..2 {
            for a in 0..2 {
                let expect = (xi_hand[0][i] * chi_hand[0][a] + xi_hand[1][i] * chi_hand[1][a]) / 2.0;
                assert!((s.second_moments[0][[i, a]] - expect).abs() < 1e-15);
            }
            let expect_chi = (chi_hand[0][i] + chi_hand[1][i]) / 2.0;
            assert!((s.first_moments[1][i] - expect_chi).abs() < 1e-15);
        }
    }

    #[test]
    fn negative_phase_decays_without_couplings() {
        let model: Model = RestrictedParams::init(4, 3, 0.0, 0).unwrap().into();
        let sim = SimConfig::new(1.0, 10.0, 300.0).unwrap();
        let key = StreamKey::new(1, Purpose::NegativePhase, 0);
        let s = negative_statistics(&model, &sim, 20, &key).unwrap();
        let bound = 0.9f64.powi(300) * 10.0;
        assert!(s.first_moments.iter().all(|f| f.iter().all(|x| x.abs() < bound)));
        assert_eq!(s, negative_statistics(&model, &sim, 20, &key).unwrap());
    }

    #[test]
    fn negative_phase_means_over_every_chain() {
        let model: Model = DeepParams::init(5, 4, 3, 1.5, 0).unwrap().into();
        let sim = SimConfig::new(1.0, 10.0, 20.0).unwrap();
        let key = StreamKey::new(1, Purpose::NegativePhase, 7);
        let s = negative_statistics(&model, &sim, 50, &key).unwrap();
        let samples = simulate_free(&model, &sim, 50, &key).unwrap();
        for (l, layer) in samples.layers.iter().enumerate() {
            for j in 0..layer.ncols() {
                let direct: f64 = layer.column(j).iter().sum::<f64>() / 50.0;
                assert!((s.first_moments[l][j] - direct).abs() < 1e-14);
            }
        }
        let (v, h1) = (&samples.layers[0], &samples.layers[1]);
        let direct: f64 = (0..50).map(|r| v[[r, 2]] * h1[[r, 3]]).sum::<f64>() / 50.0;
        assert!((s.second_moments[0][[2, 3]] - direct).abs() < 1e-14);
    }

    #[test]
    fn update_rule_examples() {
        let mut model: Model = UnrestrictedParams::init(2, 1.0, 0).unwrap().into();
        let before = model.clone();
        let pos = PhaseStatistics {
            first_moments: vec![array![0.5, 0.0]],
            second_moments: vec![array![[1.0, -1.0], [-1.0, 1.0]]],
        };
        apply_update(&mut model, &pos, &pos, 0.01).unwrap();
        assert_eq!(model, before);

        let neg = PhaseStatistics {
            first_moments: vec![array![0.1, 0.0]],
            second_moments: vec![array![[1.0, 0.0], [0.0, 1.0]]],
        };
        apply_update(&mut model, &pos, &neg, 0.01).unwrap();
        let Model::Unrestricted(p) = &model else { unreachable!() };
        assert_eq!(p.a[[0, 1]], -0.01);
        assert_eq!(p.a[[1, 0]], -0.01);
        assert_eq!(p.a[[0, 0]], 0.0);
        assert!((p.b[0] - 0.004).abs() < 1e-15);
        assert_eq!(p.j, before.fixed_matrices()[0].clone());
    }

    #[test]
    fn update_rejects_wrong_shapes() {
        let mut model: Model = RestrictedParams::init(3, 2, 1.0, 0).unwrap().into();
        let bad = PhaseStatistics {
            first_moments: vec![Array1::zeros(3), Array1::zeros(2)],
            second_moments: vec![Array2::zeros((2, 3))],
        };
        assert!(apply_update(&mut model, &bad, &bad, 0.1).is_err());
    }

    fn toy() -> (Dataset, TrainConfig) {
        let ds = synthetic_dataset(&SyntheticKind::TwoClusters { noise: 0.1 }, 40, 6, 2).unwrap();
        let cfg = TrainConfig {
            k: 0.05,
            m_batch: 10,
            epochs: 6,
            sim: SimConfig::new(1.0, 10.0, 20.0).unwrap(),
            eval_every: 3,
            checkpoint_every: 2,
            n_eval: 10,
            seed: 11,
        };
        (ds, cfg)
    }

    #[test]
    fn zero_epochs_return_the_input() {
        let (ds, mut cfg) = toy();
        cfg.epochs = 0;
        let model: Model = RestrictedParams::init(6, 4, 1.5, 1).unwrap().into();
        let out = train(model.clone(), 0, &ds, None, &cfg, &mut NoHooks).unwrap();
        assert_eq!(out.model, model);
        assert_eq!(out.log.len(), 1);
    }

    #[test]
    fn hooks_fire_on_schedule_and_resume_matches() {
        struct Recorder(Vec<u64>, Vec<u64>, Vec<Model>);
        impl TrainHooks for Recorder {
            fn on_metrics(&mut self, row: &LogRow) -> Result<()> {
                self.0.push(row.epoch);
                Ok(())
            }
            fn on_checkpoint(&mut self, epoch: u64, model: &Model) -> Result<()> {
                self.1.push(epoch);
                self.2.push(model.clone());
                Ok(())
            }
        }
        let (ds, cfg) = toy();
        let model: Model = DeepParams::init(6, 4, 3, 1.5, 1).unwrap().into();
        let mut rec = Recorder(vec![], vec![], vec![]);
        let full = train(model.clone(), 0, &ds, None, &cfg, &mut rec).unwrap();
        assert_eq!(rec.0, vec![0, 3, 6]);
        assert_eq!(rec.1, vec![0, 2, 4, 6]);

        let mid = rec.2[2].clone();
        let mut rec2 = Recorder(vec![], vec![], vec![]);
        let resumed = train(mid, 4, &ds, None, &cfg, &mut rec2).unwrap();
        assert_eq!(resumed.model, full.model);
        assert_eq!(rec2.0, vec![6]);
        assert_eq!(rec2.1, vec![6]);
        assert_eq!(resumed.log[0].report, full.log[2].report);
    }

    #[test]
    fn fixed_matrices_untouched_and_fields_move() {
        let (ds, cfg) = toy();
        let model: Model = RestrictedParams::init(6, 4, 1.5, 1).unwrap().into();
        let out = train(model.clone(), 0, &ds, None, &cfg, &mut NoHooks).unwrap();
        assert_eq!(out.model.fixed_matrices(), model.fixed_matrices());
        assert_ne!(out.model.fields(), model.fields());
    }

    #[test]
    fn epoch_on_zero_data_with_zero_gain_keeps_fields_small() {
        let ds = Dataset::new(Array2::zeros((20, 4)), None, "zeros").unwrap();
        let mut model: Model = UnrestrictedParams::init(4, 0.0, 1).unwrap().into();
        let cfg = TrainConfig { m_batch: 10, ..toy().1 };
        let cfg = TrainConfig { sim: SimConfig::reference(), ..cfg };
        train_epoch(&mut model, &ds, &cfg, 0).unwrap();
        let bound = cfg.k * 0.9f64.powi(100) * 4.0;
        assert!(model.fields()[0].iter().all(|b| b.abs() <= bound));
    }

    #[test]
    fn config_validation() {
        let (_, cfg) = toy();
        assert!(cfg.validate(40).is_ok());
        assert!(cfg.validate(5).is_err());
        assert!(TrainConfig { k: 0.0, ..cfg }.validate(40).is_err());
        assert!(TrainConfig { m_batch: 0, ..cfg }.validate(40).is_err());
        let reference = TrainConfig::reference(0);
        assert!(reference.validate(10_000).is_ok());
        assert_eq!((reference.k, reference.m_batch, reference.epochs), (0.01, 500, 300_000));
    }
}
