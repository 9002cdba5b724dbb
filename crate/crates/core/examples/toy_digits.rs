//! Trains a small restricted model on 8x8 procedural digits and prints the
//! metric log, then the second-moment error at T/10, T and 100T.
//!
//! `cargo run --release --example toy_digits -- [seed] [epochs]`

use chaosgen::dataio::{synthetic_dataset, SyntheticKind};
use chaosgen::metrics::{error_second_moment, CSV_HEADER};
use chaosgen::params::{Model, RestrictedParams, SimConfig};
use chaosgen::rng::{Purpose, StreamKey};
use chaosgen::training::{train, LogRow, TrainConfig, TrainHooks};
use chaosgen::dynamics::simulate_free_at;

struct Print;

impl TrainHooks for Print {
    fn on_metrics(&mut self, row: &LogRow) -> chaosgen::Result<()> {
        println!("{}", row.csv());
        Ok(())
    }
}

fn main() -> chaosgen::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let epochs: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(5000);

    let data = synthetic_dataset(&SyntheticKind::DownscaledDigits { source: None }, 3000, 64, seed)?;
    let (train_set, eval_set) = data.split(2000)?;
    let cfg = TrainConfig {
        k: 0.01,
        m_batch: 64,
        epochs,
        sim: SimConfig::reference(),
        eval_every: 500,
        checkpoint_every: 0,
        n_eval: 1000,
        seed,
    };
    let model: Model = RestrictedParams::init(64, 64, 1.5, seed)?.into();
    println!("{CSV_HEADER}");
    let out = train(model, 0, &train_set, Some(&eval_set), &cfg, &mut Print)?;

    let horizons = [10.0, 100.0, 10_000.0];
    let key = StreamKey::new(seed, Purpose::Generate, epochs);
    let sets = simulate_free_at(&out.model, &cfg.sim, 1000, &key, &horizons)?;
    for (t, s) in horizons.iter().zip(&sets) {
        let e2 = error_second_moment(s.visible().view(), eval_set.samples.view())?;
        println!("t={t} E2={e2:.6e}");
    }
    Ok(())
}
