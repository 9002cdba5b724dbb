//! Chaotic recurrent networks trained as generative models.
//!
//! A network with fixed random couplings `J` (or `W`, `W~` for layered
//! models) in its chaotic regime is trained with contrastive Hebbian
//! updates of a symmetric coupling `A` and biases, so that its visible
//! activity at a target time `T`, started from noise, looks like data.
//!
//! - [`params`]: the three architectures and the integration settings.
//! - [`dynamics`]: Euler integration, clamped closed forms, chaos probe.
//! - [`training`]: phase statistics, updates and the epoch loop.
//! - [`metrics`]: `E2`, `Es`, `ER` and `EAAI`.
//! - [`dataio`]: IDX, synthetic sets, minibatches, PGM and raw matrices.
//! - [`checkpoint`]: versioned, checksummed model snapshots.
//!
//! The guide in `book/` walks through each piece with runnable examples.

pub mod checkpoint;
pub mod dataio;
pub mod dynamics;
pub mod error;
pub mod metrics;
pub mod params;
pub mod rng;
pub mod training;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/dynamics.md")]
    mod dynamics {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/data.md")]
    mod data {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../book/src/formats.md")]
    mod formats {}
}
