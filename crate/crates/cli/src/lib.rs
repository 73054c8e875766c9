//! Batch pipeline for range-only UWB localization experiments.
//!
//! Each step reads the artifacts of the previous one from a working
//! directory and stamps its outputs with the config hash and seed:
//! [`simulate`](simulate::simulate) → [`prepare`](prepare::prepare) →
//! [`train_models`](learn::train_models) and [`baseline`](baseline::baseline)
//! → [`evaluate`](evaluate::evaluate); [`ablate`](ablate::ablate) retrains over
//! the label-source × tag-count grid; [`overfit_probe`](probe::overfit_probe)
//! checks that the desk Mamba can memorize a small clean set.

pub mod ablate;
pub mod baseline;
pub mod config;
mod error;
pub mod evaluate;
pub mod learn;
pub mod prepare;
pub mod probe;
mod run;
pub mod simulate;

pub use config::{ModelKind, RunConfig};
pub use error::CliError;
pub use run::{Paths, Run};
