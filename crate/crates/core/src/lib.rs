//! Core building blocks for range-only UWB localization experiments.
//!
//! - [`geometry`]: poses, tag mounts, anchors and the scaled/biased ranging model.
//! - [`sim`]: synthetic environments, trajectories, measurement logs and biased
//!   onboard-localization labels.
//! - [`dataset`]: fixed-width time binning, label attachment, sliding windows and
//!   normalization.
//! - [`go`]: the classical sliding-window robust least-squares localizer.
//! - [`eval`]: RMSE and error-distribution reports, comparison tables, ablation grids.

pub mod dataset;
pub mod eval;
pub mod geometry;
pub mod go;
pub mod rng;
pub mod sim;

pub use geometry::{AnchorParams, Pose, Rotation, TagMount, Vec3};
