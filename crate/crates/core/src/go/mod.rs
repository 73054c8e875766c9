//! Classical range-only localizer: sliding-window Levenberg–Marquardt over
//! Huber-weighted range residuals with known anchors and a constant-velocity
//! motion prior.
//!
//! Each tag gets its own position per frame. When two tags are mounted
//! rigidly, a stiff residual keeps their separation at the known distance in
//! every frame where both have ranges.

mod pipeline;
mod solver;

pub use pipeline::{estimate_csv, run_go_pipeline, GoRun, GoTrajectory};
pub use solver::{solve_window, GoModel, GoSolution};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::DatasetError;
use crate::eval::EvalError;
use crate::geometry::{AnchorParams, Vec3};
use crate::sim::MeasurementRecord;

/// Standard deviation of the rigid tag-separation residual, meters.
pub const TAG_LINK_SIGMA: f64 = 0.01;
/// Below this anchor distance the range Jacobian is undefined.
pub const SINGULAR_DISTANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum GoError {
    #[error("window has no range measurements")]
    NoMeasurements,
    #[error("invalid GO configuration: {0}")]
    BadConfig(&'static str),
    #[error("anchor {0} is missing from the environment")]
    UnknownAnchor(u32),
    #[error("tag {0} has no mount")]
    UnknownTag(u32),
    #[error("initial guess has {got} positions, expected {expected}")]
    BadInit { got: usize, expected: usize },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitMode {
    /// Every window starts at the anchor centroid.
    Centroid,
    /// Overlapping frames reuse the previous window's solution; new frames
    /// start at its last position.
    PreviousSolution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GoConfig {
    pub window_frames: usize,
    pub huber_delta: f64,
    pub max_iters: usize,
    pub rel_tol: f64,
    pub lm_lambda0: f64,
    /// Standard deviation of the second difference of positions, meters per frame.
    pub motion_sigma: f64,
    pub init_mode: InitMode,
}

impl Default for GoConfig {
    fn default() -> Self {
        Self {
            window_frames: 20,
            huber_delta: 0.5,
            max_iters: 50,
            rel_tol: 1e-9,
            lm_lambda0: 1e-3,
            motion_sigma: 0.05,
            init_mode: InitMode::PreviousSolution,
        }
    }
}

impl GoConfig {
    pub fn validate(&self) -> Result<(), GoError> {
        if self.window_frames < 2 {
            return Err(GoError::BadConfig("window_frames must be at least 2"));
        }
        if self.max_iters == 0 {
            return Err(GoError::BadConfig("max_iters must be positive"));
        }
        for (v, what) in [
            (self.huber_delta, "huber_delta must be positive"),
            (self.rel_tol, "rel_tol must be positive"),
            (self.lm_lambda0, "lm_lambda0 must be positive"),
            (self.motion_sigma, "motion_sigma must be positive"),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(GoError::BadConfig(what));
            }
        }
        Ok(())
    }
}

/// `measured - (scale * |position - anchor| + bias)`.
pub fn residual(position: &Vec3, record: &MeasurementRecord, anchor: &AnchorParams) -> f64 {
    record.range - anchor.range_from(position)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeJacobian {
    /// Gradient of the residual with respect to the position.
    pub gradient: Vec3,
    /// The position coincides with the anchor; the gradient is set to zero.
    pub singular: bool,
}

pub fn residual_jacobian(position: &Vec3, anchor: &AnchorParams) -> RangeJacobian {
    let d = position - anchor.position;
    let n = d.norm();
    if n <= SINGULAR_DISTANCE {
        return RangeJacobian { gradient: Vec3::zeros(), singular: true };
    }
    RangeJacobian { gradient: -anchor.scale * d / n, singular: false }
}

/// IRLS weight of the Huber kernel.
pub fn huber_weight(r: f64, delta: f64) -> f64 {
    let a = r.abs();
    if a <= delta {
        1.0
    } else {
        delta / a
    }
}

/// Huber loss: `r^2 / 2` inside `delta`, linear outside.
pub fn huber_cost(r: f64, delta: f64) -> f64 {
    let a = r.abs();
    if a <= delta {
        0.5 * r * r
    } else {
        delta * (a - 0.5 * delta)
    }
}
