//! Synthetic trials: environments with occluders, vehicle trajectories, UWB
//! measurement logs with NLOS/outlier/dropout effects, and labels from a
//! simulated onboard localizer whose error depends on location.
//!
//! All randomness derives from one seed through named streams (see
//! [`crate::rng`]); equal seed and configuration reproduce every output bit
//! for bit.

mod bias_field;
mod campus;
mod environment;
mod io;
mod measurement;
mod trajectory;

pub use bias_field::{
    ground_truth_labels, osl_labels, BiasFieldParams, GaussianBump, LabelTrack, OslBiasField,
    XY_BIAS_LIMIT,
};
pub use campus::{generate_campus, generate_street_trajectory, CampusParams, StreetGrid};
pub use environment::{line_of_sight, Aabb, Environment};
pub use io::{fmt_real, read_trial, write_trial, TrialMeta};
pub use measurement::{
    line_of_sight_counts, sample_measurements, visible_anchor_counts, MeasurementRecord, NoiseModel, MIN_RANGE,
    PING_JITTER,
};
pub use trajectory::{generate_trajectory, trajectory_through, Trajectory};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{GeometryError, TagMount};
use crate::rng;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("bounds have zero volume")]
    DegenerateBounds,
    #[error("environment has no anchors")]
    NoAnchors,
    #[error("anchor {0} lies outside the environment bounds")]
    AnchorOutOfBounds(u32),
    #[error("duplicate anchor id {0}")]
    DuplicateAnchor(u32),
    #[error("duplicate tag id {0}")]
    DuplicateTag(u32),
    #[error("speed ({speed}) and dt ({dt}) must be positive")]
    BadMotion { speed: f64, dt: f64 },
    #[error("need at least 2 waypoints, got {0}")]
    TooFewWaypoints(usize),
    #[error("waypoints do not span any distance")]
    DegeneratePath,
    #[error("trajectory has no poses")]
    EmptyTrajectory,
    #[error("trajectory stamps must be strictly increasing")]
    NonIncreasingStamps,
    #[error("ping rate must be positive, got {0}")]
    BadRate(f64),
    #[error("invalid noise model {0:?}")]
    BadNoiseModel(NoiseModel),
    #[error("invalid bias field parameters")]
    BadBiasField,
    #[error("invalid campus layout: {0}")]
    BadCampus(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("{path}: {message}")]
    Format { path: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Parameters shared by every trial of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSettings {
    pub mounts: Vec<TagMount>,
    pub noise: NoiseModel,
    pub rate_hz: f64,
    pub waypoint_count: usize,
    pub speed: f64,
    pub dt: f64,
}

/// One simulated run through the environment.
#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub id: String,
    pub seed: u64,
    pub trajectory: Trajectory,
    pub measurements: Vec<MeasurementRecord>,
    pub ground_truth: LabelTrack,
    pub osl: LabelTrack,
}

pub fn trial_id(index: usize) -> String {
    format!("trial_{index:03}")
}

/// Per-trial seed derived from the experiment seed.
pub fn trial_seed(seed: u64, index: usize) -> u64 {
    rng::stream_key(seed, "trial", index as u64)
}

pub fn check_mounts(mounts: &[TagMount]) -> Result<(), SimError> {
    for (i, m) in mounts.iter().enumerate() {
        if mounts[..i].iter().any(|o| o.tag_id == m.tag_id) {
            return Err(SimError::DuplicateTag(m.tag_id));
        }
    }
    Ok(())
}

/// Simulates trial `index` on a street grid: trajectory, ranges, and labels.
pub fn simulate_trial(
    env: &Environment,
    grid: &StreetGrid,
    settings: &TrialSettings,
    field: &OslBiasField,
    index: usize,
    seed: u64,
) -> Result<Trial, SimError> {
    check_mounts(&settings.mounts)?;
    let tseed = trial_seed(seed, index);
    let trajectory = generate_street_trajectory(grid, settings.waypoint_count, settings.speed, settings.dt, tseed)?;
    let measurements = sample_measurements(env, &trajectory, &settings.noise, settings.rate_hz, &settings.mounts, tseed)?;
    let ground_truth = ground_truth_labels(&trajectory, &settings.mounts);
    let osl = osl_labels(&trajectory, field, &settings.mounts);
    Ok(Trial {
        id: trial_id(index),
        seed: tseed,
        trajectory,
        measurements,
        ground_truth,
        osl,
    })
}
