use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Aabb, SimError, Trajectory};
use crate::geometry::{tag_world_position, TagMount, Vec3};
use crate::rng;

/// Hard ceiling on the horizontal bias magnitude, meters.
pub const XY_BIAS_LIMIT: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianBump {
    pub center: Vec3,
    pub amplitude: Vec3,
    pub length_scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BiasFieldParams {
    pub bumps: usize,
    /// Per-bump vertical amplitude is drawn from `±z_amplitude`.
    pub z_amplitude: f64,
    /// Per-bump horizontal amplitude components are drawn from `±xy_amplitude`.
    pub xy_amplitude: f64,
    pub length_scale_min: f64,
    pub length_scale_max: f64,
}

impl Default for BiasFieldParams {
    fn default() -> Self {
        Self {
            bumps: 12,
            z_amplitude: 3.0,
            xy_amplitude: 0.4,
            length_scale_min: 20.0,
            length_scale_max: 60.0,
        }
    }
}

/// Location-dependent error of an onboard localizer running against a prior
/// map: a smooth sum of Gaussian bumps in the horizontal plane, dominated by
/// its vertical component. The horizontal part is squashed so its norm stays
/// strictly below [`XY_BIAS_LIMIT`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OslBiasField {
    pub bumps: Vec<GaussianBump>,
}

impl OslBiasField {
    pub fn zero() -> Self {
        Self { bumps: Vec::new() }
    }

    pub fn generate(bounds: &Aabb, params: &BiasFieldParams, seed: u64) -> Result<Self, SimError> {
        if !(params.length_scale_min > 0.0) || params.length_scale_max < params.length_scale_min {
            return Err(SimError::BadBiasField);
        }
        let mut r = rng::stream(seed, "bias-field");
        let sym = |r: &mut rng::StreamRng, a: f64| if a > 0.0 { r.random_range(-a..=a) } else { 0.0 };
        let bumps = (0..params.bumps)
            .map(|_| {
                let center = Vec3::new(
                    r.random_range(bounds.min.x..=bounds.max.x),
                    r.random_range(bounds.min.y..=bounds.max.y),
                    bounds.center().z,
                );
                let amplitude = Vec3::new(
                    sym(&mut r, params.xy_amplitude),
                    sym(&mut r, params.xy_amplitude),
                    sym(&mut r, params.z_amplitude),
                );
                let length_scale = r.random_range(params.length_scale_min..=params.length_scale_max);
                GaussianBump {
                    center,
                    amplitude,
                    length_scale,
                }
            })
            .collect();
        Ok(Self { bumps })
    }

    /// Bias at a map position. Depends only on the horizontal location.
    pub fn at(&self, p: &Vec3) -> Vec3 {
        let mut b = Vec3::zeros();
        for bump in &self.bumps {
            let dx = p.x - bump.center.x;
            let dy = p.y - bump.center.y;
            let w = (-(dx * dx + dy * dy) / (2.0 * bump.length_scale * bump.length_scale)).exp();
            b += bump.amplitude * w;
        }
        let xy = b.x.hypot(b.y);
        if xy > 0.0 {
            let squash = XY_BIAS_LIMIT * (xy / XY_BIAS_LIMIT).tanh() / xy;
            b.x *= squash;
            b.y *= squash;
        }
        b
    }
}

/// Tag positions over time, one entry per stamp and per mounted tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelTrack {
    pub tag_ids: Vec<u32>,
    pub stamps: Vec<f64>,
    /// `positions[k][j]` is tag `tag_ids[j]` at `stamps[k]`.
    pub positions: Vec<Vec<Vec3>>,
}

impl LabelTrack {
    pub fn len(&self) -> usize {
        self.stamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stamps.is_empty()
    }

    /// Linear interpolation at `t`; the flag is true when `t` fell outside the
    /// track's span and was clamped to it.
    pub fn sample(&self, t: f64) -> Option<(Vec<Vec3>, bool)> {
        let n = self.stamps.len();
        if n == 0 {
            return None;
        }
        if t <= self.stamps[0] {
            return Some((self.positions[0].clone(), t < self.stamps[0]));
        }
        if t >= self.stamps[n - 1] {
            return Some((self.positions[n - 1].clone(), t > self.stamps[n - 1]));
        }
        let hi = self.stamps.partition_point(|s| *s <= t).min(n - 1);
        let lo = hi - 1;
        let u = (t - self.stamps[lo]) / (self.stamps[hi] - self.stamps[lo]);
        let out = self.positions[lo]
            .iter()
            .zip(&self.positions[hi])
            .map(|(a, b)| a + (b - a) * u)
            .collect();
        Some((out, false))
    }

    /// Keeps only the listed tags, in the given order.
    pub fn select_tags(&self, tag_ids: &[u32]) -> Option<LabelTrack> {
        let idx: Option<Vec<usize>> = tag_ids
            .iter()
            .map(|id| self.tag_ids.iter().position(|t| t == id))
            .collect();
        let idx = idx?;
        Some(LabelTrack {
            tag_ids: tag_ids.to_vec(),
            stamps: self.stamps.clone(),
            positions: self
                .positions
                .iter()
                .map(|row| idx.iter().map(|&j| row[j]).collect())
                .collect(),
        })
    }
}

/// True tag positions at every trajectory tick.
pub fn ground_truth_labels(traj: &Trajectory, mounts: &[TagMount]) -> LabelTrack {
    osl_labels(traj, &OslBiasField::zero(), mounts)
}

/// Tag positions as an onboard localizer on a biased prior map reports them:
/// truth plus the field's bias at the tag's location.
pub fn osl_labels(traj: &Trajectory, field: &OslBiasField, mounts: &[TagMount]) -> LabelTrack {
    let positions = traj
        .poses
        .iter()
        .map(|pose| {
            mounts
                .iter()
                .map(|m| {
                    let p = tag_world_position(pose, m);
                    p + field.at(&p)
                })
                .collect()
        })
        .collect();
    LabelTrack {
        tag_ids: mounts.iter().map(|m| m.tag_id).collect(),
        stamps: traj.poses.iter().map(|p| p.stamp).collect(),
        positions,
    }
}
