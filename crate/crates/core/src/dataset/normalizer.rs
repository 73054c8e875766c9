use serde::{Deserialize, Serialize};

use super::{DatasetError, TrialSequence};
use crate::geometry::Vec3;

/// Scales ranges multiplicatively (missing zeros stay zero) and maps positions
/// to a centered, unit-bounded box. Fit on training trials only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub range_scale: f64,
    pub position_center: Vec3,
    pub position_scale: f64,
}

impl Normalizer {
    pub fn identity() -> Self {
        Self {
            range_scale: 1.0,
            position_center: Vec3::zeros(),
            position_scale: 1.0,
        }
    }

    /// Range scale: largest training range. Center: centroid of all training
    /// label positions. Position scale: largest absolute centered coordinate.
    pub fn fit<'a>(trials: impl IntoIterator<Item = &'a TrialSequence>) -> Result<Self, DatasetError> {
        let trials: Vec<&TrialSequence> = trials.into_iter().collect();
        if trials.is_empty() || trials.iter().all(|t| t.len() == 0) {
            return Err(DatasetError::EmptyTrainingSet);
        }
        let range_scale = trials
            .iter()
            .flat_map(|t| t.frames.iter())
            .fold(0.0f64, |m, v| m.max(*v));
        if !(range_scale > 0.0) {
            return Err(DatasetError::DegenerateScale("all training ranges are zero"));
        }
        let mut sum = Vec3::zeros();
        let mut count = 0usize;
        for t in &trials {
            for c in t.labels.chunks_exact(3) {
                sum += Vec3::new(c[0], c[1], c[2]);
                count += 1;
            }
        }
        let center = sum / count as f64;
        let position_scale = trials
            .iter()
            .flat_map(|t| t.labels.chunks_exact(3))
            .fold(0.0f64, |m, c| {
                m.max((c[0] - center.x).abs())
                    .max((c[1] - center.y).abs())
                    .max((c[2] - center.z).abs())
            });
        if !(position_scale > 0.0) {
            return Err(DatasetError::DegenerateScale("all training positions coincide"));
        }
        Ok(Self {
            range_scale,
            position_center: center,
            position_scale,
        })
    }

    pub fn apply_ranges(&self, values: &mut [f64]) {
        for v in values {
            *v /= self.range_scale;
        }
    }

    pub fn apply_labels(&self, values: &mut [f64]) {
        for c in values.chunks_exact_mut(3) {
            for i in 0..3 {
                c[i] = (c[i] - self.position_center[i]) / self.position_scale;
            }
        }
    }

    pub fn invert_labels(&self, values: &mut [f64]) {
        for c in values.chunks_exact_mut(3) {
            for i in 0..3 {
                c[i] = c[i] * self.position_scale + self.position_center[i];
            }
        }
    }

    pub fn apply(&self, trial: &TrialSequence) -> TrialSequence {
        let mut out = trial.clone();
        self.apply_ranges(&mut out.frames);
        self.apply_labels(&mut out.labels);
        out
    }
}
