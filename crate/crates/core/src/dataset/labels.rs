use serde::{Deserialize, Serialize};

use super::{DatasetError, FrameVector};
use crate::sim::LabelTrack;

/// Positions of all tags at one frame stamp, `[x0, y0, z0, x1, y1, z1, ...]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelVector {
    pub stamp: f64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledFrame {
    pub frame: FrameVector,
    pub label: LabelVector,
    /// The frame stamp lay outside the label track and was clamped to its ends.
    pub clamped: bool,
}

/// Samples the label track at every frame's bin-center stamp.
pub fn attach_labels(frames: Vec<FrameVector>, track: &LabelTrack) -> Result<Vec<LabeledFrame>, DatasetError> {
    if track.is_empty() {
        return Err(DatasetError::EmptyLabels);
    }
    frames
        .into_iter()
        .map(|frame| {
            let (positions, clamped) = track.sample(frame.stamp).ok_or(DatasetError::EmptyLabels)?;
            let values = positions.iter().flat_map(|p| [p.x, p.y, p.z]).collect();
            Ok(LabeledFrame {
                label: LabelVector {
                    stamp: frame.stamp,
                    values,
                },
                frame,
                clamped,
            })
        })
        .collect()
}
