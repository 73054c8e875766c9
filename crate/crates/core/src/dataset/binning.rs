use serde::{Deserialize, Serialize};

use super::DatasetError;
use crate::sim::MeasurementRecord;

/// Width of one input frame, seconds.
pub const BIN_WIDTH: f64 = 0.050;

/// Slot order of a frame: all anchors of the first tag, then all anchors of
/// the next tag, and so on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub tag_ids: Vec<u32>,
    pub anchor_ids: Vec<u32>,
}

impl Layout {
    pub fn new(tag_ids: Vec<u32>, anchor_ids: Vec<u32>) -> Self {
        Self { tag_ids, anchor_ids }
    }

    pub fn input_dim(&self) -> usize {
        self.tag_ids.len() * self.anchor_ids.len()
    }

    pub fn label_dim(&self) -> usize {
        3 * self.tag_ids.len()
    }

    pub fn n_tags(&self) -> usize {
        self.tag_ids.len()
    }

    pub fn slot(&self, tag_id: u32, anchor_id: u32) -> Option<usize> {
        let t = self.tag_ids.iter().position(|&id| id == tag_id)?;
        let a = self.anchor_ids.iter().position(|&id| id == anchor_id)?;
        Some(t * self.anchor_ids.len() + a)
    }

    /// Same anchors, only the listed tags.
    pub fn with_tags(&self, tag_ids: &[u32]) -> Layout {
        Layout::new(tag_ids.to_vec(), self.anchor_ids.clone())
    }
}

/// Ranges observed in one time bin; `0.0` marks a missing measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameVector {
    /// Bin center, seconds.
    pub stamp: f64,
    pub values: Vec<f64>,
}

/// Drops records whose tag or anchor is not part of `layout`.
pub fn filter_to_layout(log: &[MeasurementRecord], layout: &Layout) -> Vec<MeasurementRecord> {
    log.iter()
        .copied()
        .filter(|m| layout.slot(m.tag_id, m.anchor_id).is_some())
        .collect()
}

/// Partitions the log into consecutive `bin_width` bins starting at the first
/// stamp. Each slot keeps the latest measurement in its bin; slots without a
/// measurement are zero, and bins with no measurement at all still produce an
/// all-zero frame.
pub fn bin_measurements(
    log: &[MeasurementRecord],
    bin_width: f64,
    layout: &Layout,
) -> Result<Vec<FrameVector>, DatasetError> {
    if !(bin_width > 0.0) {
        return Err(DatasetError::BadBinWidth(bin_width));
    }
    let mut slots = Vec::with_capacity(log.len());
    for (index, m) in log.iter().enumerate() {
        let slot = layout.slot(m.tag_id, m.anchor_id).ok_or(DatasetError::UnknownId {
            index,
            stamp: m.stamp,
            tag_id: m.tag_id,
            anchor_id: m.anchor_id,
        })?;
        if !m.stamp.is_finite() || !(m.range > 0.0) {
            return Err(DatasetError::BadRecord { index, stamp: m.stamp });
        }
        slots.push((m.stamp, slot, m.range));
    }
    if slots.is_empty() {
        return Ok(Vec::new());
    }
    // Stable: among equal stamps the later record in the log wins.
    slots.sort_by(|a, b| a.0.total_cmp(&b.0));
    let t0 = slots[0].0;
    let t_last = slots[slots.len() - 1].0;
    let n_bins = ((t_last - t0) / bin_width).floor() as usize + 1;
    let dim = layout.input_dim();
    let mut frames: Vec<FrameVector> = (0..n_bins)
        .map(|k| FrameVector {
            stamp: t0 + (k as f64 + 0.5) * bin_width,
            values: vec![0.0; dim],
        })
        .collect();
    for (stamp, slot, range) in slots {
        let k = (((stamp - t0) / bin_width).floor() as usize).min(n_bins - 1);
        frames[k].values[slot] = range;
    }
    Ok(frames)
}
