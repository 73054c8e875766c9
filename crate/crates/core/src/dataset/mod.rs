//! From measurement logs to training windows: 50 ms binning into zero-filled
//! range vectors, label attachment at bin centers, stride-1 windows of length
//! `S` (`M = K - S + 1` per trial of `K` frames), and normalization.

mod binning;
mod io;
mod labels;
mod normalizer;
mod windows;

pub use binning::{bin_measurements, filter_to_layout, FrameVector, Layout, BIN_WIDTH};
pub use io::{frames_csv, read_dataset, write_dataset, DatasetHeader, TrialEntry, DATASET_MAGIC};
pub use labels::{attach_labels, LabelVector, LabeledFrame};
pub use normalizer::Normalizer;
pub use windows::{make_windows, split_trials, TrialSequence, WindowRef, WindowedDataset};

use thiserror::Error;

use crate::sim::{LabelTrack, MeasurementRecord};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("record {index} (t={stamp}) has unknown tag {tag_id} / anchor {anchor_id}")]
    UnknownId {
        index: usize,
        stamp: f64,
        tag_id: u32,
        anchor_id: u32,
    },
    #[error("record {index} (t={stamp}) has a non-finite stamp or non-positive range")]
    BadRecord { index: usize, stamp: f64 },
    #[error("bin width must be positive, got {0}")]
    BadBinWidth(f64),
    #[error("label source is empty")]
    EmptyLabels,
    #[error("frame {0} has inconsistent dimensions")]
    RaggedFrames(usize),
    #[error("window length must be at least 1")]
    ZeroWindow,
    #[error("trial {trial} has K={k} frames, fewer than S={s}")]
    TooShort { trial: String, k: usize, s: usize },
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("degenerate normalizer: {0}")]
    DegenerateScale(&'static str),
    #[error("trial {0} is in both the training and test split")]
    OverlappingSplit(String),
    #[error("unknown trial {0}")]
    UnknownTrial(String),
    #[error("{0}")]
    Io(String),
}

/// Bins a trial's log (restricted to `layout`) and attaches labels from
/// `labels` (restricted to the layout's tags).
pub fn trial_sequence(
    id: &str,
    log: &[MeasurementRecord],
    labels: &LabelTrack,
    layout: &Layout,
) -> Result<TrialSequence, DatasetError> {
    let frames = bin_measurements(&filter_to_layout(log, layout), BIN_WIDTH, layout)?;
    let track = labels.select_tags(&layout.tag_ids).ok_or(DatasetError::EmptyLabels)?;
    let pairs = attach_labels(frames, &track)?;
    let mut seq = TrialSequence::from_labeled(id, &pairs)?;
    seq.input_dim = layout.input_dim();
    seq.label_dim = layout.label_dim();
    Ok(seq)
}
