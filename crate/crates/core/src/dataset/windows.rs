use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{DatasetError, LabeledFrame, Normalizer};

/// All frames and labels of one trial, row-major (`K x input_dim`, `K x label_dim`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSequence {
    pub id: String,
    pub input_dim: usize,
    pub label_dim: usize,
    pub stamps: Vec<f64>,
    pub frames: Vec<f64>,
    pub labels: Vec<f64>,
}

impl TrialSequence {
    pub fn from_labeled(id: impl Into<String>, pairs: &[LabeledFrame]) -> Result<Self, DatasetError> {
        let input_dim = pairs.first().map_or(0, |p| p.frame.values.len());
        let label_dim = pairs.first().map_or(0, |p| p.label.values.len());
        let mut seq = TrialSequence {
            id: id.into(),
            input_dim,
            label_dim,
            stamps: Vec::with_capacity(pairs.len()),
            frames: Vec::with_capacity(pairs.len() * input_dim),
            labels: Vec::with_capacity(pairs.len() * label_dim),
        };
        for (k, p) in pairs.iter().enumerate() {
            if p.frame.values.len() != input_dim || p.label.values.len() != label_dim {
                return Err(DatasetError::RaggedFrames(k));
            }
            seq.stamps.push(p.frame.stamp);
            seq.frames.extend_from_slice(&p.frame.values);
            seq.labels.extend_from_slice(&p.label.values);
        }
        Ok(seq)
    }

    /// Number of frames `K`.
    pub fn len(&self) -> usize {
        self.stamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stamps.is_empty()
    }

    pub fn frame(&self, k: usize) -> &[f64] {
        &self.frames[k * self.input_dim..(k + 1) * self.input_dim]
    }

    pub fn label(&self, k: usize) -> &[f64] {
        &self.labels[k * self.label_dim..(k + 1) * self.label_dim]
    }

    /// `M = K - S + 1`, or `None` when the trial is shorter than `s`.
    pub fn window_count(&self, s: usize) -> Option<usize> {
        (s >= 1 && self.len() >= s).then(|| self.len() - s + 1)
    }
}

/// Position of one window: trial index and first frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowRef {
    pub trial: usize,
    pub start: usize,
}

/// Stride-1 windows of length `S` over normalized trials. Windows are slices
/// of the trial arrays, so every window is contiguous row-major `S x dim`
/// data and no window straddles two trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowedDataset {
    pub s: usize,
    pub input_dim: usize,
    pub label_dim: usize,
    pub normalizer: Normalizer,
    pub trials: Vec<TrialSequence>,
    pub windows: Vec<WindowRef>,
}

impl WindowedDataset {
    /// Normalizes `trials` with `normalizer` and enumerates their windows.
    /// Fails if any trial has fewer than `s` frames.
    pub fn build(trials: &[TrialSequence], s: usize, normalizer: Normalizer) -> Result<Self, DatasetError> {
        if s == 0 {
            return Err(DatasetError::ZeroWindow);
        }
        let input_dim = trials.first().map_or(0, |t| t.input_dim);
        let label_dim = trials.first().map_or(0, |t| t.label_dim);
        let mut windows = Vec::new();
        let mut normalized = Vec::with_capacity(trials.len());
        for (ti, t) in trials.iter().enumerate() {
            if t.input_dim != input_dim || t.label_dim != label_dim {
                return Err(DatasetError::RaggedFrames(ti));
            }
            let m = t.window_count(s).ok_or(DatasetError::TooShort {
                trial: t.id.clone(),
                k: t.len(),
                s,
            })?;
            windows.extend((0..m).map(|start| WindowRef { trial: ti, start }));
            normalized.push(normalizer.apply(t));
        }
        Ok(Self {
            s,
            input_dim,
            label_dim,
            normalizer,
            trials: normalized,
            windows,
        })
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    /// Input window `S x input_dim`, row-major.
    pub fn x(&self, i: usize) -> &[f64] {
        let w = self.windows[i];
        let t = &self.trials[w.trial];
        &t.frames[w.start * self.input_dim..(w.start + self.s) * self.input_dim]
    }

    /// Label window `S x label_dim`, row-major.
    pub fn y(&self, i: usize) -> &[f64] {
        let w = self.windows[i];
        let t = &self.trials[w.trial];
        &t.labels[w.start * self.label_dim..(w.start + self.s) * self.label_dim]
    }

    /// Copies the windows at `indices` into contiguous batch buffers
    /// `(B x S x input_dim, B x S x label_dim)`.
    pub fn gather(&self, indices: &[usize]) -> (Vec<f64>, Vec<f64>) {
        let mut xs = Vec::with_capacity(indices.len() * self.s * self.input_dim);
        let mut ys = Vec::with_capacity(indices.len() * self.s * self.label_dim);
        for &i in indices {
            xs.extend_from_slice(self.x(i));
            ys.extend_from_slice(self.y(i));
        }
        (xs, ys)
    }
}

/// Windows over a single trial's labeled frames, without normalization.
pub fn make_windows(pairs: &[LabeledFrame], s: usize) -> Result<WindowedDataset, DatasetError> {
    let seq = TrialSequence::from_labeled("trial", pairs)?;
    WindowedDataset::build(&[seq], s, Normalizer::identity())
}

/// Splits trials by id into `(train, test)`, preserving the id-list order.
pub fn split_trials<'a>(
    trials: &'a [TrialSequence],
    train_ids: &[String],
    test_ids: &[String],
) -> Result<(Vec<&'a TrialSequence>, Vec<&'a TrialSequence>), DatasetError> {
    let train: BTreeSet<&String> = train_ids.iter().collect();
    if let Some(id) = test_ids.iter().find(|id| train.contains(id)) {
        return Err(DatasetError::OverlappingSplit(id.clone()));
    }
    let pick = |ids: &[String]| -> Result<Vec<&'a TrialSequence>, DatasetError> {
        ids.iter()
            .map(|id| {
                trials
                    .iter()
                    .find(|t| &t.id == id)
                    .ok_or_else(|| DatasetError::UnknownTrial(id.clone()))
            })
            .collect()
    };
    Ok((pick(train_ids)?, pick(test_ids)?))
}
