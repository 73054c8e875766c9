use uwbloc_autodiff::{ParamStore, Tape, Tensor};
use uwbloc_core::dataset::TrialSequence;

use crate::{ModelConfig, ModelError};

/// Windows per forward pass during inference.
pub const INFER_BATCH: usize = 64;

/// Predictions for `n` stacked windows `[n, s, input_dim]`, returned as
/// `[n, s, label_dim]`.
pub fn predict_windows(
    model: &ModelConfig,
    params: &ParamStore,
    xs: &[f64],
    n: usize,
    s: usize,
) -> Result<Vec<f64>, ModelError> {
    let tape = Tape::new();
    let bound = params.bind_frozen(&tape);
    let x = tape.constant(Tensor::new(vec![n, s, model.input_dim()], xs.to_vec())?);
    Ok(model.forward(&bound, x)?.value().data().to_vec())
}

/// Per-frame predictions for a whole (normalized) trial, `K x label_dim`.
/// Frame `t >= s - 1` takes the last step of the window ending at `t`;
/// earlier frames take their own step of the first window.
pub fn predict_trial(
    model: &ModelConfig,
    params: &ParamStore,
    trial: &TrialSequence,
    s: usize,
) -> Result<Vec<f64>, ModelError> {
    let (k, din, dl) = (trial.len(), trial.input_dim, trial.label_dim);
    if k < s || s == 0 {
        return Err(uwbloc_core::dataset::DatasetError::TooShort {
            trial: trial.id.clone(),
            k,
            s,
        }
        .into());
    }
    let m = k - s + 1;
    let mut out = vec![0.0; k * dl];
    let mut start = 0;
    while start < m {
        let n = INFER_BATCH.min(m - start);
        let xs: Vec<f64> = (start..start + n)
            .flat_map(|w| trial.frames[w * din..(w + s) * din].iter().copied())
            .collect();
        let pred = predict_windows(model, params, &xs, n, s)?;
        for i in 0..n {
            let w = start + i;
            if w == 0 {
                out[..s * dl].copy_from_slice(&pred[..s * dl]);
            } else {
                let t = w + s - 1;
                let src = (i * s + s - 1) * dl;
                out[t * dl..(t + 1) * dl].copy_from_slice(&pred[src..src + dl]);
            }
        }
        start += n;
    }
    Ok(out)
}
