use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use uwbloc_autodiff::{Adam, AdamConfig, ParamStore, Tape, Tensor, LR0, LR_FACTOR, LR_STEP};
use uwbloc_core::dataset::WindowedDataset;

use crate::layers::mse_loss;
use crate::{ModelConfig, ModelError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch: usize,
    pub epochs: usize,
    pub lr0: f64,
    /// Epochs between learning-rate reductions.
    pub lr_step: usize,
    pub lr_factor: f64,
    pub repeats: usize,
    /// Windows drawn (without replacement) per epoch; 0 uses all of them.
    pub windows_per_epoch: usize,
    /// Gradient shards per batch, evaluated in parallel and summed in a
    /// fixed order; 1 trains on a single tape.
    pub shards: usize,
    /// Stop once an epoch's mean training loss falls below this; 0 disables.
    pub stop_below: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch: 64,
            epochs: 150,
            lr0: LR0,
            lr_step: LR_STEP,
            lr_factor: LR_FACTOR,
            repeats: 5,
            windows_per_epoch: 0,
            shards: 1,
            stop_below: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn lr(&self, epoch: usize) -> f64 {
        self.lr0 * self.lr_factor.powi((epoch / self.lr_step.max(1)) as i32)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.batch == 0 || self.epochs == 0 || self.repeats == 0 || self.shards == 0 || self.lr_step == 0 {
            return Err(ModelError::BadConfig("train sizes must be positive".into()));
        }
        if !(self.lr0 > 0.0 && self.lr_factor > 0.0) {
            return Err(ModelError::BadConfig("learning rate and factor must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub test_rmse: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ParamStore,
    pub log: Vec<EpochLog>,
    pub steps: u64,
    pub seed: u64,
}

/// Mean squared error and its gradients for one batch of windows.
pub fn batch_gradients(
    model: &ModelConfig,
    params: &ParamStore,
    data: &WindowedDataset,
    indices: &[usize],
    weight: f64,
) -> Result<(f64, ParamStore), ModelError> {
    let (xs, ys) = data.gather(indices);
    let b = indices.len();
    let tape = Tape::new();
    let bound = params.bind(&tape);
    let x = tape.constant(Tensor::new(vec![b, data.s, data.input_dim], xs)?);
    let y = tape.constant(Tensor::new(vec![b, data.s, data.label_dim], ys)?);
    let pred = model.forward(&bound, x)?;
    let loss = mse_loss(pred, y)?.scale(weight);
    let value = loss.value().data()[0];
    let grads = tape.backward(loss)?;
    Ok((value, bound.grads(&grads)))
}

fn step_gradients(
    model: &ModelConfig,
    params: &ParamStore,
    data: &WindowedDataset,
    batch: &[usize],
    shards: usize,
) -> Result<(f64, ParamStore), ModelError> {
    if shards <= 1 || batch.len() < 2 {
        return batch_gradients(model, params, data, batch, 1.0);
    }
    let size = batch.len().div_ceil(shards);
    let parts: Vec<&[usize]> = batch.chunks(size).collect();
    let results: Vec<Result<(f64, ParamStore), ModelError>> = parts
        .par_iter()
        .map(|idx| batch_gradients(model, params, data, idx, idx.len() as f64 / batch.len() as f64))
        .collect();
    let mut total = 0.0;
    let mut sum: Option<ParamStore> = None;
    for r in results {
        let (l, g) = r?;
        total += l;
        match &mut sum {
            Some(s) => s.add_assign(&g)?,
            None => sum = Some(g),
        }
    }
    Ok((total, sum.expect("at least one shard")))
}

/// Trains one model from `seed`: parameters are initialized from `seed`, and
/// windows are reshuffled every epoch by a generator seeded with `seed`.
/// `on_epoch(epoch, params)` may return a test RMSE for the log.
pub fn train<F>(
    model: &ModelConfig,
    data: &WindowedDataset,
    cfg: &TrainConfig,
    seed: u64,
    mut on_epoch: F,
) -> Result<TrainOutcome, ModelError>
where
    F: FnMut(usize, &ParamStore) -> Result<Option<f64>, ModelError>,
{
    cfg.validate()?;
    model.validate()?;
    if data.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    if data.input_dim != model.input_dim() || data.label_dim != model.label_dim() {
        return Err(ModelError::BadConfig(format!(
            "dataset dims ({}, {}) do not match model dims ({}, {})",
            data.input_dim,
            data.label_dim,
            model.input_dim(),
            model.label_dim()
        )));
    }
    let mut params = model.init(seed);
    let mut adam = Adam::new(&params, AdamConfig::default());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let per_epoch = match cfg.windows_per_epoch {
        0 => data.len(),
        n => n.min(data.len()),
    };
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let lr = cfg.lr(epoch);
        let mut loss_sum = 0.0;
        let mut batches = 0;
        for batch in order[..per_epoch].chunks(cfg.batch) {
            let (loss, grads) = step_gradients(model, &params, data, batch, cfg.shards)?;
            if !loss.is_finite() || !grads.is_finite() {
                return Err(ModelError::Diverged {
                    epoch,
                    step: adam.steps() as usize,
                    loss,
                });
            }
            adam.step(&mut params, &grads, lr)?;
            loss_sum += loss;
            batches += 1;
        }
        let train_loss = loss_sum / batches as f64;
        let test_rmse = on_epoch(epoch, &params)?;
        log.push(EpochLog {
            epoch,
            lr,
            train_loss,
            test_rmse,
        });
        if train_loss < cfg.stop_below {
            break;
        }
    }
    Ok(TrainOutcome {
        params,
        log,
        steps: adam.steps(),
        seed,
    })
}

/// `cfg.repeats` independent runs with seeds `seed + 1 ..= seed + repeats`.
pub fn train_repeats<F>(
    model: &ModelConfig,
    data: &WindowedDataset,
    cfg: &TrainConfig,
    seed: u64,
    mut on_epoch: F,
) -> Result<Vec<TrainOutcome>, ModelError>
where
    F: FnMut(usize, usize, &ParamStore) -> Result<Option<f64>, ModelError>,
{
    (1..=cfg.repeats as u64)
        .map(|r| train(model, data, cfg, seed + r, |e, p| on_epoch(r as usize, e, p)))
        .collect()
}

/// `epoch,lr,train_loss,test_rmse`, preceded by `# `-prefixed provenance lines.
pub fn loss_curve_csv(log: &[EpochLog], provenance: &[String]) -> String {
    let mut out = String::new();
    for line in provenance {
        writeln!(out, "# {line}").expect("write to string");
    }
    out.push_str("epoch,lr,train_loss,test_rmse\n");
    for e in log {
        let rmse = e.test_rmse.map(|r| format!("{r:.9e}")).unwrap_or_default();
        writeln!(out, "{},{:.9e},{:.9e},{rmse}", e.epoch, e.lr, e.train_loss).expect("write to string");
    }
    out
}
