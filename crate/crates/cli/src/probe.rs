use std::fmt;

use serde::{Deserialize, Serialize};
use uwbloc_core::dataset::{trial_sequence, Normalizer, WindowedDataset};
use uwbloc_core::sim::{simulate_trial, NoiseModel};
use uwbloc_models::{loss_curve_csv, train, TrainConfig};

use crate::config::ModelKind;
use crate::prepare::layout_for_mounts;
use crate::simulate::world;
use crate::{CliError, Run};

pub const PROBE_WINDOWS: usize = 64;
pub const PROBE_MAX_STEPS: usize = 2000;
/// Normalized training MSE the probe must get below.
pub const PROBE_TARGET: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub param_count: usize,
    pub windows: usize,
    pub window: usize,
    pub steps: u64,
    pub final_loss: f64,
    pub target: f64,
    pub reached: bool,
}

impl fmt::Display for ProbeReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "mamba ({} parameters) on {} clean windows of {} frames: loss {:.3e} after {} steps (target {:.0e}: {})",
            self.param_count,
            self.windows,
            self.window,
            self.final_loss,
            self.steps,
            self.target,
            if self.reached { "reached" } else { "not reached" }
        )
    }
}

/// `PROBE_WINDOWS` evenly spaced windows of one noise-free trial, labeled
/// with true positions and normalized on themselves.
pub fn probe_windows(run: &Run) -> Result<WindowedDataset, CliError> {
    let (env, grid, field) = world(run)?;
    let mut settings = run.cfg.trajectory.settings(&run.cfg.noise);
    settings.noise = NoiseModel::noiseless();
    let trial = simulate_trial(&env, &grid, &settings, &field, 0, run.seed)?;
    let layout = layout_for_mounts(&env, &settings.mounts, run.cfg.dataset.tags);
    let seq = trial_sequence(&trial.id, &trial.measurements, &trial.ground_truth, &layout)?;
    let normalizer = Normalizer::fit([&seq])?;
    let mut ds = WindowedDataset::build(&[seq], run.cfg.dataset.window, normalizer)?;
    let m = ds.windows.len();
    if m < PROBE_WINDOWS {
        return Err(CliError::Config(format!(
            "probe trial has {m} windows, fewer than {PROBE_WINDOWS}"
        )));
    }
    ds.windows = (0..PROBE_WINDOWS).map(|i| ds.windows[i * m / PROBE_WINDOWS]).collect();
    Ok(ds)
}

/// Full-batch Adam on the probe windows with a constant learning rate until
/// the loss drops below `PROBE_TARGET` or `PROBE_MAX_STEPS` steps pass.
/// Writes `probe/report.json` and `probe/loss.csv`.
pub fn overfit_probe(run: &Run) -> Result<ProbeReport, CliError> {
    let data = probe_windows(run)?;
    let model = run
        .cfg
        .model
        .build(ModelKind::Mamba, data.input_dim, data.label_dim, data.s);
    let cfg = TrainConfig {
        batch: PROBE_WINDOWS,
        epochs: PROBE_MAX_STEPS,
        lr_step: PROBE_MAX_STEPS,
        repeats: 1,
        windows_per_epoch: 0,
        stop_below: PROBE_TARGET,
        ..run.cfg.train.clone()
    };
    let dir = run.paths.probe();
    run.fresh_dir(&dir)?;
    let outcome = train(&model, &data, &cfg, run.seed, |_, _| Ok(None))?;
    let final_loss = outcome.log.last().map_or(f64::NAN, |l| l.train_loss);
    let report = ProbeReport {
        param_count: model.param_count(),
        windows: data.len(),
        window: data.s,
        steps: outcome.steps,
        final_loss,
        target: PROBE_TARGET,
        reached: final_loss < PROBE_TARGET,
    };
    run.write(&dir.join("loss.csv"), loss_curve_csv(&outcome.log, &[run.provenance()]))?;
    run.write_json(&dir.join("report.json"), &report)?;
    Ok(report)
}
