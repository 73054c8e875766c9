use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use uwbloc_autodiff::{write_checkpoint, ParamStore};
use uwbloc_core::dataset::{Layout, WindowedDataset};
use uwbloc_core::eval::{error_distribution, TrialErrors};
use uwbloc_core::sim::Trial;
use uwbloc_models::{loss_curve_csv, train_repeats, ModelConfig, ModelError, TrainConfig, TrainOutcome};

use crate::config::ModelKind;
use crate::evaluate::{model_estimates, score};
use crate::prepare::read_prepared;
use crate::simulate::load_trials;
use crate::{CliError, Run};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatRecord {
    pub repeat: usize,
    pub seed: u64,
    pub epochs: usize,
    pub steps: u64,
    pub final_loss: f64,
    /// Against true positions on the test split, meters.
    pub test_rmse: Option<f64>,
}

/// Written next to the checkpoints as `model.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    pub kind: ModelKind,
    pub model: ModelConfig,
    pub param_count: usize,
    pub repeats: Vec<RepeatRecord>,
}

impl ModelRecord {
    /// Test RMSE averaged over repeats, when every repeat was scored.
    pub fn mean_test_rmse(&self) -> Option<f64> {
        let v: Option<Vec<f64>> = self.repeats.iter().map(|r| r.test_rmse).collect();
        v.filter(|v| !v.is_empty()).map(|v| v.iter().sum::<f64>() / v.len() as f64)
    }
}

impl fmt::Display for ModelRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} ({} parameters)", self.kind, self.param_count)?;
        for r in &self.repeats {
            let rmse = r.test_rmse.map_or("-".to_string(), |v| format!("{v:.3} m"));
            writeln!(
                f,
                "  repeat {} seed={} epochs={} steps={} loss={:.3e} test_rmse={rmse}",
                r.repeat, r.seed, r.epochs, r.steps, r.final_loss
            )?;
        }
        Ok(())
    }
}

/// Test trials with their true trajectories.
#[derive(Debug, Clone, Copy)]
pub struct TestSplit<'a> {
    pub data: &'a WindowedDataset,
    pub layout: &'a Layout,
    pub truth: &'a BTreeMap<String, Trial>,
}

impl TestSplit<'_> {
    /// RMSE of `params` against the true positions of the layout's tags.
    pub fn rmse(&self, model: &ModelConfig, params: &ParamStore) -> Result<f64, CliError> {
        let estimates = model_estimates(model, params, self.data, "", "")?;
        let errors: Vec<TrialErrors> = score(&estimates, self.truth, &self.layout.tag_ids)?;
        Ok(error_distribution("", &errors)?.rmse)
    }
}

/// Trains `cfg.repeats` copies of `model`. The test split is scored every
/// `test_every` epochs (when positive) and after the last epoch.
pub fn fit(
    model: &ModelConfig,
    cfg: &TrainConfig,
    seed: u64,
    train: &WindowedDataset,
    test: TestSplit,
    test_every: usize,
) -> Result<Vec<(TrainOutcome, Option<f64>)>, CliError> {
    let scoring = !test.data.trials.is_empty();
    let outcomes = train_repeats(model, train, cfg, seed, |_, epoch, params| {
        if scoring && test_every > 0 && (epoch + 1) % test_every == 0 {
            let rmse = test.rmse(model, params).map_err(|e| ModelError::BadConfig(e.to_string()))?;
            return Ok(Some(rmse));
        }
        Ok(None)
    })?;
    outcomes
        .into_iter()
        .map(|o| {
            let rmse = match (scoring, o.log.last().and_then(|l| l.test_rmse)) {
                (false, _) => None,
                (true, Some(v)) => Some(v),
                (true, None) => Some(test.rmse(model, &o.params)?),
            };
            Ok((o, rmse))
        })
        .collect()
}

/// Trains each model kind on the prepared data and writes checkpoints, loss
/// curves and `model.json` under `models/<kind>/`.
pub fn train_models(run: &Run, kinds: &[ModelKind]) -> Result<Vec<ModelRecord>, CliError> {
    let (train, layout) = read_prepared(run, false)?;
    let (test, _) = read_prepared(run, true)?;
    let ids: Vec<String> = test.trials.iter().map(|t| t.id.clone()).collect();
    let truth: BTreeMap<String, Trial> = load_trials(run, &ids)?.into_iter().map(|(t, _)| (t.id.clone(), t)).collect();
    let prov = run.provenance();
    for &kind in kinds {
        run.fresh_dir(&run.paths.model(kind))?;
    }
    let mut records = Vec::new();
    for &kind in kinds {
        let model = run.cfg.model.build(kind, layout.input_dim(), layout.label_dim(), train.s);
        let split = TestSplit {
            data: &test,
            layout: &layout,
            truth: &truth,
        };
        let outcomes = fit(&model, &run.cfg.train, run.seed, &train, split, run.cfg.eval.test_every)?;
        let dir = run.paths.model(kind);
        let mut repeats = Vec::new();
        for (i, (o, rmse)) in outcomes.iter().enumerate() {
            let r = i + 1;
            write_checkpoint(&run.paths.checkpoint(kind, r), &o.params, &prov)?;
            let lines = [prov.clone(), format!("model={kind} repeat={r} train_seed={}", o.seed)];
            run.write(&dir.join(format!("loss_{r}.csv")), loss_curve_csv(&o.log, &lines))?;
            repeats.push(RepeatRecord {
                repeat: r,
                seed: o.seed,
                epochs: o.log.len(),
                steps: o.steps,
                final_loss: o.log.last().map_or(f64::NAN, |l| l.train_loss),
                test_rmse: *rmse,
            });
        }
        let record = ModelRecord {
            kind,
            param_count: model.param_count(),
            model,
            repeats,
        };
        run.write_json(&dir.join("model.json"), &record)?;
        records.push(record);
    }
    Ok(records)
}
