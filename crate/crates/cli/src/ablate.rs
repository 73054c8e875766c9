use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use uwbloc_autodiff::write_checkpoint;

use uwbloc_core::eval::{ablation_report, AblationReport, AblationRun, LabelSource, ABLATION_LABELS, ABLATION_TAGS};
use uwbloc_core::sim::Trial;
use uwbloc_models::TrainConfig;

use crate::config::ModelKind;
use crate::learn::{fit, TestSplit};
use crate::prepare::build_datasets;
use crate::simulate::{load_trials, read_manifest};
use crate::{CliError, Run};

#[derive(Debug, Clone)]
pub struct Ablation {
    pub runs: Vec<AblationRun>,
    pub report: AblationReport,
    pub warnings: Vec<String>,
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "test RMSE (m) against true positions, by training labels and tag count")?;
        write!(f, "{}", self.report.to_text())
    }
}

/// Checkpoint of repeat `r` (from 1) in one ablation cell.
pub fn ablation_checkpoint(run: &Run, kind: ModelKind, tags: usize, labels: LabelSource, r: usize) -> PathBuf {
    run.paths
        .ablation()
        .join("checkpoints")
        .join(format!("{kind}_{tags}tag_{labels}_{r}.ckpt"))
}

/// Training settings of one ablation cell.
pub fn ablation_train_config(run: &Run) -> TrainConfig {
    let e = &run.cfg.eval;
    let mut cfg = run.cfg.train.clone();
    if e.ablation_epochs > 0 {
        cfg.epochs = e.ablation_epochs;
    }
    if e.ablation_repeats > 0 {
        cfg.repeats = e.ablation_repeats;
    }
    cfg
}

/// Retrains every ablation model on each combination of training labels
/// (true or onboard-localizer) and tag count, always scoring against true
/// positions, and writes `ablation/`.
pub fn ablate(run: &Run) -> Result<Ablation, CliError> {
    let manifest = read_manifest(run)?;
    let train = load_trials(run, &manifest.train)?;
    let test = load_trials(run, &manifest.test)?;
    if test.is_empty() {
        return Err(CliError::Config("ablation needs a non-empty test split".into()));
    }
    let dir = run.paths.ablation();
    run.fresh_dir(&dir)?;
    let ckpt_dir = dir.join("checkpoints");
    std::fs::create_dir_all(&ckpt_dir).map_err(|e| CliError::io(&ckpt_dir, e))?;
    let truth: BTreeMap<String, Trial> = test.iter().map(|(t, _)| (t.id.clone(), t.clone())).collect();
    let cfg = ablation_train_config(run);
    let n_mounts = run.cfg.trajectory.mounts.len();
    let mut runs = Vec::new();
    let mut warnings = Vec::new();
    let prov = run.provenance();
    let mut curves = format!("# {prov}\nmodel,tags,labels,repeat,epoch,train_loss\n");
    for tags in ABLATION_TAGS {
        if tags > n_mounts {
            warnings.push(format!("only {n_mounts} tag(s) mounted; {tags}-tag cells left empty"));
            continue;
        }
        for labels in ABLATION_LABELS {
            let sets = build_datasets(&train, &test, tags, labels, run.cfg.dataset.window)?;
            warnings.extend(sets.warnings.iter().cloned());
            let split = TestSplit {
                data: &sets.test,
                layout: &sets.layout,
                truth: &truth,
            };
            for &kind in &run.cfg.eval.ablation_models {
                let model = run.cfg.model.build(kind, sets.layout.input_dim(), sets.layout.label_dim(), sets.train.s);
                let outcomes = fit(&model, &cfg, run.seed, &sets.train, split, 0)?;
                for (r, (o, _)) in outcomes.iter().enumerate() {
                    write_checkpoint(&ablation_checkpoint(run, kind, tags, labels, r + 1), &o.params, &prov)?;
                    for l in &o.log {
                        curves.push_str(&format!(
                            "{kind},{tags},{labels},{},{},{:.9e}\n",
                            r + 1,
                            l.epoch,
                            l.train_loss
                        ));
                    }
                }
                let rmses: Vec<f64> = outcomes.iter().filter_map(|(_, rmse)| *rmse).collect();
                runs.push(AblationRun {
                    labels,
                    tags,
                    model: kind.name().to_string(),
                    rmse: rmses.iter().sum::<f64>() / rmses.len() as f64,
                });
            }
        }
    }
    let report = ablation_report(&runs);
    run.write_json(&dir.join("runs.json"), &runs)?;
    run.write(&dir.join("report.csv"), report.to_csv(Some(&prov)))?;
    run.write(&dir.join("report.txt"), format!("# {prov}\n{}", report.to_text()))?;
    run.write(&dir.join("loss_curves.csv"), curves)?;
    Ok(Ablation {
        runs,
        report,
        warnings,
    })
}
