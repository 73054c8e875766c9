use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use uwbloc_autodiff::{read_checkpoint, ParamStore};
use uwbloc_core::dataset::WindowedDataset;
use uwbloc_core::eval::{
    compare_methods, error_distribution, long_format_csv, ComparisonTable, MetricReport, TrajectoryEstimate, TrialErrors,
};
use uwbloc_core::sim::Trial;
use uwbloc_core::Vec3;
use uwbloc_models::{predict_trial, ModelConfig};

use crate::config::ModelKind;
use crate::learn::ModelRecord;
use crate::prepare::read_prepared;
use crate::simulate::{load_trials, read_manifest};
use crate::{CliError, Run};

/// Name of the classical baseline in reports.
pub const GO_METHOD: &str = "go";

/// True positions of `tag_ids` at `stamps`, from the trial's ground truth.
pub fn truth_at(trial: &Trial, tag_ids: &[u32], stamps: &[f64]) -> Result<Vec<Vec<Vec3>>, CliError> {
    let bad = |m: String| CliError::Config(format!("{}: {m}", trial.id));
    let track = trial
        .ground_truth
        .select_tags(tag_ids)
        .ok_or_else(|| bad(format!("ground truth lacks tags {tag_ids:?}")))?;
    stamps
        .iter()
        .map(|s| track.sample(*s).map(|(p, _)| p).ok_or_else(|| bad("empty ground truth".into())))
        .collect()
}

/// Per-frame world-frame predictions of a learned model on every test trial.
pub fn model_estimates(
    model: &ModelConfig,
    params: &ParamStore,
    test: &WindowedDataset,
    method: &str,
    config_hash: &str,
) -> Result<Vec<TrajectoryEstimate>, CliError> {
    let tags = test.label_dim / 3;
    test.trials
        .iter()
        .map(|trial| {
            let mut pred = predict_trial(model, params, trial, test.s)?;
            test.normalizer.invert_labels(&mut pred);
            let positions = pred
                .chunks_exact(test.label_dim)
                .map(|row| (0..tags).map(|j| Vec3::new(row[3 * j], row[3 * j + 1], row[3 * j + 2])).collect())
                .collect();
            Ok(TrajectoryEstimate {
                trial_id: trial.id.clone(),
                method: method.to_string(),
                config_hash: config_hash.to_string(),
                stamps: trial.stamps.clone(),
                positions,
            })
        })
        .collect()
}

/// Errors of each estimate against the true positions of `tag_ids`.
pub fn score(estimates: &[TrajectoryEstimate], trials: &BTreeMap<String, Trial>, tag_ids: &[u32]) -> Result<Vec<TrialErrors>, CliError> {
    estimates
        .iter()
        .map(|e| {
            let trial = trials
                .get(&e.trial_id)
                .ok_or_else(|| CliError::Config(format!("no ground truth for trial {}", e.trial_id)))?;
            Ok(TrialErrors::from_estimate(e, &truth_at(trial, tag_ids, &e.stamps)?)?)
        })
        .collect()
}

/// Reads a baseline estimate file (`stamp,x,y,z,converged,cost`).
pub fn read_go_estimate(path: &Path, trial_id: &str, config_hash: &str) -> Result<TrajectoryEstimate, CliError> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(Run::missing(path, "baseline estimate", "baseline"))
        }
        Err(e) => return Err(CliError::io(path, e)),
    };
    let mut stamps = Vec::new();
    let mut positions = Vec::new();
    for (no, line) in text.lines().filter(|l| !l.starts_with('#')).enumerate().skip(1) {
        let v: Vec<f64> = line
            .split(',')
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::artifact(path, format!("row {no}: {e}")))?;
        if v.len() != 6 {
            return Err(CliError::artifact(path, format!("row {no}: expected 6 columns")));
        }
        stamps.push(v[0]);
        positions.push(vec![Vec3::new(v[1], v[2], v[3])]);
    }
    Ok(TrajectoryEstimate {
        trial_id: trial_id.to_string(),
        method: GO_METHOD.to_string(),
        config_hash: config_hash.to_string(),
        stamps,
        positions,
    })
}

/// Reports per method (repeats averaged), the comparison table and the raw
/// errors of each method's first repeat.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub reports: Vec<MetricReport>,
    pub table: ComparisonTable,
    pub errors: Vec<(String, Vec<TrialErrors>)>,
}

impl Evaluation {
    pub fn from_errors(methods: Vec<(String, Vec<Vec<TrialErrors>>)>) -> Result<Self, CliError> {
        let mut reports = Vec::new();
        let mut errors = Vec::new();
        for (method, repeats) in methods {
            let per_repeat: Vec<MetricReport> = repeats
                .iter()
                .map(|r| error_distribution(&method, r))
                .collect::<Result<_, _>>()?;
            reports.push(MetricReport::average(&per_repeat)?);
            errors.push((method, repeats.into_iter().next().unwrap_or_default()));
        }
        let table = compare_methods(&reports)?;
        Ok(Self { reports, table, errors })
    }

    pub fn rmse(&self, method: &str) -> Option<f64> {
        self.reports.iter().find(|r| r.method == method).map(|r| r.rmse)
    }
}

impl fmt::Display for Evaluation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "test RMSE (m) per trial")?;
        write!(f, "{}", self.table.to_text())?;
        for r in &self.reports {
            let q: Vec<String> = r.quantiles.iter().map(|(q, v)| format!("p{:.0}={v:.2}", q * 100.0)).collect();
            writeln!(f, "{:<8} rmse={:.3} mean={:.3} {} repeats={}", r.method, r.rmse, r.mean_error, q.join(" "), r.repeats)?;
        }
        Ok(())
    }
}

/// Loads the checkpoints of a trained model, checking they match the run.
pub fn load_model(run: &Run, kind: ModelKind) -> Result<(ModelConfig, Vec<ParamStore>), CliError> {
    let record: ModelRecord = run.read_json(&run.paths.model(kind).join("model.json"), "trained model", "train")?;
    let mut params = Vec::new();
    for r in 1..=record.repeats.len() {
        let path = run.paths.checkpoint(kind, r);
        if !path.exists() {
            return Err(Run::missing(&path, "checkpoint", "train"));
        }
        let (p, stamp) = read_checkpoint(&path)?;
        if stamp != run.provenance() {
            return Err(CliError::Stale {
                path: path.display().to_string(),
                found: stamp,
                expected: run.provenance(),
                step: "train",
            });
        }
        params.push(p);
    }
    Ok((record.model, params))
}

/// Scores the baseline and every configured model on the test trials and
/// writes `reports/`.
pub fn evaluate(run: &Run) -> Result<Evaluation, CliError> {
    let manifest = read_manifest(run)?;
    let (test, layout) = read_prepared(run, true)?;
    if test.trials.is_empty() {
        return Err(CliError::Config("no test trials to evaluate".into()));
    }
    let ids: Vec<String> = test.trials.iter().map(|t| t.id.clone()).collect();
    let truth: BTreeMap<String, Trial> = load_trials(run, &ids)?.into_iter().map(|(t, _)| (t.id.clone(), t)).collect();
    debug_assert!(ids.iter().all(|id| manifest.test.contains(id)));
    let mut methods = Vec::new();
    let go: Vec<TrajectoryEstimate> = ids
        .iter()
        .map(|id| read_go_estimate(&run.paths.baseline().join(format!("{id}.csv")), id, &run.hash))
        .collect::<Result<_, _>>()?;
    methods.push((GO_METHOD.to_string(), vec![score(&go, &truth, &layout.tag_ids[..1])?]));
    for &kind in &run.cfg.model.methods {
        let (model, params) = load_model(run, kind)?;
        let repeats = params
            .iter()
            .map(|p| score(&model_estimates(&model, p, &test, kind.name(), &run.hash)?, &truth, &layout.tag_ids))
            .collect::<Result<_, CliError>>()?;
        methods.push((kind.name().to_string(), repeats));
    }
    let eval = Evaluation::from_errors(methods)?;
    let dir = run.paths.reports();
    run.fresh_dir(&dir)?;
    let prov = run.provenance();
    run.write_json(&dir.join("metrics.json"), &eval.reports)?;
    run.write(&dir.join("comparison.csv"), eval.table.to_csv(Some(&prov)))?;
    run.write(&dir.join("comparison.txt"), format!("# {prov}\n{eval}"))?;
    run.write(&dir.join("errors_long.csv"), long_format_csv(&eval.errors, Some(&prov)))?;
    Ok(eval)
}

#[cfg(test)]
mod tests {
    use super::*;
    use uwbloc_core::eval::OVERALL_ROW;
    use uwbloc_core::geometry::Pose;
    use uwbloc_core::sim::{LabelTrack, Trajectory};

    fn trial(id: &str) -> Trial {
        let stamps: Vec<f64> = (0..20).map(|k| k as f64 * 0.05).collect();
        let positions: Vec<Vec<Vec3>> = stamps
            .iter()
            .map(|t| vec![Vec3::new(*t, 2.0 * t, 0.5), Vec3::new(*t + 1.0, 2.0 * t, 0.5)])
            .collect();
        let gt = LabelTrack {
            tag_ids: vec![0, 1],
            stamps: stamps.clone(),
            positions,
        };
        let poses = stamps
            .iter()
            .map(|s| Pose::new(Vec3::new(*s, 0.0, 0.0), Default::default(), *s).unwrap())
            .collect();
        Trial {
            id: id.into(),
            seed: 0,
            trajectory: Trajectory::new(0.05, poses).unwrap(),
            measurements: vec![],
            osl: gt.clone(),
            ground_truth: gt,
        }
    }

    fn perfect(t: &Trial, method: &str, tags: &[u32]) -> TrajectoryEstimate {
        let stamps: Vec<f64> = t.ground_truth.stamps.iter().map(|s| s + 0.01).take(15).collect();
        TrajectoryEstimate {
            trial_id: t.id.clone(),
            method: method.into(),
            config_hash: "h".into(),
            positions: truth_at(t, tags, &stamps).unwrap(),
            stamps,
        }
    }

    #[test]
    fn perfect_predictions_give_zero_table() {
        let trials: BTreeMap<String, Trial> = ["a", "b"].iter().map(|id| (id.to_string(), trial(id))).collect();
        let methods: Vec<(String, Vec<Vec<TrialErrors>>)> = [("go", vec![0u32]), ("mamba", vec![0, 1])]
            .into_iter()
            .map(|(m, tags)| {
                let est: Vec<_> = trials.values().map(|t| perfect(t, m, &tags)).collect();
                (m.to_string(), vec![score(&est, &trials, &tags).unwrap()])
            })
            .collect();
        let eval = Evaluation::from_errors(methods).unwrap();
        assert_eq!(eval.rmse("go"), Some(0.0));
        assert_eq!(eval.rmse("mamba"), Some(0.0));
        assert_eq!(eval.table.rows.len(), 3);
        assert_eq!(eval.table.rows[2].trial_id, OVERALL_ROW);
        assert!(eval.table.rows.iter().all(|r| r.rmse.iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn offset_estimates_score_their_offset() {
        let t = trial("a");
        let mut est = perfect(&t, "go", &[0]);
        for row in &mut est.positions {
            row[0].z += 3.0;
        }
        let trials = BTreeMap::from([("a".to_string(), t)]);
        let errs = score(&[est], &trials, &[0]).unwrap();
        assert!((errs[0].rmse() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn go_estimates_parse_back() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        std::fs::write(&path, "# config_hash=h seed=1\nstamp,x,y,z,converged,cost\n0.025,1,2,3,1,0.5\n0.075,4,5,6,0,0.1\n").unwrap();
        let e = read_go_estimate(&path, "t", "h").unwrap();
        assert_eq!(e.stamps, vec![0.025, 0.075]);
        assert_eq!(e.positions[1], vec![Vec3::new(4.0, 5.0, 6.0)]);
        assert!(matches!(
            read_go_estimate(&dir.path().join("none.csv"), "t", "h"),
            Err(CliError::Missing { .. })
        ));
    }
}
