use std::fmt;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use uwbloc_core::rng;
use uwbloc_core::sim::{
    generate_campus, read_trial, simulate_trial, visible_anchor_counts, write_trial, Environment, OslBiasField,
    StreetGrid, Trial, TrialMeta,
};

use crate::{CliError, Run};

/// Trial ids and their train/test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub trials: Vec<String>,
    pub train: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialStats {
    pub id: String,
    pub duration: f64,
    pub measurements: usize,
    /// Fewest distinct anchors heard in any 1 s window.
    pub min_visible: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateSummary {
    pub manifest: Manifest,
    pub stats: Vec<TrialStats>,
    pub warnings: Vec<String>,
}

impl fmt::Display for SimulateSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.stats {
            let split = if self.manifest.test.contains(&s.id) { "test" } else { "train" };
            writeln!(
                f,
                "{} {split:<5} duration={:.1}s ranges={} min_visible_anchors_1s={}",
                s.id, s.duration, s.measurements, s.min_visible
            )?;
        }
        write!(
            f,
            "{} trials: {} train / {} test",
            self.manifest.trials.len(),
            self.manifest.train.len(),
            self.manifest.test.len()
        )
    }
}

/// The campus, its street grid and the onboard-localizer bias field of a run.
pub fn world(run: &Run) -> Result<(Environment, StreetGrid, OslBiasField), CliError> {
    let env_cfg = &run.cfg.environment;
    let (env, grid) = generate_campus(&env_cfg.campus, rng::stream_key(run.seed, "campus", 0))?;
    let field = OslBiasField::generate(&env.bounds, &env_cfg.bias_field, rng::stream_key(run.seed, "bias_field", 0))?;
    Ok((env, grid, field))
}

/// Chooses `n_test` trials (at most `n - 1`) for testing with a seeded shuffle.
pub fn split(ids: &[String], n_test: usize, seed: u64) -> (Vec<String>, Vec<String>) {
    let n_test = n_test.min(ids.len().saturating_sub(1));
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.shuffle(&mut rng::stream(seed, "split"));
    let mut test: Vec<usize> = order[..n_test].to_vec();
    test.sort_unstable();
    let (mut train, mut test_ids) = (Vec::new(), Vec::new());
    for (i, id) in ids.iter().enumerate() {
        if test.contains(&i) {
            test_ids.push(id.clone());
        } else {
            train.push(id.clone());
        }
    }
    (train, test_ids)
}

/// Writes `n_trials` simulated trials and the manifest under `trials/`.
pub fn simulate(run: &Run) -> Result<SimulateSummary, CliError> {
    let cfg = &run.cfg;
    let dir = run.paths.trials();
    run.fresh_dir(&dir)?;
    let (env, grid, field) = world(run)?;
    let settings = cfg.trajectory.settings(&cfg.noise);
    let trials: Vec<Trial> = (0..cfg.trajectory.n_trials)
        .into_par_iter()
        .map(|i| simulate_trial(&env, &grid, &settings, &field, i, run.seed))
        .collect::<Result<_, _>>()?;
    let prov = run.provenance();
    let mut stats = Vec::with_capacity(trials.len());
    for trial in &trials {
        let meta = TrialMeta {
            trial_id: trial.id.clone(),
            seed: trial.seed,
            environment: env.clone(),
            mounts: settings.mounts.clone(),
            noise: settings.noise,
            rate_hz: settings.rate_hz,
            bias_field: field.clone(),
            dt: settings.dt,
            provenance: Some(prov.clone()),
        };
        write_trial(&run.paths.trial(&trial.id), trial, &meta, Some(&prov))?;
        let visible = visible_anchor_counts(&trial.measurements, 1.0, 1.0);
        stats.push(TrialStats {
            id: trial.id.clone(),
            duration: trial.trajectory.duration(),
            measurements: trial.measurements.len(),
            min_visible: visible.iter().map(|v| v.1).min().unwrap_or(0),
        });
    }
    let ids: Vec<String> = trials.iter().map(|t| t.id.clone()).collect();
    let (train, test) = split(&ids, cfg.trajectory.n_test, run.seed);
    let mut warnings = Vec::new();
    if test.is_empty() {
        warnings.push("test split is empty; evaluate will have nothing to score".to_string());
    } else if test.len() < cfg.trajectory.n_test {
        warnings.push(format!(
            "only {} of {} requested test trials (at least one trial stays in training)",
            test.len(),
            cfg.trajectory.n_test
        ));
    }
    let manifest = Manifest {
        trials: ids,
        train,
        test,
    };
    run.write_json(&run.paths.manifest(), &manifest)?;
    Ok(SimulateSummary {
        manifest,
        stats,
        warnings,
    })
}

pub fn read_manifest(run: &Run) -> Result<Manifest, CliError> {
    run.read_json(&run.paths.manifest(), "trial manifest", "simulate")
}

/// Reads the named trials back from disk.
pub fn load_trials(run: &Run, ids: &[String]) -> Result<Vec<(Trial, TrialMeta)>, CliError> {
    ids.iter()
        .map(|id| {
            let dir = run.paths.trial(id);
            if !dir.exists() {
                return Err(Run::missing(&dir, "trial directory", "simulate"));
            }
            Ok(read_trial(&dir)?)
        })
        .collect()
}
