use std::fmt;

use rayon::prelude::*;
use uwbloc_core::go::{estimate_csv, run_go_pipeline};

use crate::prepare::mounts_for;
use crate::simulate::{load_trials, read_manifest};
use crate::{CliError, Run};

#[derive(Debug, Clone, PartialEq)]
pub struct GoSummary {
    pub trial_id: String,
    /// First tag against its true position, meters.
    pub rmse: f64,
    pub windows: usize,
    pub converged_windows: usize,
    pub low_observability_windows: usize,
}

impl fmt::Display for GoSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} rmse={:.3} m windows={} converged={} low_observability={}",
            self.trial_id, self.rmse, self.windows, self.converged_windows, self.low_observability_windows
        )
    }
}

/// Runs the sliding-window solver on every test trial and writes
/// `baseline/go/<trial>.csv`. The solver knows the true anchor positions and
/// calibrations and the mounts of the configured tags.
pub fn baseline(run: &Run) -> Result<Vec<GoSummary>, CliError> {
    let manifest = read_manifest(run)?;
    let trials = load_trials(run, &manifest.test)?;
    let dir = run.paths.baseline();
    run.fresh_dir(&dir)?;
    let prov = run.provenance();
    let tags = run.cfg.dataset.tags;
    let results: Vec<_> = trials
        .par_iter()
        .map(|(trial, meta)| run_go_pipeline(trial, &meta.environment.anchors, &mounts_for(meta, tags), &run.cfg.go))
        .collect::<Result<_, _>>()?;
    let mut summary = format!("# {prov}\ntrial,rmse,windows,converged,low_observability\n");
    let mut out = Vec::with_capacity(results.len());
    for go in results {
        let id = &go.trajectory.trial_id;
        run.write(&dir.join(format!("{id}.csv")), estimate_csv(&go.trajectory, Some(&prov)))?;
        summary.push_str(&format!(
            "{id},{},{},{},{}\n",
            uwbloc_core::sim::fmt_real(go.rmse),
            go.windows,
            go.converged_windows,
            go.low_observability_windows
        ));
        out.push(GoSummary {
            trial_id: id.clone(),
            rmse: go.rmse,
            windows: go.windows,
            converged_windows: go.converged_windows,
            low_observability_windows: go.low_observability_windows,
        });
    }
    run.write(&dir.join("summary.csv"), summary)?;
    Ok(out)
}
