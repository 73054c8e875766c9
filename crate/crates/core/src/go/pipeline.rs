use std::fmt::Write as _;

use super::{solve_window, GoConfig, GoError, GoModel, InitMode};
use crate::dataset::{bin_measurements, filter_to_layout, Layout, BIN_WIDTH};
use crate::eval::{rmse, TrajectoryEstimate};
use crate::geometry::{AnchorParams, TagMount, Vec3};
use crate::sim::{fmt_real, Trial};

/// Per-frame estimates of the first tag, aligned to the 50 ms bin centers.
#[derive(Debug, Clone, PartialEq)]
pub struct GoTrajectory {
    pub trial_id: String,
    pub stamps: Vec<f64>,
    pub positions: Vec<Vec3>,
    pub converged: Vec<bool>,
    /// Final cost of the window that produced each frame's estimate.
    pub cost: Vec<f64>,
}

impl GoTrajectory {
    pub fn to_estimate(&self, method: &str, config_hash: &str) -> TrajectoryEstimate {
        TrajectoryEstimate {
            trial_id: self.trial_id.clone(),
            method: method.to_string(),
            config_hash: config_hash.to_string(),
            stamps: self.stamps.clone(),
            positions: self.positions.iter().map(|p| vec![*p]).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GoRun {
    pub trajectory: GoTrajectory,
    /// Against the true position of the first tag.
    pub rmse: f64,
    pub windows: usize,
    pub converged_windows: usize,
    pub low_observability_windows: usize,
}

fn window_starts(n: usize, w: usize) -> Vec<usize> {
    let stride = (w / 2).max(1);
    let mut starts: Vec<usize> = (0..).map(|i| i * stride).take_while(|s| s + w < n).collect();
    let last = n.saturating_sub(w);
    if starts.last() != Some(&last) {
        starts.push(last);
    }
    starts
}

/// Slides the window over the whole trial with a stride of half a window.
/// Frames covered by several windows keep the estimate of the latest one. A
/// window without any range holds the previous estimate and is marked not
/// converged.
pub fn run_go_pipeline(
    trial: &Trial,
    anchors: &[AnchorParams],
    mounts: &[TagMount],
    config: &GoConfig,
) -> Result<GoRun, GoError> {
    config.validate()?;
    if mounts.is_empty() {
        return Err(GoError::BadConfig("at least one tag mount is required"));
    }
    let layout = Layout::new(
        mounts.iter().map(|m| m.tag_id).collect(),
        anchors.iter().map(|a| a.anchor_id).collect(),
    );
    let model = GoModel::new(layout.clone(), anchors, mounts)?;
    let frames = bin_measurements(&filter_to_layout(&trial.measurements, &layout), BIN_WIDTH, &layout)?;
    if frames.is_empty() {
        return Err(GoError::NoMeasurements);
    }
    let n = frames.len();
    let t = model.n_tags();
    let w = config.window_frames.min(n);
    let centroid = model.anchor_centroid();
    let mut est: Vec<Option<Vec3>> = vec![None; n * t];
    let mut converged = vec![false; n];
    let mut cost = vec![0.0; n];
    let (mut windows, mut ok, mut low) = (0, 0, 0);
    for s in window_starts(n, w) {
        windows += 1;
        let mut init = Vec::with_capacity(w * t);
        for k in s..s + w {
            for j in 0..t {
                let guess = match config.init_mode {
                    InitMode::Centroid => centroid,
                    InitMode::PreviousSolution => est[..=k * t + j]
                        .iter()
                        .rev()
                        .step_by(t)
                        .find_map(|e| *e)
                        .unwrap_or(centroid),
                };
                init.push(guess);
            }
        }
        match solve_window(&frames[s..s + w], &model, config, &init) {
            Ok(sol) => {
                ok += usize::from(sol.converged);
                low += usize::from(sol.low_observability);
                for k in 0..w {
                    for j in 0..t {
                        est[(s + k) * t + j] = Some(sol.position(k, j));
                    }
                    converged[s + k] = sol.converged;
                    cost[s + k] = sol.cost;
                }
            }
            Err(GoError::NoMeasurements) => {
                for k in 0..w {
                    for j in 0..t {
                        let v = &mut est[(s + k) * t + j];
                        if v.is_none() {
                            *v = Some(init[k * t + j]);
                        }
                    }
                    converged[s + k] = false;
                }
            }
            Err(e) => return Err(e),
        }
    }
    let positions: Vec<Vec3> = (0..n).map(|k| est[k * t].unwrap_or(centroid)).collect();
    let stamps: Vec<f64> = frames.iter().map(|f| f.stamp).collect();
    let truth = trial
        .ground_truth
        .select_tags(&[mounts[0].tag_id])
        .ok_or(GoError::UnknownTag(mounts[0].tag_id))?;
    let references: Vec<Vec<Vec3>> = stamps
        .iter()
        .map(|s| truth.sample(*s).map(|(p, _)| p).unwrap_or_default())
        .collect();
    let predictions: Vec<Vec<Vec3>> = positions.iter().map(|p| vec![*p]).collect();
    let rmse = rmse(&predictions, &references)?;
    Ok(GoRun {
        trajectory: GoTrajectory {
            trial_id: trial.id.clone(),
            stamps,
            positions,
            converged,
            cost,
        },
        rmse,
        windows,
        converged_windows: ok,
        low_observability_windows: low,
    })
}

/// `stamp,x,y,z,converged,cost` with optional `#` provenance lines.
pub fn estimate_csv(traj: &GoTrajectory, provenance: Option<&str>) -> String {
    let mut out = String::new();
    if let Some(p) = provenance {
        for line in p.lines() {
            let _ = writeln!(out, "# {line}");
        }
    }
    out.push_str("stamp,x,y,z,converged,cost\n");
    for k in 0..traj.stamps.len() {
        let p = traj.positions[k];
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            fmt_real(traj.stamps[k]),
            fmt_real(p.x),
            fmt_real(p.y),
            fmt_real(p.z),
            u8::from(traj.converged[k]),
            fmt_real(traj.cost[k])
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{
        ground_truth_labels, osl_labels, sample_measurements, trajectory_through, Aabb, Environment, NoiseModel,
        OslBiasField,
    };

    fn clean_trial() -> (Trial, Environment, Vec<TagMount>) {
        let bounds = Aabb::new(Vec3::zeros(), Vec3::new(40.0, 40.0, 10.0));
        let anchors = vec![
            AnchorParams::new(0, Vec3::new(1.0, 1.0, 6.0), 1.0, 0.0).unwrap(),
            AnchorParams::new(1, Vec3::new(39.0, 1.0, 2.0), 1.01, 0.1).unwrap(),
            AnchorParams::new(2, Vec3::new(39.0, 39.0, 7.0), 0.99, -0.2).unwrap(),
            AnchorParams::new(3, Vec3::new(1.0, 39.0, 3.0), 1.0, 0.05).unwrap(),
            AnchorParams::new(4, Vec3::new(20.0, 20.0, 9.5), 1.0, 0.0).unwrap(),
        ];
        let env = Environment::new(bounds, anchors, vec![]).unwrap();
        let mounts = vec![TagMount::new(0, Vec3::new(0.3, 0.0, 0.5)), TagMount::new(1, Vec3::new(-0.3, 0.0, 0.5))];
        // Slow enough that the spread of ping times inside a 50 ms bin moves
        // the vehicle by millimeters only.
        let wp = [Vec3::new(5.0, 5.0, 1.0), Vec3::new(8.0, 6.0, 1.0), Vec3::new(9.0, 9.0, 1.0)];
        let traj = trajectory_through(&wp, 0.2, 0.05).unwrap();
        let noise = NoiseModel { p_detect_los: 1.0, ..NoiseModel::noiseless() };
        let measurements = sample_measurements(&env, &traj, &noise, 40.0, &mounts, 9).unwrap();
        let trial = Trial {
            id: "trial_000".into(),
            seed: 9,
            ground_truth: ground_truth_labels(&traj, &mounts),
            osl: osl_labels(&traj, &OslBiasField::zero(), &mounts),
            trajectory: traj,
            measurements,
        };
        (trial, env, mounts)
    }

    #[test]
    fn window_starts_cover_every_frame() {
        assert_eq!(window_starts(50, 20), vec![0, 10, 20, 30]);
        assert_eq!(window_starts(20, 20), vec![0]);
        assert_eq!(window_starts(45, 20), vec![0, 10, 20, 25]);
    }

    #[test]
    fn clean_scenario_is_centimeter_accurate() {
        let (trial, env, mounts) = clean_trial();
        let run = run_go_pipeline(&trial, &env.anchors, &mounts, &GoConfig::default()).unwrap();
        assert!(run.rmse < 0.01, "rmse {}", run.rmse);
        assert_eq!(run.converged_windows, run.windows);
        let csv = estimate_csv(&run.trajectory, Some("config_hash=h seed=9"));
        assert!(csv.starts_with("# config_hash=h seed=9\nstamp,x,y,z,converged,cost\n"));
        assert_eq!(csv.lines().count(), 2 + run.trajectory.stamps.len());
    }

    #[test]
    fn single_tag_and_centroid_init_also_work() {
        let (trial, env, mounts) = clean_trial();
        let config = GoConfig { init_mode: InitMode::Centroid, ..Default::default() };
        let run = run_go_pipeline(&trial, &env.anchors, &mounts[..1], &config).unwrap();
        assert!(run.rmse < 0.01, "rmse {}", run.rmse);
    }

    #[test]
    fn empty_trial_is_an_error() {
        let (mut trial, env, mounts) = clean_trial();
        trial.measurements.clear();
        assert!(matches!(run_go_pipeline(&trial, &env.anchors, &mounts, &GoConfig::default()), Err(GoError::NoMeasurements)));
    }

    #[test]
    fn gaps_hold_the_previous_estimate() {
        let (mut trial, env, mounts) = clean_trial();
        // drop three seconds in the middle
        trial.measurements.retain(|m| !(4.0..7.0).contains(&m.stamp));
        let run = run_go_pipeline(&trial, &env.anchors, &mounts, &GoConfig::default()).unwrap();
        assert!(run.converged_windows < run.windows);
        assert!(run.trajectory.positions.iter().all(|p| p.iter().all(|v| v.is_finite())));
    }
}
