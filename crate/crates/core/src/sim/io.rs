//! On-disk trial format. One directory per trial:
//!
//! - `meas.csv`: `stamp,tag_id,anchor_id,range`
//! - `gt.csv`, `osl.csv`: `stamp,tag<id>_x,tag<id>_y,tag<id>_z,...` for every tag in mount order
//! - `env.json`: [`TrialMeta`] (environment, mounts, noise, rates, seeds)
//!
//! Reals are written with 9 significant digits. Lines starting with `#` are
//! provenance comments and are skipped on read.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Environment, LabelTrack, MeasurementRecord, NoiseModel, OslBiasField, SimError, Trajectory, Trial};
use crate::geometry::{TagMount, Vec3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialMeta {
    pub trial_id: String,
    pub seed: u64,
    pub environment: Environment,
    pub mounts: Vec<TagMount>,
    pub noise: NoiseModel,
    pub rate_hz: f64,
    pub bias_field: OslBiasField,
    /// Trajectory sample spacing, seconds.
    pub dt: f64,
    /// Free-form origin of the trial, e.g. the generating config and seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<String>,
}

/// Formats a real with 9 significant digits.
pub fn fmt_real(v: f64) -> String {
    format!("{v:.8e}")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SimError + '_ {
    move |source| SimError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn format_err(path: &Path, message: impl Into<String>) -> SimError {
    SimError::Format {
        path: path.display().to_string(),
        message: message.into(),
    }
}

fn header_line(out: &mut String, provenance: Option<&str>) {
    if let Some(p) = provenance {
        for line in p.lines() {
            let _ = writeln!(out, "# {line}");
        }
    }
}

fn label_csv(track: &LabelTrack, provenance: Option<&str>) -> String {
    let mut out = String::new();
    header_line(&mut out, provenance);
    out.push_str("stamp");
    for id in &track.tag_ids {
        let _ = write!(out, ",tag{id}_x,tag{id}_y,tag{id}_z");
    }
    out.push('\n');
    for (stamp, row) in track.stamps.iter().zip(&track.positions) {
        out.push_str(&fmt_real(*stamp));
        for p in row {
            let _ = write!(out, ",{},{},{}", fmt_real(p.x), fmt_real(p.y), fmt_real(p.z));
        }
        out.push('\n');
    }
    out
}

pub fn write_trial(dir: &Path, trial: &Trial, meta: &TrialMeta, provenance: Option<&str>) -> Result<(), SimError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut meas = String::new();
    header_line(&mut meas, provenance);
    meas.push_str("stamp,tag_id,anchor_id,range\n");
    for m in &trial.measurements {
        let _ = writeln!(meas, "{},{},{},{}", fmt_real(m.stamp), m.tag_id, m.anchor_id, fmt_real(m.range));
    }
    let files = [
        ("meas.csv", meas),
        ("gt.csv", label_csv(&trial.ground_truth, provenance)),
        ("osl.csv", label_csv(&trial.osl, provenance)),
        (
            "env.json",
            serde_json::to_string_pretty(meta).map_err(|e| format_err(dir, e.to_string()))? + "\n",
        ),
    ];
    for (name, body) in files {
        let path = dir.join(name);
        fs::write(&path, body).map_err(io_err(&path))?;
    }
    Ok(())
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.starts_with('#') && !l.trim().is_empty())
        .skip(1)
}

fn parse_fields(path: &Path, line_no: usize, line: &str) -> Result<Vec<f64>, SimError> {
    line.split(',')
        .map(|f| {
            f.trim()
                .parse::<f64>()
                .map_err(|e| format_err(path, format!("line {}: {e}", line_no + 1)))
        })
        .collect()
}

fn read_labels(path: &Path, tag_ids: &[u32]) -> Result<LabelTrack, SimError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut track = LabelTrack {
        tag_ids: tag_ids.to_vec(),
        stamps: Vec::new(),
        positions: Vec::new(),
    };
    for (no, line) in data_lines(&text) {
        let v = parse_fields(path, no, line)?;
        if v.len() != 1 + 3 * tag_ids.len() {
            return Err(format_err(path, format!("line {}: expected {} columns", no + 1, 1 + 3 * tag_ids.len())));
        }
        track.stamps.push(v[0]);
        track
            .positions
            .push(v[1..].chunks(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect());
    }
    Ok(track)
}

/// Reads a trial directory. The trajectory is rebuilt from the ground-truth
/// track of the first tag; orientation is not stored on disk.
pub fn read_trial(dir: &Path) -> Result<(Trial, TrialMeta), SimError> {
    let meta_path = dir.join("env.json");
    let meta: TrialMeta = serde_json::from_str(&fs::read_to_string(&meta_path).map_err(io_err(&meta_path))?)
        .map_err(|e| format_err(&meta_path, e.to_string()))?;
    let meas_path = dir.join("meas.csv");
    let text = fs::read_to_string(&meas_path).map_err(io_err(&meas_path))?;
    let mut measurements = Vec::new();
    for (no, line) in data_lines(&text) {
        let v = parse_fields(&meas_path, no, line)?;
        if v.len() != 4 {
            return Err(format_err(&meas_path, format!("line {}: expected 4 columns", no + 1)));
        }
        measurements.push(MeasurementRecord {
            stamp: v[0],
            tag_id: v[1] as u32,
            anchor_id: v[2] as u32,
            range: v[3],
        });
    }
    let tag_ids: Vec<u32> = meta.mounts.iter().map(|m| m.tag_id).collect();
    let ground_truth = read_labels(&dir.join("gt.csv"), &tag_ids)?;
    let osl = read_labels(&dir.join("osl.csv"), &tag_ids)?;
    let poses = ground_truth
        .stamps
        .iter()
        .zip(&ground_truth.positions)
        .map(|(s, row)| crate::geometry::Pose {
            position: row.first().copied().unwrap_or_else(Vec3::zeros),
            orientation: Default::default(),
            stamp: *s,
        })
        .collect();
    let trajectory = Trajectory::new(meta.dt, poses)?;
    Ok((
        Trial {
            id: meta.trial_id.clone(),
            seed: meta.seed,
            trajectory,
            measurements,
            ground_truth,
            osl,
        },
        meta,
    ))
}
