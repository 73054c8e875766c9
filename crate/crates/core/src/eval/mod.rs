//! Localization metrics.
//!
//! The error of one sample is the 3-D Euclidean position error of each tag,
//! averaged over tags. RMSE is the square root of the mean squared sample
//! error. Evaluation always runs against true ground truth.

mod report;

pub use report::{
    ablation_report, compare_methods, long_format_csv, AblationCell, AblationReport, AblationRun, ComparisonRow,
    ComparisonTable, LabelSource, ABLATION_LABELS, ABLATION_TAGS, OVERALL_ROW,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec3;

/// Quantile levels reported for every method.
pub const QUANTILES: [f64; 5] = [0.05, 0.25, 0.50, 0.75, 0.95];
/// Error thresholds (meters) for the cumulative fractions.
pub const THRESHOLDS: [f64; 5] = [1.0, 2.0, 3.0, 5.0, 10.0];

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("{predictions} predictions but {references} references")]
    LengthMismatch { predictions: usize, references: usize },
    #[error("sample {sample}: {predictions} predicted tags but {references} reference tags")]
    TagMismatch {
        sample: usize,
        predictions: usize,
        references: usize,
    },
    #[error("no samples to evaluate")]
    Empty,
    #[error("methods were evaluated on different trials: {0}")]
    TrialMismatch(String),
    #[error("no reports to compare")]
    NoReports,
    #[error("repeats disagree: {0}")]
    RepeatMismatch(String),
}

/// Predicted positions of every tag over one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEstimate {
    pub trial_id: String,
    pub method: String,
    pub config_hash: String,
    pub stamps: Vec<f64>,
    /// `positions[k][j]`: tag `j` at `stamps[k]`.
    pub positions: Vec<Vec<Vec3>>,
}

/// Per-sample errors: mean over tags of the Euclidean error.
pub fn sample_errors(predictions: &[Vec<Vec3>], references: &[Vec<Vec3>]) -> Result<Vec<f64>, EvalError> {
    check_lengths(predictions, references)?;
    Ok(predictions
        .iter()
        .zip(references)
        .map(|(p, r)| p.iter().zip(r).map(|(a, b)| (a - b).norm()).sum::<f64>() / p.len() as f64)
        .collect())
}

fn check_lengths(predictions: &[Vec<Vec3>], references: &[Vec<Vec3>]) -> Result<(), EvalError> {
    if predictions.len() != references.len() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            references: references.len(),
        });
    }
    if predictions.is_empty() {
        return Err(EvalError::Empty);
    }
    for (sample, (p, r)) in predictions.iter().zip(references).enumerate() {
        if p.len() != r.len() || p.is_empty() {
            return Err(EvalError::TagMismatch {
                sample,
                predictions: p.len(),
                references: r.len(),
            });
        }
    }
    Ok(())
}

pub fn rmse_of_errors(errors: &[f64]) -> f64 {
    (errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt()
}

pub fn rmse(predictions: &[Vec<Vec3>], references: &[Vec<Vec3>]) -> Result<f64, EvalError> {
    Ok(rmse_of_errors(&sample_errors(predictions, references)?))
}

/// Linear interpolation between order statistics; `sorted` must be ascending.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Errors of one method on one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialErrors {
    pub trial_id: String,
    pub errors: Vec<f64>,
    /// Mean over samples and tags of the squared error along x, y, z.
    pub axis_mse: [f64; 3],
}

impl TrialErrors {
    pub fn new(trial_id: impl Into<String>, predictions: &[Vec<Vec3>], references: &[Vec<Vec3>]) -> Result<Self, EvalError> {
        let errors = sample_errors(predictions, references)?;
        let mut axis = [0.0; 3];
        let mut n = 0usize;
        for (p, r) in predictions.iter().zip(references) {
            for (a, b) in p.iter().zip(r) {
                let d = a - b;
                for (acc, v) in axis.iter_mut().zip(d.iter()) {
                    *acc += v * v;
                }
                n += 1;
            }
        }
        Ok(Self {
            trial_id: trial_id.into(),
            errors,
            axis_mse: axis.map(|s| s / n as f64),
        })
    }

    pub fn from_estimate(estimate: &TrajectoryEstimate, references: &[Vec<Vec3>]) -> Result<Self, EvalError> {
        Self::new(estimate.trial_id.clone(), &estimate.positions, references)
    }

    pub fn rmse(&self) -> f64 {
        rmse_of_errors(&self.errors)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialMetric {
    pub trial_id: String,
    pub samples: usize,
    pub rmse: f64,
    pub axis_rmse: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub method: String,
    pub trials: Vec<TrialMetric>,
    /// RMSE over all samples of all trials.
    pub rmse: f64,
    pub axis_rmse: [f64; 3],
    pub mean_error: f64,
    /// `(level, error)` pairs for [`QUANTILES`].
    pub quantiles: Vec<(f64, f64)>,
    /// `(threshold, fraction of samples with error below it)` for [`THRESHOLDS`].
    pub fraction_below: Vec<(f64, f64)>,
    /// Number of training repeats averaged into this report.
    pub repeats: usize,
}

/// Pools the errors of all trials into one report.
pub fn error_distribution(method: &str, trials: &[TrialErrors]) -> Result<MetricReport, EvalError> {
    let mut all: Vec<f64> = trials.iter().flat_map(|t| t.errors.iter().copied()).collect();
    if all.is_empty() || trials.iter().any(|t| t.errors.is_empty()) {
        return Err(EvalError::Empty);
    }
    let n = all.len() as f64;
    let mut axis = [0.0; 3];
    for t in trials {
        for (acc, m) in axis.iter_mut().zip(t.axis_mse) {
            *acc += m * t.errors.len() as f64 / n;
        }
    }
    let rmse = rmse_of_errors(&all);
    let mean_error = all.iter().sum::<f64>() / n;
    all.sort_by(f64::total_cmp);
    Ok(MetricReport {
        method: method.to_string(),
        trials: trials
            .iter()
            .map(|t| TrialMetric {
                trial_id: t.trial_id.clone(),
                samples: t.errors.len(),
                rmse: t.rmse(),
                axis_rmse: t.axis_mse.map(f64::sqrt),
            })
            .collect(),
        rmse,
        axis_rmse: axis.map(f64::sqrt),
        mean_error,
        quantiles: QUANTILES.iter().map(|&q| (q, quantile(&all, q))).collect(),
        fraction_below: THRESHOLDS
            .iter()
            .map(|&th| (th, all.iter().filter(|&&e| e < th).count() as f64 / n))
            .collect(),
        repeats: 1,
    })
}

impl MetricReport {
    /// Averages the reports of independent training repeats field by field.
    pub fn average(reports: &[MetricReport]) -> Result<MetricReport, EvalError> {
        let first = reports.first().ok_or(EvalError::NoReports)?;
        for r in reports {
            let same_trials = r.trials.len() == first.trials.len()
                && r.trials.iter().zip(&first.trials).all(|(a, b)| a.trial_id == b.trial_id);
            if r.method != first.method || !same_trials {
                return Err(EvalError::RepeatMismatch(r.method.clone()));
            }
        }
        let n = reports.len() as f64;
        let mean = |f: &dyn Fn(&MetricReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        let mean3 = |f: &dyn Fn(&MetricReport) -> [f64; 3]| {
            let mut out = [0.0; 3];
            for r in reports {
                for (o, v) in out.iter_mut().zip(f(r)) {
                    *o += v / n;
                }
            }
            out
        };
        Ok(MetricReport {
            method: first.method.clone(),
            trials: (0..first.trials.len())
                .map(|i| TrialMetric {
                    trial_id: first.trials[i].trial_id.clone(),
                    samples: first.trials[i].samples,
                    rmse: mean(&|r| r.trials[i].rmse),
                    axis_rmse: mean3(&|r| r.trials[i].axis_rmse),
                })
                .collect(),
            rmse: mean(&|r| r.rmse),
            axis_rmse: mean3(&|r| r.axis_rmse),
            mean_error: mean(&|r| r.mean_error),
            quantiles: (0..first.quantiles.len())
                .map(|i| (first.quantiles[i].0, mean(&|r| r.quantiles[i].1)))
                .collect(),
            fraction_below: (0..first.fraction_below.len())
                .map(|i| (first.fraction_below[i].0, mean(&|r| r.fraction_below[i].1)))
                .collect(),
            repeats: reports.iter().map(|r| r.repeats).sum(),
        })
    }
}
