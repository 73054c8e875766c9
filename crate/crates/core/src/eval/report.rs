use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use super::{EvalError, MetricReport, TrialErrors};
use crate::sim::fmt_real;

/// Name of the pooled row appended after the per-trial rows.
pub const OVERALL_ROW: &str = "all";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub trial_id: String,
    /// One RMSE per method, in column order.
    pub rmse: Vec<f64>,
    /// Column index of the lowest RMSE; `None` with a single method.
    pub best: Option<usize>,
    pub second: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub methods: Vec<String>,
    pub rows: Vec<ComparisonRow>,
}

fn rank(values: &[f64]) -> (Option<usize>, Option<usize>) {
    if values.len() < 2 {
        return (None, None);
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    (Some(order[0]), Some(order[1]))
}

/// Per-trial RMSE of each method side by side, plus the pooled row.
pub fn compare_methods(reports: &[MetricReport]) -> Result<ComparisonTable, EvalError> {
    let first = reports.first().ok_or(EvalError::NoReports)?;
    let ids: Vec<&str> = first.trials.iter().map(|t| t.trial_id.as_str()).collect();
    for r in reports {
        let other: Vec<&str> = r.trials.iter().map(|t| t.trial_id.as_str()).collect();
        if other != ids {
            return Err(EvalError::TrialMismatch(format!(
                "{} has [{}], {} has [{}]",
                first.method,
                ids.join(" "),
                r.method,
                other.join(" ")
            )));
        }
    }
    let mut rows = Vec::with_capacity(ids.len() + 1);
    for (i, id) in ids.iter().enumerate() {
        let rmse: Vec<f64> = reports.iter().map(|r| r.trials[i].rmse).collect();
        let (best, second) = rank(&rmse);
        rows.push(ComparisonRow { trial_id: id.to_string(), rmse, best, second });
    }
    let rmse: Vec<f64> = reports.iter().map(|r| r.rmse).collect();
    let (best, second) = rank(&rmse);
    rows.push(ComparisonRow { trial_id: OVERALL_ROW.into(), rmse, best, second });
    Ok(ComparisonTable {
        methods: reports.iter().map(|r| r.method.clone()).collect(),
        rows,
    })
}

fn comment_lines(out: &mut String, provenance: Option<&str>) {
    if let Some(p) = provenance {
        for line in p.lines() {
            let _ = writeln!(out, "# {line}");
        }
    }
}

impl ComparisonTable {
    pub fn to_csv(&self, provenance: Option<&str>) -> String {
        let mut out = String::new();
        comment_lines(&mut out, provenance);
        let _ = writeln!(out, "trial,{},best,second_best", self.methods.join(","));
        let name = |i: Option<usize>| i.map_or(String::new(), |i| self.methods[i].clone());
        for row in &self.rows {
            let cells: Vec<String> = row.rmse.iter().map(|v| fmt_real(*v)).collect();
            let _ = writeln!(out, "{},{},{},{}", row.trial_id, cells.join(","), name(row.best), name(row.second));
        }
        out
    }

    /// Fixed-width text; `*` marks the best method of a row, `+` the runner-up.
    pub fn to_text(&self) -> String {
        let cell = |row: &ComparisonRow, i: usize| {
            let mark = if row.best == Some(i) {
                "*"
            } else if row.second == Some(i) {
                "+"
            } else {
                " "
            };
            format!("{:.3}{mark}", row.rmse[i])
        };
        let first_w = self.rows.iter().map(|r| r.trial_id.len()).chain([5]).max().unwrap_or(5);
        let widths: Vec<usize> = (0..self.methods.len())
            .map(|i| self.rows.iter().map(|r| cell(r, i).len()).chain([self.methods[i].len()]).max().unwrap_or(0))
            .collect();
        let mut out = format!("{:<first_w$}", "trial");
        for (m, w) in self.methods.iter().zip(&widths) {
            let _ = write!(out, "  {m:>w$}");
        }
        out.push('\n');
        for row in &self.rows {
            let _ = write!(out, "{:<first_w$}", row.trial_id);
            for (i, w) in widths.iter().enumerate() {
                let _ = write!(out, "  {:>w$}", cell(row, i));
            }
            out.push('\n');
        }
        out
    }
}

/// Which positions the learned model was trained to reproduce.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelSource {
    /// True tag positions.
    Gt,
    /// Positions from the biased onboard localizer.
    Osl,
}

impl fmt::Display for LabelSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LabelSource::Gt => "gt",
            LabelSource::Osl => "osl",
        })
    }
}

/// One training run of the ablation grid, evaluated against true positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRun {
    pub labels: LabelSource,
    pub tags: usize,
    pub model: String,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    pub labels: LabelSource,
    pub tags: usize,
    pub model: String,
    pub runs: usize,
    /// `None` when the grid cell has no run.
    pub mean_rmse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub models: Vec<String>,
    pub cells: Vec<AblationCell>,
}

pub const ABLATION_TAGS: [usize; 2] = [1, 2];
pub const ABLATION_LABELS: [LabelSource; 2] = [LabelSource::Gt, LabelSource::Osl];

/// Groups runs into the labels x tags x model grid and averages each cell.
pub fn ablation_report(runs: &[AblationRun]) -> AblationReport {
    let mut models: Vec<String> = Vec::new();
    for r in runs {
        if !models.contains(&r.model) {
            models.push(r.model.clone());
        }
    }
    let mut cells = Vec::new();
    for model in &models {
        for tags in ABLATION_TAGS {
            for labels in ABLATION_LABELS {
                let hits: Vec<f64> = runs
                    .iter()
                    .filter(|r| &r.model == model && r.tags == tags && r.labels == labels)
                    .map(|r| r.rmse)
                    .collect();
                cells.push(AblationCell {
                    labels,
                    tags,
                    model: model.clone(),
                    runs: hits.len(),
                    mean_rmse: (!hits.is_empty()).then(|| hits.iter().sum::<f64>() / hits.len() as f64),
                });
            }
        }
    }
    AblationReport { models, cells }
}

impl AblationReport {
    pub fn cell(&self, model: &str, labels: LabelSource, tags: usize) -> Option<&AblationCell> {
        self.cells.iter().find(|c| c.model == model && c.labels == labels && c.tags == tags)
    }

    pub fn missing(&self) -> Vec<&AblationCell> {
        self.cells.iter().filter(|c| c.mean_rmse.is_none()).collect()
    }

    pub fn is_complete(&self) -> bool {
        !self.models.is_empty() && self.missing().is_empty()
    }

    pub fn to_csv(&self, provenance: Option<&str>) -> String {
        let mut out = String::new();
        comment_lines(&mut out, provenance);
        out.push_str("model,tags,labels,runs,rmse\n");
        for c in &self.cells {
            let v = c.mean_rmse.map_or(String::new(), fmt_real);
            let _ = writeln!(out, "{},{},{},{},{v}", c.model, c.tags, c.labels, c.runs);
        }
        out
    }

    /// One block per model: rows are tag counts, columns the label sources and
    /// the change from OSL to true labels.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let show = |v: Option<f64>| v.map_or("missing".to_string(), |v| format!("{v:.3}"));
        for model in &self.models {
            let _ = writeln!(out, "{model}");
            let _ = writeln!(out, "  {:<6}  {:>9}  {:>9}  {:>9}", "tags", "gt", "osl", "gt-osl");
            for tags in ABLATION_TAGS {
                let gt = self.cell(model, LabelSource::Gt, tags).and_then(|c| c.mean_rmse);
                let osl = self.cell(model, LabelSource::Osl, tags).and_then(|c| c.mean_rmse);
                let diff = gt.zip(osl).map(|(g, o)| g - o);
                let _ = writeln!(out, "  {tags:<6}  {:>9}  {:>9}  {:>9}", show(gt), show(osl), show(diff));
            }
        }
        let missing = self.missing();
        if !missing.is_empty() {
            let _ = writeln!(out, "missing cells:");
            for c in missing {
                let _ = writeln!(out, "  {} tags={} labels={}", c.model, c.tags, c.labels);
            }
        }
        out
    }
}

/// Plot-ready rows `trial,method,sample,error`.
pub fn long_format_csv(methods: &[(String, Vec<TrialErrors>)], provenance: Option<&str>) -> String {
    let mut out = String::new();
    comment_lines(&mut out, provenance);
    out.push_str("trial,method,sample,error\n");
    for (method, trials) in methods {
        for t in trials {
            for (k, e) in t.errors.iter().enumerate() {
                let _ = writeln!(out, "{},{method},{k},{}", t.trial_id, fmt_real(*e));
            }
        }
    }
    out
}
