use std::fmt;

use uwbloc_core::dataset::{read_dataset, trial_sequence, write_dataset, Layout, Normalizer, TrialSequence, WindowedDataset};
use uwbloc_core::eval::LabelSource;
use uwbloc_core::sim::{Environment, Trial, TrialMeta};
use uwbloc_core::TagMount;

use crate::simulate::{load_trials, read_manifest};
use crate::{CliError, Run};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

/// Frame and window counts of one prepared trial; `m` is `None` for trials
/// shorter than the window, which are skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedTrial {
    pub id: String,
    pub split: Split,
    pub k: usize,
    pub m: Option<usize>,
}

impl fmt::Display for PreparedTrial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.m {
            Some(m) => write!(f, "{} {:<5} K={} M={m}", self.id, self.split, self.k),
            None => write!(f, "{} {:<5} K={} skipped", self.id, self.split, self.k),
        }
    }
}

/// Train and test windows for one tag layout and label source. The test set
/// is normalized with the statistics of the training set.
#[derive(Debug, Clone)]
pub struct Datasets {
    pub layout: Layout,
    pub train: WindowedDataset,
    pub test: WindowedDataset,
    pub trials: Vec<PreparedTrial>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct PrepareSummary {
    pub trials: Vec<PreparedTrial>,
    pub warnings: Vec<String>,
    pub train_windows: usize,
    pub test_windows: usize,
}

impl fmt::Display for PrepareSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for t in &self.trials {
            writeln!(f, "{t}")?;
        }
        write!(f, "windows: {} train / {} test", self.train_windows, self.test_windows)
    }
}

/// Layout of the first `tags` mounts against every anchor of the environment.
pub fn layout_for(meta: &TrialMeta, tags: usize) -> Layout {
    layout_for_mounts(&meta.environment, &meta.mounts, tags)
}

pub fn layout_for_mounts(env: &Environment, mounts: &[TagMount], tags: usize) -> Layout {
    Layout::new(
        mounts.iter().take(tags).map(|m| m.tag_id).collect(),
        env.anchors.iter().map(|a| a.anchor_id).collect(),
    )
}

pub fn mounts_for(meta: &TrialMeta, tags: usize) -> Vec<TagMount> {
    meta.mounts.iter().take(tags).copied().collect()
}

/// Bins every trial into frames and cuts windows of `s` frames.
pub fn build_datasets(
    train: &[(Trial, TrialMeta)],
    test: &[(Trial, TrialMeta)],
    tags: usize,
    labels: LabelSource,
    s: usize,
) -> Result<Datasets, CliError> {
    let meta = &train.first().ok_or(uwbloc_core::dataset::DatasetError::EmptyTrainingSet)?.1;
    let layout = layout_for(meta, tags);
    let mut trials = Vec::new();
    let mut warnings = Vec::new();
    let mut sequences = |set: &[(Trial, TrialMeta)], split: Split| -> Result<Vec<TrialSequence>, CliError> {
        let mut out = Vec::new();
        for (trial, _) in set {
            let track = match labels {
                LabelSource::Gt => &trial.ground_truth,
                LabelSource::Osl => &trial.osl,
            };
            let seq = trial_sequence(&trial.id, &trial.measurements, track, &layout)?;
            let m = seq.window_count(s);
            if m.is_none() {
                warnings.push(format!("{}: K={} is shorter than the window S={s}; skipped", trial.id, seq.len()));
            }
            trials.push(PreparedTrial {
                id: trial.id.clone(),
                split,
                k: seq.len(),
                m,
            });
            if m.is_some() {
                out.push(seq);
            }
        }
        Ok(out)
    };
    let train_seqs = sequences(train, Split::Train)?;
    let test_seqs = sequences(test, Split::Test)?;
    let normalizer = Normalizer::fit(&train_seqs)?;
    Ok(Datasets {
        train: WindowedDataset::build(&train_seqs, s, normalizer)?,
        test: WindowedDataset::build(&test_seqs, s, normalizer)?,
        layout,
        trials,
        warnings,
    })
}

/// Builds the configured datasets and writes `dataset/{train,test}.bin` and
/// `dataset/summary.csv`.
pub fn prepare(run: &Run) -> Result<PrepareSummary, CliError> {
    let manifest = read_manifest(run)?;
    let train = load_trials(run, &manifest.train)?;
    let test = load_trials(run, &manifest.test)?;
    let d = &run.cfg.dataset;
    let sets = build_datasets(&train, &test, d.tags, d.labels, d.window)?;
    let dir = run.paths.dataset();
    run.fresh_dir(&dir)?;
    write_dataset(&run.paths.train_set(), &sets.train, &sets.layout, &run.hash, run.seed)?;
    write_dataset(&run.paths.test_set(), &sets.test, &sets.layout, &run.hash, run.seed)?;
    let mut csv = format!("# {}\ntrial,split,k,m\n", run.provenance());
    for t in &sets.trials {
        let m = t.m.map_or(String::new(), |m| m.to_string());
        csv.push_str(&format!("{},{},{},{m}\n", t.id, t.split, t.k));
    }
    run.write(&dir.join("summary.csv"), csv)?;
    Ok(PrepareSummary {
        train_windows: sets.train.len(),
        test_windows: sets.test.len(),
        trials: sets.trials,
        warnings: sets.warnings,
    })
}

/// Reads a prepared dataset, checking it came from this config and seed.
pub fn read_prepared(run: &Run, test: bool) -> Result<(WindowedDataset, Layout), CliError> {
    let path = if test { run.paths.test_set() } else { run.paths.train_set() };
    if !path.exists() {
        return Err(Run::missing(&path, "prepared dataset", "prepare"));
    }
    let (ds, header) = read_dataset(&path)?;
    run.check_stamp(&path, &header.config_hash, header.seed, "prepare")?;
    Ok((ds, header.layout))
}
