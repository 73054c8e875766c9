//! Dataset file and per-frame CSV export.
//!
//! Dataset file layout (all integers and reals little-endian):
//!
//! ```text
//! offset  size  content
//! 0       8     magic  b"UWBDSET1"
//! 8       8     u64    header length H in bytes
//! 16      H     UTF-8 JSON DatasetHeader (layout, S, normalizer, provenance, trials with K)
//! 16+H    ...   for each trial in header order:
//!                 K f64                  bin-center stamps
//!                 K * input_dim f64      normalized frames, row-major
//!                 K * label_dim f64      normalized labels, row-major
//! ```
//!
//! Windows are not stored separately: window `i` of a trial is frames
//! `i .. i + S`, so the frame blocks determine every window exactly.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DatasetError, Layout, Normalizer, TrialSequence, WindowedDataset};

pub const DATASET_MAGIC: &[u8; 8] = b"UWBDSET1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub layout: Layout,
    pub s: usize,
    pub normalizer: Normalizer,
    pub config_hash: String,
    pub seed: u64,
    pub trials: Vec<TrialEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialEntry {
    pub id: String,
    pub k: usize,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |e| DatasetError::Io(format!("{}: {e}", path.display()))
}

pub fn write_dataset(
    path: &Path,
    ds: &WindowedDataset,
    layout: &Layout,
    config_hash: &str,
    seed: u64,
) -> Result<(), DatasetError> {
    let header = DatasetHeader {
        layout: layout.clone(),
        s: ds.s,
        normalizer: ds.normalizer,
        config_hash: config_hash.to_string(),
        seed,
        trials: ds
            .trials
            .iter()
            .map(|t| TrialEntry {
                id: t.id.clone(),
                k: t.len(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| DatasetError::Io(e.to_string()))?;
    let mut buf = Vec::with_capacity(16 + json.len() + ds.trials.iter().map(|t| 8 * (t.stamps.len() + t.frames.len() + t.labels.len())).sum::<usize>());
    buf.extend_from_slice(DATASET_MAGIC);
    buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&json);
    for t in &ds.trials {
        for v in t.stamps.iter().chain(&t.frames).chain(&t.labels) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    f.write_all(&buf).map_err(io_err(path))
}

pub fn read_dataset(path: &Path) -> Result<(WindowedDataset, DatasetHeader), DatasetError> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(io_err(path))?;
    let bad = |m: &str| DatasetError::Io(format!("{}: {m}", path.display()));
    if bytes.len() < 16 || &bytes[..8] != DATASET_MAGIC {
        return Err(bad("not a dataset file"));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = bytes.get(16..16 + hlen).ok_or_else(|| bad("truncated header"))?;
    let header: DatasetHeader = serde_json::from_slice(body).map_err(|e| bad(&e.to_string()))?;
    let (input_dim, label_dim) = (header.layout.input_dim(), header.layout.label_dim());
    let mut offset = 16 + hlen;
    let mut take = |n: usize| -> Result<Vec<f64>, DatasetError> {
        let end = offset + 8 * n;
        let chunk = bytes.get(offset..end).ok_or_else(|| bad("truncated data"))?;
        offset = end;
        Ok(chunk
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    };
    let mut trials = Vec::with_capacity(header.trials.len());
    for entry in &header.trials {
        trials.push(TrialSequence {
            id: entry.id.clone(),
            input_dim,
            label_dim,
            stamps: take(entry.k)?,
            frames: take(entry.k * input_dim)?,
            labels: take(entry.k * label_dim)?,
        });
    }
    if offset != bytes.len() {
        return Err(bad("trailing bytes"));
    }
    // Stored trials are already normalized.
    let mut ds = WindowedDataset::build(&trials, header.s, Normalizer::identity())?;
    ds.normalizer = header.normalizer;
    Ok((ds, header))
}

/// One row per frame: `stamp`, all ranges in layout order, then all label
/// coordinates. Values are in physical units (meters).
pub fn frames_csv(trial: &TrialSequence, layout: &Layout, provenance: Option<&str>) -> String {
    use std::fmt::Write as _;
    let mut out = String::new();
    if let Some(p) = provenance {
        let _ = writeln!(out, "# {p}");
    }
    out.push_str("stamp");
    for t in &layout.tag_ids {
        for a in &layout.anchor_ids {
            let _ = write!(out, ",d_t{t}_a{a}");
        }
    }
    for t in &layout.tag_ids {
        let _ = write!(out, ",tag{t}_x,tag{t}_y,tag{t}_z");
    }
    out.push('\n');
    for k in 0..trial.len() {
        out.push_str(&crate::sim::fmt_real(trial.stamps[k]));
        for v in trial.frame(k).iter().chain(trial.label(k)) {
            out.push(',');
            out.push_str(&crate::sim::fmt_real(*v));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;

    #[test]
    fn dataset_file_round_trips_exactly() {
        let layout = Layout::new(vec![0], vec![0, 1]);
        let mk = |id: &str, k: usize, off: f64| TrialSequence {
            id: id.into(),
            input_dim: 2,
            label_dim: 3,
            stamps: (0..k).map(|i| i as f64 * 0.05 + off).collect(),
            frames: (0..2 * k).map(|i| if i % 3 == 0 { 0.0 } else { (i as f64).sqrt() * 7.1 }).collect(),
            labels: (0..3 * k).map(|i| (i as f64 * 0.37).sin() * 100.0 + off).collect(),
        };
        let trials = vec![mk("a", 9, 0.0), mk("b", 5, 1.0 / 3.0)];
        let norm = Normalizer { range_scale: 13.7, position_center: Vec3::new(1.0, 2.0, 1.0 / 7.0), position_scale: 91.3 };
        let ds = WindowedDataset::build(&trials, 4, norm).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.bin");
        write_dataset(&path, &ds, &layout, "hash", 7).unwrap();
        let (back, header) = read_dataset(&path).unwrap();
        assert_eq!(back, ds);
        assert_eq!(header.seed, 7);
        assert_eq!(back.len(), 6 + 2);
        let csv = frames_csv(&trials[0], &layout, Some("x"));
        assert!(csv.starts_with("# x\nstamp,d_t0_a0,d_t0_a1,tag0_x,tag0_y,tag0_z\n"));
        assert_eq!(csv.lines().count(), 2 + 9);
    }
}
