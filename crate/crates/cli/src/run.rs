use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{ModelKind, RunConfig};
use crate::CliError;

/// Artifact locations under one working directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Paths {
    pub root: PathBuf,
}

impl Paths {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn trials(&self) -> PathBuf {
        self.root.join("trials")
    }

    pub fn manifest(&self) -> PathBuf {
        self.trials().join("manifest.json")
    }

    pub fn trial(&self, id: &str) -> PathBuf {
        self.trials().join(id)
    }

    pub fn dataset(&self) -> PathBuf {
        self.root.join("dataset")
    }

    pub fn train_set(&self) -> PathBuf {
        self.dataset().join("train.bin")
    }

    pub fn test_set(&self) -> PathBuf {
        self.dataset().join("test.bin")
    }

    pub fn model(&self, kind: ModelKind) -> PathBuf {
        self.root.join("models").join(kind.name())
    }

    pub fn checkpoint(&self, kind: ModelKind, repeat: usize) -> PathBuf {
        self.model(kind).join(format!("repeat_{repeat}.ckpt"))
    }

    pub fn baseline(&self) -> PathBuf {
        self.root.join("baseline").join("go")
    }

    pub fn reports(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn ablation(&self) -> PathBuf {
        self.root.join("ablation")
    }

    pub fn probe(&self) -> PathBuf {
        self.root.join("probe")
    }
}

/// Everything a pipeline step needs: the config, its hash, the seed and
/// where artifacts live.
#[derive(Debug, Clone)]
pub struct Run {
    pub cfg: RunConfig,
    pub hash: String,
    pub seed: u64,
    pub force: bool,
    pub paths: Paths,
}

impl Run {
    pub fn new(cfg: RunConfig, seed: u64, workdir: impl Into<PathBuf>, force: bool) -> Self {
        Self {
            hash: cfg.hash(),
            cfg,
            seed,
            force,
            paths: Paths::new(workdir),
        }
    }

    /// The line stamped into every output.
    pub fn provenance(&self) -> String {
        format!("config_hash={} seed={}", self.hash, self.seed)
    }

    /// Creates `dir` empty. An existing non-empty directory is an error
    /// unless the run was started with `force`, in which case it is removed.
    pub fn fresh_dir(&self, dir: &Path) -> Result<(), CliError> {
        let occupied = fs::read_dir(dir).map(|mut d| d.next().is_some()).unwrap_or(false);
        if occupied {
            if !self.force {
                return Err(CliError::Exists(dir.display().to_string()));
            }
            fs::remove_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
    }

    pub fn write(&self, path: &Path, body: impl AsRef<[u8]>) -> Result<(), CliError> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        fs::write(path, body).map_err(|e| CliError::io(path, e))
    }

    /// Pretty JSON wrapped with the config hash and seed.
    pub fn write_json<T: Serialize>(&self, path: &Path, body: &T) -> Result<(), CliError> {
        let doc = Stamped {
            config_hash: self.hash.clone(),
            seed: self.seed,
            body,
        };
        let text = serde_json::to_string_pretty(&doc).map_err(|e| CliError::artifact(path, e.to_string()))?;
        self.write(path, text + "\n")
    }

    /// Reads a file written by [`Run::write_json`], checking it belongs to
    /// this config and seed.
    pub fn read_json<T: for<'de> Deserialize<'de>>(
        &self,
        path: &Path,
        what: &'static str,
        step: &'static str,
    ) -> Result<T, CliError> {
        let text = match fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(CliError::Missing {
                    what,
                    path: path.display().to_string(),
                    step,
                })
            }
            Err(e) => return Err(CliError::io(path, e)),
        };
        let doc: Stamped<T> = serde_json::from_str(&text).map_err(|e| CliError::artifact(path, e.to_string()))?;
        self.check_stamp(path, &doc.config_hash, doc.seed, step)?;
        Ok(doc.body)
    }

    pub fn check_stamp(&self, path: &Path, hash: &str, seed: u64, step: &'static str) -> Result<(), CliError> {
        if hash != self.hash || seed != self.seed {
            return Err(CliError::Stale {
                path: path.display().to_string(),
                found: format!("{hash} (seed {seed})"),
                expected: format!("{} (seed {})", self.hash, self.seed),
                step,
            });
        }
        Ok(())
    }

    pub fn missing(path: &Path, what: &'static str, step: &'static str) -> CliError {
        CliError::Missing {
            what,
            path: path.display().to_string(),
            step,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Stamped<T> {
    config_hash: String,
    seed: u64,
    body: T,
}
