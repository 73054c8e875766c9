use serde::{Deserialize, Serialize};
use uwbloc_autodiff::{Bound, ParamStore, Var};

use crate::{MambaConfig, ModelError, RnnConfig};

/// Any of the sequence regressors, mapping `[B, S, input_dim]` windows to
/// `[B, S, label_dim]` predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelConfig {
    Mamba(MambaConfig),
    Rnn(RnnConfig),
}

impl ModelConfig {
    pub fn name(&self) -> &'static str {
        match self {
            ModelConfig::Mamba(_) => "mamba",
            ModelConfig::Rnn(r) => r.cell.name(),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            ModelConfig::Mamba(m) => m.input_dim,
            ModelConfig::Rnn(r) => r.input_dim,
        }
    }

    pub fn label_dim(&self) -> usize {
        match self {
            ModelConfig::Mamba(m) => m.label_dim,
            ModelConfig::Rnn(r) => r.label_dim,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        match self {
            ModelConfig::Mamba(m) => m.validate(),
            ModelConfig::Rnn(r) => r.validate(),
        }
    }

    /// Fresh parameters; identical for identical `(config, seed)`.
    pub fn init(&self, seed: u64) -> ParamStore {
        match self {
            ModelConfig::Mamba(m) => m.init(seed),
            ModelConfig::Rnn(r) => r.init(seed),
        }
    }

    pub fn param_count(&self) -> usize {
        self.init(0).count()
    }

    pub fn forward<'t>(&self, p: &Bound<'t>, x: Var<'t>) -> Result<Var<'t>, ModelError> {
        match self {
            ModelConfig::Mamba(m) => m.forward(p, x),
            ModelConfig::Rnn(r) => r.forward(p, x),
        }
    }
}
