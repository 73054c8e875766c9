use thiserror::Error;
use uwbloc_autodiff::AutodiffError;
use uwbloc_core::dataset::DatasetError;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("invalid model config: {0}")]
    BadConfig(String),
    #[error("expected input of shape [batch, {s}, {input_dim}], got {got:?}")]
    InputShape {
        s: usize,
        input_dim: usize,
        got: Vec<usize>,
    },
    #[error("training dataset is empty")]
    EmptyDataset,
    #[error("training diverged at epoch {epoch}, step {step}: loss {loss}")]
    Diverged { epoch: usize, step: usize, loss: f64 },
}
