//! Sequence regressors from binned range windows to tag positions: a stack of
//! selective state-space (Mamba) blocks, and GRU / LSTM / BiLSTM baselines.
//! Models are plain configs; parameters live in a
//! [`ParamStore`](uwbloc_autodiff::ParamStore) and every forward pass is
//! recorded on a fresh tape.

mod error;
mod infer;
pub mod layers;
mod mamba;
mod model;
mod rnn;
pub mod ssm;
mod train;

pub use error::ModelError;
pub use infer::{predict_trial, predict_windows, INFER_BATCH};
pub use mamba::{MambaConfig, DT_MAX, DT_MIN};
pub use model::ModelConfig;
pub use rnn::{CellKind, RnnConfig};
pub use train::{batch_gradients, loss_curve_csv, train, train_repeats, EpochLog, TrainConfig, TrainOutcome};
