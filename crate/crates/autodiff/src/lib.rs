//! Reverse-mode automatic differentiation over dense row-major `f64` tensors.
//!
//! A [`Tape`] records every operation of one forward pass. Operations are
//! methods on [`Var`], a cheap handle into the tape. [`Tape::backward`] walks
//! the tape in reverse and returns the gradient of a scalar loss with respect
//! to every node.
//!
//! Broadcasting follows a single rule: the smaller operand's shape must be a
//! trailing suffix of the larger one (`[d]` or `[s, d]` against `[b, s, d]`).
//! Anything else is a shape error that names both shapes.
//!
//! ```
//! use uwbloc_autodiff::{Tape, Tensor};
//!
//! let tape = Tape::new();
//! let x = tape.leaf(Tensor::new(vec![2], vec![0.0, 1.0]).unwrap(), true);
//! let loss = x.sigmoid().sum_all();
//! let grads = tape.backward(loss).unwrap();
//! assert_eq!(grads.get(x).unwrap().data()[0], 0.25);
//! ```

mod checkpoint;
mod error;
mod gradcheck;
mod matmul;
mod ops;
mod optim;
mod params;
mod tape;
mod tensor;

pub use checkpoint::{load_checkpoint, read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use error::AutodiffError;
pub use gradcheck::{gradcheck, GradCheck, GRADCHECK_FLOOR};
pub use matmul::gemm;
pub use optim::{adam_step, lr_schedule, Adam, AdamConfig, LR0, LR_FACTOR, LR_STEP};
pub use params::{name_seed, Bound, Init, ParamStore};
pub use tape::{BackwardArgs, CustomOp, Gradients, Tape, Var};
pub use tensor::Tensor;
