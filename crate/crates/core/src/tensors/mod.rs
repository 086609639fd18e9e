//! Dense tensors and the reverse-mode tape that differentiates through them.

mod grad_check;
mod tape;
mod tensor;

pub use grad_check::grad_check;
pub use tape::{Op, Tape, TapeNode, Var, DEGENERATE_ROW_SUM};
pub use tensor::Tensor;
