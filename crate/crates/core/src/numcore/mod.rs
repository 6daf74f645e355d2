//! Dense tensors, the kernels the model needs, and a small reverse-mode
//! differentiation engine over them.

mod gradcheck;
mod kernels;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, GradCheck, GradCheckReport};
pub use kernels::{
    causal_conv1d, concat_channels, gather, masked_row_softmax, matmul, pad_rows, readout,
    time_map, transpose, Mask,
};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
