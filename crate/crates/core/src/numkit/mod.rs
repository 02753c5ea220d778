//! Differentiable numeric substrate: dense tensors, named parameter sets
//! with an adaptive-moment optimizer, a bidirectional recurrent encoder with
//! hand-written backward passes, and a finite-difference gradient checker.

mod encoder;
mod gradcheck;
mod loss;
mod params;
mod tensor;

pub use encoder::{
    encode_backward, encode_sequence, encode_sequence_from, encoder_dims, init_encoder,
    EncoderDims, EncoderOutput,
};
pub use gradcheck::{grad_check, grad_check_with, GradCheckOptions};
pub use loss::{sigmoid, softmax, softmax_xent};
pub use params::{adam_update, AdamConfig, Grads, Param, ParamSet};
pub use tensor::{affine, affine_backward, Tensor2};

pub mod names {
    pub use super::encoder::{BW_B, BW_WH, BW_WX, EMB, FW_B, FW_WH, FW_WX};
}
