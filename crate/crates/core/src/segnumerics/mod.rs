//! Forward-only f64 reference kernels: sequence-reduction attention, Mix-FFN
//! and MAE patch masking. Single head, single block, no normalization layers.

mod attention;
mod ffn;
mod mae;
mod matrix;

use thiserror::Error;

pub use attention::{reduce_tokens, softmax_rows, sr_attention, AttentionParams};
pub use ffn::{depthwise_conv3x3, gelu, mix_ffn, FfnParams};
pub use mae::{mae_mask, MaeMask};
pub use matrix::{Matrix, TokenMatrix};

#[derive(Debug, Error, PartialEq)]
pub enum SegError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("sequence length {n} is not divisible by reduction ratio {gamma}")]
    IndivisibleSequence { n: usize, gamma: usize },
    #[error("matrix entries must be finite")]
    NonFinite,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, SegError>;
