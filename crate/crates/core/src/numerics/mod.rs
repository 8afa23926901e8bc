//! Dense `f64` tensors, a reverse-mode tape and the Adam optimizer.
//!
//! Ops are coarse (whole linear layers, layer norm rows, fused causal
//! attention) so a training step records a few dozen nodes regardless of
//! batch size. Every op has a hand-written vector-Jacobian product;
//! `tests/gradcheck.rs` compares each against central differences.
//!
//! Layer norm uses a fixed variance stabilizer of `1e-5`
//! ([`LAYER_NORM_EPS`]). Attention masks are strictly causal.

mod adam;
mod attention;
mod params;
mod tape;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use params::{
    causal_self_attention, ffn, layer_norm, linear, AttentionIdx, FfnIdx, LinearIdx, NormIdx,
    ParamBuilder, ParamSet,
};
pub use tape::{Gradients, Tape, Var, LAYER_NORM_EPS};
pub(crate) use tensor::gemm as gemm_into;
pub use tensor::{compensated_sum, Tensor};
