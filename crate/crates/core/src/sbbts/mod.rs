//! Drift network, large-β transport map, bridge-regression training and
//! sequential generation.
//!
//! All learning happens in scaled units (see [`ScalerState`]); `β` is
//! expressed in those units. With `sb_mode` the transport map is the
//! identity and training reduces to Schrödinger-bridge drift regression.

mod checkpoint;
mod config;
mod generate;
mod model;
mod scaler;
mod train;

pub use checkpoint::{
    checkpoint_from_bytes, checkpoint_to_bytes, load_checkpoint, save_checkpoint,
    CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use config::{SBBTSConfig, TokenFeatures};
pub use generate::{generate, generate_from};
pub use model::{
    encode_sequences, inverse_transport, positional_encoding, sequence_tokens, token_row,
    transport_map, Architecture, DriftNet, EncoderCache,
};
pub use scaler::{psd_sqrt, reference_volatility, ReferenceVolatility, ScalerState};
pub use train::{
    batch_loss, compute_loss_batch, frozen_endpoints, noise_factors, sample_bridge_batch, train,
    train_on_grid, BridgeBatch, Endpoints, EpochLoss, TrainOutcome, TrainedModel,
};
