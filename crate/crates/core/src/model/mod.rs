//! End-to-end lifter: configuration, network, losses, metrics, checkpoints,
//! optimization and the non-learned baselines.

pub mod checkpoint;
mod config;
pub mod lifters;
pub mod loss;
pub mod metrics;
mod network;
pub mod optim;
pub mod train;

pub use config::{
    default_rolling_threshold, layers_to_single, preset_layers, reduction_chain, Activation, ModelConfig, RunConfig,
    SpatialMode, TemporalMode, TrainConfig, Variant,
};
pub use loss::{loss_full, loss_target, loss_total, LossBreakdown};
pub use metrics::{mpjpe, p_mpjpe, ProcrustesError};
pub use network::{param_count, Network, Prediction};
