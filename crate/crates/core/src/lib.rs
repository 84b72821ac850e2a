//! 2D-to-3D human pose lifting with a part-based adaptive graph encoder and
//! skipped self-attention.
//!
//! The crate is self-contained: [`tensor`] provides a small reverse-mode
//! autodiff kernel with multiply-accumulate metering, and the model is built
//! on top of it.
//!
//! * [`spatial`]: per-frame body-part graph with a learned adjacency.
//! * [`temporal`]: skipped-attention encoder and length-reducing decoder,
//!   plus the vanilla and strided baselines.
//! * [`model`]: configuration, end-to-end network, losses, metrics,
//!   checkpoints and training.
//! * [`data`]: pose sequences, windowing and boundary completion, the
//!   synthetic motion generator and the dataset file format.
//! * [`analysis`]: closed-form attention cost, measured cost, attention export.
//! * [`cli`]: the `skiplift` command-line tool.

pub mod analysis;
pub mod cli;
pub mod data;
pub mod error;
pub mod model;
pub mod params;
pub mod spatial;
pub mod temporal;
pub mod tensor;

pub use error::{Error, Result};
pub use model::{ModelConfig, Network, RunConfig, TrainConfig};
pub use params::{Graph, ParamStore};
pub use tensor::{FlopCounter, Tape, Tensor, Var};
