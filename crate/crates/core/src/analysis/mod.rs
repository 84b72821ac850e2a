//! Closed-form attention cost, measured cost and attention-map export.

pub mod complexity;
pub mod cost;
pub mod export;

pub use complexity::{analytic_skt, analytic_ssa, analytic_stt, analytic_vanilla, Macs};
pub use cost::{empirical_cost, encoder_cost, CostReport};
pub use export::{export_attention, load_attention, AttentionIndex, AttentionMap};
