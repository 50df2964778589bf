//! Exact Nash equilibria of the multi-goal deceptive path planning game:
//! scenarios, restricted sequence-form LPs grown by double oracle,
//! independent verification and the deception metrics.

pub mod analysis;
pub mod defaults;
pub mod document;
pub mod double_oracle;
pub mod environment;
pub mod exec;
pub mod game_tree;
pub mod lp;
pub mod metrics;
pub mod restricted;
pub mod sweep;
