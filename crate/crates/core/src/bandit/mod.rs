//! Success-rate estimators and the gateway selection policies.

mod config;
mod policy;
mod stats;
mod types;

pub use config::{PolicyConfig, PolicyKind};
pub use policy::{gumbel_from_uniform, gumbel_sample, ArmSummary, PolicyState};
pub use stats::{
    decay_all, BetaParams, DiscountedStats, SlidingWindowStats, BETA_FLOOR, DISCOUNT_FLOOR,
};
pub use types::{GatewayId, ProcessorId, RoutingTable};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BanditError {
    #[error("invalid policy config: {0}")]
    InvalidConfig(String),
    #[error("invalid routing table: {0}")]
    InvalidRoutingTable(String),
    #[error("epsilon {epsilon} exceeds 1/{set_size} for an eligible set of size {set_size}")]
    EpsilonTooLarge { epsilon: f64, set_size: usize },
    #[error("eligible gateway set is empty")]
    EmptyEligibleSet,
    #[error("unknown gateway {0}")]
    UnknownGateway(GatewayId),
}
