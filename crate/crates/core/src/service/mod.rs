//! Online decision service: hash-split experiment arms, delayed rewards,
//! rate limits, pacing, snapshots and the HTTP front end.

mod config;
mod engine;
mod experiment;
mod http;
mod limiter;
mod pacing;
mod pending;
mod snapshot;

use thiserror::Error;

use crate::bandit::{BanditError, GatewayId, ProcessorId};

pub use config::{
    apply_env_overrides, ArmSpec, BestConfigRef, ServerConfig, ServiceConfig, SnapshotSettings,
    ENV_PREFIX,
};
pub use engine::{
    ArmCounters, ArmMetrics, GatewayCounters, GatewayMetrics, LatencySummary, Metrics, RewardAck,
    RewardEvent, RouteDecision, RouteRequest, Router, RouterConfig, ServiceCounters, ServiceState,
};
pub use experiment::{split_hash, ExperimentArm, ExperimentConfig};
pub use http::{app, now_ms, serve, spawn_snapshotter};
pub use limiter::{RateLimitConfig, RateLimiter, TokenBucket};
pub use pacing::{PaceDecision, Pacer, PacingConfig, DAY_MS};
pub use pending::{PendingEntry, PendingTable, RewardMatch, DEFAULT_CAPACITY, DEFAULT_TTL_MS};
pub use snapshot::{
    decode_snapshot, encode_snapshot, read_snapshot, write_snapshot, SNAPSHOT_VERSION,
};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("unknown processor {0}")]
    UnknownProcessor(ProcessorId),
    #[error("unknown experiment arm {0}")]
    UnknownArm(String),
    #[error("unknown gateway {0}")]
    UnknownGateway(GatewayId),
    #[error("every eligible gateway is rate limited")]
    AllGatewaysRateLimited,
    #[error("duplicate txn id {0}")]
    DuplicateTxnId(String),
    #[error("unknown txn id {0}")]
    UnknownTxn(String),
    #[error("duplicate reward for txn id {0}")]
    DuplicateReward(String),
    #[error("corrupt snapshot: {0}")]
    CorruptSnapshot(String),
    #[error("snapshot version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("snapshot does not match the configured service: {0}")]
    IncompatibleSnapshot(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Bandit(#[from] BanditError),
}
