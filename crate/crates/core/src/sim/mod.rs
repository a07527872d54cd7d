//! Offline trace replay: ground-truth reconstruction, synthetic
//! environments, policy replay and regret reports.

mod env;
mod replay;
mod report;
mod trace;
mod truth;

pub use env::{
    DriftSegment, Environment, GatewaySchedule, ProcessorLayout, SyntheticEnv,
    SyntheticEnvironment, TraceEnv,
};
pub use replay::{replay, replay_selector, OracleSelector, RegretCurve, Selector};
pub use report::{emit_regret, load_regret_csv, RegretSummary, REGRET_CSV, SUMMARY_JSON};
pub use trace::{load_records, load_trace, write_trace, Trace, TraceLayout, TransactionRecord};
pub use truth::{estimate_ground_truth, GroundTruthCurve, DEFAULT_HALF_WINDOW};

use thiserror::Error;

use crate::bandit::{BanditError, GatewayId};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("missing column {0:?}")]
    MissingColumn(String),
    #[error("malformed row {row}: {reason}")]
    MalformedRow { row: usize, reason: String },
    #[error("trace has no records")]
    EmptyTrace,
    #[error("invalid breakpoints: {0}")]
    InvalidBreakpoints(String),
    #[error("no ground truth for gateway {gateway} at step {step}")]
    UndefinedGroundTruth { gateway: GatewayId, step: usize },
    #[error("nothing to write: {0}")]
    Empty(&'static str),
    #[error(transparent)]
    Bandit(#[from] BanditError),
}
