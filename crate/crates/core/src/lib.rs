//! Non-stationary multi-armed bandits for payment gateway routing.

pub mod bandit;
pub mod cli;
mod fsutil;
pub mod service;
pub mod sim;
pub mod tuner;
pub mod uplift;
