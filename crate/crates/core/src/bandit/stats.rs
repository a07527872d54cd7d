//! Per-gateway sufficient statistics.
//!
//! Three estimators back the policies:
//!
//! * [`SlidingWindowStats`] keeps the last `W` outcomes of one gateway, so
//!   its mean is the success rate since the stopping time at which the
//!   gateway had exactly `W` attempts (or all of them, if fewer).
//! * [`DiscountedStats`] keeps exponentially weighted counts. The stored
//!   values always describe the *next* step: an outcome observed at step
//!   `k` carries weight `α^(t-k)` when read at step `t > k`.
//! * [`BetaParams`] is the discounted Beta posterior used by Thompson
//!   sampling.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

/// A gateway whose discounted count falls below this is reset to empty.
pub const DISCOUNT_FLOOR: f64 = 1e-12;

/// Smallest Beta parameter kept after a discounted update.
pub const BETA_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlidingWindowStats {
    outcomes: VecDeque<bool>,
    successes: usize,
}

impl SlidingWindowStats {
    pub fn new() -> Self {
        Self::default()
    }

    /// Success rate over the window and the number of outcomes in it.
    /// The rate is `None` for a gateway that has never been played.
    pub fn estimate(&self) -> (Option<f64>, usize) {
        let n = self.outcomes.len();
        if n == 0 {
            (None, 0)
        } else {
            (Some(self.successes as f64 / n as f64), n)
        }
    }

    /// Push one outcome, evicting the oldest once more than `window` are held.
    pub fn update(&mut self, success: bool, window: usize) {
        debug_assert!(window > 0);
        self.outcomes.push_back(success);
        self.successes += usize::from(success);
        while self.outcomes.len() > window {
            if self.outcomes.pop_front() == Some(true) {
                self.successes -= 1;
            }
        }
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn successes(&self) -> usize {
        self.successes
    }

    pub fn outcomes(&self) -> impl Iterator<Item = bool> + '_ {
        self.outcomes.iter().copied()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DiscountedStats {
    pub weighted_count: f64,
    pub weighted_successes: f64,
}

impl DiscountedStats {
    pub fn new(weighted_count: f64, weighted_successes: f64) -> Self {
        Self {
            weighted_count,
            weighted_successes,
        }
    }

    pub fn estimate(&self) -> (Option<f64>, f64) {
        if self.weighted_count > 0.0 {
            let y = (self.weighted_successes / self.weighted_count).clamp(0.0, 1.0);
            (Some(y), self.weighted_count)
        } else {
            (None, 0.0)
        }
    }

    pub fn decay(&mut self, discount: f64) {
        self.weighted_count *= discount;
        self.weighted_successes *= discount;
        // snap as a pair so the ratio stays exact while the gateway is live
        if self.weighted_count < DISCOUNT_FLOOR {
            self.weighted_count = 0.0;
            self.weighted_successes = 0.0;
        }
    }

    pub fn update(&mut self, success: bool) {
        self.weighted_count += 1.0;
        if success {
            self.weighted_successes += 1.0;
        }
    }
}

/// Decay every gateway's discounted mass by one step.
pub fn decay_all(stats: &mut [DiscountedStats], discount: f64) {
    if discount == 1.0 {
        return;
    }
    for s in stats {
        s.decay(discount);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaParams {
    pub lambda: f64,
    pub gamma: f64,
}

impl BetaParams {
    pub fn new(lambda: f64, gamma: f64) -> Self {
        Self { lambda, gamma }
    }

    /// Discounted posterior step. Only the played gateway moves; the others
    /// keep their parameters untouched.
    pub fn update(&mut self, chosen: bool, success: bool, discount: f64) {
        if !chosen {
            return;
        }
        let r = f64::from(u8::from(success));
        self.lambda = (self.lambda * discount + r).max(BETA_FLOOR);
        self.gamma = (self.gamma * discount + (1.0 - r)).max(BETA_FLOOR);
    }

    pub fn mean(&self) -> f64 {
        self.lambda / (self.lambda + self.gamma)
    }
}

impl Default for BetaParams {
    fn default() -> Self {
        Self::new(1.0, 1.0)
    }
}
