use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use xxhash_rust::xxh3::Xxh3;

use super::ServiceError;
use crate::bandit::PolicyConfig;

const WEIGHT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentArm {
    pub label: String,
    pub weight: f64,
    pub policy: PolicyConfig,
}

/// Weighted arms plus the salt that keys the hash split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub salt: String,
    pub arms: Vec<ExperimentArm>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ServiceError> {
        let bad = |m: String| Err(ServiceError::InvalidConfig(m));
        if self.arms.is_empty() {
            return bad("experiment has no arms".into());
        }
        let mut labels = BTreeSet::new();
        for arm in &self.arms {
            if arm.label.is_empty() {
                return bad("empty arm label".into());
            }
            if !labels.insert(arm.label.as_str()) {
                return bad(format!("arm label {} used twice", arm.label));
            }
            if !(arm.weight.is_finite() && arm.weight > 0.0) {
                return bad(format!("arm {} weight must be positive", arm.label));
            }
        }
        let total: f64 = self.arms.iter().map(|a| a.weight).sum();
        if (total - 1.0).abs() > WEIGHT_TOLERANCE {
            return bad(format!("arm weights sum to {total}, expected 1"));
        }
        Ok(())
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.arms.iter().map(|a| a.label.as_str())
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.arms.iter().position(|a| a.label == label)
    }

    /// Arm index for `txn_id`; depends only on salt, weights and id.
    pub fn assign(&self, txn_id: &str) -> usize {
        let u = unit_interval(split_hash(&self.salt, txn_id));
        let mut acc = 0.0;
        for (i, arm) in self.arms.iter().enumerate() {
            acc += arm.weight;
            if u < acc {
                return i;
            }
        }
        // weights may sum to 1 - 1e-9
        self.arms.len() - 1
    }

    pub fn assign_label(&self, txn_id: &str) -> &str {
        &self.arms[self.assign(txn_id)].label
    }
}

/// Stable 64-bit hash of (salt, txn_id). The salt is length-prefixed so
/// ("ab", "c") and ("a", "bc") hash differently.
pub fn split_hash(salt: &str, txn_id: &str) -> u64 {
    let mut h = Xxh3::new();
    h.update(&(salt.len() as u64).to_le_bytes());
    h.update(salt.as_bytes());
    h.update(txn_id.as_bytes());
    h.digest()
}

fn unit_interval(h: u64) -> f64 {
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
