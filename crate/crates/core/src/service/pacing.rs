use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ServiceError;
use crate::bandit::GatewayId;

pub const DAY_MS: u64 = 86_400_000;

/// Minimum transaction counts per gateway over each horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PacingConfig {
    pub minima: BTreeMap<GatewayId, u64>,
    pub horizon_ms: u64,
    pub slack: u64,
    /// When set, the minima must fit inside this many transactions per horizon.
    pub expected_volume: Option<u64>,
}

impl Default for PacingConfig {
    fn default() -> Self {
        Self {
            minima: BTreeMap::new(),
            horizon_ms: DAY_MS,
            slack: 10,
            expected_volume: None,
        }
    }
}

impl PacingConfig {
    pub fn validate(&self) -> Result<(), ServiceError> {
        if self.horizon_ms == 0 {
            return Err(ServiceError::InvalidConfig(
                "pacing horizon must be positive".into(),
            ));
        }
        if let Some(volume) = self.expected_volume {
            let total: u64 = self.minima.values().sum();
            if total > volume {
                return Err(ServiceError::InvalidConfig(format!(
                    "pacing minima total {total} exceeds expected volume {volume}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PaceDecision {
    pub forced: Option<usize>,
    /// A gateway was behind pace but had no rate capacity.
    pub deficit: bool,
}

/// Linear pace tracker. A gateway is forced once
/// `routed + slack < (minimum + slack) * elapsed_fraction`, so the allowed
/// lag shrinks from `slack` to zero by the end of the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pacer {
    minima: Vec<u64>,
    horizon_ms: u64,
    slack: u64,
    period_start_ms: u64,
    routed: Vec<u64>,
}

impl Pacer {
    pub fn new(
        config: &PacingConfig,
        gateways: &[GatewayId],
        now_ms: u64,
    ) -> Result<Self, ServiceError> {
        config.validate()?;
        if let Some(g) = config.minima.keys().find(|g| !gateways.contains(g)) {
            return Err(ServiceError::InvalidConfig(format!(
                "pacing minimum for unknown gateway {g}"
            )));
        }
        Ok(Self {
            minima: gateways
                .iter()
                .map(|g| config.minima.get(g).copied().unwrap_or(0))
                .collect(),
            horizon_ms: config.horizon_ms,
            slack: config.slack,
            period_start_ms: now_ms,
            routed: vec![0; gateways.len()],
        })
    }

    fn roll(&mut self, now_ms: u64) {
        if now_ms >= self.period_start_ms + self.horizon_ms {
            let periods = (now_ms - self.period_start_ms) / self.horizon_ms;
            self.period_start_ms += periods * self.horizon_ms;
            self.routed.iter_mut().for_each(|r| *r = 0);
        }
    }

    fn lag(&self, g: usize, frac: f64) -> f64 {
        let slack = self.slack as f64;
        (self.minima[g] as f64 + slack) * frac - slack - self.routed[g] as f64
    }

    /// Most-behind eligible gateway with rate capacity, if any is behind.
    pub fn decide(
        &mut self,
        eligible: &[usize],
        mut has_capacity: impl FnMut(usize) -> bool,
        now_ms: u64,
    ) -> PaceDecision {
        self.roll(now_ms);
        let frac = now_ms.saturating_sub(self.period_start_ms) as f64 / self.horizon_ms as f64;
        let mut behind: Vec<(usize, f64)> = eligible
            .iter()
            .filter(|&&g| self.minima[g] > 0)
            .map(|&g| (g, self.lag(g, frac)))
            .filter(|(_, lag)| *lag > 0.0)
            .collect();
        behind.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let mut out = PaceDecision::default();
        for (g, _) in behind {
            if has_capacity(g) {
                out.forced = Some(g);
                break;
            }
            out.deficit = true;
        }
        out
    }

    pub fn record(&mut self, gateway: usize, now_ms: u64) {
        self.roll(now_ms);
        self.routed[gateway] += 1;
    }

    /// Routed counts in the current horizon.
    pub fn routed(&self) -> &[u64] {
        &self.routed
    }
}
