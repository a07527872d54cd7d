use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ServiceError;
use crate::bandit::GatewayId;

const MILLI: u64 = 1000;

/// Per-gateway TPS caps. Gateways without a cap are never limited.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RateLimitConfig {
    pub caps: BTreeMap<GatewayId, u64>,
    /// Refill step; must divide one second.
    pub granularity_ms: u64,
}

impl Default for RateLimitConfig {
    fn default() -> Self {
        Self {
            caps: BTreeMap::new(),
            granularity_ms: 100,
        }
    }
}

impl RateLimitConfig {
    pub fn validate(&self) -> Result<(), ServiceError> {
        if self.granularity_ms == 0 || !MILLI.is_multiple_of(self.granularity_ms) {
            return Err(ServiceError::InvalidConfig(format!(
                "rate-limit granularity {} ms must divide 1000 ms",
                self.granularity_ms
            )));
        }
        if let Some((g, _)) = self.caps.iter().find(|(_, c)| **c == 0) {
            return Err(ServiceError::InvalidConfig(format!(
                "rate cap for {g} must be >= 1"
            )));
        }
        Ok(())
    }
}

/// Token bucket counted in milli-tokens.
///
/// One granule adds `cap * granularity_ms` milli-tokens, i.e. `cap` tokens
/// per second. Capacity is one granule (at least one whole token), so any
/// 1-second window grants at most `cap` plus one granule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenBucket {
    cap: u64,
    granularity_ms: u64,
    tokens: u64,
    granule: u64,
}

impl TokenBucket {
    pub fn new(cap: u64, granularity_ms: u64, now_ms: u64) -> Self {
        let mut b = Self {
            cap,
            granularity_ms,
            tokens: 0,
            granule: now_ms / granularity_ms,
        };
        b.tokens = b.capacity();
        b
    }

    fn capacity(&self) -> u64 {
        (self.cap * self.granularity_ms).max(MILLI)
    }

    fn refill(&mut self, now_ms: u64) {
        let granule = now_ms / self.granularity_ms;
        // a clock that steps backwards refills nothing
        if granule > self.granule {
            let add = (granule - self.granule).saturating_mul(self.cap * self.granularity_ms);
            self.tokens = self.tokens.saturating_add(add).min(self.capacity());
            self.granule = granule;
        }
    }

    pub fn available(&mut self, now_ms: u64) -> bool {
        self.refill(now_ms);
        self.tokens >= MILLI
    }

    pub fn try_acquire(&mut self, now_ms: u64) -> bool {
        if self.available(now_ms) {
            self.tokens -= MILLI;
            true
        } else {
            false
        }
    }
}

/// Buckets indexed like the routing table's gateway list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateLimiter {
    gateways: Vec<GatewayId>,
    buckets: Vec<Option<TokenBucket>>,
}

impl RateLimiter {
    pub fn new(
        config: &RateLimitConfig,
        gateways: &[GatewayId],
        now_ms: u64,
    ) -> Result<Self, ServiceError> {
        config.validate()?;
        if let Some(g) = config.caps.keys().find(|g| !gateways.contains(g)) {
            return Err(ServiceError::InvalidConfig(format!(
                "rate cap for unknown gateway {g}"
            )));
        }
        let buckets = gateways
            .iter()
            .map(|g| {
                config
                    .caps
                    .get(g)
                    .map(|c| TokenBucket::new(*c, config.granularity_ms, now_ms))
            })
            .collect();
        Ok(Self {
            gateways: gateways.to_vec(),
            buckets,
        })
    }

    pub fn has_capacity(&mut self, gateway: usize, now_ms: u64) -> bool {
        match &mut self.buckets[gateway] {
            Some(b) => b.available(now_ms),
            None => true,
        }
    }

    pub fn acquire_index(&mut self, gateway: usize, now_ms: u64) -> bool {
        match &mut self.buckets[gateway] {
            Some(b) => b.try_acquire(now_ms),
            None => true,
        }
    }

    pub fn try_acquire(&mut self, gateway: &GatewayId, now_ms: u64) -> Result<bool, ServiceError> {
        let i = self
            .gateways
            .iter()
            .position(|g| g == gateway)
            .ok_or_else(|| ServiceError::UnknownGateway(gateway.clone()))?;
        Ok(self.acquire_index(i, now_ms))
    }
}
