use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Mutex, MutexGuard, RwLock};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::pacing::{Pacer, PacingConfig};
use super::pending::{PendingEntry, PendingTable, RewardMatch, DEFAULT_CAPACITY, DEFAULT_TTL_MS};
use super::{snapshot, ExperimentConfig, RateLimitConfig, RateLimiter, ServiceError};
use crate::bandit::{GatewayId, PolicyKind, PolicyState, ProcessorId, RoutingTable};

const LATENCY_SAMPLES: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteRequest {
    pub txn_id: String,
    pub processor: ProcessorId,
    #[serde(default)]
    pub amount: f64,
    #[serde(default)]
    pub arm_override: Option<String>,
}

impl RouteRequest {
    pub fn new(txn_id: impl Into<String>, processor: impl Into<ProcessorId>) -> Self {
        Self {
            txn_id: txn_id.into(),
            processor: processor.into(),
            amount: 0.0,
            arm_override: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteDecision {
    pub txn_id: String,
    pub gateway: GatewayId,
    pub arm: String,
    pub policy: PolicyKind,
    pub timestamp_ms: u64,
    /// Chosen by pacing rather than by the arm's policy.
    pub paced: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewardEvent {
    pub txn_id: String,
    pub success: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewardAck {
    pub applied: bool,
    pub late: bool,
}

/// Everything a running router needs besides its learned state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouterConfig {
    pub routing: RoutingTable,
    pub experiment: ExperimentConfig,
    pub rate_limit: RateLimitConfig,
    pub pacing: PacingConfig,
    pub pending_ttl_ms: u64,
    pub pending_capacity: usize,
    /// Arm that uplift is measured against; defaults to the first rule-based arm.
    pub baseline_arm: Option<String>,
}

impl RouterConfig {
    pub fn new(routing: RoutingTable, experiment: ExperimentConfig) -> Self {
        Self {
            routing,
            experiment,
            rate_limit: RateLimitConfig::default(),
            pacing: PacingConfig::default(),
            pending_ttl_ms: DEFAULT_TTL_MS,
            pending_capacity: DEFAULT_CAPACITY,
            baseline_arm: None,
        }
    }

    pub fn validate(&self) -> Result<(), ServiceError> {
        self.experiment.validate()?;
        for arm in &self.experiment.arms {
            arm.policy
                .validate_for(&self.routing)
                .map_err(|e| ServiceError::InvalidConfig(format!("arm {}: {e}", arm.label)))?;
        }
        self.rate_limit.validate()?;
        self.pacing.validate()?;
        if let Some(b) = &self.baseline_arm {
            if self.experiment.index_of(b).is_none() {
                return Err(ServiceError::InvalidConfig(format!(
                    "baseline arm {b} is not an experiment arm"
                )));
            }
        }
        if self.pending_capacity == 0 {
            return Err(ServiceError::InvalidConfig(
                "pending capacity must be positive".into(),
            ));
        }
        Ok(())
    }

    fn baseline(&self) -> Option<usize> {
        match &self.baseline_arm {
            Some(b) => self.experiment.index_of(b),
            None => self
                .experiment
                .arms
                .iter()
                .position(|a| a.policy.kind == PolicyKind::RuleBased),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GatewayCounters {
    pub routed: u64,
    pub attempts: u64,
    pub successes: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArmCounters {
    pub routed: u64,
    /// Rewards applied to the policy.
    pub rewards: u64,
    pub successes: u64,
    pub gateways: Vec<GatewayCounters>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceCounters {
    /// Gateways dropped from an eligible set for lack of tokens.
    pub rate_limited: u64,
    pub all_gateways_limited: u64,
    pub pacing_overrides: u64,
    /// Routes where a behind-pace gateway was blocked by its rate limit.
    pub pacing_deficits: u64,
    pub late_rewards: u64,
    pub duplicate_routes: u64,
    pub duplicate_rewards: u64,
    pub unknown_rewards: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ArmSlot {
    label: String,
    policy: PolicyState,
    counters: ArmCounters,
}

/// Limiter, pacer and service counters move together under one lock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Gatekeeper {
    limiter: RateLimiter,
    pacer: Pacer,
    counters: ServiceCounters,
}

/// Full learned and counter state; the payload of a snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceState {
    arms: Vec<ArmSlot>,
    gatekeeper: Gatekeeper,
    pending: PendingTable,
}

struct LatencyRing {
    samples: Vec<u64>,
    next: usize,
}

impl LatencyRing {
    fn record(&mut self, nanos: u64) {
        if self.samples.len() < LATENCY_SAMPLES {
            self.samples.push(nanos);
        } else {
            self.samples[self.next] = nanos;
        }
        self.next = (self.next + 1) % LATENCY_SAMPLES;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub samples: usize,
    pub p50_us: Option<f64>,
    pub p99_us: Option<f64>,
    pub max_us: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatewayMetrics {
    pub gateway: GatewayId,
    pub routed: u64,
    pub attempts: u64,
    pub successes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmMetrics {
    pub label: String,
    pub policy: PolicyKind,
    pub weight: f64,
    pub routed: u64,
    pub rewards: u64,
    pub successes: u64,
    pub success_rate: Option<f64>,
    /// Success-rate difference vs the baseline arm, in percentage points.
    pub uplift_pp: Option<f64>,
    pub gateways: Vec<GatewayMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub timestamp_ms: u64,
    pub baseline_arm: Option<String>,
    pub arms: Vec<ArmMetrics>,
    #[serde(flatten)]
    pub counters: ServiceCounters,
    pub expired: u64,
    pub pending: usize,
    pub latency: LatencySummary,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

/// The decision engine. All methods take `&self` and an explicit clock.
///
/// Lock order: gate, arm, gatekeeper, pending. Route and reward hold the
/// gate shared; export and restore hold it exclusively so they see and
/// replace a consistent state.
pub struct Router {
    config: RouterConfig,
    eligible: BTreeMap<ProcessorId, Vec<usize>>,
    baseline: Option<usize>,
    gate: RwLock<()>,
    arms: Vec<Mutex<ArmSlot>>,
    gatekeeper: Mutex<Gatekeeper>,
    pending: Mutex<PendingTable>,
    latency: Mutex<LatencyRing>,
}

impl Router {
    pub fn new(config: RouterConfig, now_ms: u64) -> Result<Self, ServiceError> {
        config.validate()?;
        let state = Self::fresh_state(&config, now_ms)?;
        Ok(Self::from_parts(config, state))
    }

    fn fresh_state(config: &RouterConfig, now_ms: u64) -> Result<ServiceState, ServiceError> {
        let gateways = config.routing.gateways();
        let arms = config
            .experiment
            .arms
            .iter()
            .map(|a| {
                Ok(ArmSlot {
                    label: a.label.clone(),
                    policy: PolicyState::new(a.policy.clone(), gateways)?,
                    counters: ArmCounters {
                        gateways: vec![GatewayCounters::default(); gateways.len()],
                        ..Default::default()
                    },
                })
            })
            .collect::<Result<_, ServiceError>>()?;
        Ok(ServiceState {
            arms,
            gatekeeper: Gatekeeper {
                limiter: RateLimiter::new(&config.rate_limit, gateways, now_ms)?,
                pacer: Pacer::new(&config.pacing, gateways, now_ms)?,
                counters: ServiceCounters::default(),
            },
            pending: PendingTable::new(config.pending_ttl_ms, config.pending_capacity),
        })
    }

    fn from_parts(config: RouterConfig, state: ServiceState) -> Self {
        let gateways = config.routing.gateways();
        let eligible = config
            .routing
            .processors()
            .map(|(p, set)| {
                let idx = set
                    .iter()
                    .map(|g| {
                        gateways
                            .iter()
                            .position(|x| x == g)
                            .expect("table lists every gateway")
                    })
                    .collect();
                (p.clone(), idx)
            })
            .collect();
        Self {
            baseline: config.baseline(),
            eligible,
            gate: RwLock::new(()),
            arms: state.arms.into_iter().map(Mutex::new).collect(),
            gatekeeper: Mutex::new(state.gatekeeper),
            pending: Mutex::new(state.pending),
            latency: Mutex::new(LatencyRing {
                samples: Vec::new(),
                next: 0,
            }),
            config,
        }
    }

    pub fn config(&self) -> &RouterConfig {
        &self.config
    }

    pub fn assign_arm(&self, txn_id: &str) -> &str {
        self.config.experiment.assign_label(txn_id)
    }

    pub fn route(&self, req: &RouteRequest, now_ms: u64) -> Result<RouteDecision, ServiceError> {
        let started = Instant::now();
        let out = self.route_inner(req, now_ms);
        let nanos = started.elapsed().as_nanos().min(u64::MAX as u128) as u64;
        lock(&self.latency).record(nanos);
        out
    }

    fn route_inner(&self, req: &RouteRequest, now_ms: u64) -> Result<RouteDecision, ServiceError> {
        if req.txn_id.is_empty() {
            return Err(ServiceError::InvalidRequest(
                "txn_id must be non-empty".into(),
            ));
        }
        if !(req.amount.is_finite() && req.amount >= 0.0) {
            return Err(ServiceError::InvalidRequest(
                "amount must be a non-negative number".into(),
            ));
        }
        let eligible = self
            .eligible
            .get(&req.processor)
            .ok_or_else(|| ServiceError::UnknownProcessor(req.processor.clone()))?;
        let arm = match &req.arm_override {
            Some(label) => self
                .config
                .experiment
                .index_of(label)
                .ok_or_else(|| ServiceError::UnknownArm(label.clone()))?,
            None => self.config.experiment.assign(&req.txn_id),
        };

        let _gate = self.gate.read().unwrap_or_else(|p| p.into_inner());
        if lock(&self.pending).contains(&req.txn_id) {
            lock(&self.gatekeeper).counters.duplicate_routes += 1;
            return Err(ServiceError::DuplicateTxnId(req.txn_id.clone()));
        }
        let mut slot = lock(&self.arms[arm]);
        let mut blocked: Vec<usize> = Vec::new();
        let (gateway, paced) = loop {
            let (available, pace) = {
                let mut gk = lock(&self.gatekeeper);
                let available: Vec<usize> = eligible
                    .iter()
                    .copied()
                    .filter(|g| !blocked.contains(g) && gk.limiter.has_capacity(*g, now_ms))
                    .collect();
                gk.counters.rate_limited += (eligible.len() - available.len()) as u64;
                if available.is_empty() {
                    gk.counters.all_gateways_limited += 1;
                    return Err(ServiceError::AllGatewaysRateLimited);
                }
                let Gatekeeper { limiter, pacer, .. } = &mut *gk;
                let pace = pacer.decide(eligible, |g| limiter.has_capacity(g, now_ms), now_ms);
                (available, pace)
            };
            let (gateway, paced) = match pace.forced {
                Some(g) => (g, true),
                None => (slot.policy.select_index(&available)?, false),
            };
            let mut gk = lock(&self.gatekeeper);
            // another arm may have taken the last token since the filter ran
            if gk.limiter.acquire_index(gateway, now_ms) {
                gk.pacer.record(gateway, now_ms);
                gk.counters.pacing_overrides += u64::from(paced);
                gk.counters.pacing_deficits += u64::from(pace.deficit);
                break (gateway, paced);
            }
            blocked.push(gateway);
        };

        let entry = PendingEntry {
            txn_id: req.txn_id.clone(),
            arm,
            gateway,
            routed_ms: now_ms,
        };
        lock(&self.pending).insert(entry, now_ms)?;
        slot.counters.routed += 1;
        slot.counters.gateways[gateway].routed += 1;
        Ok(RouteDecision {
            txn_id: req.txn_id.clone(),
            gateway: self.config.routing.gateways()[gateway].clone(),
            arm: slot.label.clone(),
            policy: slot.policy.kind(),
            timestamp_ms: now_ms,
            paced,
        })
    }

    pub fn reward(&self, event: &RewardEvent, now_ms: u64) -> Result<RewardAck, ServiceError> {
        let _gate = self.gate.read().unwrap_or_else(|p| p.into_inner());
        let matched = lock(&self.pending).take(&event.txn_id, now_ms);
        let entry = match matched {
            Ok(RewardMatch::Apply(e)) => e,
            Ok(RewardMatch::Late) => {
                lock(&self.gatekeeper).counters.late_rewards += 1;
                return Ok(RewardAck {
                    applied: false,
                    late: true,
                });
            }
            Err(e) => {
                let mut gk = lock(&self.gatekeeper);
                match e {
                    ServiceError::DuplicateReward(_) => gk.counters.duplicate_rewards += 1,
                    ServiceError::UnknownTxn(_) => gk.counters.unknown_rewards += 1,
                    _ => {}
                }
                return Err(e);
            }
        };
        let mut slot = lock(&self.arms[entry.arm]);
        slot.policy.update_index(entry.gateway, event.success)?;
        let c = &mut slot.counters;
        c.rewards += 1;
        c.successes += u64::from(event.success);
        c.gateways[entry.gateway].attempts += 1;
        c.gateways[entry.gateway].successes += u64::from(event.success);
        Ok(RewardAck {
            applied: true,
            late: false,
        })
    }

    /// Consistent copy of every policy, counter and pending entry.
    pub fn export_state(&self) -> ServiceState {
        let _gate = self.gate.write().unwrap_or_else(|p| p.into_inner());
        ServiceState {
            arms: self.arms.iter().map(|a| lock(a).clone()).collect(),
            gatekeeper: lock(&self.gatekeeper).clone(),
            pending: lock(&self.pending).clone(),
        }
    }

    /// Replaces all state. On error nothing changes.
    pub fn restore_state(&self, state: ServiceState) -> Result<(), ServiceError> {
        self.check_compatible(&state)?;
        let _gate = self.gate.write().unwrap_or_else(|p| p.into_inner());
        for (slot, new) in self.arms.iter().zip(state.arms) {
            *lock(slot) = new;
        }
        *lock(&self.gatekeeper) = state.gatekeeper;
        *lock(&self.pending) = state.pending;
        Ok(())
    }

    fn check_compatible(&self, state: &ServiceState) -> Result<(), ServiceError> {
        let bad = |m: String| Err(ServiceError::IncompatibleSnapshot(m));
        let labels: Vec<&str> = state.arms.iter().map(|a| a.label.as_str()).collect();
        let want: Vec<&str> = self.config.experiment.labels().collect();
        if labels != want {
            return bad(format!("arms {labels:?}, configured {want:?}"));
        }
        let gateways = self.config.routing.gateways();
        for a in &state.arms {
            if a.policy.gateways() != gateways || a.counters.gateways.len() != gateways.len() {
                return bad(format!(
                    "arm {} was trained on a different gateway list",
                    a.label
                ));
            }
        }
        Ok(())
    }

    pub fn snapshot_to(&self, path: &Path, now_ms: u64) -> Result<(), ServiceError> {
        snapshot::write_snapshot(path, &self.export_state(), now_ms)
    }

    pub fn restore_from(&self, path: &Path) -> Result<u64, ServiceError> {
        let (state, ts) = snapshot::read_snapshot(path)?;
        self.restore_state(state)?;
        Ok(ts)
    }

    /// Copy of one arm's policy state.
    pub fn policy(&self, label: &str) -> Option<PolicyState> {
        let i = self.config.experiment.index_of(label)?;
        Some(lock(&self.arms[i]).policy.clone())
    }

    pub fn pending_len(&self) -> usize {
        lock(&self.pending).len()
    }

    pub fn latency(&self) -> LatencySummary {
        let mut samples = lock(&self.latency).samples.clone();
        samples.sort_unstable();
        let pick = |q: f64| -> Option<f64> {
            if samples.is_empty() {
                return None;
            }
            let rank = ((q * samples.len() as f64).ceil() as usize).clamp(1, samples.len());
            Some(samples[rank - 1] as f64 / 1000.0)
        };
        LatencySummary {
            samples: samples.len(),
            p50_us: pick(0.50),
            p99_us: pick(0.99),
            max_us: samples.last().map(|n| *n as f64 / 1000.0),
        }
    }

    pub fn metrics(&self, now_ms: u64) -> Metrics {
        let state = self.export_state();
        let rate = |c: &ArmCounters| (c.rewards > 0).then(|| c.successes as f64 / c.rewards as f64);
        let base_rate = self.baseline.and_then(|b| rate(&state.arms[b].counters));
        let gateways = self.config.routing.gateways();
        let arms = state
            .arms
            .iter()
            .zip(&self.config.experiment.arms)
            .enumerate()
            .map(|(i, (slot, cfg))| {
                let c = &slot.counters;
                let success_rate = rate(c);
                ArmMetrics {
                    label: slot.label.clone(),
                    policy: slot.policy.kind(),
                    weight: cfg.weight,
                    routed: c.routed,
                    rewards: c.rewards,
                    successes: c.successes,
                    success_rate,
                    uplift_pp: success_rate
                        .zip(base_rate)
                        .filter(|_| Some(i) != self.baseline)
                        .map(|(a, b)| (a - b) * 100.0),
                    gateways: gateways
                        .iter()
                        .zip(&c.gateways)
                        .map(|(g, gc)| GatewayMetrics {
                            gateway: g.clone(),
                            routed: gc.routed,
                            attempts: gc.attempts,
                            successes: gc.successes,
                        })
                        .collect(),
                }
            })
            .collect();
        Metrics {
            timestamp_ms: now_ms,
            baseline_arm: self
                .baseline
                .map(|b| self.config.experiment.arms[b].label.clone()),
            arms,
            counters: state.gatekeeper.counters,
            expired: state.pending.expired(),
            pending: state.pending.len(),
            latency: self.latency(),
        }
    }
}
