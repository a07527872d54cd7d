use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Environment, SimError};
use crate::bandit::{GatewayId, PolicyConfig, PolicyState};

/// Anything that can route inside a replay.
pub trait Selector {
    fn select(
        &mut self,
        env: &dyn Environment,
        step: usize,
        eligible: &[usize],
    ) -> Result<usize, SimError>;

    fn observe(&mut self, gateway: usize, success: bool) -> Result<(), SimError>;
}

impl Selector for PolicyState {
    fn select(
        &mut self,
        _env: &dyn Environment,
        _step: usize,
        eligible: &[usize],
    ) -> Result<usize, SimError> {
        Ok(self.select_index(eligible)?)
    }

    fn observe(&mut self, gateway: usize, success: bool) -> Result<(), SimError> {
        Ok(self.update_index(gateway, success)?)
    }
}

/// Always routes to the true best eligible gateway (lowest index on ties).
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleSelector;

impl Selector for OracleSelector {
    fn select(
        &mut self,
        env: &dyn Environment,
        step: usize,
        eligible: &[usize],
    ) -> Result<usize, SimError> {
        let mut best = eligible[0];
        let mut best_p = f64::NEG_INFINITY;
        for &g in eligible {
            let p = env.success_prob(step, g).unwrap_or(f64::NEG_INFINITY);
            if p > best_p {
                best = g;
                best_p = p;
            }
        }
        Ok(best)
    }

    fn observe(&mut self, _gateway: usize, _success: bool) -> Result<(), SimError> {
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretCurve {
    pub policy: String,
    pub config: Option<PolicyConfig>,
    pub seed: u64,
    /// Cumulative regret after each step.
    pub cumulative: Vec<f64>,
    /// Chosen gateway index per step, into `gateways`.
    pub decisions: Vec<usize>,
    pub gateways: Vec<GatewayId>,
}

impl RegretCurve {
    pub fn steps(&self) -> usize {
        self.cumulative.len()
    }

    pub fn final_regret(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }

    pub fn decision(&self, step: usize) -> &GatewayId {
        &self.gateways[self.decisions[step]]
    }
}

/// Replays `config` against `env`.
///
/// `seed` drives both the policy's own randomness (it replaces the seed in
/// `config`) and, on a separate stream, the Bernoulli reward draws.
pub fn replay(
    env: &dyn Environment,
    config: &PolicyConfig,
    seed: u64,
) -> Result<RegretCurve, SimError> {
    let config = config.clone().with_seed(seed);
    let mut policy = PolicyState::new(config.clone(), env.gateways())?;
    let mut curve = replay_selector(env, &mut policy, seed, config.label())?;
    curve.config = Some(config);
    Ok(curve)
}

pub fn replay_selector(
    env: &dyn Environment,
    selector: &mut dyn Selector,
    seed: u64,
    label: String,
) -> Result<RegretCurve, SimError> {
    let mut rewards = ChaCha8Rng::seed_from_u64(seed);
    rewards.set_stream(1);

    let steps = env.steps();
    let mut cumulative = Vec::with_capacity(steps);
    let mut decisions = Vec::with_capacity(steps);
    let mut total = 0.0;
    let mut probs = Vec::new();
    for t in 0..steps {
        let eligible = env.eligible(t);
        let undefined = |g: usize| SimError::UndefinedGroundTruth {
            gateway: env.gateways()[g].clone(),
            step: t,
        };
        if eligible.is_empty() {
            return Err(SimError::UndefinedGroundTruth {
                gateway: GatewayId::from("<none eligible>"),
                step: t,
            });
        }
        probs.clear();
        for &g in eligible {
            probs.push(env.success_prob(t, g).ok_or_else(|| undefined(g))?);
        }
        let best = probs.iter().copied().fold(f64::NEG_INFINITY, f64::max);

        let g = selector.select(env, t, eligible)?;
        let p = match eligible.iter().position(|&x| x == g) {
            Some(i) => probs[i],
            None => return Err(undefined(g)),
        };
        let success = rewards.random::<f64>() < p;
        selector.observe(g, success)?;

        total += best - p;
        cumulative.push(total);
        decisions.push(g);
    }
    Ok(RegretCurve {
        policy: label,
        config: None,
        seed,
        cumulative,
        decisions,
        gateways: env.gateways().to_vec(),
    })
}
