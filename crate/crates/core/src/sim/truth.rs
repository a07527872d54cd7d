//! Centered-window reconstruction of each gateway's success probability.
//!
//! For gateway `g` at step `t` the estimate is the empirical success rate
//! over the nearest `half_window` transactions *of g* strictly before `t`
//! and the nearest `half_window` of g at or after `t`. Near the trace edges
//! the window is truncated. A gateway with no transactions has no curve.

use super::Trace;
use crate::bandit::GatewayId;

pub const DEFAULT_HALF_WINDOW: usize = 25;

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthCurve {
    gateways: Vec<GatewayId>,
    values: Vec<Option<Vec<f64>>>,
    half_window: usize,
    steps: usize,
}

impl GroundTruthCurve {
    pub fn gateways(&self) -> &[GatewayId] {
        &self.gateways
    }

    pub fn half_window(&self) -> usize {
        self.half_window
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Probability for gateway index `g` at `step`.
    pub fn value(&self, g: usize, step: usize) -> Option<f64> {
        self.values.get(g)?.as_ref()?.get(step).copied()
    }

    pub fn get(&self, gateway: &GatewayId, step: usize) -> Option<f64> {
        let g = self.gateways.iter().position(|x| x == gateway)?;
        self.value(g, step)
    }

    pub fn is_defined(&self, g: usize) -> bool {
        self.values.get(g).is_some_and(Option::is_some)
    }
}

pub fn estimate_ground_truth(trace: &Trace, half_window: usize) -> GroundTruthCurve {
    assert!(half_window > 0, "half_window must be positive");
    let gateways = trace.routing_table().gateways().to_vec();
    let steps = trace.len();

    // positions and success prefix sums per gateway
    let mut positions: Vec<Vec<usize>> = vec![Vec::new(); gateways.len()];
    let mut prefix: Vec<Vec<u32>> = vec![vec![0]; gateways.len()];
    for (t, r) in trace.records().iter().enumerate() {
        let g = gateways
            .iter()
            .position(|x| *x == r.terminal)
            .expect("trace table covers every terminal");
        positions[g].push(t);
        let last = *prefix[g].last().expect("seeded with 0");
        prefix[g].push(last + u32::from(r.success));
    }

    let values = positions
        .iter()
        .zip(&prefix)
        .map(|(pos, pre)| {
            if pos.is_empty() {
                return None;
            }
            let mut curve = Vec::with_capacity(steps);
            let mut before = 0usize; // count of g-positions < t
            for t in 0..steps {
                while before < pos.len() && pos[before] < t {
                    before += 1;
                }
                let lo = before.saturating_sub(half_window);
                let hi = (before + half_window).min(pos.len());
                let successes = pre[hi] - pre[lo];
                curve.push(f64::from(successes) / (hi - lo) as f64);
            }
            Some(curve)
        })
        .collect();

    GroundTruthCurve {
        gateways,
        values,
        half_window,
        steps,
    }
}
