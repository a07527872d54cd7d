use serde::{Deserialize, Serialize};

use super::{estimate_ground_truth, GroundTruthCurve, SimError, Trace};
use crate::bandit::{GatewayId, ProcessorId};

/// What a replay needs to know about the world at each step.
pub trait Environment: Sync {
    fn gateways(&self) -> &[GatewayId];

    fn steps(&self) -> usize;

    /// Eligible gateway indices for the transaction at `step`.
    fn eligible(&self, step: usize) -> &[usize];

    /// True success probability of gateway index `g` at `step`.
    fn success_prob(&self, step: usize, g: usize) -> Option<f64>;
}

/// A recorded trace paired with its reconstructed ground truth.
#[derive(Debug, Clone)]
pub struct TraceEnv {
    truth: GroundTruthCurve,
    eligible: Vec<Vec<usize>>,
    step_set: Vec<usize>,
}

impl TraceEnv {
    pub fn new(trace: &Trace, half_window: usize) -> Self {
        Self::with_truth(trace, estimate_ground_truth(trace, half_window))
    }

    pub fn with_truth(trace: &Trace, truth: GroundTruthCurve) -> Self {
        let table = trace.routing_table();
        let processors: Vec<&ProcessorId> = table.processors().map(|(p, _)| p).collect();
        let eligible = table
            .processors()
            .map(|(_, set)| {
                set.iter()
                    .filter_map(|g| truth.gateways().iter().position(|x| x == g))
                    .filter(|&i| truth.is_defined(i))
                    .collect()
            })
            .collect();
        let step_set = (0..trace.len())
            .map(|t| {
                let p = trace.processor_at(t);
                processors
                    .iter()
                    .position(|x| *x == p)
                    .expect("processor in table")
            })
            .collect();
        Self {
            truth,
            eligible,
            step_set,
        }
    }

    pub fn truth(&self) -> &GroundTruthCurve {
        &self.truth
    }
}

impl Environment for TraceEnv {
    fn gateways(&self) -> &[GatewayId] {
        self.truth.gateways()
    }

    fn steps(&self) -> usize {
        self.step_set.len()
    }

    fn eligible(&self, step: usize) -> &[usize] {
        &self.eligible[self.step_set[step]]
    }

    fn success_prob(&self, step: usize, g: usize) -> Option<f64> {
        self.truth.value(g, step)
    }
}

/// Linear move from `from` to `to` over `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftSegment {
    pub start: usize,
    pub end: usize,
    pub from: f64,
    pub to: f64,
}

/// Success-rate schedule of one gateway: piecewise constant breakpoints,
/// overridden inside any drift segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatewaySchedule {
    pub gateway: GatewayId,
    pub breakpoints: Vec<(usize, f64)>,
    #[serde(default)]
    pub drifts: Vec<DriftSegment>,
}

impl GatewaySchedule {
    pub fn constant(gateway: impl Into<GatewayId>, p: f64) -> Self {
        Self {
            gateway: gateway.into(),
            breakpoints: vec![(0, p)],
            drifts: Vec::new(),
        }
    }

    pub fn piecewise(gateway: impl Into<GatewayId>, breakpoints: Vec<(usize, f64)>) -> Self {
        Self {
            gateway: gateway.into(),
            breakpoints,
            drifts: Vec::new(),
        }
    }

    fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| {
            Err(SimError::InvalidBreakpoints(format!(
                "{}: {m}",
                self.gateway
            )))
        };
        match self.breakpoints.first() {
            None => return bad("no breakpoints".into()),
            Some((s, _)) if *s != 0 => return bad("first breakpoint must start at step 0".into()),
            _ => {}
        }
        if self.breakpoints.windows(2).any(|w| w[0].0 >= w[1].0) {
            return bad("breakpoints must be strictly increasing".into());
        }
        let in_range = |p: f64| (0.0..=1.0).contains(&p);
        if let Some((_, p)) = self.breakpoints.iter().find(|(_, p)| !in_range(*p)) {
            return bad(format!("probability {p} outside [0, 1]"));
        }
        let mut drifts = self.drifts.clone();
        drifts.sort_by_key(|d| d.start);
        for d in &drifts {
            if d.start >= d.end {
                return bad(format!("drift {}..{} is empty", d.start, d.end));
            }
            if !in_range(d.from) || !in_range(d.to) {
                return bad("drift probability outside [0, 1]".into());
            }
        }
        if drifts.windows(2).any(|w| w[0].end >= w[1].start) {
            return bad("drift segments overlap".into());
        }
        Ok(())
    }

    pub fn value_at(&self, step: usize) -> f64 {
        if let Some(d) = self
            .drifts
            .iter()
            .find(|d| (d.start..=d.end).contains(&step))
        {
            let frac = (step - d.start) as f64 / (d.end - d.start) as f64;
            return d.from + (d.to - d.from) * frac;
        }
        let i = self.breakpoints.partition_point(|(s, _)| *s <= step);
        self.breakpoints[i.saturating_sub(1)].1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticEnv {
    pub schedules: Vec<GatewaySchedule>,
}

impl SyntheticEnv {
    pub fn new(schedules: Vec<GatewaySchedule>) -> Self {
        Self { schedules }
    }

    pub fn stationary(rates: &[(&str, f64)]) -> Self {
        Self::new(
            rates
                .iter()
                .map(|(g, p)| GatewaySchedule::constant(*g, *p))
                .collect(),
        )
    }

    /// Two gateways at `high`/`low` that swap places at `at`.
    pub fn abrupt_swap(at: usize, high: f64, low: f64) -> Self {
        Self::new(vec![
            GatewaySchedule::piecewise("g1", vec![(0, high), (at, low)]),
            GatewaySchedule::piecewise("g2", vec![(0, low), (at, high)]),
        ])
    }

    pub fn build(
        &self,
        steps: usize,
        layout: &ProcessorLayout,
    ) -> Result<SyntheticEnvironment, SimError> {
        make_synthetic_env(self, steps, layout)
    }
}

/// Processors cycled round-robin over the steps; empty means one
/// processor eligible for every gateway.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProcessorLayout {
    #[serde(default)]
    pub processors: Vec<(ProcessorId, Vec<GatewayId>)>,
}

#[derive(Debug, Clone)]
pub struct SyntheticEnvironment {
    gateways: Vec<GatewayId>,
    probs: Vec<Vec<f64>>,
    eligible: Vec<Vec<usize>>,
    steps: usize,
}

impl SyntheticEnvironment {
    pub fn processor_count(&self) -> usize {
        self.eligible.len()
    }
}

pub(crate) fn make_synthetic_env(
    synth: &SyntheticEnv,
    steps: usize,
    layout: &ProcessorLayout,
) -> Result<SyntheticEnvironment, SimError> {
    if synth.schedules.is_empty() {
        return Err(SimError::InvalidBreakpoints("no gateways".into()));
    }
    let mut gateways: Vec<GatewayId> = Vec::new();
    for s in &synth.schedules {
        s.validate()?;
        if gateways.contains(&s.gateway) {
            return Err(SimError::InvalidBreakpoints(format!(
                "gateway {} scheduled twice",
                s.gateway
            )));
        }
        gateways.push(s.gateway.clone());
    }
    let probs = synth
        .schedules
        .iter()
        .map(|s| (0..steps).map(|t| s.value_at(t)).collect())
        .collect();
    let eligible = if layout.processors.is_empty() {
        vec![(0..gateways.len()).collect()]
    } else {
        layout
            .processors
            .iter()
            .map(|(p, set)| {
                if set.is_empty() {
                    return Err(SimError::InvalidBreakpoints(format!(
                        "processor {p} has no gateways"
                    )));
                }
                set.iter()
                    .map(|g| {
                        gateways.iter().position(|x| x == g).ok_or_else(|| {
                            SimError::InvalidBreakpoints(format!("gateway {g} has no schedule"))
                        })
                    })
                    .collect()
            })
            .collect::<Result<_, _>>()?
    };
    Ok(SyntheticEnvironment {
        gateways,
        probs,
        eligible,
        steps,
    })
}

impl Environment for SyntheticEnvironment {
    fn gateways(&self) -> &[GatewayId] {
        &self.gateways
    }

    fn steps(&self) -> usize {
        self.steps
    }

    fn eligible(&self, step: usize) -> &[usize] {
        &self.eligible[step % self.eligible.len()]
    }

    fn success_prob(&self, step: usize, g: usize) -> Option<f64> {
        self.probs.get(g)?.get(step).copied()
    }
}
