use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use super::stats::decay_all;
use super::{
    BanditError, BetaParams, DiscountedStats, GatewayId, PolicyConfig, PolicyKind,
    SlidingWindowStats,
};

/// Maps a uniform draw to a standard Gumbel sample.
pub fn gumbel_from_uniform(u: f64) -> f64 {
    -(-u.ln()).ln()
}

/// Draws Gumbel(0, 1) from `rng`, using a uniform on the open interval.
pub fn gumbel_sample<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u: f64 = rng.sample(Open01);
    gumbel_from_uniform(u)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ArmStats {
    Sliding(Vec<SlidingWindowStats>),
    Discounted(Vec<DiscountedStats>),
    Beta(Vec<BetaParams>),
    Priority(Vec<usize>),
}

/// Read-only view of one gateway inside a policy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArmSummary {
    pub gateway: GatewayId,
    pub plays: u64,
    /// Current success-rate estimate (posterior mean for Thompson).
    pub estimate: Option<f64>,
    /// `N`, `N̂`, or `λ+γ` depending on the kind.
    pub weight: f64,
}

/// Learning state for one policy instance over a fixed gateway list.
///
/// Single writer: `select` and `update` take `&mut self`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyState {
    config: PolicyConfig,
    gateways: Vec<GatewayId>,
    arms: ArmStats,
    plays: Vec<u64>,
    steps: u64,
    rng: ChaCha8Rng,
}

impl PolicyState {
    pub fn new(config: PolicyConfig, gateways: &[GatewayId]) -> Result<Self, BanditError> {
        config.validate()?;
        if gateways.is_empty() {
            return Err(BanditError::EmptyEligibleSet);
        }
        let n = gateways.len();
        let arms = match config.kind {
            PolicyKind::EpsilonGreedy | PolicyKind::SwUcb | PolicyKind::SwBg => {
                ArmStats::Sliding(vec![SlidingWindowStats::new(); n])
            }
            PolicyKind::DUcb | PolicyKind::DBg => {
                ArmStats::Discounted(vec![DiscountedStats::default(); n])
            }
            PolicyKind::DiscountedThompson => {
                let (l, g) = config.priors();
                ArmStats::Beta(vec![BetaParams::new(l, g); n])
            }
            PolicyKind::RuleBased => {
                let order = config.priority.as_deref().unwrap_or(gateways);
                let mut rank = vec![usize::MAX; n];
                for (r, g) in order.iter().enumerate() {
                    let i = gateways
                        .iter()
                        .position(|x| x == g)
                        .ok_or_else(|| BanditError::UnknownGateway(g.clone()))?;
                    rank[i] = rank[i].min(r);
                }
                // unlisted gateways follow in table order
                let listed = order.len();
                for (i, r) in rank.iter_mut().enumerate() {
                    if *r == usize::MAX {
                        *r = listed + i;
                    }
                }
                ArmStats::Priority(rank)
            }
        };
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            config,
            gateways: gateways.to_vec(),
            arms,
            plays: vec![0; n],
            steps: 0,
        })
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.config
    }

    pub fn kind(&self) -> PolicyKind {
        self.config.kind
    }

    pub fn gateways(&self) -> &[GatewayId] {
        &self.gateways
    }

    /// Number of updates applied so far.
    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn index_of(&self, gateway: &GatewayId) -> Option<usize> {
        self.gateways.iter().position(|g| g == gateway)
    }

    pub fn sliding_stats(&self) -> Option<&[SlidingWindowStats]> {
        match &self.arms {
            ArmStats::Sliding(s) => Some(s),
            _ => None,
        }
    }

    pub fn discounted_stats(&self) -> Option<&[DiscountedStats]> {
        match &self.arms {
            ArmStats::Discounted(s) => Some(s),
            _ => None,
        }
    }

    pub fn beta_params(&self) -> Option<&[BetaParams]> {
        match &self.arms {
            ArmStats::Beta(s) => Some(s),
            _ => None,
        }
    }

    pub fn summaries(&self) -> Vec<ArmSummary> {
        (0..self.gateways.len())
            .map(|i| {
                let (estimate, weight) = match &self.arms {
                    ArmStats::Sliding(s) => {
                        let (y, n) = s[i].estimate();
                        (y, n as f64)
                    }
                    ArmStats::Discounted(s) => s[i].estimate(),
                    ArmStats::Beta(b) => (Some(b[i].mean()), b[i].lambda + b[i].gamma),
                    ArmStats::Priority(_) => (None, 0.0),
                };
                ArmSummary {
                    gateway: self.gateways[i].clone(),
                    plays: self.plays[i],
                    estimate,
                    weight,
                }
            })
            .collect()
    }

    /// Picks a gateway from `eligible`.
    pub fn select(&mut self, eligible: &[GatewayId]) -> Result<GatewayId, BanditError> {
        let idx = eligible
            .iter()
            .map(|g| {
                self.index_of(g)
                    .ok_or_else(|| BanditError::UnknownGateway(g.clone()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let i = self.select_index(&idx)?;
        Ok(self.gateways[i].clone())
    }

    /// Like [`select`](Self::select) over gateway indices.
    pub fn select_index(&mut self, eligible: &[usize]) -> Result<usize, BanditError> {
        match eligible {
            [] => return Err(BanditError::EmptyEligibleSet),
            [only] => return self.checked(*only),
            _ => {}
        }
        for &i in eligible {
            self.checked(i)?;
        }
        if let ArmStats::Priority(rank) = &self.arms {
            return Ok(*eligible
                .iter()
                .min_by_key(|&&i| rank[i])
                .expect("non-empty"));
        }

        let unplayed: Vec<usize> = eligible
            .iter()
            .copied()
            .filter(|&i| !self.observed(i))
            .collect();
        if !unplayed.is_empty() {
            return Ok(self.pick_uniform(&unplayed));
        }

        let c1 = self.config.exploration();
        let scores: Vec<f64> = match &self.arms {
            ArmStats::Sliding(stats) => {
                let kind = self.config.kind;
                let mut out = Vec::with_capacity(eligible.len());
                for &i in eligible {
                    let (y, n) = stats[i].estimate();
                    let y = y.expect("observed arm has an estimate");
                    let bonus = c1 * (1.0 / n as f64).sqrt();
                    out.push(match kind {
                        PolicyKind::SwUcb => y + bonus,
                        PolicyKind::SwBg => y + bonus * gumbel_sample(&mut self.rng),
                        _ => y,
                    });
                }
                out
            }
            ArmStats::Discounted(stats) => {
                let bg = self.config.kind == PolicyKind::DBg;
                let mut out = Vec::with_capacity(eligible.len());
                for &i in eligible {
                    let (y, n) = stats[i].estimate();
                    let y = y.expect("observed arm has an estimate");
                    let bonus = c1 * (1.0 / n).sqrt();
                    out.push(if bg {
                        y + bonus * gumbel_sample(&mut self.rng)
                    } else {
                        y + bonus
                    });
                }
                out
            }
            ArmStats::Beta(params) => {
                let mut out = Vec::with_capacity(eligible.len());
                for &i in eligible {
                    out.push(sample_beta(&params[i], &mut self.rng));
                }
                out
            }
            ArmStats::Priority(_) => unreachable!(),
        };

        let best = self.argmax(eligible, &scores);
        if self.config.kind != PolicyKind::EpsilonGreedy {
            return Ok(best);
        }

        // argmax keeps 1-(k-1)ε, every other eligible arm gets ε
        let eps = self.config.epsilon.unwrap_or(0.0);
        let others: Vec<usize> = eligible.iter().copied().filter(|&i| i != best).collect();
        let u: f64 = self.rng.random();
        if eps > 0.0 && u < eps * others.len() as f64 {
            let k = ((u / eps) as usize).min(others.len() - 1);
            Ok(others[k])
        } else {
            Ok(best)
        }
    }

    /// Applies one observed reward for `gateway`.
    pub fn update(&mut self, gateway: &GatewayId, success: bool) -> Result<(), BanditError> {
        let i = self
            .index_of(gateway)
            .ok_or_else(|| BanditError::UnknownGateway(gateway.clone()))?;
        self.update_index(i, success)
    }

    pub fn update_index(&mut self, gateway: usize, success: bool) -> Result<(), BanditError> {
        self.checked(gateway)?;
        match &mut self.arms {
            ArmStats::Sliding(stats) => stats[gateway].update(success, self.config.window_len()),
            ArmStats::Discounted(stats) => {
                // the step transition decays every gateway, played or not
                stats[gateway].update(success);
                decay_all(stats, self.config.discount_factor());
            }
            ArmStats::Beta(params) => {
                params[gateway].update(true, success, self.config.discount_factor())
            }
            ArmStats::Priority(_) => {}
        }
        self.plays[gateway] += 1;
        self.steps += 1;
        Ok(())
    }

    fn checked(&self, i: usize) -> Result<usize, BanditError> {
        if i < self.gateways.len() {
            Ok(i)
        } else {
            Err(BanditError::UnknownGateway(GatewayId::new(format!("#{i}"))))
        }
    }

    fn observed(&self, i: usize) -> bool {
        match &self.arms {
            ArmStats::Sliding(s) => !s[i].is_empty(),
            ArmStats::Discounted(s) => s[i].weighted_count > 0.0,
            ArmStats::Beta(_) | ArmStats::Priority(_) => self.plays[i] > 0,
        }
    }

    fn pick_uniform(&mut self, candidates: &[usize]) -> usize {
        if candidates.len() == 1 {
            candidates[0]
        } else {
            candidates[self.rng.random_range(0..candidates.len())]
        }
    }

    fn argmax(&mut self, eligible: &[usize], scores: &[f64]) -> usize {
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let ties: Vec<usize> = eligible
            .iter()
            .zip(scores)
            .filter(|(_, &s)| s == max || (s.is_nan() && max.is_nan()))
            .map(|(&i, _)| i)
            .collect();
        if ties.is_empty() {
            // every score NaN
            return self.pick_uniform(eligible);
        }
        self.pick_uniform(&ties)
    }
}

fn sample_beta<R: Rng>(params: &BetaParams, rng: &mut R) -> f64 {
    match Beta::new(params.lambda, params.gamma) {
        Ok(dist) => {
            let theta = dist.sample(rng);
            if theta.is_finite() {
                theta
            } else {
                params.mean()
            }
        }
        Err(_) => params.mean(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gws(n: usize) -> Vec<GatewayId> {
        (1..=n).map(|i| GatewayId::new(format!("g{i}"))).collect()
    }

    fn feed(state: &mut PolicyState, gateway: usize, outcomes: &[bool]) {
        for &o in outcomes {
            state.update_index(gateway, o).unwrap();
        }
    }

    #[test]
    fn gumbel_fixed_point() {
        assert!(gumbel_from_uniform((-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn gumbel_is_deterministic() {
        let mut a = ChaCha8Rng::seed_from_u64(11);
        let mut b = ChaCha8Rng::seed_from_u64(11);
        let xs: Vec<f64> = (0..100).map(|_| gumbel_sample(&mut a)).collect();
        let ys: Vec<f64> = (0..100).map(|_| gumbel_sample(&mut b)).collect();
        assert_eq!(xs, ys);
    }

    #[test]
    fn gumbel_mean_is_euler_mascheroni() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 1_000_000;
        let mean = (0..n).map(|_| gumbel_sample(&mut rng)).sum::<f64>() / n as f64;
        assert!((mean - 0.577_215_664_9).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn sw_ucb_prefers_exploration_bonus() {
        let mut s = PolicyState::new(PolicyConfig::sw_ucb(1000, 1.0), &gws(2)).unwrap();
        feed(&mut s, 0, &[true, false, true, false]);
        let g2: Vec<bool> = (0..100).map(|i| i % 10 != 0).collect();
        feed(&mut s, 1, &g2);
        // 90/100 + sqrt(1/100) ties 0.5 + sqrt(1/4) exactly; one more failure
        // leaves g2 at 90/101 + sqrt(1/101) < 1.0
        feed(&mut s, 1, &[false]);
        assert_eq!(s.select(&gws(2)).unwrap(), GatewayId::from("g1"));
    }

    #[test]
    fn singleton_set_returns_member() {
        for cfg in all_configs() {
            let mut s = PolicyState::new(cfg, &gws(8)).unwrap();
            assert_eq!(
                s.select(&[GatewayId::from("g7")]).unwrap(),
                GatewayId::from("g7")
            );
        }
    }

    #[test]
    fn empty_set_is_an_error() {
        let mut s = PolicyState::new(PolicyConfig::sw_ucb(10, 1.0), &gws(2)).unwrap();
        assert_eq!(s.select(&[]), Err(BanditError::EmptyEligibleSet));
        assert!(matches!(
            s.update(&"zz".into(), true),
            Err(BanditError::UnknownGateway(_))
        ));
        assert!(matches!(
            s.select(&["zz".into()]),
            Err(BanditError::UnknownGateway(_))
        ));
    }

    #[test]
    fn cold_start_explores_unplayed_first() {
        let mut s = PolicyState::new(PolicyConfig::sw_ucb(10, 0.0), &gws(3)).unwrap();
        feed(&mut s, 0, &[true; 5]);
        for _ in 0..20 {
            let pick = s.select_index(&[0, 1, 2]).unwrap();
            assert_ne!(pick, 0);
        }
    }

    #[test]
    fn epsilon_greedy_total_law() {
        let mut s =
            PolicyState::new(PolicyConfig::epsilon_greedy(100, 0.2).with_seed(3), &gws(3)).unwrap();
        feed(&mut s, 0, &[true, true, false]);
        feed(&mut s, 1, &[true, false, false]);
        feed(&mut s, 2, &[true, true, true]);
        let n = 100_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            counts[s.select_index(&[0, 1, 2]).unwrap()] += 1;
        }
        let freq: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();
        assert!((freq[2] - 0.6).abs() < 0.01, "{freq:?}");
        assert!((freq[0] - 0.2).abs() < 0.01, "{freq:?}");
        assert!((freq[1] - 0.2).abs() < 0.01, "{freq:?}");
    }

    #[test]
    fn rule_based_follows_priority() {
        let cfg = PolicyConfig::rule_based(Some(vec!["g3".into(), "g1".into()]));
        let mut s = PolicyState::new(cfg, &gws(3)).unwrap();
        assert_eq!(s.select_index(&[0, 1, 2]).unwrap(), 2);
        assert_eq!(s.select_index(&[0, 1]).unwrap(), 0);
        assert_eq!(s.select_index(&[1]).unwrap(), 1);
        let cfg = PolicyConfig::rule_based(Some(vec!["nope".into()]));
        assert!(PolicyState::new(cfg, &gws(3)).is_err());
    }

    #[test]
    fn sliding_update_is_local() {
        let mut s = PolicyState::new(PolicyConfig::sw_ucb(4, 1.0), &gws(3)).unwrap();
        feed(&mut s, 1, &[true, false]);
        let before = s.sliding_stats().unwrap().to_vec();
        s.update_index(2, true).unwrap();
        let after = s.sliding_stats().unwrap();
        assert_eq!(before[0], after[0]);
        assert_eq!(before[1], after[1]);
        assert_eq!(after[2].len(), 1);
        assert_eq!(s.steps(), 3);
    }

    #[test]
    fn discounted_update_decays_unplayed_once() {
        let alpha = 0.7;
        let mut s = PolicyState::new(PolicyConfig::d_ucb(alpha, 1.0), &gws(2)).unwrap();
        s.update_index(0, true).unwrap();
        s.update_index(1, false).unwrap();
        let d = s.discounted_stats().unwrap();
        // g1 played at step 1, read at step 3: alpha^2; g2 played at step 2: alpha^1
        assert!((d[0].weighted_count - alpha * alpha).abs() < 1e-15);
        assert!((d[0].weighted_successes - alpha * alpha).abs() < 1e-15);
        assert!((d[1].weighted_count - alpha).abs() < 1e-15);
        assert_eq!(d[1].weighted_successes, 0.0);
    }

    #[test]
    fn thompson_only_moves_chosen_arm() {
        let mut s = PolicyState::new(
            PolicyConfig::discounted_thompson(0.9).with_priors(2.0, 3.0),
            &gws(2),
        )
        .unwrap();
        s.update_index(0, true).unwrap();
        let b = s.beta_params().unwrap();
        assert!((b[0].lambda - 2.8).abs() < 1e-12 && (b[0].gamma - 2.7).abs() < 1e-12);
        assert_eq!(b[1], BetaParams::new(2.0, 3.0));
    }

    #[test]
    fn thompson_prefers_clearly_better_arm() {
        let mut s =
            PolicyState::new(PolicyConfig::discounted_thompson(1.0).with_seed(5), &gws(2)).unwrap();
        feed(&mut s, 0, &[true; 50]);
        feed(&mut s, 1, &[false; 50]);
        let picks = (0..200)
            .filter(|_| s.select_index(&[0, 1]).unwrap() == 0)
            .count();
        assert_eq!(picks, 200);
    }

    #[test]
    fn serde_round_trip_preserves_rng() {
        let mut s = PolicyState::new(PolicyConfig::d_bg(0.8, 0.5).with_seed(9), &gws(3)).unwrap();
        for i in 0..30 {
            let g = s.select_index(&[0, 1, 2]).unwrap();
            s.update_index(g, i % 3 == 0).unwrap();
        }
        let json = serde_json::to_string(&s).unwrap();
        let mut back: PolicyState = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
        for _ in 0..50 {
            assert_eq!(
                back.select_index(&[0, 1, 2]).unwrap(),
                s.select_index(&[0, 1, 2]).unwrap()
            );
        }
    }

    fn all_configs() -> Vec<PolicyConfig> {
        vec![
            PolicyConfig::epsilon_greedy(50, 0.1),
            PolicyConfig::sw_ucb(50, 1.0),
            PolicyConfig::sw_bg(50, 1.0),
            PolicyConfig::d_ucb(0.9, 1.0),
            PolicyConfig::d_bg(0.9, 1.0),
            PolicyConfig::discounted_thompson(0.9),
            PolicyConfig::rule_based(None),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn select_stays_in_eligible_set(
            kind in 0usize..7,
            n in 1usize..8,
            seed in any::<u64>(),
            trace in proptest::collection::vec((any::<u8>(), any::<u8>(), any::<bool>()), 1..200),
        ) {
            let cfg = all_configs()[kind].clone().with_seed(seed);
            let mut s = PolicyState::new(cfg, &gws(n)).unwrap();
            for (mask, _, r) in trace {
                let eligible: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
                if eligible.is_empty() {
                    prop_assert_eq!(s.select_index(&eligible), Err(BanditError::EmptyEligibleSet));
                    continue;
                }
                let g = s.select_index(&eligible).unwrap();
                prop_assert!(eligible.contains(&g));
                s.update_index(g, r).unwrap();
            }
        }

        #[test]
        fn zero_c1_ucb_is_greedy(
            discounted in any::<bool>(),
            seed in any::<u64>(),
            hist in proptest::collection::vec((0usize..4, any::<bool>()), 4..120),
        ) {
            let cfg = if discounted { PolicyConfig::d_ucb(0.95, 0.0) } else { PolicyConfig::sw_ucb(30, 0.0) };
            let mut s = PolicyState::new(cfg.with_seed(seed), &gws(4)).unwrap();
            for g in 0..4 {
                s.update_index(g, true).unwrap();
            }
            for (g, r) in hist {
                s.update_index(g, r).unwrap();
            }
            let est: Vec<f64> = s.summaries().iter().map(|a| a.estimate.unwrap_or(f64::INFINITY)).collect();
            let max = est.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let pick = s.select_index(&[0, 1, 2, 3]).unwrap();
            prop_assert_eq!(est[pick], max);
        }

        #[test]
        fn undiscounted_matches_sliding_without_eviction(
            hist in proptest::collection::vec((0usize..3, any::<bool>()), 1..150),
        ) {
            let mut sw = PolicyState::new(PolicyConfig::sw_ucb(1000, 1.0), &gws(3)).unwrap();
            let mut du = PolicyState::new(PolicyConfig::d_ucb(1.0, 1.0), &gws(3)).unwrap();
            for (g, r) in hist {
                sw.update_index(g, r).unwrap();
                du.update_index(g, r).unwrap();
            }
            for (a, b) in sw.summaries().iter().zip(du.summaries()) {
                match (a.estimate, b.estimate) {
                    (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-12),
                    (None, None) => {}
                    other => prop_assert!(false, "{:?}", other),
                }
            }
        }
    }
}
