//! In-process router: hash-split experiment arms, delayed rewards, metrics.

use std::collections::BTreeMap;

use payroute::bandit::{PolicyConfig, RoutingTable};
use payroute::service::{
    ExperimentArm, ExperimentConfig, RewardEvent, RouteRequest, Router, RouterConfig,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut table = BTreeMap::new();
    table.insert("visa".into(), vec!["g1".into(), "g2".into(), "g3".into()]);
    table.insert("upi".into(), vec!["g2".into(), "g3".into()]);
    let experiment = ExperimentConfig {
        salt: "2024-q3".into(),
        // the baseline keeps a fixed legacy priority
        arms: vec![
            ExperimentArm {
                label: "rule".into(),
                weight: 0.2,
                policy: PolicyConfig::rule_based(Some(vec!["g1".into(), "g3".into(), "g2".into()])),
            },
            ExperimentArm {
                label: "sw_ucb".into(),
                weight: 0.8,
                policy: PolicyConfig::sw_ucb(200, 1.0),
            },
        ],
    };
    let router = Router::new(RouterConfig::new(RoutingTable::new(table)?, experiment), 0)?;
    let rate = |g: &str| match g {
        "g1" => 0.70,
        "g2" => 0.92,
        _ => 0.85,
    };

    let mut inflight = Vec::new();
    for i in 0..20_000u64 {
        let processor = if i % 3 == 0 { "upi" } else { "visa" };
        let d = router.route(&RouteRequest::new(format!("txn-{i}"), processor), i)?;
        inflight.push((d.txn_id, rate(d.gateway.as_str())));
        // rewards arrive 50 transactions late
        if inflight.len() > 50 {
            let (id, p) = inflight.remove(0);
            let u = (i as f64 * 0.618_033_988_75).fract();
            router.reward(
                &RewardEvent {
                    txn_id: id,
                    success: u < p,
                },
                i,
            )?;
        }
    }
    let m = router.metrics(20_000);
    for arm in &m.arms {
        println!(
            "{:<7} routed {:>6} success {:.3} uplift {:?} pp",
            arm.label,
            arm.routed,
            arm.success_rate.unwrap_or(0.0),
            arm.uplift_pp
        );
    }
    println!(
        "pending {} latency p99 {:?} us",
        m.pending, m.latency.p99_us
    );
    Ok(())
}
