//! Replays policies on an abrupt-change environment and on a logged trace.

use payroute::bandit::PolicyConfig;
use payroute::sim::{
    self, OracleSelector, ProcessorLayout, SyntheticEnv, TraceEnv, TraceLayout, TransactionRecord,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let env =
        SyntheticEnv::abrupt_swap(5000, 0.8, 0.2).build(10_000, &ProcessorLayout::default())?;
    for cfg in [
        PolicyConfig::sw_ucb(200, 1.0),
        PolicyConfig::sw_ucb(1_000_000, 1.0),
        PolicyConfig::d_ucb(0.6, 0.1),
        PolicyConfig::d_ucb(1.0, 0.1),
    ] {
        let curve = sim::replay(&env, &cfg, 0)?;
        println!(
            "{:<40} final regret {:>8.1}",
            curve.policy,
            curve.final_regret()
        );
    }
    let oracle = sim::replay_selector(&env, &mut OracleSelector, 0, "oracle".into())?;
    println!(
        "{:<40} final regret {:>8.1}",
        oracle.policy,
        oracle.final_regret()
    );

    // a small synthetic log: g1 degrades halfway through
    let records: Vec<TransactionRecord> = (0..2000)
        .map(|i| {
            let terminal = if i % 2 == 0 { "g1" } else { "g2" };
            let good = if terminal == "g1" {
                i < 1000
            } else {
                i % 3 != 0
            };
            TransactionRecord {
                id: format!("t{i}"),
                amount: 100.0,
                source: "card".into(),
                terminal: terminal.into(),
                success: good && i % 7 != 0,
            }
        })
        .collect();
    let trace = sim::Trace::new(records, &TraceLayout::default())?;
    let env = TraceEnv::new(&trace, 100);
    let curve = sim::replay(&env, &PolicyConfig::discounted_thompson(0.95), 3)?;
    println!(
        "trace replay {}: final regret {:.1}",
        curve.policy,
        curve.final_regret()
    );
    Ok(())
}
