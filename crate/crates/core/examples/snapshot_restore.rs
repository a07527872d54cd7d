//! Snapshot a router to disk and resume an identical one from it.

use payroute::bandit::{PolicyConfig, RoutingTable};
use payroute::service::{
    ExperimentArm, ExperimentConfig, RewardEvent, RouteRequest, Router, RouterConfig,
};

fn router() -> Router {
    let table = RoutingTable::single("card", vec!["g1".into(), "g2".into()]).unwrap();
    let experiment = ExperimentConfig {
        salt: "snap".into(),
        arms: vec![ExperimentArm {
            label: "dts".into(),
            weight: 1.0,
            policy: PolicyConfig::discounted_thompson(0.99).with_seed(5),
        }],
    };
    Router::new(RouterConfig::new(table, experiment), 0).unwrap()
}

fn drive(r: &Router, from: u64, to: u64) {
    for i in from..to {
        let d = r
            .route(&RouteRequest::new(format!("t{i}"), "card"), i)
            .unwrap();
        let ok = d.gateway.as_str() == "g2" || i % 2 == 0;
        r.reward(
            &RewardEvent {
                txn_id: d.txn_id,
                success: ok,
            },
            i,
        )
        .unwrap();
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("payroute-snapshot-example");
    let path = dir.join("snapshot.json");

    let live = router();
    drive(&live, 0, 500);
    live.snapshot_to(&path, 500)?;
    drive(&live, 500, 1000);

    let resumed = router();
    let ts = resumed.restore_from(&path)?;
    drive(&resumed, 500, 1000);
    println!("restored snapshot taken at {ts} ms from {}", path.display());
    println!(
        "policies identical after replay: {}",
        live.policy("dts") == resumed.policy("dts")
    );
    Ok(())
}
