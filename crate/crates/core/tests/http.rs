use std::sync::Arc;
use std::time::Duration;

use payroute::bandit::{PolicyConfig, RoutingTable};
use payroute::service::{self, ExperimentArm, ExperimentConfig, Router, RouterConfig};
use serde_json::{json, Value};

async fn start(
    cfg: RouterConfig,
    snapshot: Option<std::path::PathBuf>,
) -> (
    String,
    tokio::sync::oneshot::Sender<()>,
    tokio::task::JoinHandle<()>,
) {
    let router = Arc::new(Router::new(cfg, service::now_ms()).unwrap());
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    let snap = snapshot.map(|p| (p, Duration::from_secs(3600)));
    let handle = tokio::spawn(async move {
        service::serve(router, listener, snap, async {
            let _ = rx.await;
        })
        .await
        .unwrap();
    });
    (format!("http://{addr}"), tx, handle)
}

fn config() -> RouterConfig {
    let mut table = std::collections::BTreeMap::new();
    table.insert("visa".into(), vec!["g1".into(), "g2".into()]);
    table.insert("amex".into(), vec!["g2".into()]);
    let mut cfg = RouterConfig::new(
        RoutingTable::new(table).unwrap(),
        ExperimentConfig {
            salt: "http".into(),
            arms: vec![
                ExperimentArm {
                    label: "rule".into(),
                    weight: 0.5,
                    policy: PolicyConfig::rule_based(None),
                },
                ExperimentArm {
                    label: "sw".into(),
                    weight: 0.5,
                    policy: PolicyConfig::sw_ucb(100, 1.0),
                },
            ],
        },
    );
    cfg.rate_limit.caps.insert("g2".into(), 1);
    cfg.rate_limit.granularity_ms = 1000;
    cfg
}

#[tokio::test]
async fn endpoints_and_status_codes() {
    let (base, stop, handle) = start(config(), None).await;
    let c = reqwest::Client::new();
    let post = |path: &str, body: Value| c.post(format!("{base}{path}")).json(&body).send();

    let r = c.get(format!("{base}/healthz")).send().await.unwrap();
    assert_eq!(r.status(), 200);

    let r = post(
        "/route",
        json!({"txn_id": "t1", "processor": "visa", "amount": 10.0, "arm_override": "sw"}),
    )
    .await
    .unwrap();
    assert_eq!(r.status(), 200);
    let d: Value = r.json().await.unwrap();
    assert_eq!(d["txn_id"], "t1");
    assert_eq!(d["arm"], "sw");
    assert_eq!(d["policy"], "sw_ucb");
    assert!(d["gateway"] == "g1" || d["gateway"] == "g2");

    let status = |r: reqwest::Response| r.status().as_u16();
    assert_eq!(
        status(
            post(
                "/route",
                json!({"txn_id": "t1", "processor": "visa", "amount": 1})
            )
            .await
            .unwrap()
        ),
        409
    );
    assert_eq!(
        status(
            post(
                "/route",
                json!({"txn_id": "t2", "processor": "jcb", "amount": 1})
            )
            .await
            .unwrap()
        ),
        404
    );
    // amex can only use g2, whose one token per second may already be gone
    let mut saw_503 = false;
    for i in 0..3 {
        let s = status(
            post(
                "/route",
                json!({"txn_id": format!("a{i}"), "processor": "amex", "amount": 1}),
            )
            .await
            .unwrap(),
        );
        assert!(s == 200 || s == 503);
        saw_503 |= s == 503;
    }
    assert!(saw_503);
    assert_eq!(
        status(post("/route", json!({"processor": "visa"})).await.unwrap()),
        400
    );

    let r = post("/reward", json!({"txn_id": "t1", "success": 1}))
        .await
        .unwrap();
    assert_eq!(r.status(), 200);
    assert_eq!(
        r.json::<Value>().await.unwrap(),
        json!({"applied": true, "late": false})
    );
    assert_eq!(
        status(
            post("/reward", json!({"txn_id": "t1", "success": 0}))
                .await
                .unwrap()
        ),
        409
    );
    assert_eq!(
        status(
            post("/reward", json!({"txn_id": "nope", "success": 0}))
                .await
                .unwrap()
        ),
        404
    );
    assert_eq!(
        status(
            post("/reward", json!({"txn_id": "t1", "success": 3}))
                .await
                .unwrap()
        ),
        400
    );

    let m: Value = c
        .get(format!("{base}/metrics"))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    let sw = m["arms"]
        .as_array()
        .unwrap()
        .iter()
        .find(|a| a["label"] == "sw")
        .unwrap();
    assert_eq!(sw["rewards"], 1);
    assert_eq!(m["baseline_arm"], "rule");
    assert!(m["all_gateways_limited"].as_u64().unwrap() >= 1);
    assert!(m["latency"]["p99_us"].is_number());

    stop.send(()).unwrap();
    handle.await.unwrap();
}

#[tokio::test]
async fn graceful_shutdown_writes_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("nested/snap.json");
    let (base, stop, handle) = start(config(), Some(path.clone())).await;
    let c = reqwest::Client::new();
    for i in 0..5 {
        let r = c
            .post(format!("{base}/route"))
            .json(&json!({"txn_id": format!("s{i}"), "processor": "visa", "amount": 1}))
            .send()
            .await
            .unwrap();
        assert_eq!(r.status(), 200);
    }
    stop.send(()).unwrap();
    handle.await.unwrap();

    let restored = Router::new(config(), 0).unwrap();
    restored.restore_from(&path).unwrap();
    let m = restored.metrics(0);
    assert_eq!(m.arms.iter().map(|a| a.routed).sum::<u64>(), 5);
    assert_eq!(m.pending, 5);
}
