//! Every policy kind learning the same stationary two-gateway problem.

use payroute::bandit::{GatewayId, PolicyConfig, PolicyState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let gateways: Vec<GatewayId> = vec!["fast".into(), "flaky".into()];
    let rates = [0.9, 0.4];
    let configs = [
        PolicyConfig::epsilon_greedy(200, 0.1),
        PolicyConfig::sw_ucb(200, 1.0),
        PolicyConfig::sw_bg(200, 1.0),
        PolicyConfig::d_ucb(0.99, 1.0),
        PolicyConfig::d_bg(0.99, 1.0),
        PolicyConfig::discounted_thompson(0.99),
        PolicyConfig::rule_based(None),
    ];
    for cfg in configs {
        let mut policy = PolicyState::new(cfg.with_seed(7), &gateways)?;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut wins = 0;
        for _ in 0..2000 {
            let g = policy.select(&gateways)?;
            let i = policy.index_of(&g).unwrap();
            let ok = rng.random::<f64>() < rates[i];
            policy.update(&g, ok)?;
            wins += u32::from(i == 0);
        }
        let est: Vec<String> = policy
            .summaries()
            .iter()
            .map(|a| format!("{}={:.3}", a.gateway, a.estimate.unwrap_or(f64::NAN)))
            .collect();
        println!(
            "{:<40} best picked {:>4}/2000  {}",
            policy.config().label(),
            wins,
            est.join(" ")
        );
    }
    Ok(())
}
