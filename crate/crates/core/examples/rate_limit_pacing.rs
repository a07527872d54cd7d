//! Per-gateway token buckets and minimum-volume pacing.

use std::collections::BTreeMap;

use payroute::bandit::GatewayId;
use payroute::service::{Pacer, PacingConfig, RateLimitConfig, RateLimiter, TokenBucket};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut bucket = TokenBucket::new(2, 1000, 0);
    let grants: Vec<bool> = (0..3).map(|_| bucket.try_acquire(10)).collect();
    println!("cap 2, three calls at once: {grants:?}");
    println!("one second later: {}", bucket.try_acquire(1010));

    let gateways: Vec<GatewayId> = vec!["g1".into(), "g2".into()];
    let mut caps = BTreeMap::new();
    caps.insert("g1".into(), 100);
    let mut limiter = RateLimiter::new(
        &RateLimitConfig {
            caps,
            granularity_ms: 100,
        },
        &gateways,
        0,
    )?;
    let granted = (0..1000).filter(|&ms| limiter.acquire_index(0, ms)).count();
    println!("g1 capped at 100/s: {granted} grants in the first second");

    let mut minima = BTreeMap::new();
    minima.insert("g2".into(), 1000);
    let cfg = PacingConfig {
        minima,
        ..PacingConfig::default()
    };
    let mut pacer = Pacer::new(&cfg, &gateways, 0)?;
    let half_day = cfg.horizon_ms / 2;
    let d = pacer.decide(&[0, 1], |_| true, half_day);
    println!(
        "g2 has 0/1000 at mid-day: forced = {:?}",
        d.forced.map(|g| &gateways[g])
    );
    pacer.record(1, half_day);
    Ok(())
}
