//! Sliding-window and discounted success-rate estimators on a short history.

use payroute::bandit::{decay_all, BetaParams, DiscountedStats, SlidingWindowStats};

fn main() {
    let history = [true, true, false, true, false, false, false, true];

    let mut window = SlidingWindowStats::new();
    for &s in &history {
        window.update(s, 4);
    }
    let (mean, n) = window.estimate();
    println!("sliding W=4: mean={mean:?} plays={n}");

    // one arm played every step; add the outcome, then decay
    let mut stats = [DiscountedStats::default()];
    for &s in &history {
        stats[0].update(s);
        decay_all(&mut stats, 0.6);
    }
    let (mean, weight) = stats[0].estimate();
    println!(
        "discounted a=0.6: mean={mean:?} weight={weight:.4} (bound {:.4})",
        0.6 / 0.4
    );

    let mut beta = BetaParams::new(1.0, 1.0);
    for &s in &history {
        beta.update(true, s, 0.9);
    }
    println!("discounted beta: mean={:.4}", beta.mean());
}
