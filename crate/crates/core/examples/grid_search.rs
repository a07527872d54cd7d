//! Tunes window length and exploration on the abrupt-change environment.

use payroute::bandit::PolicyKind;
use payroute::sim::{ProcessorLayout, SyntheticEnv};
use payroute::tuner::{self, Grid};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let env = SyntheticEnv::abrupt_swap(2500, 0.8, 0.2).build(5000, &ProcessorLayout::default())?;
    let grid = Grid {
        window: vec![50, 200, 5000],
        discount: vec![0.6, 0.9, 1.0],
        c1: vec![0.1, 1.0],
        seeds: (0..5).collect(),
        ..Grid::default()
    };
    let report = tuner::grid_search(&env, &grid, &[PolicyKind::SwUcb, PolicyKind::DUcb], 0)?;
    for (kind, row) in report.best_per_kind() {
        println!(
            "{:<8} best {} mean regret {:.1}",
            kind.as_str(),
            row.config.params(),
            row.mean_final_regret.unwrap()
        );
    }
    let out = std::env::temp_dir().join("payroute-grid-search");
    let (csv, json) = tuner::emit_report(&report, &out)?;
    println!("wrote {} and {}", csv.display(), json.display());
    Ok(())
}
