//! Daily and cumulative uplift of a bandit arm over the rule-based baseline.

use payroute::uplift::{self, CUMULATIVE};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let outcomes =
        uplift::simulate_paired_ab(&[("rule", 0.80), ("bandit", 0.8092)], 1_000_000, 7, 42);
    let table = uplift::uplift_table(&outcomes, "rule")?;
    for row in &table.rows {
        if row.arm == "bandit" {
            let label = if row.day == CUMULATIVE {
                "all days"
            } else {
                &row.day
            };
            println!(
                "{label:<10} {:>7} txns  uplift {:+.3} pp",
                row.attempts,
                row.uplift_pp.unwrap()
            );
        }
    }
    let out = std::env::temp_dir().join("payroute-uplift.csv");
    uplift::write_uplift_csv(&table, &out)?;
    println!("wrote {}", out.display());
    Ok(())
}
