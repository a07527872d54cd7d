//! Per-day and cumulative success-rate uplift of experiment arms over a
//! baseline arm.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fsutil;
use crate::service::Metrics;

pub const UPLIFT_CSV: &str = "uplift.csv";
pub const REGRET_SUMMARY_CSV: &str = "regret_summary.csv";
/// Day label of the all-days rows.
pub const CUMULATIVE: &str = "cumulative";

#[derive(Debug, Error)]
pub enum UpliftError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("row {row}: {reason}")]
    MalformedRow { row: usize, reason: String },
    #[error("baseline arm {0} does not appear in the input")]
    UnknownBaseline(String),
    #[error("no rows to report")]
    Empty,
}

/// Aggregated attempts of one arm on one day.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outcome {
    pub day: String,
    pub arm: String,
    pub attempts: u64,
    pub successes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpliftRow {
    pub day: String,
    pub arm: String,
    pub attempts: u64,
    pub successes: u64,
    pub success_rate: Option<f64>,
    /// Percentage points over the baseline arm's rate on the same day.
    pub uplift_pp: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpliftTable {
    pub baseline: String,
    pub rows: Vec<UpliftRow>,
}

impl UpliftTable {
    pub fn get(&self, day: &str, arm: &str) -> Option<&UpliftRow> {
        self.rows.iter().find(|r| r.day == day && r.arm == arm)
    }

    pub fn cumulative(&self, arm: &str) -> Option<&UpliftRow> {
        self.get(CUMULATIVE, arm)
    }
}

/// Reads `day,arm,attempts,successes` (columns in any order).
pub fn load_outcomes_csv(path: &Path) -> Result<Vec<Outcome>, UpliftError> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for (i, rec) in rdr.deserialize::<Outcome>().enumerate() {
        let o = rec.map_err(|e| UpliftError::MalformedRow {
            row: i + 1,
            reason: e.to_string(),
        })?;
        if o.successes > o.attempts {
            return Err(UpliftError::MalformedRow {
                row: i + 1,
                reason: format!("{} successes exceed {} attempts", o.successes, o.attempts),
            });
        }
        out.push(o);
    }
    Ok(out)
}

/// One outcome per arm from a metrics document, all on day `day`.
pub fn outcomes_from_metrics(metrics: &Metrics, day: &str) -> Vec<Outcome> {
    metrics
        .arms
        .iter()
        .map(|a| Outcome {
            day: day.to_string(),
            arm: a.label.clone(),
            attempts: a.rewards,
            successes: a.successes,
        })
        .collect()
}

pub fn load_metrics_json(path: &Path) -> Result<Metrics, UpliftError> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

fn rate(attempts: u64, successes: u64) -> Option<f64> {
    (attempts > 0).then(|| successes as f64 / attempts as f64)
}

/// Rows per (day, arm) in first-appearance order, then one cumulative row
/// per arm. Repeated (day, arm) pairs are summed.
pub fn uplift_table(outcomes: &[Outcome], baseline: &str) -> Result<UpliftTable, UpliftError> {
    if outcomes.is_empty() {
        return Err(UpliftError::Empty);
    }
    if !outcomes.iter().any(|o| o.arm == baseline) {
        return Err(UpliftError::UnknownBaseline(baseline.to_string()));
    }
    let mut days: Vec<&str> = Vec::new();
    let mut arms: Vec<&str> = Vec::new();
    let mut cells: BTreeMap<(&str, &str), (u64, u64)> = BTreeMap::new();
    for o in outcomes {
        if !days.contains(&o.day.as_str()) {
            days.push(&o.day);
        }
        if !arms.contains(&o.arm.as_str()) {
            arms.push(&o.arm);
        }
        let c = cells.entry((&o.day, &o.arm)).or_default();
        c.0 += o.attempts;
        c.1 += o.successes;
    }
    let mut rows = Vec::new();
    let mut emit = |day: &str, per_arm: &dyn Fn(&str) -> Option<(u64, u64)>| {
        let base = per_arm(baseline).and_then(|(a, s)| rate(a, s));
        for arm in &arms {
            if let Some((attempts, successes)) = per_arm(arm) {
                let success_rate = rate(attempts, successes);
                let uplift_pp = if *arm == baseline {
                    None
                } else {
                    success_rate.zip(base).map(|(r, b)| (r - b) * 100.0)
                };
                rows.push(UpliftRow {
                    day: day.to_string(),
                    arm: arm.to_string(),
                    attempts,
                    successes,
                    success_rate,
                    uplift_pp,
                });
            }
        }
    };
    for day in &days {
        emit(day, &|arm| cells.get(&(*day, arm)).copied());
    }
    emit(CUMULATIVE, &|arm| {
        let mut hit = false;
        let total = cells
            .iter()
            .filter(|((_, a), _)| *a == arm)
            .fold((0, 0), |acc, (_, c)| {
                hit = true;
                (acc.0 + c.0, acc.1 + c.1)
            });
        hit.then_some(total)
    });
    Ok(UpliftTable {
        baseline: baseline.to_string(),
        rows,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_uplift_csv(table: &UpliftTable, path: &Path) -> Result<(), UpliftError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "day",
        "arm",
        "attempts",
        "successes",
        "success_rate",
        "uplift_pp",
    ])?;
    for r in &table.rows {
        w.write_record([
            r.day.clone(),
            r.arm.clone(),
            r.attempts.to_string(),
            r.successes.to_string(),
            opt(r.success_rate),
            opt(r.uplift_pp),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    fsutil::write_atomic(path, &bytes)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegretRow {
    pub policy: String,
    pub steps: usize,
    pub final_regret: f64,
    /// Final regret minus the baseline policy's; negative is better.
    pub delta_vs_baseline: Option<f64>,
}

/// Final-regret comparison of regret curves against an optional baseline label.
pub fn regret_summary(
    curves: &BTreeMap<String, Vec<f64>>,
    baseline: Option<&str>,
) -> Result<Vec<RegretRow>, UpliftError> {
    if curves.is_empty() {
        return Err(UpliftError::Empty);
    }
    let last = |c: &Vec<f64>| c.last().copied().unwrap_or(0.0);
    let base = match baseline {
        Some(b) => {
            Some(last(curves.get(b).ok_or_else(|| {
                UpliftError::UnknownBaseline(b.to_string())
            })?))
        }
        None => None,
    };
    Ok(curves
        .iter()
        .map(|(policy, c)| RegretRow {
            policy: policy.clone(),
            steps: c.len(),
            final_regret: last(c),
            delta_vs_baseline: base
                .filter(|_| Some(policy.as_str()) != baseline)
                .map(|b| last(c) - b),
        })
        .collect())
}

pub fn write_regret_summary(rows: &[RegretRow], path: &Path) -> Result<(), UpliftError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["policy", "steps", "final_regret", "delta_vs_baseline"])?;
    for r in rows {
        w.write_record([
            r.policy.clone(),
            r.steps.to_string(),
            r.final_regret.to_string(),
            opt(r.delta_vs_baseline),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    fsutil::write_atomic(path, &bytes)?;
    Ok(())
}

/// Synthetic A/B outcomes with known per-arm success rates.
///
/// Paired design: every transaction draws one uniform `u` and counts as a
/// success for arm `a` iff `u < rate_a`, so arm differences carry only the
/// noise of the rate gap itself. Transactions are spread evenly over `days`.
pub fn simulate_paired_ab(
    arms: &[(&str, f64)],
    transactions: u64,
    days: u32,
    seed: u64,
) -> Vec<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let days = days.max(1) as u64;
    let mut out = Vec::new();
    for d in 0..days {
        let n = transactions / days + u64::from(d < transactions % days);
        let mut successes = vec![0u64; arms.len()];
        for _ in 0..n {
            let u: f64 = rng.random();
            for (s, (_, p)) in successes.iter_mut().zip(arms) {
                *s += u64::from(u < *p);
            }
        }
        for ((label, _), s) in arms.iter().zip(successes) {
            out.push(Outcome {
                day: format!("day{:02}", d + 1),
                arm: label.to_string(),
                attempts: n,
                successes: s,
            });
        }
    }
    out
}
