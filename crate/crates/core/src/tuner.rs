//! Grid search over policy hyperparameters, ranked by mean final regret.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bandit::{PolicyConfig, PolicyKind};
use crate::fsutil;
use crate::sim::{replay, Environment};

pub const REPORT_CSV: &str = "tune_report.csv";
pub const BEST_JSON: &str = "best_configs.json";

#[derive(Debug, Error)]
pub enum TuneError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("report is empty")]
    EmptyReport,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("worker pool: {0}")]
    Pool(String),
}

/// Candidate values per hyperparameter. Only the lists a kind uses must be non-empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Grid {
    pub window: Vec<usize>,
    pub discount: Vec<f64>,
    pub c1: Vec<f64>,
    pub epsilon: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl Default for Grid {
    fn default() -> Self {
        Self {
            window: vec![50, 100, 200, 500, 1000],
            discount: vec![0.5, 0.6, 0.8, 0.9, 0.99],
            c1: vec![0.1, 0.5, 1.0, 2.0],
            epsilon: vec![0.05, 0.1, 0.2],
            seeds: (0..10).collect(),
        }
    }
}

impl Grid {
    /// Every configuration of `kind` in the grid.
    pub fn cells(&self, kind: PolicyKind) -> Result<Vec<PolicyConfig>, TuneError> {
        let need = |name: &str, empty: bool| {
            if empty {
                Err(TuneError::InvalidGrid(format!(
                    "{kind} needs a non-empty {name} list"
                )))
            } else {
                Ok(())
            }
        };
        need("seeds", self.seeds.is_empty())?;
        let seed = self.seeds[0];
        let mut out = Vec::new();
        match kind {
            PolicyKind::EpsilonGreedy => {
                need("window", self.window.is_empty())?;
                need("epsilon", self.epsilon.is_empty())?;
                for &w in &self.window {
                    for &e in &self.epsilon {
                        out.push(PolicyConfig::epsilon_greedy(w, e));
                    }
                }
            }
            PolicyKind::SwUcb | PolicyKind::SwBg => {
                need("window", self.window.is_empty())?;
                need("c1", self.c1.is_empty())?;
                for &w in &self.window {
                    for &c in &self.c1 {
                        out.push(if kind == PolicyKind::SwUcb {
                            PolicyConfig::sw_ucb(w, c)
                        } else {
                            PolicyConfig::sw_bg(w, c)
                        });
                    }
                }
            }
            PolicyKind::DUcb | PolicyKind::DBg => {
                need("discount", self.discount.is_empty())?;
                need("c1", self.c1.is_empty())?;
                for &a in &self.discount {
                    for &c in &self.c1 {
                        out.push(if kind == PolicyKind::DUcb {
                            PolicyConfig::d_ucb(a, c)
                        } else {
                            PolicyConfig::d_bg(a, c)
                        });
                    }
                }
            }
            PolicyKind::DiscountedThompson => {
                need("discount", self.discount.is_empty())?;
                for &a in &self.discount {
                    out.push(PolicyConfig::discounted_thompson(a));
                }
            }
            PolicyKind::RuleBased => {
                return Err(TuneError::InvalidGrid(
                    "rule_based has nothing to tune".into(),
                ));
            }
        }
        Ok(out.into_iter().map(|c| c.with_seed(seed)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneRow {
    pub kind: PolicyKind,
    pub config: PolicyConfig,
    pub mean_final_regret: Option<f64>,
    pub stderr: Option<f64>,
    pub seeds: usize,
    pub error: Option<String>,
}

impl TuneRow {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

/// Rank order: successful rows by mean regret, then smaller window, larger
/// discount, smaller c1, smaller epsilon; failed rows last.
fn rank(a: &TuneRow, b: &TuneRow) -> Ordering {
    let key = |r: &TuneRow| {
        (
            r.mean_final_regret.unwrap_or(f64::INFINITY),
            r.config.window.unwrap_or(0) as f64,
            -r.config.discount.unwrap_or(1.0),
            r.config.c1.unwrap_or(0.0),
            r.config.epsilon.unwrap_or(0.0),
        )
    };
    a.failed()
        .cmp(&b.failed())
        .then_with(|| {
            let (ka, kb) = (key(a), key(b));
            ka.0.total_cmp(&kb.0)
                .then(ka.1.total_cmp(&kb.1))
                .then(ka.2.total_cmp(&kb.2))
                .then(ka.3.total_cmp(&kb.3))
                .then(ka.4.total_cmp(&kb.4))
        })
        .then_with(|| a.kind.cmp(&b.kind))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneReport {
    rows: Vec<TuneRow>,
}

impl TuneReport {
    pub fn new(mut rows: Vec<TuneRow>) -> Self {
        rows.sort_by(rank);
        Self { rows }
    }

    pub fn rows(&self) -> &[TuneRow] {
        &self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Lowest-regret successful row of each kind.
    pub fn best_per_kind(&self) -> BTreeMap<PolicyKind, &TuneRow> {
        let mut best: BTreeMap<PolicyKind, &TuneRow> = BTreeMap::new();
        for row in self.rows.iter().filter(|r| !r.failed()) {
            match best.get(&row.kind) {
                Some(cur) if rank(cur, row) != Ordering::Greater => {}
                _ => {
                    best.insert(row.kind, row);
                }
            }
        }
        best
    }
}

fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn max_eligible(env: &dyn Environment) -> usize {
    (0..env.steps())
        .map(|t| env.eligible(t).len())
        .max()
        .unwrap_or(0)
}

/// Runs one replay per (kind, hyperparameter cell, seed) on `parallelism`
/// worker threads. Cells that fail validation or replay are kept in the
/// report as failed rows.
pub fn grid_search(
    env: &dyn Environment,
    grid: &Grid,
    kinds: &[PolicyKind],
    parallelism: usize,
) -> Result<TuneReport, TuneError> {
    if kinds.is_empty() {
        return Err(TuneError::InvalidGrid("no policy kinds".into()));
    }
    let mut cells = Vec::new();
    for &kind in kinds {
        cells.extend(grid.cells(kind)?);
    }
    let set_size = max_eligible(env);
    let precheck: Vec<Option<String>> = cells
        .iter()
        .map(|c| {
            c.validate()
                .err()
                .map(|e| e.to_string())
                .or_else(|| match c.epsilon {
                    Some(e) if e * set_size as f64 > 1.0 + 1e-12 => Some(format!(
                        "epsilon {e} exceeds 1/{set_size} for the largest eligible set"
                    )),
                    _ => None,
                })
        })
        .collect();

    let jobs: Vec<(usize, u64)> = cells
        .iter()
        .enumerate()
        .filter(|(i, _)| precheck[*i].is_none())
        .flat_map(|(i, _)| grid.seeds.iter().map(move |&s| (i, s)))
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| TuneError::Pool(e.to_string()))?;
    let results: Vec<Result<f64, String>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(i, seed)| {
                replay(env, &cells[i], seed)
                    .map(|c| c.final_regret())
                    .map_err(|e| e.to_string())
            })
            .collect()
    });

    let mut per_cell: Vec<Vec<f64>> = vec![Vec::new(); cells.len()];
    let mut errors: Vec<Option<String>> = precheck;
    for (&(i, seed), res) in jobs.iter().zip(results) {
        match res {
            Ok(r) => per_cell[i].push(r),
            Err(e) => {
                errors[i].get_or_insert_with(|| format!("seed {seed}: {e}"));
            }
        }
    }

    let rows = cells
        .into_iter()
        .zip(per_cell)
        .zip(errors)
        .map(|((config, regrets), error)| {
            let ok = error.is_none() && !regrets.is_empty();
            let (mean, se) = if ok {
                mean_stderr(&regrets)
            } else {
                (f64::NAN, f64::NAN)
            };
            TuneRow {
                kind: config.kind,
                mean_final_regret: ok.then_some(mean),
                stderr: ok.then_some(se),
                seeds: regrets.len(),
                error,
                config,
            }
        })
        .collect();
    Ok(TuneReport::new(rows))
}

/// Writes `tune_report.csv` and `best_configs.json` into `out_dir`.
pub fn emit_report(report: &TuneReport, out_dir: &Path) -> Result<(PathBuf, PathBuf), TuneError> {
    if report.is_empty() {
        return Err(TuneError::EmptyReport);
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["kind", "params", "mean_final_regret", "stderr", "seeds"])?;
    for row in report.rows() {
        let (mean, se) = match (&row.error, row.mean_final_regret, row.stderr) {
            (Some(e), _, _) => ("failed".to_string(), e.clone()),
            (None, Some(m), Some(s)) => (m.to_string(), s.to_string()),
            _ => (String::new(), String::new()),
        };
        w.write_record([
            row.kind.to_string(),
            row.config.params(),
            mean,
            se,
            row.seeds.to_string(),
        ])?;
    }
    let csv_bytes = w
        .into_inner()
        .map_err(|e| std::io::Error::other(e.to_string()))?;

    let best: BTreeMap<String, &PolicyConfig> = report
        .best_per_kind()
        .into_iter()
        .map(|(k, r)| (k.to_string(), &r.config))
        .collect();
    let json = serde_json::to_vec_pretty(&best)?;

    fs::create_dir_all(out_dir)?;
    let csv_path = out_dir.join(REPORT_CSV);
    let json_path = out_dir.join(BEST_JSON);
    fsutil::write_all_atomic(&[(csv_path.clone(), csv_bytes), (json_path.clone(), json)])?;
    Ok((csv_path, json_path))
}

/// Reads `best_configs.json` back as validated policy configs.
pub fn load_best_configs(path: &Path) -> Result<BTreeMap<PolicyKind, PolicyConfig>, TuneError> {
    let raw: BTreeMap<String, PolicyConfig> = serde_json::from_slice(&fs::read(path)?)?;
    raw.into_iter()
        .map(|(k, c)| {
            let kind: PolicyKind = k
                .parse()
                .map_err(|e: crate::bandit::BanditError| TuneError::InvalidGrid(e.to_string()))?;
            if kind != c.kind {
                return Err(TuneError::InvalidGrid(format!(
                    "entry {k} holds a {} config",
                    c.kind
                )));
            }
            c.validate()
                .map_err(|e| TuneError::InvalidGrid(e.to_string()))?;
            Ok((kind, c))
        })
        .collect()
}
