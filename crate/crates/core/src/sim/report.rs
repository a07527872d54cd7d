use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{RegretCurve, SimError};
use crate::bandit::PolicyConfig;
use crate::fsutil;

pub const REGRET_CSV: &str = "regret.csv";
pub const SUMMARY_JSON: &str = "summary.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretSummary {
    pub policy: String,
    pub config: Option<PolicyConfig>,
    pub seed: u64,
    pub final_regret: f64,
    pub steps: usize,
}

/// Writes `regret.csv` (`step,policy,cumulative_regret`, steps from 1) and
/// `summary.json` into `out_dir`. Returns the two paths.
pub fn emit_regret(curves: &[RegretCurve], out_dir: &Path) -> Result<(PathBuf, PathBuf), SimError> {
    if curves.is_empty() {
        return Err(SimError::Empty("no regret curves"));
    }
    let mut labels = std::collections::HashSet::new();
    for c in curves {
        if !labels.insert(c.policy.as_str()) {
            return Err(SimError::MalformedRow {
                row: 0,
                reason: format!("duplicate policy label {:?}", c.policy),
            });
        }
    }

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["step", "policy", "cumulative_regret"])?;
    for c in curves {
        for (i, r) in c.cumulative.iter().enumerate() {
            w.write_record([(i + 1).to_string(), c.policy.clone(), r.to_string()])?;
        }
    }
    let csv_bytes = w
        .into_inner()
        .map_err(|e| std::io::Error::other(e.to_string()))?;

    let summary: Vec<RegretSummary> = curves
        .iter()
        .map(|c| RegretSummary {
            policy: c.policy.clone(),
            config: c.config.clone(),
            seed: c.seed,
            final_regret: c.final_regret(),
            steps: c.steps(),
        })
        .collect();
    let json = serde_json::to_vec_pretty(&summary)?;

    fs::create_dir_all(out_dir)?;
    let csv_path = out_dir.join(REGRET_CSV);
    let json_path = out_dir.join(SUMMARY_JSON);
    fsutil::write_all_atomic(&[(csv_path.clone(), csv_bytes), (json_path.clone(), json)])?;
    Ok((csv_path, json_path))
}

/// Reads a regret CSV back into per-policy cumulative curves.
pub fn load_regret_csv(path: &Path) -> Result<BTreeMap<String, Vec<f64>>, SimError> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["step", "policy", "cumulative_regret"] {
        return Err(SimError::MissingColumn(
            "step,policy,cumulative_regret".into(),
        ));
    }
    let mut out: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (i, row) in reader.records().enumerate() {
        let bad = |reason: String| SimError::MalformedRow { row: i + 1, reason };
        let row = row.map_err(|e| bad(e.to_string()))?;
        let step: usize = row[0]
            .parse()
            .map_err(|_| bad(format!("bad step {:?}", &row[0])))?;
        let value: f64 = row[2]
            .parse()
            .map_err(|_| bad(format!("bad regret {:?}", &row[2])))?;
        let curve = out.entry(row[1].to_string()).or_default();
        if step != curve.len() + 1 {
            return Err(bad(format!("step {step} out of order")));
        }
        curve.push(value);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{replay, ProcessorLayout, SyntheticEnv};

    fn curve(label: &str, values: &[f64]) -> RegretCurve {
        RegretCurve {
            policy: label.into(),
            config: None,
            seed: 1,
            cumulative: values.to_vec(),
            decisions: vec![0; values.len()],
            gateways: vec!["g".into()],
        }
    }

    #[test]
    fn three_steps_three_rows() {
        let dir = tempfile::tempdir().unwrap();
        let (csv, json) = emit_regret(&[curve("p", &[0.0, 0.5, 0.75])], dir.path()).unwrap();
        let text = fs::read_to_string(csv).unwrap();
        assert_eq!(
            text,
            "step,policy,cumulative_regret\n1,p,0\n2,p,0.5\n3,p,0.75\n"
        );
        let summary: Vec<RegretSummary> = serde_json::from_slice(&fs::read(json).unwrap()).unwrap();
        assert_eq!(summary[0].final_regret, 0.75);
        assert_eq!(summary[0].steps, 3);
    }

    #[test]
    fn csv_round_trips_exactly() {
        let env = SyntheticEnv::abrupt_swap(400, 0.8, 0.2)
            .build(800, &ProcessorLayout::default())
            .unwrap();
        let curves = vec![
            replay(&env, &PolicyConfig::sw_ucb(200, 1.0), 5).unwrap(),
            replay(&env, &PolicyConfig::d_bg(0.6, 0.5), 5).unwrap(),
        ];
        let dir = tempfile::tempdir().unwrap();
        let (csv, _) = emit_regret(&curves, dir.path()).unwrap();
        let back = load_regret_csv(&csv).unwrap();
        for c in &curves {
            assert_eq!(back[&c.policy], c.cumulative);
        }
    }

    #[test]
    fn empty_list_creates_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        assert!(matches!(emit_regret(&[], &out), Err(SimError::Empty(_))));
        assert!(!out.exists());
    }
}
