use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::pending::{DEFAULT_CAPACITY, DEFAULT_TTL_MS};
use super::{
    ExperimentArm, ExperimentConfig, PacingConfig, RateLimitConfig, RouterConfig, ServiceError,
};
use crate::bandit::{PolicyConfig, PolicyKind, RoutingTable};
use crate::tuner;

/// `PAYROUTE_SERVER__PORT=9000` sets `server.port`; `__` separates levels
/// and numeric segments index arrays.
pub const ENV_PREFIX: &str = "PAYROUTE_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub host: String,
    pub port: u16,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            host: "127.0.0.1".into(),
            port: 8080,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SnapshotSettings {
    pub path: Option<PathBuf>,
    pub interval_secs: u64,
}

impl Default for SnapshotSettings {
    fn default() -> Self {
        Self {
            path: None,
            interval_secs: 30,
        }
    }
}

impl SnapshotSettings {
    pub fn interval(&self) -> Duration {
        Duration::from_secs(self.interval_secs.max(1))
    }
}

/// Points an arm at one entry of a tuner `best_configs.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BestConfigRef {
    pub path: PathBuf,
    pub kind: PolicyKind,
}

/// An arm as written in the config file: an inline policy or a tuner result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmSpec {
    pub label: String,
    pub weight: f64,
    #[serde(default)]
    pub policy: Option<PolicyConfig>,
    #[serde(default)]
    pub best: Option<BestConfigRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentSpec {
    #[serde(default)]
    salt: String,
    arms: Vec<ArmSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct PendingSettings {
    ttl_ms: u64,
    capacity: usize,
}

impl Default for PendingSettings {
    fn default() -> Self {
        Self {
            ttl_ms: DEFAULT_TTL_MS,
            capacity: DEFAULT_CAPACITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ServiceFile {
    #[serde(default)]
    server: ServerConfig,
    routing: RoutingTable,
    experiment: ExperimentSpec,
    #[serde(default)]
    rate_limit: RateLimitConfig,
    #[serde(default)]
    pacing: PacingConfig,
    #[serde(default)]
    pending: PendingSettings,
    #[serde(default)]
    snapshot: SnapshotSettings,
    #[serde(default)]
    baseline_arm: Option<String>,
}

/// Resolved, validated service configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    pub server: ServerConfig,
    pub router: RouterConfig,
    pub snapshot: SnapshotSettings,
}

impl ServiceConfig {
    /// Reads TOML from `path`, applies `PAYROUTE_*` overrides from the
    /// process environment, and resolves relative paths against the file.
    pub fn load(path: &Path) -> Result<Self, ServiceError> {
        Self::load_with_env(path, std::env::vars())
    }

    pub fn load_with_env(
        path: &Path,
        env: impl IntoIterator<Item = (String, String)>,
    ) -> Result<Self, ServiceError> {
        let text = fs::read_to_string(path)
            .map_err(|e| ServiceError::InvalidConfig(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, base, env)
    }

    pub fn from_toml_str(
        text: &str,
        base_dir: &Path,
        env: impl IntoIterator<Item = (String, String)>,
    ) -> Result<Self, ServiceError> {
        let invalid = |e: String| ServiceError::InvalidConfig(e);
        let mut value: toml::Value = toml::from_str(text).map_err(|e| invalid(e.to_string()))?;
        apply_env_overrides(&mut value, env)?;
        let file: ServiceFile = value
            .try_into()
            .map_err(|e: toml::de::Error| invalid(e.to_string()))?;

        let mut best_cache: BTreeMap<PathBuf, BTreeMap<PolicyKind, PolicyConfig>> = BTreeMap::new();
        let mut arms = Vec::with_capacity(file.experiment.arms.len());
        for spec in file.experiment.arms {
            let policy = match (spec.policy, spec.best) {
                (Some(p), None) => p,
                (None, Some(best)) => {
                    let path = base_dir.join(&best.path);
                    if !best_cache.contains_key(&path) {
                        let loaded = tuner::load_best_configs(&path).map_err(|e| {
                            invalid(format!("arm {}: {}: {e}", spec.label, path.display()))
                        })?;
                        best_cache.insert(path.clone(), loaded);
                    }
                    best_cache[&path].get(&best.kind).cloned().ok_or_else(|| {
                        invalid(format!(
                            "arm {}: {} has no {} entry",
                            spec.label,
                            path.display(),
                            best.kind
                        ))
                    })?
                }
                _ => {
                    return Err(invalid(format!(
                        "arm {} needs exactly one of policy or best",
                        spec.label
                    )))
                }
            };
            arms.push(ExperimentArm {
                label: spec.label,
                weight: spec.weight,
                policy,
            });
        }

        let snapshot = SnapshotSettings {
            path: file.snapshot.path.map(|p| base_dir.join(p)),
            ..file.snapshot
        };
        let router = RouterConfig {
            routing: file.routing,
            experiment: ExperimentConfig {
                salt: file.experiment.salt,
                arms,
            },
            rate_limit: file.rate_limit,
            pacing: file.pacing,
            pending_ttl_ms: file.pending.ttl_ms,
            pending_capacity: file.pending.capacity,
            baseline_arm: file.baseline_arm,
        };
        router.validate()?;
        Ok(Self {
            server: file.server,
            router,
            snapshot,
        })
    }
}

fn parse_scalar(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Applies `PAYROUTE_A__B=value` pairs onto a TOML tree. Values parse as
/// TOML when they can and fall back to plain strings.
pub fn apply_env_overrides(
    root: &mut toml::Value,
    env: impl IntoIterator<Item = (String, String)>,
) -> Result<(), ServiceError> {
    let mut vars: Vec<(String, String)> = env
        .into_iter()
        .filter_map(|(k, v)| {
            k.strip_prefix(ENV_PREFIX)
                .map(|rest| (rest.to_ascii_lowercase(), v))
        })
        .collect();
    vars.sort();
    for (key, raw) in vars {
        let path: Vec<&str> = key.split("__").collect();
        if path.iter().any(|p| p.is_empty()) {
            return Err(ServiceError::InvalidConfig(format!(
                "bad override key {ENV_PREFIX}{key}"
            )));
        }
        let mut node = &mut *root;
        for (i, seg) in path.iter().enumerate() {
            let last = i + 1 == path.len();
            node = match node {
                toml::Value::Table(t) => {
                    if last {
                        t.insert(seg.to_string(), parse_scalar(&raw));
                        break;
                    }
                    t.entry(seg.to_string())
                        .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                }
                toml::Value::Array(a) => {
                    let idx: usize =
                        seg.parse().ok().filter(|i| *i < a.len()).ok_or_else(|| {
                            ServiceError::InvalidConfig(format!("override {key}: no element {seg}"))
                        })?;
                    if last {
                        a[idx] = parse_scalar(&raw);
                        break;
                    }
                    &mut a[idx]
                }
                _ => {
                    return Err(ServiceError::InvalidConfig(format!(
                        "override {key}: {seg} is not inside a table"
                    )))
                }
            };
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
[server]
port = 9100

[routing]
visa = ["g1", "g2"]
amex = ["g2"]

[experiment]
salt = "exp-1"
arms = [
  { label = "rule", weight = 0.1, policy = { kind = "rule_based" } },
  { label = "sw", weight = 0.9, policy = { kind = "sw_ucb", window = 200, c1 = 1.0 } },
]

[rate_limit.caps]
g1 = 100

[snapshot]
path = "state/snap.json"
"#;

    fn no_env() -> Vec<(String, String)> {
        Vec::new()
    }

    #[test]
    fn parses_sample() {
        let cfg = ServiceConfig::from_toml_str(SAMPLE, Path::new("/etc/pr"), no_env()).unwrap();
        assert_eq!(cfg.server.port, 9100);
        assert_eq!(cfg.router.experiment.arms.len(), 2);
        assert_eq!(cfg.router.rate_limit.caps["g1"], 100);
        assert_eq!(
            cfg.snapshot.path.as_deref(),
            Some(Path::new("/etc/pr/state/snap.json"))
        );
        assert_eq!(cfg.snapshot.interval_secs, 30);
        assert_eq!(cfg.router.pending_ttl_ms, 120_000);
    }

    #[test]
    fn env_overrides_nested_and_array_keys() {
        let env = vec![
            ("PAYROUTE_SERVER__PORT".to_string(), "9999".to_string()),
            ("PAYROUTE_EXPERIMENT__SALT".to_string(), "other".to_string()),
            (
                "PAYROUTE_EXPERIMENT__ARMS__1__POLICY__WINDOW".to_string(),
                "50".to_string(),
            ),
            ("UNRELATED".to_string(), "x".to_string()),
        ];
        let cfg = ServiceConfig::from_toml_str(SAMPLE, Path::new("."), env).unwrap();
        assert_eq!(cfg.server.port, 9999);
        assert_eq!(cfg.router.experiment.salt, "other");
        assert_eq!(cfg.router.experiment.arms[1].policy.window, Some(50));
    }

    #[test]
    fn rejects_bad_weights_and_unknown_keys() {
        let bad = SAMPLE.replace("weight = 0.9", "weight = 0.8");
        assert!(ServiceConfig::from_toml_str(&bad, Path::new("."), no_env()).is_err());
        let bad = format!("{SAMPLE}\n[extra]\nx = 1\n");
        assert!(ServiceConfig::from_toml_str(&bad, Path::new("."), no_env()).is_err());
    }

    #[test]
    fn arm_from_best_configs() {
        let dir = tempfile::tempdir().unwrap();
        let mut best = BTreeMap::new();
        best.insert(PolicyKind::SwUcb, PolicyConfig::sw_ucb(50, 0.5));
        fs::write(
            dir.path().join("best.json"),
            serde_json::to_vec(&best).unwrap(),
        )
        .unwrap();
        let text = SAMPLE.replace(
            r#"policy = { kind = "sw_ucb", window = 200, c1 = 1.0 }"#,
            r#"best = { path = "best.json", kind = "sw_ucb" }"#,
        );
        let cfg = ServiceConfig::from_toml_str(&text, dir.path(), no_env()).unwrap();
        assert_eq!(
            cfg.router.experiment.arms[1].policy,
            PolicyConfig::sw_ucb(50, 0.5)
        );
        let missing = text.replace("sw_ucb\" }", "d_ucb\" }");
        assert!(ServiceConfig::from_toml_str(&missing, dir.path(), no_env()).is_err());
    }
}
