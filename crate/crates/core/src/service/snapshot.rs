//! Snapshot file: `{"version", "timestamp_ms", "checksum", "state"}` where
//! `checksum` is the hex SHA-256 of the exact bytes of `state`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use sha2::{Digest, Sha256};

use super::{ServiceError, ServiceState};
use crate::fsutil;

pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Serialize)]
struct EnvelopeOut<'a> {
    version: u32,
    timestamp_ms: u64,
    checksum: String,
    state: &'a RawValue,
}

#[derive(Deserialize)]
struct EnvelopeIn<'a> {
    version: u32,
    timestamp_ms: u64,
    checksum: String,
    #[serde(borrow)]
    state: &'a RawValue,
}

fn checksum(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

pub fn encode_snapshot(state: &ServiceState, timestamp_ms: u64) -> Result<Vec<u8>, ServiceError> {
    let corrupt = |e: serde_json::Error| ServiceError::CorruptSnapshot(e.to_string());
    let raw = serde_json::value::to_raw_value(state).map_err(corrupt)?;
    let env = EnvelopeOut {
        version: SNAPSHOT_VERSION,
        timestamp_ms,
        checksum: checksum(raw.get().as_bytes()),
        state: &raw,
    };
    serde_json::to_vec(&env).map_err(corrupt)
}

/// Returns the state and the timestamp it was taken at.
pub fn decode_snapshot(bytes: &[u8]) -> Result<(ServiceState, u64), ServiceError> {
    let corrupt = |e: serde_json::Error| ServiceError::CorruptSnapshot(e.to_string());
    let env: EnvelopeIn = serde_json::from_slice(bytes).map_err(corrupt)?;
    if env.version != SNAPSHOT_VERSION {
        return Err(ServiceError::VersionMismatch {
            found: env.version,
            expected: SNAPSHOT_VERSION,
        });
    }
    if checksum(env.state.get().as_bytes()) != env.checksum {
        return Err(ServiceError::CorruptSnapshot("checksum mismatch".into()));
    }
    let state = serde_json::from_str(env.state.get()).map_err(corrupt)?;
    Ok((state, env.timestamp_ms))
}

pub fn write_snapshot(
    path: &Path,
    state: &ServiceState,
    timestamp_ms: u64,
) -> Result<(), ServiceError> {
    let bytes = encode_snapshot(state, timestamp_ms)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fsutil::write_atomic(path, &bytes)?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<(ServiceState, u64), ServiceError> {
    decode_snapshot(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bandit::{PolicyConfig, RoutingTable};
    use crate::service::{ExperimentArm, ExperimentConfig, RouteRequest, Router, RouterConfig};

    fn router() -> Router {
        let table = RoutingTable::single("p", vec!["g1".into(), "g2".into()]).unwrap();
        let exp = ExperimentConfig {
            salt: "x".into(),
            arms: vec![ExperimentArm {
                label: "sw".into(),
                weight: 1.0,
                policy: PolicyConfig::sw_ucb(20, 1.0),
            }],
        };
        let r = Router::new(RouterConfig::new(table, exp), 0).unwrap();
        for i in 0..5 {
            r.route(&RouteRequest::new(format!("t{i}"), "p"), i)
                .unwrap();
        }
        r
    }

    #[test]
    fn round_trip() {
        let state = router().export_state();
        let bytes = encode_snapshot(&state, 42).unwrap();
        let (back, ts) = decode_snapshot(&bytes).unwrap();
        assert_eq!((back, ts), (state, 42));
    }

    #[test]
    fn truncation_and_tampering_detected() {
        let bytes = encode_snapshot(&router().export_state(), 1).unwrap();
        assert!(matches!(
            decode_snapshot(&bytes[..bytes.len() / 2]),
            Err(ServiceError::CorruptSnapshot(_))
        ));
        let text = String::from_utf8(bytes).unwrap();
        let tampered = text.replacen("\"routed\":", "\"routed\": ", 1);
        assert!(matches!(
            decode_snapshot(tampered.as_bytes()),
            Err(ServiceError::CorruptSnapshot(_))
        ));
        let newer = text.replacen("\"version\":1", "\"version\":2", 1);
        assert!(matches!(
            decode_snapshot(newer.as_bytes()),
            Err(ServiceError::VersionMismatch {
                found: 2,
                expected: 1
            })
        ));
    }

    #[test]
    fn failed_restore_leaves_state() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("snap.json");
        let r = router();
        r.snapshot_to(&path, 9).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 10]).unwrap();
        let before = r.export_state();
        assert!(matches!(
            r.restore_from(&path),
            Err(ServiceError::CorruptSnapshot(_))
        ));
        assert_eq!(r.export_state(), before);
    }
}
