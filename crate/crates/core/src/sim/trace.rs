use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::bandit::{GatewayId, ProcessorId, RoutingTable};
use crate::fsutil;

pub const TRACE_COLUMNS: [&str; 5] = ["id", "amount", "source", "terminal", "success"];

/// One logged transaction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransactionRecord {
    pub id: String,
    /// INR.
    pub amount: f64,
    /// Payment instrument label.
    pub source: String,
    /// Gateway that processed the transaction.
    pub terminal: GatewayId,
    pub success: bool,
}

/// How `source` labels map onto processors and which gateways each may use.
///
/// Sources missing from `sources` fall into `default_processor`, whose
/// eligible set is every gateway known to the trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceLayout {
    #[serde(default)]
    pub sources: BTreeMap<String, ProcessorId>,
    #[serde(default)]
    pub routing: BTreeMap<ProcessorId, Vec<GatewayId>>,
    #[serde(default = "default_processor")]
    pub default_processor: ProcessorId,
}

fn default_processor() -> ProcessorId {
    ProcessorId::from("default")
}

impl Default for TraceLayout {
    fn default() -> Self {
        Self {
            sources: BTreeMap::new(),
            routing: BTreeMap::new(),
            default_processor: default_processor(),
        }
    }
}

/// A time-ordered transaction log plus the routing context needed to replay it.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    records: Vec<TransactionRecord>,
    routing: RoutingTable,
    processors: Vec<ProcessorId>,
}

impl Trace {
    pub fn new(records: Vec<TransactionRecord>, layout: &TraceLayout) -> Result<Self, SimError> {
        if records.is_empty() {
            return Err(SimError::EmptyTrace);
        }
        let mut seen = HashSet::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if !seen.insert(r.id.as_str()) {
                return Err(SimError::MalformedRow {
                    row: i + 1,
                    reason: format!("duplicate id {:?}", r.id),
                });
            }
        }

        let mut all: Vec<GatewayId> = Vec::new();
        for g in layout
            .routing
            .values()
            .flatten()
            .chain(records.iter().map(|r| &r.terminal))
        {
            if !all.contains(g) {
                all.push(g.clone());
            }
        }
        let mut table = layout.routing.clone();
        table.entry(layout.default_processor.clone()).or_insert(all);
        let routing = RoutingTable::new(table)?;

        let processors = records
            .iter()
            .map(|r| {
                layout
                    .sources
                    .get(&r.source)
                    .filter(|p| routing.eligible(p).is_some())
                    .cloned()
                    .unwrap_or_else(|| layout.default_processor.clone())
            })
            .collect();
        Ok(Self {
            records,
            routing,
            processors,
        })
    }

    pub fn records(&self) -> &[TransactionRecord] {
        &self.records
    }

    pub fn routing_table(&self) -> &RoutingTable {
        &self.routing
    }

    pub fn processor_at(&self, step: usize) -> &ProcessorId {
        &self.processors[step]
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Parses the trace CSV, keeping file order.
pub fn load_records(path: &Path) -> Result<Vec<TransactionRecord>, SimError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    let mut cols = [0usize; 5];
    for (slot, name) in cols.iter_mut().zip(TRACE_COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| SimError::MissingColumn(name.to_string()))?;
    }
    let [c_id, c_amount, c_source, c_terminal, c_success] = cols;

    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row_no = i + 1;
        let malformed = |reason: String| SimError::MalformedRow {
            row: row_no,
            reason,
        };
        let row = row.map_err(|e| malformed(e.to_string()))?;
        let field = |c: usize| {
            row.get(c)
                .map(str::trim)
                .ok_or_else(|| malformed(format!("missing field {c}")))
        };

        let id = field(c_id)?;
        if id.is_empty() {
            return Err(malformed("empty id".into()));
        }
        let amount: f64 = field(c_amount)?
            .parse()
            .map_err(|_| malformed(format!("bad amount {:?}", row.get(c_amount).unwrap_or(""))))?;
        if !(amount.is_finite() && amount >= 0.0) {
            return Err(malformed(format!("amount {amount} must be non-negative")));
        }
        let terminal = field(c_terminal)?;
        if terminal.is_empty() {
            return Err(malformed("empty terminal".into()));
        }
        let success = match field(c_success)? {
            "0" => false,
            "1" => true,
            other => return Err(malformed(format!("success must be 0 or 1, got {other:?}"))),
        };
        records.push(TransactionRecord {
            id: id.to_string(),
            amount,
            source: field(c_source)?.to_string(),
            terminal: GatewayId::from(terminal),
            success,
        });
    }
    if records.is_empty() {
        return Err(SimError::EmptyTrace);
    }
    Ok(records)
}

pub fn load_trace(path: &Path, layout: &TraceLayout) -> Result<Trace, SimError> {
    Trace::new(load_records(path)?, layout)
}

pub fn write_trace(path: &Path, records: &[TransactionRecord]) -> Result<(), SimError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TRACE_COLUMNS)?;
    for r in records {
        let amount = r.amount.to_string();
        w.write_record([
            r.id.as_str(),
            amount.as_str(),
            r.source.as_str(),
            r.terminal.as_str(),
            if r.success { "1" } else { "0" },
        ])?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| std::io::Error::other(e.to_string()))?;
    fsutil::write_atomic(path, &bytes)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::fs;

    fn write(dir: &Path, body: &str) -> std::path::PathBuf {
        let p = dir.join("t.csv");
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn loads_rows_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "id,amount,source,terminal,success\n\
             a,10.5,upi,g1,1\nb,3,card,g2,0\nc,0,upi,g1,1\nd,99.99,wallet,g3,0\ne,1,card,g2,1\n",
        );
        let t = load_trace(&p, &TraceLayout::default()).unwrap();
        assert_eq!(t.len(), 5);
        let ids: Vec<&str> = t.records().iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c", "d", "e"]);
        assert_eq!(t.records()[1].amount, 3.0);
        assert!(!t.records()[1].success);
        assert_eq!(t.routing_table().gateways().len(), 3);
    }

    #[test]
    fn rejects_bad_success_value() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "id,amount,source,terminal,success\na,1,upi,g1,1\nb,1,upi,g1,2\n",
        );
        match load_records(&p) {
            Err(SimError::MalformedRow { row, .. }) => assert_eq!(row, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_column_and_empty() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "id,amount,source,success\na,1,upi,1\n");
        assert!(matches!(load_records(&p), Err(SimError::MissingColumn(c)) if c == "terminal"));
        let p = write(dir.path(), "id,amount,source,terminal,success\n");
        assert!(matches!(load_records(&p), Err(SimError::EmptyTrace)));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let rec = |id: &str| TransactionRecord {
            id: id.into(),
            amount: 1.0,
            source: "s".into(),
            terminal: "g".into(),
            success: true,
        };
        assert!(Trace::new(vec![rec("a"), rec("a")], &TraceLayout::default()).is_err());
    }

    #[test]
    fn source_mapping_and_default_processor() {
        let rec = |id: &str, source: &str, g: &str| TransactionRecord {
            id: id.into(),
            amount: 1.0,
            source: source.into(),
            terminal: g.into(),
            success: true,
        };
        let mut layout = TraceLayout::default();
        layout.sources.insert("upi".into(), "upi".into());
        layout.routing.insert("upi".into(), vec!["g1".into()]);
        let t = Trace::new(vec![rec("a", "upi", "g1"), rec("b", "card", "g2")], &layout).unwrap();
        assert_eq!(t.processor_at(0).as_str(), "upi");
        assert_eq!(t.processor_at(1).as_str(), "default");
        assert_eq!(
            t.routing_table().eligible(&"default".into()).unwrap().len(),
            2
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn write_then_load_round_trips(rows in proptest::collection::vec(
            (0u32..1_000_000, "[a-z]{1,6}", 0usize..4, any::<bool>()), 1..50)
        ) {
            let records: Vec<TransactionRecord> = rows
                .into_iter()
                .enumerate()
                .map(|(i, (cents, source, g, success))| TransactionRecord {
                    id: format!("t{i}"),
                    amount: cents as f64 / 100.0,
                    source,
                    terminal: GatewayId::new(format!("g{g}")),
                    success,
                })
                .collect();
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("rt.csv");
            write_trace(&p, &records).unwrap();
            prop_assert_eq!(load_records(&p).unwrap(), records);
        }
    }
}
