use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::ServiceError;

pub const DEFAULT_TTL_MS: u64 = 120_000;
pub const DEFAULT_CAPACITY: usize = 1_000_000;

/// A routed transaction waiting for its reward.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingEntry {
    pub txn_id: String,
    pub arm: usize,
    pub gateway: usize,
    pub routed_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Closed {
    Rewarded,
    Expired,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RewardMatch {
    /// Within TTL: apply to the arm's policy.
    Apply(PendingEntry),
    /// Past TTL or already expired: count only.
    Late,
}

/// Pending decisions keyed by txn id, plus a bounded memory of closed ids
/// so duplicate routes and rewards are rejected.
///
/// Entries past TTL stay until swept or rewarded; capacity overflow evicts
/// the oldest entry and counts it as expired.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "PendingRepr", into = "PendingRepr")]
pub struct PendingTable {
    ttl_ms: u64,
    capacity: usize,
    next_seq: u64,
    expired: u64,
    live: HashMap<String, (u64, PendingEntry)>,
    order: VecDeque<(u64, String)>,
    closed: HashMap<String, Closed>,
    closed_order: VecDeque<String>,
}

impl PendingTable {
    pub fn new(ttl_ms: u64, capacity: usize) -> Self {
        Self {
            ttl_ms,
            capacity: capacity.max(1),
            next_seq: 0,
            expired: 0,
            live: HashMap::new(),
            order: VecDeque::new(),
            closed: HashMap::new(),
            closed_order: VecDeque::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.live.len()
    }

    pub fn is_empty(&self) -> bool {
        self.live.is_empty()
    }

    /// Entries that timed out or were evicted before a reward arrived.
    pub fn expired(&self) -> u64 {
        self.expired
    }

    pub fn get(&self, txn_id: &str) -> Option<&PendingEntry> {
        self.live.get(txn_id).map(|(_, e)| e)
    }

    pub fn contains(&self, txn_id: &str) -> bool {
        self.live.contains_key(txn_id) || self.closed.contains_key(txn_id)
    }

    fn close(&mut self, txn_id: String, how: Closed) {
        if self.closed.insert(txn_id.clone(), how).is_none() {
            self.closed_order.push_back(txn_id);
            if self.closed_order.len() > self.capacity {
                if let Some(old) = self.closed_order.pop_front() {
                    self.closed.remove(&old);
                }
            }
        }
    }

    fn pop_oldest(&mut self, only_if_older_than: Option<u64>) -> bool {
        while let Some((seq, id)) = self.order.front() {
            let fresh = matches!(self.live.get(id), Some((s, _)) if s == seq);
            if !fresh {
                self.order.pop_front();
                continue;
            }
            if let Some(now) = only_if_older_than {
                let routed = self.live[id].1.routed_ms;
                if now.saturating_sub(routed) <= self.ttl_ms {
                    return false;
                }
            }
            let (_, id) = self.order.pop_front().expect("front exists");
            self.live.remove(&id);
            self.expired += 1;
            self.close(id, Closed::Expired);
            return true;
        }
        false
    }

    /// Moves entries older than TTL to the closed set.
    pub fn sweep(&mut self, now_ms: u64) {
        while self.pop_oldest(Some(now_ms)) {}
    }

    pub fn insert(&mut self, entry: PendingEntry, now_ms: u64) -> Result<(), ServiceError> {
        if self.contains(&entry.txn_id) {
            return Err(ServiceError::DuplicateTxnId(entry.txn_id));
        }
        self.sweep(now_ms);
        while self.live.len() >= self.capacity {
            self.pop_oldest(None);
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.order.push_back((seq, entry.txn_id.clone()));
        self.live.insert(entry.txn_id.clone(), (seq, entry));
        Ok(())
    }

    pub fn take(&mut self, txn_id: &str, now_ms: u64) -> Result<RewardMatch, ServiceError> {
        if let Some((_, entry)) = self.live.remove(txn_id) {
            let late = now_ms.saturating_sub(entry.routed_ms) > self.ttl_ms;
            if late {
                self.expired += 1;
            }
            self.close(txn_id.to_string(), Closed::Rewarded);
            return Ok(if late {
                RewardMatch::Late
            } else {
                RewardMatch::Apply(entry)
            });
        }
        match self.closed.get_mut(txn_id) {
            Some(c @ Closed::Expired) => {
                *c = Closed::Rewarded;
                Ok(RewardMatch::Late)
            }
            Some(Closed::Rewarded) => Err(ServiceError::DuplicateReward(txn_id.to_string())),
            None => Err(ServiceError::UnknownTxn(txn_id.to_string())),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct PendingRepr {
    ttl_ms: u64,
    capacity: usize,
    next_seq: u64,
    expired: u64,
    live: Vec<(u64, PendingEntry)>,
    closed: Vec<(String, Closed)>,
}

impl From<PendingTable> for PendingRepr {
    fn from(mut t: PendingTable) -> Self {
        let live = t
            .order
            .iter()
            .filter_map(|(seq, id)| match t.live.remove(id) {
                Some((s, e)) if s == *seq => Some((s, e)),
                Some(other) => {
                    t.live.insert(id.clone(), other);
                    None
                }
                None => None,
            })
            .collect();
        let closed = t
            .closed_order
            .iter()
            .map(|id| (id.clone(), t.closed[id]))
            .collect();
        Self {
            ttl_ms: t.ttl_ms,
            capacity: t.capacity,
            next_seq: t.next_seq,
            expired: t.expired,
            live,
            closed,
        }
    }
}

impl From<PendingRepr> for PendingTable {
    fn from(r: PendingRepr) -> Self {
        let mut t = PendingTable::new(r.ttl_ms, r.capacity);
        t.next_seq = r.next_seq;
        t.expired = r.expired;
        for (seq, e) in r.live {
            t.order.push_back((seq, e.txn_id.clone()));
            t.live.insert(e.txn_id.clone(), (seq, e));
        }
        for (id, c) in r.closed {
            t.closed_order.push_back(id.clone());
            t.closed.insert(id, c);
        }
        t
    }
}
