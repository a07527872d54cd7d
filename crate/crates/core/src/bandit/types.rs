use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::BanditError;

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_string())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }

        impl std::borrow::Borrow<str> for $name {
            fn borrow(&self) -> &str {
                &self.0
            }
        }
    };
}

string_id!(
    /// A downstream payment gateway: one bandit arm.
    GatewayId
);
string_id!(
    /// The customer-chosen payment processor; decides which gateways are eligible.
    ProcessorId
);

/// Eligible gateways per processor.
///
/// Gateway sets keep their configured order; that order is what the
/// rule-based baseline falls back to when no explicit priority is given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    try_from = "BTreeMap<ProcessorId, Vec<GatewayId>>",
    into = "BTreeMap<ProcessorId, Vec<GatewayId>>"
)]
pub struct RoutingTable {
    eligible: BTreeMap<ProcessorId, Vec<GatewayId>>,
    gateways: Vec<GatewayId>,
}

impl RoutingTable {
    pub fn new(eligible: BTreeMap<ProcessorId, Vec<GatewayId>>) -> Result<Self, BanditError> {
        if eligible.is_empty() {
            return Err(BanditError::InvalidRoutingTable("no processors".into()));
        }
        let mut gateways = Vec::new();
        let mut seen = BTreeSet::new();
        for (processor, set) in &eligible {
            if processor.as_str().is_empty() {
                return Err(BanditError::InvalidRoutingTable(
                    "empty processor id".into(),
                ));
            }
            if set.is_empty() {
                return Err(BanditError::InvalidRoutingTable(format!(
                    "processor {processor} has no eligible gateways"
                )));
            }
            let mut local = BTreeSet::new();
            for g in set {
                if g.as_str().is_empty() {
                    return Err(BanditError::InvalidRoutingTable("empty gateway id".into()));
                }
                if !local.insert(g) {
                    return Err(BanditError::InvalidRoutingTable(format!(
                        "gateway {g} listed twice for processor {processor}"
                    )));
                }
                if seen.insert(g.clone()) {
                    gateways.push(g.clone());
                }
            }
        }
        Ok(Self { eligible, gateways })
    }

    /// A table with one processor that may use every listed gateway.
    pub fn single(
        processor: impl Into<ProcessorId>,
        gateways: Vec<GatewayId>,
    ) -> Result<Self, BanditError> {
        let mut map = BTreeMap::new();
        map.insert(processor.into(), gateways);
        Self::new(map)
    }

    pub fn eligible(&self, processor: &ProcessorId) -> Option<&[GatewayId]> {
        self.eligible.get(processor).map(Vec::as_slice)
    }

    /// All gateways, in first-appearance order.
    pub fn gateways(&self) -> &[GatewayId] {
        &self.gateways
    }

    pub fn processors(&self) -> impl Iterator<Item = (&ProcessorId, &[GatewayId])> {
        self.eligible.iter().map(|(p, g)| (p, g.as_slice()))
    }

    pub fn contains_gateway(&self, gateway: &GatewayId) -> bool {
        self.gateways.contains(gateway)
    }

    pub fn max_eligible_len(&self) -> usize {
        self.eligible.values().map(Vec::len).max().unwrap_or(0)
    }
}

impl TryFrom<BTreeMap<ProcessorId, Vec<GatewayId>>> for RoutingTable {
    type Error = BanditError;

    fn try_from(value: BTreeMap<ProcessorId, Vec<GatewayId>>) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<RoutingTable> for BTreeMap<ProcessorId, Vec<GatewayId>> {
    fn from(value: RoutingTable) -> Self {
        value.eligible
    }
}
