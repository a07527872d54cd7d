use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{BanditError, GatewayId, RoutingTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    EpsilonGreedy,
    SwUcb,
    SwBg,
    DUcb,
    DBg,
    DiscountedThompson,
    RuleBased,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 7] = [
        PolicyKind::EpsilonGreedy,
        PolicyKind::SwUcb,
        PolicyKind::SwBg,
        PolicyKind::DUcb,
        PolicyKind::DBg,
        PolicyKind::DiscountedThompson,
        PolicyKind::RuleBased,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::EpsilonGreedy => "epsilon_greedy",
            PolicyKind::SwUcb => "sw_ucb",
            PolicyKind::SwBg => "sw_bg",
            PolicyKind::DUcb => "d_ucb",
            PolicyKind::DBg => "d_bg",
            PolicyKind::DiscountedThompson => "discounted_thompson",
            PolicyKind::RuleBased => "rule_based",
        }
    }

    pub fn uses_window(self) -> bool {
        matches!(
            self,
            PolicyKind::EpsilonGreedy | PolicyKind::SwUcb | PolicyKind::SwBg
        )
    }

    pub fn uses_discount(self) -> bool {
        matches!(
            self,
            PolicyKind::DUcb | PolicyKind::DBg | PolicyKind::DiscountedThompson
        )
    }

    pub fn uses_c1(self) -> bool {
        matches!(
            self,
            PolicyKind::SwUcb | PolicyKind::SwBg | PolicyKind::DUcb | PolicyKind::DBg
        )
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyKind {
    type Err = BanditError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PolicyKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| BanditError::InvalidConfig(format!("unknown policy kind {s:?}")))
    }
}

/// Algorithm kind plus its hyperparameters.
///
/// A hyperparameter must be present exactly when the kind uses it, except
/// `c1` and the Thompson priors which default to 1.0 when omitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discount: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub priority: Option<Vec<GatewayId>>,
    #[serde(default)]
    pub seed: u64,
}

impl PolicyConfig {
    fn bare(kind: PolicyKind) -> Self {
        Self {
            kind,
            window: None,
            discount: None,
            c1: None,
            epsilon: None,
            lambda0: None,
            gamma0: None,
            priority: None,
            seed: 0,
        }
    }

    pub fn epsilon_greedy(window: usize, epsilon: f64) -> Self {
        Self {
            window: Some(window),
            epsilon: Some(epsilon),
            ..Self::bare(PolicyKind::EpsilonGreedy)
        }
    }

    pub fn sw_ucb(window: usize, c1: f64) -> Self {
        Self {
            window: Some(window),
            c1: Some(c1),
            ..Self::bare(PolicyKind::SwUcb)
        }
    }

    pub fn sw_bg(window: usize, c1: f64) -> Self {
        Self {
            window: Some(window),
            c1: Some(c1),
            ..Self::bare(PolicyKind::SwBg)
        }
    }

    pub fn d_ucb(discount: f64, c1: f64) -> Self {
        Self {
            discount: Some(discount),
            c1: Some(c1),
            ..Self::bare(PolicyKind::DUcb)
        }
    }

    pub fn d_bg(discount: f64, c1: f64) -> Self {
        Self {
            discount: Some(discount),
            c1: Some(c1),
            ..Self::bare(PolicyKind::DBg)
        }
    }

    pub fn discounted_thompson(discount: f64) -> Self {
        Self {
            discount: Some(discount),
            ..Self::bare(PolicyKind::DiscountedThompson)
        }
    }

    pub fn rule_based(priority: Option<Vec<GatewayId>>) -> Self {
        Self {
            priority,
            ..Self::bare(PolicyKind::RuleBased)
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_priors(mut self, lambda0: f64, gamma0: f64) -> Self {
        self.lambda0 = Some(lambda0);
        self.gamma0 = Some(gamma0);
        self
    }

    pub fn window_len(&self) -> usize {
        self.window.unwrap_or(usize::MAX)
    }

    pub fn discount_factor(&self) -> f64 {
        self.discount.unwrap_or(1.0)
    }

    pub fn exploration(&self) -> f64 {
        self.c1.unwrap_or(1.0)
    }

    pub fn priors(&self) -> (f64, f64) {
        (self.lambda0.unwrap_or(1.0), self.gamma0.unwrap_or(1.0))
    }

    /// Checks presence and range of every hyperparameter for this kind.
    pub fn validate(&self) -> Result<(), BanditError> {
        let kind = self.kind;
        let bad = |msg: String| Err(BanditError::InvalidConfig(format!("{kind}: {msg}")));

        match (kind.uses_window(), self.window) {
            (true, None) => return bad("window is required".into()),
            (false, Some(_)) => return bad("window is not used by this kind".into()),
            (true, Some(0)) => return bad("window must be positive".into()),
            _ => {}
        }
        match (kind.uses_discount(), self.discount) {
            (true, None) => return bad("discount is required".into()),
            (false, Some(_)) => return bad("discount is not used by this kind".into()),
            (true, Some(a)) if !(a > 0.0 && a <= 1.0) => {
                return bad(format!("discount {a} outside (0, 1]"))
            }
            _ => {}
        }
        match (kind.uses_c1(), self.c1) {
            (false, Some(_)) => return bad("c1 is not used by this kind".into()),
            (true, Some(c)) if !(c >= 0.0 && c.is_finite()) => {
                return bad(format!("c1 {c} must be a finite non-negative number"))
            }
            _ => {}
        }
        let is_eps = kind == PolicyKind::EpsilonGreedy;
        match (is_eps, self.epsilon) {
            (true, None) => return bad("epsilon is required".into()),
            (false, Some(_)) => return bad("epsilon is not used by this kind".into()),
            (true, Some(e)) if !(0.0..=1.0).contains(&e) => {
                return bad(format!("epsilon {e} outside [0, 1]"))
            }
            _ => {}
        }
        let is_ts = kind == PolicyKind::DiscountedThompson;
        for (name, v) in [("lambda0", self.lambda0), ("gamma0", self.gamma0)] {
            match (is_ts, v) {
                (false, Some(_)) => return bad(format!("{name} is not used by this kind")),
                (true, Some(p)) if !(p > 0.0 && p.is_finite()) => {
                    return bad(format!("{name} {p} must be positive"))
                }
                _ => {}
            }
        }
        if kind != PolicyKind::RuleBased && self.priority.is_some() {
            return bad("priority is only used by rule_based".into());
        }
        Ok(())
    }

    /// [`validate`](Self::validate) plus the per-table epsilon bound.
    pub fn validate_for(&self, table: &RoutingTable) -> Result<(), BanditError> {
        self.validate()?;
        if let Some(eps) = self.epsilon {
            let set_size = table.max_eligible_len();
            if set_size > 0 && eps * set_size as f64 > 1.0 + 1e-12 {
                return Err(BanditError::EpsilonTooLarge {
                    epsilon: eps,
                    set_size,
                });
            }
        }
        if let Some(priority) = &self.priority {
            if let Some(g) = priority.iter().find(|g| !table.contains_gateway(g)) {
                return Err(BanditError::UnknownGateway(g.clone()));
            }
        }
        Ok(())
    }

    /// Hyperparameters as `key=value` pairs joined by `;`.
    pub fn params(&self) -> String {
        let mut parts = Vec::new();
        if let Some(w) = self.window {
            parts.push(format!("window={w}"));
        }
        if let Some(a) = self.discount {
            parts.push(format!("discount={a}"));
        }
        if let Some(c) = self.c1 {
            parts.push(format!("c1={c}"));
        }
        if let Some(e) = self.epsilon {
            parts.push(format!("epsilon={e}"));
        }
        if let Some(l) = self.lambda0 {
            parts.push(format!("lambda0={l}"));
        }
        if let Some(g) = self.gamma0 {
            parts.push(format!("gamma0={g}"));
        }
        if let Some(p) = &self.priority {
            let names: Vec<&str> = p.iter().map(GatewayId::as_str).collect();
            parts.push(format!("priority={}", names.join(">")));
        }
        parts.join(";")
    }

    /// Short human label, e.g. `sw_ucb[window=200;c1=1]`. Contains no commas.
    pub fn label(&self) -> String {
        let params = self.params();
        if params.is_empty() {
            self.kind.to_string()
        } else {
            format!("{}[{}]", self.kind, params)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constructors_validate() {
        for cfg in [
            PolicyConfig::epsilon_greedy(200, 0.2),
            PolicyConfig::sw_ucb(200, 1.0),
            PolicyConfig::sw_bg(200, 1.0),
            PolicyConfig::d_ucb(0.6, 1.0),
            PolicyConfig::d_bg(0.6, 1.0),
            PolicyConfig::discounted_thompson(0.6),
            PolicyConfig::rule_based(None),
        ] {
            cfg.validate().unwrap();
        }
    }

    #[test]
    fn missing_and_extra_hyperparameters() {
        let mut c = PolicyConfig::sw_ucb(200, 1.0);
        c.window = None;
        assert!(c.validate().is_err());
        let mut c = PolicyConfig::sw_ucb(200, 1.0);
        c.discount = Some(0.5);
        assert!(c.validate().is_err());
        let mut c = PolicyConfig::d_ucb(0.0, 1.0);
        assert!(c.validate().is_err());
        c.discount = Some(1.0);
        c.validate().unwrap();
        c.c1 = None;
        c.validate().unwrap();
        assert_eq!(c.exploration(), 1.0);
        let c = PolicyConfig::discounted_thompson(0.9).with_priors(0.0, 1.0);
        assert!(c.validate().is_err());
    }

    #[test]
    fn epsilon_bound_uses_largest_set() {
        let table = RoutingTable::single(
            "p",
            ["a", "b", "c"].into_iter().map(GatewayId::from).collect(),
        )
        .unwrap();
        PolicyConfig::epsilon_greedy(10, 0.2)
            .validate_for(&table)
            .unwrap();
        PolicyConfig::epsilon_greedy(10, 1.0 / 3.0)
            .validate_for(&table)
            .unwrap();
        assert_eq!(
            PolicyConfig::epsilon_greedy(10, 0.4).validate_for(&table),
            Err(BanditError::EpsilonTooLarge {
                epsilon: 0.4,
                set_size: 3
            })
        );
    }

    #[test]
    fn json_shape() {
        let c = PolicyConfig::sw_ucb(200, 1.0).with_seed(7);
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(s, r#"{"kind":"sw_ucb","window":200,"c1":1.0,"seed":7}"#);
        assert_eq!(serde_json::from_str::<PolicyConfig>(&s).unwrap(), c);
        assert!(serde_json::from_str::<PolicyConfig>(r#"{"kind":"sw_ucb","windw":3}"#).is_err());
    }

    #[test]
    fn labels_have_no_commas() {
        let c = PolicyConfig::rule_based(Some(vec!["a".into(), "b".into()]));
        assert_eq!(c.label(), "rule_based[priority=a>b]");
        assert_eq!(
            PolicyConfig::d_bg(0.6, 0.5).label(),
            "d_bg[discount=0.6;c1=0.5]"
        );
    }

    #[test]
    fn kind_round_trips_through_str() {
        for k in PolicyKind::ALL {
            assert_eq!(k.as_str().parse::<PolicyKind>().unwrap(), k);
        }
    }
}
