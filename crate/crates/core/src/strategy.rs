//! Acceptance rules shared by the discrete engine and the mean-field solver.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::geometry::{isqrt, StripPartition};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    /// Take whatever is proposed.
    AcceptAll,
    /// Accept when the match utility clears an age-dependent fraction of own worth.
    Reasonable,
    /// Accept exactly the partners in the same strip.
    #[serde(rename = "modified")]
    ModifiedReasonable,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 3] = [
        StrategyKind::AcceptAll,
        StrategyKind::Reasonable,
        StrategyKind::ModifiedReasonable,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            StrategyKind::AcceptAll => "accept-all",
            StrategyKind::Reasonable => "reasonable",
            StrategyKind::ModifiedReasonable => "modified",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "accept-all" => Ok(StrategyKind::AcceptAll),
            "reasonable" => Ok(StrategyKind::Reasonable),
            "modified" | "modified-reasonable" => Ok(StrategyKind::ModifiedReasonable),
            other => Err(Error::invalid(format!(
                "unknown strategy '{other}' (expected accept-all, reasonable or modified)"
            ))),
        }
    }
}

/// What an agent knows about itself or a proposed partner.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AgentView {
    pub value: u32,
    pub age: u32,
}

impl AgentView {
    pub fn new(value: u32, age: u32) -> Self {
        AgentView { value, age }
    }

    pub fn remaining(&self, lifetime: u32) -> u32 {
        lifetime - self.age
    }
}

/// Utility `self` derives from matching `partner`: the partner's value for the
/// shorter of the two remaining lifetimes.
#[inline]
pub fn match_utility(me: AgentView, partner: AgentView, lifetime: u32) -> u64 {
    partner.value as u64 * (lifetime - me.age.max(partner.age)) as u64
}

/// Minimum utility a reasonable agent accepts:
/// `value · (T − age) · (1 − 1/√T − age/T)` with real `√T`.
#[inline]
pub fn reasonable_threshold(me: AgentView, lifetime: u32) -> f64 {
    let t = lifetime as f64;
    let worth = me.value as f64 * (t - me.age as f64);
    worth * (1.0 - 1.0 / t.sqrt() - me.age as f64 / t)
}

/// Integer form of the reasonable test for perfect-square `T = s²`:
/// `u·T·s >= value·(T − age)·(T·s − T − age·s)`.
#[inline]
fn reasonable_accepts_exact(utility: u64, me: AgentView, lifetime: u32, root: u32) -> bool {
    let t = lifetime as i128;
    let s = root as i128;
    let a = me.age as i128;
    let lhs = utility as i128 * t * s;
    let rhs = me.value as i128 * (t - a) * (t * s - t - a * s);
    lhs >= rhs
}

/// The reasonable rule: exact in integers when `T` is a perfect square,
/// double precision otherwise. Ties accept.
#[inline]
pub fn reasonable_accepts(me: AgentView, partner: AgentView, lifetime: u32) -> bool {
    let utility = match_utility(me, partner, lifetime);
    let root = isqrt(lifetime);
    if root * root == lifetime {
        reasonable_accepts_exact(utility, me, lifetime, root)
    } else {
        utility as f64 >= reasonable_threshold(me, lifetime)
    }
}

/// Whether `me`, playing `kind`, accepts `partner`.
#[inline]
pub fn accepts(
    kind: StrategyKind,
    me: AgentView,
    partner: AgentView,
    part: &StripPartition,
) -> bool {
    match kind {
        StrategyKind::AcceptAll => true,
        StrategyKind::Reasonable => reasonable_accepts(me, partner, part.lifetime()),
        StrategyKind::ModifiedReasonable => {
            part.slot_of(me.value, me.age) == part.slot_of(partner.value, partner.age)
        }
    }
}

/// A proposed pair matches only when both sides accept.
#[inline]
pub fn mutually_accept(
    kind: StrategyKind,
    a: AgentView,
    b: AgentView,
    part: &StripPartition,
) -> bool {
    accepts(kind, a, b, part) && accepts(kind, b, a, part)
}
