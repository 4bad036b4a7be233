//! Reputation as a graph of transaction outcomes.
//!
//! Members are nodes; every completed transaction (or recorded violation)
//! appends edges. An edge is stamped with the counterparty's reputation at
//! the moment it is created and never recomputed, so a score is a pure fold
//! over the member's own edges:
//!
//! ```text
//! rep_0 = base
//! rep_k = clamp01(rep_{k-1} + sign_k * weight_k / (k + K))
//! ```
//!
//! The smoothing constant K damps early swings; the per-edge step makes
//! successes monotonically helpful and violations monotonically harmful
//! regardless of history. Partner weighting means rapport with reputable
//! members counts for more.
//!
//! Settlements insert symmetric success edges. Violations are one-sided:
//! only the transgressor's score is hit. Unjustified subsample rejections
//! are counted here too, with the orchestrator standing in as counterparty,
//! since no market member is the injured party.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::member::{MemberId, Tick};

/// Reserved node the marketplace itself owns; counterparty of penalty edges
/// that have no injured member.
pub const ORCHESTRATOR_ID: &str = "@orchestrator";

/// Tunables for the reputation fold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReputationParams {
    /// Score of a member with no history.
    pub base: f64,
    /// Smoothing constant K; higher means slower movement.
    pub smoothing_k: u32,
    /// Crossing strictly below this expels the member.
    pub expulsion_threshold: f64,
    /// Unjustified subsample rejections tolerated before suspension.
    pub unjustified_reject_limit: u32,
}

impl Default for ReputationParams {
    fn default() -> Self {
        ReputationParams {
            base: 0.5,
            smoothing_k: 5,
            expulsion_threshold: 0.2,
            unjustified_reject_limit: 5,
        }
    }
}

impl ReputationParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.base > 0.0 && self.base < 1.0) {
            return Err(Error::ConfigError {
                path: "params.reputation.base".into(),
                message: alloc::format!("base {} outside (0, 1)", self.base),
            });
        }
        if !(self.expulsion_threshold > 0.0 && self.expulsion_threshold < self.base) {
            return Err(Error::ConfigError {
                path: "params.reputation.expulsion_threshold".into(),
                message: alloc::format!(
                    "expulsion threshold {} outside (0, base)",
                    self.expulsion_threshold
                ),
            });
        }
        if self.smoothing_k == 0 {
            return Err(Error::ConfigError {
                path: "params.reputation.smoothing_k".into(),
                message: "smoothing constant must be positive".into(),
            });
        }
        Ok(())
    }
}

/// One directed outcome record. `partner_rep_at_time` is frozen at creation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeEdge {
    pub from: MemberId,
    pub to: MemberId,
    /// +1 success, -1 violation.
    pub sign: i8,
    pub partner_rep_at_time: f64,
    pub tick: Tick,
}

/// The outcome of noting a subsample rejection.
#[derive(Debug, Clone, PartialEq)]
pub struct RejectNote {
    /// (old, new) score when a penalty edge was applied.
    pub score_change: Option<(f64, f64)>,
    pub unjustified_count: u32,
    /// True exactly when this rejection reached the configured limit.
    pub suspend_now: bool,
}

/// Graph of members and outcome edges, plus the unjustified-reject counters.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ReputationLedger {
    nodes: BTreeSet<MemberId>,
    edges: Vec<OutcomeEdge>,
    /// Indices into `edges` owned by each member, in insertion order.
    by_owner: BTreeMap<MemberId, Vec<usize>>,
    unjustified_rejects: BTreeMap<MemberId, u32>,
}

impl ReputationLedger {
    /// Empty ledger with the orchestrator node pre-registered.
    pub fn new() -> Self {
        let mut ledger = ReputationLedger::default();
        ledger.add_member(MemberId::new(ORCHESTRATOR_ID));
        ledger
    }

    /// Registers a node. Idempotent.
    pub fn add_member(&mut self, member: MemberId) {
        self.nodes.insert(member);
    }

    pub fn contains(&self, member: &MemberId) -> bool {
        self.nodes.contains(member)
    }

    pub fn edges(&self) -> &[OutcomeEdge] {
        &self.edges
    }

    pub fn unjustified_rejects(&self, member: &MemberId) -> u32 {
        self.unjustified_rejects.get(member).copied().unwrap_or(0)
    }

    /// Current score: the clamped fold over the member's own edges.
    pub fn reputation_of(&self, member: &MemberId, params: &ReputationParams) -> Result<f64> {
        if !self.contains(member) {
            return Err(Error::UnknownMember(member.0.clone()));
        }
        let mut rep = params.base;
        if let Some(owned) = self.by_owner.get(member) {
            for (ordinal, &idx) in owned.iter().enumerate() {
                let e = &self.edges[idx];
                let k = (ordinal + 1) as f64 + f64::from(params.smoothing_k);
                rep = math::clamp01(rep + f64::from(e.sign) * e.partner_rep_at_time / k);
            }
        }
        Ok(rep)
    }

    fn push_edge(&mut self, edge: OutcomeEdge) {
        let idx = self.edges.len();
        self.by_owner
            .entry(edge.from.clone())
            .or_default()
            .push(idx);
        self.edges.push(edge);
    }

    /// Number of edges already owned by `member`.
    pub fn edge_count_of(&self, member: &MemberId) -> usize {
        self.by_owner.get(member).map_or(0, |v| v.len())
    }

    /// One fold step: the score after appending an edge with this sign and
    /// weight as the member's `ordinal`-th edge (0-based).
    fn fold_step(old: f64, sign: i8, weight: f64, ordinal: usize, params: &ReputationParams) -> f64 {
        let k = (ordinal + 1) as f64 + f64::from(params.smoothing_k);
        math::clamp01(old + f64::from(sign) * weight / k)
    }

    /// What recording an edge would do, without recording it. Returns
    /// (old score, new score, frozen counterparty weight).
    pub fn preview_edge(
        &self,
        member: &MemberId,
        counterparty: &MemberId,
        sign: i8,
        params: &ReputationParams,
    ) -> Result<(f64, f64, f64)> {
        if member == counterparty {
            return Err(Error::SelfTransaction(member.0.clone()));
        }
        let old = self.reputation_of(member, params)?;
        let weight = self.reputation_of(counterparty, params)?;
        let new = Self::fold_step(old, sign, weight, self.edge_count_of(member), params);
        Ok((old, new, weight))
    }

    /// Inserts an edge with an already-frozen weight. This is the only
    /// mutation under event replay, where the weight comes from the event
    /// payload instead of being recomputed.
    pub fn apply_edge(
        &mut self,
        member: MemberId,
        counterparty: MemberId,
        sign: i8,
        weight: f64,
        tick: Tick,
    ) {
        self.add_member(member.clone());
        self.add_member(counterparty.clone());
        self.push_edge(OutcomeEdge {
            from: member,
            to: counterparty,
            sign,
            partner_rep_at_time: weight,
            tick,
        });
    }

    /// Bumps the unjustified-reject counter; returns the new count.
    pub fn apply_unjustified_reject(&mut self, member: &MemberId) -> u32 {
        let count = self.unjustified_rejects(member) + 1;
        self.unjustified_rejects.insert(member.clone(), count);
        count
    }

    /// Inserts one edge owned by `member`, weighted by the counterparty's
    /// current score. Returns the member's (old, new) scores.
    pub fn record_edge(
        &mut self,
        member: &MemberId,
        counterparty: &MemberId,
        sign: i8,
        tick: Tick,
        params: &ReputationParams,
    ) -> Result<(f64, f64)> {
        if !self.contains(counterparty) {
            return Err(Error::UnknownMember(counterparty.0.clone()));
        }
        let (old, new, weight) = self.preview_edge(member, counterparty, sign, params)?;
        self.apply_edge(member.clone(), counterparty.clone(), sign, weight, tick);
        Ok((old, new))
    }

    /// Settlement outcome: symmetric edges, both weights read before either
    /// insertion. Returns ((old, new) for a, (old, new) for b).
    pub fn record_outcome(
        &mut self,
        a: &MemberId,
        b: &MemberId,
        sign: i8,
        tick: Tick,
        params: &ReputationParams,
    ) -> Result<((f64, f64), (f64, f64))> {
        let (old_a, new_a, weight_a) = self.preview_edge(a, b, sign, params)?;
        let (old_b, new_b, weight_b) = self.preview_edge(b, a, sign, params)?;
        self.apply_edge(a.clone(), b.clone(), sign, weight_a, tick);
        self.apply_edge(b.clone(), a.clone(), sign, weight_b, tick);
        Ok(((old_a, new_a), (old_b, new_b)))
    }

    /// Books a subsample rejection against a buyer.
    ///
    /// A justified rejection (the subsample really failed validation) is
    /// free. An unjustified one counts toward suspension and costs a
    /// violation edge against the orchestrator.
    pub fn note_subsample_reject(
        &mut self,
        buyer: &MemberId,
        justified: bool,
        tick: Tick,
        params: &ReputationParams,
    ) -> Result<RejectNote> {
        if !self.contains(buyer) {
            return Err(Error::UnknownMember(buyer.0.clone()));
        }
        if justified {
            return Ok(RejectNote {
                score_change: None,
                unjustified_count: self.unjustified_rejects(buyer),
                suspend_now: false,
            });
        }
        let count = self.unjustified_rejects(buyer) + 1;
        self.unjustified_rejects.insert(buyer.clone(), count);
        let orchestrator = MemberId::new(ORCHESTRATOR_ID);
        let change = self.record_edge(buyer, &orchestrator, -1, tick, params)?;
        Ok(RejectNote {
            score_change: Some(change),
            unjustified_count: count,
            suspend_now: count == params.unjustified_reject_limit,
        })
    }
}
