//! Marketplace membership: identities, roles, and standing.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

/// Discrete simulation time. Tick 0 is the scenario start.
pub type Tick = u64;

/// Opaque member identity. Ordering is lexicographic and drives every
/// deterministic iteration over members.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MemberId(pub String);

impl MemberId {
    pub fn new(id: impl Into<String>) -> Self {
        MemberId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for MemberId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for MemberId {
    fn from(s: &str) -> Self {
        MemberId::new(s)
    }
}

/// What a member is allowed to do. A member may hold both roles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Seller,
    Buyer,
}

/// Whether a buyer may still demand subsamples before committing.
///
/// Suspension is one-way: it is the penalty for repeatedly rejecting
/// subsamples that passed validation, and nothing in the model restores it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubsamplePrivilege {
    Active,
    Suspended,
}

/// A marketplace participant as the ledger sees it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Member {
    pub id: MemberId,
    pub roles: Vec<Role>,
    pub joined_at: Tick,
    pub subsample_privilege: SubsamplePrivilege,
    /// Expelled members keep their history but can initiate nothing new.
    pub expelled: bool,
}

impl Member {
    pub fn new(id: MemberId, roles: Vec<Role>, joined_at: Tick) -> Self {
        Member {
            id,
            roles,
            joined_at,
            subsample_privilege: SubsamplePrivilege::Active,
            expelled: false,
        }
    }

    pub fn is_seller(&self) -> bool {
        self.roles.contains(&Role::Seller)
    }

    pub fn is_buyer(&self) -> bool {
        self.roles.contains(&Role::Buyer)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn dual_role_member_buys_and_sells() {
        let m = Member::new("m1".into(), vec![Role::Seller, Role::Buyer], 3);
        assert!(m.is_seller());
        assert!(m.is_buyer());
        assert_eq!(m.joined_at, 3);
        assert_eq!(m.subsample_privilege, SubsamplePrivilege::Active);
        assert!(!m.expelled);
    }

    #[test]
    fn member_ids_order_lexicographically() {
        let a = MemberId::new("buyer-01");
        let b = MemberId::new("buyer-02");
        assert!(a < b);
        assert_eq!(a.as_str(), "buyer-01");
    }
}
