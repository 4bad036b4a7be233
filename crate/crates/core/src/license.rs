//! Machine-readable license terms and the compliance engine.
//!
//! A listing carries a [`LicenseTemplate`]; settlement turns it into a
//! [`License`] binding a seller and a buyer from a grant tick. Terms are
//! licensee-facing: they constrain what the buyer may do. The licensor is
//! bound by exactly one rule, checked separately: while an exclusive license
//! is active, no second license over the same (seller, category) may be
//! granted. A finite lifespan expires on its own; there is no revocation.
//! A perpetual exclusive grant is how an outright sale is expressed.

use alloc::collections::BTreeSet;
use alloc::string::String;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::member::{MemberId, Tick};

/// What a buyer intends to do with the data.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum Purpose {
    ProductOptimization,
    MarketingAnalytics,
    ResearchAggregate,
    Resale,
    ThirdPartyInference,
}

impl Purpose {
    pub const ALL: [Purpose; 5] = [
        Purpose::ProductOptimization,
        Purpose::MarketingAnalytics,
        Purpose::ResearchAggregate,
        Purpose::Resale,
        Purpose::ThirdPartyInference,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Purpose::ProductOptimization => "product_optimization",
            Purpose::MarketingAnalytics => "marketing_analytics",
            Purpose::ResearchAggregate => "research_aggregate",
            Purpose::Resale => "resale",
            Purpose::ThirdPartyInference => "third_party_inference",
        }
    }
}

impl fmt::Display for Purpose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// License duration in ticks, or no expiry at all.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lifespan {
    Ticks(u64),
    Perpetual,
}

impl Lifespan {
    /// True when `self` grants at least as long an access window.
    pub fn covers(&self, required: &Lifespan) -> bool {
        match (self, required) {
            (Lifespan::Perpetual, _) => true,
            (Lifespan::Ticks(_), Lifespan::Perpetual) => false,
            (Lifespan::Ticks(own), Lifespan::Ticks(req)) => own >= req,
        }
    }
}

/// Terms attached to a listing before anyone has bought it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LicenseTemplate {
    pub exclusive: bool,
    pub lifespan: Lifespan,
    pub permitted_uses: BTreeSet<Purpose>,
    pub resale_allowed: bool,
    pub third_party_extraction_allowed: bool,
}

impl LicenseTemplate {
    /// Builds a template whose purpose set is consistent with its flags:
    /// `Resale` is in the set iff resale is allowed, `ThirdPartyInference`
    /// iff extraction is allowed. Flag-bearing purposes in `base_uses` are
    /// ignored in favor of the flags.
    pub fn new(
        exclusive: bool,
        lifespan: Lifespan,
        base_uses: impl IntoIterator<Item = Purpose>,
        resale_allowed: bool,
        third_party_extraction_allowed: bool,
    ) -> Self {
        let mut permitted_uses: BTreeSet<Purpose> = base_uses
            .into_iter()
            .filter(|p| !matches!(p, Purpose::Resale | Purpose::ThirdPartyInference))
            .collect();
        if resale_allowed {
            permitted_uses.insert(Purpose::Resale);
        }
        if third_party_extraction_allowed {
            permitted_uses.insert(Purpose::ThirdPartyInference);
        }
        LicenseTemplate {
            exclusive,
            lifespan,
            permitted_uses,
            resale_allowed,
            third_party_extraction_allowed,
        }
    }
}

/// A granted license: template terms bound to parties, a category, and time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct License {
    pub id: String,
    pub seller: MemberId,
    pub buyer: MemberId,
    /// Scope of the exclusivity rule.
    pub category: String,
    pub terms: LicenseTemplate,
    /// None until settlement grants the license.
    pub granted_at: Option<Tick>,
}

impl License {
    pub fn grant(
        id: impl Into<String>,
        seller: MemberId,
        buyer: MemberId,
        category: impl Into<String>,
        terms: LicenseTemplate,
        granted_at: Tick,
    ) -> Self {
        License {
            id: id.into(),
            seller,
            buyer,
            category: category.into(),
            terms,
            granted_at: Some(granted_at),
        }
    }
}

/// Everything the compliance engine rules on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub actor: MemberId,
    pub purpose: Purpose,
    pub tick: Tick,
}

/// Named clause breaches, in precedence order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ViolationKind {
    Expired,
    ProhibitedResale,
    ThirdPartyExtraction,
    UnpermittedPurpose,
    SellerDoubleSale,
}

impl ViolationKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ViolationKind::Expired => "Expired",
            ViolationKind::ProhibitedResale => "ProhibitedResale",
            ViolationKind::ThirdPartyExtraction => "ThirdPartyExtraction",
            ViolationKind::UnpermittedPurpose => "UnpermittedPurpose",
            ViolationKind::SellerDoubleSale => "SellerDoubleSale",
        }
    }
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Outcome of a compliance check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", content = "violation")]
pub enum ComplianceVerdict {
    Compliant,
    Violation(ViolationKind),
}

impl ComplianceVerdict {
    pub fn is_compliant(&self) -> bool {
        matches!(self, ComplianceVerdict::Compliant)
    }
}

/// Whether the license grants access at `now`.
///
/// A finite lifespan is exclusive at its upper boundary: granted at 100 for
/// 100 ticks means active through 199 and expired at 200.
///
/// # Errors
///
/// `NotYetGranted` when the license was never granted.
pub fn is_active(license: &License, now: Tick) -> Result<bool> {
    let granted = license.granted_at.ok_or(Error::NotYetGranted)?;
    if now < granted {
        return Ok(false);
    }
    Ok(match license.terms.lifespan {
        Lifespan::Perpetual => true,
        Lifespan::Ticks(d) => now < granted.saturating_add(d),
    })
}

/// Rules on one action under one license.
///
/// Clause precedence when several are breached at once: expiry, then the
/// resale flag, then the extraction flag, then purpose membership. The
/// licensor's own actions are not constrained by the terms and come back
/// Compliant while the license stands.
///
/// # Errors
///
/// `UnrelatedActor` when the actor is neither party; `NotYetGranted` when
/// the license has no grant tick.
pub fn check_action(license: &License, action: &Action) -> Result<ComplianceVerdict> {
    if action.actor != license.buyer && action.actor != license.seller {
        return Err(Error::UnrelatedActor(action.actor.0.clone()));
    }
    if !is_active(license, action.tick)? {
        return Ok(ComplianceVerdict::Violation(ViolationKind::Expired));
    }
    if action.actor == license.seller {
        return Ok(ComplianceVerdict::Compliant);
    }
    if action.purpose == Purpose::Resale && !license.terms.resale_allowed {
        return Ok(ComplianceVerdict::Violation(ViolationKind::ProhibitedResale));
    }
    if action.purpose == Purpose::ThirdPartyInference
        && !license.terms.third_party_extraction_allowed
    {
        return Ok(ComplianceVerdict::Violation(
            ViolationKind::ThirdPartyExtraction,
        ));
    }
    if !license.terms.permitted_uses.contains(&action.purpose) {
        return Ok(ComplianceVerdict::Violation(
            ViolationKind::UnpermittedPurpose,
        ));
    }
    Ok(ComplianceVerdict::Compliant)
}

/// Licensor-side rivalry rule: granting a new license over `(seller,
/// category)` is a double sale while any exclusive license there is active.
pub fn check_seller_double_sale<'a>(
    active_licenses: impl IntoIterator<Item = &'a License>,
    seller: &MemberId,
    category: &str,
    now: Tick,
) -> Result<ComplianceVerdict> {
    for l in active_licenses {
        if l.seller == *seller
            && l.category == category
            && l.terms.exclusive
            && is_active(l, now)?
        {
            return Ok(ComplianceVerdict::Violation(ViolationKind::SellerDoubleSale));
        }
    }
    Ok(ComplianceVerdict::Compliant)
}
