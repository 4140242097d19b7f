//! Negotiation domains, bids, additive utility profiles and the normalized
//! two-party utility space.
//!
//! A [`Domain`] is an ordered list of discrete issues. Its bid space is the
//! Cartesian product of the issue value lists, enumerated lexicographically in
//! issue order; the position of a bid in that enumeration is its tie-break
//! index everywhere else in the crate.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::de::{MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Absolute tolerance for "sums to one" and "attains 1.0" checks.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomainError {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("domain mismatch: {0}")]
    DomainMismatch(String),
    #[error("invalid profile: {0}")]
    InvalidProfile(ValidationReport),
    #[error("invalid needs profile: {0}")]
    InvalidNeeds(String),
    #[error("utility point coordinate {0} outside [0,1]")]
    PointOutOfRange(f64),
    #[error("issue `{0}` already exists in the domain")]
    IssueNameCollision(String),
}

/// The two negotiating parties: the supported human `H` and the counterpart `P`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Party {
    H,
    P,
}

impl Party {
    pub fn other(self) -> Party {
        match self {
            Party::H => Party::P,
            Party::P => Party::H,
        }
    }
}

impl fmt::Display for Party {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Party::H => f.write_str("H"),
            Party::P => f.write_str("P"),
        }
    }
}

/// One value per party, serialized as `{"H": .., "P": ..}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartyPair<T> {
    #[serde(rename = "H")]
    pub h: T,
    #[serde(rename = "P")]
    pub p: T,
}

impl<T> PartyPair<T> {
    pub fn new(h: T, p: T) -> Self {
        Self { h, p }
    }

    pub fn get(&self, party: Party) -> &T {
        match party {
            Party::H => &self.h,
            Party::P => &self.p,
        }
    }

    pub fn get_mut(&mut self, party: Party) -> &mut T {
        match party {
            Party::H => &mut self.h,
            Party::P => &mut self.p,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Issue {
    pub name: String,
    pub values: Vec<String>,
}

impl Issue {
    pub fn new(name: impl Into<String>, values: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Self {
            name: name.into(),
            values: values.into_iter().map(Into::into).collect(),
        }
    }

    fn check(&self) -> Result<(), DomainError> {
        if self.name.is_empty() {
            return Err(DomainError::InvalidDomain("issue with empty name".into()));
        }
        if self.values.is_empty() {
            return Err(DomainError::InvalidDomain(format!(
                "issue `{}` has no values",
                self.name
            )));
        }
        let mut seen = BTreeSet::new();
        for v in &self.values {
            if !seen.insert(v.as_str()) {
                return Err(DomainError::InvalidDomain(format!(
                    "issue `{}` lists value `{v}` twice",
                    self.name
                )));
            }
        }
        Ok(())
    }

    fn position(&self, value: &str) -> Option<usize> {
        self.values.iter().position(|v| v == value)
    }
}

#[derive(Deserialize)]
struct RawDomain {
    name: String,
    issues: Vec<Issue>,
}

/// A validated negotiation domain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawDomain")]
pub struct Domain {
    name: String,
    issues: Vec<Issue>,
}

impl TryFrom<RawDomain> for Domain {
    type Error = DomainError;

    fn try_from(raw: RawDomain) -> Result<Self, Self::Error> {
        Domain::new(raw.name, raw.issues)
    }
}

impl Domain {
    pub fn new(name: impl Into<String>, issues: Vec<Issue>) -> Result<Self, DomainError> {
        if issues.is_empty() {
            return Err(DomainError::InvalidDomain("domain has no issues".into()));
        }
        let mut names = BTreeSet::new();
        for issue in &issues {
            issue.check()?;
            if !names.insert(issue.name.as_str()) {
                return Err(DomainError::InvalidDomain(format!(
                    "issue name `{}` used twice",
                    issue.name
                )));
            }
        }
        Ok(Self {
            name: name.into(),
            issues,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn issues(&self) -> &[Issue] {
        &self.issues
    }

    pub fn issue(&self, name: &str) -> Option<&Issue> {
        self.issues.iter().find(|i| i.name == name)
    }

    /// Number of bids in the bid space.
    pub fn cardinality(&self) -> usize {
        self.issues.iter().map(|i| i.values.len()).product()
    }

    /// Lexicographic position of `bid` in [`enumerate_bids`] order.
    pub fn bid_index(&self, bid: &Bid) -> Result<usize, DomainError> {
        if bid.assignments.len() != self.issues.len() {
            return Err(DomainError::DomainMismatch(format!(
                "bid assigns {} issues, domain `{}` has {}",
                bid.assignments.len(),
                self.name,
                self.issues.len()
            )));
        }
        let mut index = 0;
        for (issue, (bid_issue, value)) in self.issues.iter().zip(&bid.assignments) {
            if &issue.name != bid_issue {
                return Err(DomainError::DomainMismatch(format!(
                    "expected issue `{}`, bid has `{bid_issue}`",
                    issue.name
                )));
            }
            let pos = issue.position(value).ok_or_else(|| {
                DomainError::DomainMismatch(format!("value `{value}` is not in issue `{}`", issue.name))
            })?;
            index = index * issue.values.len() + pos;
        }
        Ok(index)
    }

    /// `bid` with its assignments in issue order, however they were given.
    pub fn canonical(&self, bid: &Bid) -> Result<Bid, DomainError> {
        if bid.assignments.len() == self.issues.len() {
            let assignments: Option<Vec<(String, String)>> = self
                .issues
                .iter()
                .map(|i| bid.value(&i.name).map(|v| (i.name.clone(), v.to_string())))
                .collect();
            if let Some(assignments) = assignments {
                let ordered = Bid { assignments };
                self.bid_index(&ordered)?;
                return Ok(ordered);
            }
        }
        self.bid_index(bid).map(|_| bid.clone())
    }

    /// Inverse of [`Domain::bid_index`].
    pub fn bid_at(&self, mut index: usize) -> Option<Bid> {
        if index >= self.cardinality() {
            return None;
        }
        let mut assignments = vec![(String::new(), String::new()); self.issues.len()];
        for (slot, issue) in assignments.iter_mut().zip(&self.issues).rev() {
            let n = issue.values.len();
            *slot = (issue.name.clone(), issue.values[index % n].clone());
            index /= n;
        }
        Some(Bid { assignments })
    }

    /// Builds a bid from value identifiers given in issue order.
    pub fn bid(&self, values: &[&str]) -> Result<Bid, DomainError> {
        if values.len() != self.issues.len() {
            return Err(DomainError::DomainMismatch(format!(
                "{} values given for {} issues",
                values.len(),
                self.issues.len()
            )));
        }
        let bid = Bid {
            assignments: self
                .issues
                .iter()
                .zip(values)
                .map(|(i, v)| (i.name.clone(), (*v).to_string()))
                .collect(),
        };
        self.bid_index(&bid)?;
        Ok(bid)
    }

    /// Extends a bid of a smaller domain with the first value of every issue it
    /// lacks. Used to carry standing offers across a mid-session extension.
    pub fn embed_with_default(&self, bid: &Bid) -> Result<Bid, DomainError> {
        let mut assignments = Vec::with_capacity(self.issues.len());
        for issue in &self.issues {
            match bid.value(&issue.name) {
                Some(v) => assignments.push((issue.name.clone(), v.to_string())),
                None => assignments.push((issue.name.clone(), issue.values[0].clone())),
            }
        }
        let embedded = Bid { assignments };
        self.bid_index(&embedded)?;
        Ok(embedded)
    }
}

/// A complete assignment of one value per issue, in issue order.
///
/// Serialized as a JSON object whose keys follow issue order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Bid {
    assignments: Vec<(String, String)>,
}

impl Bid {
    pub fn assignments(&self) -> &[(String, String)] {
        &self.assignments
    }

    pub fn value(&self, issue: &str) -> Option<&str> {
        self.assignments
            .iter()
            .find(|(i, _)| i == issue)
            .map(|(_, v)| v.as_str())
    }

    /// This bid with `issue = value` appended.
    pub fn extended(&self, issue: &str, value: &str) -> Bid {
        let mut assignments = self.assignments.clone();
        assignments.push((issue.to_string(), value.to_string()));
        Bid { assignments }
    }
}

impl fmt::Display for Bid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, (_, v)) in self.assignments.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            f.write_str(v)?;
        }
        f.write_str(")")
    }
}

impl Serialize for Bid {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.assignments.len()))?;
        for (issue, value) in &self.assignments {
            map.serialize_entry(issue, value)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for Bid {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct BidVisitor;

        impl<'de> Visitor<'de> for BidVisitor {
            type Value = Bid;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("an object mapping issue names to values")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> Result<Bid, A::Error> {
                let mut assignments = Vec::new();
                while let Some((k, v)) = access.next_entry::<String, String>()? {
                    assignments.push((k, v));
                }
                Ok(Bid { assignments })
            }
        }

        deserializer.deserialize_map(BidVisitor)
    }
}

/// All bids of `domain` in lexicographic issue order (last issue varies fastest).
pub fn enumerate_bids(domain: &Domain) -> Vec<Bid> {
    (0..domain.cardinality())
        .map(|i| domain.bid_at(i).expect("index below cardinality"))
        .collect()
}

/// A single invariant violation found by [`validate_profile`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, field: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation {
            field: field.into(),
            message: message.into(),
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{}: {}", v.field, v.message)?;
        }
        Ok(())
    }
}

/// Unchecked profile document, as read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileData {
    pub domain: String,
    pub weights: BTreeMap<String, f64>,
    pub evaluations: BTreeMap<String, BTreeMap<String, f64>>,
}

/// Checks the additive-profile invariants. An empty report means the profile
/// is normalized and can be turned into an [`AdditiveUtilityProfile`].
pub fn validate_profile(profile: &ProfileData) -> ValidationReport {
    let mut report = ValidationReport::default();
    for (issue, w) in &profile.weights {
        if !w.is_finite() || *w < 0.0 {
            report.push(format!("weights.{issue}"), format!("weight {w} is negative"));
        }
    }
    let sum: f64 = profile.weights.values().sum();
    if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
        report.push("weights", format!("weights sum {sum} ≠ 1"));
    }
    for issue in profile.weights.keys() {
        if !profile.evaluations.contains_key(issue) {
            report.push(format!("evaluations.{issue}"), "missing evaluation map");
        }
    }
    for (issue, evals) in &profile.evaluations {
        if !profile.weights.contains_key(issue) {
            report.push(format!("weights.{issue}"), "missing weight");
        }
        if evals.is_empty() {
            report.push(format!("evaluations.{issue}"), "empty evaluation map");
            continue;
        }
        for (value, e) in evals {
            if !e.is_finite() || !(0.0..=1.0).contains(e) {
                report.push(
                    format!("evaluations.{issue}.{value}"),
                    format!("evaluation {e} out of [0,1]"),
                );
            }
        }
        let max = evals.values().cloned().fold(f64::NEG_INFINITY, f64::max);
        if (max - 1.0).abs() > NORMALIZATION_TOLERANCE {
            report.push(format!("evaluations.{issue}"), format!("maximum evaluation {max} ≠ 1"));
        }
    }
    report
}

/// A normalized additive-linear utility profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProfileData", into = "ProfileData")]
pub struct AdditiveUtilityProfile {
    data: ProfileData,
}

impl TryFrom<ProfileData> for AdditiveUtilityProfile {
    type Error = DomainError;

    fn try_from(data: ProfileData) -> Result<Self, Self::Error> {
        let report = validate_profile(&data);
        if report.is_empty() {
            Ok(Self { data })
        } else {
            Err(DomainError::InvalidProfile(report))
        }
    }
}

impl From<AdditiveUtilityProfile> for ProfileData {
    fn from(p: AdditiveUtilityProfile) -> Self {
        p.data
    }
}

impl AdditiveUtilityProfile {
    pub fn new(
        domain: impl Into<String>,
        weights: impl IntoIterator<Item = (impl Into<String>, f64)>,
        evaluations: impl IntoIterator<Item = (impl Into<String>, Vec<(&'static str, f64)>)>,
    ) -> Result<Self, DomainError> {
        let data = ProfileData {
            domain: domain.into(),
            weights: weights.into_iter().map(|(k, w)| (k.into(), w)).collect(),
            evaluations: evaluations
                .into_iter()
                .map(|(k, vs)| (k.into(), vs.into_iter().map(|(v, e)| (v.to_string(), e)).collect()))
                .collect(),
        };
        data.try_into()
    }

    pub fn data(&self) -> &ProfileData {
        &self.data
    }

    pub fn domain_name(&self) -> &str {
        &self.data.domain
    }

    pub fn weight(&self, issue: &str) -> Option<f64> {
        self.data.weights.get(issue).copied()
    }

    pub fn evaluation(&self, issue: &str, value: &str) -> Option<f64> {
        self.data.evaluations.get(issue)?.get(value).copied()
    }

    /// Checks that this profile covers exactly the issues and values of `domain`.
    pub fn check_domain(&self, domain: &Domain) -> Result<(), DomainError> {
        if self.data.domain != domain.name() {
            return Err(DomainError::DomainMismatch(format!(
                "profile is for domain `{}`, not `{}`",
                self.data.domain,
                domain.name()
            )));
        }
        if self.data.weights.len() != domain.issues().len() {
            return Err(DomainError::DomainMismatch(format!(
                "profile weighs {} issues, domain has {}",
                self.data.weights.len(),
                domain.issues().len()
            )));
        }
        for issue in domain.issues() {
            let evals = self
                .data
                .evaluations
                .get(&issue.name)
                .ok_or_else(|| DomainError::DomainMismatch(format!("profile lacks issue `{}`", issue.name)))?;
            if evals.len() != issue.values.len() {
                return Err(DomainError::DomainMismatch(format!(
                    "profile evaluates {} values of `{}`, domain has {}",
                    evals.len(),
                    issue.name,
                    issue.values.len()
                )));
            }
            for value in &issue.values {
                if !evals.contains_key(value) {
                    return Err(DomainError::DomainMismatch(format!(
                        "profile lacks value `{value}` of issue `{}`",
                        issue.name
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Additive utility of `bid`: the weighted sum of per-issue evaluations.
pub fn utility(profile: &AdditiveUtilityProfile, bid: &Bid) -> Result<f64, DomainError> {
    if bid.assignments.len() != profile.data.weights.len() {
        return Err(DomainError::DomainMismatch(format!(
            "bid assigns {} issues, profile weighs {}",
            bid.assignments.len(),
            profile.data.weights.len()
        )));
    }
    let mut total = 0.0;
    for (issue, value) in &bid.assignments {
        let w = profile
            .weight(issue)
            .ok_or_else(|| DomainError::DomainMismatch(format!("profile has no issue `{issue}`")))?;
        let e = profile
            .evaluation(issue, value)
            .ok_or_else(|| DomainError::DomainMismatch(format!("profile has no value `{value}` for `{issue}`")))?;
        total += w * e;
    }
    // weights may sum to 1 within tolerance
    Ok(total.clamp(0.0, 1.0))
}

/// A point of the normalized utility space, tagged with its originating bid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityPoint {
    /// `[u_H, u_P]`.
    pub coordinates: [f64; 2],
    pub bid: Bid,
    /// Tie-break index of `bid` in its bid space.
    pub index: usize,
}

/// Origin of the normalized utility space.
pub const ORIGIN: [f64; 2] = [0.0, 0.0];
/// The point where both parties receive maximum utility.
pub const UTOPIA: [f64; 2] = [1.0, 1.0];

impl UtilityPoint {
    pub fn new(u_h: f64, u_p: f64, bid: Bid, index: usize) -> Result<Self, DomainError> {
        for c in [u_h, u_p] {
            if !c.is_finite() || !(0.0..=1.0).contains(&c) {
                return Err(DomainError::PointOutOfRange(c));
            }
        }
        Ok(Self {
            coordinates: [u_h, u_p],
            bid,
            index,
        })
    }

    pub fn u_h(&self) -> f64 {
        self.coordinates[0]
    }

    pub fn u_p(&self) -> f64 {
        self.coordinates[1]
    }

    pub fn get(&self, party: Party) -> f64 {
        match party {
            Party::H => self.coordinates[0],
            Party::P => self.coordinates[1],
        }
    }

    /// The same bid with coordinates `[u_P, u_H]`.
    pub fn swapped(&self) -> UtilityPoint {
        UtilityPoint {
            coordinates: [self.coordinates[1], self.coordinates[0]],
            bid: self.bid.clone(),
            index: self.index,
        }
    }
}

/// Places `bid` in the utility space of the two profiles.
pub fn utility_point(
    domain: &Domain,
    bid: &Bid,
    profile_h: &AdditiveUtilityProfile,
    profile_p: &AdditiveUtilityProfile,
) -> Result<UtilityPoint, DomainError> {
    let index = domain.bid_index(bid)?;
    UtilityPoint::new(utility(profile_h, bid)?, utility(profile_p, bid)?, bid.clone(), index)
}

/// Utility points of every bid of `domain`, in enumeration order.
pub fn utility_points(
    domain: &Domain,
    profile_h: &AdditiveUtilityProfile,
    profile_p: &AdditiveUtilityProfile,
) -> Result<Vec<UtilityPoint>, DomainError> {
    profile_h.check_domain(domain)?;
    profile_p.check_domain(domain)?;
    enumerate_bids(domain)
        .into_iter()
        .enumerate()
        .map(|(i, bid)| {
            let h = utility(profile_h, &bid)?;
            let p = utility(profile_p, &bid)?;
            UtilityPoint::new(h, p, bid, i)
        })
        .collect()
}

#[derive(Deserialize)]
struct RawNeeds {
    needs: PartyPair<f64>,
    #[serde(default)]
    investments: Option<PartyPair<f64>>,
}

/// Per-party needs (and optionally investments).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawNeeds")]
pub struct NeedsProfile {
    needs: PartyPair<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    investments: Option<PartyPair<f64>>,
}

impl TryFrom<RawNeeds> for NeedsProfile {
    type Error = DomainError;

    fn try_from(raw: RawNeeds) -> Result<Self, Self::Error> {
        let mut n = NeedsProfile::new(raw.needs.h, raw.needs.p)?;
        if let Some(inv) = raw.investments {
            n = n.with_investments(inv.h, inv.p)?;
        }
        Ok(n)
    }
}

impl NeedsProfile {
    pub fn new(need_h: f64, need_p: f64) -> Result<Self, DomainError> {
        if !(need_h > 0.0 && need_p > 0.0) || !need_h.is_finite() || !need_p.is_finite() {
            return Err(DomainError::InvalidNeeds(format!(
                "needs must be strictly positive, got ({need_h}, {need_p})"
            )));
        }
        if (need_h + need_p - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(DomainError::InvalidNeeds(format!("needs sum {} ≠ 1", need_h + need_p)));
        }
        Ok(Self {
            needs: PartyPair::new(need_h, need_p),
            investments: None,
        })
    }

    /// Equal needs: the balanced-needs line is the diagonal.
    pub fn equal() -> Self {
        Self::new(0.5, 0.5).expect("valid")
    }

    pub fn with_investments(mut self, inv_h: f64, inv_p: f64) -> Result<Self, DomainError> {
        if !(inv_h > 0.0 && inv_p > 0.0) || !inv_h.is_finite() || !inv_p.is_finite() {
            return Err(DomainError::InvalidNeeds(format!(
                "investments must be strictly positive, got ({inv_h}, {inv_p})"
            )));
        }
        self.investments = Some(PartyPair::new(inv_h, inv_p));
        Ok(self)
    }

    pub fn need(&self, party: Party) -> f64 {
        *self.needs.get(party)
    }

    pub fn needs(&self) -> PartyPair<f64> {
        self.needs
    }

    pub fn investments(&self) -> Option<PartyPair<f64>> {
        self.investments
    }

    pub fn min_need(&self) -> f64 {
        self.needs.h.min(self.needs.p)
    }
}

/// Per-party addition for a new issue. Existing weights are scaled by
/// `1 - weight` so the extended profile still sums to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileDelta {
    pub weight: f64,
    pub evaluations: BTreeMap<String, f64>,
}

/// A new issue plus the per-party profile additions it requires.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainExtension {
    pub issue: Issue,
    pub deltas: PartyPair<ProfileDelta>,
}

/// Adds `extension.issue` to `domain` and extends each `(party, profile)`
/// with that party's delta. Every old bid embeds into the new space once per
/// value of the new issue.
pub fn extend_domain(
    domain: &Domain,
    extension: &DomainExtension,
    profiles: &[(Party, &AdditiveUtilityProfile)],
) -> Result<(Domain, Vec<AdditiveUtilityProfile>), DomainError> {
    let issue = &extension.issue;
    if domain.issue(&issue.name).is_some() {
        return Err(DomainError::IssueNameCollision(issue.name.clone()));
    }
    let mut issues = domain.issues().to_vec();
    issues.push(issue.clone());
    let extended = Domain::new(domain.name(), issues)?;

    let mut out = Vec::with_capacity(profiles.len());
    for (party, profile) in profiles {
        let delta = extension.deltas.get(*party);
        let mut report = ValidationReport::default();
        if !(0.0..=1.0).contains(&delta.weight) {
            report.push(
                format!("deltas.{party}.weight"),
                format!("weight {} out of [0,1]", delta.weight),
            );
        }
        for value in &issue.values {
            if !delta.evaluations.contains_key(value) {
                report.push(
                    format!("deltas.{party}.evaluations.{value}"),
                    "missing evaluation for new value",
                );
            }
        }
        for value in delta.evaluations.keys() {
            if !issue.values.contains(value) {
                report.push(format!("deltas.{party}.evaluations.{value}"), "value not in new issue");
            }
        }
        if !report.is_empty() {
            return Err(DomainError::InvalidProfile(report));
        }

        let mut data = profile.data().clone();
        for w in data.weights.values_mut() {
            *w *= 1.0 - delta.weight;
        }
        data.weights.insert(issue.name.clone(), delta.weight);
        data.evaluations.insert(issue.name.clone(), delta.evaluations.clone());
        let extended_profile = AdditiveUtilityProfile::try_from(data).map_err(|e| match e {
            DomainError::InvalidProfile(mut r) => {
                for v in &mut r.violations {
                    v.field = format!("deltas.{party}: {}", v.field);
                }
                DomainError::InvalidProfile(r)
            }
            other => other,
        })?;
        extended_profile.check_domain(&extended)?;
        out.push(extended_profile);
    }
    Ok((extended, out))
}
