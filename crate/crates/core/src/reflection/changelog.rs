use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{KnowledgeBase, Proposal, ProposalAction, ProposalStatus, ReflectionError};
use crate::analytics::AnalyticsView;
use crate::domain::{extend_domain, Party};
use crate::protocol::{SessionConfig, SessionState};

/// Hex SHA-256 of the config's canonical JSON.
pub fn config_digest(config: &SessionConfig) -> String {
    let bytes = serde_json::to_vec(config).expect("config serializes");
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Approve,
    Reject,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecidedBy {
    #[default]
    Human,
    /// A scripted policy standing in for the human in headless runs.
    SimulatedPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanDecision {
    #[serde(rename = "decision")]
    pub verdict: Verdict,
    pub rationale: String,
    /// Replaces the proposal's payload; must be of the same kind.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amendment: Option<ProposalAction>,
    #[serde(default)]
    pub decided_by: DecidedBy,
}

impl HumanDecision {
    pub fn new(verdict: Verdict, rationale: impl Into<String>) -> Self {
        Self {
            verdict,
            rationale: rationale.into(),
            amendment: None,
            decided_by: DecidedBy::Human,
        }
    }

    pub fn with_amendment(mut self, action: ProposalAction) -> Self {
        self.amendment = Some(action);
        self
    }

    pub fn simulated(mut self) -> Self {
        self.decided_by = DecidedBy::SimulatedPolicy;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeLogEntry {
    pub seq: u64,
    pub timestamp: u64,
    /// Transcript length when the decision was taken.
    pub at_event: usize,
    /// The proposal as decided, including any amendment.
    pub proposal: Proposal,
    pub decision: HumanDecision,
    pub base_digest: String,
    pub resulting_digest: String,
}

impl ChangeLogEntry {
    /// True when the entry approved something that altered the config.
    pub fn changes_config(&self) -> bool {
        self.base_digest != self.resulting_digest
    }
}

/// The config after `action`. Pure; fails when the payload is incomplete or
/// invalid.
pub fn apply_action(config: &SessionConfig, action: &ProposalAction) -> Result<SessionConfig, ReflectionError> {
    let mut next = config.clone();
    match action {
        ProposalAction::SwitchPrinciple { principle: Some(p) } => next.active_principle = *p,
        ProposalAction::ApplyNeedsTransform { needs: Some(needs) } => {
            next.analytics_view = AnalyticsView::NeedsTransformed { needs: *needs }
        }
        ProposalAction::ExtendDomain { extension: Some(ext) } => {
            let mut profiles = vec![(Party::H, &config.profile_h)];
            if let Some(p) = &config.true_profile_p {
                profiles.push((Party::P, p));
            }
            if let Some(p) = &config.estimated_profile_p {
                profiles.push((Party::P, p));
            }
            let (domain, mut extended) = extend_domain(&config.domain, ext, &profiles)?;
            next.domain = domain;
            if config.estimated_profile_p.is_some() {
                next.estimated_profile_p = extended.pop();
            }
            if config.true_profile_p.is_some() {
                next.true_profile_p = extended.pop();
            }
            next.profile_h = extended.pop().expect("H profile extended");
        }
        ProposalAction::ChangeStrategy { exponent: Some(e) } => next.support_exponent = *e,
        ProposalAction::NoChange => {}
        incomplete => {
            return Err(ReflectionError::IncompletePayload(format!("{:?}", incomplete.kind())));
        }
    }
    next.validate()?;
    Ok(next)
}

/// Records a human decision on a pending proposal. An approval only goes
/// through when its payload applies cleanly to `config`; otherwise the
/// proposal stays pending.
pub fn decide(
    proposal: &mut Proposal,
    decision: HumanDecision,
    config: &SessionConfig,
    seq: u64,
    at_event: usize,
    timestamp: u64,
) -> Result<ChangeLogEntry, ReflectionError> {
    if proposal.status != ProposalStatus::Pending {
        return Err(ReflectionError::NotPending(proposal.id.clone()));
    }
    if decision.rationale.trim().is_empty() {
        return Err(ReflectionError::EmptyRationale);
    }
    let mut decided = proposal.clone();
    if let Some(amendment) = &decision.amendment {
        if amendment.kind() != proposal.kind() {
            return Err(ReflectionError::KindMismatch {
                expected: proposal.kind(),
                got: amendment.kind(),
            });
        }
        decided.action = amendment.clone();
    }
    let base_digest = config_digest(config);
    let resulting_digest = match decision.verdict {
        Verdict::Approve => {
            if !decided.action.is_complete() {
                return Err(ReflectionError::IncompletePayload(proposal.id.clone()));
            }
            config_digest(&apply_action(config, &decided.action)?)
        }
        Verdict::Reject => base_digest.clone(),
    };
    decided.status = match decision.verdict {
        Verdict::Approve => ProposalStatus::Approved,
        Verdict::Reject => ProposalStatus::Rejected,
    };
    *proposal = decided.clone();
    Ok(ChangeLogEntry {
        seq,
        timestamp,
        at_event,
        proposal: decided,
        decision,
        base_digest,
        resulting_digest,
    })
}

/// Applies an approved proposal to the live session between rounds.
pub fn execute(
    proposal: &mut Proposal,
    state: &mut SessionState,
    kb: &mut KnowledgeBase,
) -> Result<(), ReflectionError> {
    if proposal.status != ProposalStatus::Approved {
        return Err(ReflectionError::NotApproved(proposal.id.clone()));
    }
    if proposal.executed {
        return Err(ReflectionError::AlreadyExecuted(proposal.id.clone()));
    }
    let next = apply_action(state.config(), &proposal.action)?;
    state.reconfigure(next)?;
    kb.sync(state.config());
    proposal.executed = true;
    Ok(())
}

/// Folds the approved entries of a change log over `initial`, checking every
/// recorded digest on the way.
pub fn replay_changelog(initial: &SessionConfig, entries: &[ChangeLogEntry]) -> Result<SessionConfig, ReflectionError> {
    let mut config = initial.clone();
    for entry in entries {
        let before = config_digest(&config);
        if before != entry.base_digest {
            return Err(ReflectionError::DigestMismatch {
                seq: entry.seq,
                expected: entry.base_digest.clone(),
                found: before,
            });
        }
        if entry.decision.verdict == Verdict::Approve {
            config = apply_action(&config, &entry.proposal.action)?;
        }
        let after = config_digest(&config);
        if after != entry.resulting_digest {
            return Err(ReflectionError::DigestMismatch {
                seq: entry.seq,
                expected: entry.resulting_digest.clone(),
                found: after,
            });
        }
    }
    Ok(config)
}
