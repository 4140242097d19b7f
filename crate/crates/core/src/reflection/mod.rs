//! Monitor, analyze, plan and execute over a shared knowledge base, with every
//! human decision written to an append-only change log.

mod analyze;
mod changelog;
mod monitor;
mod plan;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::{AnalyticsError, FairnessPrinciple};
use crate::domain::{Bid, DomainError, UtilityPoint};
use crate::protocol::{OutcomeResult, ProtocolError, SessionConfig, SessionState};

pub use analyze::{analyze, Aberration, AberrationKind, EvidenceRef, Explanation, SessionFacts};
pub use changelog::{
    apply_action, config_digest, decide, execute, replay_changelog, ChangeLogEntry, DecidedBy, HumanDecision, Verdict,
};
pub use monitor::{monitor_step, MonitorReport};
pub use plan::{plan, Proposal, ProposalAction, ProposalKind, ProposalStatus};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReflectionError {
    #[error("transcript has no offer to monitor")]
    EmptyTranscript,
    #[error("proposal {0} is not pending")]
    NotPending(String),
    #[error("proposal {0} is not approved")]
    NotApproved(String),
    #[error("proposal {0} was already executed")]
    AlreadyExecuted(String),
    #[error("a decision needs a non-empty rationale")]
    EmptyRationale,
    #[error("amended payload is a {got:?} but the proposal is a {expected:?}")]
    KindMismatch { expected: ProposalKind, got: ProposalKind },
    #[error("proposal {0} cannot be approved without a complete payload")]
    IncompletePayload(String),
    #[error("session is not terminal")]
    NotTerminal,
    #[error("change log entry {seq}: expected digest {expected}, found {found}")]
    DigestMismatch { seq: u64, expected: String, found: String },
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
}

fn default_timing_fraction() -> f64 {
    0.7
}

fn default_mismatch_count() -> usize {
    2
}

fn default_mismatch_margin() -> f64 {
    0.15
}

/// Thresholds for the detectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackgroundConfig {
    /// Fraction of the deadline after which outcome fairness is judged (τ).
    #[serde(default = "default_timing_fraction")]
    pub timing_fraction: f64,
    /// Qualifying rejections needed for a principle mismatch (k).
    #[serde(rename = "mismatch_count_k", default = "default_mismatch_count")]
    pub mismatch_count: usize,
    /// Utility margin (δ).
    #[serde(default = "default_mismatch_margin")]
    pub mismatch_margin: f64,
    #[serde(default)]
    pub power_index_enabled: bool,
}

impl Default for BackgroundConfig {
    fn default() -> Self {
        Self {
            timing_fraction: default_timing_fraction(),
            mismatch_count: default_mismatch_count(),
            mismatch_margin: default_mismatch_margin(),
            power_index_enabled: false,
        }
    }
}

impl BackgroundConfig {
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(0.0..=1.0).contains(&self.timing_fraction) {
            out.push(format!(
                "background.timing_fraction {} outside [0,1]",
                self.timing_fraction
            ));
        }
        if self.mismatch_count < 1 {
            out.push("background.mismatch_count_k must be at least 1".to_string());
        }
        if !(self.mismatch_margin > 0.0 && self.mismatch_margin < 1.0) {
            out.push(format!(
                "background.mismatch_margin {} outside (0,1)",
                self.mismatch_margin
            ));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JudgmentLabel {
    Acceptable,
    Contested,
}

/// A human verdict on a finished negotiation, kept as precedent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgmentRecord {
    pub outcome: Option<UtilityPoint>,
    pub bid: Option<Bid>,
    pub label: JudgmentLabel,
    pub rationale: String,
    pub principle: FairnessPrinciple,
}

/// Principle in force, recorded judgments and detector thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeBase {
    pub principle: FairnessPrinciple,
    judgments: Vec<JudgmentRecord>,
    pub background: BackgroundConfig,
}

impl KnowledgeBase {
    pub fn new(principle: FairnessPrinciple, background: BackgroundConfig) -> Self {
        Self {
            principle,
            judgments: Vec::new(),
            background,
        }
    }

    pub fn from_config(config: &SessionConfig) -> Self {
        Self::new(config.active_principle, config.background)
    }

    pub fn judgments(&self) -> &[JudgmentRecord] {
        &self.judgments
    }

    /// Puts back judgments read from storage, as recorded.
    pub fn restore_judgments(&mut self, records: impl IntoIterator<Item = JudgmentRecord>) {
        self.judgments.extend(records);
    }

    /// Re-reads the parts of the knowledge base that live in the config.
    pub fn sync(&mut self, config: &SessionConfig) {
        self.principle = config.active_principle;
        self.background = config.background;
    }
}

/// Appends a judgment on the outcome of a finished session.
pub fn record_judgment(
    kb: &mut KnowledgeBase,
    state: &SessionState,
    label: JudgmentLabel,
    rationale: impl Into<String>,
) -> Result<(), ReflectionError> {
    let outcome = state.outcome().ok_or(ReflectionError::NotTerminal)?;
    let (outcome, bid) = match outcome.result {
        OutcomeResult::Agreement { bid, point } => (Some(point), Some(bid)),
        OutcomeResult::NoAgreement => (None, None),
    };
    kb.judgments.push(JudgmentRecord {
        outcome,
        bid,
        label,
        rationale: rationale.into(),
        principle: kb.principle,
    });
    Ok(())
}
