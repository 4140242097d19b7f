//! A live session: protocol state, builtin agents and the reflective loop,
//! run synchronously after every transcript event.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use sha2::Digest;
use thiserror::Error;

use crate::analytics::{AnalyticsError, AnalyticsReport};
use crate::domain::{Party, PartyPair};
use crate::protocol::{
    Action, Clock, NegotiationStrategy, Outcome, ProtocolError, SessionConfig, SessionState, SessionStatus,
    TranscriptEntry,
};
use crate::reflection::{
    analyze, config_digest, decide, execute, monitor_step, plan, record_judgment, Aberration, AberrationKind,
    ChangeLogEntry, HumanDecision, JudgmentLabel, JudgmentRecord, KnowledgeBase, MonitorReport, Proposal,
    ProposalAction, ProposalKind, ProposalStatus, ReflectionError, SessionFacts, Verdict,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SessionError {
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Reflection(#[from] ReflectionError),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
    #[error("unknown proposal {0}")]
    UnknownProposal(String),
    #[error("replay diverged at transcript entry {entry}: {reason}")]
    ReplayDiverged { entry: usize, reason: String },
}

/// Everything observers are told about, in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "data", rename_all = "kebab-case")]
#[allow(clippy::large_enum_variant)]
pub enum SessionEvent {
    Transcript(TranscriptEntry),
    Monitor(MonitorReport),
    Aberration(Aberration),
    Proposal(Proposal),
    Decision(ChangeLogEntry),
    Status(SessionStatus),
}

/// One rule of a scripted stand-in for the human.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyRule {
    pub kind: ProposalKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aberration: Option<AberrationKind>,
    pub decision: Verdict,
    pub rationale: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<ProposalAction>,
}

/// Decides pending proposals by the first matching rule; unmatched proposals
/// stay pending.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DecisionPolicy {
    pub rules: Vec<PolicyRule>,
}

impl DecisionPolicy {
    fn decision_for(&self, proposal: &Proposal, aberration: Option<AberrationKind>) -> Option<HumanDecision> {
        let rule = self
            .rules
            .iter()
            .find(|r| r.kind == proposal.kind() && (r.aberration.is_none() || r.aberration == aberration))?;
        let mut d = HumanDecision::new(rule.decision, rule.rationale.clone()).simulated();
        d.amendment = rule.payload.clone();
        Some(d)
    }
}

/// What a finished run looks like, without wall-clock data; a replay must
/// reproduce it exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub outcome: Option<Outcome>,
    pub final_digest: String,
    pub reports: Vec<MonitorReport>,
    pub aberrations: Vec<Aberration>,
    pub proposals: Vec<Proposal>,
    pub analytics: AnalyticsReport,
}

impl RunSummary {
    /// sha256 of the serialized summary; equal digests mean equal runs.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("summary serializes");
        hex::encode(sha2::Sha256::digest(bytes))
    }
}

/// Aberration id carried by proposals the human raised directly.
pub const HUMAN_INITIATED: &str = "human-initiated";

pub struct Session {
    id: String,
    initial_config: SessionConfig,
    state: SessionState,
    kb: KnowledgeBase,
    agents: PartyPair<Option<Box<dyn NegotiationStrategy>>>,
    reflection: bool,
    digest: String,
    reports: Vec<MonitorReport>,
    aberrations: Vec<Aberration>,
    proposals: Vec<Proposal>,
    changelog: Vec<ChangeLogEntry>,
    raised: BTreeSet<(AberrationKind, String)>,
}

impl std::fmt::Debug for Session {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Session")
            .field("id", &self.id)
            .field("round", &self.state.round())
            .field("status", self.state.status())
            .field("digest", &self.digest)
            .finish_non_exhaustive()
    }
}

impl Session {
    pub fn new(
        id: impl Into<String>,
        config: SessionConfig,
        clock: Clock,
        reflection: bool,
    ) -> Result<Self, SessionError> {
        let state = SessionState::new(config.clone(), clock)?;
        let agents = PartyPair::new(
            config.strategies.h.build(Party::H, config.seed),
            config.strategies.p.build(Party::P, config.seed),
        );
        Ok(Self {
            id: id.into(),
            kb: KnowledgeBase::from_config(&config),
            digest: config_digest(&config),
            initial_config: config,
            state,
            agents,
            reflection,
            reports: Vec::new(),
            aberrations: Vec::new(),
            proposals: Vec::new(),
            changelog: Vec::new(),
            raised: BTreeSet::new(),
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn initial_config(&self) -> &SessionConfig {
        &self.initial_config
    }

    pub fn state(&self) -> &SessionState {
        &self.state
    }

    pub fn knowledge(&self) -> &KnowledgeBase {
        &self.kb
    }

    /// Files a verdict on the finished negotiation as precedent.
    pub fn record_judgment(
        &mut self,
        label: JudgmentLabel,
        rationale: impl Into<String>,
    ) -> Result<&JudgmentRecord, SessionError> {
        record_judgment(&mut self.kb, &self.state, label, rationale)?;
        Ok(self.kb.judgments().last().expect("just recorded"))
    }

    pub fn restore_judgments(&mut self, records: impl IntoIterator<Item = JudgmentRecord>) {
        self.kb.restore_judgments(records);
    }

    pub fn reflection_enabled(&self) -> bool {
        self.reflection
    }

    pub fn digest(&self) -> &str {
        &self.digest
    }

    pub fn reports(&self) -> &[MonitorReport] {
        &self.reports
    }

    pub fn aberrations(&self) -> &[Aberration] {
        &self.aberrations
    }

    pub fn proposals(&self) -> &[Proposal] {
        &self.proposals
    }

    pub fn pending_proposals(&self) -> impl Iterator<Item = &Proposal> {
        self.proposals.iter().filter(|p| p.status == ProposalStatus::Pending)
    }

    pub fn changelog(&self) -> &[ChangeLogEntry] {
        &self.changelog
    }

    pub fn is_builtin(&self, party: Party) -> bool {
        self.agents.get(party).is_some()
    }

    /// Fairness analytics over the current estimated utility space.
    pub fn analytics(&self) -> Result<AnalyticsReport, SessionError> {
        let config = self.state.config();
        Ok(AnalyticsReport::compute(
            &self.state.estimated_points(),
            &self.kb.principle,
            &config.analytics_view,
            config.leo_resolution,
        )?)
    }

    pub fn summary(&self) -> Result<RunSummary, SessionError> {
        Ok(RunSummary {
            outcome: self.state.outcome(),
            final_digest: self.digest.clone(),
            reports: self.reports.clone(),
            aberrations: self.aberrations.clone(),
            proposals: self.proposals.clone(),
            analytics: self.analytics()?,
        })
    }

    /// Applies an action, then monitors and, when enabled, analyzes and plans.
    pub fn submit(&mut self, party: Party, action: Action) -> Result<Vec<SessionEvent>, SessionError> {
        let is_offer = matches!(action, Action::Offer(_));
        let entry = self.state.submit_action(party, action)?.clone();
        let mut events = vec![SessionEvent::Transcript(entry)];
        if is_offer {
            let report = monitor_step(&self.state, &self.kb, &self.digest)?;
            self.reports.push(report.clone());
            events.push(SessionEvent::Monitor(report));
            if self.reflection {
                self.reflect(&mut events);
            }
        }
        if self.state.status().is_terminal() {
            events.push(SessionEvent::Status(self.state.status().clone()));
        }
        Ok(events)
    }

    fn reflect(&mut self, events: &mut Vec<SessionEvent>) {
        let facts = SessionFacts {
            reservation: self.state.config().reservation,
            config_digest: self.digest.clone(),
        };
        for aberration in analyze(&self.reports, self.state.transcript(), &self.kb, &facts) {
            if !self.raised.insert((aberration.kind, aberration.config_digest.clone())) {
                continue;
            }
            let proposals = plan(&aberration, &self.kb, self.state.config().support_exponent);
            events.push(SessionEvent::Aberration(aberration.clone()));
            self.aberrations.push(aberration);
            for p in proposals {
                events.push(SessionEvent::Proposal(p.clone()));
                self.proposals.push(p);
            }
        }
    }

    /// Lets the builtin agent whose turn it is act. `None` when the session
    /// is over or a human is to move.
    pub fn step_builtin(&mut self) -> Result<Option<Vec<SessionEvent>>, SessionError> {
        if self.state.status().is_terminal() {
            return Ok(None);
        }
        let party = self.state.turn();
        let Some(agent) = self.agents.get_mut(party).as_mut() else {
            return Ok(None);
        };
        let ctx = self
            .state
            .strategy_context(party)
            .expect("builtin strategies know their own profile");
        let mut action = agent.next_action(&ctx);
        if let Action::Offer(bid) = &action {
            let domain = &self.state.config().domain;
            if domain.bid_index(bid).is_err() {
                if let Ok(embedded) = domain.embed_with_default(bid) {
                    action = Action::Offer(embedded);
                }
            }
        }
        self.submit(party, action).map(Some)
    }

    /// Lets the builtin agent for `party` plan its move without playing it, so
    /// its internal state follows a recorded transcript.
    fn shadow_builtin(&mut self, party: Party) {
        let Some(agent) = self.agents.get_mut(party).as_mut() else {
            return;
        };
        if let Some(ctx) = self.state.strategy_context(party) {
            agent.next_action(&ctx);
        }
    }

    /// Runs builtin agents until a human must move or the session ends.
    pub fn run_builtins(&mut self) -> Result<Vec<SessionEvent>, SessionError> {
        let mut events = Vec::new();
        while let Some(mut more) = self.step_builtin()? {
            events.append(&mut more);
        }
        Ok(events)
    }

    /// Records a decision and, for approvals, applies the change between rounds.
    pub fn decide(&mut self, proposal_id: &str, decision: HumanDecision) -> Result<ChangeLogEntry, SessionError> {
        let idx = self
            .proposals
            .iter()
            .position(|p| p.id == proposal_id)
            .ok_or_else(|| SessionError::UnknownProposal(proposal_id.to_string()))?;
        let seq = self.changelog.len() as u64;
        let at_event = self.state.transcript().len();
        let config = self.state.config().clone();
        let mut entry = decide(&mut self.proposals[idx], decision, &config, seq, at_event, 0)?;
        entry.timestamp = self.state.now();
        if entry.proposal.status == ProposalStatus::Approved {
            execute(&mut self.proposals[idx], &mut self.state, &mut self.kb)?;
            self.digest = config_digest(self.state.config());
            debug_assert_eq!(self.digest, entry.resulting_digest);
        }
        self.changelog.push(entry.clone());
        Ok(entry)
    }

    /// A change the human asks for directly, outside any aberration. It is
    /// logged like any other decision so the change log stays complete.
    pub fn request_change(
        &mut self,
        action: ProposalAction,
        decision: HumanDecision,
    ) -> Result<ChangeLogEntry, SessionError> {
        let proposal = Proposal {
            id: format!("{HUMAN_INITIATED}.{}", self.changelog.len() + 1),
            aberration_id: HUMAN_INITIATED.to_string(),
            action,
            status: ProposalStatus::Pending,
            executed: false,
        };
        let id = proposal.id.clone();
        self.proposals.push(proposal);
        match self.decide(&id, decision) {
            Ok(entry) => Ok(entry),
            Err(e) => {
                self.proposals.pop();
                Err(e)
            }
        }
    }

    /// Lets `policy` decide every pending proposal it has a rule for.
    pub fn apply_policy(&mut self, policy: &DecisionPolicy) -> Result<Vec<SessionEvent>, SessionError> {
        let mut events = Vec::new();
        let pending: Vec<(String, Option<AberrationKind>)> = self
            .pending_proposals()
            .map(|p| {
                let kind = self
                    .aberrations
                    .iter()
                    .find(|a| a.id == p.aberration_id)
                    .map(|a| a.kind);
                (p.id.clone(), kind)
            })
            .collect();
        for (id, aberration) in pending {
            let Some(proposal) = self.proposals.iter().find(|p| p.id == id) else {
                continue;
            };
            // an earlier decision in this batch may have settled it
            if proposal.status != ProposalStatus::Pending {
                continue;
            }
            if let Some(decision) = policy.decision_for(proposal, aberration) {
                match self.decide(&id, decision) {
                    Ok(entry) => events.push(SessionEvent::Decision(entry)),
                    // a rule whose payload does not apply leaves the proposal pending
                    Err(SessionError::Reflection(_)) => {}
                    Err(e) => return Err(e),
                }
            }
        }
        Ok(events)
    }

    /// Runs to termination with builtin agents on both sides, letting
    /// `policy` stand in for the human after every event.
    pub fn simulate(&mut self, policy: &DecisionPolicy) -> Result<Vec<SessionEvent>, SessionError> {
        let mut events = Vec::new();
        while let Some(mut more) = self.step_builtin()? {
            events.append(&mut more);
            events.append(&mut self.apply_policy(policy)?);
        }
        Ok(events)
    }
}

/// Rebuilds a session from its initial config, transcript and change log,
/// re-running the reflective loop along the way.
pub fn replay(
    id: impl Into<String>,
    config: SessionConfig,
    reflection: bool,
    transcript: &[TranscriptEntry],
    changelog: &[ChangeLogEntry],
) -> Result<Session, SessionError> {
    resume(id, config, Clock::Logical, reflection, transcript, changelog)
}

/// Like [`replay`], but the rebuilt session keeps going on `clock`.
pub fn resume(
    id: impl Into<String>,
    config: SessionConfig,
    clock: Clock,
    reflection: bool,
    transcript: &[TranscriptEntry],
    changelog: &[ChangeLogEntry],
) -> Result<Session, SessionError> {
    let mut session = Session::new(id, config, clock, reflection)?;
    let mut log = changelog.iter().peekable();
    for i in 0..=transcript.len() {
        while let Some(entry) = log.next_if(|e| e.at_event == i) {
            let decided = if entry.proposal.aberration_id == HUMAN_INITIATED {
                session.request_change(entry.proposal.action.clone(), entry.decision.clone())?
            } else {
                session.decide(&entry.proposal.id, entry.decision.clone())?
            };
            if decided.resulting_digest != entry.resulting_digest {
                return Err(SessionError::ReplayDiverged {
                    entry: i,
                    reason: format!("change {} produced a different config", entry.seq),
                });
            }
            session.changelog.last_mut().expect("just decided").timestamp = entry.timestamp;
        }
        let Some(line) = transcript.get(i) else {
            break;
        };
        let action = line.to_action().ok_or_else(|| SessionError::ReplayDiverged {
            entry: i,
            reason: "offer without a bid".to_string(),
        })?;
        session.shadow_builtin(line.party);
        let produced = session.submit(line.party, action)?;
        let SessionEvent::Transcript(recorded) = &produced[0] else {
            unreachable!("submit starts with the transcript entry")
        };
        if recorded.round != line.round || recorded.bid != line.bid {
            return Err(SessionError::ReplayDiverged {
                entry: i,
                reason: "transcript line does not match the replayed action".to_string(),
            });
        }
        session.state.restamp_last(line.timestamp);
    }
    if let Some(entry) = log.next() {
        return Err(SessionError::ReplayDiverged {
            entry: entry.at_event,
            reason: format!("change {} is past the end of the transcript", entry.seq),
        });
    }
    Ok(session)
}
