//! Bilateral alternating-offers protocol with a round deadline.
//!
//! `H` always opens. Every action is appended to the transcript. A counter
//! offer implicitly rejects the standing offer; accepting binds the standing
//! offer; reaching the deadline without agreement fails the session.

mod strategy;

use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::{AnalyticsView, FairnessPrinciple, DEFAULT_LEO_RESOLUTION};
use crate::domain::{
    enumerate_bids, utility, AdditiveUtilityProfile, Bid, Domain, DomainError, Party, PartyPair, ProfileData,
    UtilityPoint,
};
use crate::opponent::FrequencyModel;
use crate::reflection::BackgroundConfig;

pub use strategy::{
    acceptance_decision, select_bid_near_target, select_index_near_target, time_dependent_target, NegotiationStrategy,
    RandomAgent, ScriptedAgent, StrategyContext, TimeDependentAgent, BOULWARE_EXPONENT, CONCEDER_EXPONENT,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProtocolError {
    #[error("session already terminated")]
    Terminal,
    #[error("out of turn: it is {expected}'s turn, {got} acted")]
    OutOfTurn { expected: Party, got: Party },
    #[error("accept without a standing offer from the counterpart")]
    NoStandingOffer,
    #[error("invalid bid: {0}")]
    InvalidBid(DomainError),
    #[error("{party} would get {utility} which is below its reservation {reservation}")]
    BelowReservation {
        party: Party,
        utility: f64,
        reservation: f64,
    },
    #[error("no bid meets reservation {0}")]
    NoFeasibleBid(f64),
    #[error("invalid session config: {}", .0.join("; "))]
    Config(Vec<String>),
}

/// How `u_P_est` is obtained for monitoring.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimationMode {
    /// Frequency model once P has bid; before that the declared estimate if
    /// any, otherwise an indifferent profile.
    #[default]
    Frequency,
    /// Always the declared `estimated_profile_P`.
    Declared,
}

/// Who chooses a party's actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StrategySpec {
    /// Actions arrive through the API.
    Human,
    /// Time-dependent concession using the session's `support_exponent`.
    Support,
    TimeDependent {
        exponent: f64,
    },
    Boulware,
    Conceder,
    Random,
    Scripted {
        actions: Vec<Action>,
    },
}

impl StrategySpec {
    pub fn is_builtin(&self) -> bool {
        !matches!(self, StrategySpec::Human)
    }

    pub fn build(&self, party: Party, seed: u64) -> Option<Box<dyn NegotiationStrategy>> {
        Some(match self {
            StrategySpec::Human => return None,
            StrategySpec::Support => Box::new(TimeDependentAgent::support()),
            StrategySpec::TimeDependent { exponent } => Box::new(TimeDependentAgent::new(*exponent)),
            StrategySpec::Boulware => Box::new(TimeDependentAgent::new(BOULWARE_EXPONENT)),
            StrategySpec::Conceder => Box::new(TimeDependentAgent::new(CONCEDER_EXPONENT)),
            StrategySpec::Random => Box::new(RandomAgent::new(seed, party)),
            StrategySpec::Scripted { actions } => Box::new(ScriptedAgent::new(actions.clone())),
        })
    }
}

fn default_exponent() -> f64 {
    1.0
}

fn default_resolution() -> usize {
    DEFAULT_LEO_RESOLUTION
}

/// Everything needed to run one session. This is also the unit whose digest
/// the change log tracks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub domain: Domain,
    #[serde(rename = "profile_H")]
    pub profile_h: AdditiveUtilityProfile,
    #[serde(rename = "true_profile_P", default, skip_serializing_if = "Option::is_none")]
    pub true_profile_p: Option<AdditiveUtilityProfile>,
    #[serde(rename = "estimated_profile_P", default, skip_serializing_if = "Option::is_none")]
    pub estimated_profile_p: Option<AdditiveUtilityProfile>,
    #[serde(default)]
    pub estimation: EstimationMode,
    pub reservation: PartyPair<f64>,
    pub deadline_rounds: u32,
    #[serde(default)]
    pub seed: u64,
    pub active_principle: FairnessPrinciple,
    pub strategies: PartyPair<StrategySpec>,
    #[serde(default = "default_exponent")]
    pub support_exponent: f64,
    #[serde(default)]
    pub analytics_view: AnalyticsView,
    #[serde(default = "default_resolution")]
    pub leo_resolution: usize,
    #[serde(default)]
    pub background: BackgroundConfig,
}

impl SessionConfig {
    /// Every problem with the config, not just the first.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.deadline_rounds < 1 {
            out.push("deadline_rounds must be at least 1".to_string());
        }
        for party in [Party::H, Party::P] {
            let r = *self.reservation.get(party);
            if !(0.0..=1.0).contains(&r) {
                out.push(format!("reservation.{party} = {r} outside [0,1]"));
            }
        }
        if let Err(e) = self.profile_h.check_domain(&self.domain) {
            out.push(format!("profile_H: {e}"));
        }
        if let Some(p) = &self.true_profile_p {
            if let Err(e) = p.check_domain(&self.domain) {
                out.push(format!("true_profile_P: {e}"));
            }
        }
        if let Some(p) = &self.estimated_profile_p {
            if let Err(e) = p.check_domain(&self.domain) {
                out.push(format!("estimated_profile_P: {e}"));
            }
        }
        if self.estimation == EstimationMode::Declared && self.estimated_profile_p.is_none() {
            out.push("estimation = declared requires estimated_profile_P".to_string());
        }
        if let Err(e) = self.active_principle.validate() {
            out.push(format!("active_principle: {e}"));
        }
        if !(self.support_exponent.is_finite() && self.support_exponent > 0.0) {
            out.push(format!("support_exponent {} must be positive", self.support_exponent));
        }
        if self.leo_resolution < 2 {
            out.push(format!("leo_resolution {} must be at least 2", self.leo_resolution));
        }
        for party in [Party::H, Party::P] {
            match self.strategies.get(party) {
                StrategySpec::TimeDependent { exponent } if !(exponent.is_finite() && *exponent > 0.0) => {
                    out.push(format!("strategies.{party}: exponent {exponent} must be positive"));
                }
                StrategySpec::Random
                | StrategySpec::Support
                | StrategySpec::TimeDependent { .. }
                | StrategySpec::Boulware
                | StrategySpec::Conceder
                    if party == Party::P && self.true_profile_p.is_none() =>
                {
                    out.push(format!("strategies.{party}: builtin strategy needs true_profile_P"));
                }
                _ => {}
            }
        }
        out.extend(self.background.problems());
        out
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ProtocolError::Config(problems))
        }
    }

    /// The profile `party` itself negotiates with, when the engine knows it.
    pub fn own_profile(&self, party: Party) -> Option<&AdditiveUtilityProfile> {
        match party {
            Party::H => Some(&self.profile_h),
            Party::P => self.true_profile_p.as_ref(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Offer(Bid),
    Accept,
    End,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionKind {
    Offer,
    Accept,
    End,
}

impl Action {
    pub fn kind(&self) -> ActionKind {
        match self {
            Action::Offer(_) => ActionKind::Offer,
            Action::Accept => ActionKind::Accept,
            Action::End => ActionKind::End,
        }
    }
}

/// One line of the transcript file. Field order is part of the format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub round: u32,
    pub party: Party,
    pub action: ActionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bid: Option<Bid>,
    #[serde(rename = "u_H", default, skip_serializing_if = "Option::is_none")]
    pub u_h: Option<f64>,
    #[serde(rename = "u_P_est", default, skip_serializing_if = "Option::is_none")]
    pub u_p_est: Option<f64>,
    pub timestamp: u64,
}

impl TranscriptEntry {
    /// The action that produced this entry; `None` for an offer line without a bid.
    pub fn to_action(&self) -> Option<Action> {
        Some(match self.action {
            ActionKind::Offer => Action::Offer(self.bid.clone()?),
            ActionKind::Accept => Action::Accept,
            ActionKind::End => Action::End,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FailureReason {
    Deadline,
    Ended,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "lowercase")]
pub enum SessionStatus {
    Open,
    Agreed { bid: Bid, point: UtilityPoint },
    Failed { reason: FailureReason },
}

impl SessionStatus {
    pub fn is_terminal(&self) -> bool {
        !matches!(self, SessionStatus::Open)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum OutcomeResult {
    Agreement { bid: Bid, point: UtilityPoint },
    NoAgreement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub result: OutcomeResult,
    pub rounds_used: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandingOffer {
    pub party: Party,
    pub bid: Bid,
    pub index: usize,
}

/// Source of transcript timestamps.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Clock {
    /// Event sequence numbers; makes transcripts byte-reproducible.
    #[default]
    Logical,
    /// Milliseconds since the Unix epoch.
    Wall,
}

/// Protocol state of one session plus the engine's knowledge about it.
#[derive(Debug, Clone)]
pub struct SessionState {
    config: SessionConfig,
    bids: Vec<Bid>,
    own_utilities: PartyPair<Option<Vec<f64>>>,
    round: u32,
    turn: Party,
    transcript: Vec<TranscriptEntry>,
    status: SessionStatus,
    standing: Option<StandingOffer>,
    opponent: FrequencyModel,
    clock: Clock,
    ticks: u64,
}

fn utilities_of(bids: &[Bid], profile: &AdditiveUtilityProfile) -> Vec<f64> {
    bids.iter()
        .map(|b| utility(profile, b).expect("profile checked against domain"))
        .collect()
}

/// Uniform weights and every evaluation at 1: used before anything is known.
fn indifferent_profile(domain: &Domain) -> AdditiveUtilityProfile {
    let n = domain.issues().len() as f64;
    let data = ProfileData {
        domain: domain.name().to_string(),
        weights: domain.issues().iter().map(|i| (i.name.clone(), 1.0 / n)).collect(),
        evaluations: domain
            .issues()
            .iter()
            .map(|i| (i.name.clone(), i.values.iter().map(|v| (v.clone(), 1.0)).collect()))
            .collect(),
    };
    let mut data = data;
    let sum: f64 = data.weights.values().sum();
    for w in data.weights.values_mut() {
        *w /= sum;
    }
    AdditiveUtilityProfile::try_from(data).expect("indifferent profile is normalized")
}

/// Starts a session: round 0, `H` to move, empty transcript.
pub fn create_session(config: SessionConfig) -> Result<SessionState, ProtocolError> {
    SessionState::new(config, Clock::Logical)
}

impl SessionState {
    pub fn new(config: SessionConfig, clock: Clock) -> Result<Self, ProtocolError> {
        config.validate()?;
        let bids = enumerate_bids(&config.domain);
        let own_utilities = PartyPair::new(
            Some(utilities_of(&bids, &config.profile_h)),
            config.true_profile_p.as_ref().map(|p| utilities_of(&bids, p)),
        );
        let opponent = FrequencyModel::new(&config.domain);
        Ok(Self {
            config,
            bids,
            own_utilities,
            round: 0,
            turn: Party::H,
            transcript: Vec::new(),
            status: SessionStatus::Open,
            standing: None,
            opponent,
            clock,
            ticks: 0,
        })
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn bids(&self) -> &[Bid] {
        &self.bids
    }

    pub fn round(&self) -> u32 {
        self.round
    }

    pub fn turn(&self) -> Party {
        self.turn
    }

    pub fn transcript(&self) -> &[TranscriptEntry] {
        &self.transcript
    }

    pub fn status(&self) -> &SessionStatus {
        &self.status
    }

    pub fn standing_offer(&self) -> Option<&StandingOffer> {
        self.standing.as_ref()
    }

    pub fn opponent_model(&self) -> &FrequencyModel {
        &self.opponent
    }

    /// Normalized time `round / deadline`.
    pub fn time(&self) -> f64 {
        f64::from(self.round) / f64::from(self.config.deadline_rounds)
    }

    /// Next timestamp from the session clock.
    pub fn now(&mut self) -> u64 {
        let t = match self.clock {
            Clock::Logical => self.ticks,
            Clock::Wall => SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_millis() as u64)
                .unwrap_or(0),
        };
        self.ticks += 1;
        t
    }

    /// Utilities `party` itself assigns to each bid, when known.
    pub fn own_utilities(&self, party: Party) -> Option<&[f64]> {
        self.own_utilities.get(party).as_deref()
    }

    /// The engine's current estimate of P's profile.
    pub fn estimated_profile_p(&self) -> AdditiveUtilityProfile {
        match self.config.estimation {
            EstimationMode::Declared => self
                .config
                .estimated_profile_p
                .clone()
                .expect("validated: declared mode has a profile"),
            EstimationMode::Frequency => match self.opponent.estimated_profile() {
                Ok(p) => p,
                Err(_) => self
                    .config
                    .estimated_profile_p
                    .clone()
                    .unwrap_or_else(|| indifferent_profile(&self.config.domain)),
            },
        }
    }

    /// Every bid placed at `(u_H, u_P_est)`.
    pub fn estimated_points(&self) -> Vec<UtilityPoint> {
        let est = self.estimated_profile_p();
        let h = self.own_utilities.h.as_ref().expect("H profile always known");
        self.bids
            .iter()
            .enumerate()
            .map(|(i, b)| {
                let p = utility(&est, b).expect("estimate covers domain");
                UtilityPoint::new(h[i], p, b.clone(), i).expect("utilities in [0,1]")
            })
            .collect()
    }

    /// Point of `bid` using P's true profile when known, else the estimate.
    pub fn outcome_point(&self, bid: &Bid) -> Result<UtilityPoint, DomainError> {
        let index = self.config.domain.bid_index(bid)?;
        let u_h = utility(&self.config.profile_h, bid)?;
        let u_p = match &self.config.true_profile_p {
            Some(p) => utility(p, bid)?,
            None => utility(&self.estimated_profile_p(), bid)?,
        };
        UtilityPoint::new(u_h, u_p, bid.clone(), index)
    }

    fn check_reservation(&self, party: Party, index: usize) -> Result<(), ProtocolError> {
        if let Some(utils) = self.own_utilities(party) {
            let reservation = *self.config.reservation.get(party);
            if utils[index] < reservation {
                return Err(ProtocolError::BelowReservation {
                    party,
                    utility: utils[index],
                    reservation,
                });
            }
        }
        Ok(())
    }

    fn counterpart_standing(&self, party: Party) -> Option<&StandingOffer> {
        self.standing.as_ref().filter(|s| s.party != party)
    }

    /// Overwrites the timestamp of the latest transcript entry, so a rebuilt
    /// session keeps the times it was recorded with.
    pub(crate) fn restamp_last(&mut self, timestamp: u64) {
        if let Some(e) = self.transcript.last_mut() {
            e.timestamp = timestamp;
        }
    }

    /// Checks `action` without changing anything.
    pub fn check_action(&self, party: Party, action: &Action) -> Result<(), ProtocolError> {
        if self.status.is_terminal() {
            return Err(ProtocolError::Terminal);
        }
        if party != self.turn {
            return Err(ProtocolError::OutOfTurn {
                expected: self.turn,
                got: party,
            });
        }
        match action {
            Action::Offer(bid) => {
                let bid = self.config.domain.canonical(bid).map_err(ProtocolError::InvalidBid)?;
                let index = self.config.domain.bid_index(&bid).expect("canonical");
                self.check_reservation(party, index)
            }
            Action::Accept => {
                let standing = self.counterpart_standing(party).ok_or(ProtocolError::NoStandingOffer)?;
                self.check_reservation(party, standing.index)
            }
            Action::End => Ok(()),
        }
    }

    /// Applies `action` by `party`. On error the state is untouched.
    pub fn submit_action(&mut self, party: Party, action: Action) -> Result<&TranscriptEntry, ProtocolError> {
        self.check_action(party, &action)?;
        let round = self.round;
        let (kind, bid) = match action {
            Action::Offer(bid) => {
                let bid = self.config.domain.canonical(&bid).expect("checked");
                let index = self.config.domain.bid_index(&bid).expect("checked");
                if party == Party::P {
                    self.opponent.observe_bid(&bid).expect("checked");
                }
                self.standing = Some(StandingOffer {
                    party,
                    bid: bid.clone(),
                    index,
                });
                self.turn = party.other();
                self.round += 1;
                if self.round >= self.config.deadline_rounds {
                    self.status = SessionStatus::Failed {
                        reason: FailureReason::Deadline,
                    };
                }
                (ActionKind::Offer, Some(bid))
            }
            Action::Accept => {
                let bid = self.standing.as_ref().expect("checked").bid.clone();
                let point = self.outcome_point(&bid).map_err(ProtocolError::InvalidBid)?;
                self.status = SessionStatus::Agreed {
                    bid: bid.clone(),
                    point,
                };
                (ActionKind::Accept, Some(bid))
            }
            Action::End => {
                self.status = SessionStatus::Failed {
                    reason: FailureReason::Ended,
                };
                (ActionKind::End, None)
            }
        };
        let (u_h, u_p_est) = match &bid {
            Some(b) => {
                let est = self.estimated_profile_p();
                (
                    Some(utility(&self.config.profile_h, b).expect("checked")),
                    Some(utility(&est, b).expect("checked")),
                )
            }
            None => (None, None),
        };
        let timestamp = self.now();
        self.transcript.push(TranscriptEntry {
            round,
            party,
            action: kind,
            bid,
            u_h,
            u_p_est,
            timestamp,
        });
        Ok(self.transcript.last().expect("just pushed"))
    }

    /// Exactly the action kinds [`SessionState::submit_action`] would admit.
    pub fn legal_actions(&self, party: Party) -> Vec<ActionKind> {
        if self.status.is_terminal() || party != self.turn {
            return Vec::new();
        }
        let mut out = Vec::new();
        let can_offer = match self.own_utilities(party) {
            Some(utils) => utils.iter().any(|&u| u >= *self.config.reservation.get(party)),
            None => true,
        };
        if can_offer {
            out.push(ActionKind::Offer);
        }
        if self.check_action(party, &Action::Accept).is_ok() {
            out.push(ActionKind::Accept);
        }
        out.push(ActionKind::End);
        out
    }

    pub fn outcome(&self) -> Option<Outcome> {
        let result = match &self.status {
            SessionStatus::Open => return None,
            SessionStatus::Agreed { bid, point } => OutcomeResult::Agreement {
                bid: bid.clone(),
                point: point.clone(),
            },
            SessionStatus::Failed { .. } => OutcomeResult::NoAgreement,
        };
        Some(Outcome {
            result,
            rounds_used: self.round,
        })
    }

    /// Context handed to a builtin strategy of `party`.
    pub fn strategy_context(&self, party: Party) -> Option<StrategyContext<'_>> {
        let own_utilities = self.own_utilities(party)?;
        Some(StrategyContext {
            party,
            bids: &self.bids,
            own_utilities,
            reservation: *self.config.reservation.get(party),
            time: self.time(),
            standing: self.counterpart_standing(party).map(|s| s.index),
            support_exponent: self.config.support_exponent,
        })
    }

    /// Switches to `config` between rounds. A changed domain is rebased: the
    /// transcript stays, the opponent model gains the new issues and the
    /// standing offer embeds with each new issue's first value.
    pub fn reconfigure(&mut self, config: SessionConfig) -> Result<(), ProtocolError> {
        config.validate()?;
        if config.domain != self.config.domain {
            self.bids = enumerate_bids(&config.domain);
            self.opponent.rebase(&config.domain);
            if let Some(standing) = &mut self.standing {
                let bid = config
                    .domain
                    .embed_with_default(&standing.bid)
                    .map_err(ProtocolError::InvalidBid)?;
                standing.index = config.domain.bid_index(&bid).expect("embedded");
                standing.bid = bid;
            }
        }
        self.own_utilities = PartyPair::new(
            Some(utilities_of(&self.bids, &config.profile_h)),
            config.true_profile_p.as_ref().map(|p| utilities_of(&self.bids, p)),
        );
        self.config = config;
        Ok(())
    }
}
