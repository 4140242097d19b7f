use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Action, ProtocolError};
use crate::domain::{utility, AdditiveUtilityProfile, Bid, DomainError, Party};

pub const BOULWARE_EXPONENT: f64 = 0.2;
pub const CONCEDER_EXPONENT: f64 = 2.0;

/// Target utility at normalized time `t`:
/// `u_min + (u_max - u_min) * (1 - t^(1/e))`.
///
/// `e < 1` concedes late (Boulware), `e > 1` concedes early (Conceder).
pub fn time_dependent_target(t: f64, e: f64, u_min: f64, u_max: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    u_min + (u_max - u_min) * (1.0 - t.powf(1.0 / e))
}

/// Index of the bid whose utility is closest to `target` among those at or
/// above `reservation`; ties go to the lower index.
pub fn select_index_near_target(utilities: &[f64], target: f64, reservation: f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &u) in utilities.iter().enumerate() {
        if u < reservation {
            continue;
        }
        let d = (u - target).abs();
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((i, d));
        }
    }
    best.map(|(i, _)| i)
}

pub fn select_bid_near_target(
    space: &[Bid],
    profile: &AdditiveUtilityProfile,
    target: f64,
    reservation: f64,
) -> Result<Bid, ProtocolError> {
    let utilities = space
        .iter()
        .map(|b| utility(profile, b))
        .collect::<Result<Vec<_>, DomainError>>()
        .map_err(ProtocolError::InvalidBid)?;
    select_index_near_target(&utilities, target, reservation)
        .map(|i| space[i].clone())
        .ok_or(ProtocolError::NoFeasibleBid(reservation))
}

/// Accept iff the standing offer is worth at least what we would offer next,
/// and never below reservation.
pub fn acceptance_decision(standing_utility: f64, planned_utility: f64, reservation: f64) -> bool {
    standing_utility >= reservation && standing_utility >= planned_utility
}

/// What a builtin strategy sees when it is its turn.
#[derive(Debug, Clone, Copy)]
pub struct StrategyContext<'a> {
    pub party: Party,
    pub bids: &'a [Bid],
    pub own_utilities: &'a [f64],
    pub reservation: f64,
    pub time: f64,
    /// Index of the counterpart's standing offer.
    pub standing: Option<usize>,
    pub support_exponent: f64,
}

impl StrategyContext<'_> {
    fn max_utility(&self) -> f64 {
        self.own_utilities.iter().copied().fold(0.0, f64::max)
    }
}

pub trait NegotiationStrategy: Send {
    fn next_action(&mut self, ctx: &StrategyContext<'_>) -> Action;
}

/// Concedes from its best bid towards its reservation as the deadline nears.
#[derive(Debug, Clone, Copy)]
pub struct TimeDependentAgent {
    // `None` follows the session's support exponent
    exponent: Option<f64>,
}

impl TimeDependentAgent {
    pub fn new(exponent: f64) -> Self {
        Self {
            exponent: Some(exponent),
        }
    }

    pub fn support() -> Self {
        Self { exponent: None }
    }
}

impl NegotiationStrategy for TimeDependentAgent {
    fn next_action(&mut self, ctx: &StrategyContext<'_>) -> Action {
        let e = self.exponent.unwrap_or(ctx.support_exponent);
        let u_max = ctx.max_utility();
        let u_min = ctx.reservation.min(u_max);
        let target = time_dependent_target(ctx.time, e, u_min, u_max);
        let Some(planned) = select_index_near_target(ctx.own_utilities, target, ctx.reservation) else {
            return Action::End;
        };
        if let Some(standing) = ctx.standing {
            let planned_utility = ctx.own_utilities[planned].max(target);
            if acceptance_decision(ctx.own_utilities[standing], planned_utility, ctx.reservation) {
                return Action::Accept;
            }
        }
        Action::Offer(ctx.bids[planned].clone())
    }
}

/// Uniformly random feasible offers, occasional acceptance of feasible
/// standing offers. Seeded, so runs are reproducible.
#[derive(Debug, Clone)]
pub struct RandomAgent {
    rng: ChaCha8Rng,
}

const RANDOM_ACCEPT_PROBABILITY: f64 = 0.2;

impl RandomAgent {
    pub fn new(seed: u64, party: Party) -> Self {
        let stream = match party {
            Party::H => 0,
            Party::P => 1,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { rng }
    }
}

impl NegotiationStrategy for RandomAgent {
    fn next_action(&mut self, ctx: &StrategyContext<'_>) -> Action {
        if let Some(standing) = ctx.standing {
            if ctx.own_utilities[standing] >= ctx.reservation && self.rng.random_bool(RANDOM_ACCEPT_PROBABILITY) {
                return Action::Accept;
            }
        }
        let feasible: Vec<usize> = (0..ctx.bids.len())
            .filter(|&i| ctx.own_utilities[i] >= ctx.reservation)
            .collect();
        if feasible.is_empty() {
            return Action::End;
        }
        let pick = feasible[self.rng.random_range(0..feasible.len())];
        Action::Offer(ctx.bids[pick].clone())
    }
}

/// Plays a fixed list of actions, then ends the session.
#[derive(Debug, Clone)]
pub struct ScriptedAgent {
    actions: VecDeque<Action>,
}

impl ScriptedAgent {
    pub fn new(actions: impl IntoIterator<Item = Action>) -> Self {
        Self {
            actions: actions.into_iter().collect(),
        }
    }
}

impl NegotiationStrategy for ScriptedAgent {
    fn next_action(&mut self, _ctx: &StrategyContext<'_>) -> Action {
        self.actions.pop_front().unwrap_or(Action::End)
    }
}
