use serde::{Deserialize, Serialize};

use super::{KnowledgeBase, ReflectionError};
use crate::analytics::{
    balanced_needs_line, deviation_at, diagonal, distance_to_set, line_of_equal_opportunity, AnalyticsView,
};
use crate::domain::{utility, Bid, Party};
use crate::protocol::{ActionKind, SessionState};

/// Metrics for one offer in the transcript.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorReport {
    pub round: u32,
    /// Position of the offer in the transcript.
    pub entry: usize,
    pub party: Party,
    pub bid: Bid,
    #[serde(rename = "u_H")]
    pub u_h: f64,
    #[serde(rename = "u_P_est")]
    pub u_p_est: f64,
    /// Deviation under the active principle, in original coordinates.
    pub deviation: f64,
    /// Distance to the nearest Line of Equal Opportunity point, in view coordinates.
    pub distance_to_leo: f64,
    pub distance_to_diagonal: f64,
    /// Distance to the balanced-needs line; only under the need principle.
    pub distance_to_lbn: Option<f64>,
    pub deadline_rounds: u32,
    pub view: AnalyticsView,
    pub config_digest: String,
}

impl MonitorReport {
    pub fn time(&self) -> f64 {
        f64::from(self.round) / f64::from(self.deadline_rounds)
    }

    pub fn coordinates(&self) -> [f64; 2] {
        [self.u_h, self.u_p_est]
    }
}

/// Report on the latest offer, with `u_P_est` from the session's current
/// estimate of P.
pub fn monitor_step(
    state: &SessionState,
    kb: &KnowledgeBase,
    config_digest: &str,
) -> Result<MonitorReport, ReflectionError> {
    let (entry, last) = state
        .transcript()
        .iter()
        .enumerate()
        .rev()
        .find(|(_, e)| e.action == ActionKind::Offer)
        .ok_or(ReflectionError::EmptyTranscript)?;
    let config = state.config();
    // embed bids made before a domain extension
    let bid = config
        .domain
        .embed_with_default(last.bid.as_ref().expect("offers carry a bid"))?;
    let u_h = utility(&config.profile_h, &bid)?;
    let u_p_est = utility(&state.estimated_profile_p(), &bid)?;
    let view = config.analytics_view;
    let viewed = view.map([u_h, u_p_est]);
    let points: Vec<_> = state
        .estimated_points()
        .into_iter()
        .map(|mut p| {
            p.coordinates = view.map(p.coordinates);
            p
        })
        .collect();
    let leo = line_of_equal_opportunity(&points, config.leo_resolution)?;
    let distance_to_lbn = kb.principle.needs().map(|needs| match view {
        AnalyticsView::Original => balanced_needs_line(needs).distance(u_h, u_p_est),
        AnalyticsView::NeedsTransformed { .. } => diagonal().distance(viewed[0], viewed[1]),
    });
    Ok(MonitorReport {
        round: last.round,
        entry,
        party: last.party,
        bid,
        u_h,
        u_p_est,
        deviation: deviation_at([u_h, u_p_est], &kb.principle),
        distance_to_leo: distance_to_set(viewed, &leo),
        distance_to_diagonal: diagonal().distance(viewed[0], viewed[1]),
        distance_to_lbn,
        deadline_rounds: config.deadline_rounds,
        view,
        config_digest: config_digest.to_string(),
    })
}
