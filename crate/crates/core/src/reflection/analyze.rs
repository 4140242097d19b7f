use std::fmt;

use serde::{Deserialize, Serialize};

use super::{KnowledgeBase, MonitorReport};
use crate::analytics::deviation_at;
use crate::domain::{Party, PartyPair};
use crate::protocol::{ActionKind, TranscriptEntry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AberrationKind {
    PrincipleMismatch,
    TrendDivergence,
    DeadlineFairness,
    PowerAsymmetry,
}

impl fmt::Display for AberrationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AberrationKind::PrincipleMismatch => "principle-mismatch",
            AberrationKind::TrendDivergence => "trend-divergence",
            AberrationKind::DeadlineFairness => "deadline-fairness",
            AberrationKind::PowerAsymmetry => "power-asymmetry",
        })
    }
}

/// Points at one transcript line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceRef {
    pub entry: usize,
    pub round: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub metric: String,
    pub observed: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aberration {
    pub id: String,
    pub kind: AberrationKind,
    pub evidence: Vec<EvidenceRef>,
    pub explanation: Explanation,
    /// Transcript length when detected.
    pub detected_at: usize,
    pub config_digest: String,
    /// Informational findings carry no expectation of action.
    pub informational: bool,
}

/// Session facts the detectors need besides reports and the knowledge base.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionFacts {
    pub reservation: PartyPair<f64>,
    pub config_digest: String,
}

fn evidence(report: &MonitorReport) -> EvidenceRef {
    EvidenceRef {
        entry: report.entry,
        round: report.round,
    }
}

/// Runs all detectors over the reports made under the current config.
/// Pure: equal inputs give equal output.
pub fn analyze(
    reports: &[MonitorReport],
    transcript: &[TranscriptEntry],
    kb: &KnowledgeBase,
    facts: &SessionFacts,
) -> Vec<Aberration> {
    let current: Vec<&MonitorReport> = reports
        .iter()
        .filter(|r| r.config_digest == facts.config_digest && r.entry < transcript.len())
        .collect();
    let mut found = Vec::new();
    let mut raise = |kind, evidence: Vec<EvidenceRef>, explanation, informational| {
        if evidence.is_empty() {
            return;
        }
        let short = &facts.config_digest[..facts.config_digest.len().min(8)];
        found.push(Aberration {
            id: format!("{kind}-{}-{short}", transcript.len()),
            kind,
            evidence,
            explanation,
            detected_at: transcript.len(),
            config_digest: facts.config_digest.clone(),
            informational,
        });
    };
    let bg = &kb.background;

    // H offers that clearly favoured P, answered by a counter-offer from P
    let rejected: Vec<&MonitorReport> = current
        .iter()
        .copied()
        .filter(|r| r.party == Party::H && r.u_p_est - r.u_h >= bg.mismatch_margin)
        .filter(|r| {
            transcript
                .get(r.entry + 1)
                .is_some_and(|next| next.party == Party::P && next.action == ActionKind::Offer)
        })
        .collect();
    if rejected.len() >= bg.mismatch_count {
        raise(
            AberrationKind::PrincipleMismatch,
            rejected.iter().map(|r| evidence(r)).collect(),
            Explanation {
                metric: "rejected-favourable-offers".to_string(),
                observed: rejected.len() as f64,
                threshold: bg.mismatch_count as f64,
            },
            false,
        );
    }

    if let [a, b, c] = &current[current.len().saturating_sub(3)..] {
        if a.deviation < b.deviation && b.deviation < c.deviation {
            raise(
                AberrationKind::TrendDivergence,
                vec![evidence(a), evidence(b), evidence(c)],
                Explanation {
                    metric: "deviation-increase".to_string(),
                    observed: c.deviation - a.deviation,
                    threshold: 0.0,
                },
                false,
            );
        }
    }

    if let Some(latest) = current.last() {
        if latest.time() >= bg.timing_fraction {
            let last_of = |party| current.iter().rev().find(|r| r.party == party);
            if let (Some(h), Some(p)) = (last_of(Party::H), last_of(Party::P)) {
                let mid = [(h.u_h + p.u_h) / 2.0, (h.u_p_est + p.u_p_est) / 2.0];
                let projected = deviation_at(mid, &kb.principle);
                if projected > bg.mismatch_margin {
                    let mut ev = vec![evidence(h), evidence(p)];
                    ev.sort_by_key(|e| e.entry);
                    raise(
                        AberrationKind::DeadlineFairness,
                        ev,
                        Explanation {
                            metric: "projected-agreement-deviation".to_string(),
                            observed: projected,
                            threshold: bg.mismatch_margin,
                        },
                        false,
                    );
                }
            }
        }
    }

    if bg.power_index_enabled {
        let gap = (facts.reservation.h - facts.reservation.p).abs();
        if gap > bg.mismatch_margin {
            if let Some((entry, last)) = transcript.iter().enumerate().next_back() {
                raise(
                    AberrationKind::PowerAsymmetry,
                    vec![EvidenceRef {
                        entry,
                        round: last.round,
                    }],
                    Explanation {
                        metric: "reservation-gap".to_string(),
                        observed: gap,
                        threshold: bg.mismatch_margin,
                    },
                    true,
                );
            }
        }
    }
    found
}
