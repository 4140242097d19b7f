#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use negotiator_core::analytics::{AnalyticsView, FairnessPrinciple, DEFAULT_LEO_RESOLUTION};
use negotiator_core::domain::{
    utility_points, AdditiveUtilityProfile, Domain, DomainExtension, Issue, NeedsProfile, PartyPair, ProfileData,
    ProfileDelta, UtilityPoint,
};
use negotiator_core::protocol::{Action, EstimationMode, SessionConfig, StrategySpec};
use negotiator_core::reflection::{
    config_digest, replay_changelog, AberrationKind, BackgroundConfig, ProposalAction, ProposalKind, ProposalStatus,
    Verdict,
};
use negotiator_core::session::{DecisionPolicy, PolicyRule, Session};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub fn w1_domain() -> Domain {
    Domain::new(
        "w1",
        vec![
            Issue::new("price", ["low", "mid", "high"]),
            Issue::new("delivery", ["slow", "fast"]),
        ],
    )
    .unwrap()
}

pub fn w1_h() -> AdditiveUtilityProfile {
    AdditiveUtilityProfile::new(
        "w1",
        [("price", 0.7), ("delivery", 0.3)],
        [
            ("price", vec![("low", 1.0), ("mid", 0.5), ("high", 0.0)]),
            ("delivery", vec![("slow", 0.0), ("fast", 1.0)]),
        ],
    )
    .unwrap()
}

pub fn w1_p() -> AdditiveUtilityProfile {
    AdditiveUtilityProfile::new(
        "w1",
        [("price", 0.6), ("delivery", 0.4)],
        [
            ("price", vec![("low", 0.0), ("mid", 0.5), ("high", 1.0)]),
            ("delivery", vec![("slow", 1.0), ("fast", 0.0)]),
        ],
    )
    .unwrap()
}

pub fn needs_quarter() -> NeedsProfile {
    NeedsProfile::new(0.25, 0.75).unwrap()
}

pub fn sidejob() -> DomainExtension {
    let delta = |w| ProfileDelta {
        weight: w,
        evaluations: BTreeMap::from([("none".to_string(), 0.0), ("done".to_string(), 1.0)]),
    };
    DomainExtension {
        issue: Issue::new("sidejob", ["none", "done"]),
        deltas: PartyPair::new(delta(0.5), delta(0.1)),
    }
}

pub fn random_domain(rng: &mut ChaCha8Rng, max_issues: usize, max_values: usize) -> Domain {
    let issues = rng.random_range(1..=max_issues);
    Domain::new(
        "random",
        (0..issues)
            .map(|i| {
                let values = rng.random_range(2..=max_values);
                Issue::new(format!("i{i}"), (0..values).map(|v| format!("v{v}")))
            })
            .collect(),
    )
    .unwrap()
}

/// Random normalized profile. Evaluations are quarter steps so that utility
/// ties are common.
pub fn random_profile(rng: &mut ChaCha8Rng, domain: &Domain) -> AdditiveUtilityProfile {
    let raw: Vec<f64> = domain
        .issues()
        .iter()
        .map(|_| f64::from(rng.random_range(0..=4u8)))
        .collect();
    let total: f64 = raw.iter().sum();
    let raw: Vec<f64> = if total == 0.0 { vec![1.0; raw.len()] } else { raw };
    let total: f64 = raw.iter().sum();
    let mut weights = BTreeMap::new();
    let mut evaluations = BTreeMap::new();
    for (issue, w) in domain.issues().iter().zip(raw) {
        weights.insert(issue.name.clone(), w / total);
        let best = rng.random_range(0..issue.values.len());
        let evals = issue
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let e = if i == best {
                    1.0
                } else {
                    f64::from(rng.random_range(0..=4u8)) / 4.0
                };
                (v.clone(), e)
            })
            .collect();
        evaluations.insert(issue.name.clone(), evals);
    }
    AdditiveUtilityProfile::try_from(ProfileData {
        domain: domain.name().to_string(),
        weights,
        evaluations,
    })
    .unwrap()
}

/// Random normalized profile with continuous weights and evaluations, so no
/// two bids tie.
pub fn generic_profile(rng: &mut ChaCha8Rng, domain: &Domain) -> AdditiveUtilityProfile {
    let raw: Vec<f64> = domain.issues().iter().map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut weights = BTreeMap::new();
    let mut evaluations = BTreeMap::new();
    for (issue, w) in domain.issues().iter().zip(raw) {
        weights.insert(issue.name.clone(), w / total);
        let evals: Vec<f64> = issue.values.iter().map(|_| rng.random_range(0.0..1.0)).collect();
        let top = evals.iter().copied().fold(0.0, f64::max);
        evaluations.insert(
            issue.name.clone(),
            issue
                .values
                .iter()
                .cloned()
                .zip(evals.into_iter().map(|e| e / top))
                .collect(),
        );
    }
    AdditiveUtilityProfile::try_from(ProfileData {
        domain: domain.name().to_string(),
        weights,
        evaluations,
    })
    .unwrap()
}

/// Same weights, evaluations turned upside down and renormalized.
pub fn opposed_profile(profile: &AdditiveUtilityProfile) -> AdditiveUtilityProfile {
    let mut data = profile.data().clone();
    for evals in data.evaluations.values_mut() {
        let top = evals.values().map(|e| 1.0 - e).fold(0.0, f64::max);
        for e in evals.values_mut() {
            *e = if top > 0.0 { (1.0 - *e) / top } else { 1.0 };
        }
    }
    AdditiveUtilityProfile::try_from(data).unwrap()
}

pub fn random_points(rng: &mut ChaCha8Rng, max_issues: usize, max_values: usize) -> Vec<UtilityPoint> {
    let d = random_domain(rng, max_issues, max_values);
    let h = random_profile(rng, &d);
    let p = random_profile(rng, &d);
    utility_points(&d, &h, &p).unwrap()
}

fn dominates(a: &UtilityPoint, b: &UtilityPoint) -> bool {
    a.u_h() >= b.u_h() && a.u_p() >= b.u_p() && (a.u_h() > b.u_h() || a.u_p() > b.u_p())
}

/// Quadratic dominance check, kept deliberately naive.
pub fn frontier_oracle(points: &[UtilityPoint]) -> Vec<UtilityPoint> {
    points
        .iter()
        .filter(|q| !points.iter().any(|r| dominates(r, q)))
        .cloned()
        .collect()
}

/// Exhaustive argmax of the minimum coordinate; ties by larger sum, then
/// lower bid index.
pub fn egalitarian_oracle(frontier: &[UtilityPoint]) -> UtilityPoint {
    let mut best = frontier[0].clone();
    for q in &frontier[1..] {
        let (qm, bm) = (q.u_h().min(q.u_p()), best.u_h().min(best.u_p()));
        let (qs, bs) = (q.u_h() + q.u_p(), best.u_h() + best.u_p());
        if qm > bm || (qm == bm && (qs > bs || (qs == bs && q.index < best.index))) {
            best = q.clone();
        }
    }
    best
}

pub fn sha256_json<T: serde::Serialize>(value: &T) -> String {
    hex::encode(Sha256::digest(serde_json::to_vec(value).unwrap()))
}

fn principle(rng: &mut ChaCha8Rng) -> FairnessPrinciple {
    let a = f64::from(rng.random_range(1..=9u8)) / 10.0;
    let b = 1.0 - a;
    match rng.random_range(0..3) {
        0 => FairnessPrinciple::Equality,
        1 => FairnessPrinciple::Need {
            needs: NeedsProfile::new(a, b).unwrap(),
        },
        _ => FairnessPrinciple::Equity {
            investments: PartyPair::new(a, b),
        },
    }
}

fn strategy(rng: &mut ChaCha8Rng) -> StrategySpec {
    match rng.random_range(0..5) {
        0 => StrategySpec::Boulware,
        1 => StrategySpec::Conceder,
        2 => StrategySpec::Random,
        3 => StrategySpec::Support,
        _ => StrategySpec::TimeDependent {
            exponent: rng.random_range(0.1..5.0),
        },
    }
}

fn random_extension(rng: &mut ChaCha8Rng) -> DomainExtension {
    let values = rng.random_range(2..=3);
    let issue = Issue::new("extra", (0..values).map(|v| format!("x{v}")));
    let delta = |rng: &mut ChaCha8Rng| ProfileDelta {
        weight: f64::from(rng.random_range(0..=5u8)) / 10.0,
        evaluations: issue
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| {
                (
                    v.clone(),
                    if i == 0 {
                        1.0
                    } else {
                        f64::from(rng.random_range(0..=4u8)) / 4.0
                    },
                )
            })
            .collect(),
    };
    let h = delta(rng);
    let p = delta(rng);
    DomainExtension {
        deltas: PartyPair::new(h, p),
        issue,
    }
}

/// Random agent-vs-agent session plus a random stand-in decision policy.
pub fn fuzz_case(seed: u64) -> (SessionConfig, DecisionPolicy) {
    let mut rng = rand::SeedableRng::seed_from_u64(seed);
    let rng: &mut ChaCha8Rng = &mut rng;
    let domain = random_domain(rng, 3, 4);
    let profile_h = random_profile(rng, &domain);
    let true_p = random_profile(rng, &domain);
    let declared = rng.random_bool(0.3);
    let active = principle(rng);
    let needs = match active {
        FairnessPrinciple::Need { needs } => needs,
        _ => NeedsProfile::new(0.4, 0.6).unwrap(),
    };
    let config = SessionConfig {
        profile_h,
        true_profile_p: Some(true_p.clone()),
        estimated_profile_p: declared.then_some(true_p),
        estimation: if declared {
            EstimationMode::Declared
        } else {
            EstimationMode::Frequency
        },
        reservation: PartyPair::new(rng.random_range(0.0..0.6), rng.random_range(0.0..0.6)),
        deadline_rounds: rng.random_range(2..=60),
        seed,
        active_principle: active,
        strategies: PartyPair::new(strategy(rng), strategy(rng)),
        support_exponent: rng.random_range(0.2..3.0),
        analytics_view: if rng.random_bool(0.2) {
            AnalyticsView::NeedsTransformed { needs }
        } else {
            AnalyticsView::Original
        },
        leo_resolution: DEFAULT_LEO_RESOLUTION,
        background: BackgroundConfig {
            power_index_enabled: rng.random_bool(0.5),
            ..BackgroundConfig::default()
        },
        domain,
    };
    let kinds = [
        ProposalKind::SwitchPrinciple,
        ProposalKind::ApplyNeedsTransform,
        ProposalKind::ExtendDomain,
        ProposalKind::ChangeStrategy,
        ProposalKind::NoChange,
    ];
    let mut rules = Vec::new();
    for kind in kinds {
        if rng.random_bool(0.2) {
            continue; // left pending
        }
        let approve = rng.random_bool(0.5);
        let payload = match kind {
            ProposalKind::ExtendDomain if approve => Some(ProposalAction::ExtendDomain {
                extension: Some(random_extension(rng)),
            }),
            ProposalKind::SwitchPrinciple if approve => Some(ProposalAction::SwitchPrinciple {
                principle: Some(principle(rng)),
            }),
            ProposalKind::ApplyNeedsTransform if approve => {
                Some(ProposalAction::ApplyNeedsTransform { needs: Some(needs) })
            }
            _ => None,
        };
        rules.push(PolicyRule {
            kind,
            aberration: None,
            decision: if approve { Verdict::Approve } else { Verdict::Reject },
            rationale: format!("fuzz rule {}", rules.len()),
            payload,
        });
    }
    (config, DecisionPolicy { rules })
}

/// The scripted repair scenario: need principle, P twice turns down offers
/// that favour it, and the human adds a side job to the agenda.
pub fn scenario() -> (SessionConfig, DecisionPolicy) {
    let d = w1_domain();
    let offer = |v: &[&str]| Action::Offer(d.bid(v).unwrap());
    let h_actions = vec![
        offer(&["mid", "slow"]),
        offer(&["high", "fast"]),
        Action::Offer(d.bid(&["mid", "slow"]).unwrap().extended("sidejob", "done")),
    ];
    let p_actions = vec![offer(&["high", "slow"]), offer(&["high", "slow"]), Action::Accept];
    let config = SessionConfig {
        domain: d.clone(),
        profile_h: w1_h(),
        true_profile_p: Some(w1_p()),
        estimated_profile_p: Some(w1_p()),
        estimation: EstimationMode::Declared,
        reservation: PartyPair::new(0.2, 0.2),
        deadline_rounds: 20,
        seed: 7,
        active_principle: FairnessPrinciple::Need { needs: needs_quarter() },
        strategies: PartyPair::new(
            StrategySpec::Scripted { actions: h_actions },
            StrategySpec::Scripted { actions: p_actions },
        ),
        support_exponent: 1.0,
        analytics_view: AnalyticsView::Original,
        leo_resolution: DEFAULT_LEO_RESOLUTION,
        background: BackgroundConfig::default(),
    };
    let rule = |kind, decision, rationale: &str, payload| PolicyRule {
        kind,
        aberration: Some(AberrationKind::PrincipleMismatch),
        decision,
        rationale: rationale.to_string(),
        payload,
    };
    let policy = DecisionPolicy {
        rules: vec![
            rule(
                ProposalKind::SwitchPrinciple,
                Verdict::Reject,
                "H's needs are real; equality is not the answer",
                None,
            ),
            rule(
                ProposalKind::ExtendDomain,
                Verdict::Approve,
                "P can be compensated with a side job",
                Some(ProposalAction::ExtendDomain {
                    extension: Some(sidejob()),
                }),
            ),
            rule(
                ProposalKind::NoChange,
                Verdict::Reject,
                "P's rejections need an answer",
                None,
            ),
        ],
    };
    (config, policy)
}

/// Checks the tracing conditions on a finished session.
pub fn audit(session: &Session) -> Result<(), String> {
    let log = session.changelog();
    let mut digest = config_digest(session.initial_config());
    let mut decided = BTreeSet::new();
    for entry in log {
        if entry.base_digest != digest {
            return Err(format!("entry {} does not chain from {digest}", entry.seq));
        }
        if entry.changes_config() && entry.proposal.status != ProposalStatus::Approved {
            return Err(format!("entry {} changed config without approval", entry.seq));
        }
        if entry.decision.rationale.trim().is_empty() {
            return Err(format!("entry {} has no rationale", entry.seq));
        }
        if !decided.insert(entry.proposal.id.clone()) {
            return Err(format!("proposal {} decided twice", entry.proposal.id));
        }
        digest = entry.resulting_digest.clone();
    }
    if digest != session.digest() || digest != config_digest(session.state().config()) {
        return Err("change log does not end at the live config".to_string());
    }
    for p in session.proposals() {
        let logged = decided.contains(&p.id);
        if (p.status != ProposalStatus::Pending) != logged {
            return Err(format!("proposal {} status {:?} but logged = {logged}", p.id, p.status));
        }
        if p.executed != (p.status == ProposalStatus::Approved) {
            return Err(format!(
                "proposal {} executed = {} with status {:?}",
                p.id, p.executed, p.status
            ));
        }
    }
    let replayed = replay_changelog(session.initial_config(), log).map_err(|e| e.to_string())?;
    if config_digest(&replayed) != session.digest() {
        return Err("replayed change log ends at a different digest".to_string());
    }
    Ok(())
}
