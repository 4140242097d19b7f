//! Acceptance suite: one line per criterion, non-zero exit if any fails.

mod common;

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use common::*;
use negotiator_core::analytics::{
    balanced_needs_points, diagonal, distance_to_set, egalitarian_point, line_of_equal_opportunity, needs_transform,
    pareto_frontier, DEFAULT_LEO_RESOLUTION,
};
use negotiator_core::domain::{
    enumerate_bids, utility_points, AdditiveUtilityProfile, Domain, Issue, NeedsProfile, Party, ProfileData,
    UtilityPoint,
};
use negotiator_core::opponent::estimation_quality;
use negotiator_core::protocol::{ActionKind, Clock, EstimationMode, OutcomeResult, SessionConfig, StrategySpec};
use negotiator_core::reflection::{AberrationKind, ProposalKind, ProposalStatus, Verdict};
use negotiator_core::session::{replay, Session};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdicts {
    failed: usize,
}

impl Verdicts {
    fn report(&mut self, n: u32, name: &str, result: Result<String, String>) {
        match result {
            Ok(detail) => println!("criterion {n} PASS {name}: {detail}"),
            Err(detail) => {
                self.failed += 1;
                println!("criterion {n} FAIL {name}: {detail}");
            }
        }
    }
}

const DOMAINS: u64 = 100;

fn random_spaces() -> Vec<Vec<UtilityPoint>> {
    (0..DOMAINS)
        .map(|seed| random_points(&mut ChaCha8Rng::seed_from_u64(seed), 5, 5))
        .collect()
}

fn criterion_1(spaces: &[Vec<UtilityPoint>]) -> Result<String, String> {
    let mut elapsed = Duration::ZERO;
    for (seed, points) in spaces.iter().enumerate() {
        let expected = egalitarian_oracle(&frontier_oracle(points));
        let start = Instant::now();
        let got = pareto_frontier(points).and_then(|f| egalitarian_point(&f));
        elapsed += start.elapsed();
        let got = got.map_err(|e| format!("seed {seed}: {e}"))?;
        if got != expected {
            return Err(format!(
                "seed {seed}: got bid {} expected bid {}",
                got.index, expected.index
            ));
        }
    }
    if elapsed >= Duration::from_secs(1) {
        return Err(format!("took {elapsed:?}"));
    }
    Ok(format!("{DOMAINS}/{DOMAINS} domains match, {elapsed:?} total"))
}

fn criterion_2(spaces: &[Vec<UtilityPoint>]) -> Result<String, String> {
    let mut sizes = 0;
    for (seed, points) in spaces.iter().enumerate() {
        let expected: BTreeSet<usize> = frontier_oracle(points).iter().map(|p| p.index).collect();
        let got = pareto_frontier(points).map_err(|e| e.to_string())?;
        let got_set: BTreeSet<usize> = got.points.iter().map(|p| p.index).collect();
        if got_set != expected || got.points.len() != expected.len() {
            return Err(format!("seed {seed}: {got_set:?} vs {expected:?}"));
        }
        sizes += points.len();
    }
    Ok(format!("{DOMAINS}/{DOMAINS} domains match ({sizes} bids)"))
}

fn grid_space(n: usize) -> Vec<UtilityPoint> {
    let values: Vec<String> = (0..n).map(|i| format!("v{i}")).collect();
    let domain = Domain::new(
        "grid",
        vec![Issue::new("a", values.clone()), Issue::new("b", values.clone())],
    )
    .unwrap();
    let ramp = |v: &[String]| {
        v.iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i as f64 / (n - 1) as f64))
            .collect()
    };
    let profile = |wa: f64| {
        AdditiveUtilityProfile::try_from(ProfileData {
            domain: "grid".to_string(),
            weights: [("a".to_string(), wa), ("b".to_string(), 1.0 - wa)].into(),
            evaluations: [("a".to_string(), ramp(&values)), ("b".to_string(), ramp(&values))].into(),
        })
        .unwrap()
    };
    utility_points(&domain, &profile(1.0), &profile(0.0)).unwrap()
}

// same grid shifted by half a cell along u_P, so no point sits on the diagonal
fn staggered_space(n: usize) -> Vec<UtilityPoint> {
    let spacing = 1.0 / (n - 1) as f64;
    grid_space(n)
        .into_iter()
        .map(|mut p| {
            p.coordinates[1] = (p.coordinates[1] + spacing / 2.0).min(1.0);
            p
        })
        .collect()
}

fn criterion_3() -> Result<String, String> {
    let mut details = Vec::new();
    for (label, build) in [
        ("grid", grid_space as fn(usize) -> Vec<UtilityPoint>),
        ("staggered", staggered_space),
    ] {
        let mut previous = f64::INFINITY;
        for n in [10, 30, 100] {
            let spacing = 1.0 / (n - 1) as f64;
            let leo = line_of_equal_opportunity(&build(n), DEFAULT_LEO_RESOLUTION).map_err(|e| e.to_string())?;
            let worst = leo
                .iter()
                .map(|p| diagonal().distance(p.u_h(), p.u_p()))
                .fold(0.0, f64::max);
            if worst > 1.5 * spacing {
                return Err(format!("{label} {n}x{n}: {worst} > 1.5 x {spacing}"));
            }
            if worst > previous {
                return Err(format!("{label} {n}x{n}: {worst} increased from {previous}"));
            }
            previous = worst;
            details.push(format!("{label} {n}x{n} {worst:.4}"));
        }
    }
    Ok(format!("max distance to diagonal: {}", details.join(", ")))
}

fn random_needs(rng: &mut ChaCha8Rng) -> NeedsProfile {
    let a = rng.random_range(0.01..0.99);
    NeedsProfile::new(a, 1.0 - a).unwrap()
}

fn criterion_4() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let bid = enumerate_bids(&w1_domain())[0].clone();
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let needs = random_needs(&mut rng);
        let n = needs.needs();
        let top = n.h.max(n.p);
        let t = rng.random_range(0.0..1.0);
        let p = UtilityPoint::new(t * n.h / top, t * n.p / top, bid.clone(), 0).unwrap();
        let q = needs_transform(&p, &needs);
        worst = worst.max(diagonal().distance(q.u_h(), q.u_p()));
    }
    if worst > 1e-9 {
        return Err(format!("LBN point {worst} from the diagonal"));
    }
    let equal = NeedsProfile::equal();
    for _ in 0..1000 {
        let p = UtilityPoint::new(rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), bid.clone(), 0).unwrap();
        let q = needs_transform(&p, &equal);
        if (q.u_h() - p.u_h()).abs() > 1e-12 || (q.u_p() - p.u_p()).abs() > 1e-12 {
            return Err(format!("equal needs moved {:?} to {:?}", p.coordinates, q.coordinates));
        }
    }
    let argmax = |points: &[UtilityPoint], party: Party| {
        points
            .iter()
            .max_by(|a, b| a.get(party).total_cmp(&b.get(party)).then(b.index.cmp(&a.index)))
            .map(|p| p.index)
    };
    for seed in 0..DOMAINS {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let points = random_points(&mut rng, 4, 5);
        let needs = random_needs(&mut rng);
        let moved: Vec<_> = points.iter().map(|p| needs_transform(p, &needs)).collect();
        for party in [Party::H, Party::P] {
            if argmax(&points, party) != argmax(&moved, party) {
                return Err(format!("seed {seed}: argmax for {party} changed"));
            }
        }
    }
    Ok(format!(
        "LBN max distance {worst:.1e}, identity within 1e-12, argmax kept on {DOMAINS} spaces"
    ))
}

fn criterion_5(sessions: &mut Vec<Session>) -> Result<String, String> {
    let start = Instant::now();
    let (config, policy) = scenario();
    let mut session = Session::new("scenario", config, Clock::Logical, true).map_err(|e| e.to_string())?;
    let mut fired_at = Vec::new();
    while let Some(events) = session.step_builtin().map_err(|e| e.to_string())? {
        for e in &events {
            if let negotiator_core::session::SessionEvent::Aberration(a) = e {
                if a.kind == AberrationKind::PrincipleMismatch {
                    fired_at.push(a.detected_at);
                }
            }
        }
        session.apply_policy(&policy).map_err(|e| e.to_string())?;
    }
    let t = session.state().transcript();
    let rejections: Vec<usize> = (1..t.len())
        .filter(|&i| t[i].party == Party::P && t[i].action == ActionKind::Offer && t[i - 1].party == Party::H)
        .collect();
    if rejections.len() < 2 || fired_at != vec![rejections[1] + 1] {
        return Err(format!(
            "principle-mismatch at {fired_at:?}, rejections at {rejections:?}"
        ));
    }
    let approved_extension = session
        .changelog()
        .iter()
        .any(|e| e.proposal.kind() == ProposalKind::ExtendDomain && e.decision.verdict == Verdict::Approve);
    if !approved_extension || session.state().bids().len() != 12 {
        return Err("side job was not added".to_string());
    }

    // deals that balanced needs in B, with the side job done, against the LEO of B'
    let needs = needs_quarter();
    let original = utility_points(&w1_domain(), &w1_h(), &w1_p()).unwrap();
    let green = balanced_needs_points(&original, &needs, DEFAULT_LEO_RESOLUTION).map_err(|e| e.to_string())?;
    let config = session.state().config();
    let extended = utility_points(
        &config.domain,
        &config.profile_h,
        config.true_profile_p.as_ref().unwrap(),
    )
    .unwrap();
    let leo = line_of_equal_opportunity(&extended, DEFAULT_LEO_RESOLUTION).map_err(|e| e.to_string())?;
    let mut shifted = Vec::new();
    for g in &green {
        let bid = g.bid.extended("sidejob", "done");
        let p = extended.iter().find(|p| p.bid == bid).unwrap();
        let before = distance_to_set(
            g.coordinates,
            &line_of_equal_opportunity(&original, DEFAULT_LEO_RESOLUTION).unwrap(),
        );
        let after = distance_to_set(p.coordinates, &leo);
        if after > 0.05 {
            return Err(format!("{bid} at {:?} is {after:.3} from the LEO of B'", p.coordinates));
        }
        shifted.push(format!("{bid} {before:.3}->{after:.3}"));
    }
    if let Some(OutcomeResult::Agreement { bid, .. }) = session.state().outcome().map(|o| o.result) {
        shifted.push(format!("agreed {bid}"));
    }
    sessions.push(session);
    let elapsed = start.elapsed();
    if elapsed >= Duration::from_secs(1) {
        return Err(format!("took {elapsed:?}"));
    }
    Ok(format!(
        "one principle-mismatch at entry {}, distance to LEO: {}, {elapsed:?}",
        rejections[1],
        shifted.join(", ")
    ))
}

const FUZZ: u64 = 1000;

fn criterion_6(sessions: &mut Vec<Session>) -> Result<String, String> {
    let (mut agreements, mut deadlines, mut changes) = (0, 0, 0);
    for seed in 0..FUZZ {
        let (config, policy) = fuzz_case(seed);
        let mut live = Session::new(format!("fuzz-{seed}"), config.clone(), Clock::Logical, true)
            .map_err(|e| format!("seed {seed}: {e}"))?;
        live.simulate(&policy).map_err(|e| format!("seed {seed}: {e}"))?;
        let state = live.state();
        match state.outcome().map(|o| o.result) {
            Some(OutcomeResult::Agreement { bid, .. }) => {
                let final_config = state.config();
                let index = final_config.domain.bid_index(&bid).unwrap();
                for party in [Party::H, Party::P] {
                    let u = state.own_utilities(party).unwrap()[index];
                    if u < *final_config.reservation.get(party) {
                        return Err(format!("seed {seed}: agreement gives {party} {u} below reservation"));
                    }
                }
                agreements += 1;
            }
            Some(OutcomeResult::NoAgreement) if state.round() == final_rounds(&live) => deadlines += 1,
            other => return Err(format!("seed {seed}: ended with {other:?} at round {}", state.round())),
        }
        let again = replay(live.id(), config, true, state.transcript(), live.changelog())
            .map_err(|e| format!("seed {seed}: replay failed: {e}"))?;
        let (a, b) = (live.summary().unwrap(), again.summary().unwrap());
        if sha256_json(&a) != sha256_json(&b) {
            return Err(format!("seed {seed}: replayed analytics digest differs"));
        }
        changes += live.changelog().iter().filter(|e| e.changes_config()).count();
        sessions.push(live);
    }
    Ok(format!(
        "{FUZZ} sessions: {agreements} agreements, {deadlines} deadlines, {changes} config changes, all replays identical"
    ))
}

fn final_rounds(session: &Session) -> u32 {
    session.state().config().deadline_rounds
}

const QUALITY_SEEDS: u64 = 50;
const DISTINCT_BIDS: usize = 20;

/// Spearman correlation of the frequency estimate once P has made
/// `DISTINCT_BIDS` different offers.
fn estimate_after_distinct_bids(seed: u64) -> (f64, bool) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let domain = Domain::new(
        "three",
        (0..3)
            .map(|i| Issue::new(format!("i{i}"), (0..4).map(|v| format!("v{v}"))))
            .collect(),
    )
    .unwrap();
    let p = generic_profile(&mut rng, &domain);
    let h = opposed_profile(&p);
    let config = SessionConfig {
        domain: domain.clone(),
        profile_h: h,
        true_profile_p: Some(p.clone()),
        estimated_profile_p: None,
        estimation: EstimationMode::Frequency,
        reservation: negotiator_core::domain::PartyPair::new(0.95, 0.0),
        deadline_rounds: 500,
        seed,
        active_principle: negotiator_core::analytics::FairnessPrinciple::Equality,
        strategies: negotiator_core::domain::PartyPair::new(
            StrategySpec::TimeDependent { exponent: 0.01 },
            StrategySpec::Boulware,
        ),
        support_exponent: 1.0,
        analytics_view: Default::default(),
        leo_resolution: DEFAULT_LEO_RESOLUTION,
        background: Default::default(),
    };
    let mut session = Session::new("quality", config, Clock::Logical, false).unwrap();
    let mut seen = BTreeSet::new();
    while seen.len() < DISTINCT_BIDS {
        if session.step_builtin().unwrap().is_none() {
            break;
        }
        let last = session.state().transcript().last().unwrap();
        if last.party == Party::P {
            if let Some(bid) = &last.bid {
                seen.insert(bid.to_string());
            }
        }
    }
    // P may accept before it ever bids; nothing learned counts as no correlation
    let rho = match session.state().opponent_model().estimated_profile() {
        Ok(estimate) => estimation_quality(&domain, &estimate, &p).unwrap(),
        Err(_) => 0.0,
    };
    (rho, seen.len() >= DISTINCT_BIDS)
}

fn criterion_7() -> Result<String, String> {
    let runs: Vec<(f64, bool)> = (0..QUALITY_SEEDS).map(estimate_after_distinct_bids).collect();
    let reached = runs.iter().filter(|r| r.1).count();
    let mut rhos: Vec<f64> = runs.into_iter().map(|r| r.0).collect();
    rhos.sort_by(f64::total_cmp);
    let median = (rhos[rhos.len() / 2 - 1] + rhos[rhos.len() / 2]) / 2.0;
    let detail = format!(
        "median Spearman {median:.3} over {QUALITY_SEEDS} seeds (min {:.3}, max {:.3}), {reached} reached {DISTINCT_BIDS} distinct bids",
        rhos[0],
        rhos[rhos.len() - 1]
    );
    if median >= 0.7 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_8(sessions: &[Session]) -> Result<String, String> {
    let (mut changes, mut no_change, mut rejected) = (0, 0, 0);
    for s in sessions {
        audit(s).map_err(|e| format!("{}: {e}", s.id()))?;
        for e in s.changelog() {
            if e.changes_config() {
                changes += 1;
            }
            if e.proposal.kind() == ProposalKind::NoChange {
                no_change += 1;
            }
            if e.proposal.status == ProposalStatus::Rejected {
                rejected += 1;
            }
        }
    }
    if no_change == 0 {
        return Err("no no-change decision was exercised".to_string());
    }
    Ok(format!(
        "{} sessions audited: {changes} config changes each with one approval, {no_change} no-change and {rejected} rejections logged, all change logs replay to the final digest",
        sessions.len()
    ))
}

fn main() {
    let mut v = Verdicts { failed: 0 };
    let spaces = random_spaces();
    let mut sessions = Vec::new();
    v.report(1, "egalitarian point oracle", criterion_1(&spaces));
    v.report(2, "Pareto frontier oracle", criterion_2(&spaces));
    v.report(3, "LEO convergence", criterion_3());
    v.report(4, "needs-transform geometry", criterion_4());
    v.report(5, "side-job scenario", criterion_5(&mut sessions));
    v.report(6, "protocol determinism and safety", criterion_6(&mut sessions));
    v.report(7, "opponent-model quality", criterion_7());
    v.report(8, "tracing audit", criterion_8(&sessions));
    if v.failed > 0 {
        println!("{} acceptance criteria failed", v.failed);
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
