//! Runs without a human: simulations driven by a scripted decision policy,
//! and replays of recorded transcripts.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use negotiator_core::domain::Party;
use negotiator_core::protocol::{Clock, OutcomeResult};
use negotiator_core::session::{replay, RunSummary, Session, SessionError};
use thiserror::Error;

use crate::store::{read_jsonl, RunConfig, SessionFiles, StoreError, CHANGELOG_FILE, CONFIG_FILE};

#[derive(Debug, Error)]
pub enum HeadlessError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("strategies.{0}: a headless run needs a builtin strategy for both parties")]
    HumanParty(Party),
    #[error("reflection.policy: required when reflection is enabled")]
    MissingPolicy,
    #[error("{}: transcript has no parent directory", .0.display())]
    NoDirectory(PathBuf),
    #[error("replay does not reproduce the recorded run: analytics digest {recorded} recorded, {replayed} replayed")]
    Mismatch { recorded: String, replayed: String },
}

/// Runs `run` to termination and writes config, transcript, change log and
/// analytics report into `out`.
pub fn run_headless(run: &RunConfig, out: &Path) -> Result<RunSummary, HeadlessError> {
    for party in [Party::H, Party::P] {
        if !run.session.strategies.get(party).is_builtin() {
            return Err(HeadlessError::HumanParty(party));
        }
    }
    let policy = match (&run.reflection.policy, run.reflection.enabled) {
        (Some(p), _) => p.clone(),
        (None, false) => Default::default(),
        (None, true) => return Err(HeadlessError::MissingPolicy),
    };
    let mut session = Session::new("headless", run.session.clone(), Clock::Logical, run.reflection.enabled)?;
    session.simulate(&policy)?;
    let files = SessionFiles::create(out, run)?;
    files.append(&files.transcript(), session.state().transcript())?;
    files.append(&files.changelog(), session.changelog())?;
    let summary = session.summary()?;
    files.write_analytics(&summary)?;
    Ok(summary)
}

#[derive(Debug, Clone)]
pub struct Replayed {
    pub summary: RunSummary,
    pub digest: String,
    /// Whether an analytics report was stored next to the transcript; if so
    /// it matched.
    pub verified: bool,
}

/// Replays a transcript, reading config and change log from its directory,
/// and checks the result against the stored analytics report if present.
pub fn replay_transcript(transcript: &Path) -> Result<Replayed, HeadlessError> {
    let dir = transcript
        .parent()
        .ok_or_else(|| HeadlessError::NoDirectory(transcript.to_path_buf()))?;
    let run = RunConfig::load(&dir.join(CONFIG_FILE))?;
    let entries = read_jsonl(transcript)?;
    let changelog_path = dir.join(CHANGELOG_FILE);
    let changelog = if changelog_path.exists() {
        read_jsonl(&changelog_path)?
    } else {
        Vec::new()
    };
    let session = replay("replay", run.session, run.reflection.enabled, &entries, &changelog)?;
    let summary = session.summary()?;
    let digest = summary.digest();
    let recorded = SessionFiles::new(dir).read_analytics()?;
    if let Some(recorded) = &recorded {
        let recorded_digest = recorded.digest();
        if recorded_digest != digest {
            return Err(HeadlessError::Mismatch {
                recorded: recorded_digest,
                replayed: digest,
            });
        }
    }
    Ok(Replayed {
        summary,
        digest,
        verified: recorded.is_some(),
    })
}

/// Human-readable summary: outcome, egalitarian point and deviations.
pub fn render_summary(summary: &RunSummary) -> String {
    let mut out = String::new();
    let a = &summary.analytics;
    match &summary.outcome {
        Some(o) => match &o.result {
            OutcomeResult::Agreement { bid, point } => writeln!(
                out,
                "outcome: agreement on {bid} at ({:.4}, {:.4}) after {} rounds",
                point.u_h(),
                point.u_p(),
                o.rounds_used
            ),
            OutcomeResult::NoAgreement => writeln!(out, "outcome: no agreement after {} rounds", o.rounds_used),
        },
        None => writeln!(out, "outcome: still open"),
    }
    .unwrap();
    let ep = &a.egalitarian_point;
    writeln!(
        out,
        "egalitarian point: {} at ({:.4}, {:.4})",
        ep.bid,
        ep.u_h(),
        ep.u_p()
    )
    .unwrap();
    writeln!(out, "deviations ({:?} view):", a.view).unwrap();
    for d in &a.deviations {
        let bid = a.points.iter().find(|p| p.index == d.index).map(|p| p.bid.to_string());
        writeln!(
            out,
            "  {:>4}  {}  ({:.4}, {:.4})  {:.4}",
            d.index,
            bid.unwrap_or_default(),
            d.coordinates[0],
            d.coordinates[1],
            d.deviation
        )
        .unwrap();
    }
    writeln!(out, "config digest: {}", summary.final_digest).unwrap();
    writeln!(out, "analytics digest: {}", summary.digest()).unwrap();
    out
}
