//! HTTP + server-sent events front end. Every session sits behind its own
//! async mutex, so requests to one session run one at a time, in arrival
//! order, while different sessions proceed independently.

use std::collections::BTreeMap;
use std::convert::Infallible;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use axum::extract::rejection::JsonRejection;
use axum::extract::{FromRequest, Path as UrlPath, Query, Request, State};
use axum::http::StatusCode;
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::Stream;
use negotiator_core::analytics::{AnalyticsReport, FairnessPrinciple};
use negotiator_core::domain::{Party, PartyPair};
use negotiator_core::protocol::{
    Action, ActionKind, Clock, Outcome, ProtocolError, SessionConfig, SessionStatus, StandingOffer, TranscriptEntry,
};
use negotiator_core::reflection::{
    Aberration, ChangeLogEntry, HumanDecision, JudgmentLabel, JudgmentRecord, MonitorReport, Proposal, ProposalAction,
    ProposalStatus, ReflectionError, Verdict,
};
use negotiator_core::session::{resume, DecisionPolicy, Session, SessionError, SessionEvent};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::{broadcast, Mutex, RwLock};

use crate::store::{RunConfig, SessionFiles, SessionRecord, StoreError};

const EVENT_BUFFER: usize = 1024;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    problems: Vec<String>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
            problems: Vec::new(),
        }
    }

    fn not_found(what: &str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("unknown {what} {id}"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.code, "message": self.message });
        if !self.problems.is_empty() {
            body["problems"] = json!(self.problems);
        }
        (self.status, Json(body)).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        Self::new(r.status(), "malformed_request", r.body_text())
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        tracing::error!("storage failure: {e}");
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "storage", e.to_string())
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        use StatusCode as S;
        let message = e.to_string();
        let (status, code) = match &e {
            SessionError::Protocol(p) => match p {
                ProtocolError::Terminal => (S::CONFLICT, "terminal"),
                ProtocolError::OutOfTurn { .. } => (S::CONFLICT, "out_of_turn"),
                ProtocolError::NoStandingOffer => (S::CONFLICT, "no_standing_offer"),
                ProtocolError::InvalidBid(_) => (S::UNPROCESSABLE_ENTITY, "invalid_bid"),
                ProtocolError::BelowReservation { .. } => (S::UNPROCESSABLE_ENTITY, "below_reservation"),
                ProtocolError::NoFeasibleBid(_) => (S::UNPROCESSABLE_ENTITY, "no_feasible_bid"),
                ProtocolError::Config(problems) => {
                    let mut err = ApiError::new(S::UNPROCESSABLE_ENTITY, "invalid_config", message);
                    err.problems = problems.clone();
                    return err;
                }
            },
            SessionError::Reflection(r) => match r {
                ReflectionError::NotPending(_) => (S::CONFLICT, "not_pending"),
                ReflectionError::NotApproved(_) | ReflectionError::AlreadyExecuted(_) => {
                    (S::CONFLICT, "not_executable")
                }
                ReflectionError::NotTerminal => (S::CONFLICT, "not_terminal"),
                ReflectionError::EmptyRationale => (S::UNPROCESSABLE_ENTITY, "empty_rationale"),
                ReflectionError::KindMismatch { .. } => (S::UNPROCESSABLE_ENTITY, "kind_mismatch"),
                ReflectionError::IncompletePayload(_) => (S::UNPROCESSABLE_ENTITY, "incomplete_payload"),
                _ => (S::UNPROCESSABLE_ENTITY, "invalid_change"),
            },
            SessionError::UnknownProposal(_) => (S::NOT_FOUND, "not_found"),
            SessionError::Analytics(_) | SessionError::ReplayDiverged { .. } => (S::INTERNAL_SERVER_ERROR, "internal"),
        };
        ApiError::new(status, code, message)
    }
}

/// `Json` whose rejections come back in the service's error shape.
pub struct ApiJson<T>(pub T);

impl<S, T> FromRequest<S> for ApiJson<T>
where
    Json<T>: FromRequest<S, Rejection = JsonRejection>,
    S: Send + Sync,
{
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        let Json(v) = Json::<T>::from_request(req, state).await?;
        Ok(ApiJson(v))
    }
}

struct Live {
    session: Session,
    files: SessionFiles,
    policy: Option<DecisionPolicy>,
    written: usize,
    logged: usize,
    judged: usize,
}

impl Live {
    /// Builtin counterparts reply and the policy, if any, decides, until a
    /// human has to act.
    fn advance(&mut self, events: &mut Vec<SessionEvent>) -> Result<(), SessionError> {
        loop {
            if let Some(policy) = &self.policy {
                events.append(&mut self.session.apply_policy(policy)?);
            }
            let party = self.session.state().turn();
            match self.session.step_builtin() {
                Ok(Some(mut more)) => events.append(&mut more),
                Ok(None) => return Ok(()),
                // a builtin that cannot move legally walks away
                Err(SessionError::Protocol(e)) => {
                    tracing::warn!("session {}: builtin {party} move rejected: {e}", self.session.id());
                    events.append(&mut self.session.submit(party, Action::End)?);
                }
                Err(e) => return Err(e),
            }
        }
    }

    fn persist(&mut self) -> Result<(), StoreError> {
        let transcript = self.session.state().transcript();
        self.files
            .append(&self.files.transcript(), &transcript[self.written..])?;
        self.written = transcript.len();
        let changelog = self.session.changelog();
        self.files.append(&self.files.changelog(), &changelog[self.logged..])?;
        self.logged = changelog.len();
        let judgments = self.session.knowledge().judgments();
        self.files.append(&self.files.judgments(), &judgments[self.judged..])?;
        self.judged = judgments.len();
        match self.session.summary() {
            Ok(summary) => self.files.write_analytics(&summary),
            Err(e) => {
                tracing::warn!("no analytics for session {}: {e}", self.session.id());
                Ok(())
            }
        }
    }

    fn record(&self) -> SessionRecord {
        SessionRecord {
            id: self.session.id().to_string(),
            config: self.session.state().config().clone(),
            transcript: self.files.transcript(),
            changelog: self.files.changelog(),
            status: self.session.state().status().clone(),
        }
    }

    fn view(&self) -> Result<SessionView, ApiError> {
        let s = &self.session;
        let st = s.state();
        Ok(SessionView {
            id: s.id().to_string(),
            status: st.status().clone(),
            round: st.round(),
            turn: st.turn(),
            time: st.time(),
            config: st.config().clone(),
            config_digest: s.digest().to_string(),
            principle: s.knowledge().principle,
            reflection: s.reflection_enabled(),
            builtin: PartyPair::new(s.is_builtin(Party::H), s.is_builtin(Party::P)),
            legal_actions: PartyPair::new(st.legal_actions(Party::H), st.legal_actions(Party::P)),
            standing_offer: st.standing_offer().cloned(),
            transcript: st.transcript().to_vec(),
            outcome: st.outcome(),
            analytics: s.analytics()?,
            latest_report: s.reports().last().cloned(),
            aberrations: s.aberrations().to_vec(),
            pending_proposals: s.pending_proposals().cloned().collect(),
            judgments: s.knowledge().judgments().to_vec(),
        })
    }
}

/// Everything a client needs to draw the session.
#[derive(Debug, Serialize)]
pub struct SessionView {
    pub id: String,
    pub status: SessionStatus,
    pub round: u32,
    pub turn: Party,
    pub time: f64,
    pub config: SessionConfig,
    pub config_digest: String,
    pub principle: FairnessPrinciple,
    pub reflection: bool,
    pub builtin: PartyPair<bool>,
    pub legal_actions: PartyPair<Vec<ActionKind>>,
    pub standing_offer: Option<StandingOffer>,
    pub transcript: Vec<TranscriptEntry>,
    pub outcome: Option<Outcome>,
    pub analytics: AnalyticsReport,
    pub latest_report: Option<MonitorReport>,
    pub aberrations: Vec<Aberration>,
    pub pending_proposals: Vec<Proposal>,
    pub judgments: Vec<JudgmentRecord>,
}

struct Handle {
    live: Mutex<Live>,
    events: broadcast::Sender<SessionEvent>,
}

impl Handle {
    fn new(live: Live) -> Arc<Self> {
        let (events, _) = broadcast::channel(EVENT_BUFFER);
        Arc::new(Self {
            live: Mutex::new(live),
            events,
        })
    }

    fn publish(&self, events: &[SessionEvent]) {
        for e in events {
            // nobody listening is fine
            let _ = self.events.send(e.clone());
        }
    }
}

pub struct AppState {
    data: PathBuf,
    sessions: RwLock<BTreeMap<String, Arc<Handle>>>,
    human_timeout: Option<Duration>,
}

pub type Shared = Arc<AppState>;

impl AppState {
    /// Opens `data`, resuming every session stored there. Sessions whose
    /// files do not load are logged and left alone.
    pub fn open(data: impl Into<PathBuf>, human_timeout: Option<Duration>) -> Result<Shared, StoreError> {
        let data = data.into();
        std::fs::create_dir_all(&data).map_err(|source| StoreError::Io {
            path: data.clone(),
            source,
        })?;
        let mut sessions = BTreeMap::new();
        let entries = std::fs::read_dir(&data).map_err(|source| StoreError::Io {
            path: data.clone(),
            source,
        })?;
        for entry in entries.flatten() {
            let dir = entry.path();
            if !dir.join(crate::store::CONFIG_FILE).is_file() {
                continue;
            }
            let id = entry.file_name().to_string_lossy().into_owned();
            match restore(&id, &dir) {
                Ok(live) => {
                    sessions.insert(id, Handle::new(live));
                }
                Err(e) => tracing::error!("not resuming session {id}: {e}"),
            }
        }
        tracing::info!("{} sessions resumed from {}", sessions.len(), data.display());
        Ok(Arc::new(Self {
            data,
            sessions: RwLock::new(sessions),
            human_timeout,
        }))
    }

    async fn handle(&self, id: &str) -> Result<Arc<Handle>, ApiError> {
        self.sessions
            .read()
            .await
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("session", id))
    }
}

fn restore(id: &str, dir: &Path) -> Result<Live, anyhow::Error> {
    let files = SessionFiles::new(dir);
    let stored = files.load()?;
    let mut session = resume(
        id,
        stored.run.session,
        Clock::Wall,
        stored.run.reflection.enabled,
        &stored.transcript,
        &stored.changelog,
    )?;
    session.restore_judgments(stored.judgments.iter().cloned());
    Ok(Live {
        session,
        files,
        policy: stored.run.reflection.policy,
        written: stored.transcript.len(),
        logged: stored.changelog.len(),
        judged: stored.judgments.len(),
    })
}

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/actions", post(post_action))
        .route("/sessions/{id}/proposals", get(get_proposals))
        .route("/sessions/{id}/principle", post(post_principle))
        .route("/sessions/{id}/judgments", get(get_judgments).post(post_judgment))
        .route("/sessions/{id}/events", get(events))
        .route("/proposals/{id}/decision", post(post_decision))
        .with_state(state)
}

/// If a human is to move, ends the session on their behalf once
/// `human_timeout` passes without anything happening.
fn schedule_timeout(state: &AppState, handle: &Arc<Handle>, live: &Live) {
    let Some(after) = state.human_timeout else {
        return;
    };
    let st = live.session.state();
    if st.status().is_terminal() || live.session.is_builtin(st.turn()) {
        return;
    }
    let mark = st.transcript().len();
    let handle = Arc::clone(handle);
    tokio::spawn(async move {
        tokio::time::sleep(after).await;
        let mut live = handle.live.lock().await;
        let st = live.session.state();
        if st.transcript().len() != mark || st.status().is_terminal() {
            return;
        }
        let party = st.turn();
        let mut events = match live.session.submit(party, Action::End) {
            Ok(events) => events,
            Err(e) => return tracing::warn!("timeout for {party} not applied: {e}"),
        };
        if let Err(e) = live.advance(&mut events) {
            tracing::error!("session {} after timeout: {e}", live.session.id());
        }
        if let Err(e) = live.persist() {
            tracing::error!("session {}: {e}", live.session.id());
        }
        handle.publish(&events);
    });
}

async fn create_session(
    State(state): State<Shared>,
    ApiJson(run): ApiJson<RunConfig>,
) -> Result<(StatusCode, Json<SessionView>), ApiError> {
    let problems = run.session.problems();
    if !problems.is_empty() {
        let mut err = ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "invalid_config",
            "invalid session config",
        );
        err.problems = problems;
        return Err(err);
    }
    let id = uuid::Uuid::new_v4().simple().to_string();
    let session = Session::new(id.clone(), run.session.clone(), Clock::Wall, run.reflection.enabled)?;
    let files = SessionFiles::create(state.data.join(&id), &run)?;
    let mut live = Live {
        session,
        files,
        policy: run.reflection.policy,
        written: 0,
        logged: 0,
        judged: 0,
    };
    let mut events = Vec::new();
    let advanced = live.advance(&mut events);
    live.persist()?;
    advanced?;
    let view = live.view()?;
    let handle = Handle::new(live);
    {
        let live = handle.live.lock().await;
        schedule_timeout(&state, &handle, &live);
    }
    state.sessions.write().await.insert(id.clone(), handle);
    tracing::info!("session {id} created");
    Ok((StatusCode::CREATED, Json(view)))
}

async fn list_sessions(State(state): State<Shared>) -> Json<Vec<SessionRecord>> {
    let handles: Vec<Arc<Handle>> = state.sessions.read().await.values().cloned().collect();
    let mut records = Vec::with_capacity(handles.len());
    for h in handles {
        records.push(h.live.lock().await.record());
    }
    Json(records)
}

async fn get_session(State(state): State<Shared>, UrlPath(id): UrlPath<String>) -> Result<Json<SessionView>, ApiError> {
    let handle = state.handle(&id).await?;
    let live = handle.live.lock().await;
    Ok(Json(live.view()?))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionRequest {
    pub party: Party,
    pub action: Action,
}

#[derive(Debug, Serialize)]
pub struct ActionResponse {
    pub events: Vec<SessionEvent>,
    pub status: SessionStatus,
}

async fn post_action(
    State(state): State<Shared>,
    UrlPath(id): UrlPath<String>,
    ApiJson(req): ApiJson<ActionRequest>,
) -> Result<Json<ActionResponse>, ApiError> {
    let handle = state.handle(&id).await?;
    let mut live = handle.live.lock().await;
    if live.session.is_builtin(req.party) {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            "builtin_party",
            format!("{} is played by a builtin strategy", req.party),
        ));
    }
    let mut events = live.session.submit(req.party, req.action)?;
    let advanced = live.advance(&mut events);
    live.persist()?;
    handle.publish(&events);
    advanced?;
    schedule_timeout(&state, &handle, &live);
    Ok(Json(ActionResponse {
        events,
        status: live.session.state().status().clone(),
    }))
}

#[derive(Debug, Deserialize)]
struct ProposalFilter {
    status: Option<ProposalStatus>,
}

async fn get_proposals(
    State(state): State<Shared>,
    UrlPath(id): UrlPath<String>,
    Query(filter): Query<ProposalFilter>,
) -> Result<Json<Vec<Proposal>>, ApiError> {
    let handle = state.handle(&id).await?;
    let live = handle.live.lock().await;
    Ok(Json(
        live.session
            .proposals()
            .iter()
            .filter(|p| filter.status.is_none_or(|s| p.status == s))
            .cloned()
            .collect(),
    ))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecisionRequest {
    pub decision: Verdict,
    pub rationale: String,
    /// Replaces the proposal's payload, e.g. the extension for an
    /// extend-domain proposal.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<ProposalAction>,
}

#[derive(Debug, Deserialize)]
struct SessionSelector {
    session: Option<String>,
}

async fn post_decision(
    State(state): State<Shared>,
    UrlPath(proposal): UrlPath<String>,
    Query(selector): Query<SessionSelector>,
    ApiJson(req): ApiJson<DecisionRequest>,
) -> Result<Json<ChangeLogEntry>, ApiError> {
    let handle = match selector.session {
        Some(id) => state.handle(&id).await?,
        None => owner_of(&state, &proposal).await?,
    };
    let mut live = handle.live.lock().await;
    let mut decision = HumanDecision::new(req.decision, req.rationale);
    decision.amendment = req.payload;
    let entry = live.session.decide(&proposal, decision)?;
    live.persist()?;
    handle.publish(&[SessionEvent::Decision(entry.clone())]);
    Ok(Json(entry))
}

/// The session holding `proposal`. Proposal ids are only unique within a
/// session, so a clash has to be resolved with `?session=`.
async fn owner_of(state: &AppState, proposal: &str) -> Result<Arc<Handle>, ApiError> {
    let handles: Vec<(String, Arc<Handle>)> = state
        .sessions
        .read()
        .await
        .iter()
        .map(|(id, h)| (id.clone(), Arc::clone(h)))
        .collect();
    let mut owners = Vec::new();
    for (id, h) in handles {
        if h.live.lock().await.session.proposals().iter().any(|p| p.id == proposal) {
            owners.push((id, h));
        }
    }
    match owners.len() {
        0 => Err(ApiError::not_found("proposal", proposal)),
        1 => Ok(owners.pop().expect("one owner").1),
        _ => {
            let mut err = ApiError::new(
                StatusCode::CONFLICT,
                "ambiguous_proposal",
                format!("proposal {proposal} exists in several sessions; pass ?session=<id>"),
            );
            err.problems = owners.into_iter().map(|(id, _)| id).collect();
            Err(err)
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrincipleRequest {
    pub principle: FairnessPrinciple,
    pub rationale: String,
}

async fn post_principle(
    State(state): State<Shared>,
    UrlPath(id): UrlPath<String>,
    ApiJson(req): ApiJson<PrincipleRequest>,
) -> Result<Json<ChangeLogEntry>, ApiError> {
    if let Err(problem) = req.principle.validate() {
        let mut err = ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "invalid_principle",
            "invalid principle",
        );
        err.problems = vec![problem];
        return Err(err);
    }
    let handle = state.handle(&id).await?;
    let mut live = handle.live.lock().await;
    if live.session.state().status().is_terminal() {
        return Err(SessionError::from(ProtocolError::Terminal).into());
    }
    let action = ProposalAction::SwitchPrinciple {
        principle: Some(req.principle),
    };
    let entry = live
        .session
        .request_change(action, HumanDecision::new(Verdict::Approve, req.rationale))?;
    live.persist()?;
    handle.publish(&[SessionEvent::Decision(entry.clone())]);
    Ok(Json(entry))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JudgmentRequest {
    pub label: JudgmentLabel,
    pub rationale: String,
}

async fn get_judgments(
    State(state): State<Shared>,
    UrlPath(id): UrlPath<String>,
) -> Result<Json<Vec<JudgmentRecord>>, ApiError> {
    let handle = state.handle(&id).await?;
    let live = handle.live.lock().await;
    Ok(Json(live.session.knowledge().judgments().to_vec()))
}

async fn post_judgment(
    State(state): State<Shared>,
    UrlPath(id): UrlPath<String>,
    ApiJson(req): ApiJson<JudgmentRequest>,
) -> Result<(StatusCode, Json<JudgmentRecord>), ApiError> {
    if req.rationale.trim().is_empty() {
        return Err(SessionError::from(ReflectionError::EmptyRationale).into());
    }
    let handle = state.handle(&id).await?;
    let mut live = handle.live.lock().await;
    let record = live.session.record_judgment(req.label, req.rationale)?.clone();
    live.persist()?;
    Ok((StatusCode::CREATED, Json(record)))
}

fn event_name(e: &SessionEvent) -> &'static str {
    match e {
        SessionEvent::Transcript(_) => "transcript",
        SessionEvent::Monitor(_) => "monitor",
        SessionEvent::Aberration(_) => "aberration",
        SessionEvent::Proposal(_) => "proposal",
        SessionEvent::Decision(_) => "decision",
        SessionEvent::Status(_) => "status",
    }
}

async fn events(
    State(state): State<Shared>,
    UrlPath(id): UrlPath<String>,
) -> Result<Sse<impl Stream<Item = Result<Event, Infallible>>>, ApiError> {
    let rx = state.handle(&id).await?.events.subscribe();
    let stream = futures::stream::unfold(rx, |mut rx| async move {
        let event = match rx.recv().await {
            Ok(e) => Event::default()
                .event(event_name(&e))
                .data(serde_json::to_string(&e).expect("events serialize")),
            // a slow subscriber is told how much it missed and should refetch
            Err(broadcast::error::RecvError::Lagged(n)) => Event::default().event("lagged").data(n.to_string()),
            Err(broadcast::error::RecvError::Closed) => return None,
        };
        Some((Ok(event), rx))
    });
    Ok(Sse::new(stream).keep_alive(KeepAlive::default()))
}
