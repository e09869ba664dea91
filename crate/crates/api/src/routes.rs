use std::collections::BTreeMap;
use std::str::FromStr;

use artiscope::engine::{ArtifactId, BehavioralAction, ExchangeKind, Session, TransformKind, TransformRequest};
use artiscope::llm::{finish_chat, prepare_chat, AutoActionKind, ChatOutcome, LlmError};
use artiscope::payload::{
    ActionBody, ActionPayload, AnalyzePayload, DerivedPayload, FindingsPayload, LogPayload, SuggestionsPayload,
    TreePayload,
};
use artiscope::store::{self, export_report, ReportFormat};
use axum::extract::multipart::Multipart;
use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

use crate::error::Failure;
use crate::state::{lock, AppState};

type Reply<T> = Result<Json<T>, Failure>;

pub fn router(state: AppState) -> Router {
    let static_dir = state.config().server.static_dir.clone();
    let app = Router::new()
        .route("/health", get(|| async { "ok" }))
        .route("/sessions", get(list_sessions).post(create_session).layer(DefaultBodyLimit::disable()))
        .route("/sessions/{id}/tree", get(tree))
        .route("/sessions/{id}/log", get(log))
        .route("/sessions/{id}/suggestions", get(suggestions))
        .route("/sessions/{id}/findings", get(findings))
        .route("/sessions/{id}/actions", post(action))
        .route("/sessions/{id}/chat", post(chat))
        .route("/sessions/{id}/save", post(save))
        .route("/sessions/{id}/report", get(report))
        .route("/artifacts/{id}/view", get(view))
        .route("/artifacts/{id}/reanalyze", post(reanalyze))
        .route("/artifacts/{id}/transform", post(transform))
        .with_state(state);
    if static_dir.is_empty() {
        app
    } else {
        app.fallback_service(ServeDir::new(static_dir))
    }
}

/// Runs `f` on the session off the async workers, holding its lock.
async fn with_session<T, F>(state: &AppState, id: &str, f: F) -> Result<T, Failure>
where
    T: Send + 'static,
    F: FnOnce(&mut Session) -> Result<T, Failure> + Send + 'static,
{
    let shared = state.session(id)?;
    tokio::task::spawn_blocking(move || f(&mut lock(&shared)))
        .await
        .map_err(|e| Failure::internal(e.to_string()))?
}

fn json_body<T>(body: Result<Json<T>, JsonRejection>) -> Result<T, Failure> {
    body.map(|Json(b)| b)
        .map_err(|e| Failure::unsupported(format!("invalid request body: {}", e.body_text())))
}

fn query<T>(q: Result<Query<T>, QueryRejection>) -> Result<T, Failure> {
    q.map(|Query(q)| q)
        .map_err(|e| Failure::unsupported(format!("invalid query: {}", e.body_text())))
}

fn artifact_id(raw: &str) -> Result<ArtifactId, Failure> {
    raw.parse().map_err(|_| Failure::not_found(format!("artifact {raw}")))
}

#[derive(Debug, Serialize)]
struct SessionList {
    sessions: Vec<String>,
}

async fn list_sessions(State(state): State<AppState>) -> Json<SessionList> {
    Json(SessionList {
        sessions: state.session_ids(),
    })
}

async fn create_session(State(state): State<AppState>, mut multipart: Multipart) -> Result<impl IntoResponse, Failure> {
    let max = state.config().server.max_upload_bytes;
    let malformed = |e: axum::extract::multipart::MultipartError| Failure::unsupported(format!("malformed upload: {e}"));
    let mut upload = None;
    while let Some(mut field) = multipart.next_field().await.map_err(malformed)? {
        if field.name() != Some("file") {
            continue;
        }
        let name = field.file_name().unwrap_or_default().to_string();
        let mut data = Vec::new();
        while let Some(chunk) = field.chunk().await.map_err(malformed)? {
            if (data.len() + chunk.len()) as u64 > max {
                return Err(Failure::unsupported(format!("upload exceeds the limit of {max} bytes")));
            }
            data.extend_from_slice(&chunk);
        }
        upload = Some((name, data));
        break;
    }
    let (name, data) = upload.ok_or_else(|| Failure::unsupported("missing multipart field \"file\""))?;
    let (id, mut session) = state.new_session()?;
    let (session, payload) = tokio::task::spawn_blocking(move || {
        let outcome = session.open(&name, data)?;
        let payload = AnalyzePayload::of(&session, outcome.artifact);
        Ok::<_, Failure>((session, payload))
    })
    .await
    .map_err(|e| Failure::internal(e.to_string()))??;
    state.insert(id, session);
    Ok((StatusCode::CREATED, Json(payload)))
}

async fn tree(State(state): State<AppState>, Path(id): Path<String>) -> Reply<TreePayload> {
    with_session(&state, &id, |s| Ok(TreePayload::of(s))).await.map(Json)
}

async fn log(State(state): State<AppState>, Path(id): Path<String>) -> Reply<LogPayload> {
    with_session(&state, &id, |s| Ok(LogPayload::of(s))).await.map(Json)
}

async fn suggestions(State(state): State<AppState>, Path(id): Path<String>) -> Reply<SuggestionsPayload> {
    with_session(&state, &id, |s| Ok(SuggestionsPayload::of(s))).await.map(Json)
}

async fn findings(State(state): State<AppState>, Path(id): Path<String>) -> Reply<FindingsPayload> {
    with_session(&state, &id, |s| Ok(FindingsPayload::of(s))).await.map(Json)
}

/// `Rename` with a `name` parameter renames; anything else is a behavioral action.
pub(crate) fn apply_action(s: &mut Session, body: ActionBody) -> Result<ActionPayload, Failure> {
    let fact = if body.action.eq_ignore_ascii_case("rename") {
        let name = body
            .params
            .get("name")
            .ok_or_else(|| Failure::unsupported("Rename requires parameter \"name\""))?;
        s.apply_rename(body.target, name)?;
        None
    } else {
        let action = BehavioralAction::from_str(&body.action).map_err(Failure::unsupported)?;
        let fact = s.record_action(action, body.target, body.params)?;
        let names = |id| s.display_name(id);
        Some(fact.atom().display_with(&names))
    };
    Ok(ActionPayload {
        fact,
        suggestions: SuggestionsPayload::of(s),
    })
}

async fn action(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<ActionBody>, JsonRejection>,
) -> Reply<ActionPayload> {
    let body = json_body(body)?;
    with_session(&state, &id, move |s| apply_action(s, body)).await.map(Json)
}

#[derive(Debug, Deserialize)]
struct ViewQuery {
    session: String,
    kind: String,
    offset: Option<u64>,
    length: Option<u64>,
    min_length: Option<usize>,
    window: Option<usize>,
    stride: Option<usize>,
}

async fn view(
    State(state): State<AppState>,
    Path(id): Path<String>,
    q: Result<Query<ViewQuery>, QueryRejection>,
) -> Reply<serde_json::Value> {
    let q = query(q)?;
    let target = artifact_id(&id)?;
    let session = q.session.clone();
    with_session(&state, &session, move |s| {
        let value = match q.kind.to_ascii_lowercase().as_str() {
            "hex" => serde_json::to_value(s.view_hex(target, q.offset.unwrap_or(0), q.length)?),
            "strings" => serde_json::to_value(s.view_strings(target, q.min_length)?),
            "structured" => serde_json::to_value(s.view_structured(target)?),
            "entropy" => serde_json::to_value(s.view_entropy(target, q.window, q.stride)?),
            other => return Err(Failure::unsupported(format!("unknown view kind {other:?}"))),
        };
        value.map_err(|e| Failure::internal(e.to_string()))
    })
    .await
    .map(Json)
}

#[derive(Debug, Deserialize)]
struct SessionQuery {
    session: String,
}

#[derive(Debug, Deserialize)]
struct ReanalyzeBody {
    offset: u64,
    length: u64,
    #[serde(default)]
    name: String,
}

async fn reanalyze(
    State(state): State<AppState>,
    Path(id): Path<String>,
    q: Result<Query<SessionQuery>, QueryRejection>,
    body: Result<Json<ReanalyzeBody>, JsonRejection>,
) -> Reply<DerivedPayload> {
    let q = query(q)?;
    let body = json_body(body)?;
    let parent = artifact_id(&id)?;
    with_session(&state, &q.session, move |s| {
        let (artifact, outcome) = s.reanalyze_selection(parent, body.offset, body.length, &body.name)?;
        Ok(DerivedPayload {
            artifact,
            outcome,
            suggestions: SuggestionsPayload::of(s),
        })
    })
    .await
    .map(Json)
}

#[derive(Debug, Deserialize)]
struct TransformBody {
    kind: String,
    #[serde(default)]
    params: BTreeMap<String, String>,
}

async fn transform(
    State(state): State<AppState>,
    Path(id): Path<String>,
    q: Result<Query<SessionQuery>, QueryRejection>,
    body: Result<Json<TransformBody>, JsonRejection>,
) -> Reply<DerivedPayload> {
    let q = query(q)?;
    let body = json_body(body)?;
    let target = artifact_id(&id)?;
    let kind = TransformKind::from_str(&body.kind).map_err(|e| Failure::unsupported(e.to_string()))?;
    let request = TransformRequest {
        kind,
        target,
        params: body.params,
    };
    with_session(&state, &q.session, move |s| {
        let (artifact, outcome) = s.run_transform(&request)?;
        Ok(DerivedPayload {
            artifact,
            outcome,
            suggestions: SuggestionsPayload::of(s),
        })
    })
    .await
    .map(Json)
}

/// Either a free question or one of the automatic actions.
#[derive(Debug, Deserialize)]
struct ChatBody {
    focus: ArtifactId,
    #[serde(default)]
    question: Option<String>,
    #[serde(default)]
    auto: Option<String>,
}

async fn chat(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<ChatBody>, JsonRejection>,
) -> Reply<ChatOutcome> {
    let body = json_body(body)?;
    let (exchange, question) = match (&body.auto, body.question) {
        (Some(auto), _) => {
            let kind = AutoActionKind::from_str(auto).map_err(|e| Failure::unsupported(e.to_string()))?;
            (kind.exchange(), kind.question().to_string())
        }
        (None, Some(q)) => (ExchangeKind::Chat, q),
        (None, None) => return Err(Failure::unsupported("chat requires \"question\" or \"auto\"")),
    };
    let llm = state.config().llm.clone();
    let focus = body.focus;
    // The session stays unlocked while the model answers; its pending flag
    // turns a second chat into Busy.
    let pending = with_session(&state, &id, move |s| Ok(prepare_chat(s, &llm, exchange, focus, &question)?)).await?;
    let client = state.client();
    let request = pending.request.clone();
    let result = tokio::task::spawn_blocking(move || client.complete(&request))
        .await
        .unwrap_or_else(|e| Err(LlmError::Transport(format!("chat client failed: {e}"))));
    with_session(&state, &id, move |s| Ok(finish_chat(s, pending, result)?))
        .await
        .map(Json)
}

#[derive(Debug, Serialize)]
struct SavePayload {
    session_id: String,
    path: String,
    bytes: usize,
}

async fn save(State(state): State<AppState>, Path(id): Path<String>) -> Reply<SavePayload> {
    let path = state.save_path(&id);
    let session_id = id.clone();
    with_session(&state, &id, move |s| {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Failure::internal(format!("{}: {e}", dir.display())))?;
        }
        let bytes = store::save(s, &path)?;
        Ok(SavePayload {
            session_id,
            path: path.display().to_string(),
            bytes,
        })
    })
    .await
    .map(Json)
}

#[derive(Debug, Deserialize)]
struct ReportQuery {
    #[serde(default)]
    format: Option<String>,
}

async fn report(
    State(state): State<AppState>,
    Path(id): Path<String>,
    q: Result<Query<ReportQuery>, QueryRejection>,
) -> Result<impl IntoResponse, Failure> {
    let q = query(q)?;
    let format = match q.format.as_deref() {
        None => ReportFormat::PlainText,
        Some(f) => ReportFormat::from_str(f).map_err(|e| Failure::unsupported(e.to_string()))?,
    };
    let text = with_session(&state, &id, move |s| Ok(export_report(s, format))).await?;
    let mime = match format {
        ReportFormat::PlainText => "text/plain; charset=utf-8",
        ReportFormat::Markdown => "text/markdown; charset=utf-8",
    };
    Ok(([(header::CONTENT_TYPE, mime)], text))
}
