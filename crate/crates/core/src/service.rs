//! HTTP front end for the annotation board under `/v1/`.
//!
//! Every route except `/v1/health` requires `Authorization: Bearer <token>`
//! when the state carries a token.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::{Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::annotation::{BoardError, TaskBoard, TaskKind, TaskStatus};
use crate::corpus::PostId;
use crate::error::Error;

pub struct ServiceState {
    pub board: TaskBoard,
    pub token: Option<String>,
}

impl ServiceState {
    pub fn new(board: TaskBoard, token: Option<String>) -> Arc<Self> {
        Arc::new(ServiceState { board, token })
    }
}

struct ApiError(StatusCode, Value);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(self.1)).into_response()
    }
}

impl From<BoardError> for ApiError {
    fn from(e: BoardError) -> Self {
        let message = e.to_string();
        match e {
            BoardError::NotFound(_) => ApiError(StatusCode::NOT_FOUND, json!({"error": message})),
            BoardError::Conflict(_) => ApiError(StatusCode::CONFLICT, json!({"error": message})),
            BoardError::Forbidden(_) => ApiError(StatusCode::FORBIDDEN, json!({"error": message})),
            BoardError::Invalid(violations) => ApiError(
                StatusCode::UNPROCESSABLE_ENTITY,
                json!({"error": message, "violations": violations}),
            ),
            BoardError::Core(Error::MissingAdjudication(ids)) => {
                ApiError(StatusCode::CONFLICT, json!({"error": message, "post_ids": ids}))
            }
            BoardError::Core(Error::NoOverlap | Error::Empty(_) | Error::TaskMismatch(..)) => {
                ApiError(StatusCode::UNPROCESSABLE_ENTITY, json!({"error": message}))
            }
            BoardError::Core(_) => ApiError(StatusCode::INTERNAL_SERVER_ERROR, json!({"error": message})),
        }
    }
}

fn bad_request(message: impl Into<String>) -> ApiError {
    ApiError(StatusCode::BAD_REQUEST, json!({"error": message.into()}))
}

type ApiResult<T> = std::result::Result<T, ApiError>;

fn parse_kind(s: &str) -> ApiResult<TaskKind> {
    TaskKind::parse(s).ok_or_else(|| bad_request(format!("unknown task kind `{s}`")))
}

async fn require_token(State(state): State<Arc<ServiceState>>, req: Request, next: Next) -> Response {
    if let Some(expected) = &state.token {
        let presented = req
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        if presented != Some(expected.as_str()) {
            return ApiError(StatusCode::UNAUTHORIZED, json!({"error": "missing or invalid bearer token"})).into_response();
        }
    }
    next.run(req).await
}

#[derive(Deserialize)]
struct ListQuery {
    kind: Option<String>,
    status: Option<String>,
}

async fn list_tasks(State(s): State<Arc<ServiceState>>, Query(q): Query<ListQuery>) -> ApiResult<Json<Value>> {
    let kind = q.kind.as_deref().map(parse_kind).transpose()?;
    let status = match q.status.as_deref() {
        Some(st) => Some(TaskStatus::parse(st).ok_or_else(|| bad_request(format!("unknown status `{st}`")))?),
        None => None,
    };
    Ok(Json(json!({"tasks": s.board.list(kind, status)})))
}

#[derive(Deserialize)]
struct CreateTask {
    kind: String,
    post_id: String,
}

async fn create_task(State(s): State<Arc<ServiceState>>, Json(body): Json<CreateTask>) -> ApiResult<(StatusCode, Json<Value>)> {
    let kind = parse_kind(&body.kind)?;
    let task = s.board.create(kind, &PostId(body.post_id))?;
    Ok((StatusCode::CREATED, Json(json!(task))))
}

async fn get_task(State(s): State<Arc<ServiceState>>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    Ok(Json(json!(s.board.get(&id)?)))
}

#[derive(Deserialize)]
struct Claim {
    annotator_id: String,
}

async fn claim_task(State(s): State<Arc<ServiceState>>, Path(id): Path<String>, Json(body): Json<Claim>) -> ApiResult<Json<Value>> {
    let token = s.board.claim(&id, &body.annotator_id)?;
    Ok(Json(json!({"task_id": id, "annotator_id": body.annotator_id, "token": token})))
}

async fn get_post(State(s): State<Arc<ServiceState>>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let id = PostId(id);
    let post = s
        .board
        .post(&id)
        .ok_or_else(|| ApiError::from(BoardError::NotFound(format!("post {id}"))))?;
    Ok(Json(json!({
        "post_id": post.post_id,
        "community": post.community,
        "population": post.population,
        "text": s.board.post_text(&id),
    })))
}

#[derive(Deserialize)]
struct Submission {
    annotator_id: String,
    token: String,
    labels: Value,
}

async fn submit(State(s): State<Arc<ServiceState>>, Path(id): Path<String>, Json(body): Json<Submission>) -> ApiResult<(StatusCode, Json<Value>)> {
    let task = s.board.submit(&id, &body.annotator_id, &body.token, &body.labels)?;
    Ok((StatusCode::CREATED, Json(json!(task))))
}

#[derive(Deserialize)]
struct Adjudication {
    adjudicator: String,
    #[serde(default)]
    note: String,
    labels: Value,
}

async fn adjudicate(State(s): State<Arc<ServiceState>>, Path(id): Path<String>, Json(body): Json<Adjudication>) -> ApiResult<Json<Value>> {
    let task = s.board.adjudicate(&id, &body.adjudicator, &body.note, &body.labels)?;
    Ok(Json(json!(task)))
}

#[derive(Deserialize)]
struct AgreementQuery {
    kind: String,
    a: String,
    b: String,
}

async fn agreement(State(s): State<Arc<ServiceState>>, Query(q): Query<AgreementQuery>) -> ApiResult<Json<Value>> {
    let kind = parse_kind(&q.kind)?;
    Ok(Json(json!(s.board.agreement(kind, &q.a, &q.b)?)))
}

#[derive(Deserialize)]
struct ExportQuery {
    kind: String,
}

async fn export(State(s): State<Arc<ServiceState>>, Query(q): Query<ExportQuery>) -> ApiResult<Response> {
    let kind = parse_kind(&q.kind)?;
    let gold = s.board.export(kind)?;
    let body = gold.to_jsonl().map_err(BoardError::from)?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response())
}

async fn health() -> Json<Value> {
    Json(json!({"status": "ok"}))
}

pub fn router(state: Arc<ServiceState>) -> Router {
    let api = Router::new()
        .route("/v1/tasks", get(list_tasks).post(create_task))
        .route("/v1/tasks/{id}", get(get_task))
        .route("/v1/tasks/{id}/claim", post(claim_task))
        .route("/v1/tasks/{id}/submissions", post(submit))
        .route("/v1/tasks/{id}/adjudication", post(adjudicate))
        .route("/v1/posts/{id}", get(get_post))
        .route("/v1/agreement", get(agreement))
        .route("/v1/export", get(export))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_token));
    Router::new()
        .route("/v1/health", get(health))
        .merge(api)
        .with_state(state)
}

pub async fn serve(state: Arc<ServiceState>, addr: SocketAddr) -> crate::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| Error::Http(format!("bind {addr}: {e}")))?;
    tracing::info!(%addr, "annotation service listening");
    axum::serve(listener, router(state))
        .await
        .map_err(|e| Error::Http(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Population, Post};
    use axum::body::Body;
    use axum::http::Request as HttpRequest;
    use http_body_util::BodyExt;
    use tower::ServiceExt;

    const TEXT: &str = "I look after my dad every evening and my friends stopped calling.";

    fn app() -> Router {
        let post = Post::new(PostId::from("p1"), "caregivers".into(), Population::Caregiver, String::new(), TEXT.into());
        router(ServiceState::new(TaskBoard::new(vec![post], true, "k"), Some("tok".into())))
    }

    async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>, auth: bool) -> (StatusCode, Value, String) {
        let mut req = HttpRequest::builder().method(method).uri(uri);
        if auth {
            req = req.header(header::AUTHORIZATION, "Bearer tok");
        }
        let req = match body {
            Some(b) => req
                .header(header::CONTENT_TYPE, "application/json")
                .body(Body::from(b.to_string()))
                .unwrap(),
            None => req.body(Body::empty()).unwrap(),
        };
        let resp = app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        let text = String::from_utf8(bytes.to_vec()).unwrap();
        (status, serde_json::from_str(&text).unwrap_or(Value::Null), text)
    }

    #[tokio::test]
    async fn auth_is_required() {
        let app = app();
        assert_eq!(call(&app, "GET", "/v1/tasks", None, false).await.0, StatusCode::UNAUTHORIZED);
        assert_eq!(call(&app, "GET", "/v1/health", None, false).await.0, StatusCode::OK);
        assert_eq!(call(&app, "GET", "/v1/tasks", None, true).await.0, StatusCode::OK);
    }

    #[tokio::test]
    async fn full_annotation_round() {
        let app = app();
        let (st, task, _) = call(&app, "POST", "/v1/tasks", Some(json!({"kind": "relevance", "post_id": "p1"})), true).await;
        assert_eq!(st, StatusCode::CREATED);
        let id = task["task_id"].as_str().unwrap().to_string();

        let (st, post, _) = call(&app, "GET", "/v1/posts/p1", None, true).await;
        assert_eq!((st, post["text"].as_str()), (StatusCode::OK, Some(TEXT)));

        let (_, claim, _) = call(&app, "POST", &format!("/v1/tasks/{id}/claim"), Some(json!({"annotator_id": "a"})), true).await;
        let token = claim["token"].as_str().unwrap().to_string();

        let bad = json!({"annotator_id": "a", "token": token, "labels": {"relevant": true, "evidence": [{"quote": "my mother"}]}});
        let (st, err, _) = call(&app, "POST", &format!("/v1/tasks/{id}/submissions"), Some(bad), true).await;
        assert_eq!(st, StatusCode::UNPROCESSABLE_ENTITY);
        assert_eq!(err["violations"][0]["kind"], "not_a_substring");

        let forged = json!({"annotator_id": "a", "token": "x", "labels": {"relevant": false}});
        let (st, _, _) = call(&app, "POST", &format!("/v1/tasks/{id}/submissions"), Some(forged), true).await;
        assert_eq!(st, StatusCode::FORBIDDEN);

        let good = json!({"annotator_id": "a", "token": token, "labels": {"relevant": true, "evidence": [{"quote": "I look after my dad"}]}});
        let (st, task, _) = call(&app, "POST", &format!("/v1/tasks/{id}/submissions"), Some(good.clone()), true).await;
        assert_eq!((st, task["status"].as_str()), (StatusCode::CREATED, Some("submitted")));
        let (st, _, _) = call(&app, "POST", &format!("/v1/tasks/{id}/submissions"), Some(good), true).await;
        assert_eq!(st, StatusCode::CONFLICT);

        let (st, _, body) = call(&app, "GET", "/v1/export?kind=relevance", None, true).await;
        assert_eq!(st, StatusCode::OK);
        let line: Value = serde_json::from_str(body.lines().next().unwrap()).unwrap();
        assert_eq!((line["post_id"].as_str(), line["annotator_id"].as_str()), (Some("p1"), Some("merged")));
        assert_eq!(line["labels"]["evidence"][0]["start"], 0);

        let (_, list, _) = call(&app, "GET", "/v1/tasks?kind=relevance&status=merged", None, true).await;
        assert_eq!(list["tasks"].as_array().unwrap().len(), 1);
    }

    #[tokio::test]
    async fn agreement_and_unknown_inputs() {
        let app = app();
        let (_, task, _) = call(&app, "POST", "/v1/tasks", Some(json!({"kind": "contamination", "post_id": "p1"})), true).await;
        let id = task["task_id"].as_str().unwrap().to_string();
        for (who, flag) in [("a", true), ("b", false)] {
            let (_, c, _) = call(&app, "POST", &format!("/v1/tasks/{id}/claim"), Some(json!({"annotator_id": who})), true).await;
            let body = json!({"annotator_id": who, "token": c["token"], "labels": {"caregiver_author": flag}});
            call(&app, "POST", &format!("/v1/tasks/{id}/submissions"), Some(body), true).await;
        }
        let (st, report, _) = call(&app, "GET", "/v1/agreement?kind=contamination&a=a&b=b", None, true).await;
        assert_eq!(st, StatusCode::OK);
        assert_eq!(report["n_overlap"], 1);
        assert_eq!(report["fields"][0]["value"]["status"], "defined");

        let (st, _, _) = call(&app, "GET", "/v1/export?kind=contamination", None, true).await;
        assert_eq!(st, StatusCode::CONFLICT);
        let adj = json!({"adjudicator": "lead", "labels": {"caregiver_author": true}});
        let (st, _, _) = call(&app, "POST", &format!("/v1/tasks/{id}/adjudication"), Some(adj), true).await;
        assert_eq!(st, StatusCode::OK);
        assert_eq!(call(&app, "GET", "/v1/export?kind=contamination", None, true).await.0, StatusCode::OK);

        assert_eq!(call(&app, "GET", "/v1/tasks?kind=bogus", None, true).await.0, StatusCode::BAD_REQUEST);
        assert_eq!(call(&app, "GET", "/v1/tasks/nope", None, true).await.0, StatusCode::NOT_FOUND);
        assert_eq!(call(&app, "GET", "/v1/posts/zzz", None, true).await.0, StatusCode::NOT_FOUND);
    }
}
