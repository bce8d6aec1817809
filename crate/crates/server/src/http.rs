//! Admin HTTP API and the `/ws` upgrade.

use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State, WebSocketUpgrade};
use axum::http::header::{AUTHORIZATION, CONTENT_DISPOSITION, CONTENT_TYPE};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::services::ServeDir;
use wizundry_core::auth::Claims;
use wizundry_core::hub::{Hub, HubError};
use wizundry_core::protocol::ErrorCode;
use wizundry_core::trial::{FeatureAssignment, FeatureSet, Role, Trial};

use crate::config::UserEntry;
use crate::ws::run_socket;

#[derive(Clone)]
pub struct AppState {
    pub hub: Arc<Hub>,
    pub users: Arc<Vec<UserEntry>>,
}

/// Error body: `{"code": "...", "message": "..."}`.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: ErrorCode,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: ErrorCode, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }
}

pub fn status_for(code: ErrorCode) -> StatusCode {
    use ErrorCode as C;
    match code {
        C::AuthFailed | C::BadSignature | C::Expired | C::Malformed => StatusCode::UNAUTHORIZED,
        C::Forbidden | C::FeatureDisabled | C::NotAWizard => StatusCode::FORBIDDEN,
        C::UnknownTrial | C::UnknownActor => StatusCode::NOT_FOUND,
        C::TrialClosed | C::DuplicateEndUser => StatusCode::CONFLICT,
        C::StorageFull => StatusCode::INSUFFICIENT_STORAGE,
        C::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        _ => StatusCode::BAD_REQUEST,
    }
}

impl From<HubError> for ApiError {
    fn from(e: HubError) -> Self {
        let code = e.code();
        Self::new(status_for(code), code, e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        Self::new(StatusCode::BAD_REQUEST, ErrorCode::DecodeError, e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.status.is_server_error() {
            tracing::error!(code = self.code.as_str(), "{}", self.message);
        }
        let body = json!({ "code": self.code, "message": self.message });
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn claims(state: &AppState, headers: &HeaderMap) -> ApiResult<Claims> {
    let token = headers
        .get(AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .ok_or_else(|| {
            ApiError::new(
                StatusCode::UNAUTHORIZED,
                ErrorCode::AuthFailed,
                "missing bearer token",
            )
        })?;
    Ok(state.hub.verify(token.trim())?)
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LoginRequest {
    pub user_id: String,
    pub password: String,
    #[serde(default)]
    pub trial_id: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LoginResponse {
    pub token: String,
    pub user_id: String,
    pub role: Role,
}

async fn login(
    State(state): State<AppState>,
    body: Result<Json<LoginRequest>, JsonRejection>,
) -> ApiResult<Json<LoginResponse>> {
    let Json(req) = body?;
    let user = state
        .users
        .iter()
        .find(|u| u.user_id == req.user_id && u.password == req.password)
        .ok_or_else(|| {
            ApiError::new(
                StatusCode::UNAUTHORIZED,
                ErrorCode::AuthFailed,
                "unknown user or wrong password",
            )
        })?;
    let token = state
        .hub
        .issue_token(&user.user_id, user.role, req.trial_id.as_deref())?;
    Ok(Json(LoginResponse {
        token,
        user_id: user.user_id.clone(),
        role: user.role,
    }))
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CreateTrialRequest {
    pub name: String,
    #[serde(default)]
    pub assignments: Vec<FeatureAssignment>,
}

async fn create_trial(
    State(state): State<AppState>,
    headers: HeaderMap,
    body: Result<Json<CreateTrialRequest>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<Trial>)> {
    let claims = claims(&state, &headers)?;
    let Json(req) = body?;
    let trial = state.hub.create_trial(&claims, &req.name, req.assignments)?;
    tracing::info!(trial = %trial.trial_id, by = %claims.user_id, "trial created");
    Ok((StatusCode::CREATED, Json(trial)))
}

async fn list_trials(State(state): State<AppState>, headers: HeaderMap) -> ApiResult<Json<Vec<Trial>>> {
    let claims = claims(&state, &headers)?;
    let mut trials = state.hub.list_trials(&claims)?;
    trials.sort_by_key(|t| (t.created_at, t.trial_id.len(), t.trial_id.clone()));
    Ok(Json(trials))
}

async fn delete_trial(
    State(state): State<AppState>,
    headers: HeaderMap,
    Path(id): Path<String>,
) -> ApiResult<StatusCode> {
    let claims = claims(&state, &headers)?;
    state.hub.delete_trial(&claims, &id)?;
    tracing::info!(trial = %id, by = %claims.user_id, "trial closed");
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FeaturesRequest {
    pub actor_id: String,
    pub features: FeatureSet,
}

async fn set_features(
    State(state): State<AppState>,
    headers: HeaderMap,
    Path(id): Path<String>,
    body: Result<Json<FeaturesRequest>, JsonRejection>,
) -> ApiResult<Json<FeaturesRequest>> {
    let claims = claims(&state, &headers)?;
    let Json(req) = body?;
    let features = state
        .hub
        .assign_features(&claims, &id, &req.actor_id, req.features)?;
    Ok(Json(FeaturesRequest {
        actor_id: req.actor_id,
        features,
    }))
}

async fn log_csv(
    State(state): State<AppState>,
    headers: HeaderMap,
    Path(id): Path<String>,
) -> ApiResult<Response> {
    let claims = claims(&state, &headers)?;
    let csv = state.hub.export_csv(&claims, &id)?;
    let disposition = format!("attachment; filename=\"{id}.log.csv\"");
    Ok((
        [
            (CONTENT_TYPE, "text/csv; charset=utf-8".to_owned()),
            (CONTENT_DISPOSITION, disposition),
        ],
        csv,
    )
        .into_response())
}

async fn healthz(State(state): State<AppState>) -> Json<serde_json::Value> {
    Json(json!({
        "status": "ok",
        "connections": state.hub.connection_count(),
    }))
}

async fn ws(State(state): State<AppState>, upgrade: WebSocketUpgrade) -> Response {
    let hub = state.hub.clone();
    upgrade.on_upgrade(move |socket| run_socket(hub, socket))
}

pub fn router(state: AppState, static_dir: Option<&std::path::Path>) -> Router {
    let api = Router::new()
        .route("/auth/login", post(login))
        .route("/trials", post(create_trial).get(list_trials))
        .route("/trials/{id}", delete(delete_trial))
        .route("/trials/{id}/features", post(set_features))
        .route("/trials/{id}/log.csv", get(log_csv))
        .route("/healthz", get(healthz))
        .route("/ws", get(ws))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}
