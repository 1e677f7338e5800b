//! REST surface over [`SurveyService`]. Bodies are JSON; every error is
//! `{code, message, field}`.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;

use crate::error::ApiError;
use crate::service::{
    ChoiceReceipt, ChoiceSubmission, Intake, ScreeningSubmission, SessionSummary, SurveyService,
    TaskPayload,
};
use realtor_core::arena::Leaderboard;
use realtor_core::personalization::BuyerProfile;

use crate::view::ListingView;

type Shared = Arc<SurveyService>;
type ApiResult<T> = Result<Json<T>, ApiError>;

fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("malformed body: {e}")))
}

async fn create_session(State(svc): State<Shared>, body: Bytes) -> ApiResult<SessionSummary> {
    let intake = if body.iter().all(u8::is_ascii_whitespace) {
        Intake::default()
    } else {
        parse(&body)?
    };
    Ok(Json(svc.create_session(intake).await?))
}

async fn next_task(State(svc): State<Shared>, Path(id): Path<String>) -> ApiResult<TaskPayload> {
    Ok(Json(svc.next_task(&id).await?))
}

async fn screening(
    State(svc): State<Shared>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<SessionSummary> {
    let sub: ScreeningSubmission = parse(&body)?;
    Ok(Json(svc.submit_screening(&id, sub).await?))
}

async fn preferences(
    State(svc): State<Shared>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<SessionSummary> {
    let profile: BuyerProfile = parse(&body)?;
    Ok(Json(svc.submit_preferences(&id, profile).await?))
}

async fn choices(
    State(svc): State<Shared>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<ChoiceReceipt> {
    let sub: ChoiceSubmission = parse(&body)?;
    Ok(Json(svc.record_choice(&id, sub).await?))
}

async fn leaderboard(State(svc): State<Shared>) -> ApiResult<Leaderboard> {
    Ok(Json(svc.leaderboard()?))
}

async fn listing(State(svc): State<Shared>, Path(id): Path<String>) -> ApiResult<ListingView> {
    Ok(Json(svc.listing(&id)?))
}

async fn fallback() -> ApiError {
    ApiError::not_found("no such endpoint")
}

pub fn router(service: Shared) -> Router {
    Router::new()
        .route("/api/sessions", post(create_session))
        .route("/api/sessions/{id}/next", get(next_task))
        .route("/api/sessions/{id}/screening", post(screening))
        .route("/api/sessions/{id}/preferences", post(preferences))
        .route("/api/sessions/{id}/choices", post(choices))
        .route("/api/leaderboard", get(leaderboard))
        .route("/api/listings/{id}", get(listing))
        .fallback(fallback)
        .with_state(service)
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    service: Shared,
    addr: SocketAddr,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "survey service listening");
    axum::serve(listener, router(service))
        .with_graceful_shutdown(shutdown)
        .await
}
