use std::sync::Arc;

use axum::extract::{FromRequest, FromRequestParts, Path, Query, Request, State};
use axum::http::request::Parts;
use axum::response::{IntoResponse, Response};
use axum::Json;
use gazereview_core::eval::{build_review_set, EvalReport, IntervalVote, ReviewSet};
use gazereview_core::pipeline::{evaluate_stored, EvaluationRequest};
use gazereview_core::region::{region_query, PlotPoint, RegionQuery, RegionQueryResult};
use gazereview_core::session::{
    intervals_to_labels, EventMarker, LabelSequence, PositiveInterval, SystemKind,
};
use gazereview_core::store::{SessionManifest, StoredLabels, StoredVotes};
use gazereview_core::{Error, FieldError, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{ApiError, ApiResult};
use crate::AppState;

/// JSON body whose rejections use the service's error format.
pub struct ApiJson<T>(pub T);

impl<T, S> FromRequest<S> for ApiJson<T>
where
    T: DeserializeOwned,
    S: Send + Sync,
{
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> std::result::Result<Self, ApiError> {
        let Json(v) = Json::<T>::from_request(req, state).await?;
        Ok(ApiJson(v))
    }
}

pub struct ApiQuery<T>(pub T);

impl<T, S> FromRequestParts<S> for ApiQuery<T>
where
    T: DeserializeOwned,
    S: Send + Sync,
{
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &S) -> std::result::Result<Self, ApiError> {
        let Query(v) = Query::<T>::from_request_parts(parts, state).await?;
        Ok(ApiQuery(v))
    }
}

type AppStateRef = State<Arc<AppState>>;

/// Runs store work off the async executor.
async fn blocking<T, F>(state: &Arc<AppState>, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&AppState) -> Result<T> + Send + 'static,
{
    let st = state.clone();
    tokio::task::spawn_blocking(move || f(&st))
        .await
        .map_err(|e| ApiError(Error::Io(std::io::Error::other(e.to_string()))))?
        .map_err(ApiError)
}

fn parse_system(s: &str) -> Result<SystemKind> {
    s.parse()
        .map_err(|_| Error::NotFound(format!("label system {s:?}")))
}

pub async fn list_sessions(State(state): AppStateRef) -> ApiResult<Json<Vec<SessionManifest>>> {
    Ok(Json(blocking(&state, |s| s.store().list_manifests()).await?))
}

#[derive(Serialize)]
pub struct SessionDetail {
    #[serde(flatten)]
    manifest: SessionManifest,
    events: Vec<EventMarker>,
}

pub async fn get_session(
    State(state): AppStateRef,
    Path(id): Path<String>,
) -> ApiResult<Json<SessionDetail>> {
    let cached = blocking(&state, move |s| s.session(&id)).await?;
    Ok(Json(SessionDetail {
        manifest: cached.manifest.clone(),
        events: cached.events.clone(),
    }))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlotParams {
    #[serde(default)]
    include_untrusted: bool,
}

#[derive(Serialize)]
struct PlotResponse<'a> {
    session_id: &'a str,
    frame_count: usize,
    fps: f64,
    include_untrusted: bool,
    points: &'a [PlotPoint],
}

pub async fn get_plot(
    State(state): AppStateRef,
    Path(id): Path<String>,
    ApiQuery(params): ApiQuery<PlotParams>,
) -> ApiResult<Response> {
    let cached = blocking(&state, move |s| s.session(&id)).await?;
    let m = &cached.manifest;
    Ok(Json(PlotResponse {
        session_id: &m.id,
        frame_count: m.frame_count,
        fps: m.fps,
        include_untrusted: params.include_untrusted,
        points: cached.index(params.include_untrusted).points(),
    })
    .into_response())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionQueryBody {
    shape: RegionQuery,
    #[serde(default)]
    include_untrusted: bool,
}

#[derive(Serialize)]
pub struct RegionQueryResponse {
    session_id: String,
    frame_count: usize,
    fps: f64,
    #[serde(flatten)]
    result: RegionQueryResult,
}

pub async fn post_region_query(
    State(state): AppStateRef,
    Path(id): Path<String>,
    ApiJson(body): ApiJson<RegionQueryBody>,
) -> ApiResult<Json<RegionQueryResponse>> {
    let out = blocking(&state, move |s| {
        let cached = s.session(&id)?;
        let m = &cached.manifest;
        let result = region_query(
            cached.index(body.include_untrusted),
            &body.shape,
            m.frame_count,
            m.fps,
        )?;
        Ok(RegionQueryResponse {
            session_id: m.id.clone(),
            frame_count: m.frame_count,
            fps: m.fps,
            result,
        })
    })
    .await?;
    Ok(Json(out))
}

#[derive(Serialize)]
pub struct LabelsResponse {
    #[serde(flatten)]
    labels: StoredLabels,
    fps: f64,
}

/// `version` is the version the client last saw, 0 for a first write.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelsBody {
    version: u64,
    intervals: Vec<PositiveInterval>,
}

pub async fn get_labels(
    State(state): AppStateRef,
    Path((id, system)): Path<(String, String)>,
) -> ApiResult<Json<LabelsResponse>> {
    let out = blocking(&state, move |s| {
        let system = parse_system(&system)?;
        let fps = s.session(&id)?.manifest.fps;
        let labels = s.store().load_labels(&id, system)?;
        Ok(LabelsResponse { labels, fps })
    })
    .await?;
    Ok(Json(out))
}

pub async fn put_labels(
    State(state): AppStateRef,
    Path((id, system)): Path<(String, String)>,
    ApiJson(body): ApiJson<LabelsBody>,
) -> ApiResult<Json<LabelsResponse>> {
    let out = blocking(&state, move |s| {
        let system = parse_system(&system)?;
        if system == SystemKind::Reference {
            return Err(Error::invalid(
                "system",
                "reference labels are derived from votes and cannot be written",
            ));
        }
        let m = &s.session(&id)?.manifest;
        let errs: Vec<FieldError> = body
            .intervals
            .iter()
            .enumerate()
            .filter_map(|(i, iv)| {
                iv.validate(m.frame_count)
                    .err()
                    .map(|e| FieldError::new(format!("intervals[{i}]"), e.to_string()))
            })
            .collect();
        if !errs.is_empty() {
            return Err(Error::Validation(errs));
        }
        let labels = intervals_to_labels(&body.intervals, m.frame_count)?;
        let _guard = s.write_lock.lock();
        let labels = s
            .store()
            .persist_labels(&id, &LabelSequence::new(system, labels), body.version)?;
        Ok(LabelsResponse { labels, fps: m.fps })
    })
    .await?;
    Ok(Json(out))
}

#[derive(Serialize)]
pub struct VotesResponse {
    #[serde(flatten)]
    votes: StoredVotes,
    fps: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VotesBody {
    #[serde(alias = "K")]
    k: usize,
    votes: Vec<IntervalVote>,
}

pub async fn get_votes(
    State(state): AppStateRef,
    Path(id): Path<String>,
) -> ApiResult<Json<VotesResponse>> {
    let out = blocking(&state, move |s| {
        let fps = s.session(&id)?.manifest.fps;
        let votes = s.store().load_votes(&id)?;
        Ok(VotesResponse { votes, fps })
    })
    .await?;
    Ok(Json(out))
}

pub async fn post_votes(
    State(state): AppStateRef,
    Path(id): Path<String>,
    ApiJson(body): ApiJson<VotesBody>,
) -> ApiResult<Json<VotesResponse>> {
    let out = blocking(&state, move |s| {
        let fps = s.session(&id)?.manifest.fps;
        let _guard = s.write_lock.lock();
        let votes = s.store().persist_votes(&id, body.k, body.votes)?;
        Ok(VotesResponse { votes, fps })
    })
    .await?;
    Ok(Json(out))
}

#[derive(Serialize)]
pub struct ReviewSetResponse {
    #[serde(flatten)]
    review: ReviewSet,
    fps: f64,
}

/// The intervals proctors must vote on, once all three systems are labeled.
pub async fn get_review_set(
    State(state): AppStateRef,
    Path(id): Path<String>,
) -> ApiResult<Json<ReviewSetResponse>> {
    let out = blocking(&state, move |s| {
        let fps = s.session(&id)?.manifest.fps;
        let load = |k| s.store().load_labels(&id, k)?.to_sequence();
        let review = build_review_set(
            &id,
            &load(SystemKind::HumanOnly)?,
            &load(SystemKind::MlOnly)?,
            &load(SystemKind::Hybrid)?,
        )?;
        Ok(ReviewSetResponse { review, fps })
    })
    .await?;
    Ok(Json(out))
}

#[derive(Serialize)]
pub struct EvaluationCreated {
    report_id: String,
}

pub async fn post_evaluation(
    State(state): AppStateRef,
    ApiJson(req): ApiJson<EvaluationRequest>,
) -> ApiResult<Json<EvaluationCreated>> {
    let report_id = blocking(&state, move |s| {
        // hold writers off so the report sees one consistent set of labels
        let _guard = s.write_lock.lock();
        evaluate_stored(s.store(), &req).map(|(id, _)| id)
    })
    .await?;
    Ok(Json(EvaluationCreated { report_id }))
}

pub async fn get_evaluation(
    State(state): AppStateRef,
    Path(id): Path<String>,
) -> ApiResult<Json<EvalReport>> {
    Ok(Json(blocking(&state, move |s| s.store().load_report(&id)).await?))
}
