use std::collections::BTreeMap;

use axum::extract::rejection::JsonRejection;
use axum::extract::{DefaultBodyLimit, FromRequest, FromRequestParts, Multipart, Path, Request, State};
use axum::http::header::{CONTENT_DISPOSITION, CONTENT_LENGTH, CONTENT_TYPE};
use axum::http::request::Parts;
use axum::http::{HeaderMap, StatusCode};
use axum::response::IntoResponse;
use axum::routing::{delete, get, patch, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use seminar_core::scheduler::ScheduleResult;
use seminar_core::*;
use serde::{Deserialize, Serialize};

use crate::auth::Caller;
use crate::error::{ApiError, ApiResult};
use crate::AppState;

/// Runs a store call on the blocking pool.
pub(crate) async fn blocking<T, F>(f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce() -> Result<T> + Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| Error::Internal(format!("worker failed: {e}")))?
        .map_err(ApiError)
}

/// JSON body whose rejections are reported as validation errors.
pub struct Body<T>(pub T);

impl<S, T> FromRequest<S> for Body<T>
where
    Json<T>: FromRequest<S, Rejection = JsonRejection>,
    S: Send + Sync,
{
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, ApiError> {
        match Json::<T>::from_request(req, state).await {
            Ok(Json(value)) => Ok(Body(value)),
            Err(rejection) => Err(Error::Validation(rejection.body_text()).into()),
        }
    }
}

/// Numeric id in the path; anything else is an unknown resource.
pub struct Id(pub i64);

impl<S: Send + Sync> FromRequestParts<S> for Id {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &S) -> Result<Self, ApiError> {
        Path::<i64>::from_request_parts(parts, state)
            .await
            .map(|Path(id)| Id(id))
            .map_err(|_| Error::NotFound("resource").into())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LoginRequest {
    pub email: String,
    pub password: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LoginResponse {
    pub token: String,
    pub role: Role,
    pub user_id: UserId,
    pub expires_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FileReview {
    pub decision: Decision,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleRow {
    pub assignment_id: AssignmentId,
    pub theme_id: ThemeId,
    pub theme: String,
    /// Omitted for students when assignees are anonymized, except on
    /// their own rows.
    pub student: Option<String>,
}

/// Week → presentations, covering every week of the seminar.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleBoard {
    pub num_weeks: u32,
    pub weeks: BTreeMap<Week, Vec<ScheduleRow>>,
    pub unscheduled: Vec<ScheduleRow>,
}

pub fn api_routes(state: AppState) -> Router {
    let upload_limit = state.config().max_file_bytes.saturating_add(64 * 1024);
    let upload_limit = usize::try_from(upload_limit).unwrap_or(usize::MAX);
    Router::new()
        .route("/api/login", post(login))
        .route("/api/themes", get(list_themes).post(propose_theme))
        .route("/api/themes/{id}", delete(delete_theme))
        .route("/api/themes/{id}/review", post(review_theme))
        .route("/api/themes/{id}/select", post(select_theme).delete(withdraw_selection))
        .route(
            "/api/themes/{id}/files",
            get(theme_files)
                .post(upload_file)
                .layer(DefaultBodyLimit::max(upload_limit)),
        )
        .route("/api/files/{id}", get(download_file))
        .route("/api/files/{id}/review", post(review_file))
        .route("/api/schedule", get(schedule))
        .route("/api/schedule/plan", post(plan_schedule))
        .route("/api/me", patch(update_me))
        .route("/api/policy", get(get_policy).patch(set_policy))
        .with_state(state)
}

async fn login(State(state): State<AppState>, Body(req): Body<LoginRequest>) -> ApiResult<Json<LoginResponse>> {
    let (store, hasher, ttl) = (
        state.store().clone(),
        state.hasher().clone(),
        state.config().session_ttl,
    );
    let (session, issued) = blocking(move || store.login(&hasher, &req.email, &req.password, ttl, Utc::now())).await?;
    Ok(Json(LoginResponse {
        token: issued.token,
        role: session.role,
        user_id: session.user_id,
        expires_at: issued.expires_at,
    }))
}

async fn list_themes(caller: Caller, State(state): State<AppState>) -> ApiResult<Json<Vec<ThemeView>>> {
    let session = *caller.session();
    let store = state.store().clone();
    let mut views = blocking(move || store.query_theme_listing(&session)).await?;
    if state.config().anonymize_assignees && !session.is_admin() {
        for v in &mut views {
            v.assignees.clear();
        }
    }
    Ok(Json(views))
}

async fn propose_theme(
    caller: Caller,
    State(state): State<AppState>,
    Body(draft): Body<ThemeDraft>,
) -> ApiResult<(StatusCode, Json<Theme>)> {
    let session = *caller.session();
    let store = state.store().clone();
    let theme = blocking(move || store.write(|s| ops::propose_theme(s, &session, &draft, Utc::now()))).await?;
    Ok((StatusCode::CREATED, Json(theme)))
}

async fn review_theme(
    caller: Caller,
    Id(id): Id,
    State(state): State<AppState>,
    Body(review): Body<ThemeReview>,
) -> ApiResult<Json<Theme>> {
    let session = *caller.session();
    let store = state.store().clone();
    let theme =
        blocking(move || store.write(|s| ops::review_theme(s, &session, ThemeId(id), &review, Utc::now()))).await?;
    Ok(Json(theme))
}

async fn delete_theme(caller: Caller, Id(id): Id, State(state): State<AppState>) -> ApiResult<Json<Theme>> {
    let session = *caller.session();
    let store = state.store().clone();
    let theme = blocking(move || store.write(|s| ops::delete_theme(s, &session, ThemeId(id), Utc::now()))).await?;
    Ok(Json(theme))
}

async fn select_theme(
    caller: Caller,
    Id(id): Id,
    State(state): State<AppState>,
) -> ApiResult<(StatusCode, Json<Assignment>)> {
    let session = *caller.session();
    let store = state.store().clone();
    let assignment = blocking(move || store.atomic_select(&session, ThemeId(id), Utc::now())).await?;
    Ok((StatusCode::CREATED, Json(assignment)))
}

async fn withdraw_selection(caller: Caller, Id(id): Id, State(state): State<AppState>) -> ApiResult<Json<Assignment>> {
    let session = *caller.session();
    let store = state.store().clone();
    let assignment = blocking(move || store.write(|s| ops::withdraw_selection(s, &session, ThemeId(id)))).await?;
    Ok(Json(assignment))
}

async fn theme_files(caller: Caller, Id(id): Id, State(state): State<AppState>) -> ApiResult<Json<Vec<UploadedFile>>> {
    let session = *caller.session();
    let store = state.store().clone();
    let files = blocking(move || store.read(|s| ops::theme_files(s, &session, ThemeId(id)))).await?;
    Ok(Json(files))
}

async fn upload_file(
    caller: Caller,
    Id(id): Id,
    State(state): State<AppState>,
    headers: HeaderMap,
    mut multipart: Multipart,
) -> ApiResult<(StatusCode, Json<UploadedFile>)> {
    let limit = state.config().max_file_bytes;
    let too_large = || {
        let size = headers
            .get(CONTENT_LENGTH)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.parse().ok())
            .unwrap_or(limit.saturating_add(1));
        ApiError(Error::FileTooLarge { size, limit })
    };
    let malformed = |e: axum::extract::multipart::MultipartError| {
        if e.status() == StatusCode::PAYLOAD_TOO_LARGE {
            too_large()
        } else {
            ApiError(Error::Validation(e.body_text()))
        }
    };

    let mut upload = None;
    while let Some(field) = multipart.next_field().await.map_err(malformed)? {
        if field.name() == Some("file") {
            let filename = field.file_name().unwrap_or("upload").to_string();
            let bytes = field.bytes().await.map_err(malformed)?;
            upload = Some((filename, bytes));
            break;
        }
    }
    let (filename, bytes) = upload.ok_or_else(|| Error::Validation("multipart part `file` is required".into()))?;

    let session = *caller.session();
    let store = state.store().clone();
    let file = blocking(move || store.attach_file(&session, ThemeId(id), &filename, &bytes, limit, Utc::now())).await?;
    Ok((StatusCode::CREATED, Json(file)))
}

async fn download_file(caller: Caller, Id(id): Id, State(state): State<AppState>) -> ApiResult<impl IntoResponse> {
    let session = *caller.session();
    let store = state.store().clone();
    let (file, bytes) = blocking(move || {
        let file = store.read(|s| {
            let file = s.file(FileId(id))?.ok_or(Error::NotFound("file"))?;
            let visible = ops::theme_files(s, &session, file.theme_id)?;
            if !visible.iter().any(|f| f.id == file.id) {
                return Err(Error::NotFound("file"));
            }
            Ok(file)
        })?;
        let bytes = store.blobs().get(&file.content_hash)?;
        Ok((file, bytes))
    })
    .await?;
    let disposition = format!("attachment; filename=\"{}\"", file.filename.replace(['"', '\\'], "_"));
    Ok((
        [
            (CONTENT_TYPE, "application/octet-stream".to_string()),
            (CONTENT_DISPOSITION, disposition),
        ],
        bytes,
    ))
}

async fn review_file(
    caller: Caller,
    Id(id): Id,
    State(state): State<AppState>,
    Body(review): Body<FileReview>,
) -> ApiResult<Json<UploadedFile>> {
    let session = *caller.session();
    let store = state.store().clone();
    let file =
        blocking(move || store.write(|s| ops::review_file(s, &session, FileId(id), review.decision, Utc::now())))
            .await?;
    Ok(Json(file))
}

async fn plan_schedule(caller: Caller, State(state): State<AppState>) -> ApiResult<Json<ScheduleResult>> {
    let session = *caller.session();
    let store = state.store().clone();
    let result = blocking(move || store.write(|s| ops::plan_presentations(s, &session, Utc::now()))).await?;
    Ok(Json(result))
}

async fn schedule(caller: Caller, State(state): State<AppState>) -> ApiResult<Json<ScheduleBoard>> {
    let session = *caller.session();
    let store = state.store().clone();
    let (policy, board) = blocking(move || store.read(|s| Ok((s.policy()?, ops::schedule_board(s)?)))).await?;
    let hide = state.config().anonymize_assignees && !session.is_admin();

    let mut out = ScheduleBoard {
        num_weeks: policy.num_weeks,
        weeks: (1..=policy.num_weeks).map(|w| (w, Vec::new())).collect(),
        unscheduled: Vec::new(),
    };
    for entry in board {
        let row = ScheduleRow {
            assignment_id: entry.assignment_id,
            theme_id: entry.theme_id,
            theme: entry.theme,
            student: (!hide || entry.student_id == session.user_id).then_some(entry.student),
        };
        match entry.week {
            Some(week) => out.weeks.entry(week).or_default().push(row),
            None => out.unscheduled.push(row),
        }
    }
    Ok(Json(out))
}

async fn update_me(
    caller: Caller,
    State(state): State<AppState>,
    Body(patch): Body<ProfilePatch>,
) -> ApiResult<Json<User>> {
    let session = *caller.session();
    let keep = caller.0.token_hash.clone();
    let (store, hasher) = (state.store().clone(), state.hasher().clone());
    let user = blocking(move || {
        let change = ops::prepare_profile_change(&patch, &hasher)?;
        store.update_profile(&session, change, &keep)
    })
    .await?;
    Ok(Json(user))
}

async fn get_policy(_caller: Caller, State(state): State<AppState>) -> ApiResult<Json<Policy>> {
    let store = state.store().clone();
    Ok(Json(blocking(move || store.read(|s| s.policy())).await?))
}

async fn set_policy(
    caller: Caller,
    State(state): State<AppState>,
    Body(patch): Body<PolicyPatch>,
) -> ApiResult<Json<Policy>> {
    let session = *caller.session();
    let store = state.store().clone();
    let policy = blocking(move || store.write(|s| ops::set_policy(s, &session, &patch, Utc::now()))).await?;
    Ok(Json(policy))
}
