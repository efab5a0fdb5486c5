//! OpenAPI 3 reference document for the service. `docs/openapi.json` is
//! generated from [`document`]; a test keeps the checked-in copy current.

use serde_json::{json, Map, Value};

use seminar_core::Error;

use crate::error::status_of;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Access {
    Public,
    Authenticated,
    Admin,
}

#[derive(Debug, Clone)]
pub struct Endpoint {
    pub method: &'static str,
    pub path: &'static str,
    pub summary: &'static str,
    pub access: Access,
    /// `(content type, schema name)`.
    pub request: Option<(&'static str, &'static str)>,
    pub status: u16,
    /// Schema of the success body; `[Name]` for arrays.
    pub response: &'static str,
    pub errors: Vec<Error>,
}

const JSON: &str = "application/json";

#[allow(clippy::too_many_arguments)]
fn ep(
    method: &'static str,
    path: &'static str,
    summary: &'static str,
    access: Access,
    request: Option<&'static str>,
    status: u16,
    response: &'static str,
    errors: Vec<Error>,
) -> Endpoint {
    Endpoint {
        method,
        path,
        summary,
        access,
        request: request.map(|r| (JSON, r)),
        status,
        response,
        errors,
    }
}

fn invalid_transition() -> Error {
    Error::InvalidTransition {
        entity: "theme",
        from: "approved".into(),
        to: "approved".into(),
    }
}

fn week() -> Error {
    Error::WeekOutOfRange { week: 0, num_weeks: 7 }
}

/// Every route the service exposes.
pub fn endpoints() -> Vec<Endpoint> {
    use Access::*;
    let nf = || Error::NotFound("theme");
    let v = || Error::Validation(String::new());
    vec![
        ep(
            "post",
            "/api/login",
            "Exchange credentials for a bearer token",
            Public,
            Some("LoginRequest"),
            200,
            "LoginResponse",
            vec![Error::AuthFailed, Error::AccountDisabled, v()],
        ),
        ep(
            "get",
            "/api/themes",
            "List visible themes with live occupancy (at most 1000 rows)",
            Authenticated,
            None,
            200,
            "[ThemeView]",
            vec![],
        ),
        ep(
            "post",
            "/api/themes",
            "Propose a theme; administrator proposals are approved at once",
            Authenticated,
            Some("ThemeDraft"),
            201,
            "Theme",
            vec![
                v(),
                Error::DuplicateTitle(String::new()),
                Error::ProposalsClosed,
                week(),
                Error::MissingCapacity,
            ],
        ),
        ep(
            "post",
            "/api/themes/{id}/review",
            "Approve or reject a pending theme",
            Admin,
            Some("ThemeReview"),
            200,
            "Theme",
            vec![nf(), invalid_transition(), Error::MissingCapacity, week(), v()],
        ),
        ep(
            "delete",
            "/api/themes/{id}",
            "Delete a theme and cancel its assignments",
            Admin,
            None,
            200,
            "Theme",
            vec![nf(), invalid_transition()],
        ),
        ep(
            "post",
            "/api/themes/{id}/select",
            "Take a place on a theme",
            Authenticated,
            None,
            201,
            "Assignment",
            vec![
                nf(),
                Error::ThemeFull,
                Error::ChoiceLimitReached,
                Error::AlreadyAssigned,
                Error::ThemeNotSelectable(String::new()),
                Error::SelectionNotOpen,
                Error::TransactionRetryExhausted(5),
            ],
        ),
        ep(
            "delete",
            "/api/themes/{id}/select",
            "Give up a place on a theme",
            Authenticated,
            None,
            200,
            "Assignment",
            vec![Error::NotAssigned],
        ),
        Endpoint {
            request: Some(("multipart/form-data", "Upload")),
            ..ep(
                "post",
                "/api/themes/{id}/files",
                "Upload a file for moderation (multipart part `file`)",
                Authenticated,
                None,
                201,
                "UploadedFile",
                vec![
                    nf(),
                    Error::NotAssigned,
                    Error::EmptyFile,
                    Error::FileTooLarge { size: 0, limit: 0 },
                    v(),
                ],
            )
        },
        ep(
            "get",
            "/api/themes/{id}/files",
            "Files of a theme: approved ones for students, all for administrators",
            Authenticated,
            None,
            200,
            "[UploadedFile]",
            vec![nf()],
        ),
        ep(
            "get",
            "/api/files/{id}",
            "Download a visible file",
            Authenticated,
            None,
            200,
            "binary",
            vec![Error::NotFound("file")],
        ),
        ep(
            "post",
            "/api/files/{id}/review",
            "Approve or reject a pending file",
            Admin,
            Some("FileReview"),
            200,
            "UploadedFile",
            vec![Error::NotFound("file"), invalid_transition()],
        ),
        ep(
            "post",
            "/api/schedule/plan",
            "Plan weeks for unscheduled assignments",
            Admin,
            None,
            200,
            "ScheduleResult",
            vec![Error::Infeasible { items: vec![] }],
        ),
        ep(
            "get",
            "/api/schedule",
            "Presentations by week",
            Authenticated,
            None,
            200,
            "ScheduleBoard",
            vec![],
        ),
        ep(
            "patch",
            "/api/me",
            "Edit own profile; a new password revokes other sessions",
            Authenticated,
            Some("ProfilePatch"),
            200,
            "User",
            vec![Error::EmailTaken, Error::WeakPassword(8), v()],
        ),
        ep(
            "get",
            "/api/policy",
            "Current policy",
            Authenticated,
            None,
            200,
            "Policy",
            vec![],
        ),
        ep(
            "patch",
            "/api/policy",
            "Change policy",
            Admin,
            Some("PolicyPatch"),
            200,
            "Policy",
            vec![Error::InvalidPolicy(String::new()), v()],
        ),
    ]
}

fn schema_ref(name: &str) -> Value {
    match name.strip_prefix('[').and_then(|n| n.strip_suffix(']')) {
        Some(inner) => json!({"type": "array", "items": schema_ref(inner)}),
        None if name == "binary" => json!({"type": "string", "format": "binary"}),
        None => json!({"$ref": format!("#/components/schemas/{name}")}),
    }
}

fn object(required: &[&str], props: &[(&str, Value)]) -> Value {
    let props: Map<String, Value> = props.iter().map(|(k, v)| (k.to_string(), v.clone())).collect();
    json!({"type": "object", "required": required, "properties": props})
}

fn int() -> Value {
    json!({"type": "integer"})
}
fn opt_int() -> Value {
    json!({"type": ["integer", "null"]})
}
fn string() -> Value {
    json!({"type": "string"})
}
fn time() -> Value {
    json!({"type": "string", "format": "date-time"})
}
fn strings() -> Value {
    json!({"type": "array", "items": {"type": "string"}})
}
fn one_of(values: &[&str]) -> Value {
    json!({"type": "string", "enum": values})
}

fn theme_props() -> Vec<(&'static str, Value)> {
    vec![
        ("id", int()),
        ("title", string()),
        ("summary", string()),
        ("keywords", strings()),
        ("references", strings()),
        ("proposer_id", int()),
        ("status", one_of(&["pending", "approved", "rejected", "deleted"])),
        ("max_students", opt_int()),
        ("fixed_week", opt_int()),
        ("deadline_week", opt_int()),
        ("created_at", time()),
    ]
}

/// Component schemas by name.
pub fn schemas() -> Map<String, Value> {
    let decision = one_of(&["approve", "reject"]);
    let schedule_row = object(
        &["assignment_id", "theme_id", "theme", "student"],
        &[
            ("assignment_id", int()),
            ("theme_id", int()),
            ("theme", string()),
            ("student", json!({"type": ["string", "null"]})),
        ],
    );
    let mut view = theme_props();
    view.extend([
        ("assigned_count", int()),
        ("remaining_capacity", opt_int()),
        ("assignees", strings()),
    ]);
    let theme_keys: Vec<&str> = theme_props().iter().map(|(k, _)| *k).collect();
    let view_keys: Vec<&str> = view.iter().map(|(k, _)| *k).collect();
    let entries = [
        (
            "LoginRequest",
            object(&["email", "password"], &[("email", string()), ("password", string())]),
        ),
        (
            "LoginResponse",
            object(
                &["token", "role", "user_id", "expires_at"],
                &[
                    ("token", string()),
                    ("role", one_of(&["administrator", "student"])),
                    ("user_id", int()),
                    ("expires_at", time()),
                ],
            ),
        ),
        ("Theme", object(&theme_keys, &theme_props())),
        ("ThemeView", object(&view_keys, &view)),
        (
            "ThemeDraft",
            object(
                &["title", "keywords"],
                &[
                    ("title", string()),
                    ("summary", string()),
                    ("keywords", strings()),
                    ("references", strings()),
                    ("proposed_week", opt_int()),
                    ("fixed_week", opt_int()),
                    ("max_students", opt_int()),
                ],
            ),
        ),
        (
            "ThemeReview",
            object(
                &["decision"],
                &[
                    ("decision", decision.clone()),
                    ("max_students", opt_int()),
                    ("deadline_week", opt_int()),
                    ("fixed_week", opt_int()),
                ],
            ),
        ),
        ("FileReview", object(&["decision"], &[("decision", decision)])),
        (
            "Assignment",
            object(
                &["id", "student_id", "theme_id", "presentation_week", "created_at"],
                &[
                    ("id", int()),
                    ("student_id", int()),
                    ("theme_id", int()),
                    ("presentation_week", opt_int()),
                    ("created_at", time()),
                ],
            ),
        ),
        (
            "Upload",
            object(&["file"], &[("file", json!({"type": "string", "format": "binary"}))]),
        ),
        (
            "UploadedFile",
            object(
                &[
                    "id",
                    "theme_id",
                    "uploader_id",
                    "filename",
                    "content_hash",
                    "size_bytes",
                    "status",
                    "created_at",
                ],
                &[
                    ("id", int()),
                    ("theme_id", int()),
                    ("uploader_id", int()),
                    ("filename", string()),
                    ("content_hash", string()),
                    ("size_bytes", int()),
                    ("status", one_of(&["pending", "approved", "rejected"])),
                    ("created_at", time()),
                ],
            ),
        ),
        (
            "ScheduleResult",
            object(
                &["placement", "max_weekly_load", "loads"],
                &[
                    (
                        "placement",
                        json!({"type": "object", "additionalProperties": {"type": "integer"}}),
                    ),
                    ("max_weekly_load", int()),
                    (
                        "loads",
                        json!({"type": "object", "additionalProperties": {"type": "integer"}}),
                    ),
                ],
            ),
        ),
        (
            "ScheduleBoard",
            object(
                &["num_weeks", "weeks", "unscheduled"],
                &[
                    ("num_weeks", int()),
                    (
                        "weeks",
                        json!({"type": "object", "additionalProperties": {"type": "array", "items": schedule_row}}),
                    ),
                    ("unscheduled", json!({"type": "array", "items": schedule_row})),
                ],
            ),
        ),
        (
            "User",
            object(
                &["id", "email", "display_name", "role", "disabled_at"],
                &[
                    ("id", int()),
                    ("email", string()),
                    ("display_name", string()),
                    ("role", one_of(&["administrator", "student"])),
                    (
                        "disabled_at",
                        json!({"type": ["string", "null"], "format": "date-time"}),
                    ),
                ],
            ),
        ),
        (
            "ProfilePatch",
            object(
                &[],
                &[
                    ("display_name", string()),
                    ("email", string()),
                    ("new_password", string()),
                ],
            ),
        ),
        (
            "Policy",
            object(
                &[
                    "max_choices_per_student",
                    "per_week_capacity",
                    "num_weeks",
                    "proposal_open",
                    "selection_opens_at",
                ],
                &[
                    ("max_choices_per_student", int()),
                    ("per_week_capacity", int()),
                    ("num_weeks", int()),
                    ("proposal_open", json!({"type": "boolean"})),
                    (
                        "selection_opens_at",
                        json!({"type": ["string", "null"], "format": "date-time"}),
                    ),
                ],
            ),
        ),
        (
            "PolicyPatch",
            object(
                &[],
                &[
                    ("max_choices_per_student", int()),
                    ("per_week_capacity", int()),
                    ("num_weeks", int()),
                    ("proposal_open", json!({"type": "boolean"})),
                    (
                        "selection_opens_at",
                        json!({"type": ["string", "null"], "format": "date-time"}),
                    ),
                ],
            ),
        ),
        (
            "Error",
            object(
                &["code", "message"],
                &[("code", one_of(Error::ALL_CODES)), ("message", string())],
            ),
        ),
    ];
    entries.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

fn operation(e: &Endpoint) -> Value {
    let mut errors: Vec<Error> = e.errors.clone();
    match e.access {
        Access::Public => {}
        Access::Authenticated => errors.push(Error::Unauthenticated),
        Access::Admin => errors.extend([Error::Unauthenticated, Error::Forbidden]),
    }
    errors.push(Error::StoreUnavailable(String::new()));

    let mut by_status: std::collections::BTreeMap<u16, Vec<&'static str>> = Default::default();
    for err in &errors {
        let codes = by_status.entry(status_of(err).as_u16()).or_default();
        if !codes.contains(&err.code()) {
            codes.push(err.code());
        }
    }

    let mut responses = Map::new();
    let body = if e.response == "binary" {
        json!({"application/octet-stream": {"schema": schema_ref("binary")}})
    } else {
        json!({JSON: {"schema": schema_ref(e.response)}})
    };
    responses.insert(e.status.to_string(), json!({"description": "success", "content": body}));
    for (status, codes) in by_status {
        responses.insert(
            status.to_string(),
            json!({
                "description": codes.join(", "),
                "content": {JSON: {"schema": schema_ref("Error")}},
            }),
        );
    }

    let mut op = json!({
        "summary": e.summary,
        "operationId": format!("{}{}", e.method, e.path.replace(['/', '{', '}'], "_")),
        "responses": responses,
    });
    if e.access != Access::Public {
        op["security"] = json!([{"bearer": []}]);
    }
    if e.access == Access::Admin {
        op["x-role"] = json!("administrator");
    }
    if e.path.contains("{id}") {
        op["parameters"] = json!([{"name": "id", "in": "path", "required": true, "schema": {"type": "integer"}}]);
    }
    if let Some((content_type, schema)) = e.request {
        op["requestBody"] = json!({"required": true, "content": {content_type: {"schema": schema_ref(schema)}}});
    }
    op
}

pub fn document() -> Value {
    let mut paths = Map::new();
    for e in endpoints() {
        let entry = paths.entry(e.path.to_string()).or_insert_with(|| json!({}));
        entry[e.method] = operation(&e);
    }
    json!({
        "openapi": "3.1.0",
        "info": {
            "title": "Seminar theme management API",
            "version": env!("CARGO_PKG_VERSION"),
            "description": "Bearer tokens come from POST /api/login and last 12 hours. Errors are JSON objects with a machine-readable `code`.",
        },
        "paths": paths,
        "components": {
            "securitySchemes": {"bearer": {"type": "http", "scheme": "bearer"}},
            "schemas": schemas(),
        },
    })
}

/// The document as written to `docs/openapi.json`.
pub fn render() -> String {
    let mut text = serde_json::to_string_pretty(&document()).expect("document serializes");
    text.push('\n');
    text
}
