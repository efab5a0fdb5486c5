//! Entities of the seminar: accounts, themes, the student/theme association,
//! uploaded files and the administrator policy.

use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

/// Index of a seminar meeting, starting at 1.
pub type Week = u32;

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub i64);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                self.0.fmt(f)
            }
        }
    };
}

id_type!(UserId);
id_type!(ThemeId);
id_type!(AssignmentId);
id_type!(FileId);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Administrator,
    Student,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Administrator => "administrator",
            Role::Student => "student",
        }
    }

    pub fn parse(s: &str) -> Option<Role> {
        match s {
            "administrator" => Some(Role::Administrator),
            "student" => Some(Role::Student),
            _ => None,
        }
    }
}

/// Encoded one-way password hash (PHC string format).
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PasswordDigest(pub String);

impl fmt::Debug for PasswordDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("PasswordDigest(..)")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct User {
    pub id: UserId,
    pub email: String,
    #[serde(skip_serializing)]
    pub password_digest: PasswordDigest,
    pub display_name: String,
    pub role: Role,
    /// Set when the account has been soft-deleted.
    pub disabled_at: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone)]
pub struct NewUser {
    pub email: String,
    pub password_digest: PasswordDigest,
    pub display_name: String,
    pub role: Role,
}

/// Authenticated caller as seen by the domain operations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub user_id: UserId,
    pub role: Role,
}

impl Session {
    pub fn is_admin(&self) -> bool {
        self.role == Role::Administrator
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThemeStatus {
    Pending,
    Approved,
    Rejected,
    Deleted,
}

impl ThemeStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            ThemeStatus::Pending => "pending",
            ThemeStatus::Approved => "approved",
            ThemeStatus::Rejected => "rejected",
            ThemeStatus::Deleted => "deleted",
        }
    }

    pub fn parse(s: &str) -> Option<ThemeStatus> {
        match s {
            "pending" => Some(ThemeStatus::Pending),
            "approved" => Some(ThemeStatus::Approved),
            "rejected" => Some(ThemeStatus::Rejected),
            "deleted" => Some(ThemeStatus::Deleted),
            _ => None,
        }
    }
}

impl fmt::Display for ThemeStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Theme {
    pub id: ThemeId,
    pub title: String,
    pub summary: String,
    /// Normalized (trimmed, lowercase), sorted and deduplicated.
    pub keywords: Vec<String>,
    pub references: Vec<String>,
    pub proposer_id: UserId,
    pub status: ThemeStatus,
    pub max_students: Option<u32>,
    pub fixed_week: Option<Week>,
    pub deadline_week: Option<Week>,
    pub created_at: DateTime<Utc>,
}

impl Theme {
    /// Week used to order listings: the fixed week if any, else the deadline.
    pub fn sort_week(&self) -> Option<Week> {
        self.fixed_week.or(self.deadline_week)
    }
}

#[derive(Debug, Clone)]
pub struct NewTheme {
    pub title: String,
    pub summary: String,
    pub keywords: Vec<String>,
    pub references: Vec<String>,
    pub proposer_id: UserId,
    pub status: ThemeStatus,
    pub max_students: Option<u32>,
    pub fixed_week: Option<Week>,
    pub deadline_week: Option<Week>,
    pub created_at: DateTime<Utc>,
}

/// What a proposer submits.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ThemeDraft {
    pub title: String,
    pub summary: String,
    pub keywords: Vec<String>,
    pub references: Vec<String>,
    /// Proposed presentation deadline; stored as the theme's deadline week.
    pub proposed_week: Option<Week>,
    /// Administrator proposals only.
    pub fixed_week: Option<Week>,
    /// Administrator proposals only; required for them.
    pub max_students: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Approve,
    Reject,
}

/// Administrator verdict on a pending theme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThemeReview {
    pub decision: Decision,
    #[serde(default)]
    pub max_students: Option<u32>,
    /// Overrides the proposer's suggested deadline.
    #[serde(default)]
    pub deadline_week: Option<Week>,
    #[serde(default)]
    pub fixed_week: Option<Week>,
}

impl ThemeReview {
    pub fn approve(max_students: u32) -> Self {
        ThemeReview {
            decision: Decision::Approve,
            max_students: Some(max_students),
            deadline_week: None,
            fixed_week: None,
        }
    }

    pub fn reject() -> Self {
        ThemeReview {
            decision: Decision::Reject,
            max_students: None,
            deadline_week: None,
            fixed_week: None,
        }
    }
}

/// Listing row: a theme with its live occupancy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThemeView {
    #[serde(flatten)]
    pub theme: Theme,
    pub assigned_count: u32,
    /// `max_students - assigned_count`; absent while the theme has no capacity.
    pub remaining_capacity: Option<u32>,
    /// Display names of students holding the theme.
    pub assignees: Vec<String>,
}

/// The student/theme association entity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub id: AssignmentId,
    pub student_id: UserId,
    pub theme_id: ThemeId,
    pub presentation_week: Option<Week>,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone)]
pub struct NewAssignment {
    pub student_id: UserId,
    pub theme_id: ThemeId,
    pub presentation_week: Option<Week>,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FileStatus {
    Pending,
    Approved,
    Rejected,
}

impl FileStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            FileStatus::Pending => "pending",
            FileStatus::Approved => "approved",
            FileStatus::Rejected => "rejected",
        }
    }

    pub fn parse(s: &str) -> Option<FileStatus> {
        match s {
            "pending" => Some(FileStatus::Pending),
            "approved" => Some(FileStatus::Approved),
            "rejected" => Some(FileStatus::Rejected),
            _ => None,
        }
    }
}

impl fmt::Display for FileStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UploadedFile {
    pub id: FileId,
    pub theme_id: ThemeId,
    pub uploader_id: UserId,
    pub filename: String,
    /// Lowercase hex SHA-256 of the bytes.
    pub content_hash: String,
    pub size_bytes: u64,
    pub status: FileStatus,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone)]
pub struct NewFile {
    pub theme_id: ThemeId,
    pub uploader_id: UserId,
    pub filename: String,
    pub content_hash: String,
    pub size_bytes: u64,
    pub created_at: DateTime<Utc>,
}

/// Limits dictated by the administrator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Policy {
    pub max_choices_per_student: u32,
    /// Presentations per meeting.
    pub per_week_capacity: u32,
    pub num_weeks: u32,
    pub proposal_open: bool,
    /// Selections are refused before this instant (reading period).
    pub selection_opens_at: Option<DateTime<Utc>>,
}

impl Default for Policy {
    /// Seven 2-hour meetings cover a 14-hour seminar; six slots per meeting
    /// fit 41 themes.
    fn default() -> Self {
        Policy {
            max_choices_per_student: 1,
            per_week_capacity: 6,
            num_weeks: 7,
            proposal_open: true,
            selection_opens_at: None,
        }
    }
}

/// Partial policy update. `selection_opens_at: Some(None)` clears the gate.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyPatch {
    pub max_choices_per_student: Option<i64>,
    pub per_week_capacity: Option<i64>,
    pub num_weeks: Option<i64>,
    pub proposal_open: Option<bool>,
    #[serde(with = "double_option")]
    pub selection_opens_at: Option<Option<DateTime<Utc>>>,
}

/// Distinguishes an absent field from an explicit `null`.
mod double_option {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<T: Serialize, S: Serializer>(value: &Option<Option<T>>, serializer: S) -> Result<S::Ok, S::Error> {
        match value {
            None => serializer.serialize_none(),
            Some(inner) => inner.serialize(serializer),
        }
    }

    pub fn deserialize<'de, T: Deserialize<'de>, D: Deserializer<'de>>(
        deserializer: D,
    ) -> Result<Option<Option<T>>, D::Error> {
        Option::<T>::deserialize(deserializer).map(Some)
    }
}

/// Self-service profile edit as submitted.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProfilePatch {
    pub display_name: Option<String>,
    pub email: Option<String>,
    pub new_password: Option<String>,
}

/// Profile edit after the new password (if any) has been hashed.
#[derive(Debug, Clone, Default)]
pub struct ProfileChange {
    pub display_name: Option<String>,
    pub email: Option<String>,
    pub password_digest: Option<PasswordDigest>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub at: DateTime<Utc>,
    pub actor_id: Option<UserId>,
    pub action: String,
    pub entity: String,
    pub entity_id: i64,
    pub note: String,
}

impl AuditEntry {
    pub fn new(
        at: DateTime<Utc>,
        actor: Option<UserId>,
        action: &str,
        entity: &str,
        entity_id: i64,
        note: impl Into<String>,
    ) -> Self {
        AuditEntry {
            at,
            actor_id: actor,
            action: action.to_string(),
            entity: entity.to_string(),
            entity_id,
            note: note.into(),
        }
    }
}

/// One presentation on the schedule board.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoardEntry {
    pub assignment_id: AssignmentId,
    pub week: Option<Week>,
    pub student_id: UserId,
    pub student: String,
    pub theme_id: ThemeId,
    pub theme: String,
}
