use thiserror::Error;

use crate::model::Week;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure a seminar operation can report.
///
/// Variant names double as the machine-readable error codes exposed over
/// HTTP, see [`Error::code`].
#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum Error {
    #[error("unknown email or wrong password")]
    AuthFailed,
    #[error("session missing, expired or revoked")]
    Unauthenticated,
    #[error("account is disabled")]
    AccountDisabled,
    #[error("operation not permitted for this role")]
    Forbidden,
    #[error("{0} not found")]
    NotFound(&'static str),
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("a theme titled {0:?} already exists")]
    DuplicateTitle(String),
    #[error("theme proposals are closed")]
    ProposalsClosed,
    #[error("week {week} outside 1..={num_weeks}")]
    WeekOutOfRange { week: i64, num_weeks: Week },
    #[error("cannot move {entity} from {from} to {to}")]
    InvalidTransition {
        entity: &'static str,
        from: String,
        to: String,
    },
    #[error("approval requires max_students")]
    MissingCapacity,
    #[error("theme has no free places left")]
    ThemeFull,
    #[error("student already holds the maximum number of themes")]
    ChoiceLimitReached,
    #[error("student already holds this theme")]
    AlreadyAssigned,
    #[error("theme is {0} and cannot be selected")]
    ThemeNotSelectable(String),
    #[error("theme selection has not opened yet")]
    SelectionNotOpen,
    #[error("student does not hold this theme")]
    NotAssigned,
    #[error("file of {size} bytes exceeds the {limit} byte limit")]
    FileTooLarge { size: u64, limit: u64 },
    #[error("file is empty")]
    EmptyFile,
    #[error("email address is already in use")]
    EmailTaken,
    #[error("password must be at least {0} characters")]
    WeakPassword(usize),
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("no schedule satisfies the windows of items {items:?}")]
    Infeasible { items: Vec<i64> },
    #[error("store unavailable: {0}")]
    StoreUnavailable(String),
    #[error("schema conflict: {0}")]
    MigrationConflict(String),
    #[error("transaction retried {0} times without success")]
    TransactionRetryExhausted(u32),
    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub const ALL_CODES: &'static [&'static str] = &[
        "AuthFailed",
        "Unauthenticated",
        "AccountDisabled",
        "Forbidden",
        "NotFound",
        "ValidationError",
        "DuplicateTitle",
        "ProposalsClosed",
        "WeekOutOfRange",
        "InvalidTransition",
        "MissingCapacity",
        "ThemeFull",
        "ChoiceLimitReached",
        "AlreadyAssigned",
        "ThemeNotSelectable",
        "SelectionNotOpen",
        "NotAssigned",
        "FileTooLarge",
        "EmptyFile",
        "EmailTaken",
        "WeakPassword",
        "InvalidPolicy",
        "Infeasible",
        "StoreUnavailable",
        "MigrationConflict",
        "TransactionRetryExhausted",
        "Internal",
    ];

    pub fn code(&self) -> &'static str {
        match self {
            Error::AuthFailed => "AuthFailed",
            Error::Unauthenticated => "Unauthenticated",
            Error::AccountDisabled => "AccountDisabled",
            Error::Forbidden => "Forbidden",
            Error::NotFound(_) => "NotFound",
            Error::Validation(_) => "ValidationError",
            Error::DuplicateTitle(_) => "DuplicateTitle",
            Error::ProposalsClosed => "ProposalsClosed",
            Error::WeekOutOfRange { .. } => "WeekOutOfRange",
            Error::InvalidTransition { .. } => "InvalidTransition",
            Error::MissingCapacity => "MissingCapacity",
            Error::ThemeFull => "ThemeFull",
            Error::ChoiceLimitReached => "ChoiceLimitReached",
            Error::AlreadyAssigned => "AlreadyAssigned",
            Error::ThemeNotSelectable(_) => "ThemeNotSelectable",
            Error::SelectionNotOpen => "SelectionNotOpen",
            Error::NotAssigned => "NotAssigned",
            Error::FileTooLarge { .. } => "FileTooLarge",
            Error::EmptyFile => "EmptyFile",
            Error::EmailTaken => "EmailTaken",
            Error::WeakPassword(_) => "WeakPassword",
            Error::InvalidPolicy(_) => "InvalidPolicy",
            Error::Infeasible { .. } => "Infeasible",
            Error::StoreUnavailable(_) => "StoreUnavailable",
            Error::MigrationConflict(_) => "MigrationConflict",
            Error::TransactionRetryExhausted(_) => "TransactionRetryExhausted",
            Error::Internal(_) => "Internal",
        }
    }

    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}
