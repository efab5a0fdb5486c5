//! Relational schema and its migrations.
//!
//! Keywords live in their own relation and reach themes through the
//! `theme_keywords` link table; references are one row per citation. The
//! student/theme association is the `assignments` table, which is the only
//! link table carrying attributes of its own (the presentation week).
//! Schema versions are tracked in SQLite's `user_version`.

use rusqlite::{Connection, TransactionBehavior};

use crate::error::{Error, Result};

use super::sql_error;

/// Tables every migrated store must contain.
pub const CORE_TABLES: [&str; 9] = [
    "users",
    "themes",
    "keywords",
    "theme_keywords",
    "references",
    "assignments",
    "files",
    "policy",
    "audit_log",
];

const V1: &str = r#"
CREATE TABLE users (
    id              INTEGER PRIMARY KEY,
    email           TEXT    NOT NULL UNIQUE,
    password_digest TEXT    NOT NULL CHECK (length(password_digest) > 0),
    display_name    TEXT    NOT NULL,
    role            TEXT    NOT NULL CHECK (role IN ('administrator', 'student')),
    disabled_at     TEXT
);

CREATE TABLE themes (
    id            INTEGER PRIMARY KEY,
    title         TEXT    NOT NULL CHECK (length(trim(title)) > 0),
    summary       TEXT    NOT NULL,
    proposer_id   INTEGER NOT NULL REFERENCES users (id),
    status        TEXT    NOT NULL CHECK (status IN ('pending', 'approved', 'rejected', 'deleted')),
    max_students  INTEGER CHECK (max_students IS NULL OR max_students >= 1),
    fixed_week    INTEGER CHECK (fixed_week IS NULL OR fixed_week >= 1),
    deadline_week INTEGER CHECK (deadline_week IS NULL OR deadline_week >= 1),
    created_at    TEXT    NOT NULL,
    CHECK (status <> 'approved' OR max_students IS NOT NULL),
    CHECK (fixed_week IS NULL OR deadline_week IS NULL OR deadline_week >= fixed_week)
);
CREATE UNIQUE INDEX themes_live_title ON themes (lower(trim(title))) WHERE status <> 'rejected';

CREATE TABLE keywords (
    id   INTEGER PRIMARY KEY,
    word TEXT    NOT NULL UNIQUE
);

CREATE TABLE theme_keywords (
    theme_id   INTEGER NOT NULL REFERENCES themes (id) ON DELETE CASCADE,
    keyword_id INTEGER NOT NULL REFERENCES keywords (id) ON DELETE CASCADE,
    PRIMARY KEY (theme_id, keyword_id)
) WITHOUT ROWID;

CREATE TABLE "references" (
    id       INTEGER PRIMARY KEY,
    theme_id INTEGER NOT NULL REFERENCES themes (id) ON DELETE CASCADE,
    position INTEGER NOT NULL,
    citation TEXT    NOT NULL,
    UNIQUE (theme_id, position)
);

CREATE TABLE assignments (
    id                INTEGER PRIMARY KEY,
    student_id        INTEGER NOT NULL REFERENCES users (id) ON DELETE CASCADE,
    theme_id          INTEGER NOT NULL REFERENCES themes (id) ON DELETE CASCADE,
    presentation_week INTEGER CHECK (presentation_week IS NULL OR presentation_week >= 1),
    created_at        TEXT    NOT NULL,
    UNIQUE (student_id, theme_id)
);
CREATE INDEX assignments_theme ON assignments (theme_id);

CREATE TABLE files (
    id           INTEGER PRIMARY KEY,
    theme_id     INTEGER NOT NULL REFERENCES themes (id) ON DELETE CASCADE,
    uploader_id  INTEGER NOT NULL REFERENCES users (id),
    filename     TEXT    NOT NULL,
    content_hash TEXT    NOT NULL,
    size_bytes   INTEGER NOT NULL CHECK (size_bytes >= 0),
    status       TEXT    NOT NULL CHECK (status IN ('pending', 'approved', 'rejected')),
    created_at   TEXT    NOT NULL
);
CREATE INDEX files_theme ON files (theme_id);

CREATE TABLE policy (
    id                      INTEGER PRIMARY KEY CHECK (id = 1),
    max_choices_per_student INTEGER NOT NULL CHECK (max_choices_per_student >= 1),
    per_week_capacity       INTEGER NOT NULL CHECK (per_week_capacity >= 1),
    num_weeks               INTEGER NOT NULL CHECK (num_weeks >= 1),
    proposal_open           INTEGER NOT NULL CHECK (proposal_open IN (0, 1)),
    selection_opens_at      TEXT
);
INSERT INTO policy VALUES (1, 1, 6, 7, 1, NULL);
"#;

const V2: &str = r#"
CREATE TABLE audit_log (
    id        INTEGER PRIMARY KEY,
    at        TEXT    NOT NULL,
    actor_id  INTEGER REFERENCES users (id),
    action    TEXT    NOT NULL,
    entity    TEXT    NOT NULL,
    entity_id INTEGER NOT NULL,
    note      TEXT    NOT NULL
);

CREATE TABLE sessions (
    token_hash TEXT    PRIMARY KEY,
    user_id    INTEGER NOT NULL REFERENCES users (id) ON DELETE CASCADE,
    created_at TEXT    NOT NULL,
    expires_at TEXT    NOT NULL
);
CREATE INDEX sessions_user ON sessions (user_id);
"#;

const MIGRATIONS: &[&str] = &[V1, V2];

pub const LATEST_VERSION: u32 = MIGRATIONS.len() as u32;

pub fn schema_version(conn: &Connection) -> Result<u32> {
    conn.query_row("PRAGMA user_version", [], |r| r.get::<_, u32>(0))
        .map_err(sql_error)
}

/// Brings the schema to `target`, one migration per transaction. Running it
/// again is a no-op; a store newer than this build is refused.
pub fn migrate_to(conn: &mut Connection, target: u32) -> Result<u32> {
    if target > LATEST_VERSION {
        return Err(Error::MigrationConflict(format!("unknown schema version {target}")));
    }
    loop {
        let tx = conn
            .transaction_with_behavior(TransactionBehavior::Immediate)
            .map_err(sql_error)?;
        let version = schema_version(&tx)?;
        if version > LATEST_VERSION {
            return Err(Error::MigrationConflict(format!(
                "store is at schema version {version}, this build knows up to {LATEST_VERSION}"
            )));
        }
        if version >= target {
            return Ok(version);
        }
        tx.execute_batch(MIGRATIONS[version as usize]).map_err(sql_error)?;
        tx.pragma_update(None, "user_version", version + 1).map_err(sql_error)?;
        tx.commit().map_err(sql_error)?;
        tracing::info!(version = version + 1, "applied schema migration");
    }
}

pub fn migrate(conn: &mut Connection) -> Result<u32> {
    migrate_to(conn, LATEST_VERSION)
}
