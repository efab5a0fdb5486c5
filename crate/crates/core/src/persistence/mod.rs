//! SQLite-backed store.
//!
//! Every write runs in a `BEGIN IMMEDIATE` transaction, so check-then-insert
//! sequences such as a theme selection are serialized against each other
//! while readers keep working on WAL snapshots. Lock acquisition that still
//! fails after the busy timeout is retried a bounded number of times.

mod blobs;
mod schema;
mod sql_state;

use std::path::{Path, PathBuf};
use std::time::Duration;

use base64::Engine;
use chrono::{DateTime, Utc};
use r2d2_sqlite::SqliteConnectionManager;
use rand::RngCore;
use rusqlite::{params, Connection, ErrorCode, OptionalExtension, TransactionBehavior};
use sha2::{Digest, Sha256};

pub use blobs::BlobStore;
pub use schema::{migrate, migrate_to, schema_version, CORE_TABLES, LATEST_VERSION};
pub use sql_state::{audit_log, SqlState};

use crate::error::{Error, Result};
use crate::model::*;
use crate::ops;
use crate::password::PasswordHasher;

pub const DEFAULT_DB_PATH: &str = "./seminar.db";
pub const DEFAULT_FILES_DIR: &str = "./files";
pub const DEFAULT_RETRIES: u32 = 5;
pub const DEFAULT_SESSION_TTL: Duration = Duration::from_secs(12 * 3600);

pub(crate) fn sql_error(e: rusqlite::Error) -> Error {
    match &e {
        rusqlite::Error::SqliteFailure(f, _)
            if matches!(
                f.code,
                ErrorCode::CannotOpen | ErrorCode::DatabaseBusy | ErrorCode::DatabaseLocked | ErrorCode::ReadOnly
            ) =>
        {
            Error::StoreUnavailable(e.to_string())
        }
        _ => Error::Internal(format!("sqlite: {e}")),
    }
}

fn is_busy(e: &rusqlite::Error) -> bool {
    matches!(
        e,
        rusqlite::Error::SqliteFailure(f, _)
            if matches!(f.code, ErrorCode::DatabaseBusy | ErrorCode::DatabaseLocked)
    )
}

#[derive(Debug, Clone)]
pub struct StoreConfig {
    pub db_path: PathBuf,
    pub files_dir: PathBuf,
    pub pool_size: u32,
    /// Attempts at acquiring the write lock before giving up.
    pub retries: u32,
    pub busy_timeout: Duration,
}

impl StoreConfig {
    pub fn new(db_path: impl Into<PathBuf>, files_dir: impl Into<PathBuf>) -> Self {
        StoreConfig {
            db_path: db_path.into(),
            files_dir: files_dir.into(),
            pool_size: 16,
            retries: DEFAULT_RETRIES,
            busy_timeout: Duration::from_secs(5),
        }
    }

    /// `SEMINAR_DB_URL` (a path, optionally prefixed `sqlite://`, `sqlite:` or
    /// `file:`) and `SEMINAR_FILES_DIR`.
    pub fn from_env() -> Self {
        let db = std::env::var("SEMINAR_DB_URL").unwrap_or_else(|_| DEFAULT_DB_PATH.to_string());
        let files = std::env::var("SEMINAR_FILES_DIR").unwrap_or_else(|_| DEFAULT_FILES_DIR.to_string());
        StoreConfig::new(parse_db_url(&db), files)
    }

    /// Database and blobs inside one directory; handy for tests.
    pub fn in_dir(dir: &Path) -> Self {
        StoreConfig::new(dir.join("seminar.db"), dir.join("files"))
    }
}

pub fn parse_db_url(url: &str) -> PathBuf {
    let path = ["sqlite://", "sqlite:", "file:"]
        .iter()
        .find_map(|prefix| url.strip_prefix(prefix))
        .unwrap_or(url);
    PathBuf::from(path)
}

/// A freshly issued login token. Only its hash is stored.
#[derive(Debug, Clone)]
pub struct IssuedToken {
    pub token: String,
    pub expires_at: DateTime<Utc>,
}

/// A session resolved from a bearer token.
#[derive(Debug, Clone)]
pub struct TokenSession {
    pub session: Session,
    pub token_hash: String,
    pub expires_at: DateTime<Utc>,
}

pub fn token_hash(token: &str) -> String {
    hex::encode(Sha256::digest(token.as_bytes()))
}

#[derive(Clone)]
pub struct Store {
    pool: r2d2::Pool<SqliteConnectionManager>,
    blobs: BlobStore,
    retries: u32,
}

impl Store {
    /// Opens (creating if needed) the database file and blob directory.
    /// Does not migrate.
    pub fn open(config: &StoreConfig) -> Result<Store> {
        if let Some(parent) = config.db_path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)
                    .map_err(|e| Error::StoreUnavailable(format!("{}: {e}", parent.display())))?;
            }
        }
        let busy_ms = config.busy_timeout.as_millis() as u64;
        let manager = SqliteConnectionManager::file(&config.db_path).with_init(move |c| {
            c.busy_timeout(Duration::from_millis(busy_ms))?;
            c.execute_batch("PRAGMA foreign_keys = ON; PRAGMA synchronous = NORMAL;")
        });
        let pool = r2d2::Pool::builder()
            .max_size(config.pool_size.max(1))
            .connection_timeout(Duration::from_secs(30))
            .build(manager)
            .map_err(|e| Error::StoreUnavailable(format!("{}: {e}", config.db_path.display())))?;
        {
            let conn = pool.get().map_err(|e| Error::StoreUnavailable(e.to_string()))?;
            conn.pragma_update(None, "journal_mode", "WAL").map_err(sql_error)?;
        }
        Ok(Store {
            pool,
            blobs: BlobStore::new(&config.files_dir),
            retries: config.retries.max(1),
        })
    }

    pub fn blobs(&self) -> &BlobStore {
        &self.blobs
    }

    fn conn(&self) -> Result<r2d2::PooledConnection<SqliteConnectionManager>> {
        self.pool.get().map_err(|e| Error::StoreUnavailable(e.to_string()))
    }

    /// Applies pending migrations; returns the resulting schema version.
    pub fn migrate(&self) -> Result<u32> {
        let mut conn = self.conn()?;
        migrate(&mut conn)
    }

    pub fn schema_version(&self) -> Result<u32> {
        schema_version(&*self.conn()?)
    }

    /// Runs `f` against a raw connection, outside any transaction.
    pub fn with_connection<T>(&self, f: impl FnOnce(&mut Connection) -> Result<T>) -> Result<T> {
        let mut conn = self.conn()?;
        f(&mut conn)
    }

    /// Runs `f` on a consistent read snapshot.
    pub fn read<T>(&self, f: impl FnOnce(&SqlState<'_>) -> Result<T>) -> Result<T> {
        let mut conn = self.conn()?;
        let tx = conn
            .transaction_with_behavior(TransactionBehavior::Deferred)
            .map_err(sql_error)?;
        let out = f(&SqlState::new(&tx))?;
        tx.finish().map_err(sql_error)?;
        Ok(out)
    }

    /// Runs `f` inside a write transaction, committing only on `Ok`.
    /// `f` may run more than once if the commit has to be retried.
    pub fn write<T>(&self, mut f: impl FnMut(&mut SqlState<'_>) -> Result<T>) -> Result<T> {
        let mut conn = self.conn()?;
        for attempt in 1..=self.retries {
            let tx = match conn.transaction_with_behavior(TransactionBehavior::Immediate) {
                Ok(tx) => tx,
                Err(e) if is_busy(&e) => {
                    tracing::debug!(attempt, "write lock busy, retrying");
                    std::thread::sleep(Duration::from_millis(5 * attempt as u64));
                    continue;
                }
                Err(e) => return Err(sql_error(e)),
            };
            let out = {
                let mut state = SqlState::new(&tx);
                f(&mut state)?
            };
            match tx.commit() {
                Ok(()) => return Ok(out),
                Err(e) if is_busy(&e) => {
                    std::thread::sleep(Duration::from_millis(5 * attempt as u64));
                    continue;
                }
                Err(e) => return Err(sql_error(e)),
            }
        }
        Err(Error::TransactionRetryExhausted(self.retries))
    }

    /// Capacity, quota and duplicate checks plus the insert, as one
    /// serialized transaction.
    pub fn atomic_select(&self, student: &Session, theme_id: ThemeId, now: DateTime<Utc>) -> Result<Assignment> {
        self.write(|s| ops::select_theme(s, student, theme_id, now))
    }

    /// Listing rows for a viewer role, occupancy counted inside the store.
    pub fn query_theme_listing(&self, viewer: &Session) -> Result<Vec<ThemeView>> {
        self.read(|s| ops::list_themes(s, viewer))
    }

    /// Records the upload and stores its bytes under their content hash.
    pub fn attach_file(
        &self,
        student: &Session,
        theme_id: ThemeId,
        filename: &str,
        bytes: &[u8],
        max_bytes: u64,
        now: DateTime<Utc>,
    ) -> Result<UploadedFile> {
        self.write(|s| {
            let record = ops::attach_file(s, student, theme_id, filename, bytes, max_bytes, now)?;
            self.blobs.put(bytes)?;
            Ok(record)
        })
    }

    /// Creates an administrator unless one already exists. Returns the new
    /// account, or `None` when an administrator was already present.
    pub fn ensure_admin(&self, hasher: &PasswordHasher, email: &str, password: &str) -> Result<Option<User>> {
        crate::password::check_strength(password)?;
        let digest = hasher.hash(password)?;
        self.write(|s| {
            let has_admin: bool = s
                .conn()
                .query_row(
                    "SELECT EXISTS (SELECT 1 FROM users WHERE role = 'administrator')",
                    [],
                    |r| r.get(0),
                )
                .map_err(sql_error)?;
            if has_admin {
                return Ok(None);
            }
            ops::create_user(s, email, digest.clone(), "Administrator", Role::Administrator).map(Some)
        })
    }

    /// Verifies credentials and issues a bearer token.
    pub fn login(
        &self,
        hasher: &PasswordHasher,
        email: &str,
        password: &str,
        ttl: Duration,
        now: DateTime<Utc>,
    ) -> Result<(Session, IssuedToken)> {
        let session = self.read(|s| ops::authenticate(s, hasher, email, password))?;
        let mut raw = [0u8; 16];
        rand::rng().fill_bytes(&mut raw);
        let token = base64::engine::general_purpose::URL_SAFE_NO_PAD.encode(raw);
        let expires_at = now + chrono::Duration::from_std(ttl).map_err(|e| Error::Internal(e.to_string()))?;
        let hash = token_hash(&token);
        self.write(|s| {
            s.conn()
                .execute(
                    "INSERT INTO sessions (token_hash, user_id, created_at, expires_at) VALUES (?1, ?2, ?3, ?4)",
                    params![hash, session.user_id.0, now, expires_at],
                )
                .map_err(sql_error)?;
            Ok(())
        })?;
        Ok((session, IssuedToken { token, expires_at }))
    }

    /// Resolves a bearer token. Expired, revoked and unknown tokens, and
    /// tokens of disabled accounts, are all `Unauthenticated`.
    pub fn resolve_token(&self, token: &str, now: DateTime<Utc>) -> Result<TokenSession> {
        let hash = token_hash(token);
        let found = self.read(|s| {
            s.conn()
                .query_row(
                    "SELECT u.id, u.role, u.disabled_at, s.expires_at FROM sessions s
                     JOIN users u ON u.id = s.user_id WHERE s.token_hash = ?1",
                    [&hash],
                    |r| {
                        Ok((
                            r.get::<_, i64>(0)?,
                            r.get::<_, String>(1)?,
                            r.get::<_, Option<DateTime<Utc>>>(2)?,
                            r.get::<_, DateTime<Utc>>(3)?,
                        ))
                    },
                )
                .optional()
                .map_err(sql_error)
        })?;
        match found {
            Some((user_id, role, None, expires_at)) if expires_at > now => Ok(TokenSession {
                session: Session {
                    user_id: UserId(user_id),
                    role: Role::parse(&role).ok_or(Error::Internal("bad role".into()))?,
                },
                token_hash: hash,
                expires_at,
            }),
            _ => Err(Error::Unauthenticated),
        }
    }

    pub fn logout(&self, token_hash: &str) -> Result<()> {
        self.write(|s| {
            s.conn()
                .execute("DELETE FROM sessions WHERE token_hash = ?1", [token_hash])
                .map_err(sql_error)?;
            Ok(())
        })
    }

    /// Applies a profile change; a password change revokes every session of
    /// the user except `keep_token_hash`.
    pub fn update_profile(&self, caller: &Session, change: ProfileChange, keep_token_hash: &str) -> Result<User> {
        self.write(|s| {
            let password_changed = change.password_digest.is_some();
            let user = ops::update_profile(s, caller, change.clone())?;
            if password_changed {
                s.conn()
                    .execute(
                        "DELETE FROM sessions WHERE user_id = ?1 AND token_hash <> ?2",
                        params![caller.user_id.0, keep_token_hash],
                    )
                    .map_err(sql_error)?;
            }
            Ok(user)
        })
    }

    pub fn audit_log(&self) -> Result<Vec<AuditEntry>> {
        audit_log(&*self.conn()?)
    }
}
