use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use rusqlite::{params, params_from_iter, Connection, ErrorCode, OptionalExtension, Row};

use crate::error::{Error, Result};
use crate::model::*;
use crate::state::{Purged, SeminarState};

use super::sql_error;

/// [`SeminarState`] over an open SQLite transaction.
pub struct SqlState<'c> {
    conn: &'c Connection,
}

impl<'c> SqlState<'c> {
    pub fn new(conn: &'c Connection) -> Self {
        SqlState { conn }
    }

    pub fn conn(&self) -> &Connection {
        self.conn
    }
}

fn is_unique_violation(e: &rusqlite::Error) -> bool {
    matches!(
        e,
        rusqlite::Error::SqliteFailure(f, _) if f.code == ErrorCode::ConstraintViolation
            && (f.extended_code == rusqlite::ffi::SQLITE_CONSTRAINT_UNIQUE
                || f.extended_code == rusqlite::ffi::SQLITE_CONSTRAINT_PRIMARYKEY)
    )
}

fn bad_column(what: &str, value: &str) -> rusqlite::Error {
    rusqlite::Error::FromSqlConversionFailure(
        0,
        rusqlite::types::Type::Text,
        format!("unexpected {what} {value:?}").into(),
    )
}

const USER_COLUMNS: &str = "id, email, password_digest, display_name, role, disabled_at";

fn user_from_row(row: &Row<'_>) -> rusqlite::Result<User> {
    let role: String = row.get(4)?;
    Ok(User {
        id: UserId(row.get(0)?),
        email: row.get(1)?,
        password_digest: PasswordDigest(row.get(2)?),
        display_name: row.get(3)?,
        role: Role::parse(&role).ok_or_else(|| bad_column("role", &role))?,
        disabled_at: row.get(5)?,
    })
}

const THEME_COLUMNS: &str =
    "t.id, t.title, t.summary, t.proposer_id, t.status, t.max_students, t.fixed_week, t.deadline_week, t.created_at";

fn theme_from_row(row: &Row<'_>) -> rusqlite::Result<Theme> {
    let status: String = row.get(4)?;
    Ok(Theme {
        id: ThemeId(row.get(0)?),
        title: row.get(1)?,
        summary: row.get(2)?,
        keywords: Vec::new(),
        references: Vec::new(),
        proposer_id: UserId(row.get(3)?),
        status: ThemeStatus::parse(&status).ok_or_else(|| bad_column("theme status", &status))?,
        max_students: row.get(5)?,
        fixed_week: row.get(6)?,
        deadline_week: row.get(7)?,
        created_at: row.get(8)?,
    })
}

const ASSIGNMENT_COLUMNS: &str = "id, student_id, theme_id, presentation_week, created_at";

fn assignment_from_row(row: &Row<'_>) -> rusqlite::Result<Assignment> {
    Ok(Assignment {
        id: AssignmentId(row.get(0)?),
        student_id: UserId(row.get(1)?),
        theme_id: ThemeId(row.get(2)?),
        presentation_week: row.get(3)?,
        created_at: row.get(4)?,
    })
}

const FILE_COLUMNS: &str = "id, theme_id, uploader_id, filename, content_hash, size_bytes, status, created_at";

fn file_from_row(row: &Row<'_>) -> rusqlite::Result<UploadedFile> {
    let status: String = row.get(6)?;
    Ok(UploadedFile {
        id: FileId(row.get(0)?),
        theme_id: ThemeId(row.get(1)?),
        uploader_id: UserId(row.get(2)?),
        filename: row.get(3)?,
        content_hash: row.get(4)?,
        size_bytes: row.get::<_, i64>(5)? as u64,
        status: FileStatus::parse(&status).ok_or_else(|| bad_column("file status", &status))?,
        created_at: row.get(7)?,
    })
}

impl SqlState<'_> {
    fn query_users(&self, sql: &str, args: impl rusqlite::Params) -> Result<Vec<User>> {
        let mut stmt = self.conn.prepare_cached(sql).map_err(sql_error)?;
        let rows = stmt.query_map(args, user_from_row).map_err(sql_error)?;
        rows.collect::<rusqlite::Result<_>>().map_err(sql_error)
    }

    fn query_themes(&self, filter: &str, args: impl rusqlite::Params) -> Result<Vec<Theme>> {
        let sql = format!("SELECT {THEME_COLUMNS} FROM themes t {filter} ORDER BY t.id");
        let mut stmt = self.conn.prepare_cached(&sql).map_err(sql_error)?;
        let rows = stmt.query_map(args, theme_from_row).map_err(sql_error)?;
        let mut themes: Vec<Theme> = rows.collect::<rusqlite::Result<_>>().map_err(sql_error)?;
        self.attach_theme_details(&mut themes)?;
        Ok(themes)
    }

    /// Fills keywords and references with two set-wise queries.
    fn attach_theme_details(&self, themes: &mut [Theme]) -> Result<()> {
        if themes.is_empty() {
            return Ok(());
        }
        let mut keywords: BTreeMap<i64, Vec<String>> = BTreeMap::new();
        let mut stmt = self
            .conn
            .prepare_cached(
                "SELECT tk.theme_id, k.word FROM theme_keywords tk
                 JOIN keywords k ON k.id = tk.keyword_id ORDER BY tk.theme_id, k.word",
            )
            .map_err(sql_error)?;
        let mut rows = stmt.query([]).map_err(sql_error)?;
        while let Some(row) = rows.next().map_err(sql_error)? {
            keywords
                .entry(row.get(0).map_err(sql_error)?)
                .or_default()
                .push(row.get(1).map_err(sql_error)?);
        }

        let mut references: BTreeMap<i64, Vec<String>> = BTreeMap::new();
        let mut stmt = self
            .conn
            .prepare_cached(r#"SELECT theme_id, citation FROM "references" ORDER BY theme_id, position"#)
            .map_err(sql_error)?;
        let mut rows = stmt.query([]).map_err(sql_error)?;
        while let Some(row) = rows.next().map_err(sql_error)? {
            references
                .entry(row.get(0).map_err(sql_error)?)
                .or_default()
                .push(row.get(1).map_err(sql_error)?);
        }

        for theme in themes {
            theme.keywords = keywords.remove(&theme.id.0).unwrap_or_default();
            theme.references = references.remove(&theme.id.0).unwrap_or_default();
        }
        Ok(())
    }

    fn count(&self, sql: &str, id: i64) -> Result<u32> {
        self.conn
            .prepare_cached(sql)
            .and_then(|mut s| s.query_row([id], |r| r.get(0)))
            .map_err(sql_error)
    }
}

impl SeminarState for SqlState<'_> {
    fn policy(&self) -> Result<Policy> {
        self.conn
            .query_row(
                "SELECT max_choices_per_student, per_week_capacity, num_weeks, proposal_open, selection_opens_at
                 FROM policy WHERE id = 1",
                [],
                |r| {
                    Ok(Policy {
                        max_choices_per_student: r.get(0)?,
                        per_week_capacity: r.get(1)?,
                        num_weeks: r.get(2)?,
                        proposal_open: r.get(3)?,
                        selection_opens_at: r.get(4)?,
                    })
                },
            )
            .map_err(sql_error)
    }

    fn put_policy(&mut self, policy: &Policy) -> Result<()> {
        self.conn
            .execute(
                "UPDATE policy SET max_choices_per_student = ?1, per_week_capacity = ?2, num_weeks = ?3,
                 proposal_open = ?4, selection_opens_at = ?5 WHERE id = 1",
                params![
                    policy.max_choices_per_student,
                    policy.per_week_capacity,
                    policy.num_weeks,
                    policy.proposal_open,
                    policy.selection_opens_at,
                ],
            )
            .map_err(sql_error)?;
        Ok(())
    }

    fn user(&self, id: UserId) -> Result<Option<User>> {
        let sql = format!("SELECT {USER_COLUMNS} FROM users WHERE id = ?1");
        Ok(self.query_users(&sql, [id.0])?.pop())
    }

    fn user_by_email(&self, email: &str) -> Result<Option<User>> {
        let sql = format!("SELECT {USER_COLUMNS} FROM users WHERE email = ?1");
        Ok(self.query_users(&sql, [email])?.pop())
    }

    fn insert_user(&mut self, user: NewUser) -> Result<User> {
        let res = self.conn.execute(
            "INSERT INTO users (email, password_digest, display_name, role) VALUES (?1, ?2, ?3, ?4)",
            params![
                user.email,
                user.password_digest.0,
                user.display_name,
                user.role.as_str()
            ],
        );
        match res {
            Err(e) if is_unique_violation(&e) => return Err(Error::EmailTaken),
            other => other.map_err(sql_error)?,
        };
        Ok(User {
            id: UserId(self.conn.last_insert_rowid()),
            email: user.email,
            password_digest: user.password_digest,
            display_name: user.display_name,
            role: user.role,
            disabled_at: None,
        })
    }

    fn update_user(&mut self, user: &User) -> Result<()> {
        let res = self.conn.execute(
            "UPDATE users SET email = ?2, password_digest = ?3, display_name = ?4, disabled_at = ?5 WHERE id = ?1",
            params![
                user.id.0,
                user.email,
                user.password_digest.0,
                user.display_name,
                user.disabled_at
            ],
        );
        match res {
            Err(e) if is_unique_violation(&e) => Err(Error::EmailTaken),
            Err(e) => Err(sql_error(e)),
            Ok(0) => Err(Error::NotFound("user")),
            Ok(_) => Ok(()),
        }
    }

    fn users(&self) -> Result<Vec<User>> {
        let sql = format!("SELECT {USER_COLUMNS} FROM users ORDER BY id");
        self.query_users(&sql, [])
    }

    fn theme(&self, id: ThemeId) -> Result<Option<Theme>> {
        let mut theme = self
            .conn
            .prepare_cached(&format!("SELECT {THEME_COLUMNS} FROM themes t WHERE t.id = ?1"))
            .and_then(|mut s| s.query_row([id.0], theme_from_row).optional())
            .map_err(sql_error)?;
        if let Some(theme) = theme.as_mut() {
            let mut stmt = self
                .conn
                .prepare_cached(
                    "SELECT k.word FROM theme_keywords tk JOIN keywords k ON k.id = tk.keyword_id
                     WHERE tk.theme_id = ?1 ORDER BY k.word",
                )
                .map_err(sql_error)?;
            theme.keywords = stmt
                .query_map([id.0], |r| r.get(0))
                .and_then(|rows| rows.collect())
                .map_err(sql_error)?;
            let mut stmt = self
                .conn
                .prepare_cached(r#"SELECT citation FROM "references" WHERE theme_id = ?1 ORDER BY position"#)
                .map_err(sql_error)?;
            theme.references = stmt
                .query_map([id.0], |r| r.get(0))
                .and_then(|rows| rows.collect())
                .map_err(sql_error)?;
        }
        Ok(theme)
    }

    fn themes(&self) -> Result<Vec<Theme>> {
        self.query_themes("", [])
    }

    fn title_taken(&self, title: &str) -> Result<bool> {
        let key = crate::rules::title_key(title);
        let mut stmt = self
            .conn
            .prepare_cached("SELECT title FROM themes WHERE status <> 'rejected'")
            .map_err(sql_error)?;
        let titles = stmt.query_map([], |r| r.get::<_, String>(0)).map_err(sql_error)?;
        for t in titles {
            if crate::rules::title_key(&t.map_err(sql_error)?) == key {
                return Ok(true);
            }
        }
        Ok(false)
    }

    fn insert_theme(&mut self, theme: NewTheme) -> Result<Theme> {
        let res = self.conn.execute(
            "INSERT INTO themes (title, summary, proposer_id, status, max_students, fixed_week, deadline_week, created_at)
             VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8)",
            params![
                theme.title,
                theme.summary,
                theme.proposer_id.0,
                theme.status.as_str(),
                theme.max_students,
                theme.fixed_week,
                theme.deadline_week,
                theme.created_at,
            ],
        );
        match res {
            Err(e) if is_unique_violation(&e) => return Err(Error::DuplicateTitle(theme.title)),
            other => other.map_err(sql_error)?,
        };
        let id = self.conn.last_insert_rowid();
        for word in &theme.keywords {
            self.conn
                .execute("INSERT OR IGNORE INTO keywords (word) VALUES (?1)", [word])
                .map_err(sql_error)?;
            self.conn
                .execute(
                    "INSERT INTO theme_keywords (theme_id, keyword_id)
                     SELECT ?1, id FROM keywords WHERE word = ?2",
                    params![id, word],
                )
                .map_err(sql_error)?;
        }
        for (position, citation) in theme.references.iter().enumerate() {
            self.conn
                .execute(
                    r#"INSERT INTO "references" (theme_id, position, citation) VALUES (?1, ?2, ?3)"#,
                    params![id, position as i64, citation],
                )
                .map_err(sql_error)?;
        }
        Ok(Theme {
            id: ThemeId(id),
            title: theme.title,
            summary: theme.summary,
            keywords: theme.keywords,
            references: theme.references,
            proposer_id: theme.proposer_id,
            status: theme.status,
            max_students: theme.max_students,
            fixed_week: theme.fixed_week,
            deadline_week: theme.deadline_week,
            created_at: theme.created_at,
        })
    }

    fn update_theme(&mut self, theme: &Theme) -> Result<()> {
        let changed = self
            .conn
            .execute(
                "UPDATE themes SET status = ?2, max_students = ?3, fixed_week = ?4, deadline_week = ?5 WHERE id = ?1",
                params![
                    theme.id.0,
                    theme.status.as_str(),
                    theme.max_students,
                    theme.fixed_week,
                    theme.deadline_week,
                ],
            )
            .map_err(|e| {
                if is_unique_violation(&e) {
                    Error::DuplicateTitle(theme.title.clone())
                } else {
                    sql_error(e)
                }
            })?;
        if changed == 0 {
            return Err(Error::NotFound("theme"));
        }
        Ok(())
    }

    fn theme_listing(&self, statuses: &[ThemeStatus]) -> Result<Vec<ThemeView>> {
        if statuses.is_empty() {
            return Ok(Vec::new());
        }
        let placeholders = vec!["?"; statuses.len()].join(", ");
        let sql = format!(
            "SELECT {THEME_COLUMNS}, (SELECT COUNT(*) FROM assignments a WHERE a.theme_id = t.id)
             FROM themes t WHERE t.status IN ({placeholders}) ORDER BY t.id"
        );
        let mut stmt = self.conn.prepare_cached(&sql).map_err(sql_error)?;
        let rows = stmt
            .query_map(params_from_iter(statuses.iter().map(|s| s.as_str())), |row| {
                Ok((theme_from_row(row)?, row.get::<_, u32>(9)?))
            })
            .map_err(sql_error)?;
        let rows: Vec<(Theme, u32)> = rows.collect::<rusqlite::Result<_>>().map_err(sql_error)?;
        let mut themes: Vec<Theme> = rows.iter().map(|(t, _)| t.clone()).collect();
        self.attach_theme_details(&mut themes)?;

        let mut assignees: BTreeMap<i64, Vec<String>> = BTreeMap::new();
        let mut stmt = self
            .conn
            .prepare_cached(
                "SELECT a.theme_id, u.display_name FROM assignments a
                 JOIN users u ON u.id = a.student_id ORDER BY a.id",
            )
            .map_err(sql_error)?;
        let mut q = stmt.query([]).map_err(sql_error)?;
        while let Some(row) = q.next().map_err(sql_error)? {
            assignees
                .entry(row.get(0).map_err(sql_error)?)
                .or_default()
                .push(row.get(1).map_err(sql_error)?);
        }

        Ok(themes
            .into_iter()
            .zip(rows.into_iter().map(|(_, count)| count))
            .map(|(theme, assigned_count)| ThemeView {
                remaining_capacity: theme.max_students.map(|m| m.saturating_sub(assigned_count)),
                assignees: assignees.remove(&theme.id.0).unwrap_or_default(),
                assigned_count,
                theme,
            })
            .collect())
    }

    fn assignment(&self, student: UserId, theme: ThemeId) -> Result<Option<Assignment>> {
        self.conn
            .prepare_cached(&format!(
                "SELECT {ASSIGNMENT_COLUMNS} FROM assignments WHERE student_id = ?1 AND theme_id = ?2"
            ))
            .and_then(|mut s| s.query_row([student.0, theme.0], assignment_from_row).optional())
            .map_err(sql_error)
    }

    fn assignments(&self) -> Result<Vec<Assignment>> {
        let mut stmt = self
            .conn
            .prepare_cached(&format!("SELECT {ASSIGNMENT_COLUMNS} FROM assignments ORDER BY id"))
            .map_err(sql_error)?;
        let rows = stmt.query_map([], assignment_from_row).map_err(sql_error)?;
        rows.collect::<rusqlite::Result<_>>().map_err(sql_error)
    }

    fn count_for_theme(&self, theme: ThemeId) -> Result<u32> {
        self.count("SELECT COUNT(*) FROM assignments WHERE theme_id = ?1", theme.0)
    }

    fn count_for_student(&self, student: UserId) -> Result<u32> {
        self.count("SELECT COUNT(*) FROM assignments WHERE student_id = ?1", student.0)
    }

    fn insert_assignment(&mut self, assignment: NewAssignment) -> Result<Assignment> {
        let res = self.conn.execute(
            "INSERT INTO assignments (student_id, theme_id, presentation_week, created_at) VALUES (?1, ?2, ?3, ?4)",
            params![
                assignment.student_id.0,
                assignment.theme_id.0,
                assignment.presentation_week,
                assignment.created_at,
            ],
        );
        match res {
            Err(e) if is_unique_violation(&e) => return Err(Error::AlreadyAssigned),
            other => other.map_err(sql_error)?,
        };
        Ok(Assignment {
            id: AssignmentId(self.conn.last_insert_rowid()),
            student_id: assignment.student_id,
            theme_id: assignment.theme_id,
            presentation_week: assignment.presentation_week,
            created_at: assignment.created_at,
        })
    }

    fn delete_assignment(&mut self, id: AssignmentId) -> Result<()> {
        match self
            .conn
            .execute("DELETE FROM assignments WHERE id = ?1", [id.0])
            .map_err(sql_error)?
        {
            0 => Err(Error::NotAssigned),
            _ => Ok(()),
        }
    }

    fn set_presentation_week(&mut self, id: AssignmentId, week: Week) -> Result<()> {
        match self
            .conn
            .execute(
                "UPDATE assignments SET presentation_week = ?2 WHERE id = ?1",
                params![id.0, week],
            )
            .map_err(sql_error)?
        {
            0 => Err(Error::NotFound("assignment")),
            _ => Ok(()),
        }
    }

    fn file(&self, id: FileId) -> Result<Option<UploadedFile>> {
        self.conn
            .prepare_cached(&format!("SELECT {FILE_COLUMNS} FROM files WHERE id = ?1"))
            .and_then(|mut s| s.query_row([id.0], file_from_row).optional())
            .map_err(sql_error)
    }

    fn files_for_theme(&self, theme: ThemeId) -> Result<Vec<UploadedFile>> {
        let mut stmt = self
            .conn
            .prepare_cached(&format!(
                "SELECT {FILE_COLUMNS} FROM files WHERE theme_id = ?1 ORDER BY id"
            ))
            .map_err(sql_error)?;
        let rows = stmt.query_map([theme.0], file_from_row).map_err(sql_error)?;
        rows.collect::<rusqlite::Result<_>>().map_err(sql_error)
    }

    fn insert_file(&mut self, file: NewFile) -> Result<UploadedFile> {
        self.conn
            .execute(
                "INSERT INTO files (theme_id, uploader_id, filename, content_hash, size_bytes, status, created_at)
                 VALUES (?1, ?2, ?3, ?4, ?5, 'pending', ?6)",
                params![
                    file.theme_id.0,
                    file.uploader_id.0,
                    file.filename,
                    file.content_hash,
                    file.size_bytes as i64,
                    file.created_at,
                ],
            )
            .map_err(sql_error)?;
        Ok(UploadedFile {
            id: FileId(self.conn.last_insert_rowid()),
            theme_id: file.theme_id,
            uploader_id: file.uploader_id,
            filename: file.filename,
            content_hash: file.content_hash,
            size_bytes: file.size_bytes,
            status: FileStatus::Pending,
            created_at: file.created_at,
        })
    }

    fn set_file_status(&mut self, id: FileId, status: FileStatus) -> Result<()> {
        match self
            .conn
            .execute(
                "UPDATE files SET status = ?2 WHERE id = ?1",
                params![id.0, status.as_str()],
            )
            .map_err(sql_error)?
        {
            0 => Err(Error::NotFound("file")),
            _ => Ok(()),
        }
    }

    fn purge_theme(&mut self, theme: ThemeId) -> Result<Purged> {
        let assignments: Vec<Assignment> = self
            .assignments()?
            .into_iter()
            .filter(|a| a.theme_id == theme)
            .collect();
        let files = self.files_for_theme(theme)?;
        self.conn
            .execute_batch(&format!(
                "DELETE FROM assignments WHERE theme_id = {id};
                 DELETE FROM files WHERE theme_id = {id};
                 DELETE FROM theme_keywords WHERE theme_id = {id};
                 DELETE FROM keywords WHERE id NOT IN (SELECT keyword_id FROM theme_keywords);",
                id = theme.0
            ))
            .map_err(sql_error)?;
        Ok(Purged { assignments, files })
    }

    fn audit(&mut self, entry: AuditEntry) -> Result<()> {
        self.conn
            .execute(
                "INSERT INTO audit_log (at, actor_id, action, entity, entity_id, note) VALUES (?1, ?2, ?3, ?4, ?5, ?6)",
                params![
                    entry.at,
                    entry.actor_id.map(|u| u.0),
                    entry.action,
                    entry.entity,
                    entry.entity_id,
                    entry.note,
                ],
            )
            .map_err(sql_error)?;
        Ok(())
    }
}

/// Reads the audit log, oldest first.
pub fn audit_log(conn: &Connection) -> Result<Vec<AuditEntry>> {
    let mut stmt = conn
        .prepare("SELECT at, actor_id, action, entity, entity_id, note FROM audit_log ORDER BY id")
        .map_err(sql_error)?;
    let rows = stmt
        .query_map([], |r| {
            Ok(AuditEntry {
                at: r.get::<_, DateTime<Utc>>(0)?,
                actor_id: r.get::<_, Option<i64>>(1)?.map(UserId),
                action: r.get(2)?,
                entity: r.get(3)?,
                entity_id: r.get(4)?,
                note: r.get(5)?,
            })
        })
        .map_err(sql_error)?;
    rows.collect::<rusqlite::Result<_>>().map_err(sql_error)
}
