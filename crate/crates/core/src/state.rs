//! Storage seen from inside one atomic step.
//!
//! Domain operations in [`crate::ops`] are written against [`SeminarState`].
//! An implementation must make everything an operation does through one
//! `&mut` borrow commit or vanish together; the SQLite store achieves this
//! by lending out a transaction, [`MemoryState`] by being owned outright.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::*;

/// Rows removed when a theme is deleted.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Purged {
    pub assignments: Vec<Assignment>,
    pub files: Vec<UploadedFile>,
}

pub trait SeminarState {
    fn policy(&self) -> Result<Policy>;
    fn put_policy(&mut self, policy: &Policy) -> Result<()>;

    fn user(&self, id: UserId) -> Result<Option<User>>;
    fn user_by_email(&self, email: &str) -> Result<Option<User>>;
    fn insert_user(&mut self, user: NewUser) -> Result<User>;
    fn update_user(&mut self, user: &User) -> Result<()>;
    fn users(&self) -> Result<Vec<User>>;

    fn theme(&self, id: ThemeId) -> Result<Option<Theme>>;
    fn themes(&self) -> Result<Vec<Theme>>;
    /// Whether a theme with this title (compared case-insensitively) exists
    /// in any status other than rejected.
    fn title_taken(&self, title: &str) -> Result<bool>;
    fn insert_theme(&mut self, theme: NewTheme) -> Result<Theme>;
    /// Persists status, capacity and weeks. Title, keywords and references
    /// are immutable after creation.
    fn update_theme(&mut self, theme: &Theme) -> Result<()>;
    /// Themes in the given statuses with their live assignment counts.
    fn theme_listing(&self, statuses: &[ThemeStatus]) -> Result<Vec<ThemeView>>;

    fn assignment(&self, student: UserId, theme: ThemeId) -> Result<Option<Assignment>>;
    fn assignments(&self) -> Result<Vec<Assignment>>;
    fn count_for_theme(&self, theme: ThemeId) -> Result<u32>;
    fn count_for_student(&self, student: UserId) -> Result<u32>;
    fn insert_assignment(&mut self, assignment: NewAssignment) -> Result<Assignment>;
    fn delete_assignment(&mut self, id: AssignmentId) -> Result<()>;
    fn set_presentation_week(&mut self, id: AssignmentId, week: Week) -> Result<()>;

    fn file(&self, id: FileId) -> Result<Option<UploadedFile>>;
    fn files_for_theme(&self, theme: ThemeId) -> Result<Vec<UploadedFile>>;
    fn insert_file(&mut self, file: NewFile) -> Result<UploadedFile>;
    fn set_file_status(&mut self, id: FileId, status: FileStatus) -> Result<()>;

    /// Hard-deletes assignments, keyword links and files of a theme.
    fn purge_theme(&mut self, theme: ThemeId) -> Result<Purged>;

    fn audit(&mut self, entry: AuditEntry) -> Result<()>;
}

/// Whole seminar held in ordinary collections. Used by tests, property
/// suites and as the reference model for the SQLite store.
#[derive(Debug, Clone, Default)]
pub struct MemoryState {
    policy: Policy,
    users: BTreeMap<UserId, User>,
    themes: BTreeMap<ThemeId, Theme>,
    assignments: BTreeMap<AssignmentId, Assignment>,
    files: BTreeMap<FileId, UploadedFile>,
    audit: Vec<AuditEntry>,
}

impl MemoryState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_policy(policy: Policy) -> Self {
        MemoryState {
            policy,
            ..Self::default()
        }
    }

    pub fn audit_log(&self) -> &[AuditEntry] {
        &self.audit
    }

    pub fn all_files(&self) -> impl Iterator<Item = &UploadedFile> {
        self.files.values()
    }
}

/// Next key the way SQLite assigns rowids: one past the largest in use.
fn next_key<K: Copy, V>(map: &BTreeMap<K, V>, raw: impl Fn(K) -> i64) -> i64 {
    map.keys().next_back().map_or(1, |k| raw(*k) + 1)
}

impl SeminarState for MemoryState {
    fn policy(&self) -> Result<Policy> {
        Ok(self.policy.clone())
    }

    fn put_policy(&mut self, policy: &Policy) -> Result<()> {
        self.policy = policy.clone();
        Ok(())
    }

    fn user(&self, id: UserId) -> Result<Option<User>> {
        Ok(self.users.get(&id).cloned())
    }

    fn user_by_email(&self, email: &str) -> Result<Option<User>> {
        Ok(self.users.values().find(|u| u.email == email).cloned())
    }

    fn insert_user(&mut self, user: NewUser) -> Result<User> {
        if self.users.values().any(|u| u.email == user.email) {
            return Err(Error::EmailTaken);
        }
        let user = User {
            id: UserId(next_key(&self.users, |k| k.0)),
            email: user.email,
            password_digest: user.password_digest,
            display_name: user.display_name,
            role: user.role,
            disabled_at: None,
        };
        self.users.insert(user.id, user.clone());
        Ok(user)
    }

    fn update_user(&mut self, user: &User) -> Result<()> {
        if self.users.values().any(|u| u.id != user.id && u.email == user.email) {
            return Err(Error::EmailTaken);
        }
        match self.users.get_mut(&user.id) {
            Some(slot) => {
                *slot = user.clone();
                Ok(())
            }
            None => Err(Error::NotFound("user")),
        }
    }

    fn users(&self) -> Result<Vec<User>> {
        Ok(self.users.values().cloned().collect())
    }

    fn theme(&self, id: ThemeId) -> Result<Option<Theme>> {
        Ok(self.themes.get(&id).cloned())
    }

    fn themes(&self) -> Result<Vec<Theme>> {
        Ok(self.themes.values().cloned().collect())
    }

    fn title_taken(&self, title: &str) -> Result<bool> {
        let key = crate::rules::title_key(title);
        Ok(self
            .themes
            .values()
            .any(|t| t.status != ThemeStatus::Rejected && crate::rules::title_key(&t.title) == key))
    }

    fn insert_theme(&mut self, theme: NewTheme) -> Result<Theme> {
        let theme = Theme {
            id: ThemeId(next_key(&self.themes, |k| k.0)),
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
        };
        self.themes.insert(theme.id, theme.clone());
        Ok(theme)
    }

    fn update_theme(&mut self, theme: &Theme) -> Result<()> {
        let slot = self.themes.get_mut(&theme.id).ok_or(Error::NotFound("theme"))?;
        slot.status = theme.status;
        slot.max_students = theme.max_students;
        slot.fixed_week = theme.fixed_week;
        slot.deadline_week = theme.deadline_week;
        Ok(())
    }

    fn theme_listing(&self, statuses: &[ThemeStatus]) -> Result<Vec<ThemeView>> {
        let views = self
            .themes
            .values()
            .filter(|t| statuses.contains(&t.status))
            .map(|t| {
                let mut holders: Vec<&Assignment> = self.assignments.values().filter(|a| a.theme_id == t.id).collect();
                holders.sort_by_key(|a| a.id);
                let assigned_count = holders.len() as u32;
                ThemeView {
                    theme: t.clone(),
                    assigned_count,
                    remaining_capacity: t.max_students.map(|m| m.saturating_sub(assigned_count)),
                    assignees: holders
                        .iter()
                        .filter_map(|a| self.users.get(&a.student_id))
                        .map(|u| u.display_name.clone())
                        .collect(),
                }
            })
            .collect();
        Ok(views)
    }

    fn assignment(&self, student: UserId, theme: ThemeId) -> Result<Option<Assignment>> {
        Ok(self
            .assignments
            .values()
            .find(|a| a.student_id == student && a.theme_id == theme)
            .cloned())
    }

    fn assignments(&self) -> Result<Vec<Assignment>> {
        Ok(self.assignments.values().cloned().collect())
    }

    fn count_for_theme(&self, theme: ThemeId) -> Result<u32> {
        Ok(self.assignments.values().filter(|a| a.theme_id == theme).count() as u32)
    }

    fn count_for_student(&self, student: UserId) -> Result<u32> {
        Ok(self.assignments.values().filter(|a| a.student_id == student).count() as u32)
    }

    fn insert_assignment(&mut self, assignment: NewAssignment) -> Result<Assignment> {
        if self.assignment(assignment.student_id, assignment.theme_id)?.is_some() {
            return Err(Error::AlreadyAssigned);
        }
        let assignment = Assignment {
            id: AssignmentId(next_key(&self.assignments, |k| k.0)),
            student_id: assignment.student_id,
            theme_id: assignment.theme_id,
            presentation_week: assignment.presentation_week,
            created_at: assignment.created_at,
        };
        self.assignments.insert(assignment.id, assignment.clone());
        Ok(assignment)
    }

    fn delete_assignment(&mut self, id: AssignmentId) -> Result<()> {
        self.assignments.remove(&id).map(|_| ()).ok_or(Error::NotAssigned)
    }

    fn set_presentation_week(&mut self, id: AssignmentId, week: Week) -> Result<()> {
        let slot = self.assignments.get_mut(&id).ok_or(Error::NotFound("assignment"))?;
        slot.presentation_week = Some(week);
        Ok(())
    }

    fn file(&self, id: FileId) -> Result<Option<UploadedFile>> {
        Ok(self.files.get(&id).cloned())
    }

    fn files_for_theme(&self, theme: ThemeId) -> Result<Vec<UploadedFile>> {
        Ok(self.files.values().filter(|f| f.theme_id == theme).cloned().collect())
    }

    fn insert_file(&mut self, file: NewFile) -> Result<UploadedFile> {
        let file = UploadedFile {
            id: FileId(next_key(&self.files, |k| k.0)),
            theme_id: file.theme_id,
            uploader_id: file.uploader_id,
            filename: file.filename,
            content_hash: file.content_hash,
            size_bytes: file.size_bytes,
            status: FileStatus::Pending,
            created_at: file.created_at,
        };
        self.files.insert(file.id, file.clone());
        Ok(file)
    }

    fn set_file_status(&mut self, id: FileId, status: FileStatus) -> Result<()> {
        let slot = self.files.get_mut(&id).ok_or(Error::NotFound("file"))?;
        slot.status = status;
        Ok(())
    }

    fn purge_theme(&mut self, theme: ThemeId) -> Result<Purged> {
        let (gone, kept): (BTreeMap<_, _>, BTreeMap<_, _>) = std::mem::take(&mut self.assignments)
            .into_iter()
            .partition(|(_, a)| a.theme_id == theme);
        self.assignments = kept;
        let (gone_files, kept_files): (BTreeMap<_, _>, BTreeMap<_, _>) = std::mem::take(&mut self.files)
            .into_iter()
            .partition(|(_, f)| f.theme_id == theme);
        self.files = kept_files;
        if let Some(t) = self.themes.get_mut(&theme) {
            t.keywords.clear();
        }
        Ok(Purged {
            assignments: gone.into_values().collect(),
            files: gone_files.into_values().collect(),
        })
    }

    fn audit(&mut self, entry: AuditEntry) -> Result<()> {
        self.audit.push(entry);
        Ok(())
    }
}

impl<T: SeminarState + ?Sized> SeminarState for &mut T {
    fn policy(&self) -> Result<Policy> {
        (**self).policy()
    }
    fn put_policy(&mut self, policy: &Policy) -> Result<()> {
        (**self).put_policy(policy)
    }
    fn user(&self, id: UserId) -> Result<Option<User>> {
        (**self).user(id)
    }
    fn user_by_email(&self, email: &str) -> Result<Option<User>> {
        (**self).user_by_email(email)
    }
    fn insert_user(&mut self, user: NewUser) -> Result<User> {
        (**self).insert_user(user)
    }
    fn update_user(&mut self, user: &User) -> Result<()> {
        (**self).update_user(user)
    }
    fn users(&self) -> Result<Vec<User>> {
        (**self).users()
    }
    fn theme(&self, id: ThemeId) -> Result<Option<Theme>> {
        (**self).theme(id)
    }
    fn themes(&self) -> Result<Vec<Theme>> {
        (**self).themes()
    }
    fn title_taken(&self, title: &str) -> Result<bool> {
        (**self).title_taken(title)
    }
    fn insert_theme(&mut self, theme: NewTheme) -> Result<Theme> {
        (**self).insert_theme(theme)
    }
    fn update_theme(&mut self, theme: &Theme) -> Result<()> {
        (**self).update_theme(theme)
    }
    fn theme_listing(&self, statuses: &[ThemeStatus]) -> Result<Vec<ThemeView>> {
        (**self).theme_listing(statuses)
    }
    fn assignment(&self, student: UserId, theme: ThemeId) -> Result<Option<Assignment>> {
        (**self).assignment(student, theme)
    }
    fn assignments(&self) -> Result<Vec<Assignment>> {
        (**self).assignments()
    }
    fn count_for_theme(&self, theme: ThemeId) -> Result<u32> {
        (**self).count_for_theme(theme)
    }
    fn count_for_student(&self, student: UserId) -> Result<u32> {
        (**self).count_for_student(student)
    }
    fn insert_assignment(&mut self, assignment: NewAssignment) -> Result<Assignment> {
        (**self).insert_assignment(assignment)
    }
    fn delete_assignment(&mut self, id: AssignmentId) -> Result<()> {
        (**self).delete_assignment(id)
    }
    fn set_presentation_week(&mut self, id: AssignmentId, week: Week) -> Result<()> {
        (**self).set_presentation_week(id, week)
    }
    fn file(&self, id: FileId) -> Result<Option<UploadedFile>> {
        (**self).file(id)
    }
    fn files_for_theme(&self, theme: ThemeId) -> Result<Vec<UploadedFile>> {
        (**self).files_for_theme(theme)
    }
    fn insert_file(&mut self, file: NewFile) -> Result<UploadedFile> {
        (**self).insert_file(file)
    }
    fn set_file_status(&mut self, id: FileId, status: FileStatus) -> Result<()> {
        (**self).set_file_status(id, status)
    }
    fn purge_theme(&mut self, theme: ThemeId) -> Result<Purged> {
        (**self).purge_theme(theme)
    }
    fn audit(&mut self, entry: AuditEntry) -> Result<()> {
        (**self).audit(entry)
    }
}
