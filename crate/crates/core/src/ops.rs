//! The seminar workflow: proposals and moderation, selection, uploads,
//! profile edits, policy and presentation planning.
//!
//! Each function performs one atomic step against a [`SeminarState`]. They
//! do no I/O of their own; the caller decides what "atomic" means (a SQLite
//! transaction, or exclusive access to a [`crate::state::MemoryState`]).

use chrono::{DateTime, Utc};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::*;
use crate::password::{self, PasswordHasher};
use crate::rules::{self, SelectionFacts};
use crate::scheduler::{self, ScheduleInstance, ScheduleItem, ScheduleResult};
use crate::state::SeminarState;

/// Listings never return more rows than this.
pub const LISTING_LIMIT: usize = 1000;

/// Default upload cap, 16 MiB.
pub const DEFAULT_MAX_FILE_BYTES: u64 = 16 * 1024 * 1024;

fn require_admin(session: &Session) -> Result<()> {
    if session.is_admin() {
        Ok(())
    } else {
        Err(Error::Forbidden)
    }
}

fn require_student(session: &Session) -> Result<()> {
    match session.role {
        Role::Student => Ok(()),
        Role::Administrator => Err(Error::Forbidden),
    }
}

fn load_theme<S: SeminarState>(state: &S, id: ThemeId) -> Result<Theme> {
    state.theme(id)?.ok_or(Error::NotFound("theme"))
}

pub fn create_user<S: SeminarState>(
    state: &mut S,
    email: &str,
    password_digest: PasswordDigest,
    display_name: &str,
    role: Role,
) -> Result<User> {
    let email = rules::normalize_email(email)?;
    let display_name = display_name.trim();
    if display_name.is_empty() {
        return Err(Error::validation("display_name is required"));
    }
    if password_digest.0.is_empty() {
        return Err(Error::validation("password digest is empty"));
    }
    if state.user_by_email(&email)?.is_some() {
        return Err(Error::EmailTaken);
    }
    state.insert_user(NewUser {
        email,
        password_digest,
        display_name: display_name.to_string(),
        role,
    })
}

/// Unknown email and wrong password produce the same error. A disabled
/// account is only reported once the password has verified.
pub fn authenticate<S: SeminarState>(
    state: &S,
    hasher: &PasswordHasher,
    email: &str,
    password: &str,
) -> Result<Session> {
    let email = email.trim().to_lowercase();
    let user = state.user_by_email(&email)?.ok_or(Error::AuthFailed)?;
    if !hasher.verify(password, &user.password_digest) {
        return Err(Error::AuthFailed);
    }
    if user.disabled_at.is_some() {
        return Err(Error::AccountDisabled);
    }
    Ok(Session {
        user_id: user.id,
        role: user.role,
    })
}

pub fn disable_user<S: SeminarState>(
    state: &mut S,
    admin: &Session,
    user_id: UserId,
    now: DateTime<Utc>,
) -> Result<User> {
    require_admin(admin)?;
    let mut user = state.user(user_id)?.ok_or(Error::NotFound("user"))?;
    if user.disabled_at.is_none() {
        user.disabled_at = Some(now);
        state.update_user(&user)?;
        state.audit(AuditEntry::new(
            now,
            Some(admin.user_id),
            "user_disabled",
            "user",
            user.id.0,
            "",
        ))?;
    }
    Ok(user)
}

/// Student proposals wait for review; administrator proposals are listed
/// immediately and must carry `max_students`.
pub fn propose_theme<S: SeminarState>(
    state: &mut S,
    proposer: &Session,
    draft: &ThemeDraft,
    now: DateTime<Utc>,
) -> Result<Theme> {
    let policy = state.policy()?;
    if !proposer.is_admin() && !policy.proposal_open {
        return Err(Error::ProposalsClosed);
    }
    let title = rules::normalize_title(&draft.title)?;
    let keywords = rules::normalize_keywords(&draft.keywords)?;
    let references = rules::normalize_references(&draft.references)?;
    if let Some(week) = draft.proposed_week {
        rules::check_week(week, policy.num_weeks)?;
    }

    let (status, max_students, fixed_week) = if proposer.is_admin() {
        let max = rules::check_capacity(draft.max_students)?;
        rules::check_theme_weeks(draft.fixed_week, draft.proposed_week, policy.num_weeks)?;
        (ThemeStatus::Approved, Some(max), draft.fixed_week)
    } else {
        if draft.fixed_week.is_some() || draft.max_students.is_some() {
            return Err(Error::validation(
                "fixed_week and max_students are decided by the administrator",
            ));
        }
        (ThemeStatus::Pending, None, None)
    };

    if state.title_taken(&title)? {
        return Err(Error::DuplicateTitle(title));
    }
    let theme = state.insert_theme(NewTheme {
        title,
        summary: draft.summary.trim().to_string(),
        keywords,
        references,
        proposer_id: proposer.user_id,
        status,
        max_students,
        fixed_week,
        deadline_week: draft.proposed_week,
        created_at: now,
    })?;
    state.audit(AuditEntry::new(
        now,
        Some(proposer.user_id),
        "theme_proposed",
        "theme",
        theme.id.0,
        status.as_str(),
    ))?;
    Ok(theme)
}

pub fn review_theme<S: SeminarState>(
    state: &mut S,
    admin: &Session,
    theme_id: ThemeId,
    review: &ThemeReview,
    now: DateTime<Utc>,
) -> Result<Theme> {
    require_admin(admin)?;
    let mut theme = load_theme(state, theme_id)?;
    let target = match review.decision {
        Decision::Approve => ThemeStatus::Approved,
        Decision::Reject => ThemeStatus::Rejected,
    };
    rules::theme_transition(theme.status, target)?;

    if target == ThemeStatus::Approved {
        let policy = state.policy()?;
        let max = rules::check_capacity(review.max_students)?;
        let fixed = review.fixed_week.or(theme.fixed_week);
        let deadline = review.deadline_week.or(theme.deadline_week);
        rules::check_theme_weeks(fixed, deadline, policy.num_weeks)?;
        theme.max_students = Some(max);
        theme.fixed_week = fixed;
        theme.deadline_week = deadline;
    }
    theme.status = target;
    state.update_theme(&theme)?;
    let action = match target {
        ThemeStatus::Approved => "theme_approved",
        _ => "theme_rejected",
    };
    state.audit(AuditEntry::new(
        now,
        Some(admin.user_id),
        action,
        "theme",
        theme.id.0,
        "",
    ))?;
    Ok(theme)
}

/// Soft-deletes the theme and cancels everything attached to it.
pub fn delete_theme<S: SeminarState>(
    state: &mut S,
    admin: &Session,
    theme_id: ThemeId,
    now: DateTime<Utc>,
) -> Result<Theme> {
    require_admin(admin)?;
    let mut theme = load_theme(state, theme_id)?;
    rules::theme_transition(theme.status, ThemeStatus::Deleted)?;
    theme.status = ThemeStatus::Deleted;
    state.update_theme(&theme)?;
    let purged = state.purge_theme(theme_id)?;
    for a in &purged.assignments {
        state.audit(AuditEntry::new(
            now,
            Some(admin.user_id),
            "assignment_cancelled",
            "assignment",
            a.id.0,
            format!("theme {} deleted; student {}", theme_id, a.student_id),
        ))?;
    }
    for f in &purged.files {
        state.audit(AuditEntry::new(
            now,
            Some(admin.user_id),
            "file_removed",
            "file",
            f.id.0,
            format!("theme {} deleted", theme_id),
        ))?;
    }
    state.audit(AuditEntry::new(
        now,
        Some(admin.user_id),
        "theme_deleted",
        "theme",
        theme_id.0,
        format!("{} assignments cancelled", purged.assignments.len()),
    ))?;
    theme.keywords.clear();
    Ok(theme)
}

/// Students see approved themes; administrators also see pending ones.
pub fn list_themes<S: SeminarState>(state: &S, viewer: &Session) -> Result<Vec<ThemeView>> {
    let statuses: &[ThemeStatus] = if viewer.is_admin() {
        &[ThemeStatus::Approved, ThemeStatus::Pending]
    } else {
        &[ThemeStatus::Approved]
    };
    let mut views = state.theme_listing(statuses)?;
    rules::sort_listing(&mut views);
    views.truncate(LISTING_LIMIT);
    Ok(views)
}

pub fn select_theme<S: SeminarState>(
    state: &mut S,
    student: &Session,
    theme_id: ThemeId,
    now: DateTime<Utc>,
) -> Result<Assignment> {
    require_student(student)?;
    let theme = load_theme(state, theme_id)?;
    let policy = state.policy()?;
    let facts = SelectionFacts {
        already_assigned: state.assignment(student.user_id, theme_id)?.is_some(),
        theme_count: state.count_for_theme(theme_id)?,
        student_count: state.count_for_student(student.user_id)?,
    };
    let week = rules::check_selection(&theme, facts, &policy, now)?;
    state.insert_assignment(NewAssignment {
        student_id: student.user_id,
        theme_id,
        presentation_week: week,
        created_at: now,
    })
}

pub fn withdraw_selection<S: SeminarState>(state: &mut S, student: &Session, theme_id: ThemeId) -> Result<Assignment> {
    let assignment = state.assignment(student.user_id, theme_id)?.ok_or(Error::NotAssigned)?;
    state.delete_assignment(assignment.id)?;
    Ok(assignment)
}

pub fn content_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Final path component, so client-supplied directories never leak through.
fn clean_filename(name: &str) -> Result<String> {
    let base = name.rsplit(['/', '\\']).next().unwrap_or("").trim();
    if base.is_empty() || base == "." || base == ".." {
        return Err(Error::validation("filename is required"));
    }
    Ok(base.to_string())
}

/// Records an upload by a student holding the theme. The returned record is
/// pending and not yet visible; storing the bytes is up to the caller.
pub fn attach_file<S: SeminarState>(
    state: &mut S,
    student: &Session,
    theme_id: ThemeId,
    filename: &str,
    bytes: &[u8],
    max_bytes: u64,
    now: DateTime<Utc>,
) -> Result<UploadedFile> {
    load_theme(state, theme_id)?;
    if state.assignment(student.user_id, theme_id)?.is_none() {
        return Err(Error::NotAssigned);
    }
    let size = bytes.len() as u64;
    if size == 0 {
        return Err(Error::EmptyFile);
    }
    if size > max_bytes {
        return Err(Error::FileTooLarge { size, limit: max_bytes });
    }
    state.insert_file(NewFile {
        theme_id,
        uploader_id: student.user_id,
        filename: clean_filename(filename)?,
        content_hash: content_hash(bytes),
        size_bytes: size,
        created_at: now,
    })
}

pub fn review_file<S: SeminarState>(
    state: &mut S,
    admin: &Session,
    file_id: FileId,
    decision: Decision,
    now: DateTime<Utc>,
) -> Result<UploadedFile> {
    require_admin(admin)?;
    let mut file = state.file(file_id)?.ok_or(Error::NotFound("file"))?;
    let target = match decision {
        Decision::Approve => FileStatus::Approved,
        Decision::Reject => FileStatus::Rejected,
    };
    rules::file_transition(file.status, target)?;
    state.set_file_status(file_id, target)?;
    file.status = target;
    let action = match target {
        FileStatus::Approved => "file_approved",
        _ => "file_rejected",
    };
    state.audit(AuditEntry::new(now, Some(admin.user_id), action, "file", file_id.0, ""))?;
    Ok(file)
}

/// Files attached to a theme. Students get the approved ones of a listed
/// theme; administrators get all of them, as the moderation queue.
pub fn theme_files<S: SeminarState>(state: &S, viewer: &Session, theme_id: ThemeId) -> Result<Vec<UploadedFile>> {
    let theme = load_theme(state, theme_id)?;
    let mut files = state.files_for_theme(theme_id)?;
    if !viewer.is_admin() {
        if theme.status != ThemeStatus::Approved {
            return Err(Error::NotFound("theme"));
        }
        files.retain(|f| f.status == FileStatus::Approved);
    }
    files.sort_by_key(|f| f.id);
    Ok(files)
}

/// Checks the new password and hashes it, outside any transaction.
pub fn prepare_profile_change(patch: &ProfilePatch, hasher: &PasswordHasher) -> Result<ProfileChange> {
    let password_digest = match &patch.new_password {
        Some(pw) => {
            password::check_strength(pw)?;
            Some(hasher.hash(pw)?)
        }
        None => None,
    };
    Ok(ProfileChange {
        display_name: patch.display_name.clone(),
        email: patch.email.clone(),
        password_digest,
    })
}

pub fn update_profile<S: SeminarState>(state: &mut S, caller: &Session, change: ProfileChange) -> Result<User> {
    let mut user = state.user(caller.user_id)?.ok_or(Error::NotFound("user"))?;
    if let Some(name) = &change.display_name {
        let name = name.trim();
        if name.is_empty() {
            return Err(Error::validation("display_name must not be blank"));
        }
        user.display_name = name.to_string();
    }
    if let Some(email) = &change.email {
        let email = rules::normalize_email(email)?;
        if let Some(other) = state.user_by_email(&email)? {
            if other.id != user.id {
                return Err(Error::EmailTaken);
            }
        }
        user.email = email;
    }
    if let Some(digest) = change.password_digest {
        user.password_digest = digest;
    }
    state.update_user(&user)?;
    Ok(user)
}

/// Applies a policy patch. Lowering the choice limit keeps existing
/// assignments; lowering the week count below a week already in use fails.
pub fn set_policy<S: SeminarState>(
    state: &mut S,
    admin: &Session,
    patch: &PolicyPatch,
    now: DateTime<Utc>,
) -> Result<Policy> {
    require_admin(admin)?;
    let current = state.policy()?;
    let next = rules::apply_policy_patch(&current, patch)?;
    if next.num_weeks < current.num_weeks {
        let theme_week = state
            .themes()?
            .into_iter()
            .filter(|t| matches!(t.status, ThemeStatus::Pending | ThemeStatus::Approved))
            .filter_map(|t| t.fixed_week.max(t.deadline_week))
            .max();
        let assigned_week = state
            .assignments()?
            .into_iter()
            .filter_map(|a| a.presentation_week)
            .max();
        if let Some(used) = theme_week.max(assigned_week) {
            if used > next.num_weeks {
                return Err(Error::InvalidPolicy(format!(
                    "week {used} is in use; num_weeks cannot drop to {}",
                    next.num_weeks
                )));
            }
        }
    }
    state.put_policy(&next)?;
    state.audit(AuditEntry::new(
        now,
        Some(admin.user_id),
        "policy_changed",
        "policy",
        1,
        "",
    ))?;
    Ok(next)
}

/// Builds the planning instance from the current assignments: those with a
/// week are pre-placed, the rest may go anywhere up to their theme deadline.
pub fn schedule_instance<S: SeminarState>(state: &S) -> Result<ScheduleInstance> {
    let policy = state.policy()?;
    let themes = state.themes()?;
    let mut instance = ScheduleInstance::new(policy.num_weeks);
    for a in state.assignments()? {
        match a.presentation_week {
            Some(week) => instance.fixed.push((a.id.0, week)),
            None => {
                let deadline = themes
                    .iter()
                    .find(|t| t.id == a.theme_id)
                    .and_then(|t| t.deadline_week)
                    .unwrap_or(policy.num_weeks);
                instance.free_items.push(ScheduleItem::new(a.id.0, 1, deadline));
            }
        }
    }
    Ok(instance)
}

/// Plans weeks for unplaced assignments and persists them. Weeks already
/// stored are never moved.
pub fn plan_presentations<S: SeminarState>(
    state: &mut S,
    admin: &Session,
    now: DateTime<Utc>,
) -> Result<ScheduleResult> {
    require_admin(admin)?;
    let instance = schedule_instance(state)?;
    let result = scheduler::plan_schedule(&instance)?;
    for (&id, &week) in &result.placement {
        state.set_presentation_week(AssignmentId(id), week)?;
    }
    state.audit(AuditEntry::new(
        now,
        Some(admin.user_id),
        "schedule_planned",
        "schedule",
        0,
        format!("{} placed, max load {}", result.placement.len(), result.max_weekly_load),
    ))?;
    Ok(result)
}

/// Every assignment with its week; unplaced ones last.
pub fn schedule_board<S: SeminarState>(state: &S) -> Result<Vec<BoardEntry>> {
    let users = state.users()?;
    let themes = state.themes()?;
    let mut board: Vec<BoardEntry> = state
        .assignments()?
        .into_iter()
        .map(|a| BoardEntry {
            assignment_id: a.id,
            week: a.presentation_week,
            student_id: a.student_id,
            student: users
                .iter()
                .find(|u| u.id == a.student_id)
                .map(|u| u.display_name.clone())
                .unwrap_or_default(),
            theme_id: a.theme_id,
            theme: themes
                .iter()
                .find(|t| t.id == a.theme_id)
                .map(|t| t.title.clone())
                .unwrap_or_default(),
        })
        .collect();
    board.sort_by(|a, b| {
        (
            a.week.is_none(),
            a.week,
            rules::title_key(&a.theme),
            &a.student,
            a.assignment_id,
        )
            .cmp(&(
                b.week.is_none(),
                b.week,
                rules::title_key(&b.theme),
                &b.student,
                b.assignment_id,
            ))
    });
    Ok(board)
}
