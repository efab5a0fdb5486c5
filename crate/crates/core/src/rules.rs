//! Pure checks shared by every operation: input normalization, week ranges,
//! lifecycle transitions and the selection guard.

use chrono::{DateTime, Utc};

use crate::error::{Error, Result};
use crate::model::*;

/// Comparison key for theme titles: trimmed, lowercase.
pub fn title_key(title: &str) -> String {
    title.trim().to_lowercase()
}

pub fn normalize_email(email: &str) -> Result<String> {
    let email = email.trim().to_lowercase();
    let valid = match email.split_once('@') {
        Some((local, domain)) => {
            !local.is_empty()
                && !domain.is_empty()
                && !domain.contains('@')
                && domain.contains('.')
                && !domain.starts_with('.')
                && !domain.ends_with('.')
        }
        None => false,
    };
    if !valid || email.chars().any(char::is_whitespace) {
        return Err(Error::validation(format!("{email:?} is not an email address")));
    }
    Ok(email)
}

pub fn normalize_title(title: &str) -> Result<String> {
    let title = title.trim();
    if title.is_empty() {
        return Err(Error::validation("title is required"));
    }
    Ok(title.to_string())
}

/// Trims, lowercases, sorts and deduplicates. At least one keyword is required.
pub fn normalize_keywords(keywords: &[String]) -> Result<Vec<String>> {
    let mut words = Vec::with_capacity(keywords.len());
    for word in keywords {
        let word = word.trim().to_lowercase();
        if word.is_empty() {
            return Err(Error::validation("keywords must not be blank"));
        }
        words.push(word);
    }
    words.sort();
    words.dedup();
    if words.is_empty() {
        return Err(Error::validation("at least one keyword is required"));
    }
    Ok(words)
}

pub fn normalize_references(references: &[String]) -> Result<Vec<String>> {
    references
        .iter()
        .map(|r| {
            let r = r.trim();
            if r.is_empty() {
                Err(Error::validation("references must not be blank"))
            } else {
                Ok(r.to_string())
            }
        })
        .collect()
}

pub fn check_week(week: Week, num_weeks: u32) -> Result<()> {
    if week == 0 || week > num_weeks {
        return Err(Error::WeekOutOfRange {
            week: week as i64,
            num_weeks,
        });
    }
    Ok(())
}

/// Fixed and deadline weeks must be in range and the deadline may not come
/// before the fixed week.
pub fn check_theme_weeks(fixed: Option<Week>, deadline: Option<Week>, num_weeks: u32) -> Result<()> {
    for week in fixed.iter().chain(deadline.iter()) {
        check_week(*week, num_weeks)?;
    }
    if let (Some(fixed), Some(deadline)) = (fixed, deadline) {
        if deadline < fixed {
            return Err(Error::validation(format!(
                "deadline week {deadline} precedes fixed week {fixed}"
            )));
        }
    }
    Ok(())
}

pub fn check_capacity(max_students: Option<u32>) -> Result<u32> {
    match max_students {
        None => Err(Error::MissingCapacity),
        Some(0) => Err(Error::validation("max_students must be at least 1")),
        Some(n) => Ok(n),
    }
}

/// Allowed: pending to approved, rejected or deleted; approved to deleted.
pub fn theme_transition(from: ThemeStatus, to: ThemeStatus) -> Result<()> {
    use ThemeStatus::*;
    match (from, to) {
        (Pending, Approved) | (Pending, Rejected) | (Pending, Deleted) | (Approved, Deleted) => Ok(()),
        _ => Err(Error::InvalidTransition {
            entity: "theme",
            from: from.to_string(),
            to: to.to_string(),
        }),
    }
}

/// Allowed: pending to approved or rejected.
pub fn file_transition(from: FileStatus, to: FileStatus) -> Result<()> {
    match (from, to) {
        (FileStatus::Pending, FileStatus::Approved) | (FileStatus::Pending, FileStatus::Rejected) => Ok(()),
        _ => Err(Error::InvalidTransition {
            entity: "file",
            from: from.to_string(),
            to: to.to_string(),
        }),
    }
}

/// Occupancy facts needed to decide a selection.
#[derive(Debug, Clone, Copy)]
pub struct SelectionFacts {
    pub already_assigned: bool,
    pub theme_count: u32,
    pub student_count: u32,
}

/// Decides whether a student may take a theme. On success returns the
/// presentation week the new assignment starts with (the theme's fixed week).
pub fn check_selection(
    theme: &Theme,
    facts: SelectionFacts,
    policy: &Policy,
    now: DateTime<Utc>,
) -> Result<Option<Week>> {
    if theme.status != ThemeStatus::Approved {
        return Err(Error::ThemeNotSelectable(theme.status.to_string()));
    }
    if let Some(opens) = policy.selection_opens_at {
        if now < opens {
            return Err(Error::SelectionNotOpen);
        }
    }
    if facts.already_assigned {
        return Err(Error::AlreadyAssigned);
    }
    let capacity = theme.max_students.unwrap_or(0);
    if facts.theme_count >= capacity {
        return Err(Error::ThemeFull);
    }
    if facts.student_count >= policy.max_choices_per_student {
        return Err(Error::ChoiceLimitReached);
    }
    Ok(theme.fixed_week)
}

fn positive(name: &str, value: Option<i64>, current: u32) -> Result<u32> {
    match value {
        None => Ok(current),
        Some(v) if v >= 1 && v <= u32::MAX as i64 => Ok(v as u32),
        Some(v) => Err(Error::InvalidPolicy(format!(
            "{name} must be a positive integer, got {v}"
        ))),
    }
}

pub fn apply_policy_patch(policy: &Policy, patch: &PolicyPatch) -> Result<Policy> {
    Ok(Policy {
        max_choices_per_student: positive(
            "max_choices_per_student",
            patch.max_choices_per_student,
            policy.max_choices_per_student,
        )?,
        per_week_capacity: positive("per_week_capacity", patch.per_week_capacity, policy.per_week_capacity)?,
        num_weeks: positive("num_weeks", patch.num_weeks, policy.num_weeks)?,
        proposal_open: patch.proposal_open.unwrap_or(policy.proposal_open),
        selection_opens_at: match patch.selection_opens_at {
            Some(value) => value,
            None => policy.selection_opens_at,
        },
    })
}

/// Listing order: themes with a week first by week, then by title
/// (case-insensitive), then by id.
pub fn sort_listing(views: &mut [ThemeView]) {
    views.sort_by(|a, b| {
        let week = |v: &ThemeView| match v.theme.sort_week() {
            Some(w) => (0, w),
            None => (1, 0),
        };
        week(a)
            .cmp(&week(b))
            .then_with(|| title_key(&a.theme.title).cmp(&title_key(&b.theme.title)))
            .then_with(|| a.theme.id.cmp(&b.theme.id))
    });
}

#[cfg(test)]
mod tests {
    use super::*;

    fn theme(status: ThemeStatus, max: Option<u32>) -> Theme {
        Theme {
            id: ThemeId(1),
            title: "T".into(),
            summary: String::new(),
            keywords: vec!["k".into()],
            references: vec![],
            proposer_id: UserId(1),
            status,
            max_students: max,
            fixed_week: None,
            deadline_week: None,
            created_at: Utc::now(),
        }
    }

    fn facts(already: bool, theme_count: u32, student_count: u32) -> SelectionFacts {
        SelectionFacts {
            already_assigned: already,
            theme_count,
            student_count,
        }
    }

    #[test]
    fn email_normalization() {
        assert_eq!(normalize_email(" Ana@Example.EDU ").unwrap(), "ana@example.edu");
        for bad in [
            "",
            "ana",
            "@example.edu",
            "ana@",
            "ana@edu",
            "a b@example.edu",
            "a@b@c.d",
        ] {
            assert!(normalize_email(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn keywords_are_normalized_sets() {
        let k = normalize_keywords(&["Headline".into(), " headline ".into(), "ellipsis".into()]).unwrap();
        assert_eq!(k, vec!["ellipsis", "headline"]);
        assert!(normalize_keywords(&[]).is_err());
        assert!(normalize_keywords(&["  ".into()]).is_err());
    }

    #[test]
    fn week_bounds() {
        assert!(check_week(1, 7).is_ok());
        assert!(check_week(7, 7).is_ok());
        assert_eq!(check_week(8, 7), Err(Error::WeekOutOfRange { week: 8, num_weeks: 7 }));
        assert!(check_week(0, 7).is_err());
        assert!(check_theme_weeks(Some(3), Some(3), 7).is_ok());
        assert!(check_theme_weeks(Some(4), Some(3), 7).is_err());
        assert!(check_theme_weeks(None, Some(9), 7).is_err());
    }

    #[test]
    fn theme_state_machine_is_closed() {
        use ThemeStatus::*;
        let all = [Pending, Approved, Rejected, Deleted];
        let allowed = [
            (Pending, Approved),
            (Pending, Rejected),
            (Pending, Deleted),
            (Approved, Deleted),
        ];
        for from in all {
            for to in all {
                let ok = theme_transition(from, to).is_ok();
                assert_eq!(ok, allowed.contains(&(from, to)), "{from} -> {to}");
            }
        }
    }

    #[test]
    fn file_state_machine_is_closed() {
        use FileStatus::*;
        for from in [Pending, Approved, Rejected] {
            for to in [Pending, Approved, Rejected] {
                let ok = file_transition(from, to).is_ok();
                assert_eq!(ok, from == Pending && to != Pending);
            }
        }
    }

    #[test]
    fn selection_guard_order() {
        let policy = Policy::default();
        let now = Utc::now();
        let open = theme(ThemeStatus::Approved, Some(1));
        assert_eq!(check_selection(&open, facts(false, 0, 0), &policy, now), Ok(None));
        assert_eq!(
            check_selection(&open, facts(false, 1, 0), &policy, now),
            Err(Error::ThemeFull)
        );
        let roomy = theme(ThemeStatus::Approved, Some(5));
        assert_eq!(
            check_selection(&roomy, facts(false, 0, 1), &policy, now),
            Err(Error::ChoiceLimitReached)
        );
        assert_eq!(
            check_selection(&roomy, facts(true, 1, 1), &policy, now),
            Err(Error::AlreadyAssigned)
        );
        let pending = theme(ThemeStatus::Pending, None);
        assert!(matches!(
            check_selection(&pending, facts(false, 0, 0), &policy, now),
            Err(Error::ThemeNotSelectable(_))
        ));
        let gated = Policy {
            selection_opens_at: Some(now + chrono::Duration::days(7)),
            ..Policy::default()
        };
        assert_eq!(
            check_selection(&roomy, facts(false, 0, 0), &gated, now),
            Err(Error::SelectionNotOpen)
        );
        assert!(check_selection(&roomy, facts(false, 0, 0), &gated, now + chrono::Duration::days(8)).is_ok());
    }

    #[test]
    fn fixed_week_carries_into_assignment() {
        let mut t = theme(ThemeStatus::Approved, Some(2));
        t.fixed_week = Some(6);
        assert_eq!(
            check_selection(&t, facts(false, 0, 0), &Policy::default(), Utc::now()),
            Ok(Some(6))
        );
    }

    #[test]
    fn policy_patch_rejects_non_positive() {
        let base = Policy::default();
        let patch = PolicyPatch {
            per_week_capacity: Some(0),
            ..Default::default()
        };
        assert!(matches!(
            apply_policy_patch(&base, &patch),
            Err(Error::InvalidPolicy(_))
        ));
        let patch = PolicyPatch {
            max_choices_per_student: Some(2),
            ..Default::default()
        };
        let next = apply_policy_patch(&base, &patch).unwrap();
        assert_eq!(next.max_choices_per_student, 2);
        assert_eq!(next.num_weeks, 7);
    }

    #[test]
    fn policy_patch_can_clear_opening_time() {
        let base = Policy {
            selection_opens_at: Some(Utc::now()),
            ..Policy::default()
        };
        let keep = apply_policy_patch(&base, &PolicyPatch::default()).unwrap();
        assert!(keep.selection_opens_at.is_some());
        let clear = PolicyPatch {
            selection_opens_at: Some(None),
            ..Default::default()
        };
        assert!(apply_policy_patch(&base, &clear).unwrap().selection_opens_at.is_none());
    }
}
