//! Reproducible seminar fixture at the scale of the pilot run: one
//! administrator, 35 students, 35 teacher themes and 6 student proposals.

use chrono::{DateTime, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::*;
use crate::ops;
use crate::password::PasswordHasher;
use crate::state::SeminarState;

pub const STUDENT_COUNT: usize = 35;
pub const TEACHER_THEME_COUNT: usize = 35;
pub const STUDENT_PROPOSAL_COUNT: usize = 6;

pub const ADMIN_EMAIL: &str = "admin@example.edu";
pub const ADMIN_PASSWORD: &str = "seminar-admin";

pub fn student_email(n: usize) -> String {
    format!("student{n:02}@example.edu")
}

pub fn student_password(n: usize) -> String {
    format!("seminar-{n:02}-pass")
}

const ASPECTS: [&str; 7] = [
    "Headline structure",
    "Source attribution",
    "Lead paragraph strategies",
    "Evaluative vocabulary",
    "Quotation patterns",
    "Narrative framing",
    "Visual-verbal interplay",
];

const GENRES: [&str; 5] = [
    "hard news",
    "editorials",
    "tabloid reporting",
    "online news",
    "broadcast bulletins",
];

const PROPOSALS: [(&str, &str); 10] = [
    ("Headline ellipsis", "headline"),
    ("Reported speech in crime news", "reported speech"),
    ("Metaphors of economic crisis", "metaphor"),
    ("News values in local press", "news values"),
    ("Hedging in science reporting", "hedging"),
    ("Photo captions as micro-texts", "captions"),
    ("Agenda setting on front pages", "agenda setting"),
    ("Irony in opinion columns", "irony"),
    ("Numbers and statistics in news", "statistics"),
    ("Naming practices for public figures", "naming"),
];

const FIRST_NAMES: [&str; 12] = [
    "Ana", "Bogdan", "Carmen", "Dan", "Elena", "Florin", "Gabriela", "Horia", "Ioana", "Mihai", "Oana", "Radu",
];
const LAST_NAMES: [&str; 10] = [
    "Popescu", "Ionescu", "Rusu", "Stan", "Munteanu", "Ciobanu", "Lungu", "Moraru", "Toma", "Dima",
];

#[derive(Debug, Clone)]
pub struct SeedAccount {
    pub email: String,
    pub display_name: String,
    pub digest: PasswordDigest,
}

/// Everything the scenario inserts, prepared (passwords hashed) ahead of
/// the transaction that stores it.
#[derive(Debug, Clone)]
pub struct PaperScenario {
    pub admin: SeedAccount,
    pub students: Vec<SeedAccount>,
    pub teacher_themes: Vec<ThemeDraft>,
    /// `(index into students, draft)`.
    pub proposals: Vec<(usize, ThemeDraft)>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SeedReport {
    pub admins_created: usize,
    pub students_created: usize,
    pub themes_approved: usize,
    pub proposals_pending: usize,
}

impl PaperScenario {
    pub fn generate(seed: u64, hasher: &PasswordHasher) -> Result<PaperScenario> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);

        let admin = SeedAccount {
            email: ADMIN_EMAIL.to_string(),
            display_name: "Seminar Administrator".to_string(),
            digest: hasher.hash(ADMIN_PASSWORD)?,
        };

        let mut names: Vec<String> = FIRST_NAMES
            .iter()
            .flat_map(|f| LAST_NAMES.iter().map(move |l| format!("{f} {l}")))
            .collect();
        names.shuffle(&mut rng);
        let students = (1..=STUDENT_COUNT)
            .map(|n| {
                Ok(SeedAccount {
                    email: student_email(n),
                    display_name: names[n - 1].clone(),
                    digest: hasher.hash(&student_password(n))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let mut teacher_themes: Vec<ThemeDraft> = ASPECTS
            .iter()
            .flat_map(|a| GENRES.iter().map(move |g| (*a, *g)))
            .map(|(aspect, genre)| ThemeDraft {
                title: format!("{aspect} in {genre}"),
                summary: format!("How {} shapes {genre}.", aspect.to_lowercase()),
                keywords: vec![aspect.to_lowercase(), genre.to_string()],
                references: vec![
                    "Bell, A. (1991). The Language of News Media.".to_string(),
                    "van Dijk, T. A. (1988). News as Discourse.".to_string(),
                ],
                proposed_week: None,
                fixed_week: None,
                max_students: Some(rng.random_range(1..=2)),
            })
            .collect();
        teacher_themes.shuffle(&mut rng);
        teacher_themes.truncate(TEACHER_THEME_COUNT);

        let mut proposal_pool = PROPOSALS.to_vec();
        proposal_pool.shuffle(&mut rng);
        let mut proposers: Vec<usize> = (0..STUDENT_COUNT).collect();
        proposers.shuffle(&mut rng);
        let proposals = proposal_pool
            .into_iter()
            .take(STUDENT_PROPOSAL_COUNT)
            .zip(proposers)
            .map(|((title, keyword), student)| {
                (
                    student,
                    ThemeDraft {
                        title: title.to_string(),
                        summary: format!("A student-proposed study of {keyword}."),
                        keywords: vec![keyword.to_string(), "news discourse".to_string()],
                        references: vec!["Fairclough, N. (1995). Media Discourse.".to_string()],
                        proposed_week: Some(rng.random_range(4..=7)),
                        fixed_week: None,
                        max_students: None,
                    },
                )
            })
            .collect();

        Ok(PaperScenario {
            admin,
            students,
            teacher_themes,
            proposals,
        })
    }

    /// Inserts the scenario. An existing administrator is reused as the
    /// proposer of the teacher themes.
    pub fn apply<S: SeminarState>(&self, state: &mut S, now: DateTime<Utc>) -> Result<SeedReport> {
        let mut report = SeedReport::default();
        let existing_admin = state.users()?.into_iter().find(|u| u.role == Role::Administrator);
        let admin = match existing_admin {
            Some(user) => user,
            None => {
                report.admins_created += 1;
                ops::create_user(
                    state,
                    &self.admin.email,
                    self.admin.digest.clone(),
                    &self.admin.display_name,
                    Role::Administrator,
                )?
            }
        };
        let admin_session = Session {
            user_id: admin.id,
            role: Role::Administrator,
        };

        let mut student_sessions = Vec::with_capacity(self.students.len());
        for account in &self.students {
            let user = ops::create_user(
                state,
                &account.email,
                account.digest.clone(),
                &account.display_name,
                Role::Student,
            )?;
            report.students_created += 1;
            student_sessions.push(Session {
                user_id: user.id,
                role: Role::Student,
            });
        }

        for draft in &self.teacher_themes {
            ops::propose_theme(state, &admin_session, draft, now)?;
            report.themes_approved += 1;
        }
        for (student, draft) in &self.proposals {
            ops::propose_theme(state, &student_sessions[*student], draft, now)?;
            report.proposals_pending += 1;
        }
        Ok(report)
    }
}

fn first_admin<S: SeminarState>(state: &S) -> Result<Session> {
    state
        .users()?
        .into_iter()
        .find(|u| u.role == Role::Administrator)
        .map(|u| Session {
            user_id: u.id,
            role: Role::Administrator,
        })
        .ok_or(Error::NotFound("administrator"))
}

/// Approves every pending proposal with capacity 1, keeping the proposed
/// week as deadline. Returns how many were approved.
pub fn approve_all<S: SeminarState>(state: &mut S, now: DateTime<Utc>) -> Result<usize> {
    let admin = first_admin(state)?;
    let pending: Vec<ThemeId> = state
        .themes()?
        .into_iter()
        .filter(|t| t.status == ThemeStatus::Pending)
        .map(|t| t.id)
        .collect();
    for id in &pending {
        ops::review_theme(state, &admin, *id, &ThemeReview::approve(1), now)?;
    }
    Ok(pending.len())
}

/// Gives every approved theme one student, round-robin over a seeded
/// shuffle of the students. Raises the choice limit if there are more
/// themes than students. Returns the number of assignments created.
pub fn assign_all<S: SeminarState>(state: &mut S, seed: u64, now: DateTime<Utc>) -> Result<usize> {
    let admin = first_admin(state)?;
    let mut students: Vec<Session> = state
        .users()?
        .into_iter()
        .filter(|u| u.role == Role::Student && u.disabled_at.is_none())
        .map(|u| Session {
            user_id: u.id,
            role: Role::Student,
        })
        .collect();
    if students.is_empty() {
        return Err(Error::NotFound("student"));
    }
    let mut themes: Vec<Theme> = state
        .themes()?
        .into_iter()
        .filter(|t| t.status == ThemeStatus::Approved)
        .collect();
    themes.retain(|t| t.max_students.unwrap_or(0) > 0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    students.shuffle(&mut rng);

    let needed = themes.len().div_ceil(students.len()) as u32;
    let policy = state.policy()?;
    if needed > policy.max_choices_per_student {
        let patch = PolicyPatch {
            max_choices_per_student: Some(needed as i64),
            ..Default::default()
        };
        ops::set_policy(state, &admin, &patch, now)?;
    }

    let mut created = 0;
    for (i, theme) in themes.iter().enumerate() {
        let student = &students[i % students.len()];
        match ops::select_theme(state, student, theme.id, now) {
            Ok(_) => created += 1,
            Err(Error::AlreadyAssigned | Error::ThemeFull) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(created)
}
