//! Random workload driver and invariant checker.
//!
//! [`Simulation`] throws a seeded stream of operations (legal and illegal)
//! at any [`SeminarState`] and checks after every step that capacity, quota,
//! pair uniqueness, visibility and the lifecycle state machines still hold.
//! Property tests, the acceptance suite and the benchmarks all drive it.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::*;
use crate::ops;
use crate::state::SeminarState;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    Propose {
        student: Option<usize>,
        title: usize,
        week: Option<Week>,
        max: u32,
    },
    Review {
        theme: usize,
        approve: bool,
        max: u32,
    },
    Delete {
        theme: usize,
    },
    Select {
        student: usize,
        theme: usize,
    },
    Withdraw {
        student: usize,
        theme: usize,
    },
    Attach {
        student: usize,
        theme: usize,
        size: usize,
    },
    ReviewFile {
        file: usize,
        approve: bool,
    },
    SetQuota {
        max_choices: u32,
    },
    StudentReview {
        student: usize,
        theme: usize,
    },
}

/// What happened to one action: `Ok(())` or the error code.
pub type Outcome = std::result::Result<(), &'static str>;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SimReport {
    pub steps: usize,
    pub outcomes: BTreeMap<&'static str, usize>,
    pub invalid_transitions: usize,
}

/// Transitions the lifecycles permit, written out independently of
/// [`crate::rules`].
const THEME_EDGES: [(ThemeStatus, ThemeStatus); 4] = [
    (ThemeStatus::Pending, ThemeStatus::Approved),
    (ThemeStatus::Pending, ThemeStatus::Rejected),
    (ThemeStatus::Pending, ThemeStatus::Deleted),
    (ThemeStatus::Approved, ThemeStatus::Deleted),
];

pub struct Simulation<S> {
    pub state: S,
    admin: Session,
    students: Vec<Session>,
    themes: Vec<ThemeId>,
    files: Vec<FileId>,
    rng: ChaCha8Rng,
    now: DateTime<Utc>,
    report: SimReport,
    max_bytes: u64,
}

impl<S: SeminarState> Simulation<S> {
    /// Creates one administrator and `students` students in `state`.
    pub fn new(mut state: S, students: usize, seed: u64) -> Result<Self> {
        let digest = PasswordDigest("$argon2id$sim".to_string());
        let admin = ops::create_user(
            &mut state,
            "admin@sim.test",
            digest.clone(),
            "Admin",
            Role::Administrator,
        )?;
        let students = (0..students)
            .map(|i| {
                ops::create_user(
                    &mut state,
                    &format!("s{i}@sim.test"),
                    digest.clone(),
                    &format!("Student {i}"),
                    Role::Student,
                )
                .map(|u| Session {
                    user_id: u.id,
                    role: Role::Student,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Simulation {
            state,
            admin: Session {
                user_id: admin.id,
                role: Role::Administrator,
            },
            students,
            themes: Vec::new(),
            files: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            now: DateTime::from_timestamp(1_080_000_000, 0).expect("valid timestamp"),
            report: SimReport::default(),
            max_bytes: 64,
        })
    }

    pub fn report(&self) -> &SimReport {
        &self.report
    }

    pub fn random_action(&mut self) -> Action {
        let students = self.students.len();
        let themes = self.themes.len().max(1);
        let rng = &mut self.rng;
        match rng.random_range(0..100) {
            0..=11 => Action::Propose {
                student: if rng.random_bool(0.6) {
                    Some(rng.random_range(0..students))
                } else {
                    None
                },
                title: rng.random_range(0..400),
                week: if rng.random_bool(0.3) {
                    Some(rng.random_range(0..=9))
                } else {
                    None
                },
                max: rng.random_range(0..=3),
            },
            12..=23 => Action::Review {
                theme: rng.random_range(0..themes),
                approve: rng.random_bool(0.75),
                max: rng.random_range(0..=3),
            },
            24..=27 => Action::Delete {
                theme: rng.random_range(0..themes),
            },
            28..=62 => Action::Select {
                student: rng.random_range(0..students),
                theme: rng.random_range(0..themes),
            },
            63..=74 => Action::Withdraw {
                student: rng.random_range(0..students),
                theme: rng.random_range(0..themes),
            },
            75..=84 => Action::Attach {
                student: rng.random_range(0..students),
                theme: rng.random_range(0..themes),
                size: rng.random_range(0..=80),
            },
            85..=93 => Action::ReviewFile {
                file: rng.random_range(0..self.files.len().max(1)),
                approve: rng.random_bool(0.5),
            },
            94..=97 => Action::SetQuota {
                max_choices: rng.random_range(0..=3),
            },
            _ => Action::StudentReview {
                student: rng.random_range(0..students),
                theme: rng.random_range(0..themes),
            },
        }
    }

    fn theme_at(&self, i: usize) -> ThemeId {
        self.themes.get(i).copied().unwrap_or(ThemeId(i64::MAX))
    }

    fn file_at(&self, i: usize) -> FileId {
        self.files.get(i).copied().unwrap_or(FileId(i64::MAX))
    }

    /// Applies one action and checks every invariant afterwards.
    pub fn apply(&mut self, action: &Action) -> std::result::Result<Outcome, String> {
        self.now += chrono::Duration::seconds(1);
        let now = self.now;
        let outcome: Result<()> = match *action {
            Action::Propose {
                student,
                title,
                week,
                max,
            } => {
                let session = student.map(|i| self.students[i]).unwrap_or(self.admin);
                let draft = ThemeDraft {
                    title: format!("Theme {title}"),
                    summary: "generated".into(),
                    keywords: vec![format!("k{}", title % 7), "sim".into()],
                    references: vec![format!("Ref {title}")],
                    proposed_week: week,
                    fixed_week: None,
                    max_students: if session.is_admin() { Some(max) } else { None },
                };
                ops::propose_theme(&mut self.state, &session, &draft, now).map(|t| {
                    self.themes.push(t.id);
                })
            }
            Action::Review { theme, approve, max } => {
                let id = self.theme_at(theme);
                let before = self.state.theme(id).map_err(|e| e.to_string())?;
                let review = if approve {
                    ThemeReview::approve(max)
                } else {
                    ThemeReview::reject()
                };
                let res = ops::review_theme(&mut self.state, &self.admin, id, &review, now).map(|_| ());
                if let Some(before) = before {
                    let to = if approve {
                        ThemeStatus::Approved
                    } else {
                        ThemeStatus::Rejected
                    };
                    self.check_transition("theme", THEME_EDGES.contains(&(before.status, to)), &res)?;
                }
                res
            }
            Action::Delete { theme } => {
                let id = self.theme_at(theme);
                let before = self.state.theme(id).map_err(|e| e.to_string())?;
                let res = ops::delete_theme(&mut self.state, &self.admin, id, now).map(|_| ());
                if let Some(before) = before {
                    let legal = THEME_EDGES.contains(&(before.status, ThemeStatus::Deleted));
                    self.check_transition("theme", legal, &res)?;
                    if res.is_ok() && self.state.count_for_theme(id).map_err(|e| e.to_string())? != 0 {
                        return Err(format!("theme {id} deleted with assignments left"));
                    }
                }
                res
            }
            Action::Select { student, theme } => {
                let session = self.students[student];
                let quota = self.state.policy().map_err(|e| e.to_string())?.max_choices_per_student;
                let before = self
                    .state
                    .count_for_student(session.user_id)
                    .map_err(|e| e.to_string())?;
                let id = self.theme_at(theme);
                let res = ops::select_theme(&mut self.state, &session, id, now).map(|_| ());
                if res.is_ok() && before + 1 > quota {
                    return Err(format!(
                        "student {} went from {before} to {} assignments with quota {quota}",
                        session.user_id,
                        before + 1
                    ));
                }
                res
            }
            Action::Withdraw { student, theme } => {
                let session = self.students[student];
                let id = self.theme_at(theme);
                ops::withdraw_selection(&mut self.state, &session, id).map(|_| ())
            }
            Action::Attach { student, theme, size } => {
                let session = self.students[student];
                let bytes = vec![b'x'; size];
                let id = self.theme_at(theme);
                let max_bytes = self.max_bytes;
                ops::attach_file(&mut self.state, &session, id, "notes.txt", &bytes, max_bytes, now)
                    .map(|f| self.files.push(f.id))
            }
            Action::ReviewFile { file, approve } => {
                let id = self.file_at(file);
                let before = self.state.file(id).map_err(|e| e.to_string())?;
                let decision = if approve { Decision::Approve } else { Decision::Reject };
                let res = ops::review_file(&mut self.state, &self.admin, id, decision, now).map(|_| ());
                if let Some(before) = before {
                    self.check_transition("file", before.status == FileStatus::Pending, &res)?;
                }
                res
            }
            Action::SetQuota { max_choices } => {
                let patch = PolicyPatch {
                    max_choices_per_student: Some(max_choices as i64),
                    ..Default::default()
                };
                ops::set_policy(&mut self.state, &self.admin, &patch, now).map(|_| ())
            }
            Action::StudentReview { student, theme } => {
                let session = self.students[student];
                let id = self.theme_at(theme);
                let res = ops::review_theme(&mut self.state, &session, id, &ThemeReview::approve(1), now).map(|_| ());
                if res != Err(Error::Forbidden) {
                    return Err(format!("student review returned {res:?}"));
                }
                res
            }
        };

        self.report.steps += 1;
        let code = match &outcome {
            Ok(()) => "ok",
            Err(e) => e.code(),
        };
        *self.report.outcomes.entry(code).or_default() += 1;
        if let Err(Error::Internal(msg) | Error::StoreUnavailable(msg)) = &outcome {
            return Err(format!("store failure: {msg}"));
        }
        check_invariants(&self.state, &self.students).map_err(|v| format!("after {action:?}: {v}"))?;
        Ok(outcome.map_err(|e| e.code()))
    }

    fn check_transition(&mut self, entity: &str, legal: bool, res: &Result<()>) -> std::result::Result<(), String> {
        let invalid = matches!(res, Err(Error::InvalidTransition { .. }));
        if invalid {
            self.report.invalid_transitions += 1;
        }
        if legal == invalid {
            return Err(format!("{entity} transition legal={legal} but got {res:?}"));
        }
        Ok(())
    }

    /// Runs `steps` random actions; stops at the first violation.
    pub fn run(&mut self, steps: usize) -> std::result::Result<&SimReport, String> {
        for _ in 0..steps {
            let action = self.random_action();
            let _outcome = self.apply(&action)?;
        }
        Ok(&self.report)
    }
}

/// Capacity, pair uniqueness, referential sanity and visibility.
/// Quota is checked per selection by [`Simulation::apply`], since lowering
/// the limit legitimately leaves students above it.
pub fn check_invariants<S: SeminarState>(state: &S, students: &[Session]) -> std::result::Result<(), String> {
    let err = |e: Error| e.to_string();
    let themes: BTreeMap<ThemeId, Theme> = state.themes().map_err(err)?.into_iter().map(|t| (t.id, t)).collect();
    let assignments = state.assignments().map_err(err)?;

    let mut pairs = BTreeSet::new();
    let mut per_theme: BTreeMap<ThemeId, u32> = BTreeMap::new();
    for a in &assignments {
        if !pairs.insert((a.student_id, a.theme_id)) {
            return Err(format!("duplicate assignment {:?}", (a.student_id, a.theme_id)));
        }
        *per_theme.entry(a.theme_id).or_default() += 1;
        match themes.get(&a.theme_id) {
            Some(t) if t.status == ThemeStatus::Approved => {}
            Some(t) => return Err(format!("assignment {} on {} theme", a.id, t.status)),
            None => return Err(format!("assignment {} on missing theme", a.id)),
        }
    }
    for (id, count) in per_theme {
        let cap = themes[&id].max_students.unwrap_or(0);
        if count > cap {
            return Err(format!("theme {id} holds {count} students, capacity {cap}"));
        }
    }
    for t in themes.values() {
        if t.status == ThemeStatus::Approved && t.max_students.unwrap_or(0) < 1 {
            return Err(format!("approved theme {} without capacity", t.id));
        }
    }

    if let Some(student) = students.first() {
        for view in ops::list_themes(state, student).map_err(err)? {
            if view.theme.status != ThemeStatus::Approved {
                return Err(format!("student sees {} theme {}", view.theme.status, view.theme.id));
            }
        }
        for t in themes.values().filter(|t| t.status == ThemeStatus::Approved) {
            let visible: Vec<FileId> = ops::theme_files(state, student, t.id)
                .map_err(err)?
                .iter()
                .map(|f| f.id)
                .collect();
            let approved: Vec<FileId> = state
                .files_for_theme(t.id)
                .map_err(err)?
                .iter()
                .filter(|f| f.status == FileStatus::Approved)
                .map(|f| f.id)
                .collect();
            if visible != approved {
                return Err(format!(
                    "theme {} shows files {visible:?}, approved are {approved:?}",
                    t.id
                ));
            }
        }
    }
    Ok(())
}
