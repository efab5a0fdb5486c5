use std::collections::BTreeSet;
use std::sync::Barrier;
use std::time::Duration;

use chrono::{DateTime, Utc};
use rusqlite::Connection;
use seminar_core::fixture::{self, PaperScenario};
use seminar_core::persistence::{self, SqlState, CORE_TABLES, LATEST_VERSION};
use seminar_core::*;
use seminar_core::{ops, Error};
use tempfile::TempDir;

fn t0() -> DateTime<Utc> {
    DateTime::from_timestamp(1_100_000_000, 123_456_789).unwrap()
}

fn store() -> (TempDir, Store) {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(&StoreConfig::in_dir(dir.path())).unwrap();
    store.migrate().unwrap();
    (dir, store)
}

fn admin(store: &Store) -> Session {
    let u = store
        .ensure_admin(&PasswordHasher::fast(), "admin@example.edu", "admin-password")
        .unwrap()
        .unwrap();
    Session {
        user_id: u.id,
        role: Role::Administrator,
    }
}

fn students(store: &Store, n: usize) -> Vec<Session> {
    let digest = PasswordDigest("$argon2id$placeholder".into());
    store
        .write(|s| {
            (0..n)
                .map(|i| {
                    ops::create_user(
                        s,
                        &format!("s{i}@example.edu"),
                        digest.clone(),
                        &format!("S{i}"),
                        Role::Student,
                    )
                    .map(|u| Session {
                        user_id: u.id,
                        role: Role::Student,
                    })
                })
                .collect()
        })
        .unwrap()
}

fn theme(store: &Store, admin: &Session, title: &str, max: u32) -> Theme {
    let draft = ThemeDraft {
        title: title.into(),
        summary: "s".into(),
        keywords: vec!["discourse".into(), title.to_lowercase()],
        references: vec![
            "van Dijk, News as Discourse".into(),
            "Fairclough, Media Discourse".into(),
        ],
        max_students: Some(max),
        ..Default::default()
    };
    store.write(|s| ops::propose_theme(s, admin, &draft, t0())).unwrap()
}

fn table_names(conn: &Connection) -> BTreeSet<String> {
    let mut stmt = conn
        .prepare("SELECT name FROM sqlite_master WHERE type = 'table'")
        .unwrap();
    stmt.query_map([], |r| r.get(0)).unwrap().map(|r| r.unwrap()).collect()
}

fn count(conn: &Connection, sql: &str) -> i64 {
    conn.query_row(sql, [], |r| r.get(0)).unwrap()
}

#[test]
fn fresh_store_has_all_tables() {
    let (_d, store) = store();
    assert_eq!(store.schema_version().unwrap(), LATEST_VERSION);
    let tables = store.with_connection(|c| Ok(table_names(c))).unwrap();
    for t in CORE_TABLES {
        assert!(tables.contains(t), "missing table {t}");
    }
    assert_eq!(store.read(|s| s.policy()).unwrap(), Policy::default());
}

#[test]
fn migrate_is_idempotent() {
    let (_d, store) = store();
    let before = store.with_connection(|c| Ok(table_names(c))).unwrap();
    assert_eq!(store.migrate().unwrap(), LATEST_VERSION);
    assert_eq!(store.migrate().unwrap(), LATEST_VERSION);
    assert_eq!(store.with_connection(|c| Ok(table_names(c))).unwrap(), before);
    assert_eq!(store.read(|s| s.policy()).unwrap(), Policy::default());
}

#[test]
fn upgrade_from_previous_version_keeps_data() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(&StoreConfig::in_dir(dir.path())).unwrap();
    let (user, theme) = store
        .with_connection(|c| {
            assert_eq!(persistence::migrate_to(c, LATEST_VERSION - 1)?, LATEST_VERSION - 1);
            assert!(!table_names(c).contains("audit_log"));
            let mut s = SqlState::new(c);
            let user = s.insert_user(NewUser {
                email: "old@example.edu".into(),
                password_digest: PasswordDigest("$argon2id$x".into()),
                display_name: "Old".into(),
                role: Role::Administrator,
            })?;
            let theme = s.insert_theme(NewTheme {
                title: "Legacy theme".into(),
                summary: "kept".into(),
                keywords: vec!["legacy".into()],
                references: vec!["r1".into()],
                proposer_id: user.id,
                status: ThemeStatus::Approved,
                max_students: Some(2),
                fixed_week: None,
                deadline_week: Some(3),
                created_at: t0(),
            })?;
            Ok((user, theme))
        })
        .unwrap();

    assert_eq!(store.migrate().unwrap(), LATEST_VERSION);
    store
        .read(|s| {
            assert_eq!(s.user(user.id)?, Some(user.clone()));
            assert_eq!(s.theme(theme.id)?, Some(theme.clone()));
            Ok(())
        })
        .unwrap();
    let tables = store.with_connection(|c| Ok(table_names(c))).unwrap();
    assert!(tables.contains("audit_log"));
}

#[test]
fn newer_store_is_refused() {
    let (_d, store) = store();
    store
        .with_connection(|c| {
            c.pragma_update(None, "user_version", LATEST_VERSION + 1).unwrap();
            Ok(())
        })
        .unwrap();
    assert!(matches!(store.migrate(), Err(Error::MigrationConflict(_))));
}

#[test]
fn unreachable_store_is_unavailable() {
    let config = StoreConfig::new("/proc/no-such-dir/seminar.db", "/proc/no-such-dir/files");
    assert!(matches!(Store::open(&config), Err(Error::StoreUnavailable(_))));
}

/// Primary key columns of a table, in key order.
fn primary_key(conn: &Connection, table: &str) -> Vec<String> {
    let mut stmt = conn
        .prepare(&format!(
            "SELECT name, pk FROM pragma_table_info('{table}') WHERE pk > 0 ORDER BY pk"
        ))
        .unwrap();
    stmt.query_map([], |r| r.get(0)).unwrap().map(|r| r.unwrap()).collect()
}

/// Column sets covered by unique indexes (including implicit ones).
fn unique_keys(conn: &Connection, table: &str) -> Vec<Vec<String>> {
    let mut stmt = conn
        .prepare(&format!(
            "SELECT name FROM pragma_index_list('{table}') WHERE \"unique\" = 1"
        ))
        .unwrap();
    let names: Vec<String> = stmt.query_map([], |r| r.get(0)).unwrap().map(|r| r.unwrap()).collect();
    names
        .iter()
        .map(|idx| {
            let mut stmt = conn
                .prepare(&format!("SELECT name FROM pragma_index_info('{idx}') ORDER BY seqno"))
                .unwrap();
            stmt.query_map([], |r| r.get::<_, Option<String>>(0))
                .unwrap()
                .map(|r| r.unwrap().unwrap_or_default())
                .collect()
        })
        .collect()
}

fn columns(conn: &Connection, table: &str) -> Vec<String> {
    let mut stmt = conn
        .prepare(&format!("SELECT name FROM pragma_table_info('{table}')"))
        .unwrap();
    stmt.query_map([], |r| r.get(0)).unwrap().map(|r| r.unwrap()).collect()
}

fn foreign_keys(conn: &Connection, table: &str) -> BTreeSet<(String, String)> {
    let mut stmt = conn
        .prepare(&format!(
            "SELECT \"from\", \"table\" FROM pragma_foreign_key_list('{table}')"
        ))
        .unwrap();
    stmt.query_map([], |r| Ok((r.get(0)?, r.get(1)?)))
        .unwrap()
        .map(|r| r.unwrap())
        .collect()
}

#[test]
fn schema_is_normalized() {
    let (_d, store) = store();
    store
        .with_connection(|c| {
            assert_eq!(primary_key(c, "theme_keywords"), ["theme_id", "keyword_id"]);
            assert_eq!(columns(c, "theme_keywords"), ["theme_id", "keyword_id"]);
            assert!(unique_keys(c, "keywords").contains(&vec!["word".to_string()]));
            assert!(unique_keys(c, "assignments").contains(&vec!["student_id".to_string(), "theme_id".to_string()]));
            assert!(unique_keys(c, "users").contains(&vec!["email".to_string()]));
            assert!(columns(c, "assignments").contains(&"presentation_week".to_string()));

            for t in CORE_TABLES {
                assert!(!primary_key(c, t).is_empty(), "{t} has no primary key");
            }
            let expect = |t: &str, fks: &[(&str, &str)]| {
                let want: BTreeSet<(String, String)> =
                    fks.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect();
                assert_eq!(foreign_keys(c, t), want, "foreign keys of {t}");
            };
            expect("theme_keywords", &[("theme_id", "themes"), ("keyword_id", "keywords")]);
            expect("references", &[("theme_id", "themes")]);
            expect("assignments", &[("student_id", "users"), ("theme_id", "themes")]);
            expect("files", &[("theme_id", "themes"), ("uploader_id", "users")]);
            expect("themes", &[("proposer_id", "users")]);

            // Multi-valued attributes only live in their own relations.
            for t in ["users", "themes", "assignments", "files", "policy"] {
                for col in columns(c, t) {
                    assert!(
                        !["keywords", "references", "tags", "students", "files"].contains(&col.as_str()),
                        "{t}.{col} looks like a list column"
                    );
                }
            }
            Ok(())
        })
        .unwrap();
}

#[test]
fn no_delimited_values_after_seeding() {
    let (_d, store) = store();
    let scenario = PaperScenario::generate(7, &PasswordHasher::fast()).unwrap();
    store.write(|s| scenario.apply(s, t0())).unwrap();
    store
        .with_connection(|c| {
            assert_eq!(
                count(
                    c,
                    "SELECT count(*) FROM keywords WHERE word LIKE '%,%' OR word LIKE '%;%'"
                ),
                0
            );
            assert!(count(c, "SELECT count(*) FROM theme_keywords") >= 41);
            assert!(count(c, "SELECT count(*) FROM \"references\"") >= 41);
            Ok(())
        })
        .unwrap();
}

#[test]
fn theme_deletion_leaves_no_orphans() {
    let (_d, store) = store();
    let admin = admin(&store);
    let studs = students(&store, 3);
    let keep = theme(&store, &admin, "Kept", 3);
    let doomed = theme(&store, &admin, "Doomed", 3);
    store
        .write(|s| {
            ops::set_policy(
                s,
                &admin,
                &PolicyPatch {
                    max_choices_per_student: Some(2),
                    ..Default::default()
                },
                t0(),
            )
        })
        .unwrap();
    for st in &studs {
        store.atomic_select(st, keep.id, t0()).unwrap();
        store.atomic_select(st, doomed.id, t0()).unwrap();
        store
            .attach_file(st, doomed.id, "draft.txt", b"draft", 1024, t0())
            .unwrap();
    }

    store.write(|s| ops::delete_theme(s, &admin, doomed.id, t0())).unwrap();

    store
        .with_connection(|c| {
            let id = doomed.id.0;
            assert_eq!(count(c, &format!("SELECT count(*) FROM assignments WHERE theme_id = {id}")), 0);
            assert_eq!(count(c, &format!("SELECT count(*) FROM files WHERE theme_id = {id}")), 0);
            assert_eq!(count(c, &format!("SELECT count(*) FROM theme_keywords WHERE theme_id = {id}")), 0);
            assert_eq!(
                count(c, "SELECT count(*) FROM keywords k WHERE NOT EXISTS (SELECT 1 FROM theme_keywords tk WHERE tk.keyword_id = k.id)"),
                0
            );
            assert_eq!(
                count(c, "SELECT count(*) FROM assignments a WHERE NOT EXISTS (SELECT 1 FROM themes t WHERE t.id = a.theme_id AND t.status = 'approved')"),
                0
            );
            assert_eq!(count(c, "SELECT count(*) FROM pragma_foreign_key_check"), 0);
            assert_eq!(count(c, &format!("SELECT count(*) FROM themes WHERE id = {id} AND status = 'deleted'")), 1);
            assert_eq!(count(c, "SELECT count(*) FROM assignments"), 3);
            Ok(())
        })
        .unwrap();

    let audit = store.audit_log().unwrap();
    let cancelled = audit.iter().filter(|e| e.action == "assignment_cancelled").count();
    assert_eq!(cancelled, 3);
    assert_eq!(audit.iter().filter(|e| e.action == "file_removed").count(), 3);
}

#[test]
fn entities_round_trip() {
    let (_d, store) = store();
    let admin = admin(&store);
    let st = students(&store, 1)[0];
    let t = theme(&store, &admin, "Round trip", 2);
    let a = store.atomic_select(&st, t.id, t0()).unwrap();
    let f = store
        .attach_file(&st, t.id, "x.bin", &[0, 1, 2, 255], 1024, t0())
        .unwrap();
    let policy = Policy {
        max_choices_per_student: 3,
        per_week_capacity: 4,
        num_weeks: 9,
        proposal_open: false,
        selection_opens_at: Some(t0()),
    };
    store
        .write(|s| {
            s.put_policy(&policy)?;
            s.set_presentation_week(a.id, 2)
        })
        .unwrap();
    store
        .read(|s| {
            assert_eq!(s.theme(t.id)?, Some(t.clone()));
            assert_eq!(
                s.assignment(st.user_id, t.id)?,
                Some(Assignment {
                    presentation_week: Some(2),
                    ..a.clone()
                })
            );
            assert_eq!(s.file(f.id)?, Some(f.clone()));
            assert_eq!(s.policy()?, policy);
            let user = s.user(st.user_id)?.unwrap();
            assert_eq!(s.user_by_email(&user.email)?, Some(user));
            Ok(())
        })
        .unwrap();
    assert_eq!(
        t.references,
        ["van Dijk, News as Discourse", "Fairclough, Media Discourse"]
    );
    assert_eq!(t.keywords, ["discourse", "round trip"]);
    assert_eq!(t.created_at, t0());
    assert_eq!(store.blobs().get(&f.content_hash).unwrap(), [0, 1, 2, 255]);
    let path = store.blobs().path_for(&f.content_hash).unwrap();
    assert!(path.ends_with(format!("{}/{}", &f.content_hash[..2], f.content_hash)));
}

#[test]
fn listing_queries() {
    let (_d, store) = store();
    let admin = admin(&store);
    let st = students(&store, 2);
    assert!(store.query_theme_listing(&st[0]).unwrap().is_empty());
    let a = theme(&store, &admin, "A", 2);
    theme(&store, &admin, "B", 1);
    let draft = ThemeDraft {
        title: "C".into(),
        keywords: vec!["c".into()],
        ..Default::default()
    };
    store.write(|s| ops::propose_theme(s, &st[1], &draft, t0())).unwrap();
    assert_eq!(store.query_theme_listing(&st[0]).unwrap().len(), 2);
    assert_eq!(store.query_theme_listing(&admin).unwrap().len(), 3);
    store.atomic_select(&st[1], a.id, t0()).unwrap();
    let row = &store.query_theme_listing(&st[0]).unwrap()[0];
    assert_eq!((row.theme.id, row.remaining_capacity), (a.id, Some(1)));
}

#[test]
fn serial_second_caller_finds_theme_full() {
    let (_d, store) = store();
    let admin = admin(&store);
    let st = students(&store, 2);
    let t = theme(&store, &admin, "Solo", 1);
    store.atomic_select(&st[0], t.id, t0()).unwrap();
    assert_eq!(store.atomic_select(&st[1], t.id, t0()), Err(Error::ThemeFull));
}

#[test]
fn concurrent_selects_never_oversubscribe() {
    let (_d, store) = store();
    let admin = admin(&store);
    let studs = students(&store, 100);
    store
        .write(|s| {
            ops::set_policy(
                s,
                &admin,
                &PolicyPatch {
                    max_choices_per_student: Some(1000),
                    ..Default::default()
                },
                t0(),
            )
        })
        .unwrap();
    for round in 0..50 {
        let t = theme(&store, &admin, &format!("Contended {round}"), 3);
        let barrier = Barrier::new(studs.len());
        let results: Vec<Result<Assignment>> = std::thread::scope(|scope| {
            let handles: Vec<_> = studs
                .iter()
                .map(|st| {
                    let (store, barrier) = (&store, &barrier);
                    scope.spawn(move || {
                        barrier.wait();
                        store.atomic_select(st, t.id, t0())
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        let ok = results.iter().filter(|r| r.is_ok()).count();
        let full = results.iter().filter(|r| **r == Err(Error::ThemeFull)).count();
        assert_eq!(
            (ok, full),
            (3, 97),
            "round {round}: {:?}",
            results.iter().find(|r| !matches!(r, Ok(_) | Err(Error::ThemeFull)))
        );
        assert_eq!(store.read(|s| s.count_for_theme(t.id)).unwrap(), 3);
    }
}

#[test]
fn concurrent_selects_respect_quota() {
    let (_d, store) = store();
    let admin = admin(&store);
    let st = students(&store, 1)[0];
    let themes: Vec<Theme> = (0..20).map(|i| theme(&store, &admin, &format!("Q{i}"), 5)).collect();
    let barrier = Barrier::new(themes.len());
    let ok = std::thread::scope(|scope| {
        let handles: Vec<_> = themes
            .iter()
            .map(|t| {
                let (store, barrier) = (&store, &barrier);
                scope.spawn(move || {
                    barrier.wait();
                    store.atomic_select(&st, t.id, t0())
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap())
            .filter(|r| r.is_ok())
            .count()
    });
    assert_eq!(ok, 1);
    assert_eq!(store.read(|s| s.count_for_student(st.user_id)).unwrap(), 1);
}

#[test]
fn write_lock_contention_is_bounded() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = StoreConfig::in_dir(dir.path());
    config.retries = 2;
    config.busy_timeout = Duration::from_millis(10);
    let store = Store::open(&config).unwrap();
    store.migrate().unwrap();

    let blocker = Connection::open(&config.db_path).unwrap();
    blocker.execute_batch("BEGIN EXCLUSIVE").unwrap();
    let res = store.write(|s| s.policy());
    assert_eq!(res, Err(Error::TransactionRetryExhausted(2)));
    blocker.execute_batch("COMMIT").unwrap();
    assert!(store.write(|s| s.policy()).is_ok());
}

#[test]
fn sessions_expire_and_revoke() {
    let (_d, store) = store();
    let hasher = PasswordHasher::fast();
    admin(&store);
    let ttl = Duration::from_secs(12 * 3600);
    let (session, issued) = store
        .login(&hasher, "admin@example.edu", "admin-password", ttl, t0())
        .unwrap();
    assert_eq!(session.role, Role::Administrator);
    assert_eq!(issued.expires_at, t0() + chrono::Duration::hours(12));
    assert!(issued.token.len() >= 22);
    assert!(issued
        .token
        .chars()
        .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_'));

    let resolved = store.resolve_token(&issued.token, t0()).unwrap();
    assert_eq!(resolved.session, session);
    assert_eq!(
        store.resolve_token(&issued.token, issued.expires_at).map(|_| ()),
        Err(Error::Unauthenticated)
    );
    assert_eq!(
        store.resolve_token("forged", t0()).map(|_| ()),
        Err(Error::Unauthenticated)
    );
    assert_eq!(
        store
            .login(&hasher, "admin@example.edu", "bad-password", ttl, t0())
            .map(|_| ()),
        Err(Error::AuthFailed)
    );

    let (_, other) = store
        .login(&hasher, "admin@example.edu", "admin-password", ttl, t0())
        .unwrap();
    assert_ne!(other.token, issued.token);
    let change = ops::prepare_profile_change(
        &ProfilePatch {
            new_password: Some("new-admin-password".into()),
            ..Default::default()
        },
        &hasher,
    )
    .unwrap();
    store.update_profile(&session, change, &resolved.token_hash).unwrap();
    assert!(store.resolve_token(&issued.token, t0()).is_ok());
    assert!(store.resolve_token(&other.token, t0()).is_err());

    store.logout(&resolved.token_hash).unwrap();
    assert!(store.resolve_token(&issued.token, t0()).is_err());
}

#[test]
fn ensure_admin_runs_once() {
    let (_d, store) = store();
    let hasher = PasswordHasher::fast();
    assert!(store
        .ensure_admin(&hasher, "root@example.edu", "root-password")
        .unwrap()
        .is_some());
    assert!(store
        .ensure_admin(&hasher, "other@example.edu", "other-password")
        .unwrap()
        .is_none());
    assert!(matches!(
        store.ensure_admin(&hasher, "x@example.edu", "short"),
        Err(Error::WeakPassword(8))
    ));
}

#[test]
fn seeded_scenario_in_store() {
    let (_d, store) = store();
    let scenario = PaperScenario::generate(2004, &PasswordHasher::fast()).unwrap();
    let report = store.write(|s| scenario.apply(s, t0())).unwrap();
    assert_eq!(
        (
            report.students_created,
            report.themes_approved,
            report.proposals_pending
        ),
        (35, 35, 6)
    );
    let st = Session {
        user_id: store
            .read(|s| s.user_by_email(&fixture::student_email(1)))
            .unwrap()
            .unwrap()
            .id,
        role: Role::Student,
    };
    assert_eq!(store.query_theme_listing(&st).unwrap().len(), 35);
    assert_eq!(store.write(|s| fixture::approve_all(s, t0())).unwrap(), 6);
    assert_eq!(store.query_theme_listing(&st).unwrap().len(), 41);
    assert_eq!(store.write(|s| fixture::assign_all(s, 1, t0())).unwrap(), 41);
    let admin = Session {
        user_id: store
            .read(|s| s.user_by_email(fixture::ADMIN_EMAIL))
            .unwrap()
            .unwrap()
            .id,
        role: Role::Administrator,
    };
    let plan = store.write(|s| ops::plan_presentations(s, &admin, t0())).unwrap();
    assert_eq!(plan.max_weekly_load, 6);
    assert_eq!(plan.loads.len(), 7);
}
