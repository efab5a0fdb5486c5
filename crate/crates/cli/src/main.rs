//! `seminarctl`: schema migrations, fixtures, load reports and the HTTP service.
//!
//! Exit status is 0 on success, 1 on a runtime failure and 2 on a usage error.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use chrono::Utc;
use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use seminar_api::{ApiConfig, AppState};
use seminar_core::persistence::{parse_db_url, LATEST_VERSION};
use seminar_core::{fixture, ops, PasswordHasher, Role, SeminarState, Session, Store, StoreConfig};

#[derive(Parser, Debug)]
#[command(name = "seminarctl", version, about = "Operate a seminar theme store")]
struct Cli {
    /// Database location: a path, optionally prefixed `sqlite://`.
    #[arg(long, global = true, env = "SEMINAR_DB_URL", default_value = "./seminar.db")]
    db: String,
    /// Directory for uploaded file contents.
    #[arg(long, global = true, env = "SEMINAR_FILES_DIR", default_value = "./files")]
    files_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Apply pending schema migrations. Creates the administrator from
    /// SEMINAR_ADMIN_EMAIL / SEMINAR_ADMIN_PASSWORD when none exists.
    Migrate,
    /// Load fixtures.
    Seed(SeedArgs),
    /// Print machine-readable (TSV) reports.
    Report {
        #[command(subcommand)]
        report: Report,
    },
    /// Run the HTTP service until interrupted.
    Serve(ServeArgs),
}

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("action").required(true).multiple(true).args(["scenario", "approve_all", "assign"])))]
struct SeedArgs {
    /// Insert a named scenario.
    #[arg(long, value_enum)]
    scenario: Option<Scenario>,
    /// Approve every pending theme proposal with one seat each.
    #[arg(long)]
    approve_all: bool,
    /// Give every approved theme one student.
    #[arg(long)]
    assign: bool,
    /// Seed for names, titles and the assignment shuffle.
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Scenario {
    /// 35 students, 35 approved teacher themes and 6 pending student proposals.
    Paper,
}

#[derive(Subcommand, Debug)]
enum Report {
    /// Presentations per week, one `week<TAB>count` row for every week.
    Load {
        /// Plan unscheduled assignments first.
        #[arg(long)]
        plan: bool,
    },
    /// Every assignment as `week<TAB>theme<TAB>student`; unscheduled rows show `-`.
    Schedule,
}

#[derive(Args, Debug)]
struct ServeArgs {
    #[arg(long, env = "SEMINAR_BIND", default_value = seminar_api::DEFAULT_BIND)]
    bind: String,
    /// Hide who took which theme from other students.
    #[arg(long)]
    anonymize: bool,
    /// Directory with the browser UI bundle, served at `/`.
    #[arg(long, env = "SEMINAR_STATIC_DIR")]
    static_dir: Option<PathBuf>,
    /// Largest accepted upload.
    #[arg(long, default_value_t = ops::DEFAULT_MAX_FILE_BYTES)]
    max_file_bytes: u64,
}

fn main() -> ExitCode {
    // clap exits with 2 on usage errors and 0 for --help / --version.
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let config = StoreConfig::new(parse_db_url(&cli.db), &cli.files_dir);
    let store = Store::open(&config).with_context(|| format!("opening {}", config.db_path.display()))?;
    match cli.command {
        Command::Migrate => migrate(&store),
        Command::Seed(args) => {
            require_migrated(&store)?;
            seed(&store, &args)
        }
        Command::Report { report } => {
            require_migrated(&store)?;
            match report {
                Report::Load { plan } => report_load(&store, plan),
                Report::Schedule => report_schedule(&store),
            }
        }
        Command::Serve(args) => {
            require_migrated(&store)?;
            serve(store, args)
        }
    }
}

fn require_migrated(store: &Store) -> anyhow::Result<()> {
    let version = store.schema_version()?;
    if version < LATEST_VERSION {
        bail!("store is at schema version {version}, expected {LATEST_VERSION}; run `seminarctl migrate`");
    }
    Ok(())
}

fn migrate(store: &Store) -> anyhow::Result<()> {
    let version = store.migrate()?;
    println!("schema version {version}");
    let email = std::env::var("SEMINAR_ADMIN_EMAIL").ok();
    let password = std::env::var("SEMINAR_ADMIN_PASSWORD").ok();
    match (email, password) {
        (Some(email), Some(password)) => {
            if let Some(admin) = store.ensure_admin(&PasswordHasher::default(), &email, &password)? {
                println!("created administrator {}", admin.email);
            }
        }
        (None, None) => {
            if admin_session(store).is_err() {
                eprintln!(
                    "note: no administrator; set SEMINAR_ADMIN_EMAIL and SEMINAR_ADMIN_PASSWORD and migrate again"
                );
            }
        }
        _ => bail!("SEMINAR_ADMIN_EMAIL and SEMINAR_ADMIN_PASSWORD must be set together"),
    }
    Ok(())
}

fn admin_session(store: &Store) -> anyhow::Result<Session> {
    let users = store.read(|s| s.users())?;
    users
        .into_iter()
        .find(|u| u.role == Role::Administrator && u.disabled_at.is_none())
        .map(|u| Session {
            user_id: u.id,
            role: Role::Administrator,
        })
        .context("no active administrator; run `seminarctl migrate` with SEMINAR_ADMIN_EMAIL set")
}

fn seed(store: &Store, args: &SeedArgs) -> anyhow::Result<()> {
    let now = Utc::now();
    if let Some(Scenario::Paper) = args.scenario {
        let scenario = fixture::PaperScenario::generate(args.seed, &PasswordHasher::default())?;
        let report = store
            .write(|s| scenario.apply(s, now))
            .context("seeding the scenario")?;
        println!(
            "created {} administrator(s), {} students, {} approved themes, {} pending proposals",
            report.admins_created, report.students_created, report.themes_approved, report.proposals_pending
        );
    }
    if args.approve_all {
        let approved = store.write(|s| fixture::approve_all(s, now))?;
        println!("approved {approved} proposals");
    }
    if args.assign {
        let created = store.write(|s| fixture::assign_all(s, args.seed, now))?;
        println!("created {created} assignments");
    }
    Ok(())
}

fn report_load(store: &Store, plan: bool) -> anyhow::Result<()> {
    if plan {
        let admin = admin_session(store)?;
        store.write(|s| ops::plan_presentations(s, &admin, Utc::now()))?;
    }
    let (num_weeks, assignments) = store.read(|s| Ok((s.policy()?.num_weeks, s.assignments()?)))?;
    let mut counts = vec![0u32; num_weeks as usize];
    let mut unscheduled = 0;
    for a in &assignments {
        match a.presentation_week {
            Some(week) if (1..=num_weeks).contains(&week) => counts[week as usize - 1] += 1,
            _ => unscheduled += 1,
        }
    }
    for (i, count) in counts.iter().enumerate() {
        println!("{}\t{count}", i + 1);
    }
    if unscheduled > 0 {
        eprintln!("{unscheduled} assignment(s) not scheduled; rerun with --plan");
    }
    Ok(())
}

fn report_schedule(store: &Store) -> anyhow::Result<()> {
    for entry in store.read(|s| ops::schedule_board(s))? {
        let week = entry.week.map_or_else(|| "-".to_string(), |w| w.to_string());
        println!("{week}\t{}\t{}", clean(&entry.theme), clean(&entry.student));
    }
    Ok(())
}

/// Keeps a field on one TSV cell.
fn clean(field: &str) -> String {
    field.replace(['\t', '\n', '\r'], " ")
}

fn serve(store: Store, args: ServeArgs) -> anyhow::Result<()> {
    let config = ApiConfig {
        max_file_bytes: args.max_file_bytes,
        anonymize_assignees: args.anonymize,
        static_dir: args.static_dir,
        ..ApiConfig::default()
    };
    let state = AppState::new(store, PasswordHasher::default(), config);
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&args.bind)
            .await
            .with_context(|| format!("binding {}", args.bind))?;
        // Scripts and tests read the actual port from this line.
        println!("listening on http://{}", listener.local_addr()?);
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        seminar_api::serve(listener, state, shutdown).await?;
        Ok(())
    })
}
