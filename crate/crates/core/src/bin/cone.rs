use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use tracing::{info, warn};

use cone_core::analysis::report::{render_csv, render_json, render_table, AnalysisOutput};
use cone_core::analysis::{bug_induction_rates, build_corpus, correlation_report, RateDenominator};
use cone_core::config::{parse_config, RepoConfig};
use cone_core::event::{parse_timestamp, validate_event, PullRequestEvent, Timestamp};
use cone_core::rce::{build_rce_list, intervals_from_events};
use cone_core::service::{http, restore_state, Clock, Notification, Service};

const STATE_DIR_ENV: &str = "CONE_STATE_DIR";
const CONFIG_ENV: &str = "CONE_CONFIG";

#[derive(Parser)]
#[command(name = "cone", version, about = "Conflicting-change detection across active pull requests")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP service.
    Serve {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        state_dir: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1:8080")]
        listen: String,
    },
    /// Replay a JSONL event log through the detector, using event timestamps as the clock.
    Replay {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        state_dir: Option<PathBuf>,
        /// Persist notifications without emitting them.
        #[arg(long)]
        shadow: bool,
    },
    /// RCE list operations.
    Rce {
        #[command(subcommand)]
        command: RceCommand,
    },
    /// Notification queries.
    Notifications {
        #[command(subcommand)]
        command: NotificationsCommand,
    },
    /// Bug-induction rates and edit/bug-fix correlations over completed PRs.
    Analyze {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        events: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = [1u32, 7, 14, 30])]
        windows: Vec<u32>,
        #[arg(long, default_value_t = 10_000)]
        permutations: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Denominator::EditEvents)]
        denominator: Denominator,
        #[arg(long, value_enum, default_value_t = AnalysisFormat::Table)]
        format: AnalysisFormat,
    },
}

#[derive(Subcommand)]
enum RceCommand {
    /// Build the RCE list as of an instant and print it as JSON.
    Build {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        window_days: Option<u32>,
        #[arg(long)]
        at: String,
        /// Repository to build for; required when the log spans several.
        #[arg(long)]
        repo: Option<String>,
    },
}

#[derive(Subcommand)]
enum NotificationsCommand {
    List {
        #[arg(long)]
        state_dir: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = ListFormat::Json)]
        format: ListFormat,
    },
}

#[derive(Args)]
struct ConfigArg {
    /// Repository configuration file (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ListFormat {
    Json,
    Table,
}

#[derive(Clone, Copy, ValueEnum)]
enum AnalysisFormat {
    Json,
    Csv,
    Table,
}

#[derive(Clone, Copy, ValueEnum)]
enum Denominator {
    EditEvents,
    DistinctFiles,
}

/// The environment variable wins over the flag when both are set.
fn env_or(var: &str, flag: Option<PathBuf>) -> Option<PathBuf> {
    std::env::var_os(var).filter(|v| !v.is_empty()).map(PathBuf::from).or(flag)
}

fn load_config(arg: ConfigArg) -> Result<RepoConfig> {
    match env_or(CONFIG_ENV, arg.config) {
        None => Ok(RepoConfig::default()),
        Some(path) => {
            let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            parse_config(&text).with_context(|| format!("in config {}", path.display()))
        }
    }
}

fn state_dir(flag: Option<PathBuf>) -> Result<PathBuf> {
    env_or(STATE_DIR_ENV, flag).with_context(|| format!("--state-dir or {STATE_DIR_ENV} is required"))
}

/// Reads a JSONL event log. Invalid lines are reported through `on_invalid`.
fn read_events(path: &Path, mut on_invalid: impl FnMut(usize, String)) -> Result<Vec<PullRequestEvent>> {
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut events = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.with_context(|| format!("reading {}", path.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str(&line)
            .map_err(|e| e.to_string())
            .and_then(|v| validate_event(&v).map_err(|e| e.to_string()));
        match parsed {
            Ok(e) => events.push(e),
            Err(msg) => on_invalid(idx + 1, msg),
        }
    }
    Ok(events)
}

fn read_events_strict(path: &Path) -> Result<Vec<PullRequestEvent>> {
    let mut first_error = None;
    let events = read_events(path, |line, msg| {
        first_error.get_or_insert(format!("{}:{line}: {msg}", path.display()));
    })?;
    match first_error {
        Some(e) => bail!(e),
        None => Ok(events),
    }
}

fn replay(config: RepoConfig, events: &Path, dir: PathBuf, shadow: bool) -> Result<()> {
    let config = RepoConfig {
        shadow_mode: config.shadow_mode || shadow,
        ..config
    };
    let mut invalid = 0usize;
    let events = read_events(events, |line, msg| {
        invalid += 1;
        warn!(line, "skipping invalid event: {msg}");
    })?;
    let service = Service::open(&dir, config.clone(), Clock::EventTime)?;
    for repo in service.repo_ids() {
        service.set_repo_config(&repo, config.clone())?;
    }
    let (mut rejected, mut notified) = (0usize, 0usize);
    for event in events.iter().cloned() {
        let (repo, pr, kind) = (event.repo_id.clone(), event.pr_id, event.event_type);
        match service.ingest(event) {
            Ok(n) => notified += n.len(),
            Err(e) if e.state_error().is_some() => {
                rejected += 1;
                warn!(%repo, pr, %kind, "rejected: {e}");
            }
            Err(e) => return Err(e.into()),
        }
    }
    service.snapshot_all()?;
    info!(
        events = events.len(),
        invalid, rejected, notifications = notified, shadow = config.shadow_mode, "replay finished"
    );
    Ok(())
}

fn rce_build(
    config: RepoConfig,
    events: &Path,
    window_days: Option<u32>,
    at: &str,
    repo: Option<String>,
) -> Result<()> {
    let at: Timestamp = parse_timestamp(at).with_context(|| format!("--at {at}"))?;
    let config = RepoConfig {
        rce_window_days: window_days.unwrap_or(config.rce_window_days),
        ..config
    };
    config.validate()?;
    let events = read_events_strict(events)?;
    let repo = match repo {
        Some(r) => r,
        None => {
            let mut repos: Vec<&str> = events.iter().map(|e| e.repo_id.as_str()).collect();
            repos.sort_unstable();
            repos.dedup();
            match repos.as_slice() {
                [only] => only.to_string(),
                [] => bail!("the event log is empty; pass --repo"),
                _ => bail!("the event log spans {} repositories; pass --repo", repos.len()),
            }
        }
    };
    let history = intervals_from_events(&events, &repo, at);
    let list = build_rce_list(&repo, &history, at, &config);
    println!("{}", serde_json::to_string_pretty(&list)?);
    Ok(())
}

fn list_notifications(dir: &Path, format: ListFormat) -> Result<()> {
    let mut all: Vec<Notification> = Vec::new();
    if dir.exists() {
        let mut repo_dirs: Vec<PathBuf> = fs::read_dir(dir)
            .with_context(|| format!("reading {}", dir.display()))?
            .flatten()
            .map(|e| e.path())
            .filter(|p| p.is_dir())
            .collect();
        repo_dirs.sort();
        for repo_dir in repo_dirs {
            let state = restore_state(&repo_dir)?;
            all.extend(state.notifications);
        }
    }
    match format {
        ListFormat::Json => println!("{}", serde_json::to_string_pretty(&all)?),
        ListFormat::Table => {
            println!(
                "{:<28} {:<16} {:>8} {:<20} {:<10} {:<7} CANDIDATES",
                "ID", "REPO", "PR", "CREATED", "FEEDBACK", "EMITTED"
            );
            for n in &all {
                let candidates: Vec<String> = n
                    .candidates
                    .iter()
                    .map(|c| format!("#{} ({}, {} files)", c.candidate.active_pr, c.active_author, c.candidate.overlap_files.len()))
                    .collect();
                println!(
                    "{:<28} {:<16} {:>8} {:<20} {:<10} {:<7} {}",
                    n.id,
                    n.repo_id,
                    n.reference_pr,
                    n.created_at.format("%Y-%m-%dT%H:%M:%SZ"),
                    n.feedback,
                    n.emitted,
                    candidates.join(", ")
                );
            }
        }
    }
    Ok(())
}

fn analyze(
    config: RepoConfig,
    events: &Path,
    windows: &[u32],
    permutations: usize,
    seed: u64,
    denominator: Denominator,
    format: AnalysisFormat,
) -> Result<()> {
    let mut invalid = 0usize;
    let events = read_events(events, |line, msg| {
        invalid += 1;
        warn!(line, "skipping invalid event: {msg}");
    })?;
    let corpus = build_corpus(&events, &config);
    let denominator = match denominator {
        Denominator::EditEvents => RateDenominator::EditEvents,
        Denominator::DistinctFiles => RateDenominator::DistinctFiles,
    };
    let correlation = correlation_report(&corpus.prs, permutations, seed);
    for w in &correlation.warnings {
        warn!("{w}");
    }
    let out = AnalysisOutput {
        completed_prs: corpus.prs.len(),
        bug_fix_prs: corpus.prs.iter().filter(|p| p.is_bug_fix).count(),
        bug_induction: bug_induction_rates(&corpus.prs, windows, denominator),
        correlation,
        corpus: corpus.stats,
    };
    let text = match format {
        AnalysisFormat::Json => render_json(&out),
        AnalysisFormat::Csv => render_csv(&out),
        AnalysisFormat::Table => render_table(&out),
    };
    print!("{text}");
    if !text.ends_with('\n') {
        println!();
    }
    Ok(())
}

fn serve(config: RepoConfig, dir: PathBuf, listen: &str) -> Result<()> {
    let service = Arc::new(Service::open(&dir, config, Clock::Wall)?);
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(listen)
            .await
            .with_context(|| format!("binding {listen}"))?;
        info!(addr = %listener.local_addr()?, state_dir = %dir.display(), "listening");
        http::serve(service, listener).await?;
        Ok(())
    })
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();

    match Cli::parse().command {
        Command::Serve {
            config,
            state_dir: dir,
            listen,
        } => serve(load_config(config)?, state_dir(dir)?, &listen),
        Command::Replay {
            config,
            events,
            state_dir: dir,
            shadow,
        } => replay(load_config(config)?, &events, state_dir(dir)?, shadow),
        Command::Rce {
            command:
                RceCommand::Build {
                    config,
                    events,
                    window_days,
                    at,
                    repo,
                },
        } => rce_build(load_config(config)?, &events, window_days, &at, repo),
        Command::Notifications {
            command: NotificationsCommand::List { state_dir: dir, format },
        } => list_notifications(&state_dir(dir)?, format),
        Command::Analyze {
            config,
            events,
            windows,
            permutations,
            seed,
            denominator,
            format,
        } => analyze(
            load_config(config)?,
            &events,
            &windows,
            permutations,
            seed,
            denominator,
            format,
        ),
    }
}
