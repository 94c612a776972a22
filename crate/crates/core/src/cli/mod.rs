//! Command-line entry point. Exit codes: 0 success, 2 usage, 3 environment
//! (power counters, sockets), 4 bad data.

mod bench;
mod config;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::net::{Ipv4Addr, SocketAddrV4};
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::feed::{generate_trace, replay, Arrivals, ReplayConfig, Subscriber, SyntheticSpec, TickTrace, DEFAULT_GROUP, DEFAULT_PORT};
use crate::metrics::{iso_qos_compare, merge_scaleout, qos, time_per_option, ScaleoutMode, SessionReport};
use crate::pricer::{ContractBook, SessionLog};

pub use bench::{BenchArgs, PowerSpec, RunConfig, REPORT_FILE, SUMMARY_FILE};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_ENVIRONMENT: i32 = 3;
pub const EXIT_DATA: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "optbench", version, about = "Real-time option pricing benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic tick trace.
    GenTrace(GenTraceArgs),
    /// Send a trace to a multicast group on its recorded schedule.
    Replay(ReplayArgs),
    /// Print ticks received from a multicast group.
    SubscribeDump(SubscribeArgs),
    /// Run a pricing session and write its report.
    Bench(Box<BenchArgs>),
    /// Rank reports by energy at a common QoS target.
    Compare(CompareArgs),
    /// Check traces, books and run directories for consistency.
    Validate(ValidateArgs),
    /// Combine per-node session logs of a scale-out run.
    Merge(MergeArgs),
}

#[derive(Debug, Args)]
struct GenTraceArgs {
    #[arg(long, default_value = "poisson")]
    arrivals: Arrivals,
    /// Mean ticks per second.
    #[arg(long)]
    rate: f64,
    #[arg(long)]
    count: usize,
    #[arg(long, default_value_t = 5489)]
    seed: u64,
    #[arg(long, default_value = "FB")]
    symbol: String,
    #[arg(long, default_value_t = 25.0)]
    start_price: f64,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Multicast group and interface flags shared by the feed commands.
#[derive(Debug, Clone, Args)]
pub struct FeedArgs {
    #[arg(long, default_value_t = DEFAULT_GROUP)]
    pub group: Ipv4Addr,
    #[arg(long, default_value_t = DEFAULT_PORT)]
    pub port: u16,
    /// Local interface for multicast traffic.
    #[arg(long, default_value_t = Ipv4Addr::LOCALHOST)]
    pub interface: Ipv4Addr,
}

impl FeedArgs {
    pub fn group_addr(&self) -> SocketAddrV4 {
        SocketAddrV4::new(self.group, self.port)
    }

    pub fn replay_config(&self, speed: f64, burst: bool) -> ReplayConfig {
        ReplayConfig {
            group: self.group_addr(),
            interface: self.interface,
            speed,
            burst,
            ..ReplayConfig::default()
        }
    }
}

#[derive(Debug, Args)]
struct ReplayArgs {
    #[arg(long)]
    trace: PathBuf,
    #[command(flatten)]
    feed: FeedArgs,
    #[arg(long, default_value_t = 1.0)]
    speed: f64,
    /// Send back to back, ignoring timestamps.
    #[arg(long)]
    burst: bool,
}

#[derive(Debug, Args)]
struct SubscribeArgs {
    #[command(flatten)]
    feed: FeedArgs,
    /// Stop after this many ticks.
    #[arg(long)]
    count: Option<usize>,
    /// Stop after this long without a tick.
    #[arg(long, default_value_t = 5000)]
    idle_ms: u64,
    /// Also save what arrived as a trace.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[arg(long)]
    qos_target: f64,
    /// Report JSON files written by `bench`.
    #[arg(required = true)]
    reports: Vec<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    book: Option<PathBuf>,
    /// A `bench` output directory.
    #[arg(long)]
    run: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct MergeArgs {
    #[arg(long, alias = "scaleout")]
    mode: ScaleoutMode,
    /// Per-node `bench` output directories.
    #[arg(required = true)]
    nodes: Vec<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match config::expand(args.into_iter().map(Into::into).collect()) {
        Ok(a) => a,
        Err(e) => return report_error(&e),
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match cli.command {
        Command::GenTrace(a) => gen_trace(a),
        Command::Replay(a) => replay_cmd(a),
        Command::SubscribeDump(a) => subscribe_dump(a),
        Command::Bench(a) => bench::bench(*a),
        Command::Compare(a) => compare(a),
        Command::Validate(a) => validate(a),
        Command::Merge(a) => merge(a),
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(e) => report_error(&e),
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Argument(_) => EXIT_USAGE,
        Error::SourceUnavailable(_) | Error::Io(_) => EXIT_ENVIRONMENT,
        Error::Domain(_)
        | Error::Numeric(_)
        | Error::Parse { .. }
        | Error::Validation(_)
        | Error::File { .. }
        | Error::Json(_) => EXIT_DATA,
    }
}

fn report_error(e: &Error) -> i32 {
    eprintln!("optbench: {e}");
    exit_code(e)
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::file(path, e))
}

pub(crate) fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::file(path, e))
}

fn gen_trace(a: GenTraceArgs) -> Result<()> {
    let trace = generate_trace(&SyntheticSpec {
        arrivals: a.arrivals,
        rate: a.rate,
        count: a.count,
        seed: a.seed,
        symbol: a.symbol,
        start_price: a.start_price,
        ..SyntheticSpec::default()
    })?;
    match a.out {
        Some(path) => trace.save(path),
        None => trace.write_to(std::io::stdout().lock()),
    }
}

fn replay_cmd(a: ReplayArgs) -> Result<()> {
    let trace = TickTrace::load(&a.trace)?;
    let stats = replay(&trace, &a.feed.replay_config(a.speed, a.burst))?;
    println!(
        "sent {} ticks in {:.3} s; late {} (max {:.3} ms)",
        stats.sent,
        stats.elapsed_ns as f64 * 1e-9,
        stats.late_count,
        stats.max_lateness_ns as f64 * 1e-6
    );
    Ok(())
}

fn subscribe_dump(a: SubscribeArgs) -> Result<()> {
    let mut sub = Subscriber::join(a.feed.group_addr(), a.feed.interface)?;
    let idle = Duration::from_millis(a.idle_ms);
    let mut ticks = Vec::new();
    let mut out = std::io::stdout().lock();
    while a.count.is_none_or(|n| ticks.len() < n) {
        let Some(tick) = sub.recv(idle)? else { break };
        writeln!(out, "{},{}", tick.seq, tick.to_line())?;
        ticks.push(tick);
    }
    let expected = a.count.map(|n| n as u32);
    let stats = sub.finish(expected);
    eprintln!(
        "received {}; gaps {}; malformed {}; out of order {}",
        stats.received, stats.gaps, stats.malformed, stats.out_of_order
    );
    if let Some(path) = a.out {
        TickTrace::new(chrono::Utc::now(), ticks)?.save(path)?;
    }
    Ok(())
}

fn compare(a: CompareArgs) -> Result<()> {
    if a.reports.len() < 2 {
        return Err(Error::argument("compare needs at least two reports"));
    }
    let reports = a
        .reports
        .iter()
        .map(SessionReport::load_json)
        .collect::<Result<Vec<_>>>()?;
    let table = iso_qos_compare(&reports, a.qos_target)?;
    print!("{table}");
    if let Some(dir) = a.out_dir {
        create_dir(&dir)?;
        write_file(&dir.join("compare.csv"), &table.to_csv())?;
    }
    Ok(())
}

fn validate(a: ValidateArgs) -> Result<()> {
    if a.trace.is_none() && a.book.is_none() && a.run.is_none() {
        return Err(Error::argument("validate needs --trace, --book or --run"));
    }
    if let Some(path) = a.trace {
        let trace = TickTrace::load(&path)?;
        println!("{}: trace ok, {} ticks", path.display(), trace.len());
    }
    if let Some(path) = a.book {
        let book = ContractBook::load(&path)?;
        println!("{}: book ok, {} contracts", path.display(), book.len());
    }
    if let Some(dir) = a.run {
        let log = SessionLog::load(&dir)?;
        log.validate()?;
        let report = SessionReport::load_json(dir.join(bench::REPORT_FILE))?;
        report.validate()?;
        if report.qos != qos(&log) || report.s_per_opt != time_per_option(&log) {
            return Err(Error::validation("report disagrees with its session log"));
        }
        println!("{}: run ok, {} records", dir.display(), log.records.len());
    }
    Ok(())
}

fn merge(a: MergeArgs) -> Result<()> {
    let nodes = a.nodes.iter().map(SessionLog::load).collect::<Result<Vec<_>>>()?;
    let merged = merge_scaleout(&nodes, a.mode)?;
    create_dir(&a.out_dir)?;
    merged.save(&a.out_dir)?;
    let fmt = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.6}"));
    println!(
        "{} nodes merged as {}: qos {}, s/opt {}",
        nodes.len(),
        merged.meta.platform,
        fmt(qos(&merged)),
        fmt(time_per_option(&merged))
    );
    Ok(())
}
