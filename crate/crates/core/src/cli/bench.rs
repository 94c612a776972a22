use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::{Duration, Instant};

use clap::Args;

use super::{create_dir, write_file, FeedArgs};
use crate::error::{Error, Result};
use crate::feed::{generate_trace, replay, Arrivals, Subscriber, SubscribeStats, SyntheticSpec, TickTrace};
use crate::metrics::{
    accuracy_vs_black_scholes, all_or_nothing_profile, load_power_trace, mean_power, session_window, CounterLog,
    LiveSource, PowerSample, PowerSampler, RaplDomain, SessionReport, SourceLabel,
};
use crate::pricer::{
    run_session, run_virtual, ContractBook, FeedSource, ModelKernel, ModelKind, Pacing, SessionConfig, SessionLog,
    SessionMeta, TickSource, TimedTraceSource, VecSource, VirtualCost,
};
use crate::pricing::{PricingParams, Screening};
use crate::vector::{KernelVariant, Precision};

pub const REPORT_FILE: &str = "report.json";
pub const SUMMARY_FILE: &str = "summary.csv";

/// Where mean power comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum PowerSpec {
    /// Package energy counters in a powercap directory.
    Rapl(PathBuf),
    /// `timestamp_ns,watts` file with timestamps on the session clock.
    Trace(PathBuf),
    /// Recorded energy counter readings on the session clock.
    CounterLog(PathBuf),
    Constant(f64),
}

impl FromStr for PowerSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, arg) = match s.split_once(':') {
            Some((k, a)) => (k, Some(a)),
            None => (s, None),
        };
        match (kind, arg) {
            ("rapl", None) => Ok(PowerSpec::Rapl(RaplDomain::DEFAULT_DIR.into())),
            ("rapl", Some(dir)) => Ok(PowerSpec::Rapl(dir.into())),
            ("trace", Some(p)) => Ok(PowerSpec::Trace(p.into())),
            ("counter-log", Some(p)) => Ok(PowerSpec::CounterLog(p.into())),
            ("constant", Some(w)) => w
                .parse()
                .map(PowerSpec::Constant)
                .map_err(|_| Error::argument(format!("bad constant power {w:?}"))),
            _ => Err(Error::argument(format!(
                "power must be rapl[:DIR], trace:FILE, counter-log:FILE or constant:WATTS, got {s:?}"
            ))),
        }
    }
}

impl fmt::Display for PowerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PowerSpec::Rapl(d) => write!(f, "rapl:{}", d.display()),
            PowerSpec::Trace(p) => write!(f, "trace:{}", p.display()),
            PowerSpec::CounterLog(p) => write!(f, "counter-log:{}", p.display()),
            PowerSpec::Constant(w) => write!(f, "constant:{w}"),
        }
    }
}

#[derive(Debug, Clone, Args)]
#[command(args_override_self = true)]
pub struct BenchArgs {
    #[arg(long, default_value = "MC")]
    pub model: ModelKind,
    /// Draws for MC, lattice steps for BT. Defaults to 1000000 and 5000.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value = "NOVECT")]
    pub variant: KernelVariant,
    #[arg(long, default_value = "64")]
    pub precision: Precision,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Frequency governor in effect; recorded only.
    #[arg(long, default_value = "unknown")]
    pub governor: String,
    /// Nodes x cores x threads per core. Defaults to 1x<workers>x1.
    #[arg(long)]
    pub platform: Option<String>,
    /// rapl[:DIR], trace:FILE, counter-log:FILE or constant:WATTS.
    #[arg(long, default_value = "rapl")]
    pub power: PowerSpec,
    /// Watts to assume when the counters cannot be read.
    #[arg(long)]
    pub power_fallback: Option<f64>,
    #[arg(long, default_value_t = 100)]
    pub power_period_ms: u64,
    /// Price ticks back to back: each tick waits until the book is done.
    #[arg(long)]
    pub burst: bool,
    /// Receive ticks over multicast from a replay of the trace run by this
    /// process.
    #[arg(long)]
    pub replay: bool,
    #[command(flatten)]
    pub feed: FeedArgs,
    #[arg(long, default_value_t = 1.0)]
    pub speed: f64,
    /// Simulate a kernel with this cost per contract instead of pricing.
    #[arg(long)]
    pub virtual_cost_us: Option<f64>,
    /// Cancellation granularity of the simulated kernel.
    #[arg(long)]
    pub checkpoint_us: Option<f64>,
    #[arg(long, default_value_t = 5489)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.05)]
    pub rate: f64,
    #[arg(long, default_value_t = 0.2)]
    pub volatility: f64,
    /// Sum every Monte Carlo draw instead of only those past the strike.
    #[arg(long)]
    pub no_screening: bool,
    /// Contract book CSV: id,kind,strike,expiry_years.
    #[arg(long)]
    pub book: Option<PathBuf>,
    #[arg(long, default_value_t = 16)]
    pub book_size: usize,
    /// LO:HI strike range of a generated book; defaults to 20% either side
    /// of the first tick's price.
    #[arg(long)]
    pub strike_grid: Option<String>,
    /// Comma separated expiries of a generated book, in years.
    #[arg(long, default_value = "0.25,0.5,1")]
    pub expiries: String,
    /// Tick trace; without one, `--ticks` ticks one second apart are used.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub ticks: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
}

/// What a bench run measures and how it is labelled.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelKind,
    pub n: usize,
    pub variant: KernelVariant,
    pub precision: Precision,
    pub workers: usize,
    pub governor: String,
    pub platform: String,
    pub power: PowerSpec,
}

impl RunConfig {
    pub fn from_args(a: &BenchArgs) -> Self {
        RunConfig {
            model: a.model,
            n: a.n.unwrap_or(match a.model {
                ModelKind::MonteCarlo => 1_000_000,
                ModelKind::BinomialTree => 5000,
            }),
            variant: a.variant,
            precision: a.precision,
            workers: a.workers,
            governor: a.governor.clone(),
            platform: a.platform.clone().unwrap_or_else(|| format!("1x{}x1", a.workers)),
            power: a.power.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::argument("--n must be at least 1"));
        }
        if self.workers == 0 {
            return Err(Error::argument("--workers must be at least 1"));
        }
        if let PowerSpec::Constant(w) = self.power {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::argument(format!("constant power must be non-negative, got {w}")));
            }
        }
        Ok(())
    }
}

fn parse_grid(s: &str) -> Result<(f64, f64)> {
    let bad = || Error::argument(format!("strike grid must be LO:HI, got {s:?}"));
    let (lo, hi) = s.split_once(':').ok_or_else(bad)?;
    Ok((lo.trim().parse().map_err(|_| bad())?, hi.trim().parse().map_err(|_| bad())?))
}

fn parse_expiries(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|e| e.trim().parse().map_err(|_| Error::argument(format!("bad expiry {e:?}"))))
        .collect()
}

fn micros(us: f64, what: &str) -> Result<u64> {
    if !(us.is_finite() && us > 0.0) {
        return Err(Error::argument(format!("{what} must be positive, got {us}")));
    }
    Ok((us * 1e3).round() as u64)
}

fn file_samples(power: &PowerSpec) -> Result<Option<(Vec<PowerSample>, SourceLabel)>> {
    Ok(match power {
        PowerSpec::Trace(p) => Some((load_power_trace(p, SourceLabel::PrePsu)?, SourceLabel::PrePsu)),
        PowerSpec::CounterLog(p) => Some((CounterLog::load(p)?.power_series(), SourceLabel::PreVrm)),
        _ => None,
    })
}

fn window_power(samples: &[PowerSample], log: &SessionLog) -> Result<f64> {
    let (start, end) = session_window(log);
    mean_power(samples, start, end)
}

pub(crate) fn bench(a: BenchArgs) -> Result<()> {
    let cfg = RunConfig::from_args(&a);
    cfg.validate()?;
    let params = PricingParams::new(a.rate, a.volatility)?;
    let trace = match &a.trace {
        Some(p) => TickTrace::load(p)?,
        None => generate_trace(&SyntheticSpec {
            arrivals: Arrivals::Fixed,
            rate: 1.0,
            count: a.ticks,
            seed: a.seed,
            ..SyntheticSpec::default()
        })?,
    };
    let book = match &a.book {
        Some(p) => ContractBook::load(p)?,
        None => {
            let (lo, hi) = match &a.strike_grid {
                Some(g) => parse_grid(g)?,
                None => {
                    let spot = trace
                        .ticks()
                        .first()
                        .ok_or_else(|| Error::argument("trace has no ticks"))?
                        .price;
                    (0.8 * spot, 1.2 * spot)
                }
            };
            ContractBook::generate(a.book_size, lo, hi, &parse_expiries(&a.expiries)?)?
        }
    };
    if !(a.speed.is_finite() && a.speed > 0.0) {
        return Err(Error::argument(format!("--speed must be positive, got {}", a.speed)));
    }
    let meta = SessionMeta {
        model: cfg.model.to_string(),
        n: cfg.n as u64,
        variant: cfg.variant.to_string(),
        precision: cfg.precision.bits(),
        governor: cfg.governor.clone(),
        platform: cfg.platform.clone(),
        workers: cfg.workers,
        mode: if a.replay {
            "replay".into()
        } else if a.burst {
            "burst".into()
        } else {
            "live".into()
        },
        seed: a.seed,
        rate: a.rate,
        volatility: a.volatility,
        book_size: book.len(),
        ..SessionMeta::default()
    };
    create_dir(&a.out_dir)?;

    let mut feed_stats = None;
    let (log, power_w, power_source) = match a.virtual_cost_us {
        Some(cost_us) => {
            let cost_ns = micros(cost_us, "--virtual-cost-us")?;
            let checkpoint_ns = match a.checkpoint_us {
                Some(us) => micros(us, "--checkpoint-us")?,
                None => cost_ns,
            };
            let log = run_virtual(trace.ticks(), &book, VirtualCost { cost_ns, checkpoint_ns }, cfg.workers, &meta)?;
            let (w, label) = match &cfg.power {
                PowerSpec::Constant(w) => (*w, format!("{} {}", SourceLabel::Model, cfg.power)),
                PowerSpec::Rapl(_) => match a.power_fallback {
                    Some(w) => (w, format!("{} fallback:{w}", SourceLabel::Model)),
                    None => {
                        return Err(Error::argument(
                            "virtual-time runs cannot read live counters; use --power constant:W or a file",
                        ))
                    }
                },
                other => {
                    let (samples, label) = file_samples(other)?.expect("file power source");
                    (window_power(&samples, &log)?, format!("{label} {other}"))
                }
            };
            (log, w, label)
        }
        None => {
            let kernel = ModelKernel {
                model: cfg.model,
                n: cfg.n,
                params,
                variant: cfg.variant,
                precision: cfg.precision,
                seed: a.seed,
                screening: if a.no_screening { Screening::Off } else { Screening::On },
            };
            kernel.validate()?;
            let live = match &cfg.power {
                PowerSpec::Rapl(dir) => {
                    let source = LiveSource::Rapl(RaplDomain::in_dir(dir));
                    match (source.check(), a.power_fallback) {
                        (Ok(()), _) => Some((source, format!("{} {}", SourceLabel::PreVrm, cfg.power))),
                        (Err(e), Some(w)) => {
                            eprintln!("optbench: {e}; assuming {w} W");
                            Some((
                                LiveSource::Constant {
                                    watts: w,
                                    label: SourceLabel::Model,
                                },
                                format!("{} fallback:{w}", SourceLabel::Model),
                            ))
                        }
                        (Err(e), None) => return Err(e),
                    }
                }
                PowerSpec::Constant(w) => Some((
                    LiveSource::Constant {
                        watts: *w,
                        label: SourceLabel::Model,
                    },
                    format!("{} {}", SourceLabel::Model, cfg.power),
                )),
                _ => None,
            };
            let origin = Instant::now();
            let (sampler, label) = match live {
                Some((source, label)) => {
                    let constant = match source {
                        LiveSource::Constant { watts, .. } => Some(watts),
                        LiveSource::Rapl(_) => None,
                    };
                    let period = Duration::from_millis(a.power_period_ms);
                    (Some((PowerSampler::start(source, period, origin)?, constant)), Some(label))
                }
                None => (None, None),
            };
            let session_cfg = SessionConfig {
                workers: cfg.workers,
                pacing: if a.burst { Pacing::ClosedLoop } else { Pacing::Open },
                meta: meta.clone(),
                origin: Some(origin),
            };
            let log = if a.replay {
                let (log, stats) = run_replayed(&a, &trace, &book, &kernel, &session_cfg)?;
                feed_stats = Some(stats);
                log
            } else if a.burst {
                run_session(&mut VecSource::new(trace.ticks().to_vec()), &book, &kernel, &session_cfg)?
            } else {
                run_session(&mut TimedTraceSource::new(&trace, a.speed)?, &book, &kernel, &session_cfg)?
            };
            let (w, label) = match (sampler, label) {
                (Some((sampler, constant)), Some(label)) => {
                    let recording = sampler.stop()?;
                    let w = match constant {
                        Some(w) => w,
                        None => window_power(&recording.samples, &log)?,
                    };
                    (w, label)
                }
                _ => {
                    let (samples, label) = file_samples(&cfg.power)?.expect("file power source");
                    (window_power(&samples, &log)?, format!("{label} {}", cfg.power))
                }
            };
            (log, w, label)
        }
    };

    let mut report = SessionReport::build(&log, power_w, &power_source);
    if a.virtual_cost_us.is_none() {
        report.accuracy = accuracy_vs_black_scholes(&log, &book, &params)?;
    }
    if let Some(s) = report.s_per_opt {
        if trace.len() >= 2 {
            report.profile = Some(all_or_nothing_profile(&trace, s * book.len() as f64)?);
        }
    }
    report.feed = feed_stats;

    log.save(&a.out_dir)?;
    report.save_json(a.out_dir.join(REPORT_FILE))?;
    write_file(
        &a.out_dir.join(SUMMARY_FILE),
        &format!("{}\n{}\n", SessionReport::CSV_HEADER, report.csv_row()),
    )?;
    println!("{}", SessionReport::CSV_HEADER);
    println!("{}", report.csv_row());
    if let Some(err) = &log.error {
        return Err(Error::SourceUnavailable(format!("session stopped early: {err}")));
    }
    Ok(())
}

/// Replays `trace` to the multicast group on a separate thread while the
/// session prices what arrives.
fn run_replayed(
    a: &BenchArgs,
    trace: &TickTrace,
    book: &ContractBook,
    kernel: &ModelKernel,
    cfg: &SessionConfig,
) -> Result<(SessionLog, SubscribeStats)> {
    let subscriber = Subscriber::join(a.feed.group_addr(), a.feed.interface)?;
    let replay_cfg = a.feed.replay_config(a.speed, a.burst);
    replay_cfg.validate()?;
    let longest_gap = trace.gaps_ns().into_iter().max().unwrap_or(0) as f64 * 1e-9 / a.speed;
    let idle = if a.burst {
        Duration::from_secs(2)
    } else {
        Duration::from_secs_f64(longest_gap + 2.0)
    };
    let mut source = FeedSource::new(subscriber, Some(trace.len()), Duration::from_secs(5), idle);
    let (log, sent) = std::thread::scope(|scope| {
        let sender = scope.spawn(|| replay(trace, &replay_cfg));
        let log = run_session(&mut source as &mut dyn TickSource, book, kernel, cfg);
        let sent = sender.join().unwrap_or_else(|_| Err(Error::SourceUnavailable("replay thread panicked".into())));
        (log, sent)
    });
    let sent = sent?;
    let log = log?;
    let stats = source.subscriber.finish(Some(sent.sent as u32));
    Ok((log, stats))
}
