use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Condvar, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use super::{partition_book, ContractBook, PricingKernel, PricingRecord, RecordStatus, SessionLog, SessionMeta, TickArrival};
use crate::error::{Error, Result};
use crate::feed::{MarketTick, Subscriber, TickTrace};
use crate::pricing::SpotPrice;

/// Blocking supply of ticks. `Ok(None)` ends the session normally.
pub trait TickSource {
    fn next_tick(&mut self) -> Result<Option<MarketTick>>;
}

/// Hands out a fixed list immediately.
#[derive(Debug, Clone)]
pub struct VecSource {
    ticks: std::vec::IntoIter<MarketTick>,
}

impl VecSource {
    pub fn new(ticks: Vec<MarketTick>) -> Self {
        VecSource { ticks: ticks.into_iter() }
    }
}

impl TickSource for VecSource {
    fn next_tick(&mut self) -> Result<Option<MarketTick>> {
        Ok(self.ticks.next())
    }
}

/// Releases each trace tick at its recorded offset divided by `speed`,
/// measured from the first call.
#[derive(Debug)]
pub struct TimedTraceSource {
    ticks: Vec<MarketTick>,
    next: usize,
    speed: f64,
    origin: Option<Instant>,
}

impl TimedTraceSource {
    pub fn new(trace: &TickTrace, speed: f64) -> Result<Self> {
        if !(speed.is_finite() && speed > 0.0) {
            return Err(Error::argument(format!("replay speed must be positive, got {speed}")));
        }
        Ok(TimedTraceSource {
            ticks: trace.ticks().to_vec(),
            next: 0,
            speed,
            origin: None,
        })
    }
}

impl TickSource for TimedTraceSource {
    fn next_tick(&mut self) -> Result<Option<MarketTick>> {
        let Some(tick) = self.ticks.get(self.next).cloned() else {
            return Ok(None);
        };
        let origin = *self.origin.get_or_insert_with(Instant::now);
        let offset = (tick.timestamp_ns - self.ticks[0].timestamp_ns) as f64 / self.speed;
        let due = origin + Duration::from_nanos(offset.round() as u64);
        while let Some(wait) = due.checked_duration_since(Instant::now()).filter(|d| !d.is_zero()) {
            std::thread::sleep(wait);
        }
        self.next += 1;
        Ok(Some(tick))
    }
}

/// Ticks from a multicast subscription. Ends after `expected` ticks (if
/// given) or when the feed stays silent for `idle`; the first tick may
/// take up to `first_wait`.
#[derive(Debug)]
pub struct FeedSource {
    pub subscriber: Subscriber,
    pub expected: Option<usize>,
    pub first_wait: Duration,
    pub idle: Duration,
    seen: usize,
}

impl FeedSource {
    pub fn new(subscriber: Subscriber, expected: Option<usize>, first_wait: Duration, idle: Duration) -> Self {
        FeedSource {
            subscriber,
            expected,
            first_wait,
            idle,
            seen: 0,
        }
    }
}

impl TickSource for FeedSource {
    fn next_tick(&mut self) -> Result<Option<MarketTick>> {
        if self.expected.is_some_and(|n| self.seen >= n) {
            return Ok(None);
        }
        let wait = if self.seen == 0 { self.first_wait } else { self.idle };
        let tick = self.subscriber.recv(wait)?;
        if tick.is_some() {
            self.seen += 1;
        } else if self.seen == 0 {
            return Err(Error::SourceUnavailable(format!(
                "no ticks on {} within {:?}",
                self.subscriber.group(),
                self.first_wait
            )));
        }
        Ok(tick)
    }
}

/// When the intake takes the next tick from the source.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pacing {
    /// As soon as the source yields it; the source sets the timing.
    Open,
    /// Only after every worker has finished the current tick, so ticks are
    /// priced back to back and nothing is abandoned.
    ClosedLoop,
}

#[derive(Debug, Clone)]
pub struct SessionConfig {
    pub workers: usize,
    pub pacing: Pacing,
    pub meta: SessionMeta,
    /// Zero of the log's timestamps; defaults to the session start. Share
    /// it with a power sampler to put both on one clock.
    pub origin: Option<Instant>,
}

struct Job {
    seq: u32,
    spot: SpotPrice,
    arrival_ns: u64,
}

struct Intake {
    /// Published ticks; generation g is `jobs[g - 1]`.
    jobs: Vec<Job>,
    /// Workers done with each generation.
    finished: Vec<usize>,
    closed: bool,
}

struct Shared {
    /// Newest published generation, 0 before the first tick.
    latest: AtomicU64,
    abort: AtomicBool,
    intake: Mutex<Intake>,
    changed: Condvar,
    origin: Instant,
}

impl Shared {
    fn now_ns(&self) -> u64 {
        self.origin.elapsed().as_nanos() as u64
    }

    fn lock(&self) -> MutexGuard<'_, Intake> {
        self.intake.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn superseded(&self, generation: u64) -> bool {
        self.latest.load(Ordering::Acquire) != generation || self.abort.load(Ordering::Acquire)
    }
}

/// Prices every contract of `book` on every tick from `source` with
/// `cfg.workers` threads, each owning a contiguous slice of the book and
/// working through it in order.
///
/// A newer tick supersedes the older one: workers cancel in-flight work at
/// the kernel's next checkpoint, discard work that completes late, and
/// mark everything not yet started as abandoned. The final tick always runs
/// to completion. A failing source stops the session; the partial log is
/// returned with `error` set.
pub fn run_session(
    source: &mut dyn TickSource,
    book: &ContractBook,
    kernel: &dyn PricingKernel,
    cfg: &SessionConfig,
) -> Result<SessionLog> {
    let parts = partition_book(book, cfg.workers)?;
    let shared = Shared {
        latest: AtomicU64::new(0),
        abort: AtomicBool::new(false),
        intake: Mutex::new(Intake {
            jobs: Vec::new(),
            finished: Vec::new(),
            closed: false,
        }),
        changed: Condvar::new(),
        origin: cfg.origin.unwrap_or_else(Instant::now),
    };

    let mut stream_error = None;
    let buffers: Vec<Vec<(usize, PricingRecord)>> = std::thread::scope(|scope| {
        let handles: Vec<_> = parts
            .iter()
            .enumerate()
            .map(|(worker_id, range)| {
                let shared = &shared;
                let range = range.clone();
                scope.spawn(move || work(shared, book, kernel, worker_id, range))
            })
            .collect();

        stream_error = intake(source, &shared, cfg);
        {
            let mut state = shared.lock();
            state.closed = true;
        }
        shared.changed.notify_all();
        handles
            .into_iter()
            .map(|h| h.join().expect("pricing worker panicked"))
            .collect()
    });

    let mut keyed: Vec<(usize, PricingRecord)> = buffers.into_iter().flatten().collect();
    keyed.sort_by_key(|(index, r)| (r.tick_seq, *index));
    let state = shared.intake.into_inner().unwrap_or_else(|p| p.into_inner());
    let mut meta = cfg.meta.clone();
    meta.workers = cfg.workers;
    meta.book_size = book.len();
    Ok(SessionLog {
        meta,
        ticks: state
            .jobs
            .iter()
            .map(|j| TickArrival {
                seq: j.seq,
                arrival_ns: j.arrival_ns,
                spot: j.spot.value(),
            })
            .collect(),
        records: keyed.into_iter().map(|(_, r)| r).collect(),
        error: stream_error,
    })
}

fn intake(source: &mut dyn TickSource, shared: &Shared, cfg: &SessionConfig) -> Option<String> {
    loop {
        let tick = match source.next_tick() {
            Ok(Some(tick)) => tick,
            Ok(None) => return None,
            Err(e) => {
                shared.abort.store(true, Ordering::Release);
                return Some(e.to_string());
            }
        };
        let spot = match SpotPrice::new(tick.price) {
            Ok(spot) => spot,
            Err(e) => {
                shared.abort.store(true, Ordering::Release);
                return Some(format!("tick {}: {e}", tick.seq));
            }
        };
        let generation = {
            let mut state = shared.lock();
            state.jobs.push(Job {
                seq: tick.seq,
                spot,
                arrival_ns: shared.now_ns(),
            });
            state.finished.push(0);
            let generation = state.jobs.len() as u64;
            shared.latest.store(generation, Ordering::Release);
            generation
        };
        shared.changed.notify_all();
        if cfg.pacing == Pacing::ClosedLoop {
            let mut state = shared.lock();
            while state.finished[generation as usize - 1] < cfg.workers {
                state = shared.changed.wait(state).unwrap_or_else(|p| p.into_inner());
            }
        }
    }
}

fn work(
    shared: &Shared,
    book: &ContractBook,
    kernel: &dyn PricingKernel,
    worker_id: usize,
    range: std::ops::Range<usize>,
) -> Vec<(usize, PricingRecord)> {
    let contracts = book.contracts();
    let mut out = Vec::new();
    let mut done: u64 = 0;
    loop {
        // Wait for a generation newer than the last one handled.
        let (generation, seq, spot, skipped) = {
            let mut state = shared.lock();
            while state.jobs.len() as u64 == done && !state.closed {
                state = shared.changed.wait(state).unwrap_or_else(|p| p.into_inner());
            }
            if state.jobs.len() as u64 == done || shared.abort.load(Ordering::Acquire) {
                break;
            }
            let generation = state.jobs.len() as u64;
            // Ticks that arrived and were superseded while this worker was
            // busy: (seq, arrival of the tick that replaced it).
            let skipped: Vec<(u32, u64)> = ((done + 1)..generation)
                .map(|g| (state.jobs[g as usize - 1].seq, state.jobs[g as usize].arrival_ns))
                .collect();
            let job = &state.jobs[generation as usize - 1];
            (generation, job.seq, job.spot, skipped)
        };
        for (skipped_seq, end) in skipped {
            for index in range.clone() {
                out.push((index, PricingRecord::abandoned(&contracts[index].id, skipped_seq, None, end, worker_id)));
            }
        }

        for index in range.clone() {
            let contract = &contracts[index];
            if shared.superseded(generation) {
                let end = superseded_at(shared, generation);
                for rest in index..range.end {
                    out.push((rest, PricingRecord::abandoned(&contracts[rest].id, seq, None, end, worker_id)));
                }
                break;
            }
            let start = shared.now_ns();
            let result = kernel.price(contract, spot, &mut || shared.superseded(generation));
            let end = shared.now_ns();
            let record = match result {
                Ok(Some(price)) if !shared.superseded(generation) => PricingRecord {
                    contract_id: contract.id.clone(),
                    tick_seq: seq,
                    start_ns: Some(start),
                    end_ns: end,
                    worker_id,
                    status: RecordStatus::Success,
                    price: Some(price),
                    error: None,
                },
                Ok(_) => PricingRecord::abandoned(&contract.id, seq, Some(start), end, worker_id),
                Err(e) => PricingRecord {
                    contract_id: contract.id.clone(),
                    tick_seq: seq,
                    start_ns: Some(start),
                    end_ns: end,
                    worker_id,
                    status: RecordStatus::Errored,
                    price: None,
                    error: Some(e.to_string()),
                },
            };
            out.push((index, record));
        }

        done = generation;
        {
            let mut state = shared.lock();
            state.finished[generation as usize - 1] += 1;
        }
        shared.changed.notify_all();
    }
    out
}

/// Arrival time of the tick after `generation`, or now if the session was
/// aborted instead.
fn superseded_at(shared: &Shared, generation: u64) -> u64 {
    let state = shared.lock();
    match state.jobs.get(generation as usize) {
        Some(next) => next.arrival_ns,
        None => shared.now_ns(),
    }
}
