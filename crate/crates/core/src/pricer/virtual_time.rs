//! Discrete-event version of the pricer on a virtual clock.
//!
//! Kernels are replaced by a fixed cost per contract and a cancellation
//! check every `checkpoint_ns` of kernel time, so the whole schedule is a
//! pure function of the arrival times. Events that share a timestamp are
//! ordered: kernel completion, then tick arrival, then cancellation check,
//! then the worker choosing what to do next. A kernel that finishes exactly
//! when the next tick arrives therefore succeeds, while a check or a fresh
//! start at that instant already sees the new tick.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use super::{partition_book, ContractBook, PricingRecord, RecordStatus, SessionLog, SessionMeta, TickArrival};
use crate::error::{Error, Result};
use crate::feed::MarketTick;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VirtualCost {
    /// Kernel time per contract.
    pub cost_ns: u64,
    /// Kernel time between cancellation checks; 0 disables them.
    pub checkpoint_ns: u64,
}

const DONE: u8 = 0;
const ARRIVAL: u8 = 1;
const POLL: u8 = 2;
const READY: u8 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Event {
    time: u64,
    priority: u8,
    order: u64,
    /// Tick index for arrivals, worker id otherwise.
    target: usize,
    token: u64,
}

struct Flight {
    start: u64,
    finish: u64,
}

struct Worker {
    range: std::ops::Range<usize>,
    /// Ticks before this index have been taken or skipped.
    handled: usize,
    /// Tick being worked on and the next position in `range`.
    current: Option<(usize, usize)>,
    flight: Option<Flight>,
    token: u64,
    ready_pending: bool,
}

struct Sim<'a> {
    heap: BinaryHeap<Reverse<Event>>,
    order: u64,
    arrivals: Vec<u64>,
    ticks: &'a [MarketTick],
    latest: Option<usize>,
    book: &'a ContractBook,
    cost: VirtualCost,
    records: Vec<(usize, PricingRecord)>,
}

impl Sim<'_> {
    fn push(&mut self, time: u64, priority: u8, target: usize, token: u64) {
        self.order += 1;
        self.heap.push(Reverse(Event {
            time,
            priority,
            order: self.order,
            target,
            token,
        }));
    }

    fn superseded(&self, tick: usize) -> bool {
        self.latest.is_some_and(|l| l > tick)
    }

    fn abandon_unstarted(&mut self, worker_id: usize, tick: usize, from: usize, to: usize) {
        let end = self.arrivals[tick + 1];
        let seq = self.ticks[tick].seq;
        for index in from..to {
            let id = &self.book.contracts()[index].id;
            self.records.push((index, PricingRecord::abandoned(id, seq, None, end, worker_id)));
        }
    }

    fn schedule_ready(&mut self, w: &mut Worker, worker_id: usize, now: u64) {
        if !w.ready_pending {
            w.ready_pending = true;
            self.push(now, READY, worker_id, 0);
        }
    }

    fn ready(&mut self, w: &mut Worker, worker_id: usize, now: u64) {
        w.ready_pending = false;
        if w.flight.is_some() {
            return;
        }
        if let Some((tick, pos)) = w.current {
            let at = w.range.start + pos;
            if at < w.range.end && self.superseded(tick) {
                self.abandon_unstarted(worker_id, tick, at, w.range.end);
                w.current = None;
            } else if at < w.range.end {
                self.start(w, worker_id, now);
                return;
            } else {
                w.current = None;
            }
        }
        let Some(latest) = self.latest else { return };
        if w.handled > latest {
            return;
        }
        for skipped in w.handled..latest {
            self.abandon_unstarted(worker_id, skipped, w.range.start, w.range.end);
        }
        w.handled = latest + 1;
        if !w.range.is_empty() {
            w.current = Some((latest, 0));
            self.start(w, worker_id, now);
        }
    }

    fn start(&mut self, w: &mut Worker, worker_id: usize, now: u64) {
        let finish = now + self.cost.cost_ns;
        w.token += 1;
        w.flight = Some(Flight { start: now, finish });
        self.push(finish, DONE, worker_id, w.token);
        let q = self.cost.checkpoint_ns;
        if q > 0 && now + q < finish {
            self.push(now + q, POLL, worker_id, w.token);
        }
    }

    fn finish_flight(&mut self, w: &mut Worker, worker_id: usize, end: u64, success: bool) {
        let flight = w.flight.take().expect("kernel in flight");
        let (tick, pos) = w.current.expect("tick in progress");
        let index = w.range.start + pos;
        let seq = self.ticks[tick].seq;
        let id = &self.book.contracts()[index].id;
        let record = if success {
            PricingRecord {
                contract_id: id.clone(),
                tick_seq: seq,
                start_ns: Some(flight.start),
                end_ns: end,
                worker_id,
                status: RecordStatus::Success,
                price: Some(self.ticks[tick].price),
                error: None,
            }
        } else {
            PricingRecord::abandoned(id, seq, Some(flight.start), end, worker_id)
        };
        self.records.push((index, record));
        w.current = Some((tick, pos + 1));
        w.token += 1;
        self.schedule_ready(w, worker_id, end);
    }
}

/// Runs the pricer over `ticks` on a virtual clock whose zero is the first
/// tick's timestamp. Successful records carry the tick's spot as price.
pub fn run_virtual(
    ticks: &[MarketTick],
    book: &ContractBook,
    cost: VirtualCost,
    workers: usize,
    meta: &SessionMeta,
) -> Result<SessionLog> {
    let parts = partition_book(book, workers)?;
    if let Some(i) = ticks.windows(2).position(|w| w[1].timestamp_ns < w[0].timestamp_ns) {
        return Err(Error::validation(format!("tick {} arrives before its predecessor", i + 1)));
    }
    let origin = ticks.first().map_or(0, |t| t.timestamp_ns);
    let arrivals: Vec<u64> = ticks.iter().map(|t| t.timestamp_ns - origin).collect();

    let mut sim = Sim {
        heap: BinaryHeap::new(),
        order: 0,
        arrivals,
        ticks,
        latest: None,
        book,
        cost,
        records: Vec::with_capacity(ticks.len() * book.len()),
    };
    let mut pool: Vec<Worker> = parts
        .into_iter()
        .map(|range| Worker {
            range,
            handled: 0,
            current: None,
            flight: None,
            token: 0,
            ready_pending: false,
        })
        .collect();
    for k in 0..ticks.len() {
        let t = sim.arrivals[k];
        sim.push(t, ARRIVAL, k, 0);
    }

    while let Some(Reverse(ev)) = sim.heap.pop() {
        match ev.priority {
            ARRIVAL => {
                sim.latest = Some(ev.target);
                for (id, w) in pool.iter_mut().enumerate() {
                    if w.flight.is_none() {
                        sim.schedule_ready(w, id, ev.time);
                    }
                }
            }
            READY => {
                let w = &mut pool[ev.target];
                sim.ready(w, ev.target, ev.time);
            }
            DONE => {
                let w = &mut pool[ev.target];
                if w.token != ev.token {
                    continue;
                }
                let (tick, _) = w.current.expect("tick in progress");
                let success = !sim.superseded(tick);
                sim.finish_flight(w, ev.target, ev.time, success);
            }
            POLL => {
                let w = &mut pool[ev.target];
                if w.token != ev.token {
                    continue;
                }
                let (tick, _) = w.current.expect("tick in progress");
                if sim.superseded(tick) {
                    sim.finish_flight(w, ev.target, ev.time, false);
                } else {
                    let next = ev.time + sim.cost.checkpoint_ns;
                    if next < w.flight.as_ref().expect("kernel in flight").finish {
                        sim.push(next, POLL, ev.target, w.token);
                    }
                }
            }
            _ => unreachable!("unknown event priority"),
        }
    }

    let mut keyed = sim.records;
    keyed.sort_by_key(|(index, r)| (r.tick_seq, *index));
    let mut meta = meta.clone();
    meta.workers = workers;
    meta.book_size = book.len();
    meta.mode = "virtual".into();
    Ok(SessionLog {
        meta,
        ticks: ticks
            .iter()
            .zip(&sim.arrivals)
            .map(|(t, &a)| TickArrival {
                seq: t.seq,
                arrival_ns: a,
                spot: t.price,
            })
            .collect(),
        records: keyed.into_iter().map(|(_, r)| r).collect(),
        error: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::qos;
    use crate::pricer::worst_core_elapsed;
    use crate::pricing::{OptionContract, OptionKind};

    fn book(n: usize) -> ContractBook {
        ContractBook::new(
            (0..n)
                .map(|i| OptionContract::new(format!("k{i:03}"), OptionKind::Put, 50.0 + i as f64, 0.5).unwrap())
                .collect(),
        )
        .unwrap()
    }

    fn ticks_at(ns: &[u64]) -> Vec<MarketTick> {
        ns.iter()
            .enumerate()
            .map(|(i, &t)| MarketTick::new(i as u32, t, "FB", 20.0 + i as f64).unwrap())
            .collect()
    }

    const MS: u64 = 1_000_000;

    #[test]
    fn no_contention_means_full_qos() {
        let log = run_virtual(
            &ticks_at(&[0]),
            &book(4),
            VirtualCost {
                cost_ns: MS,
                checkpoint_ns: 0,
            },
            2,
            &SessionMeta::default(),
        )
        .unwrap();
        assert_eq!(log.counts().success, 4);
        assert_eq!(qos(&log), Some(1.0));
    }

    #[test]
    fn hand_simulated_two_ticks() {
        // One worker, 10 ms per contract, second tick after 1 ms, checks
        // every 2 ms: the first kernel is cancelled at 2 ms, the other three
        // never start.
        let log = run_virtual(
            &ticks_at(&[0, MS]),
            &book(4),
            VirtualCost {
                cost_ns: 10 * MS,
                checkpoint_ns: 2 * MS,
            },
            1,
            &SessionMeta::default(),
        )
        .unwrap();
        let first: Vec<_> = log.records.iter().filter(|r| r.tick_seq == 0).collect();
        assert_eq!(first[0].start_ns, Some(0));
        assert_eq!(first[0].end_ns, 2 * MS);
        for r in &first[1..] {
            assert_eq!((r.start_ns, r.end_ns, r.status), (None, MS, RecordStatus::Abandoned));
        }
        let second: Vec<_> = log.records.iter().filter(|r| r.tick_seq == 1).collect();
        let starts: Vec<_> = second.iter().map(|r| r.start_ns.unwrap()).collect();
        assert_eq!(starts, [2 * MS, 12 * MS, 22 * MS, 32 * MS]);
        assert!(second.iter().all(|r| r.status == RecordStatus::Success && r.price == Some(21.0)));
    }

    #[test]
    fn completion_at_arrival_counts_as_success() {
        let log = run_virtual(
            &ticks_at(&[0, MS]),
            &book(2),
            VirtualCost {
                cost_ns: MS,
                checkpoint_ns: MS / 4,
            },
            1,
            &SessionMeta::default(),
        )
        .unwrap();
        let statuses: Vec<_> = log.records.iter().map(|r| r.status).collect();
        assert_eq!(
            statuses,
            [RecordStatus::Success, RecordStatus::Abandoned, RecordStatus::Success, RecordStatus::Success]
        );
        assert_eq!(log.records[1].start_ns, None);
    }

    #[test]
    fn late_completion_without_checkpoints_is_discarded() {
        let log = run_virtual(
            &ticks_at(&[0, MS]),
            &book(1),
            VirtualCost {
                cost_ns: 3 * MS,
                checkpoint_ns: 0,
            },
            1,
            &SessionMeta::default(),
        )
        .unwrap();
        let r = &log.records[0];
        assert_eq!((r.status, r.start_ns, r.end_ns), (RecordStatus::Abandoned, Some(0), 3 * MS));
        assert_eq!(log.records[1].start_ns, Some(3 * MS));
    }

    #[test]
    fn tuned_to_abandon_half() {
        // Gaps of 2 ms leave time for half of a 4 ms book; the last two
        // ticks arrive together so the third is skipped whole.
        let log = run_virtual(
            &ticks_at(&[0, 2 * MS, 4 * MS, 4 * MS]),
            &book(4),
            VirtualCost {
                cost_ns: MS,
                checkpoint_ns: MS / 8,
            },
            1,
            &SessionMeta::default(),
        )
        .unwrap();
        assert_eq!(log.counts().total(), 16);
        assert_eq!(qos(&log), Some(0.5));
    }

    #[test]
    fn steady_state_span_is_the_largest_partition() {
        let cost = 3 * MS;
        for workers in 1..=8 {
            let ticks = ticks_at(&[0, 10_000 * MS, 20_000 * MS]);
            let log = run_virtual(
                &ticks,
                &book(617),
                VirtualCost {
                    cost_ns: cost,
                    checkpoint_ns: MS,
                },
                workers,
                &SessionMeta::default(),
            )
            .unwrap();
            let bound = 617usize.div_ceil(workers) as f64 * cost as f64 * 1e-9 * 1.1;
            for t in 0..3 {
                assert!(worst_core_elapsed(&log, t).unwrap() <= bound);
            }
            assert_eq!(qos(&log), Some(1.0));
        }
    }

    #[test]
    fn slow_kernel_on_a_long_session_gives_low_qos() {
        use crate::feed::{generate_trace, Arrivals, SyntheticSpec};
        // Per-contract cost chosen so that, with exponential gaps of mean
        // 2.3 s, the expected share of contracts finishing inside their gap,
        // mean over k of exp(-k c / 2.3) for a 78-deep queue, is 13%.
        let trace = generate_trace(&SyntheticSpec {
            arrivals: Arrivals::Poisson,
            rate: 1.0 / 2.3,
            count: 10_156,
            seed: 5489,
            ..SyntheticSpec::default()
        })
        .unwrap();
        let expected = |c: f64| (1..=78).map(|k| (-(k as f64) * c / 2.3).exp()).sum::<f64>() / 78.0;
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if expected(mid) > 0.13 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let cost_ns = (lo * 1e9) as u64;
        let log = run_virtual(
            trace.ticks(),
            &book(617),
            VirtualCost {
                cost_ns,
                checkpoint_ns: cost_ns / 16,
            },
            8,
            &SessionMeta::default(),
        )
        .unwrap();
        let q = qos(&log).unwrap();
        assert!((0.125..=0.135).contains(&q), "qos {q}");
    }
}
