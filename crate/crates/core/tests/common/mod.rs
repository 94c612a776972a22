#![allow(dead_code)]

use optbench::feed::MarketTick;
use optbench::pricer::{ContractBook, RecordStatus, SessionLog};
use optbench::pricing::OptionContract;

/// Textbook MT19937, written out separately from the library generator.
pub struct RefMt {
    mt: [u32; 624],
    mti: usize,
}

impl RefMt {
    pub fn new(seed: u32) -> Self {
        let mut mt = [0u32; 624];
        mt[0] = seed;
        for i in 1..624 {
            mt[i] = 1812433253u32
                .wrapping_mul(mt[i - 1] ^ (mt[i - 1] >> 30))
                .wrapping_add(i as u32);
        }
        RefMt { mt, mti: 624 }
    }

    pub fn next(&mut self) -> u32 {
        const UPPER: u32 = 0x8000_0000;
        const LOWER: u32 = 0x7fff_ffff;
        const MATRIX_A: u32 = 0x9908_b0df;
        if self.mti >= 624 {
            for k in 0..624 {
                let y = (self.mt[k] & UPPER) | (self.mt[(k + 1) % 624] & LOWER);
                let mag = if y & 1 == 1 { MATRIX_A } else { 0 };
                self.mt[k] = self.mt[(k + 397) % 624] ^ (y >> 1) ^ mag;
            }
            self.mti = 0;
        }
        let mut y = self.mt[self.mti];
        self.mti += 1;
        y ^= y >> 11;
        y ^= (y << 7) & 0x9d2c_5680;
        y ^= (y << 15) & 0xefc6_0000;
        y ^= y >> 18;
        y
    }

    pub fn below(&mut self, n: u32) -> u32 {
        self.next() % n
    }
}

/// One pricing as the brute-force scheduler sees it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Outcome {
    pub tick: usize,
    pub contract: usize,
    pub worker: usize,
    pub start: Option<u64>,
    pub end: u64,
    pub success: bool,
}

/// Walks each worker through the ticks one contract at a time.
///
/// A worker that becomes free at `t` takes the newest tick that has arrived
/// by `t` and that it has not handled yet; the older ones it passes over are
/// abandoned at the arrival of the tick after them. Inside a tick, a
/// contract whose start is at or past the next arrival is never started. A
/// started contract succeeds if it finishes no later than the next arrival.
/// Otherwise it is noticed at the first checkpoint at or after the arrival,
/// or at its finish if that comes first.
pub fn brute_force(arrivals: &[u64], book_len: usize, workers: usize, cost: u64, checkpoint: u64) -> Vec<Outcome> {
    let mut out = Vec::new();
    let base = book_len / workers;
    let extra = book_len % workers;
    let mut first = 0;
    for w in 0..workers {
        let size = base + usize::from(w < extra);
        let contracts = first..first + size;
        first += size;
        if size == 0 {
            continue;
        }
        let mut t = 0u64;
        let mut handled = 0usize;
        while handled < arrivals.len() {
            let newest = arrivals.iter().rposition(|&a| a <= t);
            let i = match newest {
                Some(i) if i >= handled => i,
                _ => {
                    t = arrivals[handled];
                    continue;
                }
            };
            for skipped in handled..i {
                for c in contracts.clone() {
                    out.push(Outcome {
                        tick: skipped,
                        contract: c,
                        worker: w,
                        start: None,
                        end: arrivals[skipped + 1],
                        success: false,
                    });
                }
            }
            let next = arrivals.get(i + 1).copied();
            let mut stopped = false;
            for c in contracts.clone() {
                let s = t;
                if stopped || next.is_some_and(|n| s >= n) {
                    out.push(Outcome {
                        tick: i,
                        contract: c,
                        worker: w,
                        start: None,
                        end: next.unwrap(),
                        success: false,
                    });
                    stopped = true;
                    continue;
                }
                let f = s + cost;
                match next {
                    Some(n) if f > n => {
                        let noticed = if checkpoint == 0 {
                            u64::MAX
                        } else {
                            s + (n - s).div_ceil(checkpoint) * checkpoint
                        };
                        let end = noticed.min(f);
                        out.push(Outcome {
                            tick: i,
                            contract: c,
                            worker: w,
                            start: Some(s),
                            end,
                            success: false,
                        });
                        t = end;
                        stopped = true;
                    }
                    _ => {
                        out.push(Outcome {
                            tick: i,
                            contract: c,
                            worker: w,
                            start: Some(s),
                            end: f,
                            success: true,
                        });
                        t = f;
                    }
                }
            }
            handled = i + 1;
        }
    }
    out.sort();
    out
}

pub fn outcomes(log: &SessionLog, book: &ContractBook) -> Vec<Outcome> {
    let mut out: Vec<Outcome> = log
        .records
        .iter()
        .map(|r| Outcome {
            tick: r.tick_seq as usize,
            contract: book.index_of(&r.contract_id).expect("known contract"),
            worker: r.worker_id,
            start: r.start_ns,
            end: r.end_ns,
            success: r.status == RecordStatus::Success,
        })
        .collect();
    out.sort();
    out
}

pub fn ticks_at(arrivals: &[u64]) -> Vec<MarketTick> {
    arrivals
        .iter()
        .enumerate()
        .map(|(i, &a)| MarketTick::new(i as u32, a, "FB", 100.0 + i as f64 * 0.01).unwrap())
        .collect()
}

pub fn book_of(len: usize) -> ContractBook {
    ContractBook::new(
        (0..len)
            .map(|i| OptionContract::new(format!("K{i:04}"), optbench::pricing::OptionKind::Call, 90.0 + i as f64, 0.5).unwrap())
            .collect(),
    )
    .unwrap()
}

/// Random arrival gaps on the scale of the per-worker book time, with some
/// exact ties and some gaps landing on multiples of the cost.
pub fn scenario(rng: &mut RefMt) -> (Vec<u64>, usize, usize, u64, u64) {
    let workers = 1 + rng.below(8) as usize;
    let book_len = 1 + rng.below(40) as usize;
    let cost = 1_000 + u64::from(rng.below(1_000_000));
    let checkpoint = match rng.below(4) {
        0 => 0,
        1 => cost,
        2 => cost / 4,
        _ => 1 + u64::from(rng.below(cost as u32)),
    };
    let per_worker = book_len.div_ceil(workers) as u64;
    let ticks = 2 + rng.below(40) as usize;
    let mut t = u64::from(rng.below(1_000));
    let mut arrivals = vec![t];
    for _ in 1..ticks {
        let gap = match rng.below(6) {
            0 => 0,
            1 => cost * u64::from(1 + rng.below(per_worker as u32 + 1)),
            _ => u64::from(rng.below((2 * per_worker * cost) as u32)),
        };
        t += gap;
        arrivals.push(t);
    }
    (arrivals, book_len, workers, cost, checkpoint)
}
