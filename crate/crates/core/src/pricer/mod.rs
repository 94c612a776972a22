//! The event-driven pricer: every tick re-prices the whole contract book
//! across a worker pool, and work for a tick that has been superseded by a
//! newer one is abandoned.

mod book;
mod kernel;
mod session;
mod virtual_time;

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use book::{partition_book, ContractBook};
pub use kernel::{MockKernel, ModelKernel, ModelKind, PricingKernel};
pub use session::{run_session, FeedSource, Pacing, SessionConfig, TickSource, TimedTraceSource, VecSource};
pub use virtual_time::{run_virtual, VirtualCost};

pub const SESSION_META_FILE: &str = "session_meta.json";
pub const SESSION_LOG_FILE: &str = "session_log.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordStatus {
    Success,
    Abandoned,
    Errored,
}

/// One attempted pricing of one contract for one tick.
///
/// Times are nanoseconds from session start. `start_ns` is `None` for work
/// that was abandoned before it began; its `end_ns` is then the arrival of
/// the tick that superseded it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricingRecord {
    pub contract_id: String,
    pub tick_seq: u32,
    pub start_ns: Option<u64>,
    pub end_ns: u64,
    pub worker_id: usize,
    pub status: RecordStatus,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub price: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

impl PricingRecord {
    pub(crate) fn abandoned(contract_id: &str, tick_seq: u32, start_ns: Option<u64>, end_ns: u64, worker_id: usize) -> Self {
        PricingRecord {
            contract_id: contract_id.to_string(),
            tick_seq,
            start_ns,
            end_ns,
            worker_id,
            status: RecordStatus::Abandoned,
            price: None,
            error: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TickArrival {
    pub seq: u32,
    pub arrival_ns: u64,
    pub spot: f64,
}

/// Run description carried into logs and reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionMeta {
    pub model: String,
    pub n: u64,
    pub variant: String,
    pub precision: u32,
    pub governor: String,
    /// Nodes x cores x threads-per-core, e.g. `1x8x1`.
    pub platform: String,
    pub workers: usize,
    pub scheduler: String,
    pub mode: String,
    pub seed: u64,
    pub rate: f64,
    pub volatility: f64,
    pub book_size: usize,
}

impl Default for SessionMeta {
    fn default() -> Self {
        SessionMeta {
            model: "MC".into(),
            n: 0,
            variant: "NOVECT".into(),
            precision: 64,
            governor: "unknown".into(),
            platform: "1x1x1".into(),
            workers: 1,
            scheduler: "static-fifo".into(),
            mode: "live".into(),
            seed: 0,
            rate: 0.0,
            volatility: 0.0,
            book_size: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusCounts {
    pub success: usize,
    pub abandoned: usize,
    pub errored: usize,
}

impl StatusCounts {
    pub fn total(&self) -> usize {
        self.success + self.abandoned + self.errored
    }
}

/// Everything a session produced, ordered by tick then book position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionLog {
    pub meta: SessionMeta,
    pub ticks: Vec<TickArrival>,
    pub records: Vec<PricingRecord>,
    /// Set when the tick stream failed and the session stopped early.
    pub error: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct MetaFile {
    meta: SessionMeta,
    ticks: Vec<TickArrival>,
    error: Option<String>,
    counts: StatusCounts,
}

impl SessionLog {
    pub fn counts(&self) -> StatusCounts {
        let mut counts = StatusCounts::default();
        for r in &self.records {
            match r.status {
                RecordStatus::Success => counts.success += 1,
                RecordStatus::Abandoned => counts.abandoned += 1,
                RecordStatus::Errored => counts.errored += 1,
            }
        }
        counts
    }

    pub fn tick(&self, seq: u32) -> Option<&TickArrival> {
        self.ticks.iter().find(|t| t.seq == seq)
    }

    /// Checks that no (tick, contract) pair repeats and that every record
    /// refers to a known tick.
    pub fn validate(&self) -> Result<()> {
        let ticks: HashSet<u32> = self.ticks.iter().map(|t| t.seq).collect();
        let mut seen = HashSet::new();
        for r in &self.records {
            if !ticks.contains(&r.tick_seq) {
                return Err(Error::validation(format!("record for unknown tick {}", r.tick_seq)));
            }
            if !seen.insert((r.tick_seq, r.contract_id.as_str())) {
                return Err(Error::validation(format!(
                    "contract {} priced twice for tick {}",
                    r.contract_id, r.tick_seq
                )));
            }
            if r.status == RecordStatus::Success && (r.price.is_none() || r.start_ns.is_none_or(|s| s > r.end_ns)) {
                return Err(Error::validation(format!("inconsistent success record {r:?}")));
            }
            if r.status != RecordStatus::Success && r.price.is_some() {
                return Err(Error::validation(format!("priced non-success record {r:?}")));
            }
        }
        Ok(())
    }

    /// Writes the metadata file and the one-record-per-line log into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let meta = MetaFile {
            meta: self.meta.clone(),
            ticks: self.ticks.clone(),
            error: self.error.clone(),
            counts: self.counts(),
        };
        let meta_path = dir.join(SESSION_META_FILE);
        fs::write(&meta_path, serde_json::to_string_pretty(&meta)? + "\n").map_err(|e| Error::file(&meta_path, e))?;
        let log_path = dir.join(SESSION_LOG_FILE);
        let file = fs::File::create(&log_path).map_err(|e| Error::file(&log_path, e))?;
        let mut out = BufWriter::new(file);
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n").map_err(|e| Error::file(&log_path, e))?;
        }
        out.flush().map_err(|e| Error::file(&log_path, e))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let meta_path = dir.join(SESSION_META_FILE);
        let text = fs::read_to_string(&meta_path).map_err(|e| Error::file(&meta_path, e))?;
        let meta: MetaFile = serde_json::from_str(&text)?;
        let log_path = dir.join(SESSION_LOG_FILE);
        let file = fs::File::open(&log_path).map_err(|e| Error::file(&log_path, e))?;
        let mut records = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::file(&log_path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            records.push(serde_json::from_str(&line).map_err(|e| Error::parse(i + 1, e.to_string()))?);
        }
        let log = SessionLog {
            meta: meta.meta,
            ticks: meta.ticks,
            records,
            error: meta.error,
        };
        log.validate()?;
        Ok(log)
    }
}

/// Per-worker span (first start to last end) of a tick's successful
/// pricings, in nanoseconds.
pub(crate) fn worker_spans(log: &SessionLog, tick_seq: u32) -> BTreeMap<usize, u64> {
    let mut bounds: BTreeMap<usize, (u64, u64)> = BTreeMap::new();
    for r in log.records.iter().filter(|r| r.tick_seq == tick_seq && r.status == RecordStatus::Success) {
        let start = r.start_ns.unwrap_or(r.end_ns);
        let entry = bounds.entry(r.worker_id).or_insert((start, r.end_ns));
        entry.0 = entry.0.min(start);
        entry.1 = entry.1.max(r.end_ns);
    }
    bounds.into_iter().map(|(w, (s, e))| (w, e - s)).collect()
}

/// Slowest worker's span for `tick_seq`, in seconds; 0 when nothing
/// succeeded for that tick.
pub fn worst_core_elapsed(log: &SessionLog, tick_seq: u32) -> Result<f64> {
    if log.tick(tick_seq).is_none() {
        return Err(Error::argument(format!("tick {tick_seq} is not in the session log")));
    }
    let worst = worker_spans(log, tick_seq).into_values().max().unwrap_or(0);
    Ok(worst as f64 * 1e-9)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pricing::Mt19937;

    fn success(contract: &str, tick: u32, worker: usize, start: u64, end: u64) -> PricingRecord {
        PricingRecord {
            contract_id: contract.into(),
            tick_seq: tick,
            start_ns: Some(start),
            end_ns: end,
            worker_id: worker,
            status: RecordStatus::Success,
            price: Some(1.0),
            error: None,
        }
    }

    fn log_with(records: Vec<PricingRecord>, ticks: &[u32]) -> SessionLog {
        SessionLog {
            meta: SessionMeta::default(),
            ticks: ticks.iter().map(|&seq| TickArrival { seq, arrival_ns: 0, spot: 1.0 }).collect(),
            records,
            error: None,
        }
    }

    #[test]
    fn worst_core_is_the_slowest_worker() {
        let log = log_with(
            vec![
                success("a", 0, 0, 0, 1_000_000),
                success("b", 0, 0, 1_000_000, 3_000_000),
                success("c", 0, 1, 0, 5_000_000),
            ],
            &[0, 1],
        );
        assert!((worst_core_elapsed(&log, 0).unwrap() - 5e-3).abs() < 1e-15);
        assert_eq!(worst_core_elapsed(&log, 1).unwrap(), 0.0);
        assert!(matches!(worst_core_elapsed(&log, 2), Err(Error::Argument(_))));
        let single = log_with(vec![success("a", 0, 3, 2_000, 9_000)], &[0]);
        assert!((worst_core_elapsed(&single, 0).unwrap() - 7e-6).abs() < 1e-18);
    }

    #[test]
    fn worst_core_matches_brute_force_on_eight_workers() {
        let mut rng = Mt19937::new(8);
        let mut records = Vec::new();
        let mut clock = [0u64; 8];
        for i in 0..400 {
            let w = (rng.next_u32() % 8) as usize;
            let start = clock[w] + u64::from(rng.next_u32() % 1000);
            let end = start + 1 + u64::from(rng.next_u32() % 100_000);
            clock[w] = end;
            let mut r = success(&format!("k{i}"), 0, w, start, end);
            if rng.next_u32() % 5 == 0 {
                r.status = RecordStatus::Abandoned;
                r.price = None;
            }
            records.push(r);
        }
        let log = log_with(records, &[0]);
        let mut worst = 0u64;
        for w in 0..8 {
            let mine: Vec<_> = log
                .records
                .iter()
                .filter(|r| r.worker_id == w && r.status == RecordStatus::Success)
                .collect();
            if mine.is_empty() {
                continue;
            }
            let first = mine.iter().map(|r| r.start_ns.unwrap()).min().unwrap();
            let last = mine.iter().map(|r| r.end_ns).max().unwrap();
            worst = worst.max(last - first);
        }
        assert_eq!(worst_core_elapsed(&log, 0).unwrap(), worst as f64 * 1e-9);
    }

    #[test]
    fn save_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let mut log = log_with(
            vec![
                success("a", 0, 0, 10, 20),
                PricingRecord::abandoned("b", 0, None, 30, 1),
            ],
            &[0],
        );
        log.error = Some("feed went away".into());
        log.save(dir.path()).unwrap();
        assert_eq!(SessionLog::load(dir.path()).unwrap(), log);
        let lines = fs::read_to_string(dir.path().join(SESSION_LOG_FILE)).unwrap();
        assert_eq!(lines.lines().count(), 2);
    }

    #[test]
    fn duplicate_pairs_are_invalid() {
        let log = log_with(vec![success("a", 0, 0, 0, 1), success("a", 0, 1, 0, 1)], &[0]);
        assert!(matches!(log.validate(), Err(Error::Validation(_))));
    }
}
