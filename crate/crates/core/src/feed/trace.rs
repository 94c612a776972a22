use std::collections::BTreeSet;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use chrono::{DateTime, SecondsFormat, Utc};

use super::{parse_tick_line, MarketTick};
use crate::error::{Error, Result};

pub const TRACE_MAGIC: &str = "#optbench-trace";
pub const TRACE_VERSION: u32 = 1;

/// A recorded tick stream.
///
/// The file form is a header line
/// `#optbench-trace v1 <symbol-count> <wallclock-iso8601>` followed by one
/// `timestamp_ns,symbol,price` row per tick. Sequence numbers are the row
/// positions, so they are not stored.
#[derive(Debug, Clone, PartialEq)]
pub struct TickTrace {
    pub start_wallclock: DateTime<Utc>,
    ticks: Vec<MarketTick>,
}

impl TickTrace {
    /// Renumbers `ticks` 0.. and checks timestamp order and tick validity.
    pub fn new(start_wallclock: DateTime<Utc>, mut ticks: Vec<MarketTick>) -> Result<Self> {
        if ticks.len() > u32::MAX as usize {
            return Err(Error::validation("trace longer than the 32-bit sequence space"));
        }
        for (i, tick) in ticks.iter_mut().enumerate() {
            tick.seq = i as u32;
            tick.validate()?;
        }
        if let Some(i) = ticks.windows(2).position(|w| w[1].timestamp_ns < w[0].timestamp_ns) {
            return Err(Error::validation(format!(
                "timestamps decrease at tick {}: {} after {}",
                i + 1,
                ticks[i + 1].timestamp_ns,
                ticks[i].timestamp_ns
            )));
        }
        Ok(TickTrace { start_wallclock, ticks })
    }

    pub fn ticks(&self) -> &[MarketTick] {
        &self.ticks
    }

    pub fn len(&self) -> usize {
        self.ticks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ticks.is_empty()
    }

    pub fn symbols(&self) -> BTreeSet<&str> {
        self.ticks.iter().map(|t| t.symbol.as_str()).collect()
    }

    /// Inter-arrival gaps in nanoseconds; one fewer than the tick count.
    pub fn gaps_ns(&self) -> Vec<u64> {
        self.ticks.windows(2).map(|w| w[1].timestamp_ns - w[0].timestamp_ns).collect()
    }

    pub fn header_line(&self) -> String {
        format!(
            "{TRACE_MAGIC} v{TRACE_VERSION} {} {}",
            self.symbols().len(),
            self.start_wallclock.to_rfc3339_opts(SecondsFormat::AutoSi, true)
        )
    }

    pub fn write_to(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "{}", self.header_line())?;
        for tick in &self.ticks {
            writeln!(out, "{}", tick.to_line())?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("trace text is ASCII")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = fs::File::create(path).map_err(|e| Error::file(path, e))?;
        self.write_to(std::io::BufWriter::new(file)).map_err(|e| match e {
            Error::Io(io) => Error::file(path, io),
            other => other,
        })
    }

    pub fn read_from(input: impl Read) -> Result<Self> {
        let mut lines = BufReader::new(input).lines();
        let header = match lines.next() {
            Some(line) => line?,
            None => return Err(Error::parse(1, "empty trace file")),
        };
        let (symbol_count, start_wallclock) = parse_header(&header)?;
        let mut ticks = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            let line_no = i + 2;
            if line.trim().is_empty() {
                continue;
            }
            ticks.push(parse_tick_line(&line, line_no)?);
        }
        let trace = TickTrace::new(start_wallclock, ticks)?;
        let found = trace.symbols().len();
        if found != symbol_count {
            return Err(Error::validation(format!(
                "header declares {symbol_count} symbols, rows contain {found}"
            )));
        }
        Ok(trace)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = fs::File::open(path).map_err(|e| Error::file(path, e))?;
        TickTrace::read_from(file)
    }
}

fn parse_header(line: &str) -> Result<(usize, DateTime<Utc>)> {
    let mut parts = line.split_whitespace();
    if parts.next() != Some(TRACE_MAGIC) {
        return Err(Error::parse(1, format!("missing {TRACE_MAGIC} header")));
    }
    match parts.next() {
        Some(v) if v == format!("v{TRACE_VERSION}") => {}
        other => return Err(Error::parse(1, format!("unsupported trace version {other:?}"))),
    }
    let count = parts
        .next()
        .and_then(|c| c.parse().ok())
        .ok_or_else(|| Error::parse(1, "bad symbol count in header"))?;
    let clock = parts
        .next()
        .ok_or_else(|| Error::parse(1, "missing wall-clock start in header"))?;
    let start = DateTime::parse_from_rfc3339(clock)
        .map_err(|e| Error::parse(1, format!("bad wall-clock start {clock:?}: {e}")))?
        .with_timezone(&Utc);
    if parts.next().is_some() {
        return Err(Error::parse(1, "trailing fields in header"));
    }
    Ok((count, start))
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;
    use proptest::prelude::*;

    fn start() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2013, 6, 3, 13, 30, 0).unwrap() + chrono::Duration::nanoseconds(123_456_789)
    }

    fn tick(ts: u64, sym: &str, price: f64) -> MarketTick {
        MarketTick::new(0, ts, sym, price).unwrap()
    }

    #[test]
    fn writes_header_and_rows() {
        let trace = TickTrace::new(start(), vec![tick(0, "FB", 24.5), tick(1_000_000_000, "FB", 24.51)]).unwrap();
        assert_eq!(
            trace.to_text(),
            "#optbench-trace v1 1 2013-06-03T13:30:00.123456789Z\n0,FB,24.5\n1000000000,FB,24.51\n"
        );
        assert_eq!(trace.ticks()[1].seq, 1);
    }

    #[test]
    fn rejects_bad_files() {
        let cases = [
            ("", 1),
            ("hello\n", 1),
            ("#optbench-trace v2 1 2013-06-03T13:30:00Z\n", 1),
            ("#optbench-trace v1 x 2013-06-03T13:30:00Z\n", 1),
            ("#optbench-trace v1 1 yesterday\n", 1),
            ("#optbench-trace v1 1 2013-06-03T13:30:00Z\n0,FB,1\n5,FB\n", 3),
        ];
        for (text, line) in cases {
            match TickTrace::read_from(text.as_bytes()) {
                Err(Error::Parse { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
        let decreasing = "#optbench-trace v1 1 2013-06-03T13:30:00Z\n5,FB,1\n4,FB,1\n";
        assert!(matches!(TickTrace::read_from(decreasing.as_bytes()), Err(Error::Validation(_))));
        let miscounted = "#optbench-trace v1 2 2013-06-03T13:30:00Z\n5,FB,1\n";
        assert!(matches!(TickTrace::read_from(miscounted.as_bytes()), Err(Error::Validation(_))));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let trace = TickTrace::new(start(), vec![tick(7, "FB", 1.0 / 3.0), tick(7, "AAPL", 400.01)]).unwrap();
        trace.save(&path).unwrap();
        assert_eq!(TickTrace::load(&path).unwrap(), trace);
        assert!(matches!(TickTrace::load(dir.path().join("missing")), Err(Error::File { .. })));
    }

    proptest! {
        #[test]
        fn lossless(gaps in prop::collection::vec(0u64..5_000_000_000, 0..200),
                    prices in prop::collection::vec(0.01f64..1000.0, 200),
                    nanos in 0i64..1_000_000_000) {
            let mut ts = 0;
            let ticks: Vec<_> = gaps.iter().zip(&prices).map(|(g, &p)| {
                ts += g;
                tick(ts, if p > 500.0 { "B" } else { "A" }, p)
            }).collect();
            let wall = start() + chrono::Duration::nanoseconds(nanos);
            let trace = TickTrace::new(wall, ticks).unwrap();
            let back = TickTrace::read_from(trace.to_text().as_bytes()).unwrap();
            prop_assert_eq!(back.to_text(), trace.to_text());
            prop_assert_eq!(back, trace);
        }
    }
}
