//! Market ticks: the text format, trace files, the multicast wire format,
//! replay, subscription and a synthetic arrival generator.

mod replay;
mod subscribe;
mod synth;
mod trace;
mod wire;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use replay::{replay, replay_with, ReplayConfig, ReplayStats};
pub use subscribe::{SubscribeStats, Subscriber};
pub use synth::{generate_trace, Arrivals, SyntheticSpec};
pub use trace::{TickTrace, TRACE_MAGIC, TRACE_VERSION};
pub use wire::{decode_datagram, encode_datagram, SEQ_PREFIX_LEN};

pub const MAX_SYMBOL_LEN: usize = 15;
pub const DEFAULT_GROUP: std::net::Ipv4Addr = std::net::Ipv4Addr::new(239, 255, 0, 1);
pub const DEFAULT_PORT: u16 = 30001;

/// One spot-price update. `seq` is the tick's position in its trace; the
/// text form does not carry it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketTick {
    pub seq: u32,
    pub timestamp_ns: u64,
    pub symbol: String,
    pub price: f64,
}

impl MarketTick {
    pub fn new(seq: u32, timestamp_ns: u64, symbol: impl Into<String>, price: f64) -> Result<Self> {
        let tick = MarketTick {
            seq,
            timestamp_ns,
            symbol: symbol.into(),
            price,
        };
        tick.validate()?;
        Ok(tick)
    }

    pub fn validate(&self) -> Result<()> {
        validate_symbol(&self.symbol)?;
        if !(self.price.is_finite() && self.price > 0.0) {
            return Err(Error::validation(format!("tick price must be positive, got {}", self.price)));
        }
        Ok(())
    }

    /// Canonical `timestamp_ns,symbol,price` line without a newline. The
    /// price uses the shortest decimal that reads back to the same f64.
    pub fn to_line(&self) -> String {
        format!("{},{},{}", self.timestamp_ns, self.symbol, self.price)
    }
}

impl fmt::Display for MarketTick {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{} {}", self.seq, self.to_line())
    }
}

fn validate_symbol(symbol: &str) -> Result<()> {
    if symbol.is_empty() || symbol.len() > MAX_SYMBOL_LEN {
        return Err(Error::validation(format!(
            "symbol must be 1 to {MAX_SYMBOL_LEN} characters, got {symbol:?}"
        )));
    }
    if !symbol.bytes().all(|b| b.is_ascii_graphic() && b != b',') {
        return Err(Error::validation(format!("symbol must be printable ASCII without commas, got {symbol:?}")));
    }
    Ok(())
}

/// Parses one `timestamp_ns,symbol,price` row. `line_no` is only used in
/// error messages; the returned tick has `seq` 0.
pub fn parse_tick_line(line: &str, line_no: usize) -> Result<MarketTick> {
    let line = line.trim_end_matches(['\r', '\n']);
    let mut fields = line.split(',');
    let (Some(ts), Some(symbol), Some(price), None) = (fields.next(), fields.next(), fields.next(), fields.next())
    else {
        return Err(Error::parse(line_no, format!("expected 3 comma-separated fields in {line:?}")));
    };
    let timestamp_ns: u64 = ts
        .trim()
        .parse()
        .map_err(|_| Error::parse(line_no, format!("bad timestamp {ts:?}")))?;
    let price: f64 = price
        .trim()
        .parse()
        .map_err(|_| Error::parse(line_no, format!("bad price {price:?}")))?;
    let tick = MarketTick {
        seq: 0,
        timestamp_ns,
        symbol: symbol.trim().to_string(),
        price,
    };
    tick.validate().map_err(|e| match e {
        Error::Validation(msg) => Error::Validation(format!("line {line_no}: {msg}")),
        other => other,
    })?;
    Ok(tick)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_fields() {
        let t = parse_tick_line("1000000,FB,67.25", 1).unwrap();
        assert_eq!((t.timestamp_ns, t.symbol.as_str(), t.price), (1_000_000, "FB", 67.25));
        assert_eq!(t.to_line(), "1000000,FB,67.25");
    }

    #[test]
    fn zero_price_is_a_validation_error() {
        assert!(matches!(parse_tick_line("0,FB,0.0", 3), Err(Error::Validation(_))));
        assert!(matches!(parse_tick_line("0,FB,-1", 3), Err(Error::Validation(_))));
        assert!(matches!(parse_tick_line("0,FB,inf", 3), Err(Error::Validation(_))));
    }

    #[test]
    fn malformed_fields_report_the_line() {
        for bad in ["", "1,FB", "x,FB,1.0", "1,FB,abc", "1,FB,1.0,extra", "-5,FB,1.0"] {
            match parse_tick_line(bad, 17) {
                Err(Error::Parse { line, .. }) => assert_eq!(line, 17),
                other => panic!("{bad:?}: {other:?}"),
            }
        }
        assert!(matches!(parse_tick_line("1,,1.0", 2), Err(Error::Validation(_))));
        assert!(matches!(parse_tick_line("1,ABCDEFGHIJKLMNOP,1.0", 2), Err(Error::Validation(_))));
    }

    #[test]
    fn canonicalises_whitespace_and_number_spelling() {
        let t = parse_tick_line("42, FB ,67.250\r\n", 1).unwrap();
        assert_eq!(t.to_line(), "42,FB,67.25");
        let again = parse_tick_line(&t.to_line(), 1).unwrap();
        assert_eq!(again, t);
    }

    fn symbol() -> impl Strategy<Value = String> {
        "[A-Z.]{1,15}"
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]
        #[test]
        fn round_trip(ts in any::<u64>(), sym in symbol(), price in 1e-6f64..1e7) {
            let tick = MarketTick::new(0, ts, sym, price).unwrap();
            let back = parse_tick_line(&tick.to_line(), 1).unwrap();
            prop_assert_eq!(back.price.to_bits(), tick.price.to_bits());
            prop_assert_eq!(back, tick);
        }
    }
}
