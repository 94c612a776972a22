use std::str::FromStr;

use chrono::{DateTime, Utc};

use super::{MarketTick, TickTrace};
use crate::error::{Error, Result};
use crate::pricing::{draw_to_open_unit, Mt19937, NormalStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arrivals {
    /// Exactly `1/rate` seconds apart.
    Fixed,
    /// Exponential gaps with mean `1/rate`.
    Poisson,
}

impl FromStr for Arrivals {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fixed" => Ok(Arrivals::Fixed),
            "poisson" => Ok(Arrivals::Poisson),
            other => Err(Error::argument(format!("arrivals must be fixed or poisson, got {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub arrivals: Arrivals,
    /// Ticks per second.
    pub rate: f64,
    pub count: usize,
    pub seed: u64,
    pub symbol: String,
    pub start_price: f64,
    /// Standard deviation of the log price change per tick.
    pub step_volatility: f64,
    pub start_wallclock: DateTime<Utc>,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            arrivals: Arrivals::Poisson,
            rate: 1.0,
            count: 100,
            seed: 5489,
            symbol: "FB".into(),
            start_price: 25.0,
            step_volatility: 5e-4,
            start_wallclock: DateTime::UNIX_EPOCH,
        }
    }
}

/// Builds a single-symbol trace; the same spec always gives the same trace.
/// Prices follow a geometric random walk rounded to cents.
pub fn generate_trace(spec: &SyntheticSpec) -> Result<TickTrace> {
    if !(spec.rate.is_finite() && spec.rate > 0.0) {
        return Err(Error::argument(format!("arrival rate must be positive, got {}", spec.rate)));
    }
    if !(spec.start_price.is_finite() && spec.start_price > 0.0) {
        return Err(Error::argument(format!("start price must be positive, got {}", spec.start_price)));
    }
    if !(spec.step_volatility.is_finite() && spec.step_volatility >= 0.0) {
        return Err(Error::argument("step volatility must be non-negative"));
    }
    let mut gaps = Mt19937::from_seed(spec.seed);
    let mut shocks = NormalStream::new(spec.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mean_gap_s = 1.0 / spec.rate;

    let mut ticks = Vec::with_capacity(spec.count);
    let mut elapsed_s = 0.0f64;
    let mut log_price = spec.start_price.ln();
    for i in 0..spec.count {
        let timestamp_ns = match spec.arrivals {
            Arrivals::Fixed => (i as f64 * mean_gap_s * 1e9).round() as u64,
            Arrivals::Poisson => {
                if i > 0 {
                    elapsed_s += -draw_to_open_unit(gaps.next_u32()).ln() * mean_gap_s;
                }
                (elapsed_s * 1e9).round() as u64
            }
        };
        if i > 0 {
            log_price += spec.step_volatility * shocks.next_normal();
        }
        let price = ((log_price.exp() * 100.0).round() / 100.0).max(0.01);
        ticks.push(MarketTick::new(i as u32, timestamp_ns, spec.symbol.clone(), price)?);
    }
    TickTrace::new(spec.start_wallclock, ticks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_arrivals() {
        let spec = SyntheticSpec {
            arrivals: Arrivals::Fixed,
            rate: 1.0,
            count: 3,
            ..SyntheticSpec::default()
        };
        let trace = generate_trace(&spec).unwrap();
        let ts: Vec<u64> = trace.ticks().iter().map(|t| t.timestamp_ns).collect();
        assert_eq!(ts, [0, 1_000_000_000, 2_000_000_000]);
    }

    #[test]
    fn deterministic() {
        let spec = SyntheticSpec {
            count: 500,
            ..SyntheticSpec::default()
        };
        assert_eq!(generate_trace(&spec).unwrap().to_text(), generate_trace(&spec).unwrap().to_text());
        let other = SyntheticSpec { seed: 1, ..spec.clone() };
        assert_ne!(generate_trace(&spec).unwrap().to_text(), generate_trace(&other).unwrap().to_text());
    }

    #[test]
    fn poisson_mean_gap() {
        let spec = SyntheticSpec {
            rate: 0.434,
            count: 10_156,
            ..SyntheticSpec::default()
        };
        let trace = generate_trace(&spec).unwrap();
        let gaps = trace.gaps_ns();
        let mean = gaps.iter().map(|&g| g as f64 * 1e-9).sum::<f64>() / gaps.len() as f64;
        assert!((mean - 1.0 / 0.434).abs() / (1.0 / 0.434) < 0.05, "mean gap {mean}");
        // Coefficient of variation of an exponential is 1.
        let var = gaps.iter().map(|&g| (g as f64 * 1e-9 - mean).powi(2)).sum::<f64>() / gaps.len() as f64;
        assert!((var.sqrt() / mean - 1.0).abs() < 0.05);
    }

    #[test]
    fn prices_stay_positive_cents() {
        let spec = SyntheticSpec {
            count: 2000,
            step_volatility: 0.05,
            start_price: 0.05,
            ..SyntheticSpec::default()
        };
        for t in generate_trace(&spec).unwrap().ticks() {
            assert!(t.price >= 0.01);
            assert!(((t.price * 100.0).round() - t.price * 100.0).abs() < 1e-6);
        }
    }

    #[test]
    fn rejects_bad_rate() {
        let spec = SyntheticSpec {
            rate: 0.0,
            ..SyntheticSpec::default()
        };
        assert!(matches!(generate_trace(&spec), Err(Error::Argument(_))));
    }
}
