use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feed::TickTrace;

pub const PROFILE_BIN_NS: u64 = 250_000_000;

/// One 0.25 s bin of inter-arrival gap length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileBin {
    pub lower_s: f64,
    pub upper_s: f64,
    /// Gaps with length in `[lower, upper)`.
    pub gaps: usize,
    /// Of those, gaps long enough to price the whole book.
    pub successes: usize,
    /// Gaps shorter than `upper_s`.
    pub cumulative_gaps: usize,
    pub cumulative_successes: usize,
    /// `cumulative_successes / cumulative_gaps`; absent while no gap is
    /// that short.
    pub cumulative_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllOrNothingProfile {
    pub pricing_span_s: f64,
    pub bins: Vec<ProfileBin>,
}

impl AllOrNothingProfile {
    /// Share of all updates whose book completes before the next update.
    pub fn overall_fraction(&self) -> Option<f64> {
        self.bins.last().and_then(|b| b.cumulative_fraction)
    }
}

/// A tick update succeeds when the gap to the next update is at least
/// `pricing_span_s`, the time to price the whole book. Gaps are binned by
/// length and the success fraction is accumulated over bins.
pub fn all_or_nothing_profile(trace: &TickTrace, pricing_span_s: f64) -> Result<AllOrNothingProfile> {
    if trace.is_empty() {
        return Err(Error::argument("profile needs a nonempty trace"));
    }
    profile_from_gaps(&trace.gaps_ns(), pricing_span_s)
}

pub fn profile_from_gaps(gaps_ns: &[u64], pricing_span_s: f64) -> Result<AllOrNothingProfile> {
    if !(pricing_span_s.is_finite() && pricing_span_s > 0.0) {
        return Err(Error::argument(format!("pricing span must be positive, got {pricing_span_s}")));
    }
    let bins = gaps_ns.iter().map(|g| g / PROFILE_BIN_NS).max().map_or(0, |m| m as usize + 1);
    let mut gaps = vec![0usize; bins];
    let mut successes = vec![0usize; bins];
    for &g in gaps_ns {
        let b = (g / PROFILE_BIN_NS) as usize;
        gaps[b] += 1;
        if g as f64 * 1e-9 >= pricing_span_s {
            successes[b] += 1;
        }
    }
    let (mut cum_g, mut cum_s) = (0, 0);
    let bins = (0..bins)
        .map(|b| {
            cum_g += gaps[b];
            cum_s += successes[b];
            ProfileBin {
                lower_s: (b as u64 * PROFILE_BIN_NS) as f64 * 1e-9,
                upper_s: ((b as u64 + 1) * PROFILE_BIN_NS) as f64 * 1e-9,
                gaps: gaps[b],
                successes: successes[b],
                cumulative_gaps: cum_g,
                cumulative_successes: cum_s,
                cumulative_fraction: (cum_g > 0).then(|| cum_s as f64 / cum_g as f64),
            }
        })
        .collect();
    Ok(AllOrNothingProfile { pricing_span_s, bins })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feed::{generate_trace, Arrivals, SyntheticSpec};

    fn uniform(count: usize) -> TickTrace {
        generate_trace(&SyntheticSpec {
            arrivals: Arrivals::Fixed,
            rate: 1.0,
            count,
            ..SyntheticSpec::default()
        })
        .unwrap()
    }

    #[test]
    fn uniform_gaps_all_succeed() {
        let p = all_or_nothing_profile(&uniform(50), 0.5).unwrap();
        assert_eq!(p.bins.len(), 5);
        assert_eq!(p.bins[4].lower_s, 1.0);
        assert_eq!(p.bins[4].gaps, 49);
        assert!(p.bins[..4].iter().all(|b| b.gaps == 0 && b.cumulative_fraction.is_none()));
        assert_eq!(p.overall_fraction(), Some(1.0));
    }

    #[test]
    fn uniform_gaps_all_fail() {
        let p = all_or_nothing_profile(&uniform(50), 2.0).unwrap();
        assert_eq!(p.overall_fraction(), Some(0.0));
    }

    #[test]
    fn degenerate_inputs() {
        assert!(all_or_nothing_profile(&uniform(5), 0.0).is_err());
        let single = all_or_nothing_profile(&uniform(1), 1.0).unwrap();
        assert!(single.bins.is_empty() && single.overall_fraction().is_none());
    }
}
