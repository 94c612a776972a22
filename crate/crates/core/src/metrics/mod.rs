//! Power sampling, energy accounting and the per-option metrics: seconds
//! per option, joules per option, QoS, the all-or-nothing profile and the
//! iso-QoS comparison.

mod compare;
mod power;
mod profile;

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feed::SubscribeStats;
use crate::pricer::{worker_spans, ContractBook, RecordStatus, SessionLog, SessionMeta, StatusCounts};
use crate::pricing::{black_scholes_price, PricingParams, SpotPrice};

pub use compare::{iso_qos_compare, merge_scaleout, Excluded, IsoQosRow, IsoQosTable, ScaleoutMode};
pub use power::{
    energy_delta_uj, load_power_trace, mean_power, parse_power_trace, power_from_energy, CounterLog, EnergyReading,
    LiveSource, PowerSample, PowerSampler, RaplDomain, Recording, SourceLabel,
};
pub use profile::{all_or_nothing_profile, profile_from_gaps, AllOrNothingProfile, ProfileBin, PROFILE_BIN_NS};

/// Seconds per option: the worst worker span of each tick, summed over
/// ticks, divided by the number of successful pricings. Absent when
/// nothing succeeded.
pub fn time_per_option(log: &SessionLog) -> Option<f64> {
    let successes = log.counts().success;
    if successes == 0 {
        return None;
    }
    let ticks: BTreeSet<u32> = log
        .records
        .iter()
        .filter(|r| r.status == RecordStatus::Success)
        .map(|r| r.tick_seq)
        .collect();
    let total_ns: u64 = ticks
        .into_iter()
        .map(|t| worker_spans(log, t).into_values().max().unwrap_or(0))
        .sum();
    Some(total_ns as f64 * 1e-9 / successes as f64)
}

pub fn joules_per_option(mean_power_w: f64, s_per_opt: f64) -> f64 {
    mean_power_w * s_per_opt
}

/// Successful over requested pricings; absent for an empty log.
pub fn qos(log: &SessionLog) -> Option<f64> {
    let c = log.counts();
    (c.total() > 0).then(|| c.success as f64 / c.total() as f64)
}

/// Session span in nanoseconds: first tick arrival to the last record or
/// arrival, whichever is later.
pub fn session_window(log: &SessionLog) -> (u64, u64) {
    let start = log.ticks.iter().map(|t| t.arrival_ns).min().unwrap_or(0);
    let end = log
        .records
        .iter()
        .map(|r| r.end_ns)
        .chain(log.ticks.iter().map(|t| t.arrival_ns))
        .max()
        .unwrap_or(start);
    (start, end)
}

/// How far successful prices were from a reference price.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracySummary {
    pub reference: String,
    pub compared: usize,
    pub max_rel_error: f64,
    pub mean_rel_error: f64,
}

impl AccuracySummary {
    /// Pairs of (computed, reference). Pairs with a reference below
    /// `floor` are skipped since a relative error means little there.
    pub fn from_pairs(reference: &str, pairs: impl IntoIterator<Item = (f64, f64)>, floor: f64) -> Option<Self> {
        let errors: Vec<f64> = pairs
            .into_iter()
            .filter(|&(_, r)| r.abs() >= floor)
            .map(|(v, r)| ((v - r) / r).abs())
            .collect();
        if errors.is_empty() {
            return None;
        }
        Some(AccuracySummary {
            reference: reference.into(),
            compared: errors.len(),
            max_rel_error: errors.iter().copied().fold(0.0, f64::max),
            mean_rel_error: errors.iter().sum::<f64>() / errors.len() as f64,
        })
    }
}

/// Compares every successful price in `log` with the closed form at the
/// spot of its tick. Prices under a thousandth of the spot are skipped.
pub fn accuracy_vs_black_scholes(
    log: &SessionLog,
    book: &ContractBook,
    params: &PricingParams,
) -> Result<Option<AccuracySummary>> {
    let mut pairs = Vec::new();
    for r in log.records.iter().filter(|r| r.status == RecordStatus::Success) {
        let (Some(price), Some(tick), Some(i)) = (r.price, log.tick(r.tick_seq), book.index_of(&r.contract_id)) else {
            continue;
        };
        let reference = black_scholes_price(&book.contracts()[i], SpotPrice::new(tick.spot)?, params)?;
        if reference >= tick.spot * 1e-3 {
            pairs.push((price, reference));
        }
    }
    Ok(AccuracySummary::from_pairs("black-scholes", pairs, 0.0))
}

/// Aggregated metrics for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub meta: SessionMeta,
    pub power_source: String,
    pub mean_power_w: f64,
    pub s_per_opt: Option<f64>,
    pub j_per_opt: Option<f64>,
    pub qos: Option<f64>,
    pub counts: StatusCounts,
    pub ticks: usize,
    pub duration_s: f64,
    /// Mean power over the session span; abandoned work is included.
    pub total_energy_j: f64,
    pub accuracy: Option<AccuracySummary>,
    pub profile: Option<AllOrNothingProfile>,
    pub feed: Option<SubscribeStats>,
    pub error: Option<String>,
}

impl SessionReport {
    pub const CSV_HEADER: &'static str = "platform,model,n,variant,governor,mean_power_w,s_per_opt,j_per_opt,qos";

    pub fn build(log: &SessionLog, mean_power_w: f64, power_source: &str) -> Self {
        let s_per_opt = time_per_option(log);
        let (start, end) = session_window(log);
        let duration_s = (end - start) as f64 * 1e-9;
        SessionReport {
            meta: log.meta.clone(),
            power_source: power_source.into(),
            mean_power_w,
            s_per_opt,
            j_per_opt: s_per_opt.map(|s| joules_per_option(mean_power_w, s)),
            qos: qos(log),
            counts: log.counts(),
            ticks: log.ticks.len(),
            duration_s,
            total_energy_j: mean_power_w * duration_s,
            accuracy: None,
            profile: None,
            feed: None,
            error: log.error.clone(),
        }
    }

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.meta.platform,
            self.meta.model,
            self.meta.n,
            self.meta.variant,
            self.meta.governor,
            self.mean_power_w,
            opt(self.s_per_opt),
            opt(self.j_per_opt),
            opt(self.qos)
        )
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::file(path, e))
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Checks the definitional identities: QoS in range and J/Opt equal to
    /// mean power times S/Opt within 0.1%.
    pub fn validate(&self) -> Result<()> {
        if let Some(q) = self.qos {
            if !(0.0..=1.0).contains(&q) {
                return Err(Error::validation(format!("QoS {q} outside [0, 1]")));
            }
        }
        match (self.s_per_opt, self.j_per_opt) {
            (Some(s), Some(j)) => {
                let expected = self.mean_power_w * s;
                if (j - expected).abs() > 1e-3 * expected.abs() {
                    return Err(Error::validation(format!("J/Opt {j} differs from P x S/Opt {expected}")));
                }
            }
            (None, None) => {}
            _ => return Err(Error::validation("S/Opt and J/Opt must be both present or both absent")),
        }
        Ok(())
    }
}
