use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Where on the supply path a power figure was taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SourceLabel {
    /// Before the voltage regulators, e.g. package energy counters.
    #[serde(rename = "PRE-VRM")]
    PreVrm,
    /// Before the power supply, e.g. a wall meter.
    #[serde(rename = "PRE-PSU")]
    PrePsu,
    /// A modelled or assumed figure.
    #[serde(rename = "MODEL")]
    Model,
}

impl fmt::Display for SourceLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SourceLabel::PreVrm => "PRE-VRM",
            SourceLabel::PrePsu => "PRE-PSU",
            SourceLabel::Model => "MODEL",
        })
    }
}

impl FromStr for SourceLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "PRE-VRM" => Ok(SourceLabel::PreVrm),
            "PRE-PSU" => Ok(SourceLabel::PrePsu),
            "MODEL" => Ok(SourceLabel::Model),
            other => Err(Error::argument(format!("unknown power source label {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerSample {
    pub timestamp_ns: u64,
    pub watts: f64,
    pub label: SourceLabel,
}

/// Time-weighted mean of the piecewise-linear power curve through
/// `samples` over `[start_ns, end_ns]`, clipped to the span the samples
/// cover. Repeated timestamps describe a step.
pub fn mean_power(samples: &[PowerSample], start_ns: u64, end_ns: u64) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::argument(format!("need at least 2 power samples, got {}", samples.len())));
    }
    if let Some(i) = samples.windows(2).position(|w| w[1].timestamp_ns < w[0].timestamp_ns) {
        return Err(Error::validation(format!("power samples out of order at index {}", i + 1)));
    }
    if let Some(s) = samples.iter().find(|s| !(s.watts.is_finite() && s.watts >= 0.0)) {
        return Err(Error::validation(format!("bad power sample {} W", s.watts)));
    }
    let lo = start_ns.max(samples[0].timestamp_ns);
    let hi = end_ns.min(samples[samples.len() - 1].timestamp_ns);
    if hi <= lo {
        return Err(Error::argument(format!(
            "power samples cover [{}, {}] ns, which does not overlap the window [{start_ns}, {end_ns}]",
            samples[0].timestamp_ns,
            samples[samples.len() - 1].timestamp_ns
        )));
    }

    let mut joules_ns = 0.0;
    for w in samples.windows(2) {
        let (t0, t1) = (w[0].timestamp_ns, w[1].timestamp_ns);
        if t1 <= lo || t0 >= hi || t1 == t0 {
            continue;
        }
        let at = |t: u64| w[0].watts + (w[1].watts - w[0].watts) * ((t - t0) as f64 / (t1 - t0) as f64);
        let (a, b) = (t0.max(lo), t1.min(hi));
        joules_ns += 0.5 * (at(a) + at(b)) * (b - a) as f64;
    }
    Ok(joules_ns / (hi - lo) as f64)
}

/// Reads a `timestamp_ns,watts` CSV, such as a wall meter's export. A
/// header row and `#` comments are skipped.
pub fn load_power_trace(path: impl AsRef<Path>, label: SourceLabel) -> Result<Vec<PowerSample>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    parse_power_trace(&text, label)
}

pub fn parse_power_trace(text: &str, label: SourceLabel) -> Result<Vec<PowerSample>> {
    let mut samples = Vec::new();
    for (line_no, a, b) in csv_pairs(text, "timestamp_ns")? {
        let timestamp_ns = a.parse().map_err(|_| Error::parse(line_no, format!("bad timestamp {a:?}")))?;
        let watts: f64 = b.parse().map_err(|_| Error::parse(line_no, format!("bad power {b:?}")))?;
        if !(watts.is_finite() && watts >= 0.0) {
            return Err(Error::validation(format!("line {line_no}: power must be non-negative, got {watts}")));
        }
        samples.push(PowerSample {
            timestamp_ns,
            watts,
            label,
        });
    }
    if samples.windows(2).any(|w| w[1].timestamp_ns < w[0].timestamp_ns) {
        return Err(Error::validation("power trace timestamps decrease"));
    }
    Ok(samples)
}

fn csv_pairs<'a>(text: &'a str, header: &str) -> Result<Vec<(usize, &'a str, &'a str)>> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || (rows.is_empty() && line.starts_with(header)) {
            continue;
        }
        let mut fields = line.split(',').map(str::trim);
        match (fields.next(), fields.next(), fields.next()) {
            (Some(a), Some(b), None) => rows.push((i + 1, a, b)),
            _ => return Err(Error::parse(i + 1, "expected 2 comma-separated fields")),
        }
    }
    Ok(rows)
}

/// Energy consumed between two reads of a counter that wraps to 0 after
/// `max_range_uj`.
pub fn energy_delta_uj(previous: u64, current: u64, max_range_uj: u64) -> u64 {
    if current >= previous {
        current - previous
    } else {
        max_range_uj.saturating_sub(previous) + current
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnergyReading {
    pub timestamp_ns: u64,
    pub energy_uj: u64,
}

/// Mean power over each interval between consecutive readings, as a step
/// curve: two samples per interval, at its start and its end. Integrating
/// the curve gives back the counted energy.
pub fn power_from_energy(readings: &[EnergyReading], max_range_uj: u64, label: SourceLabel) -> Vec<PowerSample> {
    let mut out = Vec::with_capacity(2 * readings.len());
    for w in readings.windows(2) {
        let dt = w[1].timestamp_ns.saturating_sub(w[0].timestamp_ns);
        if dt == 0 {
            continue;
        }
        let de = energy_delta_uj(w[0].energy_uj, w[1].energy_uj, max_range_uj);
        // 1 uJ per ns is 1000 W.
        let watts = de as f64 / dt as f64 * 1e3;
        out.push(PowerSample {
            timestamp_ns: w[0].timestamp_ns,
            watts,
            label,
        });
        out.push(PowerSample {
            timestamp_ns: w[1].timestamp_ns,
            watts,
            label,
        });
    }
    out
}

/// One Linux powercap energy counter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RaplDomain {
    pub energy_path: PathBuf,
    pub max_range_path: PathBuf,
}

impl RaplDomain {
    pub const DEFAULT_DIR: &'static str = "/sys/class/powercap/intel-rapl:0";

    /// The `energy_uj` and `max_energy_range_uj` files in `dir`.
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let dir = dir.as_ref();
        RaplDomain {
            energy_path: dir.join("energy_uj"),
            max_range_path: dir.join("max_energy_range_uj"),
        }
    }

    /// Cumulative energy in microjoules.
    pub fn read_energy_uj(&self) -> Result<u64> {
        read_counter(&self.energy_path)
    }

    pub fn max_range_uj(&self) -> Result<u64> {
        read_counter(&self.max_range_path)
    }
}

fn read_counter(path: &Path) -> Result<u64> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::SourceUnavailable(format!("cannot read {}: {e}", path.display())))?;
    text.trim()
        .parse()
        .map_err(|_| Error::SourceUnavailable(format!("{} does not hold a counter: {:?}", path.display(), text.trim())))
}

/// A recorded series of counter reads: `timestamp_ns,energy_uj` rows,
/// optionally preceded by `# max_energy_range_uj <value>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CounterLog {
    pub max_range_uj: u64,
    pub readings: Vec<EnergyReading>,
}

impl CounterLog {
    pub fn parse(text: &str) -> Result<Self> {
        let mut max_range_uj = u64::MAX;
        for line in text.lines() {
            if let Some(rest) = line.trim().strip_prefix('#') {
                let mut words = rest.split_whitespace();
                if words.next() == Some("max_energy_range_uj") {
                    max_range_uj = words
                        .next()
                        .and_then(|v| v.parse().ok())
                        .ok_or_else(|| Error::parse(1, "bad max_energy_range_uj comment"))?;
                }
            }
        }
        let mut readings = Vec::new();
        for (line_no, a, b) in csv_pairs(text, "timestamp_ns")? {
            readings.push(EnergyReading {
                timestamp_ns: a.parse().map_err(|_| Error::parse(line_no, format!("bad timestamp {a:?}")))?,
                energy_uj: b.parse().map_err(|_| Error::parse(line_no, format!("bad energy {b:?}")))?,
            });
        }
        Ok(CounterLog { max_range_uj, readings })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        CounterLog::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("# max_energy_range_uj {}\ntimestamp_ns,energy_uj\n", self.max_range_uj);
        for r in &self.readings {
            out.push_str(&format!("{},{}\n", r.timestamp_ns, r.energy_uj));
        }
        out
    }

    pub fn power_series(&self) -> Vec<PowerSample> {
        power_from_energy(&self.readings, self.max_range_uj, SourceLabel::PreVrm)
    }
}

/// A source polled while a session runs.
#[derive(Debug, Clone, PartialEq)]
pub enum LiveSource {
    Rapl(RaplDomain),
    Constant { watts: f64, label: SourceLabel },
}

impl LiveSource {
    /// Fails early if the source cannot be read at all.
    pub fn check(&self) -> Result<()> {
        match self {
            LiveSource::Rapl(domain) => {
                domain.read_energy_uj()?;
                domain.max_range_uj()?;
                Ok(())
            }
            LiveSource::Constant { watts, .. } if !(watts.is_finite() && *watts >= 0.0) => {
                Err(Error::argument(format!("constant power must be non-negative, got {watts}")))
            }
            LiveSource::Constant { .. } => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub samples: Vec<PowerSample>,
    /// Raw counter reads, for counter sources.
    pub readings: Vec<EnergyReading>,
    pub failures: usize,
}

/// Background poller of a [`LiveSource`]. It reads once on start, every
/// `period` after that, and once more on [`PowerSampler::stop`], with
/// timestamps measured from `origin`.
pub struct PowerSampler {
    stop: Arc<AtomicBool>,
    handle: JoinHandle<Result<Recording>>,
}

impl PowerSampler {
    pub fn start(source: LiveSource, period: Duration, origin: Instant) -> Result<Self> {
        source.check()?;
        if period.is_zero() {
            return Err(Error::argument("sampling period must be positive"));
        }
        let max_range = match &source {
            LiveSource::Rapl(d) => d.max_range_uj()?,
            LiveSource::Constant { .. } => 0,
        };
        let stop = Arc::new(AtomicBool::new(false));
        let flag = Arc::clone(&stop);
        let (started_tx, started_rx) = std::sync::mpsc::channel();
        let handle = std::thread::spawn(move || {
            let mut recording = Recording {
                samples: Vec::new(),
                readings: Vec::new(),
                failures: 0,
            };
            let poll = |recording: &mut Recording| {
                let t = origin.elapsed().as_nanos() as u64;
                match &source {
                    LiveSource::Rapl(domain) => match domain.read_energy_uj() {
                        Ok(energy_uj) => recording.readings.push(EnergyReading { timestamp_ns: t, energy_uj }),
                        Err(_) => recording.failures += 1,
                    },
                    LiveSource::Constant { watts, label } => recording.samples.push(PowerSample {
                        timestamp_ns: t,
                        watts: *watts,
                        label: *label,
                    }),
                }
            };
            poll(&mut recording);
            let _ = started_tx.send(());
            let mut next = Instant::now() + period;
            while !flag.load(Ordering::Acquire) {
                let now = Instant::now();
                if now >= next {
                    poll(&mut recording);
                    next += period;
                } else {
                    std::thread::sleep((next - now).min(Duration::from_millis(5)));
                }
            }
            poll(&mut recording);
            if matches!(source, LiveSource::Rapl(_)) {
                recording.samples = power_from_energy(&recording.readings, max_range, SourceLabel::PreVrm);
            }
            Ok(recording)
        });
        // The first read happens before the caller starts timed work.
        let _ = started_rx.recv();
        Ok(PowerSampler { stop, handle })
    }

    pub fn stop(self) -> Result<Recording> {
        self.stop.store(true, Ordering::Release);
        self.handle.join().map_err(|_| Error::Numeric("power sampler panicked".into()))?
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pricing::Mt19937;

    fn sample(t: u64, w: f64) -> PowerSample {
        PowerSample {
            timestamp_ns: t,
            watts: w,
            label: SourceLabel::Model,
        }
    }

    #[test]
    fn constant_and_ramp() {
        let flat: Vec<_> = (0..11).map(|i| sample(i * 100, 7.258)).collect();
        assert!((mean_power(&flat, 0, 1000).unwrap() - 7.258).abs() < 1e-12);
        let ramp = [sample(0, 0.0), sample(1_000, 10.0)];
        assert!((mean_power(&ramp, 0, 1_000).unwrap() - 5.0).abs() < 1e-12);
        // A sub-window of a ramp averages its midpoint.
        assert!((mean_power(&ramp, 200, 400).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn insufficient_or_disjoint_samples() {
        assert!(mean_power(&[sample(0, 1.0)], 0, 10).is_err());
        assert!(mean_power(&[sample(0, 1.0), sample(10, 1.0)], 20, 30).is_err());
        assert!(mean_power(&[sample(10, 1.0), sample(0, 1.0)], 0, 10).is_err());
    }

    fn step_series(seed: u32) -> Vec<PowerSample> {
        let mut rng = Mt19937::new(seed);
        let mut out = vec![];
        let mut t = 0u64;
        let mut w = 40.0;
        for _ in 0..200 {
            out.push(sample(t, w));
            t += 1_000 * u64::from(1 + rng.next_u32() % 5000);
            out.push(sample(t, w));
            w = 10.0 + f64::from(rng.next_u32() % 90_000) / 1000.0;
        }
        out
    }

    #[test]
    fn step_series_matches_dense_resampling() {
        let samples = step_series(11);
        let end = samples.last().unwrap().timestamp_ns;
        let (lo, hi) = (end / 7 / 1000 * 1000, end / 7 * 6 / 1000 * 1000);
        // Every step edge sits on a whole microsecond, so sampling the step
        // curve at microsecond midpoints integrates it exactly.
        let mut integral = 0.0;
        let mut k = 0;
        for t in (lo..hi).step_by(1000) {
            let mid = t + 500;
            while samples[k + 1].timestamp_ns <= mid {
                k += 1;
            }
            integral += samples[k].watts * 1000.0;
        }
        let oracle = integral / (hi - lo) as f64;
        let got = mean_power(&samples, lo, hi).unwrap();
        assert!((got - oracle).abs() / oracle < 1e-9, "{got} vs {oracle}");
    }

    #[test]
    fn adjacent_windows_combine_by_duration() {
        let samples = step_series(12);
        let end = samples.last().unwrap().timestamp_ns;
        let (a, b, c) = (end / 10, end / 3 + 17, end - 5);
        let whole = mean_power(&samples, a, c).unwrap();
        let left = mean_power(&samples, a, b).unwrap();
        let right = mean_power(&samples, b, c).unwrap();
        let combined = (left * (b - a) as f64 + right * (c - b) as f64) / (c - a) as f64;
        assert!((whole - combined).abs() / whole < 1e-9);
    }

    #[test]
    fn counter_delta_and_wrap() {
        let r = [
            EnergyReading {
                timestamp_ns: 0,
                energy_uj: 1_000,
            },
            EnergyReading {
                timestamp_ns: 1_000_000_000,
                energy_uj: 45_001_000,
            },
        ];
        let p = power_from_energy(&r, u64::MAX, SourceLabel::PreVrm);
        assert!((p[0].watts - 45.0).abs() < 1e-12);
        let max = 262_143_328_850;
        assert_eq!(energy_delta_uj(max - 10, 5, max), 15);
        assert_eq!(energy_delta_uj(5, 20, max), 15);
    }

    #[test]
    fn step_curve_integrates_to_counted_energy() {
        let readings: Vec<_> = [(0, 100), (100_000_000, 4_100_000), (250_000_000, 9_000_000), (300_000_000, 9_000_001)]
            .into_iter()
            .map(|(t, e)| EnergyReading {
                timestamp_ns: t,
                energy_uj: e,
            })
            .collect();
        let p = power_from_energy(&readings, u64::MAX, SourceLabel::PreVrm);
        let joules = mean_power(&p, 0, 300_000_000).unwrap() * 0.3;
        assert!((joules - 8.999_901).abs() < 1e-9);
    }

    #[test]
    fn rapl_files_and_counter_log_agree() {
        let dir = tempfile::tempdir().unwrap();
        let domain = RaplDomain::in_dir(dir.path());
        assert!(matches!(domain.read_energy_uj(), Err(Error::SourceUnavailable(_))));
        let max = 1_000_000u64;
        fs::write(&domain.max_range_path, format!("{max}\n")).unwrap();
        let values = [999_000u64, 999_990, 40, 500_000, 999_999, 3];
        let mut live = Vec::new();
        for (i, v) in values.iter().enumerate() {
            fs::write(&domain.energy_path, format!("{v}\n")).unwrap();
            live.push(EnergyReading {
                timestamp_ns: i as u64 * 100_000_000,
                energy_uj: domain.read_energy_uj().unwrap(),
            });
        }
        let from_files = power_from_energy(&live, domain.max_range_uj().unwrap(), SourceLabel::PreVrm);
        let log = CounterLog {
            max_range_uj: max,
            readings: live.clone(),
        };
        let replayed = CounterLog::parse(&log.to_text()).unwrap();
        assert_eq!(replayed, log);
        assert_eq!(replayed.power_series(), from_files);
        // 990 + 50 + 499960 + 499999 + 4 uJ over 0.5 s.
        let mean = mean_power(&from_files, 0, 500_000_000).unwrap();
        assert!((mean - 1_001_003e-6 / 0.5).abs() < 1e-9);
    }

    #[test]
    fn power_trace_parsing() {
        let s = parse_power_trace("timestamp_ns,watts\n0,10\n# gap\n5,12.5\n", SourceLabel::PrePsu).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[1].label, SourceLabel::PrePsu);
        assert!(parse_power_trace("0,-1\n", SourceLabel::PrePsu).is_err());
        assert!(matches!(parse_power_trace("0,1\n1\n", SourceLabel::PrePsu), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn constant_sampler() {
        let origin = Instant::now();
        let sampler = PowerSampler::start(
            LiveSource::Constant {
                watts: 10.0,
                label: SourceLabel::Model,
            },
            Duration::from_millis(10),
            origin,
        )
        .unwrap();
        std::thread::sleep(Duration::from_millis(35));
        let rec = sampler.stop().unwrap();
        assert!(rec.samples.len() >= 3);
        let end = rec.samples.last().unwrap().timestamp_ns;
        assert_eq!(mean_power(&rec.samples, 0, end).unwrap(), 10.0);
    }

    #[test]
    fn rapl_sampler_reads_counter_files() {
        let dir = tempfile::tempdir().unwrap();
        let domain = RaplDomain::in_dir(dir.path());
        fs::write(&domain.max_range_path, "1000000000\n").unwrap();
        fs::write(&domain.energy_path, "5\n").unwrap();
        let sampler = PowerSampler::start(LiveSource::Rapl(domain.clone()), Duration::from_millis(5), Instant::now())
            .unwrap();
        std::thread::sleep(Duration::from_millis(20));
        fs::write(&domain.energy_path, "20005\n").unwrap();
        std::thread::sleep(Duration::from_millis(20));
        let rec = sampler.stop().unwrap();
        let first = rec.readings.first().unwrap();
        let last = rec.readings.last().unwrap();
        assert_eq!(last.energy_uj - first.energy_uj, 20_000);
        let mean = mean_power(&rec.samples, first.timestamp_ns, last.timestamp_ns).unwrap();
        let expected = 20_000e-6 / ((last.timestamp_ns - first.timestamp_ns) as f64 * 1e-9);
        assert!((mean - expected).abs() / expected < 1e-9);
        let missing = RaplDomain::in_dir(dir.path().join("nope"));
        assert!(matches!(
            PowerSampler::start(LiveSource::Rapl(missing), Duration::from_millis(5), Instant::now()),
            Err(Error::SourceUnavailable(_))
        ));
    }
}
