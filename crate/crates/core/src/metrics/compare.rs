use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::SessionReport;
use crate::error::{Error, Result};
use crate::pricer::{RecordStatus, SessionLog};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsoQosRow {
    pub platform: String,
    pub model: String,
    pub variant: String,
    pub governor: String,
    pub qos: f64,
    pub mean_power_w: f64,
    pub s_per_opt: Option<f64>,
    pub j_per_opt: Option<f64>,
    pub energy_j: f64,
    /// Energy over the lowest energy in the table.
    pub relative_energy: f64,
    /// Energy over the highest energy in the table.
    pub energy_vs_worst: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Excluded {
    pub platform: String,
    pub qos: Option<f64>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsoQosTable {
    pub qos_target: f64,
    /// Qualifying runs, lowest session energy first.
    pub rows: Vec<IsoQosRow>,
    pub excluded: Vec<Excluded>,
    pub diagnostic: Option<String>,
}

impl IsoQosTable {
    pub const CSV_HEADER: &'static str =
        "rank,platform,model,variant,governor,qos,mean_power_w,s_per_opt,j_per_opt,energy_j,relative_energy,energy_vs_worst";

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for (i, r) in self.rows.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{}\n",
                i + 1,
                r.platform,
                r.model,
                r.variant,
                r.governor,
                r.qos,
                r.mean_power_w,
                opt(r.s_per_opt),
                opt(r.j_per_opt),
                r.energy_j,
                r.relative_energy,
                r.energy_vs_worst
            ));
        }
        out
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl fmt::Display for IsoQosTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "iso-QoS comparison at QoS >= {}", self.qos_target)?;
        writeln!(
            f,
            "{:>4}  {:<12} {:<5} {:<9} {:<12} {:>7} {:>10} {:>12} {:>9} {:>9}",
            "rank", "platform", "model", "variant", "governor", "qos", "power_w", "energy_j", "vs_best", "vs_worst"
        )?;
        for (i, r) in self.rows.iter().enumerate() {
            writeln!(
                f,
                "{:>4}  {:<12} {:<5} {:<9} {:<12} {:>7.4} {:>10.3} {:>12.4} {:>8.1}% {:>8.1}%",
                i + 1,
                r.platform,
                r.model,
                r.variant,
                r.governor,
                r.qos,
                r.mean_power_w,
                r.energy_j,
                100.0 * r.relative_energy,
                100.0 * r.energy_vs_worst
            )?;
        }
        for e in &self.excluded {
            writeln!(f, "excluded {}: {}", e.platform, e.reason)?;
        }
        if let Some(d) = &self.diagnostic {
            writeln!(f, "{d}")?;
        }
        Ok(())
    }
}

/// Ranks the runs that reach `qos_target` by total session energy. Equal
/// energies are ordered by platform tag.
pub fn iso_qos_compare(reports: &[SessionReport], qos_target: f64) -> Result<IsoQosTable> {
    if reports.len() < 2 {
        return Err(Error::argument(format!("need at least 2 reports to compare, got {}", reports.len())));
    }
    if !(0.0..=1.0).contains(&qos_target) {
        return Err(Error::argument(format!("QoS target must be in [0, 1], got {qos_target}")));
    }
    let mut kept = Vec::new();
    let mut excluded = Vec::new();
    for r in reports {
        match r.qos {
            Some(q) if q >= qos_target => kept.push((r, q)),
            q => excluded.push(Excluded {
                platform: r.meta.platform.clone(),
                qos: q,
                reason: match q {
                    Some(q) => format!("QoS {q} below target {qos_target}"),
                    None => "QoS undefined (no pricings requested)".into(),
                },
            }),
        }
    }
    kept.sort_by(|(a, _), (b, _)| {
        a.total_energy_j
            .total_cmp(&b.total_energy_j)
            .then_with(|| a.meta.platform.cmp(&b.meta.platform))
    });
    let best = kept.first().map_or(0.0, |(r, _)| r.total_energy_j);
    let worst = kept.last().map_or(0.0, |(r, _)| r.total_energy_j);
    let ratio = |e: f64, base: f64| if base > 0.0 { e / base } else { 1.0 };
    let rows = kept
        .iter()
        .map(|(r, q)| IsoQosRow {
            platform: r.meta.platform.clone(),
            model: r.meta.model.clone(),
            variant: r.meta.variant.clone(),
            governor: r.meta.governor.clone(),
            qos: *q,
            mean_power_w: r.mean_power_w,
            s_per_opt: r.s_per_opt,
            j_per_opt: r.j_per_opt,
            energy_j: r.total_energy_j,
            relative_energy: ratio(r.total_energy_j, best),
            energy_vs_worst: ratio(r.total_energy_j, worst),
        })
        .collect::<Vec<_>>();
    let diagnostic = rows
        .is_empty()
        .then(|| format!("no report reaches QoS {qos_target}; nothing to compare"));
    Ok(IsoQosTable {
        qos_target,
        rows,
        excluded,
        diagnostic,
    })
}

/// How per-node sessions of one scale-out run relate to the book.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScaleoutMode {
    /// Each node priced its own share of the book.
    Split,
    /// Every node priced the full book; a contract counts once per tick.
    Replicate,
}

impl FromStr for ScaleoutMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "split" => Ok(ScaleoutMode::Split),
            "replicate" => Ok(ScaleoutMode::Replicate),
            other => Err(Error::argument(format!("scale-out mode must be split or replicate, got {other:?}"))),
        }
    }
}

/// Combines per-node logs into one log for the whole platform. Worker ids
/// are renumbered node by node, so the slowest worker of any node sets the
/// tick's elapsed time. All nodes must have seen the same ticks.
pub fn merge_scaleout(nodes: &[SessionLog], mode: ScaleoutMode) -> Result<SessionLog> {
    let Some(first) = nodes.first() else {
        return Err(Error::argument("nothing to merge"));
    };
    let seqs: Vec<u32> = first.ticks.iter().map(|t| t.seq).collect();
    for (i, n) in nodes.iter().enumerate() {
        if n.ticks.iter().map(|t| t.seq).ne(seqs.iter().copied()) {
            return Err(Error::validation(format!("node {i} saw a different tick sequence")));
        }
    }

    let mut ticks = first.ticks.clone();
    for n in &nodes[1..] {
        for (t, other) in ticks.iter_mut().zip(&n.ticks) {
            t.arrival_ns = t.arrival_ns.min(other.arrival_ns);
        }
    }

    let mut offset = 0;
    let mut records = Vec::new();
    for n in nodes {
        for r in &n.records {
            let mut r = r.clone();
            r.worker_id += offset;
            records.push(r);
        }
        offset += n.meta.workers;
    }

    if mode == ScaleoutMode::Replicate {
        // Keep one record per (tick, contract): the earliest success if
        // there is one, otherwise the first record seen.
        let mut best: BTreeMap<(u32, String), crate::pricer::PricingRecord> = BTreeMap::new();
        for r in records {
            let key = (r.tick_seq, r.contract_id.clone());
            match best.get(&key) {
                None => {
                    best.insert(key, r);
                }
                Some(held) => {
                    let better = r.status == RecordStatus::Success
                        && (held.status != RecordStatus::Success || r.end_ns < held.end_ns);
                    if better {
                        best.insert(key, r);
                    }
                }
            }
        }
        records = best.into_values().collect();
    }
    records.sort_by(|a, b| a.tick_seq.cmp(&b.tick_seq).then(a.worker_id.cmp(&b.worker_id)));

    let mut meta = first.meta.clone();
    meta.workers = offset;
    meta.platform = scaled_platform(&first.meta.platform, nodes.len());
    meta.mode = match mode {
        ScaleoutMode::Split => "scaleout-split".into(),
        ScaleoutMode::Replicate => "scaleout-replicate".into(),
    };
    if mode == ScaleoutMode::Split {
        meta.book_size = nodes.iter().map(|n| n.meta.book_size).sum();
    }
    let errors: Vec<String> = nodes.iter().filter_map(|n| n.error.clone()).collect();
    let merged = SessionLog {
        meta,
        ticks,
        records,
        error: (!errors.is_empty()).then(|| errors.join("; ")),
    };
    merged.validate()?;
    Ok(merged)
}

/// `1x8x1` on 16 nodes becomes `16x8x1`; other tags get a `16*` prefix.
fn scaled_platform(tag: &str, nodes: usize) -> String {
    let parts: Vec<&str> = tag.split('x').collect();
    match parts.first().and_then(|n| n.parse::<usize>().ok()) {
        Some(per) if parts.len() == 3 => format!("{}x{}x{}", per * nodes, parts[1], parts[2]),
        _ => format!("{nodes}*{tag}"),
    }
}
