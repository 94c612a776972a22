use std::net::{Ipv4Addr, SocketAddr, SocketAddrV4, UdpSocket};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use socket2::{Domain, Protocol, Socket, Type};

use super::{encode_datagram, MarketTick, TickTrace, DEFAULT_GROUP, DEFAULT_PORT};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayConfig {
    pub group: SocketAddrV4,
    /// Local interface the datagrams leave from.
    pub interface: Ipv4Addr,
    /// Time compression factor; 2.0 halves every gap.
    pub speed: f64,
    /// Send back to back, ignoring timestamps.
    pub burst: bool,
    /// Sends later than this past their schedule are counted as late.
    pub jitter_budget: Duration,
    pub ttl: u32,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        ReplayConfig {
            group: SocketAddrV4::new(DEFAULT_GROUP, DEFAULT_PORT),
            interface: Ipv4Addr::LOCALHOST,
            speed: 1.0,
            burst: false,
            jitter_budget: Duration::from_millis(5),
            ttl: 1,
        }
    }
}

impl ReplayConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.group.ip().is_multicast() {
            return Err(Error::argument(format!("{} is not a multicast group", self.group.ip())));
        }
        if !(self.speed.is_finite() && self.speed > 0.0) {
            return Err(Error::argument(format!("replay speed must be positive, got {}", self.speed)));
        }
        Ok(())
    }

    /// Offset from replay start at which `tick` is due.
    pub fn schedule(&self, tick: &MarketTick, first_ns: u64) -> Duration {
        if self.burst {
            return Duration::ZERO;
        }
        let offset = (tick.timestamp_ns - first_ns) as f64 / self.speed;
        Duration::from_nanos(offset.round() as u64)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReplayStats {
    pub sent: usize,
    /// Worst delay of an actual send past its scheduled time.
    pub max_lateness_ns: u64,
    /// Sends that missed the jitter budget.
    pub late_count: usize,
    pub elapsed_ns: u64,
}

pub(crate) fn sender_socket(interface: Ipv4Addr, ttl: u32) -> Result<UdpSocket> {
    let socket = Socket::new(Domain::IPV4, Type::DGRAM, Some(Protocol::UDP))?;
    socket.set_multicast_if_v4(&interface)?;
    socket.set_multicast_ttl_v4(ttl)?;
    socket.set_multicast_loop_v4(true)?;
    socket.bind(&SocketAddr::from((interface, 0)).into())?;
    Ok(socket.into())
}

/// Sends each tick of `trace` as one datagram to the group, tick i no
/// earlier than `t_i / speed` after the first send.
pub fn replay(trace: &TickTrace, cfg: &ReplayConfig) -> Result<ReplayStats> {
    replay_with(trace, cfg, &mut |_| {})
}

/// As [`replay`], calling `on_sent` after every datagram.
pub fn replay_with(trace: &TickTrace, cfg: &ReplayConfig, on_sent: &mut dyn FnMut(&MarketTick)) -> Result<ReplayStats> {
    cfg.validate()?;
    let Some(first) = trace.ticks().first() else {
        return Err(Error::argument("cannot replay an empty trace"));
    };
    let first_ns = first.timestamp_ns;
    let socket = sender_socket(cfg.interface, cfg.ttl)?;
    let mut stats = ReplayStats::default();

    // Every deadline is measured from one origin so sleep overshoot does
    // not accumulate over a long session.
    let origin = Instant::now();
    for tick in trace.ticks() {
        let due = origin + cfg.schedule(tick, first_ns);
        loop {
            let now = Instant::now();
            if now >= due {
                break;
            }
            std::thread::sleep(due - now);
        }
        let payload = encode_datagram(tick);
        socket.send_to(&payload, cfg.group)?;
        let late = Instant::now().saturating_duration_since(due);
        if !cfg.burst {
            stats.max_lateness_ns = stats.max_lateness_ns.max(late.as_nanos() as u64);
            if late > cfg.jitter_budget {
                stats.late_count += 1;
            }
        }
        stats.sent += 1;
        on_sent(tick);
    }
    stats.elapsed_ns = origin.elapsed().as_nanos() as u64;
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::Utc;

    #[test]
    fn empty_trace_is_rejected() {
        let trace = TickTrace::new(Utc::now(), vec![]).unwrap();
        assert!(matches!(replay(&trace, &ReplayConfig::default()), Err(Error::Argument(_))));
    }

    #[test]
    fn bad_config_is_rejected() {
        let trace = TickTrace::new(Utc::now(), vec![MarketTick::new(0, 0, "FB", 1.0).unwrap()]).unwrap();
        let unicast = ReplayConfig {
            group: SocketAddrV4::new(Ipv4Addr::LOCALHOST, 9),
            ..ReplayConfig::default()
        };
        assert!(matches!(replay(&trace, &unicast), Err(Error::Argument(_))));
        let frozen = ReplayConfig {
            speed: 0.0,
            ..ReplayConfig::default()
        };
        assert!(matches!(replay(&trace, &frozen), Err(Error::Argument(_))));
    }

    #[test]
    fn schedule_scales_with_speed() {
        let tick = MarketTick::new(0, 3_000_000_000, "FB", 1.0).unwrap();
        let cfg = ReplayConfig {
            speed: 2.0,
            ..ReplayConfig::default()
        };
        assert_eq!(cfg.schedule(&tick, 1_000_000_000), Duration::from_secs(1));
        let burst = ReplayConfig {
            burst: true,
            ..cfg
        };
        assert_eq!(burst.schedule(&tick, 0), Duration::ZERO);
    }
}
