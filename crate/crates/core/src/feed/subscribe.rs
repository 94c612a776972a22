use std::net::{Ipv4Addr, SocketAddr, SocketAddrV4, UdpSocket};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use socket2::{Domain, Protocol, Socket, Type};

use super::{decode_datagram, MarketTick};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubscribeStats {
    pub received: usize,
    /// Sequence numbers skipped over, plus any missing tail reported
    /// through [`Subscriber::finish`].
    pub gaps: u64,
    pub malformed: usize,
    /// Datagrams whose seq was below one already delivered.
    pub out_of_order: usize,
}

/// One membership of a multicast group. Several subscribers to the same
/// group and port each receive every datagram.
#[derive(Debug)]
pub struct Subscriber {
    socket: UdpSocket,
    group: SocketAddrV4,
    interface: Ipv4Addr,
    next_seq: u32,
    stats: SubscribeStats,
    buf: Vec<u8>,
}

impl Subscriber {
    pub fn join(group: SocketAddrV4, interface: Ipv4Addr) -> Result<Self> {
        if !group.ip().is_multicast() {
            return Err(Error::argument(format!("{} is not a multicast group", group.ip())));
        }
        let socket = Socket::new(Domain::IPV4, Type::DGRAM, Some(Protocol::UDP))?;
        socket.set_reuse_address(true)?;
        #[cfg(unix)]
        socket.set_reuse_port(true)?;
        // A deep buffer absorbs burst replays; the kernel caps it anyway.
        let _ = socket.set_recv_buffer_size(4 << 20);
        socket.bind(&SocketAddr::from((Ipv4Addr::UNSPECIFIED, group.port())).into())?;
        socket.join_multicast_v4(group.ip(), &interface)?;
        Ok(Subscriber {
            socket: socket.into(),
            group,
            interface,
            next_seq: 0,
            stats: SubscribeStats::default(),
            buf: vec![0; 2048],
        })
    }

    pub fn group(&self) -> SocketAddrV4 {
        self.group
    }

    /// Next well-formed tick, or `None` once `timeout` passes without one.
    /// Malformed datagrams are counted and skipped.
    pub fn recv(&mut self, timeout: Duration) -> Result<Option<MarketTick>> {
        let deadline = Instant::now() + timeout;
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            if left.is_zero() {
                return Ok(None);
            }
            self.socket.set_read_timeout(Some(left))?;
            let len = match self.socket.recv(&mut self.buf) {
                Ok(len) => len,
                Err(e) if matches!(e.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut) => {
                    return Ok(None)
                }
                Err(e) if e.kind() == std::io::ErrorKind::Interrupted => continue,
                Err(e) => return Err(e.into()),
            };
            match decode_datagram(&self.buf[..len]) {
                Ok(tick) => {
                    self.account(tick.seq);
                    return Ok(Some(tick));
                }
                Err(_) => self.stats.malformed += 1,
            }
        }
    }

    fn account(&mut self, seq: u32) {
        self.stats.received += 1;
        if seq >= self.next_seq {
            self.stats.gaps += u64::from(seq - self.next_seq);
            self.next_seq = seq.wrapping_add(1);
        } else {
            self.stats.out_of_order += 1;
        }
    }

    /// Receives until `count` ticks have arrived or no datagram shows up for
    /// `idle`.
    pub fn collect(&mut self, count: usize, idle: Duration) -> Result<Vec<MarketTick>> {
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            match self.recv(idle)? {
                Some(tick) => out.push(tick),
                None => break,
            }
        }
        Ok(out)
    }

    /// Counts sequence numbers below `total` that never arrived after the
    /// last delivered one, and returns the final statistics.
    pub fn finish(&mut self, total: Option<u32>) -> SubscribeStats {
        if let Some(total) = total {
            if total > self.next_seq {
                self.stats.gaps += u64::from(total - self.next_seq);
                self.next_seq = total;
            }
        }
        self.stats
    }

    pub fn stats(&self) -> SubscribeStats {
        self.stats
    }
}

impl Drop for Subscriber {
    fn drop(&mut self) {
        let _ = self.socket.leave_multicast_v4(self.group.ip(), &self.interface);
    }
}
