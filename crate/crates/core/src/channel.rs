//! Datagram links: an impairment-injecting simulated link on virtual ticks,
//! and a thin UDP binding.

use std::collections::BTreeMap;
use std::io::ErrorKind;
use std::net::{SocketAddr, ToSocketAddrs, UdpSocket};
use std::sync::Mutex;
use std::time::Duration;

use crate::error::{param, Error, Result};
use crate::rng::RngState;

/// Largest frame plus headroom; every frame fits one datagram.
pub const MAX_DATAGRAM: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelConfig {
    pub drop_prob: f64,
    pub dup_prob: f64,
    pub corrupt_prob: f64,
    pub reorder_prob: f64,
    pub latency_ticks: u64,
    pub rng_seed: u64,
}

impl ChannelConfig {
    pub fn lossless(rng_seed: u64) -> Self {
        Self { drop_prob: 0.0, dup_prob: 0.0, corrupt_prob: 0.0, reorder_prob: 0.0, latency_ticks: 1, rng_seed }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("drop_prob", self.drop_prob),
            ("dup_prob", self.dup_prob),
            ("corrupt_prob", self.corrupt_prob),
            ("reorder_prob", self.reorder_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(param(format!("{name} = {p} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ChannelStats {
    pub frames_sent: u64,
    pub frames_delivered: u64,
    pub bytes_sent: u64,
    pub dropped: u64,
    pub duplicated: u64,
    pub corrupted: u64,
    pub reordered: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Endpoint {
    A,
    B,
}

impl Endpoint {
    pub fn peer(self) -> Self {
        match self {
            Endpoint::A => Endpoint::B,
            Endpoint::B => Endpoint::A,
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Delivery {
    pub bytes: Vec<u8>,
    /// Set when the link flipped a bit in this copy.
    pub corrupted: bool,
    /// Set for the extra copy produced by duplication.
    pub duplicate: bool,
}

/// Two-endpoint simulated link. Deterministic in (config, traffic, ticks).
#[derive(Debug, Clone)]
pub struct SimLink {
    cfg: ChannelConfig,
    rng: RngState,
    seq: u64,
    // per destination: (deliver_at, seq) -> datagram
    queues: [BTreeMap<(u64, u64), Delivery>; 2],
    stats: ChannelStats,
}

impl SimLink {
    pub fn new(cfg: ChannelConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            rng: RngState::from_u64(cfg.rng_seed),
            seq: 0,
            queues: [BTreeMap::new(), BTreeMap::new()],
            stats: ChannelStats::default(),
        })
    }

    pub fn stats(&self) -> ChannelStats {
        self.stats
    }

    pub fn config(&self) -> &ChannelConfig {
        &self.cfg
    }

    /// Send from `from` to its peer at virtual time `now`.
    pub fn send(&mut self, from: Endpoint, bytes: &[u8], now: u64) {
        assert!(!bytes.is_empty(), "empty datagram");
        self.stats.frames_sent += 1;
        self.stats.bytes_sent += bytes.len() as u64;
        if self.rng.chance(self.cfg.drop_prob) {
            self.stats.dropped += 1;
            return;
        }
        let copies = if self.rng.chance(self.cfg.dup_prob) {
            self.stats.duplicated += 1;
            2
        } else {
            1
        };
        for copy in 0..copies {
            let mut data = bytes.to_vec();
            let corrupted = self.rng.chance(self.cfg.corrupt_prob);
            if corrupted {
                let bit = self.rng.below(data.len() as u64 * 8) as usize;
                data[bit / 8] ^= 0x80 >> (bit % 8);
                self.stats.corrupted += 1;
            }
            let mut at = now + self.cfg.latency_ticks + copy as u64;
            if self.rng.chance(self.cfg.reorder_prob) {
                // held back long enough for later traffic to overtake it
                at += 1 + self.rng.below(2 * self.cfg.latency_ticks + 4);
                self.stats.reordered += 1;
            }
            let key = (at, self.seq);
            self.seq += 1;
            self.queues[from.peer().index()].insert(key, Delivery { bytes: data, corrupted, duplicate: copy > 0 });
        }
    }

    /// Everything addressed to `to` that is due by `now`, in schedule order.
    pub fn poll(&mut self, to: Endpoint, now: u64) -> Vec<Delivery> {
        let queue = &mut self.queues[to.index()];
        let later = queue.split_off(&(now + 1, 0));
        let due = std::mem::replace(queue, later);
        self.stats.frames_delivered += due.len() as u64;
        due.into_values().collect()
    }

    /// Earliest pending delivery tick for any endpoint.
    pub fn next_due(&self) -> Option<u64> {
        self.queues.iter().filter_map(|q| q.keys().next().map(|k| k.0)).min()
    }

    pub fn is_idle(&self) -> bool {
        self.queues.iter().all(BTreeMap::is_empty)
    }
}

/// One endpoint of a real datagram link.
///
/// `send` may be called from any thread while another blocks in `recv`.
#[derive(Debug)]
pub struct UdpLink {
    socket: UdpSocket,
    peer: Mutex<Option<SocketAddr>>,
    stats: Mutex<ChannelStats>,
}

impl UdpLink {
    /// Bind and wait for a peer; the first datagram received fixes it.
    pub fn listen(addr: impl ToSocketAddrs) -> Result<Self> {
        let socket = UdpSocket::bind(addr).map_err(io_err)?;
        Ok(Self { socket, peer: Mutex::new(None), stats: Mutex::default() })
    }

    /// Bind an ephemeral local port and talk to `peer`.
    pub fn connect(peer: impl ToSocketAddrs) -> Result<Self> {
        let peer =
            peer.to_socket_addrs().map_err(io_err)?.next().ok_or_else(|| param("peer address resolved to nothing"))?;
        let local: SocketAddr = if peer.is_ipv4() { "0.0.0.0:0" } else { "[::]:0" }.parse().unwrap();
        let socket = UdpSocket::bind(local).map_err(io_err)?;
        Ok(Self { socket, peer: Mutex::new(Some(peer)), stats: Mutex::default() })
    }

    pub fn local_addr(&self) -> Result<SocketAddr> {
        self.socket.local_addr().map_err(io_err)
    }

    pub fn stats(&self) -> ChannelStats {
        *self.stats.lock().unwrap()
    }

    pub fn send(&self, bytes: &[u8]) -> Result<()> {
        let peer = self.peer.lock().unwrap().ok_or_else(|| Error::Protocol("no peer yet".into()))?;
        self.socket.send_to(bytes, peer).map_err(io_err)?;
        let mut s = self.stats.lock().unwrap();
        s.frames_sent += 1;
        s.bytes_sent += bytes.len() as u64;
        Ok(())
    }

    /// Block up to `timeout`; `Ok(None)` on timeout. Datagrams from a
    /// foreign address once the peer is known are discarded.
    pub fn recv(&self, timeout: Duration) -> Result<Option<Vec<u8>>> {
        self.socket.set_read_timeout(Some(timeout.max(Duration::from_millis(1)))).map_err(io_err)?;
        let mut buf = [0u8; MAX_DATAGRAM];
        loop {
            match self.socket.recv_from(&mut buf) {
                Ok((len, from)) => {
                    let mut peer = self.peer.lock().unwrap();
                    match *peer {
                        Some(p) if p != from => continue,
                        None => *peer = Some(from),
                        _ => {}
                    }
                    self.stats.lock().unwrap().frames_delivered += 1;
                    return Ok(Some(buf[..len].to_vec()));
                }
                Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => return Ok(None),
                Err(e) => return Err(io_err(e)),
            }
        }
    }
}

fn io_err(e: std::io::Error) -> Error {
    Error::Transport(e.to_string())
}
