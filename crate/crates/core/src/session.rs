//! Hosts for the protocol state machines: a virtual-time driver over
//! [`SimLink`] and a wall-clock runner over [`UdpLink`].

use std::collections::HashSet;
use std::time::{Duration, Instant};

use crate::channel::{ChannelConfig, ChannelStats, Endpoint, SimLink, UdpLink};
use crate::codec::{serialize_weights, KeyMaterial, SessionKey};
use crate::error::{Error, Result};
use crate::frame::{decode_frame, encode_frame, Frame};
use crate::protocol::{Action, Event, Phase, ProtocolConfig, ReceiverState, SenderState};
use crate::rng::RngState;

/// Common face of the two endpoint machines.
pub trait Machine {
    fn advance(&mut self, event: Event, cfg: &ProtocolConfig) -> Vec<Action>;
    fn phase(&self) -> Phase;
    fn session(&self) -> Option<SessionKey>;
    fn state_hash(&self) -> u64;
}

macro_rules! impl_machine {
    ($t:ty) => {
        impl Machine for $t {
            fn advance(&mut self, event: Event, cfg: &ProtocolConfig) -> Vec<Action> {
                <$t>::advance(self, event, cfg)
            }
            fn phase(&self) -> Phase {
                <$t>::phase(self)
            }
            fn session(&self) -> Option<SessionKey> {
                <$t>::session(self)
            }
            fn state_hash(&self) -> u64 {
                <$t>::state_hash(self)
            }
        }
    };
}

impl_machine!(SenderState);
impl_machine!(ReceiverState);

fn ignored_only(actions: &[Action]) -> bool {
    actions.iter().all(|a| matches!(a, Action::Ignored(_)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExchangeOptions {
    /// Stop once the sender has opened this many rounds.
    pub max_rounds: u64,
    /// Re-deliver every accepted frame once more and require that it is a no-op.
    pub inject_replays: bool,
}

impl Default for ExchangeOptions {
    fn default() -> Self {
        Self { max_rounds: 10_000, inject_replays: false }
    }
}

/// Result of one simulated exchange.
#[derive(Debug, Clone, PartialEq)]
pub struct ExchangeOutcome {
    pub sender_phase: Phase,
    pub receiver_phase: Phase,
    pub sender_key: Option<SessionKey>,
    pub receiver_key: Option<SessionKey>,
    pub failure: Option<String>,
    /// Rounds opened by the sender.
    pub rounds: u64,
    /// Timeout-driven SYN repeats.
    pub repeats: u64,
    /// Rounds in which the sender's weights moved.
    pub updates: u64,
    pub ticks: u64,
    pub channel: ChannelStats,
    pub corrupted_delivered: u64,
    pub corrupted_rejected: u64,
    /// Corrupted copies that decoded anyway. Must stay zero.
    pub corrupted_accepted: u64,
    pub replays_checked: u64,
    /// Replays that changed state or produced traffic. Must stay zero.
    pub replay_violations: u64,
    pub capped: bool,
    /// Serialized weights of each side once it is established, for
    /// deriving further per-frame keys.
    pub sender_material: Option<KeyMaterial>,
    pub receiver_material: Option<KeyMaterial>,
}

impl ExchangeOutcome {
    pub fn established(&self) -> bool {
        self.sender_phase == Phase::Established && self.receiver_phase == Phase::Established
    }

    pub fn keys_agree(&self) -> bool {
        self.sender_key.is_some() && self.sender_key == self.receiver_key
    }

    pub fn bytes(&self) -> u64 {
        self.channel.bytes_sent
    }
}

struct Host<M> {
    machine: M,
    endpoint: Endpoint,
    timer: Option<u64>,
    accepted: HashSet<Vec<u8>>,
}

struct Counters {
    corrupted_delivered: u64,
    corrupted_rejected: u64,
    corrupted_accepted: u64,
    replays_checked: u64,
    replay_violations: u64,
    failure: Option<String>,
}

impl<M: Machine> Host<M> {
    fn apply(&mut self, actions: Vec<Action>, now: u64, link: &mut SimLink, c: &mut Counters) {
        for action in actions {
            match action {
                Action::SendFrame(f) => link.send(self.endpoint, &encode_frame(&f), now),
                Action::SetTimer(d) => self.timer = Some(now + d),
                Action::Fail(reason) => {
                    c.failure.get_or_insert(reason);
                }
                Action::DeliverKey(_) | Action::Ignored(_) => {}
            }
        }
    }

    fn fire(&mut self, event: Event, cfg: &ProtocolConfig, now: u64, link: &mut SimLink, c: &mut Counters) {
        let actions = self.machine.advance(event, cfg);
        self.apply(actions, now, link, c);
    }

    #[allow(clippy::too_many_arguments)]
    fn deliver(
        &mut self,
        bytes: Vec<u8>,
        corrupted: bool,
        cfg: &ProtocolConfig,
        opts: &ExchangeOptions,
        now: u64,
        link: &mut SimLink,
        c: &mut Counters,
    ) {
        if corrupted {
            c.corrupted_delivered += 1;
        }
        let frame = match decode_frame(&bytes) {
            Ok(f) => f,
            Err(Error::Integrity { .. }) if corrupted => {
                c.corrupted_rejected += 1;
                return;
            }
            Err(_) => {
                if corrupted {
                    c.corrupted_rejected += 1;
                }
                return;
            }
        };
        if corrupted {
            c.corrupted_accepted += 1;
        }
        if self.accepted.contains(&bytes) {
            self.check_replay(frame, cfg, c);
            return;
        }
        let actions = self.machine.advance(Event::FrameArrived(frame), cfg);
        let took = !ignored_only(&actions);
        self.apply(actions, now, link, c);
        if took {
            self.accepted.insert(bytes);
            if opts.inject_replays {
                self.check_replay(frame, cfg, c);
            }
        }
    }

    fn check_replay(&mut self, frame: Frame, cfg: &ProtocolConfig, c: &mut Counters) {
        c.replays_checked += 1;
        let before = self.machine.state_hash();
        let actions = self.machine.advance(Event::FrameArrived(frame), cfg);
        if !ignored_only(&actions) || self.machine.state_hash() != before {
            c.replay_violations += 1;
        }
    }
}

/// Drive a sender and a receiver over a simulated link until both finish,
/// the link goes quiet, or the round cap is hit.
pub fn run_exchange(
    sender_cfg: &ProtocolConfig,
    receiver_cfg: &ProtocolConfig,
    channel: ChannelConfig,
    seed: u64,
    opts: ExchangeOptions,
) -> Result<ExchangeOutcome> {
    let sender = SenderState::new(sender_cfg, RngState::stream(seed, 0))?;
    let receiver = ReceiverState::new(receiver_cfg, RngState::stream(seed, 1))?;
    drive(sender, receiver, sender_cfg, receiver_cfg, channel, opts)
}

/// As [`run_exchange`] with caller-built machines.
pub fn drive(
    sender: SenderState,
    receiver: ReceiverState,
    sender_cfg: &ProtocolConfig,
    receiver_cfg: &ProtocolConfig,
    channel: ChannelConfig,
    opts: ExchangeOptions,
) -> Result<ExchangeOutcome> {
    let mut link = SimLink::new(channel)?;
    let mut s = Host { machine: sender, endpoint: Endpoint::A, timer: None, accepted: HashSet::new() };
    let mut r = Host { machine: receiver, endpoint: Endpoint::B, timer: None, accepted: HashSet::new() };
    let mut c = Counters {
        corrupted_delivered: 0,
        corrupted_rejected: 0,
        corrupted_accepted: 0,
        replays_checked: 0,
        replay_violations: 0,
        failure: None,
    };
    let mut now = 0u64;
    let mut capped = false;
    r.fire(Event::Start, receiver_cfg, now, &mut link, &mut c);
    s.fire(Event::Start, sender_cfg, now, &mut link, &mut c);

    loop {
        if s.machine.phase().is_terminal() && r.machine.phase().is_terminal() {
            break;
        }
        if s.machine.stats().rounds > opts.max_rounds {
            capped = true;
            break;
        }
        let live_timer = |t: Option<u64>, p: Phase| t.filter(|_| !p.is_terminal());
        let next = [link.next_due(), live_timer(s.timer, s.machine.phase()), live_timer(r.timer, r.machine.phase())]
            .into_iter()
            .flatten()
            .min();
        let Some(next) = next else { break };
        now = now.max(next);

        for d in link.poll(Endpoint::B, now) {
            r.deliver(d.bytes, d.corrupted, receiver_cfg, &opts, now, &mut link, &mut c);
        }
        for d in link.poll(Endpoint::A, now) {
            s.deliver(d.bytes, d.corrupted, sender_cfg, &opts, now, &mut link, &mut c);
        }
        if s.timer.is_some_and(|t| t <= now) {
            s.timer = None;
            s.fire(Event::TimerFired, sender_cfg, now, &mut link, &mut c);
        }
        if r.timer.is_some_and(|t| t <= now) {
            r.timer = None;
            r.fire(Event::TimerFired, receiver_cfg, now, &mut link, &mut c);
        }
    }

    let stats = s.machine.stats();
    Ok(ExchangeOutcome {
        sender_phase: s.machine.phase(),
        receiver_phase: r.machine.phase(),
        sender_key: s.machine.session(),
        receiver_key: r.machine.session(),
        failure: c.failure,
        rounds: stats.rounds,
        repeats: stats.repeats,
        updates: stats.updates,
        ticks: now,
        channel: link.stats(),
        corrupted_delivered: c.corrupted_delivered,
        corrupted_rejected: c.corrupted_rejected,
        corrupted_accepted: c.corrupted_accepted,
        replays_checked: c.replays_checked,
        replay_violations: c.replay_violations,
        capped,
        sender_material: (s.machine.phase() == Phase::Established).then(|| serialize_weights(s.machine.network())),
        receiver_material: (r.machine.phase() == Phase::Established).then(|| serialize_weights(r.machine.network())),
    })
}

/// What one real-transport endpoint saw.
#[derive(Debug, Clone, PartialEq)]
pub struct EndpointReport {
    pub phase: Phase,
    pub key: Option<SessionKey>,
    pub failure: Option<String>,
    pub channel: ChannelStats,
    pub rejected_frames: u64,
}

/// Run one endpoint over UDP, mapping one tick to `tick`.
///
/// A receiver keeps answering for one timeout period after establishment in
/// case its final AUTH was lost.
pub fn run_udp_endpoint<M: Machine>(
    mut machine: M,
    cfg: &ProtocolConfig,
    link: &UdpLink,
    tick: Duration,
    linger: bool,
) -> Result<EndpointReport> {
    let mut timer: Option<Instant> = None;
    let mut failure = None;
    let mut rejected = 0;
    let mut apply = |actions: Vec<Action>, timer: &mut Option<Instant>| -> Result<()> {
        for a in actions {
            match a {
                Action::SendFrame(f) => link.send(&encode_frame(&f))?,
                Action::SetTimer(d) => *timer = Some(Instant::now() + tick * d as u32),
                Action::Fail(reason) => failure = Some(reason),
                Action::DeliverKey(_) | Action::Ignored(_) => {}
            }
        }
        Ok(())
    };
    apply(machine.advance(Event::Start, cfg), &mut timer)?;
    let mut linger_until: Option<Instant> = None;
    loop {
        match machine.phase() {
            Phase::Failed => break,
            Phase::Established if !linger => break,
            Phase::Established => {
                let until = *linger_until.get_or_insert_with(|| Instant::now() + tick * cfg.timeout_ticks as u32);
                timer = Some(until);
            }
            _ => {}
        }
        let wait = timer.map_or(Duration::from_secs(3600), |t| t.saturating_duration_since(Instant::now()));
        match link.recv(wait)? {
            Some(bytes) => match decode_frame(&bytes) {
                Ok(frame) => apply(machine.advance(Event::FrameArrived(frame), cfg), &mut timer)?,
                Err(_) => rejected += 1,
            },
            None if timer.is_some_and(|t| Instant::now() >= t) => {
                if linger_until.is_some() {
                    break;
                }
                timer = None;
                apply(machine.advance(Event::TimerFired, cfg), &mut timer)?;
            }
            None => {}
        }
    }
    Ok(EndpointReport {
        phase: machine.phase(),
        key: machine.session(),
        failure,
        channel: link.stats(),
        rejected_frames: rejected,
    })
}
