//! Sender and receiver state machines for key generation and certification.
//!
//! Both machines are pure transition functions over an owned state: an
//! [`Event`] goes in, a list of [`Action`]s comes out. Transport and timers
//! belong to the host.
//!
//! Key generation: the sender opens each round with a SYN carrying the input
//! seed, its output and `E_k(ST)`. The receiver first runs the
//! synchronization test; if it fails it evaluates the same inputs and either
//! learns and answers ACK_SYN or answers NAK_SYN. The sender learns only on
//! ACK_SYN. Once the test passes the receiver picks a key group and answers
//! FIN_SYN. Certification follows: the sender proves SSC, then the receiver
//! proves RSC, each encrypted under the session key.
//!
//! A timeout repeats the outstanding round under a fresh id. The receiver
//! answers a repeated round from its cache instead of learning twice, so a
//! lost reply never leaves the two weight vectors one step apart.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use sha2::{Digest, Sha256};

use crate::codec::{extract_key, otp_block, serialize_weights, SessionKey, KEY_BYTES};
use crate::error::{param, Result};
use crate::frame::{Frame, Payload};
use crate::rng::RngState;
use crate::tpm::{Inputs, LearningRule, TpmNetwork, TpmParams};

pub const DEFAULT_TIMEOUT_TICKS: u64 = 500;
pub const DEFAULT_MAX_ATTEMPTS: u32 = 5;
pub const DEFAULT_ST: [u8; KEY_BYTES] = *b"KEYGEN-SYNC-TEST";

/// Where the per-round input seed comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SeedMode {
    /// A fresh seed travels in every SYN.
    InFrame,
    /// Both sides hold this secret. The SYN seed field carries a public
    /// nonce and the input seed is derived from secret and nonce.
    PreShared([u8; 16]),
}

/// Which key encrypts ST in the synchronization test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SyncCheck {
    /// First 128 bits of a SHA-256 digest over all serialized weights.
    WholeVector,
    /// First 128 serialized bits only. Units can agree early while the rest
    /// of the vector still differs, which yields premature FIN_SYN frames.
    LeadingBits,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ProtocolConfig {
    pub params: TpmParams,
    pub rule: LearningRule,
    /// Public synchronization-test plaintext.
    pub st: [u8; KEY_BYTES],
    /// Sender secret code.
    pub ssc: [u8; KEY_BYTES],
    /// Receiver secret code.
    pub rsc: [u8; KEY_BYTES],
    pub timeout_ticks: u64,
    pub max_attempts: u32,
    pub seed_mode: SeedMode,
    pub sync_check: SyncCheck,
}

impl ProtocolConfig {
    pub fn new(params: TpmParams, ssc: [u8; KEY_BYTES], rsc: [u8; KEY_BYTES]) -> Self {
        Self {
            params,
            rule: LearningRule::RandomWalk,
            st: DEFAULT_ST,
            ssc,
            rsc,
            timeout_ticks: DEFAULT_TIMEOUT_TICKS,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
            seed_mode: SeedMode::InFrame,
            sync_check: SyncCheck::WholeVector,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.timeout_ticks == 0 || self.max_attempts == 0 {
            return Err(param("timeout_ticks and max_attempts must be >= 1"));
        }
        if self.params.weight_count() < KEY_BYTES {
            return Err(param(format!("k*n = {} weights cannot fill a 128-bit key", self.params.weight_count())));
        }
        Ok(())
    }

    /// Number of selectable 128-bit key groups.
    pub fn key_groups(&self) -> usize {
        self.params.weight_count() / KEY_BYTES
    }

    fn receiver_idle_ticks(&self) -> u64 {
        self.timeout_ticks.saturating_mul(self.max_attempts as u64 + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    Idle,
    Synchronizing,
    /// Receiver only: FIN_SYN sent, waiting for the sender's AUTH.
    AwaitFin,
    Certifying,
    Established,
    Failed,
}

impl Phase {
    pub fn is_terminal(self) -> bool {
        matches!(self, Phase::Established | Phase::Failed)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Event {
    Start,
    FrameArrived(Frame),
    TimerFired,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    SendFrame(Frame),
    /// (Re)arm the endpoint's single timer this many ticks from now.
    SetTimer(u64),
    DeliverKey(SessionKey),
    Fail(String),
    /// The event was ignored; nothing changed.
    Ignored(String),
}

/// True iff `frame.id` is strictly newer than anything accepted so far.
pub fn integrity_check(frame: &Frame, last_seen_id: Option<u32>) -> bool {
    last_seen_id.is_none_or(|last| frame.id > last)
}

/// The 128-bit key that encrypts ST for the synchronization test.
pub fn sync_key(net: &TpmNetwork, check: SyncCheck) -> [u8; KEY_BYTES] {
    let material = serialize_weights(net);
    match check {
        SyncCheck::LeadingBits => extract_key(&material, 0).expect("validated: at least 128 bits").key,
        SyncCheck::WholeVector => {
            let digest = Sha256::digest(material.as_bytes());
            digest[..KEY_BYTES].try_into().unwrap()
        }
    }
}

/// Decrypt `ek_st` with the first 128 serialized weight bits and compare with ST.
pub fn sync_test(net: &TpmNetwork, ek_st: &[u8; KEY_BYTES], st: &[u8; KEY_BYTES]) -> bool {
    sync_test_with(net, ek_st, st, SyncCheck::LeadingBits)
}

pub fn sync_test_with(net: &TpmNetwork, ek_st: &[u8; KEY_BYTES], st: &[u8; KEY_BYTES], check: SyncCheck) -> bool {
    otp_block(&sync_key(net, check), ek_st) == *st
}

fn derive_round_seed(secret: &[u8; 16], nonce: &[u8; 16]) -> [u8; 16] {
    let digest = Sha256::new().chain_update(secret).chain_update(nonce).finalize();
    digest[..16].try_into().unwrap()
}

/// Inputs for a round whose SYN seed field is `wire_seed`.
pub fn round_inputs(cfg: &ProtocolConfig, wire_seed: &[u8; 16]) -> Inputs {
    let seed = match cfg.seed_mode {
        SeedMode::InFrame => *wire_seed,
        SeedMode::PreShared(secret) => derive_round_seed(&secret, wire_seed),
    };
    RngState::seed_from_bytes(&seed).draw_inputs(cfg.params.k, cfg.params.n).0
}

fn hash_of<T: Hash>(value: &T) -> u64 {
    let mut h = DefaultHasher::new();
    value.hash(&mut h);
    h.finish()
}

/// Counters kept by either endpoint.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct EndpointStats {
    pub frames_sent: u64,
    /// Synchronization rounds opened (sender) or answered fresh (receiver).
    pub rounds: u64,
    /// Repeated SYNs sent (sender) or answered from cache (receiver).
    pub repeats: u64,
    /// Rounds in which this endpoint's weights were updated.
    pub updates: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct Round {
    id: u32,
    payload: Payload,
    inputs: Inputs,
    sigmas: Vec<i8>,
    tau: i8,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SenderState {
    phase: Phase,
    net: TpmNetwork,
    rng: RngState,
    next_id: u32,
    last_seen_id: Option<u32>,
    attempts: u32,
    round: Option<Round>,
    auth_id: Option<u32>,
    session: Option<SessionKey>,
    stats: EndpointStats,
}

impl SenderState {
    /// Weights are drawn from `rng`, which then keeps supplying round seeds.
    pub fn new(cfg: &ProtocolConfig, mut rng: RngState) -> Result<Self> {
        cfg.validate()?;
        let net = TpmNetwork::init(cfg.params, &mut rng)?;
        Ok(Self::with_network(net, rng))
    }

    pub fn with_network(net: TpmNetwork, rng: RngState) -> Self {
        Self {
            phase: Phase::Idle,
            net,
            rng,
            next_id: 0,
            last_seen_id: None,
            attempts: 0,
            round: None,
            auth_id: None,
            session: None,
            stats: EndpointStats::default(),
        }
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn network(&self) -> &TpmNetwork {
        &self.net
    }

    pub fn session(&self) -> Option<SessionKey> {
        self.session
    }

    pub fn stats(&self) -> EndpointStats {
        self.stats
    }

    pub fn next_id(&self) -> u32 {
        self.next_id
    }

    pub fn state_hash(&self) -> u64 {
        hash_of(self)
    }

    fn take_id(&mut self) -> u32 {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    fn send(&mut self, frame: Frame, out: &mut Vec<Action>) {
        self.stats.frames_sent += 1;
        out.push(Action::SendFrame(frame));
    }

    fn fail(&mut self, reason: &str, out: &mut Vec<Action>) {
        self.phase = Phase::Failed;
        self.round = None;
        out.push(Action::Fail(reason.to_string()));
    }

    fn ignore(&mut self, reason: String, out: &mut Vec<Action>) {
        out.push(Action::Ignored(reason));
    }

    fn start_round(&mut self, cfg: &ProtocolConfig, out: &mut Vec<Action>) {
        let id = self.take_id();
        let seed = self.rng.bytes16();
        let inputs = round_inputs(cfg, &seed);
        let (sigmas, tau) = self.net.outputs(&inputs).expect("inputs drawn with network shape");
        let ek_st = otp_block(&sync_key(&self.net, cfg.sync_check), &cfg.st);
        let payload = Payload::Syn { seed, tau, ek_st };
        self.round = Some(Round { id, payload, inputs, sigmas, tau });
        self.attempts = 1;
        self.stats.rounds += 1;
        self.phase = Phase::Synchronizing;
        self.send(Frame { id, payload }, out);
        out.push(Action::SetTimer(cfg.timeout_ticks));
    }

    fn repeat_round(&mut self, cfg: &ProtocolConfig, out: &mut Vec<Action>) {
        let id = self.take_id();
        let round = self.round.as_mut().expect("synchronizing with a round");
        round.id = id;
        let payload = round.payload;
        self.attempts += 1;
        self.stats.repeats += 1;
        self.send(Frame { id, payload }, out);
        out.push(Action::SetTimer(cfg.timeout_ticks));
    }

    fn send_auth(&mut self, cfg: &ProtocolConfig, out: &mut Vec<Action>) {
        let key = self.session.expect("certifying with a session").key;
        let id = self.take_id();
        self.auth_id = Some(id);
        self.attempts += 1;
        self.send(Frame { id, payload: Payload::Auth { ek_code: otp_block(&key, &cfg.ssc) } }, out);
        out.push(Action::SetTimer(cfg.timeout_ticks));
    }

    pub fn advance(&mut self, event: Event, cfg: &ProtocolConfig) -> Vec<Action> {
        let mut out = Vec::new();
        match event {
            Event::Start => {
                if self.phase == Phase::Idle {
                    self.start_round(cfg, &mut out);
                } else {
                    self.ignore(format!("start in phase {:?}", self.phase), &mut out);
                }
            }
            Event::TimerFired => match self.phase {
                Phase::Synchronizing | Phase::Certifying if self.attempts >= cfg.max_attempts => {
                    self.fail("attempts exceeded", &mut out);
                }
                Phase::Synchronizing => self.repeat_round(cfg, &mut out),
                Phase::Certifying => self.send_auth(cfg, &mut out),
                phase => self.ignore(format!("timer in phase {phase:?}"), &mut out),
            },
            Event::FrameArrived(frame) => self.on_frame(frame, cfg, &mut out),
        }
        out
    }

    fn on_frame(&mut self, frame: Frame, cfg: &ProtocolConfig, out: &mut Vec<Action>) {
        if !integrity_check(&frame, self.last_seen_id) {
            return self.ignore(format!("stale id {}", frame.id), out);
        }
        match (self.phase, frame.payload) {
            (Phase::Synchronizing, Payload::AckSyn { .. } | Payload::NakSyn { .. } | Payload::FinSyn { .. })
                if self.round.as_ref().is_some_and(|r| r.id == frame.id) =>
            {
                let round = self.round.take().expect("checked");
                self.last_seen_id = Some(frame.id);
                self.attempts = 0;
                match frame.payload {
                    Payload::AckSyn { tau } if tau == round.tau => {
                        self.net.learn_units(&round.inputs, &round.sigmas, round.tau, cfg.rule);
                        self.stats.updates += 1;
                        self.start_round(cfg, out);
                    }
                    Payload::AckSyn { .. } | Payload::NakSyn { .. } => self.start_round(cfg, out),
                    Payload::FinSyn { iv } => match extract_key(&serialize_weights(&self.net), iv) {
                        Ok(key) => {
                            self.session = Some(key);
                            self.phase = Phase::Certifying;
                            self.send_auth(cfg, out);
                        }
                        Err(_) => self.fail("index vector out of range", out),
                    },
                    _ => unreachable!(),
                }
            }
            (Phase::Certifying, Payload::Auth { ek_code }) if self.auth_id == Some(frame.id) => {
                self.last_seen_id = Some(frame.id);
                let key = self.session.expect("certifying with a session");
                if otp_block(&key.key, &ek_code) == cfg.rsc {
                    self.phase = Phase::Established;
                    out.push(Action::DeliverKey(key));
                } else {
                    self.fail("receiver certification failed", out);
                }
            }
            (phase, _) => self.ignore(format!("{} id {} in phase {phase:?}", frame.command().name(), frame.id), out),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ReceiverState {
    phase: Phase,
    net: TpmNetwork,
    rng: RngState,
    last_seen_id: Option<u32>,
    /// Last fresh SYN payload and the reply it got.
    last_answer: Option<(Payload, Payload)>,
    pending: Option<SessionKey>,
    session: Option<SessionKey>,
    stats: EndpointStats,
}

impl ReceiverState {
    pub fn new(cfg: &ProtocolConfig, mut rng: RngState) -> Result<Self> {
        cfg.validate()?;
        let net = TpmNetwork::init(cfg.params, &mut rng)?;
        Ok(Self::with_network(net, rng))
    }

    pub fn with_network(net: TpmNetwork, rng: RngState) -> Self {
        Self {
            phase: Phase::Idle,
            net,
            rng,
            last_seen_id: None,
            last_answer: None,
            pending: None,
            session: None,
            stats: EndpointStats::default(),
        }
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn network(&self) -> &TpmNetwork {
        &self.net
    }

    pub fn session(&self) -> Option<SessionKey> {
        self.session
    }

    pub fn stats(&self) -> EndpointStats {
        self.stats
    }

    pub fn state_hash(&self) -> u64 {
        hash_of(self)
    }

    fn send(&mut self, frame: Frame, out: &mut Vec<Action>) {
        self.stats.frames_sent += 1;
        out.push(Action::SendFrame(frame));
    }

    fn fail(&mut self, reason: &str, out: &mut Vec<Action>) {
        self.phase = Phase::Failed;
        self.pending = None;
        out.push(Action::Fail(reason.to_string()));
    }

    pub fn advance(&mut self, event: Event, cfg: &ProtocolConfig) -> Vec<Action> {
        let mut out = Vec::new();
        match event {
            Event::Start => {
                if self.phase == Phase::Idle {
                    self.phase = Phase::Synchronizing;
                    out.push(Action::SetTimer(cfg.receiver_idle_ticks()));
                } else {
                    out.push(Action::Ignored(format!("start in phase {:?}", self.phase)));
                }
            }
            Event::TimerFired => {
                if self.phase.is_terminal() {
                    out.push(Action::Ignored("timer after completion".into()));
                } else {
                    self.fail("peer silent", &mut out);
                }
            }
            Event::FrameArrived(frame) => self.on_frame(frame, cfg, &mut out),
        }
        out
    }

    fn on_frame(&mut self, frame: Frame, cfg: &ProtocolConfig, out: &mut Vec<Action>) {
        if self.phase == Phase::Failed {
            return out.push(Action::Ignored("endpoint failed".into()));
        }
        if !integrity_check(&frame, self.last_seen_id) {
            return out.push(Action::Ignored(format!("stale id {}", frame.id)));
        }
        match (self.phase, frame.payload) {
            (Phase::Idle | Phase::Synchronizing | Phase::AwaitFin, Payload::Syn { seed, tau, ek_st }) => {
                self.last_seen_id = Some(frame.id);
                match self.last_answer {
                    Some((syn, reply)) if syn == frame.payload => {
                        self.stats.repeats += 1;
                        self.send(Frame { id: frame.id, payload: reply }, out);
                    }
                    _ => {
                        self.stats.rounds += 1;
                        let reply = self.on_syn(seed, tau, ek_st, cfg);
                        self.last_answer = Some((frame.payload, reply));
                        self.send(Frame { id: frame.id, payload: reply }, out);
                    }
                }
                out.push(Action::SetTimer(cfg.receiver_idle_ticks()));
            }
            (Phase::AwaitFin, Payload::Auth { ek_code }) => {
                self.last_seen_id = Some(frame.id);
                let key = self.pending.take().expect("awaiting with a pending key");
                self.session = Some(key);
                self.phase = Phase::Certifying;
                if otp_block(&key.key, &ek_code) == cfg.ssc {
                    self.phase = Phase::Established;
                    let reply = Payload::Auth { ek_code: otp_block(&key.key, &cfg.rsc) };
                    self.send(Frame { id: frame.id, payload: reply }, out);
                    out.push(Action::DeliverKey(key));
                } else {
                    self.session = None;
                    self.fail("sender certification failed", out);
                }
            }
            (Phase::Established, Payload::Auth { ek_code }) => {
                // the sender retransmits AUTH when our answer was lost
                let key = self.session.expect("established with a session");
                if otp_block(&key.key, &ek_code) == cfg.ssc {
                    self.last_seen_id = Some(frame.id);
                    let reply = Payload::Auth { ek_code: otp_block(&key.key, &cfg.rsc) };
                    self.send(Frame { id: frame.id, payload: reply }, out);
                } else {
                    out.push(Action::Ignored("AUTH with wrong code after establishment".into()));
                }
            }
            (phase, _) => {
                out.push(Action::Ignored(format!("{} id {} in phase {phase:?}", frame.command().name(), frame.id)))
            }
        }
    }

    /// Handle a fresh round and return the reply payload.
    fn on_syn(&mut self, wire_seed: [u8; 16], sender_tau: i8, ek_st: [u8; 16], cfg: &ProtocolConfig) -> Payload {
        if sync_test_with(&self.net, &ek_st, &cfg.st, cfg.sync_check) {
            let key = match self.pending {
                Some(key) => key,
                None => {
                    let iv = self.rng.below(cfg.key_groups() as u64) as u8;
                    let key = extract_key(&serialize_weights(&self.net), iv).expect("iv below group count");
                    self.pending = Some(key);
                    key
                }
            };
            self.phase = Phase::AwaitFin;
            return Payload::FinSyn { iv: key.iv };
        }
        self.pending = None;
        self.phase = Phase::Synchronizing;
        let inputs = round_inputs(cfg, &wire_seed);
        let (sigmas, tau) = self.net.outputs(&inputs).expect("inputs drawn with network shape");
        if tau == sender_tau {
            self.net.learn_units(&inputs, &sigmas, tau, cfg.rule);
            self.stats.updates += 1;
            Payload::AckSyn { tau }
        } else {
            Payload::NakSyn { tau }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ProtocolConfig {
        ProtocolConfig::new(TpmParams::new(3, 32, 3).unwrap(), [0x11; 16], [0x22; 16])
    }

    fn sent(actions: &[Action]) -> Vec<Frame> {
        actions
            .iter()
            .filter_map(|a| match a {
                Action::SendFrame(f) => Some(*f),
                _ => None,
            })
            .collect()
    }

    fn synced_pair(cfg: &ProtocolConfig) -> (SenderState, ReceiverState) {
        let net = TpmNetwork::init(cfg.params, &mut RngState::from_u64(9)).unwrap();
        (
            SenderState::with_network(net.clone(), RngState::from_u64(1)),
            ReceiverState::with_network(net, RngState::from_u64(2)),
        )
    }

    #[test]
    fn integrity_is_strictly_monotone() {
        let f = |id| Frame { id, payload: Payload::AckSyn { tau: 1 } };
        assert!(integrity_check(&f(0), None));
        assert!(!integrity_check(&f(4), Some(4)));
        assert!(integrity_check(&f(5), Some(4)));
        assert!(integrity_check(&f(5), None));
        assert!(!integrity_check(&f(3), Some(5)));
    }

    #[test]
    fn sync_test_semantics() {
        let c = cfg();
        let a = TpmNetwork::init(c.params, &mut RngState::from_u64(3)).unwrap();
        let ek = otp_block(&sync_key(&a, SyncCheck::LeadingBits), &c.st);
        assert!(sync_test(&a.clone(), &ek, &c.st));
        let mut b = a.clone();
        let w = b.weights()[3];
        b.set_weight(0, 3, if w == 3 { 2 } else { w + 1 });
        assert!(!sync_test(&b, &ek, &c.st));
    }

    #[test]
    fn leading_bits_miss_late_differences() {
        let c = cfg();
        let a = TpmNetwork::init(c.params, &mut RngState::from_u64(3)).unwrap();
        let mut b = a.clone();
        let w = b.unit(2)[5];
        b.set_weight(2, 5, if w == 3 { 2 } else { w + 1 });
        let lead = otp_block(&sync_key(&a, SyncCheck::LeadingBits), &c.st);
        let whole = otp_block(&sync_key(&a, SyncCheck::WholeVector), &c.st);
        assert!(sync_test_with(&b, &lead, &c.st, SyncCheck::LeadingBits));
        assert!(!sync_test_with(&b, &whole, &c.st, SyncCheck::WholeVector));
        assert!(sync_test_with(&a, &whole, &c.st, SyncCheck::WholeVector));
    }

    #[test]
    fn differing_only_in_leading_weights_fails() {
        let c = cfg();
        let a = TpmNetwork::init(c.params, &mut RngState::from_u64(5)).unwrap();
        let mut b = a.clone();
        for j in 0..16 {
            let w = b.unit(0)[j];
            b.set_weight(0, j, -w);
        }
        // keep at least one leading weight nonzero so the negation differs
        assert_ne!(a.weights()[..16], b.weights()[..16]);
        assert_eq!(a.weights()[16..], b.weights()[16..]);
        let ek = otp_block(&sync_key(&a, SyncCheck::LeadingBits), &c.st);
        assert!(!sync_test(&b, &ek, &c.st));
    }

    #[test]
    fn sender_opens_with_syn_and_timer() {
        let c = cfg();
        let mut s = SenderState::new(&c, RngState::from_u64(1)).unwrap();
        let acts = s.advance(Event::Start, &c);
        let frames = sent(&acts);
        assert_eq!(frames.len(), 1);
        assert_eq!(frames[0].id, 0);
        assert!(matches!(frames[0].payload, Payload::Syn { .. }));
        assert!(acts.contains(&Action::SetTimer(c.timeout_ticks)));
        assert_eq!(s.phase(), Phase::Synchronizing);
    }

    #[test]
    fn sender_fails_after_max_attempts() {
        let c = cfg();
        let mut s = SenderState::new(&c, RngState::from_u64(1)).unwrap();
        s.advance(Event::Start, &c);
        let mut ids = vec![0];
        for _ in 1..c.max_attempts {
            let acts = s.advance(Event::TimerFired, &c);
            ids.push(sent(&acts)[0].id);
        }
        assert_eq!(s.phase(), Phase::Synchronizing);
        let acts = s.advance(Event::TimerFired, &c);
        assert!(matches!(acts.as_slice(), [Action::Fail(_)]));
        assert_eq!(s.phase(), Phase::Failed);
        assert!(ids.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn stale_ack_changes_nothing() {
        let c = cfg();
        let mut s = SenderState::new(&c, RngState::from_u64(1)).unwrap();
        s.advance(Event::Start, &c);
        s.advance(Event::TimerFired, &c); // round 0 abandoned, round 1 outstanding
        let before = s.state_hash();
        let acts = s.advance(Event::FrameArrived(Frame { id: 0, payload: Payload::AckSyn { tau: 1 } }), &c);
        assert!(matches!(acts.as_slice(), [Action::Ignored(_)]));
        assert_eq!(s.state_hash(), before);
    }

    #[test]
    fn receiver_naks_on_output_mismatch() {
        let c = cfg();
        let mut r = ReceiverState::new(&c, RngState::from_u64(2)).unwrap();
        r.advance(Event::Start, &c);
        let seed = [7u8; 16];
        let inputs = round_inputs(&c, &seed);
        let (_, tau) = r.network().outputs(&inputs).unwrap();
        let before = r.network().clone();
        let syn = Frame { id: 0, payload: Payload::Syn { seed, tau: -tau, ek_st: [0; 16] } };
        let frames = sent(&r.advance(Event::FrameArrived(syn), &c));
        assert_eq!(frames, vec![Frame { id: 0, payload: Payload::NakSyn { tau } }]);
        assert_eq!(r.network(), &before);
    }

    #[test]
    fn receiver_acks_and_learns_on_agreement() {
        let c = cfg();
        let mut r = ReceiverState::new(&c, RngState::from_u64(2)).unwrap();
        r.advance(Event::Start, &c);
        // find a seed whose inputs give tau with at least one matching unit
        let seed = [9u8; 16];
        let inputs = round_inputs(&c, &seed);
        let (sigmas, tau) = r.network().outputs(&inputs).unwrap();
        let mut expected = r.network().clone();
        expected.learn_units(&inputs, &sigmas, tau, c.rule);
        let syn = Frame { id: 3, payload: Payload::Syn { seed, tau, ek_st: [0; 16] } };
        let frames = sent(&r.advance(Event::FrameArrived(syn), &c));
        assert_eq!(frames, vec![Frame { id: 3, payload: Payload::AckSyn { tau } }]);
        assert_eq!(r.network(), &expected);
        // replay of the same SYN is rejected without state change
        let h = r.state_hash();
        let acts = r.advance(Event::FrameArrived(syn), &c);
        assert!(sent(&acts).is_empty());
        assert_eq!(r.state_hash(), h);
    }

    #[test]
    fn synchronized_receiver_answers_fin_in_range() {
        let c = cfg();
        for seed in 0..20 {
            let net = TpmNetwork::init(c.params, &mut RngState::from_u64(seed)).unwrap();
            let mut s = SenderState::with_network(net.clone(), RngState::from_u64(seed + 100));
            let mut r = ReceiverState::with_network(net, RngState::from_u64(seed + 200));
            r.advance(Event::Start, &c);
            let syn = sent(&s.advance(Event::Start, &c))[0];
            let reply = sent(&r.advance(Event::FrameArrived(syn), &c));
            match reply.as_slice() {
                [Frame { id: 0, payload: Payload::FinSyn { iv } }] => assert!((*iv as usize) < 6),
                other => panic!("unexpected {other:?}"),
            }
            assert_eq!(r.phase(), Phase::AwaitFin);
            assert_eq!(r.session(), None);
        }
    }

    fn certify(c_s: &ProtocolConfig, c_r: &ProtocolConfig) -> (SenderState, ReceiverState) {
        let (mut s, mut r) = synced_pair(c_s);
        r.advance(Event::Start, c_r);
        let mut inbox_r = sent(&s.advance(Event::Start, c_s));
        let mut inbox_s = Vec::new();
        for _ in 0..10 {
            for f in inbox_r.drain(..) {
                inbox_s.extend(sent(&r.advance(Event::FrameArrived(f), c_r)));
            }
            for f in inbox_s.drain(..) {
                inbox_r.extend(sent(&s.advance(Event::FrameArrived(f), c_s)));
            }
        }
        (s, r)
    }

    #[test]
    fn certification_succeeds_with_matching_codes() {
        let c = cfg();
        let (s, r) = certify(&c, &c);
        assert_eq!(s.phase(), Phase::Established);
        assert_eq!(r.phase(), Phase::Established);
        assert_eq!(s.session(), r.session());
        assert!(s.session().is_some());
    }

    #[test]
    fn wrong_sender_code_fails_at_receiver() {
        let c = cfg();
        let mut bad = c.clone();
        bad.ssc[0] ^= 1;
        let (s, r) = certify(&bad, &c);
        assert_eq!(r.phase(), Phase::Failed);
        assert_ne!(s.phase(), Phase::Established);
    }

    #[test]
    fn wrong_receiver_code_fails_at_sender() {
        let c = cfg();
        let mut bad = c.clone();
        bad.rsc[15] ^= 0x80;
        let (s, _) = certify(&c, &bad);
        assert_eq!(s.phase(), Phase::Failed);
    }

    #[test]
    fn receiver_resends_fin_after_loss() {
        let c = cfg();
        let (mut s, mut r) = synced_pair(&c);
        r.advance(Event::Start, &c);
        let syn0 = sent(&s.advance(Event::Start, &c))[0];
        let fin0 = sent(&r.advance(Event::FrameArrived(syn0), &c))[0];
        // FIN lost; sender times out and sends a new SYN
        let syn1 = sent(&s.advance(Event::TimerFired, &c))[0];
        let fin1 = sent(&r.advance(Event::FrameArrived(syn1), &c))[0];
        match (fin0.payload, fin1.payload) {
            (Payload::FinSyn { iv: a }, Payload::FinSyn { iv: b }) => assert_eq!(a, b),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(fin1.id, syn1.id);
    }

    #[test]
    fn preshared_seed_mode_hides_inputs() {
        let mut c = cfg();
        c.seed_mode = SeedMode::PreShared([0x5A; 16]);
        let nonce = [3u8; 16];
        let open = cfg();
        assert_ne!(round_inputs(&c, &nonce), round_inputs(&open, &nonce));
        let mut other = c.clone();
        other.seed_mode = SeedMode::PreShared([0x5B; 16]);
        assert_ne!(round_inputs(&c, &nonce), round_inputs(&other, &nonce));
        let (s, r) = certify(&c, &c);
        assert!(s.session().is_some() && s.session() == r.session());
    }

    #[test]
    fn repeated_round_is_answered_from_cache() {
        let c = cfg();
        let mut s = SenderState::new(&c, RngState::from_u64(1)).unwrap();
        let mut r = ReceiverState::new(&c, RngState::from_u64(2)).unwrap();
        r.advance(Event::Start, &c);
        let syn0 = sent(&s.advance(Event::Start, &c))[0];
        let reply0 = sent(&r.advance(Event::FrameArrived(syn0), &c))[0];
        let weights = r.network().clone();
        // reply lost; the sender repeats the round under a new id
        let syn1 = sent(&s.advance(Event::TimerFired, &c))[0];
        assert_eq!(syn1.payload, syn0.payload);
        assert!(syn1.id > syn0.id);
        let reply1 = sent(&r.advance(Event::FrameArrived(syn1), &c))[0];
        assert_eq!(reply1, Frame { id: syn1.id, payload: reply0.payload });
        assert_eq!(r.network(), &weights);
        assert_eq!(r.stats().repeats, 1);
        // the late answer to the first copy is stale for the sender
        let h = s.state_hash();
        s.advance(Event::FrameArrived(reply0), &c);
        assert_eq!(s.state_hash(), h);
        s.advance(Event::FrameArrived(reply1), &c);
        assert_eq!(s.stats().rounds, 2);
    }

    #[test]
    fn config_validation() {
        let mut c = cfg();
        assert!(c.validate().is_ok());
        c.max_attempts = 0;
        assert!(c.validate().is_err());
        let small = ProtocolConfig::new(TpmParams::new(1, 8, 3).unwrap(), [0; 16], [0; 16]);
        assert!(small.validate().is_err());
    }
}
