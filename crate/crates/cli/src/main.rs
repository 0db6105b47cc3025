use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};

use tpmkex::channel::{ChannelConfig, UdpLink};
use tpmkex::codec::{frame_key, from_hex, otp_transform, to_hex, KeyMaterial, SessionKey};
use tpmkex::lab::{run_attack_trials, run_sync_trials, write_csv, TrialMode, DEFAULT_DIRECT_CAP, DEFAULT_PROTOCOL_CAP};
use tpmkex::protocol::{Phase, ProtocolConfig, ReceiverState, SenderState};
use tpmkex::rng::RngState;
use tpmkex::session::{run_exchange, run_udp_endpoint, ExchangeOptions};
use tpmkex::tpm::{LearningRule, TpmParams};

/// Overrides the directory that default output files are written to.
const OUT_DIR_ENV: &str = "TPMKEX_OUT_DIR";

#[derive(Parser, Debug)]
#[command(name = "tpmkex", version, about = "Key agreement by synchronizing tree parity machines")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a full key exchange, simulated or over UDP.
    Exchange(ExchangeArgs),
    /// Synchronization-time sweep over one parameter; writes CSV.
    Sweep(SweepArgs),
    /// Listening-attacker sweep over one parameter; writes CSV.
    Attack(SweepArgs),
    /// Write generator and frame golden vectors.
    Vectors(VectorArgs),
}

#[derive(Args, Debug, Clone)]
struct NetArgs {
    /// Hidden units.
    #[arg(long, default_value_t = 3)]
    k: usize,
    /// Inputs per hidden unit.
    #[arg(long, default_value_t = 32)]
    n: usize,
    /// Synaptic depth.
    #[arg(long, default_value_t = 3)]
    l: u8,
    #[arg(long, default_value = "random-walk", value_parser = parse_rule)]
    rule: LearningRule,
    /// 128-bit master seed, 32 hex digits. Defaults to a fresh one, printed.
    #[arg(long, value_parser = parse_seed)]
    seed: Option<[u8; 16]>,
}

#[derive(Args, Debug)]
struct ExchangeArgs {
    #[command(flatten)]
    net: NetArgs,
    #[arg(long, default_value_t = 0.0)]
    drop: f64,
    #[arg(long, default_value_t = 0.0)]
    dup: f64,
    #[arg(long, default_value_t = 0.0)]
    corrupt: f64,
    #[arg(long, default_value_t = 0.0)]
    reorder: f64,
    #[arg(long, default_value_t = 1)]
    latency: u64,
    #[arg(long, default_value_t = 500)]
    timeout_ticks: u64,
    #[arg(long, default_value_t = 5)]
    max_attempts: u32,
    #[arg(long, default_value_t = DEFAULT_PROTOCOL_CAP)]
    max_rounds: u64,
    /// Sender secret code, 32 hex digits.
    #[arg(long, value_parser = parse_seed, default_value = "73656e6465722d7365637265742d3031")]
    ssc: [u8; 16],
    /// Receiver secret code, 32 hex digits.
    #[arg(long, value_parser = parse_seed, default_value = "72656365697665722d73656372657431")]
    rsc: [u8; 16],
    /// Test hook: the sender holds a wrong SSC.
    #[arg(long)]
    corrupt_ssc: bool,
    /// Test hook: the sender expects a wrong RSC.
    #[arg(long)]
    corrupt_rsc: bool,
    /// Encrypt this text after establishment, one fresh key per 16-byte frame.
    #[arg(long)]
    message: Option<String>,
    /// Run as the receiver on this UDP address.
    #[arg(long, conflicts_with = "connect")]
    listen: Option<String>,
    /// Run as the sender against this UDP address.
    #[arg(long)]
    connect: Option<String>,
    /// Milliseconds per protocol tick in UDP mode.
    #[arg(long, default_value_t = 1)]
    tick_ms: u64,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Vary {
    L,
    N,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    Direct,
    Protocol,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    net: NetArgs,
    #[arg(long, value_enum)]
    vary: Vary,
    #[arg(long)]
    from: usize,
    #[arg(long)]
    to: usize,
    /// Additive step between points.
    #[arg(long, default_value_t = 1, conflicts_with = "doubling")]
    step: usize,
    /// Double the parameter between points instead.
    #[arg(long)]
    doubling: bool,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    /// Iteration cap per trial.
    #[arg(long)]
    cap: Option<u64>,
    /// Synchronization mode (sweep only).
    #[arg(long, value_enum, default_value = "direct")]
    mode: Mode,
    /// Output CSV path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct VectorArgs {
    /// Output directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn parse_rule(s: &str) -> Result<LearningRule, String> {
    s.parse::<LearningRule>().map_err(|e| e.to_string())
}

fn parse_seed(s: &str) -> Result<[u8; 16], String> {
    let bytes = from_hex(s).map_err(|e| e.to_string())?;
    bytes.try_into().map_err(|_| "expected 32 hex digits".to_string())
}

fn fresh_seed() -> [u8; 16] {
    let nanos = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_nanos()).unwrap_or(0);
    let mut rng = RngState::from_u64(nanos as u64 ^ (nanos >> 64) as u64 ^ std::process::id() as u64);
    rng.bytes16()
}

/// Resolve the seed, print it, and fold it to the 64-bit master used by the library.
fn master_seed(seed: Option<[u8; 16]>) -> u64 {
    let seed = seed.unwrap_or_else(fresh_seed);
    println!("seed {}", to_hex(&seed));
    RngState::seed_from_bytes(&seed).step()
}

fn out_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."))
}

fn write_file(path: &Path, contents: &str) -> Result<(), String> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| format!("{}: {e}", parent.display()))?;
    }
    std::fs::write(path, contents).map_err(|e| format!("{}: {e}", path.display()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Exchange(a) => exchange(a),
        Command::Sweep(a) => sweep(a, false),
        Command::Attack(a) => sweep(a, true),
        Command::Vectors(a) => vectors(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn protocol_configs(a: &ExchangeArgs) -> Result<(ProtocolConfig, ProtocolConfig), String> {
    let params = TpmParams::new(a.net.k, a.net.n, a.net.l).map_err(|e| e.to_string())?;
    let mut receiver = ProtocolConfig::new(params, a.ssc, a.rsc);
    receiver.rule = a.net.rule;
    receiver.timeout_ticks = a.timeout_ticks;
    receiver.max_attempts = a.max_attempts;
    receiver.validate().map_err(|e| e.to_string())?;
    let mut sender = receiver.clone();
    if a.corrupt_ssc {
        sender.ssc[0] ^= 0xFF;
    }
    if a.corrupt_rsc {
        sender.rsc[0] ^= 0xFF;
    }
    Ok((sender, receiver))
}

fn print_key(role: &str, phase: Phase, key: Option<SessionKey>) {
    match key {
        Some(k) if phase == Phase::Established => println!("{role} key {} iv {} phase {phase:?}", k.to_hex(), k.iv),
        _ => println!("{role} key - iv - phase {phase:?}"),
    }
}

fn exchange(a: ExchangeArgs) -> Result<bool, String> {
    let (sender_cfg, receiver_cfg) = protocol_configs(&a)?;
    if a.listen.is_some() || a.connect.is_some() {
        return exchange_udp(&a, &sender_cfg, &receiver_cfg);
    }
    let master = master_seed(a.net.seed);
    let channel = ChannelConfig {
        drop_prob: a.drop,
        dup_prob: a.dup,
        corrupt_prob: a.corrupt,
        reorder_prob: a.reorder,
        latency_ticks: a.latency,
        rng_seed: RngState::stream(master, 2).step(),
    };
    let opts = ExchangeOptions { max_rounds: a.max_rounds, inject_replays: false };
    let out = run_exchange(&sender_cfg, &receiver_cfg, channel, master, opts).map_err(|e| e.to_string())?;
    print_key("sender", out.sender_phase, out.sender_key);
    print_key("receiver", out.receiver_phase, out.receiver_key);
    println!("iterations {} repeats {} updates {}", out.rounds, out.repeats, out.updates);
    println!("frames {} bytes {}", out.channel.frames_sent, out.bytes());
    if let Some(reason) = &out.failure {
        println!("failure {reason}");
    }
    if out.capped {
        println!("failure round cap {} reached", a.max_rounds);
    }
    let ok = out.established() && out.keys_agree();
    if ok {
        if let (Some(text), Some(sm), Some(rm), Some(sk)) =
            (&a.message, &out.sender_material, &out.receiver_material, out.sender_key)
        {
            return Ok(send_message(text, sm, rm, &sk, out.receiver_key.as_ref().unwrap()));
        }
    }
    Ok(ok)
}

/// Encrypt `text` frame by frame on one side and decrypt on the other.
fn send_message(text: &str, sender: &KeyMaterial, receiver: &KeyMaterial, sk: &SessionKey, rk: &SessionKey) -> bool {
    let mut recovered = Vec::new();
    for (i, block) in text.as_bytes().chunks(16).enumerate() {
        let ks = frame_key(sender, sk, i as u64).expect("material has groups");
        let kr = frame_key(receiver, rk, i as u64).expect("material has groups");
        let cipher = otp_transform(&ks.key[..block.len()], block).expect("block within key length");
        println!("frame {i} group {} cipher {}", ks.iv, to_hex(&cipher));
        recovered.extend(otp_transform(&kr.key[..cipher.len()], &cipher).expect("block within key length"));
    }
    let plain = String::from_utf8_lossy(&recovered);
    println!("received {plain}");
    plain == text
}

fn exchange_udp(a: &ExchangeArgs, sender_cfg: &ProtocolConfig, receiver_cfg: &ProtocolConfig) -> Result<bool, String> {
    let master = master_seed(a.net.seed);
    let tick = Duration::from_millis(a.tick_ms.max(1));
    let report = if let Some(addr) = &a.listen {
        let link = UdpLink::listen(addr.as_str()).map_err(|e| e.to_string())?;
        println!("listening {}", link.local_addr().map_err(|e| e.to_string())?);
        let machine = ReceiverState::new(receiver_cfg, RngState::stream(master, 1)).map_err(|e| e.to_string())?;
        let r = run_udp_endpoint(machine, receiver_cfg, &link, tick, true).map_err(|e| e.to_string())?;
        print_key("receiver", r.phase, r.key);
        r
    } else {
        let addr = a.connect.as_deref().expect("listen or connect");
        let link = UdpLink::connect(addr).map_err(|e| e.to_string())?;
        let machine = SenderState::new(sender_cfg, RngState::stream(master, 0)).map_err(|e| e.to_string())?;
        let r = run_udp_endpoint(machine, sender_cfg, &link, tick, false).map_err(|e| e.to_string())?;
        print_key("sender", r.phase, r.key);
        r
    };
    println!("frames {} bytes {}", report.channel.frames_sent, report.channel.bytes_sent);
    if let Some(reason) = &report.failure {
        println!("failure {reason}");
    }
    Ok(report.phase == Phase::Established)
}

fn points(a: &SweepArgs) -> Result<Vec<usize>, String> {
    if a.from == 0 || a.from > a.to || a.step == 0 {
        return Err(format!("empty range {}..={} step {}", a.from, a.to, a.step));
    }
    let mut v = vec![a.from];
    loop {
        let last = *v.last().unwrap();
        let next = if a.doubling { last * 2 } else { last + a.step };
        if next > a.to {
            break;
        }
        v.push(next);
    }
    Ok(v)
}

fn sweep(a: SweepArgs, attack: bool) -> Result<bool, String> {
    let values = points(&a)?;
    let master = master_seed(a.net.seed);
    let mut rows = Vec::new();
    for (i, &v) in values.iter().enumerate() {
        let (n, l) = match a.vary {
            Vary::L => (a.net.n, u8::try_from(v).map_err(|_| format!("depth {v} too large"))?),
            Vary::N => (v, a.net.l),
        };
        let params = TpmParams::new(a.net.k, n, l).map_err(|e| e.to_string())?;
        let seed = RngState::stream(master, i as u64).step();
        let row = if attack {
            run_attack_trials(params, a.net.rule, a.trials, a.cap.unwrap_or(DEFAULT_PROTOCOL_CAP * 5), seed)
                .map_err(|e| e.to_string())?
                .0
        } else {
            let (mode, cap) = match a.mode {
                Mode::Direct => (TrialMode::Direct, a.cap.unwrap_or(DEFAULT_DIRECT_CAP)),
                Mode::Protocol => (TrialMode::Protocol, a.cap.unwrap_or(DEFAULT_PROTOCOL_CAP)),
            };
            run_sync_trials(params, a.net.rule, a.trials, mode, cap, seed).map_err(|e| e.to_string())?.0
        };
        println!("{row}");
        rows.push(row);
    }
    let default_name = if attack { "attack.csv" } else { "sweep.csv" };
    let path = a.out.clone().unwrap_or_else(|| out_dir().join(default_name));
    write_file(&path, &write_csv(&rows))?;
    println!("wrote {}", path.display());
    Ok(true)
}

fn vectors(a: VectorArgs) -> Result<bool, String> {
    let dir = a.out_dir.unwrap_or_else(out_dir);
    for (name, text) in [
        ("rng_vectors.txt", tpmkex::rng::golden_vector_text()),
        ("frame_vectors.txt", tpmkex::frame::golden_vector_text()),
    ] {
        let path = dir.join(name);
        write_file(&path, &text)?;
        println!("wrote {}", path.display());
    }
    Ok(true)
}
