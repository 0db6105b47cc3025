//! Monte-Carlo synchronization and attack trials.

use std::fmt;

use rayon::prelude::*;

use crate::channel::ChannelConfig;
use crate::error::{param, Result};
use crate::protocol::ProtocolConfig;
use crate::rng::RngState;
use crate::session::{run_exchange, ExchangeOptions};
use crate::tpm::{is_synchronized, mean_overlap, Inputs, LearningRule, TpmNetwork, TpmParams};

pub const DEFAULT_DIRECT_CAP: u64 = 1_000_000;
pub const DEFAULT_PROTOCOL_CAP: u64 = 10_000;
/// Steps between overlap samples in direct trials.
pub const RHO_SAMPLE_EVERY: u64 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrialMode {
    /// Bare mutual-learning loop in one process.
    Direct,
    /// Two protocol endpoints over a lossless simulated link.
    Protocol,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyncTrialStats {
    pub iterations: u64,
    /// Zero in direct mode.
    pub bytes_exchanged: u64,
    /// Mean overlap every [`RHO_SAMPLE_EVERY`] steps plus the final state.
    /// Empty in protocol mode.
    pub rho_trajectory: Vec<f64>,
    pub synced: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub k: usize,
    pub n: usize,
    pub l: u8,
    pub rule: LearningRule,
    pub trials: usize,
    pub synced_trials: usize,
    pub mean_iter: f64,
    pub median_iter: f64,
    pub stddev_iter: f64,
    pub mean_bytes: Option<f64>,
    pub attacker_success: Option<f64>,
    /// Mean steps until the attacker matched A (capped trials count at the cap).
    pub mean_attacker_iter: Option<f64>,
}

pub const CSV_HEADER: &str = "k,n,l,rule,trials,mean_iter,median_iter,stddev_iter,mean_bytes,attacker_success";

impl SweepResult {
    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        format!(
            "{},{},{},{},{},{:.6},{:.6},{:.6},{},{}",
            self.k,
            self.n,
            self.l,
            self.rule,
            self.trials,
            self.mean_iter,
            self.median_iter,
            self.stddev_iter,
            opt(self.mean_bytes),
            opt(self.attacker_success)
        )
    }
}

impl fmt::Display for SweepResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.csv_row())
    }
}

pub fn write_csv(rows: &[SweepResult]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

/// Mean, median and sample standard deviation.
pub fn summarize(values: &[u64]) -> (f64, f64, f64) {
    let len = values.len();
    if len == 0 {
        return (f64::NAN, f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<u64>() as f64 / len as f64;
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    let median =
        if len % 2 == 1 { sorted[len / 2] as f64 } else { (sorted[len / 2 - 1] + sorted[len / 2]) as f64 / 2.0 };
    let var =
        if len > 1 { values.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / (len - 1) as f64 } else { 0.0 };
    (mean, median, var.sqrt())
}

fn next_inputs(rng: &mut RngState, p: &TpmParams) -> Inputs {
    let (x, next) = rng.draw_inputs(p.k, p.n);
    *rng = next;
    x
}

/// One bare mutual-learning run from two independent random networks.
pub fn direct_trial(params: TpmParams, rule: LearningRule, cap: u64, rng: &mut RngState) -> Result<SyncTrialStats> {
    let mut a = TpmNetwork::init(params, rng)?;
    let mut b = TpmNetwork::init(params, rng)?;
    let mut rho = vec![mean_overlap(&a, &b)];
    let mut t = 0;
    while t < cap && !is_synchronized(&a, &b) {
        let x = next_inputs(rng, &params);
        let (sa, ta) = a.outputs(&x)?;
        let (sb, tb) = b.outputs(&x)?;
        if ta == tb {
            a.learn_units(&x, &sa, ta, rule);
            b.learn_units(&x, &sb, tb, rule);
        }
        t += 1;
        if t % RHO_SAMPLE_EVERY == 0 {
            rho.push(mean_overlap(&a, &b));
        }
    }
    if t % RHO_SAMPLE_EVERY != 0 {
        rho.push(mean_overlap(&a, &b));
    }
    Ok(SyncTrialStats { iterations: t, bytes_exchanged: 0, rho_trajectory: rho, synced: is_synchronized(&a, &b) })
}

/// One protocol run over a lossless link; iterations are sender rounds.
pub fn protocol_trial(params: TpmParams, rule: LearningRule, cap: u64, seed: u64) -> Result<SyncTrialStats> {
    let mut cfg = ProtocolConfig::new(params, [0x5C; 16], [0xC5; 16]);
    cfg.rule = rule;
    let opts = ExchangeOptions { max_rounds: cap, ..Default::default() };
    let out = run_exchange(&cfg, &cfg, ChannelConfig::lossless(seed), seed, opts)?;
    Ok(SyncTrialStats {
        iterations: out.rounds,
        bytes_exchanged: out.bytes(),
        rho_trajectory: Vec::new(),
        synced: out.established() && out.keys_agree(),
    })
}

/// Run `trials` independent synchronizations in parallel; trial `i` uses
/// stream `i` of `master_seed`, so results do not depend on scheduling.
pub fn run_sync_trials(
    params: TpmParams,
    rule: LearningRule,
    trials: usize,
    mode: TrialMode,
    cap: u64,
    master_seed: u64,
) -> Result<(SweepResult, Vec<SyncTrialStats>)> {
    if trials == 0 {
        return Err(param("trials must be >= 1"));
    }
    params.validate()?;
    let stats = (0..trials as u64)
        .into_par_iter()
        .map(|i| match mode {
            TrialMode::Direct => direct_trial(params, rule, cap, &mut RngState::stream(master_seed, i)),
            TrialMode::Protocol => {
                let seed = RngState::stream(master_seed, i).step();
                protocol_trial(params, rule, cap, seed)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let iters: Vec<u64> = stats.iter().map(|s| s.iterations).collect();
    let (mean_iter, median_iter, stddev_iter) = summarize(&iters);
    let mean_bytes = match mode {
        TrialMode::Direct => None,
        TrialMode::Protocol => Some(stats.iter().map(|s| s.bytes_exchanged as f64).sum::<f64>() / trials as f64),
    };
    let result = SweepResult {
        k: params.k,
        n: params.n,
        l: params.l,
        rule,
        trials,
        synced_trials: stats.iter().filter(|s| s.synced).count(),
        mean_iter,
        median_iter,
        stddev_iter,
        mean_bytes,
        attacker_success: None,
        mean_attacker_iter: None,
    };
    Ok((result, stats))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttackTrial {
    /// Steps until A and B matched (or the cap).
    pub ab_iterations: u64,
    /// Steps until E matched A (or the cap).
    pub eve_iterations: u64,
    pub ab_synced: bool,
    pub eve_synced: bool,
    /// E matched A no later than B did.
    pub success: bool,
}

/// A and B learn from each other while E sees every input and both outputs.
///
/// E moves its units with `σ_E = τ_A` whenever `τ_A = τ_B`. The run goes on
/// after A and B agree, until E matches A or `cap` steps pass.
pub fn attack_trial(
    params: TpmParams,
    rule: LearningRule,
    cap: u64,
    rng: &mut RngState,
    eve_copies_alice: bool,
) -> Result<AttackTrial> {
    let mut a = TpmNetwork::init(params, rng)?;
    let mut b = TpmNetwork::init(params, rng)?;
    let mut e = TpmNetwork::init(params, rng)?;
    if eve_copies_alice {
        e = a.clone();
    }
    let mut ab_at = is_synchronized(&a, &b).then_some(0);
    let mut eve_at = is_synchronized(&a, &e).then_some(0);
    let mut t = 0;
    while t < cap && eve_at.is_none() {
        let x = next_inputs(rng, &params);
        let (sa, ta) = a.outputs(&x)?;
        let (sb, tb) = b.outputs(&x)?;
        let (se, _) = e.outputs(&x)?;
        if ta == tb {
            a.learn_units(&x, &sa, ta, rule);
            b.learn_units(&x, &sb, tb, rule);
            e.learn_units(&x, &se, ta, rule);
        }
        t += 1;
        if ab_at.is_none() && is_synchronized(&a, &b) {
            ab_at = Some(t);
        }
        if is_synchronized(&a, &e) {
            eve_at = Some(t);
        }
    }
    let success = match (eve_at, ab_at) {
        (Some(e), Some(ab)) => e <= ab,
        (Some(_), None) => true,
        _ => false,
    };
    Ok(AttackTrial {
        ab_iterations: ab_at.unwrap_or(t),
        eve_iterations: eve_at.unwrap_or(t),
        ab_synced: ab_at.is_some(),
        eve_synced: eve_at.is_some(),
        success,
    })
}

pub fn run_attack_trials(
    params: TpmParams,
    rule: LearningRule,
    trials: usize,
    cap: u64,
    master_seed: u64,
) -> Result<(SweepResult, Vec<AttackTrial>)> {
    run_attack_trials_with(params, rule, trials, cap, master_seed, false)
}

/// As [`run_attack_trials`]; `eve_copies_alice` starts E from A's weights.
pub fn run_attack_trials_with(
    params: TpmParams,
    rule: LearningRule,
    trials: usize,
    cap: u64,
    master_seed: u64,
    eve_copies_alice: bool,
) -> Result<(SweepResult, Vec<AttackTrial>)> {
    if trials == 0 {
        return Err(param("trials must be >= 1"));
    }
    params.validate()?;
    let runs = (0..trials as u64)
        .into_par_iter()
        .map(|i| attack_trial(params, rule, cap, &mut RngState::stream(master_seed, i), eve_copies_alice))
        .collect::<Result<Vec<_>>>()?;
    let ab: Vec<u64> = runs.iter().map(|r| r.ab_iterations).collect();
    let (mean_iter, median_iter, stddev_iter) = summarize(&ab);
    let eve_mean = runs.iter().map(|r| r.eve_iterations as f64).sum::<f64>() / trials as f64;
    let result = SweepResult {
        k: params.k,
        n: params.n,
        l: params.l,
        rule,
        trials,
        synced_trials: runs.iter().filter(|r| r.ab_synced).count(),
        mean_iter,
        median_iter,
        stddev_iter,
        mean_bytes: None,
        attacker_success: Some(runs.iter().filter(|r| r.success).count() as f64 / trials as f64),
        mean_attacker_iter: Some(eve_mean),
    };
    Ok((result, runs))
}
