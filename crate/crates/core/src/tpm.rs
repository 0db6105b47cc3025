//! The tree parity machine: K hidden sign units over N inputs each with
//! integer weights bounded by the synaptic depth L.
//!
//! A network may carry several hidden layers; exactly one is active for a
//! session and the others keep their initial weights untouched.

use crate::error::{param, Error, Result};
use crate::num::Real;
use crate::rng::RngState;

/// Largest synaptic depth whose weights fit the 7-bit magnitude field.
pub const MAX_DEPTH: u8 = 127;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TpmParams {
    /// Hidden units per layer.
    pub k: usize,
    /// Inputs per hidden unit.
    pub n: usize,
    /// Synaptic depth: weights live in `[-l, l]`.
    pub l: u8,
    pub layers: usize,
    pub active_layer: usize,
}

impl TpmParams {
    /// Single hidden layer network.
    pub fn new(k: usize, n: usize, l: u8) -> Result<Self> {
        Self::with_layers(k, n, l, 1, 0)
    }

    pub fn with_layers(k: usize, n: usize, l: u8, layers: usize, active_layer: usize) -> Result<Self> {
        let p = Self { k, n, l, layers, active_layer };
        p.validate()?;
        Ok(p)
    }

    /// `l = 0` is accepted as the degenerate all-zero network.
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.n == 0 {
            return Err(param(format!("k and n must be >= 1 (k={}, n={})", self.k, self.n)));
        }
        if self.l > MAX_DEPTH {
            return Err(param(format!("synaptic depth {} exceeds {MAX_DEPTH}", self.l)));
        }
        if self.layers == 0 || self.active_layer >= self.layers {
            return Err(param(format!("active layer {} not in 0..{}", self.active_layer, self.layers)));
        }
        Ok(())
    }

    /// Weights per layer, `k·n`.
    pub fn weight_count(&self) -> usize {
        self.k * self.n
    }
}

/// A `k × n` matrix of ±1 inputs stored row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Inputs {
    k: usize,
    n: usize,
    values: Vec<i8>,
}

impl Inputs {
    pub fn from_flat(k: usize, n: usize, values: Vec<i8>) -> Result<Self> {
        if values.len() != k * n {
            return Err(param(format!("expected {} inputs, got {}", k * n, values.len())));
        }
        if values.iter().any(|&v| v != 1 && v != -1) {
            return Err(param("inputs must be +1 or -1"));
        }
        Ok(Self { k, n, values })
    }

    pub fn from_rows(rows: &[Vec<i8>]) -> Result<Self> {
        let k = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n) {
            return Err(param("ragged input rows"));
        }
        Self::from_flat(k, n, rows.concat())
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.k, self.n)
    }

    pub fn row(&self, unit: usize) -> &[i8] {
        &self.values[unit * self.n..(unit + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[i8] {
        &self.values
    }
}

/// Result of a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation<T> {
    /// Local fields `h_i = (1/√n) Σ_j w_ij x_ij`.
    pub fields: Vec<T>,
    /// Hidden outputs; a zero field maps to −1.
    pub sigmas: Vec<i8>,
    /// Product of the hidden outputs.
    pub tau: i8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LearningRule {
    Hebbian,
    AntiHebbian,
    RandomWalk,
}

impl LearningRule {
    /// Step direction for a unit with output `sigma` that is being updated.
    fn direction(self, sigma: i8) -> i8 {
        match self {
            LearningRule::Hebbian => sigma,
            LearningRule::AntiHebbian => -sigma,
            LearningRule::RandomWalk => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LearningRule::Hebbian => "hebbian",
            LearningRule::AntiHebbian => "anti-hebbian",
            LearningRule::RandomWalk => "random-walk",
        }
    }
}

impl std::str::FromStr for LearningRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hebbian" => Ok(Self::Hebbian),
            "anti-hebbian" | "antihebbian" => Ok(Self::AntiHebbian),
            "random-walk" | "randomwalk" => Ok(Self::RandomWalk),
            other => Err(param(format!("unknown learning rule '{other}'"))),
        }
    }
}

impl std::fmt::Display for LearningRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-unit classification of a paired learning step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StepKind {
    /// Both units agree with the common output and move together.
    Attractive,
    /// The units disagree, so only one of them moves.
    Repulsive,
    /// Both units disagree with the common output; neither moves.
    NoMove,
    /// The outputs of the two networks differed; nothing was learned.
    Idle,
}

/// Classify the units of a paired step from both networks' hidden outputs.
pub fn classify_steps(sigmas_a: &[i8], tau_a: i8, sigmas_b: &[i8], tau_b: i8) -> Vec<StepKind> {
    sigmas_a
        .iter()
        .zip(sigmas_b)
        .map(|(&sa, &sb)| {
            if tau_a != tau_b {
                StepKind::Idle
            } else if sa != sb {
                StepKind::Repulsive
            } else if sa == tau_a {
                StepKind::Attractive
            } else {
                StepKind::NoMove
            }
        })
        .collect()
}

/// Self and cross overlaps of two corresponding hidden units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderParams<T> {
    pub q_a: T,
    pub q_b: T,
    pub r: T,
    /// Normalized overlap; `None` when either weight row is all zero.
    pub rho: Option<T>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TpmNetwork {
    params: TpmParams,
    layers: Vec<Vec<i8>>,
}

impl TpmNetwork {
    /// Draw every weight of every layer uniformly from `[-l, l]`, layer by
    /// layer in row-major order.
    pub fn init(params: TpmParams, rng: &mut RngState) -> Result<Self> {
        params.validate()?;
        let span = 2 * params.l as u64 + 1;
        let layers = (0..params.layers)
            .map(|_| (0..params.weight_count()).map(|_| (rng.below(span) as i64 - params.l as i64) as i8).collect())
            .collect();
        Ok(Self { params, layers })
    }

    /// Single-layer network with explicit weights (row-major).
    pub fn from_weights(params: TpmParams, weights: Vec<i8>) -> Result<Self> {
        params.validate()?;
        if params.layers != 1 {
            return Err(param("from_weights builds single-layer networks"));
        }
        if weights.len() != params.weight_count() {
            return Err(param(format!("expected {} weights, got {}", params.weight_count(), weights.len())));
        }
        let l = params.l as i16;
        if let Some(w) = weights.iter().find(|&&w| (w as i16).abs() > l) {
            return Err(Error::Range(format!("weight {w} outside [-{l}, {l}]")));
        }
        Ok(Self { params, layers: vec![weights] })
    }

    pub fn params(&self) -> &TpmParams {
        &self.params
    }

    /// Weights of the active layer, row-major.
    pub fn weights(&self) -> &[i8] {
        &self.layers[self.params.active_layer]
    }

    pub fn layer(&self, index: usize) -> Option<&[i8]> {
        self.layers.get(index).map(Vec::as_slice)
    }

    pub fn unit(&self, unit: usize) -> &[i8] {
        let n = self.params.n;
        &self.weights()[unit * n..(unit + 1) * n]
    }

    /// Overwrite one active weight, clamped to the depth bound.
    pub fn set_weight(&mut self, unit: usize, input: usize, value: i8) {
        let l = self.params.l as i8;
        let n = self.params.n;
        let active = self.params.active_layer;
        self.layers[active][unit * n + input] = value.clamp(-l, l);
    }

    fn check_shape(&self, inputs: &Inputs) -> Result<()> {
        if inputs.shape() != (self.params.k, self.params.n) {
            return Err(param(format!(
                "input shape {:?} does not match network ({}, {})",
                inputs.shape(),
                self.params.k,
                self.params.n
            )));
        }
        Ok(())
    }

    /// Raw integer sums `Σ_j w_ij x_ij` per unit.
    fn sums(&self, inputs: &Inputs) -> Vec<i32> {
        let n = self.params.n;
        self.weights()
            .chunks_exact(n)
            .zip(inputs.as_slice().chunks_exact(n))
            .map(|(w, x)| w.iter().zip(x).map(|(&w, &x)| w as i32 * x as i32).sum())
            .collect()
    }

    pub fn evaluate<T: Real>(&self, inputs: &Inputs) -> Result<Evaluation<T>> {
        self.check_shape(inputs)?;
        let scale = T::from_int(self.params.n as i64).sqrt();
        let sums = self.sums(inputs);
        let sigmas: Vec<i8> = sums.iter().map(|&s| if s > 0 { 1 } else { -1 }).collect();
        let tau = sigmas.iter().product();
        let fields = sums.iter().map(|&s| T::from_int(s as i64) / scale).collect();
        Ok(Evaluation { fields, sigmas, tau })
    }

    /// Hidden outputs and parity without the real-valued fields.
    pub fn outputs(&self, inputs: &Inputs) -> Result<(Vec<i8>, i8)> {
        self.check_shape(inputs)?;
        let sigmas: Vec<i8> = self.sums(inputs).iter().map(|&s| if s > 0 { 1 } else { -1 }).collect();
        let tau = sigmas.iter().product();
        Ok((sigmas, tau))
    }

    /// One mutual-learning step.
    ///
    /// Nothing changes unless `own.tau == tau_other`; then every unit with
    /// `σ_i = τ` moves by `f·x_i` and is clamped to `[-l, l]`. With the
    /// peer's hidden outputs the returned kinds classify each unit,
    /// otherwise agreeing steps are reported as `NoMove`.
    pub fn apply_learning<T>(
        &mut self,
        inputs: &Inputs,
        own: &Evaluation<T>,
        tau_other: i8,
        rule: LearningRule,
        peer_sigmas: Option<&[i8]>,
    ) -> Result<Vec<StepKind>> {
        self.check_shape(inputs)?;
        if own.sigmas.len() != self.params.k {
            return Err(param("evaluation does not belong to this network"));
        }
        if own.tau != tau_other {
            return Ok(vec![StepKind::Idle; self.params.k]);
        }
        self.learn_units(inputs, &own.sigmas, own.tau, rule);
        Ok(match peer_sigmas {
            Some(peer) => classify_steps(&own.sigmas, own.tau, peer, tau_other),
            None => vec![StepKind::NoMove; self.params.k],
        })
    }

    /// Update every unit whose output equals `target`, treating `target` as
    /// the common output. This is the gate-and-move half of a learning step
    /// without the output-agreement check, as used by a listening attacker.
    pub fn learn_units(&mut self, inputs: &Inputs, sigmas: &[i8], target: i8, rule: LearningRule) {
        let n = self.params.n;
        let l = self.params.l as i16;
        let active = self.params.active_layer;
        let layer = &mut self.layers[active];
        for (unit, &sigma) in sigmas.iter().enumerate() {
            if sigma != target {
                continue;
            }
            let step = rule.direction(sigma) as i16;
            let row = &mut layer[unit * n..(unit + 1) * n];
            for (w, &x) in row.iter_mut().zip(inputs.row(unit)) {
                *w = (*w as i16 + step * x as i16).clamp(-l, l) as i8;
            }
        }
    }
}

pub fn order_params<T: Real>(a: &TpmNetwork, b: &TpmNetwork, unit: usize) -> Result<OrderParams<T>> {
    if a.params != b.params {
        return Err(param("networks have different parameters"));
    }
    if unit >= a.params.k {
        return Err(param(format!("unit {unit} out of range 0..{}", a.params.k)));
    }
    let (wa, wb) = (a.unit(unit), b.unit(unit));
    let dot = |x: &[i8], y: &[i8]| -> i64 { x.iter().zip(y).map(|(&p, &q)| p as i64 * q as i64).sum() };
    let (saa, sbb, sab) = (dot(wa, wa), dot(wb, wb), dot(wa, wb));
    let n = T::from_int(a.params.n as i64);
    let rho = if saa > 0 && sbb > 0 { Some(T::from_int(sab) / T::from_int(saa * sbb).sqrt()) } else { None };
    Ok(OrderParams { q_a: T::from_int(saa) / n, q_b: T::from_int(sbb) / n, r: T::from_int(sab) / n, rho })
}

/// True iff the active layers are element-wise equal.
pub fn is_synchronized(a: &TpmNetwork, b: &TpmNetwork) -> bool {
    a.params == b.params && a.weights() == b.weights()
}

/// Mean overlap over all units, treating undefined overlaps as 0.
pub fn mean_overlap(a: &TpmNetwork, b: &TpmNetwork) -> f64 {
    let k = a.params.k;
    (0..k).map(|u| order_params::<f64>(a, b, u).ok().and_then(|o| o.rho).unwrap_or(0.0)).sum::<f64>() / k as f64
}
