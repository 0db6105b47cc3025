//! Long single-network runs for the stationary weight statistics.
//!
//! Two synchronized parties move identically, so one network learning from
//! its own output is the stationary regime of a synchronized pair.

use crate::error::{param, Result};
use crate::rng::RngState;
use crate::tpm::{LearningRule, TpmNetwork, TpmParams};

use super::analytic::sigma_agreement_prob;

/// Per weight value: how often `σ·x = +1` was seen, and what the agreement
/// formula predicted for those same observations.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AgreementTally {
    pub observed: u64,
    pub total: u64,
    /// Sum of predicted probabilities.
    pub expected: f64,
    /// Sum of `p(1-p)`.
    pub variance: f64,
}

impl AgreementTally {
    /// Deviation of the observed count in standard deviations.
    pub fn z_score(&self) -> f64 {
        if self.variance == 0.0 {
            return 0.0;
        }
        (self.observed as f64 - self.expected) / self.variance.sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightSample {
    pub params: TpmParams,
    pub samples: usize,
    /// Weight counts indexed by `w + l`, pooled over units and samples.
    pub histogram: Vec<u64>,
    /// Indexed by `w + l`.
    pub agreement: Vec<AgreementTally>,
    /// Mean of `(1/n) Σ w²` over units and samples.
    pub mean_q: f64,
}

/// Run `steps` self-learning steps and sample every `thin` steps after `burn_in`.
pub fn simulate_stationary(
    params: TpmParams,
    rule: LearningRule,
    steps: usize,
    burn_in: usize,
    thin: usize,
    seed: u64,
) -> Result<WeightSample> {
    if thin == 0 || steps <= burn_in {
        return Err(param("need thin >= 1 and steps > burn_in"));
    }
    let (k, n, l) = (params.k, params.n, params.l);
    let width = 2 * l as usize + 1;
    let mut rng = RngState::from_u64(seed);
    let mut net = TpmNetwork::init(params, &mut rng)?;
    let mut histogram = vec![0u64; width];
    let mut agreement = vec![AgreementTally::default(); width];
    let (mut q_sum, mut q_count, mut samples) = (0.0, 0usize, 0usize);

    for step in 1..=steps {
        let (x, next) = rng.draw_inputs(k, n);
        rng = next;
        let (sigmas, tau) = net.outputs(&x)?;
        if step > burn_in && step % thin == 0 {
            samples += 1;
            for (u, &sigma) in sigmas.iter().enumerate() {
                let row = net.unit(u);
                let nq: i64 = row.iter().map(|&w| w as i64 * w as i64).sum();
                let q = nq as f64 / n as f64;
                q_sum += q;
                q_count += 1;
                for (&w, &xi) in row.iter().zip(x.row(u)) {
                    let idx = (w as i64 + l as i64) as usize;
                    histogram[idx] += 1;
                    // outside the formula's domain (nQ = w²) the rest of the field is empty
                    let Ok(p) = sigma_agreement_prob::<f64>(w as i64, n, q) else { continue };
                    let t = &mut agreement[idx];
                    t.total += 1;
                    t.observed += u64::from(sigma * xi == 1);
                    t.expected += p;
                    t.variance += p * (1.0 - p);
                }
            }
        }
        net.learn_units(&x, &sigmas, tau, rule);
    }
    Ok(WeightSample { params, samples, histogram, agreement, mean_q: q_sum / q_count as f64 })
}
