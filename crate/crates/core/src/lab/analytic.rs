//! Closed-form weight statistics for Hebbian learning and related sizing.

use num_bigint::BigUint;

use crate::error::{param, Error, Result};
use crate::num::{erf, Real};
use crate::tpm::TpmNetwork;

/// Probability that `σ_i x_ij = +1` for a weight of value `w` in a unit
/// with self-overlap `q`: `½[1 + erf(w / √(2(n·q − w²)))]`.
///
/// The rest of the local field is a sum of many ±w terms with variance
/// `n·q − w²`, hence the Gaussian CDF and the factor 2 under the root.
pub fn sigma_agreement_prob<T: Real>(w: i64, n: usize, q: T) -> Result<T> {
    let var = T::from_int(n as i64) * q - T::from_int(w * w);
    if var.is_nan() || var <= T::zero() {
        return Err(param(format!("need n*q > w^2 (n={n}, q={q:?}, w={w})")));
    }
    Ok(T::lit(0.5) * (T::one() + erf(T::from_int(w) / (T::lit(2.0) * var).sqrt())))
}

// Ratio P(|w| = m) / P(|w| = m - 1) from detailed balance.
fn erf_ratio<T: Real>(m: i64, nq: T) -> T {
    let two = T::lit(2.0);
    let prev = T::from_int(m - 1);
    let cur = T::from_int(m);
    let up = T::one() + erf(prev / (two * (nq - prev * prev)).sqrt());
    let down = T::one() - erf(cur / (two * (nq - cur * cur)).sqrt());
    up / down
}

/// Stationary weight distribution under Hebbian learning, indexed by
/// `w + l` for `w` in `[-l, l]`.
pub fn stationary_distribution<T: Real>(l: u8, n: usize, q: T) -> Result<Vec<T>> {
    let nq = T::from_int(n as i64) * q;
    let l = l as i64;
    if nq.is_nan() || nq <= T::from_int(l * l) {
        return Err(param(format!("need n*q > l^2 (n={n}, q={q:?}, l={l})")));
    }
    // unnormalized weight for |w| = 0..=l
    let mut by_magnitude = Vec::with_capacity(l as usize + 1);
    let mut acc = T::one();
    by_magnitude.push(acc);
    for m in 1..=l {
        acc = acc * erf_ratio(m, nq);
        by_magnitude.push(acc);
    }
    let total = (-l..=l).fold(T::zero(), |s, w| s + by_magnitude[w.unsigned_abs() as usize]);
    let p0 = T::one() / total;
    Ok((-l..=l).map(|w| p0 * by_magnitude[w.unsigned_abs() as usize]).collect())
}

/// Length of a uniformly drawn weight vector per input, `√(l(l+1)/3)`.
pub fn initial_norm<T: Real>(l: u8) -> T {
    let l = l as i64;
    (T::from_int(l * (l + 1)) / T::lit(3.0)).sqrt()
}

/// Damping applied to the fixed-point iteration for the self-overlap.
pub const Q_DAMPING: f64 = 0.5;
pub const Q_MAX_ITER: usize = 10_000;

/// Self-consistent `Q = Σ w² P(w; Q)`, iterated with damping from the
/// uniform value `l(l+1)/3`.
pub fn expected_q<T: Real>(l: u8, n: usize) -> Result<T> {
    if l == 0 || n == 0 {
        return Err(param("expected_q needs l >= 1 and n >= 1"));
    }
    let tol = T::lit(1e-10).max(T::epsilon() * T::lit(64.0));
    let damping = T::lit(Q_DAMPING);
    let mut q = initial_norm::<T>(l).powi(2);
    for _ in 0..Q_MAX_ITER {
        let next = second_moment(l, n, q)?;
        let damped = damping * q + (T::one() - damping) * next;
        if (damped - q).abs() < tol {
            return Ok(damped);
        }
        q = damped;
    }
    Err(Error::Numerical(format!("self-overlap iteration did not converge (l={l}, n={n})")))
}

/// `Σ w² P(w; q)`.
pub fn second_moment<T: Real>(l: u8, n: usize, q: T) -> Result<T> {
    let p = stationary_distribution(l, n, q)?;
    let l = l as i64;
    Ok((-l..=l).zip(p).fold(T::zero(), |s, (w, pw)| s + T::from_int(w * w) * pw))
}

/// Empirical joint distribution of corresponding weights in one unit,
/// `P[a + l][b + l]`.
pub fn joint_distribution<T: Real>(a: &TpmNetwork, b: &TpmNetwork, unit: usize) -> Result<Vec<Vec<T>>> {
    if a.params() != b.params() {
        return Err(param("networks have different parameters"));
    }
    if unit >= a.params().k {
        return Err(param(format!("unit {unit} out of range")));
    }
    let l = a.params().l as usize;
    let n = a.params().n;
    let mut counts = vec![vec![0usize; 2 * l + 1]; 2 * l + 1];
    for (&wa, &wb) in a.unit(unit).iter().zip(b.unit(unit)) {
        counts[(wa as i64 + l as i64) as usize][(wb as i64 + l as i64) as usize] += 1;
    }
    let total = T::from_int(n as i64);
    Ok(counts.into_iter().map(|row| row.into_iter().map(|c| T::from_int(c as i64) / total).collect()).collect())
}

/// `(Q_a, Q_b, R)` recomputed as moments of a joint distribution.
pub fn moments_from_joint<T: Real>(joint: &[Vec<T>]) -> (T, T, T) {
    let l = (joint.len() as i64 - 1) / 2;
    let mut q_a = T::zero();
    let mut q_b = T::zero();
    let mut r = T::zero();
    for (i, row) in joint.iter().enumerate() {
        let a = T::from_int(i as i64 - l);
        for (j, &p) in row.iter().enumerate() {
            let b = T::from_int(j as i64 - l);
            q_a = q_a + a * a * p;
            q_b = q_b + b * b * p;
            r = r + a * b * p;
        }
    }
    (q_a, q_b, r)
}

/// Number of distinct weight configurations, `(2l+1)^(k·n)`.
pub fn keyspace_size(k: usize, n: usize, l: u8) -> BigUint {
    let base = BigUint::from(2 * l as u32 + 1);
    let exp = u32::try_from(k * n).expect("k*n fits u32");
    base.pow(exp)
}
