//! Chi-square goodness of fit against uniform or arbitrary laws.

use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{param, Result};

/// Pearson statistic of a 256-bin byte histogram against the uniform law.
pub fn chi_square(histogram: &[u64; 256]) -> Result<f64> {
    chi_square_against(histogram, &[1.0 / 256.0; 256])
}

/// Pearson statistic `Σ (observed − expected)² / expected` where the
/// expected counts are `total · probs[i]`.
pub fn chi_square_against(observed: &[u64], probs: &[f64]) -> Result<f64> {
    if observed.len() != probs.len() {
        return Err(param("histogram and law have different lengths"));
    }
    let total: u64 = observed.iter().sum();
    if total == 0 {
        return Err(param("empty histogram"));
    }
    let total = total as f64;
    let mut stat = 0.0;
    for (&o, &p) in observed.iter().zip(probs) {
        let expected = total * p;
        if expected <= 0.0 {
            if o > 0 {
                return Ok(f64::INFINITY);
            }
            continue;
        }
        stat += (o as f64 - expected).powi(2) / expected;
    }
    Ok(stat)
}

/// Upper-tail probability of the chi-square law with `dof` degrees of freedom.
pub fn chi_square_sf(stat: f64, dof: f64) -> f64 {
    let law = ChiSquared::new(dof).expect("positive degrees of freedom");
    1.0 - law.cdf(stat)
}

pub fn chi_square_quantile(p: f64, dof: f64) -> f64 {
    ChiSquared::new(dof).expect("positive degrees of freedom").inverse_cdf(p)
}

pub fn byte_histogram(bytes: &[u8]) -> [u64; 256] {
    let mut h = [0u64; 256];
    for &b in bytes {
        h[b as usize] += 1;
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::otp_block;
    use crate::rng::RngState;

    #[test]
    fn uniform_histogram_is_zero() {
        assert_eq!(chi_square(&[40; 256]).unwrap(), 0.0);
    }

    #[test]
    fn point_mass_closed_form() {
        let mut h = [0u64; 256];
        h[17] = 1000;
        let stat = chi_square(&h).unwrap();
        assert!((stat - 1000.0 * 255.0).abs() < 1e-6);
    }

    #[test]
    fn empty_histogram_is_an_error() {
        assert!(chi_square(&[0; 256]).is_err());
    }

    #[test]
    fn otp_keystream_output_looks_uniform() {
        let mut rng = RngState::from_u64(0xC41);
        let plain = [0x42u8; 16];
        let mut bytes = Vec::with_capacity(1_000_000);
        while bytes.len() < 1_000_000 {
            let key = rng.bytes16();
            bytes.extend_from_slice(&otp_block(&key, &plain));
        }
        bytes.truncate(1_000_000);
        let stat = chi_square(&byte_histogram(&bytes)).unwrap();
        let (lo, hi) = (chi_square_quantile(0.01, 255.0), chi_square_quantile(0.99, 255.0));
        assert!(stat > lo && stat < hi, "stat={stat} bounds=({lo}, {hi})");
    }

    #[test]
    fn quantiles_are_sane() {
        let q = chi_square_quantile(0.5, 255.0);
        assert!((q - 254.33).abs() < 0.1);
        assert!((chi_square_sf(q, 255.0) - 0.5).abs() < 1e-4);
    }
}
