//! Posterior medians and equal-tailed 95% intervals.
//!
//! Quantiles use linear interpolation between order statistics: with sorted
//! draws `x_0 <= ... <= x_{n-1}` the `p` quantile is `x_h` at `h = (n - 1) p`,
//! interpolated when `h` is fractional.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_SUMMARY_DRAWS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub median: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// `p` quantile of already sorted values.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = h - lo as f64;
    if frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

pub fn posterior_summary(samples: &[f64]) -> Result<PosteriorSummary> {
    if samples.len() < MIN_SUMMARY_DRAWS {
        return Err(Error::InsufficientData {
            what: "posterior draws for a summary".into(),
            observed: samples.len(),
            needed: MIN_SUMMARY_DRAWS,
        });
    }
    if let Some(v) = samples.iter().find(|v| v.is_nan()) {
        return Err(Error::Domain(format!("draw {v} is not a number")));
    }
    let mut s = samples.to_vec();
    s.sort_unstable_by(f64::total_cmp);
    Ok(PosteriorSummary {
        median: quantile_sorted(&s, 0.5),
        ci_low: quantile_sorted(&s, 0.025),
        ci_high: quantile_sorted(&s, 0.975),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn one_to_thousand() {
        let x: Vec<f64> = (1..=1000).map(f64::from).collect();
        let s = posterior_summary(&x).unwrap();
        assert_abs_diff_eq!(s.median, 500.5, epsilon = 1e-12);
        assert_abs_diff_eq!(s.ci_low, 25.975, epsilon = 1e-9);
        assert_abs_diff_eq!(s.ci_high, 975.025, epsilon = 1e-9);
    }

    #[test]
    fn constant_draws() {
        let s = posterior_summary(&[3.5; 200]).unwrap();
        assert_eq!((s.ci_low, s.median, s.ci_high), (3.5, 3.5, 3.5));
    }

    #[test]
    fn too_few_draws() {
        assert!(matches!(
            posterior_summary(&[1.0; 99]),
            Err(Error::InsufficientData { observed: 99, .. })
        ));
    }

    #[test]
    fn standard_normal() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x: Vec<f64> = (0..1_000_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let s = posterior_summary(&x).unwrap();
        assert_abs_diff_eq!(s.median, 0.0, epsilon = 0.005);
        assert_abs_diff_eq!(s.ci_low, -1.959964, epsilon = 0.01);
        assert_abs_diff_eq!(s.ci_high, 1.959964, epsilon = 0.01);
    }
}
