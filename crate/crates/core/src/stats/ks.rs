//! Kolmogorov-Smirnov statistics with asymptotic p-values.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use std::f64::consts::{PI, SQRT_2};

use crate::error::{Error, Result};

/// Smallest sample accepted by the tests.
pub const KS_MIN_SAMPLES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub n1: usize,
    /// Zero for a one-sample test against a continuous law.
    pub n2: usize,
    pub p_value: f64,
}

/// `P(K > lambda)` for the Kolmogorov distribution.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // theta-function form converges fast for small arguments
        let y = -PI * PI / (8.0 * lambda * lambda);
        let s: f64 = (1..=6)
            .map(|k| (((2 * k - 1) * (2 * k - 1)) as f64 * y).exp())
            .sum();
        (1.0 - (2.0 * PI).sqrt() / lambda * s).clamp(0.0, 1.0)
    } else {
        let s: f64 = (1..=100)
            .map(|k| {
                let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
                sign * (-2.0 * (k * k) as f64 * lambda * lambda).exp()
            })
            .sum();
        (2.0 * s).clamp(0.0, 1.0)
    }
}

fn sorted(x: &[f64]) -> Vec<f64> {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// `sup |F_a - F_b|` over the pooled sample.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return if a.len() == b.len() { 0.0 } else { 1.0 };
    }
    let (a, b) = (sorted(a), sorted(b));
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n1 - j as f64 / n2).abs());
    }
    d
}

/// Two-sample test with effective size `n1 n2 / (n1 + n2)`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    let got = a.len().min(b.len());
    if got < KS_MIN_SAMPLES {
        return Err(Error::InsufficientSamples {
            needed: KS_MIN_SAMPLES,
            got,
        });
    }
    let d = ks_statistic(a, b);
    let ne = (a.len() * b.len()) as f64 / (a.len() + b.len()) as f64;
    Ok(KsResult {
        statistic: d,
        n1: a.len(),
        n2: b.len(),
        p_value: kolmogorov_survival(ne.sqrt() * d),
    })
}

/// One-sample test against a continuous CDF.
pub fn ks_one_sample(a: &[f64], cdf: impl Fn(f64) -> f64) -> Result<KsResult> {
    if a.len() < KS_MIN_SAMPLES {
        return Err(Error::InsufficientSamples {
            needed: KS_MIN_SAMPLES,
            got: a.len(),
        });
    }
    let a = sorted(a);
    let n = a.len() as f64;
    let d = a.iter().enumerate().fold(0.0f64, |d, (i, &x)| {
        let f = cdf(x);
        d.max(f - i as f64 / n).max((i + 1) as f64 / n - f)
    });
    Ok(KsResult {
        statistic: d,
        n1: a.len(),
        n2: 0,
        p_value: kolmogorov_survival(n.sqrt() * d),
    })
}

pub fn normal_cdf(x: f64, mean: f64, sd: f64) -> f64 {
    0.5 * erfc(-(x - mean) / (sd * SQRT_2))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_examples() {
        let a = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(ks_statistic(&a, &a), 0.0);
        assert_eq!(ks_statistic(&[0.0; 5], &[1.0; 7]), 1.0);
        assert_eq!(ks_statistic(&a, &[1.5, 2.5, 3.5, 4.5]), 0.25);
        assert_eq!(ks_statistic(&[1.5, 2.5, 3.5, 4.5], &a), 0.25);
    }

    #[test]
    fn ties_across_samples() {
        assert_eq!(ks_statistic(&[1.0, 1.0, 2.0], &[1.0, 2.0, 2.0]), 1.0 / 3.0);
    }

    #[test]
    fn survival_branches_agree() {
        // both series at the switch point
        let lo = |l: f64| {
            let y = -PI * PI / (8.0 * l * l);
            1.0 - (2.0 * PI).sqrt() / l
                * (1..=6)
                    .map(|k| (((2 * k - 1) * (2 * k - 1)) as f64 * y).exp())
                    .sum::<f64>()
        };
        let hi = |l: f64| {
            2.0 * (1..=100)
                .map(|k| (-1f64).powi(k + 1) * (-2.0 * (k * k) as f64 * l * l).exp())
                .sum::<f64>()
        };
        for l in [0.9, 1.0, 1.18, 1.3] {
            assert!((lo(l) - hi(l)).abs() < 1e-12, "{l}");
        }
        // classic 5% critical value
        assert!((kolmogorov_survival(1.3581) - 0.05).abs() < 1e-4);
        assert!((kolmogorov_survival(1.6276) - 0.01).abs() < 1e-4);
    }

    #[test]
    fn too_few_samples() {
        assert!(matches!(
            ks_two_sample(&[1.0; 10], &[1.0; 30]),
            Err(Error::InsufficientSamples { .. })
        ));
    }

    #[test]
    fn one_sample_against_normal() {
        // normal quantiles at the midpoints give a small statistic
        let n = 400;
        let xs: Vec<f64> = (0..n)
            .map(|i| {
                let p = (i as f64 + 0.5) / n as f64;
                -SQRT_2 * statrs::function::erf::erfc_inv(2.0 * p)
            })
            .collect();
        let r = ks_one_sample(&xs, |x| normal_cdf(x, 0.0, 1.0)).unwrap();
        assert!(r.statistic <= 0.5 / n as f64 + 1e-9, "{}", r.statistic);
        assert!(r.p_value > 0.99);
        assert!((normal_cdf(1.96, 0.0, 1.0) - 0.975).abs() < 1e-4);
    }
}
