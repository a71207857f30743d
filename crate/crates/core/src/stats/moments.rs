use serde::{Deserialize, Serialize};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Running mean and central moments up to fourth order.
///
/// Merging uses the pairwise update formulas, so partial accumulators from
/// parallel workers can be combined in any grouping.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
    m3: f64,
    m4: f64,
}

impl Moments {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        let n1 = self.n as f64;
        self.n += 1;
        let n = self.n as f64;
        let delta = x - self.mean;
        let dn = delta / n;
        let dn2 = dn * dn;
        let term = delta * dn * n1;
        self.mean += dn;
        self.m4 += term * dn2 * (n * n - 3.0 * n + 3.0) + 6.0 * dn2 * self.m2 - 4.0 * dn * self.m3;
        self.m3 += term * dn * (n - 2.0) - 3.0 * dn * self.m2;
        self.m2 += term;
    }

    pub fn merge(&mut self, o: &Moments) {
        if o.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *o;
            return;
        }
        let (na, nb) = (self.n as f64, o.n as f64);
        let n = na + nb;
        let d = o.mean - self.mean;
        let d2 = d * d;
        let m2 = self.m2 + o.m2 + d2 * na * nb / n;
        let m3 = self.m3
            + o.m3
            + d * d2 * na * nb * (na - nb) / (n * n)
            + 3.0 * d * (na * o.m2 - nb * self.m2) / n;
        let m4 = self.m4
            + o.m4
            + d2 * d2 * na * nb * (na * na - na * nb + nb * nb) / (n * n * n)
            + 6.0 * d2 * (na * na * o.m2 + nb * nb * self.m2) / (n * n)
            + 4.0 * d * (na * o.m3 - nb * self.m3) / n;
        self.mean += d * nb / n;
        self.m2 = m2;
        self.m3 = m3;
        self.m4 = m4;
        self.n += o.n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        (self.m2 / (self.n - 1) as f64).max(0.0)
    }

    /// Fourth central moment (biased).
    pub fn central4(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        self.m4 / self.n as f64
    }

    pub fn std_error(&self) -> f64 {
        (self.variance() / self.n as f64).sqrt()
    }

    /// Standard error of the sample variance.
    pub fn variance_std_error(&self) -> f64 {
        let n = self.n as f64;
        if self.n < 4 {
            return f64::INFINITY;
        }
        let v = self.variance();
        ((self.central4() - v * v * (n - 3.0) / (n - 1.0)) / n)
            .max(0.0)
            .sqrt()
    }

    pub fn estimate(&self) -> MomentEstimate {
        let (m, v) = (self.mean(), self.variance());
        let (hm, hv) = (Z95 * self.std_error(), Z95 * self.variance_std_error());
        MomentEstimate {
            mean: m,
            variance: v,
            n: self.n,
            ci95_mean: [m - hm, m + hm],
            ci95_var: [(v - hv).max(0.0), v + hv],
        }
    }
}

impl Extend<f64> for Moments {
    fn extend<I: IntoIterator<Item = f64>>(&mut self, iter: I) {
        iter.into_iter().for_each(|x| self.push(x));
    }
}

impl FromIterator<f64> for Moments {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut m = Moments::new();
        m.extend(iter);
        m
    }
}

/// Mean and variance with normal-approximation 95% intervals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub mean: f64,
    pub variance: f64,
    pub n: u64,
    pub ci95_mean: [f64; 2],
    pub ci95_var: [f64; 2],
}

impl MomentEstimate {
    /// Estimate of the moments of `k X`.
    pub fn scaled(&self, k: f64) -> Self {
        let sort = |a: f64, b: f64| if a <= b { [a, b] } else { [b, a] };
        Self {
            mean: self.mean * k,
            variance: self.variance * k * k,
            n: self.n,
            ci95_mean: sort(self.ci95_mean[0] * k, self.ci95_mean[1] * k),
            ci95_var: [self.ci95_var[0] * k * k, self.ci95_var[1] * k * k],
        }
    }

    pub fn mean_half_width(&self) -> f64 {
        0.5 * (self.ci95_mean[1] - self.ci95_mean[0])
    }

    pub fn std_error(&self) -> f64 {
        (self.variance / self.n as f64).sqrt()
    }

    pub fn mean_ci_overlaps(&self, other: &MomentEstimate) -> bool {
        self.ci95_mean[0] <= other.ci95_mean[1] && other.ci95_mean[0] <= self.ci95_mean[1]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(xs: &[f64]) -> (f64, f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        let c4 = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
        (m, v, c4)
    }

    #[test]
    fn matches_two_pass_formulas() {
        let xs: Vec<f64> = (0..1000)
            .map(|i| ((i * 7919) % 1009) as f64 / 97.0 - 3.0)
            .collect();
        let m: Moments = xs.iter().copied().collect();
        let (mean, var, c4) = naive(&xs);
        assert!((m.mean() - mean).abs() < 1e-12);
        assert!((m.variance() - var).abs() < 1e-10);
        assert!((m.central4() - c4).abs() < 1e-8);
    }

    #[test]
    fn merge_is_grouping_independent() {
        let xs: Vec<f64> = (0..999)
            .map(|i| (i as f64 * 0.37).sin() * 5.0 + 1.0)
            .collect();
        let whole: Moments = xs.iter().copied().collect();
        let mut parts = Moments::new();
        for chunk in xs.chunks(77) {
            parts.merge(&chunk.iter().copied().collect());
        }
        assert_eq!(parts.count(), whole.count());
        assert!((parts.mean() - whole.mean()).abs() < 1e-12);
        assert!((parts.variance() - whole.variance()).abs() < 1e-11);
        assert!((parts.central4() - whole.central4()).abs() < 1e-9);
    }

    #[test]
    fn intervals_shrink_like_root_n() {
        let gen =
            |n: usize| -> Moments { (0..n).map(|i| ((i * 2654435761) % 1000) as f64).collect() };
        let (a, b) = (gen(10_000).estimate(), gen(20_000).estimate());
        let ratio = b.mean_half_width() / a.mean_half_width();
        assert!((ratio - 0.5f64.sqrt()).abs() < 0.1 * 0.5f64.sqrt());
    }

    #[test]
    fn scaling_by_negative_keeps_intervals_ordered() {
        let m: Moments = [1.0, 2.0, 4.0, 8.0, 3.0].into_iter().collect();
        let e = m.estimate().scaled(-2.0);
        assert!(e.ci95_mean[0] <= e.mean && e.mean <= e.ci95_mean[1]);
        assert!((e.variance - 4.0 * m.variance()).abs() < 1e-12);
    }
}
