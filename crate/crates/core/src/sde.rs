//! Euler-Maruyama for `dX = h'(X) dt + sqrt(h(X)) dW`.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{FourierSeries, TubeProfile};
use crate::rng::{purpose, stream};

/// Smallest ensemble accepted by [`sde_ensemble`].
pub const MIN_PATHS: usize = 100;
pub const DEFAULT_DT: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionSpec {
    pub h: FourierSeries,
    pub x0: f64,
}

impl DiffusionSpec {
    pub fn new(h: FourierSeries, x0: f64) -> Result<Self> {
        let m = (0..4096)
            .map(|i| h.value(std::f64::consts::TAU * i as f64 / 4096.0))
            .fold(f64::INFINITY, f64::min);
        if !(m >= 1.0 - 1e-12) {
            return Err(Error::InvalidProfile(format!(
                "h must be at least 1, found minimum {m}"
            )));
        }
        Ok(Self { h, x0 })
    }

    /// `h = 1`: standard Brownian motion from `x0`.
    pub fn brownian(x0: f64) -> Self {
        Self {
            h: FourierSeries::constant(1.0),
            x0,
        }
    }

    /// `h = f + g` of the profile.
    pub fn from_profile(profile: &TubeProfile, x0: f64) -> Result<Self> {
        Self::new(profile.h_series(), x0)
    }

    pub fn h(&self, x: f64) -> f64 {
        self.h.value(x)
    }

    pub fn h_prime(&self, x: f64) -> f64 {
        self.h.derivative(x)
    }

    /// One scheme step with Brownian increment `dw`.
    #[inline]
    pub fn euler_step(&self, x: f64, dt: f64, dw: f64) -> f64 {
        if self.h.is_constant() {
            // keeps the Brownian case an exact cumulative sum
            return x + self.h.c0.sqrt() * dw;
        }
        x + self.h_prime(x) * dt + self.h(x).sqrt() * dw
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdePath {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// Master seed and path index, when drawn from one.
    pub seed: Option<(u64, u64)>,
}

/// Scheme driven by the given Brownian increments on a uniform grid of step `dt`.
pub fn integrate_increments(spec: &DiffusionSpec, dt: f64, increments: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(increments.len() + 1);
    let mut x = spec.x0;
    out.push(x);
    for &dw in increments {
        x = spec.euler_step(x, dt, dw);
        out.push(x);
    }
    out
}

/// Number of steps used for a horizon: `dt` is shrunk so that it divides `t_end`.
pub fn step_count(t_end: f64, dt: f64) -> usize {
    ((t_end / dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize
}

fn check_step(t_end: f64, dt: f64) -> Result<()> {
    if !(dt > 0.0 && t_end >= dt) {
        return Err(Error::InvalidParameter(format!(
            "need dt > 0 and t_end >= dt, got dt {dt}, t_end {t_end}"
        )));
    }
    Ok(())
}

pub fn euler_maruyama<R: Rng + ?Sized>(
    spec: &DiffusionSpec,
    t_end: f64,
    dt: f64,
    rng: &mut R,
) -> Result<SdePath> {
    check_step(t_end, dt)?;
    let m = step_count(t_end, dt);
    let h = t_end / m as f64;
    let sq = h.sqrt();
    let dw: Vec<f64> = (0..m)
        .map(|_| sq * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let times = (0..=m)
        .map(|k| if k == m { t_end } else { k as f64 * h })
        .collect();
    Ok(SdePath {
        times,
        values: integrate_increments(spec, h, &dw),
        seed: None,
    })
}

/// Values at the ascending times `t_grid`, each segment split into steps of at most `dt`.
pub fn sample_at<R: Rng + ?Sized>(
    spec: &DiffusionSpec,
    t_grid: &[f64],
    dt: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if !(dt > 0.0)
        || t_grid.first().is_some_and(|&t| !(t >= 0.0))
        || t_grid.windows(2).any(|w| !(w[0] <= w[1]))
    {
        return Err(Error::InvalidParameter(
            "time grid must be ascending and non-negative, dt positive".into(),
        ));
    }
    let mut x = spec.x0;
    let mut t = 0.0;
    let mut out = Vec::with_capacity(t_grid.len());
    for &target in t_grid {
        let len = target - t;
        if len > 0.0 {
            let m = step_count(len, dt);
            let h = len / m as f64;
            let sq = h.sqrt();
            for _ in 0..m {
                x = spec.euler_step(x, h, sq * rng.sample::<f64, _>(StandardNormal));
            }
            t = target;
        }
        out.push(x);
    }
    Ok(out)
}

/// Marginal samples of `n_paths` independent paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdeEnsemble {
    pub t_grid: Vec<f64>,
    /// `samples[j][i]`: path `i` at time `t_grid[j]`.
    pub samples: Vec<Vec<f64>>,
    pub master_seed: u64,
}

pub fn sde_ensemble(
    spec: &DiffusionSpec,
    t_grid: &[f64],
    n_paths: usize,
    master_seed: u64,
    dt: f64,
) -> Result<SdeEnsemble> {
    if n_paths < MIN_PATHS {
        return Err(Error::InsufficientSamples {
            needed: MIN_PATHS,
            got: n_paths,
        });
    }
    let paths: Vec<Vec<f64>> = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            sample_at(
                spec,
                t_grid,
                dt,
                &mut stream(master_seed, purpose::SDE, i as u64),
            )
        })
        .collect::<Result<_>>()?;
    let samples = (0..t_grid.len())
        .map(|j| paths.iter().map(|p| p[j]).collect())
        .collect();
    Ok(SdeEnsemble {
        t_grid: t_grid.to_vec(),
        samples,
        master_seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{purpose, stream};

    fn wavy() -> DiffusionSpec {
        DiffusionSpec::new(FourierSeries::new(2.0, vec![], vec![1.0]).unwrap(), 0.0).unwrap()
    }

    #[test]
    fn brownian_is_a_cumulative_sum() {
        let spec = DiffusionSpec::brownian(0.25);
        let dt: f64 = 1e-3;
        let z: Vec<f64> = {
            let mut r = stream(1, purpose::SDE, 0);
            (0..1000)
                .map(|_| dt.sqrt() * r.sample::<f64, _>(StandardNormal))
                .collect()
        };
        let path = euler_maruyama(&spec, 1.0, dt, &mut stream(1, purpose::SDE, 0)).unwrap();
        let mut acc: f64 = 0.25;
        for (k, dw) in z.iter().enumerate() {
            acc += dw;
            assert_eq!(path.values[k + 1].to_bits(), acc.to_bits());
        }
    }

    /// Classical RK4 for `x' = cos x`.
    fn rk4_cos(x0: f64, t: f64, n: usize) -> f64 {
        let h = t / n as f64;
        (0..n).fold(x0, |x, _| {
            let k1 = x.cos();
            let k2 = (x + 0.5 * h * k1).cos();
            let k3 = (x + 0.5 * h * k2).cos();
            let k4 = (x + h * k3).cos();
            x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        })
    }

    #[test]
    fn zero_noise_follows_the_drift() {
        let spec = wavy();
        let dt = 1e-5;
        let x = *integrate_increments(&spec, dt, &vec![0.0; 100_000])
            .last()
            .unwrap();
        let oracle = rk4_cos(0.0, 1.0, 1000);
        assert!((oracle - 0.86577).abs() < 1e-5);
        assert!((oracle - 2.0 * 0.5f64.tanh().atan()).abs() < 1e-12);
        assert!((x - oracle).abs() < 1e-4);
    }

    #[test]
    fn rejects_bad_inputs() {
        let spec = DiffusionSpec::brownian(0.0);
        let mut r = stream(0, purpose::SDE, 0);
        assert!(euler_maruyama(&spec, 1.0, 0.0, &mut r).is_err());
        assert!(euler_maruyama(&spec, 1e-3, 1e-2, &mut r).is_err());
        assert!(matches!(
            sde_ensemble(&spec, &[1.0], 99, 0, 1e-2),
            Err(Error::InsufficientSamples { .. })
        ));
        assert!(
            DiffusionSpec::new(FourierSeries::new(1.0, vec![0.5], vec![]).unwrap(), 0.0).is_err()
        );
    }

    #[test]
    fn grid_sampling_matches_the_path() {
        let spec = wavy();
        let path = euler_maruyama(&spec, 0.5, 1e-3, &mut stream(4, purpose::SDE, 2)).unwrap();
        let at = sample_at(&spec, &[0.0, 0.5], 1e-3, &mut stream(4, purpose::SDE, 2)).unwrap();
        assert_eq!(at[0], 0.0);
        assert!((at[1] - path.values[500]).abs() < 1e-12);
    }

    #[test]
    fn ensemble_is_thread_independent() {
        let spec = wavy();
        let run = |n| {
            crate::rng::with_threads(Some(n), || {
                sde_ensemble(&spec, &[0.1, 0.2], 128, 9, 1e-3).unwrap()
            })
        };
        assert_eq!(run(1), run(4));
    }
}
