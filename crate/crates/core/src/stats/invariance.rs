//! Rescaled billiard marginals against the limiting diffusion.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::time::{Duration, Instant};

use super::ks::{ks_one_sample, ks_two_sample, normal_cdf, KsResult};
use super::lemmas::nbrjumps_constant;
use super::moments::{MomentEstimate, Moments};
use crate::chain::{ChainState, StepMethod};
use crate::error::{Error, Result};
use crate::geometry::{ProfileSpec, TubeProfile};
use crate::rng::{purpose, stream};
use crate::sde::{sde_ensemble, DiffusionSpec, DEFAULT_DT};
use crate::trajectory::{rescaled_path, TimeScale};

/// Distributional p-value floor.
pub const P_FLOOR: f64 = 0.001;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvarianceParams {
    pub s_grid: Vec<f64>,
    pub n_paths: usize,
    pub master_seed: u64,
    /// Initial angle shared by the billiard paths and the diffusion.
    pub x0: f64,
    pub sde_dt: f64,
    /// Cap on the expected number of chain transitions.
    pub budget: Option<u64>,
}

impl Default for InvarianceParams {
    fn default() -> Self {
        Self {
            s_grid: vec![0.25, 0.5, 1.0],
            n_paths: 2000,
            master_seed: 42,
            x0: 0.0,
            sde_dt: DEFAULT_DT,
            budget: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reference {
    /// Standard Brownian motion, compared in closed form.
    Brownian,
    /// Euler-Maruyama ensemble of the diffusion with `h = f + g`.
    Sde,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariancePoint {
    pub s: f64,
    pub billiard: MomentEstimate,
    pub reference: MomentEstimate,
    /// `None` at `s = 0`, where both laws are a point mass.
    pub ks: Option<KsResult>,
    pub variance_ratio: f64,
    pub mean_overlap: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvarianceReport {
    pub profile: ProfileSpec,
    pub epsilon: f64,
    pub params: InvarianceParams,
    pub reference: Reference,
    /// Relative variance tolerance used for `pass`.
    pub variance_tolerance: f64,
    /// Bound on `|mean|` for the Brownian comparison.
    pub mean_tolerance: f64,
    pub points: Vec<InvariancePoint>,
    pub expected_steps: u64,
    pub total_steps: u64,
    pub pass: bool,
    /// `paths[i][j]`: path `i` at `s_grid[j]`.
    #[serde(skip)]
    pub paths: Vec<Vec<f64>>,
    /// Reference samples of `X_s - x0`, `reference_samples[j][i]`; empty for Brownian.
    #[serde(skip)]
    pub reference_samples: Vec<Vec<f64>>,
    #[serde(skip)]
    pub runtime: Duration,
}

/// Expected transitions per path from the reflection-count bound at physical time `t`.
pub fn expected_steps_per_path(profile: &TubeProfile, t: f64) -> u64 {
    let eps = profile.epsilon();
    (nbrjumps_constant(profile) * (t + 2.0 * eps) / eps).ceil() as u64
}

fn point_mass(
    s: f64,
    billiard: MomentEstimate,
    reference: MomentEstimate,
    all_zero: bool,
) -> InvariancePoint {
    InvariancePoint {
        s,
        billiard,
        reference,
        ks: None,
        variance_ratio: 1.0,
        mean_overlap: all_zero,
        pass: all_zero,
    }
}

pub fn compare_invariance(
    profile: &TubeProfile,
    params: &InvarianceParams,
) -> Result<InvarianceReport> {
    let start = Instant::now();
    let p = params;
    if p.s_grid.is_empty() || p.s_grid.windows(2).any(|w| !(w[0] <= w[1])) || !(p.s_grid[0] >= 0.0)
    {
        return Err(Error::InvalidParameter(
            "s grid must be non-empty, ascending and non-negative".into(),
        ));
    }
    let eps = profile.epsilon();
    let scale = TimeScale::new(eps)?;
    let per_path = expected_steps_per_path(profile, scale.zeta(*p.s_grid.last().unwrap()));
    let expected = per_path.saturating_mul(p.n_paths as u64);
    if let Some(b) = p.budget {
        if expected > b {
            return Err(Error::Budget(format!(
                "{} paths need about {expected} transitions, budget is {b}",
                p.n_paths
            )));
        }
    }
    let method = StepMethod::default_for(profile);
    let runs = (0..p.n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(p.master_seed, purpose::INVARIANCE, i as u64);
            let init = ChainState::stationary(p.x0, eps, &mut rng);
            rescaled_path(profile, method, init, &scale, &p.s_grid, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    let total_steps = runs.iter().map(|r| r.steps).sum();
    let paths: Vec<Vec<f64>> = runs.into_iter().map(|r| r.values).collect();

    let (reference, var_tol, mean_tol) = if profile.is_exact_annulus() {
        (Reference::Brownian, 0.2, 0.1)
    } else {
        (Reference::Sde, 0.25, f64::NAN)
    };
    let reference_samples = match reference {
        Reference::Brownian => Vec::<Vec<f64>>::new(),
        Reference::Sde => {
            let spec = DiffusionSpec::from_profile(profile, p.x0)?;
            let ens = sde_ensemble(&spec, &p.s_grid, p.n_paths, p.master_seed, p.sde_dt)?;
            ens.samples
                .into_iter()
                .map(|col| col.into_iter().map(|x| x - p.x0).collect())
                .collect()
        }
    };

    let mut points = Vec::with_capacity(p.s_grid.len());
    for (j, &s) in p.s_grid.iter().enumerate() {
        let col: Vec<f64> = paths.iter().map(|v| v[j]).collect();
        let bil = col.iter().copied().collect::<Moments>().estimate();
        let point = match reference {
            Reference::Brownian => {
                let n = p.n_paths as f64;
                let sd = s * (2.0 / n).sqrt();
                let refm = MomentEstimate {
                    mean: 0.0,
                    variance: s,
                    n: p.n_paths as u64,
                    ci95_mean: [0.0, 0.0],
                    ci95_var: [s - 1.96 * sd, s + 1.96 * sd],
                };
                if s == 0.0 {
                    point_mass(s, bil, refm, col.iter().all(|&v| v == 0.0))
                } else {
                    let ks = ks_one_sample(&col, |x| normal_cdf(x, 0.0, s.sqrt()))?;
                    let ratio = bil.variance / s;
                    let overlap = bil.ci95_mean[0] <= 0.0 && 0.0 <= bil.ci95_mean[1];
                    let pass = (ratio - 1.0).abs() <= var_tol
                        && bil.mean.abs() <= mean_tol
                        && ks.p_value > P_FLOOR;
                    InvariancePoint {
                        s,
                        billiard: bil,
                        reference: refm,
                        ks: Some(ks),
                        variance_ratio: ratio,
                        mean_overlap: overlap,
                        pass,
                    }
                }
            }
            Reference::Sde => {
                let rcol = &reference_samples[j];
                let refm = rcol.iter().copied().collect::<Moments>().estimate();
                if s == 0.0 {
                    point_mass(s, bil, refm, col.iter().chain(rcol).all(|&v| v == 0.0))
                } else {
                    let ks = ks_two_sample(&col, rcol)?;
                    let ratio = bil.variance / refm.variance;
                    let overlap = bil.mean_ci_overlaps(&refm);
                    let pass = (ratio - 1.0).abs() <= var_tol && overlap && ks.p_value > P_FLOOR;
                    InvariancePoint {
                        s,
                        billiard: bil,
                        reference: refm,
                        ks: Some(ks),
                        variance_ratio: ratio,
                        mean_overlap: overlap,
                        pass,
                    }
                }
            }
        };
        points.push(point);
    }
    Ok(InvarianceReport {
        profile: profile.spec(),
        epsilon: eps,
        params: p.clone(),
        reference,
        variance_tolerance: var_tol,
        mean_tolerance: mean_tol,
        pass: points.iter().all(|pt| pt.pass),
        points,
        expected_steps: expected,
        total_steps,
        paths,
        reference_samples,
        runtime: start.elapsed(),
    })
}
