use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::profile::{Side, TubeProfile};

/// Number of equispaced angles at which a profile is checked.
pub const VALIDATION_GRID: usize = 4096;

/// One admissibility check with the extremal values observed on the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileCheck {
    pub name: String,
    pub passed: bool,
    pub min: f64,
    pub max: f64,
    /// Inclusive lower bound, or exclusive for curvature.
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub epsilon: f64,
    pub grid_points: usize,
    pub checks: Vec<ProfileCheck>,
    /// Grid estimate of `sup |g'|`.
    pub g_prime_sup: f64,
    pub passed: bool,
}

impl ValidationReport {
    pub fn check(&self, name: &str) -> Option<&ProfileCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ProfileCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

fn extremes(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    })
}

fn range_check(name: &str, (min, max): (f64, f64), lower: f64, upper: f64) -> ProfileCheck {
    // absorbs rounding in coefficient sums such as 1.5 + 0.5
    let slack = 1e-12;
    ProfileCheck {
        name: name.into(),
        passed: min >= lower - slack && max <= upper + slack,
        min,
        max,
        lower: Some(lower),
        upper: Some(upper),
    }
}

/// Checks the width ranges `1 <= f <= 2`, `0 <= g <= 1` and strict convexity
/// of both curves on the grid. Never fails; problems are reported.
pub fn validate_profile(profile: &TubeProfile) -> ValidationReport {
    let grid: Vec<f64> = (0..VALIDATION_GRID)
        .map(|i| 2.0 * PI * i as f64 / VALIDATION_GRID as f64)
        .collect();
    let f = extremes(grid.iter().map(|&a| profile.f(a)));
    let g = extremes(grid.iter().map(|&a| profile.g(a)));
    let mut checks = vec![
        range_check("h1_f_range", f, 1.0, 2.0),
        range_check("h1_g_range", g, 0.0, 1.0),
    ];
    for (name, side) in [("convex_outer", Side::Outer), ("convex_inner", Side::Inner)] {
        let (min, max) = extremes(grid.iter().map(|&a| profile.curvature(a, side)));
        checks.push(ProfileCheck {
            name: name.into(),
            passed: min > 0.0,
            min,
            max,
            lower: Some(0.0),
            upper: None,
        });
    }
    let g_prime_sup = grid
        .iter()
        .map(|&a| profile.g_series().derivative(a).abs())
        .fold(0.0, f64::max);
    let passed = checks.iter().all(|c| c.passed);
    ValidationReport {
        epsilon: profile.epsilon(),
        grid_points: VALIDATION_GRID,
        checks,
        g_prime_sup,
        passed,
    }
}
