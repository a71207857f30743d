//! Closed-form chords of the exact annulus between radii `1 - eps` and `1`.
//!
//! By rotation invariance every chord is computed with the launch point at
//! polar angle `pi/2`. Coordinates are reported in the frame where the launch
//! point sits on the positive `y` axis and positive `x` points toward
//! increasing polar angle, so `delta_alpha = atan2(x, y)`. A launch angle
//! `theta` is measured from the inward normal, positive toward increasing
//! polar angle.

use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

use super::profile::{Side, ANNULUS_EPSILON_MAX};
use crate::error::{Error, Result};

/// One flight across (or along) the annulus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChordSolution {
    /// `cot theta`; infinite for a radial launch.
    pub a: f64,
    pub hit_side: Side,
    pub x: f64,
    pub y: f64,
    pub delta_alpha: f64,
    pub chord_length: f64,
}

/// `(2 eps - eps^2) / (1 - eps)^2`: an outer launch reaches the inner circle iff `a^2` is at least this.
pub fn critical_cot_squared(epsilon: f64) -> f64 {
    (2.0 * epsilon - epsilon * epsilon) / ((1.0 - epsilon) * (1.0 - epsilon))
}

fn check_inputs(epsilon: f64, theta: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon < ANNULUS_EPSILON_MAX) {
        return Err(Error::InvalidParameter(format!(
            "annulus width {epsilon} outside (0, 0.5)"
        )));
    }
    if theta.abs() == FRAC_PI_2 {
        return Err(Error::DegenerateTangent { theta });
    }
    if !(theta.abs() < FRAC_PI_2) {
        return Err(Error::InvalidParameter(format!(
            "launch angle {theta} outside (-pi/2, pi/2)"
        )));
    }
    Ok(())
}

/// Chord of the unit-radius annulus of width `epsilon` launched at angle `theta` from `start_side`.
pub fn annulus_chord(epsilon: f64, theta: f64, start_side: Side) -> Result<ChordSolution> {
    check_inputs(epsilon, theta)?;
    let (s, c) = theta.sin_cos();
    let k = epsilon * (2.0 - epsilon);
    let a = c / s;
    let (hit_side, t, y) = match start_side {
        Side::Inner => {
            // Conjugate form of sin(t)cos(t)(-1 + eps + sqrt(1 + (2 - eps) eps tan^2 t)) / sin(t).
            let t = k / ((c * c + k * s * s).sqrt() + (1.0 - epsilon) * c);
            (Side::Outer, t, 1.0 - epsilon + t * c)
        }
        Side::Outer => {
            let disc = c * c - k;
            if disc >= 0.0 {
                let t = k / (c + disc.sqrt());
                (Side::Inner, t, 1.0 - t * c)
            } else {
                let t = 2.0 * c;
                (Side::Outer, t, 1.0 - t * c)
            }
        }
    };
    let x = t * s;
    Ok(ChordSolution {
        a,
        hit_side,
        x,
        y,
        delta_alpha: x.atan2(y),
        chord_length: t,
    })
}

/// Chord of the annulus between radii `radius - width` and `radius`.
///
/// Only the ratio `width / radius` enters the angular increment, so the
/// process in `D(c eps, c)` reproduces the one in `D(eps, 1)` whenever
/// `c * eps` is exactly representable.
pub fn annulus_chord_scaled(
    width: f64,
    radius: f64,
    theta: f64,
    start_side: Side,
) -> Result<ChordSolution> {
    if !(radius > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "annulus radius {radius} must be positive"
        )));
    }
    let unit = annulus_chord(width / radius, theta, start_side)?;
    Ok(ChordSolution {
        x: unit.x * radius,
        y: unit.y * radius,
        chord_length: unit.chord_length * radius,
        ..unit
    })
}
