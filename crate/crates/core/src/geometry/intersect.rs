//! First boundary crossing of a straight ray launched from a boundary point.
//!
//! Along `q(t) = p + t d` each curve is tracked through its signed clearance,
//! positive inside the tube: `R_out(arg q) - |q|` for the outer curve and
//! `|q| - R_in(arg q)` for the inner one. The first sign change is bracketed
//! on a grid of step `eps / 8`, shrunk by bisection and polished by Newton.

use serde::{Deserialize, Serialize};

use super::profile::{BoundaryPoint, Side, TubeProfile};
use super::vec2::Vec2;
use crate::error::{Error, Result};

/// Grid step as a fraction of the width scale.
pub const MARCH_FRACTION: f64 = 1.0 / 8.0;
/// Smallest accepted chord parameter as a fraction of the width scale.
pub const DELTA_MIN_FRACTION: f64 = 1e-3;
/// Ray parameter beyond which the search is abandoned.
pub const T_MAX: f64 = 4.0;
/// Bracket width at which bisection stops.
pub const BISECTION_WIDTH: f64 = 1e-14;
/// Clearance below which a grazing minimum counts as a double root.
pub const GRAZING_TOLERANCE: f64 = 1e-14;
const MAX_REFINE_STEPS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RayHit {
    pub point: BoundaryPoint,
    /// Ray parameter of the hit; equals the chord length for a unit direction.
    pub t: f64,
}

struct Ray<'a> {
    profile: &'a TubeProfile,
    p: Vec2,
    d: Vec2,
}

impl Ray<'_> {
    #[inline]
    fn clearance(&self, t: f64, side: Side) -> f64 {
        let q = self.p + self.d * t;
        let r = q.norm();
        let rb = self.profile.radius_cs(q.x / r, q.y / r, side);
        match side {
            Side::Outer => rb - r,
            Side::Inner => r - rb,
        }
    }

    /// Clearance and its derivative in `t`.
    #[inline]
    fn clearance_d1(&self, t: f64, side: Side) -> (f64, f64) {
        let q = self.p + self.d * t;
        let r = q.norm();
        let (rb, drb) = self.profile.radius_d1_cs(q.x / r, q.y / r, side);
        let dr = q.dot(self.d) / r;
        let dbeta = q.cross(self.d) / (r * r);
        match side {
            Side::Outer => (rb - r, drb * dbeta - dr),
            Side::Inner => (r - rb, dr - drb * dbeta),
        }
    }

    /// Root in `(lo, hi]` given clearance positive at `lo` and non-positive at
    /// `hi`: Newton iterations kept inside the bracket, with a bisection step
    /// whenever Newton would leave it, until the bracket is narrower than
    /// [`BISECTION_WIDTH`] or the Newton correction falls below it.
    fn refine(&self, mut lo: f64, mut hi: f64, side: Side) -> f64 {
        let mut t = 0.5 * (lo + hi);
        for _ in 0..MAX_REFINE_STEPS {
            let (c, dc) = self.clearance_d1(t, side);
            if c == 0.0 {
                return t;
            }
            if c > 0.0 {
                lo = t;
            } else {
                hi = t;
            }
            if hi - lo <= BISECTION_WIDTH {
                break;
            }
            let newton = t - c / dc;
            let next = if newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            let moved = (next - t).abs();
            t = next;
            if moved <= 0.5 * BISECTION_WIDTH {
                break;
            }
        }
        t
    }

    /// Locates the minimum of the inner clearance in `(lo, hi)` where its
    /// derivative goes from negative to positive. Returns the parameter of a
    /// point with non-positive clearance if the ray dips into the inner region,
    /// `None` if it stays clear.
    fn grazing(&self, mut lo: f64, mut hi: f64) -> Result<Option<f64>> {
        let mut best = f64::INFINITY;
        while hi - lo > BISECTION_WIDTH {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let (c, dc) = self.clearance_d1(mid, Side::Inner);
            best = best.min(c);
            if c <= 0.0 {
                if c > -GRAZING_TOLERANCE {
                    return Err(Error::TangentRay { t: mid });
                }
                return Ok(Some(mid));
            }
            if dc < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        if best < GRAZING_TOLERANCE {
            return Err(Error::TangentRay { t: 0.5 * (lo + hi) });
        }
        Ok(None)
    }
}

/// First intersection of the ray `start.position + t * direction`, `t > 1e-3 eps`,
/// with either boundary curve.
///
/// `direction` must be a unit vector with positive component along the inward
/// normal at `start`. The returned angle is unwrapped relative to `start.alpha`.
pub fn ray_intersect(
    profile: &TubeProfile,
    start: &BoundaryPoint,
    direction: Vec2,
) -> Result<RayHit> {
    let normal = profile.inward_normal(start.alpha, start.side);
    if !(direction.dot(normal) > 0.0) {
        return Err(Error::InvalidParameter(
            "ray direction must point into the tube".into(),
        ));
    }
    trace(profile, start, direction)
}

/// [`ray_intersect`] without the inward-direction check.
pub(crate) fn trace(
    profile: &TubeProfile,
    start: &BoundaryPoint,
    direction: Vec2,
) -> Result<RayHit> {
    let eps = profile.epsilon();
    let ray = Ray {
        profile,
        p: start.position,
        d: direction,
    };
    let step = eps * MARCH_FRACTION;
    let t0 = eps * DELTA_MIN_FRACTION;
    // grid points are always formed from their index so that skipping ahead
    // lands on exactly the same abscissae as stepping one at a time
    let grid = |j: u64| t0 + j as f64 * step;
    let reach = profile.clearance_lipschitz() * step;

    if ray.clearance(t0, start.side) <= 0.0 {
        // the true second root lies below the exclusion radius
        return Err(Error::TangentRay { t: t0 });
    }
    let watch_inner = start.side == Side::Outer;
    let probe = |t: f64| {
        let outer = ray.clearance(t, Side::Outer);
        let (inner, slope) = if watch_inner {
            ray.clearance_d1(t, Side::Inner)
        } else {
            (f64::INFINITY, 0.0)
        };
        (outer, inner, slope)
    };

    let mut j = 0u64;
    let (mut outer_a, mut inner_a, mut slope_a) = probe(t0);
    let (t, side) = loop {
        let a = grid(j);
        if a > T_MAX {
            return Err(Error::NoRootFound { t_max: T_MAX });
        }
        // no root within the next `skip + 1` grid intervals
        let clear_steps = outer_a.min(inner_a) / reach;
        if clear_steps >= 2.0 {
            j += clear_steps as u64 - 1;
            (outer_a, inner_a, slope_a) = probe(grid(j));
            continue;
        }
        let b = grid(j + 1);
        let (outer_b, inner_b, slope_b) = probe(b);
        let mut inner_root = None;
        if watch_inner {
            if inner_b <= 0.0 {
                inner_root = Some(b);
            } else if slope_a < 0.0 && slope_b > 0.0 {
                inner_root = ray.grazing(a, b)?;
            }
        }
        match (inner_root, outer_b <= 0.0) {
            (None, false) => {
                j += 1;
                (outer_a, inner_a, slope_a) = (outer_b, inner_b, slope_b);
            }
            (None, true) => break (ray.refine(a, b, Side::Outer), Side::Outer),
            (Some(hi), false) => break (ray.refine(a, hi, Side::Inner), Side::Inner),
            (Some(hi), true) => {
                let ti = ray.refine(a, hi, Side::Inner);
                let to = ray.refine(a, b, Side::Outer);
                break if ti <= to {
                    (ti, Side::Inner)
                } else {
                    (to, Side::Outer)
                };
            }
        }
    };

    let q = start.position + direction * t;
    let delta = start.position.cross(q).atan2(start.position.dot(q));
    let point = profile.eval_boundary(start.alpha + delta, side);
    Ok(RayHit { point, t })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::chord::annulus_chord;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn launch(p: &TubeProfile, alpha: f64, side: Side, theta: f64) -> Result<RayHit> {
        let start = p.eval_boundary(alpha, side);
        ray_intersect(p, &start, p.launch_direction(alpha, side, theta))
    }

    #[test]
    fn matches_closed_form_at_forty_five_degrees() {
        let p = TubeProfile::exact_annulus(0.1).unwrap();
        let hit = launch(&p, FRAC_PI_2, Side::Inner, FRAC_PI_4).unwrap();
        let sol = annulus_chord(0.1, FRAC_PI_4, Side::Inner).unwrap();
        assert_eq!(hit.point.side, Side::Outer);
        assert!((hit.point.alpha - FRAC_PI_2 - sol.delta_alpha).abs() < 1e-12);
        assert!((hit.point.alpha - FRAC_PI_2 - 0.09558).abs() < 5e-6);
        assert!((hit.t - sol.chord_length).abs() < 1e-12);
    }

    #[test]
    fn radial_chord_lands_on_the_axis() {
        let p = TubeProfile::exact_annulus(0.1).unwrap();
        let hit = launch(&p, FRAC_PI_2, Side::Inner, 0.0).unwrap();
        assert_eq!(hit.point.side, Side::Outer);
        assert!(hit.point.position.x.abs() < 1e-15);
        assert!((hit.point.position.y - 1.0).abs() < 1e-15);
        assert!((hit.t - 0.1).abs() < 1e-13);
    }

    #[test]
    fn unwraps_across_the_branch_cut() {
        let p = TubeProfile::exact_annulus(0.1).unwrap();
        let alpha = 3.0 * std::f64::consts::PI - 0.01;
        let hit = launch(&p, alpha, Side::Inner, 1.0).unwrap();
        let sol = annulus_chord(0.1, 1.0, Side::Inner).unwrap();
        assert!((hit.point.alpha - alpha - sol.delta_alpha).abs() < 1e-12);
    }

    #[test]
    fn rejects_outward_direction() {
        let p = TubeProfile::exact_annulus(0.1).unwrap();
        let start = p.eval_boundary(0.0, Side::Outer);
        assert!(ray_intersect(&p, &start, Vec2::new(1.0, 0.0)).is_err());
    }

    #[test]
    fn grazing_outer_launch_is_resampled_or_consistent() {
        let eps = 0.05;
        let p = TubeProfile::exact_annulus(eps).unwrap();
        let theta_c = (eps * (2.0 - eps)).sqrt().acos();
        for k in [-1e-6, -1e-9, 1e-9, 1e-6] {
            let th = theta_c + k;
            let sol = annulus_chord(eps, th, Side::Outer).unwrap();
            match launch(&p, 0.3, Side::Outer, th) {
                Ok(hit) => {
                    assert_eq!(hit.point.side, sol.hit_side, "offset {k}");
                    assert!((hit.point.alpha - 0.3 - sol.delta_alpha).abs() < 1e-9);
                }
                Err(e) => assert!(e.is_resample()),
            }
        }
    }
}
