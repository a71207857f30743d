use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::fourier::{DenseSeries, FourierSeries, Jet};
use super::vec2::Vec2;
use crate::error::{Error, Result};

/// Largest width scale accepted for a perturbed profile.
pub const PERTURBED_EPSILON_MAX: f64 = 0.01;
/// Exclusive upper limit on the width of an exact annulus.
pub const ANNULUS_EPSILON_MAX: f64 = 0.5;

/// Which of the two boundary curves a point lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Side {
    Outer = 0,
    Inner = 1,
}

impl Side {
    pub fn index(self) -> u8 {
        self as u8
    }

    pub fn from_index(i: u8) -> Option<Side> {
        match i {
            0 => Some(Side::Outer),
            1 => Some(Side::Inner),
            _ => None,
        }
    }

    pub fn other(self) -> Side {
        match self {
            Side::Outer => Side::Inner,
            Side::Inner => Side::Outer,
        }
    }
}

impl From<Side> for u8 {
    fn from(s: Side) -> u8 {
        s.index()
    }
}

impl TryFrom<u8> for Side {
    type Error = String;
    fn try_from(v: u8) -> std::result::Result<Self, String> {
        Side::from_index(v).ok_or_else(|| format!("side must be 0 or 1, got {v}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileMode {
    /// `f = 1`, `g = 0`: concentric circles of radii `1 - eps` and `1`.
    ExactAnnulus,
    Perturbed,
}

/// Serializable description of a tube, as found in profile files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSpec {
    pub epsilon: f64,
    pub mode: ProfileMode,
    #[serde(default)]
    pub f: Option<FourierSeries>,
    #[serde(default)]
    pub g: Option<FourierSeries>,
}

/// A point on one of the two boundary curves, `radius * e^{i alpha}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPoint {
    pub alpha: f64,
    pub side: Side,
    pub position: Vec2,
    pub radius: f64,
}

/// The domain between `(1 + eps g(a)) e^{ia}` (outer) and `(1 - eps f(a)) e^{ia}` (inner).
///
/// `f` takes values in `[1, 2]` and `g` in `[0, 1]`; both are dimensionless
/// and the physical widths are `eps f` and `eps g`. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct TubeProfile {
    f: FourierSeries,
    g: FourierSeries,
    epsilon: f64,
    mode: ProfileMode,
    f_eps: FourierSeries,
    g_eps: FourierSeries,
    f_dense: DenseSeries,
    g_dense: DenseSeries,
    lipschitz: f64,
}

impl TubeProfile {
    pub fn exact_annulus(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < ANNULUS_EPSILON_MAX) {
            return Err(Error::InvalidProfile(format!(
                "annulus width must lie in (0, {ANNULUS_EPSILON_MAX}), got {epsilon}"
            )));
        }
        Ok(Self::build(
            FourierSeries::constant(1.0),
            FourierSeries::constant(0.0),
            epsilon,
            ProfileMode::ExactAnnulus,
        ))
    }

    /// Perturbed annulus. Range and convexity are not checked here; see
    /// [`validate_profile`](super::validate_profile).
    pub fn perturbed(f: FourierSeries, g: FourierSeries, epsilon: f64) -> Result<Self> {
        f.check()?;
        g.check()?;
        if !(epsilon > 0.0 && epsilon <= PERTURBED_EPSILON_MAX) {
            return Err(Error::InvalidProfile(format!(
                "perturbed width scale must lie in (0, {PERTURBED_EPSILON_MAX}], got {epsilon}"
            )));
        }
        Ok(Self::build(f, g, epsilon, ProfileMode::Perturbed))
    }

    /// `f = 1.5 + 0.5 sin a`, `g = 0.5 + 0.5 cos a`, so `h = 2 + 0.5 (sin a + cos a)`.
    pub fn example(epsilon: f64) -> Result<Self> {
        let f = FourierSeries::new(1.5, vec![], vec![0.5])?;
        let g = FourierSeries::new(0.5, vec![0.5], vec![])?;
        Self::perturbed(f, g, epsilon)
    }

    pub fn from_spec(spec: &ProfileSpec) -> Result<Self> {
        match spec.mode {
            ProfileMode::ExactAnnulus => Self::exact_annulus(spec.epsilon),
            ProfileMode::Perturbed => {
                let f = spec
                    .f
                    .clone()
                    .ok_or_else(|| Error::InvalidProfile("perturbed profile needs `f`".into()))?;
                let g = spec
                    .g
                    .clone()
                    .ok_or_else(|| Error::InvalidProfile("perturbed profile needs `g`".into()))?;
                Self::perturbed(f, g, spec.epsilon)
            }
        }
    }

    pub fn spec(&self) -> ProfileSpec {
        let (f, g) = match self.mode {
            ProfileMode::ExactAnnulus => (None, None),
            ProfileMode::Perturbed => (Some(self.f.clone()), Some(self.g.clone())),
        };
        ProfileSpec {
            epsilon: self.epsilon,
            mode: self.mode,
            f,
            g,
        }
    }

    /// Same shape functions at a different width scale.
    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        match self.mode {
            ProfileMode::ExactAnnulus => Self::exact_annulus(epsilon),
            ProfileMode::Perturbed => Self::perturbed(self.f.clone(), self.g.clone(), epsilon),
        }
    }

    fn build(f: FourierSeries, g: FourierSeries, epsilon: f64, mode: ProfileMode) -> Self {
        let f_eps = f.scaled(epsilon);
        let g_eps = g.scaled(epsilon);
        let (f_dense, g_dense) = (DenseSeries::new(&f_eps), DenseSeries::new(&g_eps));
        let slope = f_eps.derivative_bound().max(g_eps.derivative_bound());
        let lipschitz = (1.0 + slope / (1.0 - 2.0 * epsilon)) * (1.0 + 1e-9);
        Self {
            f,
            g,
            epsilon,
            mode,
            f_eps,
            g_eps,
            f_dense,
            g_dense,
            lipschitz,
        }
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn mode(&self) -> ProfileMode {
        self.mode
    }

    pub fn is_exact_annulus(&self) -> bool {
        self.mode == ProfileMode::ExactAnnulus
    }

    pub fn f_series(&self) -> &FourierSeries {
        &self.f
    }

    pub fn g_series(&self) -> &FourierSeries {
        &self.g
    }

    /// `h = f + g`, the dimensionless local width.
    pub fn h_series(&self) -> FourierSeries {
        self.f.plus(&self.g)
    }

    pub fn f(&self, alpha: f64) -> f64 {
        self.f.value(alpha)
    }

    pub fn g(&self, alpha: f64) -> f64 {
        self.g.value(alpha)
    }

    pub fn h(&self, alpha: f64) -> f64 {
        self.f.value(alpha) + self.g.value(alpha)
    }

    pub fn h_prime(&self, alpha: f64) -> f64 {
        self.f.derivative(alpha) + self.g.derivative(alpha)
    }

    /// `sup |g'|` of the dimensionless outer width, from the coefficient bound
    /// (exact for a single harmonic).
    pub fn g_prime_bound(&self) -> f64 {
        self.g.derivative_bound()
    }

    /// `sup |f'| + sup |g'|` coefficient bound.
    pub fn slope_bound(&self) -> f64 {
        self.f.derivative_bound() + self.g.derivative_bound()
    }

    fn scaled_series(&self, side: Side) -> &FourierSeries {
        match side {
            Side::Outer => &self.g_eps,
            Side::Inner => &self.f_eps,
        }
    }

    fn dense(&self, side: Side) -> &DenseSeries {
        match side {
            Side::Outer => &self.g_dense,
            Side::Inner => &self.f_dense,
        }
    }

    /// Bound on `|d/dt (|q| - R(arg q))|` along any unit-speed ray `q(t)` in the tube.
    pub fn clearance_lipschitz(&self) -> f64 {
        self.lipschitz
    }

    fn sign(side: Side) -> f64 {
        match side {
            Side::Outer => 1.0,
            Side::Inner => -1.0,
        }
    }

    /// Boundary radius `1 + (1 - s) g_eps(a) - s f_eps(a)`.
    pub fn radius(&self, alpha: f64, side: Side) -> f64 {
        1.0 + Self::sign(side) * self.scaled_series(side).value(alpha)
    }

    /// Radius at the angle with cosine/sine `(c, s)`.
    #[inline]
    pub fn radius_cs(&self, c: f64, s: f64, side: Side) -> f64 {
        1.0 + Self::sign(side) * self.dense(side).value_cs(c, s)
    }

    /// Radius and its angular derivative at the angle with cosine/sine `(c, s)`.
    #[inline]
    pub fn radius_d1_cs(&self, c: f64, s: f64, side: Side) -> (f64, f64) {
        let (v, d) = self.dense(side).value_d1_cs(c, s);
        let k = Self::sign(side);
        (1.0 + k * v, k * d)
    }

    /// Radius and angular derivatives up to third order.
    pub fn radius_jet(&self, alpha: f64, side: Side) -> Jet {
        let j = self.scaled_series(side).jet(alpha);
        let k = Self::sign(side);
        Jet {
            value: 1.0 + k * j.value,
            d1: k * j.d1,
            d2: k * j.d2,
            d3: k * j.d3,
        }
    }

    /// Largest and smallest radius any point of the domain can have.
    pub fn radius_bounds(&self) -> (f64, f64) {
        (1.0 - 2.0 * self.epsilon, 1.0 + self.epsilon)
    }

    pub fn eval_boundary(&self, alpha: f64, side: Side) -> BoundaryPoint {
        let (s, c) = alpha.sin_cos();
        let radius = self.radius_cs(c, s, side);
        BoundaryPoint {
            alpha,
            side,
            position: Vec2::new(radius * c, radius * s),
            radius,
        }
    }

    /// Boundary point with its unit tangent (toward increasing `alpha`) and
    /// unit inward normal.
    pub fn frame(&self, alpha: f64, side: Side) -> (BoundaryPoint, Vec2, Vec2) {
        let (s, c) = alpha.sin_cos();
        let (r, dr) = self.radius_d1_cs(c, s, side);
        let point = BoundaryPoint {
            alpha,
            side,
            position: Vec2::new(r * c, r * s),
            radius: r,
        };
        let tangent = Vec2::new(dr * c - r * s, dr * s + r * c).normalized();
        let normal = match side {
            // tangents run counter-clockwise: the tube lies left of the outer
            // curve and right of the inner one
            Side::Outer => tangent.perp(),
            Side::Inner => -tangent.perp(),
        };
        (point, tangent, normal)
    }

    pub fn tangent(&self, alpha: f64, side: Side) -> Vec2 {
        self.frame(alpha, side).1
    }

    pub fn inward_normal(&self, alpha: f64, side: Side) -> Vec2 {
        self.frame(alpha, side).2
    }

    /// Direction making angle `theta` with the inward normal, positive `theta`
    /// tilting toward increasing `alpha`.
    pub fn launch_direction(&self, alpha: f64, side: Side, theta: f64) -> Vec2 {
        let (_, t, n) = self.frame(alpha, side);
        let (s, c) = theta.sin_cos();
        n * c + t * s
    }

    /// Signed curvature of the boundary curve at `alpha`.
    pub fn curvature(&self, alpha: f64, side: Side) -> f64 {
        match side {
            Side::Outer => {
                let g = self.g_eps.jet(alpha);
                let r = 1.0 + g.value;
                (r * (r - g.d2) + 2.0 * g.d1 * g.d1) / (r * r + g.d1 * g.d1).powf(1.5)
            }
            Side::Inner => {
                let f = self.f_eps.jet(alpha);
                let r = 1.0 - f.value;
                (r * (r + f.d2) + 2.0 * f.d1 * f.d1) / (r * r + f.d1 * f.d1).powf(1.5)
            }
        }
    }

    /// Angle between the inward normal and the radial direction, positive when
    /// the tube widens toward increasing `alpha` on that side.
    pub fn normal_tilt(&self, alpha: f64, side: Side) -> f64 {
        match side {
            Side::Outer => {
                let g = self.g_eps.jet(alpha);
                let r = 1.0 + g.value;
                (g.d1 / (r * r + g.d1 * g.d1).sqrt()).asin()
            }
            Side::Inner => {
                let f = self.f_eps.jet(alpha);
                let r = 1.0 - f.value;
                (f.d1 / (r * r + f.d1 * f.d1).sqrt()).asin()
            }
        }
    }

    /// Bound on the angular jump between consecutive reflections.
    pub fn max_jump(&self) -> f64 {
        match self.mode {
            ProfileMode::ExactAnnulus => 2.0 * annulus_jump_sup(self.epsilon),
            ProfileMode::Perturbed => 12.0 * self.epsilon.sqrt(),
        }
    }
}

/// `b_eps = arctan sqrt(2 eps - eps^2)`, the nominal half-width of the
/// inner-to-outer jump law. The true supremum, [`annulus_jump_sup`], exceeds it
/// by a factor `1 + O(eps)`.
pub fn annulus_half_support(epsilon: f64) -> f64 {
    (2.0 * epsilon - epsilon * epsilon).sqrt().atan()
}

/// `arccos(1 - eps)`: angular jump of a tangential launch from the inner
/// circle, the supremum of `|T|`. Outer-to-outer jumps are bounded by twice it.
pub fn annulus_jump_sup(epsilon: f64) -> f64 {
    (2.0 * epsilon - epsilon * epsilon)
        .sqrt()
        .atan2(1.0 - epsilon)
}

/// Representative of `x` modulo `2 pi` in `(-pi, pi]`.
pub fn wrap_angle(x: f64) -> f64 {
    let mut d = x % (2.0 * PI);
    if d > PI {
        d -= 2.0 * PI;
    } else if d <= -PI {
        d += 2.0 * PI;
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn annulus_boundary_points() {
        let p = TubeProfile::exact_annulus(0.1).unwrap();
        let b = p.eval_boundary(FRAC_PI_2, Side::Inner);
        assert!(b.position.x.abs() < 1e-15 && (b.position.y - 0.9).abs() < 1e-15);
        let b = p.eval_boundary(0.0, Side::Outer);
        assert_eq!(b.position, Vec2::new(1.0, 0.0));
        assert_eq!(b.alpha, 0.0);
    }

    #[test]
    fn perturbed_boundary_point() {
        let p = TubeProfile::example(0.01).unwrap();
        let b = p.eval_boundary(0.0, Side::Outer);
        assert!((b.position.x - 1.01).abs() < 1e-15 && b.position.y == 0.0);
        // unwrapped angles are passed through
        let b = p.eval_boundary(7.0, Side::Inner);
        assert_eq!(b.alpha, 7.0);
    }

    #[test]
    fn annulus_curvature_and_tilt() {
        let p = TubeProfile::exact_annulus(0.1).unwrap();
        for &a in &[0.0, 1.3, -4.0] {
            assert!((p.curvature(a, Side::Outer) - 1.0).abs() < 1e-15);
            assert!((p.curvature(a, Side::Inner) - 1.0 / 0.9).abs() < 1e-14);
            assert_eq!(p.normal_tilt(a, Side::Outer), 0.0);
            assert_eq!(p.normal_tilt(a, Side::Inner), 0.0);
        }
    }

    #[test]
    fn tilt_of_example_profile() {
        let p = TubeProfile::example(0.01).unwrap();
        let expected = (0.005f64 / (0.985f64 * 0.985 + 0.005 * 0.005).sqrt()).asin();
        assert!((p.normal_tilt(0.0, Side::Inner) - expected).abs() < 1e-15);
        assert!((expected - 0.005076098533).abs() < 1e-11);
        // g' vanishes at 0 and pi
        assert!(p.normal_tilt(0.0, Side::Outer).abs() < 1e-18);
        assert!(p.normal_tilt(PI, Side::Outer).abs() < 1e-17);
    }

    #[test]
    fn normals_point_into_the_tube() {
        let p = TubeProfile::example(0.01).unwrap();
        for i in 0..64 {
            let a = i as f64 * 0.1;
            let out = p.eval_boundary(a, Side::Outer).position;
            let inn = p.eval_boundary(a, Side::Inner).position;
            assert!(p.inward_normal(a, Side::Outer).dot(inn - out) > 0.0);
            assert!(p.inward_normal(a, Side::Inner).dot(out - inn) > 0.0);
            // positive launch angles move toward increasing alpha
            let d = p.launch_direction(a, Side::Inner, 0.5);
            assert!(inn.cross(d) > 0.0);
        }
    }

    #[test]
    fn jump_supremum_exceeds_nominal_half_width() {
        for eps in [0.2, 0.01, 1e-4] {
            let sup = annulus_jump_sup(eps);
            assert!((sup - (1.0 - eps).acos()).abs() < 1e-12);
            assert!(sup > annulus_half_support(eps));
            assert!((sup / annulus_half_support(eps) - 1.0) < eps);
        }
    }

    #[test]
    fn width_limits() {
        assert!(TubeProfile::exact_annulus(0.0).is_err());
        assert!(TubeProfile::exact_annulus(0.5).is_err());
        assert!(TubeProfile::exact_annulus(0.49).is_ok());
        assert!(TubeProfile::example(0.02).is_err());
    }

    #[test]
    fn wrap_angle_range() {
        assert!((wrap_angle(3.0 * PI / 2.0) + FRAC_PI_2).abs() < 1e-15);
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert!((wrap_angle(-7.0) - (-7.0 + 2.0 * PI)).abs() < 1e-15);
    }

    #[test]
    fn spec_round_trip() {
        let p = TubeProfile::example(0.001).unwrap();
        assert_eq!(TubeProfile::from_spec(&p.spec()).unwrap(), p);
        let a = TubeProfile::exact_annulus(0.2).unwrap();
        assert_eq!(TubeProfile::from_spec(&a.spec()).unwrap(), a);
    }
}
