use knudsen_core::geometry::{
    annulus_chord, annulus_chord_scaled, annulus_jump_sup, ray_intersect, FourierSeries, Side,
    TubeProfile, Vec2,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::{FRAC_PI_2, PI};

fn curve_point(p: &TubeProfile, a: f64, side: Side) -> Vec2 {
    p.eval_boundary(a, side).position
}

/// Five-point central differences of the parametric curve.
fn fd_derivatives(p: &TubeProfile, a: f64, side: Side, h: f64) -> (Vec2, Vec2) {
    let pts: Vec<Vec2> = [-2.0, -1.0, 1.0, 2.0]
        .iter()
        .map(|k| curve_point(p, a + k * h, side))
        .collect();
    let c = curve_point(p, a, side);
    let d1 = (pts[0] - pts[1] * 8.0 + pts[2] * 8.0 - pts[3]) * (1.0 / (12.0 * h));
    let d2 = (-pts[0] + pts[1] * 16.0 - c * 30.0 + pts[2] * 16.0 - pts[3]) * (1.0 / (12.0 * h * h));
    (d1, d2)
}

fn fd_curvature(p: &TubeProfile, a: f64, side: Side) -> f64 {
    let (d1, d2) = fd_derivatives(p, a, side, 1e-3);
    d1.cross(d2) / d1.norm().powi(3)
}

/// Tilt of the curve's tangent away from the polar direction, signed so that
/// it is positive where the tube widens toward increasing angle.
fn fd_tilt(p: &TubeProfile, a: f64, side: Side) -> f64 {
    let (d1, _) = fd_derivatives(p, a, side, 1e-3);
    let er = Vec2::polar(a);
    let angle = d1.dot(er).atan2(d1.dot(er.perp()));
    match side {
        Side::Outer => angle,
        Side::Inner => -angle,
    }
}

fn harmonics(max_total: f64) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (
        prop::collection::vec(-1.0f64..1.0, 0..=4),
        prop::collection::vec(-1.0f64..1.0, 0..=4),
    )
        .prop_map(move |(mut c, mut s)| {
            let total: f64 = c.iter().chain(&s).map(|v| v.abs()).sum::<f64>().max(1e-12);
            let k = max_total / total;
            c.iter_mut().chain(s.iter_mut()).for_each(|v| *v *= k);
            (c, s)
        })
}

fn profile_strategy() -> impl Strategy<Value = TubeProfile> {
    (harmonics(0.5), harmonics(0.5), 1e-4f64..1e-2).prop_map(|((fc, fs), (gc, gs), eps)| {
        let f = FourierSeries::new(1.5, fc, fs).unwrap();
        let g = FourierSeries::new(0.5, gc, gs).unwrap();
        TubeProfile::perturbed(f, g, eps).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10))]

    #[test]
    fn curvature_matches_finite_differences(p in profile_strategy()) {
        for side in [Side::Outer, Side::Inner] {
            let worst = (0..512)
                .map(|i| 2.0 * PI * i as f64 / 512.0)
                .map(|a| (p.curvature(a, side) - fd_curvature(&p, a, side)).abs())
                .fold(0.0, f64::max);
            prop_assert!(worst <= 1e-6, "side {side:?}: {worst}");
        }
    }

    #[test]
    fn tilt_matches_finite_difference_tangent(p in profile_strategy()) {
        for side in [Side::Outer, Side::Inner] {
            for i in 0..128 {
                let a = 2.0 * PI * i as f64 / 128.0;
                let err = (p.normal_tilt(a, side) - fd_tilt(&p, a, side)).abs();
                prop_assert!(err <= 1e-8, "side {side:?} alpha {a}: {err}");
            }
        }
    }

    #[test]
    fn inner_launch_always_reaches_outer_circle(eps in 1e-6f64..0.49, u in -0.999999f64..0.999999) {
        let sol = annulus_chord(eps, u.asin(), Side::Inner).unwrap();
        prop_assert_eq!(sol.hit_side, Side::Outer);
        prop_assert!(sol.delta_alpha.abs() <= annulus_jump_sup(eps) * (1.0 + 1e-12));
        prop_assert!(sol.chord_length > 0.0);
    }

    #[test]
    fn jump_has_the_sign_of_the_launch_angle(eps in 1e-6f64..0.49, u in -0.999999f64..0.999999, outer: bool) {
        let side = if outer { Side::Outer } else { Side::Inner };
        let sol = annulus_chord(eps, u.asin(), side).unwrap();
        prop_assert!(sol.delta_alpha.abs() < PI);
        prop_assert!(sol.delta_alpha * u >= 0.0);
        prop_assert!(sol.delta_alpha.abs() <= 2.0 * annulus_jump_sup(eps) * (1.0 + 1e-12));
    }
}

#[test]
fn curvature_of_example_at_quarter_turn() {
    let p = TubeProfile::example(0.01).unwrap();
    let k = p.curvature(FRAC_PI_2, Side::Outer);
    assert!((k - fd_curvature(&p, FRAC_PI_2, Side::Outer)).abs() < 1e-6);
}

#[test]
fn root_finder_agrees_with_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut resampled = 0;
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    while checked < 10_000 {
        let eps = 10f64.powf(rng.random_range(-4.0..-1.0));
        let theta = (2.0 * rng.random::<f64>() - 1.0).asin();
        let side = if rng.random::<bool>() {
            Side::Outer
        } else {
            Side::Inner
        };
        let alpha = rng.random_range(-10.0..10.0);
        let p = TubeProfile::exact_annulus(eps).unwrap();
        let start = p.eval_boundary(alpha, side);
        let sol = annulus_chord(eps, theta, side).unwrap();
        match ray_intersect(&p, &start, p.launch_direction(alpha, side, theta)) {
            Ok(hit) => {
                assert_eq!(
                    hit.point.side, sol.hit_side,
                    "eps {eps} theta {theta} side {side:?}"
                );
                worst = worst.max((hit.point.alpha - alpha - sol.delta_alpha).abs());
                checked += 1;
            }
            Err(e) => {
                assert!(e.is_resample(), "{e}");
                resampled += 1;
            }
        }
    }
    assert!(worst <= 1e-9, "worst delta_alpha mismatch {worst}");
    assert!(resampled < 10, "{resampled} grazing rays");
}

/// Steps of 1e-6 along the ray to the first sign change of either clearance, then bisection.
fn marching_oracle(p: &TubeProfile, start: Vec2, d: Vec2) -> (f64, Side) {
    let inside = |t: f64, side: Side| {
        let q = start + d * t;
        let r = p.radius(q.arg(), side);
        match side {
            Side::Outer => r - q.norm(),
            Side::Inner => q.norm() - r,
        }
    };
    let first_out = |t: f64| {
        [Side::Outer, Side::Inner]
            .into_iter()
            .find(|&s| inside(t, s) <= 0.0)
    };
    let h = 1e-6;
    let mut t = 1e-5;
    let side = loop {
        if let Some(s) = first_out(t + h) {
            break s;
        }
        t += h;
    };
    let (mut lo, mut hi) = (t, t + h);
    while hi - lo > 1e-15 {
        let mid = 0.5 * (lo + hi);
        if inside(mid, side) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (0.5 * (lo + hi), side)
}

#[test]
fn root_finder_agrees_with_marching_oracle() {
    let p = TubeProfile::example(0.01).unwrap();
    let start = p.eval_boundary(0.0, Side::Outer);
    let theta_c = (0.01f64 * 1.99).sqrt().acos();
    // near-tangential launches on both sides of the inner-curve shadow plus a generic one
    for theta in [0.3, theta_c - 0.02, theta_c + 0.02, 1.5, -1.5, -1.52] {
        let d = p.launch_direction(0.0, Side::Outer, theta);
        let hit = ray_intersect(&p, &start, d).unwrap();
        let (t, side) = marching_oracle(&p, start.position, d);
        assert_eq!(hit.point.side, side, "theta {theta}");
        assert!((hit.t - t).abs() <= 1e-8, "theta {theta}: {} vs {t}", hit.t);
    }
}

#[test]
fn annulus_angle_sequence_is_scale_free() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        // keep 40 mantissa bits so that c * eps is exact for c up to 16
        let raw: f64 = 10f64.powf(rng.random_range(-4.0..-1.3));
        let eps = f64::from_bits(raw.to_bits() & !((1u64 << 12) - 1));
        let thetas: Vec<f64> = (0..2000)
            .map(|_| (2.0 * rng.random::<f64>() - 1.0).asin())
            .collect();
        let run = |width: f64, radius: f64| {
            let mut side = Side::Outer;
            let mut alpha = 0.0;
            let mut seq = Vec::with_capacity(thetas.len());
            for &th in &thetas {
                let sol = annulus_chord_scaled(width, radius, th, side).unwrap();
                alpha += sol.delta_alpha;
                side = sol.hit_side;
                seq.push((alpha.to_bits(), side));
            }
            seq
        };
        let base = run(eps, 1.0);
        for c in [2.0, 10.0] {
            assert_eq!(base, run(c * eps, c), "eps {eps} c {c}");
        }
        let direct: Vec<_> = {
            let mut side = Side::Outer;
            let mut alpha = 0.0;
            thetas
                .iter()
                .map(|&th| {
                    let sol = annulus_chord(eps, th, side).unwrap();
                    alpha += sol.delta_alpha;
                    side = sol.hit_side;
                    (alpha.to_bits(), side)
                })
                .collect()
        };
        assert_eq!(base, direct);
    }
}
