use knudsen_core::chain::{
    advance, sample_conditional, simulate_chain, step, ChainState, JumpKind,
    StationaryDistribution, StepMethod,
};
use knudsen_core::geometry::{Side, TubeProfile};
use knudsen_core::rng::{purpose, stream, with_threads};
use knudsen_core::stats::ks_two_sample;
use proptest::prelude::*;
use rand::Rng;
use rayon::prelude::*;
use std::f64::consts::PI;

fn annulus(eps: f64) -> TubeProfile {
    TubeProfile::exact_annulus(eps).unwrap()
}

#[test]
fn outer_stay_fraction_is_the_width() {
    let (eps, n) = (0.1, 1_000_000);
    let p = annulus(eps);
    let mut rng = stream(1, purpose::CHAIN, 0);
    let init = ChainState::new(0.0, Side::Outer);
    let stays = (0..n)
        .filter(|_| {
            step(&p, StepMethod::ClosedForm, &init, &mut rng)
                .unwrap()
                .state
                .side
                == Side::Outer
        })
        .count();
    let sigma = (eps * (1.0 - eps) / n as f64).sqrt();
    assert!(
        (stays as f64 / n as f64 - eps).abs() < 3.0 * sigma,
        "{stays}"
    );
}

#[test]
fn stationary_occupation_of_the_outer_circle() {
    let (eps, n) = (0.1, 1_000_000u64);
    let p = annulus(eps);
    let mut rng = stream(2, purpose::CHAIN, 0);
    let init = ChainState::stationary(0.0, eps, &mut rng);
    let outer = simulate_chain(&p, StepMethod::ClosedForm, init, n, rng)
        .unwrap()
        .filter(|s| s.as_ref().unwrap().state.side == Side::Outer)
        .count();
    let mu0 = StationaryDistribution::annulus(eps).mu0;
    assert!((mu0 - 1.0 / 1.9).abs() < 1e-15);
    // the side chain is anti-correlated, so the iid band is conservative
    let sigma = (mu0 * (1.0 - mu0) / n as f64).sqrt();
    assert!(
        (outer as f64 / n as f64 - mu0).abs() < 3.0 * sigma,
        "{outer}"
    );
}

fn conditional(
    p: &TubeProfile,
    kind: JumpKind,
    n: usize,
    seed: u64,
    alpha: impl Fn(&mut rand_chacha::ChaCha8Rng) -> f64,
) -> Vec<f64> {
    let mut rng = stream(seed, purpose::CHAIN, 7);
    (0..n)
        .map(|_| {
            let a = alpha(&mut rng);
            sample_conditional(p, StepMethod::ClosedForm, a, kind, &mut rng)
                .unwrap()
                .value
        })
        .collect()
}

#[test]
fn annulus_jumps_are_symmetric() {
    let p = annulus(0.01);
    for kind in [JumpKind::T, JumpKind::S] {
        // mirroring the same draws would correlate the two samples
        let x = conditional(&p, kind, 20_000, 3, |_| 0.0);
        let neg: Vec<f64> = conditional(&p, kind, 20_000, 13, |_| 0.0)
            .iter()
            .map(|v| -v)
            .collect();
        let r = ks_two_sample(&x, &neg).unwrap();
        assert!(r.p_value > 0.01, "{kind:?}: {r:?}");
    }
}

#[test]
fn annulus_jump_law_ignores_the_angle() {
    let p = annulus(0.01);
    let lo = conditional(&p, JumpKind::T, 20_000, 4, |r| PI * r.random::<f64>());
    let hi = conditional(&p, JumpKind::T, 20_000, 5, |r| PI + PI * r.random::<f64>());
    assert!(ks_two_sample(&lo, &hi).unwrap().p_value > 0.01);
}

#[test]
fn successive_stay_indicators_are_uncorrelated() {
    let p = annulus(0.1);
    let mut rng = stream(6, purpose::CHAIN, 0);
    let init = ChainState::new(0.0, Side::Outer);
    let lam: Vec<f64> = (0..200_000)
        .map(|_| {
            f64::from(u8::from(
                step(&p, StepMethod::ClosedForm, &init, &mut rng)
                    .unwrap()
                    .state
                    .side
                    == Side::Outer,
            ))
        })
        .collect();
    let n = lam.len() as f64;
    let m = lam.iter().sum::<f64>() / n;
    let v = lam.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    let c = lam.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum::<f64>() / (n - 1.0);
    assert!((c / v).abs() < 3.0 / n.sqrt(), "{}", c / v);
}

#[test]
fn ray_tracing_reproduces_closed_form_steps() {
    for eps in [1e-3, 0.05] {
        let p = annulus(eps);
        let mut rng = stream(8, purpose::CHAIN, 0);
        let (mut a, mut b) = (
            ChainState::new(0.4, Side::Outer),
            ChainState::new(0.4, Side::Outer),
        );
        for _ in 0..2000 {
            let th = (2.0 * rng.random::<f64>() - 1.0).asin();
            let (Ok(x), Ok(y)) = (
                advance(&p, StepMethod::ClosedForm, &a, th),
                advance(&p, StepMethod::RayTrace, &b, th),
            ) else {
                continue;
            };
            assert_eq!(x.state.side, y.state.side);
            assert!((x.jump.value - y.jump.value).abs() <= 1e-9);
            assert!((x.chord_length - y.chord_length).abs() <= 1e-9);
            a = x.state;
            b = y.state;
        }
        assert!((a.alpha - b.alpha).abs() < 1e-6);
    }
}

#[test]
fn runs_are_reproducible_across_thread_counts() {
    let p = TubeProfile::example(0.01).unwrap();
    let run = || {
        (0..8u64)
            .into_par_iter()
            .map(|i| {
                let init = ChainState::new(i as f64, Side::Inner);
                simulate_chain(
                    &p,
                    StepMethod::RayTrace,
                    init,
                    500,
                    stream(9, purpose::CHAIN, i),
                )
                .unwrap()
                .map(|s| s.unwrap().state.alpha.to_bits())
                .collect::<Vec<u64>>()
            })
            .collect::<Vec<_>>()
    };
    assert_eq!(with_threads(Some(1), run), with_threads(Some(4), run));
}

#[test]
fn zero_steps_is_empty() {
    let p = annulus(0.1);
    assert_eq!(
        simulate_chain(
            &p,
            StepMethod::ClosedForm,
            ChainState::new(0.0, Side::Outer),
            0,
            stream(0, 0, 0)
        )
        .unwrap()
        .count(),
        0
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn perturbed_steps_respect_the_chain_rules(seed: u64, eps in 1e-4f64..1e-2) {
        let p = TubeProfile::example(eps).unwrap();
        let mut state = ChainState::new(0.0, Side::Outer);
        let mut rng = stream(seed, purpose::CHAIN, 0);
        for k in 1..=300u64 {
            let s = step(&p, StepMethod::RayTrace, &state, &mut rng).unwrap();
            prop_assert_eq!(s.state.step_index, k);
            prop_assert_eq!(s.jump.kind, JumpKind::classify(state.side, s.state.side));
            if state.side == Side::Inner {
                prop_assert_eq!(s.state.side, Side::Outer);
            }
            prop_assert!(s.jump.value.abs() <= 12.0 * eps.sqrt());
            prop_assert!((s.state.alpha - state.alpha - s.jump.value).abs() < 1e-12);
            state = s.state;
        }
    }
}
