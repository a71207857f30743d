//! The embedded Markov chain of reflection points `(alpha_n, s_n)`.
//!
//! A launch angle is drawn from the cosine law and the next reflection point
//! is found either from the closed-form annulus chord or by ray tracing the
//! profile. Jumps are labelled by the sides they connect: `T` inner to outer,
//! `R` outer to inner, `S` outer to outer.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{annulus_chord, trace, Side, TubeProfile};

/// Consecutive degenerate launches tolerated before giving up.
pub const MAX_RETRIES: u32 = 64;
/// Proposals tolerated by a conditional sampler before giving up.
pub const MAX_PROPOSALS: u32 = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainState {
    /// Unwrapped polar angle of the current reflection point.
    pub alpha: f64,
    pub side: Side,
    pub step_index: u64,
}

impl ChainState {
    pub fn new(alpha: f64, side: Side) -> Self {
        Self {
            alpha,
            side,
            step_index: 0,
        }
    }

    /// Start at `alpha` with the side drawn from the stationary law of the annulus of width `epsilon`.
    pub fn stationary<R: Rng + ?Sized>(alpha: f64, epsilon: f64, rng: &mut R) -> Self {
        Self::new(
            alpha,
            StationaryDistribution::annulus(epsilon).sample_side(rng),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum JumpKind {
    T,
    R,
    S,
}

impl JumpKind {
    pub fn classify(from: Side, to: Side) -> JumpKind {
        match (from, to) {
            (Side::Inner, _) => JumpKind::T,
            (Side::Outer, Side::Inner) => JumpKind::R,
            (Side::Outer, Side::Outer) => JumpKind::S,
        }
    }

    pub fn start_side(self) -> Side {
        match self {
            JumpKind::T => Side::Inner,
            JumpKind::R | JumpKind::S => Side::Outer,
        }
    }

    pub fn end_side(self) -> Side {
        match self {
            JumpKind::R => Side::Inner,
            JumpKind::T | JumpKind::S => Side::Outer,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            JumpKind::T => "T",
            JumpKind::R => "R",
            JumpKind::S => "S",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpSample {
    pub kind: JumpKind,
    /// Angular increment `alpha_{n+1} - alpha_n`.
    pub value: f64,
    pub theta: f64,
}

/// One transition of the chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub state: ChainState,
    pub jump: JumpSample,
    pub chord_length: f64,
    /// Launch angles discarded as degenerate before this one.
    pub retries: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationaryDistribution {
    pub mu0: f64,
    pub mu1: f64,
}

impl StationaryDistribution {
    /// `(1 / (2 - eps), (1 - eps) / (2 - eps))`.
    pub fn annulus(epsilon: f64) -> Self {
        Self {
            mu0: 1.0 / (2.0 - epsilon),
            mu1: (1.0 - epsilon) / (2.0 - epsilon),
        }
    }

    pub fn sample_side<R: Rng + ?Sized>(&self, rng: &mut R) -> Side {
        if rng.random::<f64>() < self.mu0 {
            Side::Outer
        } else {
            Side::Inner
        }
    }
}

/// Probability that a cosine-law launch from the outer circle of an annulus
/// of width `epsilon` returns to the outer circle.
pub fn stay_probability_annulus(epsilon: f64) -> f64 {
    epsilon
}

/// How the next reflection point is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepMethod {
    /// Closed-form chords; exact annulus only.
    ClosedForm,
    RayTrace,
}

impl StepMethod {
    pub fn default_for(profile: &TubeProfile) -> Self {
        if profile.is_exact_annulus() {
            StepMethod::ClosedForm
        } else {
            StepMethod::RayTrace
        }
    }

    fn check(self, profile: &TubeProfile) -> Result<()> {
        if self == StepMethod::ClosedForm && !profile.is_exact_annulus() {
            return Err(Error::InvalidParameter(
                "closed-form chords need an exact annulus".into(),
            ));
        }
        Ok(())
    }
}

/// Inverse of the cosine-law CDF `(1 + sin theta) / 2`.
#[inline]
pub fn theta_from_uniform(u: f64) -> f64 {
    (2.0 * u - 1.0).asin()
}

#[inline]
pub fn sample_theta<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    theta_from_uniform(rng.random::<f64>())
}

/// Next state for a given launch angle, without resampling.
pub fn advance(
    profile: &TubeProfile,
    method: StepMethod,
    state: &ChainState,
    theta: f64,
) -> Result<Step> {
    let (value, to, chord_length) = match method {
        StepMethod::ClosedForm => {
            let sol = annulus_chord(profile.epsilon(), theta, state.side)?;
            (sol.delta_alpha, sol.hit_side, sol.chord_length)
        }
        StepMethod::RayTrace => {
            if theta.abs() >= std::f64::consts::FRAC_PI_2 {
                return Err(Error::DegenerateTangent { theta });
            }
            let (start, tangent, normal) = profile.frame(state.alpha, state.side);
            let (s, c) = theta.sin_cos();
            let hit = trace(profile, &start, normal * c + tangent * s)?;
            let bound = profile.max_jump();
            let value = hit.point.alpha - state.alpha;
            if value.abs() > bound {
                return Err(Error::JumpBoundExceeded { jump: value, bound });
            }
            (value, hit.point.side, hit.t)
        }
    };
    let next = ChainState {
        alpha: state.alpha + value,
        side: to,
        step_index: state.step_index + 1,
    };
    let jump = JumpSample {
        kind: JumpKind::classify(state.side, to),
        value,
        theta,
    };
    Ok(Step {
        state: next,
        jump,
        chord_length,
        retries: 0,
    })
}

fn step_with<R: Rng + ?Sized>(
    profile: &TubeProfile,
    method: StepMethod,
    state: &ChainState,
    rng: &mut R,
) -> Result<Step> {
    for retries in 0..=MAX_RETRIES {
        match advance(profile, method, state, sample_theta(rng)) {
            Ok(step) => return Ok(Step { retries, ..step }),
            Err(e) if e.is_resample() => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::RetryLimit { limit: MAX_RETRIES })
}

/// One step in the annulus of width `epsilon` by closed-form chords.
pub fn step_annulus<R: Rng + ?Sized>(
    state: &ChainState,
    epsilon: f64,
    rng: &mut R,
) -> Result<Step> {
    let profile = TubeProfile::exact_annulus(epsilon)?;
    step_with(&profile, StepMethod::ClosedForm, state, rng)
}

/// One step by ray tracing `profile`.
pub fn step_general<R: Rng + ?Sized>(
    state: &ChainState,
    profile: &TubeProfile,
    rng: &mut R,
) -> Result<Step> {
    step_with(profile, StepMethod::RayTrace, state, rng)
}

pub fn step<R: Rng + ?Sized>(
    profile: &TubeProfile,
    method: StepMethod,
    state: &ChainState,
    rng: &mut R,
) -> Result<Step> {
    method.check(profile)?;
    step_with(profile, method, state, rng)
}

/// Streaming chain of at most `n_steps` transitions; stops after the first error.
pub struct ChainRun<'a, R> {
    profile: &'a TubeProfile,
    method: StepMethod,
    state: ChainState,
    remaining: u64,
    rng: R,
    retries: u64,
}

impl<R: Rng> ChainRun<'_, R> {
    pub fn state(&self) -> &ChainState {
        &self.state
    }

    /// Degenerate launch angles discarded so far.
    pub fn retries(&self) -> u64 {
        self.retries
    }
}

impl<R: Rng> Iterator for ChainRun<'_, R> {
    type Item = Result<Step>;

    fn next(&mut self) -> Option<Result<Step>> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        let out = step_with(self.profile, self.method, &self.state, &mut self.rng);
        match &out {
            Ok(s) => {
                self.state = s.state;
                self.retries += u64::from(s.retries);
            }
            Err(_) => self.remaining = 0,
        }
        Some(out)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        (0, usize::try_from(self.remaining).ok())
    }
}

pub fn simulate_chain<R: Rng>(
    profile: &TubeProfile,
    method: StepMethod,
    init: ChainState,
    n_steps: u64,
    rng: R,
) -> Result<ChainRun<'_, R>> {
    method.check(profile)?;
    Ok(ChainRun {
        profile,
        method,
        state: init,
        remaining: n_steps,
        rng,
        retries: 0,
    })
}

/// A jump drawn from its conditional law given the kind, from a fixed launch point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionalSample {
    pub value: f64,
    pub theta: f64,
    pub chord_length: f64,
    /// Proposals drawn, including the accepted one.
    pub proposals: u32,
}

/// Upper bound on `cos theta` for an outer launch that avoids the inner curve.
///
/// A ray from radius at most `1 + eps` whose angle to the inward radial has
/// cosine above `sqrt(6 eps)` meets the disc of radius `1 - 2 eps`, which the
/// inner curve encloses; the normal deviates from the radial by at most
/// `eps sup|g'|`.
pub fn outer_return_cos_bound(profile: &TubeProfile) -> f64 {
    let eps = profile.epsilon();
    if profile.is_exact_annulus() {
        return (eps * (2.0 - eps)).sqrt();
    }
    (6.0 * eps).sqrt() + eps * profile.g_prime_bound() + 1e-12
}

/// Exact sampler of `T(alpha)`, `R(alpha)` or `S(alpha)`.
///
/// In the annulus with closed-form chords the conditional law of `sin theta`
/// is sampled directly. Otherwise proposals are classified after tracing and
/// rejected until the requested kind appears; `S` proposals are restricted to
/// the launch angles that can return to the outer curve.
pub fn sample_conditional<R: Rng + ?Sized>(
    profile: &TubeProfile,
    method: StepMethod,
    alpha: f64,
    kind: JumpKind,
    rng: &mut R,
) -> Result<ConditionalSample> {
    method.check(profile)?;
    let state = ChainState::new(alpha, kind.start_side());
    let eps = profile.epsilon();
    let u_min = match kind {
        JumpKind::S => {
            let c = outer_return_cos_bound(profile).min(1.0);
            (1.0 - c * c).sqrt()
        }
        _ => 0.0,
    };
    for proposals in 1..=MAX_PROPOSALS {
        let v: f64 = rng.random();
        let u = match (method, kind) {
            (StepMethod::ClosedForm, JumpKind::T)
            | (StepMethod::RayTrace, JumpKind::T | JumpKind::R) => 2.0 * v - 1.0,
            (StepMethod::ClosedForm, JumpKind::R) => (1.0 - eps) * (2.0 * v - 1.0),
            (_, JumpKind::S) => {
                let mag = u_min + (1.0 - u_min) * rng.random::<f64>();
                if v < 0.5 {
                    -mag
                } else {
                    mag
                }
            }
        };
        let theta = u.asin();
        match advance(profile, method, &state, theta) {
            Ok(s) if s.jump.kind == kind => {
                return Ok(ConditionalSample {
                    value: s.jump.value,
                    theta,
                    chord_length: s.chord_length,
                    proposals,
                })
            }
            Ok(_) => continue,
            Err(e) if e.is_resample() => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::RetryLimit {
        limit: MAX_PROPOSALS,
    })
}
