//! Continuous-time billiard paths built from the reflection chain.

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::chain::{advance, step, ChainState, Step, StepMethod};
use crate::error::{Error, Result};
use crate::geometry::{Side, TubeProfile, Vec2};
use crate::rng::{purpose, stream};
use crate::stats::{MomentEstimate, Moments};

/// Samples required by [`mean_flight_time`].
pub const MIN_FLIGHT_SAMPLES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReflectionEvent {
    /// Path length travelled since the first reflection.
    pub time: f64,
    pub alpha: f64,
    pub side: Side,
    pub position: Vec2,
}

/// Diffusive normalisation for width `epsilon`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeScale {
    pub epsilon: f64,
    /// `(1/2) eps^2 log(1/eps)`.
    pub sigma2: f64,
    /// `pi / (eps log(1/eps))`.
    pub zeta_factor: f64,
}

impl TimeScale {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "epsilon {epsilon} outside (0, 1)"
            )));
        }
        let l = (1.0 / epsilon).ln();
        Ok(Self {
            epsilon,
            sigma2: 0.5 * epsilon * epsilon * l,
            zeta_factor: PI / (epsilon * l),
        })
    }

    /// Physical time corresponding to rescaled time `s`.
    pub fn zeta(&self, s: f64) -> f64 {
        self.zeta_factor * s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub profile: TubeProfile,
    pub method: StepMethod,
    /// Master seed and stream index, when generated from one.
    pub seed: Option<(u64, u64)>,
    pub events: Vec<ReflectionEvent>,
}

fn event(profile: &TubeProfile, time: f64, state: &ChainState) -> ReflectionEvent {
    ReflectionEvent {
        time,
        alpha: state.alpha,
        side: state.side,
        position: profile.eval_boundary(state.alpha, state.side).position,
    }
}

impl Trajectory {
    fn start(profile: &TubeProfile, method: StepMethod, init: &ChainState) -> Self {
        Self {
            profile: profile.clone(),
            method,
            seed: None,
            events: vec![event(profile, 0.0, init)],
        }
    }

    fn push(&mut self, s: &Step) {
        let t = self.end_time() + s.chord_length;
        self.events.push(event(&self.profile, t, &s.state));
    }

    /// Runs the chain until the last reflection lies beyond `horizon`.
    pub fn generate<R: Rng + ?Sized>(
        profile: &TubeProfile,
        method: StepMethod,
        init: ChainState,
        horizon: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut traj = Self::start(profile, method, &init);
        let mut state = init;
        while traj.end_time() <= horizon {
            let s = step(profile, method, &state, rng)?;
            traj.push(&s);
            state = s.state;
        }
        Ok(traj)
    }

    /// [`Trajectory::generate`] on stream `path` of `master_seed`.
    pub fn generate_seeded(
        profile: &TubeProfile,
        method: StepMethod,
        init: ChainState,
        horizon: f64,
        master_seed: u64,
        path: u64,
    ) -> Result<Self> {
        let mut rng = stream(master_seed, purpose::TRAJECTORY, path);
        let mut traj = Self::generate(profile, method, init, horizon, &mut rng)?;
        traj.seed = Some((master_seed, path));
        Ok(traj)
    }

    /// Exactly `n_steps` reflections after the initial one.
    pub fn with_steps<R: Rng + ?Sized>(
        profile: &TubeProfile,
        method: StepMethod,
        init: ChainState,
        n_steps: u64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut traj = Self::start(profile, method, &init);
        let mut state = init;
        for _ in 0..n_steps {
            let s = step(profile, method, &state, rng)?;
            traj.push(&s);
            state = s.state;
        }
        Ok(traj)
    }

    /// Path with prescribed launch angles.
    pub fn from_launches(
        profile: &TubeProfile,
        method: StepMethod,
        init: ChainState,
        thetas: &[f64],
    ) -> Result<Self> {
        let mut traj = Self::start(profile, method, &init);
        let mut state = init;
        for &th in thetas {
            let s = advance(profile, method, &state, th)?;
            traj.push(&s);
            state = s.state;
        }
        Ok(traj)
    }

    pub fn end_time(&self) -> f64 {
        self.events.last().map_or(0.0, |e| e.time)
    }

    /// Reflections after the initial one.
    pub fn len(&self) -> usize {
        self.events.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Index of the last event at or before `t`.
    fn index_at(&self, t: f64) -> usize {
        self.events
            .partition_point(|e| e.time <= t)
            .saturating_sub(1)
    }

    /// `N(t) = sup { n : T_n <= t }`.
    pub fn reflections_before(&self, t: f64) -> Result<u64> {
        if !(t >= 0.0) {
            return Err(Error::InvalidParameter(format!("time {t} is negative")));
        }
        if self.end_time() <= t {
            return Err(Error::InsufficientTrajectory {
                needed: t,
                available: self.end_time(),
            });
        }
        Ok(self.index_at(t) as u64)
    }

    /// Polar radius and unwrapped angle of the particle at time `t`.
    pub fn position_at(&self, t: f64) -> Result<(f64, f64)> {
        let end = self.end_time();
        if !(t >= 0.0 && t <= end) {
            return Err(Error::OutOfRange { t, end });
        }
        let n = self.index_at(t);
        let e = &self.events[n];
        if n + 1 == self.events.len() || t == e.time {
            return Ok((e.position.norm(), e.alpha));
        }
        let next = &self.events[n + 1];
        let w = (t - e.time) / (next.time - e.time);
        let q = e.position + (next.position - e.position) * w;
        let p = e.position;
        Ok((q.norm(), e.alpha + p.cross(q).atan2(p.dot(q))))
    }

    /// `beta(zeta(s)) - beta(0)` on `s_grid`, taking the angle of the last
    /// reflection at or before each time.
    pub fn rescaled_beta(&self, scale: &TimeScale, s_grid: &[f64]) -> Result<Vec<f64>> {
        let a0 = self.events[0].alpha;
        s_grid
            .iter()
            .map(|&s| {
                let t = scale.zeta(s);
                self.reflections_before(t)
                    .map(|n| self.events[n as usize].alpha - a0)
            })
            .collect()
    }
}

/// Rescaled angle on an ascending `s_grid` without storing the path.
///
/// Consumes the random stream exactly as [`Trajectory::generate`] would with
/// horizon `zeta(max s)`.
pub fn rescaled_path<R: Rng + ?Sized>(
    profile: &TubeProfile,
    method: StepMethod,
    init: ChainState,
    scale: &TimeScale,
    s_grid: &[f64],
    rng: &mut R,
) -> Result<RescaledPath> {
    if s_grid.windows(2).any(|w| !(w[0] <= w[1])) || s_grid.first().is_some_and(|&s| !(s >= 0.0)) {
        return Err(Error::InvalidParameter(
            "s grid must be ascending and non-negative".into(),
        ));
    }
    let mut out = Vec::with_capacity(s_grid.len());
    let mut state = init;
    let mut time = 0.0;
    let mut steps = 0u64;
    // next reflection, drawn but not yet reached
    let mut pending: Option<Step> = None;
    for &s in s_grid {
        let t = scale.zeta(s);
        loop {
            let next = match pending.take() {
                Some(p) => p,
                None => {
                    steps += 1;
                    step(profile, method, &state, rng)?
                }
            };
            if time + next.chord_length > t {
                pending = Some(next);
                break;
            }
            time += next.chord_length;
            state = next.state;
        }
        out.push(state.alpha - init.alpha);
    }
    // match the stored path: it stops at the first reflection beyond the horizon
    let horizon = s_grid.last().map_or(0.0, |&s| scale.zeta(s));
    if pending.is_none() && time <= horizon {
        steps += 1;
        step(profile, method, &state, rng)?;
    }
    Ok(RescaledPath { values: out, steps })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RescaledPath {
    pub values: Vec<f64>,
    /// Chain transitions drawn.
    pub steps: u64,
}

/// `E[chord length] / epsilon` with a 95% interval.
pub fn mean_flight_time(chord_lengths: &[f64], epsilon: f64) -> Result<MomentEstimate> {
    if chord_lengths.len() < MIN_FLIGHT_SAMPLES {
        return Err(Error::InsufficientSamples {
            needed: MIN_FLIGHT_SAMPLES,
            got: chord_lengths.len(),
        });
    }
    let m: Moments = chord_lengths.iter().map(|&l| l / epsilon).collect();
    Ok(m.estimate())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{purpose, stream};
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    #[test]
    fn timescale_identity() {
        for eps in [0.1, 0.01, 1e-4] {
            let s = TimeScale::new(eps).unwrap();
            assert!((s.zeta_factor * s.sigma2 - FRAC_PI_2 * eps).abs() < 1e-15);
        }
        let s = TimeScale::new(0.01).unwrap();
        assert!((s.zeta(1.0) - 68.2188).abs() < 1e-4);
    }

    #[test]
    fn counting_is_right_continuous() {
        let p = TubeProfile::exact_annulus(0.1).unwrap();
        let traj = Trajectory::from_launches(
            &p,
            StepMethod::ClosedForm,
            ChainState::new(0.0, Side::Outer),
            &[0.3, -0.2, 0.5],
        )
        .unwrap();
        let t1 = traj.events[1].time;
        assert_eq!(traj.reflections_before(0.0).unwrap(), 0);
        assert_eq!(traj.reflections_before(t1 * (1.0 - 1e-12)).unwrap(), 0);
        assert_eq!(traj.reflections_before(t1).unwrap(), 1);
        assert!(matches!(
            traj.reflections_before(traj.end_time()),
            Err(Error::InsufficientTrajectory { .. })
        ));
        assert!(matches!(
            traj.position_at(traj.end_time() + 1e-9),
            Err(Error::OutOfRange { .. })
        ));
    }

    #[test]
    fn midpoint_of_a_diagonal_chord() {
        let p = TubeProfile::exact_annulus(0.1).unwrap();
        let init = ChainState::new(FRAC_PI_2, Side::Inner);
        let traj =
            Trajectory::from_launches(&p, StepMethod::ClosedForm, init, &[FRAC_PI_4]).unwrap();
        let (a, b) = (traj.events[0].position, traj.events[1].position);
        let mid = (a + b) * 0.5;
        let (r, beta) = traj.position_at(0.5 * traj.end_time()).unwrap();
        assert!((beta - mid.y.atan2(mid.x)).abs() < 1e-12);
        assert!((r - mid.norm()).abs() < 1e-12);
        assert!(mid.norm() > 0.9 && mid.norm() < 1.0);
    }

    #[test]
    fn radial_flight_keeps_the_angle() {
        let p = TubeProfile::exact_annulus(0.1).unwrap();
        let traj = Trajectory::from_launches(
            &p,
            StepMethod::ClosedForm,
            ChainState::new(2.0, Side::Inner),
            &[0.0],
        )
        .unwrap();
        for k in 0..=10 {
            let (_, beta) = traj.position_at(traj.end_time() * k as f64 / 10.0).unwrap();
            assert!((beta - 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn streaming_matches_stored_path() {
        let p = TubeProfile::exact_annulus(0.01).unwrap();
        let scale = TimeScale::new(0.01).unwrap();
        let grid = [0.0, 0.1, 0.1, 0.5, 1.0];
        let init = ChainState::new(0.3, Side::Outer);
        let mut r1 = stream(3, purpose::TRAJECTORY, 9);
        let mut r2 = stream(3, purpose::TRAJECTORY, 9);
        let traj = Trajectory::generate(&p, StepMethod::ClosedForm, init, scale.zeta(1.0), &mut r1)
            .unwrap();
        let streamed =
            rescaled_path(&p, StepMethod::ClosedForm, init, &scale, &grid, &mut r2).unwrap();
        assert_eq!(traj.rescaled_beta(&scale, &grid).unwrap(), streamed.values);
        assert_eq!(streamed.steps as usize, traj.len());
        assert_eq!(r1.random::<u64>(), r2.random::<u64>());
        assert_eq!(streamed.values[0], 0.0);
    }

    #[test]
    fn flight_time_needs_samples() {
        assert!(matches!(
            mean_flight_time(&[1.0; 10], 0.1),
            Err(Error::InsufficientSamples { .. })
        ));
        let e = mean_flight_time(&vec![0.02; MIN_FLIGHT_SAMPLES], 0.01).unwrap();
        assert!((e.mean - 2.0).abs() < 1e-12);
    }
}
