//! Monte Carlo and quadrature checks of the chain's limit laws.
//!
//! Every check records its target, estimate, tolerance and rule. A report
//! passes when all of its checks do.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, TAU};
use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use super::ks::ks_two_sample;
use super::moments::{Moments, Z95};
use super::quadrature::{inner_displacement, quadrature_ex2, variance_scale};
use crate::chain::{
    advance, outer_return_cos_bound, sample_conditional, sample_theta, step, ChainState, JumpKind,
    StepMethod,
};
use crate::error::{Error, Result};
use crate::geometry::{annulus_half_support, ProfileSpec, Side, TubeProfile};
use crate::rng::{purpose, stream, tagged, StreamRng};
use crate::trajectory::mean_flight_time;

/// Samples per independent stream in the pooled (unbinned) checks.
pub const CHUNK: u64 = 1 << 16;
/// Bound on `|E S| / eps` for the `O(eps)` check.
pub const ESTIMS_BOUND: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LemmaId {
    Remain,
    Support,
    Variance2,
    Estimparam,
    Numberbounce,
    TEqualsR,
    Probreste,
    Maxdep,
    EstimtMean,
    EstimtVar,
    Estimr,
    Estims,
    Normparam,
    Nbrjumps,
    DeltaA,
}

impl LemmaId {
    pub const ALL: [LemmaId; 15] = [
        LemmaId::Remain,
        LemmaId::Support,
        LemmaId::Variance2,
        LemmaId::Estimparam,
        LemmaId::Numberbounce,
        LemmaId::TEqualsR,
        LemmaId::Probreste,
        LemmaId::Maxdep,
        LemmaId::EstimtMean,
        LemmaId::EstimtVar,
        LemmaId::Estimr,
        LemmaId::Estims,
        LemmaId::Normparam,
        LemmaId::Nbrjumps,
        LemmaId::DeltaA,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LemmaId::Remain => "remain",
            LemmaId::Support => "support",
            LemmaId::Variance2 => "variance2",
            LemmaId::Estimparam => "estimparam",
            LemmaId::Numberbounce => "numberbounce",
            LemmaId::TEqualsR => "t_equals_r",
            LemmaId::Probreste => "probreste",
            LemmaId::Maxdep => "maxdep",
            LemmaId::EstimtMean => "estimt_mean",
            LemmaId::EstimtVar => "estimt_var",
            LemmaId::Estimr => "estimr",
            LemmaId::Estims => "estims",
            LemmaId::Normparam => "normparam",
            LemmaId::Nbrjumps => "nbrjumps",
            LemmaId::DeltaA => "delta_a",
        }
    }

    fn code(self) -> u64 {
        Self::ALL.iter().position(|&l| l == self).unwrap() as u64
    }

    /// Lemmas stated for a perturbed tube.
    pub fn uses_profile(self) -> bool {
        matches!(
            self,
            LemmaId::Probreste
                | LemmaId::Maxdep
                | LemmaId::EstimtMean
                | LemmaId::EstimtVar
                | LemmaId::Estimr
                | LemmaId::Estims
                | LemmaId::Normparam
                | LemmaId::Nbrjumps
                | LemmaId::DeltaA
        )
    }
}

impl fmt::Display for LemmaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LemmaId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| Error::UnknownLemma(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaParams {
    /// Width ladder; tolerances apply at the last rung.
    pub epsilons: Vec<f64>,
    /// Samples per rung, per bin for binned lemmas, or paths for counting lemmas.
    pub n: u64,
    pub bins: usize,
    /// Perturbed tube for the profile lemmas; `None` is the example profile.
    #[serde(default)]
    pub profile: Option<ProfileSpec>,
    /// Horizon of the counting lemmas.
    pub t: f64,
    /// Width of the Monte Carlo cross-check in `variance2`.
    pub mc_epsilon: f64,
    pub master_seed: u64,
}

impl LemmaParams {
    /// Settings of the acceptance runs.
    pub fn defaults(id: LemmaId) -> Self {
        let (epsilons, n): (Vec<f64>, u64) = match id {
            LemmaId::Remain => (vec![0.2, 0.05, 0.01], 1_000_000),
            LemmaId::Support => (vec![0.01], 1_000_000),
            LemmaId::Variance2 => (vec![1e-3, 1e-4, 1e-5, 1e-6], 10_000_000),
            LemmaId::Estimparam => (vec![1e-3], 1_000_000),
            LemmaId::Numberbounce => (vec![0.01], 1000),
            LemmaId::TEqualsR => (vec![1e-2, 1e-3], 100_000),
            LemmaId::Probreste => (vec![1e-3], 200_000),
            LemmaId::Maxdep => (vec![1e-3], 10_000_000),
            LemmaId::EstimtMean | LemmaId::EstimtVar | LemmaId::Estimr | LemmaId::DeltaA => {
                (vec![1e-4], 1_000_000)
            }
            LemmaId::Estims => (vec![1e-2, 1e-3], 100_000),
            LemmaId::Normparam => (vec![1e-3], 1_000_000),
            LemmaId::Nbrjumps => (vec![1e-3], 1000),
        };
        Self {
            epsilons,
            n,
            bins: 16,
            profile: None,
            t: 1.0,
            mc_epsilon: 1e-2,
            master_seed: 42,
        }
    }

    fn profile_at(&self, eps: f64) -> Result<TubeProfile> {
        match &self.profile {
            Some(spec) => TubeProfile::from_spec(spec)?.with_epsilon(eps),
            None => TubeProfile::example(eps),
        }
    }

    /// Bin centres `2 pi (j + 1/2) / bins`.
    pub fn bin_centres(&self) -> Vec<f64> {
        (0..self.bins)
            .map(|j| TAU * (j as f64 + 0.5) / self.bins as f64)
            .collect()
    }

    fn check(&self) -> Result<()> {
        if self.epsilons.is_empty() || self.n == 0 || self.bins == 0 || !(self.t > 0.0) {
            return Err(Error::InvalidParameter(
                "lemma parameters need epsilons, n > 0, bins > 0 and t > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Pass rule of a single check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    /// `|estimate - target| <= tolerance`.
    Within,
    /// `estimate <= target + tolerance`.
    AtMost,
    /// `estimate >= target - tolerance`.
    AtLeast,
    /// `estimate` is 1 when the ladder sequence is strictly monotone.
    Monotone,
    /// Recorded only.
    Record,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub epsilon: Option<f64>,
    pub alpha: Option<f64>,
    pub target: f64,
    pub estimate: f64,
    pub tolerance: f64,
    pub ci: Option<[f64; 2]>,
    pub rule: Rule,
    pub n: u64,
    pub pass: bool,
}

impl Check {
    fn new(name: &str, rule: Rule, target: f64, estimate: f64, tolerance: f64, n: u64) -> Self {
        let pass = match rule {
            Rule::Within => (estimate - target).abs() <= tolerance,
            Rule::AtMost => estimate <= target + tolerance,
            Rule::AtLeast => estimate >= target - tolerance,
            Rule::Monotone => estimate == 1.0,
            Rule::Record => true,
        };
        Self {
            name: name.into(),
            epsilon: None,
            alpha: None,
            target,
            estimate,
            tolerance,
            ci: None,
            rule,
            n,
            pass,
        }
    }

    fn at(mut self, eps: f64) -> Self {
        self.epsilon = Some(eps);
        self
    }

    fn bin(mut self, alpha: f64) -> Self {
        self.alpha = Some(alpha);
        self
    }

    fn ci(mut self, ci: [f64; 2]) -> Self {
        self.ci = Some(ci);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub lemma_id: LemmaId,
    pub params: LemmaParams,
    /// Headline check: the first failing one, else the first.
    pub target: f64,
    pub estimate: f64,
    pub tolerance: f64,
    pub ci: Option<[f64; 2]>,
    pub pass: bool,
    pub n: u64,
    pub seed: u64,
    pub checks: Vec<Check>,
    /// Wall time; kept out of the serialized report so reports are reproducible.
    #[serde(skip)]
    pub runtime: Duration,
}

impl LemmaReport {
    fn from_checks(
        id: LemmaId,
        params: &LemmaParams,
        checks: Vec<Check>,
        runtime: Duration,
    ) -> Self {
        let head = checks
            .iter()
            .find(|c| !c.pass)
            .or_else(|| checks.first())
            .cloned();
        let head = head.unwrap_or_else(|| Check::new("empty", Rule::Record, 0.0, 0.0, 0.0, 0));
        Self {
            lemma_id: id,
            params: params.clone(),
            target: head.target,
            estimate: head.estimate,
            tolerance: head.tolerance,
            ci: head.ci,
            pass: checks.iter().all(|c| c.pass),
            n: checks.iter().map(|c| c.n).sum(),
            seed: params.master_seed,
            checks,
            runtime,
        }
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

/// Rough count of chain transitions a run will draw.
pub fn estimated_steps(id: LemmaId, p: &LemmaParams) -> u64 {
    let rungs = p.epsilons.len() as u64;
    let bins = p.bins as u64;
    let per_path = |eps: f64| (2.0 * (p.t + 2.0 * eps) / eps).ceil() as u64;
    match id {
        LemmaId::Variance2 => p.n,
        LemmaId::Numberbounce | LemmaId::Nbrjumps => {
            p.epsilons.iter().map(|&e| p.n * per_path(e)).sum()
        }
        LemmaId::Support | LemmaId::Estimparam | LemmaId::TEqualsR => 2 * p.n * rungs,
        LemmaId::Remain | LemmaId::Maxdep => p.n * rungs,
        LemmaId::Normparam | LemmaId::DeltaA => 2 * p.n * bins * rungs,
        _ => p.n * bins * rungs,
    }
}

pub fn verify_lemma(id: LemmaId, params: &LemmaParams, budget: Option<u64>) -> Result<LemmaReport> {
    params.check()?;
    if let Some(b) = budget {
        let need = estimated_steps(id, params);
        if need > b {
            return Err(Error::Budget(format!(
                "{id} needs about {need} steps, budget is {b}"
            )));
        }
    }
    let start = Instant::now();
    let checks = match id {
        LemmaId::Remain => remain(params),
        LemmaId::Support => support(params),
        LemmaId::Variance2 => variance2(params),
        LemmaId::Estimparam => estimparam(params),
        LemmaId::Numberbounce => numberbounce(params),
        LemmaId::TEqualsR => t_equals_r(params),
        LemmaId::Probreste => probreste(params),
        LemmaId::Maxdep => maxdep(params),
        LemmaId::EstimtMean => jump_moments(params, JumpKind::T, true, false),
        LemmaId::EstimtVar => jump_moments(params, JumpKind::T, false, true),
        LemmaId::Estimr => jump_moments(params, JumpKind::R, true, true),
        LemmaId::Estims => estims(params),
        LemmaId::Normparam => normparam(params),
        LemmaId::Nbrjumps => nbrjumps(params),
        LemmaId::DeltaA => delta_a(params),
    }?;
    Ok(LemmaReport::from_checks(
        id,
        params,
        checks,
        start.elapsed(),
    ))
}

fn lemma_rng(p: &LemmaParams, id: LemmaId, rung: usize, index: u64) -> StreamRng {
    stream(
        p.master_seed,
        tagged(purpose::LEMMA, id.code() * 1024 + rung as u64),
        index,
    )
}

/// `f(stream index, count)` over fixed-size chunks of `n`, in chunk order.
fn chunked<T: Send>(n: u64, f: impl Fn(u64, u64) -> Result<T> + Sync) -> Result<Vec<T>> {
    let chunks = n.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|i| f(i, CHUNK.min(n - i * CHUNK)))
        .collect()
}

/// `f(bin index, alpha)` over the bin centres, in bin order.
fn binned<T: Send>(p: &LemmaParams, f: impl Fn(u64, f64) -> Result<T> + Sync) -> Result<Vec<T>> {
    let centres = p.bin_centres();
    centres
        .par_iter()
        .enumerate()
        .map(|(j, &a)| f(j as u64, a))
        .collect()
}

fn merged(parts: &[Moments]) -> Moments {
    parts.iter().fold(Moments::new(), |mut acc, m| {
        acc.merge(m);
        acc
    })
}

/// Closed-form chords in the annulus, ray tracing otherwise.
fn method_for(profile: &TubeProfile) -> StepMethod {
    StepMethod::default_for(profile)
}

fn remain(p: &LemmaParams) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for (r, &eps) in p.epsilons.iter().enumerate() {
        let prof = TubeProfile::exact_annulus(eps)?;
        let init = ChainState::new(0.0, Side::Outer);
        let counts = chunked(p.n, |i, m| {
            let mut rng = lemma_rng(p, LemmaId::Remain, r, i);
            let mut k = 0u64;
            for _ in 0..m {
                if step(&prof, StepMethod::ClosedForm, &init, &mut rng)?
                    .state
                    .side
                    == Side::Outer
                {
                    k += 1;
                }
            }
            Ok(k)
        })?;
        let k: u64 = counts.iter().sum();
        let phat = k as f64 / p.n as f64;
        let sigma = (eps * (1.0 - eps) / p.n as f64).sqrt();
        out.push(Check::new("stay_fraction", Rule::Within, eps, phat, 3.0 * sigma, p.n).at(eps));
    }
    Ok(out)
}

/// `n` exact conditional jumps of `kind` in the annulus from `alpha = 0`.
fn annulus_conditional(
    p: &LemmaParams,
    id: LemmaId,
    rung: usize,
    eps: f64,
    kind: JumpKind,
) -> Result<Vec<f64>> {
    let prof = TubeProfile::exact_annulus(eps)?;
    let tag = rung * 3 + kind as usize;
    let parts = chunked(p.n, |i, m| {
        let mut rng = lemma_rng(p, id, tag, i);
        (0..m)
            .map(|_| {
                sample_conditional(&prof, StepMethod::ClosedForm, 0.0, kind, &mut rng)
                    .map(|s| s.value)
            })
            .collect::<Result<Vec<f64>>>()
    })?;
    Ok(parts.concat())
}

fn support(p: &LemmaParams) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for (r, &eps) in p.epsilons.iter().enumerate() {
        let b = annulus_half_support(eps);
        let t = annulus_conditional(p, LemmaId::Support, r, eps, JumpKind::T)?;
        let s = annulus_conditional(p, LemmaId::Support, r, eps, JumpKind::S)?;
        let tmax = t.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let smax = s.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let violations = t.iter().filter(|v| v.abs() > b).count() as f64;
        out.push(Check::new("max_abs_T", Rule::AtMost, b, tmax, 0.0, p.n).at(eps));
        out.push(Check::new("T_violations", Rule::AtMost, 0.0, violations, 0.0, p.n).at(eps));
        out.push(Check::new("T_tightness", Rule::AtLeast, 0.95 * b, tmax, 0.0, p.n).at(eps));
        out.push(Check::new("max_abs_S", Rule::AtMost, 2.0 * b, smax, 0.0, p.n).at(eps));
    }
    Ok(out)
}

fn variance2(p: &LemmaParams) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let ratios: Vec<f64> = p
        .epsilons
        .iter()
        .map(|&e| quadrature_ex2(e).map(|q| q / variance_scale(e)))
        .collect::<Result<_>>()?;
    for (&e, &r) in p.epsilons.iter().zip(&ratios) {
        out.push(Check::new("quadrature_ratio", Rule::Record, 1.0, r, 0.0, 0).at(e));
    }
    let gaps: Vec<f64> = ratios.iter().map(|r| (r - 1.0).abs()).collect();
    let monotone = gaps.windows(2).all(|w| w[1] < w[0]);
    out.push(Check::new(
        "ratio_monotone_toward_1",
        Rule::Monotone,
        1.0,
        f64::from(u8::from(monotone)),
        0.0,
        0,
    ));
    let last = *p.epsilons.last().unwrap();
    out.push(
        Check::new(
            "final_ratio",
            Rule::Within,
            1.0,
            *ratios.last().unwrap(),
            0.1,
            0,
        )
        .at(last),
    );

    let e = p.mc_epsilon;
    let q = quadrature_ex2(e)?;
    let parts = chunked(p.n, |i, m| {
        let mut rng = lemma_rng(p, LemmaId::Variance2, 0, i);
        Ok((0..m)
            .map(|_| {
                let x = inner_displacement(e, sample_theta(&mut rng));
                x * x
            })
            .collect::<Moments>())
    })?;
    let m = merged(&parts);
    let est = m.estimate();
    out.push(
        Check::new(
            "monte_carlo_vs_quadrature",
            Rule::Within,
            q,
            est.mean,
            4.0 * m.std_error(),
            p.n,
        )
        .at(e)
        .ci(est.ci95_mean),
    );
    Ok(out)
}

fn chord_lengths(
    prof: &TubeProfile,
    p: &LemmaParams,
    id: LemmaId,
    tag: usize,
    alpha: f64,
    side: Side,
    n: u64,
) -> Result<Vec<f64>> {
    let method = method_for(prof);
    let init = ChainState::new(alpha, side);
    let parts = chunked(n, |i, m| {
        let mut rng = lemma_rng(p, id, tag, i);
        (0..m)
            .map(|_| step(prof, method, &init, &mut rng).map(|s| s.chord_length))
            .collect::<Result<Vec<f64>>>()
    })?;
    Ok(parts.concat())
}

fn estimparam(p: &LemmaParams) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for (r, &eps) in p.epsilons.iter().enumerate() {
        let prof = TubeProfile::exact_annulus(eps)?;
        for (k, side, name) in [
            (0, Side::Inner, "flight_time_inner"),
            (1, Side::Outer, "flight_time_outer"),
        ] {
            let l = chord_lengths(&prof, p, LemmaId::Estimparam, 2 * r + k, 0.0, side, p.n)?;
            let est = mean_flight_time(&l, eps)?;
            out.push(
                Check::new(
                    name,
                    Rule::Within,
                    FRAC_PI_2,
                    est.mean,
                    0.02 * FRAC_PI_2,
                    p.n,
                )
                .at(eps)
                .ci(est.ci95_mean),
            );
        }
    }
    Ok(out)
}

/// Reflections at times `<= t` of one path from a stationary start.
fn count_reflections(prof: &TubeProfile, t: f64, rng: &mut StreamRng) -> Result<u64> {
    let method = method_for(prof);
    let alpha = TAU * rng.random::<f64>();
    let mut state = ChainState::stationary(alpha, prof.epsilon(), rng);
    let (mut time, mut n) = (0.0, 0u64);
    loop {
        let s = step(prof, method, &state, rng)?;
        time += s.chord_length;
        if time > t {
            return Ok(n);
        }
        n += 1;
        state = s.state;
    }
}

fn mean_count(prof: &TubeProfile, p: &LemmaParams, id: LemmaId, rung: usize) -> Result<Moments> {
    let counts = (0..p.n)
        .into_par_iter()
        .map(|i| count_reflections(prof, p.t, &mut lemma_rng(p, id, rung, i)))
        .collect::<Result<Vec<u64>>>()?;
    Ok(counts.iter().map(|&c| c as f64).collect())
}

fn numberbounce(p: &LemmaParams) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for (r, &eps) in p.epsilons.iter().enumerate() {
        let prof = TubeProfile::exact_annulus(eps)?;
        let m = mean_count(&prof, p, LemmaId::Numberbounce, r)?;
        let ci = m.estimate().ci95_mean;
        out.push(
            Check::new(
                "mean_count_upper",
                Rule::AtMost,
                2.0 * (p.t + 2.0 * eps) / eps,
                m.mean(),
                0.0,
                p.n,
            )
            .at(eps)
            .ci(ci),
        );
        out.push(
            Check::new(
                "mean_count_floor",
                Rule::AtLeast,
                p.t / (2.0 * eps),
                m.mean(),
                0.0,
                p.n,
            )
            .at(eps)
            .ci(ci),
        );
    }
    Ok(out)
}

fn t_equals_r(p: &LemmaParams) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for (r, &eps) in p.epsilons.iter().enumerate() {
        let t = annulus_conditional(p, LemmaId::TEqualsR, r, eps, JumpKind::T)?;
        let rr = annulus_conditional(p, LemmaId::TEqualsR, r, eps, JumpKind::R)?;
        let same = ks_two_sample(&t, &rr)?;
        out.push(
            Check::new(
                "ks_p_T_vs_R",
                Rule::AtLeast,
                0.01,
                same.p_value,
                0.0,
                2 * p.n,
            )
            .at(eps),
        );
        let shifted: Vec<f64> = t.iter().map(|v| v + 0.01).collect();
        let power = ks_two_sample(&shifted, &rr)?;
        out.push(Check::new("ks_p_shifted", Rule::AtMost, 1e-6, power.p_value, 0.0, 0).at(eps));
    }
    Ok(out)
}

fn probreste(p: &LemmaParams) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for (r, &eps) in p.epsilons.iter().enumerate() {
        let prof = p.profile_at(eps)?;
        let method = method_for(&prof);
        let hi = eps * (4.0 + 6.0 * prof.g_prime_bound());
        let fractions = binned(p, |j, a| {
            let mut rng = lemma_rng(p, LemmaId::Probreste, r, j);
            let init = ChainState::new(a, Side::Outer);
            let mut k = 0u64;
            for _ in 0..p.n {
                if step(&prof, method, &init, &mut rng)?.state.side == Side::Outer {
                    k += 1;
                }
            }
            Ok(k as f64 / p.n as f64)
        })?;
        for (a, f) in p.bin_centres().into_iter().zip(fractions) {
            out.push(
                Check::new("stay_lower", Rule::AtLeast, 0.5 * eps, f, 0.0, p.n)
                    .at(eps)
                    .bin(a),
            );
            out.push(
                Check::new("stay_upper", Rule::AtMost, hi, f, 0.0, 0)
                    .at(eps)
                    .bin(a),
            );
        }
    }
    Ok(out)
}

fn maxdep(p: &LemmaParams) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for (r, &eps) in p.epsilons.iter().enumerate() {
        let prof = p.profile_at(eps)?;
        let method = method_for(&prof);
        let bound = 12.0 * eps.sqrt();
        let parts = chunked(p.n, |i, m| {
            let mut rng = lemma_rng(p, LemmaId::Maxdep, r, i);
            let alpha = TAU * rng.random::<f64>();
            let mut state = ChainState::stationary(alpha, eps, &mut rng);
            let (mut worst, mut bad) = (0.0f64, 0u64);
            for _ in 0..m {
                match step(&prof, method, &state, &mut rng) {
                    Ok(s) => {
                        worst = worst.max(s.jump.value.abs());
                        state = s.state;
                    }
                    Err(Error::JumpBoundExceeded { jump, .. }) => {
                        // counted, then the chain restarts from the same point
                        worst = worst.max(jump.abs());
                        bad += 1;
                    }
                    Err(e) => return Err(e),
                }
            }
            Ok((worst, bad))
        })?;
        let worst = parts.iter().fold(0.0f64, |m, w| m.max(w.0));
        let bad: u64 = parts.iter().map(|w| w.1).sum();
        out.push(Check::new("max_abs_jump", Rule::AtMost, bound, worst, 0.0, p.n).at(eps));
        out.push(Check::new("violations", Rule::AtMost, 0.0, bad as f64, 0.0, 0).at(eps));
    }
    Ok(out)
}

/// Ratio estimator `sum a / sum b` over antithetic pairs, with a delta-method error.
#[derive(Debug, Clone, Copy, Default)]
struct PairMean {
    sa: f64,
    sb: f64,
    saa: f64,
    sbb: f64,
    sab: f64,
}

impl PairMean {
    fn push(&mut self, a: f64, b: f64) {
        self.sa += a;
        self.sb += b;
        self.saa += a * a;
        self.sbb += b * b;
        self.sab += a * b;
    }

    fn mean(&self) -> f64 {
        self.sa / self.sb
    }

    fn std_error(&self) -> f64 {
        let r = self.mean();
        (self.saa - 2.0 * r * self.sab + r * r * self.sbb)
            .max(0.0)
            .sqrt()
            / self.sb
    }
}

/// Conditional jumps of `kind` from `alpha`, drawn as pairs `(theta, -theta)`.
///
/// The pairs make the mean estimator insensitive to the odd part of the
/// jump, which dominates its variance; the variance is estimated from the
/// pooled samples. Stops once `n` jumps of the requested kind are collected.
fn paired_jumps(
    prof: &TubeProfile,
    alpha: f64,
    kind: JumpKind,
    n: u64,
    rng: &mut StreamRng,
) -> Result<(PairMean, Moments)> {
    let method = method_for(prof);
    let state = ChainState::new(alpha, kind.start_side());
    let lo = match kind {
        JumpKind::S => {
            let c = outer_return_cos_bound(prof).min(1.0);
            (1.0 - c * c).sqrt()
        }
        _ => 0.0,
    };
    let (mut pm, mut mom) = (PairMean::default(), Moments::new());
    let max_pairs = 1000 * n + 1_000_000;
    let mut pairs = 0u64;
    while mom.count() < n {
        pairs += 1;
        if pairs > max_pairs {
            return Err(Error::RetryLimit { limit: u32::MAX });
        }
        let mag = lo + (1.0 - lo) * rng.random::<f64>();
        let hit = |u: f64| match advance(prof, method, &state, u.asin()) {
            Ok(s) => Ok(Some((s.jump.kind == kind).then_some(s.jump.value))),
            Err(e) if e.is_resample() => Ok(None),
            Err(e) => Err(e),
        };
        let (Some(x), Some(y)) = (hit(mag)?, hit(-mag)?) else {
            continue;
        };
        let (mut a, mut b) = (0.0, 0.0);
        for v in [x, y].into_iter().flatten() {
            a += v;
            b += 1.0;
            mom.push(v);
        }
        pm.push(a, b);
    }
    Ok((pm, mom))
}

fn jump_moments(p: &LemmaParams, kind: JumpKind, mean: bool, var: bool) -> Result<Vec<Check>> {
    let id = match (kind, mean, var) {
        (JumpKind::T, true, false) => LemmaId::EstimtMean,
        (JumpKind::T, _, _) => LemmaId::EstimtVar,
        _ => LemmaId::Estimr,
    };
    let name = kind.as_str();
    let mut out = Vec::new();
    for (r, &eps) in p.epsilons.iter().enumerate() {
        let prof = p.profile_at(eps)?;
        let s2 = variance_scale(eps);
        let last = r + 1 == p.epsilons.len();
        let rule = if last { Rule::Within } else { Rule::Record };
        let res = binned(p, |j, a| {
            paired_jumps(&prof, a, kind, p.n, &mut lemma_rng(p, id, r, j))
        })?;
        for (a, (pm, mom)) in p.bin_centres().into_iter().zip(res) {
            if mean {
                let target = prof.h_prime(a) * prof.h(a);
                let (m, se) = (pm.mean() / s2, pm.std_error() / s2);
                out.push(
                    Check::new(
                        &format!("mean_{name}"),
                        rule,
                        target,
                        m,
                        0.15 * target.abs(),
                        mom.count(),
                    )
                    .at(eps)
                    .bin(a)
                    .ci([m - Z95 * se, m + Z95 * se]),
                );
            }
            if var {
                let target = prof.h(a).powi(2);
                let est = mom.estimate().scaled(1.0 / s2.sqrt());
                out.push(
                    Check::new(
                        &format!("var_{name}"),
                        rule,
                        target,
                        est.variance,
                        0.15 * target,
                        mom.count(),
                    )
                    .at(eps)
                    .bin(a)
                    .ci(est.ci95_var),
                );
            }
        }
    }
    Ok(out)
}

fn estims(p: &LemmaParams) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for (r, &eps) in p.epsilons.iter().enumerate() {
        let prof = p.profile_at(eps)?;
        let res = binned(p, |j, a| {
            paired_jumps(
                &prof,
                a,
                JumpKind::S,
                p.n,
                &mut lemma_rng(p, LemmaId::Estims, r, j),
            )
        })?;
        for (a, (pm, mom)) in p.bin_centres().into_iter().zip(res) {
            let (m, se) = (pm.mean().abs() / eps, pm.std_error() / eps);
            out.push(
                Check::new(
                    "abs_mean_S_over_eps",
                    Rule::AtMost,
                    ESTIMS_BOUND,
                    m,
                    0.0,
                    mom.count(),
                )
                .at(eps)
                .bin(a)
                .ci([m - Z95 * se, m + Z95 * se]),
            );
        }
    }
    Ok(out)
}

/// Unconditional transitions from `(alpha, side)`: jump and chord moments.
fn launches(
    prof: &TubeProfile,
    alpha: f64,
    side: Side,
    n: u64,
    rng: &mut StreamRng,
) -> Result<(Moments, Moments)> {
    let method = method_for(prof);
    let init = ChainState::new(alpha, side);
    let (mut jumps, mut chords) = (Moments::new(), Moments::new());
    for _ in 0..n {
        let s = step(prof, method, &init, rng)?;
        jumps.push(s.jump.value);
        chords.push(s.chord_length);
    }
    Ok((jumps, chords))
}

fn per_side(
    p: &LemmaParams,
    id: LemmaId,
    rung: usize,
    prof: &TubeProfile,
) -> Result<Vec<[(Moments, Moments); 2]>> {
    binned(p, |j, a| {
        Ok([
            launches(
                prof,
                a,
                Side::Inner,
                p.n,
                &mut lemma_rng(p, id, 2 * rung, j),
            )?,
            launches(
                prof,
                a,
                Side::Outer,
                p.n,
                &mut lemma_rng(p, id, 2 * rung + 1, j),
            )?,
        ])
    })
}

fn normparam(p: &LemmaParams) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for (r, &eps) in p.epsilons.iter().enumerate() {
        let prof = p.profile_at(eps)?;
        let rule = if r + 1 == p.epsilons.len() {
            Rule::Within
        } else {
            Rule::Record
        };
        let res = per_side(p, LemmaId::Normparam, r, &prof)?;
        for (a, sides) in p.bin_centres().into_iter().zip(res) {
            let target = FRAC_PI_2 * prof.h(a);
            for ((_, chords), name) in sides.iter().zip(["flight_inner", "flight_outer"]) {
                let est = chords.estimate().scaled(1.0 / eps);
                out.push(
                    Check::new(name, rule, target, est.mean, 0.05 * target, p.n)
                        .at(eps)
                        .bin(a)
                        .ci(est.ci95_mean),
                );
            }
        }
    }
    Ok(out)
}

fn delta_a(p: &LemmaParams) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for (r, &eps) in p.epsilons.iter().enumerate() {
        let prof = p.profile_at(eps)?;
        let s2 = variance_scale(eps);
        let rule = if r + 1 == p.epsilons.len() {
            Rule::Within
        } else {
            Rule::Record
        };
        let res = per_side(p, LemmaId::DeltaA, r, &prof)?;
        for (a, sides) in p.bin_centres().into_iter().zip(res) {
            let target = prof.h(a).powi(2);
            for ((jumps, _), name) in sides.iter().zip(["var_from_inner", "var_from_outer"]) {
                let est = jumps.estimate().scaled(1.0 / s2.sqrt());
                out.push(
                    Check::new(name, rule, target, est.variance, 0.15 * target, p.n)
                        .at(eps)
                        .bin(a)
                        .ci(est.ci95_var),
                );
            }
        }
    }
    Ok(out)
}

/// `c = (2 - q) / (2 (1 - q))` with `q = eps (4 + 6 sup|g'|)`.
pub fn nbrjumps_constant(profile: &TubeProfile) -> f64 {
    let q = profile.epsilon() * (4.0 + 6.0 * profile.g_prime_bound());
    (2.0 - q) / (2.0 * (1.0 - q))
}

fn nbrjumps(p: &LemmaParams) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for (r, &eps) in p.epsilons.iter().enumerate() {
        let prof = p.profile_at(eps)?;
        let bound = nbrjumps_constant(&prof) * (p.t + 2.0 * eps) / eps;
        let m = mean_count(&prof, p, LemmaId::Nbrjumps, r)?;
        out.push(
            Check::new("mean_count_upper", Rule::AtMost, bound, m.mean(), 0.0, p.n)
                .at(eps)
                .ci(m.estimate().ci95_mean),
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_round_trip_through_strings() {
        for id in LemmaId::ALL {
            assert_eq!(id.as_str().parse::<LemmaId>().unwrap(), id);
            assert_eq!(
                serde_json::to_string(&id).unwrap(),
                format!("\"{}\"", id.as_str())
            );
        }
        assert!(matches!(
            "nope".parse::<LemmaId>(),
            Err(Error::UnknownLemma(_))
        ));
    }

    #[test]
    fn rules() {
        assert!(Check::new("a", Rule::Within, 1.0, 1.1, 0.1 + 1e-12, 1).pass);
        assert!(!Check::new("a", Rule::Within, 1.0, 0.8, 0.1, 1).pass);
        assert!(Check::new("a", Rule::AtMost, 1.0, 0.2, 0.0, 1).pass);
        assert!(!Check::new("a", Rule::AtLeast, 1.0, 0.2, 0.0, 1).pass);
        assert!(Check::new("a", Rule::Record, 1.0, 1e9, 0.0, 1).pass);
    }

    #[test]
    fn pair_mean_of_symmetric_pairs() {
        let mut pm = PairMean::default();
        for v in [0.3, 1.0, 2.0] {
            // T pairs: two samples each
            pm.push(v + (-v + 0.5), 2.0);
        }
        assert!((pm.mean() - 0.25).abs() < 1e-15);
        assert!(pm.std_error() < 1e-15);
    }

    #[test]
    fn nbrjumps_constant_for_the_annulus_limit() {
        let p = TubeProfile::exact_annulus(1e-9).unwrap();
        assert!((nbrjumps_constant(&p) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn budget_is_enforced() {
        let p = LemmaParams::defaults(LemmaId::Remain);
        assert!(matches!(
            verify_lemma(LemmaId::Remain, &p, Some(10)),
            Err(Error::Budget(_))
        ));
    }

    #[test]
    fn small_remain_run_passes() {
        let mut p = LemmaParams::defaults(LemmaId::Remain);
        p.n = 100_000;
        let r = verify_lemma(LemmaId::Remain, &p, None).unwrap();
        assert!(r.pass, "{:?}", r.checks);
        assert_eq!(r.checks.len(), 3);
        assert_eq!(r.n, 300_000);
    }
}
