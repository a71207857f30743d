//! Python module `knudsen`.

use knudsen_core::chain::{ChainState, StepMethod};
use knudsen_core::export::to_json;
use knudsen_core::geometry::{
    annulus_chord as chord, validate_profile, FourierSeries, Side, TubeProfile,
};
use knudsen_core::rng::{purpose, stream};
use knudsen_core::sde::{sde_ensemble as ensemble, DiffusionSpec, DEFAULT_DT};
use knudsen_core::stats::{
    compare_invariance as invariance, ks_two_sample as ks2, quadrature_ex2 as ex2,
    variance_scale as vscale, verify_lemma as verify, InvarianceParams, LemmaId, LemmaParams,
};
use knudsen_core::trajectory::{rescaled_path as rescaled, TimeScale, Trajectory};
use knudsen_core::Error;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::InvalidProfile(_)
        | Error::InvalidParameter(_)
        | Error::UnknownLemma(_)
        | Error::Budget(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn json<T: Serialize>(v: &T) -> PyResult<String> {
    to_json(v).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

fn side(i: u8) -> PyResult<Side> {
    Side::from_index(i).ok_or_else(|| {
        PyValueError::new_err(format!("side must be 0 (outer) or 1 (inner), got {i}"))
    })
}

/// A tube between the curves `(1 + eps g) e^{ia}` and `(1 - eps f) e^{ia}`.
#[pyclass(name = "TubeProfile", frozen)]
struct PyProfile(TubeProfile);

#[pymethods]
impl PyProfile {
    #[staticmethod]
    fn annulus(epsilon: f64) -> PyResult<Self> {
        TubeProfile::exact_annulus(epsilon)
            .map(Self)
            .map_err(py_err)
    }

    /// `f = 1.5 + 0.5 sin`, `g = 0.5 + 0.5 cos`.
    #[staticmethod]
    fn example(epsilon: f64) -> PyResult<Self> {
        TubeProfile::example(epsilon).map(Self).map_err(py_err)
    }

    /// Fourier coefficients `(c0, [cos_k], [sin_k])` for `f` and `g`.
    #[staticmethod]
    fn perturbed(
        f: (f64, Vec<f64>, Vec<f64>),
        g: (f64, Vec<f64>, Vec<f64>),
        epsilon: f64,
    ) -> PyResult<Self> {
        let f = FourierSeries::new(f.0, f.1, f.2).map_err(py_err)?;
        let g = FourierSeries::new(g.0, g.1, g.2).map_err(py_err)?;
        TubeProfile::perturbed(f, g, epsilon)
            .map(Self)
            .map_err(py_err)
    }

    #[getter]
    fn epsilon(&self) -> f64 {
        self.0.epsilon()
    }

    #[getter]
    fn is_annulus(&self) -> bool {
        self.0.is_exact_annulus()
    }

    fn h(&self, alpha: f64) -> f64 {
        self.0.h(alpha)
    }

    fn h_prime(&self, alpha: f64) -> f64 {
        self.0.h_prime(alpha)
    }

    fn curvature(&self, alpha: f64, side_index: u8) -> PyResult<f64> {
        Ok(self.0.curvature(alpha, side(side_index)?))
    }

    /// Admissibility report as JSON.
    fn validate(&self) -> PyResult<String> {
        json(&validate_profile(&self.0))
    }

    fn __repr__(&self) -> String {
        format!(
            "TubeProfile(mode={:?}, epsilon={})",
            self.0.mode(),
            self.0.epsilon()
        )
    }
}

/// `(delta_alpha, chord_length, hit_side)` in the unit annulus.
#[pyfunction]
fn annulus_chord(epsilon: f64, theta: f64, start_side: u8) -> PyResult<(f64, f64, u8)> {
    let s = chord(epsilon, theta, side(start_side)?).map_err(py_err)?;
    Ok((s.delta_alpha, s.chord_length, s.hit_side.index()))
}

/// Reflection events `(time, alpha, side)` of one seeded path.
#[pyfunction]
#[pyo3(signature = (profile, steps, seed=42, path=0, alpha0=0.0, side0=0))]
fn simulate(
    profile: &PyProfile,
    steps: u64,
    seed: u64,
    path: u64,
    alpha0: f64,
    side0: u8,
) -> PyResult<Vec<(f64, f64, u8)>> {
    let p = &profile.0;
    let init = ChainState::new(alpha0, side(side0)?);
    let mut rng = stream(seed, purpose::TRAJECTORY, path);
    let tr = Trajectory::with_steps(p, StepMethod::default_for(p), init, steps, &mut rng)
        .map_err(py_err)?;
    Ok(tr
        .events
        .iter()
        .map(|e| (e.time, e.alpha, e.side.index()))
        .collect())
}

/// Rescaled angle `beta(zeta(s)) - alpha0` on `s_grid` for one path from a stationary start.
#[pyfunction]
#[pyo3(signature = (profile, s_grid, seed=42, path=0, alpha0=0.0))]
fn rescaled_path(
    profile: &PyProfile,
    s_grid: Vec<f64>,
    seed: u64,
    path: u64,
    alpha0: f64,
) -> PyResult<Vec<f64>> {
    let p = &profile.0;
    let scale = TimeScale::new(p.epsilon()).map_err(py_err)?;
    let mut rng = stream(seed, purpose::INVARIANCE, path);
    let init = ChainState::stationary(alpha0, p.epsilon(), &mut rng);
    let r = rescaled(
        p,
        StepMethod::default_for(p),
        init,
        &scale,
        &s_grid,
        &mut rng,
    )
    .map_err(py_err)?;
    Ok(r.values)
}

/// Lemma report as JSON; unset options take the acceptance defaults.
#[pyfunction]
#[pyo3(signature = (lemma, epsilons=None, n=None, seed=42, profile=None))]
fn verify_lemma(
    lemma: &str,
    epsilons: Option<Vec<f64>>,
    n: Option<u64>,
    seed: u64,
    profile: Option<&PyProfile>,
) -> PyResult<String> {
    let id: LemmaId = lemma.parse().map_err(py_err)?;
    let mut p = LemmaParams::defaults(id);
    p.master_seed = seed;
    if let Some(e) = epsilons {
        p.epsilons = e;
    }
    if let Some(n) = n {
        p.n = n;
    }
    p.profile = profile.map(|q| q.0.spec());
    json(&verify(id, &p, None).map_err(py_err)?)
}

/// Invariance report as JSON.
#[pyfunction]
#[pyo3(signature = (profile, s_grid, n_paths=2000, seed=42, x0=0.0, dt=DEFAULT_DT))]
fn compare_invariance(
    profile: &PyProfile,
    s_grid: Vec<f64>,
    n_paths: usize,
    seed: u64,
    x0: f64,
    dt: f64,
) -> PyResult<String> {
    let p = InvarianceParams {
        s_grid,
        n_paths,
        master_seed: seed,
        x0,
        sde_dt: dt,
        budget: None,
    };
    json(&invariance(&profile.0, &p).map_err(py_err)?)
}

/// Samples `[j][i]` of path `i` at `t_grid[j]`; Brownian motion when `profile` is omitted.
#[pyfunction]
#[pyo3(signature = (t_grid, n_paths, seed=42, x0=0.0, dt=DEFAULT_DT, profile=None))]
fn sde_ensemble(
    t_grid: Vec<f64>,
    n_paths: usize,
    seed: u64,
    x0: f64,
    dt: f64,
    profile: Option<&PyProfile>,
) -> PyResult<Vec<Vec<f64>>> {
    let spec = match profile {
        Some(p) => DiffusionSpec::from_profile(&p.0, x0).map_err(py_err)?,
        None => DiffusionSpec::brownian(x0),
    };
    Ok(ensemble(&spec, &t_grid, n_paths, seed, dt)
        .map_err(py_err)?
        .samples)
}

/// `(statistic, p_value)`.
#[pyfunction]
fn ks_two_sample(a: Vec<f64>, b: Vec<f64>) -> PyResult<(f64, f64)> {
    let r = ks2(&a, &b).map_err(py_err)?;
    Ok((r.statistic, r.p_value))
}

#[pyfunction]
fn quadrature_ex2(epsilon: f64) -> PyResult<f64> {
    ex2(epsilon).map_err(py_err)
}

#[pyfunction]
fn variance_scale(epsilon: f64) -> f64 {
    vscale(epsilon)
}

#[pyfunction]
fn lemma_ids() -> Vec<&'static str> {
    LemmaId::ALL.iter().map(|l| l.as_str()).collect()
}

#[pymodule]
fn knudsen(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", knudsen_core::VERSION)?;
    m.add_class::<PyProfile>()?;
    m.add_function(wrap_pyfunction!(annulus_chord, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(rescaled_path, m)?)?;
    m.add_function(wrap_pyfunction!(verify_lemma, m)?)?;
    m.add_function(wrap_pyfunction!(compare_invariance, m)?)?;
    m.add_function(wrap_pyfunction!(sde_ensemble, m)?)?;
    m.add_function(wrap_pyfunction!(ks_two_sample, m)?)?;
    m.add_function(wrap_pyfunction!(quadrature_ex2, m)?)?;
    m.add_function(wrap_pyfunction!(variance_scale, m)?)?;
    m.add_function(wrap_pyfunction!(lemma_ids, m)?)?;
    Ok(())
}
