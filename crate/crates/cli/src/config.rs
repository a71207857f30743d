//! Experiment configuration: TOML file layered under command-line flags.

use clap::ValueEnum;
use knudsen_core::chain::StepMethod;
use knudsen_core::geometry::{FourierSeries, TubeProfile};
use knudsen_core::stats::LemmaId;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

use crate::Failure;

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Simulate,
    Verify,
    Invariance,
    Sde,
    ValidateProfile,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Concentric circles of radii `1 - eps` and `1`.
    Annulus,
    /// `f = 1.5 + 0.5 sin`, `g = 0.5 + 0.5 cos`.
    Example,
    /// `f` and `g` from the config file.
    Perturbed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ClosedForm,
    RayTrace,
}

impl From<Method> for StepMethod {
    fn from(m: Method) -> Self {
        match m {
            Method::ClosedForm => StepMethod::ClosedForm,
            Method::RayTrace => StepMethod::RayTrace,
        }
    }
}

/// Every key is optional; unset keys fall back to per-experiment defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<Kind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilons: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f: Option<FourierSeries>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g: Option<FourierSeries>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<Method>,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub paths: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<f64>,
    /// Side of the first reflection: 0 outer, 1 inner.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub side0: Option<u8>,

    /// Lemma ids, or `["all"]`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lemmas: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bins: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mc_epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub budget: Option<u64>,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub s_grid: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_grid: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_paths: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
}

macro_rules! overlay {
    ($lo:expr, $hi:expr, $($field:ident),*) => {
        ExperimentConfig { $($field: $hi.$field.or($lo.$field)),* }
    };
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
    }

    /// Keys set in `top` win.
    pub fn overlay(self, top: Self) -> Self {
        overlay!(
            self, top, kind, seed, out_dir, mode, epsilon, epsilons, f, g, method, steps, horizon,
            paths, x0, side0, lemmas, n, bins, t, mc_epsilon, budget, s_grid, t_grid, n_paths, dt
        )
    }

    /// Fills the defaults that every experiment records, so that a manifest reruns unchanged.
    pub fn resolved(mut self) -> Result<Self, Failure> {
        let kind = self
            .kind
            .ok_or_else(|| Failure::Config("experiment kind missing".into()))?;
        self.seed.get_or_insert(DEFAULT_SEED);
        self.out_dir.get_or_insert_with(|| PathBuf::from("out"));
        if self.f.is_some() || self.g.is_some() {
            self.mode.get_or_insert(Mode::Perturbed);
        }
        match kind {
            Kind::Simulate => {
                self.mode.get_or_insert(Mode::Annulus);
                self.paths.get_or_insert(1);
                self.x0.get_or_insert(0.0);
                self.side0.get_or_insert(0);
                if self.steps.is_none() && self.horizon.is_none() && self.s_grid.is_none() {
                    return Err(Failure::Config(
                        "simulate needs steps, horizon or s_grid".into(),
                    ));
                }
            }
            Kind::Verify => {
                if self.lemmas.as_ref().is_none_or(Vec::is_empty) {
                    return Err(Failure::Config("verify needs --lemma or --all".into()));
                }
            }
            Kind::Invariance => {
                self.mode.get_or_insert(Mode::Annulus);
                self.s_grid.get_or_insert_with(|| vec![0.25, 0.5, 1.0]);
                self.n_paths.get_or_insert(2000);
                self.x0.get_or_insert(0.0);
                self.dt.get_or_insert(knudsen_core::sde::DEFAULT_DT);
            }
            Kind::Sde => {
                self.mode.get_or_insert(Mode::Example);
                self.t_grid.get_or_insert_with(|| vec![0.25, 0.5, 1.0]);
                self.n_paths.get_or_insert(2000);
                self.x0.get_or_insert(0.0);
                self.dt.get_or_insert(knudsen_core::sde::DEFAULT_DT);
            }
            Kind::ValidateProfile => {
                self.mode.get_or_insert(Mode::Example);
            }
        }
        self.check()?;
        Ok(self)
    }

    fn check(&self) -> Result<(), Failure> {
        let positive = |name: &str, v: Option<f64>| match v {
            Some(x) if !(x > 0.0) => {
                Err(Failure::Config(format!("{name} must be positive, got {x}")))
            }
            _ => Ok(()),
        };
        positive("epsilon", self.epsilon)?;
        positive("horizon", self.horizon)?;
        positive("t", self.t)?;
        positive("mc_epsilon", self.mc_epsilon)?;
        positive("dt", self.dt)?;
        for e in self.epsilons.iter().flatten() {
            positive("epsilons", Some(*e))?;
        }
        if self.n == Some(0)
            || self.bins == Some(0)
            || self.budget == Some(0)
            || self.paths == Some(0)
        {
            return Err(Failure::Config("sample budgets must be positive".into()));
        }
        if self.side0.is_some_and(|s| s > 1) {
            return Err(Failure::Config("side0 must be 0 or 1".into()));
        }
        for grid in [&self.s_grid, &self.t_grid].into_iter().flatten() {
            if grid.is_empty() || grid[0] < 0.0 || grid.windows(2).any(|w| !(w[0] <= w[1])) {
                return Err(Failure::Config(
                    "time grids must be non-empty, ascending and non-negative".into(),
                ));
            }
        }
        if self.mode == Some(Mode::Perturbed) && (self.f.is_none() || self.g.is_none()) {
            return Err(Failure::Config("perturbed mode needs both f and g".into()));
        }
        self.lemma_ids()?;
        Ok(())
    }

    pub fn lemma_ids(&self) -> Result<Vec<LemmaId>, Failure> {
        let Some(names) = &self.lemmas else {
            return Ok(Vec::new());
        };
        if names.iter().any(|n| n == "all") {
            return Ok(LemmaId::ALL.to_vec());
        }
        names
            .iter()
            .map(|n| {
                n.parse::<LemmaId>()
                    .map_err(|e| Failure::Config(e.to_string()))
            })
            .collect()
    }

    pub fn seed_value(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    pub fn out(&self) -> PathBuf {
        self.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    /// Tube at `epsilon` for the configured mode.
    pub fn profile_at(&self, epsilon: f64) -> Result<TubeProfile, Failure> {
        let p = match self.mode.unwrap_or(Mode::Annulus) {
            Mode::Annulus => TubeProfile::exact_annulus(epsilon),
            Mode::Example => TubeProfile::example(epsilon),
            Mode::Perturbed => TubeProfile::perturbed(
                self.f.clone().expect("checked in resolve"),
                self.g.clone().expect("checked in resolve"),
                epsilon,
            ),
        };
        p.map_err(Failure::from)
    }

    pub fn profile(&self) -> Result<TubeProfile, Failure> {
        let eps = self
            .epsilon
            .ok_or_else(|| Failure::Config("epsilon missing".into()))?;
        self.profile_at(eps)
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex(&Sha256::digest(json.as_bytes()))
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
