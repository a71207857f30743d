//! Experiment dispatch, artifact writing and the run manifest.

use knudsen_core::chain::{ChainState, StepMethod};
use knudsen_core::export::{to_json, write_events_csv, write_rescaled_csv, write_sde_csv};
use knudsen_core::geometry::{validate_profile, Side, TubeProfile};
use knudsen_core::rng::{purpose, stream, with_threads, worker_count};
use knudsen_core::sde::{sde_ensemble, DiffusionSpec};
use knudsen_core::stats::{compare_invariance, verify_lemma, InvarianceParams, LemmaParams};
use knudsen_core::trajectory::{TimeScale, Trajectory};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use crate::config::{hex, ExperimentConfig, Kind, Mode};
use crate::Failure;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub core_version: String,
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub seed: u64,
    pub threads: usize,
    pub started_unix_ms: u64,
    pub finished_unix_ms: u64,
    /// Wall time per stage.
    pub runtime_ms: BTreeMap<String, u64>,
    pub artifacts: Vec<Artifact>,
    pub pass: bool,
}

pub fn read_manifest(path: &Path) -> Result<Manifest, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

struct Outputs {
    dir: PathBuf,
    artifacts: Vec<Artifact>,
    runtime_ms: BTreeMap<String, u64>,
}

impl Outputs {
    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), Failure> {
        fs::write(self.dir.join(name), bytes)?;
        self.artifacts.push(Artifact {
            path: name.to_string(),
            sha256: hex(&Sha256::digest(bytes)),
        });
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), Failure> {
        let mut s = to_json(value).map_err(|e| Failure::Runtime(e.to_string()))?;
        s.push('\n');
        self.write(name, s.as_bytes())
    }

    fn timed<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let v = f();
        self.runtime_ms
            .insert(stage.to_string(), t.elapsed().as_millis() as u64);
        v
    }
}

fn csv(f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<Vec<u8>, Failure> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

/// Perturbed tubes must pass the admissibility checks before they are simulated.
fn admissible(profile: TubeProfile) -> Result<TubeProfile, Failure> {
    if profile.is_exact_annulus() {
        return Ok(profile);
    }
    let report = validate_profile(&profile);
    if !report.passed {
        let bad: Vec<&str> = report.failures().map(|c| c.name.as_str()).collect();
        return Err(Failure::Config(format!("profile fails {}", bad.join(", "))));
    }
    Ok(profile)
}

fn simulate(c: &ExperimentConfig, out: &mut Outputs) -> Result<(), Failure> {
    let profile = admissible(c.profile()?)?;
    let method = c
        .method
        .map_or_else(|| StepMethod::default_for(&profile), Into::into);
    let init = ChainState::new(
        c.x0.unwrap_or(0.0),
        Side::from_index(c.side0.unwrap_or(0)).expect("checked"),
    );
    let scale = TimeScale::new(profile.epsilon())?;
    let horizon = c
        .horizon
        .or_else(|| c.s_grid.as_ref().map(|g| scale.zeta(*g.last().unwrap())));
    let seed = c.seed_value();
    let paths = c.paths.unwrap_or(1);
    let trajs: Vec<Trajectory> = out.timed("simulate", || {
        (0..paths as u64)
            .into_par_iter()
            .map(|i| match c.steps {
                Some(n) => {
                    let mut tr = Trajectory::with_steps(
                        &profile,
                        method,
                        init,
                        n,
                        &mut stream(seed, purpose::TRAJECTORY, i),
                    )?;
                    tr.seed = Some((seed, i));
                    Ok(tr)
                }
                None => Trajectory::generate_seeded(
                    &profile,
                    method,
                    init,
                    horizon.expect("checked"),
                    seed,
                    i,
                ),
            })
            .collect::<knudsen_core::Result<_>>()
    })?;
    for (i, tr) in trajs.iter().enumerate() {
        let name = if paths == 1 {
            "events.csv".to_string()
        } else {
            format!("events_{i}.csv")
        };
        out.write(&name, &csv(|b| write_events_csv(b, tr))?)?;
    }
    if let Some(grid) = &c.s_grid {
        let values = trajs
            .iter()
            .map(|tr| tr.rescaled_beta(&scale, grid))
            .collect::<knudsen_core::Result<Vec<_>>>()?;
        out.write(
            "rescaled.csv",
            &csv(|b| write_rescaled_csv(b, grid, &values))?,
        )?;
    }
    Ok(())
}

fn verify(c: &ExperimentConfig, out: &mut Outputs) -> Result<(), Failure> {
    let mut summary =
        String::from("lemma_id,pass,target,estimate,tolerance,n,seed,checks,failed_checks\n");
    let mut failing = Vec::new();
    for id in c.lemma_ids()? {
        let mut p = LemmaParams::defaults(id);
        p.master_seed = c.seed_value();
        if let Some(l) = c.epsilons.clone().or_else(|| c.epsilon.map(|e| vec![e])) {
            p.epsilons = l;
        }
        p.n = c.n.unwrap_or(p.n);
        p.bins = c.bins.unwrap_or(p.bins);
        p.t = c.t.unwrap_or(p.t);
        p.mc_epsilon = c.mc_epsilon.unwrap_or(p.mc_epsilon);
        if id.uses_profile() {
            match c.mode {
                Some(Mode::Annulus) => {
                    return Err(Failure::Config(format!("{id} needs a perturbed profile")));
                }
                Some(Mode::Perturbed) => {
                    p.profile = Some(admissible(c.profile_at(p.epsilons[0])?)?.spec());
                }
                Some(Mode::Example) | None => {}
            }
        }
        let rep = out.timed(id.as_str(), || verify_lemma(id, &p, c.budget))?;
        out.json(&format!("report_{id}.json"), &rep)?;
        let failed = rep.checks.iter().filter(|k| !k.pass).count();
        summary.push_str(&format!(
            "{id},{},{},{},{},{},{},{},{failed}\n",
            rep.pass,
            rep.target,
            rep.estimate,
            rep.tolerance,
            rep.n,
            rep.seed,
            rep.checks.len()
        ));
        if !rep.pass {
            failing.push(to_json(&rep).map_err(|e| Failure::Runtime(e.to_string()))?);
        }
    }
    out.write("summary.csv", summary.as_bytes())?;
    if failing.is_empty() {
        Ok(())
    } else {
        Err(Failure::Check(failing.join("\n")))
    }
}

fn invariance(c: &ExperimentConfig, out: &mut Outputs) -> Result<(), Failure> {
    let profile = admissible(c.profile()?)?;
    let p = InvarianceParams {
        s_grid: c.s_grid.clone().expect("resolved"),
        n_paths: c.n_paths.expect("resolved"),
        master_seed: c.seed_value(),
        x0: c.x0.unwrap_or(0.0),
        sde_dt: c.dt.expect("resolved"),
        budget: c.budget,
    };
    let rep = out.timed("invariance", || compare_invariance(&profile, &p))?;
    out.json("invariance.json", &rep)?;
    out.write(
        "rescaled.csv",
        &csv(|b| write_rescaled_csv(b, &p.s_grid, &rep.paths))?,
    )?;
    if rep.pass {
        Ok(())
    } else {
        Err(Failure::Check(
            to_json(&rep).map_err(|e| Failure::Runtime(e.to_string()))?,
        ))
    }
}

fn sde(c: &ExperimentConfig, out: &mut Outputs) -> Result<(), Failure> {
    let x0 = c.x0.unwrap_or(0.0);
    let spec = match c.mode {
        Some(Mode::Annulus) => DiffusionSpec::brownian(x0),
        // h does not depend on the width scale
        _ => {
            DiffusionSpec::from_profile(&admissible(c.profile_at(c.epsilon.unwrap_or(1e-3))?)?, x0)?
        }
    };
    let grid = c.t_grid.clone().expect("resolved");
    let ens = out.timed("sde", || {
        sde_ensemble(
            &spec,
            &grid,
            c.n_paths.expect("resolved"),
            c.seed_value(),
            c.dt.expect("resolved"),
        )
    })?;
    out.write("sde.csv", &csv(|b| write_sde_csv(b, &ens))?)
}

fn validate(c: &ExperimentConfig, out: &mut Outputs) -> Result<(), Failure> {
    let rep = validate_profile(&c.profile()?);
    out.json("validation.json", &rep)?;
    if rep.passed {
        Ok(())
    } else {
        Err(Failure::Check(
            to_json(&rep).map_err(|e| Failure::Runtime(e.to_string()))?,
        ))
    }
}

/// Runs a resolved config and writes its manifest, also when checks fail.
pub fn run(config: &ExperimentConfig, threads: Option<usize>) -> Result<(), Failure> {
    let dir = config.out();
    fs::create_dir_all(&dir)?;
    let threads = threads.unwrap_or_else(worker_count);
    let started = now_ms();
    let mut out = Outputs {
        dir: dir.clone(),
        artifacts: Vec::new(),
        runtime_ms: BTreeMap::new(),
    };
    let result = with_threads(Some(threads), || match config.kind.expect("resolved") {
        Kind::Simulate => simulate(config, &mut out),
        Kind::Verify => verify(config, &mut out),
        Kind::Invariance => invariance(config, &mut out),
        Kind::Sde => sde(config, &mut out),
        Kind::ValidateProfile => validate(config, &mut out),
    });
    if matches!(result, Ok(()) | Err(Failure::Check(_))) {
        let manifest = Manifest {
            tool: "knudsen".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            core_version: knudsen_core::VERSION.into(),
            config: config.clone(),
            config_hash: config.hash(),
            seed: config.seed_value(),
            threads,
            started_unix_ms: started,
            finished_unix_ms: now_ms(),
            runtime_ms: out.runtime_ms,
            artifacts: out.artifacts,
            pass: result.is_ok(),
        };
        let text =
            serde_json::to_string_pretty(&manifest).map_err(|e| Failure::Runtime(e.to_string()))?;
        fs::write(dir.join(MANIFEST), text + "\n")?;
    }
    result
}
