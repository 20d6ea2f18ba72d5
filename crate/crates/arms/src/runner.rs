//! Replicate runs over a sweep grid.

use std::path::Path;

use anyhow::Context;
use arms_core::driver::{run_arms, ArmsConfig, RunFailure, RunResult};
use arms_core::exact::DiscreteProblem;
use arms_core::metrics;
use arms_core::surrogates::{
    toy_pstar_oracle, TabularProblem, ThermalBlockModel, ThermalProblem, ToyProblem,
};
use arms_core::{Problem, RngStream};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Combination, ExperimentSpec, ProblemSpec, SCHEMA_VERSION};

/// Environment variable holding the worker-pool size.
pub const WORKERS_ENV: &str = "ARMS_WORKERS";

/// Worker count from `ARMS_WORKERS`, else the available parallelism.
pub fn workers_from_env() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
}

/// The concrete problems a spec can name.
#[derive(Debug, Clone)]
pub enum AnyProblem {
    Toy(ToyProblem),
    Thermal(ThermalProblem),
    Tabular(TabularProblem),
}

pub fn load_fixture(path: &Path) -> anyhow::Result<DiscreteProblem> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading fixture {}", path.display()))?;
    let p: DiscreteProblem = serde_json::from_str(&text)
        .with_context(|| format!("parsing fixture {}", path.display()))?;
    p.validate()?;
    Ok(p)
}

pub fn build_problem(spec: &ProblemSpec) -> anyhow::Result<AnyProblem> {
    Ok(match spec {
        ProblemSpec::Toy1d {
            model,
            reference,
            initial_snapshots,
        } => {
            let mut p = ToyProblem::new(*model, reference.build(1)?)?;
            p.initial_snapshots = *initial_snapshots;
            AnyProblem::Toy(p)
        }
        ProblemSpec::ThermalBlock {
            d,
            n,
            l_max,
            initial_basis,
            drop_tol,
            reference,
        } => {
            let model = ThermalBlockModel::new(*d, *n)?;
            let dist = reference.build(model.q())?;
            let mut p = ThermalProblem::new(model, dist, *l_max, *initial_basis)?;
            p.drop_tol = *drop_tol;
            AnyProblem::Thermal(p)
        }
        ProblemSpec::Tabular { fixture, reference } => {
            let table = load_fixture(fixture)?;
            AnyProblem::Tabular(TabularProblem::new(table, reference.build(1)?)?)
        }
    })
}

impl AnyProblem {
    pub fn l_max(&self) -> f64 {
        match self {
            AnyProblem::Toy(p) => p.l_max(),
            AnyProblem::Thermal(p) => p.l_max(),
            AnyProblem::Tabular(p) => p.l_max(),
        }
    }

    /// Exact or oracle value of the rare-event probability, when available.
    pub fn oracle_p_star(&self) -> anyhow::Result<Option<f64>> {
        Ok(match self {
            AnyProblem::Toy(p) => Some(toy_pstar_oracle(&p.model, &p.reference)?),
            AnyProblem::Tabular(p) => Some(p.problem().p_star()),
            AnyProblem::Thermal(_) => None,
        })
    }

    pub fn run(&self, cfg: &ArmsConfig) -> Result<RunResult, RunFailure> {
        let mut rng = RngStream::new(cfg.seed, 0);
        match self {
            AnyProblem::Toy(p) => run_arms(cfg, p, &mut rng),
            AnyProblem::Thermal(p) => run_arms(cfg, p, &mut rng),
            AnyProblem::Tabular(p) => run_arms(cfg, p, &mut rng),
        }
    }
}

/// One replicate.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub run_id: usize,
    pub seed: u64,
    pub result: Result<RunResult, RunFailure>,
}

/// Runs all replicates of one combination on a pool of `workers` threads.
/// Results come back ordered by replicate index.
pub fn run_replicates(
    spec: &ExperimentSpec,
    combo: &Combination,
    problem: &AnyProblem,
    workers: usize,
) -> anyhow::Result<Vec<RunOutcome>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()?;
    let l_max = problem.l_max();
    let outcomes = pool.install(|| {
        (0..spec.replicates)
            .into_par_iter()
            .map(|r| {
                let seed = spec.run_seed(combo.index, r);
                let cfg = spec.arms_config(combo, l_max, seed);
                let result = problem.run(&cfg);
                if let Err(f) = &result {
                    log::warn!("{} run {r}: {f}", combo.label());
                }
                RunOutcome {
                    run_id: r,
                    seed,
                    result,
                }
            })
            .collect::<Vec<_>>()
    });
    Ok(outcomes)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub q05: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub q95: f64,
}

impl Quantiles {
    pub fn of(values: &[f64]) -> Self {
        Self {
            q05: metrics::quantile(values, 0.05),
            q25: metrics::quantile(values, 0.25),
            median: metrics::quantile(values, 0.5),
            q75: metrics::quantile(values, 0.75),
            q95: metrics::quantile(values, 0.95),
        }
    }
}

/// Statistics across runs after `k` snapshots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub k: usize,
    pub p_hat_is: Quantiles,
    pub p_hat_ams: Quantiles,
    pub expected_cost: f64,
    pub expected_error_is: Option<f64>,
    pub expected_error_ams: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub run_id: usize,
    pub seed: u64,
    pub error: String,
    pub iterations: usize,
}

/// Aggregate of one sweep combination. Every number is a function of the
/// trace files of the successful runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinationSummary {
    pub schema_version: u32,
    pub name: String,
    pub combination: Combination,
    pub replicates: usize,
    pub succeeded: usize,
    pub p_star: Option<f64>,
    pub failures: Vec<FailureRecord>,
    pub bands: Vec<Band>,
}

impl CombinationSummary {
    pub fn last(&self) -> Option<&Band> {
        self.bands.last()
    }

    pub fn at(&self, k: usize) -> Option<&Band> {
        self.bands.get(k.checked_sub(1)?)
    }
}

pub fn summarize(
    spec: &ExperimentSpec,
    combo: &Combination,
    outcomes: &[RunOutcome],
    p_star: Option<f64>,
) -> CombinationSummary {
    let ok: Vec<&RunResult> = outcomes
        .iter()
        .filter_map(|o| o.result.as_ref().ok())
        .collect();
    let failures = outcomes
        .iter()
        .filter_map(|o| match &o.result {
            Err(f) => Some(FailureRecord {
                run_id: o.run_id,
                seed: o.seed,
                error: f.error.to_string(),
                iterations: f.trace.len(),
            }),
            Ok(_) => None,
        })
        .collect();
    let k_max = ok.iter().map(|r| r.trace.len()).min().unwrap_or(0);
    let bands = (1..=k_max)
        .map(|k| {
            let is: Vec<f64> = ok.iter().map(|r| r.trace[k - 1].p_hat_is).collect();
            let ams: Vec<f64> = ok.iter().map(|r| r.trace[k - 1].p_hat_ams).collect();
            let counts: Vec<u64> = ok.iter().map(|r| r.trace[k - 1].reduced_evals).collect();
            Band {
                k,
                p_hat_is: Quantiles::of(&is),
                p_hat_ams: Quantiles::of(&ams),
                expected_cost: metrics::expected_cost_from_counts(&counts, k, combo.gain),
                expected_error_is: p_star.map(|p| metrics::expected_error(&is, p)),
                expected_error_ams: p_star.map(|p| metrics::expected_error(&ams, p)),
            }
        })
        .collect();
    CombinationSummary {
        schema_version: SCHEMA_VERSION,
        name: spec.name.clone(),
        combination: *combo,
        replicates: outcomes.len(),
        succeeded: ok.len(),
        p_star,
        failures,
        bands,
    }
}

/// Everything produced by one experiment.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub combinations: Vec<(CombinationSummary, Vec<RunOutcome>)>,
}

/// Runs every combination and replicate; does not touch the filesystem.
pub fn execute(spec: &ExperimentSpec, workers: usize) -> anyhow::Result<ExperimentOutput> {
    let problem = build_problem(&spec.problem)?;
    let p_star = match spec.p_star {
        Some(p) => Some(p),
        None => problem.oracle_p_star()?,
    };
    let mut combinations = Vec::new();
    for combo in spec.combinations()? {
        log::info!(
            "{}: N = {}, c = {:.4e}, gain = {}, bridge = {}, {} replicates",
            combo.label(),
            combo.n_particles,
            combo.c_threshold,
            combo.gain,
            combo.use_bridge,
            spec.replicates
        );
        let outcomes = run_replicates(spec, &combo, &problem, workers)?;
        let summary = summarize(spec, &combo, &outcomes, p_star);
        combinations.push((summary, outcomes));
    }
    Ok(ExperimentOutput { combinations })
}

/// Runs the experiment and writes traces and summaries under the output
/// directory. Returns the number of failed runs.
pub fn run_experiment(spec: &ExperimentSpec, workers: usize) -> anyhow::Result<usize> {
    let out = execute(spec, workers)?;
    crate::output::write_experiment(spec, &out)?;
    Ok(out.combinations.iter().map(|(s, _)| s.failures.len()).sum())
}
