//! The outer loop: AMS to the critical level, snapshot selection, surrogate
//! enrichment, bridging or restart, and the importance-sampling estimator.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::ams::{self, AmsParams, StopReason};
use crate::bridge::{self, BridgePair, History};
use crate::ensemble::Ensemble;
use crate::math;
use crate::mcmc::{self, KernelConfig};
use crate::model::Problem;
use crate::reference::State;
use crate::rng::RngStream;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmsConfig {
    pub ams: AmsParams,
    #[serde(default)]
    pub kernel: KernelConfig,
    /// Number of true-score snapshots `K`.
    pub snapshot_budget: usize,
    /// Rare-event hits required before estimation starts.
    pub j0: usize,
    #[serde(with = "crate::serde_ext")]
    pub tau0: f64,
    /// Stop-update precision; negative disables the rule.
    pub epsilon_stop: f64,
    pub use_bridge: bool,
    /// Cost of one reduced evaluation in units of one true solve.
    pub gain: f64,
    pub seed: u64,
    #[serde(default)]
    pub history_capacity: Option<usize>,
}

impl ArmsConfig {
    pub fn validate(&self) -> Result<()> {
        self.ams.validate()?;
        self.kernel.validate()?;
        if self.snapshot_budget < 1 {
            return Err(Error::Parameter("snapshot budget K must be >= 1".into()));
        }
        if self.j0 < 1 {
            return Err(Error::Parameter("j0 must be >= 1".into()));
        }
        if !(self.tau0 >= 0.0) {
            return Err(Error::Parameter(format!(
                "tau0 = {} must be >= 0",
                self.tau0
            )));
        }
        if !(self.epsilon_stop < self.ams.c_threshold) {
            return Err(Error::Parameter(format!(
                "epsilon_stop = {} must be below c = {}",
                self.epsilon_stop, self.ams.c_threshold
            )));
        }
        if !(self.gain >= 0.0) {
            return Err(Error::Parameter("gain must be >= 0".into()));
        }
        Ok(())
    }

    pub fn warnings(&self) -> Vec<String> {
        let mut out = self.ams.warnings();
        if self.epsilon_stop >= 0.0 && !self.use_bridge {
            out.push(String::from(
                "stop-update rule without bridging spreads the estimator; it is ignored unless use_bridge = true",
            ));
        }
        out
    }
}

/// Learning-parameter schedule for snapshot selection.
pub trait TauSchedule {
    fn tau(&self, j_hits: usize, j0: usize, tau0: f64) -> f64;
}

/// `tau0` until `j0` hits, then 0.
#[derive(Debug, Clone, Copy, Default)]
pub struct TwoPhase;

impl TauSchedule for TwoPhase {
    fn tau(&self, j_hits: usize, j0: usize, tau0: f64) -> f64 {
        update_tau(j_hits, j0, tau0)
    }
}

pub fn update_tau(j_hits: usize, j0: usize, tau0: f64) -> f64 {
    if j_hits < j0 {
        tau0
    } else {
        0.0
    }
}

/// Index drawn with probability proportional to `exp(tau E_n)`.
/// `tau = inf` picks uniformly among the maximal errors.
pub fn sample_snapshot(ens: &Ensemble, tau: f64, rng: &mut RngStream) -> usize {
    let n = ens.len();
    let e_max = ens.errs().fold(f64::NEG_INFINITY, f64::max);
    if tau == f64::INFINITY {
        let argmax: Vec<usize> = (0..n).filter(|&i| ens.particles[i].err == e_max).collect();
        return argmax[rng.index(argmax.len())];
    }
    if tau == 0.0 || !e_max.is_finite() {
        return rng.index(n);
    }
    let weights: Vec<f64> = ens.errs().map(|e| math::exp(tau * (e - e_max))).collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.uniform() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    n - 1
}

/// Selection probabilities of [`sample_snapshot`].
pub fn snapshot_probabilities(ens: &Ensemble, tau: f64) -> Vec<f64> {
    let n = ens.len();
    let e_max = ens.errs().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = if tau == f64::INFINITY {
        ens.errs()
            .map(|e| if e == e_max { 1.0 } else { 0.0 })
            .collect()
    } else if tau == 0.0 {
        alloc::vec![1.0; n]
    } else {
        ens.errs().map(|e| math::exp(tau * (e - e_max))).collect()
    };
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

/// `true` unless the ensemble sits at `l_max` with empirical worst-case log
/// cost at most `epsilon`. A negative `epsilon` always updates.
pub fn should_update_surrogate(ens: &Ensemble, l_crit: f64, l_max: f64, epsilon: f64) -> bool {
    if epsilon < 0.0 || l_crit < l_max {
        return true;
    }
    let above = ens.count(|p| p.score > l_crit);
    let pessimistic = ens.count(|p| p.score - p.err > l_crit);
    if pessimistic == 0 {
        return true;
    }
    math::ln(above as f64 / pessimistic as f64) > epsilon
}

/// `z (1/N) #{S > l_max}`.
pub fn ams_byproduct_estimate(ens: &Ensemble, l_max: f64) -> f64 {
    ens.z() * ens.empirical_fraction(|p| p.score > l_max)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EstimatorState {
    pub h: usize,
    pub p_hat_is: f64,
    pub terms: Vec<f64>,
    pub j_hits: usize,
}

impl EstimatorState {
    pub fn sum(&self) -> f64 {
        self.terms.iter().sum()
    }
}

/// Appends the term `z 1{hit}` and refreshes the running mean.
pub fn update_is_estimate(est: &mut EstimatorState, z: f64, hit: bool) {
    est.terms.push(if hit { z } else { 0.0 });
    est.h = est.terms.len();
    est.p_hat_is = est.sum() / est.h as f64;
}

/// One row per outer iteration. Evaluation counters are cumulative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub k: usize,
    #[serde(with = "crate::serde_ext")]
    pub l_k: f64,
    pub ln_z: f64,
    #[serde(with = "crate::serde_ext")]
    pub c_try: f64,
    #[serde(with = "crate::serde_ext")]
    pub d_try: f64,
    pub stop_reason: StopReason,
    /// Parameter at which the true score was evaluated.
    pub snapshot: State,
    pub snapshot_score: f64,
    pub hit: bool,
    pub hit_count: usize,
    pub h: usize,
    pub p_hat_is: f64,
    pub p_hat_ams: f64,
    pub updated: bool,
    pub bridge: Option<BridgePair>,
    pub reduced_evals: u64,
    pub true_evals: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunResult {
    pub p_hat_is: f64,
    pub p_hat_ams: f64,
    pub estimator: EstimatorState,
    pub trace: Vec<TraceRecord>,
    pub surrogate_final_version: u64,
    /// Full solves spent building the initial surrogate (outside the budget).
    pub initial_true_evals: usize,
}

impl RunResult {
    /// Cumulative reduced evaluations after iteration `k` (1-based).
    pub fn reduced_evals_at(&self, k: usize) -> u64 {
        if k == 0 {
            return 0;
        }
        self.trace[(k - 1).min(self.trace.len() - 1)].reduced_evals
    }
}

/// A failed run with the trace recorded up to the failure.
#[derive(Debug, Clone)]
pub struct RunFailure {
    pub error: Error,
    pub trace: Vec<TraceRecord>,
}

impl core::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "{} (after {} iterations)", self.error, self.trace.len())
    }
}

/// Full run with the default two-phase learning schedule.
pub fn run_arms<P: Problem>(
    cfg: &ArmsConfig,
    problem: &P,
    rng: &mut RngStream,
) -> core::result::Result<RunResult, RunFailure> {
    run_arms_with(cfg, problem, &TwoPhase, rng, |_| {})
}

/// Full run with a custom schedule; `observer` sees every trace row as it
/// is produced.
pub fn run_arms_with<P: Problem, T: TauSchedule>(
    cfg: &ArmsConfig,
    problem: &P,
    schedule: &T,
    rng: &mut RngStream,
    mut observer: impl FnMut(&TraceRecord),
) -> core::result::Result<RunResult, RunFailure> {
    let mut trace = Vec::with_capacity(cfg.snapshot_budget);
    let res = run_inner(cfg, problem, schedule, rng, &mut trace, &mut observer);
    res.map_err(|error| RunFailure { error, trace })
}

fn run_inner<P: Problem, T: TauSchedule>(
    cfg: &ArmsConfig,
    problem: &P,
    schedule: &T,
    rng: &mut RngStream,
    trace: &mut Vec<TraceRecord>,
    observer: &mut impl FnMut(&TraceRecord),
) -> Result<RunResult> {
    cfg.validate()?;
    let dist = *problem.reference();
    let l_max = problem.l_max();
    let event = problem.event();
    let mut params = cfg.ams;
    params.l_max = l_max;
    let epsilon = if cfg.use_bridge {
        cfg.epsilon_stop
    } else {
        -1.0
    };

    let (mut surrogate, initial_true_evals) = problem.initial_surrogate(rng)?;
    let mut version: u64 = 1;
    let mut kernel = cfg.kernel;
    let mut ens = bridge::restart(&dist, &params, &surrogate, version, rng)?;
    let mut history: History<P::Surrogate> = History::new(cfg.history_capacity);
    if cfg.use_bridge {
        history.push(0, &ens, &surrogate);
    }

    let mut est = EstimatorState::default();
    let mut tau = schedule.tau(0, cfg.j0, cfg.tau0);
    let mut reduced_evals: u64 = 0;
    let mut ens_evals_seen: u64 = 0;
    let mut true_evals: u64 = 0;
    let mut p_hat_ams = 0.0;

    for k in 1..=cfg.snapshot_budget {
        let outcome =
            ams::ams_to_critical_level(&mut ens, &surrogate, &dist, &params, &mut kernel, rng)?;
        let l_crit = outcome.l_crit;
        p_hat_ams = ams_byproduct_estimate(&ens, l_max);
        let z = ens.z();

        let idx = sample_snapshot(&ens, tau, rng);
        let x = ens.particles[idx].state.clone();
        let snap = problem.solve(&x)?;
        let s_star = problem.snapshot_score(&snap);
        true_evals += 1;

        let mut updated = None;
        if should_update_surrogate(&ens, l_crit, l_max, epsilon) {
            updated = problem.enrich(&surrogate, &x, &snap)?;
        }

        // Terms start with the first snapshot drawn after the j0-th hit, so
        // the start index depends only on past snapshots.
        let estimating = est.j_hits >= cfg.j0;
        let hit = event.hit(s_star, l_max);
        if hit {
            est.j_hits += 1;
        }
        tau = schedule.tau(est.j_hits, cfg.j0, cfg.tau0);
        if estimating {
            update_is_estimate(&mut est, z, hit);
        }

        if cfg.use_bridge {
            history.push(k, &ens, &surrogate);
        }
        reduced_evals += ens.eval_count - ens_evals_seen;
        ens_evals_seen = ens.eval_count;

        let (c_try, d_try) = outcome
            .last_check
            .map(|c| (c.c_try, c.d_try))
            .unwrap_or((f64::NAN, f64::NAN));
        let mut record = TraceRecord {
            k,
            l_k: l_crit,
            ln_z: ens.ln_z,
            c_try,
            d_try,
            stop_reason: outcome.stop_reason,
            snapshot: x,
            snapshot_score: s_star,
            hit,
            hit_count: est.j_hits,
            h: est.h,
            p_hat_is: est.p_hat_is,
            p_hat_ams,
            updated: updated.is_some(),
            bridge: None,
            reduced_evals,
            true_evals,
        };

        let last = k == cfg.snapshot_budget;
        if let Some(new) = updated {
            version += 1;
            surrogate = new;
            if !last {
                let mut bridged = None;
                if cfg.use_bridge {
                    let mut evals = 0;
                    let found = bridge::find_bridge_pair(
                        &mut history,
                        &surrogate,
                        version,
                        &params,
                        &mut evals,
                    )?;
                    if let Some(cand) = found {
                        let new_ens = bridge::bridge_step(
                            &history,
                            &cand,
                            &surrogate,
                            version,
                            &params,
                            &dist,
                            &mut kernel,
                            rng,
                        )?;
                        bridged = Some((cand.pair, new_ens));
                    }
                    reduced_evals += evals;
                }
                match bridged {
                    Some((pair, new_ens)) => {
                        record.bridge = Some(pair);
                        ens = new_ens;
                    }
                    None => {
                        kernel.reset();
                        ens = bridge::restart(&dist, &params, &surrogate, version, rng)?;
                    }
                }
                reduced_evals += ens.eval_count;
                ens_evals_seen = ens.eval_count;
                record.reduced_evals = reduced_evals;
            }
        } else if !last {
            // Same surrogate: keep level and z, but move the particles so
            // the next snapshot is not drawn from the same points.
            let all: Vec<usize> = (0..ens.len()).collect();
            let level = ens.level;
            ens.eval_count += mcmc::mutate_particles(
                &mut ens.particles,
                &all,
                level,
                &surrogate,
                params.t_mutations,
                &mut kernel,
                &dist,
                rng,
            )?;
        }
        observer(&record);
        trace.push(record);
    }

    Ok(RunResult {
        p_hat_is: est.p_hat_is,
        p_hat_ams,
        estimator: est,
        trace: core::mem::take(trace),
        surrogate_final_version: version,
        initial_true_evals,
    })
}
