//! Adaptive multilevel splitting driven to the entropic critical level.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::ensemble::Ensemble;
use crate::math;
use crate::mcmc::{self, KernelConfig};
use crate::model::Surrogate;
use crate::reference::ReferenceDistribution;
use crate::rng::RngStream;
use crate::{Error, Result};

/// Whether level increases are gated by the entropic checks. `Disabled`
/// gives plain AMS up to `l_max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckPolicy {
    #[default]
    Entropic,
    Disabled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmsParams {
    pub n_particles: usize,
    /// Fraction `theta` of particles killed per level, `M = floor(theta N)`.
    pub kill_fraction: f64,
    #[serde(with = "crate::serde_ext")]
    pub l_max: f64,
    /// Worst-case log-cost threshold `c`.
    #[serde(with = "crate::serde_ext")]
    pub c_threshold: f64,
    pub t_mutations: usize,
    #[serde(default)]
    pub checks: CheckPolicy,
}

impl AmsParams {
    pub fn m(&self) -> usize {
        libm::floor(self.kill_fraction * self.n_particles as f64) as usize
    }

    /// Hard errors only; see [`AmsParams::warnings`] for soft issues.
    pub fn validate(&self) -> Result<()> {
        if self.n_particles < 2 {
            return Err(Error::Parameter(format!(
                "need at least 2 particles, got {}",
                self.n_particles
            )));
        }
        if !(self.kill_fraction > 0.0 && self.kill_fraction < 1.0) {
            return Err(Error::Parameter(format!(
                "kill fraction {} not in (0, 1)",
                self.kill_fraction
            )));
        }
        let m = self.m();
        if m < 1 {
            return Err(Error::Parameter(format!(
                "kill fraction {} times N = {} kills no particle",
                self.kill_fraction, self.n_particles
            )));
        }
        if m >= self.n_particles {
            return Err(Error::Parameter("M must be smaller than N".into()));
        }
        if !(self.c_threshold > 0.0) {
            return Err(Error::Parameter(format!(
                "cost threshold {} must be > 0",
                self.c_threshold
            )));
        }
        if self.t_mutations < 1 {
            return Err(Error::Parameter("need at least one mutation step".into()));
        }
        if self.l_max.is_nan() {
            return Err(Error::Parameter("l_max is NaN".into()));
        }
        Ok(())
    }

    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Ok(cm) = c_min(self.m(), self.n_particles) {
            if self.c_threshold < cm && self.checks == CheckPolicy::Entropic {
                out.push(format!(
                    "c = {} is below c_min(M, N) = {cm}: every level increase with a nonzero error bound will be refused",
                    self.c_threshold
                ));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropicCheck {
    pub c_try: f64,
    #[serde(with = "crate::serde_ext")]
    pub d_try: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    CostExceeded,
    DominationLost,
    ReachedLmax,
}

/// One accepted level increase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelRecord {
    pub level: f64,
    pub n_killed: usize,
    pub ln_z: f64,
    pub c_try: f64,
    #[serde(with = "crate::serde_ext")]
    pub d_try: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmsOutcome {
    #[serde(with = "crate::serde_ext")]
    pub l_crit: f64,
    pub stop_reason: StopReason,
    pub levels: Vec<LevelRecord>,
    /// The check that ended the run (the refused proposal, or the final
    /// accepted one when `l_max` was reached). `None` if the ensemble was
    /// already at `l_max`.
    pub last_check: Option<EntropicCheck>,
}

/// `ln((N - M) / (N - M - 1))`: the smallest positive value the empirical
/// worst-case log cost can take.
pub fn c_min(m: usize, n: usize) -> Result<f64> {
    if n < m + 2 {
        return Err(Error::Parameter(format!(
            "c_min needs N - M >= 2 (N = {n}, M = {m})"
        )));
    }
    Ok(ln_ratio(n - m, n - m - 1))
}

#[inline]
fn ln_ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        f64::INFINITY
    } else {
        math::ln(num as f64 / den as f64)
    }
}

/// `min(l_M, l_max)` with `l_M` the `m`-th smallest score (1-indexed).
pub fn next_level(ens: &Ensemble, m: usize, l_max: f64) -> Result<f64> {
    let mut scores: Vec<f64> = ens.scores().collect();
    next_level_of(&mut scores, m, l_max)
}

pub(crate) fn next_level_of(scores: &mut [f64], m: usize, l_max: f64) -> Result<f64> {
    if m == 0 || m >= scores.len() {
        return Err(Error::Parameter(format!(
            "order statistic M = {m} needs 1 <= M < N = {}",
            scores.len()
        )));
    }
    let (_, lm, _) = scores.select_nth_unstable_by(m - 1, f64::total_cmp);
    Ok(lm.min(l_max))
}

/// Multiplies `z` by the surviving fraction after killing every particle
/// with score `<= l_next`. Returns the new `z` and the kill count.
pub fn update_normalization(z: f64, ens: &Ensemble, l_next: f64) -> Result<(f64, usize)> {
    let n = ens.len();
    let killed = killed_count(ens, l_next)?;
    Ok((z * (1.0 - killed as f64 / n as f64), killed))
}

fn killed_count(ens: &Ensemble, l_next: f64) -> Result<usize> {
    let n = ens.len();
    let killed = ens.count(|p| p.score <= l_next);
    if killed == n {
        return Err(Error::Extinction {
            level: l_next,
            killed,
            n,
        });
    }
    Ok(killed)
}

/// Empirical worst-case log cost and domination check for a proposed level.
pub fn entropic_checks(ens: &Ensemble, l_next: f64, l_max: f64, c: f64) -> Result<EntropicCheck> {
    let mut above = 0;
    let mut pessimistic = 0;
    let mut optimistic = 0;
    for p in &ens.particles {
        if p.score > l_next {
            above += 1;
        }
        if p.score - p.err > l_next {
            pessimistic += 1;
        }
        if p.score + p.err > l_max {
            optimistic += 1;
        }
    }
    if above == 0 {
        return Err(Error::Extinction {
            level: l_next,
            killed: ens.len(),
            n: ens.len(),
        });
    }
    let c_try = ln_ratio(above, pessimistic);
    let d_try = ln_ratio(above, optimistic);
    Ok(EntropicCheck {
        c_try,
        d_try,
        passed: c_try <= c && d_try.is_finite(),
    })
}

/// Kills every particle with score `<= level`, replaces each by a copy of a
/// uniformly chosen survivor and mutates the copies toward `{S > level}`.
/// Updates `ln_z`, `level` and `eval_count`; returns the kill count.
#[allow(clippy::too_many_arguments)]
pub(crate) fn kill_and_resample<S: Surrogate>(
    ens: &mut Ensemble,
    level: f64,
    surrogate: &S,
    dist: &ReferenceDistribution,
    t: usize,
    kernel: &mut KernelConfig,
    rng: &mut RngStream,
) -> Result<usize> {
    let n = ens.len();
    let killed = killed_count(ens, level)?;
    let mut survivors = Vec::with_capacity(n - killed);
    let mut dead = Vec::with_capacity(killed);
    for (i, p) in ens.particles.iter().enumerate() {
        if p.score <= level {
            dead.push(i);
        } else {
            survivors.push(i);
        }
    }
    for &i in &dead {
        let parent = survivors[rng.index(survivors.len())];
        ens.particles[i] = ens.particles[parent].clone();
    }
    let evals = mcmc::mutate_particles(
        &mut ens.particles,
        &dead,
        level,
        surrogate,
        t,
        kernel,
        dist,
        rng,
    )?;
    ens.eval_count += evals;
    ens.ln_z += math::ln1p(-(killed as f64) / n as f64);
    ens.level = level;
    Ok(killed)
}

/// Runs AMS from the ensemble's current level until a proposed increase
/// fails the entropic checks or `l_max` is reached.
///
/// The ensemble is left at the last accepted level. When the proposed level
/// equals `l_max` and the checks pass, the step is executed so the result
/// targets the proposal at `l_max`.
pub fn ams_to_critical_level<S: Surrogate>(
    ens: &mut Ensemble,
    surrogate: &S,
    dist: &ReferenceDistribution,
    params: &AmsParams,
    kernel: &mut KernelConfig,
    rng: &mut RngStream,
) -> Result<AmsOutcome> {
    let m = params.m();
    let l_max = params.l_max;
    let mut levels = Vec::new();
    let mut scratch: Vec<f64> = Vec::with_capacity(ens.len());
    if ens.level >= l_max {
        return Ok(AmsOutcome {
            l_crit: ens.level,
            stop_reason: StopReason::ReachedLmax,
            levels,
            last_check: None,
        });
    }
    loop {
        scratch.clear();
        scratch.extend(ens.scores());
        let l_next = next_level_of(&mut scratch, m, l_max)?;
        let mut check = entropic_checks(ens, l_next, l_max, params.c_threshold)?;
        if params.checks == CheckPolicy::Disabled {
            check.passed = true;
        }
        if !check.passed {
            let reason = if check.c_try > params.c_threshold {
                StopReason::CostExceeded
            } else {
                StopReason::DominationLost
            };
            log::debug!(
                "critical level {} ({reason:?}, c_try {}, d_try {})",
                ens.level,
                check.c_try,
                check.d_try
            );
            return Ok(AmsOutcome {
                l_crit: ens.level,
                stop_reason: reason,
                levels,
                last_check: Some(check),
            });
        }
        let n_killed = kill_and_resample(
            ens,
            l_next,
            surrogate,
            dist,
            params.t_mutations,
            kernel,
            rng,
        )?;
        log::trace!("level {l_next}: killed {n_killed}, ln z {}", ens.ln_z);
        levels.push(LevelRecord {
            level: l_next,
            n_killed,
            ln_z: ens.ln_z,
            c_try: check.c_try,
            d_try: check.d_try,
        });
        if l_next >= l_max {
            return Ok(AmsOutcome {
                l_crit: ens.level,
                stop_reason: StopReason::ReachedLmax,
                levels,
                last_check: Some(check),
            });
        }
    }
}
