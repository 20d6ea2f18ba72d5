//! Level-set preserving Metropolis kernel.
//!
//! Proposals are autoregressive in log coordinates,
//! `y' = mu + rho (y - mu) + sqrt(1 - rho^2) sigma g`, which is reversible
//! with respect to the reference distribution. Targeting the reference
//! restricted to `{S > l}` the Metropolis ratio is therefore the indicator
//! `S(x') > l` and no density is ever evaluated.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::ensemble::Particle;
use crate::exec;
use crate::math;
use crate::model::Surrogate;
use crate::reference::{ReferenceDistribution, State};
use crate::rng::RngStream;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KernelConfig {
    /// Correlation of the autoregressive proposal.
    pub rho: f64,
    pub target_accept: f64,
    /// Robbins-Monro gain; the step at sweep `i` is `adapt_rate / (1 + i)`.
    pub adapt_rate: f64,
    pub rho_min: f64,
    pub rho_max: f64,
    pub adapt: bool,
    /// Sweeps seen since the last reset.
    #[serde(skip)]
    pub sweep_index: u64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            rho: 0.8,
            target_accept: 0.5,
            adapt_rate: 2.0,
            rho_min: 0.01,
            rho_max: 0.999,
            adapt: true,
            sweep_index: 0,
        }
    }
}

impl KernelConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| v > 0.0 && v < 1.0;
        if !unit(self.rho_min) || !unit(self.rho_max) || self.rho_min >= self.rho_max {
            return Err(Error::Parameter(alloc::format!(
                "rho bounds ({}, {}) must satisfy 0 < rho_min < rho_max < 1",
                self.rho_min,
                self.rho_max
            )));
        }
        if !(self.rho >= 0.0 && self.rho <= 1.0) {
            return Err(Error::Parameter(alloc::format!(
                "rho {} not in [0, 1]",
                self.rho
            )));
        }
        if !unit(self.target_accept) {
            return Err(Error::Parameter(alloc::format!(
                "target acceptance {} not in (0, 1)",
                self.target_accept
            )));
        }
        if !(self.adapt_rate > 0.0) {
            return Err(Error::Parameter("adapt_rate must be > 0".into()));
        }
        Ok(())
    }

    /// Restarts the diminishing-adaptation schedule.
    pub fn reset(&mut self) {
        self.sweep_index = 0;
    }
}

/// Writes a proposal from `x` into `out` (same dimension).
pub fn propose_into(
    x: &State,
    out: &mut State,
    rho: f64,
    dist: &ReferenceDistribution,
    rng: &mut RngStream,
) {
    let scale = math::sqrt((1.0 - rho * rho).max(0.0)) * dist.sigma_log;
    for (o, &c) in out.coords_mut().iter_mut().zip(x.coords()) {
        let y = math::ln(c);
        let y_new = dist.mu_log + rho * (y - dist.mu_log) + scale * rng.normal();
        *o = math::exp(y_new);
    }
}

pub fn propose(
    x: &State,
    cfg: &KernelConfig,
    dist: &ReferenceDistribution,
    rng: &mut RngStream,
) -> State {
    let mut out = x.clone();
    propose_into(x, &mut out, cfg.rho, dist, rng);
    out
}

/// Log density of the proposal `x -> x_new` with respect to Lebesgue measure.
pub fn log_transition_density(
    x: &State,
    x_new: &State,
    rho: f64,
    dist: &ReferenceDistribution,
) -> f64 {
    let sd = math::sqrt(1.0 - rho * rho) * dist.sigma_log;
    let norm = math::ln(sd) + math::LN_SQRT_2PI;
    x.coords()
        .iter()
        .zip(x_new.coords())
        .map(|(&a, &b)| {
            let (ya, yb) = (math::ln(a), math::ln(b));
            let m = dist.mu_log + rho * (ya - dist.mu_log);
            let z = (yb - m) / sd;
            -yb - norm - 0.5 * z * z
        })
        .sum()
}

/// One Metropolis step restricted to `{S > level}`. `scratch` must have the
/// dimension of `x`. Returns whether the move was accepted.
#[allow(clippy::too_many_arguments)]
#[inline]
pub fn step<S: Surrogate>(
    x: &mut State,
    score: &mut f64,
    scratch: &mut State,
    level: f64,
    surrogate: &S,
    rho: f64,
    dist: &ReferenceDistribution,
    rng: &mut RngStream,
) -> Result<bool> {
    propose_into(x, scratch, rho, dist, rng);
    let s = surrogate.score(scratch)?;
    if s > level {
        core::mem::swap(x, scratch);
        *score = s;
        Ok(true)
    } else {
        Ok(false)
    }
}

/// `t` steps at fixed `cfg.rho`. Returns the final state, its score and the
/// number of accepted moves.
pub fn mutate<S: Surrogate>(
    x: &State,
    level: f64,
    surrogate: &S,
    t: usize,
    cfg: &KernelConfig,
    dist: &ReferenceDistribution,
    rng: &mut RngStream,
) -> Result<(State, f64, usize)> {
    let mut cur = x.clone();
    let mut score = surrogate.score(&cur)?;
    if !(score > level) {
        return Err(Error::Domain(alloc::format!(
            "mutation started outside the level set: score {score} <= level {level}"
        )));
    }
    let mut scratch = x.clone();
    let mut accepted = 0;
    for _ in 0..t {
        if step(
            &mut cur,
            &mut score,
            &mut scratch,
            level,
            surrogate,
            cfg.rho,
            dist,
            rng,
        )? {
            accepted += 1;
        }
    }
    Ok((cur, score, accepted))
}

/// Robbins-Monro update of `logit(1 - rho)` toward the target acceptance.
pub fn adapt(cfg: &KernelConfig, observed_accept_rate: f64) -> KernelConfig {
    let mut out = *cfg;
    let gain = cfg.adapt_rate / (1.0 + cfg.sweep_index as f64);
    let step = 1.0 - cfg.rho;
    let s = math::ln(step / (1.0 - step)) + gain * (observed_accept_rate - cfg.target_accept);
    let rho = 1.0 / (1.0 + math::exp(s));
    out.rho = rho.clamp(cfg.rho_min, cfg.rho_max);
    out.sweep_index = cfg.sweep_index + 1;
    out
}

/// Mutates the particles at `indices` for `t` sweeps targeting
/// `{S > level}`, then refreshes their error bounds.
///
/// Each particle gets its own stream forked from `rng` before any work
/// starts, so the result does not depend on how sweeps are scheduled. The
/// kernel is adapted between sweeps from the pooled acceptance rate.
/// Returns the number of surrogate evaluations spent.
#[allow(clippy::too_many_arguments)]
pub fn mutate_particles<S: Surrogate>(
    particles: &mut [Particle],
    indices: &[usize],
    level: f64,
    surrogate: &S,
    t: usize,
    kernel: &mut KernelConfig,
    dist: &ReferenceDistribution,
    rng: &mut RngStream,
) -> Result<u64> {
    if indices.is_empty() {
        return Ok(0);
    }
    struct Walker {
        state: State,
        score: f64,
        scratch: State,
        rng: RngStream,
        accepted: bool,
        error: Option<Error>,
    }
    let mut walkers: Vec<Walker> = indices
        .iter()
        .map(|&i| {
            let p = &particles[i];
            Walker {
                state: p.state.clone(),
                score: p.score,
                scratch: p.state.clone(),
                rng: rng.fork(),
                accepted: false,
                error: None,
            }
        })
        .collect();

    for _ in 0..t {
        let rho = kernel.rho;
        exec::for_each_mut(&mut walkers, |w| {
            if w.error.is_some() {
                return;
            }
            match step(
                &mut w.state,
                &mut w.score,
                &mut w.scratch,
                level,
                surrogate,
                rho,
                dist,
                &mut w.rng,
            ) {
                Ok(a) => w.accepted = a,
                Err(e) => w.error = Some(e),
            }
        });
        if let Some(w) = walkers.iter_mut().find(|w| w.error.is_some()) {
            return Err(w.error.take().unwrap());
        }
        if kernel.adapt {
            let acc = walkers.iter().filter(|w| w.accepted).count();
            *kernel = adapt(kernel, acc as f64 / walkers.len() as f64);
        }
    }

    let errs = exec::map(&walkers, |w| surrogate.evaluate(&w.state));
    for ((w, &i), ev) in walkers.into_iter().zip(indices).zip(errs) {
        let ev = ev?;
        particles[i] = Particle {
            state: w.state,
            score: ev.score,
            err: ev.err,
        };
    }
    Ok((t * indices.len() + indices.len()) as u64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Evaluation;

    #[derive(Clone)]
    struct LogScore;
    impl Surrogate for LogScore {
        fn score(&self, x: &State) -> Result<f64> {
            Ok(math::ln(x.x()))
        }
        fn evaluate(&self, x: &State) -> Result<Evaluation> {
            Ok(Evaluation {
                score: self.score(x)?,
                err: 0.0,
            })
        }
    }

    fn dist() -> ReferenceDistribution {
        ReferenceDistribution::new(1, 1.5, 1.5).unwrap()
    }

    #[test]
    fn rho_one_is_identity() {
        let x = State::scalar(2.5).unwrap();
        let cfg = KernelConfig {
            rho: 1.0,
            ..Default::default()
        };
        let y = propose(&x, &cfg, &dist(), &mut RngStream::new(1, 0));
        assert!((y.x() - 2.5).abs() < 1e-12);
    }

    #[test]
    fn stationary_moments() {
        let d = dist();
        for rho in [0.0, 0.5, 0.95] {
            let cfg = KernelConfig {
                rho,
                ..Default::default()
            };
            let mut rng = RngStream::new(3, 0);
            let mut x = State::scalar(100.0).unwrap();
            let n = 100_000;
            let (mut s1, mut s2) = (0.0, 0.0);
            for _ in 0..n {
                x = propose(&x, &cfg, &d, &mut rng);
                let y = x.x().ln();
                s1 += y;
                s2 += y * y;
            }
            let mean = s1 / n as f64;
            let sd = (s2 / n as f64 - mean * mean).sqrt();
            assert!(
                (mean - 1.5).abs() < 0.03 * 1.5 * 2.0,
                "rho {rho} mean {mean}"
            );
            assert!((sd - 1.5).abs() < 0.02 * 1.5 * 2.0, "rho {rho} sd {sd}");
        }
    }

    #[test]
    fn unconstrained_mutation_accepts_everything() {
        let d = dist();
        let x = State::scalar(1.0).unwrap();
        let (_, _, acc) = mutate(
            &x,
            f64::NEG_INFINITY,
            &LogScore,
            25,
            &KernelConfig::default(),
            &d,
            &mut RngStream::new(2, 0),
        )
        .unwrap();
        assert_eq!(acc, 25);
    }

    #[test]
    fn mutation_stays_in_level_set() {
        let d = dist();
        let x = State::scalar(20.0).unwrap();
        let (y, s, _) = mutate(
            &x,
            2.0,
            &LogScore,
            500,
            &KernelConfig::default(),
            &d,
            &mut RngStream::new(4, 0),
        )
        .unwrap();
        assert!(s > 2.0 && y.x().ln() > 2.0);
    }

    #[test]
    fn adaptation_direction() {
        let cfg = KernelConfig::default();
        let same = adapt(&cfg, cfg.target_accept);
        assert!((same.rho - cfg.rho).abs() < 1e-15);
        let mut c = cfg;
        let mut last = c.rho;
        for _ in 0..200 {
            c = adapt(&c, 1.0);
            assert!(c.rho <= last);
            last = c.rho;
        }
        assert!(c.rho < 0.2);
        assert!(c.rho >= c.rho_min);
        let mut c = cfg;
        for _ in 0..10_000 {
            c = adapt(&c, 0.0);
        }
        assert!(c.rho > cfg.rho && c.rho <= c.rho_max);
    }
}
