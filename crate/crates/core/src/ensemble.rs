//! Particle populations.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::exec;
use crate::math;
use crate::model::Surrogate;
use crate::reference::{ReferenceDistribution, State};
use crate::rng::RngStream;
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub state: State,
    pub score: f64,
    pub err: f64,
}

/// `N` particles approximating the proposal at `level`, with the running
/// normalization estimate kept in log space.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Ensemble {
    pub particles: Vec<Particle>,
    #[serde(with = "crate::serde_ext")]
    pub level: f64,
    pub ln_z: f64,
    pub surrogate_version: u64,
    /// Reduced-score evaluations spent on this ensemble so far.
    pub eval_count: u64,
}

impl Ensemble {
    /// Draws `n` reference samples and scores them: level `-inf`, `z = 1`.
    pub fn from_reference<S: Surrogate>(
        dist: &ReferenceDistribution,
        n: usize,
        surrogate: &S,
        version: u64,
        rng: &mut RngStream,
    ) -> Result<Self> {
        let states: Vec<State> = (0..n).map(|_| dist.sample(rng)).collect();
        Self::from_states(states, f64::NEG_INFINITY, 0.0, surrogate, version)
    }

    /// Scores `states` with `surrogate` and wraps them.
    pub fn from_states<S: Surrogate>(
        states: Vec<State>,
        level: f64,
        ln_z: f64,
        surrogate: &S,
        version: u64,
    ) -> Result<Self> {
        let evals = exec::map(&states, |x| surrogate.evaluate(x));
        let n = states.len();
        let particles = states
            .into_iter()
            .zip(evals)
            .map(|(state, ev)| {
                ev.map(|ev| Particle {
                    state,
                    score: ev.score,
                    err: ev.err,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            particles,
            level,
            ln_z,
            surrogate_version: version,
            eval_count: n as u64,
        })
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn z(&self) -> f64 {
        math::exp(self.ln_z)
    }

    pub fn scores(&self) -> impl Iterator<Item = f64> + '_ {
        self.particles.iter().map(|p| p.score)
    }

    pub fn errs(&self) -> impl Iterator<Item = f64> + '_ {
        self.particles.iter().map(|p| p.err)
    }

    pub fn states(&self) -> Vec<State> {
        self.particles.iter().map(|p| p.state.clone()).collect()
    }

    pub fn count(&self, pred: impl Fn(&Particle) -> bool) -> usize {
        self.particles.iter().filter(|p| pred(p)).count()
    }

    /// `(1/N) #{n : pred(particle_n)}`.
    pub fn empirical_fraction(&self, pred: impl Fn(&Particle) -> bool) -> f64 {
        empirical_fraction(self, pred)
    }

    pub fn min_score(&self) -> f64 {
        self.scores().fold(f64::INFINITY, f64::min)
    }
}

pub fn empirical_fraction(ens: &Ensemble, pred: impl Fn(&Particle) -> bool) -> f64 {
    if ens.is_empty() {
        return 0.0;
    }
    ens.count(pred) as f64 / ens.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn with_scores(scores: &[f64]) -> Ensemble {
        Ensemble {
            particles: scores
                .iter()
                .map(|&s| Particle {
                    state: State::scalar(1.0).unwrap(),
                    score: s,
                    err: 0.0,
                })
                .collect(),
            level: f64::NEG_INFINITY,
            ln_z: 0.0,
            surrogate_version: 1,
            eval_count: 0,
        }
    }

    #[test]
    fn fraction_examples() {
        let ens = with_scores(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(ens.empirical_fraction(|_| true), 1.0);
        assert_eq!(ens.empirical_fraction(|p| p.score > 2.0), 0.5);
        assert_eq!(ens.empirical_fraction(|_| false), 0.0);
        assert_eq!(with_scores(&[]).empirical_fraction(|_| true), 0.0);
    }

    #[test]
    fn fresh_ensemble_has_unit_z() {
        let ens = with_scores(&vec![0.5; 3]);
        assert_eq!(ens.z(), 1.0);
        assert_eq!(ens.min_score(), 0.5);
    }
}
