//! Archive of past ensembles and the bridging search.
//!
//! After a surrogate update, instead of restarting from the reference
//! distribution, a recorded ensemble is pushed through a single AMS step
//! under the new surrogate. The search looks for the newest entry and the
//! highest level at which the kill fraction stays below `theta`, the
//! entropic checks pass, and no archived state contradicts the support
//! inclusion `{S_new > l'} ⊆ {S_entry > l_entry}`.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::ams::{self, AmsParams};
use crate::ensemble::{Ensemble, Particle};
use crate::exec;
use crate::math;
use crate::mcmc::KernelConfig;
use crate::model::{Evaluation, Surrogate};
use crate::reference::{ReferenceDistribution, State};
use crate::rng::RngStream;
use crate::{Error, Result};

/// Cached score vectors per entry; bridging calls only ever need the two
/// most recent surrogate versions.
const CACHED_VERSIONS: usize = 2;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound(serialize = "", deserialize = ""))]
pub struct HistoryEntry<S> {
    /// Outer iteration that produced the entry; 0 is the initial sample.
    pub k: usize,
    pub version: u64,
    #[serde(skip)]
    pub surrogate: Option<S>,
    pub states: Vec<State>,
    #[serde(with = "crate::serde_ext")]
    pub level: f64,
    pub ln_z: f64,
    #[serde(skip)]
    cache: Vec<(u64, Vec<f64>)>,
}

impl<S: Surrogate> HistoryEntry<S> {
    fn cached(&self, version: u64) -> Option<&[f64]> {
        self.cache
            .iter()
            .find(|(v, _)| *v == version)
            .map(|(_, s)| s.as_slice())
    }

    fn store(&mut self, version: u64, scores: Vec<f64>) {
        if self.cached(version).is_some() {
            return;
        }
        if self.cache.len() >= CACHED_VERSIONS {
            self.cache.remove(0);
        }
        self.cache.push((version, scores));
    }
}

/// Append-only archive. Entry 0 is the initial reference sample (level
/// `-inf`); it is used as evidence for the inclusion check but never as a
/// bridging source.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound(serialize = "", deserialize = ""))]
pub struct History<S> {
    pub entries: Vec<HistoryEntry<S>>,
    /// Maximum number of bridging sources kept; the oldest are evicted.
    pub capacity: Option<usize>,
}

impl<S: Surrogate> Default for History<S> {
    fn default() -> Self {
        Self::new(None)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BridgePair {
    /// Iteration of the source entry.
    pub k_b: usize,
    #[serde(with = "crate::serde_ext")]
    pub l_b: f64,
    /// Number of source particles with new score `<= l_b`.
    pub m_tilde: usize,
}

/// Result of a successful search: the pair plus the new evaluations of the
/// source states, reused by [`bridge_step`].
#[derive(Debug, Clone)]
pub struct BridgeCandidate {
    pub pair: BridgePair,
    pub entry_index: usize,
    pub evaluations: Vec<Evaluation>,
}

impl<S: Surrogate> History<S> {
    pub fn new(capacity: Option<usize>) -> Self {
        Self {
            entries: Vec::new(),
            capacity,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Records `ens` as produced under `surrogate` at iteration `k`.
    pub fn push(&mut self, k: usize, ens: &Ensemble, surrogate: &S) {
        let scores: Vec<f64> = ens.scores().collect();
        let mut entry = HistoryEntry {
            k,
            version: ens.surrogate_version,
            surrogate: Some(surrogate.archived()),
            states: ens.states(),
            level: ens.level,
            ln_z: ens.ln_z,
            cache: Vec::new(),
        };
        entry.store(ens.surrogate_version, scores);
        self.entries.push(entry);
        if let Some(cap) = self.capacity {
            while self.entries.len() > cap + 1 {
                self.entries.remove(1);
            }
        }
    }

    /// Scores of entry `i` under `surrogate` (identified by `version`).
    fn scores_of(
        &mut self,
        i: usize,
        surrogate: &S,
        version: u64,
        evals: &mut u64,
    ) -> Result<&[f64]> {
        if self.entries[i].cached(version).is_none() {
            let scores = exec::map(&self.entries[i].states, |x| surrogate.score(x))
                .into_iter()
                .collect::<Result<Vec<_>>>()?;
            *evals += scores.len() as u64;
            self.entries[i].store(version, scores);
        }
        Ok(self.entries[i].cached(version).unwrap())
    }

    /// Largest new score among archived states (entries before `source`)
    /// that lie outside the source's support. Inclusion holds at `l'` iff
    /// this value is `<= l'`.
    fn max_violating_score(
        &mut self,
        source: usize,
        new: &S,
        new_version: u64,
        evals: &mut u64,
    ) -> Result<f64> {
        let src_version = self.entries[source].version;
        let src_level = self.entries[source].level;
        let src_surrogate = self.entries[source]
            .surrogate
            .clone()
            .ok_or_else(|| Error::Infeasible("archived entry lost its surrogate".into()))?;
        let mut worst = f64::NEG_INFINITY;
        for i in 0..source {
            let old: Vec<f64> = self
                .scores_of(i, &src_surrogate, src_version, evals)?
                .to_vec();
            let fresh = self.scores_of(i, new, new_version, evals)?;
            for (o, f) in old.iter().zip(fresh) {
                if !(*o > src_level) && *f > worst {
                    worst = *f;
                }
            }
        }
        Ok(worst)
    }
}

/// `true` iff every state archived before entry `source` has new score
/// `<= l_prime`, or lies inside the source's support and above `l_prime`.
pub fn inclusion_check<S: Surrogate>(
    history: &mut History<S>,
    source: usize,
    l_prime: f64,
    new: &S,
    new_version: u64,
) -> Result<bool> {
    let mut evals = 0;
    Ok(history.max_violating_score(source, new, new_version, &mut evals)? <= l_prime)
}

/// Lexicographic search for the newest source entry and highest feasible
/// level. Returns `None` when no pair is feasible (the caller restarts).
/// `evals` accumulates the surrogate evaluations spent.
pub fn find_bridge_pair<S: Surrogate>(
    history: &mut History<S>,
    new: &S,
    new_version: u64,
    params: &AmsParams,
    evals: &mut u64,
) -> Result<Option<BridgeCandidate>> {
    let m_max = params.m();
    let l_max = params.l_max;
    for source in (1..history.len()).rev() {
        let states = &history.entries[source].states;
        let n = states.len();
        let evaluations = exec::map(states, |x| new.evaluate(x))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        *evals += n as u64;
        history.entries[source].store(new_version, evaluations.iter().map(|e| e.score).collect());

        let optimistic = evaluations
            .iter()
            .filter(|e| e.score + e.err > l_max)
            .count();
        if optimistic == 0 {
            continue;
        }
        let mut sorted: Vec<f64> = evaluations.iter().map(|e| e.score).collect();
        sorted.sort_unstable_by(f64::total_cmp);
        let mut violation: Option<f64> = None;
        for m_tilde in (1..=m_max.min(n - 1)).rev() {
            let l_prime = sorted[m_tilde - 1].min(l_max);
            let below = sorted.partition_point(|&s| s <= l_prime);
            if below > m_max {
                continue;
            }
            let above = n - below;
            let pessimistic = evaluations
                .iter()
                .filter(|e| e.score - e.err > l_prime)
                .count();
            let c_try = if pessimistic == 0 {
                f64::INFINITY
            } else {
                math::ln(above as f64 / pessimistic as f64)
            };
            if !(c_try <= params.c_threshold) {
                continue;
            }
            let worst = match violation {
                Some(v) => v,
                None => {
                    let v = history.max_violating_score(source, new, new_version, evals)?;
                    violation = Some(v);
                    v
                }
            };
            if worst <= l_prime {
                let entry = &history.entries[source];
                log::debug!(
                    "bridge from k = {} at level {l_prime} replacing {below}",
                    entry.k
                );
                return Ok(Some(BridgeCandidate {
                    pair: BridgePair {
                        k_b: entry.k,
                        l_b: l_prime,
                        m_tilde: below,
                    },
                    entry_index: source,
                    evaluations,
                }));
            }
        }
    }
    Ok(None)
}

/// Moves the source ensemble of `candidate` to the new surrogate at level
/// `l_b`: `z` is multiplied by the surviving fraction and the particles at or
/// below `l_b` are replaced by mutated duplicates of the survivors.
#[allow(clippy::too_many_arguments)]
pub fn bridge_step<S: Surrogate>(
    history: &History<S>,
    candidate: &BridgeCandidate,
    new: &S,
    new_version: u64,
    params: &AmsParams,
    dist: &ReferenceDistribution,
    kernel: &mut KernelConfig,
    rng: &mut RngStream,
) -> Result<Ensemble> {
    let entry = &history.entries[candidate.entry_index];
    let particles = entry
        .states
        .iter()
        .zip(&candidate.evaluations)
        .map(|(x, e)| Particle {
            state: x.clone(),
            score: e.score,
            err: e.err,
        })
        .collect();
    let mut ens = Ensemble {
        particles,
        level: entry.level,
        ln_z: entry.ln_z,
        surrogate_version: new_version,
        eval_count: 0,
    };
    let l_b = candidate.pair.l_b;
    if ens.count(|p| p.score <= l_b) == 0 {
        ens.level = l_b;
        return Ok(ens);
    }
    ams::kill_and_resample(&mut ens, l_b, new, dist, params.t_mutations, kernel, rng).map_err(
        |e| match e {
            Error::Extinction { .. } => {
                Error::Infeasible("bridging level kills every archived particle".into())
            }
            other => other,
        },
    )?;
    Ok(ens)
}

/// Fresh ensemble of reference samples at level `-inf` with `z = 1`.
pub fn restart<S: Surrogate>(
    dist: &ReferenceDistribution,
    params: &AmsParams,
    surrogate: &S,
    version: u64,
    rng: &mut RngStream,
) -> Result<Ensemble> {
    Ensemble::from_reference(dist, params.n_particles, surrogate, version, rng)
}
