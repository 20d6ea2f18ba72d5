//! Finite-state problems with exact expectations.
//!
//! Every integral becomes a weighted sum over cells, so the idealized
//! algorithm can be run with exact normalizations, exact entropies and
//! exact sampling. This is the reference the particle methods are checked
//! against.

use alloc::format;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::driver::update_tau;
use crate::math;
use crate::model::EventRule;
use crate::rng::RngStream;
use crate::{Error, Result};

/// Reduced score and error bound per cell for one surrogate version.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateTable {
    pub s_red: Vec<f64>,
    pub e_red: Vec<f64>,
}

/// A finite probability space with a true score and a family of surrogate
/// versions. `update[v][i]` is the version reached from version `v` after
/// a snapshot in cell `i` (equal to `v` when the snapshot changes nothing).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteProblem {
    pub weights: Vec<f64>,
    pub s_true: Vec<f64>,
    pub versions: Vec<SurrogateTable>,
    pub update: Vec<Vec<usize>>,
    #[serde(with = "crate::serde_ext")]
    pub l_max: f64,
    #[serde(default)]
    pub event: EventRule,
}

impl DiscreteProblem {
    pub fn cells(&self) -> usize {
        self.weights.len()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.cells();
        if m == 0 {
            return Err(Error::Parameter("problem has no cells".into()));
        }
        if self.weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::Parameter("negative or NaN weight".into()));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Parameter(format!("weights sum to {total}, not 1")));
        }
        if self.s_true.len() != m {
            return Err(Error::Parameter("s_true length mismatch".into()));
        }
        if self.versions.is_empty() || self.update.len() != self.versions.len() {
            return Err(Error::Parameter(
                "need one update row per surrogate version".into(),
            ));
        }
        for (v, t) in self.versions.iter().enumerate() {
            if t.s_red.len() != m || t.e_red.len() != m {
                return Err(Error::Parameter(format!(
                    "version {v}: table length mismatch"
                )));
            }
            for i in 0..m {
                let gap = (t.s_red[i] - self.s_true[i]).abs();
                if !(t.e_red[i] >= gap) {
                    return Err(Error::Parameter(format!(
                        "version {v}, cell {i}: bound {} below actual error {gap}",
                        t.e_red[i]
                    )));
                }
            }
            if self.update[v].len() != m || self.update[v].iter().any(|&u| u >= self.versions.len())
            {
                return Err(Error::Parameter(format!("version {v}: invalid update row")));
            }
        }
        Ok(())
    }

    pub fn table(&self, version: usize) -> &SurrogateTable {
        &self.versions[version]
    }

    /// Exact rare-event probability `pi(S* > l_max)` (or `>=`, per `event`).
    pub fn p_star(&self) -> f64 {
        self.weights
            .iter()
            .zip(&self.s_true)
            .filter(|(_, s)| self.event.hit(**s, self.l_max))
            .map(|(w, _)| w)
            .sum()
    }

    fn mass(&self, pred: impl Fn(usize) -> bool) -> f64 {
        (0..self.cells())
            .filter(|&i| pred(i))
            .map(|i| self.weights[i])
            .sum()
    }

    /// `true` iff every positive-weight cell in `a` is also in `b`.
    fn nested(&self, a: impl Fn(usize) -> bool, b: impl Fn(usize) -> bool) -> bool {
        (0..self.cells()).all(|i| self.weights[i] == 0.0 || !a(i) || b(i))
    }
}

/// `sum_i w_i 1{table_i > l}`.
pub fn exact_tail(weights: &[f64], table: &[f64], l: f64) -> f64 {
    weights
        .iter()
        .zip(table)
        .filter(|(_, t)| **t > l)
        .map(|(w, _)| w)
        .sum()
}

/// Relative entropy `Ent(eta_A | mu_B)` of the conditionals of `weights` on
/// the cell sets `a` (target) and `b` (proposal), summed cell by cell.
/// Infinite when `a` is not contained in `b` or has zero mass.
pub fn indicator_entropy(weights: &[f64], a: &[bool], b: &[bool]) -> f64 {
    let (za, zb) = masses(weights, a, b);
    if za == 0.0 || !contained(weights, a, b) {
        return f64::INFINITY;
    }
    let mut ent = 0.0;
    for i in 0..weights.len() {
        if a[i] && weights[i] > 0.0 {
            let eta = weights[i] / za;
            let mu = weights[i] / zb;
            ent += eta * math::ln(eta / mu);
        }
    }
    ent
}

/// Order-2 Rényi divergence `ln E_mu[(d eta / d mu)^2]` of the same pair.
/// For nested indicator conditionals it coincides with the relative entropy.
pub fn indicator_entropy2(weights: &[f64], a: &[bool], b: &[bool]) -> f64 {
    let (za, zb) = masses(weights, a, b);
    if za == 0.0 || !contained(weights, a, b) {
        return f64::INFINITY;
    }
    let mut second = 0.0;
    for i in 0..weights.len() {
        if b[i] && weights[i] > 0.0 {
            let mu = weights[i] / zb;
            let ratio = if a[i] { zb / za } else { 0.0 };
            second += mu * ratio * ratio;
        }
    }
    math::ln(second)
}

fn masses(weights: &[f64], a: &[bool], b: &[bool]) -> (f64, f64) {
    let mut za = 0.0;
    let mut zb = 0.0;
    for i in 0..weights.len() {
        if a[i] {
            za += weights[i];
        }
        if b[i] {
            zb += weights[i];
        }
    }
    (za, zb)
}

fn contained(weights: &[f64], a: &[bool], b: &[bool]) -> bool {
    (0..weights.len()).all(|i| weights[i] == 0.0 || !a[i] || b[i])
}

/// Worst-case log cost at level `l`: `Ent` of the pessimistic target
/// `{S - E > l}` relative to the proposal `{S > l}`.
pub fn exact_entropy(p: &DiscreteProblem, version: usize, l: f64) -> f64 {
    let (a, b) = pessimistic_sets(p, version, l);
    indicator_entropy(&p.weights, &a, &b)
}

/// Same quantity through the order-2 divergence.
pub fn exact_entropy2(p: &DiscreteProblem, version: usize, l: f64) -> f64 {
    let (a, b) = pessimistic_sets(p, version, l);
    indicator_entropy2(&p.weights, &a, &b)
}

fn pessimistic_sets(p: &DiscreteProblem, version: usize, l: f64) -> (Vec<bool>, Vec<bool>) {
    let t = p.table(version);
    let a = (0..p.cells())
        .map(|i| t.s_red[i] - t.e_red[i] > l)
        .collect();
    let b = (0..p.cells()).map(|i| t.s_red[i] > l).collect();
    (a, b)
}

/// Domination of the optimistic final target `{S + E > l_max}` by the
/// proposal at `l`: finite iff the optimistic set has mass and lies inside
/// `{S > l}`.
pub fn exact_domination(p: &DiscreteProblem, version: usize, l: f64) -> f64 {
    let t = p.table(version);
    let a: Vec<bool> = (0..p.cells())
        .map(|i| t.s_red[i] + t.e_red[i] > p.l_max)
        .collect();
    let b: Vec<bool> = (0..p.cells()).map(|i| t.s_red[i] > l).collect();
    indicator_entropy(&p.weights, &a, &b)
}

/// Candidate levels above `l_b`: distinct reduced scores below `l_max`
/// (positive-weight cells), followed by `l_max`.
fn level_grid(p: &DiscreteProblem, version: usize, l_b: f64) -> Vec<f64> {
    let t = p.table(version);
    let mut grid: Vec<f64> = (0..p.cells())
        .filter(|&i| p.weights[i] > 0.0)
        .map(|i| t.s_red[i])
        .filter(|&s| s > l_b && s < p.l_max)
        .collect();
    grid.sort_unstable_by(f64::total_cmp);
    grid.dedup();
    if l_b < p.l_max {
        grid.push(p.l_max);
    }
    grid
}

/// Exact critical level: scanning the grid upward from `l_b`, the last
/// level before the worst-case log cost exceeds `c` or domination of the
/// optimistic final target is lost. `l_max` when nothing is violated; `l_b`
/// when the first candidate already violates.
pub fn exact_critical_level(p: &DiscreteProblem, version: usize, l_b: f64, c: f64) -> f64 {
    let mut current = l_b.min(p.l_max);
    for l in level_grid(p, version, l_b) {
        let violated =
            exact_entropy(p, version, l) > c || !exact_domination(p, version, l).is_finite();
        if violated {
            return current;
        }
        current = l;
    }
    current
}

/// Conditional law of the proposal `{S > l}` over cells.
pub fn exact_conditional(p: &DiscreteProblem, version: usize, l: f64) -> Vec<f64> {
    let t = p.table(version);
    let z = exact_tail(&p.weights, &t.s_red, l);
    (0..p.cells())
        .map(|i| {
            if t.s_red[i] > l {
                p.weights[i] / z
            } else {
                0.0
            }
        })
        .collect()
}

/// Snapshot law `exp(tau E) mu_l / mu_l(exp(tau E))`; `tau = inf` keeps the
/// maximal-error cells.
pub fn exact_snapshot_law(p: &DiscreteProblem, version: usize, l: f64, tau: f64) -> Vec<f64> {
    let t = p.table(version);
    let mu = exact_conditional(p, version, l);
    let e_max = (0..p.cells())
        .filter(|&i| mu[i] > 0.0)
        .map(|i| t.e_red[i])
        .fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = (0..p.cells())
        .map(|i| {
            if mu[i] == 0.0 {
                0.0
            } else if tau == f64::INFINITY {
                if t.e_red[i] == e_max {
                    mu[i]
                } else {
                    0.0
                }
            } else if tau == 0.0 {
                mu[i]
            } else {
                mu[i] * math::exp(tau * (t.e_red[i] - e_max))
            }
        })
        .collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

/// Draws a cell from a probability vector.
pub fn sample_cell(probs: &[f64], rng: &mut RngStream) -> usize {
    let mut u = rng.uniform();
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        last = i;
        if u < p {
            return i;
        }
        u -= p;
    }
    last
}

/// Past proposal used as a bridging source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExactEntry {
    pub version: usize,
    pub level: f64,
}

/// Largest feasible `(k', l')` over `history` (index `k' - 1` holds the
/// proposal of iteration `k'`), for the surrogate `new_version`. Candidate
/// levels are the distinct new scores of the source support, capped at
/// `l_max`. Returns `(k', l')`.
pub fn exact_bridge_pair(
    p: &DiscreteProblem,
    history: &[ExactEntry],
    new_version: usize,
    theta: f64,
    c: f64,
) -> Option<(usize, f64)> {
    let t_new = p.table(new_version);
    let quantile_cap = -math::ln(1.0 - theta);
    for kp in (1..=history.len()).rev() {
        let src = history[kp - 1];
        let t_src = p.table(src.version);
        let support = |i: usize| t_src.s_red[i] > src.level;
        let z_src = p.mass(support);
        if z_src == 0.0 {
            continue;
        }
        let mut grid: Vec<f64> = (0..p.cells())
            .filter(|&i| p.weights[i] > 0.0 && support(i))
            .map(|i| t_new.s_red[i].min(p.l_max))
            .collect();
        grid.sort_unstable_by(f64::total_cmp);
        grid.dedup();
        for &l in grid.iter().rev() {
            let inside = |i: usize| t_new.s_red[i] > l;
            if !p.nested(inside, support) {
                continue;
            }
            let z_new = p.mass(inside);
            if z_new == 0.0 || math::ln(z_src / z_new) > quantile_cap {
                continue;
            }
            if exact_entropy(p, new_version, l) > c {
                continue;
            }
            if !exact_domination(p, new_version, l).is_finite() {
                continue;
            }
            return Some((kp, l));
        }
    }
    None
}

/// When the idealized run stops.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stopping {
    /// Fixed number of snapshots.
    Budget(usize),
    /// Run until this many estimator terms are recorded (bounded by a
    /// safety cap on iterations).
    Terms { h: usize, max_iterations: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdealizedConfig {
    pub c: f64,
    pub theta: f64,
    pub j0: usize,
    pub tau0: f64,
    pub epsilon: f64,
    pub use_bridge: bool,
    pub stopping: Stopping,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdealizedRun {
    pub p_hat: f64,
    pub terms: Vec<f64>,
    /// Exact normalization attached to each term.
    pub z_terms: Vec<f64>,
    pub levels: Vec<f64>,
    pub versions: Vec<usize>,
    pub snapshots: Vec<usize>,
    pub bridges: usize,
}

/// Idealized algorithm on a finite problem: exact critical levels, exact
/// normalizations, exact bridging search and exact snapshot sampling.
pub fn idealized_arms_run(
    p: &DiscreteProblem,
    cfg: &IdealizedConfig,
    rng: &mut RngStream,
) -> IdealizedRun {
    let (budget, target_terms) = match cfg.stopping {
        Stopping::Budget(k) => (k, usize::MAX),
        Stopping::Terms { h, max_iterations } => (max_iterations, h),
    };
    let mut version = 0usize;
    let mut l_b = f64::NEG_INFINITY;
    let mut tau = update_tau(0, cfg.j0, cfg.tau0);
    let mut j = 0usize;
    let mut history: Vec<ExactEntry> = Vec::new();
    let mut out = IdealizedRun {
        p_hat: 0.0,
        terms: Vec::new(),
        z_terms: Vec::new(),
        levels: Vec::new(),
        versions: Vec::new(),
        snapshots: Vec::new(),
        bridges: 0,
    };
    for _ in 0..budget {
        if out.terms.len() >= target_terms {
            break;
        }
        let l = exact_critical_level(p, version, l_b, cfg.c);
        let t = p.table(version);
        let z = exact_tail(&p.weights, &t.s_red, l);
        history.push(ExactEntry { version, level: l });
        out.levels.push(l);
        out.versions.push(version);

        let law = exact_snapshot_law(p, version, l, tau);
        let x = sample_cell(&law, rng);
        out.snapshots.push(x);

        let update = l < p.l_max || cfg.epsilon < 0.0 || exact_entropy(p, version, l) > cfg.epsilon;
        let next = if update {
            p.update[version][x]
        } else {
            version
        };

        let estimating = j >= cfg.j0;
        let hit = p.event.hit(p.s_true[x], p.l_max);
        if hit {
            j += 1;
        }
        tau = update_tau(j, cfg.j0, cfg.tau0);
        if estimating {
            out.terms.push(if hit { z } else { 0.0 });
            out.z_terms.push(z);
        }

        if next != version {
            l_b = f64::NEG_INFINITY;
            if cfg.use_bridge {
                if let Some((_, lb)) = exact_bridge_pair(p, &history, next, cfg.theta, cfg.c) {
                    l_b = lb;
                    out.bridges += 1;
                }
            }
            version = next;
        } else {
            l_b = l;
        }
    }
    if !out.terms.is_empty() {
        out.p_hat = out.terms.iter().sum::<f64>() / out.terms.len() as f64;
    }
    out
}

/// Variance of the mean of `H` terms predicted from the expected
/// normalizations: `(1/H^2) sum_h (E[Z_h] p* - p*^2)`.
pub fn predicted_variance(mean_z: &[f64], p_star: f64) -> f64 {
    let h = mean_z.len() as f64;
    mean_z
        .iter()
        .map(|z| z * p_star - p_star * p_star)
        .sum::<f64>()
        / (h * h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn uniform(m: usize) -> Vec<f64> {
        vec![1.0 / m as f64; m]
    }

    #[test]
    fn tail_examples() {
        let w = uniform(10);
        let t: Vec<f64> = (0..10).map(|i| i as f64).collect();
        assert!((exact_tail(&w, &t, f64::NEG_INFINITY) - 1.0).abs() < 1e-12);
        assert!((exact_tail(&w, &t, 6.0) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn entropy_examples() {
        let w = uniform(10);
        let b: Vec<bool> = (0..10).map(|i| i < 5).collect();
        let a: Vec<bool> = (0..10).map(|i| i < 2).collect();
        let e = indicator_entropy(&w, &a, &b);
        assert!((e - (2.5f64).ln()).abs() < 1e-12);
        assert!((indicator_entropy2(&w, &a, &b) - e).abs() < 1e-12);
        assert!(indicator_entropy(&w, &b, &b).abs() < 1e-12);
        let outside: Vec<bool> = (0..10).map(|i| i == 7).collect();
        assert_eq!(indicator_entropy(&w, &outside, &b), f64::INFINITY);
        assert_eq!(indicator_entropy2(&w, &outside, &b), f64::INFINITY);
    }

    #[test]
    fn predicted_variance_of_exact_surrogate_is_zero() {
        assert!(predicted_variance(&[0.2, 0.2], 0.2).abs() < 1e-18);
    }
    #[test]
    fn no_learning_phase_samples_the_proposal_from_the_start() {
        let p = DiscreteProblem {
            weights: vec![0.5, 0.3, 0.2],
            s_true: vec![0.0, 1.0, 2.0],
            versions: vec![SurrogateTable {
                s_red: vec![0.0, 1.0, 2.0],
                e_red: vec![0.0, 0.0, 5.0],
            }],
            update: vec![vec![0; 3]],
            l_max: 1.5,
            event: EventRule::Strict,
        };
        let cfg = IdealizedConfig {
            c: 10.0,
            theta: 0.3,
            j0: 0,
            tau0: f64::INFINITY,
            epsilon: -1.0,
            use_bridge: false,
            stopping: Stopping::Budget(1),
        };
        let first: Vec<usize> = (0..200)
            .map(|r| idealized_arms_run(&p, &cfg, &mut RngStream::new(r, 0)).snapshots[0])
            .collect();
        assert!(first.iter().any(|&x| x != 2));
    }
}
