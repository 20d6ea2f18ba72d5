//! Miniature thermal block: `-div(kappa grad u) = 1` on the unit square with
//! zero boundary values, `kappa = x_q` on the `q`-th of `d x d` square blocks.
//!
//! The grid has `n` cells per axis (`n` divisible by `d`) and `(n-1)^2`
//! interior unknowns. Splitting every cell along one diagonal and using
//! linear elements gives a 5-point stencil whose edge coupling is the mean
//! of the two adjacent cell coefficients, so `A(x) = sum_q x_q A_q` with
//! each `A_q` assembled from the cells of block `q` alone.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::linalg::{BandCholesky, BandMatrix};
use crate::math;
use crate::reference::{ReferenceDistribution, State};
use crate::rng::RngStream;
use crate::{Error, Result};
use crate::{Evaluation, Surrogate};

/// Symmetric sparse matrix as a list of upper-triangle entries.
#[derive(Debug, Clone, Default)]
pub struct SparseSym {
    pub n: usize,
    /// `(row, col, value)` with `row <= col`.
    pub entries: Vec<(u32, u32, f64)>,
}

impl SparseSym {
    fn from_triplets(n: usize, mut t: Vec<(u32, u32, f64)>) -> Self {
        t.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut entries: Vec<(u32, u32, f64)> = Vec::with_capacity(t.len());
        for (r, c, v) in t {
            match entries.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => entries.push((r, c, v)),
            }
        }
        Self { n, entries }
    }

    pub fn mul(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        self.mul_add(1.0, x, y);
    }

    pub fn mul_add(&self, alpha: f64, x: &[f64], y: &mut [f64]) {
        for &(r, c, v) in &self.entries {
            let (r, c) = (r as usize, c as usize);
            y[r] += alpha * v * x[c];
            if r != c {
                y[c] += alpha * v * x[r];
            }
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ThermalSize {
    d: usize,
    n: usize,
}

/// Assembled affine operator of the thermal block.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "ThermalSize", into = "ThermalSize")]
pub struct ThermalBlockModel {
    d: usize,
    n: usize,
    ops: Vec<SparseSym>,
    /// Unit-coefficient operator; its energy is the squared V-norm.
    inner: SparseSym,
    inner_factor: BandCholesky,
    load: f64,
}

impl From<ThermalBlockModel> for ThermalSize {
    fn from(m: ThermalBlockModel) -> Self {
        Self { d: m.d, n: m.n }
    }
}

impl TryFrom<ThermalSize> for ThermalBlockModel {
    type Error = Error;
    fn try_from(s: ThermalSize) -> Result<Self> {
        Self::new(s.d, s.n)
    }
}

const NONE: usize = usize::MAX;

impl ThermalBlockModel {
    /// `d x d` blocks on a grid of `n` cells per axis.
    pub fn new(d: usize, n: usize) -> Result<Self> {
        if d == 0 || n < 2 || n % d != 0 {
            return Err(Error::Parameter(format!(
                "grid of {n} cells per axis cannot carry {d} x {d} blocks"
            )));
        }
        let m = n - 1;
        let dofs = m * m;
        let node = |i: usize, j: usize| -> usize {
            if i == 0 || j == 0 || i == n || j == n {
                NONE
            } else {
                (j - 1) * m + (i - 1)
            }
        };
        let cells_per_block = n / d;
        let mut triplets: Vec<Vec<(u32, u32, f64)>> = vec![Vec::new(); d * d];
        for cj in 0..n {
            for ci in 0..n {
                let q = (cj / cells_per_block) * d + ci / cells_per_block;
                let edges = [
                    ((ci, cj), (ci + 1, cj)),
                    ((ci, cj + 1), (ci + 1, cj + 1)),
                    ((ci, cj), (ci, cj + 1)),
                    ((ci + 1, cj), (ci + 1, cj + 1)),
                ];
                for ((ai, aj), (bi, bj)) in edges {
                    let (a, b) = (node(ai, aj), node(bi, bj));
                    let t = &mut triplets[q];
                    if a != NONE {
                        t.push((a as u32, a as u32, 0.5));
                    }
                    if b != NONE {
                        t.push((b as u32, b as u32, 0.5));
                    }
                    if a != NONE && b != NONE {
                        let (r, c) = if a < b { (a, b) } else { (b, a) };
                        t.push((r as u32, c as u32, -0.5));
                    }
                }
            }
        }
        let all: Vec<(u32, u32, f64)> = triplets.iter().flatten().copied().collect();
        let ops: Vec<SparseSym> = triplets
            .into_iter()
            .map(|t| SparseSym::from_triplets(dofs, t))
            .collect();
        let inner = SparseSym::from_triplets(dofs, all);
        let mut band = BandMatrix::zeros(dofs, m);
        for &(r, c, v) in &inner.entries {
            band.add(r as usize, c as usize, v);
        }
        let inner_factor = BandCholesky::factor(&band)?;
        let h = 1.0 / n as f64;
        Ok(Self {
            d,
            n,
            ops,
            inner,
            inner_factor,
            load: h * h,
        })
    }

    pub fn blocks_per_axis(&self) -> usize {
        self.d
    }

    pub fn cells_per_axis(&self) -> usize {
        self.n
    }

    /// Number of parameters `d^2`.
    pub fn q(&self) -> usize {
        self.d * self.d
    }

    /// Number of unknowns `(n-1)^2`.
    pub fn dofs(&self) -> usize {
        (self.n - 1) * (self.n - 1)
    }

    pub fn op(&self, q: usize) -> &SparseSym {
        &self.ops[q]
    }

    pub fn inner(&self) -> &SparseSym {
        &self.inner
    }

    /// Solves `X v = r` for the unit-coefficient operator `X`.
    pub fn riesz(&self, r: &[f64]) -> Vec<f64> {
        self.inner_factor.solve(r)
    }

    /// Load value at every unknown (the integral of a hat function).
    pub fn load(&self) -> f64 {
        self.load
    }

    /// `int u` for the piecewise linear field with nodal values `u`.
    pub fn integral(&self, u: &[f64]) -> f64 {
        self.load * u.iter().sum::<f64>()
    }

    pub fn check_parameter(&self, x: &State) -> Result<()> {
        if x.dim() != self.q() {
            return Err(Error::Domain(format!(
                "thermal block expects {} parameters, got {}",
                self.q(),
                x.dim()
            )));
        }
        if x.coords().iter().any(|c| !(*c > 0.0) || !c.is_finite()) {
            return Err(Error::Domain("conductivities must be positive".into()));
        }
        Ok(())
    }

    pub fn assemble(&self, x: &State) -> Result<BandMatrix> {
        self.check_parameter(x)?;
        let m = self.n - 1;
        let mut band = BandMatrix::zeros(self.dofs(), m);
        for (op, &xq) in self.ops.iter().zip(x.coords()) {
            for &(r, c, v) in &op.entries {
                band.add(r as usize, c as usize, xq * v);
            }
        }
        Ok(band)
    }
}

/// Full-order solution at `x`.
pub fn tb_solve_full(m: &ThermalBlockModel, x: &State) -> Result<Vec<f64>> {
    let a = m.assemble(x)?;
    let chol = BandCholesky::factor(&a)?;
    let mut u = vec![m.load; m.dofs()];
    chol.solve_in_place(&mut u);
    Ok(u)
}

/// L1 norm of the full-order solution, `int u` (the solution is nonnegative).
pub fn tb_true_score(m: &ThermalBlockModel, x: &State) -> Result<f64> {
    Ok(m.integral(&tb_solve_full(m, x)?))
}

/// The full-order score wrapped as an exact surrogate (`E = 0`), for plain
/// splitting on the true model.
#[derive(Debug, Clone)]
pub struct FullOrderScore {
    pub model: Arc<ThermalBlockModel>,
}

impl Surrogate for FullOrderScore {
    fn score(&self, x: &State) -> Result<f64> {
        tb_true_score(&self.model, x)
    }

    fn evaluate(&self, x: &State) -> Result<Evaluation> {
        Ok(Evaluation {
            score: tb_true_score(&self.model, x)?,
            err: 0.0,
        })
    }
}

/// Conditional Monte Carlo for `pi(S* > l)` using `S*(c x) = S*(x) / c`.
///
/// With `ln x_i = mu + sigma g_i`, split `ln x` into its mean `m` and the
/// centered part `w`; the two are independent, `m ~ N(mu, sigma^2 / q)`, and
/// `S*(x) > l` iff `m < ln S*(e^w) - ln l`. Each draw of `w` therefore
/// contributes an exact normal CDF instead of an indicator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermalTail {
    /// `ln S*(e^w)` per draw.
    pub log_scores: Vec<f64>,
    pub mu_log: f64,
    /// Standard deviation of the coordinate mean, `sigma / sqrt(q)`.
    pub sigma_mean: f64,
}

impl ThermalTail {
    /// Full solves at `samples` centered reference draws.
    pub fn sample(
        m: &ThermalBlockModel,
        dist: &ReferenceDistribution,
        samples: usize,
        rng: &mut RngStream,
    ) -> Result<Self> {
        if dist.dim != m.q() {
            return Err(Error::Parameter(format!(
                "reference has dimension {}, model has {} blocks",
                dist.dim,
                m.q()
            )));
        }
        if samples < 2 || !(dist.sigma_log > 0.0) {
            return Err(Error::Parameter("need >= 2 samples and sigma > 0".into()));
        }
        let q = m.q();
        let mut log_scores = Vec::with_capacity(samples);
        let mut g = vec![0.0; q];
        for _ in 0..samples {
            for v in g.iter_mut() {
                *v = dist.sigma_log * rng.normal();
            }
            let mean = g.iter().sum::<f64>() / q as f64;
            let x = State::new(g.iter().map(|v| math::exp(v - mean)).collect())?;
            log_scores.push(math::ln(tb_true_score(m, &x)?));
        }
        Ok(Self {
            log_scores,
            mu_log: dist.mu_log,
            sigma_mean: dist.sigma_log / math::sqrt(q as f64),
        })
    }

    fn terms(&self, l: f64) -> impl Iterator<Item = f64> + '_ {
        let ln_l = math::ln(l);
        self.log_scores
            .iter()
            .map(move |v| math::norm_cdf((v - ln_l - self.mu_log) / self.sigma_mean))
    }

    /// Estimate of `pi(S* > l)` and its standard error.
    pub fn probability(&self, l: f64) -> (f64, f64) {
        let n = self.log_scores.len() as f64;
        let mean = self.terms(l).sum::<f64>() / n;
        let var = self.terms(l).map(|t| (t - mean) * (t - mean)).sum::<f64>() / (n - 1.0);
        (mean, math::sqrt(var / n))
    }

    /// Level `l` with estimated `pi(S* > l) = p`, by bisection in `ln l`.
    pub fn level_for(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Parameter(format!(
                "target probability {p} not in (0, 1)"
            )));
        }
        let spread = 40.0 * self.sigma_mean;
        let lo_v = self
            .log_scores
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        let hi_v = self
            .log_scores
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        let (mut lo, mut hi) = (lo_v - self.mu_log - spread, hi_v - self.mu_log + spread);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.probability(math::exp(mid)).0 > p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(math::exp(0.5 * (lo + hi)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ones(q: usize, v: f64) -> State {
        State::new(vec![v; q]).unwrap()
    }

    #[test]
    fn operators_sum_to_inner_product() {
        let m = ThermalBlockModel::new(2, 8).unwrap();
        let x: Vec<f64> = (0..m.dofs()).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut y = vec![0.0; m.dofs()];
        let mut z = vec![0.0; m.dofs()];
        for q in 0..4 {
            m.op(q).mul_add(1.0, &x, &mut y);
        }
        m.inner().mul(&x, &mut z);
        for (a, b) in y.iter().zip(&z) {
            assert!((a - b).abs() < 1e-13);
        }
        // Interior rows of the unit operator are the 5-point Laplacian.
        let row: f64 = m
            .inner()
            .entries
            .iter()
            .filter(|e| e.0 == e.1)
            .map(|e| e.2)
            .next()
            .unwrap();
        assert_eq!(row, 4.0);
    }

    #[test]
    fn solution_scales_inversely() {
        let m = ThermalBlockModel::new(2, 16).unwrap();
        let s1 = tb_true_score(&m, &ones(4, 1.0)).unwrap();
        let s3 = tb_true_score(&m, &ones(4, 3.0)).unwrap();
        assert!((s3 - s1 / 3.0).abs() < 1e-14);
        let big = tb_true_score(&m, &ones(4, 1e9)).unwrap();
        assert!(big < 1e-9);
    }

    #[test]
    fn rotation_symmetry() {
        let n = 12;
        let m = ThermalBlockModel::new(2, n).unwrap();
        // Blocks (0,1,2,3) = (bl, br, tl, tr); a 90 degree rotation maps
        // (i, j) -> (j, n - i) and bl -> br -> tr -> tl.
        let x = State::new(vec![1.0, 2.0, 4.0, 3.0]).unwrap();
        let xr = State::new(vec![4.0, 1.0, 3.0, 2.0]).unwrap();
        let u = tb_solve_full(&m, &x).unwrap();
        let ur = tb_solve_full(&m, &xr).unwrap();
        let k = n - 1;
        for j in 1..n {
            for i in 1..n {
                let (ri, rj) = (n - j, i);
                let a = u[(j - 1) * k + i - 1];
                let b = ur[(rj - 1) * k + ri - 1];
                assert!((a - b).abs() < 1e-12, "({i},{j})");
            }
        }
    }

    #[test]
    fn nonnegative_solution() {
        let m = ThermalBlockModel::new(2, 16).unwrap();
        let u = tb_solve_full(&m, &State::new(vec![0.01, 5.0, 100.0, 1.0]).unwrap()).unwrap();
        assert!(u.iter().all(|v| *v > 0.0));
    }

    #[test]
    fn bad_sizes() {
        assert!(ThermalBlockModel::new(5, 32).is_err());
        assert!(ThermalBlockModel::new(0, 32).is_err());
        let m = ThermalBlockModel::new(2, 4).unwrap();
        assert!(tb_solve_full(&m, &ones(3, 1.0)).is_err());
    }

    #[test]
    fn conditional_tail_matches_plain_sampling() {
        let m = ThermalBlockModel::new(2, 8).unwrap();
        let dist = ReferenceDistribution::new(4, 1.5, 1.5).unwrap();
        let mut rng = RngStream::new(11, 0);
        let tail = ThermalTail::sample(&m, &dist, 2000, &mut rng).unwrap();
        let l = tail.level_for(0.1).unwrap();
        let (p, se) = tail.probability(l);
        assert!((p - 0.1).abs() < 1e-9 && se > 0.0);
        let n = 20_000;
        let hits = (0..n)
            .filter(|_| tb_true_score(&m, &dist.sample(&mut rng)).unwrap() > l)
            .count();
        let mc = hits as f64 / n as f64;
        let tol = 4.0 * ((0.1 * 0.9 / n as f64) + se * se).sqrt();
        assert!((mc - 0.1).abs() < tol, "plain {mc} vs conditional 0.1");
    }
}
