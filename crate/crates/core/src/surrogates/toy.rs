//! One-dimensional analytic benchmark with a spline surrogate.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::spline::{spline_fit, SplineSurrogate};
use crate::math;
use crate::model::{Evaluation, EventRule, Problem, Surrogate};
use crate::quadrature::adaptive_simpson;
use crate::reference::{ReferenceDistribution, State};
use crate::rng::RngStream;
use crate::{Error, Result};

/// Parameters of the analytic score
/// `S*(x) = l_max` for `x <= 1/l_max`, `|1/x + f(x)|` otherwise, where `f`
/// is zero below `x0`, `alpha sin^2(x - x0)` on `[x0, x1)` and decreases
/// linearly with slope `-alpha beta` beyond `x1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Toy1DModel {
    pub x0: f64,
    pub x1: f64,
    pub alpha: f64,
    pub beta: f64,
    pub l_max: f64,
}

impl Default for Toy1DModel {
    fn default() -> Self {
        Self {
            x0: 0.5,
            x1: 5.0,
            alpha: 15.0,
            beta: 0.1,
            l_max: 90.0,
        }
    }
}

impl Toy1DModel {
    pub fn validate(&self) -> Result<()> {
        let ok = self.l_max > 0.0
            && self.x0 > 1.0 / self.l_max
            && self.x1 > self.x0
            && self.alpha > 0.0
            && self.beta >= 0.0
            && self.x1.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::Parameter(format!("invalid toy model {self:?}")))
        }
    }

    fn f(&self, x: f64) -> f64 {
        if x < self.x0 {
            0.0
        } else if x < self.x1 {
            let s = math::sin(x - self.x0);
            self.alpha * s * s
        } else {
            let s = math::sin(self.x1 - self.x0);
            self.alpha * (s * s - self.beta * (x - self.x1))
        }
    }

    /// `Psi*(x) = 1/x + f(x)`, without the plateau.
    pub fn psi(&self, x: f64) -> f64 {
        1.0 / x + self.f(x)
    }
}

pub fn toy_true_score(m: &Toy1DModel, x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::Domain(format!("toy score needs x > 0, got {x}")));
    }
    if x <= 1.0 / m.l_max {
        Ok(m.l_max)
    } else {
        Ok(m.psi(x).abs())
    }
}

/// Twice the true error of the spline at `x`. These true-score calls emulate
/// an a-posteriori bound and are not charged as snapshots.
pub fn toy_error(m: &Toy1DModel, spline: &SplineSurrogate, x: f64) -> f64 {
    match toy_true_score(m, x) {
        Ok(s) => 2.0 * (spline.eval(x) - s).abs(),
        Err(_) => f64::INFINITY,
    }
}

const SCAN_POINTS: usize = 200_000;
const TAIL_SIGMAS: f64 = 40.0;

/// `pi(S* >= l_max)` under the log-normal reference: closed-form plateau
/// mass plus quadrature over the part of `x > 1/l_max` where
/// `|Psi*| >= l_max`.
pub fn toy_pstar_oracle(m: &Toy1DModel, dist: &ReferenceDistribution) -> Result<f64> {
    m.validate()?;
    if dist.dim != 1 {
        return Err(Error::Parameter(
            "toy reference must be one-dimensional".into(),
        ));
    }
    let (mu, sigma) = (dist.mu_log, dist.sigma_log);
    let y_plateau = -math::ln(m.l_max);
    if sigma == 0.0 {
        let s = toy_true_score(m, math::exp(mu))?;
        return Ok(if s >= m.l_max { 1.0 } else { 0.0 });
    }
    let left = math::norm_cdf((y_plateau - mu) / sigma);
    let intervals = right_tail_intervals(m, y_plateau, mu + TAIL_SIGMAS * sigma);
    let mut right = 0.0;
    for (a, b) in intervals {
        let za = (a - mu) / sigma;
        let zb = (b - mu) / sigma;
        right += adaptive_simpson(&std_normal_pdf, za, zb, 1e-17)?;
    }
    Ok(left + right)
}

fn std_normal_pdf(z: f64) -> f64 {
    math::exp(-0.5 * z * z - math::LN_SQRT_2PI)
}

/// Maximal intervals of `(y_lo, y_hi]` (log-space) on which `|Psi*| >= l_max`.
pub fn right_tail_intervals(m: &Toy1DModel, y_lo: f64, y_hi: f64) -> Vec<(f64, f64)> {
    let inside = |y: f64| m.psi(math::exp(y)).abs() >= m.l_max;
    let mut grid: Vec<f64> = (0..=SCAN_POINTS)
        .map(|i| y_lo + (y_hi - y_lo) * i as f64 / SCAN_POINTS as f64)
        .collect();
    // Branch points of f must be on the grid so no region hides between them.
    for b in [m.x0, m.x1] {
        let y = math::ln(b);
        if y > y_lo && y < y_hi {
            grid.push(y);
        }
    }
    grid.sort_by(f64::total_cmp);
    let refine = |mut a: f64, mut b: f64, a_in: bool| {
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b {
                break;
            }
            if inside(mid) == a_in {
                a = mid;
            } else {
                b = mid;
            }
        }
        0.5 * (a + b)
    };
    let mut out = Vec::new();
    let mut start: Option<f64> = None;
    // The point y_lo itself belongs to the plateau, which is counted
    // separately; treat it as outside so regions start strictly above it.
    let mut prev_y = grid[0];
    let mut prev_in = false;
    for &y in &grid[1..] {
        let now = inside(y);
        if now != prev_in {
            let edge = refine(prev_y, y, prev_in);
            if now {
                start = Some(edge);
            } else if let Some(s) = start.take() {
                out.push((s, edge));
            }
        }
        prev_y = y;
        prev_in = now;
    }
    if let Some(s) = start {
        out.push((s, y_hi));
    }
    out
}

/// Spline surrogate of the toy score; the error bound is [`toy_error`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToySurrogate {
    pub model: Toy1DModel,
    pub spline: SplineSurrogate,
}

impl Surrogate for ToySurrogate {
    fn score(&self, x: &State) -> Result<f64> {
        Ok(self.spline.eval(x.x()))
    }

    fn evaluate(&self, x: &State) -> Result<Evaluation> {
        let x = x.x();
        Ok(Evaluation {
            score: self.spline.eval(x),
            err: toy_error(&self.model, &self.spline, x),
        })
    }
}

/// The toy benchmark as a [`Problem`]. The event is `S* >= l_max` so the
/// plateau belongs to it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToyProblem {
    pub model: Toy1DModel,
    pub reference: ReferenceDistribution,
    /// Reference draws used to build the first spline.
    pub initial_snapshots: usize,
}

impl ToyProblem {
    pub fn new(model: Toy1DModel, reference: ReferenceDistribution) -> Result<Self> {
        model.validate()?;
        if reference.dim != 1 {
            return Err(Error::Parameter(
                "toy reference must be one-dimensional".into(),
            ));
        }
        Ok(Self {
            model,
            reference,
            initial_snapshots: 10,
        })
    }
}

impl Problem for ToyProblem {
    type Surrogate = ToySurrogate;
    type Snapshot = f64;

    fn reference(&self) -> &ReferenceDistribution {
        &self.reference
    }

    fn l_max(&self) -> f64 {
        self.model.l_max
    }

    fn event(&self) -> EventRule {
        EventRule::Inclusive
    }

    fn solve(&self, x: &State) -> Result<f64> {
        toy_true_score(&self.model, x.x())
    }

    fn snapshot_score(&self, snap: &f64) -> f64 {
        *snap
    }

    fn initial_surrogate(&self, rng: &mut RngStream) -> Result<(ToySurrogate, usize)> {
        let mut pts = Vec::with_capacity(self.initial_snapshots);
        for _ in 0..self.initial_snapshots.max(2) {
            let x = self.reference.sample(rng).x();
            pts.push((x, toy_true_score(&self.model, x)?));
        }
        let spline = spline_fit(&pts)?;
        Ok((
            ToySurrogate {
                model: self.model,
                spline,
            },
            pts.len(),
        ))
    }

    fn enrich(
        &self,
        current: &ToySurrogate,
        x: &State,
        snap: &f64,
    ) -> Result<Option<ToySurrogate>> {
        Ok(current
            .spline
            .with_point(x.x(), *snap)?
            .map(|spline| ToySurrogate {
                model: self.model,
                spline,
            }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn score_examples() {
        let m = Toy1DModel::default();
        assert_eq!(toy_true_score(&m, 0.01).unwrap(), 90.0);
        assert_eq!(toy_true_score(&m, 0.25).unwrap(), 4.0);
        let s1 = toy_true_score(&m, 1.0).unwrap();
        assert!((s1 - 4.4477).abs() < 1e-4, "{s1}");
        assert!(toy_true_score(&m, 0.0).is_err());
        assert!(toy_true_score(&m, -1.0).is_err());
    }

    #[test]
    fn error_vanishes_at_knots_and_bounds_truth() {
        let m = Toy1DModel::default();
        let pts: Vec<(f64, f64)> = [0.3, 1.0, 2.0, 4.0, 7.0]
            .iter()
            .map(|&x| (x, toy_true_score(&m, x).unwrap()))
            .collect();
        let s = spline_fit(&pts).unwrap();
        for (x, _) in &pts {
            assert!(toy_error(&m, &s, *x) < 1e-12);
        }
        for i in 1..200 {
            let x = 0.05 * i as f64;
            let truth = toy_true_score(&m, x).unwrap();
            assert!(toy_error(&m, &s, x) >= (s.eval(x) - truth).abs());
        }
    }

    #[test]
    fn oracle_vanishes_for_huge_level() {
        let m = Toy1DModel {
            l_max: 1e12,
            ..Toy1DModel::default()
        };
        let d = ReferenceDistribution::new(1, 1.5, 1.5).unwrap();
        assert!(toy_pstar_oracle(&m, &d).unwrap() < 1e-12);
    }

    #[test]
    fn oracle_is_left_tail_when_right_branch_is_bounded() {
        // With beta = 0, |Psi*| stays below 17 to the right of the plateau.
        let m = Toy1DModel {
            beta: 0.0,
            ..Toy1DModel::default()
        };
        let y = -(90f64).ln();
        // Phi(-4.753424) = 1e-6
        let sigma = (y - 1.5) / -4.753_424_308_822_899;
        let d = ReferenceDistribution::new(1, 1.5, sigma).unwrap();
        let closed = math::norm_cdf((y - 1.5) / sigma);
        assert!((closed - 1e-6).abs() < 1e-12);
        let p = toy_pstar_oracle(&m, &d).unwrap();
        assert!(((p - closed) / closed).abs() < 1e-12);
    }

    #[test]
    fn right_tail_matches_normal_cdf_difference() {
        let m = Toy1DModel::default();
        let d = ReferenceDistribution::new(1, 1.5, 1.5).unwrap();
        let iv = right_tail_intervals(&m, -(90f64).ln(), 1.5 + 40.0 * 1.5);
        assert_eq!(iv.len(), 1);
        let (a, _) = iv[0];
        // Psi* = -90 on the linear branch: solve 1/x + 15 (sin^2 4.5 - 0.1 (x - 5)) = -90.
        let x_root = a.exp();
        assert!(m.psi(x_root).abs() - 90.0 < 1e-9);
        let p = toy_pstar_oracle(&m, &d).unwrap();
        let closed =
            math::norm_cdf((-(90f64).ln() - 1.5) / 1.5) + (1.0 - math::norm_cdf((a - 1.5) / 1.5));
        assert!(((p - closed) / closed).abs() < 1e-9, "{p} vs {closed}");
    }
}
