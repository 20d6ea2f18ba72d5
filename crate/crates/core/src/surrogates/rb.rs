//! Certified reduced basis surrogate for the thermal block.
//!
//! Offline data: a V-orthonormal basis `phi_j` (V-norm `|grad v|_L2`), the
//! reduced operators `phi^T A_q phi`, and an X-orthonormal basis `Q` of the
//! Riesz representers of the load and of every `A_q phi_j`, with their
//! coefficients `R`. Online: the Galerkin system is `k x k`, the score is a
//! dot product, and the residual dual norm is `|R v|_2` with
//! `v = (1, -x_q a_j)`, which avoids the cancellation of the expanded
//! quadratic form near snapshots.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use super::thermal::{tb_solve_full, ThermalBlockModel};
use crate::linalg::{axpy, cholesky_solve, dot, norm2};
use crate::math;
use crate::model::{Evaluation, EventRule, Problem, Surrogate};
use crate::reference::{ReferenceDistribution, State};
use crate::rng::RngStream;
use crate::{Error, Result};

/// Relative size below which a Riesz representer adds no new direction.
const RIESZ_RANK_TOL: f64 = 1e-13;

#[derive(Debug)]
struct Residual {
    /// Coefficients of the load representer in `Q`.
    r_f: Vec<f64>,
    /// Coefficients of the representer of `A_q phi_j`, at index `j * q_count + q`.
    r_cols: Vec<Vec<f64>>,
}

#[derive(Debug)]
struct Offline {
    basis: Vec<Vec<f64>>,
    /// `X phi_j`.
    x_basis: Vec<Vec<f64>>,
    q_vecs: Vec<Vec<f64>>,
    /// `X Q_i`.
    x_q_vecs: Vec<Vec<f64>>,
}

/// Reduced basis surrogate. Cheap to clone; enrichment returns a new value.
#[derive(Debug, Clone)]
pub struct RbSurrogate {
    model: Arc<ThermalBlockModel>,
    k: usize,
    /// Row-major `k x k` reduced operator per parameter.
    a_red: Arc<Vec<Vec<f64>>>,
    f_red: Arc<Vec<f64>>,
    /// `int phi_j`, so the score is `sum_j a_j means_j`.
    means: Arc<Vec<f64>>,
    residual: Option<Arc<Residual>>,
    offline: Option<Arc<Offline>>,
    pub drop_tol: f64,
}

impl RbSurrogate {
    /// Empty basis; the Riesz representer of the load is computed here.
    pub fn new(model: Arc<ThermalBlockModel>, drop_tol: f64) -> Self {
        let f = vec![model.load(); model.dofs()];
        let rho_f = model.riesz(&f);
        let mut x_rho = vec![0.0; model.dofs()];
        model.inner().mul(&rho_f, &mut x_rho);
        let nrm = math::sqrt(dot(&rho_f, &x_rho));
        let q_vecs = vec![rho_f.iter().map(|v| v / nrm).collect::<Vec<_>>()];
        let x_q_vecs = vec![x_rho.iter().map(|v| v / nrm).collect::<Vec<_>>()];
        let q = model.q();
        Self {
            model,
            k: 0,
            a_red: Arc::new(vec![Vec::new(); q]),
            f_red: Arc::new(Vec::new()),
            means: Arc::new(Vec::new()),
            residual: Some(Arc::new(Residual {
                r_f: vec![nrm],
                r_cols: Vec::new(),
            })),
            offline: Some(Arc::new(Offline {
                basis: Vec::new(),
                x_basis: Vec::new(),
                q_vecs,
                x_q_vecs,
            })),
            drop_tol,
        }
    }

    pub fn dim(&self) -> usize {
        self.k
    }

    pub fn model(&self) -> &ThermalBlockModel {
        &self.model
    }

    /// Basis vectors, if this copy still carries offline data.
    pub fn basis(&self) -> Option<&[Vec<f64>]> {
        self.offline.as_ref().map(|o| o.basis.as_slice())
    }

    /// Adds the full-order solution `u` to the basis. Returns `None` when
    /// its component orthogonal to the basis is below the drop tolerance.
    pub fn with_snapshot(&self, u: &[f64]) -> Result<Option<Self>> {
        let (off, res) = match (&self.offline, &self.residual) {
            (Some(o), Some(r)) => (o, r),
            _ => {
                return Err(Error::Parameter(
                    "archived reduced basis cannot be enriched".into(),
                ))
            }
        };
        let m = &*self.model;
        let n = m.dofs();
        let mut v = u.to_vec();
        let mut xv = vec![0.0; n];
        m.inner().mul(&v, &mut xv);
        let norm_u = math::sqrt(dot(&v, &xv));
        if !(norm_u > 0.0) {
            return Ok(None);
        }
        for _ in 0..2 {
            for (phi, xphi) in off.basis.iter().zip(&off.x_basis) {
                let c = dot(xphi, &v);
                axpy(-c, phi, &mut v);
            }
        }
        m.inner().mul(&v, &mut xv);
        let norm_v = math::sqrt(dot(&v, &xv).max(0.0));
        if norm_v <= self.drop_tol * norm_u {
            log::debug!(
                "snapshot dropped: relative new component {:.3e}",
                norm_v / norm_u
            );
            return Ok(None);
        }
        v.iter_mut().for_each(|c| *c /= norm_v);
        xv.iter_mut().for_each(|c| *c /= norm_v);

        let k = self.k;
        let k1 = k + 1;
        let q_count = m.q();
        let mut basis = off.basis.clone();
        basis.push(v);
        let mut x_basis = off.x_basis.clone();
        x_basis.push(xv);
        let phi_new = &basis[k];

        let mut a_red = Vec::with_capacity(q_count);
        let mut a_phi_new = Vec::with_capacity(q_count);
        for q in 0..q_count {
            let mut w = vec![0.0; n];
            m.op(q).mul(phi_new, &mut w);
            let old = &self.a_red[q];
            let mut a = vec![0.0; k1 * k1];
            for i in 0..k {
                a[i * k1..i * k1 + k].copy_from_slice(&old[i * k..(i + 1) * k]);
            }
            for i in 0..k1 {
                let val = dot(&basis[i], &w);
                a[i * k1 + k] = val;
                a[k * k1 + i] = val;
            }
            a_red.push(a);
            a_phi_new.push(w);
        }
        let mean_new = m.integral(phi_new);
        let mut f_red = (*self.f_red).clone();
        f_red.push(mean_new);
        let mut means = (*self.means).clone();
        means.push(mean_new);

        let mut q_vecs = off.q_vecs.clone();
        let mut x_q_vecs = off.x_q_vecs.clone();
        let mut r_cols = res.r_cols.clone();
        for w in &a_phi_new {
            let mut rho = m.riesz(w);
            let norm_rho = math::sqrt(dot(&rho, w).max(0.0));
            let mut coef = vec![0.0; q_vecs.len()];
            for _ in 0..2 {
                for (i, (qv, xqv)) in q_vecs.iter().zip(&x_q_vecs).enumerate() {
                    let c = dot(xqv, &rho);
                    coef[i] += c;
                    axpy(-c, qv, &mut rho);
                }
            }
            let mut x_rho = vec![0.0; n];
            m.inner().mul(&rho, &mut x_rho);
            let rem = math::sqrt(dot(&rho, &x_rho).max(0.0));
            if rem > RIESZ_RANK_TOL * norm_rho && rem > 0.0 {
                coef.push(rem);
                q_vecs.push(rho.iter().map(|c| c / rem).collect());
                x_q_vecs.push(x_rho.iter().map(|c| c / rem).collect());
            }
            r_cols.push(coef);
        }

        Ok(Some(Self {
            model: self.model.clone(),
            k: k1,
            a_red: Arc::new(a_red),
            f_red: Arc::new(f_red),
            means: Arc::new(means),
            residual: Some(Arc::new(Residual {
                r_f: res.r_f.clone(),
                r_cols,
            })),
            offline: Some(Arc::new(Offline {
                basis,
                x_basis,
                q_vecs,
                x_q_vecs,
            })),
            drop_tol: self.drop_tol,
        }))
    }

    /// Reduced coefficients at `x`.
    pub fn solve_reduced(&self, x: &State) -> Result<Vec<f64>> {
        self.model.check_parameter(x)?;
        let k = self.k;
        if k == 0 {
            return Err(Error::Numerical("reduced basis is empty".into()));
        }
        let mut a = vec![0.0; k * k];
        for (aq, &xq) in self.a_red.iter().zip(x.coords()) {
            axpy(xq, aq, &mut a);
        }
        let mut rhs = (*self.f_red).clone();
        cholesky_solve(&mut a, &mut rhs, k)?;
        Ok(rhs)
    }

    /// Dual norm of the residual of the reduced solution `coef` at `x`.
    pub fn residual_norm(&self, x: &State, coef: &[f64]) -> Result<f64> {
        let res = self.residual.as_ref().ok_or_else(|| {
            Error::Parameter("archived reduced basis carries no residual data".into())
        })?;
        let rank = res.r_cols.iter().map(Vec::len).max().unwrap_or(0).max(1);
        let mut w = vec![0.0; rank];
        w[..res.r_f.len()].copy_from_slice(&res.r_f);
        let q_count = self.model.q();
        for (j, aj) in coef.iter().enumerate() {
            for (q, xq) in x.coords().iter().enumerate() {
                let col = &res.r_cols[j * q_count + q];
                axpy(-xq * aj, col, &mut w[..col.len()]);
            }
        }
        Ok(norm2(&w))
    }

    /// Reconstructs the full-order field from reduced coefficients.
    pub fn reconstruct(&self, coef: &[f64]) -> Option<Vec<f64>> {
        let off = self.offline.as_ref()?;
        let mut u = vec![0.0; self.model.dofs()];
        for (phi, c) in off.basis.iter().zip(coef) {
            axpy(*c, phi, &mut u);
        }
        Some(u)
    }
}

/// Score and certified bound `|S - S*| <= err` at `x`.
pub fn rb_eval(s: &RbSurrogate, x: &State) -> Result<Evaluation> {
    let a = s.solve_reduced(x)?;
    let score = dot(&a, &s.means);
    let r = s.residual_norm(x, &a)?;
    let alpha = x.coords().iter().copied().fold(f64::INFINITY, f64::min);
    Ok(Evaluation {
        score,
        err: r / (alpha * PI),
    })
}

/// Solves the full problem at `x` and adds it to the basis if it is new.
pub fn rb_update(s: &RbSurrogate, x: &State) -> Result<RbSurrogate> {
    let u = tb_solve_full(&s.model, x)?;
    Ok(s.with_snapshot(&u)?.unwrap_or_else(|| s.clone()))
}

impl Surrogate for RbSurrogate {
    fn score(&self, x: &State) -> Result<f64> {
        let a = self.solve_reduced(x)?;
        Ok(dot(&a, &self.means))
    }

    fn evaluate(&self, x: &State) -> Result<Evaluation> {
        rb_eval(self, x)
    }

    fn archived(&self) -> Self {
        Self {
            residual: None,
            offline: None,
            ..self.clone()
        }
    }
}

/// Full-order solution at one parameter.
#[derive(Debug, Clone)]
pub struct ThermalSnapshot {
    pub u: Vec<f64>,
    pub score: f64,
}

/// Thermal block with log-normal conductivities as a [`Problem`].
#[derive(Debug, Clone)]
pub struct ThermalProblem {
    pub model: Arc<ThermalBlockModel>,
    pub reference: ReferenceDistribution,
    pub l_max: f64,
    /// Reference draws solved to build the first basis.
    pub initial_basis: usize,
    pub drop_tol: f64,
}

impl ThermalProblem {
    pub fn new(
        model: ThermalBlockModel,
        reference: ReferenceDistribution,
        l_max: f64,
        initial_basis: usize,
    ) -> Result<Self> {
        if reference.dim != model.q() {
            return Err(Error::Parameter(alloc::format!(
                "reference dimension {} does not match {} blocks",
                reference.dim,
                model.q()
            )));
        }
        if initial_basis == 0 {
            return Err(Error::Parameter("initial basis must be non-empty".into()));
        }
        Ok(Self {
            model: Arc::new(model),
            reference,
            l_max,
            initial_basis,
            drop_tol: 1e-9,
        })
    }
}

impl Problem for ThermalProblem {
    type Surrogate = RbSurrogate;
    type Snapshot = ThermalSnapshot;

    fn reference(&self) -> &ReferenceDistribution {
        &self.reference
    }

    fn l_max(&self) -> f64 {
        self.l_max
    }

    fn event(&self) -> EventRule {
        EventRule::Strict
    }

    fn solve(&self, x: &State) -> Result<ThermalSnapshot> {
        let u = tb_solve_full(&self.model, x)?;
        let score = self.model.integral(&u);
        Ok(ThermalSnapshot { u, score })
    }

    fn snapshot_score(&self, snap: &ThermalSnapshot) -> f64 {
        snap.score
    }

    fn initial_surrogate(&self, rng: &mut RngStream) -> Result<(RbSurrogate, usize)> {
        let mut s = RbSurrogate::new(self.model.clone(), self.drop_tol);
        for _ in 0..self.initial_basis {
            let x = self.reference.sample(rng);
            let snap = self.solve(&x)?;
            if let Some(next) = s.with_snapshot(&snap.u)? {
                s = next;
            }
        }
        if s.dim() == 0 {
            return Err(Error::Numerical("initial reduced basis is empty".into()));
        }
        Ok((s, self.initial_basis))
    }

    fn enrich(
        &self,
        current: &RbSurrogate,
        _x: &State,
        snap: &ThermalSnapshot,
    ) -> Result<Option<RbSurrogate>> {
        current.with_snapshot(&snap.u)
    }
}
