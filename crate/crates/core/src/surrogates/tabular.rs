//! Finite-table surrogate over a [`DiscreteProblem`].
//!
//! A one-dimensional reference state is mapped to a cell through the
//! reference CDF, so cell `i` has probability `weights[i]` and every score
//! is a table lookup. This lets the particle engine run on problems whose
//! exact answers are known.

use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::exact::DiscreteProblem;
use crate::model::{Evaluation, EventRule, Problem, Surrogate};
use crate::reference::{ReferenceDistribution, State};
use crate::rng::RngStream;
use crate::{Error, Result};

#[derive(Debug)]
struct Shared {
    problem: DiscreteProblem,
    reference: ReferenceDistribution,
    /// Cumulative weights; cell `i` covers CDF values in `[cum[i-1], cum[i])`.
    cum: Vec<f64>,
}

impl Shared {
    fn cell_of(&self, x: &State) -> usize {
        let u = self.reference.marginal_cdf(x.x());
        self.cum
            .partition_point(|&c| c <= u)
            .min(self.cum.len() - 1)
    }
}

/// One surrogate version of the table.
#[derive(Debug, Clone)]
pub struct TabularSurrogate {
    shared: Arc<Shared>,
    pub version: usize,
}

impl TabularSurrogate {
    pub fn cell_of(&self, x: &State) -> usize {
        self.shared.cell_of(x)
    }
}

impl Surrogate for TabularSurrogate {
    fn score(&self, x: &State) -> Result<f64> {
        let i = self.shared.cell_of(x);
        Ok(self.shared.problem.versions[self.version].s_red[i])
    }

    fn evaluate(&self, x: &State) -> Result<Evaluation> {
        let i = self.shared.cell_of(x);
        let t = &self.shared.problem.versions[self.version];
        Ok(Evaluation {
            score: t.s_red[i],
            err: t.e_red[i],
        })
    }
}

/// A [`DiscreteProblem`] seen through a one-dimensional log-normal state.
#[derive(Debug, Clone)]
pub struct TabularProblem {
    shared: Arc<Shared>,
}

impl TabularProblem {
    pub fn new(problem: DiscreteProblem, reference: ReferenceDistribution) -> Result<Self> {
        problem.validate()?;
        if reference.dim != 1 || !(reference.sigma_log > 0.0) {
            return Err(Error::Parameter(
                "tabular problems need a non-degenerate one-dimensional reference".into(),
            ));
        }
        let mut acc = 0.0;
        let mut cum: Vec<f64> = problem
            .weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        // The last cell absorbs rounding so every state lands somewhere.
        if let Some(last) = cum.last_mut() {
            *last = f64::INFINITY;
        }
        Ok(Self {
            shared: Arc::new(Shared {
                problem,
                reference,
                cum,
            }),
        })
    }

    pub fn problem(&self) -> &DiscreteProblem {
        &self.shared.problem
    }

    pub fn cell_of(&self, x: &State) -> usize {
        self.shared.cell_of(x)
    }

    pub fn surrogate(&self, version: usize) -> TabularSurrogate {
        TabularSurrogate {
            shared: self.shared.clone(),
            version,
        }
    }
}

impl Problem for TabularProblem {
    type Surrogate = TabularSurrogate;
    type Snapshot = usize;

    fn reference(&self) -> &ReferenceDistribution {
        &self.shared.reference
    }

    fn l_max(&self) -> f64 {
        self.shared.problem.l_max
    }

    fn event(&self) -> EventRule {
        self.shared.problem.event
    }

    fn solve(&self, x: &State) -> Result<usize> {
        Ok(self.shared.cell_of(x))
    }

    fn snapshot_score(&self, cell: &usize) -> f64 {
        self.shared.problem.s_true[*cell]
    }

    fn initial_surrogate(&self, _rng: &mut RngStream) -> Result<(TabularSurrogate, usize)> {
        Ok((self.surrogate(0), 0))
    }

    fn enrich(
        &self,
        current: &TabularSurrogate,
        _x: &State,
        cell: &usize,
    ) -> Result<Option<TabularSurrogate>> {
        let next = self.shared.problem.update[current.version][*cell];
        Ok((next != current.version).then(|| self.surrogate(next)))
    }
}
