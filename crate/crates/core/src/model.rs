//! Score models as seen by the engine.

use serde::{Deserialize, Serialize};

use crate::reference::{ReferenceDistribution, State};
use crate::rng::RngStream;
use crate::Result;

/// Reduced score together with its certified error bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub score: f64,
    pub err: f64,
}

/// Whether the event of interest is `S* > l_max` or `S* >= l_max`.
///
/// Intermediate level sets are always strict; only the final hit test
/// depends on this.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventRule {
    #[default]
    Strict,
    Inclusive,
}

impl EventRule {
    #[inline]
    pub fn hit(self, score: f64, l_max: f64) -> bool {
        match self {
            EventRule::Strict => score > l_max,
            EventRule::Inclusive => score >= l_max,
        }
    }
}

/// A cheap score `S` with a pointwise bound `E >= |S - S*|`.
///
/// Implementations are immutable; enrichment produces a new value.
pub trait Surrogate: Clone + Send + Sync {
    /// Reduced score only. This is what the mutation kernel calls.
    fn score(&self, x: &State) -> Result<f64>;

    /// Reduced score and error bound.
    fn evaluate(&self, x: &State) -> Result<Evaluation>;

    /// Copy kept in the bridging archive. Archived surrogates are only asked
    /// for scores, so implementations may drop whatever `evaluate` alone
    /// needs.
    fn archived(&self) -> Self {
        self.clone()
    }
}

/// A true model paired with a family of surrogates for it.
pub trait Problem: Sync {
    type Surrogate: Surrogate;
    /// Output of one full solve.
    type Snapshot: Clone + Send;

    fn reference(&self) -> &ReferenceDistribution;

    fn l_max(&self) -> f64;

    fn event(&self) -> EventRule {
        EventRule::Strict
    }

    /// Full (expensive) solve at `x`.
    fn solve(&self, x: &State) -> Result<Self::Snapshot>;

    fn snapshot_score(&self, snap: &Self::Snapshot) -> f64;

    /// Builds the first surrogate. Returns it with the number of full solves
    /// spent; those are not charged to the snapshot budget.
    fn initial_surrogate(&self, rng: &mut RngStream) -> Result<(Self::Surrogate, usize)>;

    /// Enriches `current` with the snapshot taken at `x`. `None` means the
    /// snapshot brought no new information and the surrogate is unchanged.
    fn enrich(
        &self,
        current: &Self::Surrogate,
        x: &State,
        snap: &Self::Snapshot,
    ) -> Result<Option<Self::Surrogate>>;
}
