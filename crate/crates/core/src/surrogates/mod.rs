//! Concrete score models.

pub mod rb;
pub mod spline;
pub mod tabular;
pub mod thermal;
pub mod toy;

pub use rb::{rb_eval, rb_update, RbSurrogate, ThermalProblem, ThermalSnapshot};
pub use spline::{spline_fit, SplineSurrogate};
pub use tabular::{TabularProblem, TabularSurrogate};
pub use thermal::{tb_solve_full, tb_true_score, FullOrderScore, ThermalBlockModel, ThermalTail};
pub use toy::{toy_error, toy_pstar_oracle, toy_true_score, Toy1DModel, ToyProblem, ToySurrogate};
