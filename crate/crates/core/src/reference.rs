//! States and the log-normal reference distribution.

use alloc::format;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::math;
use crate::rng::RngStream;
use crate::{Error, Result};

/// A point of the positive orthant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct State(Vec<f64>);

impl State {
    /// Builds a state, rejecting coordinates that are not strictly positive.
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::Domain("empty state".into()));
        }
        if let Some(c) = coords.iter().find(|c| !(**c > 0.0) || !c.is_finite()) {
            return Err(Error::Domain(format!("coordinate {c} is not in (0, inf)")));
        }
        Ok(Self(coords))
    }

    /// Builds a state without the positivity check.
    pub(crate) fn from_vec_unchecked(coords: Vec<f64>) -> Self {
        Self(coords)
    }

    pub fn scalar(x: f64) -> Result<Self> {
        Self::new(alloc::vec![x])
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub(crate) fn coords_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// First coordinate, for one-dimensional problems.
    pub fn x(&self) -> f64 {
        self.0[0]
    }
}

/// Independent log-normal coordinates: `ln x_i ~ N(mu_log, sigma_log^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceDistribution {
    pub dim: usize,
    pub mu_log: f64,
    pub sigma_log: f64,
}

impl ReferenceDistribution {
    pub fn new(dim: usize, mu_log: f64, sigma_log: f64) -> Result<Self> {
        let d = Self {
            dim,
            mu_log,
            sigma_log,
        };
        d.validate()?;
        Ok(d)
    }

    /// Builds the distribution from a variance instead of a standard deviation.
    pub fn from_variance(dim: usize, mu_log: f64, var_log: f64) -> Result<Self> {
        if !(var_log >= 0.0) {
            return Err(Error::Parameter(format!("variance {var_log} < 0")));
        }
        Self::new(dim, mu_log, math::sqrt(var_log))
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Parameter("reference dimension must be >= 1".into()));
        }
        if !self.mu_log.is_finite() || !(self.sigma_log >= 0.0) || !self.sigma_log.is_finite() {
            return Err(Error::Parameter(format!(
                "invalid log-normal parameters mu={} sigma={}",
                self.mu_log, self.sigma_log
            )));
        }
        Ok(())
    }

    pub fn sample(&self, rng: &mut RngStream) -> State {
        let coords = (0..self.dim)
            .map(|_| math::exp(self.mu_log + self.sigma_log * rng.normal()))
            .collect();
        State::from_vec_unchecked(coords)
    }

    /// Log density with respect to Lebesgue measure on the positive orthant.
    pub fn log_density(&self, x: &State) -> Result<f64> {
        if x.dim() != self.dim {
            return Err(Error::Domain(format!(
                "state dimension {} != reference dimension {}",
                x.dim(),
                self.dim
            )));
        }
        let norm = math::ln(self.sigma_log) + math::LN_SQRT_2PI;
        let mut total = 0.0;
        for &c in x.coords() {
            if !(c > 0.0) {
                return Err(Error::Domain(format!("coordinate {c} is not positive")));
            }
            let y = math::ln(c);
            let z = (y - self.mu_log) / self.sigma_log;
            total += -y - norm - 0.5 * z * z;
        }
        Ok(total)
    }

    /// CDF of one coordinate.
    pub fn marginal_cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        math::norm_cdf((math::ln(x) - self.mu_log) / self.sigma_log)
    }
}

/// Draws one state from the reference distribution.
pub fn sample_ref(dist: &ReferenceDistribution, rng: &mut RngStream) -> State {
    dist.sample(rng)
}

pub fn log_density_ref(dist: &ReferenceDistribution, x: &State) -> Result<f64> {
    dist.log_density(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_sample_is_exp_mu() {
        let d = ReferenceDistribution::new(1, 1.5, 0.0).unwrap();
        let mut rng = RngStream::new(1, 0);
        let x = d.sample(&mut rng);
        assert!((x.x() - 1.5f64.exp()).abs() < 1e-12);
        assert!((x.x() - 4.4817).abs() < 1e-4);
    }

    #[test]
    fn samples_are_positive() {
        let d = ReferenceDistribution::new(3, 1.5, 1.5).unwrap();
        let mut rng = RngStream::new(3, 0);
        for _ in 0..1000 {
            let x = d.sample(&mut rng);
            assert_eq!(x.dim(), 3);
            assert!(x.coords().iter().all(|c| *c > 0.0));
        }
    }

    #[test]
    fn log_mean_matches_mu() {
        let d = ReferenceDistribution::new(1, 1.5, 1.5).unwrap();
        let mut rng = RngStream::new(11, 0);
        let n = 100_000;
        let mean = (0..n).map(|_| d.sample(&mut rng).x().ln()).sum::<f64>() / n as f64;
        assert!((mean - 1.5).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn sampling_is_reproducible() {
        let d = ReferenceDistribution::new(4, 0.3, 0.7).unwrap();
        let a = d.sample(&mut RngStream::new(5, 2));
        let b = d.sample(&mut RngStream::new(5, 2));
        assert_eq!(a, b);
    }

    #[test]
    fn standard_lognormal_density_at_one() {
        let d = ReferenceDistribution::new(1, 0.0, 1.0).unwrap();
        let v = d.log_density(&State::scalar(1.0).unwrap()).unwrap();
        assert!((v + 0.918_938_533_204_672_7).abs() < 1e-12);
    }

    #[test]
    fn density_factorizes() {
        let d1 = ReferenceDistribution::new(1, 0.4, 1.3).unwrap();
        let d2 = ReferenceDistribution::new(2, 0.4, 1.3).unwrap();
        let a = d1.log_density(&State::scalar(0.7).unwrap()).unwrap();
        let b = d1.log_density(&State::scalar(3.1).unwrap()).unwrap();
        let ab = d2
            .log_density(&State::new(alloc::vec![0.7, 3.1]).unwrap())
            .unwrap();
        assert!((a + b - ab).abs() < 1e-12);
    }

    #[test]
    fn zero_coordinate_is_a_domain_error() {
        let d = ReferenceDistribution::new(2, 0.0, 1.0).unwrap();
        let x = State::from_vec_unchecked(alloc::vec![1.0, 0.0]);
        assert!(matches!(d.log_density(&x), Err(Error::Domain(_))));
        assert!(State::new(alloc::vec![1.0, 0.0]).is_err());
    }

    #[test]
    fn variance_reading() {
        let d = ReferenceDistribution::from_variance(1, 1.5, 1.5).unwrap();
        assert!((d.sigma_log - 1.5f64.sqrt()).abs() < 1e-15);
    }
}
