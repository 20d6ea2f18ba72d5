//! Natural cubic spline interpolation with tangent-linear extrapolation.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::linalg::tridiagonal_solve;
use crate::{Error, Result};

/// Natural cubic spline through a set of snapshot pairs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "SplineKnots", into = "SplineKnots")]
pub struct SplineSurrogate {
    xs: Vec<f64>,
    ys: Vec<f64>,
    /// Second derivatives at the knots.
    m: Vec<f64>,
}

#[derive(Clone, Serialize, Deserialize)]
struct SplineKnots {
    x: Vec<f64>,
    y: Vec<f64>,
}

impl From<SplineSurrogate> for SplineKnots {
    fn from(s: SplineSurrogate) -> Self {
        Self { x: s.xs, y: s.ys }
    }
}

impl TryFrom<SplineKnots> for SplineSurrogate {
    type Error = Error;
    fn try_from(k: SplineKnots) -> Result<Self> {
        if k.x.len() != k.y.len() {
            return Err(Error::Domain("knot arrays differ in length".into()));
        }
        let pts: Vec<(f64, f64)> = k.x.into_iter().zip(k.y).collect();
        spline_fit(&pts)
    }
}

impl SplineSurrogate {
    pub fn knots(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.xs.iter().copied().zip(self.ys.iter().copied())
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    /// Returns the spline with `(x, y)` added, or `None` if `x` is already a
    /// knot with the same value.
    pub fn with_point(&self, x: f64, y: f64) -> Result<Option<Self>> {
        let mut pts: Vec<(f64, f64)> = self.knots().collect();
        match self.xs.binary_search_by(|v| v.total_cmp(&x)) {
            Ok(i) if self.ys[i] == y => return Ok(None),
            Ok(_) => {
                return Err(Error::Domain(format!(
                    "conflicting values at duplicate abscissa {x}"
                )))
            }
            Err(_) => pts.push((x, y)),
        }
        spline_fit(&pts).map(Some)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        let (xs, ys, m) = (&self.xs, &self.ys, &self.m);
        if x <= xs[0] {
            let h = xs[1] - xs[0];
            let slope = (ys[1] - ys[0]) / h - h * (2.0 * m[0] + m[1]) / 6.0;
            return ys[0] + slope * (x - xs[0]);
        }
        if x >= xs[n - 1] {
            let h = xs[n - 1] - xs[n - 2];
            let slope = (ys[n - 1] - ys[n - 2]) / h + h * (m[n - 2] + 2.0 * m[n - 1]) / 6.0;
            return ys[n - 1] + slope * (x - xs[n - 1]);
        }
        let i = xs.partition_point(|&v| v <= x) - 1;
        let h = xs[i + 1] - xs[i];
        let a = (xs[i + 1] - x) / h;
        let b = (x - xs[i]) / h;
        a * ys[i]
            + b * ys[i + 1]
            + ((a * a * a - a) * m[i] + (b * b * b - b) * m[i + 1]) * h * h / 6.0
    }
}

fn second_derivatives(xs: &[f64], ys: &[f64]) -> Result<Vec<f64>> {
    let n = xs.len();
    let mut m = alloc::vec![0.0; n];
    if n <= 2 {
        return Ok(m);
    }
    let k = n - 2;
    let mut sub = alloc::vec![0.0; k];
    let mut diag = alloc::vec![0.0; k];
    let mut sup = alloc::vec![0.0; k];
    let mut rhs = alloc::vec![0.0; k];
    for r in 0..k {
        let i = r + 1;
        let h0 = xs[i] - xs[i - 1];
        let h1 = xs[i + 1] - xs[i];
        sub[r] = h0;
        diag[r] = 2.0 * (h0 + h1);
        sup[r] = h1;
        rhs[r] = 6.0 * ((ys[i + 1] - ys[i]) / h1 - (ys[i] - ys[i - 1]) / h0);
    }
    let inner = tridiagonal_solve(&sub, &diag, &sup, &rhs)?;
    m[1..n - 1].copy_from_slice(&inner);
    Ok(m)
}

/// Fits a natural cubic spline. Duplicate abscissae with equal values are
/// merged; conflicting duplicates are an error.
pub fn spline_fit(points: &[(f64, f64)]) -> Result<SplineSurrogate> {
    let mut pts: Vec<(f64, f64)> = points.to_vec();
    if pts.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::Domain("spline points must be finite".into()));
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut xs: Vec<f64> = Vec::with_capacity(pts.len());
    let mut ys: Vec<f64> = Vec::with_capacity(pts.len());
    for (x, y) in pts {
        if let Some(&last) = xs.last() {
            if last == x {
                if *ys.last().unwrap() != y {
                    return Err(Error::Domain(format!(
                        "conflicting values at duplicate abscissa {x}"
                    )));
                }
                continue;
            }
        }
        xs.push(x);
        ys.push(y);
    }
    if xs.len() < 2 {
        return Err(Error::Domain(
            "spline needs at least two distinct abscissae".into(),
        ));
    }
    let m = second_derivatives(&xs, &ys)?;
    Ok(SplineSurrogate { xs, ys, m })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three() -> SplineSurrogate {
        spline_fit(&[(0.0, 0.0), (1.0, 1.0), (2.0, 0.0)]).unwrap()
    }

    #[test]
    fn interpolates_knots() {
        let s = three();
        assert_eq!(s.eval(0.0), 0.0);
        assert!((s.eval(1.0) - 1.0).abs() < 1e-15);
        assert!(s.eval(2.0).abs() < 1e-15);
    }

    #[test]
    fn three_knot_value() {
        // M1 = -3 from 4 M1 = 6 (-1 - 1); at 0.5: 0.5 + (0.125 - 0.5)(-3)/6.
        assert!((three().eval(0.5) - 0.6875).abs() < 1e-14);
    }

    #[test]
    fn two_points_give_a_line() {
        let s = spline_fit(&[(1.0, 2.0), (3.0, 6.0)]).unwrap();
        for x in [-1.0, 1.5, 2.0, 5.0] {
            assert!((s.eval(x) - 2.0 * x).abs() < 1e-14);
        }
    }

    #[test]
    fn extrapolation_is_tangent_linear() {
        let s = three();
        // slope at x = 2 is -1 - (-3)/6 = -1.5
        assert!((s.eval(3.0) - (-1.5)).abs() < 1e-14);
        assert!((s.eval(-1.0) - (-1.5)).abs() < 1e-14);
    }

    #[test]
    fn duplicates() {
        let s = spline_fit(&[(0.0, 1.0), (0.0, 1.0), (1.0, 2.0)]).unwrap();
        assert_eq!(s.len(), 2);
        assert!(spline_fit(&[(0.0, 1.0), (0.0, 2.0), (1.0, 2.0)]).is_err());
        assert!(spline_fit(&[(0.0, 1.0), (0.0, 1.0)]).is_err());
        assert!(s.with_point(0.0, 1.0).unwrap().is_none());
        assert!(s.with_point(0.0, 3.0).is_err());
        assert_eq!(s.with_point(0.5, 3.0).unwrap().unwrap().len(), 3);
    }
}
