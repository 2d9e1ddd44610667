//! Natural cubic spline interpolation.
//!
//! Second derivatives at the two endpoints are pinned to zero, giving
//! the classic tridiagonal system solved with one forward sweep and a
//! back substitution.  With exactly two knots the spline degenerates to
//! the straight line through them.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct CubicSpline {
    xs: Vec<f64>,
    ys: Vec<f64>,
    /// Second derivative of the spline at each knot.
    y2s: Vec<f64>,
}

impl CubicSpline {
    /// Fit a natural cubic spline through `(xs[i], ys[i])`.
    /// Knot positions must be strictly increasing and at least two.
    pub fn fit(xs: &[f64], ys: &[f64]) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::numerical(format!(
                "spline: {} knot positions but {} values",
                xs.len(),
                ys.len()
            )));
        }
        if xs.len() < 2 {
            return Err(Error::numerical("spline: need at least two knots"));
        }
        for w in xs.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::numerical(format!(
                    "spline: knot positions must be strictly increasing, got {} then {}",
                    w[0], w[1]
                )));
            }
        }

        let n = xs.len();
        let mut y2s = vec![0.0; n];
        // Forward sweep of the tridiagonal system; u holds the
        // decomposed right-hand side.  Natural boundary: y2[0] = y2[n-1] = 0.
        let mut u = vec![0.0; n];
        for i in 1..n - 1 {
            let sig = (xs[i] - xs[i - 1]) / (xs[i + 1] - xs[i - 1]);
            let p = sig * y2s[i - 1] + 2.0;
            y2s[i] = (sig - 1.0) / p;
            let slope_right = (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i]);
            let slope_left = (ys[i] - ys[i - 1]) / (xs[i] - xs[i - 1]);
            u[i] = (6.0 * (slope_right - slope_left) / (xs[i + 1] - xs[i - 1]) - sig * u[i - 1]) / p;
        }
        for i in (0..n - 1).rev() {
            y2s[i] = y2s[i] * y2s[i + 1] + u[i];
        }

        Ok(CubicSpline {
            xs: xs.to_vec(),
            ys: ys.to_vec(),
            y2s,
        })
    }

    /// Evaluate at `x`.  Outside the knot range the boundary cubic is
    /// extended (callers here only evaluate inside the range).
    pub fn evaluate(&self, x: f64) -> f64 {
        let n = self.xs.len();
        // binary search for the bracketing interval
        let mut lo = 0;
        let mut hi = n - 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.xs[mid] > x {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let h = self.xs[hi] - self.xs[lo];
        let a = (self.xs[hi] - x) / h;
        let b = (x - self.xs[lo]) / h;
        a * self.ys[lo]
            + b * self.ys[hi]
            + ((a * a * a - a) * self.y2s[lo] + (b * b * b - b) * self.y2s[hi]) * (h * h) / 6.0
    }
}
