//! Natural cubic regression splines in the truncated-power basis.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::numerics::dist::quantile;

/// Natural cubic spline with `df` basis functions (intercept excluded):
/// boundary knots at the data range and `df − 1` interior knots at equally
/// spaced quantiles. Linear beyond the boundary knots.
#[derive(Clone, Debug, PartialEq)]
pub struct NaturalSpline {
    knots: Vec<f64>,
}

impl NaturalSpline {
    pub fn with_knots(knots: Vec<f64>) -> Result<Self> {
        if knots.len() < 2 || knots.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput("spline knots must be strictly increasing, at least two".into()));
        }
        Ok(Self { knots })
    }

    pub fn from_quantiles(x: &[f64], df: usize) -> Result<Self> {
        if df < 1 || x.len() < df + 2 {
            return Err(Error::InvalidInput(format!("cannot place {df} df spline on {} points", x.len())));
        }
        let lo = x.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut knots = vec![lo];
        for k in 1..df {
            knots.push(quantile(x, k as f64 / df as f64));
        }
        knots.push(hi);
        Self::with_knots(knots)
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn df(&self) -> usize {
        self.knots.len() - 1
    }

    fn d(&self, k: usize, x: f64) -> f64 {
        let last = *self.knots.last().unwrap();
        let cube = |t: f64| if t > 0.0 { t * t * t } else { 0.0 };
        (cube(x - self.knots[k]) - cube(x - last)) / (last - self.knots[k])
    }

    /// Basis values `x, d₁ − d_{K−1}, …` at `x`.
    pub fn basis(&self, x: f64, out: &mut Vec<f64>) {
        out.clear();
        out.push(x);
        let kk = self.knots.len();
        let tail = self.d(kk - 2, x);
        for k in 0..kk - 2 {
            out.push(self.d(k, x) - tail);
        }
    }

    /// Design matrix with a leading intercept column.
    pub fn design(&self, xs: &[f64]) -> DMatrix<f64> {
        let p = self.df() + 1;
        let mut m = DMatrix::zeros(xs.len(), p);
        let mut row = Vec::with_capacity(p);
        for (i, &x) in xs.iter().enumerate() {
            self.basis(x, &mut row);
            m[(i, 0)] = 1.0;
            for (j, v) in row.iter().enumerate() {
                m[(i, j + 1)] = *v;
            }
        }
        m
    }
}
