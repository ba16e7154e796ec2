//! Weighted least squares and logistic regression on dense design matrices.

use nalgebra::{DMatrix, DVector};

use super::invert;
use crate::error::{Error, Result};
use crate::numerics::dist::{bernoulli_loglik, expit};
use crate::numerics::root::{solve_root, RootProblem};

#[derive(Clone, Debug)]
pub struct LinearFit {
    pub coef: Vec<f64>,
    pub residuals: Vec<f64>,
    /// `(XᵀWX)⁻¹`
    pub bread: DMatrix<f64>,
}

pub fn wls(design: &DMatrix<f64>, y: &[f64], w: &[f64]) -> Result<LinearFit> {
    let (n, p) = design.shape();
    if y.len() != n || w.len() != n {
        return Err(Error::InvalidInput("design, response and weights differ in length".into()));
    }
    if n < p {
        return Err(Error::Underdetermined { sampled: n, params: p });
    }
    let mut xtwx = DMatrix::zeros(p, p);
    let mut xtwy = DVector::zeros(p);
    for i in 0..n {
        let wi = w[i];
        for j in 0..p {
            let xij = design[(i, j)] * wi;
            xtwy[j] += xij * y[i];
            for k in j..p {
                xtwx[(j, k)] += xij * design[(i, k)];
            }
        }
    }
    for j in 0..p {
        for k in 0..j {
            xtwx[(j, k)] = xtwx[(k, j)];
        }
    }
    let bread = invert(&xtwx).map_err(|_| Error::Degenerate("singular weighted design".into()))?;
    let coef = &bread * xtwy;
    let fitted = design * &coef;
    let residuals = y.iter().zip(fitted.iter()).map(|(y, f)| y - f).collect();
    Ok(LinearFit {
        coef: coef.iter().copied().collect(),
        residuals,
        bread,
    })
}

pub fn ols(design: &DMatrix<f64>, y: &[f64]) -> Result<LinearFit> {
    wls(design, y, &vec![1.0; y.len()])
}

/// Influence values `n (XᵀWX)⁻¹ wᵢ xᵢ eᵢ` of a (weighted) least-squares fit.
pub fn ls_influence(design: &DMatrix<f64>, fit: &LinearFit, w: &[f64]) -> DMatrix<f64> {
    let n = design.nrows();
    let mut score = design.clone();
    for i in 0..n {
        let s = w[i] * fit.residuals[i] * n as f64;
        score.row_mut(i).scale_mut(s);
    }
    score * &fit.bread
}

#[derive(Clone, Debug)]
pub struct LogisticFit {
    pub coef: Vec<f64>,
    /// Inverse of the (weighted) observed information `Σ wᵢ μᵢ(1−μᵢ) xᵢxᵢᵀ`.
    pub covariance: DMatrix<f64>,
    pub converged: bool,
}

impl LogisticFit {
    pub fn standard_errors(&self) -> Vec<f64> {
        (0..self.coef.len()).map(|j| self.covariance[(j, j)].sqrt()).collect()
    }
}

pub fn linear_predictor(design: &DMatrix<f64>, row: usize, coef: &[f64]) -> f64 {
    coef.iter().enumerate().map(|(j, c)| c * design[(row, j)]).sum()
}

/// Logistic regression by Newton iteration on the normalized score
/// `(1/Σw) Σ wᵢ xᵢ (yᵢ − expit(xᵢᵀθ))`.
pub fn logistic_fit(
    design: &DMatrix<f64>,
    y: &[f64],
    weights: Option<&[f64]>,
    init: Option<&[f64]>,
) -> Result<LogisticFit> {
    let (n, p) = design.shape();
    if y.len() != n {
        return Err(Error::InvalidInput("design and response differ in length".into()));
    }
    if n < p {
        return Err(Error::Underdetermined { sampled: n, params: p });
    }
    let w = |i: usize| weights.map_or(1.0, |w| w[i]);
    let total: f64 = (0..n).map(w).sum();
    let residual = |theta: &[f64]| -> Vec<f64> {
        let mut g = vec![0.0; p];
        for i in 0..n {
            let r = w(i) * (y[i] - expit(linear_predictor(design, i, theta)));
            for (j, gj) in g.iter_mut().enumerate() {
                *gj += r * design[(i, j)];
            }
        }
        g.iter().map(|v| v / total).collect()
    };
    let information = |theta: &[f64]| -> DMatrix<f64> {
        let mut h = DMatrix::zeros(p, p);
        for i in 0..n {
            let mu = expit(linear_predictor(design, i, theta));
            let v = w(i) * mu * (1.0 - mu);
            for j in 0..p {
                let xj = design[(i, j)] * v;
                for k in j..p {
                    h[(j, k)] += xj * design[(i, k)];
                }
            }
        }
        for j in 0..p {
            for k in 0..j {
                h[(j, k)] = h[(k, j)];
            }
        }
        h
    };
    let start = init.map(|s| s.to_vec()).unwrap_or_else(|| vec![0.0; p]);
    let problem = RootProblem::new(start, residual).with_jacobian(|t: &[f64]| -information(t) / total);
    let (coef, converged) = match solve_root(&problem) {
        Ok(c) => (c, true),
        Err(Error::NoConvergence { last, .. }) => (last, false),
        Err(e) => return Err(e),
    };
    let covariance = invert(&information(&coef)).unwrap_or_else(|_| DMatrix::from_element(p, p, f64::NAN));
    // Fitted probabilities pinned at 0 or 1 indicate (quasi-)separation.
    let max_eta = (0..n).map(|i| linear_predictor(design, i, &coef).abs()).fold(0.0, f64::max);
    let converged = converged && covariance.iter().all(|v| v.is_finite()) && max_eta < 30.0;
    Ok(LogisticFit {
        coef,
        covariance,
        converged,
    })
}

/// Bernoulli log-likelihood of `y` under coefficients `coef`.
pub fn logistic_loglik(design: &DMatrix<f64>, y: &[f64], coef: &[f64]) -> f64 {
    (0..design.nrows())
        .map(|i| bernoulli_loglik(y[i], linear_predictor(design, i, coef)))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn design(x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(x.len(), 2, |i, j| if j == 0 { 1.0 } else { x[i] })
    }

    #[test]
    fn ols_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, 3.0, 5.0, 7.0];
        let fit = ols(&design(&x), &y).unwrap();
        assert!((fit.coef[0] - 1.0).abs() < 1e-12);
        assert!((fit.coef[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn logistic_symmetric_data() {
        // x and −x exchangeable with balanced classes ⇒ intercept 0.
        let x = [-2.0, -1.0, -0.5, 0.5, 1.0, 2.0, -1.5, 1.5];
        let y = [0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0];
        let fit = logistic_fit(&design(&x), &y, None, None).unwrap();
        assert!(fit.converged);
        assert!(fit.coef[0].abs() < 1e-9);
    }

    #[test]
    fn separation_is_flagged() {
        let x = [-2.0, -1.0, 1.0, 2.0];
        let y = [0.0, 0.0, 1.0, 1.0];
        let fit = logistic_fit(&design(&x), &y, None, None).unwrap();
        assert!(!fit.converged);
    }

    #[test]
    fn frequency_weights_match_replication() {
        let x = [-1.0, 0.0, 1.0, 2.0, 0.5];
        let y = [0.0, 1.0, 0.0, 1.0, 1.0];
        let w = [2.0, 1.0, 3.0, 1.0, 2.0];
        let weighted = logistic_fit(&design(&x), &y, Some(&w), None).unwrap();
        let mut xr = Vec::new();
        let mut yr = Vec::new();
        for i in 0..5 {
            for _ in 0..w[i] as usize {
                xr.push(x[i]);
                yr.push(y[i]);
            }
        }
        let replicated = logistic_fit(&design(&xr), &yr, None, None).unwrap();
        for j in 0..2 {
            assert!((weighted.coef[j] - replicated.coef[j]).abs() < 1e-9);
        }
    }
}
