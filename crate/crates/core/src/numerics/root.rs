//! Newton solver for estimating equations.
//!
//! Newton steps use an analytic Jacobian when one is supplied and a
//! forward-difference Jacobian otherwise, with backtracking on the squared
//! residual norm. Scalar problems fall back to bisection on a bracket.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const DEFAULT_TOLERANCE: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 200;

type ResidualFn<'a> = Box<dyn Fn(&[f64]) -> Vec<f64> + 'a>;
type JacobianFn<'a> = Box<dyn Fn(&[f64]) -> DMatrix<f64> + 'a>;

#[derive(Clone, Debug)]
enum Start {
    Point(Vec<f64>),
    Bracket(f64, f64),
}

pub struct RootProblem<'a> {
    dim: usize,
    residual: ResidualFn<'a>,
    jacobian: Option<JacobianFn<'a>>,
    start: Start,
    tolerance: f64,
    max_iter: usize,
}

impl<'a> RootProblem<'a> {
    /// Problem with an initial point; `init.len()` sets the dimension.
    pub fn new<F>(init: Vec<f64>, residual: F) -> Self
    where
        F: Fn(&[f64]) -> Vec<f64> + 'a,
    {
        Self {
            dim: init.len(),
            residual: Box::new(residual),
            jacobian: None,
            start: Start::Point(init),
            tolerance: DEFAULT_TOLERANCE,
            max_iter: DEFAULT_MAX_ITER,
        }
    }

    /// Scalar problem with a sign-changing bracket `[lo, hi]`.
    pub fn bracketed<F>(lo: f64, hi: f64, residual: F) -> Self
    where
        F: Fn(f64) -> f64 + 'a,
    {
        Self {
            dim: 1,
            residual: Box::new(move |t: &[f64]| vec![residual(t[0])]),
            jacobian: None,
            start: Start::Bracket(lo.min(hi), lo.max(hi)),
            tolerance: DEFAULT_TOLERANCE,
            max_iter: DEFAULT_MAX_ITER,
        }
    }

    pub fn with_jacobian<J>(mut self, jacobian: J) -> Self
    where
        J: Fn(&[f64]) -> DMatrix<f64> + 'a,
    {
        self.jacobian = Some(Box::new(jacobian));
        self
    }

    pub fn tolerance(mut self, tol: f64) -> Self {
        self.tolerance = tol;
        self
    }

    pub fn max_iter(mut self, n: usize) -> Self {
        self.max_iter = n;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn residual(&self, theta: &[f64]) -> Vec<f64> {
        (self.residual)(theta)
    }

    /// Jacobian at `theta`, analytic if available, else forward differences
    /// with step `1e-6 (1 + |θⱼ|)`.
    pub fn jacobian(&self, theta: &[f64]) -> DMatrix<f64> {
        if let Some(j) = &self.jacobian {
            return j(theta);
        }
        let f0 = self.residual(theta);
        numeric_jacobian(&*self.residual, theta, &f0)
    }
}

pub(crate) fn numeric_jacobian(
    residual: &dyn Fn(&[f64]) -> Vec<f64>,
    theta: &[f64],
    f0: &[f64],
) -> DMatrix<f64> {
    let p = theta.len();
    let m = f0.len();
    let mut jac = DMatrix::zeros(m, p);
    let mut probe = theta.to_vec();
    for j in 0..p {
        let h = 1e-6 * (1.0 + theta[j].abs());
        probe[j] = theta[j] + h;
        let f1 = residual(&probe);
        for i in 0..m {
            jac[(i, j)] = (f1[i] - f0[i]) / h;
        }
        probe[j] = theta[j];
    }
    jac
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |acc, x| {
        if x.is_finite() {
            acc.max(x.abs())
        } else {
            f64::INFINITY
        }
    })
}

fn sq_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Solve `residual(θ) = 0` to max-norm below the problem tolerance.
pub fn solve_root(problem: &RootProblem<'_>) -> Result<Vec<f64>> {
    match &problem.start {
        Start::Bracket(lo, hi) => bisect(problem, *lo, *hi, problem.max_iter),
        Start::Point(init) => {
            let (theta, res) = newton(problem, init.clone());
            if res < problem.tolerance {
                return Ok(theta);
            }
            if problem.dim == 1 {
                if let Some((lo, hi)) = find_bracket(problem, theta[0]) {
                    return bisect(problem, lo, hi, problem.max_iter);
                }
            }
            Err(Error::NoConvergence {
                last: theta,
                residual: res,
            })
        }
    }
}

fn newton(problem: &RootProblem<'_>, mut theta: Vec<f64>) -> (Vec<f64>, f64) {
    let mut f = problem.residual(&theta);
    let mut res = max_abs(&f);
    for _ in 0..problem.max_iter {
        if res < problem.tolerance {
            break;
        }
        let jac = problem.jacobian(&theta);
        let rhs = -DVector::from_column_slice(&f);
        let step = match jac.clone().lu().solve(&rhs) {
            Some(s) if s.iter().all(|v| v.is_finite()) => s,
            _ => match jac.pseudo_inverse(1e-12) {
                Ok(pinv) => pinv * rhs,
                Err(_) => break,
            },
        };
        let merit = sq_norm(&f);
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial: Vec<f64> = theta
                .iter()
                .zip(step.iter())
                .map(|(t, s)| t + scale * s)
                .collect();
            let ft = problem.residual(&trial);
            let m = sq_norm(&ft);
            if m.is_finite() && (m < merit || max_abs(&ft) < problem.tolerance) {
                theta = trial;
                f = ft;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            break;
        }
        res = max_abs(&f);
    }
    (theta, res)
}

fn find_bracket(problem: &RootProblem<'_>, x0: f64) -> Option<(f64, f64)> {
    let f = |x: f64| problem.residual(&[x])[0];
    let f0 = f(x0);
    if !f0.is_finite() {
        return None;
    }
    let mut width = 1e-3 * (1.0 + x0.abs());
    for _ in 0..60 {
        for x in [x0 - width, x0 + width] {
            let fx = f(x);
            if fx.is_finite() && fx.signum() != f0.signum() {
                return Some((x0.min(x), x0.max(x)));
            }
        }
        width *= 2.0;
    }
    None
}

fn bisect(problem: &RootProblem<'_>, mut lo: f64, mut hi: f64, max_iter: usize) -> Result<Vec<f64>> {
    let f = |x: f64| problem.residual(&[x])[0];
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo.abs() < problem.tolerance {
        return Ok(vec![lo]);
    }
    if fhi.abs() < problem.tolerance {
        return Ok(vec![hi]);
    }
    if !(flo.is_finite() && fhi.is_finite()) || flo.signum() == fhi.signum() {
        return Err(Error::NoConvergence {
            last: vec![0.5 * (lo + hi)],
            residual: flo.abs().min(fhi.abs()),
        });
    }
    // Bisection with at most `max_iter` halvings, then Newton polish from the
    // midpoint in case the tolerance is tighter than the bracket resolution.
    let mut mid = 0.5 * (lo + hi);
    let mut fmid = f(mid);
    for _ in 0..max_iter {
        mid = 0.5 * (lo + hi);
        fmid = f(mid);
        if fmid.abs() < problem.tolerance {
            return Ok(vec![mid]);
        }
        if fmid.signum() == flo.signum() {
            lo = mid;
            flo = fmid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * mid.abs().max(1e-300) {
            break;
        }
    }
    Err(Error::NoConvergence {
        last: vec![mid],
        residual: fmid.abs(),
    })
}
