//! Two-phase estimators: inverse-probability weighting, augmented IPW,
//! weight calibration, and influence-function variance.

mod calibration;
mod dataset;
mod influence;
pub mod regression;

pub use calibration::{calibrate_weights, CalibrationMethod, CalibrationResult};
pub use dataset::{TwoPhaseDataset, Unit};
pub use influence::{empirical_influence, sandwich_variance};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::numerics::root::{numeric_jacobian, solve_root, RootProblem};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EstimatorKind {
    Ipw,
    Aipw,
    Calibrated,
    Efficient,
}

impl EstimatorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorKind::Ipw => "ipw",
            EstimatorKind::Aipw => "aipw",
            EstimatorKind::Calibrated => "calibrated",
            EstimatorKind::Efficient => "efficient",
        }
    }
}

/// Output of one estimator on one dataset.
#[derive(Clone, Debug)]
pub struct EstimateRecord {
    pub estimator: EstimatorKind,
    pub theta_hat: Vec<f64>,
    /// `n × p` matrix of per-unit influence values.
    pub influence: DMatrix<f64>,
    pub variance: DMatrix<f64>,
    pub converged: bool,
}

impl EstimateRecord {
    /// Assemble a record; the variance is the sandwich of `influence`.
    pub fn from_influence(
        estimator: EstimatorKind,
        theta_hat: Vec<f64>,
        influence: DMatrix<f64>,
        converged: bool,
    ) -> Self {
        let variance = influence::sandwich_from(&influence);
        Self {
            estimator,
            theta_hat,
            influence,
            variance,
            converged,
        }
    }

    pub fn n(&self) -> usize {
        self.influence.nrows()
    }
}

/// Solves `Σ (rᵢ/πᵢ) U(θ; unitᵢ) = 0`.
///
/// `score(θ, unit, out)` writes the complete-data estimating function into
/// `out` and is only called on sampled units. Non-convergence produces a
/// record with `converged = false` holding the last iterate.
pub fn ipw_estimate<S>(data: &TwoPhaseDataset, score: S, init: &[f64]) -> Result<EstimateRecord>
where
    S: Fn(&[f64], &Unit<'_>, &mut [f64]),
{
    weighted_solve(
        data,
        &score,
        None::<&fn(&[f64], &Unit<'_>, &mut [f64])>,
        init,
        EstimatorKind::Ipw,
    )
}

/// Solves `Σ (rᵢ/πᵢ) U(θ) + Σ (1 − rᵢ/πᵢ) A(θ; phase-1 dataᵢ) = 0`.
///
/// `augmentation` only ever sees the phase-1 view of a unit (`x = None`).
pub fn aipw_estimate<S, A>(
    data: &TwoPhaseDataset,
    score: S,
    augmentation: A,
    init: &[f64],
) -> Result<EstimateRecord>
where
    S: Fn(&[f64], &Unit<'_>, &mut [f64]),
    A: Fn(&[f64], &Unit<'_>, &mut [f64]),
{
    weighted_solve(data, &score, Some(&augmentation), init, EstimatorKind::Aipw)
}

fn weighted_solve<S, A>(
    data: &TwoPhaseDataset,
    score: &S,
    augmentation: Option<&A>,
    init: &[f64],
    kind: EstimatorKind,
) -> Result<EstimateRecord>
where
    S: Fn(&[f64], &Unit<'_>, &mut [f64]),
    A: Fn(&[f64], &Unit<'_>, &mut [f64]),
{
    let p = init.len();
    let sampled = data.n_sampled();
    if sampled < p {
        return Err(Error::Underdetermined { sampled, params: p });
    }
    let n = data.len() as f64;

    // Per-unit estimating-function contribution.
    let contribution = |theta: &[f64], u: &Unit<'_>, out: &mut [f64], buf: &mut [f64]| {
        out.iter_mut().for_each(|v| *v = 0.0);
        if u.r {
            score(theta, u, buf);
            let w = 1.0 / u.pi;
            for (o, b) in out.iter_mut().zip(buf.iter()) {
                *o += w * b;
            }
        }
        if let Some(aug) = augmentation {
            aug(theta, &u.phase1(), buf);
            let c = 1.0 - u.ht_weight();
            for (o, b) in out.iter_mut().zip(buf.iter()) {
                *o += c * b;
            }
        }
    };

    let residual = |theta: &[f64]| -> Vec<f64> {
        let mut acc = vec![0.0; p];
        let mut out = vec![0.0; p];
        let mut buf = vec![0.0; p];
        for u in data.units() {
            if !u.r && augmentation.is_none() {
                continue;
            }
            contribution(theta, &u, &mut out, &mut buf);
            for (a, o) in acc.iter_mut().zip(&out) {
                *a += o;
            }
        }
        acc.iter().map(|a| a / n).collect()
    };

    let problem = RootProblem::new(init.to_vec(), residual);
    let (theta_hat, converged) = match solve_root(&problem) {
        Ok(t) => (t, true),
        Err(Error::NoConvergence { last, .. }) => (last, false),
        Err(e) => return Err(e),
    };

    let f0 = problem.residual(&theta_hat);
    let jac = numeric_jacobian(&|t: &[f64]| problem.residual(t), &theta_hat, &f0);
    let inv = invert(&jac)?;

    let mut influence = DMatrix::zeros(data.len(), p);
    let mut out = vec![0.0; p];
    let mut buf = vec![0.0; p];
    for (i, u) in data.units().enumerate() {
        if !u.r && augmentation.is_none() {
            continue;
        }
        contribution(&theta_hat, &u, &mut out, &mut buf);
        let psi = DVector::from_column_slice(&out);
        let inf = -&inv * psi;
        influence.row_mut(i).copy_from(&inf.transpose());
    }
    Ok(EstimateRecord::from_influence(kind, theta_hat, influence, converged))
}

pub(crate) fn invert(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    m.clone()
        .try_inverse()
        .filter(|inv| inv.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::Degenerate("singular Jacobian".into()))
}
