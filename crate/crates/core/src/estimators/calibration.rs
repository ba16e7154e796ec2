use nalgebra::{DMatrix, DVector};

use super::TwoPhaseDataset;
use crate::error::{Error, Result};
use crate::numerics::root::{solve_root, RootProblem};

/// Raking iterations before falling back to linear calibration.
const RAKING_MAX_ITER: usize = 100;
const CONSTRAINT_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CalibrationMethod {
    Raking,
    Linear,
}

#[derive(Clone, Debug)]
pub struct CalibrationResult {
    /// Calibrated weights, one per unit; zero for unsampled units.
    pub adjusted_weights: Vec<f64>,
    /// Largest relative violation of the calibration equations.
    pub constraint_residual: f64,
    pub auxiliaries: DMatrix<f64>,
    pub method: CalibrationMethod,
}

/// Calibrate the `1/π` weights so that weighted phase-2 totals of the
/// auxiliaries (`n × q`, one row per unit) equal their phase-1 totals.
///
/// Raking (`gᵢ = exp(λᵀaᵢ)`) is tried first; if it fails the linear (GREG)
/// adjustment `gᵢ = 1 + λᵀaᵢ` is used provided all weights stay positive.
pub fn calibrate_weights(data: &TwoPhaseDataset, auxiliaries: &DMatrix<f64>) -> Result<CalibrationResult> {
    let n = data.len();
    let q = auxiliaries.ncols();
    if auxiliaries.nrows() != n {
        return Err(Error::InvalidInput(format!(
            "auxiliaries have {} rows for {n} units",
            auxiliaries.nrows()
        )));
    }
    let sampled: Vec<usize> = (0..n).filter(|&i| data.r()[i]).collect();
    let a_s = DMatrix::from_fn(sampled.len(), q, |i, j| auxiliaries[(sampled[i], j)]);
    if rank(&a_s) < q {
        return Err(Error::CollinearAuxiliaries);
    }
    let d: Vec<f64> = sampled.iter().map(|&i| 1.0 / data.pi()[i]).collect();
    let totals: Vec<f64> = (0..q).map(|j| auxiliaries.column(j).sum()).collect();
    let scale: Vec<f64> = (0..q)
        .map(|j| auxiliaries.column(j).iter().map(|v| v.abs()).sum::<f64>().max(f64::MIN_POSITIVE))
        .collect();

    let relative_violation = |g: &[f64]| -> f64 {
        (0..q)
            .map(|j| {
                let t: f64 = (0..sampled.len()).map(|i| d[i] * g[i] * a_s[(i, j)]).sum();
                (t - totals[j]).abs() / scale[j]
            })
            .fold(0.0, f64::max)
    };

    let raking = {
        let residual = |lambda: &[f64]| -> Vec<f64> {
            let mut out = vec![0.0; q];
            for i in 0..sampled.len() {
                let eta: f64 = (0..q).map(|j| lambda[j] * a_s[(i, j)]).sum();
                let w = d[i] * eta.exp();
                for (j, o) in out.iter_mut().enumerate() {
                    *o += w * a_s[(i, j)];
                }
            }
            (0..q).map(|j| (out[j] - totals[j]) / scale[j]).collect()
        };
        let jacobian = |lambda: &[f64]| -> DMatrix<f64> {
            let mut jac = DMatrix::zeros(q, q);
            for i in 0..sampled.len() {
                let eta: f64 = (0..q).map(|j| lambda[j] * a_s[(i, j)]).sum();
                let w = d[i] * eta.exp();
                for j in 0..q {
                    for k in 0..q {
                        jac[(j, k)] += w * a_s[(i, j)] * a_s[(i, k)] / scale[j];
                    }
                }
            }
            jac
        };
        let problem = RootProblem::new(vec![0.0; q], residual)
            .with_jacobian(jacobian)
            .tolerance(1e-12)
            .max_iter(RAKING_MAX_ITER);
        solve_root(&problem).ok().map(|lambda| {
            (0..sampled.len())
                .map(|i| (0..q).map(|j| lambda[j] * a_s[(i, j)]).sum::<f64>().exp())
                .collect::<Vec<f64>>()
        })
    };

    let (g, method) = match raking {
        Some(g) if relative_violation(&g) < CONSTRAINT_TOL => (g, CalibrationMethod::Raking),
        _ => {
            let mut m = DMatrix::zeros(q, q);
            let mut rhs = DVector::from_column_slice(&totals);
            for i in 0..sampled.len() {
                for j in 0..q {
                    rhs[j] -= d[i] * a_s[(i, j)];
                    for k in 0..q {
                        m[(j, k)] += d[i] * a_s[(i, j)] * a_s[(i, k)];
                    }
                }
            }
            let lambda = m.lu().solve(&rhs).ok_or(Error::CollinearAuxiliaries)?;
            let g: Vec<f64> = (0..sampled.len())
                .map(|i| 1.0 + (0..q).map(|j| lambda[j] * a_s[(i, j)]).sum::<f64>())
                .collect();
            let violation = relative_violation(&g);
            if g.iter().any(|v| *v <= 0.0) || violation >= CONSTRAINT_TOL {
                return Err(Error::CalibrationFailed { residual: violation });
            }
            (g, CalibrationMethod::Linear)
        }
    };

    let mut adjusted = vec![0.0; n];
    for (k, &i) in sampled.iter().enumerate() {
        adjusted[i] = d[k] * g[k];
    }
    Ok(CalibrationResult {
        constraint_residual: relative_violation(&g),
        adjusted_weights: adjusted,
        auxiliaries: auxiliaries.clone(),
        method,
    })
}

fn rank(m: &DMatrix<f64>) -> usize {
    if m.nrows() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0, f64::max);
    sv.iter().filter(|s| **s > max * 1e-10).count()
}
