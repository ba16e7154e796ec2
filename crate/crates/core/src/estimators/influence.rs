use nalgebra::DMatrix;

use super::{EstimateRecord, TwoPhaseDataset};
use crate::error::{Error, Result};

/// `(1/n²) Σᵢ infᵢ infᵢᵀ`.
pub fn sandwich_variance(record: &EstimateRecord) -> DMatrix<f64> {
    sandwich_from(&record.influence)
}

pub(crate) fn sandwich_from(influence: &DMatrix<f64>) -> DMatrix<f64> {
    let n = influence.nrows() as f64;
    let v = influence.transpose() * influence / (n * n);
    // Symmetrize away rounding.
    (&v + v.transpose()) * 0.5
}

/// Jackknife influence values `n (θ̂ − θ̂₋ᵢ)`, one row per unit.
pub fn empirical_influence<F>(data: &TwoPhaseDataset, fit: F) -> Result<DMatrix<f64>>
where
    F: Fn(&TwoPhaseDataset) -> Result<Vec<f64>>,
{
    let n = data.len();
    let full = fit(data)?;
    let p = full.len();
    let mut out = DMatrix::zeros(n, p);
    for i in 0..n {
        let loo = fit(&data.without(i)).map_err(|e| Error::LeaveOneOut {
            unit: i,
            source: Box::new(e),
        })?;
        for j in 0..p {
            out[(i, j)] = n as f64 * (full[j] - loo[j]);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::EstimatorKind;

    fn xs(values: &[f64]) -> TwoPhaseDataset {
        let mut d = TwoPhaseDataset::new(1, 0);
        for v in values {
            d.push(*v, &[], 1.0, Some(&[*v])).unwrap();
        }
        d
    }

    #[test]
    fn jackknife_of_the_mean() {
        let d = xs(&[1.0, 2.0, 3.0]);
        let inf = empirical_influence(&d, |d| Ok(vec![d.y().iter().sum::<f64>() / d.len() as f64])).unwrap();
        // n (x̄ − x̄₋ᵢ) = n/(n−1) (xᵢ − x̄)
        let expected = [-1.5, 0.0, 1.5];
        for (i, e) in expected.iter().enumerate() {
            assert!((inf[(i, 0)] - e).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_estimator_has_zero_influence() {
        let d = xs(&[1.0, 5.0, -2.0]);
        let inf = empirical_influence(&d, |_| Ok(vec![0.7, -3.0])).unwrap();
        assert!(inf.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn failing_refit_names_the_unit() {
        let d = xs(&[1.0, 5.0, -2.0]);
        let err = empirical_influence(&d, |d| {
            if d.len() == 3 || d.y()[0] != 5.0 {
                Ok(vec![0.0])
            } else {
                Err(Error::Degenerate("boom".into()))
            }
        })
        .unwrap_err();
        assert!(matches!(err, Error::LeaveOneOut { unit: 0, .. }));
    }

    #[test]
    fn sandwich_examples() {
        let zero = EstimateRecord::from_influence(EstimatorKind::Ipw, vec![0.0], DMatrix::zeros(4, 1), true);
        assert_eq!(sandwich_variance(&zero)[(0, 0)], 0.0);
        let pm = EstimateRecord::from_influence(
            EstimatorKind::Ipw,
            vec![0.0],
            DMatrix::from_column_slice(2, 1, &[-1.0, 1.0]),
            true,
        );
        assert!((sandwich_variance(&pm)[(0, 0)] - 0.5).abs() < 1e-15);
    }
}
