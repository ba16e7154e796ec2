//! Aggregation of replicate outcomes into per-magnitude summaries.

use serde::Serialize;

use crate::lecam::{estimate_kappa, estimate_rho, np_power, Law, LlrSample};
use crate::numerics::dist::{ks_critical_1pct, mean, norm_ppf, quantile, sample_variance};
use crate::scenario::{Critical, ReplicateOutcome, TestSpec};

/// Level of every misspecification test.
pub const ALPHA: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EstimatorSummary {
    pub name: String,
    pub bias: f64,
    /// Replicate variance with divisor R, so that `mse = bias² + variance`.
    pub variance: f64,
    pub mse: f64,
    /// Monte Carlo standard error of `bias`.
    pub bias_se: f64,
    /// Monte Carlo standard error of `mse`.
    pub mse_se: f64,
}

impl EstimatorSummary {
    pub fn from_errors(name: &str, errors: &[f64]) -> Self {
        let r = errors.len() as f64;
        let bias = mean(errors);
        let variance = errors.iter().map(|e| (e - bias) * (e - bias)).sum::<f64>() / r;
        let sq: Vec<f64> = errors.iter().map(|e| e * e).collect();
        let mse = bias * bias + variance;
        let mse_var = sq.iter().map(|s| (s - mse) * (s - mse)).sum::<f64>() / (r - 1.0).max(1.0);
        Self {
            name: name.to_string(),
            bias,
            variance,
            mse,
            bias_se: (variance * r / (r - 1.0).max(1.0) / r).sqrt(),
            mse_se: (mse_var / r).sqrt(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TestPower {
    pub name: String,
    pub power: f64,
    pub critical_value: f64,
}

/// Everything reported for one magnitude point.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReplicationSummary {
    pub magnitude: f64,
    pub theta_star: f64,
    pub details: Vec<(String, f64)>,
    pub replicates: usize,
    pub n_used: usize,
    pub n_failed: usize,
    /// Failures among the working-law replicates used for ρ̂.
    pub n_failed_null: usize,
    pub estimators: Vec<EstimatorSummary>,
    /// Standard deviation of the log likelihood ratio under the misspecified law.
    pub kappa_hat: f64,
    /// The same under the working law.
    pub kappa_hat_null: f64,
    pub normality_diag: f64,
    pub ks_statistic: f64,
    pub ks_critical: f64,
    /// Correlation between the log likelihood ratio and the efficient minus
    /// design-based contrast, over the working-law replicates.
    pub rho_hat: f64,
    /// The same correlation over the misspecified-law replicates.
    pub rho_hat_q: f64,
    /// `n·Var(efficient)` under the working law.
    pub sigma2_hat: f64,
    /// `n·Var(efficient − design-based)` under the working law.
    pub omega2_hat: f64,
    /// The same under the misspecified law.
    pub omega2_hat_q: f64,
    /// Mean of `√n(θ̂_eff − θ*)` under the misspecified law, and its MC SE.
    pub shift_mean: f64,
    pub shift_se: f64,
    /// `κ̂ ρ̂ ω̂`
    pub shift_predicted: f64,
    /// Empirical power of the likelihood ratio test at level 0.05.
    pub power_np: f64,
    /// `Φ(κ̂ − z₀.₉₅)`
    pub power_np_theory: f64,
    pub tests: Vec<TestPower>,
}

impl ReplicationSummary {
    pub fn estimator(&self, name: &str) -> Option<&EstimatorSummary> {
        self.estimators.iter().find(|e| e.name == name)
    }

    pub fn test(&self, name: &str) -> Option<&TestPower> {
        self.tests.iter().find(|t| t.name == name)
    }
}

fn usable(outcomes: &[Option<ReplicateOutcome>]) -> Vec<&ReplicateOutcome> {
    outcomes.iter().flatten().filter(|o| o.converged && o.estimates.iter().all(|v| v.is_finite())).collect()
}

pub struct PointInput<'a> {
    pub magnitude: f64,
    pub theta_star: f64,
    pub details: Vec<(String, f64)>,
    pub scale_n: f64,
    pub estimator_names: &'a [&'static str],
    pub tests: &'a [TestSpec],
    /// Replicates under the misspecified law; `None` marks an error.
    pub q: &'a [Option<ReplicateOutcome>],
    /// Replicates under the working law (empty at magnitude zero).
    pub p: &'a [Option<ReplicateOutcome>],
}

pub fn summarize(input: &PointInput<'_>) -> ReplicationSummary {
    let q = usable(input.q);
    let p_all = usable(input.p);
    // At magnitude zero the two laws coincide.
    let null = if input.p.is_empty() { q.clone() } else { p_all.clone() };
    let root_n = input.scale_n.sqrt();
    let target = |o: &ReplicateOutcome| o.target.unwrap_or(input.theta_star);
    let estimators = input
        .estimator_names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let errors: Vec<f64> = q.iter().map(|o| o.estimates[j] - target(o)).collect();
            EstimatorSummary::from_errors(name, &errors)
        })
        .collect();

    let q_llr: Vec<f64> = q.iter().map(|o| o.loglik_ratio).collect();
    let null_llr: Vec<f64> = null.iter().map(|o| o.loglik_ratio).collect();
    let (kappa_hat, normality_diag, ks_statistic) = match LlrSample::new(q_llr.clone(), Law::Q).and_then(|s| estimate_kappa(&s)) {
        Ok(k) => (k.kappa_hat, k.normality_diag, k.ks_statistic),
        Err(_) => (0.0, f64::NAN, f64::NAN),
    };
    let kappa_hat_null = LlrSample::new(null_llr.clone(), Law::P)
        .and_then(|s| estimate_kappa(&s))
        .map(|k| k.kappa_hat)
        .unwrap_or(0.0);

    let contrast = |set: &[&ReplicateOutcome]| -> Vec<f64> { set.iter().map(|o| root_n * (o.estimates[0] - o.estimates[1])).collect() };
    let q_contrast = contrast(&q);
    let null_contrast = contrast(&null);
    // ρ, σ² and ω² are defined under the working law; κ̂ comes from the
    // misspecified law it indexes.
    let rho_hat = LlrSample::new(null_llr.clone(), Law::P)
        .and_then(|s| estimate_rho(&s, &null_contrast))
        .unwrap_or(f64::NAN);
    let rho_hat_q = LlrSample::new(q_llr.clone(), Law::Q)
        .and_then(|s| estimate_rho(&s, &q_contrast))
        .unwrap_or(f64::NAN);
    let eff: Vec<f64> = null.iter().map(|o| root_n * (o.estimates[0] - target(o))).collect();
    let sigma2_hat = sample_variance(&eff);
    let omega2_hat = sample_variance(&null_contrast);
    let omega2_hat_q = sample_variance(&q_contrast);

    let shifts: Vec<f64> = q.iter().map(|o| root_n * (o.estimates[0] - target(o))).collect();
    let shift_mean = mean(&shifts);
    let shift_se = (sample_variance(&shifts) / shifts.len() as f64).sqrt();
    let shift_predicted = if rho_hat.is_finite() { kappa_hat * rho_hat * omega2_hat.sqrt() } else { 0.0 };

    let power_np = if input.p.is_empty() {
        ALPHA
    } else {
        let crit = quantile(&null_llr, 1.0 - ALPHA);
        q_llr.iter().filter(|&&l| l > crit).count() as f64 / q_llr.len() as f64
    };
    let power_np_theory = np_power(kappa_hat, ALPHA).unwrap_or(f64::NAN);

    let tests = input
        .tests
        .iter()
        .enumerate()
        .map(|(j, spec)| {
            let critical_value = match spec.critical {
                Critical::Fixed(c) => c,
                Critical::NullQuantile => {
                    let s: Vec<f64> = null.iter().map(|o| o.statistics[j]).collect();
                    quantile(&s, 1.0 - ALPHA)
                }
            };
            let stats: Vec<f64> = q.iter().map(|o| o.statistics[j]).collect();
            TestPower {
                name: spec.name.to_string(),
                power: stats.iter().filter(|&&s| s > critical_value).count() as f64 / stats.len() as f64,
                critical_value,
            }
        })
        .collect();

    ReplicationSummary {
        magnitude: input.magnitude,
        theta_star: if q.iter().any(|o| o.target.is_some()) { mean(&q.iter().map(|o| target(o)).collect::<Vec<_>>()) } else { input.theta_star },
        details: input.details.clone(),
        replicates: input.q.len(),
        n_used: q.len(),
        n_failed: input.q.len() - q.len(),
        n_failed_null: input.p.len() - p_all.len(),
        estimators,
        kappa_hat,
        kappa_hat_null,
        normality_diag,
        ks_statistic,
        ks_critical: ks_critical_1pct(q.len()),
        rho_hat,
        rho_hat_q,
        sigma2_hat,
        omega2_hat,
        omega2_hat_q,
        shift_mean,
        shift_se,
        shift_predicted,
        power_np,
        power_np_theory,
        tests,
    }
}

/// One-sided critical value of a standard Normal test at level 0.05.
pub fn z_critical() -> f64 {
    norm_ppf(1.0 - ALPHA)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_identity_holds() {
        let e = [0.3, -0.1, 0.5, 0.2, 0.05];
        let s = EstimatorSummary::from_errors("x", &e);
        assert!((s.mse - (s.bias * s.bias + s.variance)).abs() < 1e-15);
        let direct = e.iter().map(|v| v * v).sum::<f64>() / 5.0;
        assert!((s.mse - direct).abs() < 1e-15);
    }

    fn outcome(est: [f64; 2], llr: f64, stat: f64) -> Option<ReplicateOutcome> {
        Some(ReplicateOutcome {
            estimates: est.to_vec(),
            converged: true,
            loglik_ratio: llr,
            statistics: vec![stat],
            target: None,
        })
    }

    #[test]
    fn failures_are_counted_and_excluded() {
        let q: Vec<_> = (0..120)
            .map(|i| if i % 10 == 0 { None } else { outcome([i as f64 / 100.0, 0.0], 0.0, i as f64) })
            .collect();
        let tests = [TestSpec {
            name: "t",
            critical: Critical::Fixed(100.0),
        }];
        let s = summarize(&PointInput {
            magnitude: 0.0,
            theta_star: 0.0,
            details: vec![],
            scale_n: 1.0,
            estimator_names: &["a", "b"],
            tests: &tests,
            q: &q,
            p: &[],
        });
        assert_eq!(s.n_failed, 12);
        assert_eq!(s.n_used + s.n_failed, 120);
        assert_eq!(s.power_np, ALPHA);
        let expected = (101..120).filter(|i| i % 10 != 0).count() as f64 / 108.0;
        assert!((s.tests[0].power - expected).abs() < 1e-15);
    }
}
