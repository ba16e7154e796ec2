//! Normal-limit predictions for estimators under contiguous misspecification,
//! and empirical estimates of the misspecification size κ and the
//! correlation ρ from simulated log-likelihood ratios.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::dist::{ks_statistic, mean, norm_cdf, norm_ppf, pearson, sample_variance};

/// Minimum number of replicates for the empirical estimators.
pub const MIN_REPLICATES: usize = 100;

/// `(σ², ω², ρ, κ)`: σ² is the efficient estimator's asymptotic variance,
/// σ² + ω² the design-based estimator's, ρ the correlation between the log
/// likelihood ratio and `√n(θ̂_eff − θ̂_AIPW)`, and κ the standard deviation
/// of the limiting log likelihood ratio.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LeCamPrediction {
    sigma2: f64,
    omega2: f64,
    rho: f64,
    kappa: f64,
}

impl LeCamPrediction {
    pub fn new(sigma2: f64, omega2: f64, rho: f64, kappa: f64) -> Result<Self> {
        if !(sigma2 > 0.0) || !(omega2 >= 0.0) || !(rho.abs() <= 1.0) || !(kappa >= 0.0) || !kappa.is_finite() {
            return Err(Error::InvalidInput(format!(
                "invalid prediction inputs sigma2={sigma2}, omega2={omega2}, rho={rho}, kappa={kappa}"
            )));
        }
        Ok(Self {
            sigma2,
            omega2,
            rho,
            kappa,
        })
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn omega2(&self) -> f64 {
        self.omega2
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn with_kappa(&self, kappa: f64) -> Result<Self> {
        Self::new(self.sigma2, self.omega2, self.rho, kappa)
    }

    /// `κ²ρ²ω² + σ²`
    pub fn mse_efficient(&self) -> f64 {
        self.kappa * self.kappa * self.rho * self.rho * self.omega2 + self.sigma2
    }

    /// `σ² + ω²`
    pub fn mse_aipw(&self) -> f64 {
        self.sigma2 + self.omega2
    }
}

/// Limiting mean `κρω` of `√n(θ̂_eff − θ*)` under the misspecified law.
pub fn predict_shift(pred: &LeCamPrediction) -> f64 {
    pred.kappa * pred.rho * pred.omega2.sqrt()
}

/// The κ at which both estimators have equal limiting MSE, `1/|ρ|`.
pub fn mse_crossover_kappa(pred: &LeCamPrediction) -> Result<f64> {
    if pred.rho == 0.0 {
        return Err(Error::NoFiniteCrossover);
    }
    Ok(1.0 / pred.rho.abs())
}

/// Power `Φ(κ − z₁₋α)` of the most powerful level-α test between the
/// working-model law and the misspecified law.
pub fn np_power(kappa: f64, alpha: f64) -> Result<f64> {
    if !(kappa >= 0.0) || !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(format!(
            "np_power needs kappa >= 0 and alpha in (0,1), got {kappa}, {alpha}"
        )));
    }
    Ok(norm_cdf(kappa - norm_ppf(1.0 - alpha)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Law {
    /// The working-model law.
    P,
    /// The misspecified law.
    Q,
}

impl Law {
    fn sign(self) -> f64 {
        match self {
            Law::P => -1.0,
            Law::Q => 1.0,
        }
    }
}

/// Realized values of `log(dQ/dP)`, one per replicate, generated under `law`.
#[derive(Clone, Debug)]
pub struct LlrSample {
    values: Vec<f64>,
    law: Law,
}

impl LlrSample {
    pub fn new(values: Vec<f64>, law: Law) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite log likelihood ratio {v}")));
        }
        Ok(Self { values, law })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn law(&self) -> Law {
        self.law
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KappaEstimate {
    pub kappa_hat: f64,
    /// `|mean − s κ̂²/2|` with `s = +1` under Q and `−1` under P.
    pub normality_diag: f64,
    /// KS distance to `N(s κ̂²/2, κ̂²)`.
    pub ks_statistic: f64,
}

/// κ̂ as the sample standard deviation of the log likelihood ratios.
pub fn estimate_kappa(llr: &LlrSample) -> Result<KappaEstimate> {
    let n = llr.values.len();
    if n < MIN_REPLICATES {
        return Err(Error::InvalidInput(format!(
            "need at least {MIN_REPLICATES} replicates, got {n}"
        )));
    }
    let var = sample_variance(&llr.values);
    if !(var > 0.0) {
        return Err(Error::Degenerate("log likelihood ratios have zero variance".into()));
    }
    let kappa_hat = var.sqrt();
    let centre = llr.law.sign() * var / 2.0;
    let normality_diag = (mean(&llr.values) - centre).abs();
    let ks = ks_statistic(&llr.values, |x| norm_cdf((x - centre) / kappa_hat));
    Ok(KappaEstimate {
        kappa_hat,
        normality_diag,
        ks_statistic: ks,
    })
}

/// Pearson correlation between log likelihood ratios and estimator
/// differences generated under the same law.
pub fn estimate_rho(llr: &LlrSample, diffs: &[f64]) -> Result<f64> {
    let n = llr.values.len();
    if diffs.len() != n {
        return Err(Error::InvalidInput(format!(
            "{n} log likelihood ratios but {} differences",
            diffs.len()
        )));
    }
    if n < MIN_REPLICATES {
        return Err(Error::InvalidInput(format!(
            "need at least {MIN_REPLICATES} replicates, got {n}"
        )));
    }
    if !(sample_variance(&llr.values) > 0.0) || !(sample_variance(diffs) > 0.0) {
        return Err(Error::Degenerate("zero variance in correlation input".into()));
    }
    Ok(pearson(&llr.values, diffs))
}

/// One row of the closed-form prediction table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PredictionRow {
    pub kappa: f64,
    pub shift: f64,
    pub mse_efficient: f64,
    pub mse_design: f64,
    pub np_power: f64,
}

pub fn prediction_rows(base: &LeCamPrediction, kappas: &[f64], alpha: f64) -> Result<Vec<PredictionRow>> {
    kappas
        .iter()
        .map(|&k| {
            let p = base.with_kappa(k)?;
            Ok(PredictionRow {
                kappa: k,
                shift: predict_shift(&p),
                mse_efficient: p.mse_efficient(),
                mse_design: p.mse_aipw(),
                np_power: np_power(k, alpha)?,
            })
        })
        .collect()
}

/// Plain-text table of [`prediction_rows`] followed by the crossover.
pub fn prediction_table(base: &LeCamPrediction, kappas: &[f64], alpha: f64) -> Result<String> {
    let mut out = format!("{:>8} {:>10} {:>14} {:>11} {:>9}\n", "kappa", "shift", "mse_efficient", "mse_design", "np_power");
    for r in prediction_rows(base, kappas, alpha)? {
        out.push_str(&format!(
            "{:>8.3} {:>10.4} {:>14.4} {:>11.4} {:>9.4}\n",
            r.kappa, r.shift, r.mse_efficient, r.mse_design, r.np_power
        ));
    }
    match mse_crossover_kappa(base) {
        Ok(k) => out.push_str(&format!("crossover kappa {:.4} (np power {:.4})\n", k, np_power(k, alpha)?)),
        Err(_) => out.push_str("crossover kappa: none (rho = 0)\n"),
    }
    Ok(out)
}
