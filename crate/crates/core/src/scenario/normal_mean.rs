//! Informative subsampling of a Normal mean.
//!
//! `X ~ N(μ, 1)` is observed with probability `π(x) = expit(x)`. The MLE
//! uses the likelihood `Σ Rᵢ log φ(xᵢ − μ) + (1 − Rᵢ) log p₀(μ)` with
//! `p₀(μ) = ∫ (1 − π(x)) φ(x − μ) dx`; the design-based comparator is the
//! Horvitz–Thompson mean. Misspecification tilts the law of X.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{ReplicateOutcome, Scenario, TestSpec};
use crate::error::{Error, Result};
use crate::estimators::{EstimateRecord, EstimatorKind, TwoPhaseDataset};
use crate::lecam::Law;
use crate::numerics::dist::expit;
use crate::numerics::{solve_root, QuadratureRule, RngStream, RootProblem};
use crate::tilting::{tilt_density, NormalBase, RealFn, TiltSampler, TiltSpec, TiltedDensity, TiltedDraw};

/// Tilt direction for the law of X.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NmDirection {
    /// `−(2 − e^{−x})(x − μ) − p₀′(μ)`
    Paper,
    /// `E[V̌ − Ǔ | x] = (p₀′(μ) − (x − μ)) / (1 + eˣ)`
    Derived,
}

/// Which data enter the log likelihood ratio.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LlrData {
    /// `(Rᵢ, RᵢXᵢ)`: what an analyst actually sees.
    Observed,
    /// Every `Xᵢ`, including the unobserved ones.
    Full,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NormalMeanConfig {
    pub mu: f64,
    pub n: usize,
    pub kappa_grid: Vec<f64>,
    pub direction: NmDirection,
    pub llr: LlrData,
}

impl Default for NormalMeanConfig {
    fn default() -> Self {
        Self {
            mu: 0.0,
            n: 10_000,
            kappa_grid: vec![0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0],
            direction: NmDirection::Paper,
            llr: LlrData::Observed,
        }
    }
}

impl NormalMeanConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("n must be positive".into()));
        }
        if !self.mu.is_finite() {
            return Err(Error::Config("mu must be finite".into()));
        }
        if !self.kappa_grid.contains(&0.0) {
            return Err(Error::Config("kappa_grid must contain 0".into()));
        }
        if self.kappa_grid.iter().any(|k| !(*k >= 0.0) || !k.is_finite()) {
            return Err(Error::Config("kappa_grid values must be nonnegative".into()));
        }
        Ok(())
    }
}

/// `p₀(μ)` and `p₀′(μ)`, the latter by differentiating under the integral.
pub fn p0_and_derivative(mu: f64, gh: &QuadratureRule) -> Result<(f64, f64)> {
    let p0 = crate::numerics::integrate_gh(|x| 1.0 - expit(x), mu, 1.0, gh)?;
    let d = crate::numerics::integrate_gh(|x| (x - mu) * (1.0 - expit(x)), mu, 1.0, gh)?;
    Ok((p0, d))
}

/// Per-magnitude state: the tilted law and the constants of the log
/// likelihood ratio.
pub struct NmPoint {
    pub kappa_target: f64,
    /// Tilt coefficient on the direction.
    pub delta: f64,
    pub theta_star: f64,
    sampler: Option<TiltSampler>,
    /// `log P_δ(R = 0) − log p₀(μ)`
    log_missing_ratio: f64,
}

impl NmPoint {
    pub fn density(&self) -> Option<&TiltedDensity> {
        self.sampler.as_ref().map(TiltSampler::density)
    }
}

pub struct NormalMean {
    config: NormalMeanConfig,
    gh: QuadratureRule,
    rule: QuadratureRule,
    p0: f64,
    p0_prime: f64,
}

impl NormalMean {
    pub fn new(config: NormalMeanConfig) -> Result<Self> {
        config.validate()?;
        let gh = QuadratureRule::gauss_hermite(crate::numerics::DEFAULT_GH_NODES)?;
        // The paper direction cuts off super-exponentially on the left, which a
        // Hermite rule resolves poorly; a composite interval rule is robust.
        let rule = QuadratureRule::interval(config.mu - 14.0, config.mu + 14.0, 56, 16)?;
        let (p0, p0_prime) = p0_and_derivative(config.mu, &gh)?;
        Ok(Self {
            config,
            gh,
            rule,
            p0,
            p0_prime,
        })
    }

    pub fn config(&self) -> &NormalMeanConfig {
        &self.config
    }

    pub fn p0(&self) -> f64 {
        self.p0
    }

    pub fn p0_prime(&self) -> f64 {
        self.p0_prime
    }

    pub fn base(&self) -> NormalBase {
        NormalBase {
            mean: self.config.mu,
            sd: 1.0,
        }
    }

    pub fn direction(&self) -> RealFn {
        let mu = self.config.mu;
        let d0 = self.p0_prime;
        match self.config.direction {
            NmDirection::Paper => Arc::new(move |x: f64| -(2.0 - (-x).exp()) * (x - mu) - d0),
            NmDirection::Derived => Arc::new(move |x: f64| (d0 - (x - mu)) * (1.0 - expit(x))),
        }
    }

    fn tilted(&self, delta: f64) -> Result<TiltedDensity> {
        let base = self.base();
        tilt_density(Arc::new(move |x| base.log_density(x)), self.direction(), delta, &self.rule)
    }

    fn log_missing_ratio(&self, density: &TiltedDensity) -> Result<f64> {
        let q0 = density.expect(|x| 1.0 - expit(x), &self.rule)?;
        Ok(q0.ln() - self.p0.ln())
    }

    /// κ for tilt coefficient `delta`, defined through the symmetrized
    /// divergence `E_Q[LLR] − E_P[LLR]`, which equals κ² in the Normal limit
    /// and treats both laws alike at finite n.
    pub fn kappa_of_delta(&self, delta: f64) -> Result<f64> {
        if delta == 0.0 {
            return Ok(0.0);
        }
        let density = self.tilted(delta)?;
        let base = self.tilted(0.0)?;
        let j = match self.config.llr {
            LlrData::Full => {
                density.expect(|x| density.log_ratio(x), &self.rule)? - base.expect(|x| density.log_ratio(x), &self.rule)?
            }
            LlrData::Observed => {
                let lm = self.log_missing_ratio(&density)?;
                let q0 = density.expect(|x| 1.0 - expit(x), &self.rule)?;
                let eq = density.expect(|x| expit(x) * density.log_ratio(x), &self.rule)? + q0 * lm;
                let ep = base.expect(|x| expit(x) * density.log_ratio(x), &self.rule)? + self.p0 * lm;
                eq - ep
            }
        };
        Ok((self.config.n as f64 * j).max(0.0).sqrt())
    }

    /// Tilt coefficient giving log likelihood ratio standard deviation `kappa`.
    pub fn delta_for_kappa(&self, kappa: f64) -> Result<f64> {
        if kappa == 0.0 {
            return Ok(0.0);
        }
        let mut hi = 1e-3;
        while self.kappa_of_delta(hi)? < kappa {
            hi *= 2.0;
            if hi > 1e3 {
                return Err(Error::InvalidInput(format!("kappa {kappa} is beyond the reachable range")));
            }
        }
        let root = solve_root(&RootProblem::bracketed(0.0, hi, |d| match self.kappa_of_delta(d) {
            Ok(k) => k - kappa,
            Err(_) => f64::NAN,
        }))?;
        Ok(root[0])
    }

    /// Draw a dataset; `delta = 0` is the working model. Unobserved units
    /// carry `π = 1` as a placeholder since their π is not observed.
    pub fn generate(&self, point: &NmPoint, law: Law, rng: &mut RngStream) -> Result<TiltedDraw> {
        let n = self.config.n;
        let mut data = TwoPhaseDataset::with_capacity(1, 0, n);
        let normal = Normal::new(self.config.mu, 1.0).map_err(|e| Error::InvalidInput(e.to_string()))?;
        let sampler = match law {
            Law::Q => point.sampler.as_ref(),
            Law::P => None,
        };
        let mut llr = 0.0;
        for _ in 0..n {
            let x = match sampler {
                Some(s) => s.draw(rng)?,
                None => normal.sample(rng),
            };
            let pi = expit(x);
            let observed = rng.random::<f64>() < pi;
            if let Some(d) = point.density() {
                llr += match (observed, self.config.llr) {
                    (_, LlrData::Full) | (true, LlrData::Observed) => d.log_ratio(x),
                    (false, LlrData::Observed) => point.log_missing_ratio,
                };
            }
            if observed {
                data.push(0.0, &[], pi, Some(&[x]))?;
            } else {
                data.push(0.0, &[], 1.0, None)?;
            }
        }
        Ok(TiltedDraw {
            dataset: data,
            loglik_ratio: llr,
        })
    }
}

/// Maximum likelihood estimate of μ from observed values and the count of
/// unobserved units.
pub fn nm_mle(data: &TwoPhaseDataset, gh: &QuadratureRule) -> Result<EstimateRecord> {
    let n = data.len();
    let xs: Vec<f64> = data.sampled().map(|u| u.x.unwrap()[0]).collect();
    let n1 = xs.len() as f64;
    let n0 = (n - xs.len()) as f64;
    let sx: f64 = xs.iter().sum();
    let ratio = |mu: f64| -> f64 {
        match p0_and_derivative(mu, gh) {
            Ok((p, d)) if p > 0.0 => d / p,
            _ => f64::NAN,
        }
    };
    let score = |mu: f64| sx - n1 * mu + n0 * ratio(mu);
    let start = if xs.is_empty() { 0.0 } else { sx / n1 };

    // The score is strictly decreasing (p₀ is log-concave), so expand a
    // bracket around the observed mean.
    let mut lo = start - 1.0;
    let mut hi = start + 1.0;
    let mut found = false;
    for _ in 0..12 {
        if score(lo) > 0.0 && score(hi) < 0.0 {
            found = true;
            break;
        }
        let w = hi - lo;
        lo -= w;
        hi += w;
    }
    let nan_influence = DMatrix::from_element(n, 1, f64::NAN);
    if !found {
        return Ok(EstimateRecord::from_influence(EstimatorKind::Efficient, vec![start], nan_influence, false));
    }
    let mu = match solve_root(&RootProblem::bracketed(lo, hi, score).tolerance(1e-10 * n as f64)) {
        Ok(v) => v[0],
        Err(_) => return Ok(EstimateRecord::from_influence(EstimatorKind::Efficient, vec![start], nan_influence, false)),
    };
    let r = ratio(mu);
    let h = 1e-5;
    let info = -(score(mu + h) - score(mu - h)) / (2.0 * h) / n as f64;
    let influence = DMatrix::from_iterator(
        n,
        1,
        data.units().map(|u| match u.x {
            Some(x) => (x[0] - mu) / info,
            None => r / info,
        }),
    );
    Ok(EstimateRecord::from_influence(EstimatorKind::Efficient, vec![mu], influence, true))
}

/// Horvitz–Thompson (ratio) mean `Σ (Rᵢ/πᵢ) xᵢ / Σ Rᵢ/πᵢ`.
pub fn nm_ht(data: &TwoPhaseDataset) -> Result<EstimateRecord> {
    let n = data.len();
    if data.n_sampled() == 0 {
        return Err(Error::Underdetermined { sampled: 0, params: 1 });
    }
    let (mut sw, mut swx) = (0.0, 0.0);
    for u in data.sampled() {
        let w = u.ht_weight();
        sw += w;
        swx += w * u.x.unwrap()[0];
    }
    let mu = swx / sw;
    let scale = sw / n as f64;
    let influence = DMatrix::from_iterator(
        n,
        1,
        data.units().map(|u| match u.x {
            Some(x) => u.ht_weight() * (x[0] - mu) / scale,
            None => 0.0,
        }),
    );
    Ok(EstimateRecord::from_influence(EstimatorKind::Ipw, vec![mu], influence, true))
}

impl Scenario for NormalMean {
    type Point = NmPoint;

    fn name(&self) -> &'static str {
        "normal_mean"
    }

    fn magnitude_label(&self) -> &'static str {
        "kappa"
    }

    fn magnitudes(&self) -> Vec<f64> {
        self.config.kappa_grid.clone()
    }

    fn estimator_names(&self) -> Vec<&'static str> {
        vec!["mle", "ht"]
    }

    fn tests(&self) -> Vec<TestSpec> {
        Vec::new()
    }

    fn scale_n(&self) -> f64 {
        self.config.n as f64
    }

    fn prepare(&self, _index: usize, kappa: f64, _seed: u64) -> Result<NmPoint> {
        let delta = self.delta_for_kappa(kappa)?;
        if delta == 0.0 {
            return Ok(NmPoint {
                kappa_target: kappa,
                delta,
                theta_star: self.config.mu,
                sampler: None,
                log_missing_ratio: 0.0,
            });
        }
        let spec = TiltSpec {
            direction: self.direction(),
            magnitude: delta,
            base: self.base(),
        };
        let sampler = TiltSampler::new(&spec, &self.rule)?;
        let theta_star = sampler.density().expect(|x| x, &self.rule)?;
        let log_missing_ratio = self.log_missing_ratio(sampler.density())?;
        Ok(NmPoint {
            kappa_target: kappa,
            delta,
            theta_star,
            sampler: Some(sampler),
            log_missing_ratio,
        })
    }

    fn theta_star(&self, point: &NmPoint) -> f64 {
        point.theta_star
    }

    fn point_details(&self, point: &NmPoint) -> Vec<(&'static str, f64)> {
        vec![("delta", point.delta)]
    }

    fn replicate(&self, point: &NmPoint, law: Law, rng: &mut RngStream) -> Result<ReplicateOutcome> {
        let draw = self.generate(point, law, rng)?;
        let mle = nm_mle(&draw.dataset, &self.gh)?;
        let ht = nm_ht(&draw.dataset)?;
        Ok(ReplicateOutcome {
            estimates: vec![mle.theta_hat[0], ht.theta_hat[0]],
            converged: mle.converged && ht.converged,
            loglik_ratio: draw.loglik_ratio,
            statistics: Vec::new(),
            target: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::ipw_estimate;
    use crate::numerics::dist::norm_log_pdf;

    fn gh() -> QuadratureRule {
        QuadratureRule::gauss_hermite(64).unwrap()
    }

    #[test]
    fn p0_at_zero_is_one_half() {
        let (p, d) = p0_and_derivative(0.0, &gh()).unwrap();
        assert!((p - 0.5).abs() < 1e-14);
        assert!((d + 0.20662).abs() < 1e-4, "{d}");
        let h = 1e-5;
        let fd = (p0_and_derivative(h, &gh()).unwrap().0 - p0_and_derivative(-h, &gh()).unwrap().0) / (2.0 * h);
        assert!((fd - d).abs() < 1e-8);
    }

    #[test]
    fn ht_matches_weighted_mean_and_ipw() {
        let mut d = TwoPhaseDataset::new(1, 0);
        d.push(0.0, &[], 0.5, Some(&[1.0])).unwrap();
        d.push(0.0, &[], 1.0, Some(&[2.0])).unwrap();
        let ht = nm_ht(&d).unwrap();
        assert!((ht.theta_hat[0] - 4.0 / 3.0).abs() < 1e-15);
        let ipw = ipw_estimate(&d, |t, u, out| out[0] = u.x.unwrap()[0] - t[0], &[0.0]).unwrap();
        assert!((ipw.theta_hat[0] - ht.theta_hat[0]).abs() < 1e-10);
        for i in 0..2 {
            assert!((ipw.influence[(i, 0)] - ht.influence[(i, 0)]).abs() < 1e-6);
        }
    }

    #[test]
    fn mle_with_full_observation_is_the_mean() {
        let mut d = TwoPhaseDataset::new(1, 0);
        for x in [0.3, -1.0, 2.5, 0.1] {
            d.push(0.0, &[], 0.5, Some(&[x])).unwrap();
        }
        let m = nm_mle(&d, &gh()).unwrap();
        assert!(m.converged);
        assert!((m.theta_hat[0] - 0.475).abs() < 1e-10);
    }

    #[test]
    fn mle_with_nothing_observed_is_flagged() {
        let mut d = TwoPhaseDataset::new(1, 0);
        for _ in 0..10 {
            d.push(0.0, &[], 1.0, None).unwrap();
        }
        assert!(!nm_mle(&d, &gh()).unwrap().converged);
    }

    #[test]
    fn kappa_mapping_round_trips() {
        let s = NormalMean::new(NormalMeanConfig::default()).unwrap();
        let delta = s.delta_for_kappa(1.67).unwrap();
        assert!((s.kappa_of_delta(delta).unwrap() - 1.67).abs() < 1e-8);
        // Linearization: κ ≈ δ √n sd(per-unit log ratio) with sd ≈ 1.48.
        assert!((delta - 0.0113).abs() < 0.001, "{delta}");
    }

    #[test]
    fn tilted_density_shape() {
        let s = NormalMean::new(NormalMeanConfig::default()).unwrap();
        let p = s.prepare(0, 1.67, 0).unwrap();
        let d = p.density().unwrap();
        let phi = |x: f64| norm_log_pdf(x).exp();
        let grid: Vec<f64> = (-400..=400).map(|i| i as f64 / 100.0).collect();
        let peak = grid.iter().map(|&x| d.log_density(x).exp()).fold(0.0, f64::max);
        assert!(peak > phi(0.0));
        assert!(grid.iter().any(|&x| x.abs() > 0.5 && d.log_density(x).exp() < phi(x)));
        for x in [-6.0, -4.5, 4.5, 6.0] {
            assert!(d.log_density(x).exp() <= 2.0 * phi(x));
        }
        assert!(p.theta_star != 0.0);
    }

    #[test]
    fn zero_kappa_point_is_the_working_model() {
        let s = NormalMean::new(NormalMeanConfig {
            n: 2000,
            ..Default::default()
        })
        .unwrap();
        let p = s.prepare(0, 0.0, 0).unwrap();
        assert_eq!(p.theta_star, 0.0);
        let mut rng = RngStream::new(1, 0);
        let draw = s.generate(&p, Law::Q, &mut rng).unwrap();
        assert_eq!(draw.loglik_ratio, 0.0);
        let frac = draw.dataset.n_sampled() as f64 / 2000.0;
        assert!((frac - 0.5).abs() < 4.0 * (0.25f64 / 2000.0).sqrt());
    }

    #[test]
    fn observation_rate_at_mu_one() {
        let s = NormalMean::new(NormalMeanConfig {
            mu: 1.0,
            n: 20_000,
            ..Default::default()
        })
        .unwrap();
        let p = s.prepare(0, 0.0, 0).unwrap();
        let mut rng = RngStream::new(2, 0);
        let frac = s.generate(&p, Law::P, &mut rng).unwrap().dataset.n_sampled() as f64 / 20_000.0;
        let expect = 1.0 - s.p0();
        assert!((frac - expect).abs() < 4.0 * (expect * (1.0 - expect) / 20_000.0).sqrt());
    }
}
