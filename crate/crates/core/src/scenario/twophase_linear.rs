//! Linear regression with a surrogate under outcome-independent two-phase
//! sampling on the surrogate.
//!
//! `X, e, e* ~ N(0, 1)`, `Z = X + e*`, `Y = X + γ·X·1{|Z| ≤ c} + e`. Phase 2
//! keeps every unit with `|Z| > c` and a simple random sample of the rest.
//! The working model drops the region term; the working law P is its
//! Kullback–Leibler projection `Y = bX + s·e` with the law of `(X, Z)` kept.

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{ReplicateOutcome, Scenario, TestSpec};
use crate::error::{Error, Result};
use crate::estimators::calibrate_weights;
use crate::estimators::regression::{ls_influence, ols, wls};
use crate::estimators::TwoPhaseDataset;
use crate::lecam::Law;
use crate::numerics::dist::{norm_cdf, norm_pdf};
use crate::numerics::{solve_root, QuadratureRule, RngStream, RootProblem};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TwoPhaseLinearConfig {
    pub n_phase1: usize,
    pub z_cut: f64,
    pub middle_sample: usize,
    pub kappa_grid: Vec<f64>,
    /// Explicit γ values; when nonempty they replace `kappa_grid`.
    pub gamma_grid: Vec<f64>,
    /// Sign of γ for κ targets.
    pub sign: f64,
}

impl Default for TwoPhaseLinearConfig {
    fn default() -> Self {
        Self {
            n_phase1: 4000,
            z_cut: 2.33,
            middle_sample: 200,
            kappa_grid: vec![0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0],
            gamma_grid: Vec::new(),
            sign: 1.0,
        }
    }
}

impl TwoPhaseLinearConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.z_cut > 0.0) || !self.z_cut.is_finite() {
            return Err(Error::Config("z_cut must be positive".into()));
        }
        if self.middle_sample < 3 {
            return Err(Error::Config("middle_sample must be at least 3".into()));
        }
        let expected_middle = self.n_phase1 as f64 * middle_probability(self.z_cut);
        if self.middle_sample as f64 >= expected_middle {
            return Err(Error::Config(format!(
                "middle_sample {} is not below the expected middle count {expected_middle:.1}",
                self.middle_sample
            )));
        }
        if self.sign != 1.0 && self.sign != -1.0 {
            return Err(Error::Config("sign must be 1 or -1".into()));
        }
        if !self.grid().contains(&0.0) {
            return Err(Error::Config("the magnitude grid must contain 0".into()));
        }
        if self.gamma_grid.is_empty() && self.kappa_grid.iter().any(|k| !(*k >= 0.0) || !k.is_finite()) {
            return Err(Error::Config("kappa_grid values must be nonnegative".into()));
        }
        Ok(())
    }

    fn grid(&self) -> &[f64] {
        if self.gamma_grid.is_empty() {
            &self.kappa_grid
        } else {
            &self.gamma_grid
        }
    }
}

/// `P(|Z| ≤ c)` with `Z ~ N(0, 2)`.
pub fn middle_probability(c: f64) -> f64 {
    2.0 * norm_cdf(c / 2f64.sqrt()) - 1.0
}

/// `E[X²·1{|Z| ≤ c}] = ∫ x² φ(x) (Φ(c − x) − Φ(−c − x)) dx`.
pub fn region_second_moment(c: f64) -> Result<f64> {
    let rule = QuadratureRule::interval(-12.0, 12.0, 48, 16)?;
    Ok(rule
        .nodes()
        .iter()
        .zip(rule.weights())
        .map(|(&x, w)| w * x * x * norm_pdf(x) * (norm_cdf(c - x) - norm_cdf(-c - x)))
        .sum())
}

/// Complete-data OLS slope of the γ model, `1 + γ·E[X²·1{|Z| ≤ c}]`.
pub fn theta_star(gamma: f64, c: f64) -> Result<f64> {
    Ok(1.0 + gamma * region_second_moment(c)?)
}

/// Second moments of `(X, Y, Z)` over one stratum, as expectations of the
/// products times the stratum indicator. First moments vanish by symmetry.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
struct Moments {
    p: f64,
    xx: f64,
    xz: f64,
    zz: f64,
    yx: f64,
    yz: f64,
    yy: f64,
}

impl Moments {
    /// Under the γ model, on a region with `E[Z²; region] = zz` and slope `k`.
    fn misspecified(p: f64, zz: f64, k: f64) -> Self {
        let xz = zz / 2.0;
        let xx = zz / 4.0 + p / 2.0;
        Self {
            p,
            xx,
            xz,
            zz,
            yx: k * xx,
            yz: k * xz,
            yy: k * k * xx + p,
        }
    }

    /// Under a working law with zero intercepts.
    fn working(p: f64, zz: f64, w: &WorkingLaw) -> Self {
        let xz = w.c1 * zz;
        let xx = w.c1 * w.c1 * zz + w.tau2 * p;
        Self {
            p,
            xx,
            xz,
            zz,
            yx: w.beta * xx,
            yz: w.beta * xz,
            yy: w.beta * w.beta * xx + w.sigma2 * p,
        }
    }

    fn scaled(self, f: f64) -> Self {
        Self {
            p: self.p * f,
            xx: self.xx * f,
            xz: self.xz * f,
            zz: self.zz * f,
            yx: self.yx * f,
            yz: self.yz * f,
            yy: self.yy * f,
        }
    }

    fn plus(self, o: Self) -> Self {
        Self {
            p: self.p + o.p,
            xx: self.xx + o.xx,
            xz: self.xz + o.xz,
            zz: self.zz + o.zz,
            yx: self.yx + o.yx,
            yz: self.yz + o.yz,
            yy: self.yy + o.yy,
        }
    }
}

/// `E[log N(a; coef·b, v); stratum]` up to the `2π` constant, from
/// `E[a²]`, `E[ab]`, `E[b²]` and the stratum mass.
fn expected_log_normal(p: f64, aa: f64, ab: f64, bb: f64, coef: f64, v: f64) -> f64 {
    -0.5 * p * v.ln() - (aa - 2.0 * coef * ab + coef * coef * bb) / (2.0 * v)
}

fn log_normal(a: f64, m: f64, v: f64) -> f64 {
    -0.5 * (v.ln() + (a - m).powi(2) / v)
}

/// Normal working model: `X | Z ~ N(c₀ + c₁z, τ²)`, `Y | X ~ N(α + βx, σ²)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WorkingLaw {
    pub c0: f64,
    pub c1: f64,
    pub tau2: f64,
    pub alpha: f64,
    pub beta: f64,
    pub sigma2: f64,
}

impl WorkingLaw {
    /// The generating law at γ = 0.
    pub fn truth() -> Self {
        Self {
            c0: 0.0,
            c1: 0.5,
            tau2: 0.5,
            alpha: 0.0,
            beta: 1.0,
            sigma2: 1.0,
        }
    }

    fn from_params(t: &[f64]) -> Self {
        Self {
            c0: t[0],
            c1: t[1],
            tau2: t[2].exp(),
            alpha: t[3],
            beta: t[4],
            sigma2: t[5].exp(),
        }
    }

    fn params(&self) -> Vec<f64> {
        vec![self.c0, self.c1, self.tau2.ln(), self.alpha, self.beta, self.sigma2.ln()]
    }

    fn marginal_variance(&self) -> f64 {
        self.sigma2 + self.beta * self.beta * self.tau2
    }

    /// Expected score of the observed-data log likelihood (parameters as in
    /// [`tpl_efficient`]) over sampled and unsampled strata.
    fn expected_score(t: &[f64], sampled: &Moments, unsampled: &Moments) -> Vec<f64> {
        let (c0, c1, tau2, a, b, s2) = (t[0], t[1], t[2].exp(), t[3], t[4], t[5].exp());
        let m = sampled;
        let r1 = -c0 * m.p;
        let r1z = m.xz - c1 * m.zz;
        let r1r1 = m.xx - 2.0 * c1 * m.xz + c1 * c1 * m.zz + c0 * c0 * m.p;
        let r2 = -a * m.p;
        let r2x = m.yx - b * m.xx;
        let r2r2 = m.yy - 2.0 * b * m.yx + b * b * m.xx + a * a * m.p;
        let mut g = vec![
            r1 / tau2,
            r1z / tau2,
            -0.5 * m.p + r1r1 / (2.0 * tau2),
            r2 / s2,
            r2x / s2,
            -0.5 * m.p + r2r2 / (2.0 * s2),
        ];
        let u = unsampled;
        let v = s2 + b * b * tau2;
        let shift = a + b * c0;
        let r = -shift * u.p;
        let rz = u.yz - b * c1 * u.zz;
        let rr = u.yy - 2.0 * b * c1 * u.yz + b * b * c1 * c1 * u.zz + shift * shift * u.p;
        let rmx = c0 * r + c1 * rz;
        let dv = -0.5 * u.p / v + rr / (2.0 * v * v);
        g[0] += b * r / v;
        g[1] += b * rz / v;
        g[2] += dv * b * b * tau2;
        g[3] += r / v;
        g[4] += rmx / v + dv * 2.0 * b * tau2;
        g[5] += dv * s2;
        g
    }
}

/// The γ model and the working law closest to it in the observed data.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TplLaws {
    pub gamma: f64,
    /// Complete-data OLS slope under the γ model.
    pub theta_star: f64,
    pub working: WorkingLaw,
}

impl TplLaws {
    /// Variance of `Y | Z` in the middle region under the γ model.
    fn middle_variance(&self) -> f64 {
        (1.0 + self.gamma).powi(2) / 2.0 + 1.0
    }

    /// Observed-data log likelihood ratio contribution of one unit.
    fn unit_llr(&self, y: f64, z: f64, x: Option<f64>, c: f64) -> f64 {
        let w = &self.working;
        match x {
            Some(x) => {
                let k = if z.abs() <= c { 1.0 + self.gamma } else { 1.0 };
                log_normal(x, z / 2.0, 0.5) + log_normal(y, k * x, 1.0)
                    - log_normal(x, w.c0 + w.c1 * z, w.tau2)
                    - log_normal(y, w.alpha + w.beta * x, w.sigma2)
            }
            None => {
                log_normal(y, (1.0 + self.gamma) * z / 2.0, self.middle_variance())
                    - log_normal(y, w.alpha + w.beta * (w.c0 + w.c1 * z), w.marginal_variance())
            }
        }
    }
}

pub struct TplPoint {
    pub magnitude: f64,
    pub laws: TplLaws,
    pub kappa_exact: f64,
}

pub struct TwoPhaseLinear {
    config: TwoPhaseLinearConfig,
    /// `E[X²·1{|Z| ≤ c}]`
    a: f64,
    p_middle: f64,
    /// `E[Z²·1{|Z| ≤ c}]`
    zz_middle: f64,
}

impl TwoPhaseLinear {
    pub fn new(config: TwoPhaseLinearConfig) -> Result<Self> {
        config.validate()?;
        let a = region_second_moment(config.z_cut)?;
        let p_middle = middle_probability(config.z_cut);
        let t = config.z_cut / 2f64.sqrt();
        let zz_middle = 2.0 * ((2.0 * norm_cdf(t) - 1.0) - 2.0 * t * norm_pdf(t));
        Ok(Self {
            config,
            a,
            p_middle,
            zz_middle,
        })
    }

    pub fn config(&self) -> &TwoPhaseLinearConfig {
        &self.config
    }

    /// Strata masses: outside, sampled middle, unsampled middle.
    fn strata(&self) -> [f64; 3] {
        let f = self.config.middle_sample as f64 / self.config.n_phase1 as f64;
        [1.0 - self.p_middle, f, self.p_middle - f]
    }

    /// Moments of the outside, sampled-middle and unsampled-middle strata
    /// under the γ model (`working = None`) or a working law.
    fn moments(&self, gamma: f64, working: Option<&WorkingLaw>) -> [Moments; 3] {
        let [_, f, u] = self.strata();
        let zz_out = 2.0 - self.zz_middle;
        let (out, mid) = match working {
            None => (
                Moments::misspecified(1.0 - self.p_middle, zz_out, 1.0),
                Moments::misspecified(self.p_middle, self.zz_middle, 1.0 + gamma),
            ),
            Some(w) => (Moments::working(1.0 - self.p_middle, zz_out, w), Moments::working(self.p_middle, self.zz_middle, w)),
        };
        [out, mid.scaled(f / self.p_middle), mid.scaled(u / self.p_middle)]
    }

    /// The γ model and its observed-data Kullback–Leibler projection onto
    /// the working model.
    pub fn laws(&self, gamma: f64) -> Result<TplLaws> {
        let working = if gamma == 0.0 {
            WorkingLaw::truth()
        } else {
            let [out, mid_s, mid_u] = self.moments(gamma, None);
            let sampled = out.plus(mid_s);
            let root = solve_root(&RootProblem::new(WorkingLaw::truth().params(), |t| WorkingLaw::expected_score(t, &sampled, &mid_u)))?;
            WorkingLaw::from_params(&root)
        };
        Ok(TplLaws {
            gamma,
            theta_star: 1.0 + gamma * self.a,
            working,
        })
    }

    /// `E[LLR]` per unit under the given stratum moments.
    fn expected_llr(&self, laws: &TplLaws, m: &[Moments; 3]) -> f64 {
        let w = &laws.working;
        let sampled = |s: &Moments, k: f64| {
            expected_log_normal(s.p, s.xx, s.xz, s.zz, 0.5, 0.5) + expected_log_normal(s.p, s.yy, s.yx, s.xx, k, 1.0)
                - expected_log_normal(s.p, s.xx, s.xz, s.zz, w.c1, w.tau2)
                - expected_log_normal(s.p, s.yy, s.yx, s.xx, w.beta, w.sigma2)
        };
        let u = &m[2];
        let unsampled = expected_log_normal(u.p, u.yy, u.yz, u.zz, (1.0 + laws.gamma) / 2.0, laws.middle_variance())
            - expected_log_normal(u.p, u.yy, u.yz, u.zz, w.beta * w.c1, w.marginal_variance());
        sampled(&m[0], 1.0) + sampled(&m[1], 1.0 + laws.gamma) + unsampled
    }

    /// Exact κ at γ as `√J`, with `J = E_Q[LLR] − E_P[LLR]` the expected
    /// symmetrized divergence of the observed-data log likelihood ratio.
    pub fn kappa_of_gamma(&self, gamma: f64) -> Result<f64> {
        if gamma == 0.0 {
            return Ok(0.0);
        }
        let laws = self.laws(gamma)?;
        let q = self.expected_llr(&laws, &self.moments(gamma, None));
        let p = self.expected_llr(&laws, &self.moments(gamma, Some(&laws.working)));
        Ok((self.config.n_phase1 as f64 * (q - p)).max(0.0).sqrt())
    }

    pub fn gamma_for_kappa(&self, kappa: f64) -> Result<f64> {
        if kappa == 0.0 {
            return Ok(0.0);
        }
        let sign = self.config.sign;
        let mut hi = 1e-3;
        while self.kappa_of_gamma(sign * hi)? < kappa {
            hi *= 2.0;
            if hi > 1e3 {
                return Err(Error::InvalidInput(format!("kappa {kappa} is beyond the reachable range")));
            }
        }
        let root = solve_root(
            &RootProblem::bracketed(0.0, hi, |g| self.kappa_of_gamma(sign * g).map_or(f64::NAN, |k| k - kappa))
                // κ carries the tolerance of the inner projection solve.
                .tolerance(1e-7),
        )?;
        Ok(sign * root[0])
    }

    /// Expected phase-2 fraction.
    pub fn expected_fraction(&self) -> f64 {
        1.0 - self.p_middle + self.config.middle_sample as f64 / self.config.n_phase1 as f64
    }

    /// One phase-1 sample and its phase-2 subsample. Under the working law Y
    /// is drawn from the projected model. Returns the data and the
    /// observed-data log likelihood ratio.
    pub fn generate(&self, laws: &TplLaws, law: Law, rng: &mut RngStream) -> Result<(TwoPhaseDataset, f64)> {
        let c = self.config.z_cut;
        let n = self.config.n_phase1;
        let mut units = Vec::with_capacity(n);
        for _ in 0..n {
            let u: f64 = StandardNormal.sample(rng);
            let v: f64 = StandardNormal.sample(rng);
            let e: f64 = StandardNormal.sample(rng);
            let unit = match law {
                Law::Q => {
                    let z = u + v;
                    (u, u + if z.abs() <= c { laws.gamma * u } else { 0.0 } + e, z)
                }
                Law::P => {
                    let w = &laws.working;
                    let z = 2f64.sqrt() * u;
                    let x = w.c0 + w.c1 * z + w.tau2.sqrt() * v;
                    (x, w.alpha + w.beta * x + w.sigma2.sqrt() * e, z)
                }
            };
            units.push(unit);
        }
        let middle: Vec<usize> = (0..n).filter(|&i| units[i].2.abs() <= c).collect();
        let k = self.config.middle_sample;
        if middle.len() < k {
            return Err(Error::EmptyStratum(format!(
                "middle stratum of {} is smaller than the sample of {k}",
                middle.len()
            )));
        }
        let mut sampled = vec![false; n];
        for &i in &units.iter().enumerate().filter(|(_, u)| u.2.abs() > c).map(|(i, _)| i).collect::<Vec<_>>() {
            sampled[i] = true;
        }
        for j in rand::seq::index::sample(rng, middle.len(), k) {
            sampled[middle[j]] = true;
        }
        let pi_middle = k as f64 / middle.len() as f64;
        let mut data = TwoPhaseDataset::with_capacity(1, 1, n);
        let mut llr = 0.0;
        for (i, &(x, y, z)) in units.iter().enumerate() {
            let pi = if z.abs() > c { 1.0 } else { pi_middle };
            let xo = sampled[i].then_some(x);
            if laws.gamma != 0.0 {
                llr += laws.unit_llr(y, z, xo, c);
            }
            data.push(y, &[z], pi, xo.as_ref().map(std::slice::from_ref))?;
        }
        Ok((data, llr))
    }
}

fn phase2_xy(data: &TwoPhaseDataset) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut w = Vec::new();
    for u in data.sampled() {
        x.push(u.x.expect("sampled unit")[0]);
        y.push(u.y);
        w.push(u.ht_weight());
    }
    (x, y, w)
}

fn line(x: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(x.len(), 2, |i, j| if j == 0 { 1.0 } else { x[i] })
}

/// Horvitz–Thompson (weighted least squares) intercept and slope.
pub fn tpl_ht(data: &TwoPhaseDataset) -> Result<Vec<f64>> {
    let (x, y, w) = phase2_xy(data);
    Ok(wls(&line(&x), &y, &w)?.coef)
}

/// Calibrated estimator: impute X from (Z, Y), fit Y on the imputed X over
/// phase 1, calibrate the weights to that fit's influence totals, then
/// weighted least squares on phase 2.
pub fn tpl_calibrated(data: &TwoPhaseDataset) -> Result<Vec<f64>> {
    let (x, y, w) = phase2_xy(data);
    let zy: Vec<(f64, f64)> = data.sampled().map(|u| (u.z[0], u.y)).collect();
    let impute_design = DMatrix::from_fn(zy.len(), 3, |i, j| match j {
        0 => 1.0,
        1 => zy[i].0,
        _ => zy[i].1,
    });
    let imputation = wls(&impute_design, &x, &w)?;
    let g = &imputation.coef;
    let x_hat: Vec<f64> = data.units().map(|u| g[0] + g[1] * u.z[0] + g[2] * u.y).collect();
    let design = line(&x_hat);
    let fit = ols(&design, data.y())?;
    let h = ls_influence(&design, &fit, &vec![1.0; x_hat.len()]);
    let aux = DMatrix::from_fn(data.len(), 3, |i, j| if j == 0 { 1.0 } else { h[(i, j - 1)] });
    let cal = calibrate_weights(data, &aux)?;
    let wc: Vec<f64> = (0..data.len()).filter(|&i| data.r()[i]).map(|i| cal.adjusted_weights[i]).collect();
    Ok(wls(&line(&x), &y, &wc)?.coef)
}

/// Maximum likelihood under the Normal working model `X | Z ~ N(c₀ + c₁z, τ²)`,
/// `Y | X ~ N(α + βx, σ²)`, with X integrated out for unsampled units.
/// Returns `(c₀, c₁, log τ², α, β, log σ²)` and a convergence flag.
pub fn tpl_efficient(data: &TwoPhaseDataset) -> Result<(Vec<f64>, bool)> {
    let (x, y, _) = phase2_xy(data);
    let zs: Vec<f64> = data.sampled().map(|u| u.z[0]).collect();
    let others: Vec<(f64, f64)> = data.units().filter(|u| !u.r).map(|u| (u.y, u.z[0])).collect();
    // Complete cases are consistent for both factors under the working model.
    let xz = ols(&line(&zs), &x)?;
    let yx = ols(&line(&x), &y)?;
    let mean_sq = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>() / r.len() as f64;
    let start = vec![xz.coef[0], xz.coef[1], mean_sq(&xz.residuals).ln(), yx.coef[0], yx.coef[1], mean_sq(&yx.residuals).ln()];
    let n = data.len() as f64;
    let score = |t: &[f64]| -> Vec<f64> {
        let (c0, c1, tau2, a, b, s2) = (t[0], t[1], t[2].exp(), t[3], t[4], t[5].exp());
        let mut g = [0.0; 6];
        for i in 0..x.len() {
            let r1 = x[i] - c0 - c1 * zs[i];
            g[0] += r1 / tau2;
            g[1] += r1 * zs[i] / tau2;
            g[2] += -0.5 + r1 * r1 / (2.0 * tau2);
            let r2 = y[i] - a - b * x[i];
            g[3] += r2 / s2;
            g[4] += r2 * x[i] / s2;
            g[5] += -0.5 + r2 * r2 / (2.0 * s2);
        }
        let v = s2 + b * b * tau2;
        for &(yy, z) in &others {
            let mx = c0 + c1 * z;
            let r = yy - a - b * mx;
            let dr = r / v;
            let dv = -0.5 / v + r * r / (2.0 * v * v);
            g[0] += dr * b;
            g[1] += dr * b * z;
            g[2] += dv * b * b * tau2;
            g[3] += dr;
            g[4] += dr * mx + dv * 2.0 * b * tau2;
            g[5] += dv * s2;
        }
        g.iter().map(|v| v / n).collect()
    };
    let solved = solve_root(&RootProblem::new(start, score));
    match solved {
        Ok(t) => Ok((t, true)),
        Err(Error::NoConvergence { last, .. }) => Ok((last, false)),
        Err(e) => Err(e),
    }
}

impl Scenario for TwoPhaseLinear {
    type Point = TplPoint;

    fn name(&self) -> &'static str {
        "tpl"
    }

    fn magnitude_label(&self) -> &'static str {
        if self.config.gamma_grid.is_empty() {
            "kappa"
        } else {
            "gamma"
        }
    }

    fn magnitudes(&self) -> Vec<f64> {
        self.config.grid().to_vec()
    }

    fn estimator_names(&self) -> Vec<&'static str> {
        vec!["mle", "calibrated", "ht"]
    }

    fn tests(&self) -> Vec<TestSpec> {
        Vec::new()
    }

    fn scale_n(&self) -> f64 {
        self.config.n_phase1 as f64
    }

    fn prepare(&self, _index: usize, magnitude: f64, _seed: u64) -> Result<TplPoint> {
        let gamma = if self.config.gamma_grid.is_empty() {
            self.gamma_for_kappa(magnitude)?
        } else {
            magnitude
        };
        Ok(TplPoint {
            magnitude,
            laws: self.laws(gamma)?,
            kappa_exact: self.kappa_of_gamma(gamma)?,
        })
    }

    fn theta_star(&self, point: &TplPoint) -> f64 {
        point.laws.theta_star
    }

    fn point_details(&self, point: &TplPoint) -> Vec<(&'static str, f64)> {
        vec![("gamma", point.laws.gamma), ("kappa_exact", point.kappa_exact)]
    }

    fn replicate(&self, point: &TplPoint, law: Law, rng: &mut RngStream) -> Result<ReplicateOutcome> {
        let (data, llr) = self.generate(&point.laws, law, rng)?;
        let (mle, converged) = tpl_efficient(&data)?;
        let cal = tpl_calibrated(&data)?;
        let ht = tpl_ht(&data)?;
        Ok(ReplicateOutcome {
            estimates: vec![mle[4], cal[1], ht[1]],
            converged,
            loglik_ratio: llr,
            statistics: Vec::new(),
            target: None,
        })
    }
}
