//! Logistic regression under case–control sampling.
//!
//! Phase 1 records `Y` for a population of size N with `X ~ N(0, 1)`;
//! phase 2 measures X on every case and on `control_match` controls per
//! case. The efficient estimator is the unweighted logistic fit, the
//! design-based one weights controls by `1/π₀`.
//!
//! Three misspecifications are available: a quadratic or a linear-spline
//! term in the logit, and exponential-tilt resampling of a fixed finite
//! population.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::spline::NaturalSpline;
use super::{Critical, ReplicateOutcome, Scenario, TestSpec};
use crate::error::{Error, Result};
use crate::estimators::regression::{logistic_fit, logistic_loglik, LogisticFit};
use crate::estimators::TwoPhaseDataset;
use crate::lecam::Law;
use crate::numerics::dist::{bernoulli_loglik, expit, log1pexp};
use crate::numerics::{find_envelope_bound, rejection_sample, solve_root, stream_key, NormalProposal, QuadratureRule, RngStream, RootProblem};
use crate::tilting::{knot_search, KnotScenario, ResamplingTilt};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Misspec {
    /// `γx²` added to the logit.
    Quadratic,
    /// Resampling a fixed population with probabilities `∝ exp(εΔ)`.
    Tilt,
    /// `γ(x − knot)₊` added to the logit.
    Spline,
}

impl Misspec {
    pub fn as_str(self) -> &'static str {
        match self {
            Misspec::Quadratic => "quadratic",
            Misspec::Tilt => "tilt",
            Misspec::Spline => "spline",
        }
    }
}

/// Scale of the tilt direction `Δ = V̌ − Ǔ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaForm {
    /// Difference of the per-unit influence values of the two fits.
    Influence,
    /// The displayed formulas: information matrices averaged over the
    /// sample, with `1/π` inside the design-based one.
    Literal,
    /// As displayed, with the information matrices multiplying the scores
    /// rather than inverted.
    Printed,
    /// Influence values with the intermediate sample as the sampling frame:
    /// both strata are resampled at the same rate, so `Ǔ` is unweighted.
    Frame,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CaseControlConfig {
    pub alpha: f64,
    pub beta: f64,
    pub population_size: usize,
    /// Controls per case at phase 2.
    pub control_match: f64,
    pub misspec: Misspec,
    /// Target κ values; the γ or ε achieving each is solved for exactly.
    pub kappa_grid: Vec<f64>,
    /// Explicit γ (or ε) values; when nonempty, used instead of `kappa_grid`.
    pub magnitude_grid: Vec<f64>,
    pub knot: f64,
    /// Sign of γ (or ε) for κ targets.
    pub sign: f64,
    pub spline_df: usize,
    /// Replicates concatenated to fit the conditional spline test.
    pub concat_replicates: usize,
    /// Populations averaged over when mapping κ to ε in the tilt variant.
    pub reference_populations: usize,
    pub delta_form: DeltaForm,
}

impl Default for CaseControlConfig {
    fn default() -> Self {
        Self {
            alpha: -5.0,
            beta: 1.0,
            population_size: 200_000,
            control_match: 1.0,
            misspec: Misspec::Quadratic,
            kappa_grid: vec![0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0],
            magnitude_grid: Vec::new(),
            knot: 1.8,
            sign: 1.0,
            spline_df: 4,
            concat_replicates: 100,
            reference_populations: 16,
            delta_form: DeltaForm::Influence,
        }
    }
}

impl CaseControlConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.alpha.is_finite() || !self.beta.is_finite() || !self.knot.is_finite() {
            return Err(Error::Config("alpha, beta and knot must be finite".into()));
        }
        if !(self.control_match > 0.0) {
            return Err(Error::Config("control_match must be positive".into()));
        }
        if self.sign != 1.0 && self.sign != -1.0 {
            return Err(Error::Config("sign must be 1 or -1".into()));
        }
        if self.spline_df == 0 || self.concat_replicates == 0 || self.reference_populations == 0 {
            return Err(Error::Config("spline_df, concat_replicates and reference_populations must be positive".into()));
        }
        let grid = self.grid();
        if !grid.contains(&0.0) {
            return Err(Error::Config("the magnitude grid must contain 0".into()));
        }
        if grid.iter().any(|v| !v.is_finite()) || (self.magnitude_grid.is_empty() && grid.iter().any(|k| *k < 0.0)) {
            return Err(Error::Config("kappa_grid values must be finite and nonnegative".into()));
        }
        let grid_rule = NormalGrid::new(&[])?;
        let p = grid_rule.expect(|x| expit(self.alpha + self.beta * x));
        let expected = p * self.population_size as f64;
        if expected < 100.0 {
            return Err(Error::Config(format!("expected case count {expected:.1} is below 100")));
        }
        Ok(())
    }

    fn grid(&self) -> &[f64] {
        if self.magnitude_grid.is_empty() {
            &self.kappa_grid
        } else {
            &self.magnitude_grid
        }
    }
}

/// Composite Gauss–Legendre rule for `∫ f(x) φ(x) dx` on [−12, 12] with
/// panel edges at the given breakpoints, so kinks there are integrated
/// exactly.
#[derive(Clone, Debug)]
struct NormalGrid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl NormalGrid {
    fn new(breaks: &[f64]) -> Result<Self> {
        let mut edges = vec![-12.0];
        edges.extend(breaks.iter().copied().filter(|b| *b > -12.0 && *b < 12.0));
        edges.push(12.0);
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for w in edges.windows(2) {
            let panels = ((w[1] - w[0]) / 0.5).ceil().max(1.0) as usize;
            let rule = QuadratureRule::interval(w[0], w[1], panels, 16)?;
            for (x, wt) in rule.nodes().iter().zip(rule.weights()) {
                nodes.push(*x);
                weights.push(wt * crate::numerics::norm_pdf(*x));
            }
        }
        Ok(Self { nodes, weights })
    }

    fn expect<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(x, w)| w * f(*x)).sum()
    }
}

/// Population logit `a + b·x + quad·x² + hinge·(x − knot)₊`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Logit {
    pub a: f64,
    pub b: f64,
    pub quad: f64,
    pub hinge: f64,
    pub knot: f64,
}

impl Logit {
    pub fn linear(a: f64, b: f64) -> Self {
        Self {
            a,
            b,
            quad: 0.0,
            hinge: 0.0,
            knot: 0.0,
        }
    }

    pub fn eta(&self, x: f64) -> f64 {
        let mut e = self.a + self.b * x + self.quad * x * x;
        if self.hinge != 0.0 && x > self.knot {
            e += self.hinge * (x - self.knot);
        }
        e
    }
}

/// Conditional laws of X given Y under a logistic population with
/// `X ~ N(0, 1)`, with samplers.
#[derive(Clone, Debug)]
pub struct Conditional {
    logit: Logit,
    /// `P(Y = 1) = E[expit(η(X))]`
    p1: f64,
    proposal: NormalProposal,
    bound: f64,
}

impl Conditional {
    fn new(logit: Logit, grid: &NormalGrid) -> Result<Self> {
        let p1 = grid.expect(|x| expit(logit.eta(x)));
        if !(p1 > 0.0 && p1 < 1.0) {
            return Err(Error::Degenerate(format!("case probability {p1}")));
        }
        let m = grid.expect(|x| x * expit(logit.eta(x))) / p1;
        let v = grid.expect(|x| (x - m) * (x - m) * expit(logit.eta(x))) / p1;
        let proposal = NormalProposal::new(m, 1.25 * v.sqrt().max(1.0))?;
        let target = |x: f64| crate::numerics::dist::norm_log_pdf(x) - log1pexp(-logit.eta(x));
        let half = 12.0 * proposal.sd;
        let bound = find_envelope_bound(target, proposal, (m - half, m + half))?;
        Ok(Self {
            logit,
            p1,
            proposal,
            bound,
        })
    }

    pub fn logit(&self) -> Logit {
        self.logit
    }

    pub fn case_probability(&self) -> f64 {
        self.p1
    }

    fn draw_case(&self, rng: &mut RngStream) -> Result<f64> {
        let logit = self.logit;
        rejection_sample(
            |x| crate::numerics::dist::norm_log_pdf(x) - log1pexp(-logit.eta(x)),
            self.proposal,
            self.bound,
            rng,
        )
    }

    /// Standard Normal proposal accepted with probability `1 − expit(η)`.
    fn draw_control(&self, rng: &mut RngStream) -> f64 {
        loop {
            let x: f64 = StandardNormal.sample(rng);
            if rng.random::<f64>() >= expit(self.logit.eta(x)) {
                return x;
            }
        }
    }
}

/// Straight-line and natural-spline logits fitted on a large sample; the
/// statistic is their Bernoulli log-likelihood difference on fresh data.
#[derive(Clone, Debug)]
pub struct SplineTest {
    spline: NaturalSpline,
    line: Vec<f64>,
    curve: Vec<f64>,
}

impl SplineTest {
    pub fn fit(big: &TwoPhaseDataset, df: usize) -> Result<Self> {
        let (x, y) = sampled_xy(big);
        let spline = NaturalSpline::from_quantiles(&x, df)?;
        let line = logistic_fit(&line_design(&x), &y, None, None)?;
        let curve = logistic_fit(&spline.design(&x), &y, None, None)?;
        if !line.converged || !curve.converged {
            return Err(Error::Degenerate("spline test fit did not converge".into()));
        }
        Ok(Self {
            spline,
            line: line.coef,
            curve: curve.coef,
        })
    }

    pub fn statistic(&self, data: &TwoPhaseDataset) -> f64 {
        let (x, y) = sampled_xy(data);
        logistic_loglik(&self.spline.design(&x), &y, &self.curve) - logistic_loglik(&line_design(&x), &y, &self.line)
    }

    /// Fitted spline and straight-line logits at `x`.
    pub fn logits(&self, x: f64) -> (f64, f64) {
        let s = self.spline.design(&[x]);
        let curve = (0..s.ncols()).map(|j| s[(0, j)] * self.curve[j]).sum();
        (curve, self.line[0] + self.line[1] * x)
    }
}

fn sampled_xy(data: &TwoPhaseDataset) -> (Vec<f64>, Vec<f64>) {
    data.sampled().map(|u| (u.x.unwrap()[0], u.y)).unzip()
}

fn line_design(x: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(x.len(), 2, |i, j| if j == 0 { 1.0 } else { x[i] })
}

/// Efficient (unweighted) and design-based (`1/π`-weighted) logistic fits.
pub fn cc_efficient(data: &TwoPhaseDataset) -> Result<LogisticFit> {
    let (x, y) = sampled_xy(data);
    check_classes(&y)?;
    logistic_fit(&line_design(&x), &y, None, None)
}

pub fn cc_weighted(data: &TwoPhaseDataset) -> Result<LogisticFit> {
    let (x, y) = sampled_xy(data);
    check_classes(&y)?;
    let w: Vec<f64> = data.sampled().map(|u| u.ht_weight()).collect();
    logistic_fit(&line_design(&x), &y, Some(&w), None)
}

fn check_classes(y: &[f64]) -> Result<()> {
    if !y.iter().any(|v| *v > 0.5) || !y.iter().any(|v| *v < 0.5) {
        return Err(Error::Degenerate("phase-2 sample lacks cases or controls".into()));
    }
    Ok(())
}

/// One-sided Wald statistic for an extra logit term `extra(x)`, fitted
/// without weights.
pub fn wald_extra<F: Fn(f64) -> f64>(data: &TwoPhaseDataset, extra: F) -> Result<f64> {
    let (x, y) = sampled_xy(data);
    let design = DMatrix::from_fn(x.len(), 3, |i, j| match j {
        0 => 1.0,
        1 => x[i],
        _ => extra(x[i]),
    });
    let fit = logistic_fit(&design, &y, None, None)?;
    if !fit.converged {
        return Err(Error::Degenerate("Wald fit did not converge".into()));
    }
    Ok(fit.coef[2] / fit.standard_errors()[2])
}

/// Straight-line logit `a + b·x` closest in Kullback–Leibler divergence to
/// success probability `target(x)` when X has density `ω(x)φ(x)` (up to
/// scale): solves `E_φ[ω (target − expit(a + bx)) (1, x)] = 0`.
fn logistic_projection<T: Fn(f64) -> f64, W: Fn(f64) -> f64>(target: T, omega: W, start: [f64; 2], grid: &NormalGrid) -> Result<[f64; 2]> {
    let residual = |t: &[f64]| -> Vec<f64> {
        let r = |x: f64| omega(x) * (target(x) - expit(t[0] + t[1] * x));
        vec![grid.expect(r), grid.expect(|x| x * r(x))]
    };
    let jac = |t: &[f64]| -> DMatrix<f64> {
        let v = |x: f64| {
            let m = expit(t[0] + t[1] * x);
            omega(x) * m * (1.0 - m)
        };
        let (a, b, c) = (grid.expect(v), grid.expect(|x| x * v(x)), grid.expect(|x| x * x * v(x)));
        -DMatrix::from_row_slice(2, 2, &[a, b, b, c])
    };
    let root = solve_root(&RootProblem::new(start.to_vec(), residual).with_jacobian(jac))?;
    Ok([root[0], root[1]])
}

/// Complete-data logistic limit (intercept, slope) of a population logit.
fn census_fit(logit: Logit, grid: &NormalGrid) -> Result<[f64; 2]> {
    logistic_projection(|x| expit(logit.eta(x)), |_| 1.0, [logit.a, logit.b], grid)
}

/// Mean of the complete-data logistic fit over populations of size `n`:
/// the limit `θ` plus the second-order bias of an M-estimator,
/// `A⁻¹ E[H A⁻¹ψ + ½ ∇²ψ[A⁻¹BA⁻¹]] / n` with `ψ = x(y − μ)`, `H = ∂ψ/∂θ`,
/// `A = −E[H]`, `B = E[ψψᵀ]`, which holds whether or not the logit is
/// linear. The neglected terms are O(n⁻²).
pub fn census_mean(logit: Logit, n: usize) -> Result<[f64; 2]> {
    let grid = NormalGrid::new(&[logit.knot])?;
    let theta = census_fit(logit, &grid)?;
    let mu = |x: f64| expit(theta[0] + theta[1] * x);
    let truth = |x: f64| expit(logit.eta(x));
    let moments = |f: &dyn Fn(f64) -> f64| -> DMatrix<f64> {
        let (a, b, c) = (grid.expect(f), grid.expect(|x| x * f(x)), grid.expect(|x| x * x * f(x)));
        DMatrix::from_row_slice(2, 2, &[a, b, b, c])
    };
    let a = moments(&|x| mu(x) * (1.0 - mu(x)));
    // E[(y − μ)² | x] under the true law.
    let b = moments(&|x| {
        let t = truth(x);
        t * (1.0 - t) + (t - mu(x)).powi(2)
    });
    let a_inv = a.try_inverse().ok_or_else(|| Error::Degenerate("singular census information".into()))?;
    let v = &a_inv * b * &a_inv;
    let quad = |m: &DMatrix<f64>, x: f64| m[(0, 0)] + 2.0 * m[(0, 1)] * x + m[(1, 1)] * x * x;
    // E[H A⁻¹ψ] = −E[μ(1−μ)(true μ − μ)(xᵀA⁻¹x) x]
    let first = |x: f64| -mu(x) * (1.0 - mu(x)) * (truth(x) - mu(x)) * quad(&a_inv, x);
    // ½E[∇²ψ[V]] = −½E[μ(1−μ)(1−2μ)(xᵀVx) x]
    let second = |x: f64| -0.5 * mu(x) * (1.0 - mu(x)) * (1.0 - 2.0 * mu(x)) * quad(&v, x);
    let g = nalgebra::DVector::from_vec(vec![
        grid.expect(|x| first(x) + second(x)),
        grid.expect(|x| x * (first(x) + second(x))),
    ]);
    let bias = a_inv * g / n as f64;
    Ok([theta[0] + bias[0], theta[1] + bias[1]])
}

pub enum CcLaws {
    /// Parametric misspecification: `q` is the population law; the working
    /// law keeps the phase-2 law of X and has phase-2 logit `p_logit`.
    Parametric { q: Conditional, p_logit: [f64; 2] },
    /// Tilted resampling of an intermediate sample, with the population
    /// regenerated for every replicate.
    Tilt { epsilon: f64, test: SplineTest },
}

pub struct CcPoint {
    pub magnitude: f64,
    /// γ or ε.
    pub coefficient: f64,
    pub kappa_exact: f64,
    pub theta_star: f64,
    pub laws: CcLaws,
}

/// The finite population behind the tilt variant, reduced to the
/// intermediate sample of all cases and matched controls.
pub struct Intermediate {
    pub data: TwoPhaseDataset,
    pub delta: Vec<f64>,
    pub n_cases: usize,
    pub n_controls_population: usize,
    pub resample: [usize; 2],
}

pub struct CaseControl {
    config: CaseControlConfig,
    grid: NormalGrid,
    base: Conditional,
    /// Design probability of sampling a control.
    pi0: f64,
    scale_n: f64,
}

impl CaseControl {
    pub fn new(config: CaseControlConfig) -> Result<Self> {
        config.validate()?;
        let grid = NormalGrid::new(&[config.knot])?;
        let base = Conditional::new(Logit::linear(config.alpha, config.beta), &grid)?;
        let pi0 = (config.control_match * base.p1 / (1.0 - base.p1)).min(1.0);
        let scale_n = config.population_size as f64 * (base.p1 + pi0 * (1.0 - base.p1));
        Ok(Self {
            config,
            grid,
            base,
            pi0,
            scale_n,
        })
    }

    pub fn config(&self) -> &CaseControlConfig {
        &self.config
    }

    pub fn base(&self) -> &Conditional {
        &self.base
    }

    fn logit_with(&self, gamma: f64) -> Logit {
        let mut l = Logit::linear(self.config.alpha, self.config.beta);
        l.knot = self.config.knot;
        match self.config.misspec {
            Misspec::Quadratic => l.quad = gamma,
            Misspec::Spline => l.hinge = gamma,
            Misspec::Tilt => {}
        }
        l
    }

    pub fn pi0(&self) -> f64 {
        self.pi0
    }

    /// Phase-2 logit `η(x) − log π₀` of a population logit.
    fn sample_logit(&self, logit: Logit, x: f64) -> f64 {
        logit.eta(x) - self.pi0.ln()
    }

    /// Misspecified population law at coefficient γ and the phase-2 logit of
    /// its closest working law: the straight line nearest, in
    /// Kullback–Leibler divergence, to the phase-2 law of Y given X.
    pub fn laws(&self, gamma: f64) -> Result<(Conditional, [f64; 2])> {
        let q = Conditional::new(self.logit_with(gamma), &self.grid)?;
        let start = [self.config.alpha - self.pi0.ln(), self.config.beta];
        if gamma == 0.0 {
            return Ok((q, start));
        }
        let logit = q.logit;
        let pi0 = self.pi0;
        // Phase-2 density of X is ∝ φ(x)(μ + π₀(1 − μ)), and ω·μ̃ = μ.
        let omega = |x: f64| {
            let m = expit(logit.eta(x));
            m + pi0 * (1.0 - m)
        };
        let p_logit = logistic_projection(|x| expit(self.sample_logit(logit, x)), omega, start, &self.grid)?;
        Ok((q, p_logit))
    }

    /// κ of the phase-2 log likelihood ratio at coefficient γ, from the
    /// symmetrized divergence `E_Q[LLR] − E_P[LLR] = E[Σ (μ̃_Q − μ̃_P)(η̃_Q − η̃_P)]`.
    pub fn kappa_of_gamma(&self, gamma: f64) -> Result<f64> {
        if gamma == 0.0 {
            return Ok(0.0);
        }
        let (q, pl) = self.laws(gamma)?;
        let pi0 = self.pi0;
        let j = self.grid.expect(|x| {
            let m = expit(q.logit.eta(x));
            let eq = self.sample_logit(q.logit, x);
            let ep = pl[0] + pl[1] * x;
            (m + pi0 * (1.0 - m)) * (expit(eq) - expit(ep)) * (eq - ep)
        });
        Ok((self.config.population_size as f64 * j).max(0.0).sqrt())
    }

    pub fn gamma_for_kappa(&self, kappa: f64) -> Result<f64> {
        solve_magnitude(kappa, self.config.sign, |g| self.kappa_of_gamma(g))
    }

    /// Reference populations used to map κ to ε. They depend on the seed
    /// only, so every magnitude shares them.
    pub fn reference_intermediates(&self, seed: u64) -> Result<Vec<Intermediate>> {
        (0..self.config.reference_populations)
            .map(|k| self.draw_intermediate(&mut RngStream::new(seed, stream_key(&[u64::MAX, 0, k as u64]))))
            .collect()
    }

    /// Generate a finite population and its intermediate sample.
    pub fn draw_intermediate(&self, rng: &mut RngStream) -> Result<Intermediate> {
        let c = &self.config;
        let mut cases = Vec::new();
        let mut controls = Vec::new();
        for _ in 0..c.population_size {
            let x: f64 = StandardNormal.sample(rng);
            if rng.random::<f64>() < expit(c.alpha + c.beta * x) {
                cases.push(x);
            } else {
                controls.push(x);
            }
        }
        let m = cases.len();
        let mc = ((c.control_match * m as f64).round() as usize).min(controls.len());
        if m < 2 || mc < 2 {
            return Err(Error::EmptyStratum("population has too few cases or controls".into()));
        }
        let picked = rand::seq::index::sample(rng, controls.len(), mc).into_vec();
        let resample = [(mc / 2).max(1), (m / 2).max(1)];
        let pi_case = resample[1] as f64 / m as f64;
        let pi_control = resample[0] as f64 / controls.len() as f64;
        let mut data = TwoPhaseDataset::with_capacity(1, 0, m + mc);
        for &x in &cases {
            data.push(1.0, &[], pi_case, Some(&[x]))?;
        }
        for &i in &picked {
            data.push(0.0, &[], pi_control, Some(&[controls[i]]))?;
        }
        let delta = self.tilt_direction(&data, controls.len() as f64 / mc as f64)?;
        Ok(Intermediate {
            data,
            delta,
            n_cases: m,
            n_controls_population: controls.len(),
            resample,
        })
    }

    /// `V̌ − Ǔ` for the slope on the intermediate sample at the true
    /// parameter, where controls stand for `w0` population controls each.
    fn tilt_direction(&self, data: &TwoPhaseDataset, w0: f64) -> Result<Vec<f64>> {
        let c = &self.config;
        let (x, y) = sampled_xy(data);
        let w: Vec<f64> = y.iter().map(|&v| if v > 0.5 { 1.0 } else { w0 }).collect();
        let coef_u = [c.alpha, c.beta];
        let coef_v = [c.alpha + w0.ln(), c.beta];
        let n = x.len() as f64;
        let info = |coef: &[f64; 2], wt: &dyn Fn(usize) -> f64| -> DMatrix<f64> {
            let mut h = DMatrix::zeros(2, 2);
            for i in 0..x.len() {
                let m = expit(coef[0] + coef[1] * x[i]);
                let v = wt(i) * m * (1.0 - m);
                h[(0, 0)] += v;
                h[(0, 1)] += v * x[i];
                h[(1, 1)] += v * x[i] * x[i];
            }
            h[(1, 0)] = h[(0, 1)];
            h / n
        };
        let invert = |h: DMatrix<f64>| h.try_inverse().ok_or_else(|| Error::Degenerate("singular information".into()));
        let a_v = info(&coef_v, &|_| 1.0);
        let a_u = info(&coef_u, &|i| w[i]);
        let (m_v, m_u, score_w): (DMatrix<f64>, DMatrix<f64>, Box<dyn Fn(usize) -> f64>) = match c.delta_form {
            DeltaForm::Influence => (invert(a_v)?, invert(a_u)?, Box::new(|i| w[i])),
            DeltaForm::Literal => (invert(a_v)?, invert(a_u)?, Box::new(|_| 1.0)),
            DeltaForm::Printed => (a_v, a_u, Box::new(|_| 1.0)),
            DeltaForm::Frame => (invert(a_v)?, invert(info(&coef_u, &|_| 1.0))?, Box::new(|_| 1.0)),
        };
        let slope = |m: &DMatrix<f64>, i: usize, resid: f64| m[(1, 0)] * resid + m[(1, 1)] * x[i] * resid;
        Ok((0..x.len())
            .map(|i| {
                let rv = y[i] - expit(coef_v[0] + coef_v[1] * x[i]);
                let ru = y[i] - expit(coef_u[0] + coef_u[1] * x[i]);
                slope(&m_v, i, rv) - slope(&m_u, i, score_w(i) * ru)
            })
            .collect())
    }

    fn resampling(&self, inter: &Intermediate, epsilon: f64) -> Result<ResamplingTilt> {
        ResamplingTilt::new(&inter.data, &inter.delta, epsilon, inter.resample[1], inter.resample[0])
    }

    /// κ at ε as `√J`, with the symmetrized divergence `J` of the resampling
    /// log likelihood ratio averaged over populations.
    pub fn kappa_of_epsilon(&self, refs: &[Intermediate], epsilon: f64) -> Result<f64> {
        let mut j = 0.0;
        for inter in refs {
            j += self.resampling(inter, epsilon)?.kappa_symmetric().powi(2);
        }
        Ok((j / refs.len() as f64).sqrt())
    }

    /// Census slope of the population the (tilted) resampling represents:
    /// each intermediate unit stands for its stratum size times its
    /// resampling probability.
    pub fn tilt_census(&self, inter: &Intermediate, tilt: &ResamplingTilt) -> Result<f64> {
        let (x, y) = sampled_xy(&inter.data);
        let w: Vec<f64> = y
            .iter()
            .zip(tilt.unit_log_probabilities())
            .map(|(&v, lp)| lp.exp() * if v > 0.5 { inter.n_cases as f64 } else { inter.n_controls_population as f64 })
            .collect();
        Ok(logistic_fit(&line_design(&x), &y, Some(&w), None)?.coef[1])
    }

    /// Draw one phase-2 sample: every case and each control with
    /// probability π₀ from population law `q`. With `p_logit`, Y is instead
    /// redrawn from that phase-2 logit given X (the working law). The log
    /// likelihood ratio of `q` against `p_logit` is returned when requested.
    fn draw_parametric(&self, q: &Conditional, p_logit: Option<[f64; 2]>, llr_against: Option<[f64; 2]>, rng: &mut RngStream) -> Result<(TwoPhaseDataset, f64)> {
        let big_n = self.config.population_size;
        let s = q.p1 + self.pi0 * (1.0 - q.p1);
        let n2 = Binomial::new(big_n as u64, s)
            .map_err(|e| Error::InvalidInput(e.to_string()))?
            .sample(rng) as usize;
        let mut units = Vec::with_capacity(n2);
        let mut llr = 0.0;
        for _ in 0..n2 {
            let case = rng.random::<f64>() * s < q.p1;
            let x = if case { q.draw_case(rng)? } else { q.draw_control(rng) };
            let y = match p_logit {
                Some(pl) => f64::from(u8::from(rng.random::<f64>() < expit(pl[0] + pl[1] * x))),
                None => f64::from(u8::from(case)),
            };
            if let Some(pl) = llr_against {
                llr += bernoulli_loglik(y, self.sample_logit(q.logit, x)) - bernoulli_loglik(y, pl[0] + pl[1] * x);
            }
            units.push((x, y));
        }
        let m = units.iter().filter(|u| u.1 > 0.5).count();
        let mc = n2 - m;
        if m == 0 || mc == 0 {
            return Err(Error::EmptyStratum("no cases or controls in phase 2".into()));
        }
        // Unsampled units are controls, so π₀ is known from phase-1 counts.
        let pi0 = mc as f64 / (big_n - m) as f64;
        let mut data = TwoPhaseDataset::with_capacity(1, 0, n2);
        for (x, y) in units {
            data.push(y, &[], if y > 0.5 { 1.0 } else { pi0 }, Some(&[x]))?;
        }
        Ok((data, llr))
    }

    /// Knot search for the spline variant: for each candidate knot, the
    /// correlation under the working law between the Wald statistic for
    /// `(x − knot)₊` and the estimator contrast. All knots see the same data.
    pub fn knot_search(&self, knots: &[f64], reps: usize, seed: u64) -> Result<(f64, f64)> {
        let search = KnotSearch { cc: self };
        knot_search(knots, &search, reps, &RngStream::new(seed, stream_key(&[u64::MAX, 1])))
    }

    /// Conditional spline test from `concat_replicates` misspecified-law
    /// draws concatenated.
    fn spline_test(&self, epsilon: f64, index: usize, seed: u64) -> Result<SplineTest> {
        let draws = (0..self.config.concat_replicates)
            .map(|r| {
                let mut rng = RngStream::new(seed, stream_key(&[index as u64, 2, r as u64]));
                let inter = self.draw_intermediate(&mut rng)?;
                self.resampling(&inter, epsilon)?.draw(&inter.data, true, &mut rng).map(|d| d.dataset)
            })
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&TwoPhaseDataset> = draws.iter().collect();
        SplineTest::fit(&TwoPhaseDataset::concat(&refs)?, self.config.spline_df)
    }
}

/// Find the coefficient with the given κ, searching in direction `sign`.
fn solve_magnitude<F: Fn(f64) -> Result<f64>>(kappa: f64, sign: f64, kappa_of: F) -> Result<f64> {
    if kappa == 0.0 {
        return Ok(0.0);
    }
    let mut hi = 1e-3;
    while kappa_of(sign * hi)? < kappa {
        hi *= 2.0;
        if hi > 1e3 {
            return Err(Error::InvalidInput(format!("kappa {kappa} is beyond the reachable range")));
        }
    }
    let root = solve_root(&RootProblem::bracketed(0.0, hi, |g| match kappa_of(sign * g) {
        Ok(k) => k - kappa,
        Err(_) => f64::NAN,
    })
    // κ carries the tolerance of the inner projection solve.
    .tolerance(1e-7))?;
    Ok(sign * root[0])
}

struct KnotSearch<'a> {
    cc: &'a CaseControl,
}

impl KnotScenario for KnotSearch<'_> {
    fn replicate(&self, knot: f64, rng: &mut RngStream) -> Result<(f64, f64)> {
        let base = &self.cc.base;
        let (data, _) = self.cc.draw_parametric(base, None, None, rng)?;
        let z = wald_extra(&data, |x| (x - knot).max(0.0))?;
        let e = cc_efficient(&data)?;
        let w = cc_weighted(&data)?;
        Ok((z, self.cc.scale_n.sqrt() * (e.coef[1] - w.coef[1])))
    }
}

impl Scenario for CaseControl {
    type Point = CcPoint;

    fn name(&self) -> &'static str {
        match self.config.misspec {
            Misspec::Quadratic => "cc_quadratic",
            Misspec::Tilt => "cc_tilt",
            Misspec::Spline => "cc_spline",
        }
    }

    fn magnitude_label(&self) -> &'static str {
        match (self.config.magnitude_grid.is_empty(), self.config.misspec) {
            (true, _) => "kappa",
            (false, Misspec::Tilt) => "epsilon",
            (false, _) => "gamma",
        }
    }

    fn magnitudes(&self) -> Vec<f64> {
        self.config.grid().to_vec()
    }

    fn estimator_names(&self) -> Vec<&'static str> {
        vec!["mle", "weighted"]
    }

    fn tests(&self) -> Vec<TestSpec> {
        match self.config.misspec {
            Misspec::Tilt => vec![TestSpec {
                name: "conditional",
                critical: Critical::NullQuantile,
            }],
            _ => vec![TestSpec {
                name: "wald",
                critical: Critical::Fixed(crate::harness::summary::z_critical()),
            }],
        }
    }

    fn scale_n(&self) -> f64 {
        self.scale_n
    }

    fn prepare(&self, index: usize, magnitude: f64, seed: u64) -> Result<CcPoint> {
        let explicit = !self.config.magnitude_grid.is_empty();
        match self.config.misspec {
            Misspec::Tilt => {
                let refs = self.reference_intermediates(seed)?;
                let epsilon = if explicit {
                    magnitude
                } else {
                    solve_magnitude(magnitude, self.config.sign, |e| self.kappa_of_epsilon(&refs, e))?
                };
                // θ* is reported as the mean census slope; replicates carry their own.
                let mut theta_star = 0.0;
                for inter in &refs {
                    theta_star += self.tilt_census(inter, &self.resampling(inter, epsilon)?)? / refs.len() as f64;
                }
                Ok(CcPoint {
                    magnitude,
                    coefficient: epsilon,
                    kappa_exact: self.kappa_of_epsilon(&refs, epsilon)?,
                    theta_star,
                    laws: CcLaws::Tilt {
                        epsilon,
                        test: self.spline_test(epsilon, index, seed)?,
                    },
                })
            }
            _ => {
                let gamma = if explicit { magnitude } else { self.gamma_for_kappa(magnitude)? };
                let (q, p_logit) = self.laws(gamma)?;
                let theta_star = census_mean(q.logit, self.config.population_size)?[1];
                Ok(CcPoint {
                    magnitude,
                    coefficient: gamma,
                    kappa_exact: self.kappa_of_gamma(gamma)?,
                    theta_star,
                    laws: CcLaws::Parametric { q, p_logit },
                })
            }
        }
    }

    fn theta_star(&self, point: &CcPoint) -> f64 {
        point.theta_star
    }

    fn point_details(&self, point: &CcPoint) -> Vec<(&'static str, f64)> {
        let name = if self.config.misspec == Misspec::Tilt { "epsilon" } else { "gamma" };
        vec![(name, point.coefficient), ("kappa_exact", point.kappa_exact)]
    }

    fn replicate(&self, point: &CcPoint, law: Law, rng: &mut RngStream) -> Result<ReplicateOutcome> {
        let mut target = None;
        let (data, llr, statistic) = match &point.laws {
            CcLaws::Parametric { q, p_logit } => {
                let working = if law == Law::P && point.coefficient != 0.0 { Some(*p_logit) } else { None };
                let against = if point.coefficient != 0.0 { Some(*p_logit) } else { None };
                let (data, llr) = self.draw_parametric(q, working, against, rng)?;
                let sign = if point.coefficient < 0.0 { -1.0 } else { self.config.sign };
                let knot = self.config.knot;
                let z = match self.config.misspec {
                    Misspec::Spline => wald_extra(&data, |x| (x - knot).max(0.0))?,
                    _ => wald_extra(&data, |x| x * x)?,
                };
                (data, llr, sign * z)
            }
            CcLaws::Tilt { epsilon, test } => {
                let inter = self.draw_intermediate(rng)?;
                let tilt = self.resampling(&inter, *epsilon)?;
                target = Some(self.tilt_census(&inter, &tilt)?);
                let draw = tilt.draw(&inter.data, law == Law::Q, rng)?;
                let s = test.statistic(&draw.dataset);
                (draw.dataset, draw.loglik_ratio, s)
            }
        };
        let e = cc_efficient(&data)?;
        let w = cc_weighted(&data)?;
        Ok(ReplicateOutcome {
            estimates: vec![e.coef[1], w.coef[1]],
            converged: e.converged && w.converged,
            loglik_ratio: llr,
            statistics: vec![statistic],
            target,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::dist::{mean, sample_variance};

    fn base_config() -> CaseControlConfig {
        CaseControlConfig {
            kappa_grid: vec![0.0, 1.0],
            ..Default::default()
        }
    }

    #[test]
    fn case_probability_matches_simulation() {
        let cc = CaseControl::new(base_config()).unwrap();
        let mut rng = RngStream::new(11, 0);
        let n = 1_000_000;
        let cases = (0..n)
            .filter(|_| {
                let x: f64 = StandardNormal.sample(&mut rng);
                rng.random::<f64>() < expit(-5.0 + x)
            })
            .count();
        let p = cc.base().case_probability();
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((cases as f64 / n as f64 - p).abs() < 4.0 * se);
    }

    #[test]
    fn conditional_samplers_match_quadrature_means() {
        let cc = CaseControl::new(base_config()).unwrap();
        let q = cc.base();
        let p1 = q.case_probability();
        let case_mean = cc.grid.expect(|x| x * expit(-5.0 + x)) / p1;
        let control_mean = cc.grid.expect(|x| x * (1.0 - expit(-5.0 + x))) / (1.0 - p1);
        let mut rng = RngStream::new(12, 0);
        let cases: Vec<f64> = (0..20_000).map(|_| q.draw_case(&mut rng).unwrap()).collect();
        let controls: Vec<f64> = (0..20_000).map(|_| q.draw_control(&mut rng)).collect();
        for (draws, m) in [(&cases, case_mean), (&controls, control_mean)] {
            let se = (sample_variance(draws) / draws.len() as f64).sqrt();
            assert!((mean(draws) - m).abs() < 4.0 * se);
        }
    }

    #[test]
    fn linear_logit_is_its_own_projection() {
        let grid = NormalGrid::new(&[]).unwrap();
        let fit = census_fit(Logit::linear(-2.0, 0.7), &grid).unwrap();
        assert!((fit[0] + 2.0).abs() < 1e-8 && (fit[1] - 0.7).abs() < 1e-8);
    }

    #[test]
    fn census_mean_matches_fitted_populations() {
        let logit = Logit::linear(-1.0, 1.0);
        let n = 400;
        let predicted = census_mean(logit, n).unwrap()[1];
        let mut rng = RngStream::new(13, 0);
        let slopes: Vec<f64> = (0..4000)
            .map(|_| {
                let x: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
                let y: Vec<f64> = x.iter().map(|&v| f64::from(u8::from(rng.random::<f64>() < expit(-1.0 + v)))).collect();
                logistic_fit(&line_design(&x), &y, None, None).unwrap().coef[1]
            })
            .collect();
        let se = (sample_variance(&slopes) / slopes.len() as f64).sqrt();
        assert!(predicted > 1.0);
        assert!((mean(&slopes) - predicted).abs() < 4.0 * se, "{} vs {predicted} (se {se})", mean(&slopes));
    }

    #[test]
    fn efficient_intercept_is_offset_by_log_sampling_fraction() {
        let cc = CaseControl::new(CaseControlConfig {
            population_size: 2_000_000,
            ..base_config()
        })
        .unwrap();
        let mut rng = RngStream::new(14, 0);
        let (data, llr) = cc.draw_parametric(cc.base(), None, None, &mut rng).unwrap();
        assert_eq!(llr, 0.0);
        let fit = cc_efficient(&data).unwrap();
        assert!((fit.coef[0] - (-5.0 - cc.pi0().ln())).abs() < 0.05);
        assert!((fit.coef[1] - 1.0).abs() < 0.05);
    }

    #[test]
    fn full_control_sampling_makes_estimators_agree() {
        // With π₀ = 1 every unit is sampled, so the weights are all one.
        let cc = CaseControl::new(CaseControlConfig {
            alpha: -1.0,
            population_size: 5000,
            control_match: 1e6,
            ..base_config()
        })
        .unwrap();
        assert_eq!(cc.pi0(), 1.0);
        let (data, _) = cc.draw_parametric(cc.base(), None, None, &mut RngStream::new(15, 0)).unwrap();
        assert_eq!(data.len(), 5000);
        let e = cc_efficient(&data).unwrap();
        let w = cc_weighted(&data).unwrap();
        assert!((e.coef[1] - w.coef[1]).abs() < 1e-10);
    }

    #[test]
    fn kappa_map_is_zero_at_zero_and_increasing() {
        for misspec in [Misspec::Quadratic, Misspec::Spline] {
            let cc = CaseControl::new(CaseControlConfig { misspec, ..base_config() }).unwrap();
            assert!(cc.kappa_of_gamma(0.0).unwrap().abs() < 1e-6);
            let k: Vec<f64> = [0.05, 0.1, 0.2].iter().map(|&g| cc.kappa_of_gamma(g).unwrap()).collect();
            assert!(k[0] < k[1] && k[1] < k[2]);
            let g = cc.gamma_for_kappa(1.0).unwrap();
            assert!((cc.kappa_of_gamma(g).unwrap() - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn untilted_resampling_targets_the_weighted_intermediate_fit() {
        let cc = CaseControl::new(CaseControlConfig {
            misspec: Misspec::Tilt,
            population_size: 50_000,
            ..base_config()
        })
        .unwrap();
        let inter = cc.draw_intermediate(&mut RngStream::new(16, 0)).unwrap();
        let tilt = cc.resampling(&inter, 0.0).unwrap();
        let census = cc.tilt_census(&inter, &tilt).unwrap();
        let w0 = inter.n_controls_population as f64 / (inter.data.len() - inter.n_cases) as f64;
        let (x, y) = sampled_xy(&inter.data);
        let w: Vec<f64> = y.iter().map(|&v| if v > 0.5 { 1.0 } else { w0 }).collect();
        let direct = logistic_fit(&line_design(&x), &y, Some(&w), None).unwrap().coef[1];
        assert!((census - direct).abs() < 1e-9);
        let draw = tilt.draw(&inter.data, true, &mut RngStream::new(16, 1)).unwrap();
        assert_eq!(draw.loglik_ratio, 0.0);
        assert_eq!(cc.kappa_of_epsilon(std::slice::from_ref(&inter), 0.0).unwrap(), 0.0);
    }

    #[test]
    fn tilt_direction_is_centred_on_the_true_fit() {
        // Δ is a difference of influence values, so its sample mean is small
        // relative to its spread.
        let cc = CaseControl::new(CaseControlConfig {
            misspec: Misspec::Tilt,
            population_size: 200_000,
            ..base_config()
        })
        .unwrap();
        let inter = cc.draw_intermediate(&mut RngStream::new(17, 0)).unwrap();
        let se = (sample_variance(&inter.delta) / inter.delta.len() as f64).sqrt();
        assert!(mean(&inter.delta).abs() < 4.0 * se);
    }

    #[test]
    fn config_rejects_grid_without_zero() {
        let bad = CaseControlConfig {
            kappa_grid: vec![1.0],
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
