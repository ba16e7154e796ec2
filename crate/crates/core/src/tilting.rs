//! Exponential tilts of a reference law.
//!
//! Two flavours: a density tilt `f_κ ∝ f₀·exp(κΔ)` sampled by rejection, and
//! a finite-population resampling tilt where unit `i` of a stratum is drawn
//! with probability proportional to `exp(εΔᵢ)`. Both record the exact log
//! likelihood ratio of the realized draw against the untilted law.

use std::sync::Arc;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;

use crate::error::{Error, Result};
use crate::estimators::TwoPhaseDataset;
use crate::numerics::dist::pearson;
use crate::numerics::{find_envelope_bound, rejection_sample, NormalProposal, QuadratureRule, RngStream};

pub type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Log normalizers from a rule and its refinement must agree this closely.
const DOUBLING_TOLERANCE: f64 = 1e-8;
/// Rejection proposal sd relative to the larger of the tilted and base sd.
const PROPOSAL_WIDENING: f64 = 1.25;

/// Reference law the tilt is applied to. Only Normal bases are needed by
/// the scenarios.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormalBase {
    pub mean: f64,
    pub sd: f64,
}

impl NormalBase {
    pub fn log_density(&self, x: f64) -> f64 {
        crate::numerics::dist::norm_log_pdf((x - self.mean) / self.sd) - self.sd.ln()
    }
}

#[derive(Clone)]
pub struct TiltSpec {
    pub direction: RealFn,
    pub magnitude: f64,
    pub base: NormalBase,
}

impl std::fmt::Debug for TiltSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TiltSpec")
            .field("magnitude", &self.magnitude)
            .field("base", &self.base)
            .finish_non_exhaustive()
    }
}

#[derive(Clone, Debug)]
pub struct TiltedDraw {
    pub dataset: TwoPhaseDataset,
    pub loglik_ratio: f64,
}

/// Normalized tilted density `f₀(x)·exp(κΔ(x) − log C)`.
#[derive(Clone)]
pub struct TiltedDensity {
    base: RealFn,
    direction: RealFn,
    kappa: f64,
    log_c: f64,
}

impl std::fmt::Debug for TiltedDensity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TiltedDensity")
            .field("kappa", &self.kappa)
            .field("log_c", &self.log_c)
            .finish_non_exhaustive()
    }
}

impl TiltedDensity {
    pub fn log_density(&self, x: f64) -> f64 {
        if self.kappa == 0.0 {
            return (self.base)(x);
        }
        (self.base)(x) + self.kappa * (self.direction)(x) - self.log_c
    }

    pub fn log_c(&self) -> f64 {
        self.log_c
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// `κΔ(x) − log C`, the per-draw log likelihood ratio against `f₀`.
    pub fn log_ratio(&self, x: f64) -> f64 {
        if self.kappa == 0.0 {
            return 0.0;
        }
        self.kappa * (self.direction)(x) - self.log_c
    }

    /// `∫ g f_κ` by the given rule.
    pub fn expect<G: Fn(f64) -> f64>(&self, g: G, rule: &QuadratureRule) -> Result<f64> {
        // g may change sign, so integrate positive and negative parts in log space.
        let pos = rule.log_integral(|x| {
            let v = g(x);
            if v > 0.0 { v.ln() + self.log_density(x) } else { f64::NEG_INFINITY }
        })?;
        let neg = rule.log_integral(|x| {
            let v = g(x);
            if v < 0.0 { (-v).ln() + self.log_density(x) } else { f64::NEG_INFINITY }
        })?;
        Ok(pos.exp() - neg.exp())
    }
}

/// Normalize `f₀·exp(κΔ)` by quadrature. The rule is checked against its
/// refinement; disagreement beyond 1e-8 in `log C` means the tilt is not
/// reliably integrable.
pub fn tilt_density(base_log_density: RealFn, direction: RealFn, kappa: f64, quad: &QuadratureRule) -> Result<TiltedDensity> {
    if !kappa.is_finite() {
        return Err(Error::InvalidInput(format!("tilt magnitude must be finite, got {kappa}")));
    }
    if kappa == 0.0 {
        return Ok(TiltedDensity {
            base: base_log_density,
            direction,
            kappa,
            log_c: 0.0,
        });
    }
    let integrand = |x: f64| base_log_density(x) + kappa * direction(x);
    let not_integrable = |_| Error::TiltNotIntegrable { kappa };
    let coarse = quad.log_integral(integrand).map_err(not_integrable)?;
    let fine = quad.refined()?.log_integral(integrand).map_err(not_integrable)?;
    if !coarse.is_finite() || !fine.is_finite() || (coarse - fine).abs() > DOUBLING_TOLERANCE * fine.abs().max(1.0) {
        return Err(Error::TiltNotIntegrable { kappa });
    }
    Ok(TiltedDensity {
        base: base_log_density,
        direction,
        kappa,
        log_c: fine,
    })
}

/// Rejection sampler for a tilted Normal base with a precomputed envelope.
#[derive(Clone)]
pub struct TiltSampler {
    density: TiltedDensity,
    proposal: NormalProposal,
    bound: f64,
}

impl TiltSampler {
    pub fn new(spec: &TiltSpec, quad: &QuadratureRule) -> Result<Self> {
        let base = spec.base;
        let density = tilt_density(Arc::new(move |x| base.log_density(x)), spec.direction.clone(), spec.magnitude, quad)?;
        // Proposal: centred on the tilted mean, with sd widened beyond both
        // the tilted and the base sd so the ratio stays bounded in the tails.
        let m = density.expect(|x| x, quad)?;
        let v = density.expect(|x| (x - m) * (x - m), quad)?;
        if !(v > 0.0) || !m.is_finite() {
            return Err(Error::TiltNotIntegrable { kappa: spec.magnitude });
        }
        let proposal = NormalProposal::new(m, PROPOSAL_WIDENING * v.sqrt().max(base.sd))?;
        let span = 12.0 * proposal.sd;
        let bound = find_envelope_bound(|x| density.log_density(x), proposal, (m - span, m + span))?;
        Ok(Self { density, proposal, bound })
    }

    pub fn density(&self) -> &TiltedDensity {
        &self.density
    }

    pub fn draw(&self, rng: &mut RngStream) -> Result<f64> {
        rejection_sample(|x| self.density.log_density(x), self.proposal, self.bound, rng)
    }
}

/// `n` iid draws from the tilted law. The dataset holds each draw as both
/// `y` and the single fully observed `x`.
pub fn sample_tilted(spec: &TiltSpec, n: usize, quad: &QuadratureRule, rng: &mut RngStream) -> Result<TiltedDraw> {
    let sampler = TiltSampler::new(spec, quad)?;
    let mut dataset = TwoPhaseDataset::with_capacity(1, 0, n);
    let mut llr = 0.0;
    for _ in 0..n {
        let x = sampler.draw(rng)?;
        llr += sampler.density.log_ratio(x);
        dataset.push(x, &[], 1.0, Some(&[x]))?;
    }
    Ok(TiltedDraw {
        dataset,
        loglik_ratio: llr,
    })
}

/// Within-stratum selection probabilities `∝ exp(εΔᵢ)` for a
/// two-stratum (case/control by `y`) population.
#[derive(Clone, Debug)]
pub struct ResamplingTilt {
    strata: [Vec<usize>; 2],
    log_p: [Vec<f64>; 2],
    draws: [usize; 2],
    epsilon: f64,
}

impl ResamplingTilt {
    /// Stratum 0 holds units with `y = 0` (controls), stratum 1 `y = 1`.
    pub fn new(population: &TwoPhaseDataset, direction_values: &[f64], epsilon: f64, m_cases: usize, m_controls: usize) -> Result<Self> {
        if direction_values.len() != population.len() {
            return Err(Error::InvalidInput(format!(
                "{} direction values for {} units",
                direction_values.len(),
                population.len()
            )));
        }
        if let Some(v) = direction_values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite tilt direction {v}")));
        }
        let mut strata = [Vec::new(), Vec::new()];
        for (i, &y) in population.y().iter().enumerate() {
            strata[usize::from(y > 0.5)].push(i);
        }
        let draws = [m_controls, m_cases];
        for (s, name) in [(0, "control"), (1, "case")] {
            if strata[s].is_empty() && draws[s] > 0 {
                return Err(Error::EmptyStratum(format!("no {name}s to resample")));
            }
            if strata[s].len() < draws[s] {
                return Err(Error::InvalidInput(format!(
                    "{} {name}s requested from a stratum of {}",
                    draws[s],
                    strata[s].len()
                )));
            }
        }
        let log_p = [0, 1].map(|s| {
            let e: Vec<f64> = strata[s].iter().map(|&i| epsilon * direction_values[i]).collect();
            let top = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = top + e.iter().map(|v| (v - top).exp()).sum::<f64>().ln();
            e.iter().map(|v| v - lse).collect::<Vec<f64>>()
        });
        Ok(Self {
            strata,
            log_p,
            draws,
            epsilon,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Within-stratum selection log probability of every population unit.
    pub fn unit_log_probabilities(&self) -> Vec<f64> {
        let n = self.strata[0].len() + self.strata[1].len();
        let mut out = vec![f64::NEG_INFINITY; n];
        for s in 0..2 {
            for (k, &i) in self.strata[s].iter().enumerate() {
                out[i] = self.log_p[s][k];
            }
        }
        out
    }

    /// Per-selection log ratio `log pᵢ(ε) − log pᵢ(0)` for stratum `s`, position `k`.
    fn log_ratio(&self, s: usize, k: usize) -> f64 {
        if self.epsilon == 0.0 {
            return 0.0;
        }
        self.log_p[s][k] + (self.strata[s].len() as f64).ln()
    }

    /// Exact standard deviation of the log likelihood ratio under uniform
    /// resampling; this is κ for the finite population at hand.
    pub fn kappa(&self) -> f64 {
        let mut var = 0.0;
        for s in 0..2 {
            let n = self.strata[s].len();
            if n == 0 {
                continue;
            }
            let lr: Vec<f64> = (0..n).map(|k| self.log_ratio(s, k)).collect();
            let m = lr.iter().sum::<f64>() / n as f64;
            let v = lr.iter().map(|l| (l - m) * (l - m)).sum::<f64>() / n as f64;
            var += self.draws[s] as f64 * v;
        }
        var.sqrt()
    }

    /// Exact `√J`, with `J = E_Q[LLR] − E_P[LLR]` the symmetrized
    /// Kullback–Leibler divergence; equals [`Self::kappa`] to first order.
    pub fn kappa_symmetric(&self) -> f64 {
        let mut j = 0.0;
        for s in 0..2 {
            let n = self.strata[s].len();
            if n == 0 {
                continue;
            }
            let (mut eq, mut ep) = (0.0, 0.0);
            for k in 0..n {
                let lr = self.log_ratio(s, k);
                eq += self.log_p[s][k].exp() * lr;
                ep += lr / n as f64;
            }
            j += self.draws[s] as f64 * (eq - ep);
        }
        j.max(0.0).sqrt()
    }

    /// Draw under the tilted law (`tilted = true`) or uniformly, recording
    /// the log likelihood ratio of the tilted against the uniform design.
    pub fn draw(&self, population: &TwoPhaseDataset, tilted: bool, rng: &mut RngStream) -> Result<TiltedDraw> {
        let mut keep = Vec::with_capacity(self.draws[0] + self.draws[1]);
        let mut llr = 0.0;
        for s in [1, 0] {
            if self.draws[s] == 0 {
                continue;
            }
            let n = self.strata[s].len();
            if tilted && self.epsilon != 0.0 {
                let index = WeightedIndex::new(self.log_p[s].iter().map(|l| l.exp()))
                    .map_err(|e| Error::Degenerate(format!("resampling weights: {e}")))?;
                for _ in 0..self.draws[s] {
                    let k = index.sample(rng);
                    llr += self.log_ratio(s, k);
                    keep.push(self.strata[s][k]);
                }
            } else {
                let uniform = rand::distr::Uniform::new(0, n).map_err(|e| Error::Degenerate(e.to_string()))?;
                for _ in 0..self.draws[s] {
                    let k = uniform.sample(rng);
                    llr += self.log_ratio(s, k);
                    keep.push(self.strata[s][k]);
                }
            }
        }
        Ok(TiltedDraw {
            dataset: population.subset(&keep),
            loglik_ratio: llr,
        })
    }
}

/// Resample `m_cases` cases and `m_controls` controls with replacement,
/// with within-stratum probabilities `∝ exp(εΔᵢ)`.
pub fn resample_tilted(
    population: &TwoPhaseDataset,
    direction_values: &[f64],
    epsilon: f64,
    m_cases: usize,
    m_controls: usize,
    rng: &mut RngStream,
) -> Result<TiltedDraw> {
    ResamplingTilt::new(population, direction_values, epsilon, m_cases, m_controls)?.draw(population, true, rng)
}

/// A simulation that, for a candidate knot, yields one misspecification
/// test statistic and one estimator contrast per replicate.
pub trait KnotScenario: Sync {
    fn replicate(&self, knot: f64, rng: &mut RngStream) -> Result<(f64, f64)>;
}

/// The knot whose test statistic correlates most strongly (in absolute
/// value) with the estimator contrast. Replicate `r` uses the same random
/// stream for every knot, so knots are compared on common data.
pub fn knot_search<S: KnotScenario>(candidate_knots: &[f64], scenario: &S, reps_per_knot: usize, rng: &RngStream) -> Result<(f64, f64)> {
    if candidate_knots.is_empty() {
        return Err(Error::InvalidInput("empty knot grid".into()));
    }
    if reps_per_knot < 200 {
        return Err(Error::InvalidInput(format!("knot search needs at least 200 replicates, got {reps_per_knot}")));
    }
    let mut best = (candidate_knots[0], f64::NEG_INFINITY);
    for &knot in candidate_knots {
        let mut stats = Vec::with_capacity(reps_per_knot);
        let mut contrasts = Vec::with_capacity(reps_per_knot);
        for r in 0..reps_per_knot {
            let mut stream = rng.derive(r as u64);
            let (t, d) = scenario.replicate(knot, &mut stream)?;
            stats.push(t);
            contrasts.push(d);
        }
        let rho = pearson(&stats, &contrasts).abs();
        if rho > best.1 {
            best = (knot, rho);
        }
    }
    Ok(best)
}
