//! Rejection sampling from a Normal proposal.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::dist::norm_log_pdf;
use super::rng::RngStream;
use crate::error::{Error, Result};

/// Grid size of the envelope search.
pub const ENVELOPE_GRID: usize = 4001;
/// Added to the grid supremum of the log ratio.
pub const ENVELOPE_MARGIN: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormalProposal {
    pub mean: f64,
    pub sd: f64,
}

impl NormalProposal {
    pub fn new(mean: f64, sd: f64) -> Result<Self> {
        if !(sd > 0.0) || !mean.is_finite() {
            return Err(Error::InvalidInput(format!(
                "invalid Normal proposal ({mean}, {sd})"
            )));
        }
        Ok(Self { mean, sd })
    }

    pub fn log_density(&self, x: f64) -> f64 {
        norm_log_pdf((x - self.mean) / self.sd) - self.sd.ln()
    }
}

/// Supremum over a 4001-point grid on `interval` of `target_log − proposal_log`,
/// plus the 0.1 safety margin.
pub fn find_envelope_bound<F: Fn(f64) -> f64>(
    target_log: F,
    proposal: NormalProposal,
    interval: (f64, f64),
) -> Result<f64> {
    let (lo, hi) = interval;
    if !(hi > lo) {
        return Err(Error::InvalidInput(format!("empty search interval [{lo}, {hi}]")));
    }
    let step = (hi - lo) / (ENVELOPE_GRID - 1) as f64;
    let mut interior = f64::NEG_INFINITY;
    let mut edge = f64::NEG_INFINITY;
    for i in 0..ENVELOPE_GRID {
        let x = lo + i as f64 * step;
        let v = target_log(x) - proposal.log_density(x);
        if v.is_nan() {
            return Err(Error::IntegrandNotFinite { at: x });
        }
        if i == 0 || i == ENVELOPE_GRID - 1 {
            edge = edge.max(v);
        } else {
            interior = interior.max(v);
        }
    }
    // A flat ratio (identical densities) ties at the edges; only a strictly
    // larger edge value means the supremum lies outside the interval.
    if edge > interior + 1e-9 * interior.abs().max(1.0) {
        return Err(Error::BoundSearchTooSmall { lo, hi });
    }
    Ok(interior.max(edge) + ENVELOPE_MARGIN)
}

/// One exact draw from the normalized target by rejection from `proposal`,
/// accepting with probability `exp(target_log − proposal_log − bound_log)`.
pub fn rejection_sample<F: Fn(f64) -> f64>(
    target_log: F,
    proposal: NormalProposal,
    bound_log: f64,
    rng: &mut RngStream,
) -> Result<f64> {
    let normal = Normal::new(proposal.mean, proposal.sd)
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    loop {
        let x = normal.sample(rng);
        let log_ratio = target_log(x) - proposal.log_density(x) - bound_log;
        if log_ratio > 0.0 {
            return Err(Error::EnvelopeViolated { at: x });
        }
        let u: f64 = rng.random();
        if u.ln() < log_ratio {
            return Ok(x);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::dist::{ks_critical_1pct, ks_statistic, mean, norm_cdf};

    #[test]
    fn bound_for_identical_densities_is_the_margin() {
        let p = NormalProposal::new(0.0, 1.0).unwrap();
        let b = find_envelope_bound(|x| p.log_density(x), p, (-10.0, 10.0)).unwrap();
        assert!((b - ENVELOPE_MARGIN).abs() < 1e-12);
    }

    #[test]
    fn bound_for_wider_proposal() {
        let p = NormalProposal::new(0.0, 2.0).unwrap();
        let b = find_envelope_bound(norm_log_pdf, p, (-10.0, 10.0)).unwrap();
        // Ratio maximum at x = 0 is log 2; x = 0 lies on the grid.
        assert!((b - (2f64.ln() + ENVELOPE_MARGIN)).abs() < 1e-12);
    }

    #[test]
    fn bound_at_edge_is_an_error() {
        let p = NormalProposal::new(0.0, 1.0).unwrap();
        let shifted = |x: f64| norm_log_pdf(x - 5.0);
        let err = find_envelope_bound(shifted, p, (-1.0, 1.0)).unwrap_err();
        assert!(err.to_string().contains("bound search interval too small"));
    }

    #[test]
    fn standard_normal_target() {
        let p = NormalProposal::new(0.0, 1.5).unwrap();
        let bound = find_envelope_bound(norm_log_pdf, p, (-10.0, 10.0)).unwrap();
        let mut rng = RngStream::new(1, 0);
        let draws: Vec<f64> = (0..100_000)
            .map(|_| rejection_sample(norm_log_pdf, p, bound, &mut rng).unwrap())
            .collect();
        let se = 1.0 / (draws.len() as f64).sqrt();
        assert!(mean(&draws).abs() < 4.0 * se);
        assert!(ks_statistic(&draws, norm_cdf) < ks_critical_1pct(draws.len()));
    }

    #[test]
    fn invalid_bound_is_detected() {
        let p = NormalProposal::new(0.0, 1.5).unwrap();
        let mut rng = RngStream::new(1, 0);
        let mut seen = false;
        for _ in 0..1000 {
            if let Err(Error::EnvelopeViolated { .. }) =
                rejection_sample(norm_log_pdf, p, -1.0, &mut rng)
            {
                seen = true;
                break;
            }
        }
        assert!(seen);
    }
}
