//! Simulation scenarios: data generators, estimators, and the per-replicate
//! quantities the harness aggregates.

pub mod case_control;
pub mod normal_mean;
pub mod spline;
pub mod twophase_linear;

use crate::error::Result;
use crate::lecam::Law;
use crate::numerics::RngStream;

/// How a misspecification test turns its statistic into a decision.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Critical {
    /// Reject when the statistic exceeds this fixed value.
    Fixed(f64),
    /// Reject above the 95th percentile of the statistic under the working law.
    NullQuantile,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TestSpec {
    pub name: &'static str,
    pub critical: Critical,
}

/// Everything one replicate contributes to the summaries. `estimates` holds
/// the target coordinate for each estimator, in the scenario's order.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplicateOutcome {
    pub estimates: Vec<f64>,
    pub converged: bool,
    pub loglik_ratio: f64,
    pub statistics: Vec<f64>,
    /// Census parameter of this replicate's own population, when the
    /// population is regenerated per replicate; otherwise the point's θ*.
    pub target: Option<f64>,
}

/// A scenario evaluated over a grid of misspecification magnitudes.
///
/// The first estimator is the efficient one and the second the design-based
/// comparator; their difference is the contrast whose correlation with the
/// log likelihood ratio is ρ.
pub trait Scenario: Sync {
    /// Magnitude-specific state shared by all replicates.
    type Point: Sync;

    fn name(&self) -> &'static str;
    fn magnitude_label(&self) -> &'static str;
    fn magnitudes(&self) -> Vec<f64>;
    fn estimator_names(&self) -> Vec<&'static str>;
    fn tests(&self) -> Vec<TestSpec>;
    /// Sample size used to put variances on the `√n` scale.
    fn scale_n(&self) -> f64;

    fn prepare(&self, index: usize, magnitude: f64, seed: u64) -> Result<Self::Point>;
    /// The census parameter the estimators are compared against.
    fn theta_star(&self, point: &Self::Point) -> f64;
    /// Additional per-magnitude values reported in the detail output.
    fn point_details(&self, _point: &Self::Point) -> Vec<(&'static str, f64)> {
        Vec::new()
    }
    fn replicate(&self, point: &Self::Point, law: Law, rng: &mut RngStream) -> Result<ReplicateOutcome>;
}
