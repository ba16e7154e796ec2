use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("integrand not finite at x = {at}")]
    IntegrandNotFinite { at: f64 },

    #[error("estimating equation did not converge (residual {residual:.3e}, last iterate {last:?})")]
    NoConvergence { last: Vec<f64>, residual: f64 },

    #[error("envelope violated at x = {at}")]
    EnvelopeViolated { at: f64 },

    #[error("bound search interval too small: supremum at boundary of [{lo}, {hi}]")]
    BoundSearchTooSmall { lo: f64, hi: f64 },

    #[error("underdetermined: {sampled} sampled units for {params} parameters")]
    Underdetermined { sampled: usize, params: usize },

    #[error("collinear auxiliaries")]
    CollinearAuxiliaries,

    #[error("calibration did not converge (constraint residual {residual:.3e})")]
    CalibrationFailed { residual: f64 },

    #[error("leave-one-out refit failed for unit {unit}: {source}")]
    LeaveOneOut {
        unit: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("no finite crossover: rho = 0")]
    NoFiniteCrossover,

    #[error("degenerate sample: {0}")]
    Degenerate(String),

    #[error("tilt not integrable at this kappa ({kappa})")]
    TiltNotIntegrable { kappa: f64 },

    #[error("empty stratum: {0}")]
    EmptyStratum(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
