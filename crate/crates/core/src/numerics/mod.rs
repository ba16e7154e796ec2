//! Shared numerical kernels: quadrature, root finding, random streams and
//! rejection sampling.

pub mod dist;
pub mod quadrature;
pub mod rejection;
pub mod rng;
pub mod root;

pub use dist::{expit, log1pexp, norm_cdf, norm_pdf, norm_ppf};
pub use quadrature::{integrate_gh, integrate_interval, QuadratureRule, RuleKind, DEFAULT_GH_NODES};
pub use rejection::{find_envelope_bound, rejection_sample, NormalProposal};
pub use rng::{stream_key, RngStream};
pub use root::{solve_root, RootProblem};
