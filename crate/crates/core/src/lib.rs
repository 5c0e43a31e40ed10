//! Fixed-confidence best-arm identification when the optimal set has
//! `M >= 1` arms sharing the maximal mean.
//!
//! The crate is organised bottom-up:
//!
//! - [`family`]: one-parameter exponential families (Bernoulli, Gaussian
//!   with known variance, Poisson), their KL divergences and samplers.
//! - [`oracle`]: the characteristic time `T*(mu)` and optimal allocation
//!   `w*(mu)`, computed by a certified concave max-min solver.
//! - [`tracking`]: C-Tracking and D-Tracking sampling rules.
//! - [`stopping`]: the M-tuple generalized likelihood ratio statistic, its
//!   threshold and the decoding rule.
//! - [`bounds`]: analytic lower bounds on the expected stopping time and
//!   the Lambert-W crossing bound.
//! - [`harness`]: seeded Monte Carlo trials, experiment summaries and the
//!   CSV/JSON result schemas.

// NaN-rejecting checks are written as negated comparisons on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod error;
pub mod family;
pub mod harness;
pub mod oracle;
pub mod stopping;
pub mod tracking;

pub use error::{Error, Result};
pub use family::{ArmModel, FamilyKind};
pub use harness::{ExperimentConfig, ExperimentSummary, TrialResult};
pub use oracle::{BanditInstance, OracleSolution, Weights};
pub use stopping::{GlrReport, StoppingConfig};
pub use tracking::{HistoryState, TrackingRule};
