//! Deterministic particle method for the regularized Landau equation.
//!
//! The collision velocity of particle i is the weighted sum over partners j
//! of K(v^i, v^j) = -|v^i - v^j|^{2+gamma} Pi[v^i - v^j] (s(v^i) - s(v^j)),
//! where s is the mollified score field grad G^eps * log[mu^N * G^eps] and
//! Pi projects onto the hyperplane orthogonal to the separation. The crate
//! provides the kernel and score evaluators, explicit time integration,
//! conservation/entropy/transport-metric diagnostics, and a CLI harness for
//! runs, sweeps, and inequality verification suites.

// validation uses negated comparisons on purpose: `!(x > 0.0)` rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod harness;
pub mod init;
pub mod integrator;
pub mod kernel;
pub mod metrics;
pub mod mollifier;
pub mod quad;
pub mod transport;
pub mod types;

pub use error::{Error, Result};
pub use types::{DiagnosticsRecord, ModelParams, ParticleEnsemble, ScoreField};
