//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("particle weights sum to {sum:.17e}, expected 1 within {tol:e}")]
    NonNormalizedWeights { sum: f64, tol: f64 },
    #[error("non-finite coordinate at particle {index}")]
    NonFiniteCoordinate { index: usize },
    #[error("ensemble contains no particles")]
    EmptyEnsemble,
    #[error("gamma = {0} outside (-3, 0]")]
    GammaOutOfRange(f64),
    #[error("epsilon = {0} must be positive")]
    NonPositiveEpsilon(f64),
    #[error("dimension {0} unsupported, need d >= 2")]
    BadDimension(usize),
    #[error("mollifier normalization {given:.17e} inconsistent with quadrature value {computed:.17e}")]
    BadMollifierNorm { given: f64, computed: f64 },
    #[error("quadrature under-resolved: doubling nodes moved result by {delta:e} > {tol:e}")]
    QuadratureUnderResolved { delta: f64, tol: f64 },
    #[error("projection of the zero vector is undefined")]
    ZeroVector,
    #[error("score field computed at t = {score_time} but ensemble is at t = {ensemble_time}")]
    StaleScore { score_time: f64, ensemble_time: f64 },
    #[error("adaptive step size fell below {floor:e} at t = {time} (near-collision)")]
    StepUnderflow { time: f64, floor: f64 },
    #[error("operation needs at least two particles")]
    SingleParticle,
    #[error("coincident particles at indices {0} and {1} (singular kernel prefactor for gamma <= -2)")]
    CoincidentParticles(usize, usize),
    #[error("exact transport mode needs equal particle counts and equal weights")]
    UnsupportedWeights,
    #[error("bad initial-condition spec: {0}")]
    BadSpec(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("malformed snapshot file: {0}")]
    FileFormat(String),
    #[error("incompatible dimensions: {0} vs {1}")]
    IncompatibleDimension(usize, usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
