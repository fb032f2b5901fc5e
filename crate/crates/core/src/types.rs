//! Shared domain types: model parameters, particle ensembles, score fields,
//! and per-step diagnostics records.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::quad;

/// Tolerance on the weight normalization sum.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;
/// Relative tolerance on the mollifier normalization constant.
pub const MOLL_NORM_TOL: f64 = 1e-10;

/// Parameters of the regularized collision model.
///
/// `moll_norm` is the constant C making the mollifier G(v) = C e^{-<v>}
/// integrate to one over R^d. It is computed at construction by radial
/// quadrature and checked to relative 1e-10.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub epsilon: f64,
    pub gamma: f64,
    pub dim: usize,
    pub moll_norm: f64,
}

impl ModelParams {
    pub fn new(epsilon: f64, gamma: f64, dim: usize) -> Result<Self> {
        let p = ModelParams {
            epsilon,
            gamma,
            dim,
            moll_norm: 0.0,
        };
        p.check_ranges()?;
        Ok(ModelParams {
            moll_norm: quad::mollifier_norm(dim),
            ..p
        })
    }

    /// Construct with an externally supplied normalization constant,
    /// validated against the quadrature value.
    pub fn with_norm(epsilon: f64, gamma: f64, dim: usize, moll_norm: f64) -> Result<Self> {
        let p = Self::new(epsilon, gamma, dim)?;
        let rel = (moll_norm - p.moll_norm).abs() / p.moll_norm;
        if !(rel <= MOLL_NORM_TOL) {
            return Err(Error::BadMollifierNorm {
                given: moll_norm,
                computed: p.moll_norm,
            });
        }
        Ok(ModelParams { moll_norm, ..p })
    }

    fn check_ranges(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::NonPositiveEpsilon(self.epsilon));
        }
        if !(self.gamma > -3.0 && self.gamma <= 0.0) {
            return Err(Error::GammaOutOfRange(self.gamma));
        }
        if self.dim < 2 {
            return Err(Error::BadDimension(self.dim));
        }
        Ok(())
    }
}

/// Accepts iff epsilon > 0, gamma in (-3, 0], dim >= 2.
pub fn validate_params(p: &ModelParams) -> Result<()> {
    p.check_ranges()?;
    let computed = quad::mollifier_norm(p.dim);
    let rel = (p.moll_norm - computed).abs() / computed;
    if !(rel <= MOLL_NORM_TOL) {
        return Err(Error::BadMollifierNorm {
            given: p.moll_norm,
            computed,
        });
    }
    Ok(())
}

/// Weighted empirical measure: N points in R^d with positive weights
/// summing to one. Positions are stored flat, row-major (particle-major).
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    positions: Vec<f64>,
    weights: Vec<f64>,
    dim: usize,
    pub time: f64,
}

impl ParticleEnsemble {
    pub fn new(positions: Vec<f64>, weights: Vec<f64>, dim: usize, time: f64) -> Result<Self> {
        let e = ParticleEnsemble {
            positions,
            weights,
            dim,
            time,
        };
        validate_ensemble(&e)?;
        Ok(e)
    }

    /// Equal-weight constructor, the default of the particle scheme.
    pub fn equal_weights(positions: Vec<f64>, dim: usize, time: f64) -> Result<Self> {
        if dim == 0 || !positions.len().is_multiple_of(dim) {
            return Err(Error::BadSpec(format!(
                "position buffer length {} not a multiple of dim {dim}",
                positions.len()
            )));
        }
        let n = positions.len() / dim;
        if n == 0 {
            return Err(Error::EmptyEnsemble);
        }
        let w = vec![1.0 / n as f64; n];
        Self::new(positions, w, dim, time)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn position(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    #[inline]
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Total mass; exactly the weight sum, never recomputed downstream.
    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// New ensemble with the same weights and displaced positions.
    /// Weights are never mutated by construction.
    pub fn with_positions(&self, positions: Vec<f64>, time: f64) -> Self {
        assert_eq!(positions.len(), self.positions.len());
        ParticleEnsemble {
            positions,
            weights: self.weights.clone(),
            dim: self.dim,
            time,
        }
    }

    /// Axis-aligned bounding box as (lo, hi) per coordinate.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        let d = self.dim;
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for i in 0..self.len() {
            for (k, &x) in self.position(i).iter().enumerate() {
                lo[k] = lo[k].min(x);
                hi[k] = hi[k].max(x);
            }
        }
        (lo, hi)
    }
}

/// Returns Ok(()) iff all ensemble invariants hold. Idempotent.
pub fn validate_ensemble(e: &ParticleEnsemble) -> Result<()> {
    let n = e.weights.len();
    if n == 0 {
        return Err(Error::EmptyEnsemble);
    }
    if e.positions.len() != n * e.dim {
        return Err(Error::BadSpec(format!(
            "have {} coordinates for {} particles of dim {}",
            e.positions.len(),
            n,
            e.dim
        )));
    }
    for (i, &w) in e.weights.iter().enumerate() {
        if !(w > 0.0) || !w.is_finite() {
            return Err(Error::NonNormalizedWeights {
                sum: w,
                tol: WEIGHT_SUM_TOL,
            });
        }
        let _ = i;
    }
    let sum: f64 = e.weights.iter().sum();
    if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(Error::NonNormalizedWeights {
            sum,
            tol: WEIGHT_SUM_TOL,
        });
    }
    for (i, chunk) in e.positions.chunks(e.dim).enumerate() {
        if chunk.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteCoordinate { index: i });
        }
    }
    Ok(())
}

/// Rejects exactly coincident particle pairs. Required before integrating
/// with gamma <= -2, where the kernel prefactor is singular.
pub fn check_no_coincident(e: &ParticleEnsemble) -> Result<()> {
    let n = e.len();
    for i in 0..n {
        for j in (i + 1)..n {
            let same = e
                .position(i)
                .iter()
                .zip(e.position(j))
                .all(|(a, b)| a == b);
            if same {
                return Err(Error::CoincidentParticles(i, j));
            }
        }
    }
    Ok(())
}

/// Cached score values s(v^i) at every particle location, tagged with the
/// time of the ensemble they were computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreField {
    pub values: Vec<f64>,
    pub dim: usize,
    pub source_time: f64,
}

impl ScoreField {
    #[inline]
    pub fn value(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn check_fresh(&self, e: &ParticleEnsemble) -> Result<()> {
        if self.source_time != e.time {
            return Err(Error::StaleScore {
                score_time: self.source_time,
                ensemble_time: e.time,
            });
        }
        Ok(())
    }
}

/// Conserved quantities and monitored functionals at one time instant.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsRecord {
    pub time: f64,
    pub mass: f64,
    pub momentum: Vec<f64>,
    /// Second moment M_2 = sum_i m_i <v^i>^2.
    pub energy: f64,
    /// Regularized entropy H_eps; NaN when not computed at this step.
    pub entropy: f64,
    pub dissipation: f64,
    /// Minimum inter-particle distance; +inf for a single particle.
    pub eta_min: f64,
    pub max_speed: f64,
}

impl DiagnosticsRecord {
    /// CSV header matching [`DiagnosticsRecord::to_csv_row`].
    pub fn csv_header(dim: usize) -> String {
        let mut s = String::from("t,mass");
        for k in 0..dim {
            let _ = write!(s, ",p{k}");
        }
        s.push_str(",energy,entropy,dissipation,eta_min,max_speed");
        s
    }

    pub fn to_csv_row(&self) -> String {
        let mut s = format!("{:.16e},{:.16e}", self.time, self.mass);
        for p in &self.momentum {
            let _ = write!(s, ",{:.16e}", p);
        }
        let _ = write!(
            s,
            ",{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            self.energy, self.entropy, self.dissipation, self.eta_min, self.max_speed
        );
        s
    }
}

/// Writes the snapshot text format: header `d N time`, then one line
/// `w v_1 ... v_d` per particle, 17 significant digits.
pub fn write_snapshot(e: &ParticleEnsemble, path: &Path) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "{} {} {:.16e}", e.dim(), e.len(), e.time);
    for i in 0..e.len() {
        let _ = write!(out, "{:.16e}", e.weights()[i]);
        for x in e.position(i) {
            let _ = write!(out, " {:.16e}", x);
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Reads the snapshot format written by [`write_snapshot`].
pub fn read_snapshot(path: &Path) -> Result<ParticleEnsemble> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::FileFormat("empty file".into()))?;
    let mut it = header.split_whitespace();
    let parse = |tok: Option<&str>, what: &str| -> Result<f64> {
        tok.ok_or_else(|| Error::FileFormat(format!("missing {what}")))?
            .parse::<f64>()
            .map_err(|_| Error::FileFormat(format!("bad {what}")))
    };
    let d = parse(it.next(), "dimension")? as usize;
    let n = parse(it.next(), "particle count")? as usize;
    let time = parse(it.next(), "time")?;
    let mut positions = Vec::with_capacity(n * d);
    let mut weights = Vec::with_capacity(n);
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::FileFormat(format!("bad number on line {}", lineno + 2)))?;
        if vals.len() != d + 1 {
            return Err(Error::FileFormat(format!(
                "line {} has {} fields, expected {}",
                lineno + 2,
                vals.len(),
                d + 1
            )));
        }
        weights.push(vals[0]);
        positions.extend_from_slice(&vals[1..]);
    }
    if weights.len() != n {
        return Err(Error::FileFormat(format!(
            "header says {n} particles, found {}",
            weights.len()
        )));
    }
    ParticleEnsemble::new(positions, weights, d, time)
}
