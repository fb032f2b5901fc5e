//! Mollifier evaluation, mollified log-density, and the score field
//! s(v) = (grad G^eps * log[mu * G^eps])(v).
//!
//! The convolution is discretized on a [`QuadratureRule`] in mollifier-scaled
//! coordinates: s(v) = (1/eps) sum_k w_k G(q_k) <q_k>^{-1} q_k L(v + eps q_k)
//! with L the mollified log-density. Log-sum-exp keeps L finite everywhere.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::quad::{bracket, QuadratureRule};
use crate::types::{ModelParams, ParticleEnsemble, ScoreField};

/// G^eps(z) = C eps^{-d} exp(-<z/eps>).
pub fn moll_value(p: &ModelParams, z: &[f64]) -> f64 {
    let r2: f64 = z.iter().map(|x| x * x).sum();
    let scaled = bracket(r2 / (p.epsilon * p.epsilon));
    p.moll_norm * p.epsilon.powi(-(p.dim as i32)) * (-scaled).exp()
}

/// grad G^eps(z) = -(1/eps) <z/eps>^{-1} G^eps(z) (z/eps).
pub fn moll_grad(p: &ModelParams, z: &[f64]) -> Vec<f64> {
    let inv_eps = 1.0 / p.epsilon;
    let r2: f64 = z.iter().map(|x| x * x * inv_eps * inv_eps).sum();
    let br = bracket(r2);
    let g = moll_value(p, z);
    let factor = -inv_eps * g / br * inv_eps;
    z.iter().map(|x| factor * x).collect()
}

/// Terms with log-scale deficit below this never survive the log-sum-exp
/// (exp(-45) is under one ulp of the leading term).
const LSE_CUTOFF: f64 = 45.0;

/// exp(x) for x <= 0 via 2^(k/32) table reduction and a degree-5
/// polynomial; ~2 ulp, deterministic, several times cheaper than the libm
/// call in the convolution hot loop.
mod fastexp {
    use std::sync::OnceLock;

    const INV_LN2_32: f64 = 46.166_241_308_446_83; // 32 / ln 2
    // ln2/32 split with 26 significant bits in HI, so k * HI is exact
    const LN2_32_HI: f64 = f64::from_bits(0x3f96_2e42_f800_0000); // 0.02166084898635745
    const LN2_32_LO: f64 = 4.061_408_404_340_59e-10;

    fn table() -> &'static [f64; 32] {
        static TAB: OnceLock<[f64; 32]> = OnceLock::new();
        TAB.get_or_init(|| {
            let mut t = [0.0; 32];
            for (j, slot) in t.iter_mut().enumerate() {
                *slot = (j as f64 / 32.0).exp2();
            }
            t
        })
    }

    #[inline]
    pub fn exp_neg(x: f64, tab: &[f64; 32]) -> f64 {
        debug_assert!(x <= 0.0);
        if x < -708.0 {
            return 0.0;
        }
        let kf = (x * INV_LN2_32).round();
        let r = x - kf * LN2_32_HI - kf * LN2_32_LO; // |r| <= ln2/64
        let k = kf as i64;
        let p = 1.0
            + r * (1.0
                + r * (0.5
                    + r * (1.0 / 6.0
                        + r * (1.0 / 24.0 + r * (1.0 / 120.0 + r * (1.0 / 720.0))))));
        let j = k.rem_euclid(32) as usize;
        let e = (k - j as i64) / 32;
        let scale = f64::from_bits(((1023 + e) as u64) << 52);
        tab[j] * p * scale
    }

    pub fn tab() -> &'static [f64; 32] {
        table()
    }
}

/// log sum_j m_j G^eps(u - v^j) without the log(C eps^-d) offset.
/// Two passes over a scratch buffer: a branch-free max scan, then the
/// exponential sum against the running maximum.
#[inline]
fn lse_kernel(
    positions: &[f64],
    log_weights: &[f64],
    dim: usize,
    inv_eps: f64,
    u: &[f64],
    scratch: &mut Vec<f64>,
) -> f64 {
    let tab = fastexp::tab();
    let n = log_weights.len();
    scratch.resize(n, 0.0);
    if dim == 2 {
        let (ux, uy) = (u[0], u[1]);
        for ((chunk, &lw), slot) in positions
            .chunks_exact(2)
            .zip(log_weights)
            .zip(scratch.iter_mut())
        {
            let dx = (ux - chunk[0]) * inv_eps;
            let dy = (uy - chunk[1]) * inv_eps;
            *slot = lw - (1.0 + dx * dx + dy * dy).sqrt();
        }
    } else {
        for ((chunk, &lw), slot) in positions
            .chunks_exact(dim)
            .zip(log_weights)
            .zip(scratch.iter_mut())
        {
            let mut r2 = 0.0;
            for (x, y) in chunk.iter().zip(u) {
                let d = (y - x) * inv_eps;
                r2 += d * d;
            }
            *slot = lw - (1.0 + r2).sqrt();
        }
    }
    let mut max = f64::NEG_INFINITY;
    for &a in scratch.iter() {
        max = max.max(a);
    }
    let mut sum = 0.0;
    for &a in scratch.iter() {
        let t = a - max;
        if t > -LSE_CUTOFF {
            sum += fastexp::exp_neg(t, tab);
        }
    }
    max + sum.ln()
}

fn log_weights_of(e: &ParticleEnsemble) -> Vec<f64> {
    e.weights().iter().map(|w| w.ln()).collect()
}

/// Mollified log-density log[mu^N * G^eps](u), finite for all finite inputs.
pub fn log_density(e: &ParticleEnsemble, p: &ModelParams, u: &[f64]) -> f64 {
    let logw = log_weights_of(e);
    let mut scratch = Vec::with_capacity(e.len());
    let base = (p.moll_norm * p.epsilon.powi(-(p.dim as i32))).ln();
    base + lse_kernel(e.positions(), &logw, e.dim(), 1.0 / p.epsilon, u, &mut scratch)
}

#[inline]
#[allow(clippy::too_many_arguments)]
fn score_into(
    positions: &[f64],
    log_weights: &[f64],
    dim: usize,
    p: &ModelParams,
    rule: &QuadratureRule,
    v: &[f64],
    scratch: &mut Vec<f64>,
    u_buf: &mut [f64],
    out: &mut [f64],
) {
    let inv_eps = 1.0 / p.epsilon;
    let base = (p.moll_norm * p.epsilon.powi(-(dim as i32))).ln();
    out.fill(0.0);
    for k in 0..rule.len() {
        let q = rule.node(k);
        for (b, (x, qk)) in u_buf.iter_mut().zip(v.iter().zip(q)) {
            *b = x + p.epsilon * qk;
        }
        let ld = base + lse_kernel(positions, log_weights, dim, inv_eps, u_buf, scratch);
        let c = rule.score_coef(k) * ld;
        for (o, qk) in out.iter_mut().zip(q) {
            *o += c * qk;
        }
    }
    for o in out.iter_mut() {
        *o *= inv_eps;
    }
}

/// Score s(v) = (grad G^eps * log[mu * G^eps])(v) by quadrature.
/// Deterministic for a fixed rule; may be evaluated off-particle.
pub fn score(
    e: &ParticleEnsemble,
    p: &ModelParams,
    rule: &QuadratureRule,
    v: &[f64],
) -> Vec<f64> {
    let logw = log_weights_of(e);
    let mut scratch = Vec::with_capacity(e.len());
    let mut u_buf = vec![0.0; e.dim()];
    let mut out = vec![0.0; e.dim()];
    score_into(
        e.positions(),
        &logw,
        e.dim(),
        p,
        rule,
        v,
        &mut scratch,
        &mut u_buf,
        &mut out,
    );
    out
}

/// Score with the doubling self-check: recomputes on the refined rule and
/// errors when the two differ by more than `tol` in Euclidean norm.
pub fn score_verified(
    e: &ParticleEnsemble,
    p: &ModelParams,
    rule: &QuadratureRule,
    v: &[f64],
    tol: f64,
) -> Result<Vec<f64>> {
    let coarse = score(e, p, rule, v);
    let fine = score(e, p, &rule.refined()?, v);
    let delta: f64 = coarse
        .iter()
        .zip(&fine)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    if delta > tol {
        return Err(Error::QuadratureUnderResolved { delta, tol });
    }
    Ok(fine)
}

/// Batched score with the doubling self-check, comparing against the
/// refined rule across all particles.
pub fn score_field_verified(
    e: &ParticleEnsemble,
    p: &ModelParams,
    rule: &QuadratureRule,
    tol: f64,
) -> Result<ScoreField> {
    let coarse = score_field(e, p, rule);
    let fine = score_field(e, p, &rule.refined()?);
    let mut delta: f64 = 0.0;
    for i in 0..e.len() {
        let d: f64 = coarse
            .value(i)
            .iter()
            .zip(fine.value(i))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        delta = delta.max(d);
    }
    if delta > tol {
        return Err(Error::QuadratureUnderResolved { delta, tol });
    }
    Ok(fine)
}

/// Batched score at every particle location. Parallel over particles with a
/// fixed-order inner summation, so the result is schedule-independent.
pub fn score_field(e: &ParticleEnsemble, p: &ModelParams, rule: &QuadratureRule) -> ScoreField {
    let dim = e.dim();
    let logw = log_weights_of(e);
    let positions = e.positions();
    let n = e.len();
    let mut values = vec![0.0; n * dim];
    values
        .par_chunks_mut(dim)
        .enumerate()
        .for_each_init(
            || (Vec::with_capacity(n), vec![0.0; dim]),
            |(scratch, u_buf), (i, out)| {
                score_into(
                    positions,
                    &logw,
                    dim,
                    p,
                    rule,
                    &positions[i * dim..(i + 1) * dim],
                    scratch,
                    u_buf,
                    out,
                );
            },
        );
    ScoreField {
        values,
        dim,
        source_time: e.time,
    }
}

/// Report of the sampled Lipschitz-quotient check against 4/eps^2.
#[derive(Debug, Clone)]
pub struct HessianBoundReport {
    pub samples: usize,
    pub max_quotient: f64,
    pub bound: f64,
    pub tol: f64,
    pub pass: bool,
}

/// Evaluates |s(v1) - s(v2)| / |v1 - v2| on random sample pairs near the
/// ensemble and compares the worst quotient against 4/eps^2 + tol.
pub fn score_field_hessian_bound_check(
    e: &ParticleEnsemble,
    p: &ModelParams,
    rule: &QuadratureRule,
    samples: usize,
    tol: f64,
    seed: u64,
) -> HessianBoundReport {
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
    let (lo, hi) = e.bounding_box();
    let dim = e.dim();
    let mut max_quotient: f64 = 0.0;
    for _ in 0..samples {
        let v1: Vec<f64> = (0..dim)
            .map(|k| rng.random_range(lo[k] - 2.0..hi[k] + 2.0))
            .collect();
        // separations spanning several decades
        let scale = 10f64.powf(rng.random_range(-3.0..0.0));
        let v2: Vec<f64> = v1
            .iter()
            .map(|x| x + scale * rng.random_range(-1.0..1.0))
            .collect();
        let dist: f64 = v1
            .iter()
            .zip(&v2)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if dist == 0.0 {
            continue; // quotient defined as 0 for coincident points
        }
        let s1 = score(e, p, rule, &v1);
        let s2 = score(e, p, rule, &v2);
        let diff: f64 = s1
            .iter()
            .zip(&s2)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        max_quotient = max_quotient.max(diff / dist);
    }
    let bound = 4.0 / (p.epsilon * p.epsilon);
    HessianBoundReport {
        samples,
        max_quotient,
        bound,
        tol,
        pass: max_quotient <= bound + tol,
    }
}
