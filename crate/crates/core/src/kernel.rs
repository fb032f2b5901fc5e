//! Projection matrix, interaction kernel K_g, and the pairwise velocity
//! field U^eps[mu^N].
//!
//! The kernel K_g(v, w) = -|v-w|^{2+gamma} Pi[v-w] (s(v) - s(w)) is skew
//! symmetric and orthogonal to v - w. The velocity field accumulates each
//! unordered pair once, so weighted momentum and energy production cancel
//! to roundoff, which is the structural property everything else rests on.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mollifier::score;
use crate::quad::QuadratureRule;
use crate::types::{ModelParams, ParticleEnsemble, ScoreField};

/// Separations below this are treated as coincident; |v-w|^{2+gamma}
/// overflows there for gamma near -3.
const COINCIDENT_EPS: f64 = 1e-300;

/// Rows per parallel block in the pair loop. Fixed so the merge order (and
/// hence the floating-point result) does not depend on thread count.
const PAIR_BLOCK: usize = 64;

/// Projection I - z z^T / |z|^2 onto {z}^perp, row-major d x d.
pub fn projection(z: &[f64]) -> Result<Vec<f64>> {
    let n2: f64 = z.iter().map(|x| x * x).sum();
    if !(n2 > 0.0) {
        return Err(Error::ZeroVector);
    }
    let d = z.len();
    let mut m = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            let delta = if i == j { 1.0 } else { 0.0 };
            m[i * d + j] = delta - z[i] * z[j] / n2;
        }
    }
    Ok(m)
}

/// Applies Pi[z] to a vector without forming the matrix.
#[inline]
pub fn project_out(z: &[f64], n2: f64, vec: &[f64], out: &mut [f64]) {
    let dot: f64 = z.iter().zip(vec).map(|(a, b)| a * b).sum();
    let c = dot / n2;
    for ((o, &v), &zk) in out.iter_mut().zip(vec).zip(z) {
        *o = v - c * zk;
    }
}

/// |v - w|^{2+gamma} with the common exponents special-cased.
#[inline]
fn prefactor(r2: f64, gamma: f64) -> f64 {
    if gamma == 0.0 {
        r2
    } else if gamma == -2.0 {
        1.0
    } else if gamma == -1.0 {
        r2.sqrt()
    } else {
        r2.powf(0.5 * (2.0 + gamma))
    }
}

/// K_g(v, w) = -|v-w|^{2+gamma} Pi[v-w] (s_v - s_w), with K(v, v) := 0.
pub fn kernel_eval(p: &ModelParams, v: &[f64], w: &[f64], s_v: &[f64], s_w: &[f64]) -> Vec<f64> {
    let d = v.len();
    let mut out = vec![0.0; d];
    kernel_eval_into(p, v, w, s_v, s_w, &mut out);
    out
}

#[inline]
fn kernel_eval_into(
    p: &ModelParams,
    v: &[f64],
    w: &[f64],
    s_v: &[f64],
    s_w: &[f64],
    out: &mut [f64],
) {
    let d = v.len();
    let mut r2 = 0.0;
    for k in 0..d {
        let z = v[k] - w[k];
        r2 += z * z;
    }
    if r2.sqrt() < COINCIDENT_EPS {
        out.fill(0.0);
        return;
    }
    // Pi[z](s_v - s_w)
    let mut dot_zs = 0.0;
    for k in 0..d {
        dot_zs += (v[k] - w[k]) * (s_v[k] - s_w[k]);
    }
    let c = dot_zs / r2;
    let pre = -prefactor(r2, p.gamma);
    for k in 0..d {
        let z = v[k] - w[k];
        out[k] = pre * ((s_v[k] - s_w[k]) - c * z);
    }
}

/// Pairwise velocities at every particle, tagged like the score field.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityField {
    pub values: Vec<f64>,
    pub dim: usize,
    pub source_time: f64,
}

impl VelocityField {
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

    pub fn max_speed(&self) -> f64 {
        self.values
            .chunks(self.dim)
            .map(|u| u.iter().map(|x| x * x).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    /// sum_i m_i U_i, zero to roundoff by skew-symmetry.
    pub fn weighted_momentum(&self, e: &ParticleEnsemble) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (i, &m) in e.weights().iter().enumerate() {
            for (o, &u) in out.iter_mut().zip(self.value(i)) {
                *o += m * u;
            }
        }
        out
    }

    /// sum_i m_i v^i . U_i, zero to roundoff by orthogonality of Pi.
    pub fn weighted_energy_production(&self, e: &ParticleEnsemble) -> f64 {
        let mut acc = 0.0;
        for (i, &m) in e.weights().iter().enumerate() {
            let dot: f64 = e
                .position(i)
                .iter()
                .zip(self.value(i))
                .map(|(a, b)| a * b)
                .sum();
            acc += m * dot;
        }
        acc
    }
}

/// U^eps[mu^N](v^i) = sum_{j != i} m_j K(v^i, v^j, s_i, s_j).
///
/// Each unordered pair is evaluated once and scattered with K(w, v) =
/// -K(v, w); contributions are merged in fixed block order regardless of
/// the rayon schedule.
pub fn velocity_field(
    e: &ParticleEnsemble,
    s: &ScoreField,
    p: &ModelParams,
) -> Result<VelocityField> {
    s.check_fresh(e)?;
    let n = e.len();
    let d = e.dim();
    let positions = e.positions();
    let weights = e.weights();
    let svals = &s.values;

    let n_blocks = n.div_ceil(PAIR_BLOCK);
    let buffers: Vec<Vec<f64>> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let mut buf = vec![0.0; n * d];
            let mut k_ij = vec![0.0; d];
            let row_end = ((b + 1) * PAIR_BLOCK).min(n);
            for i in b * PAIR_BLOCK..row_end {
                let vi = &positions[i * d..(i + 1) * d];
                let si = &svals[i * d..(i + 1) * d];
                for j in (i + 1)..n {
                    let vj = &positions[j * d..(j + 1) * d];
                    let sj = &svals[j * d..(j + 1) * d];
                    kernel_eval_into(p, vi, vj, si, sj, &mut k_ij);
                    let (mi, mj) = (weights[i], weights[j]);
                    for k in 0..d {
                        buf[i * d + k] += mj * k_ij[k];
                        buf[j * d + k] -= mi * k_ij[k];
                    }
                }
            }
            buf
        })
        .collect();

    let mut values = vec![0.0; n * d];
    for buf in buffers {
        for (v, b) in values.iter_mut().zip(buf) {
            *v += b;
        }
    }
    Ok(VelocityField {
        values,
        dim: d,
        source_time: e.time,
    })
}

/// U^eps[mu^N](v) at an arbitrary point: scores v on the fly and sums the
/// kernel against the cached particle scores.
pub fn velocity_at(
    e: &ParticleEnsemble,
    s: &ScoreField,
    p: &ModelParams,
    rule: &QuadratureRule,
    v: &[f64],
) -> Result<Vec<f64>> {
    s.check_fresh(e)?;
    let s_v = score(e, p, rule, v);
    let d = e.dim();
    let mut out = vec![0.0; d];
    let mut k_ij = vec![0.0; d];
    for j in 0..e.len() {
        kernel_eval_into(p, v, e.position(j), &s_v, s.value(j), &mut k_ij);
        for k in 0..d {
            out[k] += e.weights()[j] * k_ij[k];
        }
    }
    Ok(out)
}

/// Result of the small-separation Hoelder regression on U.
#[derive(Debug, Clone)]
pub struct HolderReport {
    pub gamma: f64,
    pub fitted_slope: f64,
    pub pairs: usize,
    pub sep_min: f64,
    pub sep_max: f64,
}

/// Fits log |U(v1) - U(v2)| against log |v1 - v2| over pairs anchored at
/// particle locations, where the |v - w|^{3+gamma} Hoelder modulus binds.
#[allow(clippy::too_many_arguments)]
pub fn kernel_holder_check(
    p: &ModelParams,
    e: &ParticleEnsemble,
    s: &ScoreField,
    rule: &QuadratureRule,
    anchors: usize,
    seps_per_anchor: usize,
    sep_range: (f64, f64),
    seed: u64,
) -> Result<HolderReport> {
    use rand::Rng;
    use rand::SeedableRng;
    s.check_fresh(e)?;
    let d = e.dim();
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
    let mut logs: Vec<(f64, f64)> = Vec::new();
    let n_anchor = anchors.min(e.len());
    for a in 0..n_anchor {
        let v1 = e.position(a).to_vec();
        let u1 = velocity_at(e, s, p, rule, &v1)?;
        let mut dir: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0f64)).collect();
        let norm: f64 = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
        dir.iter_mut().for_each(|x| *x /= norm);
        for k in 0..seps_per_anchor {
            let t = k as f64 / (seps_per_anchor - 1).max(1) as f64;
            let h = sep_range.0 * (sep_range.1 / sep_range.0).powf(t);
            let v2: Vec<f64> = v1.iter().zip(&dir).map(|(x, u)| x + h * u).collect();
            let u2 = velocity_at(e, s, p, rule, &v2)?;
            let diff: f64 = u1
                .iter()
                .zip(&u2)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            if diff > 0.0 {
                logs.push((h.ln(), diff.ln()));
            }
        }
    }
    // least-squares slope
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    Ok(HolderReport {
        gamma: p.gamma,
        fitted_slope: sxy / sxx,
        pairs: logs.len(),
        sep_min: sep_range.0,
        sep_max: sep_range.1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mollifier::score_field;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;

    fn params(eps: f64, gamma: f64) -> ModelParams {
        ModelParams::new(eps, gamma, 2).unwrap()
    }

    #[test]
    fn projection_axis_aligned() {
        let m = projection(&[1.0, 0.0]).unwrap();
        assert_eq!(m, vec![0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn projection_zero_vector_rejected() {
        assert!(matches!(projection(&[0.0, 0.0]), Err(Error::ZeroVector)));
    }

    #[test]
    fn projection_annihilates_and_is_idempotent() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(6);
        for _ in 0..10_000 {
            let z = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
            if z[0] == 0.0 && z[1] == 0.0 {
                continue;
            }
            let m = projection(&z).unwrap();
            // Pi z = 0
            let pz = [m[0] * z[0] + m[1] * z[1], m[2] * z[0] + m[3] * z[1]];
            let zn = (z[0] * z[0] + z[1] * z[1]).sqrt();
            assert!(pz[0].abs() <= 1e-12 * zn && pz[1].abs() <= 1e-12 * zn);
            // Pi^2 = Pi
            let mm = [
                m[0] * m[0] + m[1] * m[2],
                m[0] * m[1] + m[1] * m[3],
                m[2] * m[0] + m[3] * m[2],
                m[2] * m[1] + m[3] * m[3],
            ];
            for (a, b) in mm.iter().zip(&m) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn kernel_zero_for_coincident_points_and_equal_scores() {
        let p = params(1.0, -1.0);
        let v = [0.3, 0.4];
        let s = [0.5, -0.2];
        assert_eq!(kernel_eval(&p, &v, &v, &s, &[0.9, 0.1]), vec![0.0, 0.0]);
        let w = [1.0, -1.0];
        assert_eq!(kernel_eval(&p, &v, &w, &s, &s), vec![0.0, 0.0]);
    }

    #[test]
    fn kernel_skew_symmetry_exact() {
        let p = params(0.7, -1.3);
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let v = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            let w = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            let sv = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let sw = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let k_vw = kernel_eval(&p, &v, &w, &sv, &sw);
            let k_wv = kernel_eval(&p, &w, &v, &sw, &sv);
            assert_eq!(k_vw[0], -k_wv[0]);
            assert_eq!(k_vw[1], -k_wv[1]);
        }
    }

    #[test]
    fn kernel_orthogonal_to_separation() {
        let p = params(1.0, -0.5);
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(8);
        for _ in 0..1000 {
            let v = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            let w = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            let sv = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let sw = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let k = kernel_eval(&p, &v, &w, &sv, &sw);
            let z = [v[0] - w[0], v[1] - w[1]];
            let dot = (k[0] * z[0] + k[1] * z[1]).abs();
            let scale = (k[0] * k[0] + k[1] * k[1]).sqrt()
                * (z[0] * z[0] + z[1] * z[1]).sqrt();
            assert!(dot <= 1e-12 * scale.max(1e-30));
        }
    }

    #[test]
    fn velocity_single_particle_is_zero() {
        let p = params(1.0, 0.0);
        let e = ParticleEnsemble::new(vec![0.5, -0.5], vec![1.0], 2, 0.0).unwrap();
        let rule = QuadratureRule::default_for_dim(2).unwrap();
        let s = score_field(&e, &p, &rule);
        let u = velocity_field(&e, &s, &p).unwrap();
        assert_eq!(u.values, vec![0.0, 0.0]);
    }

    #[test]
    fn velocity_collinear_pair_is_stationary() {
        // two equal-weight particles on the x-axis: the score difference is
        // parallel to the separation, so Pi annihilates it
        let p = params(1.0, 0.0);
        let e =
            ParticleEnsemble::equal_weights(vec![0.9, 0.0, -0.9, 0.0], 2, 0.0).unwrap();
        let rule = QuadratureRule::default_for_dim(2).unwrap();
        let s = score_field(&e, &p, &rule);
        let u = velocity_field(&e, &s, &p).unwrap();
        assert!(u.max_speed() < 1e-13, "max speed {}", u.max_speed());
    }

    #[test]
    fn velocity_matches_naive_double_loop() {
        let p = params(1.0, -1.0);
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(9);
        let pos: Vec<f64> = (0..6).map(|_| rng.random_range(-1.5..1.5)).collect();
        let e = ParticleEnsemble::equal_weights(pos, 2, 0.0).unwrap();
        let rule = QuadratureRule::default_for_dim(2).unwrap();
        let s = score_field(&e, &p, &rule);
        let u = velocity_field(&e, &s, &p).unwrap();
        // naive reference without symmetry exploitation
        for i in 0..e.len() {
            let mut acc = vec![0.0; 2];
            for j in 0..e.len() {
                if j == i {
                    continue;
                }
                let k = kernel_eval(&p, e.position(i), e.position(j), s.value(i), s.value(j));
                acc[0] += e.weights()[j] * k[0];
                acc[1] += e.weights()[j] * k[1];
            }
            assert_relative_eq!(u.value(i)[0], acc[0], epsilon = 1e-14);
            assert_relative_eq!(u.value(i)[1], acc[1], epsilon = 1e-14);
        }
    }

    #[test]
    fn velocity_conserves_momentum_and_energy() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(10);
        for gamma in [0.0, -1.0, -2.0, -2.5] {
            let p = params(0.5, gamma);
            let pos: Vec<f64> = (0..48).map(|_| rng.random_range(-2.0..2.0)).collect();
            let e = ParticleEnsemble::equal_weights(pos, 2, 0.0).unwrap();
            let rule = QuadratureRule::default_for_dim(2).unwrap();
            let s = score_field(&e, &p, &rule);
            let u = velocity_field(&e, &s, &p).unwrap();
            let n = e.len() as f64;
            let mom = u.weighted_momentum(&e);
            let mom_tol = 1e-12 * n * u.max_speed().max(1e-30);
            assert!(mom.iter().all(|m| m.abs() <= mom_tol), "momentum {mom:?}");
            let max_v = e
                .positions()
                .chunks(2)
                .map(|c| (c[0] * c[0] + c[1] * c[1]).sqrt())
                .fold(0.0, f64::max);
            let en = u.weighted_energy_production(&e).abs();
            assert!(en <= 1e-12 * n * max_v * u.max_speed().max(1e-30), "energy {en}");
        }
    }

    #[test]
    fn velocity_kernel_bound_gamma_m2() {
        // |U| <= 2/eps at gamma = -2 for any ensemble
        let p = params(0.5, -2.0);
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(11);
        let pos: Vec<f64> = (0..64).map(|_| rng.random_range(-3.0..3.0)).collect();
        let e = ParticleEnsemble::equal_weights(pos, 2, 0.0).unwrap();
        let rule = QuadratureRule::default_for_dim(2).unwrap();
        let s = score_field(&e, &p, &rule);
        let u = velocity_field(&e, &s, &p).unwrap();
        assert!(u.max_speed() <= 2.0 / p.epsilon + 1e-6);
    }

    #[test]
    fn velocity_schedule_independent() {
        // identical output bit for bit whatever the pool size
        let p = params(0.7, -1.5);
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(41);
        let pos: Vec<f64> = (0..400).map(|_| rng.random_range(-2.0..2.0)).collect();
        let e = ParticleEnsemble::equal_weights(pos, 2, 0.0).unwrap();
        let rule = QuadratureRule::new(2, 8.0, 6).unwrap();
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| {
                    let s = score_field(&e, &p, &rule);
                    let u = velocity_field(&e, &s, &p).unwrap();
                    (s, u)
                })
        };
        let (s1, u1) = run(1);
        let (s2, u2) = run(2);
        let (s4, u4) = run(4);
        assert_eq!(s1, s2);
        assert_eq!(s1, s4);
        assert_eq!(u1, u2);
        assert_eq!(u1, u4);
    }

    #[test]
    fn velocity_conserves_in_three_dimensions() {
        let p = ModelParams::new(0.8, -1.0, 3).unwrap();
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(43);
        let pos: Vec<f64> = (0..3 * 20).map(|_| rng.random_range(-1.5..1.5)).collect();
        let e = ParticleEnsemble::equal_weights(pos, 3, 0.0).unwrap();
        let rule = QuadratureRule::new(3, 8.0, 10).unwrap();
        let s = score_field(&e, &p, &rule);
        // score bound transfers dimension-free
        for i in 0..e.len() {
            let n: f64 = s.value(i).iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!(n <= 1.0 / p.epsilon + 1e-6);
        }
        let u = velocity_field(&e, &s, &p).unwrap();
        let mom = u.weighted_momentum(&e);
        let tol = 1e-12 * e.len() as f64 * u.max_speed().max(1e-30);
        assert!(mom.iter().all(|m| m.abs() <= tol));
        assert!(u.weighted_energy_production(&e).abs() <= tol * 3.0);
    }

    #[test]
    fn stale_score_rejected() {
        let p = params(1.0, 0.0);
        let e = ParticleEnsemble::equal_weights(vec![0.0, 0.0, 1.0, 1.0], 2, 0.0).unwrap();
        let rule = QuadratureRule::default_for_dim(2).unwrap();
        let mut s = score_field(&e, &p, &rule);
        s.source_time = 0.5;
        assert!(matches!(
            velocity_field(&e, &s, &p),
            Err(Error::StaleScore { .. })
        ));
    }

    #[test]
    fn holder_difference_zero_at_equal_points() {
        let p = params(1.0, -2.5);
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(12);
        let pos: Vec<f64> = (0..24).map(|_| rng.random_range(-1.5..1.5)).collect();
        let e = ParticleEnsemble::equal_weights(pos, 2, 0.0).unwrap();
        let rule = QuadratureRule::default_for_dim(2).unwrap();
        let s = score_field(&e, &p, &rule);
        let v = [0.3, 0.3];
        let u1 = velocity_at(&e, &s, &p, &rule, &v).unwrap();
        let u2 = velocity_at(&e, &s, &p, &rule, &v).unwrap();
        assert_eq!(u1, u2);
    }

    #[test]
    fn velocity_far_field_growth_exponent() {
        // for gamma in (-2, 0] the speed is bounded by C <v>^{2+gamma}; the
        // constant is not explicit, so regress the exponent at far field and
        // check it stays at or below 2+gamma. (The measured exponent is
        // smaller: the projection annihilates the radial part of the score,
        // which is exactly its far-field direction.)
        let gamma = -0.5;
        let p = params(1.0, gamma);
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(31);
        let pos: Vec<f64> = (0..32).map(|_| rng.random_range(-1.5..1.5)).collect();
        let e = ParticleEnsemble::equal_weights(pos, 2, 0.0).unwrap();
        let rule = QuadratureRule::default_for_dim(2).unwrap();
        let s = score_field(&e, &p, &rule);
        let mut logs = Vec::new();
        for k in 0..8 {
            let r = 6.0 * 1.6f64.powi(k);
            let v = [r / 2f64.sqrt(), r / 2f64.sqrt()];
            let u = velocity_at(&e, &s, &p, &rule, &v).unwrap();
            let speed: f64 = u.iter().map(|x| x * x).sum::<f64>().sqrt();
            logs.push(((1.0 + r * r).sqrt().ln(), speed.ln()));
        }
        let n = logs.len() as f64;
        let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
        let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = logs.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
        let slope = sxy / sxx;
        assert!(
            slope <= 2.0 + gamma + 0.2,
            "far-field growth exponent {slope} exceeds bound {}",
            2.0 + gamma
        );
        assert!(slope > 0.0, "speed should still grow at far field, slope {slope}");
    }

    #[test]
    fn holder_slope_very_soft() {
        // gamma = -2.9 regression oracle: slope >= 0.1 - 0.05
        let p = params(1.0, -2.9);
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(13);
        let pos: Vec<f64> = (0..32).map(|_| rng.random_range(-1.5..1.5)).collect();
        let e = ParticleEnsemble::equal_weights(pos, 2, 0.0).unwrap();
        let rule = QuadratureRule::new(2, 12.0, 8).unwrap();
        let s = score_field(&e, &p, &rule);
        let rep = kernel_holder_check(&p, &e, &s, &rule, 6, 9, (1e-4, 1e-2), 21).unwrap();
        assert!(
            rep.fitted_slope >= 0.05,
            "slope {} below 0.05",
            rep.fitted_slope
        );
    }
}
