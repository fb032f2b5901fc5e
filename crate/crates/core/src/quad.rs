//! Quadrature rules for the mollifier convolution and entropy integrals.
//!
//! The convolution integrand always carries the weight G(q) = C e^{-<q>}
//! and a smooth factor whose derivatives are O(1) in mollifier-scaled
//! coordinates, uniformly in epsilon. The d = 2 rule exploits this: Gauss
//! nodes built for the radial weight r e^{-<r>} (Stieltjes + Golub-Welsch)
//! crossed with equispaced angular shells whose count grows with radius.
//! For d >= 3 a composite tensor grid truncated to the ball |q| <= R is
//! used. Weights are normalized so the rule integrates G to one exactly.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Mutex, OnceLock};

use crate::error::{Error, Result};

/// Raw mass defect above which a rule is considered nonsense and rejected
/// rather than silently normalized away.
const RAW_DEFECT_LIMIT: f64 = 5e-2;

/// Gauss-Legendre nodes and weights on [-1, 1], by Newton iteration on P_n.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            // P_n(x) and P_n'(x) via the three-term recurrence
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (mut p0, mut p1) = (1.0, x);
        for k in 2..=n {
            let kf = k as f64;
            let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
            p0 = p1;
            p1 = p2;
        }
        let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if !n.is_multiple_of(2) {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Maps the reference rule onto [a, b].
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let c = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    (
        x.iter().map(|t| mid + c * t).collect(),
        w.iter().map(|t| c * t).collect(),
    )
}

/// Composite Gauss-Legendre over consecutive panels.
fn composite_on(breaks: &[f64], k: usize) -> (Vec<f64>, Vec<f64>) {
    let mut xs = Vec::new();
    let mut ws = Vec::new();
    for win in breaks.windows(2) {
        let (x, w) = gauss_legendre_on(k, win[0], win[1]);
        xs.extend(x);
        ws.extend(w);
    }
    (xs, ws)
}

#[inline]
pub fn bracket(r2: f64) -> f64 {
    (1.0 + r2).sqrt()
}

/// Gamma function at integer or half-integer arguments >= 1/2.
fn gamma_half(two_x: usize) -> f64 {
    let even = two_x.is_multiple_of(2);
    let mut val = if even { 1.0 } else { PI.sqrt() };
    let mut t = if even { 2 } else { 1 };
    while t < two_x {
        val *= t as f64 / 2.0;
        t += 2;
    }
    val
}

/// Surface area of the unit sphere S^{d-1}.
pub fn sphere_area(d: usize) -> f64 {
    2.0 * PI.powf(d as f64 / 2.0) / gamma_half(d)
}

/// Radial integral I_d = int_0^inf r^{d-1} e^{-<r>} dr by composite
/// Gauss-Legendre, accurate to ~1e-13 relative.
fn radial_moment(d: usize) -> f64 {
    let breaks: Vec<f64> = (0..=240).map(|i| i as f64 * 0.25).collect();
    let (x, w) = composite_on(&breaks, 8);
    x.iter()
        .zip(&w)
        .map(|(&r, &wi)| wi * r.powi(d as i32 - 1) * (-bracket(r * r)).exp())
        .sum()
}

/// Normalization constant C of G(v) = C e^{-<v>} with unit mass in R^d.
/// Computed once per dimension and cached.
pub fn mollifier_norm(d: usize) -> f64 {
    static CACHE: OnceLock<Mutex<HashMap<usize, f64>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut map = cache.lock().unwrap();
    *map.entry(d)
        .or_insert_with(|| 1.0 / (sphere_area(d) * radial_moment(d)))
}

/// Gauss nodes/weights for the weight function r^{d-1} e^{-<r>} on [0, R],
/// via the Stieltjes procedure on a fine discretization followed by
/// Golub-Welsch.
fn radial_gauss(d: usize, radius: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!((1..=128).contains(&n));
    let panels = 300;
    let breaks: Vec<f64> = (0..=panels)
        .map(|i| radius * i as f64 / panels as f64)
        .collect();
    let (x, wq) = composite_on(&breaks, 8);
    let w: Vec<f64> = x
        .iter()
        .zip(&wq)
        .map(|(&r, &wi)| wi * r.powi(d as i32 - 1) * (-bracket(r * r)).exp())
        .collect();

    // Stieltjes three-term recurrence for monic orthogonal polynomials
    let m = x.len();
    let mut alpha = vec![0.0; n];
    let mut beta = vec![0.0; n];
    let mut p_prev = vec![0.0; m];
    let mut p = vec![1.0; m];
    let mu0: f64 = w.iter().sum();
    let mut norm_prev = 0.0;
    for k in 0..n {
        let mut nk = 0.0;
        let mut xk = 0.0;
        for i in 0..m {
            let wp2 = w[i] * p[i] * p[i];
            nk += wp2;
            xk += x[i] * wp2;
        }
        alpha[k] = xk / nk;
        if k > 0 {
            beta[k] = nk / norm_prev;
        }
        for i in 0..m {
            let pn = (x[i] - alpha[k]) * p[i] - if k > 0 { beta[k] * p_prev[i] } else { 0.0 };
            p_prev[i] = p[i];
            p[i] = pn;
        }
        norm_prev = nk;
    }

    // Golub-Welsch: eigenvalues of the Jacobi matrix are the nodes, the
    // squared first eigenvector components scaled by mu0 are the weights.
    let off: Vec<f64> = beta.iter().skip(1).map(|b| b.sqrt()).collect();
    let (nodes, first_row) = tridiag_eigen(&alpha, &off);
    let weights: Vec<f64> = first_row.iter().map(|z| mu0 * z * z).collect();
    (nodes, weights)
}

/// Eigenvalues of a symmetric tridiagonal matrix plus the first component of
/// each eigenvector, by the implicit-shift QL algorithm.
fn tridiag_eigen(diag: &[f64], off: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = diag.len();
    let mut d = diag.to_vec();
    let mut e = vec![0.0; n];
    e[..n - 1].copy_from_slice(off);
    let mut z = vec![0.0; n];
    z[0] = 1.0;
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            assert!(iter < 80, "tridiagonal QL failed to converge");
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c) = (1.0, 1.0);
            let mut p = 0.0;
            for i in (l..m).rev() {
                let mut f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                f = z[i + 1];
                z[i + 1] = s * z[i] + c * f;
                z[i] = c * z[i] - s * f;
            }
            if r == 0.0 && m > l + 1 {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    // sort ascending, carrying first components
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| d[a].partial_cmp(&d[b]).unwrap());
    (
        idx.iter().map(|&i| d[i]).collect(),
        idx.iter().map(|&i| z[i]).collect(),
    )
}

/// Quadrature rule over R^d truncated to |q| <= R, in mollifier-scaled
/// coordinates. Weights are plain Lebesgue weights, normalized so that
/// sum_k w_k G(q_k) = 1.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    /// Flat node coordinates, node-major.
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub radius: f64,
    pub dim: usize,
    /// Target node count passed at construction (radial nodes for d = 2,
    /// per-axis for d >= 3); kept for refinement.
    base_n: usize,
    /// Angular density multiplier (d = 2), doubled per refinement level so
    /// both directions of the rule converge together.
    ang_scale: f64,
    /// Cached w_k G(q_k) / <q_k> for the score convolution.
    score_coef: Vec<f64>,
}

impl QuadratureRule {
    /// Builds the default rule for a dimension: radial x angular for d = 2,
    /// ball-truncated composite tensor for d >= 3.
    pub fn new(dim: usize, radius: f64, n: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::BadDimension(dim));
        }
        if !(radius > 0.0) || n == 0 {
            return Err(Error::Config(format!(
                "quadrature needs radius > 0 and n >= 1, got R = {radius}, n = {n}"
            )));
        }
        Self::with_angular_scale(dim, radius, n, 1.0)
    }

    fn with_angular_scale(dim: usize, radius: f64, n: usize, ang_scale: f64) -> Result<Self> {
        let (nodes, weights) = if dim == 2 {
            Self::build_radial_2d(radius, n, ang_scale)
        } else {
            Self::build_ball_tensor(dim, radius, n)
        };
        Self::finish(nodes, weights, radius, dim, n, ang_scale)
    }

    /// Default production rule.
    pub fn default_for_dim(dim: usize) -> Result<Self> {
        match dim {
            2 => Self::new(2, 16.0, 12),
            _ => Self::new(dim, 10.0, 12),
        }
    }

    /// Coarse rule for large sweeps; ~1% relative score accuracy in d = 2.
    pub fn coarse_for_dim(dim: usize) -> Result<Self> {
        match dim {
            2 => Self::new(2, 8.0, 6),
            _ => Self::new(dim, 8.0, 8),
        }
    }

    fn build_radial_2d(radius: f64, n_r: usize, ang_scale: f64) -> (Vec<f64>, Vec<f64>) {
        let (r, wr) = radial_gauss(2, radius, n_r);
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for (&ri, &wi) in r.iter().zip(&wr) {
            // multiple of 4 keeps the angle set invariant under the square's
            // symmetry group (quarter-turns and axis reflections)
            let base = ((2.2 * ri).ceil() as usize).max(8) + 4;
            let n_theta = ((base as f64 * ang_scale).ceil() as usize).div_ceil(4) * 4;
            // undo the e^{-<r>} folded into the Gauss weight: stored weights
            // are plain Lebesgue weights
            let w_plain = wi * (2.0 * PI / n_theta as f64) * bracket(ri * ri).exp();
            for j in 0..n_theta {
                let th = (j as f64 + 0.5) * 2.0 * PI / n_theta as f64;
                nodes.push(ri * th.cos());
                nodes.push(ri * th.sin());
                weights.push(w_plain);
            }
        }
        (nodes, weights)
    }

    fn build_ball_tensor(dim: usize, radius: f64, n_axis: usize) -> (Vec<f64>, Vec<f64>) {
        // panel breakpoints on [0, R]: unit spacing near the origin where the
        // integrand varies fastest, stretching outward
        let mut breaks = vec![0.0];
        let mut x = 0.0;
        let mut step = 1.0;
        while x < radius {
            x = (x + step).min(radius);
            breaks.push(x);
            if x >= 4.0 {
                step = 2.0;
            }
        }
        let panels = breaks.len() - 1;
        let k = (n_axis / panels).max(2);
        let (half_x, half_w) = composite_on(&breaks, k);
        let mut ax = Vec::with_capacity(2 * half_x.len());
        let mut aw = Vec::with_capacity(2 * half_w.len());
        for i in (0..half_x.len()).rev() {
            ax.push(-half_x[i]);
            aw.push(half_w[i]);
        }
        ax.extend(&half_x);
        aw.extend(&half_w);

        let m = ax.len();
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        let mut index = vec![0usize; dim];
        loop {
            let mut r2 = 0.0;
            let mut w = 1.0;
            for (k_ax, &i) in index.iter().enumerate() {
                r2 += ax[i] * ax[i];
                w *= aw[i];
                let _ = k_ax;
            }
            if r2 <= radius * radius {
                for &i in &index {
                    nodes.push(ax[i]);
                }
                weights.push(w);
            }
            // odometer increment
            let mut carry = dim;
            for k_ax in (0..dim).rev() {
                index[k_ax] += 1;
                if index[k_ax] < m {
                    carry = k_ax;
                    break;
                }
                index[k_ax] = 0;
            }
            if carry == dim {
                break;
            }
        }
        (nodes, weights)
    }

    fn finish(
        nodes: Vec<f64>,
        mut weights: Vec<f64>,
        radius: f64,
        dim: usize,
        base_n: usize,
        ang_scale: f64,
    ) -> Result<Self> {
        let c = mollifier_norm(dim);
        let mut mass = 0.0;
        for (k, w) in weights.iter().enumerate() {
            let q = &nodes[k * dim..(k + 1) * dim];
            let r2: f64 = q.iter().map(|x| x * x).sum();
            mass += w * c * (-bracket(r2)).exp();
        }
        let defect = (mass - 1.0).abs();
        if !(defect < RAW_DEFECT_LIMIT) {
            return Err(Error::Config(format!(
                "quadrature rule (R = {radius}, n = {base_n}, d = {dim}) integrates G with defect {defect:.2e}"
            )));
        }
        for w in &mut weights {
            *w /= mass;
        }
        let mut score_coef = Vec::with_capacity(weights.len());
        for (k, w) in weights.iter().enumerate() {
            let q = &nodes[k * dim..(k + 1) * dim];
            let r2: f64 = q.iter().map(|x| x * x).sum();
            let br = bracket(r2);
            score_coef.push(w * c * (-br).exp() / br);
        }
        Ok(QuadratureRule {
            nodes,
            weights,
            radius,
            dim,
            base_n,
            ang_scale,
            score_coef,
        })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    #[inline]
    pub fn node(&self, k: usize) -> &[f64] {
        &self.nodes[k * self.dim..(k + 1) * self.dim]
    }

    #[inline]
    pub(crate) fn score_coef(&self, k: usize) -> f64 {
        self.score_coef[k]
    }

    /// Discrete mass sum_k w_k G(q_k); equals 1 after normalization.
    pub fn mollifier_mass(&self) -> f64 {
        let c = mollifier_norm(self.dim);
        (0..self.len())
            .map(|k| {
                let r2: f64 = self.node(k).iter().map(|x| x * x).sum();
                self.weights[k] * c * (-bracket(r2)).exp()
            })
            .sum()
    }

    /// Next refinement level: doubled node budget in both directions and an
    /// extended radius, used by the convergence self-checks.
    pub fn refined(&self) -> Result<Self> {
        Self::with_angular_scale(
            self.dim,
            self.radius + 4.0,
            self.base_n * 2,
            self.ang_scale * 2.0,
        )
    }
}

/// Tensor-product composite Gauss-Legendre rule over an axis-aligned box,
/// used for the entropy integral in physical coordinates.
#[derive(Debug, Clone)]
pub struct BoxRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub dim: usize,
}

impl BoxRule {
    /// Box [lo, hi]^d resolved with GL-`order` panels of width <= `panel`.
    pub fn on_box(lo: &[f64], hi: &[f64], panel: f64, order: usize) -> Result<Self> {
        let dim = lo.len();
        if dim == 0 || hi.len() != dim {
            return Err(Error::Config("box rule needs matching lo/hi".into()));
        }
        if !(panel > 0.0) || order == 0 {
            return Err(Error::Config("box rule needs panel > 0, order >= 1".into()));
        }
        let mut axes = Vec::with_capacity(dim);
        for k in 0..dim {
            if !(hi[k] > lo[k]) {
                return Err(Error::Config(format!(
                    "degenerate box on axis {k}: [{}, {}]",
                    lo[k], hi[k]
                )));
            }
            let n_p = ((hi[k] - lo[k]) / panel).ceil() as usize;
            let n_p = n_p.max(1);
            let breaks: Vec<f64> = (0..=n_p)
                .map(|i| lo[k] + (hi[k] - lo[k]) * i as f64 / n_p as f64)
                .collect();
            axes.push(composite_on(&breaks, order));
        }
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        let mut index = vec![0usize; dim];
        loop {
            let mut w = 1.0;
            for (k, &i) in index.iter().enumerate() {
                w *= axes[k].1[i];
            }
            for (k, &i) in index.iter().enumerate() {
                nodes.push(axes[k].0[i]);
            }
            weights.push(w);
            let mut carry = dim;
            for k in (0..dim).rev() {
                index[k] += 1;
                if index[k] < axes[k].0.len() {
                    carry = k;
                    break;
                }
                index[k] = 0;
            }
            if carry == dim {
                break;
            }
        }
        Ok(BoxRule { nodes, weights, dim })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    #[inline]
    pub fn node(&self, k: usize) -> &[f64] {
        &self.nodes[k * self.dim..(k + 1) * self.dim]
    }
}
