//! Wasserstein distances between empirical measures: exact quadratic-cost
//! assignment (W2), exact bottleneck matching (W-infinity), and a sliced
//! estimator for ensembles outside the exact gates.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::types::ParticleEnsemble;

/// Largest N solved by the exact assignment (W2).
pub const W2_EXACT_GATE: usize = 512;
/// Largest N solved by the exact bottleneck matching (W-infinity).
pub const WINF_EXACT_GATE: usize = 2048;
/// Projection count of the sliced estimator.
pub const SLICED_DIRECTIONS: usize = 64;
/// Fixed seed of the sliced direction stream.
pub const SLICED_SEED: u64 = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    W2,
    WInf,
    SlicedW2,
}

impl Metric {
    pub fn name(&self) -> &'static str {
        match self {
            Metric::W2 => "w2",
            Metric::WInf => "winf",
            Metric::SlicedW2 => "sliced_w2",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Exact,
    Sliced,
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Exact => "exact",
            Mode::Sliced => "sliced",
        }
    }
}

/// Outcome of a transport computation. `matching[i]` is the partner of
/// particle i of the first ensemble in the dense exact case.
#[derive(Debug, Clone)]
pub struct TransportPlanResult {
    pub metric: Metric,
    pub cost: f64,
    pub matching: Option<Vec<usize>>,
    pub mode: Mode,
}

impl TransportPlanResult {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "metric": self.metric.name(),
            "value": self.cost,
            "matching_size": self.matching.as_ref().map_or(0, |m| m.len()),
            "mode": self.mode.name(),
        })
    }
}

fn check_dims(a: &ParticleEnsemble, b: &ParticleEnsemble) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::IncompatibleDimension(a.dim(), b.dim()));
    }
    Ok(())
}

fn equal_uniform_weights(a: &ParticleEnsemble, b: &ParticleEnsemble) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let w = 1.0 / a.len() as f64;
    a.weights()
        .iter()
        .chain(b.weights())
        .all(|&m| (m - w).abs() <= 1e-12)
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Minimum-cost assignment by the shortest-augmenting-path algorithm with
/// potentials, O(N^3). Returns (row -> column matching, total cost).
fn assignment(n: usize, cost: &[f64]) -> (Vec<usize>, f64) {
    // 1-based arrays with a sentinel column 0
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1]; // p[j] = row matched to column j
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut matching = vec![0usize; n];
    for j in 1..=n {
        if p[j] != 0 {
            matching[p[j] - 1] = j - 1;
        }
    }
    let total: f64 = matching
        .iter()
        .enumerate()
        .map(|(i, &j)| cost[i * n + j])
        .sum();
    (matching, total)
}

/// Hopcroft-Karp maximum bipartite matching on an adjacency threshold graph.
struct HopcroftKarp<'a> {
    n: usize,
    dist2: &'a [f64],
    threshold2: f64,
    match_l: Vec<usize>,
    match_r: Vec<usize>,
    layer: Vec<u32>,
}

const UNMATCHED: usize = usize::MAX;

impl<'a> HopcroftKarp<'a> {
    fn new(n: usize, dist2: &'a [f64], threshold2: f64) -> Self {
        HopcroftKarp {
            n,
            dist2,
            threshold2,
            match_l: vec![UNMATCHED; n],
            match_r: vec![UNMATCHED; n],
            layer: vec![u32::MAX; n],
        }
    }

    #[inline]
    fn edge(&self, i: usize, j: usize) -> bool {
        self.dist2[i * self.n + j] <= self.threshold2
    }

    fn bfs(&mut self) -> bool {
        let mut queue = Vec::with_capacity(self.n);
        for i in 0..self.n {
            if self.match_l[i] == UNMATCHED {
                self.layer[i] = 0;
                queue.push(i);
            } else {
                self.layer[i] = u32::MAX;
            }
        }
        let mut found = false;
        let mut head = 0;
        while head < queue.len() {
            let i = queue[head];
            head += 1;
            for j in 0..self.n {
                if !self.edge(i, j) {
                    continue;
                }
                let owner = self.match_r[j];
                if owner == UNMATCHED {
                    found = true;
                } else if self.layer[owner] == u32::MAX {
                    self.layer[owner] = self.layer[i] + 1;
                    queue.push(owner);
                }
            }
        }
        found
    }

    fn dfs(&mut self, i: usize) -> bool {
        for j in 0..self.n {
            if !self.edge(i, j) {
                continue;
            }
            let owner = self.match_r[j];
            if owner == UNMATCHED || (self.layer[owner] == self.layer[i] + 1 && self.dfs(owner)) {
                self.match_l[i] = j;
                self.match_r[j] = i;
                return true;
            }
        }
        self.layer[i] = u32::MAX;
        false
    }

    fn max_matching(&mut self) -> usize {
        let mut total = 0;
        while self.bfs() {
            for i in 0..self.n {
                if self.match_l[i] == UNMATCHED && self.dfs(i) {
                    total += 1;
                }
            }
        }
        total
    }
}

/// Exact W2 between equal-size equal-weight ensembles.
pub fn wasserstein_2_exact(a: &ParticleEnsemble, b: &ParticleEnsemble) -> Result<TransportPlanResult> {
    check_dims(a, b)?;
    if !equal_uniform_weights(a, b) {
        return Err(Error::UnsupportedWeights);
    }
    let n = a.len();
    let mut cost = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            cost[i * n + j] = sq_dist(a.position(i), b.position(j));
        }
    }
    let (matching, total) = assignment(n, &cost);
    Ok(TransportPlanResult {
        metric: Metric::W2,
        cost: (total / n as f64).sqrt(),
        matching: Some(matching),
        mode: Mode::Exact,
    })
}

/// Exact W-infinity: binary search over candidate distances with a
/// bipartite matching feasibility test at each threshold.
pub fn wasserstein_inf_exact(
    a: &ParticleEnsemble,
    b: &ParticleEnsemble,
) -> Result<TransportPlanResult> {
    check_dims(a, b)?;
    if !equal_uniform_weights(a, b) {
        return Err(Error::UnsupportedWeights);
    }
    let n = a.len();
    let mut dist2 = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            dist2[i * n + j] = sq_dist(a.position(i), b.position(j));
        }
    }
    let mut candidates: Vec<f64> = dist2.clone();
    candidates.sort_by(|x, y| x.partial_cmp(y).unwrap());
    candidates.dedup();
    // smallest threshold admitting a perfect matching
    let mut lo = 0usize;
    let mut hi = candidates.len() - 1;
    while lo < hi {
        let mid = (lo + hi) / 2;
        let mut hk = HopcroftKarp::new(n, &dist2, candidates[mid]);
        if hk.max_matching() == n {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    let mut hk = HopcroftKarp::new(n, &dist2, candidates[lo]);
    let matched = hk.max_matching();
    debug_assert_eq!(matched, n);
    Ok(TransportPlanResult {
        metric: Metric::WInf,
        cost: candidates[lo].sqrt(),
        matching: Some(hk.match_l),
        mode: Mode::Exact,
    })
}

/// Squared 1-d W2 between two weighted atom lists via the quantile coupling.
fn w2_1d_squared(mut a: Vec<(f64, f64)>, mut b: Vec<(f64, f64)>) -> f64 {
    a.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
    b.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
    let (mut i, mut j) = (0usize, 0usize);
    let (mut ra, mut rb) = (a[0].1, b[0].1);
    let mut acc = 0.0;
    loop {
        let seg = ra.min(rb);
        let d = a[i].0 - b[j].0;
        acc += seg * d * d;
        ra -= seg;
        rb -= seg;
        if ra <= 1e-15 {
            i += 1;
            if i >= a.len() {
                break;
            }
            ra = a[i].1;
        }
        if rb <= 1e-15 {
            j += 1;
            if j >= b.len() {
                break;
            }
            rb = b[j].1;
        }
    }
    acc
}

/// 1-d W-infinity: largest displacement across the quantile coupling.
fn winf_1d(mut a: Vec<(f64, f64)>, mut b: Vec<(f64, f64)>) -> f64 {
    a.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
    b.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
    let (mut i, mut j) = (0usize, 0usize);
    let (mut ra, mut rb) = (a[0].1, b[0].1);
    let mut worst: f64 = 0.0;
    loop {
        let seg = ra.min(rb);
        worst = worst.max((a[i].0 - b[j].0).abs());
        ra -= seg;
        rb -= seg;
        if ra <= 1e-15 {
            i += 1;
            if i >= a.len() {
                break;
            }
            ra = a[i].1;
        }
        if rb <= 1e-15 {
            j += 1;
            if j >= b.len() {
                break;
            }
            rb = b[j].1;
        }
    }
    worst
}

fn sliced_directions(dim: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            loop {
                let d: Vec<f64> = (0..dim)
                    .map(|_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
                    .collect();
                let norm: f64 = d.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm > 1e-12 {
                    return d.into_iter().map(|x| x / norm).collect();
                }
            }
        })
        .collect()
}

fn project(e: &ParticleEnsemble, dir: &[f64]) -> Vec<(f64, f64)> {
    (0..e.len())
        .map(|i| {
            let x: f64 = e.position(i).iter().zip(dir).map(|(a, b)| a * b).sum();
            (x, e.weights()[i])
        })
        .collect()
}

/// Sliced W2: root mean of squared 1-d distances over a fixed-seed
/// direction stream. Handles unequal sizes and weights.
pub fn sliced_w2(
    a: &ParticleEnsemble,
    b: &ParticleEnsemble,
    directions: usize,
    seed: u64,
) -> Result<TransportPlanResult> {
    check_dims(a, b)?;
    let dirs = sliced_directions(a.dim(), directions, seed);
    let sq: Vec<f64> = dirs
        .par_iter()
        .map(|dir| w2_1d_squared(project(a, dir), project(b, dir)))
        .collect();
    let mean = sq.iter().sum::<f64>() / sq.len() as f64;
    Ok(TransportPlanResult {
        metric: Metric::SlicedW2,
        cost: mean.sqrt(),
        matching: None,
        mode: Mode::Sliced,
    })
}

/// Sliced W-infinity lower estimate: the largest 1-d bottleneck across the
/// direction stream.
pub fn sliced_winf(
    a: &ParticleEnsemble,
    b: &ParticleEnsemble,
    directions: usize,
    seed: u64,
) -> Result<TransportPlanResult> {
    check_dims(a, b)?;
    let dirs = sliced_directions(a.dim(), directions, seed);
    let worst = dirs
        .par_iter()
        .map(|dir| winf_1d(project(a, dir), project(b, dir)))
        .collect::<Vec<f64>>()
        .into_iter()
        .fold(0.0, f64::max);
    Ok(TransportPlanResult {
        metric: Metric::WInf,
        cost: worst,
        matching: None,
        mode: Mode::Sliced,
    })
}

/// W2 with automatic mode selection: exact assignment inside the gate,
/// sliced estimator beyond it or for incompatible weight layouts.
pub fn wasserstein_2(a: &ParticleEnsemble, b: &ParticleEnsemble) -> Result<TransportPlanResult> {
    check_dims(a, b)?;
    if equal_uniform_weights(a, b) && a.len() <= W2_EXACT_GATE {
        wasserstein_2_exact(a, b)
    } else {
        sliced_w2(a, b, SLICED_DIRECTIONS, SLICED_SEED)
    }
}

/// W-infinity with automatic mode selection, falling back to the sliced
/// estimate outside the exact gate.
pub fn wasserstein_inf(a: &ParticleEnsemble, b: &ParticleEnsemble) -> Result<TransportPlanResult> {
    check_dims(a, b)?;
    if equal_uniform_weights(a, b) && a.len() <= WINF_EXACT_GATE {
        wasserstein_inf_exact(a, b)
    } else {
        sliced_winf(a, b, SLICED_DIRECTIONS, SLICED_SEED)
    }
}
