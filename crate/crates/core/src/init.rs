//! Initial-condition construction: Maxwellian sampling, anisotropic
//! bi-Maxwellian mixtures, deterministic density grids, and snapshot files.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::types::{read_snapshot, ParticleEnsemble};

/// Analytic densities available to the grid constructor.
#[derive(Debug, Clone, PartialEq)]
pub enum DensitySpec {
    Maxwellian { u: Vec<f64>, temp: f64 },
    BiMaxwellianAniso { u1: Vec<f64>, u2: Vec<f64>, temps: Vec<f64> },
}

impl DensitySpec {
    fn check(&self, d: usize) -> Result<()> {
        match self {
            DensitySpec::Maxwellian { u, temp } => {
                if u.len() != d {
                    return Err(Error::BadSpec(format!(
                        "mean velocity has {} components, dim is {d}",
                        u.len()
                    )));
                }
                if !(*temp > 0.0) {
                    return Err(Error::BadSpec("temperature must be positive".into()));
                }
            }
            DensitySpec::BiMaxwellianAniso { u1, u2, temps } => {
                if u1.len() != d || u2.len() != d || temps.len() != d {
                    return Err(Error::BadSpec(format!(
                        "bi-Maxwellian parameters must all have dim {d} components"
                    )));
                }
                if temps.iter().any(|t| !(*t > 0.0)) {
                    return Err(Error::BadSpec("axis temperatures must be positive".into()));
                }
            }
        }
        Ok(())
    }

    /// Unnormalized density value; grid weights are renormalized anyway.
    fn value(&self, x: &[f64]) -> f64 {
        match self {
            DensitySpec::Maxwellian { u, temp } => {
                let q: f64 = x.iter().zip(u).map(|(a, b)| (a - b) * (a - b)).sum();
                (-0.5 * q / temp).exp()
            }
            DensitySpec::BiMaxwellianAniso { u1, u2, temps } => {
                let mut q1 = 0.0;
                let mut q2 = 0.0;
                for k in 0..x.len() {
                    q1 += (x[k] - u1[k]) * (x[k] - u1[k]) / temps[k];
                    q2 += (x[k] - u2[k]) * (x[k] - u2[k]) / temps[k];
                }
                0.5 * ((-0.5 * q1).exp() + (-0.5 * q2).exp())
            }
        }
    }
}

/// Initial-condition spec of a run.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition {
    Maxwellian { u: Vec<f64>, temp: f64 },
    BiMaxwellianAniso { u1: Vec<f64>, u2: Vec<f64>, temps: Vec<f64> },
    /// Cell-centered grid on [-extent, extent]^d with weights proportional
    /// to the named density, renormalized to sum one.
    GridFromDensity { density: DensitySpec, extent: f64, per_axis: usize },
    File { path: std::path::PathBuf },
}

/// Builds the initial ensemble. Sampling kinds draw iid with equal weights;
/// the grid kind is fully deterministic. Fixed seed means bitwise-identical
/// output.
pub fn sample_initial(
    ic: &InitialCondition,
    n: usize,
    d: usize,
    seed: u64,
) -> Result<ParticleEnsemble> {
    match ic {
        InitialCondition::Maxwellian { u, temp } => {
            DensitySpec::Maxwellian { u: u.clone(), temp: *temp }.check(d)?;
            if n == 0 {
                return Err(Error::EmptyEnsemble);
            }
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let sd = temp.sqrt();
            let mut pos = Vec::with_capacity(n * d);
            for _ in 0..n {
                for uk in u {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    pos.push(uk + sd * z);
                }
            }
            ParticleEnsemble::equal_weights(pos, d, 0.0)
        }
        InitialCondition::BiMaxwellianAniso { u1, u2, temps } => {
            DensitySpec::BiMaxwellianAniso {
                u1: u1.clone(),
                u2: u2.clone(),
                temps: temps.clone(),
            }
            .check(d)?;
            if n == 0 {
                return Err(Error::EmptyEnsemble);
            }
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let mut pos = Vec::with_capacity(n * d);
            for _ in 0..n {
                let center = if rng.random_bool(0.5) { u1 } else { u2 };
                for k in 0..d {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    pos.push(center[k] + temps[k].sqrt() * z);
                }
            }
            ParticleEnsemble::equal_weights(pos, d, 0.0)
        }
        InitialCondition::GridFromDensity { density, extent, per_axis } => {
            density.check(d)?;
            if !(*extent > 0.0) || *per_axis == 0 {
                return Err(Error::BadSpec(
                    "grid needs positive extent and per_axis >= 1".into(),
                ));
            }
            let total = per_axis.pow(d as u32);
            if n != total {
                return Err(Error::BadSpec(format!(
                    "grid of {per_axis}^{d} = {total} cells but N = {n} requested"
                )));
            }
            let h = 2.0 * extent / *per_axis as f64;
            let mut pos = Vec::with_capacity(total * d);
            let mut weights = Vec::with_capacity(total);
            let mut index = vec![0usize; d];
            // 2-point Gauss per axis for the cell average
            let gauss_off = 0.5 * h / 3f64.sqrt();
            loop {
                let center: Vec<f64> = index
                    .iter()
                    .map(|&i| -extent + (i as f64 + 0.5) * h)
                    .collect();
                let mut avg = 0.0;
                let corners = 1usize << d;
                for c in 0..corners {
                    let pt: Vec<f64> = center
                        .iter()
                        .enumerate()
                        .map(|(k, &x)| {
                            if c >> k & 1 == 1 {
                                x + gauss_off
                            } else {
                                x - gauss_off
                            }
                        })
                        .collect();
                    avg += density.value(&pt);
                }
                weights.push(avg / corners as f64);
                pos.extend_from_slice(&center);
                let mut carry = d;
                for k in (0..d).rev() {
                    index[k] += 1;
                    if index[k] < *per_axis {
                        carry = k;
                        break;
                    }
                    index[k] = 0;
                }
                if carry == d {
                    break;
                }
            }
            let sum: f64 = weights.iter().sum();
            for w in &mut weights {
                *w /= sum;
            }
            ParticleEnsemble::new(pos, weights, d, 0.0)
        }
        InitialCondition::File { path } => {
            let e = read_snapshot(path)?;
            if e.dim() != d {
                return Err(Error::IncompatibleDimension(e.dim(), d));
            }
            Ok(e)
        }
    }
}

/// First `n` particles of an equal-weight master draw, weights renormalized.
/// Used to realize nested initial data across a mean-field sweep.
pub fn nested_subsample(master: &ParticleEnsemble, n: usize) -> Result<ParticleEnsemble> {
    if n == 0 || n > master.len() {
        return Err(Error::BadSpec(format!(
            "cannot take {n} particles from a master draw of {}",
            master.len()
        )));
    }
    let w = 1.0 / master.len() as f64;
    if master.weights().iter().any(|&m| (m - w).abs() > 1e-12) {
        return Err(Error::BadSpec(
            "nested subsampling needs an equal-weight master draw".into(),
        ));
    }
    let d = master.dim();
    ParticleEnsemble::equal_weights(master.positions()[..n * d].to_vec(), d, master.time)
}
