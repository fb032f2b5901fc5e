//! Flat key = value run configuration with typed accessors.
//!
//! The format is line oriented: `key = value`, `#` starts a comment, blank
//! lines are ignored. Unknown keys are rejected. Vectors are comma
//! separated. See the repository README for the full key table.

use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::init::{DensitySpec, InitialCondition};
use crate::integrator::{DtPolicy, IntegrateOptions, Scheme, StepConfig};
use crate::metrics::EntropyBoxSpec;
use crate::quad::QuadratureRule;
use crate::types::ModelParams;

const KNOWN_KEYS: &[&str] = &[
    "epsilon",
    "gamma",
    "dim",
    "n_particles",
    "scheme",
    "dt",
    "adaptive",
    "dt_max",
    "theta",
    "t_end",
    "quad_radius",
    "quad_nodes",
    "seed",
    "out_dir",
    "snapshot_every",
    "record_every",
    "entropy_every",
    "entropy_inflation",
    "entropy_panel",
    "entropy_order",
    "init_kind",
    "init_u",
    "init_temp",
    "init_u2",
    "init_temps",
    "init_extent",
    "init_per_axis",
    "init_file",
];

/// Fully resolved run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub epsilon: f64,
    pub gamma: f64,
    pub dim: usize,
    pub n_particles: usize,
    pub scheme: Scheme,
    pub dt: f64,
    pub adaptive: bool,
    pub dt_max: f64,
    pub theta: f64,
    pub t_end: f64,
    pub quad_radius: f64,
    pub quad_nodes: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub snapshot_every: usize,
    pub record_every: usize,
    pub entropy_every: usize,
    pub entropy_box: EntropyBoxSpec,
    pub init: InitialCondition,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            epsilon: 0.5,
            gamma: 0.0,
            dim: 2,
            n_particles: 64,
            scheme: Scheme::Rk4,
            dt: 1e-3,
            adaptive: false,
            dt_max: 1e-2,
            theta: 0.1,
            t_end: 1.0,
            quad_radius: 16.0,
            quad_nodes: 12,
            seed: 42,
            out_dir: PathBuf::from("out"),
            snapshot_every: 0,
            record_every: 1,
            entropy_every: 1,
            entropy_box: EntropyBoxSpec::default(),
            init: InitialCondition::Maxwellian {
                u: vec![0.0, 0.0],
                temp: 1.0,
            },
        }
    }
}

struct Raw(BTreeMap<String, String>);

impl Raw {
    fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(|s| s.as_str())
    }

    fn f64(&self, key: &str, default: f64) -> Result<f64> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::Config(format!("key `{key}`: bad number `{v}`"))),
        }
    }

    fn usize(&self, key: &str, default: usize) -> Result<usize> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::Config(format!("key `{key}`: bad integer `{v}`"))),
        }
    }

    fn u64(&self, key: &str, default: u64) -> Result<u64> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::Config(format!("key `{key}`: bad integer `{v}`"))),
        }
    }

    fn bool(&self, key: &str, default: bool) -> Result<bool> {
        match self.get(key) {
            None => Ok(default),
            Some("true") => Ok(true),
            Some("false") => Ok(false),
            Some(v) => Err(Error::Config(format!(
                "key `{key}`: expected true/false, got `{v}`"
            ))),
        }
    }

    fn vec_f64(&self, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        match self.get(key) {
            None => Ok(default.to_vec()),
            Some(v) => v
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse()
                        .map_err(|_| Error::Config(format!("key `{key}`: bad vector `{v}`")))
                })
                .collect(),
        }
    }
}

fn parse_raw(text: &str) -> Result<Raw> {
    let mut map = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (key, value) = body.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {}: expected `key = value`", lineno + 1))
        })?;
        let key = key.trim().to_string();
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(Error::Config(format!(
                "line {}: unknown key `{key}`",
                lineno + 1
            )));
        }
        if map.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(Error::Config(format!(
                "line {}: duplicate key `{key}`",
                lineno + 1
            )));
        }
    }
    Ok(Raw(map))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig> {
        let raw = parse_raw(text)?;
        let def = RunConfig::default();
        let dim = raw.usize("dim", def.dim)?;

        let scheme = match raw.get("scheme") {
            None => def.scheme,
            Some("euler") => Scheme::Euler,
            Some("rk4") => Scheme::Rk4,
            Some(v) => {
                return Err(Error::Config(format!(
                    "key `scheme`: expected euler|rk4, got `{v}`"
                )))
            }
        };

        let zero = vec![0.0; dim];
        let ones = vec![1.0; dim];
        let init = match raw.get("init_kind").unwrap_or("maxwellian") {
            "maxwellian" => InitialCondition::Maxwellian {
                u: raw.vec_f64("init_u", &zero)?,
                temp: raw.f64("init_temp", 1.0)?,
            },
            "bimaxwellian" => InitialCondition::BiMaxwellianAniso {
                u1: raw.vec_f64("init_u", &zero)?,
                u2: raw.vec_f64("init_u2", &zero)?,
                temps: raw.vec_f64("init_temps", &ones)?,
            },
            "grid_maxwellian" => InitialCondition::GridFromDensity {
                density: DensitySpec::Maxwellian {
                    u: raw.vec_f64("init_u", &zero)?,
                    temp: raw.f64("init_temp", 1.0)?,
                },
                extent: raw.f64("init_extent", 3.0)?,
                per_axis: raw.usize("init_per_axis", 8)?,
            },
            "file" => InitialCondition::File {
                path: PathBuf::from(raw.get("init_file").ok_or_else(|| {
                    Error::Config("init_kind = file needs init_file".into())
                })?),
            },
            other => {
                return Err(Error::Config(format!(
                    "key `init_kind`: unknown kind `{other}`"
                )))
            }
        };

        let cfg = RunConfig {
            epsilon: raw.f64("epsilon", def.epsilon)?,
            gamma: raw.f64("gamma", def.gamma)?,
            dim,
            n_particles: raw.usize("n_particles", def.n_particles)?,
            scheme,
            dt: raw.f64("dt", def.dt)?,
            adaptive: raw.bool("adaptive", def.adaptive)?,
            dt_max: raw.f64("dt_max", def.dt_max)?,
            theta: raw.f64("theta", def.theta)?,
            t_end: raw.f64("t_end", def.t_end)?,
            quad_radius: raw.f64("quad_radius", def.quad_radius)?,
            quad_nodes: raw.usize("quad_nodes", def.quad_nodes)?,
            seed: raw.u64("seed", def.seed)?,
            out_dir: PathBuf::from(raw.get("out_dir").unwrap_or("out")),
            snapshot_every: raw.usize("snapshot_every", def.snapshot_every)?,
            record_every: raw.usize("record_every", def.record_every)?,
            entropy_every: raw.usize("entropy_every", def.entropy_every)?,
            entropy_box: EntropyBoxSpec {
                inflation: raw.f64("entropy_inflation", def.entropy_box.inflation)?,
                panel: raw.f64("entropy_panel", def.entropy_box.panel)?,
                order: raw.usize("entropy_order", def.entropy_box.order)?,
            },
            init,
        };
        cfg.model_params()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<RunConfig> {
        RunConfig::parse(&std::fs::read_to_string(path)?)
    }

    pub fn model_params(&self) -> Result<ModelParams> {
        ModelParams::new(self.epsilon, self.gamma, self.dim)
    }

    pub fn quadrature(&self) -> Result<QuadratureRule> {
        QuadratureRule::new(self.dim, self.quad_radius, self.quad_nodes)
    }

    pub fn step_config(&self) -> StepConfig {
        StepConfig {
            scheme: self.scheme,
            dt: if self.adaptive {
                DtPolicy::Adaptive { dt_max: self.dt_max }
            } else {
                DtPolicy::Fixed(self.dt)
            },
            theta: self.theta,
            t_end: self.t_end,
        }
    }

    pub fn integrate_options(&self) -> IntegrateOptions {
        IntegrateOptions {
            record_every: self.record_every,
            snapshot_every: self.snapshot_every,
            entropy_every: self.entropy_every,
            entropy_box: self.entropy_box,
        }
    }

    /// Canonical text used for the provenance hash embedded in reports.
    pub fn canonical_string(&self) -> String {
        format!("{self:?}")
    }

    /// FNV-1a hash of the canonical form, hex encoded.
    pub fn config_hash(&self) -> String {
        let mut h: u64 = 0xcbf29ce484222325;
        for b in self.canonical_string().bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        format!("{h:016x}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_documented_example() {
        let text = "\
# sample config
epsilon = 0.5
gamma = -1.0   # potential exponent
dim = 2
n_particles = 32
scheme = rk4
dt = 1e-3
t_end = 0.5
seed = 9
init_kind = maxwellian
init_u = 0.5, -0.25
init_temp = 0.8
";
        let cfg = RunConfig::parse(text).unwrap();
        assert_eq!(cfg.gamma, -1.0);
        assert_eq!(cfg.n_particles, 32);
        assert_eq!(
            cfg.init,
            InitialCondition::Maxwellian {
                u: vec![0.5, -0.25],
                temp: 0.8
            }
        );
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(matches!(
            RunConfig::parse("epsilonn = 0.5"),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn duplicate_key_rejected() {
        assert!(matches!(
            RunConfig::parse("dt = 1e-3\ndt = 1e-2"),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn invalid_params_rejected_at_parse() {
        assert!(RunConfig::parse("gamma = -3.0").is_err());
        assert!(RunConfig::parse("epsilon = 0").is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::parse("dt = 1e-3").unwrap();
        let b = RunConfig::parse("dt = 2e-3").unwrap();
        assert_ne!(a.config_hash(), b.config_hash());
        assert_eq!(a.config_hash(), RunConfig::parse("dt = 1e-3").unwrap().config_hash());
    }
}
