//! Experiment configuration: strict JSON schema and its conversion into
//! core types.

use std::fs;
use std::path::{Path, PathBuf};

use gammadyn_core::evolution::Stepper;
use gammadyn_core::kernel::{Kernel, KernelShape};
use gammadyn_core::presets::{preset, ModelSpec, PRESET_NAMES};
use gammadyn_core::rates::{BirthDeathModel, RateSpec};
use gammadyn_core::{GridGeometry, TruncatedGammaFunction};
use serde::{Deserialize, Serialize};

use crate::failure::Failure;
use crate::io::read_gamma;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Validate,
    Evolve,
    Chain,
    Stationary,
    Simulate,
    Ergodicity,
    Compare,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Evolve => "evolve",
            Command::Chain => "chain",
            Command::Stationary => "stationary",
            Command::Simulate => "simulate",
            Command::Ergodicity => "ergodicity",
            Command::Compare => "compare",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// If present, must match the subcommand.
    #[serde(default)]
    pub command: Option<Command>,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub model: Option<ModelConfig>,
    #[serde(default = "default_c")]
    pub c: f64,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    #[serde(default)]
    pub zeta_trunc: Option<usize>,
    #[serde(default)]
    pub initial: Option<InitialConfig>,
    #[serde(default)]
    pub evolution: Option<EvolutionSection>,
    #[serde(default)]
    pub stationary: Option<StationarySection>,
    #[serde(default)]
    pub sim: Option<SimSection>,
    #[serde(default)]
    pub ergodicity: Option<ErgodicitySection>,
    #[serde(default)]
    pub compare: Option<CompareSection>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_c() -> f64 {
    2.0
}

fn default_n_max() -> usize {
    3
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub dim: usize,
    pub cells_per_side: u32,
    pub side_length: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { dim: 1, cells_per_side: 32, side_length: 10.0 }
    }
}

/// A model: a bundled preset, an inline continuum model, explicit rate
/// families (grid hierarchy only), or a JSON file holding one of these.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    Preset(String),
    Surgailis {
        m: f64,
        z: f64,
    },
    Glauber {
        z: f64,
        #[serde(default = "one")]
        m: f64,
        #[serde(default)]
        s: f64,
        phi: KernelConfig,
    },
    Bdlp {
        m: f64,
        kappa_minus: f64,
        a_minus: KernelConfig,
        #[serde(default)]
        kappa: f64,
        kappa_plus: f64,
        a_plus: KernelConfig,
    },
    Contact {
        m: f64,
        kappa: f64,
        a: KernelConfig,
        phi: KernelConfig,
    },
    Rates {
        birth: RateConfig,
        death: RateConfig,
    },
    File(PathBuf),
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelConfig {
    Zero,
    Bump { height: f64, radius: f64 },
    Uniform { radius: f64 },
    /// `[[dx, dy], value]` entries in cell units.
    Table(Vec<([i64; 2], f64)>),
    /// CSV with header `offset,value` (d = 1) or `dx,dy,value`.
    TableFile(PathBuf),
}

/// Homogeneous rate families; scalar parameters apply to every cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum RateConfig {
    Constant { m: f64 },
    Linear { base: f64, scale: f64, kernel: KernelConfig },
    Exponential { prefactor: f64, kernel: KernelConfig, s: f64 },
    LinearTimesExponential { scale: f64, c1: KernelConfig, c2: KernelConfig },
    Mixed { scale: f64, c1: KernelConfig, c2: KernelConfig },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialConfig {
    /// `k(η) = z^{|η|}`.
    Poisson(f64),
    /// `s · 1*` (the vacuum).
    EmptyIndicator(f64),
    /// Gamma-function JSON file.
    File(PathBuf),
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepperConfig {
    #[default]
    Rk4,
    Euler,
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    /// Evolve correlation functions (`L̂*`, `P̂*δ`).
    #[default]
    Correlation,
    /// Evolve quasi-observables (`L̂`, `P̂δ`).
    Quasi,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolutionSection {
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub t_end: f64,
    #[serde(default)]
    pub stepper: StepperConfig,
    /// Chain step for the `chain` command.
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub snapshots: Vec<f64>,
    #[serde(default)]
    pub target: Target,
}

fn default_dt() -> f64 {
    1e-3
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationarySection {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn default_tol() -> f64 {
    1e-10
}

fn default_max_iter() -> usize {
    10_000
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SimInitial {
    Empty,
    Poisson(f64),
    Points(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub t_end: f64,
    pub replicas: usize,
    #[serde(default = "default_sim_initial")]
    pub initial: SimInitial,
    /// Observation times besides `t_end`.
    #[serde(default)]
    pub times: Vec<f64>,
    #[serde(default = "default_bins")]
    pub radial_bins: usize,
    #[serde(default = "default_r_max")]
    pub r_max: f64,
    #[serde(default)]
    pub thinning_envelope: Option<f64>,
    #[serde(default = "default_audit")]
    pub audit_every: usize,
}

fn default_sim_initial() -> SimInitial {
    SimInitial::Empty
}

fn default_bins() -> usize {
    10
}

fn default_r_max() -> f64 {
    2.0
}

fn default_audit() -> usize {
    1000
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErgodicitySection {
    pub delta: f64,
    pub t_max: f64,
    #[serde(default = "one_usize")]
    pub sample_every: usize,
    pub window: (f64, f64),
    pub nu: f64,
    #[serde(default)]
    pub gibbs_tol: Option<f64>,
}

fn one_usize() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSection {
    pub a: PathBuf,
    pub b: PathBuf,
    #[serde(default = "default_column")]
    pub column: String,
    pub threshold: f64,
}

fn default_column() -> String {
    "l1_mass".into()
}

/// A parsed configuration together with its source text and directory
/// (relative paths resolve against the latter).
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub text: String,
    pub base_dir: PathBuf,
}

fn config_err(msg: impl Into<String>) -> Failure {
    Failure::Config(msg.into())
}

pub fn load(path: &Path) -> Result<LoadedConfig, Failure> {
    let text = fs::read_to_string(path).map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
    let config: ExperimentConfig =
        serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let loaded = LoadedConfig { config, text, base_dir };
    loaded.check_ranges()?;
    Ok(loaded)
}

fn positive(v: f64, what: &str) -> Result<(), Failure> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(config_err(format!("{what} must be positive and finite, got {v}")))
    }
}

impl LoadedConfig {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    fn check_ranges(&self) -> Result<(), Failure> {
        let c = &self.config;
        if !matches!(c.grid.dim, 1 | 2) {
            return Err(config_err(format!("grid.dim must be 1 or 2, got {}", c.grid.dim)));
        }
        if c.grid.cells_per_side < 2 {
            return Err(config_err("grid.cells_per_side must be at least 2"));
        }
        positive(c.grid.side_length, "grid.side_length")?;
        positive(c.c, "c")?;
        if c.n_max > 12 {
            return Err(config_err(format!("n_max = {} is outside the supported range 0..=12", c.n_max)));
        }
        if let Some(e) = &c.evolution {
            positive(e.dt, "evolution.dt")?;
            if !(e.t_end >= 0.0 && e.t_end.is_finite()) {
                return Err(config_err("evolution.t_end must be nonnegative"));
            }
            if let Some(d) = e.delta {
                if !(d > 0.0 && d < 1.0) {
                    return Err(config_err(format!("evolution.delta must lie in (0, 1), got {d}")));
                }
            }
        }
        if let Some(s) = &c.sim {
            if s.replicas == 0 {
                return Err(config_err("sim.replicas must be at least 1"));
            }
            if s.audit_every == 0 {
                return Err(config_err("sim.audit_every must be positive"));
            }
        }
        if let Some(e) = &c.ergodicity {
            if !(e.delta > 0.0 && e.delta < 1.0) {
                return Err(config_err(format!("ergodicity.delta must lie in (0, 1), got {}", e.delta)));
            }
            if !(e.nu > 0.0 && e.nu < 1.0) {
                return Err(config_err(format!("ergodicity.nu must lie in (0, 1), got {}", e.nu)));
            }
        }
        if let Some(file) = self.referenced_model_file() {
            if !file.exists() {
                return Err(config_err(format!("model file {} does not exist", file.display())));
            }
        }
        Ok(())
    }

    fn referenced_model_file(&self) -> Option<PathBuf> {
        match &self.config.model {
            Some(ModelConfig::File(p)) => Some(self.resolve(p)),
            _ => None,
        }
    }

    pub fn grid(&self) -> Result<GridGeometry, Failure> {
        let g = &self.config.grid;
        GridGeometry::new(g.dim, g.cells_per_side, g.side_length).map_err(|e| config_err(e.to_string()))
    }

    /// The model, with file references followed.
    pub fn model_config(&self) -> Result<ModelConfig, Failure> {
        let mut m = self.config.model.clone().ok_or_else(|| config_err("the configuration has no model"))?;
        let mut base = self.base_dir.clone();
        for _ in 0..8 {
            match m {
                ModelConfig::File(p) => {
                    let path = if p.is_absolute() { p } else { base.join(p) };
                    let text = fs::read_to_string(&path)
                        .map_err(|e| config_err(format!("cannot read model file {}: {e}", path.display())))?;
                    m = serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
                    base = path.parent().map(Path::to_path_buf).unwrap_or_default();
                }
                other => return Ok(resolve_kernel_files(other, &base)?),
            }
        }
        Err(config_err("model file references nest too deeply"))
    }

    /// Continuum model (everything except explicit rate tables).
    pub fn model_spec(&self) -> Result<ModelSpec, Failure> {
        let spec = match self.model_config()? {
            ModelConfig::Preset(name) => preset(&name).ok_or_else(|| {
                config_err(format!("unknown preset {name:?}; known presets: {}", PRESET_NAMES.join(", ")))
            })?,
            ModelConfig::Surgailis { m, z } => ModelSpec::Surgailis { m, z },
            ModelConfig::Glauber { z, m, s, phi } => ModelSpec::Glauber { z, m, s, phi: phi.shape()? },
            ModelConfig::Bdlp { m, kappa_minus, a_minus, kappa, kappa_plus, a_plus } => ModelSpec::Bdlp {
                m,
                kappa_minus,
                a_minus: a_minus.shape()?,
                kappa,
                kappa_plus,
                a_plus: a_plus.shape()?,
            },
            ModelConfig::Contact { m, kappa, a, phi } => ModelSpec::Contact { m, kappa, a: a.shape()?, phi: phi.shape()? },
            ModelConfig::Rates { .. } => {
                return Err(config_err("explicit rate families have no continuum form; use a preset or model spec"))
            }
            ModelConfig::File(_) => unreachable!("file references are resolved"),
        };
        spec.validate().map_err(|e| config_err(e.to_string()))?;
        Ok(spec)
    }

    /// Grid model.
    pub fn model(&self, grid: &GridGeometry) -> Result<BirthDeathModel, Failure> {
        match self.model_config()? {
            ModelConfig::Rates { birth, death } => {
                let b = birth.to_spec(grid)?;
                let d = death.to_spec(grid)?;
                BirthDeathModel::new(grid, b, d, None).map_err(Failure::from_core)
            }
            _ => self.model_spec()?.to_model(grid).map_err(Failure::from_core),
        }
    }

    pub fn initial_gamma(&self, grid: &GridGeometry) -> Result<TruncatedGammaFunction, Failure> {
        let n_max = self.config.n_max;
        match &self.config.initial {
            None => Err(config_err("the configuration has no initial state")),
            Some(InitialConfig::Poisson(z)) => Ok(TruncatedGammaFunction::poisson(grid, n_max, *z)),
            Some(InitialConfig::EmptyIndicator(s)) => Ok(TruncatedGammaFunction::empty_indicator(n_max, *s)),
            Some(InitialConfig::File(p)) => {
                let g = read_gamma(&self.resolve(p), grid)?;
                if g.n_max() != n_max {
                    return Err(config_err(format!("initial state has n_max = {}, config has {n_max}", g.n_max())));
                }
                Ok(g)
            }
        }
    }

    pub fn stepper(&self) -> Stepper {
        match self.config.evolution.as_ref().map(|e| e.stepper).unwrap_or_default() {
            StepperConfig::Rk4 => Stepper::Rk4,
            StepperConfig::Euler => Stepper::Euler,
        }
    }
}

fn resolve_kernel_files(m: ModelConfig, base: &Path) -> Result<ModelConfig, Failure> {
    let k = |k: KernelConfig| k.load(base);
    let r = |r: RateConfig| -> Result<RateConfig, Failure> {
        Ok(match r {
            RateConfig::Constant { m } => RateConfig::Constant { m },
            RateConfig::Linear { base: b, scale, kernel } => RateConfig::Linear { base: b, scale, kernel: k(kernel)? },
            RateConfig::Exponential { prefactor, kernel, s } => {
                RateConfig::Exponential { prefactor, kernel: k(kernel)?, s }
            }
            RateConfig::LinearTimesExponential { scale, c1, c2 } => {
                RateConfig::LinearTimesExponential { scale, c1: k(c1)?, c2: k(c2)? }
            }
            RateConfig::Mixed { scale, c1, c2 } => RateConfig::Mixed { scale, c1: k(c1)?, c2: k(c2)? },
        })
    };
    Ok(match m {
        ModelConfig::Glauber { z, m, s, phi } => ModelConfig::Glauber { z, m, s, phi: k(phi)? },
        ModelConfig::Bdlp { m, kappa_minus, a_minus, kappa, kappa_plus, a_plus } => ModelConfig::Bdlp {
            m,
            kappa_minus,
            a_minus: k(a_minus)?,
            kappa,
            kappa_plus,
            a_plus: k(a_plus)?,
        },
        ModelConfig::Contact { m, kappa, a, phi } => ModelConfig::Contact { m, kappa, a: k(a)?, phi: k(phi)? },
        ModelConfig::Rates { birth, death } => ModelConfig::Rates { birth: r(birth)?, death: r(death)? },
        other => other,
    })
}

impl KernelConfig {
    /// Replaces a `table_file` reference by its table.
    fn load(self, base: &Path) -> Result<KernelConfig, Failure> {
        let KernelConfig::TableFile(p) = self else { return Ok(self) };
        let path = if p.is_absolute() { p } else { base.join(p) };
        let mut reader = csv::Reader::from_path(&path)
            .map_err(|e| config_err(format!("cannot read kernel table {}: {e}", path.display())))?;
        let headers = reader.headers().map_err(|e| config_err(e.to_string()))?.clone();
        let cols: Vec<&str> = headers.iter().map(str::trim).collect();
        let two_d = match cols.as_slice() {
            ["offset", "value"] => false,
            ["dx", "dy", "value"] => true,
            _ => return Err(config_err(format!("{}: header must be offset,value or dx,dy,value", path.display()))),
        };
        let mut entries = Vec::new();
        for (line, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| config_err(format!("{}: {e}", path.display())))?;
            let bad = || config_err(format!("{}: malformed row {}", path.display(), line + 2));
            let int = |i: usize| rec.get(i).and_then(|s| s.trim().parse::<i64>().ok()).ok_or_else(bad);
            let val = |i: usize| rec.get(i).and_then(|s| s.trim().parse::<f64>().ok()).ok_or_else(bad);
            entries.push(if two_d { ([int(0)?, int(1)?], val(2)?) } else { ([int(0)?, 0], val(1)?) });
        }
        Ok(KernelConfig::Table(entries))
    }

    fn shape(self) -> Result<KernelShape, Failure> {
        Ok(match self {
            KernelConfig::Zero => KernelShape::Zero,
            KernelConfig::Bump { height, radius } => KernelShape::Bump { height, radius },
            KernelConfig::Uniform { radius } => KernelShape::Uniform { radius },
            KernelConfig::Table(t) => KernelShape::Table(t),
            KernelConfig::TableFile(_) => unreachable!("kernel files are resolved"),
        })
    }

    fn kernel(self, grid: &GridGeometry) -> Result<Kernel, Failure> {
        Kernel::new(grid, self.shape()?).map_err(|e| config_err(e.to_string()))
    }
}

impl RateConfig {
    fn to_spec(self, grid: &GridGeometry) -> Result<RateSpec, Failure> {
        let n = grid.cell_count();
        Ok(match self {
            RateConfig::Constant { m } => RateSpec::Constant { m: vec![m; n] },
            RateConfig::Linear { base, scale, kernel } => {
                RateSpec::Linear { base: vec![base; n], scale: vec![scale; n], c: kernel.kernel(grid)? }
            }
            RateConfig::Exponential { prefactor, kernel, s } => {
                RateSpec::Exponential { prefactor: vec![prefactor; n], c: kernel.kernel(grid)?, s }
            }
            RateConfig::LinearTimesExponential { scale, c1, c2 } => {
                RateSpec::LinearTimesExponential { scale: vec![scale; n], c1: c1.kernel(grid)?, c2: c2.kernel(grid)? }
            }
            RateConfig::Mixed { scale, c1, c2 } => {
                RateSpec::Mixed { scale: vec![scale; n], c1: c1.kernel(grid)?, c2: c2.kernel(grid)? }
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<ExperimentConfig, serde_json::Error> {
        serde_json::from_str(s)
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(parse(r#"{"model": {"preset": "surgailis"}}"#).is_ok());
        assert!(parse(r#"{"model": {"preset": "surgailis"}, "nmax": 3}"#).is_err());
        assert!(parse(r#"{"grid": {"dim": 1, "cells_per_side": 8, "side_length": 4, "h": 1}}"#).is_err());
        assert!(parse(r#"{"model": {"surgailis": {"m": 1, "z": 0.5, "k": 0}}}"#).is_err());
    }

    #[test]
    fn model_forms() {
        let c = parse(
            r#"{"model": {"rates": {"birth": {"linear": {"base": 0.3, "scale": 0.06, "kernel": {"uniform": {"radius": 1}}}},
                                    "death": {"constant": {"m": 1}}}}}"#,
        )
        .unwrap();
        assert!(matches!(c.model, Some(ModelConfig::Rates { .. })));
        let c = parse(r#"{"model": {"glauber": {"z": 0.2, "phi": {"bump": {"height": 1, "radius": 0.5}}}}}"#).unwrap();
        assert!(matches!(c.model, Some(ModelConfig::Glauber { m, s, .. }) if m == 1.0 && s == 0.0));
        let c = parse(r#"{"model": {"glauber": {"z": 0.3, "phi": "zero"}}}"#).unwrap();
        assert!(matches!(c.model, Some(ModelConfig::Glauber { phi: KernelConfig::Zero, .. })));
    }
}
