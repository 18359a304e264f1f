//! Exact continuous-time simulation of the birth-and-death dynamics on the
//! continuum torus `[0,L)^d`, `d ∈ {1,2}`.
//!
//! Kernels are evaluated in continuum form (not on the grid), so the
//! simulator is an independent check of the hierarchy. Replica `r` draws
//! from ChaCha8 stream `r` of the configured seed.

pub mod cell_list;
pub mod estimate;

use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Poisson};

use crate::error::{Error, Result};
use crate::kernel::{ball_volume, KernelShape};
use crate::math::{exp, powi, sqrt};
use crate::presets::ModelSpec;
use cell_list::{torus_distance, CellList};

#[derive(Debug, Clone, PartialEq)]
pub struct PointConfiguration {
    pub dim: usize,
    pub side: f64,
    /// Second coordinate unused (0) when `dim = 1`.
    pub points: Vec<[f64; 2]>,
}

impl PointConfiguration {
    pub fn new(dim: usize, side: f64, points: Vec<[f64; 2]>) -> Result<Self> {
        check_box(dim, side)?;
        for p in &points {
            let used = &p[..dim];
            if used.iter().any(|&v| !(0.0..side).contains(&v)) {
                return Err(Error::Parameter(format!("point {p:?} outside [0, {side})^{dim}")));
            }
            if dim == 1 && p[1] != 0.0 {
                return Err(Error::Parameter(format!("point {p:?} has a second coordinate in d = 1")));
            }
        }
        for (i, a) in points.iter().enumerate() {
            if points[..i].contains(a) {
                return Err(Error::Parameter(format!("duplicate point {a:?}")));
            }
        }
        Ok(Self { dim, side, points })
    }

    pub fn empty(dim: usize, side: f64) -> Self {
        Self { dim, side, points: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn volume(&self) -> f64 {
        powi(self.side, self.dim as u32)
    }
}

fn check_box(dim: usize, side: f64) -> Result<()> {
    if !(dim == 1 || dim == 2) {
        return Err(Error::Parameter(format!("dimension must be 1 or 2, got {dim}")));
    }
    if !(side > 0.0 && side.is_finite()) {
        return Err(Error::Parameter(format!("side length must be positive, got {side}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    Empty,
    /// Poisson point process with the given intensity.
    Poisson(f64),
    Fixed(PointConfiguration),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub model: ModelSpec,
    pub dim: usize,
    pub side: f64,
    pub t_end: f64,
    pub replicas: usize,
    pub seed: u64,
    pub audit_every: usize,
    /// Proposal rate for thinned Glauber births; defaults to `z L^d`.
    pub thinning_envelope: Option<f64>,
}

impl SimConfig {
    pub fn new(model: ModelSpec, dim: usize, side: f64, t_end: f64, replicas: usize, seed: u64) -> Result<Self> {
        check_box(dim, side)?;
        model.validate()?;
        if replicas == 0 {
            return Err(Error::Parameter("at least one replica is required".into()));
        }
        if !(t_end >= 0.0 && t_end.is_finite()) {
            return Err(Error::Parameter(format!("t_end must be nonnegative, got {t_end}")));
        }
        let cfg = Self { model, dim, side, t_end, replicas, seed, audit_every: 1000, thinning_envelope: None };
        Laws::new(&cfg)?;
        Ok(cfg)
    }

    pub fn with_envelope(mut self, envelope: f64) -> Result<Self> {
        if let ModelSpec::Glauber { z, .. } = self.model {
            let need = z * powi(self.side, self.dim as u32);
            if envelope < need {
                return Err(Error::Parameter(format!("thinning envelope {envelope} below z L^d = {need}")));
            }
        }
        self.thinning_envelope = Some(envelope);
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ReplicaStats {
    pub events: u64,
    pub births: u64,
    pub deaths: u64,
    pub rejected: u64,
    pub audits: u64,
    /// Largest relative drift between incremental and recomputed rates.
    pub max_drift: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicaRun {
    pub replica: usize,
    pub times: Vec<f64>,
    pub snapshots: Vec<PointConfiguration>,
    pub stats: ReplicaStats,
}

impl ReplicaRun {
    pub fn final_state(&self) -> &PointConfiguration {
        self.snapshots.last().expect("at least one snapshot")
    }
}

/// Radially symmetric step kernel `height · 1_{r ≤ radius}`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Radial {
    height: f64,
    radius: f64,
}

impl Radial {
    fn new(shape: &KernelShape, dim: usize, side: f64) -> Result<Self> {
        let r = match shape {
            KernelShape::Zero => Radial { height: 0.0, radius: 0.0 },
            KernelShape::Bump { height, radius } => Radial { height: *height, radius: *radius },
            KernelShape::Uniform { radius } => Radial { height: 1.0 / ball_volume(*radius, dim), radius: *radius },
            KernelShape::Table(_) => {
                return Err(Error::Parameter("tabulated kernels have no continuum form for the simulator".into()))
            }
        };
        if r.radius >= side / 2.0 {
            return Err(Error::Parameter(format!("kernel radius {} must be below L/2", r.radius)));
        }
        Ok(r)
    }

    #[inline]
    fn at(&self, d: f64) -> f64 {
        if d <= self.radius {
            self.height
        } else {
            0.0
        }
    }

    fn mass(&self, dim: usize) -> f64 {
        self.height * ball_volume(self.radius, dim)
    }

    fn active(&self) -> bool {
        self.height != 0.0 && self.radius > 0.0
    }
}

#[derive(Debug, Clone, Copy)]
enum DeathLaw {
    Constant(f64),
    /// `m e^{s E}`.
    Exponential { m: f64, s: f64 },
    /// `m + κ⁻ E`.
    Linear { m: f64, kappa: f64 },
}

impl DeathLaw {
    #[inline]
    fn rate(self, energy: f64) -> f64 {
        match self {
            DeathLaw::Constant(m) => m,
            DeathLaw::Exponential { m, s } => m * exp(s * energy),
            DeathLaw::Linear { m, kappa } => m + kappa * energy,
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum BirthLaw {
    Uniform { z: f64 },
    /// Proposals at rate `envelope`, accepted with `(z vol/envelope) e^{coef·E^φ}`.
    Thinned { z: f64, coef: f64, phi: Radial, envelope: f64 },
    /// Spontaneous `κ` plus offspring of every particle at rate `κ⁺ ∫a⁺`.
    Dispersal { kappa: f64, kappa_plus: f64, a: Radial },
    /// Offspring at rate `κ ∫a`, accepted with `e^{Σφ}`.
    Contact { kappa: f64, a: Radial, phi: Radial },
}

#[derive(Debug, Clone, Copy)]
struct Laws {
    death: DeathLaw,
    death_kernel: Radial,
    birth: BirthLaw,
}

impl Laws {
    fn new(cfg: &SimConfig) -> Result<Self> {
        let (dim, side) = (cfg.dim, cfg.side);
        let none = Radial { height: 0.0, radius: 0.0 };
        let vol = powi(side, dim as u32);
        Ok(match &cfg.model {
            ModelSpec::Surgailis { m, z } => {
                Laws { death: DeathLaw::Constant(*m), death_kernel: none, birth: BirthLaw::Uniform { z: *z } }
            }
            ModelSpec::Glauber { z, m, s, phi } => {
                let phi = Radial::new(phi, dim, side)?;
                if phi.height < 0.0 {
                    return Err(Error::Parameter("the Glauber potential must be nonnegative".into()));
                }
                let envelope = cfg.thinning_envelope.unwrap_or(z * vol);
                Laws {
                    death: DeathLaw::Exponential { m: *m, s: *s },
                    death_kernel: phi,
                    birth: BirthLaw::Thinned { z: *z, coef: s - 1.0, phi, envelope },
                }
            }
            ModelSpec::Bdlp { m, kappa_minus, a_minus, kappa, kappa_plus, a_plus } => Laws {
                death: DeathLaw::Linear { m: *m, kappa: *kappa_minus },
                death_kernel: Radial::new(a_minus, dim, side)?,
                birth: BirthLaw::Dispersal { kappa: *kappa, kappa_plus: *kappa_plus, a: Radial::new(a_plus, dim, side)? },
            },
            ModelSpec::Contact { m, kappa, a, phi } => Laws {
                death: DeathLaw::Constant(*m),
                death_kernel: none,
                birth: BirthLaw::Contact {
                    kappa: *kappa,
                    a: Radial::new(a, dim, side)?,
                    phi: Radial::new(phi, dim, side)?,
                },
            },
        })
    }

    fn query_radius(&self) -> f64 {
        let b = match self.birth {
            BirthLaw::Thinned { phi, .. } | BirthLaw::Contact { phi, .. } => phi.radius,
            _ => 0.0,
        };
        b.max(self.death_kernel.radius)
    }
}

pub fn replica_rng(seed: u64, replica: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica as u64);
    rng
}

fn uniform_point(rng: &mut ChaCha8Rng, dim: usize, side: f64) -> [f64; 2] {
    let x = rng.random::<f64>() * side;
    let y = if dim == 2 { rng.random::<f64>() * side } else { 0.0 };
    [x, y]
}

fn wrap(v: f64, side: f64) -> f64 {
    let w = v - libm::floor(v / side) * side;
    if w >= side {
        0.0
    } else {
        w
    }
}

/// Uniform point in the ball of radius `r` around `p`, wrapped.
fn displaced(rng: &mut ChaCha8Rng, p: [f64; 2], r: f64, dim: usize, side: f64) -> [f64; 2] {
    if dim == 1 {
        [wrap(p[0] + (2.0 * rng.random::<f64>() - 1.0) * r, side), 0.0]
    } else {
        let rad = r * sqrt(rng.random::<f64>());
        let theta = core::f64::consts::TAU * rng.random::<f64>();
        [wrap(p[0] + rad * libm::cos(theta), side), wrap(p[1] + rad * libm::sin(theta), side)]
    }
}

pub fn sample_poisson(rng: &mut ChaCha8Rng, z: f64, dim: usize, side: f64) -> Result<PointConfiguration> {
    check_box(dim, side)?;
    let mean = z * powi(side, dim as u32);
    if !(mean >= 0.0 && mean.is_finite()) {
        return Err(Error::Parameter(format!("Poisson intensity must be nonnegative, got {z}")));
    }
    let n = if mean == 0.0 {
        0
    } else {
        let d = Poisson::new(mean).map_err(|e| Error::Parameter(format!("Poisson({mean}): {e:?}")))?;
        d.sample(rng) as usize
    };
    let points = (0..n).map(|_| uniform_point(rng, dim, side)).collect();
    Ok(PointConfiguration { dim, side, points })
}

struct Engine {
    dim: usize,
    side: f64,
    vol: f64,
    laws: Laws,
    points: Vec<[f64; 2]>,
    energy: Vec<f64>,
    rates: Vec<f64>,
    total_death: f64,
    cells: CellList,
}

impl Engine {
    fn new(cfg: &SimConfig, laws: Laws, initial: &PointConfiguration) -> Self {
        let mut e = Engine {
            dim: cfg.dim,
            side: cfg.side,
            vol: powi(cfg.side, cfg.dim as u32),
            laws,
            points: Vec::new(),
            energy: Vec::new(),
            rates: Vec::new(),
            total_death: 0.0,
            cells: CellList::new(cfg.dim, cfg.side, laws.query_radius()),
        };
        for &p in &initial.points {
            e.add(p);
        }
        e
    }

    fn dist(&self, a: [f64; 2], b: [f64; 2]) -> f64 {
        torus_distance(self.dim, self.side, a, b)
    }

    /// `Σ_{u∈γ, u≠skip} k(p − u)`.
    fn field(&self, k: Radial, p: [f64; 2], skip: Option<usize>) -> f64 {
        if !k.active() {
            return 0.0;
        }
        let mut s = 0.0;
        self.cells.for_each_near(p, |i| {
            if Some(i) != skip {
                s += k.at(self.dist(p, self.points[i]));
            }
        });
        s
    }

    fn set_energy(&mut self, i: usize, e: f64) {
        self.energy[i] = e;
        let r = self.laws.death.rate(e);
        self.total_death += r - self.rates[i];
        self.rates[i] = r;
    }

    fn add(&mut self, p: [f64; 2]) {
        let k = self.laws.death_kernel;
        let mut own = 0.0;
        if k.active() {
            let mut touched = Vec::new();
            self.cells.for_each_near(p, |i| {
                let v = k.at(self.dist(p, self.points[i]));
                if v != 0.0 {
                    touched.push((i, v));
                }
            });
            for (i, v) in touched {
                own += v;
                self.set_energy(i, self.energy[i] + v);
            }
        }
        let idx = self.points.len();
        let r = self.laws.death.rate(own);
        self.points.push(p);
        self.energy.push(own);
        self.rates.push(r);
        self.total_death += r;
        self.cells.insert(p, idx);
    }

    fn remove(&mut self, idx: usize) {
        let p = self.points[idx];
        let k = self.laws.death_kernel;
        if k.active() {
            let mut touched = Vec::new();
            self.cells.for_each_near(p, |i| {
                if i != idx {
                    let v = k.at(self.dist(p, self.points[i]));
                    if v != 0.0 {
                        touched.push((i, v));
                    }
                }
            });
            for (i, v) in touched {
                self.set_energy(i, self.energy[i] - v);
            }
        }
        self.total_death -= self.rates[idx];
        let last = self.points.len() - 1;
        self.cells.remove(p, idx);
        if idx != last {
            self.cells.relabel(self.points[last], last, idx);
        }
        self.points.swap_remove(idx);
        self.energy.swap_remove(idx);
        self.rates.swap_remove(idx);
    }

    fn birth_propensity(&self) -> f64 {
        let n = self.points.len() as f64;
        match self.laws.birth {
            BirthLaw::Uniform { z } => z * self.vol,
            BirthLaw::Thinned { envelope, .. } => envelope,
            BirthLaw::Dispersal { kappa, kappa_plus, a } => kappa * self.vol + kappa_plus * a.mass(self.dim) * n,
            BirthLaw::Contact { kappa, a, .. } => kappa * a.mass(self.dim) * n,
        }
    }

    /// Proposes a birth; returns the accepted location.
    fn propose_birth(&self, rng: &mut ChaCha8Rng, t: f64) -> Result<Option<[f64; 2]>> {
        let (dim, side) = (self.dim, self.side);
        match self.laws.birth {
            BirthLaw::Uniform { .. } => Ok(Some(uniform_point(rng, dim, side))),
            BirthLaw::Thinned { z, coef, phi, envelope } => {
                let x = uniform_point(rng, dim, side);
                let acc = z * self.vol / envelope * exp(coef * self.field(phi, x, None));
                accept(rng, acc, t).map(|ok| ok.then_some(x))
            }
            BirthLaw::Dispersal { kappa, a, .. } => {
                let spont = kappa * self.vol;
                let u = rng.random::<f64>() * self.birth_propensity();
                if u < spont || self.points.is_empty() {
                    return Ok(Some(uniform_point(rng, dim, side)));
                }
                let parent = self.points[rng.random_range(0..self.points.len())];
                Ok(Some(displaced(rng, parent, a.radius, dim, side)))
            }
            BirthLaw::Contact { a, phi, .. } => {
                let parent = self.points[rng.random_range(0..self.points.len())];
                let x = displaced(rng, parent, a.radius, dim, side);
                let acc = exp(self.field(phi, x, None));
                accept(rng, acc, t).map(|ok| ok.then_some(x))
            }
        }
    }

    fn pick_death(&self, rng: &mut ChaCha8Rng) -> usize {
        let mut u = rng.random::<f64>() * self.total_death;
        for (i, &r) in self.rates.iter().enumerate() {
            if u < r {
                return i;
            }
            u -= r;
        }
        self.rates.len() - 1
    }

    /// Recomputes every rate from scratch; returns the relative drift and
    /// resets the incremental state.
    fn audit(&mut self) -> f64 {
        let k = self.laws.death_kernel;
        let mut drift = 0.0f64;
        let mut total = 0.0;
        for i in 0..self.points.len() {
            let e = self.field(k, self.points[i], Some(i));
            let r = self.laws.death.rate(e);
            drift = drift.max((r - self.rates[i]).abs() / r.abs().max(1e-300));
            self.energy[i] = e;
            self.rates[i] = r;
            total += r;
        }
        if total > 0.0 {
            drift = drift.max((total - self.total_death).abs() / total);
        }
        self.total_death = total;
        drift
    }

    fn snapshot(&self) -> PointConfiguration {
        PointConfiguration { dim: self.dim, side: self.side, points: self.points.clone() }
    }
}

fn accept(rng: &mut ChaCha8Rng, acc: f64, t: f64) -> Result<bool> {
    if acc > 1.0 + 1e-12 || !acc.is_finite() {
        return Err(Error::EnvelopeViolated { acceptance: acc, t });
    }
    Ok(rng.random::<f64>() < acc)
}

/// One replica, recording the configuration at each of `times` (sorted,
/// within `[0, t_end]`).
pub fn simulate_replica(
    cfg: &SimConfig,
    initial: &InitialState,
    replica: usize,
    times: &[f64],
) -> Result<ReplicaRun> {
    let laws = Laws::new(cfg)?;
    let mut rng = replica_rng(cfg.seed, replica);
    let start = match initial {
        InitialState::Empty => PointConfiguration::empty(cfg.dim, cfg.side),
        InitialState::Poisson(z) => sample_poisson(&mut rng, *z, cfg.dim, cfg.side)?,
        InitialState::Fixed(p) => {
            if p.dim != cfg.dim || p.side != cfg.side {
                return Err(Error::Parameter("initial configuration lives in a different box".into()));
            }
            p.clone()
        }
    };
    let mut marks: Vec<f64> = times.to_vec();
    marks.sort_by(f64::total_cmp);
    if marks.iter().any(|&t| !(0.0..=cfg.t_end).contains(&t)) {
        return Err(Error::Parameter(format!("snapshot times must lie in [0, {}]", cfg.t_end)));
    }
    let mut eng = Engine::new(cfg, laws, &start);
    let mut stats = ReplicaStats::default();
    let mut snapshots = Vec::with_capacity(marks.len());
    let mut t = 0.0;
    let mut next_mark = 0;
    loop {
        let birth = eng.birth_propensity();
        let total = birth + eng.total_death.max(0.0);
        let t_next = if total > 0.0 {
            let w: f64 = Exp1.sample(&mut rng);
            t + w / total
        } else {
            f64::INFINITY
        };
        while next_mark < marks.len() && marks[next_mark] < t_next {
            snapshots.push(eng.snapshot());
            next_mark += 1;
        }
        if t_next > cfg.t_end {
            break;
        }
        t = t_next;
        if rng.random::<f64>() * total < birth {
            match eng.propose_birth(&mut rng, t)? {
                Some(x) => {
                    eng.add(x);
                    stats.births += 1;
                    stats.events += 1;
                }
                None => stats.rejected += 1,
            }
        } else if !eng.points.is_empty() {
            let i = eng.pick_death(&mut rng);
            eng.remove(i);
            stats.deaths += 1;
            stats.events += 1;
        }
        if cfg.audit_every > 0 && stats.events > 0 && stats.events % cfg.audit_every as u64 == 0 {
            let drift = eng.audit();
            stats.audits += 1;
            stats.max_drift = stats.max_drift.max(drift);
            if drift > 1e-9 {
                return Err(Error::RateDrift { drift });
            }
        }
    }
    Ok(ReplicaRun { replica, times: marks, snapshots, stats })
}

/// All replicas in order, each recorded at `times` (default: `t_end`).
pub fn simulate(cfg: &SimConfig, initial: &InitialState, times: Option<&[f64]>) -> Result<Vec<ReplicaRun>> {
    let end = [cfg.t_end];
    let times = times.unwrap_or(&end);
    (0..cfg.replicas).map(|r| simulate_replica(cfg, initial, r, times)).collect()
}
