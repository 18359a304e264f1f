//! Explicit time stepping of `dG/dt = L̂G` and `dk/dt = L̂*k`, plus the
//! closed-form solution of the constant-rate (Surgailis) hierarchy.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::gamma::{e_lambda, level_l1_masses, norm_kc, norm_lc, NormContext, TruncatedGammaFunction};
use crate::grid::{Cell, GridGeometry};
use crate::hierarchy::{apply_l_hat, apply_l_hat_star, OperatorContext};
use crate::math::{exp, expm1};
use crate::rates::death_energy;
use crate::subsets::{for_each_configuration, for_each_split};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Stepper {
    #[default]
    Rk4,
    Euler,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionConfig {
    pub c: f64,
    pub dt: f64,
    pub t_end: f64,
    pub stepper: Stepper,
    /// Snapshot times; `t_end` is always included.
    pub snapshot_times: Vec<f64>,
}

impl EvolutionConfig {
    pub fn new(c: f64, dt: f64, t_end: f64) -> Result<Self> {
        if !(c > 0.0) {
            return Err(Error::Parameter(format!("C must be positive, got {c}")));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Parameter(format!("dt must be positive, got {dt}")));
        }
        if !(t_end >= 0.0 && t_end.is_finite()) {
            return Err(Error::Parameter(format!("t_end must be nonnegative, got {t_end}")));
        }
        Ok(Self { c, dt, t_end, stepper: Stepper::Rk4, snapshot_times: Vec::new() })
    }

    pub fn with_stepper(mut self, s: Stepper) -> Self {
        self.stepper = s;
        self
    }

    pub fn with_snapshots(mut self, times: &[f64]) -> Self {
        self.snapshot_times = times.to_vec();
        self
    }

    fn steps(&self) -> usize {
        libm::round(self.t_end / self.dt) as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub value: TruncatedGammaFunction,
    /// `‖·‖_C` for quasi-observables, `‖·‖_{K_C}` for correlation functions.
    pub norm: f64,
    pub level_masses: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub snapshots: Vec<Snapshot>,
    pub steps: usize,
    pub warning: Option<String>,
}

impl Trajectory {
    pub fn last(&self) -> &Snapshot {
        self.snapshots.last().expect("trajectory has at least the initial snapshot")
    }
}

/// `max D(η)` over configurations up to `n_max` (the stiffest diagonal mode).
pub fn max_death_energy(ctx: &OperatorContext) -> f64 {
    let g = ctx.grid();
    let mut m = 0.0f64;
    for_each_configuration(g.cell_count(), ctx.n_max, |eta| m = m.max(death_energy(&ctx.model, eta)));
    m
}

/// Refuses steps with `dt · max D > 0.5`.
pub fn check_stability(ctx: &OperatorContext, dt: f64) -> Result<f64> {
    let d = max_death_energy(ctx);
    if dt * d > 0.5 {
        return Err(Error::Precondition {
            tag: "stability",
            detail: format!("dt · max D = {} > 0.5 (dt = {dt}, max D = {d})", dt * d),
        });
    }
    Ok(d)
}

fn integrate(
    ctx: &OperatorContext,
    x0: &TruncatedGammaFunction,
    cfg: &EvolutionConfig,
    op: impl Fn(&TruncatedGammaFunction) -> Result<TruncatedGammaFunction>,
    norm: impl Fn(&TruncatedGammaFunction) -> f64,
) -> Result<Trajectory> {
    check_stability(ctx, cfg.dt)?;
    let grid = ctx.grid().clone();
    let steps = cfg.steps();
    let mut marks: Vec<usize> = cfg.snapshot_times.iter().map(|t| libm::round(t / cfg.dt) as usize).collect();
    marks.push(steps);
    marks.sort_unstable();
    marks.dedup();
    let snap = |t: f64, v: &TruncatedGammaFunction| Snapshot {
        t,
        norm: norm(v),
        level_masses: level_l1_masses(v, &grid),
        value: v.clone(),
    };
    let mut snapshots = alloc::vec![snap(0.0, x0)];
    let mut x = x0.clone();
    let dt = cfg.dt;
    for step in 1..=steps {
        x = match cfg.stepper {
            Stepper::Euler => x.axpy(dt, &op(&x)?),
            Stepper::Rk4 => {
                let k1 = op(&x)?;
                let k2 = op(&x.axpy(0.5 * dt, &k1))?;
                let k3 = op(&x.axpy(0.5 * dt, &k2))?;
                let k4 = op(&x.axpy(dt, &k3))?;
                x.axpy(dt / 6.0, &k1).axpy(dt / 3.0, &k2).axpy(dt / 3.0, &k3).axpy(dt / 6.0, &k4)
            }
        };
        if !x.is_finite() {
            return Err(Error::NonFinite { step });
        }
        if marks.binary_search(&step).is_ok() && step != 0 {
            snapshots.push(snap(step as f64 * dt, &x));
        }
    }
    Ok(Trajectory { snapshots, steps, warning: None })
}

/// Solves `dG/dt = L̂G`; snapshot norms are `‖G_t‖_C`.
pub fn evolve_quasi(ctx: &OperatorContext, g0: &TruncatedGammaFunction, cfg: &EvolutionConfig) -> Result<Trajectory> {
    let nc = NormContext::new(cfg.c, ctx.grid().clone())?;
    integrate(ctx, g0, cfg, |g| apply_l_hat(ctx, g), |g| norm_lc(g, &nc))
}

/// Solves `dk/dt = L̂*k`; snapshot norms are `‖k_t‖_{K_C}`.
pub fn evolve_correlation(
    ctx: &OperatorContext,
    k0: &TruncatedGammaFunction,
    cfg: &EvolutionConfig,
) -> Result<Trajectory> {
    let nc = NormContext::new(cfg.c, ctx.grid().clone())?;
    integrate(ctx, k0, cfg, |k| apply_l_hat_star(ctx, k), |k| norm_kc(k, &nc))
}

/// Correlation function of the constant-rate dynamics at time `t`:
/// `k_t(η) = e_λ(e^{−tm}, η) Σ_{ξ⊆η} e_λ((z/m)(e^{tm} − 1), ξ) k₀(η∖ξ)`.
pub fn surgailis_solution(
    grid: &GridGeometry,
    m: &[f64],
    z: &[f64],
    k0: &TruncatedGammaFunction,
    t: f64,
) -> Result<TruncatedGammaFunction> {
    if m.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::Parameter("death rate m must be positive everywhere".into()));
    }
    let n = grid.cell_count();
    if m.len() != n || z.len() != n {
        return Err(Error::Parameter("rate tables must cover every cell".into()));
    }
    let decay: Vec<f64> = m.iter().map(|&mi| exp(-t * mi)).collect();
    let growth: Vec<f64> = m.iter().zip(z).map(|(&mi, &zi)| zi / mi * expm1(t * mi)).collect();
    Ok(TruncatedGammaFunction::from_fn(grid, k0.n_max(), |eta: &[Cell]| {
        let mut s = 0.0;
        for_each_split(eta, |xi, rest| s += e_lambda(&growth, xi) * k0.get(rest));
        e_lambda(&decay, eta) * s
    }))
}
