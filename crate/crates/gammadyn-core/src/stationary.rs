//! Stationary solutions of `L̂*k = 0` through the Kirkwood–Salzburg fixed
//! point `k̃ = Sk̃ + E`, `k = 1* + k̃`.

use alloc::format;
use alloc::vec::Vec;

use crate::bounds::{compute_bounds, BoundsReport};
use crate::error::{Error, Result};
use crate::gamma::{norm_kc, NormContext, TruncatedGammaFunction};
use crate::grid::GridGeometry;
use crate::hierarchy::{apply_l_hat_star, ks_operator, OperatorContext};
use crate::kernel::{beta_tau, Kernel};
use crate::math::{exp, pow};
use crate::rates::{BirthDeathModel, PresetKind, RateSpec};

#[derive(Debug, Clone)]
pub struct KSContext {
    pub ctx: OperatorContext,
    pub c: f64,
    /// `a₁ + a₂/C − 1`.
    pub norm_bound: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub bounds: BoundsReport,
}

impl KSContext {
    /// Refuses to build unless `a₁ + a₂/C < 2`.
    pub fn new(ctx: OperatorContext, c: f64) -> Result<Self> {
        let bounds = compute_bounds(&ctx.model, c, ctx.n_max)?;
        let norm_bound = bounds.ks_norm_bound();
        if !(norm_bound < 1.0) {
            return Err(Error::Precondition {
                tag: "statior-est",
                detail: format!("a1 + a2/C = {} is not below 2", bounds.theta()),
            });
        }
        Ok(Self { ctx, c, norm_bound, max_iter: 10_000, tol: 1e-10, bounds })
    }

    pub fn with_tolerance(mut self, tol: f64, max_iter: usize) -> Result<Self> {
        if !(tol > 0.0) {
            return Err(Error::Parameter(format!("tol must be positive, got {tol}")));
        }
        self.tol = tol;
        self.max_iter = max_iter;
        Ok(self)
    }

    fn norm(&self) -> Result<NormContext> {
        NormContext::new(self.c, self.ctx.grid().clone())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    /// `‖k̃ₙ − Sk̃ₙ − E‖_{K_C}`, i.e. the change made by step `n+1`.
    pub residual: f64,
    /// Ratio of successive changes (NaN on the first step).
    pub contraction_factor: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationarySolution {
    /// `1* + k̃`.
    pub k_inv: TruncatedGammaFunction,
    pub iterations: usize,
    pub residual: f64,
    pub history: Vec<IterationRecord>,
}

impl StationarySolution {
    pub fn max_contraction_factor(&self) -> f64 {
        self.history.iter().map(|r| r.contraction_factor).filter(|f| f.is_finite()).fold(0.0, f64::max)
    }
}

/// `(Sk)(η)`; `(Sk)(∅) = 0`.
pub fn ks_apply(ks: &KSContext, k: &TruncatedGammaFunction) -> Result<TruncatedGammaFunction> {
    ks_operator(&ks.ctx, k)
}

/// `E(η) = 1_{|η|=1} b(x,∅)/d(x,∅)`.
pub fn source_term(ctx: &OperatorContext) -> Result<TruncatedGammaFunction> {
    let mut e = TruncatedGammaFunction::zero(ctx.n_max);
    if ctx.n_max == 0 {
        return Ok(e);
    }
    for x in ctx.grid().cells() {
        let d = ctx.model.death.eval(x, &[]);
        if !(d > 0.0) {
            return Err(Error::ZeroDeathEnergy(alloc::vec![x]));
        }
        let b = ctx.model.birth.eval(x, &[]);
        if b != 0.0 {
            e.set(&[x], b / d);
        }
    }
    Ok(e)
}

pub fn solve_stationary(ks: &KSContext) -> Result<StationarySolution> {
    let nc = ks.norm()?;
    let e = source_term(&ks.ctx)?;
    let mut kt = TruncatedGammaFunction::zero(ks.ctx.n_max);
    let mut history = Vec::new();
    let mut prev_change = f64::NAN;
    for iter in 1..=ks.max_iter {
        let next = ks_apply(ks, &kt)?.axpy(1.0, &e);
        if !next.is_finite() {
            return Err(Error::NonFinite { step: iter });
        }
        let change = norm_kc(&next.sub(&kt), &nc);
        let factor = if prev_change > 0.0 { change / prev_change } else { f64::NAN };
        history.push(IterationRecord { iter, residual: change, contraction_factor: factor });
        prev_change = change;
        kt = next;
        if change <= ks.tol {
            // residual of the returned iterate
            let residual = norm_kc(&kt.sub(&ks_apply(ks, &kt)?).sub(&e), &nc);
            let mut k_inv = kt;
            k_inv.set(&[], 1.0);
            return Ok(StationarySolution { k_inv, iterations: iter, residual, history });
        }
    }
    Err(Error::NoConvergence { iterations: ks.max_iter, last_change: prev_change })
}

/// `‖L̂*k‖_{K_C}` — stationarity cross-check against the hierarchy.
pub fn stationarity_residual(ks: &KSContext, k: &TruncatedGammaFunction) -> Result<f64> {
    Ok(norm_kc(&apply_l_hat_star(&ks.ctx, k)?, &ks.norm()?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GibbsCorrelation {
    pub solution: StationarySolution,
    /// `max_η k(η)^{1/|η|}` over stored nonempty `η` with `k(η) > 0`.
    pub ruelle_constant: f64,
    /// `|k(η)| ≤ C^{|η|}` everywhere.
    pub ruelle_ok: bool,
}

/// The `s = 0` Glauber model: `d ≡ 1`, `b(x,η) = z e^{−E^φ(x,η)}`.
pub fn glauber_model(grid: &GridGeometry, z: f64, phi: &Kernel) -> Result<BirthDeathModel> {
    let n = grid.cell_count();
    BirthDeathModel::new(
        grid,
        RateSpec::Exponential { prefactor: alloc::vec![z; n], c: phi.clone(), s: -1.0 },
        RateSpec::Exponential { prefactor: alloc::vec![1.0; n], c: phi.clone(), s: 0.0 },
        Some(PresetKind::Glauber),
    )
}

/// Correlation function of the Gibbs state with activity `z` and potential
/// `φ`, requires `(z/C) e^{Cβ₋₁} < 1`.
pub fn gibbs_correlation(
    z: f64,
    phi: &Kernel,
    c: f64,
    grid: &GridGeometry,
    n_max: usize,
    tol: Option<f64>,
) -> Result<GibbsCorrelation> {
    let q = z / c * exp(c * beta_tau(phi, -1.0, grid));
    if !(q < 1.0) {
        return Err(Error::Precondition { tag: "gibbs", detail: format!("(z/C) e^(C beta_-1) = {q} ≥ 1") });
    }
    let ctx = OperatorContext::new(glauber_model(grid, z, phi)?, n_max)?;
    let mut ks = KSContext::new(ctx, c)?;
    if let Some(t) = tol {
        let max_iter = ks.max_iter;
        ks = ks.with_tolerance(t, max_iter)?;
    }
    let solution = solve_stationary(&ks)?;
    let mut ruelle_constant = 0.0f64;
    let mut ruelle_ok = true;
    for (eta, v) in solution.k_inv.iter() {
        if eta.is_empty() {
            continue;
        }
        let n = eta.len() as f64;
        if v > 0.0 {
            ruelle_constant = ruelle_constant.max(pow(v, 1.0 / n));
        }
        if v.abs() > pow(c, n) {
            ruelle_ok = false;
        }
    }
    Ok(GibbsCorrelation { solution, ruelle_constant, ruelle_ok })
}
