//! Hypothesis checks for the semigroup, invariance and stationarity results:
//! the constants `a₁`, `a₂`, `(A, N, ν)`, the α interval, and the Glauber
//! smallness conditions.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grid::{Cell, GridGeometry};
use crate::kernel::{beta_tau, Kernel};
use crate::math::exp;
use crate::rates::{death_energy, BirthDeathModel, PresetKind, Rate, RateSpec};
use crate::subsets::{for_each_configuration, remove_into};

#[derive(Debug, Clone, PartialEq)]
pub struct GlauberReport {
    /// `C_φ = β₋₁`.
    pub c_phi: f64,
    pub z: f64,
    /// `z e^{C C_φ} ≤ C`.
    pub smallparam_ok: bool,
    /// `z ≤ min{C e^{−CC_φ}, 2C e^{−2CC_φ}}`.
    pub verysmallparam_ok: bool,
    /// `z < C e^{−CC_φ}` whenever `CC_φ ≤ ln 2`.
    pub new_z_ok: bool,
    /// Smallest ν compatible with the first half of the restricted
    /// contraction condition: `z e^{CC_φ} / C`.
    pub nu_param: f64,
    /// `nu_param < 1` and `z ≤ 2C e^{−2CC_φ}`.
    pub nu_verysmall_ok: bool,
    /// `z C_φ < (2e)⁻¹` (existence of the Gibbs state).
    pub gibbs_ok: bool,
    pub alpha0: Option<f64>,
}

impl GlauberReport {
    /// Restricted contraction condition for a given `ν ∈ (0,1)`.
    pub fn nu_condition(&self, nu: f64, c: f64) -> bool {
        let cc = c * self.c_phi;
        nu > 0.0 && nu < 1.0 && self.z <= nu * c * exp(-cc) && self.z <= 2.0 * c * exp(-2.0 * cc)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundsReport {
    pub c: f64,
    pub a1: f64,
    pub a2: f64,
    /// Numerically evaluated `sup I_d/D`, `sup I_b/D` over `1 ≤ |ξ| ≤ n_max`
    /// (lower estimates of the true suprema).
    pub numeric_a1: f64,
    pub numeric_a2: f64,
    pub numeric_n_max: usize,
    /// Whether the closed-form branch of a preset was used.
    pub closed_form: bool,
    /// The preset's own sufficient conditions (None if not a preset).
    pub preset_conditions_ok: Option<bool>,
    pub asmall_ok: bool,
    pub stationary_ok: bool,
    pub a_const: f64,
    pub n_poly: u32,
    pub nu: f64,
    pub nusmall_ok: bool,
    pub alpha_lo: f64,
    pub alpha_hi: f64,
    pub glauber: Option<GlauberReport>,
}

/// One row of the flag table printed by the CLI.
#[derive(Debug, Clone, PartialEq)]
pub struct Flag {
    pub tag: &'static str,
    pub ok: bool,
    pub detail: String,
}

impl BoundsReport {
    /// `a₁ + a₂/C`.
    pub fn theta(&self) -> f64 {
        self.a1 + self.a2 / self.c
    }

    /// Norm bound of the Kirkwood–Salzburg operator, `a₁ + a₂/C − 1`.
    pub fn ks_norm_bound(&self) -> f64 {
        self.theta() - 1.0
    }

    pub fn flags(&self) -> Vec<Flag> {
        let t = self.theta();
        let mut out = alloc::vec![
            Flag {
                tag: "asmall",
                ok: self.asmall_ok,
                detail: format!("a1+a2/C = {t:.6} {} 1.5", if self.asmall_ok { "<" } else { "≥" }),
            },
            Flag {
                tag: "statior-est",
                ok: self.stationary_ok,
                detail: format!("a1+a2/C = {t:.6} {} 2", if self.stationary_ok { "<" } else { "≥" }),
            },
            Flag {
                tag: "nusmall",
                ok: self.nusmall_ok,
                detail: format!(
                    "nu = {:.6}, (C/a2)(3/2-a1) = {:.6}",
                    self.nu,
                    if self.a1 < 1.5 { self.c / self.a2 * (1.5 - self.a1) } else { 0.0 }
                ),
            },
        ];
        if let Some(ok) = self.preset_conditions_ok {
            out.push(Flag { tag: "preset-conditions", ok, detail: String::from("preset closed-form hypotheses") });
        }
        if let Some(g) = &self.glauber {
            let cc = self.c * g.c_phi;
            out.push(Flag {
                tag: "smallparam",
                ok: g.smallparam_ok,
                detail: format!("z e^(C C_phi) = {:.6} vs C = {}", g.z * exp(cc), self.c),
            });
            out.push(Flag {
                tag: "verysmallparam",
                ok: g.verysmallparam_ok,
                detail: format!(
                    "z = {} vs min(C e^(-C C_phi), 2C e^(-2C C_phi)) = {:.6}",
                    g.z,
                    (self.c * exp(-cc)).min(2.0 * self.c * exp(-2.0 * cc))
                ),
            });
            out.push(Flag { tag: "new_z", ok: g.new_z_ok, detail: format!("C C_phi = {cc:.6}") });
            out.push(Flag {
                tag: "nu-verysmallparam",
                ok: g.nu_verysmall_ok,
                detail: format!("smallest admissible nu = {:.6}", g.nu_param),
            });
            out.push(Flag {
                tag: "LAHT",
                ok: g.gibbs_ok,
                detail: format!("z C_phi = {:.6} vs 1/(2e) = {:.6}", g.z * g.c_phi, 0.5 * exp(-1.0)),
            });
        }
        out
    }
}

fn max_of(f: &[f64]) -> f64 {
    f.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn min_of(f: &[f64]) -> f64 {
    f.iter().copied().fold(f64::INFINITY, f64::min)
}

fn max_ratio(num: &[f64], den: &[f64]) -> f64 {
    num.iter().zip(den).map(|(a, b)| a / b).fold(f64::NEG_INFINITY, f64::max)
}

fn is_uniform(f: &[f64]) -> bool {
    f.windows(2).all(|w| w[0] == w[1])
}

fn rate_is_homogeneous(r: &Rate) -> bool {
    match r.spec() {
        RateSpec::Constant { m } => is_uniform(m),
        RateSpec::Linear { base, scale, .. } => is_uniform(base) && is_uniform(scale),
        RateSpec::Exponential { prefactor, .. } => is_uniform(prefactor),
        RateSpec::LinearTimesExponential { scale, .. } | RateSpec::Mixed { scale, .. } => is_uniform(scale),
    }
}

/// `I_a(ξ) = Σ_{x∈ξ} ∫ |K⁻¹a(x, ·∪ξ∖x)|(η) C^{|η|} dλ(η)`.
pub fn i_integral(rate: &Rate, xi: &[Cell], c: f64) -> f64 {
    let mut rest = Vec::with_capacity(xi.len());
    xi.iter()
        .map(|&x| {
            remove_into(xi, x, &mut rest);
            rate.abs_k_inverse_mass(x, &rest, c)
        })
        .sum()
}

/// `(sup I_d/D, sup I_b/D)` over `1 ≤ |ξ| ≤ n_max`. A zero death energy
/// with a nonzero integral gives `+∞`.
pub fn numeric_constants(model: &BirthDeathModel, c: f64, n_max: usize) -> (f64, f64) {
    let g = model.grid();
    let homogeneous = rate_is_homogeneous(&model.birth) && rate_is_homogeneous(&model.death);
    let mut a1 = 0.0f64;
    let mut a2 = 0.0f64;
    let n_max = n_max.min(g.cell_count());
    for_each_configuration(g.cell_count(), n_max, |xi| {
        if xi.is_empty() || (homogeneous && xi[0] != 0) {
            return;
        }
        let d = death_energy(model, xi);
        let id = i_integral(&model.death, xi, c);
        let ib = i_integral(&model.birth, xi, c);
        let ratio = |i: f64| if d > 0.0 { i / d } else if i > 0.0 { f64::INFINITY } else { 0.0 };
        a1 = a1.max(ratio(id));
        a2 = a2.max(ratio(ib));
    });
    (a1, a2)
}

struct ClosedForm {
    a1: f64,
    a2: f64,
    conditions_ok: bool,
    nu: Option<f64>,
}

fn glauber_parts(model: &BirthDeathModel) -> Option<(&[f64], &[f64], &Kernel, f64)> {
    match (model.death.spec(), model.birth.spec()) {
        (RateSpec::Exponential { prefactor: m, c: phi, s }, RateSpec::Exponential { prefactor: z, .. }) => {
            Some((m.as_slice(), z.as_slice(), phi, *s))
        }
        _ => None,
    }
}

fn closed_form(model: &BirthDeathModel, c: f64, grid: &GridGeometry) -> Option<ClosedForm> {
    match model.preset? {
        PresetKind::Surgailis => match (model.death.spec(), model.birth.spec()) {
            (RateSpec::Constant { m }, RateSpec::Constant { m: z }) => {
                let a = max_ratio(z, m);
                Some(ClosedForm { a1: 1.0, a2: a, conditions_ok: min_of(m) > 0.0 && a < c / 2.0, nu: Some(1.0) })
            }
            _ => None,
        },
        PresetKind::Glauber => {
            let (m, z, phi, s) = glauber_parts(model)?;
            let sigma = max_ratio(z, m);
            let a1 = exp(c * beta_tau(phi, s, grid));
            let a2 = sigma * exp(c * beta_tau(phi, s - 1.0, grid));
            let nu = if s > 0.0 { exp(s * phi.max_value()) } else { 1.0 };
            let ok = phi.is_nonnegative() && (0.0..=1.0).contains(&s) && min_of(m) > 0.0;
            Some(ClosedForm { a1, a2, conditions_ok: ok, nu: Some(nu) })
        }
        PresetKind::Bdlp => {
            let (m, km, am, kp, ap) = bdlp_parts(model, false)?;
            let n = m.len();
            let delta = (0..n)
                .map(|i| {
                    let d1 = if km[i] > 0.0 { m[i] / (c * km[i]) } else { f64::INFINITY };
                    let d3 = if kp[i] > 0.0 { m[i] / kp[i] } else { f64::INFINITY };
                    d1.min(d3) - 4.0
                })
                .fold(f64::INFINITY, f64::min);
            let pointwise = kernel_domination(kp, ap, km, am, 4.0, c);
            let ok = delta > 0.0 && pointwise;
            let a1 = if delta.is_finite() { 1.0 + 1.0 / (4.0 + delta) } else { 1.0 };
            Some(ClosedForm { a1, a2: c / 4.0, conditions_ok: ok, nu: Some(1.0) })
        }
        PresetKind::BdlpModified => {
            let (m, km, am, kp, ap) = bdlp_parts(model, true)?;
            let kappa = match model.birth.spec() {
                RateSpec::Linear { base, .. } => base.as_slice(),
                _ => return None,
            };
            let n = m.len();
            let first = (0..n).all(|i| 2.0 * (km[i] * c).max(2.0 * kappa[i] / c) < m[i]);
            let pointwise = kernel_domination(kp, ap, km, am, 2.0, c);
            let a1 = 1.0 + max_ratio(&km.iter().map(|k| c * k).collect::<Vec<_>>(), m);
            Some(ClosedForm { a1, a2: c / 2.0, conditions_ok: first && pointwise, nu: Some(1.0) })
        }
        PresetKind::Contact => None,
    }
}

type BdlpParts<'a> = (&'a [f64], &'a [f64], &'a Kernel, &'a [f64], &'a Kernel);

fn bdlp_parts(model: &BirthDeathModel, modified: bool) -> Option<BdlpParts<'_>> {
    match (model.death.spec(), model.birth.spec()) {
        (
            RateSpec::Linear { base: m, scale: km, c: am },
            RateSpec::Linear { base: kappa, scale: kp, c: ap },
        ) => {
            if !modified && kappa.iter().any(|&k| k != 0.0) {
                return None;
            }
            Some((m.as_slice(), km.as_slice(), am, kp.as_slice(), ap))
        }
        _ => None,
    }
}

/// `factor · κ⁺(x) a⁺(o) ≤ C κ⁻(x) a⁻(o)` for every cell and offset.
fn kernel_domination(kp: &[f64], ap: &Kernel, km: &[f64], am: &Kernel, factor: f64, c: f64) -> bool {
    let tol = 1e-12;
    kp.iter().zip(km).all(|(&p, &q)| {
        ap.values()
            .iter()
            .zip(am.values())
            .all(|(&vp, &vm)| factor * p * vp <= c * q * vm + tol * (c * q * vm).abs().max(1.0))
    })
}

/// Fills the report. Preset closed forms take precedence; the numeric
/// suprema over `|ξ| ≤ n_max` are always reported alongside.
pub fn compute_bounds(model: &BirthDeathModel, c: f64, n_max: usize) -> Result<BoundsReport> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::Parameter(format!("C must be positive, got {c}")));
    }
    let grid = model.grid().clone();
    let (numeric_a1, numeric_a2) = numeric_constants(model, c, n_max);
    let cf = closed_form(model, c, &grid);
    let (a1, a2, closed, preset_ok, nu_override) = match &cf {
        Some(f) if f.conditions_ok => (f.a1, f.a2, true, Some(true), f.nu),
        Some(f) => (numeric_a1, numeric_a2, false, Some(false), f.nu),
        None => (numeric_a1, numeric_a2, false, None, None),
    };
    let a1 = a1.max(1.0);
    let (a_const, n_poly, nu_family) = model.death.polynomial_exponential_bound();
    let nu = nu_override.unwrap_or(nu_family).max(1.0);
    let theta = a1 + a2 / c;
    let asmall_ok = theta < 1.5;
    let stationary_ok = theta < 2.0;
    let alpha_lo = if a1 < 1.5 { a2 / (c * (1.5 - a1)) } else { f64::INFINITY };
    let alpha_hi = 1.0 / nu;
    let nusmall_ok = a1 < 1.5 && nu >= 1.0 && nu < c / a2 * (1.5 - a1);
    let glauber = if model.preset == Some(PresetKind::Glauber) {
        glauber_parts(model).map(|(_, z, phi, _)| glauber_report(max_of(z), phi, c, &grid))
    } else {
        None
    };
    Ok(BoundsReport {
        c,
        a1,
        a2,
        numeric_a1,
        numeric_a2,
        numeric_n_max: n_max,
        closed_form: closed,
        preset_conditions_ok: preset_ok,
        asmall_ok,
        stationary_ok,
        a_const,
        n_poly,
        nu,
        nusmall_ok,
        alpha_lo,
        alpha_hi,
        glauber,
    })
}

/// The approximation-scheme conditions for the `s = 0` Glauber dynamics
/// with activity `z` and potential `φ ≥ 0`.
pub fn glauber_report(z: f64, phi: &Kernel, c: f64, grid: &GridGeometry) -> GlauberReport {
    let c_phi = beta_tau(phi, -1.0, grid);
    let cc = c * c_phi;
    let smallparam_ok = z * exp(cc) <= c;
    let verysmallparam_ok = z <= (c * exp(-cc)).min(2.0 * c * exp(-2.0 * cc));
    let new_z_ok = cc > core::f64::consts::LN_2 || z < c * exp(-cc);
    let nu_param = z * exp(cc) / c;
    let nu_verysmall_ok = nu_param < 1.0 && z <= 2.0 * c * exp(-2.0 * cc);
    let gibbs_ok = z * c_phi < 0.5 * exp(-1.0);
    let alpha0 =
        if verysmallparam_ok && new_z_ok { glauber_alpha0(z, c, c_phi).ok() } else { None };
    GlauberReport { c_phi, z, smallparam_ok, verysmallparam_ok, new_z_ok, nu_param, nu_verysmall_ok, gibbs_ok, alpha0 }
}

/// Smaller root of `x e^{−x} = t` on `[0, 1)`, `0 ≤ t < e⁻¹`.
pub fn lower_root(t: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > 1e-15 {
        let mid = 0.5 * (lo + hi);
        if mid * exp(-mid) < t {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Threshold `α₀ < 1` above which `K_{αC}` is invariant for the dual
/// Glauber semigroup.
pub fn glauber_alpha0(z: f64, c: f64, c_phi: f64) -> Result<f64> {
    let t = z * c_phi;
    if !(t < exp(-1.0)) {
        return Err(Error::Precondition { tag: "less_e-1", detail: format!("z C_phi = {t} ≥ 1/e") });
    }
    let cc = c * c_phi;
    let x1 = lower_root(t);
    let alpha0 = if cc > 1.0 {
        0.5f64.max(1.0 / cc).max(1.0 / c)
    } else if c_phi == 0.0 {
        0.5f64.max(1.0 / c)
    } else if x1 < cc {
        0.5f64.max(x1 / cc).max(1.0 / c)
    } else {
        return Err(Error::Precondition {
            tag: "new_z",
            detail: format!("lower root {x1} is not below C C_phi = {cc}"),
        });
    };
    if alpha0 >= 1.0 {
        return Err(Error::Precondition { tag: "alpha0", detail: format!("alpha0 = {alpha0} ≥ 1 (need C > 1)") });
    }
    Ok(alpha0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelShape;

    fn grid() -> GridGeometry {
        GridGeometry::new(1, 32, 10.0).unwrap()
    }

    #[test]
    fn surgailis_constants() {
        let g = grid();
        let n = g.cell_count();
        let model = BirthDeathModel::new(
            &g,
            RateSpec::Constant { m: alloc::vec![0.5; n] },
            RateSpec::Constant { m: alloc::vec![1.0; n] },
            Some(PresetKind::Surgailis),
        )
        .unwrap();
        let r = compute_bounds(&model, 2.0, 3).unwrap();
        assert_eq!(r.a1, 1.0);
        assert_eq!(r.a2, 0.5);
        assert!(r.asmall_ok && r.stationary_ok && r.nusmall_ok);
        assert!((r.numeric_a1 - 1.0).abs() < 1e-12 && (r.numeric_a2 - 0.5).abs() < 1e-12);
        assert!((r.alpha_lo - 0.5).abs() < 1e-12 && r.alpha_hi == 1.0);
    }

    #[test]
    fn free_glauber_reduces_to_sigma() {
        let g = grid();
        let n = g.cell_count();
        let phi = Kernel::zero(&g);
        let model = BirthDeathModel::new(
            &g,
            RateSpec::Exponential { prefactor: alloc::vec![0.3; n], c: phi.clone(), s: -1.0 },
            RateSpec::Exponential { prefactor: alloc::vec![1.0; n], c: phi, s: 0.0 },
            Some(PresetKind::Glauber),
        )
        .unwrap();
        let r = compute_bounds(&model, 2.0, 2).unwrap();
        assert_eq!(r.a1, 1.0);
        assert!((r.a2 - 0.3).abs() < 1e-15);
        assert!(r.asmall_ok);
        let gl = r.glauber.unwrap();
        assert_eq!(gl.c_phi, 0.0);
        assert!(gl.smallparam_ok && gl.verysmallparam_ok && gl.new_z_ok);
        assert_eq!(gl.alpha0, Some(0.5));
    }

    #[test]
    fn glauber_numeric_is_below_closed_form() {
        let g = grid();
        let n = g.cell_count();
        let phi = Kernel::new(&g, KernelShape::Bump { height: 1.0, radius: 0.5 }).unwrap();
        for s in [0.0, 0.5] {
            let model = BirthDeathModel::new(
                &g,
                RateSpec::Exponential { prefactor: alloc::vec![0.2; n], c: phi.clone(), s: s - 1.0 },
                RateSpec::Exponential { prefactor: alloc::vec![1.0; n], c: phi.clone(), s },
                Some(PresetKind::Glauber),
            )
            .unwrap();
            let r = compute_bounds(&model, 2.0, 3).unwrap();
            assert!(r.numeric_a1 <= r.a1 * (1.0 + 1e-12), "s={s}: {} > {}", r.numeric_a1, r.a1);
            assert!(r.numeric_a1 >= 1.0);
        }
    }

    #[test]
    fn alpha0_root_and_branches() {
        let x1 = lower_root(0.05);
        assert!((x1 * (-x1).exp() - 0.05).abs() < 1e-12);
        let a = glauber_alpha0(0.05, 2.0, 1.0).unwrap();
        assert_eq!(a, 0.5);
        assert!(glauber_alpha0(0.4, 2.0, 1.0).is_err());
        let eps = 1e-9;
        assert!(lower_root((-1.0f64).exp() - eps) > 0.99);
        let small = glauber_alpha0(1e-6, 4.0, 0.2).unwrap();
        assert_eq!(small, 0.5);
        // C C_φ > 1 branch
        assert_eq!(glauber_alpha0(1e-3, 2.0, 0.8).unwrap(), 1.0 / 1.6);
    }

    #[test]
    fn strict_inequality_tie_is_false() {
        let g = grid();
        let n = g.cell_count();
        let model = BirthDeathModel::new(
            &g,
            RateSpec::Constant { m: alloc::vec![1.0; n] },
            RateSpec::Constant { m: alloc::vec![1.0; n] },
            Some(PresetKind::Surgailis),
        )
        .unwrap();
        let r = compute_bounds(&model, 2.0, 2).unwrap();
        assert_eq!(r.theta(), 1.5);
        assert!(!r.asmall_ok);
    }
}
