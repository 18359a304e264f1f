//! Rate families `a(x, γ)` with closed-form `(K⁻¹ a(x, ·∪ξ))(η)`.
//!
//! Per-cell prefactors are tables over grid cells; kernels are tabulated on
//! offsets. All evaluators assume `x ∉ ξ ∪ η` and `ξ ∩ η = ∅`; the checked
//! entry points reject overlaps.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grid::{Cell, GridGeometry};
use crate::kernel::Kernel;
use crate::math::{abs, exp};
use crate::subsets::{contains, for_each_split, is_disjoint};

#[derive(Debug, Clone, PartialEq)]
pub enum RateSpec {
    /// `m(x)`.
    Constant { m: Vec<f64> },
    /// `base(x) + scale(x) Σ_{y∈γ} c(x−y)`.
    Linear { base: Vec<f64>, scale: Vec<f64>, c: Kernel },
    /// `prefactor(x) exp{s Σ_{y∈γ} c(x−y)}`.
    Exponential { prefactor: Vec<f64>, c: Kernel, s: f64 },
    /// `scale(x) Σ_{y∈γ} c₁(x−y) · exp{Σ_{y∈γ} c₂(x−y)}`.
    LinearTimesExponential { scale: Vec<f64>, c1: Kernel, c2: Kernel },
    /// `scale(x) Σ_{y∈γ} c₁(x−y) exp{Σ_{y'∈γ∖y} c₂(y−y')}`.
    Mixed { scale: Vec<f64>, c1: Kernel, c2: Kernel },
}

impl RateSpec {
    pub fn family(&self) -> &'static str {
        match self {
            RateSpec::Constant { .. } => "constant",
            RateSpec::Linear { .. } => "linear",
            RateSpec::Exponential { .. } => "exponential",
            RateSpec::LinearTimesExponential { .. } => "linear_times_exponential",
            RateSpec::Mixed { .. } => "mixed",
        }
    }

    fn fields(&self) -> Vec<&[f64]> {
        match self {
            RateSpec::Constant { m } => alloc::vec![m.as_slice()],
            RateSpec::Linear { base, scale, .. } => alloc::vec![base.as_slice(), scale.as_slice()],
            RateSpec::Exponential { prefactor, .. } => alloc::vec![prefactor.as_slice()],
            RateSpec::LinearTimesExponential { scale, .. } | RateSpec::Mixed { scale, .. } => {
                alloc::vec![scale.as_slice()]
            }
        }
    }
}

/// A rate specification prepared for a grid: exponent tables and the reach
/// (offsets `o` such that `K⁻¹a(x, ·∪ξ)(η)` can be nonzero only when every
/// `y ∈ η` is `x + o` for some reach offset).
#[derive(Debug, Clone, PartialEq)]
pub struct Rate {
    spec: RateSpec,
    grid: GridGeometry,
    /// `e^{s c} − 1` (Exponential) or `e^{c₂} − 1` (LinearTimesExponential, Mixed).
    expm1: Vec<f64>,
    reach: Vec<usize>,
    in_reach: Vec<bool>,
    max_order: usize,
}

impl Rate {
    pub fn new(spec: RateSpec, grid: &GridGeometry) -> Result<Self> {
        let n = grid.cell_count();
        for f in spec.fields() {
            if f.len() != n {
                return Err(Error::Parameter(format!(
                    "{} rate: per-cell table has {} entries, grid has {n} cells",
                    spec.family(),
                    f.len()
                )));
            }
            if f.iter().any(|v| !v.is_finite()) {
                return Err(Error::Parameter(format!("{} rate: non-finite prefactor", spec.family())));
            }
        }
        let mut expm1 = alloc::vec![0.0; n];
        let mut in_reach = alloc::vec![false; n];
        let max_order;
        match &spec {
            RateSpec::Constant { .. } => max_order = 0,
            RateSpec::Linear { c, .. } => {
                mark(&mut in_reach, c.support());
                max_order = 1;
            }
            RateSpec::Exponential { c, s, .. } => {
                for &o in c.support() {
                    expm1[o] = exp(s * c.value(o)) - 1.0;
                    if expm1[o] != 0.0 {
                        in_reach[o] = true;
                    }
                }
                max_order = usize::MAX;
            }
            RateSpec::LinearTimesExponential { c1, c2, .. } => {
                for &o in c2.support() {
                    expm1[o] = exp(c2.value(o)) - 1.0;
                }
                mark(&mut in_reach, c1.support());
                mark(&mut in_reach, c2.support());
                max_order = usize::MAX;
            }
            RateSpec::Mixed { c1, c2, .. } => {
                for &o in c2.support() {
                    expm1[o] = exp(c2.value(o)) - 1.0;
                }
                mark(&mut in_reach, c1.support());
                for &o1 in c1.support() {
                    for &o2 in c2.support() {
                        in_reach[grid.offset_sum(o1, o2)] = true;
                    }
                }
                max_order = usize::MAX;
            }
        }
        in_reach[0] = false;
        let reach: Vec<usize> = (0..n).filter(|&o| in_reach[o]).collect();
        let max_order = max_order.min(reach.len());
        Ok(Self { spec, grid: grid.clone(), expm1, reach, in_reach, max_order })
    }

    pub fn spec(&self) -> &RateSpec {
        &self.spec
    }

    pub fn grid(&self) -> &GridGeometry {
        &self.grid
    }

    pub fn reach(&self) -> &[usize] {
        &self.reach
    }

    /// Largest `|η|` for which `K⁻¹a(x, ·∪ξ)(η)` can be nonzero.
    pub fn max_order(&self) -> usize {
        self.max_order
    }

    /// `h^d Σ |e^{c} − 1|` over the exponent table (zero for the
    /// polynomial families).
    pub fn exponent_l1(&self) -> f64 {
        self.expm1.iter().map(|v| abs(*v)).sum::<f64>() * self.grid.cell_volume()
    }

    /// Whether cell `y` lies in the reach of `x`.
    #[inline]
    pub fn reaches(&self, x: Cell, y: Cell) -> bool {
        self.in_reach[self.grid.offset_index(y, x)]
    }

    /// Cells `x + reach`, sorted.
    pub fn neighbourhood(&self, x: Cell) -> Vec<Cell> {
        let mut v: Vec<Cell> = self.reach.iter().map(|&o| self.grid.shift(x, o)).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// `a(x, η)`, `x ∉ η`.
    pub fn eval(&self, x: Cell, eta: &[Cell]) -> f64 {
        let g = &self.grid;
        let xi = x as usize;
        match &self.spec {
            RateSpec::Constant { m } => m[xi],
            RateSpec::Linear { base, scale, c } => base[xi] + scale[xi] * c.sum_over(g, x, eta),
            RateSpec::Exponential { prefactor, c, s } => prefactor[xi] * exp(s * c.sum_over(g, x, eta)),
            RateSpec::LinearTimesExponential { scale, c1, c2 } => {
                let lin = c1.sum_over(g, x, eta);
                if lin == 0.0 {
                    0.0
                } else {
                    scale[xi] * lin * exp(c2.sum_over(g, x, eta))
                }
            }
            RateSpec::Mixed { scale, c1, c2 } => {
                let mut total = 0.0;
                for &y in eta {
                    let w = c1.between(g, x, y);
                    if w != 0.0 {
                        let e: f64 = eta.iter().filter(|&&u| u != y).map(|&u| c2.between(g, y, u)).sum();
                        total += w * exp(e);
                    }
                }
                scale[xi] * total
            }
        }
    }

    /// Checked `a(x, η)`.
    pub fn eval_checked(&self, x: Cell, eta: &[Cell]) -> Result<f64> {
        if contains(eta, x) {
            return Err(Error::Overlap(format!("x = {x} lies in η = {eta:?}")));
        }
        Ok(self.eval(x, eta))
    }

    /// `(K⁻¹ a(x, ·∪ξ))(η)` by the family's closed form.
    pub fn k_inverse(&self, x: Cell, xi: &[Cell], eta: &[Cell]) -> f64 {
        if eta.len() > self.max_order || !eta.iter().all(|&y| self.reaches(x, y)) {
            return 0.0;
        }
        let g = &self.grid;
        let xu = x as usize;
        match &self.spec {
            RateSpec::Constant { m } => m[xu],
            RateSpec::Linear { scale, c, .. } => match eta.len() {
                0 => self.eval(x, xi),
                _ => scale[xu] * c.between(g, x, eta[0]),
            },
            RateSpec::Exponential { .. } => {
                let prod: f64 = eta.iter().map(|&y| self.expm1[g.offset_index(x, y)]).product();
                if prod == 0.0 {
                    0.0
                } else {
                    self.eval(x, xi) * prod
                }
            }
            RateSpec::LinearTimesExponential { scale, c1, c2 } => {
                let e = |y: Cell| self.expm1[g.offset_index(x, y)];
                let mut first = 0.0;
                for (i, &y) in eta.iter().enumerate() {
                    let w = c1.between(g, x, y);
                    if w == 0.0 {
                        continue;
                    }
                    let rest: f64 =
                        eta.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &u)| e(u)).product();
                    first += w * exp(c2.between(g, x, y)) * rest;
                }
                let e_xi = exp(c2.sum_over(g, x, xi));
                let all: f64 = eta.iter().map(|&u| e(u)).product();
                scale[xu] * e_xi * (first + c1.sum_over(g, x, xi) * all)
            }
            RateSpec::Mixed { scale, c1, .. } => {
                let e = |y: Cell, u: Cell| self.expm1[g.offset_index(y, u)];
                let mut total = 0.0;
                for &y in eta {
                    let w = c1.between(g, x, y);
                    if w == 0.0 {
                        continue;
                    }
                    let rest: f64 = eta.iter().filter(|&&u| u != y).map(|&u| e(y, u)).product();
                    if rest != 0.0 {
                        total += w * rest * exp(self.c2_sum(y, xi));
                    }
                }
                for &y in xi {
                    let w = c1.between(g, x, y);
                    if w == 0.0 {
                        continue;
                    }
                    let rest: f64 = eta.iter().map(|&u| e(y, u)).product();
                    if rest != 0.0 {
                        let others: f64 =
                            xi.iter().filter(|&&u| u != y).map(|&u| self.mixed_c2(y, u)).sum();
                        total += w * rest * exp(others);
                    }
                }
                scale[xu] * total
            }
        }
    }

    fn mixed_c2(&self, y: Cell, u: Cell) -> f64 {
        match &self.spec {
            RateSpec::Mixed { c2, .. } => c2.between(&self.grid, y, u),
            _ => 0.0,
        }
    }

    fn c2_sum(&self, y: Cell, set: &[Cell]) -> f64 {
        set.iter().map(|&u| self.mixed_c2(y, u)).sum()
    }

    /// Checked `(K⁻¹ a(x, ·∪ξ))(η)`.
    pub fn k_inverse_checked(&self, x: Cell, xi: &[Cell], eta: &[Cell]) -> Result<f64> {
        if contains(xi, x) || contains(eta, x) {
            return Err(Error::Overlap(format!("x = {x} lies in ξ ∪ η")));
        }
        if !is_disjoint(xi, eta) {
            return Err(Error::Overlap(format!("ξ = {xi:?} and η = {eta:?} intersect")));
        }
        Ok(self.k_inverse(x, xi, eta))
    }

    /// `∫ |K⁻¹a(x, ·∪ξ)|(η) C^{|η|} dλ(η)` over configurations disjoint from
    /// `ξ ∪ {x}`, all levels. Exact for Constant, Linear and Exponential; a
    /// termwise (triangle-inequality) upper bound for the two composite
    /// families.
    pub fn abs_k_inverse_mass(&self, x: Cell, xi: &[Cell], c: f64) -> f64 {
        let g = &self.grid;
        let h = g.cell_volume();
        let xu = x as usize;
        let excluded = |y: Cell| y == x || contains(xi, y);
        match &self.spec {
            RateSpec::Constant { m } => abs(m[xu]),
            RateSpec::Linear { scale, c: k, .. } => {
                let tail: f64 = k
                    .support()
                    .iter()
                    .map(|&o| g.shift(x, o))
                    .filter(|&y| !excluded(y))
                    .map(|y| abs(k.between(g, x, y)))
                    .sum();
                abs(self.eval(x, xi)) + abs(scale[xu]) * c * h * tail
            }
            RateSpec::Exponential { .. } => {
                let prod: f64 = self
                    .reach
                    .iter()
                    .map(|&o| g.shift(x, o))
                    .filter(|&y| !excluded(y))
                    .map(|y| 1.0 + c * h * abs(self.expm1[g.offset_index(x, y)]))
                    .product();
                abs(self.eval(x, xi)) * prod
            }
            RateSpec::LinearTimesExponential { scale, c1, c2 } => {
                let free: Vec<Cell> = self.neighbourhood(x).into_iter().filter(|&y| !excluded(y)).collect();
                let factor = |y: Cell| 1.0 + c * h * abs(self.expm1[g.offset_index(x, y)]);
                let prod: f64 = free.iter().map(|&y| factor(y)).product();
                let first: f64 = free
                    .iter()
                    .map(|&y| abs(c1.between(g, x, y)) * exp(c2.between(g, x, y)) * c * h * prod / factor(y))
                    .sum();
                abs(scale[xu]) * exp(c2.sum_over(g, x, xi)) * (first + abs(c1.sum_over(g, x, xi)) * prod)
            }
            RateSpec::Mixed { scale, c1, c2 } => {
                let prod_around = |y: Cell| -> f64 {
                    c2.support()
                        .iter()
                        .map(|&o| g.shift(y, o))
                        .filter(|&u| !excluded(u) && u != y)
                        .map(|u| 1.0 + c * h * abs(self.expm1[g.offset_index(y, u)]))
                        .product()
                };
                let mut total = 0.0;
                for &o in c1.support() {
                    let y = g.shift(x, o);
                    if excluded(y) {
                        continue;
                    }
                    total += abs(c1.value(g.offset_index(x, y))) * c * h * exp(self.c2_sum(y, xi)) * prod_around(y);
                }
                for &y in xi {
                    let w = c1.between(g, x, y);
                    if w == 0.0 {
                        continue;
                    }
                    let others: f64 = xi.iter().filter(|&&u| u != y).map(|&u| c2.between(g, y, u)).sum();
                    total += abs(w) * exp(others) * prod_around(y);
                }
                abs(scale[xu]) * total
            }
        }
    }

    /// Constants `(A, N, ν)` with `a(x, ξ) ≤ A (1+|ξ|)^N ν^{|ξ|}`.
    pub fn polynomial_exponential_bound(&self) -> (f64, u32, f64) {
        let max = |f: &[f64]| f.iter().copied().fold(0.0, f64::max);
        match &self.spec {
            RateSpec::Constant { m } => (max(m), 0, 1.0),
            RateSpec::Linear { base, scale, c } => (max(base).max(max(scale) * c.max_value()), 1, 1.0),
            RateSpec::Exponential { prefactor, c, s } => {
                let top = if *s >= 0.0 { s * c.max_value() } else { s * c.min_value() };
                (max(prefactor), 0, exp(top.max(0.0)))
            }
            RateSpec::LinearTimesExponential { scale, c1, c2 } | RateSpec::Mixed { scale, c1, c2 } => {
                (max(scale) * c1.max_value(), 1, exp(c2.max_value().max(0.0)))
            }
        }
    }
}

fn mark(flags: &mut [bool], offsets: &[usize]) {
    for &o in offsets {
        flags[o] = true;
    }
}

/// Which of the documented examples a model instantiates; drives the
/// closed-form branches of the bounds report.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PresetKind {
    Surgailis,
    Glauber,
    Bdlp,
    BdlpModified,
    Contact,
}

impl PresetKind {
    pub fn name(self) -> &'static str {
        match self {
            PresetKind::Surgailis => "surgailis",
            PresetKind::Glauber => "glauber",
            PresetKind::Bdlp => "bdlp",
            PresetKind::BdlpModified => "bdlp_modified",
            PresetKind::Contact => "contact",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BirthDeathModel {
    pub birth: Rate,
    pub death: Rate,
    pub preset: Option<PresetKind>,
}

impl BirthDeathModel {
    pub fn new(grid: &GridGeometry, birth: RateSpec, death: RateSpec, preset: Option<PresetKind>) -> Result<Self> {
        let birth = Rate::new(birth, grid)?;
        let death = Rate::new(death, grid)?;
        Ok(Self { birth, death, preset })
    }

    pub fn grid(&self) -> &GridGeometry {
        self.death.grid()
    }

    /// Bounded evaluation of both rates over every configuration up to
    /// `n_max`: all values finite and nonnegative.
    pub fn check_rates(&self, n_max: usize) -> Result<()> {
        let g = self.grid();
        let mut bad = None;
        crate::subsets::for_each_configuration(g.cell_count(), n_max.saturating_sub(1), |eta| {
            if bad.is_some() {
                return;
            }
            for x in g.cells() {
                if contains(eta, x) {
                    continue;
                }
                for (name, r) in [("birth", &self.birth), ("death", &self.death)] {
                    let v = r.eval(x, eta);
                    if !(v.is_finite() && v >= 0.0) {
                        bad = Some(format!("{name} rate {v} at x = {x}, η = {eta:?}"));
                        return;
                    }
                }
            }
        });
        match bad {
            Some(msg) => Err(Error::Parameter(msg)),
            None => Ok(()),
        }
    }
}

/// `D(η) = Σ_{x∈η} d(x, η∖x)`.
pub fn death_energy(model: &BirthDeathModel, eta: &[Cell]) -> f64 {
    let mut rest = Vec::with_capacity(eta.len());
    let mut total = 0.0;
    for &x in eta {
        crate::subsets::remove_into(eta, x, &mut rest);
        total += model.death.eval(x, &rest);
    }
    total
}

/// Brute-force `Σ_{ζ⊆η} (−1)^{|η∖ζ|} a(x, ζ∪ξ)` (test oracle for the closed
/// forms).
pub fn k_inverse_rate_brute(rate: &Rate, x: Cell, xi: &[Cell], eta: &[Cell]) -> f64 {
    let mut total = 0.0;
    let mut u = Vec::new();
    for_each_split(eta, |zeta, rest| {
        crate::subsets::union_into(zeta, xi, &mut u);
        let v = rate.eval(x, &u);
        total += if rest.len() % 2 == 0 { v } else { -v };
    });
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelShape;
    use crate::math::powi;
    use crate::subsets::{for_each_configuration, union};

    fn grid6() -> GridGeometry {
        GridGeometry::new(1, 6, 6.0).unwrap()
    }

    fn table(g: &GridGeometry, entries: &[(i64, f64)]) -> Kernel {
        let mut v = Vec::new();
        for &(o, w) in entries {
            v.push(([o, 0], w));
            v.push(([-o, 0], w));
        }
        Kernel::new(g, KernelShape::Table(v)).unwrap()
    }

    fn families(g: &GridGeometry) -> Vec<Rate> {
        let n = g.cell_count();
        let field = |s: f64| (0..n).map(|i| s + 0.1 * i as f64).collect::<Vec<_>>();
        let c1 = table(g, &[(1, 0.7), (2, -0.3)]);
        let c2 = table(g, &[(1, -0.4), (2, 0.25)]);
        [
            RateSpec::Constant { m: field(1.0) },
            RateSpec::Linear { base: field(0.5), scale: field(0.8), c: c1.clone() },
            RateSpec::Exponential { prefactor: field(1.2), c: c2.clone(), s: -0.6 },
            RateSpec::LinearTimesExponential { scale: field(0.9), c1: c1.clone(), c2: c2.clone() },
            RateSpec::Mixed { scale: field(1.1), c1, c2 },
        ]
        .into_iter()
        .map(|s| Rate::new(s, g).unwrap())
        .collect()
    }

    #[test]
    fn constant_rate_examples() {
        let g = grid6();
        let r = Rate::new(RateSpec::Constant { m: alloc::vec![2.0; 6] }, &g).unwrap();
        assert_eq!(r.eval(0, &[1, 2]), 2.0);
        assert_eq!(r.k_inverse(0, &[3], &[]), 2.0);
        assert_eq!(r.k_inverse(0, &[3], &[1]), 0.0);
        assert!(r.eval_checked(1, &[1]).is_err());
        assert!(r.k_inverse_checked(0, &[1], &[1]).is_err());
    }

    #[test]
    fn zero_kernel_exponential_is_prefactor() {
        let g = grid6();
        let r = Rate::new(
            RateSpec::Exponential { prefactor: alloc::vec![1.5; 6], c: Kernel::zero(&g), s: 1.0 },
            &g,
        )
        .unwrap();
        assert_eq!(r.eval(2, &[0, 4]), 1.5);
        assert_eq!(r.k_inverse(2, &[0], &[]), 1.5);
        assert_eq!(r.k_inverse(2, &[0], &[4]), 0.0);
    }

    #[test]
    fn linear_single_term() {
        let g = grid6();
        let c = table(&g, &[(2, 0.7)]);
        let r = Rate::new(RateSpec::Linear { base: alloc::vec![0.0; 6], scale: alloc::vec![1.0; 6], c }, &g)
            .unwrap();
        assert!((r.eval(1, &[3]) - 0.7).abs() < 1e-15);
    }

    #[test]
    fn closed_forms_match_inclusion_exclusion() {
        let g = grid6();
        for rate in families(&g) {
            for x in g.cells() {
                for_each_configuration(6, 2, |xi| {
                    if contains(xi, x) {
                        return;
                    }
                    for_each_configuration(6, 3, |eta| {
                        if contains(eta, x) || !is_disjoint(xi, eta) {
                            return;
                        }
                        let fast = rate.k_inverse(x, xi, eta);
                        let brute = k_inverse_rate_brute(&rate, x, xi, eta);
                        assert!(
                            (fast - brute).abs() <= 1e-10 * brute.abs().max(1.0),
                            "{}: x={x} xi={xi:?} eta={eta:?}: {fast} vs {brute}",
                            rate.spec().family()
                        );
                    });
                });
            }
        }
    }

    #[test]
    fn k_of_k_inverse_reconstructs_rate() {
        let g = grid6();
        for rate in families(&g) {
            let x = 0;
            let xi = [3];
            for_each_configuration(6, 3, |zeta| {
                if contains(zeta, x) || contains(zeta, 3) {
                    return;
                }
                let mut sum = 0.0;
                for_each_split(zeta, |eta, _| sum += rate.k_inverse(x, &xi, eta));
                let direct = rate.eval(x, &union(zeta, &xi));
                assert!((sum - direct).abs() < 1e-10 * direct.abs().max(1.0));
            });
        }
    }

    #[test]
    fn abs_mass_dominates_enumeration() {
        // Enumerate Σ_η |K⁻¹a|(η) (C h)^{|η|} over all disjoint η and compare
        // with the closed-form mass: equal for the exact families, an upper
        // bound for the composite ones.
        let g = grid6();
        let c = 1.7;
        let h = g.cell_volume();
        for (i, rate) in families(&g).into_iter().enumerate() {
            let x = 1;
            let xi = [4];
            let mut enumerated = 0.0;
            for_each_configuration(6, 6, |eta| {
                if contains(eta, x) || contains(eta, 4) {
                    return;
                }
                enumerated += rate.k_inverse(x, &xi, eta).abs() * powi(c * h, eta.len() as u32);
            });
            let closed = rate.abs_k_inverse_mass(x, &xi, c);
            if i < 3 {
                assert!((closed - enumerated).abs() < 1e-10 * enumerated.max(1.0), "{i}: {closed} vs {enumerated}");
            } else {
                assert!(closed >= enumerated - 1e-12, "{i}: {closed} < {enumerated}");
            }
        }
    }

    #[test]
    fn death_energy_of_glauber_pair() {
        let g = grid6();
        let phi = table(&g, &[(1, 0.8)]);
        let m: Vec<f64> = (0..6).map(|i| 1.0 + 0.2 * i as f64).collect();
        let s = 0.5;
        let model = BirthDeathModel::new(
            &g,
            RateSpec::Exponential { prefactor: alloc::vec![0.3; 6], c: phi.clone(), s: s - 1.0 },
            RateSpec::Exponential { prefactor: m.clone(), c: phi, s },
            Some(PresetKind::Glauber),
        )
        .unwrap();
        assert_eq!(death_energy(&model, &[]), 0.0);
        let expect = m[2] * (s * 0.8f64).exp() + m[3] * (s * 0.8f64).exp();
        assert!((death_energy(&model, &[2, 3]) - expect).abs() < 1e-14);
        model.check_rates(3).unwrap();
    }
}
