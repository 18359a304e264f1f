//! Markov-chain approximation of the Glauber dynamics (`s = 0`, `m ≡ 1`,
//! constant activity `z`, potential `φ ≥ 0`).
//!
//! `P̂δ` acts on quasi-observables, `P̂*δ` on correlation functions; they are
//! exact adjoints under the pairing `⟨⟨·,·⟩⟩` on the grid. Birth
//! configurations `ω` are always disjoint from the current configuration.
//!
//! On the grid, `K P̂δ K⁻¹` is the chain in which every particle survives
//! independently with probability `1 − δ` and every empty cell `y` receives
//! a particle independently with probability `zδh e^{−E(y,γ)}`; it is a
//! genuine transition kernel as long as `zδh ≤ 1`.

use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bounds::{glauber_report, GlauberReport};
use crate::error::{Error, Result};
use crate::gamma::{norm_kc, norm_lc, NormContext, TruncatedGammaFunction};
use crate::grid::{Cell, GridGeometry};
use crate::hierarchy::{apply_l_hat, OperatorContext};
use crate::kernel::Kernel;
use crate::math::{exp, floor, powi};
use crate::rates::{BirthDeathModel, PresetKind, RateSpec};
use crate::subsets::{contains, for_each_configuration, for_each_split, for_each_subset_upto, union_into};

#[derive(Debug, Clone, PartialEq)]
pub struct GlauberParams {
    pub z: f64,
    pub phi: Kernel,
    pub c: f64,
    /// Finite-volume restriction `Λ` of the birth configurations.
    pub volume: Option<Vec<bool>>,
}

#[derive(Debug, Clone)]
pub struct GlauberChain {
    grid: GridGeometry,
    params: GlauberParams,
    n_max: usize,
    report: GlauberReport,
    /// `e^{−φ(o)}` per offset.
    boltzmann: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    pub delta: f64,
    /// `‖(P̂δG − G)/δ − L̂G‖_C`.
    pub residual: f64,
    /// `3δ‖G‖_{2C}`.
    pub bound: f64,
    /// Whether every output level of `P̂δG` and `L̂G` fits below `n_max`,
    /// i.e. truncation cannot affect the residual.
    pub output_complete: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RestrictedNormReport {
    pub nu: f64,
    pub delta: f64,
    pub trials: usize,
    /// `max ‖P̂*δk‖_{K_C} / ‖k‖_{K_C}` over the trials.
    pub worst_ratio: f64,
    /// `1 − (1 − ν)δ`.
    pub bound: f64,
    pub passed: bool,
}

impl GlauberChain {
    pub fn new(grid: &GridGeometry, params: GlauberParams, n_max: usize) -> Result<Self> {
        if !(params.z > 0.0 && params.z.is_finite()) {
            return Err(Error::Parameter(format!("activity z must be positive, got {}", params.z)));
        }
        if !(params.c > 0.0) {
            return Err(Error::Parameter(format!("C must be positive, got {}", params.c)));
        }
        if !params.phi.is_nonnegative() {
            return Err(Error::Parameter("the Glauber potential must be nonnegative".into()));
        }
        if let Some(mask) = &params.volume {
            if mask.len() != grid.cell_count() {
                return Err(Error::Parameter("volume mask must cover every cell".into()));
            }
        }
        let boltzmann = params.phi.values().iter().map(|&v| exp(-v)).collect();
        let report = glauber_report(params.z, &params.phi, params.c, grid);
        Ok(Self { grid: grid.clone(), params, n_max, report, boltzmann })
    }

    pub fn grid(&self) -> &GridGeometry {
        &self.grid
    }

    pub fn params(&self) -> &GlauberParams {
        &self.params
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn report(&self) -> &GlauberReport {
        &self.report
    }

    /// Same chain with birth configurations restricted to `Λ`.
    pub fn with_volume(&self, mask: Option<Vec<bool>>) -> Result<Self> {
        let mut p = self.params.clone();
        p.volume = mask;
        Self::new(&self.grid, p, self.n_max)
    }

    /// The generator this chain approximates, as a birth-and-death model.
    pub fn model(&self) -> Result<BirthDeathModel> {
        let n = self.grid.cell_count();
        BirthDeathModel::new(
            &self.grid,
            RateSpec::Exponential { prefactor: alloc::vec![self.params.z; n], c: self.params.phi.clone(), s: -1.0 },
            RateSpec::Exponential { prefactor: alloc::vec![1.0; n], c: self.params.phi.clone(), s: 0.0 },
            Some(PresetKind::Glauber),
        )
    }

    fn check(&self, f: &TruncatedGammaFunction, delta: f64) -> Result<()> {
        if f.n_max() != self.n_max {
            return Err(Error::NMaxMismatch(f.n_max(), self.n_max));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::Parameter(format!("delta must lie in (0,1), got {delta}")));
        }
        Ok(())
    }

    #[inline]
    fn in_volume(&self, omega: &[Cell]) -> bool {
        match &self.params.volume {
            None => true,
            Some(mask) => omega.iter().all(|&x| mask[x as usize]),
        }
    }

    /// `e^{−E(y, ω)} = Π_{x∈ω} e^{−φ(y−x)}`.
    #[inline]
    fn boltz(&self, y: Cell, omega: &[Cell]) -> f64 {
        omega.iter().map(|&x| self.boltzmann[self.grid.offset_index(y, x)]).product()
    }

    /// Cells interacting with some point of `ω`, minus `exclude`.
    fn neighbourhood(&self, omega: &[Cell], exclude: &[Cell], out: &mut Vec<Cell>) {
        out.clear();
        for &x in omega {
            for &o in self.params.phi.support() {
                let y = self.grid.shift(x, o);
                if !contains(exclude, y) {
                    out.push(y);
                }
            }
        }
        out.sort_unstable();
        out.dedup();
    }

    /// `(P̂δG)(η) = Σ_{ξ⊆η} (1−δ)^{|ξ|} ∫ (zδ)^{|ω|} G(ξ∪ω) Π_{y∈ξ} e^{−E(y,ω)}
    /// Π_{y∈η∖ξ} (e^{−E(y,ω)} − 1) dλ(ω)`.
    pub fn p_delta(&self, g: &TruncatedGammaFunction, delta: f64) -> Result<TruncatedGammaFunction> {
        self.check(g, delta)?;
        let h = self.grid.cell_volume();
        let zdh = self.params.z * delta * h;
        let n_max = self.n_max;
        let mut out = TruncatedGammaFunction::zero(n_max);
        let mut cand = Vec::new();
        let mut key = Vec::with_capacity(n_max);
        for (sigma, v) in g.iter() {
            if v == 0.0 {
                continue;
            }
            for_each_split(sigma, |omega, xi| {
                if !self.in_volume(omega) {
                    return;
                }
                let mut base = v * powi(1.0 - delta, xi.len() as u32) * powi(zdh, omega.len() as u32);
                for &y in xi {
                    base *= self.boltz(y, omega);
                }
                if omega.is_empty() {
                    out.add(xi, base);
                    return;
                }
                self.neighbourhood(omega, sigma, &mut cand);
                for_each_subset_upto(&cand, n_max - xi.len(), |rho| {
                    let w: f64 = rho.iter().map(|&y| self.boltz(y, omega) - 1.0).product();
                    if w != 0.0 {
                        union_into(xi, rho, &mut key);
                        out.add(&key, base * w);
                    }
                });
            });
        }
        Ok(out)
    }

    /// `(P̂*δk)(η) = Σ_{ω⊆η} (1−δ)^{|η∖ω|} (zδ)^{|ω|} Π_{y∈η∖ω} e^{−E(y,ω)}
    /// ∫ Π_{y∈ξ} (e^{−E(y,ω)} − 1) k(ξ ∪ η∖ω) dλ(ξ)`, `ξ` disjoint from `η`.
    pub fn p_delta_star(&self, k: &TruncatedGammaFunction, delta: f64) -> Result<TruncatedGammaFunction> {
        self.check(k, delta)?;
        let h = self.grid.cell_volume();
        let zd = self.params.z * delta;
        let n_max = self.n_max;
        let mut out = TruncatedGammaFunction::zero(n_max);
        let mut cand = Vec::new();
        let mut key = Vec::with_capacity(n_max);
        for_each_configuration(self.grid.cell_count(), n_max, |eta| {
            let mut total = 0.0;
            for_each_split(eta, |omega, rest| {
                if !self.in_volume(omega) {
                    return;
                }
                let mut pre = powi(1.0 - delta, rest.len() as u32) * powi(zd, omega.len() as u32);
                for &y in rest {
                    pre *= self.boltz(y, omega);
                }
                if omega.is_empty() {
                    total += pre * k.get(rest);
                    return;
                }
                self.neighbourhood(omega, eta, &mut cand);
                let mut inner = 0.0;
                for_each_subset_upto(&cand, n_max - rest.len(), |xi| {
                    let w: f64 = xi.iter().map(|&y| self.boltz(y, omega) - 1.0).product();
                    if w != 0.0 {
                        union_into(xi, rest, &mut key);
                        let kv = k.get(&key);
                        if kv != 0.0 {
                            inner += powi(h, xi.len() as u32) * w * kv;
                        }
                    }
                });
                total += pre * inner;
            });
            if total != 0.0 || eta.is_empty() {
                out.set(eta, total);
            }
        });
        Ok(out)
    }

    /// Number of chain steps for time `t`: `⌊t/δ⌋` (a relative slack of
    /// 1e-9 absorbs the rounding of `t/δ` at exact multiples).
    pub fn step_count(t: f64, delta: f64) -> usize {
        floor(t / delta * (1.0 + 1e-9)) as usize
    }

    /// `P̂δ^{⌊t/δ⌋}` applied to `input` (or `P̂*δ` when `dual`).
    pub fn chain_evolve(
        &self,
        input: &TruncatedGammaFunction,
        t: f64,
        delta: f64,
        dual: bool,
    ) -> Result<TruncatedGammaFunction> {
        self.chain_trace(input, delta, Self::step_count(t, delta), dual, |_, _| {})
    }

    /// Applies `steps` chain steps, calling `observe(n, value)` after each
    /// (and once with `n = 0` before the first).
    pub fn chain_trace(
        &self,
        input: &TruncatedGammaFunction,
        delta: f64,
        steps: usize,
        dual: bool,
        mut observe: impl FnMut(usize, &TruncatedGammaFunction),
    ) -> Result<TruncatedGammaFunction> {
        self.check(input, delta)?;
        let mut x = input.clone();
        observe(0, &x);
        for n in 1..=steps {
            x = if dual { self.p_delta_star(&x, delta)? } else { self.p_delta(&x, delta)? };
            if !x.is_finite() {
                return Err(Error::NonFinite { step: n });
            }
            observe(n, &x);
        }
        Ok(x)
    }

    /// Observable form of one chain step at `γ`:
    /// `Σ_{η⊆γ} δ^{|η|}(1−δ)^{|γ∖η|} Ξ(γ)⁻¹ ∫ (zδ)^{|ω|} Π_{y∈ω} e^{−E(y,γ)}
    /// F((γ∖η) ∪ ω) dλ(ω)` over `ω ⊆ Λ∖γ` with `|ω| ≤ omega_max`; the
    /// normalizer `Ξ(γ)` uses the same quadrature, so constants are fixed
    /// exactly.
    pub fn observable_step(
        &self,
        mut f: impl FnMut(&[Cell]) -> f64,
        gamma: &[Cell],
        delta: f64,
        omega_max: usize,
    ) -> f64 {
        let h = self.grid.cell_volume();
        let zdh = self.params.z * delta * h;
        let free: Vec<Cell> = self
            .grid
            .cells()
            .filter(|&y| !contains(gamma, y) && self.in_volume(&[y]))
            .collect();
        let weight: Vec<f64> = free.iter().map(|&y| zdh * self.boltz(y, gamma)).collect();
        let mut xi_norm = 0.0;
        let mut births: Vec<(Vec<Cell>, f64)> = Vec::new();
        let mut idx = Vec::new();
        for_each_subset_upto(&(0..free.len() as Cell).collect::<Vec<_>>(), omega_max, |sel| {
            let w: f64 = sel.iter().map(|&i| weight[i as usize]).product();
            xi_norm += w;
            idx.clear();
            idx.extend(sel.iter().map(|&i| free[i as usize]));
            births.push((idx.clone(), w));
        });
        let mut total = 0.0;
        let mut key = Vec::new();
        for_each_split(gamma, |removed, kept| {
            let p = powi(delta, removed.len() as u32) * powi(1.0 - delta, kept.len() as u32);
            let mut inner = 0.0;
            for (omega, w) in &births {
                let mut sorted = omega.clone();
                sorted.sort_unstable();
                union_into(kept, &sorted, &mut key);
                inner += w * f(&key);
            }
            total += p * inner;
        });
        total / xi_norm
    }

    /// Transition matrix `K P̂δ K⁻¹` on the full configuration space of a
    /// tiny grid (requires `n_max` = cell count ≤ 12). Rows index `γ`,
    /// columns `γ'`, both in bitmask order.
    pub fn transition_matrix(&self, delta: f64) -> Result<Vec<Vec<f64>>> {
        let n = self.grid.cell_count();
        if n > 12 || self.n_max < n {
            return Err(Error::Parameter(format!(
                "transition matrix needs n_max ≥ cell count ≤ 12 (cells {n}, n_max {})",
                self.n_max
            )));
        }
        let states = 1usize << n;
        let cells_of = |mask: usize| -> Vec<Cell> { (0..n as Cell).filter(|&c| mask & (1 << c) != 0).collect() };
        let mut matrix = alloc::vec![alloc::vec![0.0; states]; states];
        for target in 0..states {
            let tgt = cells_of(target);
            // G = K⁻¹ 1_{γ'}: G(η) = (−1)^{|η∖γ'|} for η ⊇ γ'
            let mut g = TruncatedGammaFunction::zero(self.n_max);
            for mask in 0..states {
                if mask & target == target {
                    let eta = cells_of(mask);
                    let sign = if (eta.len() - tgt.len()) % 2 == 0 { 1.0 } else { -1.0 };
                    g.set(&eta, sign);
                }
            }
            let pg = self.p_delta(&g, delta)?;
            for (from, row) in matrix.iter_mut().enumerate() {
                row[target] = crate::gamma::k_transform_partial(&pg, &cells_of(from));
            }
        }
        Ok(matrix)
    }

    /// `‖(P̂δG − G)/δ − L̂G‖_C` against `3δ‖G‖_{2C}`.
    pub fn generator_residual(&self, g: &TruncatedGammaFunction, delta: f64) -> Result<ResidualReport> {
        self.check(g, delta)?;
        let ctx = OperatorContext::new(self.model()?, self.n_max)?;
        let pg = self.p_delta(g, delta)?;
        let lg = apply_l_hat(&ctx, g)?;
        let diff = pg.sub(g).scaled(1.0 / delta).sub(&lg);
        let nc = NormContext::new(self.params.c, self.grid.clone())?;
        let residual = norm_lc(&diff, &nc);
        let bound = 3.0 * delta * norm_lc(g, &nc.with_scale(2.0 * self.params.c));
        let level = g.max_nonzero_level();
        let q = self.params.phi.support().len();
        let cells = self.grid.cell_count();
        let output_complete = (0..=level).all(|w| level - w + (w * q).min(cells) <= self.n_max);
        Ok(ResidualReport { delta, residual, bound, output_complete })
    }

    /// `‖P̂δG‖_C / ‖G‖_C`.
    pub fn contraction_ratio(&self, g: &TruncatedGammaFunction, delta: f64) -> Result<f64> {
        let nc = NormContext::new(self.params.c, self.grid.clone())?;
        let before = norm_lc(g, &nc);
        let after = norm_lc(&self.p_delta(g, delta)?, &nc);
        Ok(if before == 0.0 { 0.0 } else { after / before })
    }

    /// Checks `‖P̂*δk‖_{K_C} ≤ (1 − (1−ν)δ)‖k‖_{K_C}` on random `k` with
    /// `k(∅) = 0`, entries uniform in `[−C^{|η|}, C^{|η|}]`.
    pub fn restricted_norm_check(&self, delta: f64, nu: f64, trials: usize, seed: u64) -> Result<RestrictedNormReport> {
        let c = self.params.c;
        if !self.report.nu_condition(nu, c) {
            return Err(Error::Precondition {
                tag: "nu-verysmallparam",
                detail: format!(
                    "z = {} exceeds min(nu C e^(-C C_phi), 2C e^(-2C C_phi)) for nu = {nu}",
                    self.params.z
                ),
            });
        }
        let nc = NormContext::new(c, self.grid.clone())?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = 0.0f64;
        for _ in 0..trials {
            let k = TruncatedGammaFunction::from_fn(&self.grid, self.n_max, |eta| {
                if eta.is_empty() {
                    0.0
                } else {
                    powi(c, eta.len() as u32) * rng.random_range(-1.0..=1.0)
                }
            });
            let before = norm_kc(&k, &nc);
            let after = norm_kc(&self.p_delta_star(&k, delta)?, &nc);
            if before > 0.0 {
                worst = worst.max(after / before);
            }
        }
        let bound = 1.0 - (1.0 - nu) * delta;
        Ok(RestrictedNormReport { nu, delta, trials, worst_ratio: worst, bound, passed: worst <= bound * (1.0 + 1e-12) })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gamma::duality_pairing;
    use crate::kernel::KernelShape;

    fn chain(m: u32, l: f64, z: f64, height: f64, n_max: usize) -> GlauberChain {
        let g = GridGeometry::new(1, m, l).unwrap();
        let phi = if height == 0.0 {
            Kernel::zero(&g)
        } else {
            Kernel::new(&g, KernelShape::Bump { height, radius: 0.5 }).unwrap()
        };
        GlauberChain::new(&g, GlauberParams { z, phi, c: 2.0, volume: None }, n_max).unwrap()
    }

    fn pseudo_random(g: &GridGeometry, n_max: usize, seed: u64, max_level: usize) -> TruncatedGammaFunction {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        TruncatedGammaFunction::from_fn(g, n_max, |eta| {
            if eta.len() > max_level {
                0.0
            } else {
                rng.random_range(-1.0..=1.0)
            }
        })
    }

    #[test]
    fn free_chain_by_enumeration() {
        // φ ≡ 0: only ξ = η survives, (P̂δG)(η) = (1−δ)^{|η|} Σ_ω (zδh)^{|ω|} G(η∪ω).
        let ch = chain(6, 3.0, 0.4, 0.0, 2);
        let g = pseudo_random(ch.grid(), 2, 1, 2);
        let delta = 0.2;
        let pg = ch.p_delta(&g, delta).unwrap();
        let zdh = 0.4 * delta * 0.5;
        for_each_configuration(6, 2, |eta| {
            let mut s = g.get(eta);
            for x in 0..6 {
                if !contains(eta, x) {
                    let mut key = Vec::new();
                    crate::subsets::insert_into(eta, x, &mut key);
                    s += zdh * g.get(&key);
                    for y in x + 1..6 {
                        if !contains(eta, y) {
                            let mut k2 = Vec::new();
                            crate::subsets::insert_into(&key, y, &mut k2);
                            s += zdh * zdh * g.get(&k2);
                        }
                    }
                }
            }
            let expect = (1.0 - delta).powi(eta.len() as i32) * s;
            assert!((pg.get(eta) - expect).abs() < 1e-14, "{eta:?}");
        });
        let ind = TruncatedGammaFunction::empty_indicator(2, 1.0);
        let p_ind = ch.p_delta(&ind, delta).unwrap();
        assert_eq!(p_ind.get(&[]), 1.0);
        assert_eq!(p_ind.max_abs_diff(&ind), 0.0);
    }

    #[test]
    fn adjointness_and_vacuum() {
        let ch = chain(10, 5.0, 0.3, 0.8, 3);
        let g = pseudo_random(ch.grid(), 3, 2, 3);
        let k = pseudo_random(ch.grid(), 3, 3, 3);
        let delta = 0.3;
        let lhs = duality_pairing(&ch.p_delta(&g, delta).unwrap(), &k, ch.grid()).unwrap();
        let rhs = duality_pairing(&g, &ch.p_delta_star(&k, delta).unwrap(), ch.grid()).unwrap();
        assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1.0), "{lhs} vs {rhs}");
        let pk = ch.p_delta_star(&k, delta).unwrap();
        assert_eq!(pk.get(&[]), k.get(&[]));
    }

    #[test]
    fn free_poisson_is_fixed() {
        let ch = chain(8, 4.0, 0.3, 0.0, 3);
        let k = TruncatedGammaFunction::poisson(ch.grid(), 3, 0.3);
        let pk = ch.p_delta_star(&k, 0.1).unwrap();
        assert!(pk.max_abs_diff(&k) < 1e-15);
    }

    #[test]
    fn full_volume_matches_torus_chain() {
        let ch = chain(8, 4.0, 0.3, 0.5, 2);
        let all = ch.with_volume(Some(alloc::vec![true; 8])).unwrap();
        let g = pseudo_random(ch.grid(), 2, 4, 2);
        assert!(ch.p_delta(&g, 0.2).unwrap().max_abs_diff(&all.p_delta(&g, 0.2).unwrap()) <= 1e-12);
        let half = ch.with_volume(Some((0..8).map(|i| i < 4).collect())).unwrap();
        let k = pseudo_random(ch.grid(), 2, 5, 2);
        let lhs = duality_pairing(&half.p_delta(&g, 0.2).unwrap(), &k, ch.grid()).unwrap();
        let rhs = duality_pairing(&g, &half.p_delta_star(&k, 0.2).unwrap(), ch.grid()).unwrap();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn observable_chain_is_stochastic_and_close_to_conjugate() {
        let ch = chain(6, 3.0, 0.4, 0.7, 6);
        let delta = 0.1;
        for gamma in [alloc::vec![], alloc::vec![1], alloc::vec![0, 3, 4]] {
            assert!((ch.observable_step(|_| 1.0, &gamma, delta, 6) - 1.0).abs() < 1e-15);
        }
        let half = ch.with_volume(Some((0..6).map(|i| i % 2 == 0).collect())).unwrap();
        assert!((half.observable_step(|_| 1.0, &[1, 2], delta, 6) - 1.0).abs() < 1e-15);
        // K P̂ K⁻¹ versus the normalized chain: births with probability
        // w/(1+w) instead of w, an O((zδh)²) difference per cell.
        let g = pseudo_random(ch.grid(), 6, 8, 6);
        let f = |c: &[Cell]| crate::gamma::k_transform_partial(&g, c);
        let pg = ch.p_delta(&g, delta).unwrap();
        let w = 0.4 * delta * 0.5;
        let mut worst = 0.0f64;
        for_each_configuration(6, 3, |gamma| {
            let lhs = crate::gamma::k_transform_partial(&pg, gamma);
            let rhs = ch.observable_step(f, gamma, delta, 6);
            worst = worst.max((lhs - rhs).abs());
        });
        let scale = g.iter().map(|(_, v)| v.abs()).sum::<f64>();
        assert!(worst <= 6.0 * w * w * scale, "{worst}");
        assert!(worst > 0.0);
    }

    #[test]
    fn transition_matrix_is_stochastic() {
        let ch = chain(6, 3.0, 0.4, 0.7, 6);
        let t = ch.transition_matrix(0.2).unwrap();
        for row in &t {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&p| p >= -1e-14));
        }
        // from the empty state each cell fills independently with zδh
        let p: f64 = 0.4 * 0.2 * 0.5;
        assert!((t[0][0] - (1.0 - p).powi(6)).abs() < 1e-14);
        assert!((t[0][1] - p * (1.0 - p).powi(5)).abs() < 1e-14);
    }

    #[test]
    fn contraction_and_residual() {
        let ch = chain(16, 8.0, 0.3, 1.0, 4);
        assert!(ch.report().smallparam_ok);
        let g = pseudo_random(ch.grid(), 4, 6, 2);
        for delta in [0.1, 0.05] {
            assert!(ch.contraction_ratio(&g, delta).unwrap() <= 1.0 + 1e-12);
            let r = ch.generator_residual(&g, delta).unwrap();
            assert!(r.output_complete);
            assert!(r.residual <= r.bound, "{r:?}");
        }
    }

    #[test]
    fn restricted_contraction_and_gate() {
        let ch = chain(10, 5.0, 0.2, 1.0, 2);
        let r = ch.restricted_norm_check(0.1, 0.5, 5, 7).unwrap();
        assert!(r.passed, "{r:?}");
        let hot = chain(10, 5.0, 1.5, 1.0, 2);
        assert!(matches!(hot.restricted_norm_check(0.1, 0.5, 1, 7), Err(Error::Precondition { .. })));
    }

    #[test]
    fn chain_step_count_and_free_decay() {
        assert_eq!(GlauberChain::step_count(1.0, 0.1), 10);
        assert_eq!(GlauberChain::step_count(0.05, 0.1), 0);
        let ch = chain(8, 4.0, 0.3, 0.0, 2);
        let k0 = TruncatedGammaFunction::poisson(ch.grid(), 2, 1.0);
        let kt = ch.chain_evolve(&k0, 1.0, 0.1, true).unwrap();
        let expect = 0.3 + 0.7 * 0.9f64.powi(10);
        assert!((kt.get(&[4]) - expect).abs() < 1e-14);
    }
}
