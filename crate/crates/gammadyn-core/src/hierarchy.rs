//! The generator in its three views: `L` on observables (evaluated
//! pointwise, used as an oracle), `L̂ = K⁻¹LK` on quasi-observables and its
//! dual `L̂*` on correlation functions, with the level-block decomposition.
//!
//! Both `L̂` and `L̂*` are assembled by pushing every stored input entry to
//! the output keys it influences, so the work scales with the input support
//! and the rate reach rather than with the number of grid configurations.
//! Assembly is sequential and ordered, hence bit-reproducible.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::gamma::TruncatedGammaFunction;
use crate::grid::{Cell, GridGeometry};
use crate::math::{exp, powi};
use crate::rates::{death_energy, BirthDeathModel, Rate};
use crate::subsets::{contains, for_each_split, for_each_subset_upto, insert_into, remove_into, union_into};

/// How the birth integral of `L` treats cells already occupied by `γ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BirthQuadrature {
    /// Every cell carries a birth term; for occupied `x ∈ γ` the term is
    /// `b(x, γ∖x)[F(γ) − F(γ∖x)]·h`. This is the quadrature for which
    /// `K L̂ = L K` holds exactly on the grid.
    #[default]
    AllCells,
    /// Births only into empty cells. Differs from `AllCells` by the
    /// occupied-cell terms, an `O(h^d)` quadrature error per particle.
    EmptyCells,
}

#[derive(Debug, Clone)]
pub struct OperatorContext {
    pub model: BirthDeathModel,
    pub n_max: usize,
    /// Largest `|ζ|` kept in the ζ-integrals of `L̂*`.
    pub zeta_trunc: usize,
    pub birth_quadrature: BirthQuadrature,
    nbr_death: Vec<Vec<Cell>>,
    nbr_birth: Vec<Vec<Cell>>,
}

impl OperatorContext {
    /// `zeta_trunc` defaults to `n_max`, where the ζ-integrals are complete
    /// for every input that lives on levels `≤ n_max`.
    pub fn new(model: BirthDeathModel, n_max: usize) -> Result<Self> {
        if n_max == 0 {
            return Err(Error::Parameter("n_max must be at least 1".into()));
        }
        let g = model.grid().clone();
        let nbr_death = g.cells().map(|x| model.death.neighbourhood(x)).collect();
        let nbr_birth = g.cells().map(|x| model.birth.neighbourhood(x)).collect();
        Ok(Self { model, n_max, zeta_trunc: n_max, birth_quadrature: BirthQuadrature::AllCells, nbr_death, nbr_birth })
    }

    pub fn with_zeta_trunc(mut self, zeta_trunc: usize) -> Self {
        self.zeta_trunc = zeta_trunc;
        self
    }

    pub fn with_birth_quadrature(mut self, q: BirthQuadrature) -> Self {
        self.birth_quadrature = q;
        self
    }

    pub fn grid(&self) -> &GridGeometry {
        self.model.grid()
    }

    fn check(&self, f: &TruncatedGammaFunction) -> Result<()> {
        if f.n_max() != self.n_max {
            return Err(Error::NMaxMismatch(f.n_max(), self.n_max));
        }
        Ok(())
    }

    /// Bound on the neglected part of the ζ-integrals at scale `C`:
    /// `Σ_{j>zeta_trunc} (Cβ)^j / j!` with `β` the `ℓ¹` mass of the rate
    /// exponent table. Zero when the truncation is above the rate order.
    pub fn zeta_tail_bound(&self, c: f64) -> f64 {
        let zt = self.zeta_trunc;
        let h = self.grid().cell_volume();
        let tail = |r: &Rate| -> f64 {
            if zt >= r.max_order() {
                return 0.0;
            }
            let u = c * h * r.exponent_l1();
            let mut term = 1.0;
            let mut head = 1.0;
            for j in 1..=zt {
                term *= u / j as f64;
                head += term;
            }
            (exp(u) - head).max(0.0)
        };
        tail(&self.model.death).max(tail(&self.model.birth))
    }
}

/// Which level-block of an operator to keep, by output level `n` and input
/// level `m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    Full,
    /// `n = m`.
    Diag,
    /// `n = m − 1`.
    Upper,
    /// `n = m + 1`.
    Lower,
    /// Everything else.
    Residual,
}

impl Block {
    #[inline]
    fn keeps(self, out_level: usize, in_level: usize) -> bool {
        match self {
            Block::Full => true,
            Block::Diag => out_level == in_level,
            Block::Upper => out_level + 1 == in_level,
            Block::Lower => out_level == in_level + 1,
            Block::Residual => out_level + 1 < in_level || out_level > in_level + 1,
        }
    }
}

/// `(LF)(γ)` for the birth-and-death generator, by direct summation.
pub fn apply_l_direct(ctx: &OperatorContext, mut f: impl FnMut(&[Cell]) -> f64, gamma: &[Cell]) -> Result<f64> {
    if gamma.len() + 1 > ctx.n_max {
        return Err(Error::LevelOverflow { size: gamma.len() + 1, n_max: ctx.n_max });
    }
    let g = ctx.grid();
    let h = g.cell_volume();
    let model = &ctx.model;
    let f_gamma = f(gamma);
    let mut buf = Vec::with_capacity(gamma.len() + 1);
    let mut death = 0.0;
    let mut occupied_birth = 0.0;
    for &x in gamma {
        remove_into(gamma, x, &mut buf);
        let f_minus = f(&buf);
        death += model.death.eval(x, &buf) * (f_minus - f_gamma);
        if ctx.birth_quadrature == BirthQuadrature::AllCells {
            occupied_birth += model.birth.eval(x, &buf) * (f_gamma - f_minus);
        }
    }
    let mut birth = 0.0;
    for x in g.cells() {
        if contains(gamma, x) {
            continue;
        }
        let b = model.birth.eval(x, gamma);
        if b != 0.0 {
            insert_into(gamma, x, &mut buf);
            birth += b * (f(&buf) - f_gamma);
        }
    }
    Ok(death + (birth + occupied_birth) * h)
}

/// `L̂G`.
pub fn apply_l_hat(ctx: &OperatorContext, g: &TruncatedGammaFunction) -> Result<TruncatedGammaFunction> {
    l_hat_block(ctx, g, Block::Full)
}

/// `L̂*k`.
pub fn apply_l_hat_star(ctx: &OperatorContext, k: &TruncatedGammaFunction) -> Result<TruncatedGammaFunction> {
    l_hat_star_block(ctx, k, Block::Full, true)
}

/// A single level-block of `L̂` (`dual = false`) or `L̂*` (`dual = true`).
pub fn operator_blocks(
    ctx: &OperatorContext,
    which: Block,
    input: &TruncatedGammaFunction,
    dual: bool,
) -> Result<TruncatedGammaFunction> {
    if dual {
        l_hat_star_block(ctx, input, which, true)
    } else {
        l_hat_block(ctx, input, which)
    }
}

fn l_hat_block(ctx: &OperatorContext, g: &TruncatedGammaFunction, block: Block) -> Result<TruncatedGammaFunction> {
    ctx.check(g)?;
    let grid = ctx.grid();
    let h = grid.cell_volume();
    let n_max = ctx.n_max;
    let death = &ctx.model.death;
    let birth = &ctx.model.birth;
    let mut out = TruncatedGammaFunction::zero(n_max);
    let mut rest = Vec::with_capacity(n_max);
    let mut cand = Vec::new();
    let mut key = Vec::with_capacity(n_max);
    for (sigma, v) in g.iter() {
        if v == 0.0 {
            continue;
        }
        let m = sigma.len();
        for &x in sigma {
            remove_into(sigma, x, &mut rest);
            // death: out[σ ∪ ρ] −= G(σ) K⁻¹d(x, σ∖x)(ρ)
            cand.clear();
            cand.extend(ctx.nbr_death[x as usize].iter().copied().filter(|&y| !contains(sigma, y)));
            let cap = death.max_order().min(n_max - m);
            for_each_subset_upto(&cand, cap, |rho| {
                if !block.keeps(m + rho.len(), m) {
                    return;
                }
                let w = death.k_inverse(x, &rest, rho);
                if w != 0.0 {
                    union_into(sigma, rho, &mut key);
                    out.add(&key, -v * w);
                }
            });
            // birth: out[(σ∖x) ∪ ρ] += G(σ) K⁻¹b(x, σ∖x)(ρ) h
            cand.clear();
            cand.extend(ctx.nbr_birth[x as usize].iter().copied().filter(|&y| !contains(sigma, y)));
            let cap = birth.max_order().min(n_max + 1 - m);
            for_each_subset_upto(&cand, cap, |rho| {
                if !block.keeps(m - 1 + rho.len(), m) {
                    return;
                }
                let w = birth.k_inverse(x, &rest, rho);
                if w != 0.0 {
                    union_into(&rest, rho, &mut key);
                    out.add(&key, v * w * h);
                }
            });
        }
    }
    Ok(out)
}

fn l_hat_star_block(
    ctx: &OperatorContext,
    k: &TruncatedGammaFunction,
    block: Block,
    death_diagonal: bool,
) -> Result<TruncatedGammaFunction> {
    ctx.check(k)?;
    let grid = ctx.grid();
    let h = grid.cell_volume();
    let n_max = ctx.n_max;
    let zt = ctx.zeta_trunc;
    let death = &ctx.model.death;
    let birth = &ctx.model.birth;
    let n_cells = grid.cell_count() as Cell;
    let mut out = TruncatedGammaFunction::zero(n_max);
    let mut rest = Vec::with_capacity(n_max);
    let mut key = Vec::with_capacity(n_max + 1);
    for (sigma, v) in k.iter() {
        if v == 0.0 {
            continue;
        }
        let m = sigma.len();
        for_each_split(sigma, |eta, zeta| {
            if zeta.len() > zt {
                return;
            }
            let weight = v * powi(h, zeta.len() as u32);
            // death: out[η] −= Σ_{x∈η} k(η ∪ ζ) K⁻¹d(x, η∖x)(ζ) h^{|ζ|}
            let death_on = !eta.is_empty()
                && block.keeps(eta.len(), m)
                && (death_diagonal || !zeta.is_empty())
                && zeta.len() <= death.max_order();
            if death_on {
                let mut acc = 0.0;
                for &x in eta {
                    if zeta.iter().all(|&y| death.reaches(x, y)) {
                        remove_into(eta, x, &mut rest);
                        acc += death.k_inverse(x, &rest, zeta);
                    }
                }
                if acc != 0.0 {
                    out.add(eta, -weight * acc);
                }
            }
            // birth: out[η ∪ x] += k(η ∪ ζ) K⁻¹b(x, η)(ζ) h^{|ζ|}, x ∉ η ∪ ζ
            if eta.len() + 1 > n_max || !block.keeps(eta.len() + 1, m) || zeta.len() > birth.max_order() {
                return;
            }
            let mut push = |x: Cell| {
                let w = birth.k_inverse(x, eta, zeta);
                if w != 0.0 {
                    insert_into(eta, x, &mut key);
                    out.add(&key, weight * w);
                }
            };
            if zeta.is_empty() {
                for x in 0..n_cells {
                    if !contains(sigma, x) {
                        push(x);
                    }
                }
            } else {
                let anchor = zeta[0];
                for &o in birth.reach() {
                    let x = grid.shift_back(anchor, o);
                    if !contains(sigma, x) && zeta.iter().all(|&y| birth.reaches(x, y)) {
                        push(x);
                    }
                }
            }
        });
    }
    Ok(out)
}

/// The generalized Kirkwood–Salzburg operator: `L̂*k` without the `−D(η)k(η)`
/// diagonal, divided by `D(η)`; `(Sk)(∅) = 0`.
pub fn ks_operator(ctx: &OperatorContext, k: &TruncatedGammaFunction) -> Result<TruncatedGammaFunction> {
    let raw = l_hat_star_block(ctx, k, Block::Full, false)?;
    let mut out = TruncatedGammaFunction::zero(ctx.n_max);
    for (eta, v) in raw.iter() {
        if eta.is_empty() || v == 0.0 {
            continue;
        }
        let d = death_energy(&ctx.model, eta);
        if !(d > 0.0) {
            return Err(Error::ZeroDeathEnergy(eta.to_vec()));
        }
        out.set(eta, v / d);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gamma::{duality_pairing, k_transform_partial};
    use crate::kernel::{Kernel, KernelShape};
    use crate::rates::{PresetKind, RateSpec};
    use crate::subsets::for_each_configuration;

    fn grid() -> GridGeometry {
        GridGeometry::new(1, 8, 4.0).unwrap()
    }

    fn surgailis(g: &GridGeometry) -> BirthDeathModel {
        let n = g.cell_count();
        BirthDeathModel::new(
            g,
            RateSpec::Constant { m: alloc::vec![0.5; n] },
            RateSpec::Constant { m: (0..n).map(|i| 1.0 + 0.1 * i as f64).collect() },
            Some(PresetKind::Surgailis),
        )
        .unwrap()
    }

    fn glauber(g: &GridGeometry) -> BirthDeathModel {
        let n = g.cell_count();
        let phi = Kernel::new(g, KernelShape::Bump { height: 0.8, radius: 1.0 }).unwrap();
        BirthDeathModel::new(
            g,
            RateSpec::Exponential { prefactor: alloc::vec![0.3; n], c: phi.clone(), s: -0.5 },
            RateSpec::Exponential { prefactor: alloc::vec![1.0; n], c: phi, s: 0.5 },
            Some(PresetKind::Glauber),
        )
        .unwrap()
    }

    fn pseudo_random(n_max: usize, g: &GridGeometry, seed: u32) -> TruncatedGammaFunction {
        let mut state = seed.wrapping_mul(2654435761).wrapping_add(12345);
        TruncatedGammaFunction::from_fn(g, n_max, |_| {
            state ^= state << 13;
            state ^= state >> 17;
            state ^= state << 5;
            (state % 2001) as f64 / 1000.0 - 1.0
        })
    }

    #[test]
    fn conservativity_and_count_function() {
        let g = grid();
        let ctx = OperatorContext::new(surgailis(&g), 3).unwrap();
        assert_eq!(apply_l_direct(&ctx, |_| 1.0, &[1, 4]).unwrap(), 0.0);
        let at_empty = apply_l_direct(&ctx, |c| c.len() as f64, &[]).unwrap();
        assert!((at_empty - 0.5 * g.volume()).abs() < 1e-12);
        assert!(apply_l_direct(&ctx, |_| 1.0, &[1, 2, 3]).is_err());
    }

    #[test]
    fn surgailis_count_function_by_hand() {
        // With all-cells quadrature L|·|(γ) = −Σ m + z L^d exactly.
        let g = grid();
        let model = surgailis(&g);
        let ctx = OperatorContext::new(model, 3).unwrap();
        let gamma = [2, 5];
        let v = apply_l_direct(&ctx, |c| c.len() as f64, &gamma).unwrap();
        let expect = -(1.2 + 1.5) + 0.5 * g.volume();
        assert!((v - expect).abs() < 1e-12);
        let empty = ctx.clone().with_birth_quadrature(BirthQuadrature::EmptyCells);
        let v2 = apply_l_direct(&empty, |c| c.len() as f64, &gamma).unwrap();
        assert!((v2 - (expect - 2.0 * 0.5 * g.cell_volume())).abs() < 1e-12);
    }

    #[test]
    fn conjugacy_with_direct_generator() {
        let g = grid();
        for model in [surgailis(&g), glauber(&g)] {
            let ctx = OperatorContext::new(model, 3).unwrap();
            let gf = pseudo_random(3, &g, 7);
            let lg = apply_l_hat(&ctx, &gf).unwrap();
            for_each_configuration(g.cell_count(), 2, |gamma| {
                let lhs = k_transform_partial(&lg, gamma);
                let rhs = apply_l_direct(&ctx, |c| k_transform_partial(&gf, c), gamma).unwrap();
                assert!((lhs - rhs).abs() < 1e-9, "{gamma:?}: {lhs} vs {rhs}");
            });
        }
    }

    #[test]
    fn duality_and_blocks() {
        let g = grid();
        for model in [surgailis(&g), glauber(&g)] {
            let ctx = OperatorContext::new(model, 3).unwrap();
            let gf = pseudo_random(3, &g, 3);
            let k = pseudo_random(3, &g, 11);
            let lhs = duality_pairing(&apply_l_hat(&ctx, &gf).unwrap(), &k, &g).unwrap();
            let rhs = duality_pairing(&gf, &apply_l_hat_star(&ctx, &k).unwrap(), &g).unwrap();
            assert!((lhs - rhs).abs() < 1e-9 * lhs.abs().max(1.0), "{lhs} vs {rhs}");
            for dual in [false, true] {
                let input = if dual { &k } else { &gf };
                let full = operator_blocks(&ctx, Block::Full, input, dual).unwrap();
                let mut sum = TruncatedGammaFunction::zero(3);
                for b in [Block::Diag, Block::Upper, Block::Lower, Block::Residual] {
                    sum = sum.axpy(1.0, &operator_blocks(&ctx, b, input, dual).unwrap());
                }
                assert!(full.max_abs_diff(&sum) < 1e-12);
            }
        }
    }

    #[test]
    fn surgailis_structure() {
        let g = grid();
        let model = surgailis(&g);
        let ctx = OperatorContext::new(model, 3).unwrap();
        let k = pseudo_random(3, &g, 5);
        let lk = apply_l_hat_star(&ctx, &k).unwrap();
        let m = |x: Cell| 1.0 + 0.1 * x as f64;
        for_each_configuration(g.cell_count(), 3, |eta| {
            let mut expect = -eta.iter().map(|&x| m(x)).sum::<f64>() * k.get(eta);
            let mut rest = Vec::new();
            for &x in eta {
                remove_into(eta, x, &mut rest);
                expect += 0.5 * k.get(&rest);
            }
            assert!((lk.get(eta) - expect).abs() < 1e-12);
        });
        let res = operator_blocks(&ctx, Block::Residual, &k, true).unwrap();
        assert_eq!(res.max_abs(), 0.0);
        let upper = operator_blocks(&ctx, Block::Upper, &k, true).unwrap();
        assert_eq!(upper.max_abs(), 0.0);
        // a level-2 quasi-observable: the upper block of L̂ lands on level 1
        let mut g2 = TruncatedGammaFunction::zero(3);
        g2.set(&[1, 3], 1.0);
        let up = operator_blocks(&ctx, Block::Upper, &g2, false).unwrap();
        assert!(up.iter().all(|(c, v)| v == 0.0 || c.len() == 1));
        assert!((up.get(&[1]) - 0.5 * g.cell_volume()).abs() < 1e-15);
    }

    #[test]
    fn glauber_diagonal_contains_death_energy() {
        let g = grid();
        let model = glauber(&g);
        let ctx = OperatorContext::new(model.clone(), 2).unwrap();
        let mut k = TruncatedGammaFunction::zero(2);
        k.set(&[2, 3], 1.0);
        let diag = operator_blocks(&ctx, Block::Diag, &k, true).unwrap();
        // Births from a level-2 entry land on keys containing a cell outside
        // it, so the diagonal at η = σ is the death energy alone.
        let d = death_energy(&model, &[2, 3]);
        assert!((diag.get(&[2, 3]) + d).abs() < 1e-12);
    }

    #[test]
    fn ks_operator_for_free_glauber() {
        let g = grid();
        let n = g.cell_count();
        let z = 0.3;
        let model = BirthDeathModel::new(
            &g,
            RateSpec::Exponential { prefactor: alloc::vec![z; n], c: Kernel::zero(&g), s: -1.0 },
            RateSpec::Exponential { prefactor: alloc::vec![1.0; n], c: Kernel::zero(&g), s: 0.0 },
            Some(PresetKind::Glauber),
        )
        .unwrap();
        let ctx = OperatorContext::new(model, 3).unwrap();
        let k = pseudo_random(3, &g, 9);
        let sk = ks_operator(&ctx, &k).unwrap();
        for_each_configuration(n, 3, |eta| {
            if eta.is_empty() {
                assert_eq!(sk.get(eta), 0.0);
                return;
            }
            let mut rest = Vec::new();
            let mut s = 0.0;
            for &x in eta {
                remove_into(eta, x, &mut rest);
                s += k.get(&rest);
            }
            let expect = z / eta.len() as f64 * s;
            assert!((sk.get(eta) - expect).abs() < 1e-12);
        });
    }
}
