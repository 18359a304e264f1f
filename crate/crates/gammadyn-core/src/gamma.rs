//! Functions on finite configurations, Lebesgue–Poisson quadrature, the
//! K-transform and the norms of the quasi-observable / correlation spaces.
//!
//! A grid configuration `η` has quadrature weight `h^{d|η|}`; summing over
//! unordered tuples absorbs the `1/n!` of the Lebesgue–Poisson measure.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grid::{Cell, GridGeometry};
use crate::math::{abs, powi};
use crate::subsets::{for_each_configuration, for_each_split, union_into};

pub type Level = BTreeMap<Box<[Cell]>, f64>;

/// Levels `0..=n_max` of sparse tables keyed by strictly increasing tuples.
/// Absent keys and keys above `n_max` read as zero.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedGammaFunction {
    n_max: usize,
    levels: Vec<Level>,
}

impl TruncatedGammaFunction {
    pub fn zero(n_max: usize) -> Self {
        let mut levels: Vec<Level> = (0..=n_max).map(|_| Level::new()).collect();
        levels[0].insert(Box::from(&[][..]), 0.0);
        Self { n_max, levels }
    }

    /// `s · 1_{∅}`.
    pub fn empty_indicator(n_max: usize, s: f64) -> Self {
        let mut f = Self::zero(n_max);
        f.set(&[], s);
        f
    }

    /// Tabulates `f` on every configuration of the grid up to `n_max`.
    pub fn from_fn(grid: &GridGeometry, n_max: usize, mut f: impl FnMut(&[Cell]) -> f64) -> Self {
        let mut out = Self::zero(n_max);
        for_each_configuration(grid.cell_count(), n_max, |eta| {
            let v = f(eta);
            if v != 0.0 || eta.is_empty() {
                out.set(eta, v);
            }
        });
        out
    }

    /// The coherent state `e_λ(f)` restricted to levels `≤ n_max`.
    pub fn coherent(grid: &GridGeometry, n_max: usize, f: &[f64]) -> Self {
        Self::from_fn(grid, n_max, |eta| e_lambda(f, eta))
    }

    /// The Poisson correlation function `z^{|η|}`.
    pub fn poisson(grid: &GridGeometry, n_max: usize, z: f64) -> Self {
        Self::from_fn(grid, n_max, |eta| powi(z, eta.len() as u32))
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn level(&self, n: usize) -> &Level {
        &self.levels[n]
    }

    #[inline]
    pub fn get(&self, cells: &[Cell]) -> f64 {
        match self.levels.get(cells.len()) {
            Some(level) => level.get(cells).copied().unwrap_or(0.0),
            None => 0.0,
        }
    }

    /// Stores a value; keys above `n_max` are silently dropped (truncation).
    pub fn set(&mut self, cells: &[Cell], value: f64) {
        debug_assert!(cells.windows(2).all(|w| w[0] < w[1]));
        if let Some(level) = self.levels.get_mut(cells.len()) {
            match level.get_mut(cells) {
                Some(v) => *v = value,
                None => {
                    level.insert(Box::from(cells), value);
                }
            }
        }
    }

    /// Adds to a value; keys above `n_max` are silently dropped.
    #[inline]
    pub fn add(&mut self, cells: &[Cell], value: f64) {
        debug_assert!(cells.windows(2).all(|w| w[0] < w[1]));
        if let Some(level) = self.levels.get_mut(cells.len()) {
            match level.get_mut(cells) {
                Some(v) => *v += value,
                None => {
                    level.insert(Box::from(cells), value);
                }
            }
        }
    }

    /// Stored entries in lexicographic (level, key) order.
    pub fn iter(&self) -> impl Iterator<Item = (&[Cell], f64)> {
        self.levels.iter().flat_map(|l| l.iter().map(|(k, &v)| (&**k, v)))
    }

    pub fn len(&self) -> usize {
        self.levels.iter().map(|l| l.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Highest level holding a nonzero entry (0 if none).
    pub fn max_nonzero_level(&self) -> usize {
        (0..=self.n_max)
            .rev()
            .find(|&n| self.levels[n].values().any(|&v| v != 0.0))
            .unwrap_or(0)
    }

    pub fn map(&self, mut f: impl FnMut(&[Cell], f64) -> f64) -> Self {
        let mut out = self.clone();
        for level in out.levels.iter_mut() {
            for (k, v) in level.iter_mut() {
                *v = f(k, *v);
            }
        }
        out
    }

    pub fn scaled(&self, s: f64) -> Self {
        self.map(|_, v| v * s)
    }

    /// `self + s·other` on the union of keys.
    pub fn axpy(&self, s: f64, other: &Self) -> Self {
        let mut levels = Vec::with_capacity(self.n_max + 1);
        for n in 0..=self.n_max {
            let a = &self.levels[n];
            let level: Level = match other.levels.get(n) {
                None => a.clone(),
                Some(b) => merge(a, b, s),
            };
            levels.push(level);
        }
        Self { n_max: self.n_max, levels }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.axpy(-1.0, other)
    }

    /// Drops all levels above `n`.
    pub fn truncated(&self, n: usize) -> Self {
        let mut out = self.clone();
        for level in out.levels.iter_mut().skip(n + 1) {
            level.clear();
        }
        out
    }

    /// Same values with a different `n_max` (levels above the new cap dropped).
    pub fn with_n_max(&self, n_max: usize) -> Self {
        let mut out = Self::zero(n_max);
        for (k, v) in self.iter() {
            out.set(k, v);
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.iter().fold(0.0, |m, (_, v)| m.max(abs(v)))
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|(_, v)| v.is_finite())
    }

    /// Largest absolute entrywise difference over the union of keys.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let a = self.iter().fold(0.0f64, |m, (k, v)| m.max(abs(v - other.get(k))));
        other.iter().fold(a, |m, (k, v)| m.max(abs(v - self.get(k))))
    }

    /// Removes explicit zeros (except the level-0 scalar).
    pub fn pruned(&self) -> Self {
        let mut out = self.clone();
        for level in out.levels.iter_mut().skip(1) {
            level.retain(|_, v| *v != 0.0);
        }
        out
    }
}

/// `a + s·b` by an ordered merge of the two key sequences.
fn merge(a: &Level, b: &Level, s: f64) -> Level {
    let mut out = Vec::with_capacity(a.len().max(b.len()));
    let mut ia = a.iter().peekable();
    let mut ib = b.iter().peekable();
    loop {
        let next = match (ia.peek(), ib.peek()) {
            (Some((ka, _)), Some((kb, _))) => ka.cmp(kb),
            (Some(_), None) => core::cmp::Ordering::Less,
            (None, Some(_)) => core::cmp::Ordering::Greater,
            (None, None) => break,
        };
        match next {
            core::cmp::Ordering::Less => {
                let (k, v) = ia.next().unwrap();
                out.push((k.clone(), *v));
            }
            core::cmp::Ordering::Greater => {
                let (k, v) = ib.next().unwrap();
                out.push((k.clone(), s * v));
            }
            core::cmp::Ordering::Equal => {
                let (k, va) = ia.next().unwrap();
                let (_, vb) = ib.next().unwrap();
                out.push((k.clone(), va + s * vb));
            }
        }
    }
    out.into_iter().collect()
}

/// `e_λ(f, η) = Π_{x∈η} f(x)`, with `e_λ(f, ∅) = 1`.
#[inline]
pub fn e_lambda(f: &[f64], eta: &[Cell]) -> f64 {
    eta.iter().fold(1.0, |p, &x| p * f[x as usize])
}

/// `∫ F dλ` by unordered-subset quadrature.
pub fn lp_integral(f: &TruncatedGammaFunction, grid: &GridGeometry) -> f64 {
    let h = grid.cell_volume();
    let mut total = 0.0;
    for n in 0..=f.n_max() {
        let level_sum: f64 = f.level(n).values().sum();
        total += level_sum * powi(h, n as u32);
    }
    total
}

/// `(KG)(γ) = Σ_{η⊆γ} G(η)`.
pub fn k_transform(g: &TruncatedGammaFunction, gamma: &[Cell]) -> Result<f64> {
    if gamma.len() > g.n_max() {
        return Err(Error::LevelOverflow { size: gamma.len(), n_max: g.n_max() });
    }
    Ok(k_transform_partial(g, gamma))
}

/// K-transform that reads levels above `n_max` as zero instead of refusing.
pub fn k_transform_partial(g: &TruncatedGammaFunction, gamma: &[Cell]) -> f64 {
    let mut total = 0.0;
    for_each_split(gamma, |eta, _| total += g.get(eta));
    total
}

/// `(K⁻¹F)(η) = Σ_{ξ⊆η} (−1)^{|η∖ξ|} F(ξ)`.
pub fn k_inverse(mut f: impl FnMut(&[Cell]) -> f64, eta: &[Cell]) -> f64 {
    let mut total = 0.0;
    for_each_split(eta, |xi, rest| {
        let v = f(xi);
        if rest.len() % 2 == 0 {
            total += v;
        } else {
            total -= v;
        }
    });
    total
}

/// Tabulates `KG` on every configuration up to `g.n_max()`.
pub fn k_transform_table(g: &TruncatedGammaFunction, grid: &GridGeometry) -> TruncatedGammaFunction {
    TruncatedGammaFunction::from_fn(grid, g.n_max(), |gamma| k_transform_partial(g, gamma))
}

/// Tabulates `K⁻¹F` on every configuration up to `f.n_max()`.
pub fn k_inverse_table(f: &TruncatedGammaFunction, grid: &GridGeometry) -> TruncatedGammaFunction {
    TruncatedGammaFunction::from_fn(grid, f.n_max(), |eta| k_inverse(|xi| f.get(xi), eta))
}

/// `⟨⟨G, k⟩⟩ = ∫ G k dλ`.
pub fn duality_pairing(g: &TruncatedGammaFunction, k: &TruncatedGammaFunction, grid: &GridGeometry) -> Result<f64> {
    if g.n_max() != k.n_max() {
        return Err(Error::NMaxMismatch(g.n_max(), k.n_max()));
    }
    let h = grid.cell_volume();
    let mut total = 0.0;
    for n in 0..=g.n_max() {
        let mut level_sum = 0.0;
        for (key, &v) in g.level(n) {
            level_sum += v * k.get(key);
        }
        total += level_sum * powi(h, n as u32);
    }
    Ok(total)
}

/// Scale `C > 0` of the weighted spaces.
#[derive(Debug, Clone, PartialEq)]
pub struct NormContext {
    pub c: f64,
    pub grid: GridGeometry,
}

impl NormContext {
    pub fn new(c: f64, grid: GridGeometry) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(crate::error::param("C must be positive"));
        }
        Ok(Self { c, grid })
    }

    pub fn with_scale(&self, c: f64) -> Self {
        Self { c, grid: self.grid.clone() }
    }
}

/// `‖G‖_C = ∫ |G| C^{|·|} dλ`.
pub fn norm_lc(g: &TruncatedGammaFunction, ctx: &NormContext) -> f64 {
    let w = ctx.c * ctx.grid.cell_volume();
    let mut total = 0.0;
    for n in 0..=g.n_max() {
        let level_sum: f64 = g.level(n).values().map(|v| abs(*v)).sum();
        total += level_sum * powi(w, n as u32);
    }
    total
}

/// `‖k‖_{K_C} = max |k(η)| C^{−|η|}`.
pub fn norm_kc(k: &TruncatedGammaFunction, ctx: &NormContext) -> f64 {
    let mut m = 0.0f64;
    for n in 0..=k.n_max() {
        let level_max = k.level(n).values().fold(0.0f64, |a, v| a.max(abs(*v)));
        m = m.max(level_max / powi(ctx.c, n as u32));
    }
    m
}

/// `Σ_{|η|=n} |F(η)| h^{dn}` for each level.
pub fn level_l1_masses(f: &TruncatedGammaFunction, grid: &GridGeometry) -> Vec<f64> {
    let h = grid.cell_volume();
    (0..=f.n_max())
        .map(|n| f.level(n).values().map(|v| abs(*v)).sum::<f64>() * powi(h, n as u32))
        .collect()
}

/// Both sides of the Minlos identity
/// `∫ Σ_{ξ⊆η} H(ξ, η∖ξ, η) dλ(η) = ∬ H(ξ, η, η∪ξ) dλ(ξ) dλ(η)`.
///
/// On the grid the right side runs over disjoint pairs only (repeated cells
/// are excluded); `H` must vanish once `|ξ|+|η| > n_max`.
pub fn minlos_check(
    mut h: impl FnMut(&[Cell], &[Cell], &[Cell]) -> f64,
    n_max: usize,
    grid: &GridGeometry,
) -> (f64, f64) {
    let w = grid.cell_volume();
    let n_cells = grid.cell_count();
    let mut lhs = 0.0;
    for_each_configuration(n_cells, n_max, |eta| {
        let mut inner = 0.0;
        for_each_split(eta, |xi, rest| inner += h(xi, rest, eta));
        lhs += inner * powi(w, eta.len() as u32);
    });
    let mut rhs = 0.0;
    let mut union = Vec::with_capacity(n_max);
    for_each_configuration(n_cells, n_max, |xi| {
        let mut inner = 0.0;
        for_each_configuration(n_cells, n_max - xi.len(), |eta| {
            if crate::subsets::is_disjoint(xi, eta) {
                union_into(xi, eta, &mut union);
                inner += h(xi, eta, &union) * powi(w, eta.len() as u32);
            }
        });
        rhs += inner * powi(w, xi.len() as u32);
    });
    (lhs, rhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn grid6() -> GridGeometry {
        GridGeometry::new(1, 6, 3.0).unwrap()
    }

    #[test]
    fn lp_integral_of_empty_indicator_is_one() {
        let g = grid6();
        assert_eq!(lp_integral(&TruncatedGammaFunction::empty_indicator(3, 1.0), &g), 1.0);
        assert_eq!(lp_integral(&TruncatedGammaFunction::zero(3), &g), 0.0);
    }

    #[test]
    fn lp_integral_of_coherent_state_is_elementary_symmetric_sum() {
        // On the grid ∫ e_λ(f) dλ over simple configurations is Π(1 + f h)
        // when n_max covers every cell; the Taylor series of exp differs only
        // through the excluded repeated cells.
        let g = grid6();
        let f = [0.3, -0.2, 0.5, 0.1, 0.7, -0.4];
        let full = TruncatedGammaFunction::coherent(&g, 6, &f);
        let prod: f64 = f.iter().map(|v| 1.0 + v * g.cell_volume()).product();
        assert!((lp_integral(&full, &g) - prod).abs() < 1e-14);
        // Truncated at level 3: the Taylor terms p₁ⁿ/n! corrected for repeated
        // cells via Newton's identities, p_k = Σ (f h)^k.
        let p = |k: i32| f.iter().map(|v| (v * g.cell_volume()).powi(k)).sum::<f64>();
        let (p1, p2, p3) = (p(1), p(2), p(3));
        let simple = 1.0 + p1 + (p1 * p1 - p2) / 2.0 + (p1.powi(3) - 3.0 * p1 * p2 + 2.0 * p3) / 6.0;
        let truncated = lp_integral(&TruncatedGammaFunction::coherent(&g, 3, &f), &g);
        assert!((truncated - simple).abs() < 1e-14);
        let taylor = 1.0 + p1 + p1 * p1 / 2.0 + p1.powi(3) / 6.0;
        assert!((truncated - taylor).abs() <= p2 / 2.0 + (3.0 * p1.abs() * p2 + 2.0 * p3.abs()) / 6.0 + 1e-14);
    }

    #[test]
    fn e_lambda_examples() {
        let f = [2.0; 4];
        assert_eq!(e_lambda(&f, &[]), 1.0);
        assert_eq!(e_lambda(&f, &[0, 3]), 4.0);
        assert_eq!(e_lambda(&[0.0; 4], &[1]), 0.0);
    }

    #[test]
    fn k_transform_of_coherent_state() {
        let g = grid6();
        let f = [0.3, -0.2, 0.5, 0.1, 0.7, -0.4];
        let e = TruncatedGammaFunction::coherent(&g, 3, &f);
        for gamma in [vec![], vec![2], vec![0, 4], vec![1, 3, 5]] {
            let expect: f64 = gamma.iter().map(|&x| 1.0 + f[x as usize]).product();
            assert!((k_transform(&e, &gamma).unwrap() - expect).abs() < 1e-15);
            let back = k_inverse(|xi| xi.iter().map(|&x| 1.0 + f[x as usize]).product(), &gamma);
            assert!((back - e_lambda(&f, &gamma)).abs() < 1e-15);
        }
        assert!(k_transform(&e, &[0, 1, 2, 3]).is_err());
    }

    #[test]
    fn k_inverse_of_one_is_empty_indicator() {
        assert_eq!(k_inverse(|_| 1.0, &[]), 1.0);
        assert_eq!(k_inverse(|_| 1.0, &[2, 4]), 0.0);
    }

    #[test]
    fn norms_of_simple_functions() {
        let g = grid6();
        let ctx = NormContext::new(2.0, g.clone()).unwrap();
        assert_eq!(norm_lc(&TruncatedGammaFunction::empty_indicator(3, 1.0), &ctx), 1.0);
        let k = TruncatedGammaFunction::from_fn(&g, 3, |eta| powi(2.0, eta.len() as u32));
        assert!((norm_kc(&k, &ctx) - 1.0).abs() < 1e-15);
        let mut single = TruncatedGammaFunction::zero(3);
        single.set(&[0, 1], 1.5);
        single.set(&[2, 5], -0.5);
        single.set(&[3, 4], 2.0);
        let h = g.cell_volume();
        assert!((norm_lc(&single, &ctx) - 4.0 * h * h * 4.0).abs() < 1e-14);
    }

    #[test]
    fn pairing_unrolls() {
        let g = grid6();
        let mut gf = TruncatedGammaFunction::zero(2);
        gf.set(&[], 3.0);
        gf.set(&[1], 2.0);
        gf.set(&[0, 5], -1.0);
        let k = TruncatedGammaFunction::poisson(&g, 2, 2.0);
        let h = g.cell_volume();
        let expect = 3.0 + 2.0 * 2.0 * h - 4.0 * h * h;
        assert!((duality_pairing(&gf, &k, &g).unwrap() - expect).abs() < 1e-14);
        assert!(duality_pairing(&gf, &TruncatedGammaFunction::zero(3), &g).is_err());
    }

    #[test]
    fn minlos_mecke_special_case() {
        let g = grid6();
        let hx = [0.2, 0.9, -0.3, 0.4, 0.0, 1.1];
        let (l, r) = minlos_check(
            |xi, eta, _| {
                if xi.len() == 1 && xi.len() + eta.len() <= 3 {
                    hx[xi[0] as usize] * (1.0 + eta.len() as f64)
                } else {
                    0.0
                }
            },
            3,
            &g,
        );
        assert!((l - r).abs() < 1e-12);
        assert_eq!(minlos_check(|_, _, _| 0.0, 3, &g), (0.0, 0.0));
    }
}
