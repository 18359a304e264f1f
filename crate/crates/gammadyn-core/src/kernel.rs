//! Even pair kernels tabulated on grid offsets.
//!
//! A kernel is defined on `ℝ^d∖{0}`; the zero offset is always stored as 0
//! and never read by the rate evaluators (a point does not interact with
//! itself).

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grid::{Cell, GridGeometry};
use crate::math::{abs, exp};

/// Analytic description of a kernel; sampled at cell-centre offsets.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelShape {
    Zero,
    /// `height · 1_{|x| ≤ radius}`.
    Bump { height: f64, radius: f64 },
    /// Probability density uniform on `0 < |x| ≤ radius`, normalized so that
    /// the grid mass `Σ a h^d` is exactly 1.
    Uniform { radius: f64 },
    /// Explicit table of (offset in cell units, value); must be even.
    Table(Vec<([i64; 2], f64)>),
}

impl KernelShape {
    /// Continuum value at distance `r` (used by the particle simulator).
    /// `None` for tables, which have no continuum counterpart.
    pub fn continuum_value(&self, r: f64, dim: usize) -> Option<f64> {
        match self {
            KernelShape::Zero => Some(0.0),
            KernelShape::Bump { height, radius } => Some(if r <= *radius { *height } else { 0.0 }),
            KernelShape::Uniform { radius } => {
                Some(if r <= *radius { 1.0 / ball_volume(*radius, dim) } else { 0.0 })
            }
            KernelShape::Table(_) => None,
        }
    }

    /// Radius beyond which the continuum kernel vanishes.
    pub fn continuum_radius(&self) -> Option<f64> {
        match self {
            KernelShape::Zero => Some(0.0),
            KernelShape::Bump { radius, .. } | KernelShape::Uniform { radius } => Some(*radius),
            KernelShape::Table(_) => None,
        }
    }
}

pub fn ball_volume(r: f64, dim: usize) -> f64 {
    if dim == 1 {
        2.0 * r
    } else {
        core::f64::consts::PI * r * r
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    values: Vec<f64>,
    support: Vec<usize>,
    support_radius: f64,
    shape: KernelShape,
}

impl Kernel {
    pub fn new(grid: &GridGeometry, shape: KernelShape) -> Result<Self> {
        let n = grid.cell_count();
        let mut values = alloc::vec![0.0; n];
        let tol = 1e-9 * grid.spacing();
        match &shape {
            KernelShape::Zero => {}
            KernelShape::Bump { height, radius } => {
                check_finite(*height, "bump height")?;
                for o in 1..n {
                    if grid.offset_length(o) <= radius + tol {
                        values[o] = *height;
                    }
                }
            }
            KernelShape::Uniform { radius } => {
                let inside: Vec<usize> = (1..n).filter(|&o| grid.offset_length(o) <= radius + tol).collect();
                if inside.is_empty() {
                    return Err(Error::Parameter(format!("uniform kernel radius {radius} covers no grid offset")));
                }
                let v = 1.0 / (inside.len() as f64 * grid.cell_volume());
                for o in inside {
                    values[o] = v;
                }
            }
            KernelShape::Table(entries) => {
                let m = grid.cells_per_side() as i64;
                for &(vec, v) in entries {
                    check_finite(v, "kernel table value")?;
                    if vec == [0, 0] {
                        continue;
                    }
                    let wrap = |c: i64| c.rem_euclid(m) as u32;
                    let o = grid.offset_index(grid.cell_at([wrap(vec[0]), wrap(vec[1])]), 0);
                    values[o] = v;
                }
            }
        }
        let support: Vec<usize> = (1..n).filter(|&o| values[o] != 0.0).collect();
        for &o in &support {
            let back = grid.negate_offset(o);
            if values[back] != values[o] {
                return Err(Error::Parameter(format!("kernel is not even at offset {:?}", grid.offset_vector(o))));
            }
        }
        let support_radius = support.iter().map(|&o| grid.offset_length(o)).fold(0.0, f64::max);
        if support_radius >= grid.side_length() / 2.0 {
            return Err(Error::Parameter(format!(
                "kernel support radius {support_radius} must be below L/2 = {}",
                grid.side_length() / 2.0
            )));
        }
        Ok(Self { values, support, support_radius, shape })
    }

    pub fn zero(grid: &GridGeometry) -> Self {
        Self::new(grid, KernelShape::Zero).expect("zero kernel is valid")
    }

    #[inline]
    pub fn value(&self, offset: usize) -> f64 {
        self.values[offset]
    }

    /// `c(x − y)`.
    #[inline]
    pub fn between(&self, grid: &GridGeometry, x: Cell, y: Cell) -> f64 {
        self.values[grid.offset_index(x, y)]
    }

    /// `Σ_{y∈η} c(x − y)`.
    pub fn sum_over(&self, grid: &GridGeometry, x: Cell, eta: &[Cell]) -> f64 {
        eta.iter().map(|&y| self.between(grid, x, y)).sum()
    }

    /// Nonzero offsets (never the zero offset), increasing.
    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn support_radius(&self) -> f64 {
        self.support_radius
    }

    pub fn shape(&self) -> &KernelShape {
        &self.shape
    }

    pub fn is_zero(&self) -> bool {
        self.support.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `Σ |c| h^d`.
    pub fn l1_mass(&self, grid: &GridGeometry) -> f64 {
        self.support.iter().map(|&o| abs(self.values[o])).sum::<f64>() * grid.cell_volume()
    }

    pub fn max_value(&self) -> f64 {
        self.support.iter().map(|&o| self.values[o]).fold(0.0, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.support.iter().map(|&o| self.values[o]).fold(0.0, f64::min)
    }

    pub fn is_nonnegative(&self) -> bool {
        self.min_value() >= 0.0
    }
}

fn check_finite(v: f64, what: &str) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(format!("{what} must be finite")))
    }
}

/// `β_τ = Σ_{x≠0} |e^{τφ(x)} − 1| h^d`.
pub fn beta_tau(phi: &Kernel, tau: f64, grid: &GridGeometry) -> f64 {
    phi.support().iter().map(|&o| abs(exp(tau * phi.value(o)) - 1.0)).sum::<f64>() * grid.cell_volume()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> GridGeometry {
        GridGeometry::new(1, 32, 10.0).unwrap()
    }

    #[test]
    fn uniform_kernel_has_unit_mass() {
        let g = grid();
        let a = Kernel::new(&g, KernelShape::Uniform { radius: 1.0 }).unwrap();
        assert!((a.l1_mass(&g) - 1.0).abs() < 1e-12);
        assert_eq!(a.support().len(), 6);
        assert_eq!(a.value(0), 0.0);
    }

    #[test]
    fn bump_beta_matches_closed_form_up_to_quantization() {
        let g = grid();
        let phi = Kernel::new(&g, KernelShape::Bump { height: 1.0, radius: 0.5 }).unwrap();
        let cells = phi.support().len() as f64;
        let beta = beta_tau(&phi, -1.0, &g);
        assert!((beta - cells * g.cell_volume() * (1.0 - (-1.0f64).exp())).abs() < 1e-14);
        let continuum = 2.0 * 0.5 * (1.0 - (-1.0f64).exp());
        assert!((beta - continuum).abs() <= 2.0 * g.cell_volume());
        assert_eq!(beta_tau(&phi, 0.0, &g), 0.0);
        assert_eq!(beta_tau(&Kernel::zero(&g), -1.0, &g), 0.0);
    }

    #[test]
    fn beta_is_monotone_in_tau() {
        let g = grid();
        let phi = Kernel::new(&g, KernelShape::Bump { height: 0.7, radius: 0.9 }).unwrap();
        let mut last = 0.0;
        for i in 1..=10 {
            let b = beta_tau(&phi, -(i as f64) / 10.0, &g);
            assert!(b >= last);
            last = b;
        }
    }

    #[test]
    fn rejects_odd_or_too_wide_kernels() {
        let g = grid();
        assert!(Kernel::new(&g, KernelShape::Table(alloc::vec![([1, 0], 1.0)])).is_err());
        assert!(Kernel::new(&g, KernelShape::Table(alloc::vec![([1, 0], 1.0), ([-1, 0], 1.0)])).is_ok());
        assert!(Kernel::new(&g, KernelShape::Bump { height: 1.0, radius: 6.0 }).is_err());
    }
}
