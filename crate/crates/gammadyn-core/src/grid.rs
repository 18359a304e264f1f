//! Periodic grid discretization of the torus `[0,L)^d`.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Linear cell index, row-major in the axis order.
pub type Cell = u32;

#[derive(Debug, Clone, PartialEq)]
pub struct GridGeometry {
    dim: usize,
    cells_per_side: u32,
    side_length: f64,
    cell_volume: f64,
}

impl GridGeometry {
    pub fn new(dim: usize, cells_per_side: u32, side_length: f64) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::Grid(format!("dim must be 1 or 2, got {dim}")));
        }
        if cells_per_side < 2 {
            return Err(Error::Grid(format!("need at least 2 cells per side, got {cells_per_side}")));
        }
        if !(side_length > 0.0 && side_length.is_finite()) {
            return Err(Error::Grid(format!("side length must be positive, got {side_length}")));
        }
        if (cells_per_side as u64).pow(dim as u32) > u32::MAX as u64 {
            return Err(Error::Grid("cell count overflows the index type".into()));
        }
        let spacing = side_length / cells_per_side as f64;
        let cell_volume = crate::math::powi(spacing, dim as u32);
        Ok(Self { dim, cells_per_side, side_length, cell_volume })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells_per_side(&self) -> u32 {
        self.cells_per_side
    }

    pub fn side_length(&self) -> f64 {
        self.side_length
    }

    /// `h^d`, the quadrature weight of one cell.
    pub fn cell_volume(&self) -> f64 {
        self.cell_volume
    }

    pub fn spacing(&self) -> f64 {
        self.side_length / self.cells_per_side as f64
    }

    /// `L^d`.
    pub fn volume(&self) -> f64 {
        crate::math::powi(self.side_length, self.dim as u32)
    }

    pub fn cell_count(&self) -> usize {
        (self.cells_per_side as usize).pow(self.dim as u32)
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> {
        0..self.cell_count() as Cell
    }

    pub fn coords(&self, cell: Cell) -> [u32; 2] {
        let m = self.cells_per_side;
        if self.dim == 1 {
            [cell, 0]
        } else {
            [cell % m, cell / m]
        }
    }

    pub fn cell_at(&self, coords: [u32; 2]) -> Cell {
        let m = self.cells_per_side;
        if self.dim == 1 {
            coords[0] % m
        } else {
            coords[0] % m + m * (coords[1] % m)
        }
    }

    /// Index of the wrapped displacement `x − y`; kernels are tabulated on it.
    #[inline]
    pub fn offset_index(&self, x: Cell, y: Cell) -> usize {
        let m = self.cells_per_side;
        if self.dim == 1 {
            ((x + m - y) % m) as usize
        } else {
            let (x0, x1, y0, y1) = (x % m, x / m, y % m, y / m);
            (((x0 + m - y0) % m) + m * ((x1 + m - y1) % m)) as usize
        }
    }

    /// Cell `x + offset`.
    #[inline]
    pub fn shift(&self, x: Cell, offset: usize) -> Cell {
        let m = self.cells_per_side;
        let o = offset as u32;
        if self.dim == 1 {
            (x + o) % m
        } else {
            let (x0, x1) = (x % m, x / m);
            (x0 + o % m) % m + m * ((x1 + o / m) % m)
        }
    }

    /// Cell `x − offset`.
    #[inline]
    pub fn shift_back(&self, x: Cell, offset: usize) -> Cell {
        self.shift(x, self.negate_offset(offset))
    }

    pub fn negate_offset(&self, offset: usize) -> usize {
        let m = self.cells_per_side as usize;
        if self.dim == 1 {
            (m - offset % m) % m
        } else {
            let (o0, o1) = (offset % m, offset / m);
            (m - o0) % m + m * ((m - o1) % m)
        }
    }

    /// Minimal-image displacement of an offset index, in cell units.
    pub fn offset_vector(&self, offset: usize) -> [i64; 2] {
        let m = self.cells_per_side as i64;
        let signed = |c: i64| if 2 * c > m { c - m } else { c };
        if self.dim == 1 {
            [signed(offset as i64), 0]
        } else {
            [signed(offset as i64 % m), signed(offset as i64 / m)]
        }
    }

    /// Euclidean length of the minimal-image displacement of an offset.
    pub fn offset_length(&self, offset: usize) -> f64 {
        let v = self.offset_vector(offset);
        let h = self.spacing();
        let (a, b) = (v[0] as f64 * h, v[1] as f64 * h);
        crate::math::sqrt(a * a + b * b)
    }

    pub fn offset_sum(&self, a: usize, b: usize) -> usize {
        self.offset_index(self.shift(0, a), self.shift_back(0, b))
    }

    /// Checks that `cells` is a strictly increasing list of valid cells.
    pub fn check_configuration(&self, cells: &[Cell]) -> Result<()> {
        let n = self.cell_count() as Cell;
        for (i, &c) in cells.iter().enumerate() {
            if c >= n {
                return Err(Error::Configuration { cells: cells.to_vec(), reason: format!("cell {c} out of range") });
            }
            if i > 0 && cells[i - 1] >= c {
                return Err(Error::Configuration {
                    cells: cells.to_vec(),
                    reason: "cells must be strictly increasing".into(),
                });
            }
        }
        Ok(())
    }

    /// Cell centre in length units.
    pub fn center(&self, cell: Cell) -> [f64; 2] {
        let c = self.coords(cell);
        let h = self.spacing();
        [(c[0] as f64 + 0.5) * h, (c[1] as f64 + 0.5) * h]
    }

    /// Cell containing a continuum point.
    pub fn locate(&self, p: [f64; 2]) -> Cell {
        let h = self.spacing();
        let m = self.cells_per_side;
        let idx = |v: f64| ((crate::math::floor(v / h) as i64).rem_euclid(m as i64)) as u32;
        if self.dim == 1 {
            idx(p[0])
        } else {
            self.cell_at([idx(p[0]), idx(p[1])])
        }
    }
}

/// A validated finite configuration: strictly increasing cell indices.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct LatticeConfiguration(Vec<Cell>);

impl LatticeConfiguration {
    pub fn new(grid: &GridGeometry, mut cells: Vec<Cell>) -> Result<Self> {
        cells.sort_unstable();
        let before = cells.len();
        cells.dedup();
        if cells.len() != before {
            return Err(Error::Configuration { cells, reason: "repeated cell".into() });
        }
        grid.check_configuration(&cells)?;
        Ok(Self(cells))
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn cells(&self) -> &[Cell] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}
