//! Uniform cell lists on the periodic box `[0,L)^d` for fixed-radius
//! neighbour queries.

use alloc::vec::Vec;

use crate::math::floor;

#[derive(Debug, Clone)]
pub struct CellList {
    dim: usize,
    side: f64,
    per_side: usize,
    cell_len: f64,
    cells: Vec<Vec<usize>>,
}

impl CellList {
    /// Cells are at least `radius` wide, so a query only touches the `3^d`
    /// surrounding cells.
    pub fn new(dim: usize, side: f64, radius: f64) -> Self {
        let cap = if dim == 1 { 4096 } else { 256 };
        let per_side = if radius > 0.0 { (floor(side / radius) as usize).clamp(1, cap) } else { 1 };
        let count = if dim == 1 { per_side } else { per_side * per_side };
        Self { dim, side, per_side, cell_len: side / per_side as f64, cells: alloc::vec![Vec::new(); count] }
    }

    fn coord(&self, v: f64) -> usize {
        (floor(v / self.cell_len) as usize).min(self.per_side - 1)
    }

    pub fn cell_of(&self, p: [f64; 2]) -> usize {
        if self.dim == 1 {
            self.coord(p[0])
        } else {
            self.coord(p[0]) + self.per_side * self.coord(p[1])
        }
    }

    pub fn insert(&mut self, p: [f64; 2], idx: usize) {
        let c = self.cell_of(p);
        self.cells[c].push(idx);
    }

    pub fn remove(&mut self, p: [f64; 2], idx: usize) {
        let c = self.cell_of(p);
        let list = &mut self.cells[c];
        if let Some(pos) = list.iter().position(|&i| i == idx) {
            list.swap_remove(pos);
        }
    }

    /// Renames point `from` (at `p`) to `to` after a swap-remove.
    pub fn relabel(&mut self, p: [f64; 2], from: usize, to: usize) {
        let c = self.cell_of(p);
        for i in self.cells[c].iter_mut() {
            if *i == from {
                *i = to;
            }
        }
    }

    /// Calls `f(idx)` for every stored point in the cells around `p`
    /// (a superset of the points within the construction radius).
    pub fn for_each_near(&self, p: [f64; 2], mut f: impl FnMut(usize)) {
        let n = self.per_side as i64;
        let span: &[i64] = if n >= 3 { &[-1, 0, 1] } else if n == 2 { &[0, 1] } else { &[0] };
        let cx = self.coord(p[0]) as i64;
        if self.dim == 1 {
            for &dx in span {
                for &i in &self.cells[(cx + dx).rem_euclid(n) as usize] {
                    f(i);
                }
            }
        } else {
            let cy = self.coord(p[1]) as i64;
            for &dy in span {
                for &dx in span {
                    let c = (cx + dx).rem_euclid(n) + n * (cy + dy).rem_euclid(n);
                    for &i in &self.cells[c as usize] {
                        f(i);
                    }
                }
            }
        }
    }

    pub fn side(&self) -> f64 {
        self.side
    }
}

/// Minimal-image distance on the torus.
pub fn torus_distance(dim: usize, side: f64, a: [f64; 2], b: [f64; 2]) -> f64 {
    let wrap = |d: f64| {
        let d = libm::fabs(d);
        if d > 0.5 * side {
            side - d
        } else {
            d
        }
    };
    let dx = wrap(a[0] - b[0]);
    if dim == 1 {
        dx
    } else {
        let dy = wrap(a[1] - b[1]);
        libm::sqrt(dx * dx + dy * dy)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn near_query_covers_radius() {
        let mut cl = CellList::new(1, 10.0, 1.0);
        let pts = [[0.1, 0.0], [9.95, 0.0], [5.0, 0.0], [1.05, 0.0]];
        for (i, p) in pts.iter().enumerate() {
            cl.insert(*p, i);
        }
        let mut seen = Vec::new();
        cl.for_each_near([0.05, 0.0], |i| seen.push(i));
        seen.sort_unstable();
        assert_eq!(seen, [0, 1, 3]);
        assert!((torus_distance(1, 10.0, [0.05, 0.0], [9.95, 0.0]) - 0.1).abs() < 1e-12);
        cl.remove([5.0, 0.0], 2);
        cl.relabel([1.05, 0.0], 3, 2);
        let mut seen = Vec::new();
        cl.for_each_near([1.0, 0.0], |i| seen.push(i));
        seen.sort_unstable();
        assert_eq!(seen, [0, 2]);
    }

    #[test]
    fn two_dimensional_wraps() {
        let mut cl = CellList::new(2, 4.0, 1.0);
        cl.insert([3.9, 3.9], 0);
        let mut hit = false;
        cl.for_each_near([0.05, 0.05], |_| hit = true);
        assert!(hit);
        assert!((torus_distance(2, 4.0, [3.9, 3.9], [0.05, 0.05]) - libm::sqrt(2.0 * 0.15 * 0.15)).abs() < 1e-12);
    }
}
