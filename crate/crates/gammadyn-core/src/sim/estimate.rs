//! Ensemble estimators of the first two correlation functions and the
//! Mecke-identity check for the Poisson sampler.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use super::cell_list::torus_distance;
use super::{replica_rng, sample_poisson, PointConfiguration};
use crate::error::{Error, Result};
use crate::grid::GridGeometry;
use crate::kernel::ball_volume;
use crate::math::{powi, sqrt};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

impl Estimate {
    /// `|mean − target| ≤ k · stderr`.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.stderr
    }
}

/// Mean with its jackknife standard error (leave-one-out means).
pub fn jackknife_mean(samples: &[f64]) -> Estimate {
    let n = samples.len();
    if n == 0 {
        return Estimate { mean: f64::NAN, stderr: f64::NAN };
    }
    let total: f64 = samples.iter().sum();
    let mean = total / n as f64;
    if n == 1 {
        return Estimate { mean, stderr: f64::INFINITY };
    }
    let nf = n as f64;
    let var: f64 = samples
        .iter()
        .map(|&x| {
            let loo = (total - x) / (nf - 1.0);
            (loo - mean) * (loo - mean)
        })
        .sum();
    Estimate { mean, stderr: sqrt((nf - 1.0) / nf * var) }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadialBin {
    pub r_lo: f64,
    pub r_hi: f64,
    pub value: Estimate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleEstimate {
    /// Per grid cell: count / cell volume.
    pub k1: Vec<Estimate>,
    /// Whole-box density `|γ| / L^d`.
    pub density: Estimate,
    /// Ordered distinct-pair density per separation bin.
    pub k2: Vec<RadialBin>,
    pub replica_count: usize,
}

fn shell_volume(lo: f64, hi: f64, dim: usize) -> f64 {
    ball_volume(hi, dim) - ball_volume(lo, dim)
}

pub fn estimate_correlations(
    states: &[PointConfiguration],
    grid: &GridGeometry,
    radial_bins: usize,
    r_max: f64,
) -> Result<EnsembleEstimate> {
    if states.len() < 2 {
        return Err(Error::Parameter("standard errors need at least two replicas".into()));
    }
    let (dim, side) = (grid.dim(), grid.side_length());
    if states.iter().any(|s| s.dim != dim || s.side != side) {
        return Err(Error::Parameter("replica states and grid describe different boxes".into()));
    }
    if radial_bins > 0 && !(r_max > 0.0 && r_max <= side / 2.0) {
        return Err(Error::Parameter(format!("r_max must lie in (0, L/2], got {r_max}")));
    }
    let vol = powi(side, dim as u32);
    let hv = grid.cell_volume();
    let cells = grid.cell_count();
    let width = r_max / radial_bins.max(1) as f64;
    let mut per_cell = alloc::vec![Vec::with_capacity(states.len()); cells];
    let mut per_bin = alloc::vec![Vec::with_capacity(states.len()); radial_bins];
    let mut dens = Vec::with_capacity(states.len());
    for s in states {
        let mut counts = alloc::vec![0usize; cells];
        for p in &s.points {
            counts[grid.locate(*p) as usize] += 1;
        }
        for (c, n) in counts.iter().enumerate() {
            per_cell[c].push(*n as f64 / hv);
        }
        dens.push(s.len() as f64 / vol);
        let mut pairs = alloc::vec![0usize; radial_bins];
        for (i, a) in s.points.iter().enumerate() {
            for b in &s.points[i + 1..] {
                let d = torus_distance(dim, side, *a, *b);
                if d < r_max {
                    pairs[((d / width) as usize).min(radial_bins - 1)] += 2;
                }
            }
        }
        for (b, n) in pairs.iter().enumerate() {
            let lo = b as f64 * width;
            per_bin[b].push(*n as f64 / (vol * shell_volume(lo, lo + width, dim)));
        }
    }
    Ok(EnsembleEstimate {
        k1: per_cell.iter().map(|v| jackknife_mean(v)).collect(),
        density: jackknife_mean(&dens),
        k2: per_bin
            .iter()
            .enumerate()
            .map(|(b, v)| RadialBin { r_lo: b as f64 * width, r_hi: (b + 1) as f64 * width, value: jackknife_mean(v) })
            .collect(),
        replica_count: states.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeckeReport {
    /// `E Σ_{x∈γ} h(x, γ)`.
    pub lhs: f64,
    /// `z ∫ E h(x, γ ∪ x) dx`.
    pub rhs: f64,
    /// Standard error of the paired difference.
    pub stderr: f64,
    pub passed: bool,
}

/// Monte Carlo check of the Mecke identity for Poisson(`z`) on the torus.
/// `h(x, γ)` receives a point `x` of `γ`; the right side uses `probes`
/// uniform points per replica.
pub fn mecke_check(
    z: f64,
    dim: usize,
    side: f64,
    mut h: impl FnMut([f64; 2], &[[f64; 2]]) -> f64,
    replicas: usize,
    probes: usize,
    seed: u64,
) -> Result<MeckeReport> {
    if replicas < 2 || probes == 0 {
        return Err(Error::Parameter("need at least two replicas and one probe".into()));
    }
    let vol = powi(side, dim as u32);
    let mut lhs_s = Vec::with_capacity(replicas);
    let mut rhs_s = Vec::with_capacity(replicas);
    let mut diff = Vec::with_capacity(replicas);
    for r in 0..replicas {
        let mut rng = replica_rng(seed, r);
        let gamma = sample_poisson(&mut rng, z, dim, side)?;
        let l: f64 = gamma.points.iter().map(|&x| h(x, &gamma.points)).sum();
        let mut with = gamma.points.clone();
        let mut acc = 0.0;
        for _ in 0..probes {
            let u = [rng.random::<f64>() * side, if dim == 2 { rng.random::<f64>() * side } else { 0.0 }];
            with.push(u);
            acc += h(u, &with);
            with.pop();
        }
        let rv = z * vol * acc / probes as f64;
        lhs_s.push(l);
        rhs_s.push(rv);
        diff.push(l - rv);
    }
    let lhs = jackknife_mean(&lhs_s).mean;
    let rhs = jackknife_mean(&rhs_s).mean;
    let d = jackknife_mean(&diff);
    Ok(MeckeReport { lhs, rhs, stderr: d.stderr, passed: d.mean.abs() <= 3.0 * d.stderr })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jackknife_matches_sample_error() {
        let v = [1.0, 2.0, 4.0, 7.0];
        let e = jackknife_mean(&v);
        let m = 3.5;
        let s2 = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / 3.0;
        assert_eq!(e.mean, m);
        assert!((e.stderr - (s2 / 4.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn single_point_estimates() {
        let g = GridGeometry::new(1, 10, 10.0).unwrap();
        let one = PointConfiguration::new(1, 10.0, alloc::vec![[3.5, 0.0]]).unwrap();
        let e = estimate_correlations(&[one.clone(), one], &g, 4, 2.0).unwrap();
        assert_eq!(e.k1[3].mean, 1.0);
        assert_eq!(e.k1[4].mean, 0.0);
        assert!(e.k2.iter().all(|b| b.value.mean == 0.0));
    }

    #[test]
    fn mecke_trivial_cases() {
        let r = mecke_check(0.0, 1, 10.0, |_, _| 1.0, 10, 1, 1).unwrap();
        assert_eq!((r.lhs, r.rhs), (0.0, 0.0));
        assert!(r.passed);
        // h = 1_W: both sides z·|W|
        let r = mecke_check(0.5, 1, 10.0, |x, _| f64::from(u8::from(x[0] < 4.0)), 400, 4, 2).unwrap();
        assert!(r.passed, "{r:?}");
        assert!((r.rhs - 2.0).abs() < 0.3);
    }
}
