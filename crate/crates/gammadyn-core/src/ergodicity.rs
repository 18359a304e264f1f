//! Decay of `‖k_t − k_μ‖_{K_C}` along the dual Glauber chain.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::gamma::{norm_kc, NormContext, TruncatedGammaFunction};
use crate::glauber::GlauberChain;
use crate::math::{ln, linear_slope};

#[derive(Debug, Clone, PartialEq)]
pub struct ErgodicityConfig {
    pub delta: f64,
    pub t_max: f64,
    /// Record every `sample_every` chain steps.
    pub sample_every: usize,
    /// Fit window `[t_lo, t_hi]` for the log-linear slope.
    pub window: (f64, f64),
    pub nu: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErgodicityReport {
    pub times: Vec<f64>,
    /// `‖k_t − k_μ‖_{K_C}`.
    pub distances: Vec<f64>,
    /// `max_x |k_t(x) − k_μ(x)|`.
    pub level1: Vec<f64>,
    pub slope: f64,
    pub level1_slope: f64,
    /// `−(1−ν)·0.9`.
    pub threshold: f64,
    pub passed: bool,
}

fn fit(times: &[f64], values: &[f64], window: (f64, f64)) -> f64 {
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (&t, &v) in times.iter().zip(values) {
        if t >= window.0 - 1e-12 && t <= window.1 + 1e-12 && v > 0.0 {
            xs.push(t);
            ys.push(ln(v));
        }
    }
    if xs.len() < 2 {
        f64::NAN
    } else {
        linear_slope(&xs, &ys)
    }
}

/// Evolves `k0` by `P̂*δ` and measures the distance to `k_mu`. Refuses to
/// run unless `zC_φ < (2e)⁻¹` and the restricted contraction condition for
/// `ν` hold.
pub fn ergodicity_experiment(
    chain: &GlauberChain,
    k0: &TruncatedGammaFunction,
    k_mu: &TruncatedGammaFunction,
    cfg: &ErgodicityConfig,
) -> Result<ErgodicityReport> {
    let rep = chain.report();
    let c = chain.params().c;
    if !rep.gibbs_ok {
        return Err(Error::Precondition {
            tag: "LAHT",
            detail: format!("z C_phi = {} is not below 1/(2e)", rep.z * rep.c_phi),
        });
    }
    if !rep.nu_condition(cfg.nu, c) {
        return Err(Error::Precondition {
            tag: "nu-verysmallparam",
            detail: format!("z = {} violates the restricted contraction condition for nu = {}", rep.z, cfg.nu),
        });
    }
    if cfg.sample_every == 0 {
        return Err(Error::Parameter("sample_every must be positive".into()));
    }
    let nc = NormContext::new(c, chain.grid().clone())?;
    let steps = GlauberChain::step_count(cfg.t_max, cfg.delta);
    let (mut times, mut distances, mut level1) = (Vec::new(), Vec::new(), Vec::new());
    chain.chain_trace(k0, cfg.delta, steps, true, |n, k| {
        if n % cfg.sample_every == 0 || n == steps {
            let diff = k.sub(k_mu);
            times.push(n as f64 * cfg.delta);
            distances.push(norm_kc(&diff, &nc));
            level1.push(diff.level(1).iter().map(|(_, v)| v.abs()).fold(0.0, f64::max));
        }
    })?;
    let slope = fit(&times, &distances, cfg.window);
    let level1_slope = fit(&times, &level1, cfg.window);
    let threshold = -(1.0 - cfg.nu) * 0.9;
    Ok(ErgodicityReport { passed: slope <= threshold, times, distances, level1, slope, level1_slope, threshold })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glauber::GlauberParams;
    use crate::grid::GridGeometry;
    use crate::kernel::Kernel;

    #[test]
    fn free_level_one_decay() {
        let g = GridGeometry::new(1, 8, 4.0).unwrap();
        let chain =
            GlauberChain::new(&g, GlauberParams { z: 0.3, phi: Kernel::zero(&g), c: 2.0, volume: None }, 2).unwrap();
        let k0 = TruncatedGammaFunction::poisson(&g, 2, 1.0);
        let k_mu = TruncatedGammaFunction::poisson(&g, 2, 0.3);
        let cfg = ErgodicityConfig { delta: 0.05, t_max: 3.0, sample_every: 2, window: (1.0, 3.0), nu: 0.5 };
        let r = ergodicity_experiment(&chain, &k0, &k_mu, &cfg).unwrap();
        let exact = ln(1.0 - 0.05) / 0.05;
        assert!((r.level1_slope - exact).abs() < 1e-9, "{}", r.level1_slope);
        assert!(r.passed);
        // k0 = k_mu stays put
        let r = ergodicity_experiment(&chain, &k_mu, &k_mu, &cfg).unwrap();
        assert!(r.distances.iter().all(|&d| d <= 1e-15));
    }
}
