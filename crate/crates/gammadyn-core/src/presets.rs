//! Continuum model descriptions shared by the grid hierarchy and the
//! particle simulator, and the bundled parameter sets.

use alloc::format;
use alloc::vec;

use crate::error::{Error, Result};
use crate::grid::GridGeometry;
use crate::kernel::{Kernel, KernelShape};
use crate::rates::{BirthDeathModel, PresetKind, RateSpec};

/// Homogeneous birth-and-death model, independent of any discretization.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    /// `d ≡ m`, `b ≡ z`.
    Surgailis { m: f64, z: f64 },
    /// `d(x,γ) = m e^{sE^φ(x,γ)}`, `b(x,γ) = z e^{(s−1)E^φ(x,γ)}`, `φ ≥ 0`.
    Glauber { z: f64, m: f64, s: f64, phi: KernelShape },
    /// `d(x,γ) = m + κ⁻ Σ a⁻(x−y)`, `b(x,γ) = κ + κ⁺ Σ a⁺(x−y)`; `κ = 0` is
    /// the plain model, `κ > 0` the modified one.
    Bdlp { m: f64, kappa_minus: f64, a_minus: KernelShape, kappa: f64, kappa_plus: f64, a_plus: KernelShape },
    /// `d ≡ m`, `b(x,γ) = κ Σ a(x−y) · e^{Σ φ(x−y)}`.
    Contact { m: f64, kappa: f64, a: KernelShape, phi: KernelShape },
}

pub const PRESET_NAMES: [&str; 6] = ["surgailis", "glauber_free", "glauber_bump", "bdlp", "bdlp_modified", "contact"];

/// Bundled parameter sets (intended for `d = 1`, `L = 10`, `C = 2`).
pub fn preset(name: &str) -> Option<ModelSpec> {
    let uniform = KernelShape::Uniform { radius: 1.0 };
    Some(match name {
        "surgailis" => ModelSpec::Surgailis { m: 1.0, z: 0.5 },
        "glauber_free" => ModelSpec::Glauber { z: 0.3, m: 1.0, s: 0.0, phi: KernelShape::Zero },
        "glauber_bump" => {
            ModelSpec::Glauber { z: 0.2, m: 1.0, s: 0.0, phi: KernelShape::Bump { height: 1.0, radius: 0.5 } }
        }
        // δ = m/(Cκ⁻) − 4 = 0.1 at C = 2
        "bdlp" => ModelSpec::Bdlp {
            m: 1.0,
            kappa_minus: 1.0 / (4.1 * 2.0),
            a_minus: uniform.clone(),
            kappa: 0.0,
            kappa_plus: 0.05,
            a_plus: uniform,
        },
        // b = z·d with z = 0.3
        "bdlp_modified" => ModelSpec::Bdlp {
            m: 1.0,
            kappa_minus: 0.2,
            a_minus: uniform.clone(),
            kappa: 0.3,
            kappa_plus: 0.06,
            a_plus: uniform,
        },
        "contact" => ModelSpec::Contact {
            m: 1.0,
            kappa: 0.3,
            a: uniform,
            phi: KernelShape::Bump { height: -0.5, radius: 0.5 },
        },
        _ => return None,
    })
}

impl ModelSpec {
    pub fn kind(&self) -> PresetKind {
        match self {
            ModelSpec::Surgailis { .. } => PresetKind::Surgailis,
            ModelSpec::Glauber { .. } => PresetKind::Glauber,
            ModelSpec::Bdlp { kappa, .. } if *kappa == 0.0 => PresetKind::Bdlp,
            ModelSpec::Bdlp { .. } => PresetKind::BdlpModified,
            ModelSpec::Contact { .. } => PresetKind::Contact,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = |v: f64, what: &str| -> Result<()> {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Parameter(format!("{what} must be finite and nonnegative, got {v}")))
            }
        };
        match self {
            ModelSpec::Surgailis { m, z } => {
                nonneg(*m, "m")?;
                nonneg(*z, "z")
            }
            ModelSpec::Glauber { z, m, s, .. } => {
                nonneg(*z, "z")?;
                nonneg(*m, "m")?;
                if !s.is_finite() {
                    return Err(Error::Parameter(format!("s must be finite, got {s}")));
                }
                Ok(())
            }
            ModelSpec::Bdlp { m, kappa_minus, kappa, kappa_plus, .. } => {
                nonneg(*m, "m")?;
                nonneg(*kappa_minus, "kappa_minus")?;
                nonneg(*kappa, "kappa")?;
                nonneg(*kappa_plus, "kappa_plus")
            }
            ModelSpec::Contact { m, kappa, .. } => {
                nonneg(*m, "m")?;
                nonneg(*kappa, "kappa")
            }
        }
    }

    /// Grid version of the model.
    pub fn to_model(&self, grid: &GridGeometry) -> Result<BirthDeathModel> {
        self.validate()?;
        let n = grid.cell_count();
        let (birth, death) = match self {
            ModelSpec::Surgailis { m, z } => (RateSpec::Constant { m: vec![*z; n] }, RateSpec::Constant { m: vec![*m; n] }),
            ModelSpec::Glauber { z, m, s, phi } => {
                let phi = Kernel::new(grid, phi.clone())?;
                if !phi.is_nonnegative() {
                    return Err(Error::Parameter("the Glauber potential must be nonnegative".into()));
                }
                (
                    RateSpec::Exponential { prefactor: vec![*z; n], c: phi.clone(), s: s - 1.0 },
                    RateSpec::Exponential { prefactor: vec![*m; n], c: phi, s: *s },
                )
            }
            ModelSpec::Bdlp { m, kappa_minus, a_minus, kappa, kappa_plus, a_plus } => (
                RateSpec::Linear {
                    base: vec![*kappa; n],
                    scale: vec![*kappa_plus; n],
                    c: Kernel::new(grid, a_plus.clone())?,
                },
                RateSpec::Linear {
                    base: vec![*m; n],
                    scale: vec![*kappa_minus; n],
                    c: Kernel::new(grid, a_minus.clone())?,
                },
            ),
            ModelSpec::Contact { m, kappa, a, phi } => (
                RateSpec::LinearTimesExponential {
                    scale: vec![*kappa; n],
                    c1: Kernel::new(grid, a.clone())?,
                    c2: Kernel::new(grid, phi.clone())?,
                },
                RateSpec::Constant { m: vec![*m; n] },
            ),
        };
        BirthDeathModel::new(grid, birth, death, Some(self.kind()))
    }

    /// Activity of the Poisson measure that is reversible for the model, if
    /// the rates satisfy `b = z·d` identically.
    pub fn detailed_balance_activity(&self) -> Option<f64> {
        match self {
            ModelSpec::Surgailis { m, z } if *m > 0.0 => Some(z / m),
            ModelSpec::Glauber { z, phi: KernelShape::Zero, m, .. } if *m > 0.0 => Some(z / m),
            ModelSpec::Bdlp { m, kappa_minus, a_minus, kappa, kappa_plus, a_plus } if *m > 0.0 => {
                let z = kappa / m;
                let same_kernel = a_minus == a_plus || *kappa_minus == 0.0 && *kappa_plus == 0.0;
                let rel = (kappa_plus - z * kappa_minus).abs();
                (same_kernel && rel <= 1e-12 * kappa_plus.abs().max(1.0)).then_some(z)
            }
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::compute_bounds;

    #[test]
    fn presets_build_and_satisfy_their_conditions() {
        let g = GridGeometry::new(1, 32, 10.0).unwrap();
        for name in PRESET_NAMES {
            let spec = preset(name).unwrap();
            let model = spec.to_model(&g).unwrap();
            let b = compute_bounds(&model, 2.0, 2).unwrap();
            if name != "contact" {
                assert!(b.stationary_ok, "{name}: theta = {}", b.theta());
            }
            if matches!(name, "bdlp" | "bdlp_modified" | "surgailis") {
                assert_eq!(b.preset_conditions_ok, Some(true), "{name}");
            }
        }
        assert!(preset("nope").is_none());
    }

    #[test]
    fn detailed_balance_detection() {
        assert_eq!(preset("bdlp_modified").unwrap().detailed_balance_activity(), Some(0.3));
        assert_eq!(preset("bdlp").unwrap().detailed_balance_activity(), None);
        assert_eq!(preset("glauber_free").unwrap().detailed_balance_activity(), Some(0.3));
    }
}
