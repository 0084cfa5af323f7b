//! Gaussian-charge k-space electrostatics over ions and Wannier centroids.

mod bspline;
mod direct;
mod pppm;

pub use bspline::{bspline_hat, bspline_weights, MAX_ORDER, MIN_ORDER};
pub use direct::{ewald_energy_direct, ewald_forces_direct, k_modes, structure_factor, KMode};
pub use pppm::{DftBackend, FieldMeshes, Pppm, PppmReport};

use serde::{Deserialize, Serialize};

use crate::error::ElectrostaticsError;
use crate::geometry::{SimulationBox, Vec3};
use crate::system::System;

/// `L` with `exp(-π²L²/β²) = 1e-7`.
pub fn default_k_cutoff(beta: f64) -> f64 {
    beta * 1.0e7f64.ln().sqrt() / std::f64::consts::PI
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EwaldParams {
    /// Gaussian width parameter, 1/Å.
    pub beta: f64,
    /// k-space cutoff on `|m|`, 1/Å.
    pub k_cutoff: f64,
    pub mesh: [usize; 3],
    /// B-spline assignment order.
    #[serde(default = "default_order")]
    pub order: usize,
}

fn default_order() -> usize {
    4
}

impl EwaldParams {
    pub fn new(beta: f64, mesh: [usize; 3]) -> Self {
        Self {
            beta,
            k_cutoff: default_k_cutoff(beta),
            mesh,
            order: default_order(),
        }
    }

    /// Every violated constraint, for exhaustive reporting.
    pub fn problems(&self, sim_box: &SimulationBox) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            out.push(format!("beta must be positive, got {}", self.beta));
        }
        if !(self.k_cutoff > 0.0 && self.k_cutoff.is_finite()) {
            out.push(format!("k_cutoff must be positive, got {}", self.k_cutoff));
        }
        if !(MIN_ORDER..=MAX_ORDER).contains(&self.order) {
            out.push(format!("order must be in {MIN_ORDER}..={MAX_ORDER}, got {}", self.order));
        }
        let l = sim_box.lengths();
        for d in 0..3 {
            if self.mesh[d] < 2 {
                out.push(format!("mesh[{d}] must be at least 2, got {}", self.mesh[d]));
                continue;
            }
            let nyquist = self.mesh[d] as f64 / (2.0 * l[d]);
            if self.k_cutoff >= nyquist {
                out.push(format!(
                    "mesh[{d}] = {} does not resolve k_cutoff {:.4} (Nyquist {:.4} 1/Å)",
                    self.mesh[d], self.k_cutoff, nyquist
                ));
            }
        }
        out
    }

    pub fn validate(&self, sim_box: &SimulationBox) -> Result<(), ElectrostaticsError> {
        let p = self.problems(sim_box);
        if p.is_empty() {
            Ok(())
        } else {
            Err(ElectrostaticsError::Params(p.join("; ")))
        }
    }

    /// `exp(-π²m²/β²)/m²`.
    pub fn green(&self, m2: f64) -> f64 {
        (-std::f64::consts::PI.powi(2) * m2 / (self.beta * self.beta)).exp() / m2
    }
}

/// Point charges: ions first, then centroids.
#[derive(Clone, Debug, PartialEq)]
pub struct ChargeSet {
    pub positions: Vec<Vec3>,
    pub charges: Vec<f64>,
    pub n_ions: usize,
}

impl ChargeSet {
    pub fn from_system(system: &System, wc_positions: &[Vec3]) -> Self {
        let mut positions: Vec<Vec3> = system.atoms.iter().map(|a| a.position).collect();
        let mut charges: Vec<f64> = system.atoms.iter().map(|a| a.charge).collect();
        positions.extend_from_slice(wc_positions);
        charges.extend(system.wcs.iter().map(|w| w.charge));
        Self {
            positions,
            charges,
            n_ions: system.n_atoms(),
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Energy and its gradient with respect to each charge position.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LongRange {
    pub energy: f64,
    pub grad: Vec<Vec3>,
}

impl LongRange {
    pub fn ion_grad(&self, n_ions: usize) -> &[Vec3] {
        &self.grad[..n_ions]
    }

    pub fn wc_grad(&self, n_ions: usize) -> &[Vec3] {
        &self.grad[n_ions..]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_cutoff_truncates_at_1e7() {
        let p = EwaldParams::new(0.3, [16; 3]);
        let m2 = p.k_cutoff * p.k_cutoff;
        assert!((p.green(m2) * m2 - 1e-7).abs() < 1e-15);
    }

    #[test]
    fn nyquist_and_order_checks() {
        let b = SimulationBox::cubic(10.0).unwrap();
        assert!(EwaldParams::new(0.3, [16; 3]).validate(&b).is_ok());
        let coarse = EwaldParams::new(0.3, [6, 16, 16]);
        assert_eq!(coarse.problems(&b).len(), 1);
        let bad = EwaldParams {
            beta: -1.0,
            k_cutoff: 0.2,
            mesh: [16; 3],
            order: 9,
        };
        assert_eq!(bad.problems(&b).len(), 2);
    }
}
