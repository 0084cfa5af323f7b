use serde::{Deserialize, Serialize};

use crate::error::PotentialError;
use crate::geometry::Vec3;

pub type Mat3 = [[f64; 3]; 3];

pub fn mat_vec(m: &Mat3, v: Vec3) -> Vec3 {
    Vec3(std::array::from_fn(|r| m[r][0] * v[0] + m[r][1] * v[1] + m[r][2] * v[2]))
}

/// `Δ = a Σ_j s(r_ij) r̂_ij` over neighbours within `r_c`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WannierModel {
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    pub r_c: f64,
}

fn default_amplitude() -> f64 {
    0.05
}

impl WannierModel {
    pub fn new(r_c: f64) -> Self {
        Self {
            amplitude: default_amplitude(),
            r_c,
        }
    }

    pub fn validate(&self) -> Result<(), PotentialError> {
        if self.amplitude.is_finite() && self.r_c > 0.0 && self.r_c.is_finite() {
            Ok(())
        } else {
            Err(PotentialError::Params(format!(
                "wannier amplitude {} / r_c {}",
                self.amplitude, self.r_c
            )))
        }
    }

    /// `(s, ds/dr)` with `s = (1 - (r/r_c)²)²`.
    pub fn switch(&self, r: f64) -> (f64, f64) {
        if r >= self.r_c {
            return (0.0, 0.0);
        }
        let t = 1.0 - (r / self.r_c).powi(2);
        (t * t, -4.0 * r / (self.r_c * self.r_c) * t)
    }

    pub fn forward(&self, nbrs: &[Vec3]) -> Vec3 {
        let mut d = Vec3::ZERO;
        for &v in nbrs {
            let r = v.norm();
            if r == 0.0 || r >= self.r_c {
                continue;
            }
            d += v * (self.amplitude * self.switch(r).0 / r);
        }
        d
    }

    /// `∂Δ/∂r_ij` per neighbour; `∂Δ/∂R_i` is minus their sum.
    pub fn jacobian(&self, nbrs: &[Vec3]) -> Vec<Mat3> {
        nbrs.iter()
            .map(|&v| {
                let r = v.norm();
                if r == 0.0 || r >= self.r_c {
                    return [[0.0; 3]; 3];
                }
                let (s, ds) = self.switch(r);
                let u = v * (1.0 / r);
                std::array::from_fn(|a| {
                    std::array::from_fn(|b| {
                        let uu = u[a] * u[b];
                        let id = if a == b { 1.0 } else { 0.0 };
                        self.amplitude * (ds * uu + s * (id - uu) / r)
                    })
                })
            })
            .collect()
    }
}

/// Force contributions `-gᵀ ∂Δ/∂R` for the centre and each neighbour.
pub fn vjp(jac: &[Mat3], g: Vec3) -> (Vec3, Vec<Vec3>) {
    let mut centre = Vec3::ZERO;
    let per: Vec<Vec3> = jac
        .iter()
        .map(|j| {
            // the blocks are symmetric, so gᵀJ = J g
            let c = mat_vec(j, g);
            centre += c;
            -c
        })
        .collect();
    (centre, per)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_nbrs(seed: u64, n: usize) -> Vec<Vec3> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                Vec3::new(
                    rng.random_range(-3.0..3.0),
                    rng.random_range(-3.0..3.0),
                    rng.random_range(-3.0..3.0),
                )
            })
            .collect()
    }

    #[test]
    fn trivial_cases() {
        let m = WannierModel::new(4.0);
        assert_eq!(m.forward(&[]), Vec3::ZERO);
        let v = Vec3::new(1.0, 2.0, -0.5);
        assert!(m.forward(&[v, -v]).max_abs() < 1e-16);
        let d = 1.7;
        let got = m.forward(&[Vec3::new(d, 0.0, 0.0)]);
        let s = (1.0 - (d / 4.0) * (d / 4.0)).powi(2);
        assert_eq!(got, Vec3::new(0.05 * s, 0.0, 0.0));
    }

    #[test]
    fn smooth_at_cutoff() {
        let m = WannierModel::new(4.0);
        let (s, ds) = m.switch(4.0 - 1e-7);
        assert!(s < 1e-13 && ds.abs() < 1e-6);
        assert_eq!(m.switch(4.0 + 1e-7), (0.0, 0.0));
    }

    #[test]
    fn vjp_matches_finite_differences_and_is_translation_free() {
        let m = WannierModel::new(4.0);
        let nbrs = rand_nbrs(5, 10);
        let g = Vec3::new(0.3, -1.2, 0.7);
        let (centre, per) = vjp(&m.jacobian(&nbrs), g);
        // forces sum to zero: Δ depends only on differences
        let tot = per.iter().fold(centre, |a, &b| a + b);
        assert!(tot.max_abs() < 1e-12);
        let h = 1e-6;
        for j in 0..nbrs.len() {
            for d in 0..3 {
                let mut p = nbrs.clone();
                p[j][d] += h;
                let mut q = nbrs.clone();
                q[j][d] -= h;
                let fd = (g.dot(m.forward(&p)) - g.dot(m.forward(&q))) / (2.0 * h);
                assert!((-fd - per[j][d]).abs() < 1e-7);
            }
        }
        let zero = vjp(&m.jacobian(&nbrs), Vec3::ZERO);
        assert_eq!(zero.0, Vec3::ZERO);
    }
}
