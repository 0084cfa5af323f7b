use serde::{Deserialize, Serialize};

use crate::error::PotentialError;
use crate::system::Species;

/// One value per unordered species pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeciesPair {
    pub oo: f64,
    pub oh: f64,
    pub hh: f64,
}

impl SpeciesPair {
    pub fn get(&self, a: Species, b: Species) -> f64 {
        match (a, b) {
            (Species::O, Species::O) => self.oo,
            (Species::H, Species::H) => self.hh,
            _ => self.oh,
        }
    }

    fn all(&self) -> [f64; 3] {
        [self.oo, self.oh, self.hh]
    }
}

/// Lennard-Jones per species pair, multiplied by a quintic switch that takes
/// it smoothly (C²) to zero between `r_on` and `r_c`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairAnalytic {
    pub epsilon: SpeciesPair,
    pub sigma: SpeciesPair,
    pub r_on: f64,
    pub r_c: f64,
}

impl PairAnalytic {
    /// Minima at the water geometry for O–H and H–H, a shallow O–O well.
    pub fn water(r_c: f64) -> Self {
        let s6 = 2f64.powf(1.0 / 6.0);
        Self {
            epsilon: SpeciesPair {
                oo: 0.004,
                oh: 0.005,
                hh: 0.002,
            },
            sigma: SpeciesPair {
                oo: 2.9 / s6,
                oh: crate::system::WATER_OH / s6,
                hh: 1.5139 / s6,
            },
            r_on: 0.75 * r_c,
            r_c,
        }
    }

    pub fn validate(&self) -> Result<(), PotentialError> {
        let ok = self.epsilon.all().iter().all(|e| e.is_finite() && *e >= 0.0)
            && self.sigma.all().iter().all(|s| s.is_finite() && *s > 0.0)
            && self.r_on > 0.0
            && self.r_on < self.r_c
            && self.r_c.is_finite();
        if ok {
            Ok(())
        } else {
            Err(PotentialError::Params(format!(
                "pair model needs eps >= 0, sigma > 0, 0 < r_on < r_c (r_on {}, r_c {})",
                self.r_on, self.r_c
            )))
        }
    }

    /// `(φ(r), dφ/dr)`.
    pub fn eval(&self, a: Species, b: Species, r: f64) -> (f64, f64) {
        if r >= self.r_c {
            return (0.0, 0.0);
        }
        let eps = self.epsilon.get(a, b);
        let sig = self.sigma.get(a, b);
        let sr6 = (sig / r).powi(6);
        let lj = 4.0 * eps * (sr6 * sr6 - sr6);
        let dlj = 4.0 * eps * (-12.0 * sr6 * sr6 + 6.0 * sr6) / r;
        let (s, ds) = switch(r, self.r_on, self.r_c);
        (lj * s, dlj * s + lj * ds)
    }
}

/// `1 - 10x³ + 15x⁴ - 6x⁵` on `x = (r - r_on)/(r_c - r_on)`.
pub fn switch(r: f64, r_on: f64, r_c: f64) -> (f64, f64) {
    if r <= r_on {
        return (1.0, 0.0);
    }
    if r >= r_c {
        return (0.0, 0.0);
    }
    let w = r_c - r_on;
    let x = (r - r_on) / w;
    let x2 = x * x;
    let s = 1.0 - x2 * x * (10.0 - 15.0 * x + 6.0 * x2);
    let ds = -30.0 * x2 * (1.0 - 2.0 * x + x2) / w;
    (s, ds)
}
