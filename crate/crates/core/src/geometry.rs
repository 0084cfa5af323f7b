//! Periodic orthorhombic boxes and a small 3-vector type.

use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

use crate::error::GeometryError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Vec3(pub [f64; 3]);

impl Vec3 {
    pub const ZERO: Vec3 = Vec3([0.0; 3]);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3([x, y, z])
    }

    pub fn dot(self, other: Vec3) -> f64 {
        self.0[0] * other.0[0] + self.0[1] * other.0[1] + self.0[2] * other.0[2]
    }

    pub fn norm2(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm2().sqrt()
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        let [a, b, c] = self.0;
        let [x, y, z] = o.0;
        Vec3([b * z - c * y, c * x - a * z, a * y - b * x])
    }

    pub fn is_finite(self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(self) -> f64 {
        self.0.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(v: [f64; 3]) -> Self {
        Vec3(v)
    }
}

impl From<Vec3> for [f64; 3] {
    fn from(v: Vec3) -> Self {
        v.0
    }
}

impl Index<usize> for Vec3 {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for Vec3 {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2]])
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        for d in 0..3 {
            self.0[d] += o.0[d];
        }
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3([self.0[0] - o.0[0], self.0[1] - o.0[1], self.0[2] - o.0[2]])
    }
}

impl SubAssign for Vec3 {
    fn sub_assign(&mut self, o: Vec3) {
        for d in 0..3 {
            self.0[d] -= o.0[d];
        }
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3([self.0[0] * s, self.0[1] * s, self.0[2] * s])
    }
}

impl Mul<Vec3> for f64 {
    type Output = Vec3;
    fn mul(self, v: Vec3) -> Vec3 {
        v * self
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3([-self.0[0], -self.0[1], -self.0[2]])
    }
}

/// Orthorhombic periodic simulation cell anchored at the origin.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BoxRepr", into = "BoxRepr")]
pub struct SimulationBox {
    lengths: Vec3,
}

#[derive(Serialize, Deserialize)]
struct BoxRepr {
    lengths: [f64; 3],
    #[serde(default = "all_periodic")]
    periodic: [bool; 3],
}

fn all_periodic() -> [bool; 3] {
    [true; 3]
}

impl TryFrom<BoxRepr> for SimulationBox {
    type Error = GeometryError;
    fn try_from(r: BoxRepr) -> Result<Self, GeometryError> {
        if r.periodic != [true; 3] {
            return Err(GeometryError::NonPeriodic);
        }
        SimulationBox::new(Vec3(r.lengths))
    }
}

impl From<SimulationBox> for BoxRepr {
    fn from(b: SimulationBox) -> Self {
        BoxRepr {
            lengths: b.lengths.0,
            periodic: [true; 3],
        }
    }
}

impl SimulationBox {
    pub fn new(lengths: Vec3) -> Result<Self, GeometryError> {
        if lengths.0.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return Err(GeometryError::InvalidBox(lengths.0));
        }
        Ok(Self { lengths })
    }

    pub fn cubic(edge: f64) -> Result<Self, GeometryError> {
        Self::new(Vec3([edge; 3]))
    }

    pub fn lengths(&self) -> Vec3 {
        self.lengths
    }

    pub fn volume(&self) -> f64 {
        self.lengths.0.iter().product()
    }

    pub fn min_edge(&self) -> f64 {
        self.lengths.0.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Minimum-image displacement; each component lands in `[-L/2, L/2)`.
    pub fn min_image(&self, r: Vec3) -> Vec3 {
        let mut out = r;
        for d in 0..3 {
            let l = self.lengths.0[d];
            let mut v = r.0[d] - l * (r.0[d] / l).round();
            // `round` leaves exact half-box values at +L/2; fold them down.
            if v >= 0.5 * l {
                v -= l;
            } else if v < -0.5 * l {
                v += l;
            }
            out.0[d] = v;
        }
        out
    }

    /// Wraps a position into `[0, L)` per axis.
    pub fn wrap(&self, r: Vec3) -> Vec3 {
        let mut out = r;
        for d in 0..3 {
            let l = self.lengths.0[d];
            let mut v = r.0[d] - l * (r.0[d] / l).floor();
            if v >= l {
                v -= l;
            }
            if v < 0.0 {
                v = 0.0;
            }
            out.0[d] = v;
        }
        out
    }

    pub fn contains(&self, r: Vec3) -> bool {
        (0..3).all(|d| r.0[d] >= 0.0 && r.0[d] < self.lengths.0[d])
    }

    /// Translation for an integer image shift.
    pub fn shift_vector(&self, shift: [i32; 3]) -> Vec3 {
        Vec3([
            shift[0] as f64 * self.lengths.0[0],
            shift[1] as f64 * self.lengths.0[1],
            shift[2] as f64 * self.lengths.0[2],
        ])
    }

    pub fn scaled(&self, factors: [usize; 3]) -> Result<Self, GeometryError> {
        Self::new(Vec3([
            self.lengths.0[0] * factors[0] as f64,
            self.lengths.0[1] * factors[1] as f64,
            self.lengths.0[2] * factors[2] as f64,
        ]))
    }
}
