//! Particle containers, water-box generation and box replication.
//!
//! Charges follow a valence convention that keeps every molecule neutral:
//! O carries +6, each H +1 and the Wannier centroid bound to the oxygen -8.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, GeometryError};
use crate::geometry::{SimulationBox, Vec3};

pub const CHARGE_O: f64 = 6.0;
pub const CHARGE_H: f64 = 1.0;
pub const CHARGE_WC: f64 = -8.0;

/// O–H bond length in Å.
pub const WATER_OH: f64 = 0.9572;
/// H–O–H angle in degrees.
pub const WATER_ANGLE_DEG: f64 = 104.52;

/// Hard cap on particles created by replication.
pub const MAX_PARTICLES: usize = 50_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Species {
    O,
    H,
}

impl Species {
    /// Mass in amu.
    pub fn mass(self) -> f64 {
        match self {
            Species::O => 15.999,
            Species::H => 1.008,
        }
    }

    pub fn default_charge(self) -> f64 {
        match self {
            Species::O => CHARGE_O,
            Species::H => CHARGE_H,
        }
    }

    /// Only oxygen binds a Wannier centroid.
    pub fn binds_wc(self) -> bool {
        matches!(self, Species::O)
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Species::O => "O",
            Species::H => "H",
        }
    }

    /// Soft per-species neighbour capacity used to preallocate lists.
    pub fn neighbor_capacity(self) -> usize {
        match self {
            Species::O => 46,
            Species::H => 92,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Atom {
    pub id: u64,
    pub species: Species,
    pub position: Vec3,
    #[serde(default)]
    pub velocity: Vec3,
    pub charge: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WannierCentroid {
    /// Id of the binding oxygen.
    pub binding_atom_id: u64,
    #[serde(default)]
    pub displacement: Vec3,
    pub charge: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct System {
    #[serde(rename = "box")]
    pub sim_box: SimulationBox,
    pub atoms: Vec<Atom>,
    #[serde(default)]
    pub wcs: Vec<WannierCentroid>,
}

impl System {
    pub fn empty(sim_box: SimulationBox) -> Self {
        Self {
            sim_box,
            atoms: Vec::new(),
            wcs: Vec::new(),
        }
    }

    pub fn n_atoms(&self) -> usize {
        self.atoms.len()
    }

    pub fn n_particles(&self) -> usize {
        self.atoms.len() + self.wcs.len()
    }

    pub fn total_charge(&self) -> f64 {
        self.atoms.iter().map(|a| a.charge).sum::<f64>() + self.wcs.iter().map(|w| w.charge).sum::<f64>()
    }

    /// Atom index of each centroid's binding atom.
    pub fn wc_binding_indices(&self) -> Result<Vec<usize>, GeometryError> {
        let by_id: HashMap<u64, usize> = self.atoms.iter().enumerate().map(|(i, a)| (a.id, i)).collect();
        self.wcs
            .iter()
            .map(|w| {
                by_id
                    .get(&w.binding_atom_id)
                    .copied()
                    .ok_or_else(|| GeometryError::InvalidSystem(format!("centroid bound to unknown atom {}", w.binding_atom_id)))
            })
            .collect()
    }

    /// Absolute centroid positions `R_i(n) + Δ_n`, unwrapped.
    pub fn wc_positions(&self, binding: &[usize]) -> Vec<Vec3> {
        self.wcs
            .iter()
            .zip(binding)
            .map(|(w, &i)| self.atoms[i].position + w.displacement)
            .collect()
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let mut seen = HashMap::new();
        for (i, a) in self.atoms.iter().enumerate() {
            if seen.insert(a.id, i).is_some() {
                return Err(GeometryError::InvalidSystem(format!("duplicate atom id {}", a.id)));
            }
            if !a.position.is_finite() || !a.velocity.is_finite() || !a.charge.is_finite() {
                return Err(GeometryError::InvalidSystem(format!("atom {} has non-finite data", a.id)));
            }
        }
        let binding = self.wc_binding_indices()?;
        let mut per_atom = vec![0usize; self.atoms.len()];
        for &i in &binding {
            if !self.atoms[i].species.binds_wc() {
                return Err(GeometryError::InvalidSystem(format!(
                    "centroid bound to non-oxygen atom {}",
                    self.atoms[i].id
                )));
            }
            per_atom[i] += 1;
        }
        for (i, a) in self.atoms.iter().enumerate() {
            if a.species.binds_wc() && per_atom[i] != 1 {
                return Err(GeometryError::InvalidSystem(format!(
                    "oxygen {} has {} centroids, expected 1",
                    a.id, per_atom[i]
                )));
            }
        }
        Ok(())
    }

    pub fn wrap_positions(&mut self) {
        for a in &mut self.atoms {
            a.position = self.sim_box.wrap(a.position);
        }
    }

    pub fn to_json(&self) -> Result<String, Error> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self, Error> {
        let sys: System = serde_json::from_str(s)?;
        sys.validate()?;
        Ok(sys)
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: &Path) -> Result<(), Error> {
        std::fs::write(path, self.to_json()?).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })
    }

    /// Extended-XYZ frame; centroids are written with the symbol `X`.
    pub fn to_extxyz(&self) -> String {
        let l = self.sim_box.lengths();
        let mut out = String::new();
        let _ = writeln!(out, "{}", self.n_particles());
        let _ = writeln!(
            out,
            "Lattice=\"{} 0 0 0 {} 0 0 0 {}\" Properties=species:S:1:pos:R:3:charge:R:1 pbc=\"T T T\"",
            l[0], l[1], l[2]
        );
        for a in &self.atoms {
            let p = a.position;
            let _ = writeln!(out, "{} {:.6} {:.6} {:.6} {:.4}", a.species.symbol(), p[0], p[1], p[2], a.charge);
        }
        if let Ok(binding) = self.wc_binding_indices() {
            for (w, p) in self.wcs.iter().zip(self.wc_positions(&binding)) {
                let _ = writeln!(out, "X {:.6} {:.6} {:.6} {:.4}", p[0], p[1], p[2], w.charge);
            }
        }
        out
    }
}

/// Tile `base` `factors[d]` times along each axis.
pub fn replicate_box(base: &System, factors: [usize; 3]) -> Result<System, GeometryError> {
    replicate_box_with_limit(base, factors, MAX_PARTICLES)
}

pub fn replicate_box_with_limit(base: &System, factors: [usize; 3], limit: usize) -> Result<System, GeometryError> {
    if factors.contains(&0) {
        return Err(GeometryError::InvalidFactors(factors));
    }
    let copies = factors.iter().try_fold(1usize, |acc, &f| acc.checked_mul(f));
    let requested = copies.and_then(|c| c.checked_mul(base.n_particles()));
    match requested {
        Some(n) if n <= limit => {}
        _ => {
            return Err(GeometryError::TooManyParticles {
                requested: requested.unwrap_or(usize::MAX),
                limit,
            })
        }
    }
    let copies = copies.unwrap_or(1);
    if copies == 1 {
        return Ok(base.clone());
    }
    let sim_box = base.sim_box.scaled(factors)?;
    let n = base.atoms.len() as u64;
    let local: HashMap<u64, u64> = base.atoms.iter().enumerate().map(|(i, a)| (a.id, i as u64)).collect();
    let mut atoms = Vec::with_capacity(base.atoms.len() * copies);
    let mut wcs = Vec::with_capacity(base.wcs.len() * copies);
    let mut replica = 0u64;
    for iz in 0..factors[2] {
        for iy in 0..factors[1] {
            for ix in 0..factors[0] {
                let offset = base.sim_box.shift_vector([ix as i32, iy as i32, iz as i32]);
                for (i, a) in base.atoms.iter().enumerate() {
                    atoms.push(Atom {
                        id: replica * n + i as u64,
                        position: sim_box.wrap(a.position + offset),
                        ..a.clone()
                    });
                }
                for w in &base.wcs {
                    let li = *local
                        .get(&w.binding_atom_id)
                        .ok_or_else(|| GeometryError::InvalidSystem(format!("centroid bound to unknown atom {}", w.binding_atom_id)))?;
                    wcs.push(WannierCentroid {
                        binding_atom_id: replica * n + li,
                        ..w.clone()
                    });
                }
                replica += 1;
            }
        }
    }
    Ok(System { sim_box, atoms, wcs })
}

/// Random-insertion water box parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaterBoxSpec {
    pub waters: usize,
    /// Cubic box edge in Å.
    pub edge: f64,
    #[serde(default = "default_min_oo")]
    pub min_oo: f64,
    /// Minimum distance between any two atoms of different molecules.
    #[serde(default = "default_min_inter")]
    pub min_intermolecular: f64,
    #[serde(default = "default_attempts")]
    pub max_attempts: usize,
}

fn default_min_oo() -> f64 {
    2.4
}
fn default_min_inter() -> f64 {
    1.5
}
fn default_attempts() -> usize {
    20_000
}

impl WaterBoxSpec {
    pub fn new(waters: usize, edge: f64) -> Self {
        Self {
            waters,
            edge,
            min_oo: default_min_oo(),
            min_intermolecular: default_min_inter(),
            max_attempts: default_attempts(),
        }
    }
}

/// Body-frame water geometry: O at the origin, H atoms symmetric about +y.
fn water_template() -> [Vec3; 3] {
    let half = 0.5 * WATER_ANGLE_DEG.to_radians();
    [
        Vec3::ZERO,
        Vec3::new(WATER_OH * half.sin(), WATER_OH * half.cos(), 0.0),
        Vec3::new(-WATER_OH * half.sin(), WATER_OH * half.cos(), 0.0),
    ]
}

/// Uniform random rotation (Shoemake's quaternion method).
fn random_rotation(rng: &mut impl Rng) -> [[f64; 3]; 3] {
    let (u1, u2, u3): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
    let tau = std::f64::consts::TAU;
    let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
    let (w, x, y, z) = (
        a * (tau * u2).sin(),
        a * (tau * u2).cos(),
        b * (tau * u3).sin(),
        b * (tau * u3).cos(),
    );
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - z * w), 2.0 * (x * z + y * w)],
        [2.0 * (x * y + z * w), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - x * w)],
        [2.0 * (x * z - y * w), 2.0 * (y * z + x * w), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

fn rotate(m: &[[f64; 3]; 3], v: Vec3) -> Vec3 {
    Vec3::new(
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    )
}

/// Random insertion of rigid waters with one centroid per oxygen (Δ = 0).
pub fn generate_water_box(spec: &WaterBoxSpec, seed: u64) -> Result<System, GeometryError> {
    let sim_box = SimulationBox::cubic(spec.edge)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let template = water_template();
    let mut placed: Vec<[Vec3; 3]> = Vec::with_capacity(spec.waters);
    let min_oo2 = spec.min_oo * spec.min_oo;
    let min_inter2 = spec.min_intermolecular * spec.min_intermolecular;

    for molecule in 0..spec.waters {
        let mut ok = false;
        for _ in 0..spec.max_attempts {
            let o = Vec3::new(
                rng.random::<f64>() * spec.edge,
                rng.random::<f64>() * spec.edge,
                rng.random::<f64>() * spec.edge,
            );
            let rot = random_rotation(&mut rng);
            let cand = template.map(|t| o + rotate(&rot, t));
            let clash = placed.iter().any(|other| {
                if sim_box.min_image(other[0] - cand[0]).norm2() < min_oo2 {
                    return true;
                }
                other
                    .iter()
                    .any(|p| cand.iter().any(|q| sim_box.min_image(*p - *q).norm2() < min_inter2))
            });
            if !clash {
                placed.push(cand);
                ok = true;
                break;
            }
        }
        if !ok {
            return Err(GeometryError::PackingFailed {
                molecule,
                attempts: spec.max_attempts,
            });
        }
    }

    let mut atoms = Vec::with_capacity(3 * spec.waters);
    let mut wcs = Vec::with_capacity(spec.waters);
    for mol in &placed {
        let o_id = atoms.len() as u64;
        for (k, &p) in mol.iter().enumerate() {
            let species = if k == 0 { Species::O } else { Species::H };
            atoms.push(Atom {
                id: atoms.len() as u64,
                species,
                position: sim_box.wrap(p),
                velocity: Vec3::ZERO,
                charge: species.default_charge(),
            });
        }
        wcs.push(WannierCentroid {
            binding_atom_id: o_id,
            displacement: Vec3::ZERO,
            charge: CHARGE_WC,
        });
    }
    Ok(System { sim_box, atoms, wcs })
}
