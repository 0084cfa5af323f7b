//! Verlet neighbour lists with a skin, built through a cell list.

use serde::{Deserialize, Serialize};

use crate::error::GeometryError;
use crate::geometry::{SimulationBox, Vec3};
use crate::system::System;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Neighbor {
    pub index: usize,
    /// Image of `index` nearest to the owner at build time.
    pub shift: [i32; 3],
}

#[derive(Clone, Debug, PartialEq)]
pub struct NeighborList {
    pub cutoff: f64,
    pub skin: f64,
    pub rebuild_interval: u64,
    /// Full lists: `j ∈ neighbors[i]` iff `i ∈ neighbors[j]`; sorted by index.
    pub neighbors: Vec<Vec<Neighbor>>,
    reference: Vec<Vec3>,
}

pub const DEFAULT_CUTOFF: f64 = 6.0;
pub const DEFAULT_SKIN: f64 = 2.0;
pub const DEFAULT_REBUILD_INTERVAL: u64 = 50;

impl NeighborList {
    pub fn list_radius(&self) -> f64 {
        self.cutoff + self.skin
    }

    pub fn n_pairs(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// True once some atom moved more than half the skin since the build.
    pub fn needs_rebuild(&self, sim_box: &SimulationBox, positions: impl Iterator<Item = Vec3>) -> bool {
        let lim = 0.25 * self.skin * self.skin;
        let mut n = 0;
        for (p, r) in positions.zip(&self.reference) {
            n += 1;
            if sim_box.min_image(p - *r).norm2() > lim {
                return true;
            }
        }
        n != self.reference.len()
    }

    /// Sorted `(i, j)` pairs with `i < j`.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.n_pairs());
        for (i, list) in self.neighbors.iter().enumerate() {
            out.extend(list.iter().filter(|n| n.index > i).map(|n| (i, n.index)));
        }
        out
    }
}

fn image_shift(sim_box: &SimulationBox, raw: Vec3, mi: Vec3) -> [i32; 3] {
    let l = sim_box.lengths();
    let mut s = [0i32; 3];
    for d in 0..3 {
        s[d] = ((mi[d] - raw[d]) / l[d]).round() as i32;
    }
    s
}

pub fn build_neighbor_list(system: &System, cutoff: f64, skin: f64) -> Result<NeighborList, GeometryError> {
    let positions: Vec<Vec3> = system.atoms.iter().map(|a| a.position).collect();
    let mut nl = build_for_positions(&system.sim_box, &positions, cutoff, skin)?;
    for (i, a) in system.atoms.iter().enumerate() {
        let list = &mut nl.neighbors[i];
        list.reserve(a.species.neighbor_capacity().saturating_sub(list.len()));
    }
    Ok(nl)
}

pub fn build_for_positions(sim_box: &SimulationBox, positions: &[Vec3], cutoff: f64, skin: f64) -> Result<NeighborList, GeometryError> {
    let radius = cutoff + skin;
    let half = 0.5 * sim_box.min_edge();
    if !(cutoff > 0.0) || !(skin >= 0.0) || radius >= half {
        return Err(GeometryError::CutoffTooLarge {
            cutoff: radius,
            half_edge: half,
        });
    }
    let n = positions.len();
    let r2 = radius * radius;
    let mut neighbors: Vec<Vec<Neighbor>> = vec![Vec::new(); n];
    let wrapped: Vec<Vec3> = positions.iter().map(|&p| sim_box.wrap(p)).collect();

    let l = sim_box.lengths();
    let ncell: [usize; 3] = std::array::from_fn(|d| ((l[d] / radius).floor() as usize).max(1));
    let mut push = |i: usize, j: usize| {
        let raw = positions[j] - positions[i];
        let mi = sim_box.min_image(raw);
        if mi.norm2() < r2 {
            let shift = image_shift(sim_box, raw, mi);
            neighbors[i].push(Neighbor { index: j, shift });
            neighbors[j].push(Neighbor {
                index: i,
                shift: shift.map(|s| -s),
            });
        }
    };

    if ncell.iter().any(|&c| c < 3) {
        for i in 0..n {
            for j in (i + 1)..n {
                push(i, j);
            }
        }
    } else {
        let cell_of = |p: Vec3| -> [usize; 3] { std::array::from_fn(|d| (((p[d] / l[d]) * ncell[d] as f64) as usize).min(ncell[d] - 1)) };
        let flat = |c: [usize; 3]| c[0] + ncell[0] * (c[1] + ncell[1] * c[2]);
        let mut cells: Vec<Vec<usize>> = vec![Vec::new(); ncell.iter().product()];
        for (i, &p) in wrapped.iter().enumerate() {
            cells[flat(cell_of(p))].push(i);
        }
        for (i, &p) in wrapped.iter().enumerate() {
            let c = cell_of(p);
            for dz in -1i64..=1 {
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let nc: [usize; 3] = std::array::from_fn(|d| {
                            let off = [dx, dy, dz][d];
                            (c[d] as i64 + off).rem_euclid(ncell[d] as i64) as usize
                        });
                        for &j in &cells[flat(nc)] {
                            if j > i {
                                push(i, j);
                            }
                        }
                    }
                }
            }
        }
    }
    for list in &mut neighbors {
        list.sort_by_key(|n| n.index);
    }
    Ok(NeighborList {
        cutoff,
        skin,
        rebuild_interval: DEFAULT_REBUILD_INTERVAL,
        neighbors,
        reference: positions.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{generate_water_box, WaterBoxSpec};

    fn brute_force_pairs(b: &SimulationBox, pos: &[Vec3], radius: f64) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..pos.len() {
            for j in (i + 1)..pos.len() {
                if b.min_image(pos[j] - pos[i]).norm() < radius {
                    out.push((i, j));
                }
            }
        }
        out
    }

    #[test]
    fn single_atom_has_no_neighbours() {
        let b = SimulationBox::cubic(20.0).unwrap();
        let nl = build_for_positions(&b, &[Vec3::new(1.0, 2.0, 3.0)], 6.0, 2.0).unwrap();
        assert!(nl.neighbors[0].is_empty());
    }

    #[test]
    fn boundary_distance() {
        let b = SimulationBox::cubic(20.0).unwrap();
        let eps = 1e-9;
        let far = [Vec3::ZERO, Vec3::new(8.0 + eps, 0.0, 0.0)];
        assert_eq!(build_for_positions(&b, &far, 6.0, 2.0).unwrap().n_pairs(), 0);
        let near = [Vec3::ZERO, Vec3::new(8.0 - eps, 0.0, 0.0)];
        assert_eq!(build_for_positions(&b, &near, 6.0, 2.0).unwrap().n_pairs(), 1);
    }

    #[test]
    fn cutoff_beyond_half_box_is_an_error() {
        let b = SimulationBox::cubic(15.0).unwrap();
        assert!(matches!(
            build_for_positions(&b, &[], 6.0, 2.0),
            Err(GeometryError::CutoffTooLarge { .. })
        ));
    }

    #[test]
    fn matches_all_pairs_oracle_for_128_waters() {
        let sys = generate_water_box(&WaterBoxSpec::new(128, 16.4), 7).unwrap();
        let nl = build_neighbor_list(&sys, 6.0, 2.0).unwrap();
        let pos: Vec<Vec3> = sys.atoms.iter().map(|a| a.position).collect();
        assert_eq!(nl.pairs(), brute_force_pairs(&sys.sim_box, &pos, 8.0));
    }

    #[test]
    fn cell_path_matches_oracle_and_lists_are_symmetric() {
        // 3+ cells per axis exercises the cell-list branch
        let sys = generate_water_box(&WaterBoxSpec::new(150, 19.0), 3).unwrap();
        let nl = build_neighbor_list(&sys, 4.0, 1.0).unwrap();
        let pos: Vec<Vec3> = sys.atoms.iter().map(|a| a.position).collect();
        assert_eq!(nl.pairs(), brute_force_pairs(&sys.sim_box, &pos, 5.0));
        for (i, list) in nl.neighbors.iter().enumerate() {
            for n in list {
                let back = nl.neighbors[n.index].iter().find(|m| m.index == i).unwrap();
                assert_eq!(back.shift, n.shift.map(|s| -s));
                // the stored shift reproduces the minimum image
                let d = pos[n.index] + sys.sim_box.shift_vector(n.shift) - pos[i];
                let mi = sys.sim_box.min_image(pos[n.index] - pos[i]);
                assert!((d - mi).max_abs() < 1e-9);
            }
        }
    }

    #[test]
    fn displacement_trigger() {
        let b = SimulationBox::cubic(20.0).unwrap();
        let mut pos = vec![Vec3::new(1.0, 1.0, 1.0), Vec3::new(4.0, 1.0, 1.0)];
        let nl = build_for_positions(&b, &pos, 6.0, 2.0).unwrap();
        assert!(!nl.needs_rebuild(&b, pos.iter().cloned()));
        pos[0][0] += 1.01;
        assert!(nl.needs_rebuild(&b, pos.iter().cloned()));
    }
}
