//! Node-level domain decomposition: subdomains, particle ownership and ghost
//! regions.

use serde::{Deserialize, Serialize};

use crate::error::{GeometryError, Result};
use crate::geometry::{SimulationBox, Vec3};
use crate::simnet::{Network, RankId};
use crate::system::System;

/// Bytes charged per particle record (position + id).
pub const PARTICLE_RECORD_BYTES: usize = 32;

#[derive(Clone, Debug, PartialEq)]
pub struct NodeTopology {
    node_grid: [usize; 3],
    ranks_per_node: usize,
    sim_box: SimulationBox,
    /// Interior face coordinates per axis (`grid[d] - 1` values).
    faces: [Vec<f64>; 3],
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Subdomain {
    pub lo: Vec3,
    pub hi: Vec3,
}

impl Subdomain {
    /// Euclidean distance from `p` to the box; zero inside.
    pub fn distance(&self, p: Vec3) -> f64 {
        let mut d2 = 0.0;
        for d in 0..3 {
            let gap = (self.lo[d] - p[d]).max(p[d] - self.hi[d]).max(0.0);
            d2 += gap * gap;
        }
        d2.sqrt()
    }

    pub fn center(&self) -> Vec3 {
        (self.lo + self.hi) * 0.5
    }
}

impl NodeTopology {
    pub fn new(node_grid: [usize; 3], ranks_per_node: usize, sim_box: SimulationBox) -> Result<Self, GeometryError> {
        if node_grid.contains(&0) || ranks_per_node == 0 {
            return Err(GeometryError::InvalidTopology(node_grid));
        }
        let l = sim_box.lengths();
        let faces = std::array::from_fn(|d| (1..node_grid[d]).map(|k| l[d] * k as f64 / node_grid[d] as f64).collect());
        Ok(Self {
            node_grid,
            ranks_per_node,
            sim_box,
            faces,
        })
    }

    pub fn grid(&self) -> [usize; 3] {
        self.node_grid
    }

    pub fn ranks_per_node(&self) -> usize {
        self.ranks_per_node
    }

    pub fn n_nodes(&self) -> usize {
        self.node_grid.iter().product()
    }

    pub fn sim_box(&self) -> &SimulationBox {
        &self.sim_box
    }

    /// x-fastest flattening.
    pub fn node_index(&self, c: [usize; 3]) -> usize {
        c[0] + self.node_grid[0] * (c[1] + self.node_grid[1] * c[2])
    }

    pub fn node_coords(&self, n: usize) -> [usize; 3] {
        let g = self.node_grid;
        [n % g[0], (n / g[0]) % g[1], n / (g[0] * g[1])]
    }

    fn bound(&self, d: usize, k: usize) -> f64 {
        if k == 0 {
            0.0
        } else if k == self.node_grid[d] {
            self.sim_box.lengths()[d]
        } else {
            self.faces[d][k - 1]
        }
    }

    pub fn subdomain(&self, n: usize) -> Subdomain {
        let c = self.node_coords(n);
        Subdomain {
            lo: Vec3(std::array::from_fn(|d| self.bound(d, c[d]))),
            hi: Vec3(std::array::from_fn(|d| self.bound(d, c[d] + 1))),
        }
    }

    /// Slab index along axis `d`; a coordinate on an interior face goes to
    /// the lower slab.
    pub fn axis_cell(&self, d: usize, x: f64) -> usize {
        self.faces[d].partition_point(|&f| f < x)
    }

    /// Owning node of a position (wrapped first).
    pub fn node_of(&self, p: Vec3) -> usize {
        let w = self.sim_box.wrap(p);
        self.node_index(std::array::from_fn(|d| self.axis_cell(d, w[d])))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Assignment {
    pub atom_node: Vec<usize>,
    /// Centroids follow their binding atom.
    pub wc_node: Vec<usize>,
    /// Atom indices per node, ascending.
    pub local: Vec<Vec<usize>>,
}

impl Assignment {
    pub fn counts(&self) -> Vec<usize> {
        self.local.iter().map(Vec::len).collect()
    }
}

pub fn decompose(system: &System, topo: &NodeTopology) -> Result<Assignment, GeometryError> {
    let binding = system.wc_binding_indices()?;
    let atom_node: Vec<usize> = system.atoms.iter().map(|a| topo.node_of(a.position)).collect();
    let wc_node = binding.iter().map(|&i| atom_node[i]).collect();
    let mut local = vec![Vec::new(); topo.n_nodes()];
    for (i, &n) in atom_node.iter().enumerate() {
        local[n].push(i);
    }
    Ok(Assignment { atom_node, wc_node, local })
}

/// Each rank starts with a round-robin slice of its node's atoms; one
/// allgather per node leaves every rank with the node's full local set.
pub fn share_within_nodes(net: &mut Network, topo: &NodeTopology, assignment: &Assignment) -> Result<Vec<Vec<usize>>> {
    let prev = net.phase().to_string();
    net.set_phase("intra_node_allgather");
    let r = topo.ranks_per_node();
    let mut out = Vec::with_capacity(topo.n_nodes());
    for (node, atoms) in assignment.local.iter().enumerate() {
        let slices: Vec<Vec<usize>> = (0..r).map(|k| atoms.iter().skip(k).step_by(r).copied().collect()).collect();
        let bytes = slices.iter().map(Vec::len).max().unwrap_or(0) * PARTICLE_RECORD_BYTES;
        let group: Vec<RankId> = (0..r).map(|k| RankId::new(node, k)).collect();
        let gathered = net.allgather(&group, slices, bytes)?;
        let mut full: Vec<usize> = gathered.into_iter().flatten().collect();
        full.sort_unstable();
        out.push(full);
    }
    net.set_phase(prev);
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GhostEntry {
    pub atom: usize,
    pub shift: [i32; 3],
}

#[derive(Clone, Debug, PartialEq)]
pub struct GhostRegion {
    pub node: usize,
    pub extent: f64,
    /// Extra growth of the subdomain before the extent is applied, low faces.
    pub expand_lo: Vec3,
    pub expand_hi: Vec3,
    /// Imported atom images, sorted by `(atom, shift)`.
    pub atoms: Vec<GhostEntry>,
    /// Centroid images, carried with their binding atom.
    pub wcs: Vec<GhostEntry>,
    /// `(rank, source node)` communication tasks.
    pub tasks: Vec<(usize, usize)>,
}

impl GhostRegion {
    pub fn contains(&self, atom: usize) -> bool {
        self.atoms.iter().any(|g| g.atom == atom)
    }

    /// Extent beyond each face: `[lo, hi]` per axis.
    pub fn face_extents(&self) -> [[f64; 2]; 3] {
        std::array::from_fn(|d| [self.extent + self.expand_lo[d], self.extent + self.expand_hi[d]])
    }
}

fn check_extent(sim_box: &SimulationBox, extent: f64) -> Result<(), GeometryError> {
    let half = 0.5 * sim_box.min_edge();
    if !(extent >= 0.0) || extent > half {
        return Err(GeometryError::ExtentTooLarge { extent, half_edge: half });
    }
    Ok(())
}

/// Atom images within `extent` of the subdomain grown by the expansion
/// vectors, excluding the node's own unshifted atoms.
pub fn ghost_images(
    system: &System,
    topo: &NodeTopology,
    assignment: &Assignment,
    node: usize,
    extent: f64,
    expand_lo: Vec3,
    expand_hi: Vec3,
) -> Vec<GhostEntry> {
    let sub = topo.subdomain(node);
    let region = Subdomain {
        lo: sub.lo - expand_lo,
        hi: sub.hi + expand_hi,
    };
    let b = topo.sim_box();
    let mut out = Vec::new();
    for (j, a) in system.atoms.iter().enumerate() {
        let w = b.wrap(a.position);
        for sz in -1..=1 {
            for sy in -1..=1 {
                for sx in -1..=1 {
                    let shift = [sx, sy, sz];
                    if shift == [0, 0, 0] && assignment.atom_node[j] == node {
                        continue;
                    }
                    if region.distance(w + b.shift_vector(shift)) <= extent {
                        out.push(GhostEntry { atom: j, shift });
                    }
                }
            }
        }
    }
    out
}

fn wc_images(system: &System, atoms: &[GhostEntry]) -> Result<Vec<GhostEntry>, GeometryError> {
    let binding = system.wc_binding_indices()?;
    let mut wc_of = vec![None; system.n_atoms()];
    for (n, &i) in binding.iter().enumerate() {
        wc_of[i] = Some(n);
    }
    Ok(atoms
        .iter()
        .filter_map(|g| wc_of[g.atom].map(|n| GhostEntry { atom: n, shift: g.shift }))
        .collect())
}

/// Build every node's ghost region. With a network, ghost imports are sent
/// from each source node, the tasks split round-robin over the receiving
/// node's ranks, then shared by one intra-node allgather.
pub fn exchange_ghosts(
    system: &System,
    topo: &NodeTopology,
    assignment: &Assignment,
    extent: f64,
    mut net: Option<&mut Network>,
) -> Result<Vec<GhostRegion>> {
    check_extent(topo.sim_box(), extent)?;
    let prev = net.as_ref().map(|n| n.phase().to_string());
    if let Some(n) = net.as_deref_mut() {
        n.set_phase("ghost_exchange");
    }
    let mut regions = Vec::with_capacity(topo.n_nodes());
    for node in 0..topo.n_nodes() {
        let atoms = ghost_images(system, topo, assignment, node, extent, Vec3::ZERO, Vec3::ZERO);
        let mut sources: Vec<usize> = atoms.iter().map(|g| assignment.atom_node[g.atom]).collect();
        sources.sort_unstable();
        sources.dedup();
        let r = topo.ranks_per_node();
        let tasks: Vec<(usize, usize)> = sources.iter().enumerate().map(|(t, &s)| (t % r, s)).collect();
        if let Some(net) = net.as_deref_mut() {
            let mut per_rank: Vec<Vec<GhostEntry>> = vec![Vec::new(); r];
            for &(rank, src) in &tasks {
                let part: Vec<GhostEntry> = atoms.iter().filter(|g| assignment.atom_node[g.atom] == src).copied().collect();
                let bytes = part.len() * PARTICLE_RECORD_BYTES;
                net.send(RankId::new(src, rank), RankId::new(node, rank), "ghost", part, bytes)?;
                let got: Vec<GhostEntry> = net.recv(RankId::new(node, rank), RankId::new(src, rank), "ghost")?;
                per_rank[rank].extend(got);
            }
            let bytes = per_rank.iter().map(Vec::len).max().unwrap_or(0) * PARTICLE_RECORD_BYTES;
            let group: Vec<RankId> = (0..r).map(|k| RankId::new(node, k)).collect();
            net.allgather(&group, per_rank, bytes)?;
        }
        let wcs = wc_images(system, &atoms)?;
        regions.push(GhostRegion {
            node,
            extent,
            expand_lo: Vec3::ZERO,
            expand_hi: Vec3::ZERO,
            atoms,
            wcs,
            tasks,
        });
    }
    if let (Some(n), Some(p)) = (net, prev) {
        n.set_phase(p);
    }
    Ok(regions)
}

/// Grow an existing region on selected faces; used by load balancing.
pub fn expand_ghost_region(
    system: &System,
    topo: &NodeTopology,
    assignment: &Assignment,
    region: &GhostRegion,
    expand_lo: Vec3,
    expand_hi: Vec3,
) -> Result<GhostRegion, GeometryError> {
    let atoms = ghost_images(system, topo, assignment, region.node, region.extent, expand_lo, expand_hi);
    let wcs = wc_images(system, &atoms)?;
    Ok(GhostRegion {
        atoms,
        wcs,
        expand_lo,
        expand_hi,
        ..region.clone()
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ViewEntry {
    pub atom: usize,
    pub shift: [i32; 3],
    pub position: Vec3,
}

/// Local atoms followed by ghost images, as one node sees them.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalView {
    pub node: usize,
    pub entries: Vec<ViewEntry>,
    pub n_local: usize,
}

impl LocalView {
    pub fn build(system: &System, assignment: &Assignment, ghosts: &GhostRegion, required: f64) -> Result<Self, GeometryError> {
        let min_ext = ghosts.face_extents().iter().flatten().cloned().fold(f64::INFINITY, f64::min);
        if min_ext < required {
            return Err(GeometryError::ExtentTooSmall { extent: min_ext, required });
        }
        let b = &system.sim_box;
        let mut entries: Vec<ViewEntry> = assignment.local[ghosts.node]
            .iter()
            .map(|&i| ViewEntry {
                atom: i,
                shift: [0; 3],
                position: b.wrap(system.atoms[i].position),
            })
            .collect();
        let n_local = entries.len();
        entries.extend(ghosts.atoms.iter().map(|g| ViewEntry {
            atom: g.atom,
            shift: g.shift,
            position: b.wrap(system.atoms[g.atom].position) + b.shift_vector(g.shift),
        }));
        Ok(Self {
            node: ghosts.node,
            entries,
            n_local,
        })
    }

    /// Entries within `cutoff` of entry `k` (excluding itself), ordered by atom index.
    pub fn neighbors_of(&self, k: usize, cutoff: f64) -> Vec<usize> {
        let p = self.entries[k].position;
        let c2 = cutoff * cutoff;
        let mut out: Vec<usize> = (0..self.entries.len())
            .filter(|&e| e != k && (self.entries[e].position - p).norm2() < c2)
            .collect();
        out.sort_by_key(|&e| (self.entries[e].atom, self.entries[e].shift));
        out
    }

    pub fn find(&self, atom: usize) -> Option<usize> {
        self.entries.iter().position(|e| e.atom == atom)
    }
}
