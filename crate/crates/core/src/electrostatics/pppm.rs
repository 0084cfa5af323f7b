//! Particle-mesh path: B-spline spreading into node bricks, Poisson solve
//! with ik differentiation, interpolation back to the charges.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::bspline::{bspline_hat, bspline_weights};
use super::{ChargeSet, EwaldParams, LongRange};
use crate::dft::{serial_dft_3d, DftReport, Direction, DistributedDft, KGrid};
use crate::error::{DftError, ElectrostaticsError};
use crate::geometry::{SimulationBox, Vec3};
use crate::simnet::{Network, RankId};

pub enum DftBackend<'a> {
    /// Dense transform of the assembled mesh on one rank.
    Serial,
    /// Chain-reduced transform over the node bricks.
    Distributed { dft: &'a DistributedDft, net: &'a mut Network },
}

impl DftBackend<'_> {
    fn net(&mut self) -> Option<&mut Network> {
        match self {
            DftBackend::Serial => None,
            DftBackend::Distributed { net, .. } => Some(net),
        }
    }
}

/// Field component bricks (`∂φ/∂x`, `∂φ/∂y`, `∂φ/∂z`).
#[derive(Clone, Debug, PartialEq)]
pub struct FieldMeshes {
    pub fields: [Vec<Vec<f64>>; 3],
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PppmReport {
    pub dft: DftReport,
    pub spread_halo_bytes: u64,
    pub gather_halo_bytes: u64,
    /// Largest particle count handled by one node.
    pub max_node_particles: usize,
    pub mesh_points: usize,
}

#[derive(Clone, Debug)]
pub struct Pppm {
    params: EwaldParams,
    sim_box: SimulationBox,
    kgrid: KGrid,
    /// `g(m)/Ŵ(m)²` on the retained modes, zero elsewhere; x-fastest.
    influence: Vec<f64>,
    mvec: Vec<Vec3>,
}

const SPREAD_RECORD: usize = 16;
const FIELD_RECORD: usize = 32;

impl Pppm {
    pub fn new(params: EwaldParams, sim_box: SimulationBox, node_grid: [usize; 3]) -> Result<Self, ElectrostaticsError> {
        params.validate(&sim_box)?;
        let kgrid = KGrid::new(params.mesh, node_grid)?;
        let l = sim_box.lengths();
        let n = params.mesh;
        let lc2 = params.k_cutoff * params.k_cutoff;
        let mut influence = vec![0.0; kgrid.total_points()];
        let mut mvec = vec![Vec3::ZERO; kgrid.total_points()];
        for kz in 0..n[2] {
            for ky in 0..n[1] {
                for kx in 0..n[0] {
                    let k = [kx, ky, kz];
                    let idx = kgrid.flat(k);
                    let f: [i64; 3] = std::array::from_fn(|d| kgrid.freq(d, k[d]));
                    let m = Vec3(std::array::from_fn(|d| f[d] as f64 / l[d]));
                    mvec[idx] = m;
                    let m2 = m.norm2();
                    if m2 == 0.0 || m2 > lc2 || (0..3).any(|d| kgrid.is_nyquist(d, k[d])) {
                        continue;
                    }
                    let hat: f64 = (0..3).map(|d| bspline_hat(params.order, f[d] as f64 / n[d] as f64)).product();
                    influence[idx] = params.green(m2) / (hat * hat);
                }
            }
        }
        Ok(Self {
            params,
            sim_box,
            kgrid,
            influence,
            mvec,
        })
    }

    pub fn params(&self) -> &EwaldParams {
        &self.params
    }

    pub fn kgrid(&self) -> &KGrid {
        &self.kgrid
    }

    /// Mesh coordinates and owning node of every charge.
    fn locate(&self, charges: &ChargeSet) -> Result<(Vec<[f64; 3]>, Vec<usize>), ElectrostaticsError> {
        let l = self.sim_box.lengths();
        let n = self.params.mesh;
        let mut us = Vec::with_capacity(charges.len());
        let mut owners = Vec::with_capacity(charges.len());
        for (i, &r) in charges.positions.iter().enumerate() {
            let w = self.sim_box.wrap(r);
            if !r.is_finite() || !self.sim_box.contains(w) {
                return Err(ElectrostaticsError::OutsideBox { index: i, pos: r.0 });
            }
            let u: [f64; 3] = std::array::from_fn(|d| w[d] / l[d] * n[d] as f64);
            let base = std::array::from_fn(|d| (u[d].floor() as i64).rem_euclid(n[d] as i64) as usize);
            us.push(u);
            owners.push(self.kgrid.owner_of(base));
        }
        Ok((us, owners))
    }

    fn stencil(&self, u: [f64; 3]) -> Vec<(usize, f64)> {
        let p = self.params.order;
        let n = self.params.mesh;
        let per: [(i64, [f64; 6]); 3] = std::array::from_fn(|d| bspline_weights(p, u[d]));
        let mut out = Vec::with_capacity(p * p * p);
        for c in 0..p {
            let z = (per[2].0 + c as i64).rem_euclid(n[2] as i64) as usize;
            for b in 0..p {
                let y = (per[1].0 + b as i64).rem_euclid(n[1] as i64) as usize;
                let wzy = per[2].1[c] * per[1].1[b];
                for a in 0..p {
                    let x = (per[0].0 + a as i64).rem_euclid(n[0] as i64) as usize;
                    out.push((self.kgrid.flat([x, y, z]), wzy * per[0].1[a]));
                }
            }
        }
        out
    }

    fn unflat(&self, idx: usize) -> [usize; 3] {
        let n = self.params.mesh;
        [idx % n[0], (idx / n[0]) % n[1], idx / (n[0] * n[1])]
    }

    /// Charge density bricks. Each node spreads the charges whose base mesh
    /// point it owns into its brick plus halo; halo parts are sent to their
    /// owners and accumulated in ascending source order.
    pub fn spread(&self, charges: &ChargeSet, mut net: Option<&mut Network>) -> Result<(Vec<Vec<f64>>, u64), ElectrostaticsError> {
        let (us, owners) = self.locate(charges)?;
        let nodes = self.kgrid.n_nodes();
        let mut buffers: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); nodes];
        for (i, u) in us.iter().enumerate() {
            let q = charges.charges[i];
            let buf = &mut buffers[owners[i]];
            for (idx, w) in self.stencil(*u) {
                *buf.entry(idx).or_insert(0.0) += q * w;
            }
        }
        // split each node's buffer by destination brick
        let mut outgoing: Vec<BTreeMap<usize, Vec<(usize, f64)>>> = vec![BTreeMap::new(); nodes];
        for (src, buf) in buffers.into_iter().enumerate() {
            for (idx, v) in buf {
                let dst = self.kgrid.owner_of(self.unflat(idx));
                outgoing[src].entry(dst).or_default().push((idx, v));
            }
        }
        let mut halo_bytes = 0u64;
        if let Some(net) = net.as_deref_mut() {
            for (src, parts) in outgoing.iter().enumerate() {
                for (&dst, part) in parts.iter().filter(|(&d, _)| d != src) {
                    let bytes = part.len() * SPREAD_RECORD;
                    halo_bytes += bytes as u64;
                    net.send(RankId::new(src, 0), RankId::new(dst, 0), "spread_halo", part.clone(), bytes)?;
                }
            }
        }
        let mut bricks: Vec<Vec<f64>> = (0..nodes).map(|n| vec![0.0; self.kgrid.brick_points(n)]).collect();
        for (dst, brick) in bricks.iter_mut().enumerate() {
            for (src, parts) in outgoing.iter().enumerate() {
                let part = match (src == dst, net.as_deref_mut()) {
                    (false, Some(net)) => {
                        if !parts.contains_key(&dst) {
                            continue;
                        }
                        net.recv::<Vec<(usize, f64)>>(RankId::new(dst, 0), RankId::new(src, 0), "spread_halo")?
                    }
                    _ => match parts.get(&dst) {
                        Some(p) => p.clone(),
                        None => continue,
                    },
                };
                for (idx, v) in part {
                    brick[self.kgrid.local_offset(dst, self.unflat(idx))] += v;
                }
            }
        }
        Ok((bricks, halo_bytes))
    }

    fn forward(&self, bricks: Vec<Vec<Complex64>>, backend: &mut DftBackend<'_>) -> Result<(Vec<Vec<Complex64>>, DftReport), DftError> {
        self.transform(bricks, backend, Direction::Forward)
    }

    fn transform(
        &self,
        bricks: Vec<Vec<Complex64>>,
        backend: &mut DftBackend<'_>,
        dir: Direction,
    ) -> Result<(Vec<Vec<Complex64>>, DftReport), DftError> {
        match backend {
            DftBackend::Serial => {
                let full = self.kgrid.assemble(&bricks);
                let out = serial_dft_3d(&full, self.params.mesh, dir)?;
                Ok((self.kgrid.scatter(&out), DftReport::default()))
            }
            DftBackend::Distributed { dft, net } => {
                if dft.kgrid() != &self.kgrid {
                    return Err(DftError::Shape("DFT plan and PPPM mesh disagree".into()));
                }
                dft.transform(net, bricks, dir)
            }
        }
    }

    /// One forward and three inverse transforms; returns the field bricks
    /// and the k-space energy.
    pub fn poisson_ik(
        &self,
        density: Vec<Vec<f64>>,
        backend: &mut DftBackend<'_>,
    ) -> Result<(FieldMeshes, f64, DftReport), ElectrostaticsError> {
        let complex: Vec<Vec<Complex64>> = density
            .into_iter()
            .map(|b| b.into_iter().map(|v| Complex64::new(v, 0.0)).collect())
            .collect();
        let (rho_hat, mut report) = self.forward(complex, backend)?;
        let v = self.sim_box.volume();
        let mut energy = 0.0;
        let mut spectra: [Vec<Vec<Complex64>>; 3] = Default::default();
        for (node, brick) in rho_hat.iter().enumerate() {
            let r = self.kgrid.ranges(node);
            let mut e_node = 0.0;
            let mut comps: [Vec<Complex64>; 3] = std::array::from_fn(|_| Vec::with_capacity(brick.len()));
            let mut it = brick.iter();
            for z in r[2].clone() {
                for y in r[1].clone() {
                    for x in r[0].clone() {
                        let rho = *it.next().expect("brick size");
                        let idx = self.kgrid.flat([x, y, z]);
                        let inf = self.influence[idx];
                        e_node += inf * rho.norm_sqr();
                        let phi = rho * (inf / (PI * v));
                        for (d, comp) in comps.iter_mut().enumerate() {
                            comp.push(phi * Complex64::new(0.0, 2.0 * PI * self.mvec[idx][d]));
                        }
                    }
                }
            }
            energy += e_node;
            for (d, comp) in comps.into_iter().enumerate() {
                spectra[d].push(comp);
            }
        }
        energy /= 2.0 * PI * v;
        let mut fields: [Vec<Vec<f64>>; 3] = Default::default();
        for (d, spec) in spectra.into_iter().enumerate() {
            let (out, rep) = self.transform(spec, backend, Direction::Inverse)?;
            report.accumulate(&rep);
            fields[d] = out.into_iter().map(|b| b.into_iter().map(|c| c.re).collect()).collect();
        }
        Ok((FieldMeshes { fields }, energy, report))
    }

    /// `∂E/∂r` for every charge: its owner interpolates the three fields,
    /// importing the halo points it does not hold.
    pub fn gather(
        &self,
        fields: &FieldMeshes,
        charges: &ChargeSet,
        mut net: Option<&mut Network>,
    ) -> Result<(Vec<Vec3>, u64), ElectrostaticsError> {
        let (us, owners) = self.locate(charges)?;
        let nodes = self.kgrid.n_nodes();
        let stencils: Vec<Vec<(usize, f64)>> = us.iter().map(|u| self.stencil(*u)).collect();
        let mut needed: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); nodes];
        for (s, &o) in stencils.iter().zip(&owners) {
            needed[o].extend(s.iter().map(|&(idx, _)| idx));
        }
        let mut halo_bytes = 0u64;
        let mut local: Vec<BTreeMap<usize, [f64; 3]>> = vec![BTreeMap::new(); nodes];
        for (node, pts) in needed.iter().enumerate() {
            let mut by_src: BTreeMap<usize, Vec<(usize, [f64; 3])>> = BTreeMap::new();
            for &idx in pts {
                let g = self.unflat(idx);
                let src = self.kgrid.owner_of(g);
                let off = self.kgrid.local_offset(src, g);
                let val = std::array::from_fn(|d| fields.fields[d][src][off]);
                by_src.entry(src).or_default().push((idx, val));
            }
            for (src, part) in by_src {
                let part = match net.as_deref_mut() {
                    Some(net) if src != node => {
                        let bytes = part.len() * FIELD_RECORD;
                        halo_bytes += bytes as u64;
                        net.send(RankId::new(src, 0), RankId::new(node, 0), "gather_halo", part, bytes)?;
                        net.recv::<Vec<(usize, [f64; 3])>>(RankId::new(node, 0), RankId::new(src, 0), "gather_halo")?
                    }
                    _ => part,
                };
                local[node].extend(part);
            }
        }
        let grad = stencils
            .iter()
            .zip(&owners)
            .zip(&charges.charges)
            .map(|((s, &o), &q)| {
                let mut g = [0.0; 3];
                for &(idx, w) in s {
                    let f = local[o][&idx];
                    for d in 0..3 {
                        g[d] += w * f[d];
                    }
                }
                Vec3(g) * q
            })
            .collect();
        Ok((grad, halo_bytes))
    }

    pub fn compute(&self, charges: &ChargeSet, backend: &mut DftBackend<'_>) -> Result<(LongRange, PppmReport), ElectrostaticsError> {
        let (_, owners) = self.locate(charges)?;
        let mut per_node = vec![0usize; self.kgrid.n_nodes()];
        for o in owners {
            per_node[o] += 1;
        }
        let prev = backend.net().map(|n| n.phase().to_string());
        if let Some(n) = backend.net() {
            n.set_phase("pppm_spread");
        }
        let (density, spread_halo_bytes) = self.spread(charges, backend.net())?;
        let (fields, energy, dft) = self.poisson_ik(density, backend)?;
        if let Some(n) = backend.net() {
            n.set_phase("pppm_gather");
        }
        let (grad, gather_halo_bytes) = self.gather(&fields, charges, backend.net())?;
        if let (Some(n), Some(p)) = (backend.net(), prev) {
            n.set_phase(p);
        }
        Ok((
            LongRange { energy, grad },
            PppmReport {
                dft,
                spread_halo_bytes,
                gather_halo_bytes,
                max_node_particles: per_node.into_iter().max().unwrap_or(0),
                mesh_points: self.kgrid.total_points(),
            },
        ))
    }
}
