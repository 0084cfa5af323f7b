//! Ring-based atom-level load balancing between nodes.

use serde::{Deserialize, Serialize};

use crate::domain::{expand_ghost_region, Assignment, GhostRegion, LocalView, NodeTopology, Subdomain, PARTICLE_RECORD_BYTES};
use crate::error::BalanceError;
use crate::geometry::Vec3;
use crate::neighbor::NeighborList;
use crate::potential::{short_range_view, AtomTerm, ShortRangeModel};
use crate::simnet::{Network, RankId};
use crate::system::System;

/// Closed directed ring over node indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RingOrder {
    nodes: Vec<usize>,
    position: Vec<usize>,
}

impl RingOrder {
    pub fn new(nodes: Vec<usize>) -> Result<Self, BalanceError> {
        if nodes.is_empty() {
            return Err(BalanceError::Empty);
        }
        let mut position = vec![usize::MAX; nodes.len()];
        for (p, &n) in nodes.iter().enumerate() {
            if n >= nodes.len() || position[n] != usize::MAX {
                return Err(BalanceError::Length(n, nodes.len()));
            }
            position[n] = p;
        }
        Ok(Self { nodes, position })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn downstream(&self, node: usize) -> usize {
        self.nodes[(self.position[node] + 1) % self.len()]
    }

    pub fn upstream(&self, node: usize) -> usize {
        self.nodes[(self.position[node] + self.len() - 1) % self.len()]
    }
}

/// Boustrophedon scan: x alternates per row, y alternates per layer.
pub fn serpentine_ring(grid: [usize; 3]) -> RingOrder {
    let [gx, gy, gz] = grid.map(|g| g.max(1));
    let mut nodes = Vec::with_capacity(gx * gy * gz);
    let mut row = 0;
    for z in 0..gz {
        let ys: Vec<usize> = if z % 2 == 0 { (0..gy).collect() } else { (0..gy).rev().collect() };
        for y in ys {
            let xs: Vec<usize> = if row % 2 == 0 { (0..gx).collect() } else { (0..gx).rev().collect() };
            nodes.extend(xs.into_iter().map(|x| x + gx * (y + gy * z)));
            row += 1;
        }
    }
    RingOrder::new(nodes).expect("scan visits every node once")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlanMode {
    /// Send surplus plus inherited atoms.
    Corrected,
    /// `N_goal - N_local + N_s[upstream]`; overloaded nodes send nothing.
    Literal,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MigrationPlan {
    pub n_local: Vec<usize>,
    pub n_goal: Vec<usize>,
    /// Atoms each node sends to its downstream neighbour.
    pub n_send: Vec<usize>,
    pub final_counts: Vec<usize>,
    pub feasible: bool,
}

impl MigrationPlan {
    pub fn migrated(&self) -> usize {
        self.n_send.iter().sum()
    }

    pub fn is_noop(&self) -> bool {
        self.n_send.iter().all(|&s| s == 0)
    }
}

/// `total / n` per node, the remainder going to the first nodes in ring order.
pub fn goal_counts(total: usize, ring: &RingOrder) -> Vec<usize> {
    let n = ring.len();
    let mut goal = vec![total / n; n];
    for &node in ring.nodes().iter().take(total % n) {
        goal[node] += 1;
    }
    goal
}

fn send_count(mode: PlanMode, local: usize, goal: usize, inherited: usize) -> usize {
    let (l, g, s) = (local as i64, goal as i64, inherited as i64);
    let raw = match mode {
        PlanMode::Corrected => l + s - g,
        PlanMode::Literal => g - l + s,
    };
    raw.clamp(0, l) as usize
}

/// Two passes around the ring, then a verification pass.
pub fn plan_migration(n_local: &[usize], n_goal: &[usize], ring: &RingOrder, mode: PlanMode) -> Result<MigrationPlan, BalanceError> {
    if n_local.is_empty() {
        return Err(BalanceError::Empty);
    }
    if n_local.len() != n_goal.len() || n_local.len() != ring.len() {
        return Err(BalanceError::Length(n_local.len(), n_goal.len().min(ring.len())));
    }
    let mut n_send = vec![0usize; n_local.len()];
    for _ in 0..2 {
        for &cur in ring.nodes() {
            n_send[cur] = send_count(mode, n_local[cur], n_goal[cur], n_send[ring.upstream(cur)]);
        }
    }
    let fixed = ring
        .nodes()
        .iter()
        .all(|&cur| n_send[cur] == send_count(mode, n_local[cur], n_goal[cur], n_send[ring.upstream(cur)]));
    let final_counts: Vec<usize> = (0..n_local.len())
        .map(|n| n_local[n] - n_send[n] + n_send[ring.upstream(n)])
        .collect();
    let feasible = fixed && final_counts == n_goal;
    Ok(MigrationPlan {
        n_local: n_local.to_vec(),
        n_goal: n_goal.to_vec(),
        n_send,
        final_counts,
        feasible,
    })
}

/// `(max/mean, population standard deviation)`.
pub fn imbalance_metric(counts: &[usize]) -> Result<(f64, f64), BalanceError> {
    if counts.is_empty() {
        return Err(BalanceError::Empty);
    }
    let n = counts.len() as f64;
    let mean = counts.iter().sum::<usize>() as f64 / n;
    let max = *counts.iter().max().expect("non-empty") as f64;
    let var = counts.iter().map(|&c| (c as f64 - mean).powi(2)).sum::<f64>() / n;
    let ratio = if mean > 0.0 { max / mean } else { 1.0 };
    Ok((ratio, var.sqrt()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Migration {
    pub atom: usize,
    pub from: usize,
    pub to: usize,
}

fn nearest_image_distance(topo: &NodeTopology, region: &Subdomain, p: Vec3) -> (f64, [i32; 3]) {
    let b = topo.sim_box();
    let w = b.wrap(p);
    let mut best = (f64::INFINITY, [0; 3]);
    for sz in -1..=1 {
        for sy in -1..=1 {
            for sx in -1..=1 {
                let s = [sx, sy, sz];
                let d = region.distance(w + b.shift_vector(s));
                if d < best.0 {
                    best = (d, s);
                }
            }
        }
    }
    best
}

/// Growth of `down`'s subdomain toward `up`, by `amount` on each facing side.
pub fn expansion_toward(topo: &NodeTopology, down: usize, up: usize, amount: f64) -> (Vec3, Vec3) {
    let g = topo.grid();
    let cd = topo.node_coords(down);
    let cu = topo.node_coords(up);
    let mut lo = Vec3::ZERO;
    let mut hi = Vec3::ZERO;
    for d in 0..3 {
        let diff = (cu[d] + g[d] - cd[d]) % g[d];
        if diff == 0 {
            continue;
        }
        if diff == 1 || diff != g[d] - 1 {
            hi[d] = amount;
        }
        if diff == g[d] - 1 || diff != 1 {
            lo[d] = amount;
        }
    }
    (lo, hi)
}

fn grown(topo: &NodeTopology, node: usize, lo: Vec3, hi: Vec3) -> Subdomain {
    let s = topo.subdomain(node);
    Subdomain {
        lo: s.lo - lo,
        hi: s.hi + hi,
    }
}

/// The `n_send` donor atoms nearest the recipient, ties by atom index.
pub fn select_migrants(
    system: &System,
    topo: &NodeTopology,
    assignment: &Assignment,
    plan: &MigrationPlan,
    ring: &RingOrder,
) -> Vec<Migration> {
    let mut out = Vec::new();
    for &from in ring.nodes() {
        let k = plan.n_send[from];
        if k == 0 {
            continue;
        }
        let to = ring.downstream(from);
        let target = topo.subdomain(to);
        let mut cand: Vec<(f64, usize)> = assignment.local[from]
            .iter()
            .map(|&i| (nearest_image_distance(topo, &target, system.atoms[i].position).0, i))
            .collect();
        cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        out.extend(cand.into_iter().take(k).map(|(_, atom)| Migration { atom, from, to }));
    }
    out
}

/// Which node computes each atom's short-range term after migration.
#[derive(Clone, Debug, PartialEq)]
pub struct ComputeAssignment {
    pub compute_node: Vec<usize>,
    pub migrations: Vec<Migration>,
    /// Ghost regions, expanded on recipients.
    pub regions: Vec<GhostRegion>,
}

impl ComputeAssignment {
    pub fn unchanged(assignment: &Assignment, regions: Vec<GhostRegion>) -> Self {
        Self {
            compute_node: assignment.atom_node.clone(),
            migrations: Vec::new(),
            regions,
        }
    }

    pub fn counts(&self, n_nodes: usize) -> Vec<usize> {
        let mut c = vec![0; n_nodes];
        for &n in &self.compute_node {
            c[n] += 1;
        }
        c
    }

    /// Atoms computed on `node`, ascending.
    pub fn computed_on(&self, node: usize) -> Vec<usize> {
        (0..self.compute_node.len()).filter(|&i| self.compute_node[i] == node).collect()
    }
}

/// Recipients grow their ghost region toward the upstream node by
/// `r_c + skin`; migrated atoms must already be ghosts there.
pub fn apply_ghost_expansion(
    system: &System,
    topo: &NodeTopology,
    assignment: &Assignment,
    plan: &MigrationPlan,
    ring: &RingOrder,
    ghosts: &[GhostRegion],
    r_c: f64,
    skin: f64,
) -> Result<ComputeAssignment, BalanceError> {
    if !plan.feasible {
        return Err(BalanceError::Infeasible);
    }
    let mut out = ComputeAssignment::unchanged(assignment, ghosts.to_vec());
    if plan.is_noop() {
        return Ok(out);
    }
    let migrations = select_migrants(system, topo, assignment, plan, ring);
    let amount = r_c + skin;
    for &to in ring.nodes() {
        let from = ring.upstream(to);
        if plan.n_send[from] == 0 {
            continue;
        }
        let (lo, hi) = expansion_toward(topo, to, from, amount);
        let expanded = grown(topo, to, lo, hi);
        for m in migrations.iter().filter(|m| m.to == to) {
            let p = system.atoms[m.atom].position;
            // neighbours within r_c stay inside the imported shell only if the
            // atom sits within `skin` of the grown box
            if !ghosts[to].contains(m.atom) || nearest_image_distance(topo, &expanded, p).0 > skin {
                return Err(BalanceError::NotInGhostRegion { atom: m.atom, node: to });
            }
        }
        out.regions[to] = expand_ghost_region(system, topo, assignment, &ghosts[to], lo, hi)?;
    }
    for m in &migrations {
        out.compute_node[m.atom] = m.to;
    }
    out.migrations = migrations;
    Ok(out)
}

/// Short-range terms for every atom computed on `node`, from its own view.
pub fn node_terms(
    system: &System,
    topo: &NodeTopology,
    assignment: &Assignment,
    compute: &ComputeAssignment,
    node: usize,
    model: &ShortRangeModel,
) -> Result<Vec<AtomTerm>, BalanceError> {
    let region = &compute.regions[node];
    let view = LocalView::build(system, assignment, region, model.cutoff())?;
    let grown_box = grown(topo, node, region.expand_lo, region.expand_hi);
    let entries: Vec<usize> = compute
        .computed_on(node)
        .into_iter()
        .map(|atom| {
            // the image nearest the (grown) subdomain
            (0..view.entries.len())
                .filter(|&e| view.entries[e].atom == atom)
                .min_by(|&a, &b| {
                    grown_box
                        .distance(view.entries[a].position)
                        .total_cmp(&grown_box.distance(view.entries[b].position))
                })
                .ok_or(BalanceError::NotInGhostRegion { atom, node })
        })
        .collect::<Result<_, _>>()?;
    Ok(short_range_view(system, &view, model, &entries))
}

/// Outcome of the forwarding strategy.
#[derive(Clone, Debug, PartialEq)]
pub struct Forwarded {
    pub migrations: Vec<Migration>,
    /// Terms computed by the recipients, returned to the donors.
    pub terms: Vec<AtomTerm>,
    pub messages: usize,
    pub records: usize,
}

/// Donors send migrated atoms with their neighbour lists; recipients compute
/// and send the results back: two messages per donor-recipient pair.
pub fn apply_forwarding(
    system: &System,
    topo: &NodeTopology,
    assignment: &Assignment,
    plan: &MigrationPlan,
    ring: &RingOrder,
    nl: &NeighborList,
    model: &ShortRangeModel,
    net: &mut Network,
) -> Result<Forwarded, BalanceError> {
    if !plan.feasible {
        return Err(BalanceError::Infeasible);
    }
    let migrations = select_migrants(system, topo, assignment, plan, ring);
    let prev = net.phase().to_string();
    net.set_phase("balance_forward");
    let mut terms = Vec::new();
    let (mut messages, mut records) = (0, 0);
    for &from in ring.nodes() {
        let batch: Vec<Migration> = migrations.iter().filter(|m| m.from == from).copied().collect();
        if batch.is_empty() {
            continue;
        }
        let to = batch[0].to;
        let payload: Vec<(usize, Vec<usize>)> = batch
            .iter()
            .map(|m| (m.atom, nl.neighbors[m.atom].iter().map(|n| n.index).collect()))
            .collect();
        let n_rec: usize = payload.iter().map(|(_, nb)| 1 + nb.len()).sum();
        let (src, dst) = (RankId::new(from, 0), RankId::new(to, 0));
        net.send(src, dst, "migrate", payload, n_rec * PARTICLE_RECORD_BYTES)?;
        let got: Vec<(usize, Vec<usize>)> = net.recv(dst, src, "migrate")?;
        let computed: Vec<AtomTerm> = got
            .into_iter()
            .map(|(atom, nb)| crate::potential::atom_term_from(system, model, atom, nb.into_iter()))
            .collect();
        net.send(dst, src, "migrate_result", computed, n_rec * PARTICLE_RECORD_BYTES)?;
        terms.extend(net.recv::<Vec<AtomTerm>>(src, dst, "migrate_result")?);
        messages += 2;
        records += n_rec;
    }
    net.set_phase(prev);
    Ok(Forwarded {
        migrations,
        terms,
        messages,
        records,
    })
}
