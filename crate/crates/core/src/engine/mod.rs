//! Time integration and per-step orchestration.
//!
//! Physics is evaluated globally in a fixed order, so results do not depend
//! on the node decomposition, the balance plan or the lane schedule. The
//! decomposition drives the simulated network traffic and the simulated
//! clock.

pub mod config;
mod output;
pub mod timing;

use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use config::{
    BalanceConfig, BalanceMode, DftBackendKind, ElectrostaticsConfig, Ensemble, LongRangeSolver, MigrationStrategy, NeighborConfig,
    ParallelConfig, RunConfig, SystemSource, TopologyConfig,
};
pub use output::{energy_csv, timings_csv};
pub use timing::{performance_report, schedule, PerformanceSummary, PhaseTimings, StepWorkload, TimingModel, SIM_TIME_UNIT};

use crate::balance::{
    apply_ghost_expansion, goal_counts, imbalance_metric, plan_migration, select_migrants, serpentine_ring, ComputeAssignment, RingOrder,
};
use crate::dft::{DftReport, DistributedDft};
use crate::domain::{decompose, exchange_ghosts, Assignment, GhostRegion, NodeTopology, PARTICLE_RECORD_BYTES};
use crate::electrostatics::{ewald_forces_direct, k_modes, ChargeSet, DftBackend, EwaldParams, LongRange, Pppm, PppmReport};
use crate::error::Error;
use crate::geometry::Vec3;
use crate::neighbor::{build_neighbor_list, NeighborList};
use crate::potential::{
    assemble_forces, dw_backward, dw_forward, dw_jacobians, short_range, ForceBreakdown, ForceTerms, ShortRangeModel, WannierModel,
};
use crate::simnet::{Network, RankId};
use crate::system::System;

/// One energy unit (e²/Å) in eV.
pub const ENERGY_UNIT_EV: f64 = 14.399645;
/// Å/fs² per (energy unit/Å/amu).
pub const ACCEL_FACTOR: f64 = 0.1389354;
/// Boltzmann constant in energy units per K.
pub const KB: f64 = 5.98440e-6;

/// `½ Σ m v²` in energy units.
pub fn kinetic_energy(system: &System) -> f64 {
    0.5 * system.atoms.iter().map(|a| a.species.mass() * a.velocity.norm2()).sum::<f64>() / ACCEL_FACTOR
}

pub fn degrees_of_freedom(system: &System) -> usize {
    (3 * system.n_atoms()).saturating_sub(3)
}

pub fn temperature(system: &System) -> f64 {
    let dof = degrees_of_freedom(system);
    if dof == 0 {
        0.0
    } else {
        2.0 * kinetic_energy(system) / (dof as f64 * KB)
    }
}

/// Maxwell–Boltzmann velocities with zero total momentum, scaled to exactly `t`.
pub fn init_velocities(system: &mut System, t: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_7e10);
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    for a in &mut system.atoms {
        let s = (KB * t * ACCEL_FACTOR / a.species.mass()).sqrt();
        a.velocity = Vec3::new(std.sample(&mut rng), std.sample(&mut rng), std.sample(&mut rng)) * s;
    }
    let m_tot: f64 = system.atoms.iter().map(|a| a.species.mass()).sum();
    if m_tot > 0.0 {
        let p = system.atoms.iter().fold(Vec3::ZERO, |acc, a| acc + a.velocity * a.species.mass());
        let vcm = p * (1.0 / m_tot);
        system.atoms.iter_mut().for_each(|a| a.velocity -= vcm);
    }
    let now = temperature(system);
    if now > 0.0 {
        let lam = (t / now).sqrt();
        system.atoms.iter_mut().for_each(|a| a.velocity = a.velocity * lam);
    }
}

pub fn total_momentum(system: &System) -> Vec3 {
    system.atoms.iter().fold(Vec3::ZERO, |acc, a| acc + a.velocity * a.species.mass())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyRow {
    pub step: u64,
    pub e_sr: f64,
    pub e_gt: f64,
    pub e_kin: f64,
    pub temperature: f64,
}

impl EnergyRow {
    pub fn potential(&self) -> f64 {
        self.e_sr + self.e_gt
    }

    pub fn total(&self) -> f64 {
        self.potential() + self.e_kin
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BalanceEvent {
    pub step: u64,
    pub ratio_before: f64,
    pub ratio_after: f64,
    pub migrated: usize,
    /// Distinct donor to recipient links used by the migration.
    pub messages: usize,
    pub feasible: bool,
    /// Why the plan was not applied, if it was not.
    pub fallback: Option<String>,
}

/// Per-node traffic derived from the current decomposition.
#[derive(Clone, Debug, Default)]
struct Traffic {
    /// `(source node, atoms)` imported by each node.
    ghost_sources: Vec<Vec<(usize, usize)>>,
    /// `(donor, recipient, records)` for forwarded migrations.
    forwarded: Vec<(usize, usize, usize)>,
}

/// Result of one long-range lane run.
struct LaneOutput {
    lr: LongRange,
    report: Option<PppmReport>,
    direct_macs: u64,
    transfer: f64,
    host: f64,
}

pub struct Simulation {
    config: RunConfig,
    system: System,
    binding: Vec<usize>,
    sr_model: ShortRangeModel,
    dw_model: WannierModel,
    params: EwaldParams,
    pppm: Option<Pppm>,
    dft: Option<DistributedDft>,
    net: Network,
    topo: NodeTopology,
    ring: RingOrder,
    nl: NeighborList,
    assignment: Assignment,
    compute: ComputeAssignment,
    traffic: Traffic,
    forces: ForceBreakdown,
    e_sr: f64,
    e_gt: f64,
    step: u64,
    rebuild_comm: f64,
    rebuilt: bool,
    pending_host: Option<PhaseTimings>,
    energies: Vec<EnergyRow>,
    timings: Vec<PhaseTimings>,
    host: Vec<PhaseTimings>,
    balance_events: Vec<BalanceEvent>,
}

impl std::fmt::Debug for Simulation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Simulation")
            .field("step", &self.step)
            .field("atoms", &self.system.n_atoms())
            .field("nodes", &self.topo.n_nodes())
            .finish()
    }
}

impl Simulation {
    /// Load the system named by the config; relative paths resolve against `base`.
    pub fn new(config: RunConfig, base: Option<&Path>) -> crate::Result<Self> {
        let system = config.system.load(config.seed, base)?;
        Self::with_system(config, system)
    }

    pub fn with_system(config: RunConfig, mut system: System) -> crate::Result<Self> {
        let problems = config.problems(&system);
        if !problems.is_empty() {
            return Err(Error::Config(problems));
        }
        let sr_model = config.short_range_spec().build()?;
        let dw_model = config.wannier.clone();
        let params = config.electrostatics.params();
        let tc = &config.topology;
        let topo = NodeTopology::new(tc.node_grid, tc.ranks_per_node, system.sim_box)?;
        let mut net = Network::new(topo.n_nodes(), tc.ranks_per_node, tc.latency);
        let (pppm, dft) = match config.electrostatics.solver {
            LongRangeSolver::Direct => (None, None),
            LongRangeSolver::Pppm => {
                let pppm = Pppm::new(params.clone(), system.sim_box, tc.node_grid)?;
                let dft = match config.electrostatics.backend {
                    DftBackendKind::Serial => None,
                    DftBackendKind::Distributed => Some(DistributedDft::new(
                        &mut net,
                        pppm.kgrid().clone(),
                        config.parallel.payload_mode,
                        config.parallel.chain_limit,
                        config.parallel.batch,
                    )?),
                };
                (Some(pppm), dft)
            }
        };
        system.wrap_positions();
        if config.temperature > 0.0 && system.atoms.iter().all(|a| a.velocity == Vec3::ZERO) {
            init_velocities(&mut system, config.temperature, config.seed);
        }
        let binding = system.wc_binding_indices()?;
        let nl = build_neighbor_list(&system, config.neighbor.cutoff, config.neighbor.skin)?;
        let assignment = decompose(&system, &topo)?;
        let ring = serpentine_ring(topo.grid());
        let n = system.n_atoms();
        let mut sim = Self {
            compute: ComputeAssignment::unchanged(&assignment, Vec::new()),
            config,
            binding,
            sr_model,
            dw_model,
            params,
            pppm,
            dft,
            net,
            topo,
            ring,
            nl,
            assignment,
            traffic: Traffic::default(),
            forces: ForceBreakdown {
                short_range: vec![Vec3::ZERO; n],
                long_range_direct: vec![Vec3::ZERO; n],
                long_range_wc: vec![Vec3::ZERO; n],
                chain_rule: vec![Vec3::ZERO; n],
                total: vec![Vec3::ZERO; n],
            },
            system,
            e_sr: 0.0,
            e_gt: 0.0,
            step: 0,
            rebuild_comm: 0.0,
            rebuilt: false,
            pending_host: None,
            energies: Vec::new(),
            timings: Vec::new(),
            host: Vec::new(),
            balance_events: Vec::new(),
        };
        sim.rebuild()?;
        sim.compute_forces()?;
        sim.record_energy();
        Ok(sim)
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn system(&self) -> &System {
        &self.system
    }

    pub fn current_step(&self) -> u64 {
        self.step
    }

    pub fn forces(&self) -> &ForceBreakdown {
        &self.forces
    }

    /// `(E_sr, E_Gt)` of the current configuration.
    pub fn energies_now(&self) -> (f64, f64) {
        (self.e_sr, self.e_gt)
    }

    pub fn energies(&self) -> &[EnergyRow] {
        &self.energies
    }

    pub fn timings(&self) -> &[PhaseTimings] {
        &self.timings
    }

    pub fn host_timings(&self) -> &[PhaseTimings] {
        &self.host
    }

    pub fn balance_events(&self) -> &[BalanceEvent] {
        &self.balance_events
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn compute_assignment(&self) -> &ComputeAssignment {
        &self.compute
    }

    pub fn topology(&self) -> &NodeTopology {
        &self.topo
    }

    /// Timing rows after the warm-up.
    pub fn measured_timings(&self) -> (&[PhaseTimings], &[PhaseTimings]) {
        let w = (self.config.warmup as usize).min(self.timings.len());
        (&self.timings[w..], &self.host[w..])
    }

    pub fn performance(&self) -> PerformanceSummary {
        let (sim, host) = self.measured_timings();
        performance_report(sim, host, self.config.dt)
    }

    fn rebuild(&mut self) -> crate::Result<()> {
        let cfg = &self.config;
        self.nl = build_neighbor_list(&self.system, cfg.neighbor.cutoff, cfg.neighbor.skin)?;
        self.assignment = decompose(&self.system, &self.topo)?;
        let before = self.net.stats().totals.sim_time;
        let extent = cfg.neighbor.cutoff + cfg.neighbor.skin;
        let ghosts = exchange_ghosts(&self.system, &self.topo, &self.assignment, extent, Some(&mut self.net))?;
        self.compute = self.rebalance(ghosts)?;
        let n_nodes = self.topo.n_nodes();
        let mut ghost_sources = Vec::with_capacity(n_nodes);
        for region in &self.compute.regions {
            let mut per = vec![0usize; n_nodes];
            for g in &region.atoms {
                per[self.assignment.atom_node[g.atom]] += 1;
            }
            ghost_sources.push(per.into_iter().enumerate().filter(|&(_, c)| c > 0).collect());
        }
        let mut forwarded: Vec<(usize, usize, usize)> = Vec::new();
        if self.config.balance.strategy == MigrationStrategy::Forwarding {
            for m in &self.compute.migrations {
                let rec = 1 + self.nl.neighbors[m.atom].len();
                match forwarded.iter_mut().find(|f| f.0 == m.from && f.1 == m.to) {
                    Some(f) => f.2 += rec,
                    None => forwarded.push((m.from, m.to, rec)),
                }
            }
        }
        self.traffic = Traffic { ghost_sources, forwarded };
        // ghost exchange messages of different nodes proceed concurrently
        self.rebuild_comm = (self.net.stats().totals.sim_time - before) / n_nodes as f64;
        self.rebuilt = true;
        Ok(())
    }

    fn rebalance(&mut self, ghosts: Vec<GhostRegion>) -> crate::Result<ComputeAssignment> {
        let bc = self.config.balance.clone();
        let Some(mode) = bc.mode.plan_mode() else {
            return Ok(ComputeAssignment::unchanged(&self.assignment, ghosts));
        };
        let counts = self.assignment.counts();
        let (ratio, _) = imbalance_metric(&counts)?;
        if !self.step.is_multiple_of(bc.interval) && ratio <= bc.threshold {
            return Ok(ComputeAssignment::unchanged(&self.assignment, ghosts));
        }
        let prev = self.net.phase().to_string();
        self.net.set_phase("balance_allgather");
        let leaders = self.net.node_leaders();
        let gathered = self.net.allgather(&leaders, counts.clone(), std::mem::size_of::<u64>())?;
        self.net.set_phase(prev);
        debug_assert_eq!(gathered, counts);
        let plan = plan_migration(&gathered, &goal_counts(gathered.iter().sum(), &self.ring), &self.ring, mode)?;
        let mut event = BalanceEvent {
            step: self.step,
            ratio_before: ratio,
            ratio_after: ratio,
            migrated: 0,
            messages: 0,
            feasible: plan.feasible,
            fallback: None,
        };
        let result = if !plan.feasible {
            event.fallback = Some("infeasible plan; intra-node balancing only".into());
            ComputeAssignment::unchanged(&self.assignment, ghosts)
        } else {
            let applied = match bc.strategy {
                MigrationStrategy::GhostExpansion => {
                    let nb = &self.config.neighbor;
                    apply_ghost_expansion(
                        &self.system,
                        &self.topo,
                        &self.assignment,
                        &plan,
                        &self.ring,
                        &ghosts,
                        nb.cutoff,
                        nb.skin,
                    )
                }
                MigrationStrategy::Forwarding => {
                    let migrations = select_migrants(&self.system, &self.topo, &self.assignment, &plan, &self.ring);
                    let mut c = ComputeAssignment::unchanged(&self.assignment, ghosts.clone());
                    for m in &migrations {
                        c.compute_node[m.atom] = m.to;
                    }
                    c.migrations = migrations;
                    Ok(c)
                }
            };
            match applied {
                Ok(c) => c,
                Err(e) => {
                    event.fallback = Some(e.to_string());
                    ComputeAssignment::unchanged(&self.assignment, ghosts)
                }
            }
        };
        event.migrated = result.migrations.len();
        let mut links: Vec<(usize, usize)> = result.migrations.iter().map(|m| (m.from, m.to)).collect();
        links.sort_unstable();
        links.dedup();
        event.messages = links.len();
        event.ratio_after = imbalance_metric(&result.counts(self.topo.n_nodes()))?.0;
        self.balance_events.push(event);
        Ok(result)
    }

    fn lane_transfers(&mut self, phase: &str, tag_bytes: usize) -> crate::Result<f64> {
        let r = self.topo.ranks_per_node();
        if r < 2 {
            return Ok(0.0);
        }
        let prev = self.net.phase().to_string();
        self.net.set_phase(phase);
        let lat = *self.net.latency();
        let mut worst: f64 = 0.0;
        for node in 0..self.topo.n_nodes() {
            let particles =
                self.assignment.local[node].len() + self.binding.iter().filter(|&&i| self.assignment.atom_node[i] == node).count();
            let bytes = particles.div_ceil(r) * tag_bytes;
            let group: Vec<RankId> = (0..r).map(|k| RankId::new(node, k)).collect();
            let root = group[r - 1];
            if phase == "lr_gather" {
                self.net.gather_to(root, &group, vec![(); r], bytes)?;
            } else {
                self.net.scatter_from(root, &group, vec![(); r], bytes)?;
            }
            worst = worst.max((r - 1) as f64 * lat.message(true, bytes));
        }
        self.net.set_phase(prev);
        Ok(worst)
    }

    fn exchange_per_step(&mut self) -> crate::Result<f64> {
        let lat = *self.net.latency();
        let prev = self.net.phase().to_string();
        let mut worst: f64 = 0.0;
        for (phase, forces) in [("ghost_update", false), ("force_return", true)] {
            self.net.set_phase(phase);
            for node in 0..self.topo.n_nodes() {
                let mut t = 0.0;
                for &(src, count) in &self.traffic.ghost_sources[node] {
                    let bytes = count * if forces { 24 } else { PARTICLE_RECORD_BYTES };
                    let (a, b) = if forces { (node, src) } else { (src, node) };
                    let (ra, rb) = (RankId::new(a, 0), RankId::new(b, 0));
                    self.net.send(ra, rb, phase, (), bytes)?;
                    self.net.recv::<()>(rb, ra, phase)?;
                    t += lat.message(a == b, bytes);
                }
                worst = worst.max(t);
            }
        }
        self.net.set_phase("balance_forward");
        let mut fwd = vec![0.0; self.topo.n_nodes()];
        for &(from, to, rec) in &self.traffic.forwarded {
            let bytes = rec * PARTICLE_RECORD_BYTES;
            let (a, b) = (RankId::new(from, 0), RankId::new(to, 0));
            self.net.send(a, b, "migrate", (), bytes)?;
            self.net.recv::<()>(b, a, "migrate")?;
            self.net.send(b, a, "migrate_result", (), bytes)?;
            self.net.recv::<()>(a, b, "migrate_result")?;
            fwd[from] += 2.0 * lat.message(false, bytes);
        }
        self.net.set_phase(prev);
        Ok(worst + fwd.into_iter().fold(0.0, f64::max))
    }

    /// Evaluate energies and forces at the current positions.
    fn compute_forces(&mut self) -> crate::Result<StepWorkload> {
        let overlap = self.config.parallel.overlap;
        let t0 = Instant::now();
        let deltas = dw_forward(&self.system, &self.nl, &self.dw_model, &self.binding)?;
        for (w, d) in self.system.wcs.iter_mut().zip(&deltas) {
            w.displacement = *d;
        }
        let wc_pos: Vec<Vec3> = self
            .binding
            .iter()
            .zip(&deltas)
            .map(|(&i, &d)| self.system.atoms[i].position + d)
            .collect();
        let charges = ChargeSet::from_system(&self.system, &wc_pos);
        let host_fwd = t0.elapsed().as_secs_f64();

        let gather = if overlap {
            self.lane_transfers("lr_gather", PARTICLE_RECORD_BYTES)?
        } else {
            0.0
        };
        let t1 = Instant::now();
        let Self {
            system,
            nl,
            sr_model,
            dw_model,
            binding,
            pppm,
            dft,
            net,
            params,
            ..
        } = self;
        let solver = LaneInputs {
            pppm: pppm.as_ref(),
            dft: dft.as_ref(),
            params,
        };
        let workers = |system: &System| -> crate::Result<_> {
            let t = Instant::now();
            let sr = short_range(system, nl, sr_model)?;
            let jac = dw_jacobians(system, nl, dw_model, binding)?;
            Ok((sr, jac, t.elapsed().as_secs_f64()))
        };
        let (lane, worker_out) = if overlap {
            std::thread::scope(|s| {
                let handle = s.spawn(|| solver.run(&charges, &system.sim_box, net));
                let w = workers(system);
                let lane = handle.join().map_err(|_| Error::Aborted {
                    step: 0,
                    reason: "long-range lane panicked".into(),
                });
                (lane, w)
            })
        } else {
            let lane = Ok(solver.run(&charges, &system.sim_box, net));
            (lane, workers(system))
        };
        let mut lane = lane??;
        let (sr, jac, host_sr) = worker_out?;
        let wall_force = t1.elapsed().as_secs_f64();
        let n = self.system.n_atoms();
        let t2 = Instant::now();
        let chain = dw_backward(&jac, lane.lr.wc_grad(n), n)?;
        self.forces = assemble_forces(
            &ForceTerms {
                short_range: Some(&sr.forces),
                long_range_ion_grad: Some(lane.lr.ion_grad(n)),
                long_range_wc_grad: Some(lane.lr.wc_grad(n)),
                chain_rule: Some(&chain),
                binding: &self.binding,
            },
            n,
        )?;
        let host_bwd = t2.elapsed().as_secs_f64();
        let scatter = if overlap { self.lane_transfers("lr_scatter", 24)? } else { 0.0 };
        lane.transfer = gather + scatter;
        self.e_sr = sr.energy;
        self.e_gt = lane.lr.energy;

        // simulated workload from the compute assignment
        let tm = &self.config.timing;
        let workers_n = self.config.parallel.workers as f64;
        let nodes = self.topo.n_nodes();
        let mut fwd = vec![0.0; nodes];
        let mut srw = vec![0.0; nodes];
        for t in &sr.terms {
            srw[self.compute.compute_node[t.atom]] += tm.short_range * self.sr_model.cost(t.neighbors.len());
        }
        for t in &jac {
            let node = self.compute.compute_node[t.atom];
            fwd[node] += tm.dw_forward * t.neighbors.len() as f64;
            srw[node] += tm.dw_backward * t.neighbors.len() as f64;
        }
        let max = |v: &[f64]| v.iter().cloned().fold(0.0, f64::max) / workers_n;
        let lr_time = match &lane.report {
            Some(r) => {
                let p3 = self.params.order.pow(3) as f64;
                2.0 * tm.stencil_point * r.max_node_particles as f64 * p3 + tm.dft_mac * r.dft.max_node_macs as f64 + r.dft.critical_time
            }
            None => tm.dft_mac * lane.direct_macs as f64,
        };
        let workload = StepWorkload {
            dw_fwd: max(&fwd),
            sr: max(&srw),
            lr: lr_time,
            lane_transfer: lane.transfer,
            comm: 0.0,
            others: 0.0,
        };
        let host_lr = lane.host;
        let host = PhaseTimings {
            kspace: if overlap { (wall_force - host_sr).max(0.0) } else { host_lr },
            comm: 0.0,
            dw_fwd: host_fwd,
            dw_bwd_dp_all: host_sr + host_bwd,
            others: 0.0,
            hidden_kspace: if overlap {
                (host_lr - (wall_force - host_sr).max(0.0)).max(0.0)
            } else {
                0.0
            },
        };
        self.pending_host = Some(host);
        Ok(workload)
    }

    fn record_energy(&mut self) {
        self.energies.push(EnergyRow {
            step: self.step,
            e_sr: self.e_sr,
            e_gt: self.e_gt,
            e_kin: kinetic_energy(&self.system),
            temperature: temperature(&self.system),
        });
    }

    fn check_finite(&self) -> crate::Result<()> {
        match self
            .system
            .atoms
            .iter()
            .position(|a| !a.velocity.is_finite() || !a.position.is_finite())
        {
            Some(i) => Err(Error::Aborted {
                step: self.step,
                reason: format!("non-finite velocity or position on atom {i}"),
            }),
            None => Ok(()),
        }
    }

    /// One velocity-Verlet step.
    pub fn step(&mut self) -> crate::Result<()> {
        self.check_finite()?;
        let t_start = Instant::now();
        let dt = self.config.dt;
        let kick = |sys: &mut System, f: &[Vec3]| {
            for (a, &fi) in sys.atoms.iter_mut().zip(f) {
                a.velocity += fi * (0.5 * dt * ACCEL_FACTOR / a.species.mass());
            }
        };
        kick(&mut self.system, &self.forces.total);
        for a in &mut self.system.atoms {
            a.position += a.velocity * dt;
        }
        self.system.wrap_positions();
        self.step += 1;
        self.rebuilt = false;
        let due = self.step.is_multiple_of(self.config.neighbor.rebuild_interval)
            || self
                .nl
                .needs_rebuild(&self.system.sim_box, self.system.atoms.iter().map(|a| a.position));
        let t_rebuild = Instant::now();
        if due {
            self.rebuild()?;
        }
        let host_rebuild = t_rebuild.elapsed().as_secs_f64();
        let t_comm = Instant::now();
        let mut comm = self.exchange_per_step()?;
        let host_comm = t_comm.elapsed().as_secs_f64();
        if self.rebuilt {
            comm += self.rebuild_comm;
        }
        let mut work = self.compute_forces()?;
        let t_int = Instant::now();
        kick(&mut self.system, &self.forces.total);
        if self.config.ensemble == Ensemble::NvtRescale {
            let t = temperature(&self.system);
            if t > 0.0 {
                let lam = (1.0 + self.config.thermostat_relaxation * (self.config.temperature / t - 1.0))
                    .max(0.0)
                    .sqrt();
                self.system.atoms.iter_mut().for_each(|a| a.velocity = a.velocity * lam);
            }
        }
        self.check_finite()?;
        self.record_energy();
        let max_atoms = self.compute.counts(self.topo.n_nodes()).into_iter().max().unwrap_or(0) as f64;
        let tm = &self.config.timing;
        work.comm = comm;
        work.others = tm.others_per_atom * max_atoms + if self.rebuilt { tm.rebuild_per_atom * max_atoms } else { 0.0 };
        self.timings.push(schedule(&work, self.config.parallel.overlap));
        let mut host = self.pending_host.take().unwrap_or_default();
        host.comm = host_comm;
        let host_int = t_int.elapsed().as_secs_f64();
        let accounted = host.total() + host_int + host_rebuild;
        host.others = host_int + host_rebuild + (t_start.elapsed().as_secs_f64() - accounted).max(0.0);
        self.host.push(host);
        Ok(())
    }

    /// Warm-up plus measured steps.
    pub fn run(&mut self) -> crate::Result<()> {
        for _ in 0..self.config.warmup + self.config.steps {
            self.step()?;
        }
        self.net.ensure_drained()?;
        Ok(())
    }

    /// Write the report files into `dir`.
    pub fn write_outputs(&self, dir: &Path) -> crate::Result<()> {
        output::write_all(self, dir)
    }
}

struct LaneInputs<'a> {
    pppm: Option<&'a Pppm>,
    dft: Option<&'a DistributedDft>,
    params: &'a EwaldParams,
}

impl LaneInputs<'_> {
    fn run(&self, charges: &ChargeSet, sim_box: &crate::geometry::SimulationBox, net: &mut Network) -> crate::Result<LaneOutput> {
        let t = Instant::now();
        let (lr, report, direct_macs) = match (self.pppm, self.dft) {
            (Some(p), Some(d)) => {
                let (lr, rep) = p.compute(charges, &mut DftBackend::Distributed { dft: d, net })?;
                (lr, Some(rep), 0)
            }
            (Some(p), None) => {
                let (lr, mut rep) = p.compute(charges, &mut DftBackend::Serial)?;
                rep.dft = DftReport {
                    max_node_macs: (4 * p.kgrid().total_points() * p.kgrid().mesh().iter().sum::<usize>()) as u64,
                    ..Default::default()
                };
                (lr, Some(rep), 0)
            }
            _ => {
                let macs = (k_modes(sim_box, self.params).len() * charges.len()) as u64;
                (ewald_forces_direct(charges, sim_box, self.params), None, macs)
            }
        };
        Ok(LaneOutput {
            lr,
            report,
            direct_macs,
            transfer: 0.0,
            host: t.elapsed().as_secs_f64(),
        })
    }
}

#[cfg(test)]
mod tests;
