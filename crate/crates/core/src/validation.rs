//! Oracle checks run against a configuration and its system.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dft::{reduction_count, serial_dft_3d, BatchGranularity, Direction, DistributedDft, KGrid};
use crate::electrostatics::{ewald_forces_direct, DftBackend, LongRange, Pppm};
use crate::engine::{LongRangeSolver, RunConfig, Simulation};
use crate::geometry::Vec3;
use crate::neighbor::build_neighbor_list;
use crate::potential::{evaluate, Evaluation};
use crate::simnet::{Network, PayloadMode};
use crate::system::System;
use crate::Error;

/// Resolution of one packed-lane value.
pub const PACKED_RESOLUTION: f64 = 5e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn le(name: &str, value: f64, tolerance: f64, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            passed: value <= tolerance,
            detail: detail.into(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Uniform complex values in the unit square, reproducible per seed.
pub fn random_grid(n: usize, seed: u64) -> Vec<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect()
}

fn max_abs_diff(a: &[Vec3], b: &[Vec3]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (*x - *y).max_abs()).fold(0.0, f64::max)
}

fn max_abs(a: &[Vec3]) -> f64 {
    a.iter().map(|v| v.max_abs()).fold(0.0, f64::max)
}

/// Pairs within `r_c + skin` missing from or extra in the list.
pub fn neighbor_mismatches(system: &System, cutoff: f64, skin: f64) -> crate::Result<usize> {
    let nl = build_neighbor_list(system, cutoff, skin)?;
    let r = cutoff + skin;
    let mut brute = Vec::new();
    for i in 0..system.n_atoms() {
        for j in i + 1..system.n_atoms() {
            let d = system.sim_box.min_image(system.atoms[j].position - system.atoms[i].position);
            if d.norm2() < r * r {
                brute.push((i, j));
            }
        }
    }
    let listed = nl.pairs();
    let missing = brute.iter().filter(|p| listed.binary_search(p).is_err()).count();
    let extra = listed.iter().filter(|p| brute.binary_search(p).is_err()).count();
    Ok(missing + extra)
}

/// Worst error of a distributed transform against the serial oracle.
pub struct DftComparison {
    /// `‖got − want‖₂ / ‖want‖₂`.
    pub rel_l2: f64,
    /// `max_k |got − want| / Σ|x|`; the L1 norm bounds every spectral value.
    pub max_over_l1: f64,
    pub lane_carries: u64,
    pub max_chain_reductions: [u64; 3],
    /// Longest reduction ring over the three dimensions.
    pub ring_length: usize,
}

pub fn compare_dft(
    mesh: [usize; 3],
    grid: [usize; 3],
    mode: PayloadMode,
    batch: BatchGranularity,
    samples: u64,
) -> crate::Result<DftComparison> {
    let kg = KGrid::new(mesh, grid)?;
    let mut net = Network::new(kg.n_nodes(), 1, Default::default());
    let dft = DistributedDft::new(&mut net, kg.clone(), mode, crate::simnet::DEFAULT_CHAIN_LIMIT, batch)?;
    let mut out = DftComparison {
        rel_l2: 0.0,
        max_over_l1: 0.0,
        lane_carries: 0,
        max_chain_reductions: [0; 3],
        ring_length: grid.into_iter().max().unwrap_or(1),
    };
    for seed in 0..samples {
        let full = random_grid(kg.total_points(), seed);
        let (bricks, rep) = dft.transform(&mut net, kg.scatter(&full), Direction::Forward)?;
        let got = kg.assemble(&bricks);
        let want = serial_dft_3d(&full, mesh, Direction::Forward)?;
        let num: f64 = got.iter().zip(&want).map(|(a, b)| (a - b).norm_sqr()).sum();
        let den: f64 = want.iter().map(|b| b.norm_sqr()).sum();
        let l1: f64 = full.iter().map(|v| v.norm()).sum();
        let worst = got.iter().zip(&want).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        out.rel_l2 = out.rel_l2.max((num / den).sqrt());
        out.max_over_l1 = out.max_over_l1.max(worst / l1);
        for d in 0..3 {
            out.max_chain_reductions[d] = out.max_chain_reductions[d].max(rep.max_chain_reductions[d]);
        }
    }
    out.lane_carries = net.stats().totals.lane_carries;
    Ok(out)
}

/// Serial evaluation with the exact k-space sum.
pub fn evaluate_direct(config: &RunConfig, system: &System) -> crate::Result<Evaluation> {
    let nl = build_neighbor_list(system, config.neighbor.cutoff, config.neighbor.skin)?;
    let sr = config.short_range_spec().build()?;
    let params = config.electrostatics.params();
    evaluate(system, &nl, &sr, &config.wannier, |c| {
        Ok::<_, Error>(ewald_forces_direct(c, &system.sim_box, &params))
    })
}

/// Evaluation with PPPM over the configured node grid and payload mode.
pub fn evaluate_pppm(config: &RunConfig, system: &System, mode: Option<PayloadMode>) -> crate::Result<Evaluation> {
    let nl = build_neighbor_list(system, config.neighbor.cutoff, config.neighbor.skin)?;
    let sr = config.short_range_spec().build()?;
    let grid = config.topology.node_grid;
    let mut sys = system.clone();
    sys.wrap_positions();
    let pppm = Pppm::new(config.electrostatics.params(), sys.sim_box, grid)?;
    let long_range = |c: &crate::electrostatics::ChargeSet| -> crate::Result<LongRange> {
        match mode {
            None => Ok(pppm.compute(c, &mut DftBackend::Serial)?.0),
            Some(m) => {
                let mut net = Network::new(grid.iter().product(), 1, Default::default());
                let dft = DistributedDft::new(
                    &mut net,
                    pppm.kgrid().clone(),
                    m,
                    config.parallel.chain_limit,
                    config.parallel.batch,
                )?;
                Ok(pppm.compute(c, &mut DftBackend::Distributed { dft: &dft, net: &mut net })?.0)
            }
        }
    };
    evaluate(&sys, &nl, &sr, &config.wannier, long_range)
}

/// Central differences of `E_sr + E_Gt` (exact k-space sum) on the first
/// `atoms` atoms; returns `(with chain rule, without chain rule)` max errors.
pub fn gradient_errors(config: &RunConfig, system: &System, atoms: usize, h: f64) -> crate::Result<(f64, f64)> {
    let base = evaluate_direct(config, system)?;
    let f = &base.forces;
    let n = system.n_atoms();
    let no_chain: Vec<Vec3> = (0..n)
        .map(|i| f.short_range[i] + f.long_range_direct[i] + f.long_range_wc[i])
        .collect();
    let (mut with, mut without): (f64, f64) = (0.0, 0.0);
    for i in 0..atoms.min(n) {
        for d in 0..3 {
            let energy = |s: f64| -> crate::Result<f64> {
                let mut sys = system.clone();
                sys.atoms[i].position[d] += s * h;
                Ok(evaluate_direct(config, &sys)?.energy())
            };
            let fd = -(energy(1.0)? - energy(-1.0)?) / (2.0 * h);
            with = with.max((fd - f.total[i][d]).abs());
            without = without.max((fd - no_chain[i][d]).abs());
        }
    }
    Ok((with, without))
}

/// Run every check; the system is the one the config describes.
pub fn validate(config: &RunConfig, system: &System) -> crate::Result<ValidationReport> {
    let problems = config.problems(system);
    if !problems.is_empty() {
        return Err(Error::Config(problems));
    }
    let mut checks = Vec::new();
    let nb = &config.neighbor;

    let miss = neighbor_mismatches(system, nb.cutoff, nb.skin)?;
    checks.push(Check::le(
        "neighbor_list",
        miss as f64,
        0.0,
        "pairs differing from a brute-force scan",
    ));

    let mesh = config.electrostatics.mesh;
    let grid = config.topology.node_grid;
    let f64_cmp = compare_dft(mesh, grid, PayloadMode::ThreeF64, config.parallel.batch, 3)?;
    checks.push(Check::le(
        "dft_f64_oracle",
        f64_cmp.rel_l2,
        1e-12,
        "relative L2 error against the serial transform",
    ));

    let packed = compare_dft(mesh, grid, PayloadMode::PackedI32x12, config.parallel.batch, 10)?;
    let bound = (packed.ring_length + 1) as f64 * PACKED_RESOLUTION;
    checks.push(Check::le(
        "dft_packed_bound",
        packed.max_over_l1,
        bound,
        format!("max spectral error over the input L1 norm, ring length {}", packed.ring_length),
    ));
    checks.push(Check::le(
        "dft_packed_carries",
        packed.lane_carries as f64,
        0.0,
        "lane sums reaching 2^32",
    ));

    let counts_ok = reduction_count(64, PayloadMode::SixU64) == 22 && reduction_count(64, PayloadMode::PackedI32x12) == 11;
    let mut live_ok = true;
    if config.parallel.batch == BatchGranularity::Brick {
        let kg = KGrid::new(mesh, grid)?;
        let widest = (0..kg.n_nodes()).map(|n| kg.brick_points(n)).max().unwrap_or(0);
        let want = reduction_count(widest, PayloadMode::PackedI32x12) as u64;
        live_ok = grid.iter().product::<usize>() == 1 || (0..3).all(|d| grid[d] == 1 || packed.max_chain_reductions[d] == want);
    }
    checks.push(Check::le(
        "reduction_count",
        f64::from(u8::from(!(counts_ok && live_ok))),
        0.0,
        "64-point bricks cost 22 (six_u64) and 11 (packed) operations; live counts match",
    ));

    if config.electrostatics.solver == LongRangeSolver::Pppm {
        let direct = evaluate_direct(config, system)?;
        let pppm = evaluate_pppm(config, system, None)?;
        checks.push(Check::le(
            "pppm_energy",
            ((pppm.e_gt - direct.e_gt) / direct.e_gt).abs(),
            1e-4,
            "relative error of the mesh energy against the exact k-space sum",
        ));
        checks.push(Check::le(
            "pppm_forces",
            max_abs_diff(&pppm.forces.total, &direct.forces.total),
            1e-4,
            "max force component error, energy units per Å",
        ));
        if grid.iter().product::<usize>() > 1 {
            let dbl = evaluate_pppm(config, system, Some(PayloadMode::ThreeF64))?;
            let pk = evaluate_pppm(config, system, Some(PayloadMode::PackedI32x12))?;
            checks.push(Check::le(
                "mixed_precision_energy",
                ((pk.energy() - dbl.energy()) / dbl.energy()).abs(),
                1e-5,
                "packed against double payloads, relative",
            ));
            checks.push(Check::le(
                "mixed_precision_forces",
                max_abs_diff(&pk.forces.total, &dbl.forces.total) / max_abs(&dbl.forces.total),
                1e-5,
                "packed against double payloads, relative to the largest component",
            ));
        }
    }

    let (with, without) = gradient_errors(config, system, 6, 1e-5)?;
    checks.push(Check::le(
        "force_gradient",
        with,
        1e-5,
        "max component error against central differences",
    ));
    checks.push(Check {
        name: "chain_rule_guard".into(),
        value: without,
        tolerance: 1e-5,
        passed: without > 1e-5,
        detail: "the gradient check must fail without the centroid chain-rule term".into(),
    });

    let mut short = config.clone();
    short.steps = 3;
    short.warmup = 0;
    let run = |overlap: bool| -> crate::Result<Simulation> {
        let mut c = short.clone();
        c.parallel.overlap = overlap;
        let mut s = Simulation::with_system(c, system.clone())?;
        s.run()?;
        Ok(s)
    };
    let (a, b) = (run(false)?, run(true)?);
    checks.push(Check::le(
        "schedule_equivalence",
        f64::from(u8::from(a.energies() != b.energies())),
        0.0,
        "overlapped and sequential steps give identical energies",
    ));
    Ok(ValidationReport { checks })
}
