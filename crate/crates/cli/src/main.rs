use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lrmd_core::balance::{goal_counts, imbalance_metric, plan_migration, PlanMode, RingOrder};
use lrmd_core::dft::{reduction_count, serial_dft_3d, BatchGranularity, Direction, DistributedDft, KGrid};
use lrmd_core::engine::{BalanceMode, RunConfig, Simulation};
use lrmd_core::simnet::{Network, PayloadMode};
use lrmd_core::system::{generate_water_box, replicate_box, WaterBoxSpec};
use lrmd_core::validation::{random_grid, validate};
use lrmd_core::Error;

/// Molecular dynamics with a Wannier-centroid long-range model on a simulated
/// in-network reduction fabric.
#[derive(Parser)]
#[command(name = "lrmd", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a random water box and write it as JSON.
    Gen(GenArgs),
    /// Run a simulation and write energy, timing and network reports.
    Run(RunArgs),
    /// Time the distributed DFT and compare it with the serial transform.
    BenchFft(BenchFftArgs),
    /// Plan ring migrations for synthetic counts or a live run.
    BenchBalance(BenchBalanceArgs),
    /// Check the engine against its oracles and print a JSON verdict.
    Validate(ValidateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Payload {
    F64,
    U64,
    I32x12,
}

impl From<Payload> for PayloadMode {
    fn from(p: Payload) -> Self {
        match p {
            Payload::F64 => PayloadMode::ThreeF64,
            Payload::U64 => PayloadMode::SixU64,
            Payload::I32x12 => PayloadMode::PackedI32x12,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Balance {
    Off,
    RingCorrected,
    RingLiteral,
}

impl From<Balance> for BalanceMode {
    fn from(b: Balance) -> Self {
        match b {
            Balance::Off => BalanceMode::Off,
            Balance::RingCorrected => BalanceMode::RingCorrected,
            Balance::RingLiteral => BalanceMode::RingLiteral,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Batch {
    Brick,
    Pencil,
}

/// Overrides applied on top of a config file.
#[derive(Args)]
struct Overrides {
    /// JSON run configuration; relative system paths resolve against its directory.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run seed (velocities and generated systems).
    #[arg(long)]
    seed: Option<u64>,
    /// Overlap the long-range lane with short-range work.
    #[arg(long)]
    overlap: bool,
    /// Reduction payload layout.
    #[arg(long, value_enum)]
    payload_mode: Option<Payload>,
    /// Inter-node load balancing.
    #[arg(long, value_enum)]
    balance_mode: Option<Balance>,
}

impl Overrides {
    /// The config (or the reference config) with overrides applied, plus the
    /// directory relative system paths resolve against.
    fn resolve(&self) -> lrmd_core::Result<(RunConfig, Option<PathBuf>)> {
        let (mut c, base) = match &self.config {
            Some(p) => (RunConfig::load(p)?, p.parent().map(Path::to_path_buf)),
            None => (RunConfig::reference(), None),
        };
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if self.overlap {
            c.parallel.overlap = true;
        }
        if let Some(p) = self.payload_mode {
            c.parallel.payload_mode = p.into();
        }
        if let Some(b) = self.balance_mode {
            c.balance.mode = b.into();
        }
        Ok((c, base))
    }
}

/// `a,b,c` of positive integers.
fn triple(s: &str) -> Result<[usize; 3], String> {
    let v: Vec<usize> = s
        .split(',')
        .map(|x| x.trim().parse::<usize>().map_err(|e| format!("{x:?}: {e}")))
        .collect::<Result<_, _>>()?;
    match v[..] {
        [a, b, c] if a > 0 && b > 0 && c > 0 => Ok([a, b, c]),
        _ => Err(format!("expected three positive integers, got {s:?}")),
    }
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 128)]
    waters: usize,
    /// Cubic box edge in Å.
    #[arg(long, default_value_t = 16.4)]
    edge: f64,
    /// Replication factors, e.g. 2,2,2.
    #[arg(long, value_parser = triple, default_value = "1,1,1")]
    replicate: [usize; 3],
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; `.xyz` writes extended XYZ, anything else JSON.
    #[arg(long, default_value = "system.json")]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    o: Overrides,
    /// Directory for the report files.
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Override the number of measured steps.
    #[arg(long)]
    steps: Option<u64>,
}

#[derive(Args)]
struct BenchFftArgs {
    /// Mesh points per dimension.
    #[arg(long, value_parser = triple, default_value = "12,18,12")]
    mesh: [usize; 3],
    /// Node grid.
    #[arg(long, value_parser = triple, default_value = "2,3,2")]
    grid: [usize; 3],
    /// Payload layout; all three when omitted.
    #[arg(long, value_enum)]
    payload_mode: Option<Payload>,
    /// Forward transforms per mode, each on a fresh random input.
    #[arg(long, default_value_t = 10)]
    iterations: u64,
    #[arg(long, value_enum, default_value_t = Batch::Brick)]
    batch: Batch,
    /// Also write the CSV to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchBalanceArgs {
    /// Comma-separated atom counts per node, in ring order. Ignored with --config.
    #[arg(long, value_delimiter = ',', default_values_t = [64, 64, 64, 64])]
    counts: Vec<usize>,
    /// Planning rounds on the synthetic counts, each starting from the last result.
    #[arg(long, default_value_t = 1)]
    steps: u64,
    /// Balance a live run of this configuration instead.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = Balance::RingCorrected)]
    balance_mode: Balance,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    o: Overrides,
    /// Also write the JSON report to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Check(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Json(_) => Failure::Usage(e.to_string()),
            other => Failure::Check(other.to_string()),
        }
    }
}

fn write_file(path: &Path, body: &str) -> Result<(), Failure> {
    std::fs::write(path, body).map_err(|e| Failure::Check(format!("cannot write {}: {e}", path.display())))
}

fn gen(a: &GenArgs) -> Result<(), Failure> {
    let base = generate_water_box(&WaterBoxSpec::new(a.waters, a.edge), a.seed).map_err(|e| Failure::Check(e.to_string()))?;
    let factors = a.replicate;
    let sys = if factors == [1, 1, 1] {
        base
    } else {
        replicate_box(&base, factors).map_err(|e| Failure::Check(e.to_string()))?
    };
    if a.out.extension().is_some_and(|e| e == "xyz") {
        write_file(&a.out, &sys.to_extxyz())?;
    } else {
        sys.save(&a.out)?;
    }
    println!("atoms {} wannier_centroids {} -> {}", sys.n_atoms(), sys.wcs.len(), a.out.display());
    Ok(())
}

fn run(a: &RunArgs) -> Result<(), Failure> {
    let (mut c, base) = a.o.resolve()?;
    if let Some(s) = a.steps {
        c.steps = s;
    }
    let mut sim = Simulation::new(c, base.as_deref())?;
    let outcome = sim.run();
    sim.write_outputs(&a.out_dir)?;
    outcome?;
    let last = sim.energies().last().expect("initial row recorded");
    println!(
        "steps {} e_total {:.9e} e2/A temperature {:.3} K -> {}",
        sim.current_step(),
        last.total(),
        last.temperature,
        a.out_dir.display()
    );
    Ok(())
}

fn bench_fft(a: &BenchFftArgs) -> lrmd_core::Result<String> {
    let (mesh, grid) = (a.mesh, a.grid);
    let batch = match a.batch {
        Batch::Brick => BatchGranularity::Brick,
        Batch::Pencil => BatchGranularity::Pencil,
    };
    let modes: Vec<PayloadMode> = match a.payload_mode {
        Some(p) => vec![p.into()],
        None => PayloadMode::ALL.to_vec(),
    };
    let kg = KGrid::new(mesh, grid)?;
    let max_points = (0..kg.n_nodes()).map(|n| kg.brick_points(n)).max().unwrap_or(0);
    let mut csv = String::from(
        "mode,mesh,grid,iterations,expected_reductions,reductions_x,reductions_y,reductions_z,sim_latency_per_transform,max_rel_error\n",
    );
    for mode in modes {
        let mut net = Network::new(kg.n_nodes(), 1, Default::default());
        let dft = DistributedDft::new(&mut net, kg.clone(), mode, lrmd_core::simnet::DEFAULT_CHAIN_LIMIT, batch)?;
        let (mut chain, mut latency, mut err) = ([0u64; 3], 0.0, 0.0f64);
        for it in 0..a.iterations {
            let full = random_grid(kg.total_points(), it);
            let (bricks, rep) = dft.transform(&mut net, kg.scatter(&full), Direction::Forward)?;
            let got = kg.assemble(&bricks);
            let want = serial_dft_3d(&full, mesh, Direction::Forward)?;
            let scale = want.iter().map(|v| v.norm()).fold(0.0, f64::max);
            let worst = got.iter().zip(&want).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
            err = err.max(worst / scale);
            latency += rep.critical_time;
            for d in 0..3 {
                chain[d] = chain[d].max(rep.max_chain_reductions[d]);
            }
        }
        let _ = writeln!(
            csv,
            "{},{}x{}x{},{}x{}x{},{},{},{},{},{},{:.6e},{:.6e}",
            mode.name(),
            mesh[0],
            mesh[1],
            mesh[2],
            grid[0],
            grid[1],
            grid[2],
            a.iterations,
            reduction_count(max_points, mode),
            chain[0],
            chain[1],
            chain[2],
            latency / a.iterations.max(1) as f64,
            err
        );
    }
    Ok(csv)
}

const BALANCE_HEADER: &str = "step,max_over_mean,max_over_mean_after,migrated,messages,allgathers,feasible\n";

fn bench_balance(a: &BenchBalanceArgs) -> lrmd_core::Result<String> {
    let mut csv = String::from(BALANCE_HEADER);
    if let Some(path) = &a.config {
        let mut c = RunConfig::load(path)?;
        if let Some(s) = a.seed {
            c.seed = s;
        }
        c.balance.mode = a.balance_mode.into();
        let mut sim = Simulation::new(c, path.parent())?;
        sim.run()?;
        for e in sim.balance_events() {
            let _ = writeln!(
                csv,
                "{},{:.6},{:.6},{},{},1,{}",
                e.step, e.ratio_before, e.ratio_after, e.migrated, e.messages, e.feasible
            );
        }
        return Ok(csv);
    }
    let mode = BalanceMode::from(a.balance_mode).plan_mode().unwrap_or(PlanMode::Corrected);
    let ring = RingOrder::new((0..a.counts.len()).collect())?;
    let mut counts = a.counts.clone();
    for step in 0..a.steps {
        let (before, _) = imbalance_metric(&counts)?;
        let plan = plan_migration(&counts, &goal_counts(counts.iter().sum(), &ring), &ring, mode)?;
        let applied = plan.feasible;
        if applied {
            counts = plan.final_counts.clone();
        }
        let (after, _) = imbalance_metric(&counts)?;
        let migrated = if applied { plan.migrated() } else { 0 };
        let messages = if applied {
            plan.n_send.iter().filter(|&&s| s > 0).count()
        } else {
            0
        };
        let _ = writeln!(csv, "{step},{before:.6},{after:.6},{migrated},{messages},1,{}", plan.feasible);
    }
    Ok(csv)
}

fn run_validate(a: &ValidateArgs) -> Result<bool, Failure> {
    let (c, base) = a.o.resolve()?;
    let system = c.system.load(c.seed, base.as_deref())?;
    let report = validate(&c, &system)?;
    let json = report.to_json();
    if let Some(p) = &a.out {
        write_file(p, &json)?;
    }
    println!("{json}");
    Ok(report.passed())
}

fn emit(csv: String, out: Option<&Path>) -> Result<(), Failure> {
    if let Some(p) = out {
        write_file(p, &csv)?;
    }
    print!("{csv}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Cmd::Gen(a) => gen(a),
        Cmd::Run(a) => run(a),
        Cmd::BenchFft(a) => bench_fft(a).map_err(Failure::from).and_then(|csv| emit(csv, a.out.as_deref())),
        Cmd::BenchBalance(a) => bench_balance(a).map_err(Failure::from).and_then(|csv| emit(csv, a.out.as_deref())),
        Cmd::Validate(a) => match run_validate(a) {
            Ok(true) => Ok(()),
            Ok(false) => Err(Failure::Check("validation failed".into())),
            Err(e) => Err(e),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Check(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
