use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::balance::PlanMode;
use crate::dft::BatchGranularity;
use crate::electrostatics::{default_k_cutoff, EwaldParams};
use crate::potential::{PairAnalytic, ShortRangeSpec, WannierModel};
use crate::simnet::{LatencyModel, PayloadMode, DEFAULT_CHAIN_LIMIT};
use crate::system::{generate_water_box, replicate_box, System, WaterBoxSpec};
use crate::Error;

use super::timing::TimingModel;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ensemble {
    Nve,
    #[default]
    NvtRescale,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemSource {
    Generated {
        waters: usize,
        edge: f64,
        #[serde(default = "one3")]
        replicate: [usize; 3],
        /// Defaults to the run seed.
        #[serde(default)]
        seed: Option<u64>,
    },
    File {
        path: PathBuf,
    },
}

fn one3() -> [usize; 3] {
    [1, 1, 1]
}

impl SystemSource {
    /// Relative file paths resolve against `base`.
    pub fn load(&self, run_seed: u64, base: Option<&Path>) -> crate::Result<System> {
        match self {
            Self::Generated {
                waters,
                edge,
                replicate,
                seed,
            } => {
                let sys = generate_water_box(&WaterBoxSpec::new(*waters, *edge), seed.unwrap_or(run_seed))?;
                if *replicate == [1, 1, 1] {
                    Ok(sys)
                } else {
                    Ok(replicate_box(&sys, *replicate)?)
                }
            }
            Self::File { path } => {
                let p = match base {
                    Some(b) if path.is_relative() => b.join(path),
                    _ => path.clone(),
                };
                System::load(&p)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeighborConfig {
    #[serde(default = "d_cutoff")]
    pub cutoff: f64,
    #[serde(default = "d_skin")]
    pub skin: f64,
    #[serde(default = "d_rebuild")]
    pub rebuild_interval: u64,
}

fn d_cutoff() -> f64 {
    crate::neighbor::DEFAULT_CUTOFF
}
fn d_skin() -> f64 {
    crate::neighbor::DEFAULT_SKIN
}
fn d_rebuild() -> u64 {
    crate::neighbor::DEFAULT_REBUILD_INTERVAL
}

impl Default for NeighborConfig {
    fn default() -> Self {
        Self {
            cutoff: d_cutoff(),
            skin: d_skin(),
            rebuild_interval: d_rebuild(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LongRangeSolver {
    #[default]
    Pppm,
    /// Exact k-space sum; small systems only.
    Direct,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DftBackendKind {
    #[default]
    Distributed,
    Serial,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElectrostaticsConfig {
    #[serde(default = "d_beta")]
    pub beta: f64,
    /// Defaults to the truncation-based cutoff for `beta`.
    #[serde(default)]
    pub k_cutoff: Option<f64>,
    pub mesh: [usize; 3],
    #[serde(default = "d_order")]
    pub order: usize,
    #[serde(default)]
    pub solver: LongRangeSolver,
    #[serde(default)]
    pub backend: DftBackendKind,
}

fn d_beta() -> f64 {
    0.3
}
fn d_order() -> usize {
    4
}

impl ElectrostaticsConfig {
    pub fn new(mesh: [usize; 3]) -> Self {
        Self {
            beta: d_beta(),
            k_cutoff: None,
            mesh,
            order: d_order(),
            solver: LongRangeSolver::default(),
            backend: DftBackendKind::default(),
        }
    }

    pub fn params(&self) -> EwaldParams {
        EwaldParams {
            beta: self.beta,
            k_cutoff: self.k_cutoff.unwrap_or_else(|| default_k_cutoff(self.beta)),
            mesh: self.mesh,
            order: self.order,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyConfig {
    #[serde(default = "one3")]
    pub node_grid: [usize; 3],
    #[serde(default = "d_ranks")]
    pub ranks_per_node: usize,
    #[serde(default)]
    pub latency: LatencyModel,
}

fn d_ranks() -> usize {
    4
}

impl Default for TopologyConfig {
    fn default() -> Self {
        Self {
            node_grid: one3(),
            ranks_per_node: d_ranks(),
            latency: LatencyModel::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParallelConfig {
    #[serde(default)]
    pub overlap: bool,
    #[serde(default = "d_payload")]
    pub payload_mode: PayloadMode,
    #[serde(default = "d_chain_limit")]
    pub chain_limit: usize,
    #[serde(default)]
    pub batch: BatchGranularity,
    /// Worker cores per node besides the long-range lane.
    #[serde(default = "d_workers")]
    pub workers: usize,
}

fn d_payload() -> PayloadMode {
    PayloadMode::ThreeF64
}
fn d_chain_limit() -> usize {
    DEFAULT_CHAIN_LIMIT
}
fn d_workers() -> usize {
    4
}

impl Default for ParallelConfig {
    fn default() -> Self {
        Self {
            overlap: false,
            payload_mode: d_payload(),
            chain_limit: d_chain_limit(),
            batch: BatchGranularity::default(),
            workers: d_workers(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BalanceMode {
    #[default]
    Off,
    RingCorrected,
    RingLiteral,
}

impl BalanceMode {
    pub fn plan_mode(self) -> Option<PlanMode> {
        match self {
            Self::Off => None,
            Self::RingCorrected => Some(PlanMode::Corrected),
            Self::RingLiteral => Some(PlanMode::Literal),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string())).ok()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MigrationStrategy {
    #[default]
    GhostExpansion,
    Forwarding,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BalanceConfig {
    #[serde(default)]
    pub mode: BalanceMode,
    #[serde(default)]
    pub strategy: MigrationStrategy,
    #[serde(default = "d_interval")]
    pub interval: u64,
    /// max/mean ratio that forces a rebalance at the next rebuild.
    #[serde(default = "d_threshold")]
    pub threshold: f64,
}

fn d_interval() -> u64 {
    50
}
fn d_threshold() -> f64 {
    1.25
}

impl Default for BalanceConfig {
    fn default() -> Self {
        Self {
            mode: BalanceMode::Off,
            strategy: MigrationStrategy::default(),
            interval: d_interval(),
            threshold: d_threshold(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemSource,
    #[serde(default = "d_steps")]
    pub steps: u64,
    /// Steps run before `steps` and left out of timing statistics.
    #[serde(default)]
    pub warmup: u64,
    /// fs.
    #[serde(default = "d_dt")]
    pub dt: f64,
    #[serde(default)]
    pub ensemble: Ensemble,
    /// Target and initial temperature, K.
    #[serde(default = "d_temperature")]
    pub temperature: f64,
    #[serde(default = "d_relax")]
    pub thermostat_relaxation: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub neighbor: NeighborConfig,
    /// Defaults to the pair surrogate at the neighbour cutoff.
    #[serde(default)]
    pub short_range: Option<ShortRangeSpec>,
    #[serde(default = "d_wannier")]
    pub wannier: WannierModel,
    pub electrostatics: ElectrostaticsConfig,
    #[serde(default)]
    pub topology: TopologyConfig,
    #[serde(default)]
    pub parallel: ParallelConfig,
    #[serde(default)]
    pub balance: BalanceConfig,
    #[serde(default)]
    pub timing: TimingModel,
}

fn d_steps() -> u64 {
    100
}
fn d_dt() -> f64 {
    1.0
}
fn d_temperature() -> f64 {
    300.0
}
fn d_relax() -> f64 {
    0.1
}
fn d_wannier() -> WannierModel {
    WannierModel::new(4.0)
}

impl RunConfig {
    /// Small defaults around a source and mesh.
    pub fn new(system: SystemSource, mesh: [usize; 3]) -> Self {
        Self {
            system,
            steps: d_steps(),
            warmup: 0,
            dt: d_dt(),
            ensemble: Ensemble::default(),
            temperature: d_temperature(),
            thermostat_relaxation: d_relax(),
            seed: 0,
            neighbor: NeighborConfig::default(),
            short_range: None,
            wannier: d_wannier(),
            electrostatics: ElectrostaticsConfig::new(mesh),
            topology: TopologyConfig::default(),
            parallel: ParallelConfig::default(),
            balance: BalanceConfig::default(),
            timing: TimingModel::default(),
        }
    }

    /// 32 waters in a 10.5 Å box on two nodes; small enough for a laptop.
    pub fn reference() -> Self {
        let mut c = Self::new(
            SystemSource::Generated {
                waters: 32,
                edge: 10.5,
                replicate: one3(),
                seed: None,
            },
            [20, 20, 20],
        );
        c.neighbor = NeighborConfig {
            cutoff: 4.5,
            skin: 0.5,
            rebuild_interval: NeighborConfig::default().rebuild_interval,
        };
        c.topology.node_grid = [2, 1, 1];
        c
    }

    pub fn short_range_spec(&self) -> ShortRangeSpec {
        self.short_range
            .clone()
            .unwrap_or_else(|| ShortRangeSpec::PairAnalytic(PairAnalytic::water(self.neighbor.cutoff)))
    }

    pub fn from_json(s: &str) -> crate::Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: &Path) -> crate::Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::from_json(&s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Every problem with the configuration against a loaded system.
    pub fn problems(&self, system: &System) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            out.push(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            out.push(format!("temperature must be non-negative, got {}", self.temperature));
        }
        if !(0.0..=1.0).contains(&self.thermostat_relaxation) {
            out.push(format!(
                "thermostat_relaxation must be in [0, 1], got {}",
                self.thermostat_relaxation
            ));
        }
        let nb = &self.neighbor;
        if !(nb.cutoff > 0.0) || !(nb.skin >= 0.0) {
            out.push(format!("neighbour cutoff/skin must be positive, got {}/{}", nb.cutoff, nb.skin));
        }
        if nb.rebuild_interval == 0 {
            out.push("neighbor.rebuild_interval must be at least 1".into());
        }
        let half = 0.5 * system.sim_box.min_edge();
        if nb.cutoff + nb.skin > half {
            out.push(format!(
                "cutoff + skin = {} exceeds half the smallest box edge ({half})",
                nb.cutoff + nb.skin
            ));
        }
        let sr = self.short_range_spec();
        match sr.build() {
            Ok(_) if sr.cutoff() > nb.cutoff => {
                out.push(format!("short-range cutoff {} exceeds neighbour cutoff {}", sr.cutoff(), nb.cutoff))
            }
            Ok(_) => {}
            Err(e) => out.push(e.to_string()),
        }
        if let Err(e) = self.wannier.validate() {
            out.push(e.to_string());
        }
        if self.wannier.r_c > nb.cutoff {
            out.push(format!("wannier r_c {} exceeds neighbour cutoff {}", self.wannier.r_c, nb.cutoff));
        }
        let params = self.electrostatics.params();
        out.extend(params.problems(&system.sim_box));
        let topo = &self.topology;
        if topo.node_grid.contains(&0) {
            out.push(format!("node_grid entries must be positive, got {:?}", topo.node_grid));
        } else if self.electrostatics.solver == LongRangeSolver::Pppm {
            for d in 0..3 {
                if self.electrostatics.mesh[d] < crate::dft::MIN_BRICK_POINTS * topo.node_grid[d] {
                    out.push(format!(
                        "mesh[{d}] = {} leaves bricks under {} points over {} nodes",
                        self.electrostatics.mesh[d],
                        crate::dft::MIN_BRICK_POINTS,
                        topo.node_grid[d]
                    ));
                }
            }
        }
        if topo.ranks_per_node == 0 {
            out.push("ranks_per_node must be at least 1".into());
        }
        if self.parallel.workers == 0 {
            out.push("parallel.workers must be at least 1".into());
        }
        if self.parallel.chain_limit == 0 {
            out.push("parallel.chain_limit must be at least 1".into());
        }
        if self.balance.interval == 0 {
            out.push("balance.interval must be at least 1".into());
        }
        if let Err(e) = system.validate() {
            out.push(e.to_string());
        }
        if system.total_charge().abs() > 1e-9 {
            out.push(format!("system must be neutral, total charge {}", system.total_charge()));
        }
        out.extend(self.timing.problems());
        out
    }
}
