//! Simulated per-step timing and its summary statistics.

use serde::{Deserialize, Serialize};

/// Simulated clock unit, seconds.
pub const SIM_TIME_UNIT: f64 = 1e-6;

/// Cost coefficients of the simulated clock, in simulated units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingModel {
    /// Per unit of short-range model cost.
    #[serde(default = "d_sr")]
    pub short_range: f64,
    /// Per neighbour of a Wannier-binding atom, forward pass.
    #[serde(default = "d_dw_fwd")]
    pub dw_forward: f64,
    /// Per neighbour, vector-Jacobian product.
    #[serde(default = "d_dw_bwd")]
    pub dw_backward: f64,
    /// Per particle and stencil point, spreading or gathering.
    #[serde(default = "d_stencil")]
    pub stencil_point: f64,
    /// Per complex multiply-add of the local partial transforms.
    #[serde(default = "d_mac")]
    pub dft_mac: f64,
    /// Per atom integration and bookkeeping.
    #[serde(default = "d_others")]
    pub others_per_atom: f64,
    /// Per atom on neighbour-list rebuild steps.
    #[serde(default = "d_rebuild")]
    pub rebuild_per_atom: f64,
    /// Also write wall-clock timings; they differ between runs.
    #[serde(default)]
    pub host_report: bool,
}

fn d_sr() -> f64 {
    2e-3
}
fn d_dw_fwd() -> f64 {
    1e-3
}
fn d_dw_bwd() -> f64 {
    1.5e-3
}
fn d_stencil() -> f64 {
    2e-4
}
fn d_mac() -> f64 {
    5e-6
}
fn d_others() -> f64 {
    2e-3
}
fn d_rebuild() -> f64 {
    2e-2
}

impl Default for TimingModel {
    fn default() -> Self {
        Self {
            short_range: d_sr(),
            dw_forward: d_dw_fwd(),
            dw_backward: d_dw_bwd(),
            stencil_point: d_stencil(),
            dft_mac: d_mac(),
            others_per_atom: d_others(),
            rebuild_per_atom: d_rebuild(),
            host_report: false,
        }
    }
}

impl TimingModel {
    pub fn problems(&self) -> Vec<String> {
        [
            ("short_range", self.short_range),
            ("dw_forward", self.dw_forward),
            ("dw_backward", self.dw_backward),
            ("stencil_point", self.stencil_point),
            ("dft_mac", self.dft_mac),
            ("others_per_atom", self.others_per_atom),
            ("rebuild_per_atom", self.rebuild_per_atom),
        ]
        .iter()
        .filter(|(_, v)| !(*v >= 0.0 && v.is_finite()))
        .map(|(k, v)| format!("timing.{k} must be a non-negative number, got {v}"))
        .collect()
    }
}

/// Per-lane durations of one step before scheduling.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepWorkload {
    pub dw_fwd: f64,
    /// Short-range inference plus the Wannier backward pass.
    pub sr: f64,
    /// Long-range solve on its lane.
    pub lr: f64,
    /// Intra-node gather to and scatter from the long-range lane.
    pub lane_transfer: f64,
    pub comm: f64,
    pub others: f64,
}

/// The five step categories; they sum to `total`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub kspace: f64,
    pub comm: f64,
    pub dw_fwd: f64,
    pub dw_bwd_dp_all: f64,
    pub others: f64,
    /// Long-range time covered by the short-range lane.
    pub hidden_kspace: f64,
}

impl PhaseTimings {
    pub const CATEGORIES: [&'static str; 5] = ["kspace", "comm", "dw_fwd", "dw_bwd_dp_all", "others"];

    pub fn categories(&self) -> [f64; 5] {
        [self.kspace, self.comm, self.dw_fwd, self.dw_bwd_dp_all, self.others]
    }

    pub fn total(&self) -> f64 {
        self.categories().iter().sum()
    }
}

/// Sequential: every lane runs in turn. Overlapped: the force phase lasts
/// `max(sr, transfer + lr)` and only the excess is charged to kspace.
pub fn schedule(w: &StepWorkload, overlap: bool) -> PhaseTimings {
    if overlap {
        let lane = w.lane_transfer + w.lr;
        let exposed = (lane - w.sr).max(0.0);
        PhaseTimings {
            kspace: exposed,
            comm: w.comm,
            dw_fwd: w.dw_fwd,
            dw_bwd_dp_all: w.sr,
            others: w.others,
            hidden_kspace: lane - exposed,
        }
    } else {
        PhaseTimings {
            kspace: w.lr,
            comm: w.comm,
            dw_fwd: w.dw_fwd,
            dw_bwd_dp_all: w.sr,
            others: w.others,
            hidden_kspace: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CategoryStats {
    pub mean: f64,
    pub p50: f64,
    pub p95: f64,
}

fn stats(values: &mut [f64]) -> CategoryStats {
    if values.is_empty() {
        return CategoryStats::default();
    }
    values.sort_by(f64::total_cmp);
    let pct = |p: f64| values[((p * (values.len() - 1) as f64).round()) as usize];
    CategoryStats {
        mean: values.iter().sum::<f64>() / values.len() as f64,
        p50: pct(0.5),
        p95: pct(0.95),
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PerformanceSummary {
    pub steps: usize,
    pub kspace: CategoryStats,
    pub comm: CategoryStats,
    pub dw_fwd: CategoryStats,
    pub dw_bwd_dp_all: CategoryStats,
    pub others: CategoryStats,
    pub total: CategoryStats,
    pub hidden_kspace: CategoryStats,
    /// Simulated clock, units of `SIM_TIME_UNIT`.
    pub sim_ns_per_day: f64,
    /// Host wall clock of this process.
    pub host_ns_per_day: f64,
}

fn ns_per_day(dt_fs: f64, steps: usize, seconds: f64) -> f64 {
    if seconds > 0.0 {
        dt_fs * 1e-6 * steps as f64 * 86_400.0 / seconds
    } else {
        0.0
    }
}

/// Summary over measured steps; `host` holds wall-clock seconds per step.
pub fn performance_report(sim: &[PhaseTimings], host: &[PhaseTimings], dt_fs: f64) -> PerformanceSummary {
    let col = |f: &dyn Fn(&PhaseTimings) -> f64| -> CategoryStats { stats(&mut sim.iter().map(f).collect::<Vec<_>>()) };
    let sim_total: f64 = sim.iter().map(PhaseTimings::total).sum();
    let host_total: f64 = host.iter().map(PhaseTimings::total).sum();
    PerformanceSummary {
        steps: sim.len(),
        kspace: col(&|t| t.kspace),
        comm: col(&|t| t.comm),
        dw_fwd: col(&|t| t.dw_fwd),
        dw_bwd_dp_all: col(&|t| t.dw_bwd_dp_all),
        others: col(&|t| t.others),
        total: col(&|t| t.total()),
        hidden_kspace: col(&|t| t.hidden_kspace),
        sim_ns_per_day: ns_per_day(dt_fs, sim.len(), sim_total * SIM_TIME_UNIT),
        host_ns_per_day: ns_per_day(dt_fs, host.len(), host_total),
    }
}
