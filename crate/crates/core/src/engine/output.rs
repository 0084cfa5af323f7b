//! Report files of a run.

use std::fmt::Write as _;
use std::path::Path;

use super::{EnergyRow, PhaseTimings, Simulation};
use crate::error::Error;

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn energy_csv(rows: &[EnergyRow]) -> String {
    let mut s = String::from("step,e_sr,e_gt,e,temperature,e_kin,e_total\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
            r.step,
            r.e_sr,
            r.e_gt,
            r.potential(),
            r.temperature,
            r.e_kin,
            r.total()
        );
    }
    s
}

/// `first_step` labels the first row.
pub fn timings_csv(rows: &[PhaseTimings], first_step: u64) -> String {
    let mut s = String::from("step");
    for c in PhaseTimings::CATEGORIES {
        s.push(',');
        s.push_str(c);
    }
    s.push_str(",total,hidden_kspace\n");
    for (k, t) in rows.iter().enumerate() {
        let _ = write!(s, "{}", first_step + k as u64);
        for v in t.categories() {
            let _ = write!(s, ",{v:.12e}");
        }
        let _ = writeln!(s, ",{:.12e},{:.12e}", t.total(), t.hidden_kspace);
    }
    s
}

fn balance_csv(sim: &Simulation) -> String {
    let mut s = String::from("step,ratio_before,ratio_after,migrated,messages,feasible,fallback\n");
    for e in sim.balance_events() {
        let _ = writeln!(
            s,
            "{},{:.12e},{:.12e},{},{},{},{}",
            e.step,
            e.ratio_before,
            e.ratio_after,
            e.migrated,
            e.messages,
            e.feasible,
            e.fallback.as_deref().unwrap_or("").replace(',', ";")
        );
    }
    s
}

pub(super) fn write_all(sim: &Simulation, dir: &Path) -> crate::Result<()> {
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let first = sim.config().warmup + 1;
    let (timed, host) = sim.measured_timings();
    let mut files = vec![
        ("energy.csv", energy_csv(sim.energies())),
        ("timings.csv", timings_csv(timed, first)),
        ("netstats.json", sim.network().stats().to_json()),
        ("netstats.csv", sim.network().stats().to_csv()),
        (
            "performance.json",
            serde_json::to_string_pretty(&super::performance_report(timed, &[], sim.config().dt))?,
        ),
        ("balance.csv", balance_csv(sim)),
    ];
    if sim.config().timing.host_report {
        files.push(("host_timings.csv", timings_csv(host, first)));
    }
    for (name, body) in files {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(io(&path))?;
    }
    Ok(())
}
