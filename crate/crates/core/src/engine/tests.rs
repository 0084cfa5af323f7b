use super::*;
use crate::potential::{PairAnalytic, ShortRangeSpec};

fn small(steps: u64) -> RunConfig {
    let mut c = RunConfig::new(
        SystemSource::Generated {
            waters: 32,
            edge: 10.5,
            replicate: [1, 1, 1],
            seed: None,
        },
        [12, 12, 12],
    );
    c.steps = steps;
    c.seed = 7;
    c.neighbor = NeighborConfig {
        cutoff: 4.0,
        skin: 1.0,
        rebuild_interval: 10,
    };
    c.short_range = Some(ShortRangeSpec::PairAnalytic(PairAnalytic::water(4.0)));
    c.topology.node_grid = [2, 1, 1];
    c
}

fn run(c: RunConfig) -> Simulation {
    let mut s = Simulation::new(c, None).unwrap();
    s.run().unwrap();
    s
}

#[test]
fn initial_velocities_hit_target() {
    let s = Simulation::new(small(0), None).unwrap();
    assert!((temperature(s.system()) - 300.0).abs() < 1e-9);
    assert!(total_momentum(s.system()).max_abs() < 1e-12);
    assert_eq!(s.energies().len(), 1);
}

#[test]
fn nve_energy_is_conserved() {
    let mut c = small(200);
    c.ensemble = Ensemble::Nve;
    c.dt = 0.25;
    let s = run(c);
    let e = s.energies();
    let e0 = e[0].total();
    let scale = e.iter().map(|r| r.e_kin).fold(0.0, f64::max);
    let drift = e.iter().map(|r| (r.total() - e0).abs()).fold(0.0, f64::max) / scale;
    assert!(drift < 1e-2, "relative drift {drift}");
}

#[test]
fn direct_solver_conserves_momentum() {
    let mut c = small(30);
    c.ensemble = Ensemble::Nve;
    c.dt = 0.25;
    c.electrostatics.solver = LongRangeSolver::Direct;
    let s = run(c);
    let p = total_momentum(s.system());
    let f = s.forces().total.iter().fold(Vec3::ZERO, |a, &b| a + b);
    let fmax = s.forces().total.iter().map(|v| v.max_abs()).fold(0.0, f64::max);
    assert!(f.max_abs() < 1e-9 * fmax.max(1.0), "net force {f:?}");
    assert!(p.max_abs() < 1e-8, "{p:?}");
}

#[test]
fn overlap_is_bitwise_identical() {
    let a = run(small(12));
    let mut c = small(12);
    c.parallel.overlap = true;
    let b = run(c);
    assert_eq!(a.energies(), b.energies());
    for (x, y) in a.system().atoms.iter().zip(&b.system().atoms) {
        assert_eq!(x.position, y.position);
        assert_eq!(x.velocity, y.velocity);
    }
    let (ta, tb) = (a.timings(), b.timings());
    for (o, s) in tb.iter().zip(ta) {
        assert_eq!(
            (o.comm, o.dw_fwd, o.dw_bwd_dp_all, o.others),
            (s.comm, s.dw_fwd, s.dw_bwd_dp_all, s.others)
        );
        assert!(o.kspace + o.hidden_kspace >= s.kspace);
    }
    assert!(tb.iter().any(|t| t.hidden_kspace > 0.0));
    assert!(b.network().stats().phase("lr_gather").messages > 0);
    assert_eq!(a.network().stats().phase("lr_gather").messages, 0);
}

#[test]
fn runs_are_deterministic() {
    let a = run(small(8));
    let b = run(small(8));
    assert_eq!(a.energies(), b.energies());
    assert_eq!(a.timings(), b.timings());
    assert_eq!(a.network().stats(), b.network().stats());
}

#[test]
fn thermostat_tracks_target() {
    let mut c = small(400);
    c.temperature = 200.0;
    let mut s = Simulation::new(c, None).unwrap();
    for a in &mut s.system.atoms {
        a.velocity = a.velocity * 2.0;
    }
    s.run().unwrap();
    let tail = &s.energies()[300..];
    let t = tail.iter().map(|r| r.temperature).sum::<f64>() / tail.len() as f64;
    assert!((t - 200.0).abs() < 20.0, "{t}");
}

#[test]
fn balance_does_not_change_physics() {
    let base = run(small(20));
    for strategy in [MigrationStrategy::GhostExpansion, MigrationStrategy::Forwarding] {
        let mut c = small(20);
        c.balance.mode = BalanceMode::RingCorrected;
        c.balance.interval = 10;
        c.balance.strategy = strategy;
        let s = run(c);
        assert_eq!(s.energies(), base.energies());
        assert!(!s.balance_events().is_empty());
        assert_eq!(
            s.network().stats().phase("balance_allgather").allgathers as usize,
            s.balance_events().len()
        );
    }
}

#[test]
fn warmup_is_excluded_and_outputs_written() {
    let mut c = small(5);
    c.warmup = 3;
    c.timing.host_report = true;
    let s = run(c);
    assert_eq!(s.energies().len(), 9);
    assert_eq!(s.timings().len(), 8);
    assert_eq!(s.measured_timings().0.len(), 5);
    assert_eq!(s.performance().steps, 5);
    let dir = tempfile::tempdir().unwrap();
    s.write_outputs(dir.path()).unwrap();
    let energy = std::fs::read_to_string(dir.path().join("energy.csv")).unwrap();
    assert_eq!(energy.lines().count(), 10);
    let timings = std::fs::read_to_string(dir.path().join("timings.csv")).unwrap();
    assert_eq!(timings.lines().count(), 6);
    assert!(timings.lines().nth(1).unwrap().starts_with("4,"));
    for f in [
        "host_timings.csv",
        "netstats.json",
        "netstats.csv",
        "performance.json",
        "balance.csv",
    ] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn invalid_config_lists_problems() {
    let mut c = small(1);
    c.dt = -1.0;
    c.neighbor.cutoff = 9.0;
    match Simulation::new(c, None) {
        Err(Error::Config(p)) => assert!(p.len() >= 2, "{p:?}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn blown_up_run_aborts() {
    let mut s = Simulation::new(small(5), None).unwrap();
    s.step().unwrap();
    s.system.atoms[3].velocity = Vec3::new(f64::NAN, 0.0, 0.0);
    assert!(matches!(s.step(), Err(Error::Aborted { step: 1, .. })));
}

#[test]
fn infeasible_plan_falls_back() {
    // Node counts [0, 18, 6, 0] on a 4-node ring: node 2 cannot forward 12 atoms.
    let mut sys = crate::system::generate_water_box(&crate::system::WaterBoxSpec::new(8, 24.0), 1).unwrap();
    let spots = [
        (9.0, 4.0, 6.0),
        (9.0, 12.0, 6.0),
        (9.0, 20.0, 6.0),
        (9.0, 4.0, 18.0),
        (9.0, 12.0, 18.0),
        (9.0, 20.0, 18.0),
        (15.0, 8.0, 12.0),
        (15.0, 16.0, 12.0),
    ];
    for (k, &(x, y, z)) in spots.iter().enumerate() {
        let shift = Vec3::new(x, y, z) - sys.atoms[3 * k].position;
        for a in &mut sys.atoms[3 * k..3 * k + 3] {
            a.position = sys.sim_box.wrap(a.position + shift);
        }
    }
    let mut c = small(2);
    c.system = SystemSource::Generated {
        waters: 8,
        edge: 24.0,
        replicate: [1, 1, 1],
        seed: None,
    };
    c.electrostatics.mesh = [20, 20, 20];
    c.topology.node_grid = [4, 1, 1];
    c.balance.mode = BalanceMode::RingCorrected;
    let mut s = Simulation::with_system(c, sys).unwrap();
    s.run().unwrap();
    let e = &s.balance_events()[0];
    assert!(!e.feasible && e.migrated == 0, "{e:?}");
    assert!(e.fallback.as_deref().unwrap().contains("infeasible"));
}
