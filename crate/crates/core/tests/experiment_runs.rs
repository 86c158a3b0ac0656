use std::f64::consts::FRAC_PI_2;

use minl_core::experiment::{anchor_config, loss_grid, run, ExperimentKind, ExperimentSpec, ANCHOR_XI};
use minl_core::fock::photon_number_distribution;
use minl_core::squeeze::{output_moments, xi_sweep};

fn quick(kind: ExperimentKind) -> ExperimentSpec {
    let s = ExperimentSpec::new(kind);
    match kind {
        ExperimentKind::Simulate | ExperimentKind::PhotonDist => s.with_preset("fig6").unwrap(),
        ExperimentKind::Optimize => s.set("starts", "2"),
        ExperimentKind::XiSweep => s.set("xi_points", "25"),
        ExperimentKind::PhaseHeatmap => s.set("grid", "3").set("starts", "2"),
        ExperimentKind::Tradeoff => s.set("alphas", "1").set("p_crit_grid", "0.1,0.2").set("starts", "2"),
        ExperimentKind::LossSweep => s.set("loss_points", "3"),
        ExperimentKind::Wigner => s.with_preset("fig7").unwrap().set("points", "21").set("pair", "x1x2"),
        ExperimentKind::OracleCheck => s.set("count", "2"),
        ExperimentKind::SpecialCase => s.with_preset("fig2").unwrap().set("t_points", "4").set("alpha_points", "4"),
    }
}

#[test]
fn every_kind_runs_and_describes_itself() {
    for kind in ExperimentKind::ALL {
        let spec = quick(kind).set("cutoff", "10");
        let out = run(&spec).unwrap_or_else(|e| panic!("{}: {e}", kind.name()));
        assert!(out.ok, "{}: {}", kind.name(), out.summary);
        assert_eq!(out.metadata["seed"], 0);
        assert_eq!(out.metadata["kind"], kind.name());
        for (_, t) in &out.tables {
            let csv = t.to_csv();
            assert!(csv.starts_with("# experiment"), "{}", kind.name());
            assert!(csv.contains("vacuum variance 0.25"));
            assert!(!t.rows.is_empty());
            assert!(t.rows.iter().all(|r| r.len() == t.columns.len()));
        }
    }
}

#[test]
fn identical_specs_give_identical_tables() {
    for kind in [ExperimentKind::Optimize, ExperimentKind::PhaseHeatmap, ExperimentKind::OracleCheck] {
        let spec = ExperimentSpec { seed: 5, ..quick(kind) };
        let a = run(&spec).unwrap();
        let b = run(&spec).unwrap();
        for ((_, x), (_, y)) in a.tables.iter().zip(&b.tables) {
            assert_eq!(x.to_csv(), y.to_csv(), "{}", kind.name());
        }
    }
}

#[test]
fn bad_specs_are_rejected() {
    assert!(ExperimentSpec::new(ExperimentKind::Simulate).with_preset("fig9").is_err());
    assert!(run(&ExperimentSpec::new(ExperimentKind::Simulate).set("colour", "red")).is_err());
    assert!(run(&ExperimentSpec::new(ExperimentKind::Simulate).set("t1", "1.5")).is_err());
    assert!(run(&ExperimentSpec::new(ExperimentKind::Optimize).set("p_crit", "0")).is_err());
    for name in ["fig2", "fig3", "fig4", "fig5", "fig6", "fig7", "fig8"] {
        let spec = ExperimentSpec::new(ExperimentKind::Simulate).with_preset(name).unwrap();
        assert!(spec.resolved().is_ok(), "{name}");
    }
}

/// Squeezing magnitude shrinks as either loss grows, and losses before the
/// detectors cost more than the same loss after them.
#[test]
fn losses_reduce_squeezing_and_hurt_more_before_detection() {
    let base = anchor_config();
    let grid: Vec<f64> = (0..6).map(|k| 0.02 * k as f64).collect();
    let cells = loss_grid(&base, ANCHOR_XI, &grid, &grid).unwrap();
    let s = |i: usize, j: usize| cells[i * grid.len() + j].2;
    for i in 0..grid.len() {
        for j in 0..grid.len() {
            if i + 1 < grid.len() {
                assert!(s(i + 1, j) >= s(i, j) - 1e-12);
            }
            if j + 1 < grid.len() {
                assert!(s(i, j + 1) >= s(i, j) - 1e-12);
            }
        }
    }
    for k in 1..grid.len() {
        assert!(s(k, 0) > s(0, k), "R = {}: {} vs {}", grid[k], s(k, 0), s(0, k));
    }
}

#[test]
fn anchor_state_is_not_minimum_uncertainty() {
    let (m, _, _) = output_moments(&anchor_config()).unwrap();
    let grid: Vec<f64> = (0..=72).map(|k| k as f64 * std::f64::consts::TAU / 72.0).collect();
    let pts = xi_sweep(&m, &grid).unwrap();
    let best = pts.iter().min_by(|a, b| a.s1_db.total_cmp(&b.s1_db)).unwrap();
    assert!((best.s1_db + 1.25).abs() < 0.02);
    assert!((best.xi - FRAC_PI_2).abs() < 1e-9 || (best.xi - 1.5 * std::f64::consts::PI).abs() < 1e-9);
    assert!(pts.iter().all(|p| p.s1_db + p.s2_db > 0.0));
}

#[test]
fn anchor_photon_distribution_is_normalized_and_low() {
    let h = minl_core::circuit::simulate(&anchor_config()).unwrap();
    let dist = photon_number_distribution(&h.density().unwrap()).unwrap();
    let total: f64 = dist.iter().flatten().sum();
    assert!((total - 1.0).abs() < 1e-12);
    let low: f64 = dist.iter().take(4).map(|row| row.iter().take(4).sum::<f64>()).sum();
    assert!(low > 0.95, "{low}");
}
