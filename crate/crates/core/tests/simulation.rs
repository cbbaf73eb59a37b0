mod common;

use nalgebra::Vector2;
use svcnav::analysis::certify;
use svcnav::scenario::{initial_conditions, InitialConditions, Scenario};
use svcnav::sensor::Scanner;
use svcnav::simulator::{batch_run, simulate, BatchSummary, Integrator, SimConfig, SimError, TerminalStatus};

use common::*;

fn few_starts(mut s: Scenario<2>, count: usize) -> Scenario<2> {
    let starts = initial_conditions(&s).unwrap();
    s.initial_conditions = InitialConditions::Explicit(starts.into_iter().take(count).collect());
    s
}

#[test]
fn identical_scenarios_give_identical_csv() {
    let s = few_starts(planar_preset(), 3);
    let a: Vec<String> = batch_run(&s).unwrap().iter().map(|r| r.outcome.trajectory().unwrap().to_csv()).collect();
    let b: Vec<String> = batch_run(&s).unwrap().iter().map(|r| r.outcome.trajectory().unwrap().to_csv()).collect();
    assert_eq!(a, b);
}

#[test]
fn sampled_starts_depend_only_on_the_seed() {
    let s = planar_preset();
    assert_eq!(initial_conditions(&s).unwrap(), initial_conditions(&s).unwrap());
    let other = grazing();
    assert_ne!(initial_conditions(&s).unwrap(), initial_conditions(&other).unwrap());
}

#[test]
fn start_inside_the_margin_is_rejected() {
    let (world, params) = single_disc();
    let scanner = Scanner::new(planar_scan(4.0)).unwrap();
    let err = simulate(&world, &Vector2::new(1.3, 0.0), &params, &scanner, &SimConfig::default()).unwrap_err();
    assert!(matches!(err, SimError::InvalidStart { .. }));
}

#[test]
fn disc_detour_converges_safely_with_both_integrators() {
    let (world, params) = single_disc();
    let scanner = Scanner::new(planar_scan(4.0)).unwrap();
    for integrator in [Integrator::Euler, Integrator::Rk4] {
        let sim = SimConfig { integrator, ..SimConfig::default() };
        let t = simulate(&world, &Vector2::new(4.0, 0.3), &params, &scanner, &sim).unwrap();
        assert_eq!(t.terminal_status, TerminalStatus::Converged);
        assert!(t.min_b_observed >= params.eps - 1e-3, "min b {}", t.min_b_observed);
        assert!(t.max_distance_increase(&params.target) <= 1e-9);
        assert!(t.samples.iter().any(|s| s.phi > 0.99), "the detour grazes the inner margin");
    }
}

#[test]
fn csv_has_one_row_per_sample() {
    let (world, params) = single_disc();
    let scanner = Scanner::new(planar_scan(4.0)).unwrap();
    let t = simulate(&world, &Vector2::new(-1.0, 3.0), &params, &scanner, &SimConfig::default()).unwrap();
    let csv = t.to_csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,x1,x2,u1,u2,b,mode,phi"));
    assert_eq!(lines.count(), t.samples.len());
}

#[test]
fn batch_summary_and_certificate_agree() {
    let s = few_starts(target_adjacent(), 6);
    let runs = batch_run(&s).unwrap();
    let mut summary = BatchSummary::default();
    for r in &runs {
        summary.add(&r.outcome);
    }
    let trajectories: Vec<_> = runs.iter().filter_map(|r| r.outcome.trajectory().cloned()).collect();
    let cert = certify(&s.label, &s.hash(), &s.world, &s.params, 1e-3, &trajectories);
    assert_eq!(cert.runs, summary.runs - summary.rejected);
    assert_eq!(cert.safety.min_b, summary.min_b);
    assert_eq!(cert.convergence.converged, summary.converged);
    assert!(cert.pass, "{}", cert.to_json());
}
