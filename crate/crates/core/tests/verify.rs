use std::collections::BTreeSet;
use std::sync::{Arc, OnceLock};

use proptest::prelude::*;
use soliton_core::geometry::graph_geometry;
use soliton_core::verify::*;
use soliton_core::*;

fn solve(domain: &ConvexDomain, n: usize) -> SolverResult {
    let grid = Arc::new(Grid::for_domain(domain, n).unwrap());
    let r = solve_translator(domain, grid, &SolverConfig::with_caps_to(8.0)).unwrap();
    assert!(r.converged, "{:?}", r.diagnostics);
    r
}

fn disk_97() -> &'static SolverResult {
    static CELL: OnceLock<SolverResult> = OnceLock::new();
    CELL.get_or_init(|| solve(&ConvexDomain::disk(1.0).unwrap(), 97))
}

fn family_97() -> &'static SolverResult {
    static CELL: OnceLock<SolverResult> = OnceLock::new();
    CELL.get_or_init(|| solve(&ConvexDomain::standard_family(0.2).unwrap(), 97))
}

#[test]
fn ball_above_the_tip_on_the_disk() {
    let u = &disk_97().u;
    let geom = graph_geometry(u);
    let c = check_curvature_bound(&geom, std::f64::consts::PI, [0.0, 0.0, 5.0], 1.0, default_exclusion(u));
    // A unit ball high above the tip leaves the whole patch outside: the
    // piece runs into the excluded strip and nothing is cut off.
    match c {
        Ok(c) => assert!(c.pass, "{c:?}"),
        Err(e) => assert!(matches!(e, Error::BallDoesNotCut)),
    }
}

#[test]
fn random_balls_pass_and_are_reproducible() {
    let u = &disk_97().u;
    let geom = graph_geometry(u);
    let run = |seed| random_curvature_checks(&geom, std::f64::consts::PI, 20, seed, (0.2, 2.0), default_exclusion(u)).unwrap();
    let a = run(3);
    assert_eq!(a.len(), 20);
    assert!(a.iter().all(|c| c.pass), "{:?}", a.iter().find(|c| !c.pass));
    assert_eq!(a, run(3));
    assert_ne!(a, run(4));
    for c in &a {
        assert!(c.lhs >= 0.0 && c.rhs > 0.0);
        assert_eq!(c.slack, c.rhs - c.lhs);
        assert!(c.witness["pieces"] >= 1.0);
    }
}

#[test]
fn partial_derivative_bound_is_symmetric() {
    let u = &family_97().u;
    for (a, eps) in [(0.1, 0.1), (0.15, 0.25)] {
        let c = check_partial_derivative_bound(u, a, eps, default_exclusion(u)).unwrap();
        assert!((c.lhs - c.witness["mirror_lhs"]).abs() < 1e-8, "{c:?}");
        assert!(c.pass);
    }
    assert!(check_partial_derivative_bound(u, 0.2, 0.1, 0.0).is_err());
}

#[test]
fn distance_bound_on_the_family() {
    let u = &family_97().u;
    for a in [0.1, 0.15] {
        let c = check_distance_bound(u, a, default_exclusion(u)).unwrap();
        assert!(c.lhs > 0.0);
        assert!(c.pass);
    }
}

#[test]
fn witness_properties() {
    let u = &family_97().u;
    let ex = default_exclusion(u);
    let (x0, c) = gradient_bound_witness(u, 0.2, 0.5, 0.3, 1e-3, ex).unwrap();
    assert!(c.lhs >= 0.0);
    assert!((0.2 - 1e-12..=0.5 + 1e-12).contains(&x0), "x0 = {x0}");
    assert_eq!(gradient_bound_witness(u, 0.2, 0.5, 0.3, 1e-3, ex).unwrap(), (x0, c.clone()));
    // With M and σ fixed, doubling b - a divides the bound by sqrt 2.
    let m = c.witness["M"];
    let rhs = |a: f64, b: f64| (2.0 * m / (std::f64::consts::PI * 0.3 * (b - a))).sqrt();
    assert!((rhs(0.2, 0.5) / rhs(0.2, 0.8) - 2f64.sqrt()).abs() < 1e-12);
    assert!((c.rhs - rhs(0.2, 0.5)).abs() < 1e-12);
    assert!(gradient_bound_witness(u, 0.5, 0.2, 0.3, 1e-3, ex).is_err());
}

#[test]
fn disk_has_no_flat_side_at_any_resolution() {
    let d = ConvexDomain::disk(1.0).unwrap();
    for n in [49, 65, 97] {
        let r = if n == 97 { disk_97().clone() } else { solve(&d, n) };
        let caps: Vec<(f64, ScalarField)> = r.caps_used.iter().copied().zip(r.cap_solutions.iter().cloned()).collect();
        let f = flat_side_report(&r.u, &d, &caps, None).unwrap();
        assert_eq!(f.flat_area, 0.0, "n = {n}");
        assert!(f.free_boundary.is_empty());
        assert!(f.warning.is_some());
    }
}

#[test]
fn square_flat_side_is_closed_and_positive() {
    let d = ConvexDomain::square(1.0).unwrap();
    let r = solve(&d, 97);
    let caps: Vec<(f64, ScalarField)> = r.caps_used.iter().copied().zip(r.cap_solutions.iter().cloned()).collect();
    let f = flat_side_report(&r.u, &d, &caps, None).unwrap();
    assert!(f.flat_area > 0.0);
    assert!(f.flat_tol > 0.0);
    assert!(f.free_boundary.iter().all(|c| c.closed));
    assert!(!f.boundary_trace.is_empty());
    assert_eq!(f.vertex_divergence.len(), caps.len());
}

#[test]
fn report_json_has_the_documented_keys_and_is_reproducible() {
    let d = ConvexDomain::disk(1.0).unwrap();
    let params = ReportParams {
        balls: 5,
        ..ReportParams::default()
    };
    let cfg = SolverConfig::with_caps_to(8.0);
    let (a, _) = full_report(&d, 49, &cfg, &params).unwrap();
    let (b, _) = full_report(&d, 49, &cfg, &params).unwrap();
    let text = a.to_json().unwrap();
    assert_eq!(text, b.to_json().unwrap());
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    let keys: BTreeSet<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
    assert_eq!(keys, BTreeSet::from(["domain", "grid", "solver", "checks", "flat_side"]));
    for c in v["checks"].as_array().unwrap() {
        let keys: BTreeSet<&str> = c.as_object().unwrap().keys().map(String::as_str).collect();
        assert_eq!(keys, BTreeSet::from(["name", "lhs", "rhs", "slack", "pass", "witness", "params"]));
    }
    let names: Vec<&str> = a.checks.iter().map(|c| c.name.as_str()).collect();
    assert!(names.contains(&"oracle_max_error"));
    assert!(names.contains(&"soliton_residual"));
    assert_eq!(names.iter().filter(|n| **n == "curvature_bound").count(), 5);
    assert!(a.flat_side.is_none());
}

#[test]
fn inapplicable_experiments_are_rejected() {
    let sq = ConvexDomain::square(1.0).unwrap();
    assert!(validate_experiments(&sq, &[Experiment::Oracle]).is_err());
    assert!(validate_experiments(&sq, &[Experiment::Thm43]).is_err());
    assert!(validate_experiments(&sq, &[Experiment::Thm52, Experiment::Flatside]).is_ok());
    let disk = ConvexDomain::disk(1.0).unwrap();
    assert!(validate_experiments(&disk, &[Experiment::Thm52]).is_err());
    assert_eq!("lemma51".parse::<Experiment>().unwrap(), Experiment::Lemma51);
    assert!("thm99".parse::<Experiment>().is_err());
}

proptest! {
    #[test]
    fn pass_matches_scaled_slack(lhs in -10.0f64..10.0, rhs in -10.0f64..10.0, tol in 0.0f64..0.1) {
        let c = BoundCheck::new("p", lhs, rhs, tol, Fields::new(), Fields::new());
        prop_assert_eq!(c.pass, rhs - lhs >= -tol * rhs.abs());
        prop_assert_eq!(c.slack, rhs - lhs);
        prop_assert_eq!(c.params["tol_check"], tol);
    }
}
