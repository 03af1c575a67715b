use std::sync::Arc;

use proptest::prelude::*;
use soliton_core::geometry::horizontal_graph;
use soliton_core::solver::{min_directional_second_difference, radial_height, CONVEXITY_TOL};
use soliton_core::*;

fn solve(domain: &ConvexDomain, n: usize, cap: f64) -> SolverResult {
    let grid = Arc::new(Grid::for_domain(domain, n).unwrap());
    solve_translator(domain, grid, &SolverConfig::with_caps_to(cap)).unwrap()
}

fn mirror_defect(u: &ScalarField, swap: bool) -> f64 {
    let g = u.grid();
    let mut worst: f64 = 0.0;
    for k in 0..g.len() {
        if g.kind_at(k) != NodeKind::Interior {
            continue;
        }
        let (i, j) = g.coords(k);
        let mut images = vec![(g.nx() - 1 - i, j), (i, g.ny() - 1 - j)];
        if swap {
            images.push((j, i));
        }
        for (a, b) in images {
            worst = worst.max((u.at(i, j) - u.at(a, b)).abs());
        }
    }
    worst
}

#[test]
fn coarse_solutions_are_convex_symmetric_and_monotone_in_the_cap() {
    let stencils = StencilSet::default();
    for (domain, swap) in [
        (ConvexDomain::disk(1.0).unwrap(), true),
        (ConvexDomain::square(1.0).unwrap(), true),
        (ConvexDomain::standard_family(0.2).unwrap(), false),
    ] {
        for n in [65, 129] {
            let r = solve(&domain, n, 8.0);
            assert!(r.converged, "{} {n}: {:?}", domain.kind_name(), r.diagnostics);
            let c = min_directional_second_difference(&r.u, &stencils);
            assert!(c >= -CONVEXITY_TOL, "{} {n}: {c:e}", domain.kind_name());
            assert!(!r.convexity_clamped);
            let m = mirror_defect(&r.u, swap);
            assert!(m <= 1e-8, "{} {n}: {m:e}", domain.kind_name());
            let g = r.u.grid();
            for w in r.cap_solutions.windows(2) {
                for k in 0..g.len() {
                    if g.kind_at(k) == NodeKind::Interior {
                        assert!(w[1].values()[k] - w[0].values()[k] >= -1e-10);
                    }
                }
            }
        }
    }
}

#[test]
fn disk_matches_the_radial_profile() {
    let r = solve(&ConvexDomain::disk(1.0).unwrap(), 129, 8.0);
    let g = r.u.grid();
    let mut worst: f64 = 0.0;
    for k in 0..g.len() {
        if g.kind_at(k) == NodeKind::Interior && g.boundary_distance(k) >= 0.2 {
            let (i, j) = g.coords(k);
            let exact = radial_height(1.0, g.point(i, j).norm()).unwrap();
            worst = worst.max((r.u.values()[k] - exact).abs());
        }
    }
    assert!(worst < 1e-2, "{worst}");
}

#[test]
fn horizontal_chart_inverts_the_graph() {
    let d = ConvexDomain::disk(1.0).unwrap();
    let r = solve(&d, 129, 8.0);
    let hg = horizontal_graph(&r.u, &d).unwrap();
    let chart = hg.h.grid();
    let mut trip: f64 = 0.0;
    for k in 0..chart.len() {
        if chart.kind_at(k) == NodeKind::Exterior {
            continue;
        }
        let (i, m) = chart.coords(k);
        let q = chart.point(i, m);
        if let Ok((z, _)) = r.u.interpolate(Point::new(q.x, hg.h.values()[k])) {
            trip = trip.max((z - q.y).abs());
        }
    }
    assert!(trip <= 1e-6, "{trip}");
}

#[test]
fn rejects_bad_configuration() {
    let d = ConvexDomain::disk(1.0).unwrap();
    let grid = Arc::new(Grid::for_domain(&d, 33).unwrap());
    let mut cfg = SolverConfig::default();
    cfg.cap_sequence = vec![4.0, 2.0];
    assert!(solve_translator(&d, grid.clone(), &cfg).is_err());
    cfg.cap_sequence.clear();
    assert!(solve_translator(&d, grid, &cfg).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]
    #[test]
    fn disk_height_is_radial(radius in 0.5f64..2.0) {
        let r = solve(&ConvexDomain::disk(radius).unwrap(), 49, 4.0);
        prop_assert!(r.converged);
        prop_assert!(mirror_defect(&r.u, true) <= 1e-8);
        let min = r.u.values().iter().copied().filter(|v| v.is_finite()).fold(f64::INFINITY, f64::min);
        let g = r.u.grid();
        let center = g.node_at(Point::new(0.0, 0.0)).unwrap();
        prop_assert!((r.u.values()[center] - min).abs() <= 1e-9);
    }
}
