//! Checks of the quantitative estimates on solved fields.
//!
//! Every inequality is evaluated at its extremal instance (largest `ηΛ` over
//! the cut piece, smallest witness over the segment), so a pass means the
//! bound holds everywhere it was sampled. Nodes closer than `exclusion` to
//! the domain boundary never enter a check.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use std::sync::Arc;

use crate::barriers::band_check;
use crate::domain::{ConvexDomain, Shape};
use crate::error::{Error, Result};
use crate::geometry::{
    cutoff_eta, dist3, horizontal_graph, level_set, position, CuttingBall, GraphGeometry, HorizontalGraph, Point3,
    Polyline,
};
use crate::geometry::graph_geometry;
use crate::grid::{catmull_rom, Grid, GridInfo, NodeKind, ScalarField};
use crate::solver::{radial_height, soliton_residual, solve_translator, SolverConfig, SolverResult, SolverSummary};
use crate::Point;

/// Default relative tolerance of a check, scaled by `|rhs|`.
pub const TOL_CHECK: f64 = 1e-6;
/// Width of the excluded strip along the boundary, in grid cells.
pub const EXCLUSION_CELLS: f64 = 4.0;

pub type Fields = BTreeMap<String, f64>;

fn fields<const N: usize>(pairs: [(&str, f64); N]) -> Fields {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

/// One inequality `lhs <= rhs`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundCheck {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub pass: bool,
    pub witness: Fields,
    pub params: Fields,
}

impl BoundCheck {
    /// Passes when `rhs - lhs >= -tol |rhs|`.
    pub fn new(name: &str, lhs: f64, rhs: f64, tol: f64, witness: Fields, mut params: Fields) -> Self {
        let slack = rhs - lhs;
        params.insert("tol_check".into(), tol);
        Self {
            name: name.to_string(),
            lhs,
            rhs,
            slack,
            pass: slack >= -tol * rhs.abs(),
            witness,
            params,
        }
    }
}

/// Default excluded strip for a field: `EXCLUSION_CELLS` grid cells.
pub fn default_exclusion(u: &ScalarField) -> f64 {
    EXCLUSION_CELLS * u.grid().h()
}

/// Bicubic value and gradient at `p`, refusing any stencil node that is not
/// interior or lies in the excluded strip.
pub fn sample(u: &ScalarField, p: Point, exclusion: f64) -> Result<(f64, [f64; 2])> {
    let g = u.grid();
    let fx = ((p.x - g.origin().x) / g.h()).floor();
    let fy = ((p.y - g.origin().y) / g.h()).floor();
    if fx < 1.0 || fy < 1.0 || fx + 2.0 >= g.nx() as f64 || fy + 2.0 >= g.ny() as f64 {
        return Err(Error::OutsideMask(p.x, p.y));
    }
    let (i0, j0) = (fx as usize, fy as usize);
    for j in j0 - 1..=j0 + 2 {
        for i in i0 - 1..=i0 + 2 {
            let k = g.index(i, j);
            if g.kind_at(k) != NodeKind::Interior || g.boundary_distance(k) < exclusion || !u.values()[k].is_finite() {
                return Err(Error::OutsideMask(p.x, p.y));
            }
        }
    }
    u.interpolate(p)
}

/// Catmull-Rom value along grid row `j` at abscissa `x`, from interior nodes
/// of that row only.
pub fn sample_row(u: &ScalarField, j: usize, x: f64) -> Result<f64> {
    let g = u.grid();
    let y = g.point(0, j).y;
    let fx = ((x - g.origin().x) / g.h()).floor();
    if fx < 1.0 || fx + 2.0 >= g.nx() as f64 || j >= g.ny() {
        return Err(Error::OutsideMask(x, y));
    }
    let i0 = fx as usize;
    let (w, _) = catmull_rom((x - g.point(i0, j).x) / g.h());
    let mut v = 0.0;
    for (a, wa) in w.iter().enumerate() {
        let k = g.index(i0 + a - 1, j);
        if g.kind_at(k) != NodeKind::Interior {
            return Err(Error::OutsideMask(x, y));
        }
        v += wa * u.values()[k];
    }
    Ok(v)
}

/// `max ηΛ <= (9π/area) (max |F - Y|)^3` over every piece the ball cuts off;
/// the piece with the smallest slack is reported.
pub fn check_curvature_bound(
    geom: &GraphGeometry,
    area: f64,
    center: Point3,
    radius: f64,
    exclusion: f64,
) -> Result<BoundCheck> {
    let u = geom.field();
    let pieces = CuttingBall::pieces(u, center, radius, exclusion);
    let mut best: Option<BoundCheck> = None;
    for piece in &pieces {
        let (mut lhs, mut at) = (0.0, piece.cut_nodes[0]);
        let mut far: f64 = 0.0;
        for &k in &piece.cut_nodes {
            far = far.max(dist3(position(u, k), center));
            let Some(n) = geom.node(k) else { continue };
            let v = cutoff_eta(u, k, center, radius) * n.lambda_max;
            if v > lhs {
                (lhs, at) = (v, k);
            }
        }
        let rhs = 9.0 * PI / area * far.powi(3);
        let p = position(u, at);
        let lambda = geom.node(at).map_or(f64::NAN, |n| n.lambda_max);
        let check = BoundCheck::new(
            "curvature_bound",
            lhs,
            rhs,
            TOL_CHECK,
            fields([
                ("x", p[0]),
                ("y", p[1]),
                ("z", p[2]),
                ("lambda_max", lambda),
                ("eta", cutoff_eta(u, at, center, radius)),
                ("piece_nodes", piece.cut_nodes.len() as f64),
                ("pieces", pieces.len() as f64),
            ]),
            fields([
                ("Y_x", center[0]),
                ("Y_y", center[1]),
                ("Y_z", center[2]),
                ("R", radius),
                ("exclusion", exclusion),
            ]),
        );
        if best.as_ref().is_none_or(|b| check.slack < b.slack) {
            best = Some(check);
        }
    }
    best.ok_or(Error::BallDoesNotCut)
}

/// Seeded cutting balls: a radius uniform in `[r_min, r_max]` and a center
/// offset from a random node of the checked patch by up to `R` along each
/// axis; draws that cut nothing off are redrawn, up to `500 * count` draws.
pub fn random_curvature_checks(
    geom: &GraphGeometry,
    area: f64,
    count: usize,
    seed: u64,
    radii: (f64, f64),
    exclusion: f64,
) -> Result<Vec<BoundCheck>> {
    let u = geom.field();
    let g = u.grid();
    let nodes: Vec<Point3> = (0..g.len())
        .filter(|&k| g.kind_at(k) == NodeKind::Interior && g.boundary_distance(k) >= exclusion)
        .map(|k| position(u, k))
        .collect();
    if nodes.is_empty() {
        return Err(Error::InvalidGrid("no node clears the excluded strip".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let mut draws = 0;
    while out.len() < count && draws < 500 * count {
        draws += 1;
        let p = nodes[rng.random_range(0..nodes.len())];
        let r = rng.random_range(radii.0..=radii.1);
        let c = [
            p[0] + r * rng.random_range(-1.0..=1.0),
            p[1] + r * rng.random_range(-1.0..=1.0),
            p[2] + r * rng.random_range(-1.0..=1.0),
        ];
        match check_curvature_bound(geom, area, c, r, exclusion) {
            Ok(mut check) => {
                check.params.insert("seed".into(), seed as f64);
                check.params.insert("draw".into(), draws as f64);
                out.push(check);
            }
            Err(Error::BallDoesNotCut) => continue,
            Err(e) => return Err(e),
        }
    }
    if out.len() < count {
        return Err(Error::InvalidParams(format!(
            "only {} of {count} cutting balls found in {draws} draws",
            out.len()
        )));
    }
    Ok(out)
}

/// `2 + 3 cot(πα²/2)`.
pub fn partial_derivative_rhs(alpha: f64) -> f64 {
    2.0 + 3.0 / (0.5 * PI * alpha * alpha).tan()
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 / 6.0 {
        Ok(())
    } else {
        Err(Error::InvalidParams(format!("alpha = {alpha} outside (0, 1/6)")))
    }
}

/// `∂_x u(1 - 5α, -1 + ε) <= 2 + 3 cot(πα²/2)`; the mirrored value
/// `-∂_x u(-(1 - 5α), -1 + ε)` is recorded in the witness.
pub fn check_partial_derivative_bound(u: &ScalarField, alpha: f64, epsilon: f64, exclusion: f64) -> Result<BoundCheck> {
    check_alpha(alpha)?;
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(Error::InvalidParams(format!("epsilon = {epsilon} outside (0, 1/2)")));
    }
    let p = Point::new(1.0 - 5.0 * alpha, -1.0 + epsilon);
    let (_, g) = sample(u, p, exclusion)?;
    let (_, gm) = sample(u, Point::new(-p.x, p.y), exclusion)?;
    Ok(BoundCheck::new(
        "partial_derivative_bound",
        g[0],
        partial_derivative_rhs(alpha),
        TOL_CHECK,
        fields([("x", p.x), ("y", p.y), ("mirror_lhs", -gm[0])]),
        fields([("alpha", alpha), ("epsilon", epsilon), ("exclusion", exclusion)]),
    ))
}

/// Witness of the gradient bound on `[a, b] × {-1 + σ}`: `M` is the largest
/// `∂_x u(b, y)` over grid rows `-1 < y < -1 + σ`, and `x0` the grid column
/// in `[a, b]` minimizing `-∂_y u(x, -1 + σ)`, ties to the smallest `x`.
pub fn gradient_bound_witness(u: &ScalarField, a: f64, b: f64, sigma: f64, tol: f64, exclusion: f64) -> Result<(f64, BoundCheck)> {
    for (name, v) in [("a", a), ("b", b), ("sigma", sigma)] {
        if !(v > 0.0 && v < 1.0) {
            return Err(Error::InvalidParams(format!("{name} = {v} outside (0, 1)")));
        }
    }
    if !(a < b) {
        return Err(Error::InvalidParams(format!("need a < b (got {a}, {b})")));
    }
    let g = u.grid();
    let (ox, oy, h) = (g.origin().x, g.origin().y, g.h());
    // The closed rectangle must clear the excluded strip.
    for p in [Point::new(a, -1.0), Point::new(b, -1.0), Point::new(a, -1.0 + sigma), Point::new(b, -1.0 + sigma)] {
        sample(u, p, exclusion)?;
    }
    let mut m = f64::NEG_INFINITY;
    let mut m_at = f64::NAN;
    let j_lo = ((-1.0 - oy) / h).floor() as i64 + 1;
    let j_hi = ((-1.0 + sigma - oy) / h).ceil() as i64 - 1;
    for j in j_lo..=j_hi {
        let y = oy + j as f64 * h;
        if y <= -1.0 || y >= -1.0 + sigma {
            continue;
        }
        let (_, d) = sample(u, Point::new(b, y), exclusion)?;
        if d[0] > m {
            (m, m_at) = (d[0], y);
        }
    }
    if !(m > 0.0) {
        return Err(Error::InvalidParams(format!("sup of u_x along x = {b} is {m}, not positive")));
    }
    let mut best = (f64::NAN, f64::INFINITY);
    let i_lo = ((a - ox) / h).ceil() as i64;
    let i_hi = ((b - ox) / h).floor() as i64;
    for i in i_lo..=i_hi {
        let x = ox + i as f64 * h;
        let (_, d) = sample(u, Point::new(x, -1.0 + sigma), exclusion)?;
        // Values within rounding of the current minimum count as ties.
        if best.0.is_nan() || -d[1] < best.1 - 1e-12 * best.1.abs().max(1.0) {
            best = (x, -d[1]);
        }
    }
    if best.0.is_nan() {
        return Err(Error::InvalidParams(format!("no grid column in [{a}, {b}]")));
    }
    let rhs = (2.0 * m / (PI * sigma * (b - a))).sqrt();
    let check = BoundCheck::new(
        "gradient_witness",
        best.1,
        rhs,
        tol,
        fields([("x0", best.0), ("y", -1.0 + sigma), ("M", m), ("M_y", m_at)]),
        fields([("a", a), ("b", b), ("sigma", sigma), ("exclusion", exclusion)]),
    );
    Ok((best.0, check))
}

/// `6(1 + 1/α²)`.
pub fn distance_rhs(alpha: f64) -> f64 {
    6.0 * (1.0 + 1.0 / (alpha * alpha))
}

/// `u(1 - 6α, -1) - u(0, 0) <= 6(1 + 1/α²)` on a field normalized at the
/// origin.
pub fn check_distance_bound(u: &ScalarField, alpha: f64, exclusion: f64) -> Result<BoundCheck> {
    check_alpha(alpha)?;
    let p = Point::new(1.0 - 6.0 * alpha, -1.0);
    let (v, _) = sample(u, p, exclusion)?;
    let (v0, _) = sample(u, Point::new(0.0, 0.0), exclusion)?;
    Ok(BoundCheck::new(
        "distance_bound",
        v - v0,
        distance_rhs(alpha),
        TOL_CHECK,
        fields([("x", p.x), ("y", p.y), ("u", v), ("u_origin", v0)]),
        fields([("alpha", alpha), ("exclusion", exclusion)]),
    ))
}

/// The distance bound on a domain whose boundary contains `y = -1`: the
/// value is read on the grid row `offset_cells` above the edge, by
/// interpolation along that row.
pub fn check_distance_bound_offset(u: &ScalarField, alpha: f64, offset_cells: usize) -> Result<BoundCheck> {
    check_alpha(alpha)?;
    let g = u.grid();
    let jf = (-1.0 - g.origin().y) / g.h();
    let j_edge = jf.round();
    if (jf - j_edge).abs() > 1e-9 {
        return Err(Error::InvalidGrid("no grid row on y = -1".into()));
    }
    let j = j_edge as usize + offset_cells;
    let x = 1.0 - 6.0 * alpha;
    let v = sample_row(u, j, x)?;
    let (v0, _) = u.interpolate(Point::new(0.0, 0.0))?;
    let y = g.point(0, j).y;
    Ok(BoundCheck::new(
        "distance_bound_boundary_offset",
        v - v0,
        distance_rhs(alpha),
        TOL_CHECK,
        fields([("x", x), ("y", y), ("u", v), ("u_origin", v0)]),
        fields([("alpha", alpha), ("offset_cells", offset_cells as f64)]),
    ))
}

/// Height of the `(x, z)` window, above the tip, in which the flat side is
/// measured; the wall over an edge is unbounded upward.
pub const FLAT_WINDOW: f64 = 4.0;
/// Levels `r + 1` of the `h_vv` probe.
pub const HVV_LEVELS: [f64; 3] = [0.1, 0.05, 0.025];
/// Half width in `x` of the probe window around the free-boundary point.
pub const HVV_HALF_WIDTH: f64 = 0.25;
/// Distances from the vertex along the diagonal for the divergence samples.
pub const VERTEX_DISTANCES: [f64; 3] = [0.1, 0.2, 0.4];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CapSample {
    pub cap: f64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HvvSample {
    pub r: f64,
    pub max_hvv: f64,
    pub nodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlatSideReport {
    pub flat_area: f64,
    pub flat_tol: f64,
    /// `[z_lo, z_hi]` of the measured window.
    pub window: [f64; 2],
    pub free_boundary: Vec<Polyline>,
    /// `(x, ū(x))` along the bottom edge.
    pub boundary_trace: Vec<[f64; 2]>,
    pub vertex_distances: Vec<f64>,
    pub vertex_divergence: Vec<CapSample>,
    /// `ū` at the edge midpoint for every cap.
    pub edge_midpoint: Vec<CapSample>,
    pub hvv_probe: Vec<HvvSample>,
    pub warning: Option<String>,
}

/// Columns of the solution grid standing over a straight piece of the bottom
/// edge: the segment `[x - h, x + h]` lies on `y = y_min` of the domain.
fn edge_columns(u: &ScalarField, domain: &ConvexDomain) -> Result<(f64, Vec<bool>)> {
    let g = u.grid();
    let h = g.h();
    let y_edge = domain.bbox().min.y;
    let on_edge = |x: f64| -> Result<bool> {
        let d = domain.boundary_distance(Point::new(x, y_edge + h))?;
        Ok((d - h).abs() <= 1e-12)
    };
    let mut out = Vec::with_capacity(g.nx());
    for i in 0..g.nx() {
        let x = g.point(i, 0).x;
        out.push(on_edge(x - h)? && on_edge(x)? && on_edge(x + h)?);
    }
    Ok((y_edge, out))
}

/// `(ū(x), c)` at column `i` from the two outermost interior nodes under
/// `u = ū - c sqrt(dist)`: the graph meets the wall tangentially with
/// bounded `h_vv`, so `h + 1` grows quadratically in `ū - z`.
fn trace_at(u: &ScalarField, i: usize, y_edge: f64) -> Option<(f64, f64)> {
    let g = u.grid();
    let j = (0..g.ny()).find(|&j| g.kind(i, j) == NodeKind::Interior)?;
    if g.kind(i, j + 1) != NodeKind::Interior {
        return None;
    }
    let (d2, d3) = ((g.point(i, j).y - y_edge).sqrt(), (g.point(i, j + 1).y - y_edge).sqrt());
    let (u2, u3) = (u.at(i, j), u.at(i, j + 1));
    let c = (u2 - u3) / (d3 - d2);
    (c > 0.0).then_some((u2 + c * d2, c))
}

fn origin_value(u: &ScalarField) -> Result<f64> {
    let g = u.grid();
    let k = g.node_at(Point::new(0.0, 0.0)).ok_or(Error::OutsideMask(0.0, 0.0))?;
    let (i, j) = g.coords(k);
    if g.point(i, j).norm() > 1e-12 {
        return Err(Error::InvalidGrid("no grid node at the origin".into()));
    }
    Ok(u.values()[k])
}

/// Flat side of the lower half of the surface over the bottom edge.
///
/// The chart of `h` from the graph stops at the column tops; above them, in
/// columns over a straight edge, the surface is the wall `h = y_min`. The
/// sublevel set `{h <= -1 + flat_tol}` is measured inside the window
/// `z <= z_tip + FLAT_WINDOW`, so its boundary is one closed curve: the free
/// boundary plus the window edges. `caps` are the un-normalized solutions of
/// the cap continuation.
pub fn flat_side_report(
    u: &ScalarField,
    domain: &ConvexDomain,
    caps: &[(f64, ScalarField)],
    flat_tol: Option<f64>,
) -> Result<FlatSideReport> {
    let hg = horizontal_graph(u, domain)?;
    let chart = hg.h.grid();
    let (y_edge, wall) = edge_columns(u, domain)?;
    let step = chart.h();
    let (nx, nz) = (chart.nx(), chart.ny());
    let z0 = chart.origin().y;
    let z_tip = origin_value(u)?;
    let z_hi = z_tip + FLAT_WINDOW;
    let nw = ((z_hi - z0) / step).floor() as usize + 1;

    let top: Vec<Option<usize>> = (0..nx)
        .map(|i| (0..nz).rev().find(|&m| hg.h.at(i, m).is_finite()))
        .collect();
    let trace: Vec<Option<(f64, f64)>> = (0..nx)
        .map(|i| if wall[i] { trace_at(u, i, y_edge) } else { None })
        .collect();
    // Gradient of h on the graph just below the wall, near the edge midpoint.
    let mut grad_max: f64 = 0.0;
    let mut has_wall = false;
    for i in 0..nx {
        let Some(t) = top[i] else { continue };
        if !wall[i] || t + 1 >= nw {
            continue;
        }
        has_wall = true;
        if chart.point(i, 0).x.abs() > HVV_HALF_WIDTH {
            continue;
        }
        for m in t.saturating_sub(2)..=t {
            if chart.kind(i, m) == NodeKind::Interior {
                if let Ok(d) = hg.h.gradient(i, m) {
                    grad_max = grad_max.max(d[0].hypot(d[1]));
                }
            }
        }
    }
    let tol = flat_tol.unwrap_or(10.0 * step * grad_max);
    let level = y_edge + tol;
    let above = level + 1.0;

    // Extended chart padded by one node on every side with a value above
    // the level, so that every contour closes.
    let (ex, ez) = (nx + 2, nw + 2);
    let mut values = vec![above; ex * ez];
    for m in 0..nw {
        for i in 0..nx {
            let v = if m < nz { hg.h.at(i, m) } else { f64::NAN };
            let z = z0 + m as f64 * step;
            let v = match (v.is_finite(), top[i], trace[i]) {
                (true, _, _) => v,
                // Between the last resolved height and the trace the graph
                // follows the same square-root law.
                (false, Some(t), Some((ub, c))) if m > t && z < ub => y_edge + ((ub - z) / c).powi(2),
                (false, Some(t), _) if wall[i] && m > t => y_edge,
                _ => above,
            };
            values[(m + 1) * ex + i + 1] = v;
        }
    }
    let mask = vec![NodeKind::Interior; ex * ez];
    let dist = vec![step; ex * ez];
    let ext_origin = Point::new(chart.origin().x - step, z0 - step);
    let ext = Arc::new(Grid::from_mask(ext_origin, step, ex, ez, mask, dist)?);
    let field = ScalarField::from_values(ext, values)?;
    let free_boundary: Vec<Polyline> = if has_wall || flat_tol.is_some() {
        level_set(&field, level).into_iter().filter(|c| c.closed).collect()
    } else {
        Vec::new()
    };
    let flat_area = free_boundary.iter().map(Polyline::signed_area).sum::<f64>().max(0.0);

    let g = u.grid();
    let boundary_trace: Vec<[f64; 2]> = (0..g.nx())
        .filter(|&i| wall[i])
        .filter_map(|i| trace_at(u, i, y_edge).map(|(t, _)| [g.point(i, 0).x, t]))
        .collect();

    let bb = domain.bbox();
    let vertex = Point::new(bb.max.x, bb.max.y);
    let mid = g.node_at(Point::new(0.0, y_edge)).map(|k| g.coords(k).0);
    let mut vertex_divergence = Vec::new();
    let mut edge_midpoint = Vec::new();
    for (cap, w) in caps {
        let base = origin_value(w)?;
        let values = VERTEX_DISTANCES
            .iter()
            .map(|&d| {
                let p = Point::new(vertex.x - d / 2f64.sqrt(), vertex.y - d / 2f64.sqrt());
                sample(w, p, 0.0).map_or(f64::NAN, |(v, _)| v - base)
            })
            .collect();
        vertex_divergence.push(CapSample { cap: *cap, values });
        let m = mid.filter(|&i| wall[i]).and_then(|i| trace_at(w, i, y_edge)).map(|(t, _)| t);
        edge_midpoint.push(CapSample {
            cap: *cap,
            values: vec![m.map_or(f64::NAN, |t| t - base)],
        });
    }

    let hvv_probe = match mid.filter(|&i| wall[i]).and_then(|i| trace_at(u, i, y_edge)) {
        Some((z_gamma, _)) => hvv_probe(&hg, 0.0, z_gamma, y_edge),
        None => Vec::new(),
    };
    let warning = (flat_area <= 0.0).then(|| "no flat region found at this resolution".to_string());
    Ok(FlatSideReport {
        flat_area,
        flat_tol: tol,
        window: [z0, z0 + (nw - 1) as f64 * step],
        free_boundary,
        boundary_trace,
        vertex_distances: VERTEX_DISTANCES.to_vec(),
        vertex_divergence,
        edge_midpoint,
        hvv_probe,
        warning,
    })
}

/// `max v^T D^2h v` over chart nodes next to a crossing of `L_r`, inside
/// `|x - x0| <= HVV_HALF_WIDTH`, `z <= z0 + 1/2`.
fn hvv_probe(hg: &HorizontalGraph, x0: f64, z0: f64, y_edge: f64) -> Vec<HvvSample> {
    let f = &hg.h;
    let g = f.grid();
    HVV_LEVELS
        .iter()
        .map(|&lift| {
            let r = y_edge + lift;
            let (mut best, mut nodes) = (f64::NAN, 0);
            for k in 0..g.len() {
                if g.kind_at(k) != NodeKind::Interior {
                    continue;
                }
                let (i, m) = g.coords(k);
                let p = g.point(i, m);
                if (p.x - x0).abs() > HVV_HALF_WIDTH || p.y > z0 + 0.5 {
                    continue;
                }
                let a = f.values()[k] - r;
                let crosses = [(1, 0), (-1, 0), (0, 1), (0, -1)].iter().any(|&(di, dm)| {
                    g.offset(i, m, di, dm)
                        .map(|n| f.values()[n])
                        .is_some_and(|b| b.is_finite() && a * (b - r) <= 0.0)
                });
                if !crosses {
                    continue;
                }
                let (Some(fr), Ok(hs)) = (hg.frames[k], f.hessian(i, m)) else { continue };
                let v = fr.v;
                let hvv = v[0] * (hs[0][0] * v[0] + hs[0][1] * v[1]) + v[1] * (hs[1][0] * v[0] + hs[1][1] * v[1]);
                nodes += 1;
                if best.is_nan() || hvv > best {
                    best = hvv;
                }
            }
            HvvSample { r, max_hvv: best, nodes }
        })
        .collect()
}

/// Experiments a report can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Oracle,
    Soliton,
    Barrier,
    Thm31,
    Thm43,
    Lemma51,
    Thm52,
    Flatside,
}

impl Experiment {
    pub const ALL: [Experiment; 8] = [
        Self::Oracle,
        Self::Soliton,
        Self::Barrier,
        Self::Thm31,
        Self::Thm43,
        Self::Lemma51,
        Self::Thm52,
        Self::Flatside,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Oracle => "oracle",
            Self::Soliton => "soliton",
            Self::Barrier => "barrier",
            Self::Thm31 => "thm31",
            Self::Thm43 => "thm43",
            Self::Lemma51 => "lemma51",
            Self::Thm52 => "thm52",
            Self::Flatside => "flatside",
        }
    }

    /// Experiments that apply to a domain when none are requested.
    pub fn defaults_for(domain: &ConvexDomain) -> Vec<Experiment> {
        use Experiment::*;
        match domain.shape() {
            Shape::Disk { .. } => vec![Oracle, Soliton, Thm31],
            Shape::Square { .. } => vec![Soliton, Thm31, Thm52, Flatside],
            _ if domain.family_margins().is_ok_and(|(a, b)| a > 0.0 && b > 0.0) => {
                vec![Soliton, Thm31, Thm43, Lemma51, Thm52]
            }
            _ => vec![Soliton, Thm31],
        }
    }
}

impl std::str::FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|e| e.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Self::ALL.iter().map(|e| e.name()).collect();
            Error::InvalidConfig(format!("unknown experiment '{s}' (expected one of {})", names.join(", ")))
        })
    }
}

/// Parameters of the checks in a report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportParams {
    pub experiments: Vec<Experiment>,
    pub alphas: Vec<f64>,
    pub epsilons: Vec<f64>,
    /// `(a, b, σ)` triples of the gradient witness.
    pub witness_triples: Vec<(f64, f64, f64)>,
    pub witness_tol: f64,
    pub balls: usize,
    pub ball_radii: (f64, f64),
    pub seed: u64,
    pub exclusion_cells: f64,
    pub band_samples: usize,
    pub flat_tol: Option<f64>,
}

impl Default for ReportParams {
    fn default() -> Self {
        Self {
            experiments: Vec::new(),
            alphas: vec![0.1, 0.15],
            epsilons: vec![0.1, 0.25],
            witness_triples: vec![(0.2, 0.5, 0.3), (0.1, 0.3, 0.2), (0.3, 0.6, 0.4)],
            witness_tol: 1e-3,
            balls: 20,
            ball_radii: (0.2, 2.0),
            seed: 0,
            exclusion_cells: EXCLUSION_CELLS,
            band_samples: 10_000,
            flat_tol: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub domain: ConvexDomain,
    pub grid: GridInfo,
    pub solver: SolverSummary,
    pub checks: Vec<BoundCheck>,
    pub flat_side: Option<FlatSideReport>,
}

impl Report {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass) && self.flat_side.as_ref().is_none_or(|f| f.flat_area > 0.0)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))
    }
}

/// Nodes at least a fifth of the inradius from the boundary; on a disk this
/// is `r <= 0.8 R`.
fn inner_region(u: &ScalarField) -> Vec<usize> {
    let g = u.grid();
    let inradius = (0..g.len())
        .filter(|&k| g.kind_at(k) != NodeKind::Exterior)
        .map(|k| g.boundary_distance(k))
        .fold(0.0, f64::max);
    (0..g.len())
        .filter(|&k| g.kind_at(k) == NodeKind::Interior && g.boundary_distance(k) >= 0.2 * inradius)
        .collect()
}

/// Largest deviation from the radial closed form over `r <= 0.8 R`.
pub fn oracle_check(u: &ScalarField, radius: f64) -> Result<BoundCheck> {
    let g = u.grid();
    let (mut err, mut at) = (0.0, Point::new(0.0, 0.0));
    for k in inner_region(u) {
        let (i, j) = g.coords(k);
        let p = g.point(i, j);
        let e = (u.values()[k] - radial_height(radius, p.norm())?).abs();
        if e > err {
            (err, at) = (e, p);
        }
    }
    Ok(BoundCheck::new(
        "oracle_max_error",
        err,
        ORACLE_TOL,
        0.0,
        fields([("x", at.x), ("y", at.y)]),
        fields([("radius", radius), ("region_radius", 0.8 * radius)]),
    ))
}

/// Median of the normalized soliton residual over the inner region.
pub fn soliton_check(u: &ScalarField, domain: &ConvexDomain) -> Result<BoundCheck> {
    let res = soliton_residual(u, domain)?;
    let mut v: Vec<f64> = inner_region(u)
        .into_iter()
        .map(|k| res.values()[k])
        .filter(|v| v.is_finite())
        .collect();
    if v.is_empty() {
        return Err(Error::InvalidGrid("no node in the inner region".into()));
    }
    v.sort_by(f64::total_cmp);
    let median = if v.len() % 2 == 1 {
        v[v.len() / 2]
    } else {
        0.5 * (v[v.len() / 2 - 1] + v[v.len() / 2])
    };
    Ok(BoundCheck::new(
        "soliton_residual",
        median,
        SOLITON_TOL,
        0.0,
        fields([("max", *v.last().unwrap_or(&f64::NAN)), ("nodes", v.len() as f64)]),
        fields([("statistic_median", 1.0)]),
    ))
}

/// Acceptance level of the oracle error.
pub const ORACLE_TOL: f64 = 5e-3;
/// Acceptance level of the median soliton residual.
pub const SOLITON_TOL: f64 = 1e-3;

/// Supersolution sign over seeded band samples, as `max residual <= 0`.
pub fn barrier_check(alpha: f64, samples: usize, seed: u64) -> Result<BoundCheck> {
    let s = band_check(alpha, samples, seed, 1e-6, 1.0 - 1e-6)?;
    Ok(BoundCheck::new(
        "barrier_residual",
        s.max_residual,
        0.0,
        0.0,
        fields([
            ("max_fd_relative_error", s.max_fd_relative_error),
            ("fd_checked", s.fd_checked as f64),
            ("max_identity_gap", s.max_identity_gap),
            ("max_foot_identity_gap", s.max_foot_identity_gap),
        ]),
        fields([("alpha", alpha), ("samples", samples as f64), ("seed", seed as f64)]),
    ))
}

/// Solve, then run the requested experiments (or the defaults for the
/// domain). A failed solve still yields a report on the last iterate, with
/// `solver.converged = false`.
pub fn full_report(domain: &ConvexDomain, n: usize, cfg: &SolverConfig, params: &ReportParams) -> Result<(Report, SolverResult)> {
    let grid = Arc::new(Grid::for_domain(domain, n)?);
    let experiments = if params.experiments.is_empty() {
        Experiment::defaults_for(domain)
    } else {
        params.experiments.clone()
    };
    validate_experiments(domain, &experiments)?;
    let result = solve_translator(domain, grid.clone(), cfg)?;
    let u = &result.u;
    let exclusion = params.exclusion_cells * grid.h();
    let mut checks = Vec::new();
    let mut flat_side = None;
    for e in &experiments {
        match e {
            Experiment::Oracle => {
                let Shape::Disk { radius } = domain.shape() else { unreachable!() };
                checks.push(oracle_check(u, *radius)?);
            }
            Experiment::Soliton => checks.push(soliton_check(u, domain)?),
            Experiment::Barrier => {
                for &a in &params.alphas {
                    checks.push(barrier_check(a, params.band_samples, params.seed)?);
                }
            }
            Experiment::Thm31 => {
                let geom = graph_geometry(u);
                checks.extend(random_curvature_checks(
                    &geom,
                    domain.area()?,
                    params.balls,
                    params.seed,
                    params.ball_radii,
                    exclusion,
                )?);
            }
            Experiment::Thm43 => {
                for &a in &params.alphas {
                    for &eps in &params.epsilons {
                        checks.push(check_partial_derivative_bound(u, a, eps, exclusion)?);
                    }
                }
            }
            Experiment::Lemma51 => {
                for &(a, b, sigma) in &params.witness_triples {
                    checks.push(gradient_bound_witness(u, a, b, sigma, params.witness_tol, exclusion)?.1);
                }
            }
            Experiment::Thm52 => {
                for &a in &params.alphas {
                    checks.push(match domain.shape() {
                        Shape::Square { .. } => check_distance_bound_offset(u, a, 2)?,
                        _ => check_distance_bound(u, a, exclusion)?,
                    });
                }
            }
            Experiment::Flatside => {
                let caps: Vec<(f64, ScalarField)> = result
                    .caps_used
                    .iter()
                    .copied()
                    .zip(result.cap_solutions.iter().cloned())
                    .collect();
                flat_side = Some(flat_side_report(u, domain, &caps, params.flat_tol)?);
            }
        }
    }
    let report = Report {
        domain: domain.clone(),
        grid: grid.info(),
        solver: result.summary(cfg.scheme),
        checks,
        flat_side,
    };
    Ok((report, result))
}

/// Rejects experiments whose hypotheses the domain cannot meet.
pub fn validate_experiments(domain: &ConvexDomain, experiments: &[Experiment]) -> Result<()> {
    for e in experiments {
        let ok = match e {
            Experiment::Oracle => matches!(domain.shape(), Shape::Disk { .. }),
            Experiment::Thm43 => domain.family_margins().is_ok_and(|(a, b)| a > 0.0 && b > 0.0),
            Experiment::Thm52 => {
                matches!(domain.shape(), Shape::Square { .. })
                    || domain.family_margins().is_ok_and(|(a, b)| a > 0.0 && b > 0.0)
            }
            Experiment::Flatside => domain.is_axially_symmetric(),
            _ => true,
        };
        if !ok {
            return Err(Error::InvalidConfig(format!(
                "experiment '{}' does not apply to a {} domain",
                e.name(),
                domain.kind_name()
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::geometry::graph_geometry;
    use crate::grid::Grid;
    use crate::ConvexDomain;

    fn bowl(n: usize) -> ScalarField {
        let d = ConvexDomain::disk(1.0).unwrap();
        let g = Arc::new(Grid::for_domain(&d, n).unwrap());
        ScalarField::from_fn(g, |p| 0.5 * (p.x * p.x + p.y * p.y))
    }

    #[test]
    fn rhs_values() {
        assert!((partial_derivative_rhs(0.1) - (2.0 + 3.0 / (0.005 * PI).tan())).abs() < 1e-12);
        assert!((partial_derivative_rhs(0.1) - 192.97).abs() < 0.01);
        assert!((distance_rhs(0.1) - 606.0).abs() < 1e-9);
        assert!((distance_rhs(0.15) - 272.6667).abs() < 1e-3);
    }

    #[test]
    fn pass_flag_follows_slack() {
        let c = BoundCheck::new("t", 1.0, 1.0 - 1e-7, 1e-6, Fields::new(), Fields::new());
        assert!(c.pass);
        let c = BoundCheck::new("t", 1.0, 0.99, 1e-6, Fields::new(), Fields::new());
        assert!(!c.pass);
        assert!((c.slack + 0.01).abs() < 1e-15);
    }

    #[test]
    fn swallowing_ball_cuts_nothing() {
        let u = bowl(33);
        let geom = graph_geometry(&u);
        let e = check_curvature_bound(&geom, PI, [0.0, 0.0, 0.0], 10.0, default_exclusion(&u));
        assert!(matches!(e, Err(Error::BallDoesNotCut)));
    }

    #[test]
    fn cap_above_the_bottom_is_cut_off() {
        let u = bowl(65);
        let geom = graph_geometry(&u);
        // The ball swallows the rim and leaves the disk r < 0.73 outside.
        let c = check_curvature_bound(&geom, PI, [0.0, 0.0, 3.0], 8f64.sqrt(), default_exclusion(&u)).unwrap();
        assert!(c.pass);
        assert!(c.lhs > 0.0);
        assert!(c.witness["pieces"] >= 1.0);
    }

    #[test]
    fn witness_on_a_paraboloid() {
        let d = ConvexDomain::disk(2f64.sqrt()).unwrap();
        let g = Arc::new(Grid::for_domain(&d, 129).unwrap());
        let u = ScalarField::from_fn(g, |p| 0.5 * (p.x * p.x + p.y * p.y));
        let (x0, c) = gradient_bound_witness(&u, 0.2, 0.5, 0.3, 1e-3, default_exclusion(&u)).unwrap();
        // u_x(b, y) = b and -u_y(x, -0.7) = 0.7 for every x: the tie goes left.
        assert!((c.witness["M"] - 0.5).abs() < 1e-12);
        assert!((c.lhs - 0.7).abs() < 1e-12);
        assert!(x0 >= 0.2 && x0 - 0.2 < u.grid().h());
        let rhs = (2.0 * 0.5 / (PI * 0.3 * 0.3)).sqrt();
        assert!((c.rhs - rhs).abs() < 1e-12);
        assert!(c.pass);
    }

    #[test]
    fn samples_near_the_wall_are_refused() {
        let u = bowl(65);
        let e = default_exclusion(&u);
        assert!(sample(&u, Point::new(0.0, 0.0), e).is_ok());
        assert!(matches!(sample(&u, Point::new(0.0, -0.99), e), Err(Error::OutsideMask(..))));
        assert!(check_distance_bound(&u, 0.1, e).is_err());
    }
}
