//! Geometry of the graph of a solution: curvatures, the cut-off function of
//! a cutting ball, the horizontal graph over the `(x, z)` plane with its
//! level-set frame, and level-set extraction.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::domain::{ConvexDomain, Point};
use crate::error::{Error, Result};
use crate::grid::{catmull_rom, Grid, NodeKind, ScalarField};
use crate::numerics::find_root;

pub type Point3 = [f64; 3];

/// Gradients below this norm leave the level-set frame undefined.
pub const FRAME_GRADIENT_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NodeGeometry {
    pub du: [f64; 2],
    pub d2u: [[f64; 2]; 2],
    /// `<n, e3> = (1 + |Du|^2)^(-1/2)`.
    pub tilt: f64,
    /// Gauss curvature.
    pub k: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

impl NodeGeometry {
    /// Principal curvatures are the eigenvalues of the shape operator
    /// `(I + Du Du^T)^(-1) D^2u / W`, `W = (1 + |Du|^2)^(1/2)`.
    pub fn from_derivatives(du: [f64; 2], d2u: [[f64; 2]; 2]) -> Self {
        let (p, q) = (du[0], du[1]);
        let w2 = 1.0 + p * p + q * q;
        let w = w2.sqrt();
        let det = d2u[0][0] * d2u[1][1] - d2u[0][1] * d2u[1][0];
        let k = det / (w2 * w2);
        let inv = [[1.0 - p * p / w2, -p * q / w2], [-p * q / w2, 1.0 - q * q / w2]];
        let s00 = (inv[0][0] * d2u[0][0] + inv[0][1] * d2u[1][0]) / w;
        let s11 = (inv[1][0] * d2u[0][1] + inv[1][1] * d2u[1][1]) / w;
        let trace = s00 + s11;
        // The operator is similar to a symmetric one, so the discriminant is
        // nonnegative up to rounding.
        let root = (0.25 * trace * trace - k).max(0.0).sqrt();
        let lambda_max = 0.5 * trace + root;
        let lambda_min = if trace > 0.0 && lambda_max > 0.0 {
            k / lambda_max
        } else {
            0.5 * trace - root
        };
        Self {
            du,
            d2u,
            tilt: 1.0 / w,
            k,
            lambda_min,
            lambda_max,
        }
    }

    pub fn mean_curvature(&self) -> f64 {
        self.lambda_min + self.lambda_max
    }
}

/// Per-node geometry of the graph of `u` over the interior nodes.
#[derive(Debug, Clone)]
pub struct GraphGeometry {
    u: ScalarField,
    nodes: Vec<Option<NodeGeometry>>,
    flagged: Vec<usize>,
}

pub fn graph_geometry(u: &ScalarField) -> GraphGeometry {
    let g = u.grid();
    let nodes: Vec<Option<NodeGeometry>> = (0..g.len())
        .into_par_iter()
        .map(|k| {
            if g.kind_at(k) != NodeKind::Interior {
                return None;
            }
            let (i, j) = g.coords(k);
            let (du, d2u) = (u.gradient(i, j).ok()?, u.hessian(i, j).ok()?);
            let finite = du.iter().chain(d2u.iter().flatten()).all(|v| v.is_finite());
            finite.then(|| NodeGeometry::from_derivatives(du, d2u))
        })
        .collect();
    let flagged = (0..g.len())
        .filter(|&k| g.kind_at(k) == NodeKind::Interior && nodes[k].is_none())
        .collect();
    GraphGeometry {
        u: u.clone(),
        nodes,
        flagged,
    }
}

impl GraphGeometry {
    pub fn field(&self) -> &ScalarField {
        &self.u
    }

    pub fn node(&self, k: usize) -> Option<&NodeGeometry> {
        self.nodes.get(k).and_then(Option::as_ref)
    }

    pub fn nodes(&self) -> &[Option<NodeGeometry>] {
        &self.nodes
    }

    /// Interior nodes skipped for non-finite derivatives.
    pub fn flagged(&self) -> &[usize] {
        &self.flagged
    }

    /// Columns `x,y,u,ux,uy,K,tilt,lambda_max`; NaN where undefined.
    pub fn to_csv(&self) -> String {
        let col = |f: fn(&NodeGeometry) -> f64| -> Vec<f64> {
            self.nodes.iter().map(|n| n.as_ref().map_or(f64::NAN, f)).collect()
        };
        let (ux, uy) = (col(|n| n.du[0]), col(|n| n.du[1]));
        let (k, tilt, lmax) = (col(|n| n.k), col(|n| n.tilt), col(|n| n.lambda_max));
        let text = self.u.to_csv(&[("ux", &ux), ("uy", &uy), ("K", &k), ("tilt", &tilt), ("lambda_max", &lmax)]);
        text.replacen("x,y,value", "x,y,u", 1)
    }
}

/// `F(p) = (x, y, u(x, y))` at node `k`.
pub fn position(u: &ScalarField, k: usize) -> Point3 {
    let g = u.grid();
    let (i, j) = g.coords(k);
    let p = g.point(i, j);
    [p.x, p.y, u.values()[k]]
}

pub fn dist3(a: Point3, b: Point3) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// `eta(p) = (|F(p) - Y|^2 - R^2)_+`.
pub fn cutoff_eta(u: &ScalarField, k: usize, center: Point3, radius: f64) -> f64 {
    let d = dist3(position(u, k), center);
    (d * d - radius * radius).max(0.0)
}

/// The piece of the graph cut off by a ball: the connected set of interior
/// nodes outside the ball that contains the seed and stays clear of the
/// boundary strip, so that its boundary lies on the sphere.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CuttingBall {
    pub center: Point3,
    pub radius: f64,
    pub seed: usize,
    /// Width of the strip along the domain boundary the piece must avoid.
    pub exclusion: f64,
    pub cut_nodes: Vec<usize>,
}

impl CuttingBall {
    pub fn new(u: &ScalarField, center: Point3, radius: f64, seed: usize, exclusion: f64) -> Result<Self> {
        let g = u.grid();
        let outside = |k: usize| dist3(position(u, k), center) > radius;
        if seed >= g.len() || g.kind_at(seed) != NodeKind::Interior || !outside(seed) {
            return Err(Error::BallDoesNotCut);
        }
        let mut seen = vec![false; g.len()];
        let mut stack = vec![seed];
        let mut cut = Vec::new();
        seen[seed] = true;
        while let Some(k) = stack.pop() {
            if g.kind_at(k) != NodeKind::Interior || g.boundary_distance(k) < exclusion {
                // The piece runs into the walls: it is not cut off.
                return Err(Error::BallDoesNotCut);
            }
            cut.push(k);
            let (i, j) = g.coords(k);
            for (di, dj) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
                if let Some(n) = g.offset(i, j, di, dj) {
                    if !seen[n] && g.kind_at(n) != NodeKind::Exterior && outside(n) {
                        seen[n] = true;
                        stack.push(n);
                    }
                }
            }
        }
        cut.sort_unstable();
        Ok(Self {
            center,
            radius,
            seed,
            exclusion,
            cut_nodes: cut,
        })
    }

    /// Every piece the ball cuts off, in order of smallest node index.
    pub fn pieces(u: &ScalarField, center: Point3, radius: f64, exclusion: f64) -> Vec<Self> {
        let g = u.grid();
        let outside = |k: usize| dist3(position(u, k), center) > radius;
        let mut seen = vec![false; g.len()];
        let mut out = Vec::new();
        for seed in 0..g.len() {
            if seen[seed] || g.kind_at(seed) != NodeKind::Interior || !outside(seed) {
                continue;
            }
            let mut stack = vec![seed];
            let mut cut = Vec::new();
            let mut open = false;
            seen[seed] = true;
            while let Some(k) = stack.pop() {
                if g.kind_at(k) != NodeKind::Interior || g.boundary_distance(k) < exclusion {
                    open = true;
                }
                cut.push(k);
                let (i, j) = g.coords(k);
                for (di, dj) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
                    if let Some(n) = g.offset(i, j, di, dj) {
                        if !seen[n] && g.kind_at(n) != NodeKind::Exterior && outside(n) {
                            seen[n] = true;
                            stack.push(n);
                        }
                    }
                }
            }
            if !open {
                cut.sort_unstable();
                out.push(Self {
                    center,
                    radius,
                    seed,
                    exclusion,
                    cut_nodes: cut,
                });
            }
        }
        out
    }
}

/// Unit normal `v = Dh/|Dh|`, tangent `tau` with `<tau, e1> >= 0`, and the
/// curvature `div(Dh/|Dh|)` of a level set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LevelFrame {
    pub v: [f64; 2],
    pub tau: [f64; 2],
    pub kappa: f64,
}

impl LevelFrame {
    pub fn from_derivatives(d: [f64; 2], d2: [[f64; 2]; 2]) -> Option<Self> {
        let norm = (d[0] * d[0] + d[1] * d[1]).sqrt();
        if !(norm >= FRAME_GRADIENT_FLOOR) {
            return None;
        }
        let v = [d[0] / norm, d[1] / norm];
        let tau = if -v[1] > 0.0 || (v[1] == 0.0 && v[0] > 0.0) {
            [-v[1], v[0]]
        } else {
            [v[1], -v[0]]
        };
        let kappa =
            (d2[0][0] * d[1] * d[1] - 2.0 * d2[0][1] * d[0] * d[1] + d2[1][1] * d[0] * d[0]) / (norm * norm * norm);
        Some(Self { v, tau, kappa })
    }
}

/// Level-set frames of `field` at every node with finite derivatives.
pub fn level_frames(field: &ScalarField) -> Vec<Option<LevelFrame>> {
    let g = field.grid();
    (0..g.len())
        .into_par_iter()
        .map(|k| {
            if g.kind_at(k) == NodeKind::Exterior {
                return None;
            }
            let (i, j) = g.coords(k);
            let d = field.gradient(i, j).ok()?;
            let d2 = field.hessian(i, j).ok()?;
            LevelFrame::from_derivatives(d, d2)
        })
        .collect()
}

/// One grid column of `u` on `y <= 0`, read from `y = 0` downward.
struct Column {
    /// `u(x, -m h)` for `m = -1, 0, 1, ...`; the leading entry mirrors `m = 1`.
    values: Vec<f64>,
    h: f64,
}

impl Column {
    /// Number of cells `[m, m + 1]` whose four-point stencil is available.
    fn cells(&self) -> usize {
        self.values.len().saturating_sub(3)
    }

    fn bottom(&self) -> f64 {
        self.values[1]
    }

    fn top(&self) -> f64 {
        self.values[self.cells() + 1]
    }

    /// Value and `u_y` at `y = -(m + t) h` on cell `m`.
    fn eval(&self, m: usize, t: f64) -> (f64, f64) {
        let (w, dw) = catmull_rom(t);
        let s = &self.values[m..m + 4];
        let v = (0..4).map(|a| w[a] * s[a]).sum::<f64>();
        let dv = (0..4).map(|a| dw[a] * s[a]).sum::<f64>();
        // Column index grows as y decreases.
        (v, -dv / self.h)
    }

    /// The `y <= 0` with `u(x, y) = z` and `u_y` there.
    fn invert(&self, z: f64) -> Option<(f64, f64)> {
        let m = (0..self.cells()).find(|&m| self.values[m + 2] >= z)?;
        let t = if z <= self.values[m + 1] {
            0.0
        } else {
            find_root(|t| self.eval(m, t).0 - z, 0.0, 1.0, 1e-15)?
        };
        let (_, uy) = self.eval(m, t);
        Some((-(m as f64 + t) * self.h, uy))
    }
}

/// The lower half of the graph written as `y = h(x, z)`.
#[derive(Debug, Clone)]
pub struct HorizontalGraph {
    /// `h` on an `(x, z)` grid with the spacing of the solution grid.
    pub h: ScalarField,
    /// `h_z = 1/u_y(x, h)` from the column interpolant; NaN off the chart.
    pub hz: Vec<f64>,
    pub frames: Vec<Option<LevelFrame>>,
}

/// Inverts each column of `u` on `y <= 0`. The `(x, z)` chart covers, for
/// every column, heights from `u(x, 0)` to the last value whose cubic stencil
/// stays on interior nodes.
pub fn horizontal_graph(u: &ScalarField, domain: &ConvexDomain) -> Result<HorizontalGraph> {
    if !domain.is_axially_symmetric() {
        return Err(Error::InvalidDomain("horizontal graph needs a domain symmetric in y".into()));
    }
    let g = u.grid();
    let h = g.h();
    let j0f = -g.origin().y / h;
    let j0 = j0f.round() as usize;
    if (j0f - j0 as f64).abs() > 1e-9 || j0 + 1 >= g.ny() {
        return Err(Error::InvalidGrid("no grid row at y = 0".into()));
    }
    let mut columns = Vec::with_capacity(g.nx());
    for i in 0..g.nx() {
        let x = g.point(i, 0).x;
        let mut values = Vec::new();
        if g.kind(i, j0) == NodeKind::Interior && g.kind(i, j0 + 1) == NodeKind::Interior {
            values.push(u.at(i, j0 + 1));
            let mut j = j0;
            loop {
                if g.kind(i, j) != NodeKind::Interior {
                    break;
                }
                values.push(u.at(i, j));
                if j == 0 {
                    break;
                }
                j -= 1;
            }
        }
        let col = Column { values, h };
        if col.cells() > 0 && col.values[1..].windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::NonMonotoneColumn(x));
        }
        columns.push(col);
    }
    let usable: Vec<&Column> = columns.iter().filter(|c| c.cells() > 0).collect();
    if usable.is_empty() {
        return Err(Error::InvalidGrid("no invertible column".into()));
    }
    let z0 = usable.iter().map(|c| c.bottom()).fold(f64::INFINITY, f64::min);
    let z1 = usable.iter().map(|c| c.top()).fold(f64::NEG_INFINITY, f64::max);
    let nz = (((z1 - z0) / h).floor() as usize + 1).max(2);
    let nx = g.nx();

    let inverted: Vec<Option<(f64, f64)>> = (0..nx * nz)
        .into_par_iter()
        .map(|k| {
            let (i, m) = (k % nx, k / nx);
            let col = &columns[i];
            let z = z0 + m as f64 * h;
            if col.cells() == 0 || z < col.bottom() || z > col.top() {
                return None;
            }
            col.invert(z)
        })
        .collect();
    let inside = |i: isize, m: isize| -> bool {
        i >= 0 && m >= 0 && (i as usize) < nx && (m as usize) < nz && inverted[m as usize * nx + i as usize].is_some()
    };
    let mut mask = vec![NodeKind::Exterior; nx * nz];
    let mut dist = vec![f64::NAN; nx * nz];
    for m in 0..nz {
        for i in 0..nx {
            let k = m * nx + i;
            if inverted[k].is_none() {
                continue;
            }
            // Axis distance to the edge of the chart, looking a few cells out.
            let reach = 8;
            let steps = [(1, 0), (-1, 0), (0, 1), (0, -1)]
                .iter()
                .map(|&(di, dm)| {
                    (1..=reach)
                        .find(|&s| !inside(i as isize + di * s, m as isize + dm * s))
                        .unwrap_or(reach + 1)
                })
                .min()
                .unwrap_or(0);
            dist[k] = steps as f64 * h;
            mask[k] = if steps >= 2 {
                NodeKind::Interior
            } else {
                NodeKind::BoundaryBand
            };
        }
    }
    let chart = Arc::new(Grid::from_mask(Point::new(g.origin().x, z0), h, nx, nz, mask, dist)?);
    let values: Vec<f64> = inverted.iter().map(|v| v.map_or(f64::NAN, |(y, _)| y)).collect();
    let hz: Vec<f64> = inverted
        .iter()
        .map(|v| match v {
            Some((_, uy)) if *uy != 0.0 => 1.0 / uy,
            _ => f64::NAN,
        })
        .collect();
    let field = ScalarField::from_values(chart, values)?;
    let frames = level_frames(&field);
    Ok(HorizontalGraph { h: field, hz, frames })
}

impl HorizontalGraph {
    /// `|det D^2h / (1 + |Dh|^2)^(3/2) + f h_z|` at interior chart nodes,
    /// all derivatives by finite differences; NaN elsewhere.
    pub fn translator_residual(&self, rhs: f64) -> Vec<f64> {
        let g = self.h.grid();
        (0..g.len())
            .into_par_iter()
            .map(|k| {
                if g.kind_at(k) != NodeKind::Interior {
                    return f64::NAN;
                }
                let (i, j) = g.coords(k);
                let (Ok(d), Ok(d2)) = (self.h.gradient(i, j), self.h.hessian(i, j)) else {
                    return f64::NAN;
                };
                let w2 = 1.0 + d[0] * d[0] + d[1] * d[1];
                let det = d2[0][0] * d2[1][1] - d2[0][1] * d2[0][1];
                (det / (w2 * w2.sqrt()) + rhs * d[1]).abs()
            })
            .collect()
    }

    /// CSV `x,z,h,hz,kappa`.
    pub fn to_csv(&self) -> String {
        let kappa: Vec<f64> = self.frames.iter().map(|f| f.map_or(f64::NAN, |f| f.kappa)).collect();
        self.h
            .to_csv(&[("hz", &self.hz), ("kappa", &kappa)])
            .replacen("x,y,value", "x,z,h", 1)
    }
}

/// A marching-squares polyline. Closed curves do not repeat their first
/// vertex; every curve keeps the sublevel side on its left, so closed curves
/// around a sublevel set run counterclockwise.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Polyline {
    pub points: Vec<Point>,
    pub closed: bool,
}

impl Polyline {
    pub fn length(&self) -> f64 {
        let open: f64 = self.points.windows(2).map(|w| w[0].dist(w[1])).sum();
        match (self.closed, self.points.first(), self.points.last()) {
            (true, Some(a), Some(b)) => open + a.dist(*b),
            _ => open,
        }
    }

    /// Signed area enclosed by a closed curve.
    pub fn signed_area(&self) -> f64 {
        let n = self.points.len();
        0.5 * (0..n)
            .map(|k| {
                let (a, b) = (self.points[k], self.points[(k + 1) % n]);
                a.x * b.y - b.x * a.y
            })
            .sum::<f64>()
    }
}

/// CSV `curve,x,y` vertex lists; closed curves repeat their first vertex.
pub fn polylines_to_csv(curves: &[Polyline]) -> String {
    let mut out = String::from("curve,x,y\n");
    for (c, curve) in curves.iter().enumerate() {
        let tail = curve.closed.then(|| curve.points.first()).flatten();
        for p in curve.points.iter().chain(tail) {
            let _ = writeln!(out, "{c},{:.16e},{:.16e}", p.x, p.y);
        }
    }
    out
}

/// Edge of the node lattice: `(i, j, 0)` runs from `(i, j)` to `(i+1, j)`,
/// `(i, j, 1)` from `(i, j)` to `(i, j+1)`.
type EdgeId = (usize, usize, u8);

/// Marching squares over cells whose four corners are finite.
pub fn level_set(field: &ScalarField, s: f64) -> Vec<Polyline> {
    let g = field.grid();
    let h = g.h();
    let val = |i: usize, j: usize| field.at(i, j);
    let crossing = |e: EdgeId| -> Point {
        let (i, j, dir) = e;
        let (i1, j1) = if dir == 0 { (i + 1, j) } else { (i, j + 1) };
        let (a, b) = (val(i, j), val(i1, j1));
        let t = if a == b { 0.5 } else { ((s - a) / (b - a)).clamp(0.0, 1.0) };
        let (p, q) = (g.point(i, j), g.point(i1, j1));
        Point::new(p.x + t * (q.x - p.x), p.y + t * (q.y - p.y))
    };
    let mut segments: Vec<(EdgeId, EdgeId)> = Vec::new();
    for j in 0..g.ny().saturating_sub(1) {
        for i in 0..g.nx().saturating_sub(1) {
            let c = [val(i, j), val(i + 1, j), val(i + 1, j + 1), val(i, j + 1)];
            if c.iter().any(|v| !v.is_finite()) {
                continue;
            }
            // Cell edges counterclockwise: bottom, right, top, left.
            let edges: [EdgeId; 4] = [(i, j, 0), (i + 1, j, 1), (i, j + 1, 0), (i, j, 1)];
            let above: [bool; 4] = c.map(|v| v > s);
            let cut: Vec<usize> = (0..4).filter(|&e| above[e] != above[(e + 1) % 4]).collect();
            let pairs: Vec<(usize, usize)> = match cut.len() {
                2 => vec![(cut[0], cut[1])],
                4 => {
                    let center_above = c.iter().sum::<f64>() / 4.0 > s;
                    // Join edges around the corners that differ from the center.
                    if above[0] == center_above {
                        vec![(0, 3), (1, 2)]
                    } else {
                        vec![(0, 1), (2, 3)]
                    }
                }
                _ => vec![],
            };
            let gx = ((c[1] + c[2]) - (c[0] + c[3])) / (2.0 * h);
            let gy = ((c[2] + c[3]) - (c[0] + c[1])) / (2.0 * h);
            for (ea, eb) in pairs {
                let (a, b) = (edges[ea], edges[eb]);
                let (pa, pb) = (crossing(a), crossing(b));
                // Left normal of a->b must point downhill.
                let (nx, ny) = (-(pb.y - pa.y), pb.x - pa.x);
                if nx * gx + ny * gy > 0.0 {
                    segments.push((b, a));
                } else {
                    segments.push((a, b));
                }
            }
        }
    }
    let mut by_start: HashMap<EdgeId, usize> = HashMap::new();
    for (n, seg) in segments.iter().enumerate() {
        by_start.insert(seg.0, n);
    }
    let ends: std::collections::HashSet<EdgeId> = segments.iter().map(|seg| seg.1).collect();
    let mut used = vec![false; segments.len()];
    let mut curves = Vec::new();
    let follow = |start: usize, used: &mut Vec<bool>| -> Polyline {
        let mut points = vec![crossing(segments[start].0)];
        let mut cur = start;
        let closed = loop {
            used[cur] = true;
            let end = segments[cur].1;
            match by_start.get(&end) {
                Some(&next) if next == start => break true,
                Some(&next) if !used[next] => {
                    points.push(crossing(end));
                    cur = next;
                }
                _ => {
                    points.push(crossing(end));
                    break false;
                }
            }
        };
        Polyline { points, closed }
    };
    // Open curves first, from segments nobody leads into.
    for n in 0..segments.len() {
        if !used[n] && !ends.contains(&segments[n].0) {
            curves.push(follow(n, &mut used));
        }
    }
    for n in 0..segments.len() {
        if !used[n] {
            curves.push(follow(n, &mut used));
        }
    }
    curves
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disk_grid(n: usize) -> Arc<Grid> {
        Arc::new(Grid::for_domain(&ConvexDomain::disk(1.0).unwrap(), n).unwrap())
    }

    #[test]
    fn paraboloid_at_origin() {
        let g = NodeGeometry::from_derivatives([0.0, 0.0], [[1.0, 0.0], [0.0, 1.0]]);
        assert_eq!((g.k, g.lambda_min, g.lambda_max, g.tilt), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn linear_graph_is_flat() {
        let g = NodeGeometry::from_derivatives([0.3, -0.4], [[0.0; 2]; 2]);
        assert_eq!(g.k, 0.0);
        assert_eq!(g.lambda_max, 0.0);
        assert!((g.tilt - 1.0 / 1.25f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn principal_curvatures_match_brute_force() {
        // Brute force: the symmetric form W^-1 G^(-1/2) D2u G^(-1/2) with
        // G = I + p p^T, diagonalized by Jacobi rotation.
        let du = [0.7, -1.3];
        let d2u = [[2.0, 0.4], [0.4, 0.9]];
        let g = NodeGeometry::from_derivatives(du, d2u);
        let w2: f64 = 1.0 + du[0] * du[0] + du[1] * du[1];
        let pn = (du[0] * du[0] + du[1] * du[1]).sqrt();
        let e = [du[0] / pn, du[1] / pn];
        // G^(-1/2) = I + (W^-1 - 1) e e^T
        let c = 1.0 / w2.sqrt() - 1.0;
        let m = [[1.0 + c * e[0] * e[0], c * e[0] * e[1]], [c * e[0] * e[1], 1.0 + c * e[1] * e[1]]];
        let mul = |a: [[f64; 2]; 2], b: [[f64; 2]; 2]| {
            [
                [a[0][0] * b[0][0] + a[0][1] * b[1][0], a[0][0] * b[0][1] + a[0][1] * b[1][1]],
                [a[1][0] * b[0][0] + a[1][1] * b[1][0], a[1][0] * b[0][1] + a[1][1] * b[1][1]],
            ]
        };
        let s = mul(mul(m, d2u), m);
        let theta = 0.5 * (2.0 * s[0][1]).atan2(s[0][0] - s[1][1]);
        let (cs, sn) = (theta.cos(), theta.sin());
        let l1 = (cs * cs * s[0][0] + 2.0 * cs * sn * s[0][1] + sn * sn * s[1][1]) / w2.sqrt();
        let l2 = (sn * sn * s[0][0] - 2.0 * cs * sn * s[0][1] + cs * cs * s[1][1]) / w2.sqrt();
        let (lo, hi) = (l1.min(l2), l1.max(l2));
        assert!((g.lambda_min - lo).abs() < 1e-12 && (g.lambda_max - hi).abs() < 1e-12);
        assert!((g.lambda_min * g.lambda_max - g.k).abs() < 1e-12 * g.k.abs());
    }

    #[test]
    fn sphere_cap_curvatures() {
        let r = 2.0;
        let g = disk_grid(129);
        let u = ScalarField::from_fn(g.clone(), |p| -(r * r - p.x * p.x - p.y * p.y).sqrt());
        let geo = graph_geometry(&u);
        for p in [Point::new(0.0, 0.0), Point::new(0.25, -0.5), Point::new(0.5, 0.5)] {
            let k = g.node_at(p).unwrap();
            let n = geo.node(k).unwrap();
            assert!((n.lambda_min - 1.0 / r).abs() < 1e-3, "{n:?}");
            assert!((n.lambda_max - 1.0 / r).abs() < 1e-3, "{n:?}");
            assert!((n.k - 1.0 / (r * r)).abs() < 1e-3);
        }
        assert!(geo.flagged().is_empty());
        let csv = geo.to_csv();
        assert!(csv.starts_with("x,y,u,ux,uy,K,tilt,lambda_max\n"));
    }

    #[test]
    fn eta_values() {
        let g = disk_grid(33);
        let u = ScalarField::from_fn(g.clone(), |_| 0.0);
        let k = g.node_at(Point::new(0.0, 0.0)).unwrap();
        assert_eq!(cutoff_eta(&u, k, [0.0, 0.0, 2.0], 2.0), 0.0);
        assert!((cutoff_eta(&u, k, [0.0, 0.0, 2.0], 3f64.sqrt()) - 1.0).abs() < 1e-14);
        assert_eq!(cutoff_eta(&u, k, [0.0, 0.0, 0.5], 1.0), 0.0);
    }

    #[test]
    fn cutting_ball_components() {
        let g = disk_grid(65);
        let u = ScalarField::from_fn(g.clone(), |p| 4.0 * (p.x * p.x + p.y * p.y));
        let seed = g.node_at(Point::new(0.0, 0.0)).unwrap();
        // A ball around the rim height separates the bottom from the walls.
        let ball = CuttingBall::new(&u, [0.0, 0.0, 1.0], 0.9, seed, 0.1).unwrap();
        assert!(!ball.cut_nodes.is_empty());
        for &k in &ball.cut_nodes {
            assert!(dist3(position(&u, k), ball.center) > ball.radius);
        }
        // Contains everything: nothing is cut.
        assert_eq!(CuttingBall::new(&u, [0.0, 0.0, 0.0], 10.0, seed, 0.1), Err(Error::BallDoesNotCut));
        // Misses the bottom entirely: the outside piece reaches the walls.
        assert_eq!(CuttingBall::new(&u, [3.0, 3.0, 0.0], 0.5, seed, 0.1), Err(Error::BallDoesNotCut));
    }

    #[test]
    fn circle_level_set() {
        for (n, tol) in [(65, 2e-2), (257, 2e-3)] {
            let g = Arc::new(
                Grid::for_domain(&ConvexDomain::square(1.5).unwrap(), n).unwrap(),
            );
            let f = ScalarField::from_fn(g.clone(), |p| p.x * p.x + p.y * p.y);
            let curves = level_set(&f, 1.0);
            assert_eq!(curves.len(), 1);
            let c = &curves[0];
            assert!(c.closed);
            assert!(c.signed_area() > 0.0);
            for p in &c.points {
                assert!((p.norm() - 1.0).abs() < g.h());
            }
            assert!((c.length() - 2.0 * std::f64::consts::PI).abs() < tol, "{}", c.length());
        }
    }

    #[test]
    fn empty_level_set() {
        let g = disk_grid(33);
        let f = ScalarField::from_fn(g, |p| p.x * p.x + p.y * p.y);
        assert!(level_set(&f, -1.0).is_empty());
    }

    #[test]
    fn radial_level_curvature() {
        let g = disk_grid(257);
        let f = ScalarField::from_fn(g.clone(), |p| (p.x * p.x + p.y * p.y).sqrt().powi(3));
        let frames = level_frames(&f);
        for r in [0.25, 0.5, 0.75] {
            let snap = |v: f64| (v / g.h()).round() * g.h();
            let k = g.node_at(Point::new(snap(r * 0.6), snap(-r * 0.8))).unwrap();
            let (i, j) = g.coords(k);
            let p = g.point(i, j);
            let fr = frames[k].unwrap();
            assert!((fr.kappa - 1.0 / p.norm()).abs() < 2.0 * g.h() / p.norm(), "{}", fr.kappa);
            assert!((fr.v[0] * fr.tau[0] + fr.v[1] * fr.tau[1]).abs() < 1e-15);
            assert!(fr.tau[0] >= 0.0);
        }
    }

    #[test]
    fn horizontal_graph_of_paraboloid() {
        let d = ConvexDomain::disk(1.0).unwrap();
        let g = disk_grid(65);
        let u = ScalarField::from_fn(g.clone(), |p| p.x * p.x + 2.0 * p.y * p.y);
        let hg = horizontal_graph(&u, &d).unwrap();
        let c = hg.h.grid();
        let mut checked = 0;
        for k in 0..c.len() {
            if c.kind_at(k) == NodeKind::Exterior {
                continue;
            }
            let (i, j) = c.coords(k);
            let q = c.point(i, j);
            let y = hg.h.values()[k];
            assert!(y <= 0.0);
            // Round trip through the bicubic interpolant of u.
            if let Ok((z, du)) = u.interpolate(Point::new(q.x, y)) {
                assert!((z - q.y).abs() < 1e-6, "{z} {}", q.y);
                if hg.hz[k].is_finite() {
                    assert!((hg.hz[k] * du[1] - 1.0).abs() < 1e-6);
                    assert!(hg.hz[k] <= 0.0);
                }
                checked += 1;
            }
        }
        assert!(checked > 100);
        // h = 0 on the bottom of each column.
        let k = c.node_at(Point::new(0.0, 0.0)).unwrap();
        assert!(hg.h.values()[k].abs() < 1e-12);
    }
}
