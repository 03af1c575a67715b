//! Uniform node grids masked by a convex domain, scalar fields over them and
//! the finite-difference operators used by the solver and the checks.

use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::domain::{ConvexDomain, Point};
use crate::error::{Error, Result};

/// Floor applied to directional second differences inside the monotone
/// Monge-Ampère operator.
pub const CLAMP_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Interior,
    BoundaryBand,
    Exterior,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    origin: Point,
    h: f64,
    nx: usize,
    ny: usize,
    mask: Vec<NodeKind>,
    dist: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridInfo {
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    pub origin: Point,
    pub interior_nodes: usize,
    pub band_nodes: usize,
}

impl Grid {
    /// Grid with `n` nodes per axis spanning the symmetric box
    /// `[-L, L]^2`, where `L` bounds the domain. Odd `n` puts a node at the
    /// origin.
    pub fn for_domain(domain: &ConvexDomain, n: usize) -> Result<Self> {
        if n < 16 {
            return Err(Error::InvalidGrid(format!("n = {n} is below 16")));
        }
        let b = domain.bbox();
        let half = b.min.x.abs().max(b.max.x.abs()).max(b.min.y.abs()).max(b.max.y.abs());
        let h = 2.0 * half / (n - 1) as f64;
        Self::with_mask(domain, Point::new(-half, -half), h, n, n)
    }

    pub fn with_mask(domain: &ConvexDomain, origin: Point, h: f64, nx: usize, ny: usize) -> Result<Self> {
        if !(h > 0.0) || nx < 16 || ny < 16 {
            return Err(Error::InvalidGrid(format!("h = {h}, nx = {nx}, ny = {ny}")));
        }
        let mut mask = vec![NodeKind::Exterior; nx * ny];
        let mut dist = vec![f64::NAN; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                let p = Point::new(origin.x + i as f64 * h, origin.y + j as f64 * h);
                if !domain.contains(p) {
                    continue;
                }
                let d = domain.boundary_distance(p)?;
                // Ties are broken the same way at mirror images: nodes on
                // the boundary up to rounding are exterior, nodes at 2h are
                // interior.
                if d <= 1e-9 * h {
                    continue;
                }
                dist[j * nx + i] = d;
                mask[j * nx + i] = if d < 2.0 * h * (1.0 - 1e-9) {
                    NodeKind::BoundaryBand
                } else {
                    NodeKind::Interior
                };
            }
        }
        let mut grid = Self {
            origin,
            h,
            nx,
            ny,
            mask,
            dist,
        };
        // An interior node must see four non-exterior axis neighbors.
        for j in 0..ny {
            for i in 0..nx {
                if grid.kind(i, j) != NodeKind::Interior {
                    continue;
                }
                let ok = [(1, 0), (-1, 0), (0, 1), (0, -1)]
                    .iter()
                    .all(|&(di, dj)| grid.offset(i, j, di, dj).is_some_and(|k| grid.mask[k] != NodeKind::Exterior));
                if !ok {
                    grid.mask[j * nx + i] = NodeKind::BoundaryBand;
                }
            }
        }
        if grid.count(NodeKind::Interior) == 0 {
            return Err(Error::InvalidGrid("no interior nodes".into()));
        }
        Ok(grid)
    }

    /// Grid with an explicit mask, for charts that are not masked by a
    /// planar domain. `dist` holds the boundary distance of each node.
    pub fn from_mask(origin: Point, h: f64, nx: usize, ny: usize, mask: Vec<NodeKind>, dist: Vec<f64>) -> Result<Self> {
        if !(h > 0.0) || nx < 2 || ny < 2 || mask.len() != nx * ny || dist.len() != nx * ny {
            return Err(Error::InvalidGrid(format!("h = {h}, nx = {nx}, ny = {ny}, mask of {}", mask.len())));
        }
        Ok(Self {
            origin,
            h,
            nx,
            ny,
            mask,
            dist,
        })
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn origin(&self) -> Point {
        self.origin
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn coords(&self, k: usize) -> (usize, usize) {
        (k % self.nx, k / self.nx)
    }

    pub fn point(&self, i: usize, j: usize) -> Point {
        Point::new(self.origin.x + i as f64 * self.h, self.origin.y + j as f64 * self.h)
    }

    pub fn kind(&self, i: usize, j: usize) -> NodeKind {
        self.mask[self.index(i, j)]
    }

    pub fn kind_at(&self, k: usize) -> NodeKind {
        self.mask[k]
    }

    /// Signed boundary distance recorded at mask construction (NaN outside).
    pub fn boundary_distance(&self, k: usize) -> f64 {
        self.dist[k]
    }

    pub fn offset(&self, i: usize, j: usize, di: i32, dj: i32) -> Option<usize> {
        let ii = i as i64 + di as i64;
        let jj = j as i64 + dj as i64;
        if ii < 0 || jj < 0 || ii >= self.nx as i64 || jj >= self.ny as i64 {
            None
        } else {
            Some(jj as usize * self.nx + ii as usize)
        }
    }

    /// Index of the node at `p` when `p` is (to rounding) a grid node.
    pub fn node_at(&self, p: Point) -> Option<usize> {
        let fi = (p.x - self.origin.x) / self.h;
        let fj = (p.y - self.origin.y) / self.h;
        let (ri, rj) = (fi.round(), fj.round());
        if (fi - ri).abs() > 1e-9 || (fj - rj).abs() > 1e-9 || ri < 0.0 || rj < 0.0 {
            return None;
        }
        let (i, j) = (ri as usize, rj as usize);
        (i < self.nx && j < self.ny).then(|| self.index(i, j))
    }

    pub fn count(&self, kind: NodeKind) -> usize {
        self.mask.iter().filter(|&&m| m == kind).count()
    }

    pub fn info(&self) -> GridInfo {
        GridInfo {
            nx: self.nx,
            ny: self.ny,
            h: self.h,
            origin: self.origin,
            interior_nodes: self.count(NodeKind::Interior),
            band_nodes: self.count(NodeKind::BoundaryBand),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScalarField {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl PartialEq for ScalarField {
    fn eq(&self, other: &Self) -> bool {
        (Arc::ptr_eq(&self.grid, &other.grid) || self.grid == other.grid)
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()))
    }
}

impl ScalarField {
    /// Samples `f` at every non-exterior node; exterior nodes hold NaN.
    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(Point) -> f64) -> Self {
        let values = (0..grid.len())
            .map(|k| {
                if grid.kind_at(k) == NodeKind::Exterior {
                    f64::NAN
                } else {
                    let (i, j) = grid.coords(k);
                    f(grid.point(i, j))
                }
            })
            .collect();
        Self { grid, values }
    }

    pub fn from_values(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "{} values for {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    fn live(&self, i: usize, j: usize, di: i32, dj: i32) -> Option<f64> {
        let k = self.grid.offset(i, j, di, dj)?;
        (self.grid.kind_at(k) != NodeKind::Exterior).then(|| self.values[k])
    }

    /// Second-order first derivative along one axis: centered when both
    /// neighbors are live, otherwise the one-sided three-point formula.
    fn axis_derivative(&self, i: usize, j: usize, axis: (i32, i32)) -> Result<f64> {
        let h = self.grid.h;
        let (ax, ay) = axis;
        let c = self.live(i, j, 0, 0).ok_or(Error::ExteriorNode(i, j))?;
        match (self.live(i, j, ax, ay), self.live(i, j, -ax, -ay)) {
            (Some(p), Some(m)) => Ok((p - m) / (2.0 * h)),
            (Some(p1), None) => {
                let p2 = self.live(i, j, 2 * ax, 2 * ay).ok_or(Error::TruncatedStencil)?;
                Ok((-3.0 * c + 4.0 * p1 - p2) / (2.0 * h))
            }
            (None, Some(m1)) => {
                let m2 = self.live(i, j, -2 * ax, -2 * ay).ok_or(Error::TruncatedStencil)?;
                Ok((3.0 * c - 4.0 * m1 + m2) / (2.0 * h))
            }
            (None, None) => Err(Error::TruncatedStencil),
        }
    }

    fn axis_second(&self, i: usize, j: usize, axis: (i32, i32)) -> Result<f64> {
        let h2 = self.grid.h * self.grid.h;
        let (ax, ay) = axis;
        let c = self.live(i, j, 0, 0).ok_or(Error::ExteriorNode(i, j))?;
        match (self.live(i, j, ax, ay), self.live(i, j, -ax, -ay)) {
            (Some(p), Some(m)) => Ok((p - 2.0 * c + m) / h2),
            (p1, m1) => {
                let s = if p1.is_some() { 1 } else if m1.is_some() { -1 } else {
                    return Err(Error::TruncatedStencil);
                };
                let mut v = [c, 0.0, 0.0, 0.0];
                for (n, slot) in v.iter_mut().enumerate().skip(1) {
                    *slot = self
                        .live(i, j, s * n as i32 * ax, s * n as i32 * ay)
                        .ok_or(Error::TruncatedStencil)?;
                }
                Ok((2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3]) / h2)
            }
        }
    }

    /// `Du` at node `(i, j)`.
    pub fn gradient(&self, i: usize, j: usize) -> Result<[f64; 2]> {
        if self.grid.kind(i, j) == NodeKind::Exterior {
            return Err(Error::ExteriorNode(i, j));
        }
        Ok([self.axis_derivative(i, j, (1, 0))?, self.axis_derivative(i, j, (0, 1))?])
    }

    /// `D²u` at node `(i, j)` as `[[uxx, uxy], [uxy, uyy]]`.
    pub fn hessian(&self, i: usize, j: usize) -> Result<[[f64; 2]; 2]> {
        if self.grid.kind(i, j) == NodeKind::Exterior {
            return Err(Error::ExteriorNode(i, j));
        }
        let uxx = self.axis_second(i, j, (1, 0))?;
        let uyy = self.axis_second(i, j, (0, 1))?;
        let h = self.grid.h;
        let ux_at = |dj: i32| -> Result<f64> {
            let k = self.grid.offset(i, j, 0, dj).ok_or(Error::TruncatedStencil)?;
            if self.grid.kind_at(k) == NodeKind::Exterior {
                return Err(Error::TruncatedStencil);
            }
            let (ii, jj) = self.grid.coords(k);
            self.axis_derivative(ii, jj, (1, 0))
        };
        let uxy = match (ux_at(1), ux_at(-1)) {
            (Ok(p), Ok(m)) => (p - m) / (2.0 * h),
            (Ok(p1), Err(_)) => (-3.0 * ux_at(0)? + 4.0 * p1 - ux_at(2)?) / (2.0 * h),
            (Err(_), Ok(m1)) => (3.0 * ux_at(0)? - 4.0 * m1 + ux_at(-2)?) / (2.0 * h),
            (Err(e), Err(_)) => return Err(e),
        };
        Ok([[uxx, uxy], [uxy, uyy]])
    }

    /// `(u(x+e) - 2u(x) + u(x-e)) / |e|^2` with `e = dir * h`.
    pub fn directional_second_difference(&self, i: usize, j: usize, dir: (i32, i32)) -> Result<f64> {
        let c = self.live(i, j, 0, 0).ok_or(Error::ExteriorNode(i, j))?;
        let p = self.live(i, j, dir.0, dir.1).ok_or(Error::TruncatedStencil)?;
        let m = self.live(i, j, -dir.0, -dir.1).ok_or(Error::TruncatedStencil)?;
        let len2 = ((dir.0 * dir.0 + dir.1 * dir.1) as f64) * self.grid.h * self.grid.h;
        Ok((p - 2.0 * c + m) / len2)
    }

    /// Wide-stencil monotone discretization of `det D²u`.
    pub fn monotone_ma(&self, i: usize, j: usize, stencils: &StencilSet) -> Result<f64> {
        if self.grid.kind(i, j) == NodeKind::Exterior {
            return Err(Error::ExteriorNode(i, j));
        }
        let mut best = f64::INFINITY;
        for &(e, f) in stencils.pairs() {
            let (Ok(a), Ok(b)) = (
                self.directional_second_difference(i, j, e),
                self.directional_second_difference(i, j, f),
            ) else {
                continue;
            };
            best = best.min(a.max(CLAMP_FLOOR) * b.max(CLAMP_FLOOR));
        }
        if best.is_finite() {
            Ok(best)
        } else {
            Err(Error::IsolatedNode(i, j))
        }
    }

    /// Largest pointwise difference over nodes live in both fields.
    pub fn max_abs_diff(&self, other: &ScalarField, keep: impl Fn(usize) -> bool) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .enumerate()
            .filter(|(k, (a, b))| a.is_finite() && b.is_finite() && keep(*k))
            .map(|(_, (a, b))| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Catmull-Rom bicubic interpolation at `p`: value and gradient.
    pub fn interpolate(&self, p: Point) -> Result<(f64, [f64; 2])> {
        let g = &self.grid;
        let fx = (p.x - g.origin.x) / g.h;
        let fy = (p.y - g.origin.y) / g.h;
        let (i0, j0) = (fx.floor(), fy.floor());
        let (tx, ty) = (fx - i0, fy - j0);
        if i0 < 1.0 || j0 < 1.0 || i0 + 2.0 >= g.nx as f64 || j0 + 2.0 >= g.ny as f64 {
            return Err(Error::OutsideMask(p.x, p.y));
        }
        let (i0, j0) = (i0 as usize, j0 as usize);
        let mut patch = [[0.0; 4]; 4];
        for (b, row) in patch.iter_mut().enumerate() {
            for (a, slot) in row.iter_mut().enumerate() {
                let k = g.index(i0 + a - 1, j0 + b - 1);
                if g.kind_at(k) == NodeKind::Exterior {
                    return Err(Error::OutsideMask(p.x, p.y));
                }
                *slot = self.values[k];
            }
        }
        let (wx, dwx) = catmull_rom(tx);
        let (wy, dwy) = catmull_rom(ty);
        let (mut v, mut vx, mut vy) = (0.0, 0.0, 0.0);
        for b in 0..4 {
            for a in 0..4 {
                v += wx[a] * wy[b] * patch[b][a];
                vx += dwx[a] * wy[b] * patch[b][a];
                vy += wx[a] * dwy[b] * patch[b][a];
            }
        }
        Ok((v, [vx / g.h, vy / g.h]))
    }

    /// CSV with header `x,y,value[,extra...]`, row-major, exterior nodes
    /// omitted, 17 significant digits.
    pub fn to_csv(&self, extras: &[(&str, &[f64])]) -> String {
        let mut out = String::from("x,y,value");
        for (name, _) in extras {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for k in 0..self.grid.len() {
            if self.grid.kind_at(k) == NodeKind::Exterior {
                continue;
            }
            let (i, j) = self.grid.coords(k);
            let p = self.grid.point(i, j);
            let _ = write!(out, "{:.16e},{:.16e},{:.16e}", p.x, p.y, self.values[k]);
            for (_, col) in extras {
                let _ = write!(out, ",{:.16e}", col[k]);
            }
            out.push('\n');
        }
        out
    }

    /// Inverse of [`ScalarField::to_csv`] onto a known grid. Nodes absent from
    /// the file are NaN.
    pub fn from_csv(grid: Arc<Grid>, text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty csv".into()))?;
        if !header.starts_with("x,y,value") {
            return Err(Error::Parse(format!("unexpected header {header:?}")));
        }
        let mut values = vec![f64::NAN; grid.len()];
        for (n, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<f64> = line
                .split(',')
                .take(3)
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Parse(format!("csv row {}", n + 2)))?;
            if cols.len() != 3 {
                return Err(Error::Parse(format!("csv row {} has {} columns", n + 2, cols.len())));
            }
            let k = grid
                .node_at(Point::new(cols[0], cols[1]))
                .ok_or_else(|| Error::Parse(format!("csv row {} is not a grid node", n + 2)))?;
            values[k] = cols[2];
        }
        Ok(Self { grid, values })
    }
}

pub(crate) fn catmull_rom(t: f64) -> ([f64; 4], [f64; 4]) {
    let (t2, t3) = (t * t, t * t * t);
    let w = [
        0.5 * (-t3 + 2.0 * t2 - t),
        0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
        0.5 * (-3.0 * t3 + 4.0 * t2 + t),
        0.5 * (t3 - t2),
    ];
    let dw = [
        0.5 * (-3.0 * t2 + 4.0 * t - 1.0),
        0.5 * (9.0 * t2 - 10.0 * t),
        0.5 * (-9.0 * t2 + 8.0 * t + 1.0),
        0.5 * (3.0 * t2 - 2.0 * t),
    ];
    (w, dw)
}

fn gcd(a: i32, b: i32) -> i32 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

/// Primitive integer directions up to width `W`, grouped in orthogonal
/// pairs `(e, e⊥)`. Each line through the origin appears once.
#[derive(Debug, Clone, PartialEq)]
pub struct StencilSet {
    width: i32,
    directions: Vec<(i32, i32)>,
    pairs: Vec<((i32, i32), (i32, i32))>,
}

impl StencilSet {
    pub fn new(width: i32) -> Result<Self> {
        if width < 1 {
            return Err(Error::InvalidGrid(format!("stencil width {width}")));
        }
        let mut directions = Vec::new();
        for p in -width..=width {
            for q in -width..=width {
                if (p, q) != (0, 0) && gcd(p, q) == 1 {
                    directions.push((p, q));
                }
            }
        }
        // One representative per orthogonal pair: p > 0, q >= 0.
        let mut pairs: Vec<_> = directions
            .iter()
            .filter(|&&(p, q)| p > 0 && q >= 0)
            .map(|&(p, q)| ((p, q), (-q, p)))
            .collect();
        pairs.sort_by(|a, b| {
            let ka = (a.0 .0.abs().max(a.0 .1.abs()), a.0);
            let kb = (b.0 .0.abs().max(b.0 .1.abs()), b.0);
            ka.cmp(&kb)
        });
        Ok(Self {
            width,
            directions,
            pairs,
        })
    }

    pub fn width(&self) -> i32 {
        self.width
    }

    /// All directions, both signs.
    pub fn directions(&self) -> &[(i32, i32)] {
        &self.directions
    }

    pub fn pairs(&self) -> &[((i32, i32), (i32, i32))] {
        &self.pairs
    }
}

impl Default for StencilSet {
    fn default() -> Self {
        Self::new(3).expect("width 3 is valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn square_grid(n: usize) -> Arc<Grid> {
        let d = ConvexDomain::square(1.0).unwrap();
        Arc::new(Grid::for_domain(&d, n).unwrap())
    }

    fn center(g: &Grid) -> (usize, usize) {
        (g.nx() / 2, g.ny() / 2)
    }

    #[test]
    fn stencil_set_shape() {
        let s = StencilSet::new(3).unwrap();
        assert_eq!(s.directions().len(), 32);
        assert_eq!(s.pairs().len(), 8);
        for &d in &[(1, 0), (0, 1), (1, 1), (1, -1)] {
            assert!(s.directions().contains(&d));
        }
        for &(p, q) in s.directions() {
            assert!(s.directions().contains(&(-p, -q)));
            assert!(s.directions().contains(&(-q, p)));
        }
        for &((a, b), (c, d)) in s.pairs() {
            assert_eq!(a * c + b * d, 0);
        }
    }

    #[test]
    fn mask_is_symmetric() {
        let d = ConvexDomain::disk(1.0).unwrap();
        let g = Grid::for_domain(&d, 65).unwrap();
        for j in 0..65 {
            for i in 0..65 {
                assert_eq!(g.kind(i, j), g.kind(64 - i, j));
                assert_eq!(g.kind(i, j), g.kind(i, 64 - j));
            }
        }
        assert_eq!(g.kind(32, 32), NodeKind::Interior);
        assert_eq!(g.node_at(Point::new(0.0, 0.0)), Some(g.index(32, 32)));
    }

    #[test]
    fn linear_and_quadratic_derivatives() {
        let g = square_grid(33);
        let u = ScalarField::from_fn(g.clone(), |p| p.x);
        let (i, j) = center(&g);
        assert_eq!(u.gradient(i, j).unwrap(), [1.0, 0.0]);
        let u = ScalarField::from_fn(g.clone(), |p| p.x * p.y);
        let hess = u.hessian(i + 3, j - 2).unwrap();
        assert!((hess[0][1] - 1.0).abs() < 1e-12);
        let u = ScalarField::from_fn(g.clone(), |p| p.x * p.x);
        let hess = u.hessian(i, j).unwrap();
        assert!((hess[0][0] - 2.0).abs() < 1e-12 && hess[1][1].abs() < 1e-12);
        // one-sided formulas on the band are exact for quadratics too
        let u = ScalarField::from_fn(g.clone(), |p| p.x * p.x + 3.0 * p.x * p.y);
        let k = (0..g.len())
            .find(|&k| g.kind_at(k) == NodeKind::BoundaryBand && g.coords(k).0 == 1)
            .unwrap();
        let (bi, bj) = g.coords(k);
        let p = g.point(bi, bj);
        let grad = u.gradient(bi, bj).unwrap();
        assert!((grad[0] - (2.0 * p.x + 3.0 * p.y)).abs() < 1e-12);
        let hess = u.hessian(bi, bj).unwrap();
        assert!((hess[0][0] - 2.0).abs() < 1e-9 && (hess[0][1] - 3.0).abs() < 1e-9);
    }

    #[test]
    fn hessian_converges_second_order() {
        let err = |n: usize| {
            let g = square_grid(n);
            let u = ScalarField::from_fn(g.clone(), |p| p.x.cos() * p.y.cos());
            let i = (n - 1) / 4 * 3;
            let j = (n - 1) / 4;
            let p = g.point(i, j);
            let hs = u.hessian(i, j).unwrap();
            let exact = [
                -p.x.cos() * p.y.cos(),
                p.x.sin() * p.y.sin(),
                -p.x.cos() * p.y.cos(),
            ];
            (hs[0][0] - exact[0]).abs().max((hs[0][1] - exact[1]).abs()).max((hs[1][1] - exact[2]).abs())
        };
        let ratio = err(33) / err(65);
        assert!(ratio > 3.5 && ratio < 4.5, "{ratio}");
    }

    #[test]
    fn directional_differences() {
        let g = square_grid(33);
        let (i, j) = center(&g);
        let u = ScalarField::from_fn(g.clone(), |p| p.x * p.x + p.y * p.y);
        assert!((u.directional_second_difference(i, j, (1, 0)).unwrap() - 2.0).abs() < 1e-12);
        let u = ScalarField::from_fn(g.clone(), |p| p.x * p.x);
        assert!((u.directional_second_difference(i, j, (1, 1)).unwrap() - 1.0).abs() < 1e-12);
        let u = ScalarField::from_fn(g.clone(), |p| 2.0 * p.x - p.y);
        assert!(u.directional_second_difference(i, j, (2, 1)).unwrap().abs() < 1e-12);
        assert_eq!(u.directional_second_difference(1, j, (3, 0)), Err(Error::TruncatedStencil));
    }

    #[test]
    fn monotone_ma_on_model_fields() {
        let g = square_grid(65);
        let s = StencilSet::default();
        let (i, j) = center(&g);
        let u = ScalarField::from_fn(g.clone(), |p| 0.5 * (p.x * p.x + p.y * p.y));
        assert!((u.monotone_ma(i, j, &s).unwrap() - 1.0).abs() < 1e-12);
        let u = ScalarField::from_fn(g.clone(), |p| p.x + 0.5 * p.y);
        assert!(u.monotone_ma(i, j, &s).unwrap() <= 1e-20);
    }

    #[test]
    fn monotone_ma_quartic_refinement() {
        // det D²(x⁴+y⁴) = 144 x²y² = 9 at (1/2, 1/2)
        let s = StencilSet::default();
        let err = |n: usize| {
            let g = square_grid(n);
            let u = ScalarField::from_fn(g.clone(), |p| p.x.powi(4) + p.y.powi(4));
            let k = g.node_at(Point::new(0.5, 0.5)).unwrap();
            let (i, j) = g.coords(k);
            (u.monotone_ma(i, j, &s).unwrap() - 9.0).abs()
        };
        let (e1, e2) = (err(33), err(129));
        assert!(e2 < e1 && e2 < 0.1, "{e1} {e2}");
    }

    #[test]
    fn interpolation_reproduces_quadratics_inside() {
        let g = square_grid(41);
        let u = ScalarField::from_fn(g.clone(), |p| p.x * p.x - 2.0 * p.x * p.y + p.y);
        let p = Point::new(0.123, -0.377);
        let (v, d) = u.interpolate(p).unwrap();
        assert!((v - (p.x * p.x - 2.0 * p.x * p.y + p.y)).abs() < 1e-12);
        assert!((d[0] - (2.0 * p.x - 2.0 * p.y)).abs() < 1e-10);
        assert!((d[1] - (1.0 - 2.0 * p.x)).abs() < 1e-10);
        assert!(u.interpolate(Point::new(0.999, 0.0)).is_err());
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let g = square_grid(17);
        let u = ScalarField::from_fn(g.clone(), |p| (p.x * 7.3).sin() / 3.0 + p.y.exp());
        let text = u.to_csv(&[("twice", &u.values().iter().map(|v| 2.0 * v).collect::<Vec<_>>())]);
        assert!(text.starts_with("x,y,value,twice\n"));
        let back = ScalarField::from_csv(g, &text).unwrap();
        assert_eq!(back, u);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn monotone_ma_is_monotone_in_neighbors(
            seed in 0u64..1000,
            which in 0usize..32,
            bump in 1e-6f64..1.0,
        ) {
            use rand::{Rng, SeedableRng};
            let g = square_grid(21);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let noise: Vec<f64> = (0..g.len()).map(|_| rng.random_range(-0.01..0.01)).collect();
            let base = ScalarField::from_fn(g.clone(), |p| p.x * p.x + 0.5 * p.y * p.y + p.x * p.y * 0.3);
            let mut vals = base.values().to_vec();
            for (v, n) in vals.iter_mut().zip(&noise) { *v += n; }
            let u = ScalarField::from_values(g.clone(), vals.clone()).unwrap();
            let s = StencilSet::default();
            let (i, j) = (10, 10);
            let before = u.monotone_ma(i, j, &s).unwrap();
            let (di, dj) = s.directions()[which];
            let k = g.offset(i, j, di, dj).unwrap();
            vals[k] += bump;
            let after = ScalarField::from_values(g.clone(), vals).unwrap().monotone_ma(i, j, &s).unwrap();
            prop_assert!(after >= before);
        }

        #[test]
        fn operators_are_reflection_equivariant(a in -1.0f64..1.0, b in -1.0f64..1.0, c in 0.1f64..2.0) {
            let g = square_grid(33);
            let f = move |p: Point| c * p.x * p.x + a * p.x * p.y + (p.y * b).exp() + p.x.powi(3);
            let u = ScalarField::from_fn(g.clone(), f);
            let r = ScalarField::from_fn(g.clone(), move |p| f(Point::new(-p.x, p.y)));
            let s = StencilSet::default();
            for (i, j) in [(10, 12), (20, 7), (16, 16)] {
                let mi = g.nx() - 1 - i;
                let m1 = u.monotone_ma(i, j, &s).unwrap();
                let m2 = r.monotone_ma(mi, j, &s).unwrap();
                prop_assert!((m1 - m2).abs() <= 1e-9 * m1.abs().max(1.0));
                let g1 = u.gradient(i, j).unwrap();
                let g2 = r.gradient(mi, j).unwrap();
                prop_assert!((g1[0] + g2[0]).abs() < 1e-9 && (g1[1] - g2[1]).abs() < 1e-9);
            }
        }
    }
}
