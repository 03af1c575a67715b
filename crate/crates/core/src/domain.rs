//! Convex planar domains over which the translator is solved.
//!
//! All domains are open sets: boundary points are not members. Disk, square
//! and superellipse-blend domains are centered at the origin and symmetric
//! under both axis reflections.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{find_root, integrate, minimize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub min: Point,
    pub max: Point,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Disk {
        radius: f64,
    },
    Square {
        half_side: f64,
    },
    /// `{ |x|^m + |y|^m + blend (x^2 + y^2) < level }`
    SuperellipseBlend {
        exponent: f64,
        blend: f64,
        level: f64,
    },
    /// Counterclockwise, strictly convex.
    Polygon {
        vertices: Vec<Point>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexDomain {
    #[serde(flatten)]
    shape: Shape,
    bbox: BBox,
}

fn symmetric_bbox(half_x: f64, half_y: f64) -> BBox {
    BBox {
        min: Point::new(-half_x, -half_y),
        max: Point::new(half_x, half_y),
    }
}

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

fn segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    let t = (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0);
    p.dist(Point::new(a.x + t * dx, a.y + t * dy))
}

impl ConvexDomain {
    pub fn disk(radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::EmptyDomain);
        }
        Ok(Self {
            shape: Shape::Disk { radius },
            bbox: symmetric_bbox(radius, radius),
        })
    }

    pub fn square(half_side: f64) -> Result<Self> {
        if !(half_side > 0.0 && half_side.is_finite()) {
            return Err(Error::EmptyDomain);
        }
        Ok(Self {
            shape: Shape::Square { half_side },
            bbox: symmetric_bbox(half_side, half_side),
        })
    }

    pub fn superellipse_blend(exponent: f64, blend: f64, level: f64) -> Result<Self> {
        if !(exponent >= 3.0) || !(blend > 0.0) || !exponent.is_finite() {
            return Err(Error::InvalidDomain(format!(
                "superellipse blend needs exponent >= 3 and blend > 0 (got {exponent}, {blend})"
            )));
        }
        if !(level > 0.0 && level.is_finite()) {
            return Err(Error::EmptyDomain);
        }
        let mut domain = Self {
            shape: Shape::SuperellipseBlend {
                exponent,
                blend,
                level,
            },
            bbox: symmetric_bbox(0.0, 0.0),
        };
        let a = domain.radial_extent(0.0)?;
        domain.bbox = symmetric_bbox(a, a);
        Ok(domain)
    }

    pub fn polygon(vertices: Vec<Point>) -> Result<Self> {
        let n = vertices.len();
        if n < 3 {
            return Err(Error::InvalidDomain("polygon needs at least 3 vertices".into()));
        }
        for k in 0..n {
            let c = cross(vertices[k], vertices[(k + 1) % n], vertices[(k + 2) % n]);
            if !(c > 0.0) {
                return Err(Error::InvalidDomain(format!(
                    "polygon is not strictly convex and counterclockwise at vertex {}",
                    (k + 1) % n
                )));
            }
        }
        let mut min = vertices[0];
        let mut max = vertices[0];
        for v in &vertices {
            min = Point::new(min.x.min(v.x), min.y.min(v.y));
            max = Point::new(max.x.max(v.x), max.y.max(v.y));
        }
        let domain = Self {
            shape: Shape::Polygon { vertices },
            bbox: BBox { min, max },
        };
        domain.area()?;
        Ok(domain)
    }

    /// Parses a vertex file: one `x y` pair per line, `#` comments allowed.
    pub fn polygon_from_str(text: &str) -> Result<Self> {
        let mut vertices = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 2 {
                return Err(Error::Parse(format!("vertex line {}: expected `x y`", lineno + 1)));
            }
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| Error::Parse(format!("vertex line {}: bad number {s:?}", lineno + 1)))
            };
            vertices.push(Point::new(parse(parts[0])?, parse(parts[1])?));
        }
        Self::polygon(vertices)
    }

    /// Smooth strictly convex member of the family used for the partial
    /// derivative and distance estimates: a superellipse blend through
    /// `(1 + delta, 0)` and `(1 + delta/4, 1 + delta/4)`, so that
    /// `[-1,1]^2 ⊂ Ω ⊂ [-4/3,4/3]^2`.
    pub fn standard_family(delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta <= 1.0 / 3.0) {
            return Err(Error::InvalidDomain(format!("delta = {delta} is outside (0, 1/3]")));
        }
        const BLEND: f64 = 0.5;
        let a = 1.0 + delta;
        let s = 1.0 + 0.25 * delta;
        let defect = |m: f64| 2.0 * s.powf(m) - a.powf(m) + BLEND * (2.0 * s * s - a * a);
        let upper = 700.0 / a.ln();
        let exponent = find_root(defect, 3.0, upper, 1e-12).ok_or(Error::FamilySearch(delta))?;
        let level = a.powf(exponent) + BLEND * a * a;
        let domain = Self::superellipse_blend(exponent, BLEND, level)?;

        let (inner, outer) = domain.family_margins()?;
        if !(inner > 0.0) || outer < -1e-12 {
            return Err(Error::FamilySearch(delta));
        }
        Ok(domain)
    }

    /// Containment margins against `[-1,1]^2` (inner, by corner distance) and
    /// `[-4/3,4/3]^2` (outer, by sampled boundary distance).
    pub fn family_margins(&self) -> Result<(f64, f64)> {
        let mut inner = f64::INFINITY;
        for (sx, sy) in [(1.0, 1.0), (-1.0, 1.0), (1.0, -1.0), (-1.0, -1.0)] {
            inner = inner.min(self.boundary_distance(Point::new(sx, sy))?);
        }
        let mut outer = f64::INFINITY;
        let b = 4.0 / 3.0;
        let samples = 400;
        for k in 0..samples {
            let t = -b + 2.0 * b * k as f64 / samples as f64;
            for p in [
                Point::new(t, b),
                Point::new(t, -b),
                Point::new(b, t),
                Point::new(-b, t),
            ] {
                outer = outer.min(-self.boundary_distance(p)?);
            }
        }
        Ok((inner, outer))
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn bbox(&self) -> BBox {
        self.bbox
    }

    pub fn kind_name(&self) -> &'static str {
        match self.shape {
            Shape::Disk { .. } => "disk",
            Shape::Square { .. } => "square",
            Shape::SuperellipseBlend { .. } => "superellipse_blend",
            Shape::Polygon { .. } => "polygon",
        }
    }

    pub fn is_axially_symmetric(&self) -> bool {
        match &self.shape {
            Shape::Polygon { vertices } => {
                let has = |q: Point| vertices.iter().any(|v| v.dist(q) < 1e-12);
                vertices
                    .iter()
                    .all(|v| has(Point::new(-v.x, v.y)) && has(Point::new(v.x, -v.y)))
            }
            _ => true,
        }
    }

    /// Square-like domains get capped Dirichlet data at their corners too.
    pub fn has_corners(&self) -> bool {
        matches!(self.shape, Shape::Square { .. } | Shape::Polygon { .. })
    }

    pub fn area(&self) -> Result<f64> {
        let area = match &self.shape {
            Shape::Disk { radius } => PI * radius * radius,
            Shape::Square { half_side } => 4.0 * half_side * half_side,
            Shape::Polygon { vertices } => {
                let n = vertices.len();
                0.5 * (0..n)
                    .map(|k| {
                        let (a, b) = (vertices[k], vertices[(k + 1) % n]);
                        a.x * b.y - b.x * a.y
                    })
                    .sum::<f64>()
            }
            Shape::SuperellipseBlend { .. } => {
                // Polar form: A = 4 * (1/2) * integral of r(θ)^2 over the first quadrant.
                let failed = std::cell::Cell::new(false);
                let quarter = integrate(
                    |t| match self.radial_extent(t) {
                        Ok(r) => r * r,
                        Err(_) => {
                            failed.set(true);
                            0.0
                        }
                    },
                    0.0,
                    0.5 * PI,
                    1e-13,
                );
                if failed.get() {
                    return Err(Error::RootFinder(Point::new(0.0, 0.0)));
                }
                2.0 * quarter
            }
        };
        if !(area > 0.0) || !area.is_finite() {
            return Err(Error::EmptyDomain);
        }
        Ok(area)
    }

    pub fn contains(&self, p: Point) -> bool {
        match &self.shape {
            Shape::Disk { radius } => p.x * p.x + p.y * p.y < radius * radius,
            Shape::Square { half_side } => p.x.abs() < *half_side && p.y.abs() < *half_side,
            Shape::SuperellipseBlend {
                exponent,
                blend,
                level,
            } => {
                let g = p.x.abs().powf(*exponent)
                    + p.y.abs().powf(*exponent)
                    + blend * (p.x * p.x + p.y * p.y);
                g < *level
            }
            Shape::Polygon { vertices } => {
                let n = vertices.len();
                (0..n).all(|k| cross(vertices[k], vertices[(k + 1) % n], p) > 0.0)
            }
        }
    }

    /// Distance from the origin to the boundary along the ray at angle `theta`.
    pub fn radial_extent(&self, theta: f64) -> Result<f64> {
        let (c, s) = (theta.cos(), theta.sin());
        match &self.shape {
            Shape::Disk { radius } => Ok(*radius),
            Shape::Square { half_side } => Ok(half_side / c.abs().max(s.abs())),
            Shape::SuperellipseBlend {
                exponent,
                blend,
                level,
            } => {
                let m = *exponent;
                let angular = c.abs().powf(m) + s.abs().powf(m);
                let upper = (level / blend).sqrt();
                find_root(
                    |r| r.powf(m) * angular + blend * r * r - level,
                    0.0,
                    upper,
                    1e-15,
                )
                .ok_or(Error::RootFinder(Point::new(c, s)))
            }
            Shape::Polygon { vertices } => {
                if !self.contains(Point::new(0.0, 0.0)) {
                    return Err(Error::InvalidDomain("polygon does not contain the origin".into()));
                }
                let n = vertices.len();
                let mut best = f64::INFINITY;
                for k in 0..n {
                    let (a, b) = (vertices[k], vertices[(k + 1) % n]);
                    let (ex, ey) = (b.x - a.x, b.y - a.y);
                    let denom = c * ey - s * ex;
                    if denom.abs() < 1e-300 {
                        continue;
                    }
                    let t = (a.x * ey - a.y * ex) / denom;
                    let u = if ex.abs() > ey.abs() {
                        (t * c - a.x) / ex
                    } else {
                        (t * s - a.y) / ey
                    };
                    if t > 0.0 && (-1e-12..=1.0 + 1e-12).contains(&u) {
                        best = best.min(t);
                    }
                }
                if best.is_finite() {
                    Ok(best)
                } else {
                    Err(Error::RootFinder(Point::new(c, s)))
                }
            }
        }
    }

    /// Gauge (Minkowski functional) about the origin: 0 at the origin, 1 on
    /// the boundary.
    pub fn gauge(&self, p: Point) -> Result<f64> {
        let r = p.norm();
        if r == 0.0 {
            return Ok(0.0);
        }
        Ok(r / self.radial_extent(p.y.atan2(p.x))?)
    }

    /// Signed Euclidean distance to the boundary: positive inside.
    pub fn boundary_distance(&self, p: Point) -> Result<f64> {
        match &self.shape {
            Shape::Disk { radius } => Ok(radius - p.norm()),
            Shape::Square { half_side } => {
                let dx = p.x.abs() - half_side;
                let dy = p.y.abs() - half_side;
                if dx <= 0.0 && dy <= 0.0 {
                    Ok(-dx.max(dy))
                } else {
                    Ok(-(dx.max(0.0)).hypot(dy.max(0.0)))
                }
            }
            Shape::Polygon { vertices } => {
                let n = vertices.len();
                let d = (0..n)
                    .map(|k| segment_distance(p, vertices[k], vertices[(k + 1) % n]))
                    .fold(f64::INFINITY, f64::min);
                Ok(if self.contains(p) { d } else { -d })
            }
            Shape::SuperellipseBlend { .. } => {
                let d = self.curve_distance(p)?;
                Ok(if self.contains(p) { d } else { -d })
            }
        }
    }

    fn boundary_point(&self, theta: f64) -> Result<Point> {
        let r = self.radial_extent(theta)?;
        Ok(Point::new(r * theta.cos(), r * theta.sin()))
    }

    /// Unsigned distance to a boundary given by its radial function: coarse
    /// angular scan, then Brent refinement of the best local minima.
    fn curve_distance(&self, p: Point) -> Result<f64> {
        const SCAN: usize = 96;
        let step = TAU / SCAN as f64;
        let mut samples = Vec::with_capacity(SCAN);
        for k in 0..SCAN {
            let t = k as f64 * step;
            samples.push(self.boundary_point(t)?.dist(p));
        }
        let mut candidates: Vec<usize> = (0..SCAN)
            .filter(|&k| {
                let prev = samples[(k + SCAN - 1) % SCAN];
                let next = samples[(k + 1) % SCAN];
                samples[k] <= prev && samples[k] <= next
            })
            .collect();
        candidates.sort_by(|&a, &b| samples[a].total_cmp(&samples[b]));
        candidates.truncate(4);
        let mut best = f64::INFINITY;
        let failed = std::cell::Cell::new(false);
        for k in candidates {
            let t0 = k as f64 * step;
            let (_, d2) = minimize(
                |t| match self.boundary_point(t) {
                    Ok(q) => {
                        let (dx, dy) = (q.x - p.x, q.y - p.y);
                        dx * dx + dy * dy
                    }
                    Err(_) => {
                        failed.set(true);
                        f64::INFINITY
                    }
                },
                t0 - step,
                t0 + step,
                1e-12,
            );
            best = best.min(d2.sqrt());
        }
        if failed.get() || !best.is_finite() {
            return Err(Error::RootFinder(p));
        }
        Ok(best)
    }
}
