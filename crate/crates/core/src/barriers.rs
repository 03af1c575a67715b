//! The Grim reaper barrier in the `(x, z)` plane of the horizontal graph.
//!
//! `Δ_α` is the epigraph of a scaled Grim reaper over an open strip, `d` the
//! distance to it, and `φ_α = -1 + 2α - sqrt(4α² - d²)` lives on the band
//! `0 <= d <= 2α`. Points of the curve are parametrized by the tangent angle
//! `θ ∈ (-π/2, π/2)`, which keeps the foot search well conditioned up to
//! the asymptotes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::HorizontalGraph;
use crate::grid::NodeKind;
use crate::numerics::find_root;
use crate::Point;

/// Step of the finite-difference cross-checks.
pub const FD_STEP: f64 = 1e-4;
/// Samples closer than this to either band edge skip the finite-difference
/// comparison.
pub const FD_MARGIN: f64 = 100.0 * FD_STEP;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BarrierParams {
    pub alpha: f64,
    pub epsilon: f64,
    /// Translation along `z`.
    pub t: f64,
}

impl BarrierParams {
    pub fn new(alpha: f64, epsilon: f64, t: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if !(epsilon > 0.0 && epsilon < 0.5) {
            return Err(Error::InvalidParams(format!("epsilon = {epsilon} outside (0, 1/2)")));
        }
        if !t.is_finite() {
            return Err(Error::InvalidParams("t must be finite".into()));
        }
        Ok(Self { alpha, epsilon, t })
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 / 6.0 {
        Ok(())
    } else {
        Err(Error::InvalidParams(format!("alpha = {alpha} outside (0, 1/6)")))
    }
}

/// Open strip `(x_lo, x_hi)` over which the curve is a graph.
pub fn strip(alpha: f64) -> (f64, f64) {
    (-2.0 / alpha + 1.0 - 3.0 * alpha, 1.0 - 3.0 * alpha)
}

/// Midpoint of the strip, where the curve has its minimum 0.
pub fn strip_center(alpha: f64) -> f64 {
    1.0 - 3.0 * alpha - 1.0 / alpha
}

fn rate(alpha: f64) -> f64 {
    0.5 * alpha * std::f64::consts::PI
}

fn theta_of(alpha: f64, x: f64) -> Result<f64> {
    let (lo, hi) = strip(alpha);
    if !(x > lo && x < hi) {
        return Err(Error::Asymptote(x));
    }
    Ok(rate(alpha) * (x - strip_center(alpha)))
}

/// `f_α(x) = -(2/(πα)) ln cos((απ/2)(x - 1 + 3α + 1/α))`.
pub fn grim_reaper(alpha: f64, x: f64) -> Result<f64> {
    let th = theta_of(alpha, x)?;
    Ok(-th.cos().ln() / rate(alpha))
}

/// `f_α'(x) = tan θ`.
pub fn grim_reaper_slope(alpha: f64, x: f64) -> Result<f64> {
    Ok(theta_of(alpha, x)?.tan())
}

/// Signed curvature `f''/(1 + f'^2)^(3/2)` of the curve at `x`.
pub fn grim_reaper_curvature(alpha: f64, x: f64) -> Result<f64> {
    let th = theta_of(alpha, x)?;
    let fp = th.tan();
    let fpp = rate(alpha) / (th.cos() * th.cos());
    Ok(fpp / (1.0 + fp * fp).powf(1.5))
}

fn curve_point(alpha: f64, th: f64) -> [f64; 2] {
    let k = rate(alpha);
    [strip_center(alpha) + th / k, -th.cos().ln() / k]
}

/// Nearest point of `∂Δ_α`, with its tangent angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub d: f64,
    pub foot: [f64; 2],
    pub theta: f64,
}

/// Distance from `p = (x, z)` to `Δ_α` and the foot point. Inside the region
/// the distance is zero and the foot is `p` itself.
pub fn distance_to_region(alpha: f64, p: [f64; 2]) -> Result<(f64, [f64; 2])> {
    check_alpha(alpha)?;
    let pr = project(alpha, p)?;
    Ok((pr.d, pr.foot))
}

fn inside(alpha: f64, p: [f64; 2]) -> bool {
    grim_reaper(alpha, p[0]).is_ok_and(|f| p[1] >= f)
}

fn project(alpha: f64, p: [f64; 2]) -> Result<Projection> {
    if !(p[0].is_finite() && p[1].is_finite()) {
        return Err(Error::Minimizer(p[0], p[1]));
    }
    if inside(alpha, p) {
        let theta = theta_of(alpha, p[0])?;
        return Ok(Projection { d: 0.0, foot: p, theta });
    }
    let half_pi = std::f64::consts::FRAC_PI_2;
    let dist2 = |th: f64| {
        let q = curve_point(alpha, th);
        (q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2)
    };
    // Stationarity of the squared distance along the curve.
    let slope = |th: f64| {
        let q = curve_point(alpha, th);
        (q[0] - p[0]) + (q[1] - p[1]) * th.tan()
    };
    // Coarse scan on a grid that clusters toward the asymptotes.
    const SCAN: usize = 400;
    let at = |i: usize| half_pi * (-18.0 + 36.0 * i as f64 / SCAN as f64).tanh();
    let mut best = (0, f64::INFINITY);
    for i in 0..=SCAN {
        let v = dist2(at(i));
        if v < best.1 {
            best = (i, v);
        }
    }
    let (i, _) = best;
    if i == 0 || i == SCAN {
        return Err(Error::Minimizer(p[0], p[1]));
    }
    let theta = find_root(slope, at(i - 1), at(i + 1), 1e-16).ok_or(Error::Minimizer(p[0], p[1]))?;
    let foot = curve_point(alpha, theta);
    let d = (p[0] - foot[0]).hypot(p[1] - foot[1]);
    Ok(Projection { d, foot, theta })
}

/// Barrier data at one point of the band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BarrierEval {
    pub d: f64,
    pub foot: [f64; 2],
    pub phi: f64,
    /// `(φ_x, φ_z)`.
    pub grad: [f64; 2],
    /// Unit normal pointing away from `Δ_α`, `⟨v, e2⟩ <= 0`.
    pub v: [f64; 2],
    /// Unit tangent with `⟨τ, e1⟩ >= 0`.
    pub tau: [f64; 2],
    pub phi_v: f64,
    pub phi_vv: f64,
    pub phi_tautau: f64,
    /// Curvature of the level set of `d` through the point.
    pub kappa: f64,
    /// Curvature of `∂Δ_α` at the foot.
    pub kappa_foot: f64,
    /// The upper bound `-(πα/2)⟨v, e2⟩` for `kappa`.
    pub kappa_bound: f64,
    /// `d = 2α`: `φ_v` is infinite.
    pub singular: bool,
}

/// `φ_α` and its analytic derivatives at `p` in the closed band.
pub fn phi(alpha: f64, p: [f64; 2]) -> Result<BarrierEval> {
    check_alpha(alpha)?;
    let pr = project(alpha, p)?;
    let d = pr.d;
    let limit = 2.0 * alpha;
    if d > limit {
        return Err(Error::OutsideBand { d, limit });
    }
    if d == 0.0 && p[1] > grim_reaper(alpha, p[0])? {
        return Err(Error::InsideRegion(p[0], p[1]));
    }
    // Outer normal of the curve at the foot; exact even for tiny `d`.
    let v = [pr.theta.sin(), -pr.theta.cos()];
    let tau = [-v[1], v[0]];
    let s = limit * limit - d * d;
    let root = s.sqrt();
    let phi_v = d / root;
    let phi_vv = limit * limit / (s * root);
    let kappa_foot = grim_reaper_curvature(alpha, pr.foot[0])?;
    let kappa = kappa_foot / (1.0 + d * kappa_foot);
    Ok(BarrierEval {
        d,
        foot: pr.foot,
        phi: -1.0 + limit - root,
        grad: [phi_v * v[0], phi_v * v[1]],
        v,
        tau,
        phi_v,
        phi_vv,
        phi_tautau: kappa * phi_v,
        kappa,
        kappa_foot,
        kappa_bound: -rate(alpha) * v[1],
        singular: s == 0.0,
    })
}

fn require_open_band(alpha: f64, e: &BarrierEval) -> Result<()> {
    if e.d > 0.0 && e.d < 2.0 * alpha && !e.singular {
        Ok(())
    } else {
        Err(Error::FrameUndefined(e.d))
    }
}

/// `(1/(2α)) κ φ_v + (π/4) φ_z`; nonpositive on the open band.
pub fn supersolution_residual(alpha: f64, p: [f64; 2]) -> Result<f64> {
    let e = phi(alpha, p)?;
    require_open_band(alpha, &e)?;
    Ok(e.kappa * e.phi_v / (2.0 * alpha) + std::f64::consts::FRAC_PI_4 * e.grad[1])
}

/// One sample of the supersolution inequality with its cross-checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SupersolutionSample {
    pub x: f64,
    pub z: f64,
    pub d: f64,
    pub phi: f64,
    pub residual: f64,
    /// `φ_vv φ_ττ / (1 + φ_v²)^(3/2)` from the analytic pieces.
    pub det_ratio: f64,
    /// The same ratio from centered differences of `φ`; `None` within
    /// `FD_MARGIN` of either band edge.
    pub det_ratio_fd: Option<f64>,
    /// `|det_ratio - φ_ττ/(2α)|`, relative to `max(1, |φ_ττ/(2α)|)`.
    pub identity_gap: f64,
    /// `|κ(foot) + (πα/2)⟨v, e2⟩|`.
    pub foot_identity_gap: f64,
}

impl SupersolutionSample {
    pub fn fd_relative_error(&self) -> Option<f64> {
        self.det_ratio_fd.map(|fd| (fd - self.det_ratio).abs() / self.det_ratio.abs())
    }
}

/// Distance to `Δ_α` at offset `rel` from the foot with tangent angle `th0`.
/// Coordinates stay of size `α`, so difference quotients do not see the
/// rounding of the absolute position.
fn local_distance(alpha: f64, th0: f64, rel: [f64; 2]) -> Result<f64> {
    let k = rate(alpha);
    let tan0 = th0.tan();
    // Curve relative to the base foot, as a function of t = θ - th0.
    let curve = |t: f64| {
        let (st, sh) = (t.sin(), (0.5 * t).sin());
        [t / k, -(-2.0 * sh * sh - tan0 * st).ln_1p() / k]
    };
    // The stationarity condition has derivative sec²(θ)(1/k + Z - rel_z) > 0
    // across the band, so Newton from the base foot converges.
    let mut t = 0.0;
    for _ in 0..60 {
        let q = curve(t);
        let tn = (th0 + t).tan();
        let s = (q[0] - rel[0]) + (q[1] - rel[1]) * tn;
        let ds = (1.0 + tn * tn) * (1.0 / k + q[1] - rel[1]);
        let step = s / ds;
        t -= step;
        // The distance is stationary in t, so a loose stop costs nothing.
        if step.abs() <= 1e-13 {
            let q = curve(t);
            let (dx, dz) = (rel[0] - q[0], rel[1] - q[1]);
            // Above the curve the point is inside the region.
            let above = dz * (th0 + t).cos() - dx * (th0 + t).sin() > 0.0;
            return Ok(if above { 0.0 } else { dx.hypot(dz) });
        }
    }
    Err(Error::Minimizer(rel[0], rel[1]))
}

/// Fourth-order centered differences of `g(d)` around `p`, with `d`
/// evaluated in coordinates local to the foot of `p`.
fn fd_of_distance(alpha: f64, p: [f64; 2], step: f64, g: impl Fn(f64) -> f64) -> Result<([f64; 2], [[f64; 2]; 2])> {
    const D1: [f64; 5] = [1.0 / 12.0, -2.0 / 3.0, 0.0, 2.0 / 3.0, -1.0 / 12.0];
    const D2: [f64; 5] = [-1.0 / 12.0, 4.0 / 3.0, -2.5, 4.0 / 3.0, -1.0 / 12.0];
    let base = project(alpha, p)?;
    let rel = [p[0] - base.foot[0], p[1] - base.foot[1]];
    let mut vals = [[0.0; 5]; 5];
    for (a, row) in vals.iter_mut().enumerate() {
        for (b, slot) in row.iter_mut().enumerate() {
            if a == 2 || b == 2 || D1[a] * D1[b] != 0.0 {
                let off = [(a as f64 - 2.0) * step, (b as f64 - 2.0) * step];
                *slot = g(local_distance(alpha, base.theta, [rel[0] + off[0], rel[1] + off[1]])?);
            }
        }
    }
    let (mut gx, mut gz, mut hxx, mut hzz, mut hxz) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for m in 0..5 {
        gx += D1[m] * vals[m][2];
        gz += D1[m] * vals[2][m];
        hxx += D2[m] * vals[m][2];
        hzz += D2[m] * vals[2][m];
        for n in 0..5 {
            hxz += D1[m] * D1[n] * vals[m][n];
        }
    }
    let h2 = step * step;
    Ok(([gx / step, gz / step], [[hxx / h2, hxz / h2], [hxz / h2, hzz / h2]]))
}

/// Fourth-order centered-difference gradient and Hessian of `φ` at `p`.
/// Only meaningful well inside the band: `φ` is extended by `-1` into
/// `Δ_α`, and `φ_v` blows up at `d = 2α`.
pub fn phi_fd_derivatives(alpha: f64, p: [f64; 2], step: f64) -> Result<([f64; 2], [[f64; 2]; 2])> {
    let four = 4.0 * alpha * alpha;
    // φ + 1 without cancellation at small d.
    fd_of_distance(alpha, p, step, |d| d * d / (2.0 * alpha + (four - d * d).max(0.0).sqrt()))
}

/// Fourth-order centered-difference gradient and Hessian of `d` at `p`.
pub fn distance_fd_derivatives(alpha: f64, p: [f64; 2], step: f64) -> Result<([f64; 2], [[f64; 2]; 2])> {
    check_alpha(alpha)?;
    fd_of_distance(alpha, p, step, |d| d)
}

/// Supersolution residual at `p` together with the analytic and
/// finite-difference forms of the curvature ratio.
pub fn supersolution_sample(alpha: f64, p: [f64; 2]) -> Result<SupersolutionSample> {
    let e = phi(alpha, p)?;
    require_open_band(alpha, &e)?;
    let residual = e.kappa * e.phi_v / (2.0 * alpha) + std::f64::consts::FRAC_PI_4 * e.grad[1];
    let w = 1.0 + e.phi_v * e.phi_v;
    let det_ratio = e.phi_vv * e.phi_tautau / (w * w.sqrt());
    let reduced = e.phi_tautau / (2.0 * alpha);
    let det_ratio_fd = if e.d >= FD_MARGIN && 2.0 * alpha - e.d >= FD_MARGIN {
        let (g, hs) = phi_fd_derivatives(alpha, p, FD_STEP)?;
        let wf = 1.0 + g[0] * g[0] + g[1] * g[1];
        Some((hs[0][0] * hs[1][1] - hs[0][1] * hs[0][1]) / (wf * wf.sqrt()))
    } else {
        None
    };
    Ok(SupersolutionSample {
        x: p[0],
        z: p[1],
        d: e.d,
        phi: e.phi,
        residual,
        det_ratio,
        det_ratio_fd,
        identity_gap: (det_ratio - reduced).abs() / reduced.abs().max(1.0),
        foot_identity_gap: (e.kappa_foot - e.kappa_bound).abs(),
    })
}

/// Tangent angles of sampled feet stay within this bound.
pub const SAMPLE_THETA: f64 = 1.4;

/// Seeded points of the open band: a foot on the curve with tangent angle
/// uniform in `[-SAMPLE_THETA, SAMPLE_THETA]`, pushed out along the normal by
/// `d = 2α·s`, `s` uniform in `[s_lo, s_hi] ⊂ (0, 1)`.
pub fn sample_band(alpha: f64, count: usize, seed: u64, s_lo: f64, s_hi: f64) -> Result<Vec<[f64; 2]>> {
    check_alpha(alpha)?;
    if !(s_lo > 0.0 && s_lo <= s_hi && s_hi < 1.0) {
        return Err(Error::InvalidParams(format!("band fraction [{s_lo}, {s_hi}] not inside (0, 1)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count)
        .map(|_| {
            let th = rng.random_range(-SAMPLE_THETA..=SAMPLE_THETA);
            let s = rng.random_range(s_lo..=s_hi);
            let q = curve_point(alpha, th);
            let d = 2.0 * alpha * s;
            [q[0] + d * th.sin(), q[1] - d * th.cos()]
        })
        .collect())
}

/// Largest residual and the sample attaining it, over a seeded band sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandSummary {
    pub alpha: f64,
    pub samples: Vec<SupersolutionSample>,
    pub max_residual: f64,
    /// Over the samples that carry a finite-difference ratio.
    pub max_fd_relative_error: f64,
    pub fd_checked: usize,
    pub max_identity_gap: f64,
    pub max_foot_identity_gap: f64,
}

impl BandSummary {
    pub fn pass(&self) -> bool {
        self.max_residual <= 0.0
    }

    /// CSV `x,z,d,phi,residual`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,z,d,phi,residual\n");
        for s in &self.samples {
            out.push_str(&format!("{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}\n", s.x, s.z, s.d, s.phi, s.residual));
        }
        out
    }
}

pub fn band_check(alpha: f64, count: usize, seed: u64, s_lo: f64, s_hi: f64) -> Result<BandSummary> {
    let points = sample_band(alpha, count, seed, s_lo, s_hi)?;
    let samples = points.iter().map(|&p| supersolution_sample(alpha, p)).collect::<Result<Vec<_>>>()?;
    let max = |f: &dyn Fn(&SupersolutionSample) -> f64| samples.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
    Ok(BandSummary {
        alpha,
        max_residual: max(&|s| s.residual),
        max_fd_relative_error: samples.iter().filter_map(|s| s.fd_relative_error()).fold(0.0, f64::max),
        fd_checked: samples.iter().filter(|s| s.det_ratio_fd.is_some()).count(),
        max_identity_gap: max(&|s| s.identity_gap),
        max_foot_identity_gap: max(&|s| s.foot_identity_gap),
        samples,
    })
}

/// Barrier translated to touch the horizontal graph from above.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Contact {
    pub t: f64,
    /// Smallest `ε + φ(x, z - t) - h(x, z)` over the compared nodes.
    pub gap: f64,
    pub at: Point,
}

/// Smallest gap between the cut barrier `ε + φ_α(x, z - t)`, `x <= 1 - 4α`,
/// and `h` over interior chart nodes inside the translated band; `None` when
/// the band misses the chart.
pub fn barrier_gap(hg: &HorizontalGraph, params: &BarrierParams) -> Option<(f64, Point)> {
    let g = hg.h.grid();
    let a = params.alpha;
    let mut best: Option<(f64, Point)> = None;
    for k in 0..g.len() {
        if g.kind_at(k) != NodeKind::Interior {
            continue;
        }
        let (i, j) = g.coords(k);
        let p = g.point(i, j);
        if p.x > 1.0 - 4.0 * a {
            continue;
        }
        let Ok(pr) = project(a, [p.x, p.y - params.t]) else { continue };
        if pr.d > 2.0 * a || (pr.d == 0.0 && !inside(a, [p.x, p.y - params.t])) {
            continue;
        }
        if pr.d == 0.0 {
            continue;
        }
        let bar = params.epsilon - 1.0 + 2.0 * a - (4.0 * a * a - pr.d * pr.d).max(0.0).sqrt();
        let gap = bar - hg.h.values()[k];
        if best.is_none_or(|(b, _)| gap < b) {
            best = Some((gap, p));
        }
    }
    best
}

/// Slides the barrier down in `z` from `t_hi`, where it clears `h`, to the
/// first contact; bisection to `tol` on the sign of the gap.
pub fn slide_to_contact(hg: &HorizontalGraph, alpha: f64, epsilon: f64, t_lo: f64, t_hi: f64, tol: f64) -> Result<Contact> {
    let gap_at = |t: f64| -> Result<Option<(f64, Point)>> { Ok(barrier_gap(hg, &BarrierParams::new(alpha, epsilon, t)?)) };
    let clear = |t: f64| -> Result<bool> { Ok(gap_at(t)?.is_none_or(|(g, _)| g > 0.0)) };
    if !clear(t_hi)? || clear(t_lo)? {
        return Err(Error::InvalidParams(format!("no contact between t = {t_lo} and t = {t_hi}")));
    }
    let (mut lo, mut hi) = (t_lo, t_hi);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if clear(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let (gap, at) = gap_at(lo)?.ok_or_else(|| Error::InvalidParams("contact left the chart".into()))?;
    Ok(Contact { t: lo, gap, at })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curve_vanishes_at_strip_center() {
        for a in [0.05, 0.1, 0.15] {
            assert!(grim_reaper(a, strip_center(a)).unwrap().abs() < 1e-15);
        }
    }

    #[test]
    fn slope_at_front_cut() {
        for a in [0.05, 0.1, 0.15] {
            let want = 1.0 / (std::f64::consts::PI * a * a / 2.0).tan();
            let got = grim_reaper_slope(a, 1.0 - 4.0 * a).unwrap();
            assert!((got - want).abs() < 1e-9 * want, "{got} vs {want}");
        }
    }

    #[test]
    fn quarter_turn_value() {
        let a = 0.1;
        let x = strip_center(a) + 0.25 * std::f64::consts::PI / rate(a);
        let want = 2.0 / (a * std::f64::consts::PI) * std::f64::consts::LN_2 / 2.0;
        assert!((grim_reaper(a, x).unwrap() - want).abs() < 1e-13);
        assert!((want - 2.2064).abs() < 1e-4);
    }

    #[test]
    fn asymptotes_are_rejected() {
        let (lo, hi) = strip(0.1);
        assert!(matches!(grim_reaper(0.1, hi), Err(Error::Asymptote(_))));
        assert!(matches!(grim_reaper(0.1, lo - 1.0), Err(Error::Asymptote(_))));
    }

    #[test]
    fn distance_below_center() {
        let a = 0.1;
        let c = strip_center(a);
        let (d, foot) = distance_to_region(a, [c, -1.0]).unwrap();
        assert!((d - 1.0).abs() < 1e-12);
        assert!((foot[0] - c).abs() < 1e-9 && foot[1].abs() < 1e-12);
        let (d, foot) = distance_to_region(a, [c, 3.0]).unwrap();
        assert_eq!((d, foot), (0.0, [c, 3.0]));
    }

    #[test]
    fn phi_at_band_levels() {
        let a = 0.1;
        let c = strip_center(a);
        let e = phi(a, [c, -a]).unwrap();
        assert!((e.phi - (-1.0 + 2.0 * a - 3f64.sqrt() * a)).abs() < 1e-14);
        assert!((e.phi_v - 1.0 / 3f64.sqrt()).abs() < 1e-12);
        let e = phi(a, [c, 0.0]).unwrap();
        assert_eq!(e.phi, -1.0);
        let e = phi(a, [c, -2.0 * a]).unwrap();
        assert!((e.phi - (-1.0 + 2.0 * a)).abs() < 1e-14);
        assert!(e.singular || e.phi_v > 1e6);
        assert!(matches!(phi(a, [c, -0.3]), Err(Error::OutsideBand { .. })));
        assert!(matches!(phi(a, [c, 0.5]), Err(Error::InsideRegion(..))));
    }

    #[test]
    fn residual_at_symmetric_foot() {
        let a = 0.1;
        let c = strip_center(a);
        let d = 0.7 * 2.0 * a;
        let k0 = rate(a);
        let phi_v = d / (4.0 * a * a - d * d).sqrt();
        // Level-set curvature k0/(1 + d k0) against the bound k0.
        let want = phi_v / (2.0 * a) * (k0 / (1.0 + d * k0) - k0);
        let got = supersolution_residual(a, [c, -d]).unwrap();
        assert!((got - want).abs() < 1e-12 * want.abs(), "{got} vs {want}");
        assert!(got < 0.0);
    }

    #[test]
    fn residual_needs_open_band() {
        let c = strip_center(0.1);
        assert!(matches!(supersolution_residual(0.1, [c, 0.0]), Err(Error::FrameUndefined(_))));
    }

    #[test]
    fn sampled_points_lie_in_the_band() {
        let pts = sample_band(0.1, 200, 3, 0.01, 0.99).unwrap();
        for p in pts {
            let (d, _) = distance_to_region(0.1, p).unwrap();
            assert!(d > 0.0 && d < 0.2);
        }
    }
}
