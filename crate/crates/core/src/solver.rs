//! Capped-Dirichlet continuation for the translator equation
//! `det D²u / (1+|Du|²)^{3/2} = 2π / area(Ω)` with the wide-stencil monotone
//! discretization of the Monge-Ampère operator.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{ConvexDomain, Point};
use crate::error::{Error, Result};
use crate::grid::{Grid, NodeKind, ScalarField, StencilSet, CLAMP_FLOOR};
use crate::numerics::{integrate, MonotoneCubic};
use crate::sparse::{bicgstab, Csr};

pub const DAMPING_FLOOR: f64 = 1.0 / 64.0;
/// Continuation stop region: nodes at least this far from the boundary.
pub const INTERIOR_REGION: f64 = 0.1;
/// Width, in cells, of the strip along the boundary band where the operator
/// stays monotone: first-order upwind gradient and three-point second
/// differences. Farther in, centered gradient and five-point differences.
const UPWIND_CELLS: f64 = 4.0;
/// Below this a directional second difference counts as degenerate in the
/// Newton linearization.
const DEGENERATE_DIFFERENCE: f64 = 1e-8;
/// Newton budget for the accurate stage after the monotone one converged.
const REFINE_ITERS: usize = 60;
/// The accurate stage gives up after this many iterations without halving
/// its best residual.
const STALL_ITERS: usize = 12;
pub const CONVEXITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Newton,
    ParabolicRelaxation,
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "newton" => Ok(Scheme::Newton),
            "parabolic_relaxation" | "parabolic" => Ok(Scheme::ParabolicRelaxation),
            _ => Err(Error::InvalidConfig(format!(
                "unknown scheme {s:?} (expected newton or parabolic_relaxation)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub cap_sequence: Vec<f64>,
    pub scheme: Scheme,
    pub residual_tol: f64,
    pub interior_delta_tol: f64,
    pub max_newton_iters: usize,
    pub damping: f64,
    pub time_step_safety: f64,
    pub max_relaxation_steps: usize,
    pub stencil_width: i32,
    #[serde(skip)]
    pub verbose: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            cap_sequence: (1..=10).map(|k| f64::from(1 << k)).collect(),
            scheme: Scheme::Newton,
            residual_tol: 1e-8,
            interior_delta_tol: 1e-4,
            max_newton_iters: 200,
            damping: 1.0,
            time_step_safety: 0.4,
            max_relaxation_steps: 200_000,
            stencil_width: 3,
            verbose: false,
        }
    }
}

impl SolverConfig {
    /// Caps `2, 4, ..., up_to`.
    pub fn with_caps_to(up_to: f64) -> Self {
        let mut cfg = Self::default();
        cfg.cap_sequence.retain(|&m| m <= up_to);
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if self.cap_sequence.is_empty() {
            return Err(Error::InvalidConfig("cap sequence is empty".into()));
        }
        if self.cap_sequence.iter().any(|&m| !(m > 0.0) || !m.is_finite())
            || self.cap_sequence.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(Error::InvalidConfig(
                "cap sequence must be positive and strictly increasing".into(),
            ));
        }
        for (name, v) in [
            ("residual_tol", self.residual_tol),
            ("interior_delta_tol", self.interior_delta_tol),
            ("time_step_safety", self.time_step_safety),
        ] {
            if !(v > 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidConfig("damping must lie in (0, 1]".into()));
        }
        if self.max_newton_iters == 0 {
            return Err(Error::InvalidConfig("max_newton_iters must be positive".into()));
        }
        if self.stencil_width < 1 {
            return Err(Error::InvalidConfig("stencil_width must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SolverResult {
    /// Final field, normalized so that `u(0,0) = 0`.
    pub u: ScalarField,
    pub converged: bool,
    pub final_residual: f64,
    pub caps_used: Vec<f64>,
    pub iterations_per_cap: Vec<usize>,
    pub interior_delta_history: Vec<f64>,
    /// Un-normalized solution for every cap used.
    pub cap_solutions: Vec<ScalarField>,
    pub convexity_clamped: bool,
    pub fallback_used: bool,
    /// Solved on the monotone scheme throughout (first-order gradient,
    /// three-point differences) because the accurate stage failed.
    pub monotone_only: bool,
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolverSummary {
    pub scheme: Scheme,
    pub converged: bool,
    pub final_residual: f64,
    pub caps_used: Vec<f64>,
    pub iterations_per_cap: Vec<usize>,
    pub interior_delta_history: Vec<f64>,
    pub convexity_clamped: bool,
    pub fallback_used: bool,
    pub monotone_only: bool,
    pub diagnostics: Vec<String>,
}

impl SolverResult {
    pub fn summary(&self, scheme: Scheme) -> SolverSummary {
        SolverSummary {
            scheme,
            converged: self.converged,
            final_residual: self.final_residual,
            caps_used: self.caps_used.clone(),
            iterations_per_cap: self.iterations_per_cap.clone(),
            interior_delta_history: self.interior_delta_history.clone(),
            convexity_clamped: self.convexity_clamped,
            fallback_used: self.fallback_used,
            monotone_only: self.monotone_only,
            diagnostics: self.diagnostics.clone(),
        }
    }
}

/// Slope `u'(r)` of the rotationally symmetric translator over the disk of
/// radius `R`.
pub fn radial_profile(radius: f64, r: f64) -> Result<f64> {
    if !(r >= 0.0 && r < radius) {
        return Err(Error::BlowUpRadius { r, radius });
    }
    let q = 1.0 - (r / radius).powi(2);
    Ok(((1.0 / (q * q)) - 1.0).max(0.0).sqrt())
}

/// Height `u(r) - u(0)` of the disk translator, by quadrature of the slope.
pub fn radial_height(radius: f64, r: f64) -> Result<f64> {
    radial_profile(radius, r)?;
    Ok(integrate(
        |s| radial_profile(radius, s).unwrap_or(f64::INFINITY),
        0.0,
        r,
        1e-13,
    ))
}

#[derive(Debug, Clone, Copy)]
struct Pair {
    ep: usize,
    em: usize,
    fp: usize,
    fm: usize,
    inv_le: f64,
    inv_lf: f64,
    /// Doubled offsets `2e`, `-2e`, `2f`, `-2f`, `usize::MAX` when not live.
    far: [usize; 4],
}

#[derive(Debug, Clone)]
struct NodeStencil {
    k: usize,
    pairs: Vec<Pair>,
    /// x+, x-, y+, y-
    axis: [usize; 4],
}

#[derive(Debug, Clone, Copy)]
struct NodeEval {
    ma: f64,
    pair: usize,
    a: f64,
    b: f64,
    w: f64,
    ux: f64,
    uy: f64,
    /// Linear stencils of `ux` and `uy`; unused slots hold `usize::MAX`.
    grad: [[(usize, f64); 2]; 2],
}

/// Discrete operator on one grid: unknowns are the interior nodes, band
/// nodes carry Dirichlet data.
struct Discretization {
    grid: Arc<Grid>,
    nodes: Vec<NodeStencil>,
    unknown_of: Vec<usize>,
    rhs: f64,
    inv_2h: f64,
    upwind: bool,
    hybrid: f64,
}

impl Discretization {
    fn new(grid: Arc<Grid>, stencils: &StencilSet, rhs: f64) -> Result<Self> {
        let h = grid.h();
        let mut nodes = Vec::new();
        let mut unknown_of = vec![usize::MAX; grid.len()];
        let live = |k: Option<usize>| k.filter(|&k| grid.kind_at(k) != NodeKind::Exterior);
        for k in 0..grid.len() {
            if grid.kind_at(k) != NodeKind::Interior {
                continue;
            }
            let (i, j) = grid.coords(k);
            let mut pairs = Vec::new();
            for &((ex, ey), (fx, fy)) in stencils.pairs() {
                let ends = [
                    live(grid.offset(i, j, ex, ey)),
                    live(grid.offset(i, j, -ex, -ey)),
                    live(grid.offset(i, j, fx, fy)),
                    live(grid.offset(i, j, -fx, -fy)),
                ];
                if let [Some(ep), Some(em), Some(fp), Some(fm)] = ends {
                    let far = [(2 * ex, 2 * ey), (-2 * ex, -2 * ey), (2 * fx, 2 * fy), (-2 * fx, -2 * fy)]
                        .map(|(di, dj)| live(grid.offset(i, j, di, dj)).unwrap_or(usize::MAX));
                    pairs.push(Pair {
                        far,
                        ep,
                        em,
                        fp,
                        fm,
                        inv_le: 1.0 / (f64::from(ex * ex + ey * ey) * h * h),
                        inv_lf: 1.0 / (f64::from(fx * fx + fy * fy) * h * h),
                    });
                }
            }
            if pairs.is_empty() {
                return Err(Error::IsolatedNode(i, j));
            }
            let axis = [(1, 0), (-1, 0), (0, 1), (0, -1)]
                .map(|(di, dj)| live(grid.offset(i, j, di, dj)).expect("interior nodes have axis neighbors"));
            unknown_of[k] = nodes.len();
            nodes.push(NodeStencil { k, pairs, axis });
        }
        Ok(Self {
            inv_2h: 0.5 / h,
            grid,
            nodes,
            unknown_of,
            rhs,
            upwind: false,
            hybrid: UPWIND_CELLS * h,
        })
    }

    fn eval(&self, u: &[f64], n: &NodeStencil) -> NodeEval {
        let c = u[n.k];
        let mut best = NodeEval {
            ma: f64::INFINITY,
            pair: 0,
            a: 0.0,
            b: 0.0,
            w: 1.0,
            ux: 0.0,
            uy: 0.0,
            grad: [[(usize::MAX, 0.0); 2]; 2],
        };
        let high = self.high_order(n);
        for (idx, p) in n.pairs.iter().enumerate() {
            let (a, b) = if high {
                (
                    (16.0 * (u[p.ep] + u[p.em]) - u[p.far[0]] - u[p.far[1]] - 30.0 * c) * p.inv_le / 12.0,
                    (16.0 * (u[p.fp] + u[p.fm]) - u[p.far[2]] - u[p.far[3]] - 30.0 * c) * p.inv_lf / 12.0,
                )
            } else {
                ((u[p.ep] - 2.0 * c + u[p.em]) * p.inv_le, (u[p.fp] - 2.0 * c + u[p.fm]) * p.inv_lf)
            };
            let ma = a.max(CLAMP_FLOOR) * b.max(CLAMP_FLOOR);
            if ma < best.ma {
                best = NodeEval { ma, pair: idx, a, b, ..best };
            }
        }
        let h = 0.5 / self.inv_2h;
        let first_order = !high;
        for axis in 0..2 {
            let (plus, minus) = (n.axis[2 * axis], n.axis[2 * axis + 1]);
            let (val, terms) = if first_order {
                // Monotone magnitude max(u - u_left, u - u_right, 0) / h.
                let (dp, dm) = (c - u[plus], c - u[minus]);
                let (g, nb) = if dp >= dm { (dp, plus) } else { (dm, minus) };
                if g > 0.0 {
                    (g / h, [(n.k, 1.0 / h), (nb, -1.0 / h)])
                } else {
                    (0.0, [(usize::MAX, 0.0); 2])
                }
            } else {
                ((u[plus] - u[minus]) * self.inv_2h, [(plus, self.inv_2h), (minus, -self.inv_2h)])
            };
            best.grad[axis] = terms;
            if axis == 0 {
                best.ux = val;
            } else {
                best.uy = val;
            }
        }
        best.w = (1.0 + best.ux * best.ux + best.uy * best.uy).sqrt();
        best
    }

    /// Fourth-order second differences away from the boundary strip, where
    /// every doubled offset is live.
    fn high_order(&self, n: &NodeStencil) -> bool {
        !self.upwind
            && self.grid.boundary_distance(n.k) >= self.hybrid
            && n.pairs.iter().all(|p| p.far.iter().all(|&k| k != usize::MAX))
    }

    fn residual_of(&self, e: &NodeEval) -> f64 {
        e.ma / (e.w * e.w * e.w) - self.rhs
    }

    fn log_residual_of(&self, e: &NodeEval) -> f64 {
        e.ma.ln() - 3.0 * e.w.ln() - self.rhs.ln()
    }

    fn log_residual(&self, u: &[f64]) -> Vec<f64> {
        self.nodes
            .par_iter()
            .map(|n| self.log_residual_of(&self.eval(u, n)))
            .collect()
    }

    fn residual(&self, u: &[f64]) -> Vec<f64> {
        self.nodes
            .par_iter()
            .map(|n| self.residual_of(&self.eval(u, n)))
            .collect()
    }

    /// Jacobian of the logarithmic residual minus `inv_dt` on the diagonal.
    fn jacobian(&self, u: &[f64], inv_dt: f64) -> (Csr, Vec<f64>) {
        let rows: Vec<(Vec<(usize, f64)>, f64)> = self
            .nodes
            .par_iter()
            .map(|n| {
                let e = self.eval(u, n);
                let p = n.pairs[e.pair];
                let (ac, bc) = (e.a.max(CLAMP_FLOOR), e.b.max(CLAMP_FLOOR));
                let mut row = Vec::with_capacity(9);
                let mut push = |k: usize, v: f64| {
                    let col = self.unknown_of[k];
                    if col != usize::MAX {
                        row.push((col, v));
                    }
                };
                // Logarithmic form ln(MA) - 3 ln W - ln f. The clamp is
                // differentiated as the identity so rows stay diagonally
                // dominant. Where a difference is clamped the logarithm is
                // useless for Newton (its slope is 1/floor), so the row
                // switches to the relative form MA / (f W^3) - 1, which has
                // the same zero.
                let w3 = e.w * e.w * e.w;
                let relative = e.a.min(e.b) < DEGENERATE_DIFFERENCE;
                let (sa, sb, sw) = if relative {
                    let q = 1.0 / (self.rhs * w3);
                    (bc * q, ac * q, -3.0 * ac * bc * q / (e.w * e.w))
                } else {
                    (1.0 / ac, 1.0 / bc, -3.0 / (e.w * e.w))
                };
                let da = p.inv_le * sa;
                let db = p.inv_lf * sb;
                if self.high_order(n) {
                    for (k, v) in [(p.ep, da), (p.em, da), (p.fp, db), (p.fm, db)] {
                        push(k, v * 16.0 / 12.0);
                    }
                    for (k, v) in [(p.far[0], da), (p.far[1], da), (p.far[2], db), (p.far[3], db)] {
                        push(k, -v / 12.0);
                    }
                    push(n.k, -2.5 * (da + db) - inv_dt);
                } else {
                    push(p.ep, da);
                    push(p.em, da);
                    push(p.fp, db);
                    push(p.fm, db);
                    push(n.k, -2.0 * (da + db) - inv_dt);
                }
                for (g, terms) in [(e.ux, e.grad[0]), (e.uy, e.grad[1])] {
                    for (k, c) in terms {
                        if k != usize::MAX {
                            push(k, sw * g * c);
                        }
                    }
                }
                let r = if relative {
                    e.ma / (self.rhs * w3) - 1.0
                } else {
                    self.log_residual_of(&e)
                };
                (row, r)
            })
            .collect();
        let (rows, res): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
        (Csr::from_rows(rows), res)
    }

    fn center_coefficient_max(&self, u: &[f64]) -> f64 {
        self.nodes
            .par_iter()
            .map(|n| {
                let e = self.eval(u, n);
                let p = n.pairs[e.pair];
                let w3 = e.w * e.w * e.w;
                2.0 * (e.b.max(CLAMP_FLOOR) * p.inv_le + e.a.max(CLAMP_FLOOR) * p.inv_lf) / w3
            })
            .reduce(|| 0.0, f64::max)
    }

    /// Minimum second difference along the node stencils.
    fn stencil_convexity(&self, u: &[f64]) -> f64 {
        self.nodes
            .iter()
            .flat_map(|n| {
                n.pairs.iter().flat_map(move |p| {
                    [
                        (u[p.ep] - 2.0 * u[n.k] + u[p.em]) * p.inv_le,
                        (u[p.fp] - 2.0 * u[n.k] + u[p.fm]) * p.inv_lf,
                    ]
                })
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Lowers unknowns onto midpoints of their stencil chords until every
    /// directional second difference of the node stencils is nonnegative.
    /// Returns whether any value moved.
    fn convexity_clamp(&self, u: &mut [f64]) -> bool {
        let mut moved = false;
        for _ in 0..10_000 {
            let mut changed = false;
            for n in &self.nodes {
                let mut best = u[n.k];
                for p in &n.pairs {
                    best = best.min(0.5 * (u[p.ep] + u[p.em])).min(0.5 * (u[p.fp] + u[p.fm]));
                }
                if best < u[n.k] {
                    u[n.k] = best;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
            moved = true;
        }
        moved
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Minimum directional second difference over interior nodes and the
/// directions of each node's own stencil: pairs `(e, e⊥)` with all four
/// endpoints live, as in `monotone_ma`.
pub fn min_directional_second_difference(u: &ScalarField, stencils: &StencilSet) -> f64 {
    second_difference_min(u, stencils, true)
}

/// Same over every lattice direction of the stencil set with live
/// endpoints, including directions whose orthogonal partner is cut off by
/// the boundary and which the scheme therefore does not constrain.
pub fn min_lattice_second_difference(u: &ScalarField, stencils: &StencilSet) -> f64 {
    second_difference_min(u, stencils, false)
}

fn second_difference_min(u: &ScalarField, stencils: &StencilSet, paired: bool) -> f64 {
    let g = u.grid();
    (0..g.len())
        .into_par_iter()
        .filter(|&k| g.kind_at(k) == NodeKind::Interior)
        .map(|k| {
            let (i, j) = g.coords(k);
            let mut m = f64::INFINITY;
            for &(e, f) in stencils.pairs() {
                let (a, b) = (u.directional_second_difference(i, j, e), u.directional_second_difference(i, j, f));
                match (a, b) {
                    (Ok(a), Ok(b)) => m = m.min(a).min(b),
                    (Ok(v), Err(_)) | (Err(_), Ok(v)) if !paired => m = m.min(v),
                    _ => {}
                }
            }
            m
        })
        .reduce(|| f64::INFINITY, f64::min)
}

struct CapOutcome {
    iterations: usize,
    residual: f64,
    converged: bool,
    clamped: bool,
    fallback: bool,
    /// Accepted on the monotone scheme after the accurate one failed.
    monotone_only: bool,
}

struct CapSolver<'a> {
    disc: &'a Discretization,
    monotone: &'a Discretization,
    cfg: &'a SolverConfig,
    cap: f64,
}

impl CapSolver<'_> {
    fn log(&self, iter: usize, residual: f64, damping: f64, linear: usize) {
        if self.cfg.verbose {
            println!(
                "cap={} iter={} residual={:.6e} damping={} linear={}",
                self.cap, iter, residual, damping, linear
            );
        }
    }

    fn relax(&self, disc: &Discretization, u: &mut [f64], steps: usize) -> f64 {
        let coef = disc.center_coefficient_max(u);
        let dt = self.cfg.time_step_safety / coef.max(1e-300);
        let mut res = disc.residual(u);
        for _ in 0..steps {
            if max_abs(&res) <= self.cfg.residual_tol {
                break;
            }
            for (n, r) in disc.nodes.iter().zip(&res) {
                u[n.k] += dt * r;
            }
            res = disc.residual(u);
        }
        max_abs(&res)
    }

    /// Damped Newton on the logarithmic form of the scheme, globalized by
    /// pseudo-transient continuation; acceptance is measured on the plain
    /// residual.
    fn newton_on(&self, disc: &Discretization, u: &mut Vec<f64>, max_iters: usize, relax_ok: bool) -> CapOutcome {
        let tol = self.cfg.residual_tol;
        let mut out = CapOutcome {
            iterations: 0,
            residual: f64::INFINITY,
            converged: false,
            clamped: false,
            fallback: false,
            monotone_only: false,
        };
        let mut log_res = disc.log_residual(u);
        let h = disc.grid.h();
        let inv_dt0 = 1.0 / (h * h);
        let mut inv_dt = 0.0;
        let mut damping = self.cfg.damping;
        let mut best = (f64::INFINITY, 0);
        for iter in 0..max_iters {
            out.iterations = iter;
            out.residual = max_abs(&disc.residual(u));
            if out.residual <= tol {
                out.converged = true;
                return out;
            }
            if out.residual < 0.5 * best.0 {
                best = (out.residual, iter);
            } else if !relax_ok && iter - best.1 >= STALL_ITERS {
                return out;
            }
            let (jac, r) = disc.jacobian(u, inv_dt);
            let rhs: Vec<f64> = r.iter().map(|x| -x).collect();
            let mut step = vec![0.0; rhs.len()];
            // Inexact Newton: the linear tolerance follows the nonlinear
            // residual down to 1e-10.
            let forcing = (0.1 * max_abs(&log_res)).clamp(1e-10, 1e-3);
            let linear = bicgstab(&jac, &rhs, &mut step, forcing, 4000);

            let merit = l2(&log_res);
            let mut t = damping;
            let mut accepted = None;
            loop {
                let mut trial = u.clone();
                for (n, s) in disc.nodes.iter().zip(&step) {
                    trial[n.k] += t * s;
                }
                let trial_res = disc.log_residual(&trial);
                if l2(&trial_res) < merit {
                    accepted = Some((trial, trial_res));
                    break;
                }
                if t <= DAMPING_FLOOR {
                    break;
                }
                t = (t * 0.5).max(DAMPING_FLOOR);
            }
            self.log(iter + 1, out.residual, t, linear.iterations);
            match accepted {
                Some((trial, trial_res)) => {
                    *u = trial;
                    log_res = trial_res;
                    damping = (t * 2.0).min(self.cfg.damping);
                    if t == 1.0 {
                        inv_dt *= 0.1;
                    }
                }
                None => {
                    inv_dt = (inv_dt * 10.0).max(1e-2 * inv_dt0);
                    if inv_dt > 1e6 * inv_dt0 {
                        if !relax_ok {
                            out.iterations = iter + 1;
                            return out;
                        }
                        out.fallback = true;
                        let before = out.residual;
                        let after = self.relax(disc, u, 200);
                        log_res = disc.log_residual(u);
                        if !(after < before) {
                            out.iterations = iter + 1;
                            out.residual = after;
                            return out;
                        }
                        inv_dt = inv_dt0;
                    }
                }
            }
        }
        out.iterations = max_iters;
        out.residual = max_abs(&disc.residual(u));
        out.converged = out.residual <= tol;
        out
    }

    /// Newton on the monotone scheme, then a bounded number of Newton steps
    /// on the accurate scheme. When the second stage does not converge the
    /// monotone solution is kept and the outcome says so. Warm starts that
    /// are already close skip the first stage.
    fn newton(&self, u: &mut Vec<f64>) -> CapOutcome {
        let max_iters = self.cfg.max_newton_iters;
        if std::ptr::eq(self.disc, self.monotone) {
            let mut out = self.newton_on(self.monotone, u, max_iters, true);
            out.monotone_only = true;
            return out;
        }
        let mut pre = None;
        if max_abs(&self.disc.residual(u)) > 1e-2 {
            let mut staged = u.clone();
            let out = self.newton_on(self.monotone, &mut staged, max_iters, true);
            if out.converged {
                *u = staged;
            }
            pre = Some(out);
        }
        let mut refined = u.clone();
        let mut out = self.newton_on(self.disc, &mut refined, REFINE_ITERS, false);
        let pre_iterations = pre.as_ref().map_or(0, |p| p.iterations);
        out.iterations += pre_iterations;
        if out.converged {
            *u = refined;
            out.fallback |= pre.is_some_and(|p| p.fallback);
            return out;
        }
        match pre {
            Some(p) if p.converged => CapOutcome {
                iterations: out.iterations,
                monotone_only: true,
                ..p
            },
            _ => {
                *u = refined;
                out
            }
        }
    }

    fn relaxation(&self, u: &mut [f64]) -> CapOutcome {
        let mut steps = 0;
        let mut residual = max_abs(&self.disc.residual(u));
        let chunk = 1000;
        while steps < self.cfg.max_relaxation_steps && residual > self.cfg.residual_tol {
            residual = self.relax(self.disc, u, chunk);
            steps += chunk;
            self.log(steps, residual, 1.0, 0);
        }
        let mut field = u.to_vec();
        let clamped = self.disc.convexity_clamp(&mut field);
        if clamped {
            u.copy_from_slice(&field);
            residual = max_abs(&self.disc.residual(u));
        }
        CapOutcome {
            iterations: steps,
            residual,
            converged: residual <= self.cfg.residual_tol,
            clamped,
            fallback: false,
            monotone_only: std::ptr::eq(self.disc, self.monotone),
        }
    }
}

/// Initial iterate: the disk profile of equal area composed with the gauge
/// of the domain, shifted so the band sits at the cap.
fn initial_guess(domain: &ConvexDomain, grid: &Grid, area: f64, cap: f64) -> Result<Vec<f64>> {
    let radius = (area / std::f64::consts::PI).sqrt();
    // Interior nodes sit at least two cells inside; the band is matched at
    // gauge level one cell inside.
    let rho_max = 1.0 - grid.h() / radius;
    let samples = 2048;
    let xs: Vec<f64> = (0..=samples).map(|k| rho_max * k as f64 / samples as f64).collect();
    let mut ys = Vec::with_capacity(xs.len());
    let mut acc = 0.0;
    ys.push(0.0);
    for w in xs.windows(2) {
        acc += integrate(|s| radial_profile(1.0, s).unwrap_or(0.0), w[0], w[1], 1e-12);
        ys.push(acc);
    }
    let top = radius * acc;
    let profile = MonotoneCubic::new(xs, ys);
    // Gauges with straight level pieces leave the profile flat along them; a
    // paraboloid keeps every direction strictly convex.
    let r2max = (0..grid.len())
        .filter(|&k| grid.kind_at(k) != NodeKind::Exterior)
        .map(|k| {
            let (i, j) = grid.coords(k);
            let p = grid.point(i, j);
            p.x * p.x + p.y * p.y
        })
        .fold(0.0, f64::max);
    let mut u = vec![f64::NAN; grid.len()];
    for (k, slot) in u.iter_mut().enumerate() {
        match grid.kind_at(k) {
            NodeKind::Exterior => {}
            NodeKind::BoundaryBand => *slot = cap,
            NodeKind::Interior => {
                let (i, j) = grid.coords(k);
                let p = grid.point(i, j);
                let rho = domain.gauge(p)?.min(rho_max);
                *slot = cap + radius * profile.eval(rho).0 - top + 0.5 * (p.x * p.x + p.y * p.y - r2max);
            }
        }
    }
    Ok(u)
}

/// Solves the translator equation by capped-Dirichlet continuation.
pub fn solve_translator(domain: &ConvexDomain, grid: Arc<Grid>, cfg: &SolverConfig) -> Result<SolverResult> {
    cfg.validate()?;
    let origin = grid
        .node_at(Point::new(0.0, 0.0))
        .filter(|&k| grid.kind_at(k) == NodeKind::Interior)
        .ok_or_else(|| Error::InvalidGrid("the origin is not an interior grid node".into()))?;
    let area = domain.area()?;
    let rhs = 2.0 * std::f64::consts::PI / area;
    let stencils = StencilSet::new(cfg.stencil_width)?;
    let disc = Discretization::new(grid.clone(), &stencils, rhs)?;
    let mut monotone = Discretization::new(grid.clone(), &stencils, rhs)?;
    monotone.upwind = true;
    let interior_region: Vec<bool> = (0..grid.len())
        .map(|k| grid.kind_at(k) != NodeKind::Exterior && grid.boundary_distance(k) >= INTERIOR_REGION)
        .collect();

    let mut result = SolverResult {
        u: ScalarField::from_values(grid.clone(), vec![f64::NAN; grid.len()])?,
        converged: false,
        final_residual: f64::INFINITY,
        caps_used: Vec::new(),
        iterations_per_cap: Vec::new(),
        interior_delta_history: Vec::new(),
        cap_solutions: Vec::new(),
        convexity_clamped: false,
        fallback_used: false,
        monotone_only: false,
        diagnostics: Vec::new(),
    };
    let mut u: Vec<f64> = Vec::new();
    let mut previous: Option<Vec<f64>> = None;
    let mut last_ok = false;
    let mut monotone_only = false;
    for (idx, &cap) in cfg.cap_sequence.iter().enumerate() {
        if idx == 0 {
            u = initial_guess(domain, &grid, area, cap)?;
        } else {
            // Warm start: raise the previous solution by the cap increment.
            let shift = cap - cfg.cap_sequence[idx - 1];
            for (k, v) in u.iter_mut().enumerate() {
                if grid.kind_at(k) != NodeKind::Exterior {
                    *v += shift;
                }
            }
        }
        for (k, v) in u.iter_mut().enumerate() {
            if grid.kind_at(k) == NodeKind::BoundaryBand {
                *v = cap;
            }
        }
        let solver = CapSolver {
            disc: if monotone_only { &monotone } else { &disc },
            monotone: &monotone,
            cfg,
            cap,
        };
        let outcome = match cfg.scheme {
            Scheme::Newton => {
                let mut attempt = u.clone();
                let mut out = solver.newton(&mut attempt);
                if out.converged {
                    if solver.disc.stencil_convexity(&attempt) < -CONVEXITY_TOL {
                        solver.disc.convexity_clamp(&mut attempt);
                        out.clamped = true;
                        out.residual = max_abs(&solver.disc.residual(&attempt));
                        out.converged = out.residual <= cfg.residual_tol;
                    }
                    u = attempt;
                    out
                } else {
                    result
                        .diagnostics
                        .push(format!("cap {cap}: newton stalled at residual {:.3e}", out.residual));
                    let mut relaxed = u.clone();
                    let mut r = solver.relaxation(&mut relaxed);
                    r.fallback = true;
                    r.iterations += out.iterations;
                    if r.residual < out.residual {
                        u = relaxed;
                        r
                    } else {
                        u = attempt;
                        CapOutcome { fallback: true, ..out }
                    }
                }
            }
            Scheme::ParabolicRelaxation => solver.relaxation(&mut u),
        };
        result.caps_used.push(cap);
        result.iterations_per_cap.push(outcome.iterations);
        result.convexity_clamped |= outcome.clamped;
        result.fallback_used |= outcome.fallback;
        if outcome.monotone_only && !monotone_only {
            monotone_only = true;
            result
                .diagnostics
                .push(format!("cap {cap}: accurate stage did not converge, monotone scheme kept"));
        }
        result.monotone_only = monotone_only;
        result.final_residual = outcome.residual;
        last_ok = outcome.converged;
        result
            .cap_solutions
            .push(ScalarField::from_values(grid.clone(), u.clone())?);
        if !outcome.converged {
            result.diagnostics.push(format!(
                "cap {cap}: not converged, residual {:.3e} after {} iterations",
                outcome.residual, outcome.iterations
            ));
            break;
        }
        let shift = u[origin];
        let normalized: Vec<f64> = u.iter().map(|v| v - shift).collect();
        if let Some(prev) = &previous {
            let delta = normalized
                .iter()
                .zip(prev)
                .enumerate()
                .filter(|(k, _)| interior_region[*k])
                .map(|(_, (a, b))| (a - b).abs())
                .fold(0.0, f64::max);
            result.interior_delta_history.push(delta);
            if delta <= cfg.interior_delta_tol {
                break;
            }
        }
        previous = Some(normalized);
    }
    let shift = u[origin];
    let normalized = u
        .iter()
        .enumerate()
        .map(|(k, v)| if grid.kind_at(k) == NodeKind::Exterior { f64::NAN } else { v - shift })
        .collect();
    result.u = ScalarField::from_values(grid.clone(), normalized)?;
    let delta_ok = match result.interior_delta_history.last() {
        Some(&d) => d <= cfg.interior_delta_tol,
        None => cfg.cap_sequence.len() == 1,
    };
    result.converged = last_ok && delta_ok && result.final_residual <= cfg.residual_tol;
    Ok(result)
}

/// Normalized pointwise defect of the soliton identity
/// `K = (2π/area) <n, e3>` on interior nodes: `|K - f tilt| / f`. Band and
/// exterior nodes hold NaN.
pub fn soliton_residual(u: &ScalarField, domain: &ConvexDomain) -> Result<ScalarField> {
    let grid = u.grid().clone();
    let f = 2.0 * std::f64::consts::PI / domain.area()?;
    let values = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            if grid.kind_at(k) != NodeKind::Interior {
                return f64::NAN;
            }
            let (i, j) = grid.coords(k);
            let (Ok(g), Ok(hs)) = (u.gradient(i, j), u.hessian(i, j)) else {
                return f64::NAN;
            };
            let w2 = 1.0 + g[0] * g[0] + g[1] * g[1];
            let det = hs[0][0] * hs[1][1] - hs[0][1] * hs[1][0];
            (det / (w2 * w2) - f / w2.sqrt()).abs() / f
        })
        .collect();
    ScalarField::from_values(grid, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Closed form of the disk profile with `u(0) = 0`:
    /// with `s = sqrt(2 - r²/R²)`,
    /// `u = R [ (√2 - s) + ½ log( (√2-1)/(√2+1) · (s+1)/(s-1) ) ]`.
    fn disk_oracle(radius: f64, r: f64) -> f64 {
        let s2 = std::f64::consts::SQRT_2;
        let s = (2.0 - (r / radius).powi(2)).sqrt();
        radius * ((s2 - s) + 0.5 * (((s2 - 1.0) / (s2 + 1.0)) * ((s + 1.0) / (s - 1.0))).ln())
    }

    #[test]
    fn radial_slope_values() {
        assert_eq!(radial_profile(1.0, 0.0).unwrap(), 0.0);
        let v = radial_profile(1.0, 0.5f64.sqrt()).unwrap();
        assert!((v - 3f64.sqrt()).abs() < 1e-12);
        assert!(radial_profile(1.0, 0.999).unwrap() > 100.0);
        assert!(matches!(radial_profile(1.0, 1.0), Err(Error::BlowUpRadius { .. })));
    }

    #[test]
    fn radial_slope_solves_reduced_equation() {
        // det D²u = u'' u' / r and W = sqrt(1 + u'^2): u''u'/(r W³) = 2/R².
        let r0 = 0.6;
        let step = 1e-5;
        let d2 = (radial_profile(1.0, r0 + step).unwrap() - radial_profile(1.0, r0 - step).unwrap()) / (2.0 * step);
        let d1 = radial_profile(1.0, r0).unwrap();
        let lhs = d2 * d1 / r0 / (1.0 + d1 * d1).powf(1.5);
        assert!((lhs - 2.0).abs() < 1e-8, "{lhs}");
    }

    #[test]
    fn radial_height_matches_closed_form() {
        for r in [0.1, 0.5, 0.8, 0.95, 0.99] {
            let q = radial_height(1.0, r).unwrap();
            assert!((q - disk_oracle(1.0, r)).abs() < 1e-10, "{r}");
            let q2 = radial_height(2.0, 2.0 * r).unwrap();
            assert!((q2 - 2.0 * q).abs() < 1e-10);
        }
    }

    #[test]
    fn constant_field_residual_is_one() {
        let d = ConvexDomain::disk(1.0).unwrap();
        let g = Arc::new(Grid::for_domain(&d, 33).unwrap());
        let u = ScalarField::from_fn(g.clone(), |_| 3.0);
        let r = soliton_residual(&u, &d).unwrap();
        for k in 0..g.len() {
            if g.kind_at(k) == NodeKind::Interior {
                assert!((r.values()[k] - 1.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let d = ConvexDomain::disk(1.0).unwrap();
        let g = Arc::new(Grid::for_domain(&d, 33).unwrap());
        let u0 = ScalarField::from_fn(g.clone(), |p| {
            p.x * p.x + 0.7 * p.y * p.y + 0.3 * p.x * p.y + 0.2 * (1.3 * p.x + 0.4 * p.y).exp() + 0.5 * p.x
        });
        let disc = Discretization::new(g.clone(), &StencilSet::default(), 2.0).unwrap();
        let (jac, _) = disc.jacobian(u0.values(), 0.0);
        let v: Vec<f64> = (0..disc.nodes.len()).map(|k| ((k * 7919) % 13) as f64 / 13.0 - 0.5).collect();
        let mut jv = vec![0.0; v.len()];
        jac.mul(&v, &mut jv);
        let eps = 1e-7;
        let shifted = |sign: f64| {
            let mut u = u0.values().to_vec();
            for (n, vi) in disc.nodes.iter().zip(&v) {
                u[n.k] += sign * eps * vi;
            }
            disc.log_residual(&u)
        };
        let (rp, rm) = (shifted(1.0), shifted(-1.0));
        for k in 0..v.len() {
            let fd = (rp[k] - rm[k]) / (2.0 * eps);
            assert!((fd - jv[k]).abs() < 1e-4 * (1.0 + fd.abs()), "{k}: {fd} {}", jv[k]);
        }
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        let mut cfg = SolverConfig::default();
        cfg.cap_sequence = vec![4.0, 2.0];
        assert!(cfg.validate().is_err());
        assert_eq!(SolverConfig::with_caps_to(512.0).cap_sequence.last(), Some(&512.0));
        assert_eq!("newton".parse::<Scheme>().unwrap(), Scheme::Newton);
        assert!("euler".parse::<Scheme>().is_err());
    }

    #[test]
    fn coarse_disk_solve_is_close_to_the_radial_profile() {
        let d = ConvexDomain::disk(1.0).unwrap();
        let g = Arc::new(Grid::for_domain(&d, 65).unwrap());
        let res = solve_translator(&d, g.clone(), &SolverConfig::with_caps_to(8.0)).unwrap();
        assert!(res.converged, "{:?}", res.diagnostics);
        assert_eq!(res.u.at(32, 32), 0.0);
        let mut err: f64 = 0.0;
        for k in 0..g.len() {
            let (i, j) = g.coords(k);
            let p = g.point(i, j);
            if p.norm() <= 0.8 {
                err = err.max((res.u.values()[k] - disk_oracle(1.0, p.norm())).abs());
            }
        }
        assert!(err < 3e-2, "{err}");
    }
}
