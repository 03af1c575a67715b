//! Numerical translators of the Gauss curvature flow over convex planar
//! domains, with checks of the curvature, gradient and flat-side estimates.

pub mod barriers;
pub mod domain;
pub mod geometry;
pub mod error;
pub mod grid;
pub mod numerics;
pub mod solver;
pub mod sparse;
pub mod verify;

pub use domain::{BBox, ConvexDomain, Point, Shape};
pub use error::{Error, Result};
pub use grid::{Grid, GridInfo, NodeKind, ScalarField, StencilSet};
pub use solver::{radial_profile, soliton_residual, solve_translator, Scheme, SolverConfig, SolverResult};
