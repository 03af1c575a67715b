use thiserror::Error;

use crate::domain::Point;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("empty domain")]
    EmptyDomain,

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("root finder did not converge at point ({}, {})", .0.x, .0.y)]
    RootFinder(Point),

    #[error("no standard-family domain satisfies both containments for delta = {0}")]
    FamilySearch(f64),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("node ({0}, {1}) is exterior")]
    ExteriorNode(usize, usize),

    #[error("truncated stencil")]
    TruncatedStencil,

    #[error("isolated node ({0}, {1}): every direction pair is truncated")]
    IsolatedNode(usize, usize),

    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),

    #[error("blow-up radius: r = {r} is not below R = {radius}")]
    BlowUpRadius { r: f64, radius: f64 },

    #[error("non-monotone column at x = {0}: convexity violated")]
    NonMonotoneColumn(f64),

    #[error("asymptote: x = {0} lies outside the open strip")]
    Asymptote(f64),

    #[error("distance minimizer did not converge at ({0}, {1})")]
    Minimizer(f64, f64),

    #[error("outside band: d = {d} exceeds 2 alpha = {limit}")]
    OutsideBand { d: f64, limit: f64 },

    #[error("point ({0}, {1}) lies inside the region")]
    InsideRegion(f64, f64),

    #[error("frame undefined at d = {0}")]
    FrameUndefined(f64),

    #[error("invalid barrier parameters: {0}")]
    InvalidParams(String),

    #[error("ball does not cut")]
    BallDoesNotCut,

    #[error("point ({0}, {1}) is outside the mask")]
    OutsideMask(f64, f64),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
