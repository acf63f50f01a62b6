//! Error type shared across the crate.

use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Curve parameter outside the curve domain (beyond the clamping slack).
    Domain { t: f64, lo: f64, hi: f64 },
    /// Invalid construction input (degrees, knot vectors, partitions, config).
    Spec(String),
    /// Could not parse an input file.
    Parse(String),
    /// `|a'(t)|` too small to define a tangent.
    DegenerateTangent { t: f64 },
    /// 3D curvature too small to define a normal.
    DegenerateNormal { t: f64 },
    /// `|dx/dxi|` vanished at a quadrature point of a physical element.
    DegenerateElement { element: usize },
    /// `sign(s')` disagrees with the mesh direction; the barrier integrand is undefined.
    InvalidParametrization { element: usize },
    /// Backtracking exhausted `max_halvings` without satisfying the acceptance test.
    LineSearchFailure { iteration: usize, halvings: usize },
    /// A study could not be evaluated (too few finite data points, all cells failed, ...).
    Study(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Domain { t, lo, hi } => {
                write!(f, "parameter {t} outside curve domain [{lo}, {hi}]")
            }
            Error::Spec(msg) => write!(f, "invalid specification: {msg}"),
            Error::Parse(msg) => write!(f, "parse error: {msg}"),
            Error::DegenerateTangent { t } => write!(f, "degenerate tangent at t = {t}"),
            Error::DegenerateNormal { t } => write!(f, "degenerate normal at t = {t}"),
            Error::DegenerateElement { element } => {
                write!(f, "element {element} has vanishing speed |dx/dxi|")
            }
            Error::InvalidParametrization { element } => {
                write!(f, "element {element} has an inverted parametrization (s' sign flip)")
            }
            Error::LineSearchFailure { iteration, halvings } => write!(
                f,
                "line search failed at iteration {iteration} after {halvings} halvings"
            ),
            Error::Study(msg) => write!(f, "study error: {msg}"),
        }
    }
}

impl std::error::Error for Error {}

pub type Result<T> = std::result::Result<T, Error>;
