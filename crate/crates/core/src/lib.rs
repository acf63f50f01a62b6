//! Approximation of smooth parametric curves by high-order piecewise-
//! polynomial meshes.
//!
//! The central object is the disparity: the weighted L2 distance between a
//! physical mesh `x` and a reparametrized curve `a(s)`, minimized jointly
//! over the mesh coordinates and the reparametrization. Fixing the element
//! interfaces decouples the elements, which this crate exploits for parallel
//! per-element optimization; a log-barrier term on `s'` keeps the
//! reparametrization from inverting.
//!
//! Modules:
//! - [`geometry`]: target curves with exact derivatives, Frenet frames, arc
//!   length;
//! - [`mesh`]: Lagrange bases, Gauss quadrature, physical/parametric meshes
//!   and the free-dof layouts;
//! - [`disparity`]: the energy, barrier, gradients, Hessians, validity and
//!   error decomposition;
//! - [`optimizer`]: globalized Newton with a nonmonotone line search and the
//!   outer barrier loop;
//! - [`parallel`]: deterministic by-curve and by-element distribution;
//! - [`analysis`]: convergence-rate studies and root counting;
//! - [`io`]: CSV emission.

pub mod analysis;
pub mod disparity;
pub mod error;
pub mod geometry;
pub mod io;
pub mod mesh;
pub mod optimizer;
pub mod parallel;

pub use analysis::{fit_slope, run_root_study, run_study, synthetic_suite, ConvergenceStudy, RootCounts};
pub use disparity::{
    check_validity, count_roots, decompose_error, DisparityEval, ErrorDecomposition, Problem,
};
pub use error::{Error, Result};
pub use geometry::{load_curve_file, Curve, CurveEntry, CurveKind, CurveSpec, FrenetFrame};
pub use mesh::{
    arclength_partition, gauss_legendre, interpolate_meshes, make_basis, uniform_partition,
    DofLayout, LagrangeBasis, LayoutKind, NodeFamily, ParametricMesh, PhysicalMesh, QuadratureRule,
};
pub use optimizer::{
    descent_direction, line_search, optimize, optimize_constrained_per_element, preoptimize_linear,
    zh_update, Config, LineSearchState, OptimizeReport,
};
pub use parallel::{
    run_by_curves, run_by_elements, CurveJob, MeshParams, ParallelReport, PartitionStrategy,
    PlanMode, WorkPlan,
};
