//! Verification and simulation toolkit for linear first-order hyperbolic
//! systems on metric graphs with stationary and dynamic vertex conditions.
//!
//! The crate checks algebraic well-posedness certificates (semigroup, group,
//! contractive, unitary), solves the stationary boundary problem exactly,
//! evolves the coupled edge-PDE/vertex-ODE system, and tests qualitative
//! invariance properties (reality, positivity, sup-norm contractivity).

extern crate openblas_src;

pub mod config;
pub mod evolve;
pub mod graph;
pub mod linalg;
pub mod models;
pub mod qualinv;
pub mod system;
pub mod resolvent;
pub mod spline;
pub mod state;
pub mod wellposed;

pub use graph::{EdgeSpec, End, GraphError, MetricGraph};
pub use state::StateVector;
pub use system::{
    Conditions, EdgeCoefficients, HyperbolicSystem, MatrixField, Site, SiteId, SystemError,
    Tolerances, VertexCondition,
};
pub use wellposed::{classify, ClassificationReport, Route, Verdict};
