//! Vector fields, flow and variational integration, truncated distance to
//! equilibria, and the built-in testbed systems.

pub mod distance;
pub mod field;
pub mod integrate;
pub mod system;

pub use distance::{check_delta, nearest_distance, truncate, truncated_distance};
pub use field::{AffineField, Lorenz, Monomial, PolynomialField, VectorField};
pub use integrate::{
    advance, flow_jacobian, integrate_visit, tangent_advance, IntegratorConfig, Method,
    TangentFrame, TangentStep,
};
pub use system::{
    builtin_systems, lookup, resolve, BoundingBox, SystemDefinition, SystemSpec, TrapRegion,
    REGISTRY,
};
