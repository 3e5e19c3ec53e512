//! E(n) equivariant message passing on simplicial complexes.
//!
//! The pipeline: lift a point cloud to its Vietoris-Rips complex (the
//! clique complex of the δ-radius graph), compute E(n)-invariant geometric
//! features over simplicial adjacencies, and learn with message passing
//! networks that communicate along those adjacencies — either consuming
//! invariants only or additionally steering positions equivariantly.
//!
//! All numeric modules are generic over the [`scalar::Real`] scalar type;
//! the aliases below fix `f64`, which is what the CLI uses.

pub mod bench;
pub mod complex;
pub mod geometry;
pub mod harness;
pub mod invariants;
pub mod model;
pub mod nn;
pub mod scalar;

/// Default-precision position.
pub type Point = geometry::Point<f64>;
/// Default-precision rigid motion.
pub type RigidMotion = geometry::RigidMotion<f64>;
/// Default-precision geometric simplicial complex.
pub type SimplicialComplex = complex::SimplicialComplex<f64>;
