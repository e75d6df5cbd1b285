//! Exact Fedosov deformation quantization on action–angle charts.
//!
//! The crate builds Fedosov connections and star products on explicit
//! Darboux charts `(I, φ)` of symplectic manifolds fibered by Lagrangian
//! tori or planes, and checks the resulting algebraic identities exactly.

pub mod coeff_ring;
pub mod weyl_algebra;
pub mod chart_geometry;
pub mod fedosov_engine;
pub mod semiclassical;
pub mod lagrangian_forms;
pub mod cli_harness;
