//! Finite volume element (FVE) discretization of second-order elliptic
//! problems on the unit square, with edge-based additive Schwarz
//! preconditioners and a GMRES iteration run in the energy inner product.
//!
//! The crate is organized along the solver pipeline:
//!
//! * [`mesh`] — structured primal triangulation and the Donald dual mesh,
//! * [`coefficient`] — scalar coefficient fields, smooth or with jumps
//!   across subdomains,
//! * [`assembly`] — the symmetric FEM form, the nonsymmetric FVE form and
//!   load vectors, with Dirichlet elimination,
//! * [`decomposition`] — square subdomain partitions, interface
//!   classification and discrete harmonic extensions,
//! * [`schwarz`] — the symmetric (`T`) and nonsymmetric (`S`) additive
//!   Schwarz operators built from coarse, edge and interior subspaces,
//! * [`krylov`] — GMRES in the `a(.,.)` inner product plus estimators for
//!   the convergence parameters of the preconditioned operator,
//! * [`linalg`] — the sparse/banded kernels everything above sits on.

pub mod assembly;
pub mod coefficient;
pub mod decomposition;
pub mod krylov;
pub mod linalg;
pub mod mesh;
pub mod schwarz;

pub use assembly::{
    assemble_fem, assemble_fve, assemble_fve_full, assemble_load, nonsymmetry_norm, LoadVector,
};
pub use coefficient::{checkerboard_field, smooth_field, CoefficientField};
pub use decomposition::{build_partition, HarmonicExtender, Partition};
pub use krylov::{gmres_a, gmres_bound_check, IterationReport};
pub use linalg::sparse::{SparseOperator, Symmetry};
pub use mesh::{build_structured_mesh, control_volume_areas, dual_segments, TriangleMesh};
pub use schwarz::{SchwarzPreconditioner, Variant};
