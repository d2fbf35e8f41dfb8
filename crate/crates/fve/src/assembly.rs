//! Assembly of the symmetric FEM bilinear form, the nonsymmetric FVE form
//! and the load functional, with homogeneous Dirichlet elimination.
//!
//! Matrix orientation: entry (i, j) holds form(phi_j, phi_i), i.e. rows are
//! test indices (control volumes for the FVE form) and columns trial
//! indices, so the discrete system reads `A u = b` directly.
//!
//! Quadrature choices: the FEM form integrates the coefficient with the
//! 3-point edge-midpoint rule (exact for quadratics); the FVE form uses a
//! one-point midpoint rule on every dual segment; the load uses the region
//! area times f at the triangle centroid, which is exact for constant f.

use crate::coefficient::{CoefficientField, Tensor2};
use crate::linalg::band::BandCholesky;
use crate::linalg::lanczos::{lanczos_extremal, Extremal, IterationError, IterationOptions};
use crate::linalg::sparse::{SparseError, SparseOperator, Symmetry};
use crate::mesh::{dual_segments, Point2, TriangleMesh};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AssemblyError {
    #[error("coefficient is not elliptic at ({x}, {y}): min eigenvalue {eig:e}")]
    NonElliptic { x: f64, y: f64, eig: f64 },
    #[error("operator dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error(transparent)]
    Sparse(#[from] SparseError),
    #[error("factorization of the FEM operator failed: {0}")]
    Factorization(#[from] crate::linalg::band::FactorError),
    #[error(transparent)]
    Estimate(#[from] IterationError),
}

/// Right-hand side on free DOFs: value_i = integral of f over the control
/// volume of DOF i.
#[derive(Debug, Clone)]
pub struct LoadVector {
    pub values: Vec<f64>,
}

impl LoadVector {
    pub fn dimension(&self) -> usize {
        self.values.len()
    }
}

fn check_elliptic(a: Tensor2, p: Point2) -> Result<Tensor2, AssemblyError> {
    let eig = crate::coefficient::min_eigenvalue(a);
    if eig <= 0.0 || !eig.is_finite() {
        return Err(AssemblyError::NonElliptic {
            x: p.x,
            y: p.y,
            eig,
        });
    }
    Ok(a)
}

fn apply_tensor(a: Tensor2, v: Point2) -> Point2 {
    Point2::new(a[0][0] * v.x + a[0][1] * v.y, a[1][0] * v.x + a[1][1] * v.y)
}

/// Constant P1 gradients on a triangle with counterclockwise points.
fn p1_gradients(p: [Point2; 3], area: f64) -> [Point2; 3] {
    let s = 1.0 / (2.0 * area);
    [
        Point2::new(p[1].y - p[2].y, p[2].x - p[1].x) * s,
        Point2::new(p[2].y - p[0].y, p[0].x - p[2].x) * s,
        Point2::new(p[0].y - p[1].y, p[1].x - p[0].x) * s,
    ]
}

fn fem_triplets(
    mesh: &TriangleMesh,
    coeff: &CoefficientField,
) -> Result<Vec<(usize, usize, f64)>, AssemblyError> {
    let mut triplets = Vec::with_capacity(9 * mesh.num_triangles());
    for t in 0..mesh.num_triangles() {
        let tri = mesh.triangle(t);
        let pts = mesh.triangle_points(t);
        let area = mesh.triangle_area(t);
        let grads = p1_gradients(pts, area);
        let c = mesh.centroid(t);
        let mut abar = [[0.0; 2]; 2];
        for e in 0..3 {
            let m = pts[e].midpoint(pts[(e + 1) % 3]);
            let a = check_elliptic(coeff.eval_region(m, c), m)?;
            for r in 0..2 {
                for s in 0..2 {
                    abar[r][s] += a[r][s] / 3.0;
                }
            }
        }
        for a in 0..3 {
            let flux = apply_tensor(abar, grads[a]);
            for b in 0..3 {
                triplets.push((tri[b], tri[a], area * flux.dot(grads[b])));
            }
        }
    }
    Ok(triplets)
}

fn fve_triplets(
    mesh: &TriangleMesh,
    coeff: &CoefficientField,
) -> Result<Vec<(usize, usize, f64)>, AssemblyError> {
    let segments = dual_segments(mesh);
    let mut triplets = Vec::with_capacity(segments.len() * 3);
    let mut grads_cache: Vec<[Point2; 3]> = Vec::with_capacity(mesh.num_triangles());
    for t in 0..mesh.num_triangles() {
        grads_cache.push(p1_gradients(mesh.triangle_points(t), mesh.triangle_area(t)));
    }
    for seg in &segments {
        let tri = mesh.triangle(seg.triangle);
        let row = tri[seg.owner];
        let a = check_elliptic(
            coeff.eval_region(seg.midpoint, mesh.centroid(seg.triangle)),
            seg.midpoint,
        )?;
        for b in 0..3 {
            let flux = apply_tensor(a, grads_cache[seg.triangle][b]);
            triplets.push((row, tri[b], -flux.dot(seg.normal)));
        }
    }
    Ok(triplets)
}

fn eliminate(
    mesh: &TriangleMesh,
    triplets: Vec<(usize, usize, f64)>,
) -> Vec<(usize, usize, f64)> {
    triplets
        .into_iter()
        .filter_map(|(i, j, v)| Some((mesh.free_index(i)?, mesh.free_index(j)?, v)))
        .collect()
}

/// Symmetric FEM operator a(., .) on free DOFs.
pub fn assemble_fem(
    mesh: &TriangleMesh,
    coeff: &CoefficientField,
) -> Result<SparseOperator, AssemblyError> {
    let triplets = eliminate(mesh, fem_triplets(mesh, coeff)?);
    let dim = mesh.num_free_dofs();
    Ok(SparseOperator::from_triplets(
        dim,
        dim,
        &triplets,
        Symmetry::AssertedSymmetric,
    )?)
}

/// Nonsymmetric FVE operator a_h(., .) on free DOFs.
pub fn assemble_fve(
    mesh: &TriangleMesh,
    coeff: &CoefficientField,
) -> Result<SparseOperator, AssemblyError> {
    let triplets = eliminate(mesh, fve_triplets(mesh, coeff)?);
    let dim = mesh.num_free_dofs();
    Ok(SparseOperator::from_triplets(
        dim,
        dim,
        &triplets,
        Symmetry::General,
    )?)
}

/// FVE operator over all vertices, before Dirichlet elimination. Row i is
/// the flux balance of the control volume of vertex i, so each row sums to
/// zero.
pub fn assemble_fve_full(
    mesh: &TriangleMesh,
    coeff: &CoefficientField,
) -> Result<SparseOperator, AssemblyError> {
    let triplets = fve_triplets(mesh, coeff)?;
    let dim = mesh.num_vertices();
    Ok(SparseOperator::from_triplets(
        dim,
        dim,
        &triplets,
        Symmetry::General,
    )?)
}

/// Load vector over free DOFs.
pub fn assemble_load(mesh: &TriangleMesh, f: impl Fn(Point2) -> f64) -> LoadVector {
    let raw = raw_loads(mesh, f);
    let values = (0..mesh.num_free_dofs())
        .map(|d| raw[mesh.free_vertex(d)])
        .collect();
    LoadVector { values }
}

/// Per-vertex loads including boundary vertices; for f = 1 these are the
/// control volume areas.
pub fn raw_loads(mesh: &TriangleMesh, f: impl Fn(Point2) -> f64) -> Vec<f64> {
    let mut values = vec![0.0; mesh.num_vertices()];
    for t in 0..mesh.num_triangles() {
        let w = mesh.triangle_area(t) / 3.0 * f(mesh.centroid(t));
        for v in mesh.triangle(t) {
            values[v] += w;
        }
    }
    values
}

/// Energy-relative size of the nonsymmetric perturbation E_h = a_h - a:
/// sup |E_h(u, v)| / (|u|_a |v|_a), the largest singular value of
/// L^{-1} (A_fve - A_fem) L^{-T} where A_fem = L L^T.
pub fn nonsymmetry_norm(
    a_fem: &SparseOperator,
    a_fve: &SparseOperator,
) -> Result<f64, AssemblyError> {
    if a_fem.dim() != a_fve.dim() {
        return Err(AssemblyError::DimensionMismatch(a_fem.dim(), a_fve.dim()));
    }
    let dim = a_fem.dim();
    let mut diff = Vec::with_capacity(a_fve.nnz() + a_fem.nnz());
    for i in 0..dim {
        for (j, v) in a_fve.row(i) {
            diff.push((i, j, v));
        }
        for (j, v) in a_fem.row(i) {
            diff.push((i, j, -v));
        }
    }
    let d = SparseOperator::from_triplets(dim, dim, &diff, Symmetry::General)?;
    let chol = BandCholesky::factor(dim, a_fem.bandwidth(), |i, j| a_fem.get(i, j))?;
    let op = |x: &[f64]| -> Vec<f64> {
        // K^T K x with K = L^{-1} D L^{-T}.
        let kx = chol.solve_lower(&d.matvec(&chol.solve_upper(x)));
        chol.solve_lower(&d.matvec_transpose(&chol.solve_upper(&kx)))
    };
    let opts = IterationOptions {
        tol: 1e-8,
        max_iter: 400,
        ..Default::default()
    };
    let lambda = lanczos_extremal(op, dim, None, Extremal::Largest, opts)?;
    Ok(lambda.max(0.0).sqrt())
}
