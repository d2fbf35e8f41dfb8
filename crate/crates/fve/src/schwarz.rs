//! Edge-based additive Schwarz operators for the FVE system.
//!
//! The free-DOF space splits as a direct sum of the coarse space (one
//! basis function per crosspoint), one edge space per interface edge, and
//! the interiors of the subdomains. Both preconditioner variants share
//! that decomposition and differ only in the Gram matrices of the
//! subspace corrections:
//!
//! * symmetric variant `T`:    a(T_k u, v) = a_h(u, v), Gram = B^T A_fem B,
//! * nonsymmetric variant `S`: a_h(S_k u, v) = a_h(u, v), Gram = B^T A_fve B.
//!
//! Applying the operator is matrix-free: `T u = P (A_fve u)` with
//! `P = sum_k B_k G_k^{-1} B_k^T`, and the preconditioned right-hand side
//! is `g = P b`, which makes the system `T u = g` equivalent to
//! `A_fve u = b` without knowing the exact solution.

use crate::assembly::LoadVector;
use crate::decomposition::{coarse_basis, edge_basis, HarmonicExtender, Partition, PartitionError};
use crate::linalg::band::{BandCholesky, BandLu, FactorError};
use crate::linalg::sparse::SparseOperator;
use crate::linalg::SparseVector;
use crate::mesh::TriangleMesh;
use nalgebra::{DMatrix, DVector};
use std::collections::HashMap;
use std::sync::Arc;
use thiserror::Error;

/// Which bilinear form defines the subspace Gram matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Symmetric,
    Nonsymmetric,
}

impl Variant {
    pub fn label(&self) -> &'static str {
        match self {
            Variant::Symmetric => "sym",
            Variant::Nonsymmetric => "nonsym",
        }
    }
}

#[derive(Debug, Error)]
pub enum SetupError {
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error("Gram factorization failed for subspace {subspace}: {detail} (for the nonsymmetric variant this signals h above the ellipticity threshold h1)")]
    GramFactorization { subspace: String, detail: String },
    #[error("subspace dimensions sum to {got}, expected {expected} free DOFs")]
    DimensionMismatch { expected: usize, got: usize },
}

enum GramFactor {
    Empty,
    DenseChol(nalgebra::Cholesky<f64, nalgebra::Dyn>),
    DenseLu {
        lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
        lu_t: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    },
    BandChol(BandCholesky),
    BandLu(BandLu),
}

impl GramFactor {
    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        match self {
            GramFactor::Empty => Vec::new(),
            GramFactor::DenseChol(c) => c.solve(&DVector::from_column_slice(rhs)).data.into(),
            GramFactor::DenseLu { lu, .. } => lu
                .solve(&DVector::from_column_slice(rhs))
                .expect("invertibility checked at setup")
                .data
                .into(),
            GramFactor::BandChol(c) => c.solve(rhs),
            GramFactor::BandLu(l) => l.solve(rhs),
        }
    }

    fn solve_transpose(&self, rhs: &[f64]) -> Vec<f64> {
        match self {
            GramFactor::Empty => Vec::new(),
            GramFactor::DenseChol(c) => c.solve(&DVector::from_column_slice(rhs)).data.into(),
            GramFactor::DenseLu { lu_t, .. } => lu_t
                .solve(&DVector::from_column_slice(rhs))
                .expect("invertibility checked at setup")
                .data
                .into(),
            GramFactor::BandChol(c) => c.solve(rhs),
            GramFactor::BandLu(l) => l.solve_transpose(rhs),
        }
    }
}

struct BasisBlock {
    columns: Vec<SparseVector>,
    gram: GramFactor,
}

impl BasisBlock {
    fn correction_into(&self, w: &[f64], out: &mut [f64], transpose: bool) {
        if self.columns.is_empty() {
            return;
        }
        let rhs: Vec<f64> = self.columns.iter().map(|c| c.dot_dense(w)).collect();
        let coef = if transpose {
            self.gram.solve_transpose(&rhs)
        } else {
            self.gram.solve(&rhs)
        };
        for (c, col) in coef.iter().zip(&self.columns) {
            col.scatter_into(*c, out);
        }
    }
}

struct InteriorBlock {
    dofs: Vec<usize>,
    factor: GramFactor,
}

impl InteriorBlock {
    fn correction_into(&self, w: &[f64], out: &mut [f64], transpose: bool) {
        if self.dofs.is_empty() {
            return;
        }
        let rhs: Vec<f64> = self.dofs.iter().map(|&d| w[d]).collect();
        let sol = if transpose {
            self.factor.solve_transpose(&rhs)
        } else {
            self.factor.solve(&rhs)
        };
        for (&d, v) in self.dofs.iter().zip(&sol) {
            out[d] += v;
        }
    }
}

/// Additive Schwarz operator with factorized subspace corrections.
pub struct SchwarzPreconditioner {
    variant: Variant,
    dim: usize,
    a_fem: Arc<SparseOperator>,
    a_fve: Arc<SparseOperator>,
    coarse: BasisBlock,
    edges: Vec<BasisBlock>,
    interiors: Vec<InteriorBlock>,
    crosspoint_side: usize,
}

/// Coarse Gram matrices stay dense up to this dimension; larger ones use
/// the banded structure of the crosspoint lattice.
const DENSE_COARSE_LIMIT: usize = 512;

impl SchwarzPreconditioner {
    /// Builds basis columns, assembles all Gram matrices for the chosen
    /// variant and factorizes them.
    pub fn setup(
        mesh: &TriangleMesh,
        partition: &Partition,
        a_fem: Arc<SparseOperator>,
        a_fve: Arc<SparseOperator>,
        variant: Variant,
    ) -> Result<Self, SetupError> {
        let dim = a_fem.dim();
        assert_eq!(dim, a_fve.dim(), "operators assembled on different meshes");
        assert_eq!(dim, partition.num_free_dofs(), "partition/mesh mismatch");
        let extender = HarmonicExtender::new(partition, &a_fem)?;
        let gram_matrix: &SparseOperator = match variant {
            Variant::Symmetric => &a_fem,
            Variant::Nonsymmetric => &a_fve,
        };

        let mut workspace = vec![0.0; dim];
        let mut touched: Vec<usize> = Vec::new();

        // Coarse block.
        let coarse_columns = coarse_basis(mesh, partition, &a_fem, &extender);
        let n_side = partition.subdomains_per_side().saturating_sub(1);
        let coarse_gram = assemble_coarse_gram(
            &coarse_columns,
            n_side,
            gram_matrix,
            variant,
            &mut workspace,
            &mut touched,
        )?;
        let coarse = BasisBlock {
            columns: coarse_columns,
            gram: coarse_gram,
        };

        // Edge blocks.
        let mut edges = Vec::with_capacity(partition.edges().len());
        for e in 0..partition.edges().len() {
            let columns = edge_basis(partition, &a_fem, &extender, e);
            let gram = assemble_dense_gram(
                &columns,
                gram_matrix,
                variant,
                || format!("edge {:?}", partition.edges()[e].subdomains),
                &mut workspace,
                &mut touched,
            )?;
            edges.push(BasisBlock { columns, gram });
        }

        // Interior blocks: the symmetric Gram is the FEM interior block
        // already factorized for the harmonic extensions.
        let mut interiors = Vec::with_capacity(partition.subdomains().len());
        match variant {
            Variant::Symmetric => {
                for (k, factor) in extender.into_interior_factors().into_iter().enumerate() {
                    let dofs = partition.subdomains()[k].interior_dofs.clone();
                    let factor = match factor {
                        Some(f) => GramFactor::BandChol(f),
                        None => GramFactor::Empty,
                    };
                    interiors.push(InteriorBlock { dofs, factor });
                }
            }
            Variant::Nonsymmetric => {
                for (k, sub) in partition.subdomains().iter().enumerate() {
                    let dofs = sub.interior_dofs.clone();
                    let factor = if dofs.is_empty() {
                        GramFactor::Empty
                    } else {
                        let mut bw = 0usize;
                        for (li, &g) in dofs.iter().enumerate() {
                            for (c, _) in a_fve.row(g) {
                                if let Ok(lj) = dofs.binary_search(&c) {
                                    bw = bw.max(li.abs_diff(lj));
                                }
                            }
                        }
                        let lu = BandLu::factor(dofs.len(), bw, |li, lj| {
                            a_fve.get(dofs[li], dofs[lj])
                        })
                        .map_err(|err| gram_error(format!("interior subdomain {k}"), err))?;
                        GramFactor::BandLu(lu)
                    };
                    interiors.push(InteriorBlock { dofs, factor });
                }
            }
        }

        let got = coarse.columns.len()
            + edges.iter().map(|b| b.columns.len()).sum::<usize>()
            + interiors.iter().map(|b| b.dofs.len()).sum::<usize>();
        if got != dim {
            return Err(SetupError::DimensionMismatch { expected: dim, got });
        }

        Ok(Self {
            variant,
            dim,
            a_fem,
            a_fve,
            coarse,
            edges,
            interiors,
            crosspoint_side: n_side,
        })
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn a_fem(&self) -> &Arc<SparseOperator> {
        &self.a_fem
    }

    pub fn a_fve(&self) -> &Arc<SparseOperator> {
        &self.a_fve
    }

    pub fn coarse_dim(&self) -> usize {
        self.coarse.columns.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edge_dim(&self, e: usize) -> usize {
        self.edges[e].columns.len()
    }

    pub fn coarse_columns(&self) -> &[SparseVector] {
        &self.coarse.columns
    }

    pub fn edge_columns(&self, e: usize) -> &[SparseVector] {
        &self.edges[e].columns
    }

    pub fn interior_dofs(&self, k: usize) -> &[usize] {
        &self.interiors[k].dofs
    }

    /// P w = sum over all subspaces of B G^{-1} B^T w, in fixed order
    /// (coarse, then edges, then interiors).
    pub fn apply_inverse_sum(&self, w: &[f64]) -> Vec<f64> {
        assert_eq!(w.len(), self.dim, "dimension mismatch");
        let mut out = vec![0.0; self.dim];
        self.coarse.correction_into(w, &mut out, false);
        for block in &self.edges {
            block.correction_into(w, &mut out, false);
        }
        for block in &self.interiors {
            block.correction_into(w, &mut out, false);
        }
        out
    }

    /// P^T w (differs from P w only for the nonsymmetric variant).
    pub fn apply_inverse_sum_transpose(&self, w: &[f64]) -> Vec<f64> {
        assert_eq!(w.len(), self.dim, "dimension mismatch");
        let mut out = vec![0.0; self.dim];
        self.coarse.correction_into(w, &mut out, true);
        for block in &self.edges {
            block.correction_into(w, &mut out, true);
        }
        for block in &self.interiors {
            block.correction_into(w, &mut out, true);
        }
        out
    }

    /// The preconditioned operator: T u (or S u) = P (A_fve u).
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        assert_eq!(u.len(), self.dim, "dimension mismatch");
        self.apply_inverse_sum(&self.a_fve.matvec(u))
    }

    /// Transpose of the preconditioned operator in the l2 sense:
    /// (P A_fve)^T u = A_fve^T (P^T u).
    pub fn apply_transpose(&self, u: &[f64]) -> Vec<f64> {
        assert_eq!(u.len(), self.dim, "dimension mismatch");
        self.a_fve
            .matvec_transpose(&self.apply_inverse_sum_transpose(u))
    }

    /// Right-hand side g of the preconditioned system T u = g, computed as
    /// P b so the exact solution is never needed.
    pub fn preconditioned_rhs(&self, b: &LoadVector) -> Vec<f64> {
        assert_eq!(b.dimension(), self.dim, "dimension mismatch");
        self.apply_inverse_sum(&b.values)
    }

    /// Coarse component B0 G0^{-1} B0^T w (diagnostics and tests).
    pub fn apply_coarse(&self, w: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.coarse.correction_into(w, &mut out, false);
        out
    }

    /// Single edge-subspace correction (diagnostics and tests).
    pub fn apply_edge(&self, e: usize, w: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.edges[e].correction_into(w, &mut out, false);
        out
    }

    /// Single interior-subspace correction (diagnostics and tests).
    pub fn apply_interior(&self, k: usize, w: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.interiors[k].correction_into(w, &mut out, false);
        out
    }

    /// Crosspoints per side of the coarse lattice.
    pub fn crosspoint_side(&self) -> usize {
        self.crosspoint_side
    }
}

fn gram_error(subspace: String, err: FactorError) -> SetupError {
    SetupError::GramFactorization {
        subspace,
        detail: err.to_string(),
    }
}

/// Gram of columns with full mutual overlap, stored dense.
fn assemble_dense_gram(
    columns: &[SparseVector],
    m: &SparseOperator,
    variant: Variant,
    subspace: impl Fn() -> String,
    workspace: &mut [f64],
    touched: &mut Vec<usize>,
) -> Result<GramFactor, SetupError> {
    let k = columns.len();
    if k == 0 {
        return Ok(GramFactor::Empty);
    }
    let mut g = DMatrix::zeros(k, k);
    for (j, col) in columns.iter().enumerate() {
        m.matvec_sparse(col, workspace, touched);
        for (i, row_col) in columns.iter().enumerate() {
            g[(i, j)] = row_col.dot_dense(workspace);
        }
        for &t in touched.iter() {
            workspace[t] = 0.0;
        }
        touched.clear();
    }
    factor_dense(g, variant, subspace)
}

fn factor_dense(
    g: DMatrix<f64>,
    variant: Variant,
    subspace: impl Fn() -> String,
) -> Result<GramFactor, SetupError> {
    match variant {
        Variant::Symmetric => match nalgebra::Cholesky::new(g) {
            Some(c) => Ok(GramFactor::DenseChol(c)),
            None => Err(SetupError::GramFactorization {
                subspace: subspace(),
                detail: "not positive definite".into(),
            }),
        },
        Variant::Nonsymmetric => {
            let lu_t = g.transpose().lu();
            let lu = g.lu();
            if !lu.is_invertible() {
                return Err(SetupError::GramFactorization {
                    subspace: subspace(),
                    detail: "singular Gram matrix".into(),
                });
            }
            Ok(GramFactor::DenseLu { lu, lu_t })
        }
    }
}

/// Coarse Gram: only lattice-neighboring crosspoints overlap, so the
/// matrix is assembled sparsely; small ones are factored dense, large
/// ones use the banded structure of the row-major crosspoint numbering.
fn assemble_coarse_gram(
    columns: &[SparseVector],
    n_side: usize,
    m: &SparseOperator,
    variant: Variant,
    workspace: &mut [f64],
    touched: &mut Vec<usize>,
) -> Result<GramFactor, SetupError> {
    let k = columns.len();
    if k == 0 {
        return Ok(GramFactor::Empty);
    }
    debug_assert_eq!(k, n_side * n_side);
    let mut entries: HashMap<(usize, usize), f64> = HashMap::new();
    let mut bw = 0usize;
    for (j, col) in columns.iter().enumerate() {
        m.matvec_sparse(col, workspace, touched);
        let (jx, jy) = (j % n_side, j / n_side);
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let ix = jx as i64 + dx;
                let iy = jy as i64 + dy;
                if ix < 0 || iy < 0 || ix >= n_side as i64 || iy >= n_side as i64 {
                    continue;
                }
                let i = iy as usize * n_side + ix as usize;
                let v = columns[i].dot_dense(workspace);
                if v != 0.0 {
                    entries.insert((i, j), v);
                    bw = bw.max(i.abs_diff(j));
                }
            }
        }
        for &t in touched.iter() {
            workspace[t] = 0.0;
        }
        touched.clear();
    }
    let get = |i: usize, j: usize| entries.get(&(i, j)).copied().unwrap_or(0.0);
    if k <= DENSE_COARSE_LIMIT {
        let g = DMatrix::from_fn(k, k, |i, j| get(i, j));
        factor_dense(g, variant, || "coarse".to_string())
    } else {
        match variant {
            Variant::Symmetric => BandCholesky::factor(k, bw, get)
                .map(GramFactor::BandChol)
                .map_err(|e| gram_error("coarse".into(), e)),
            Variant::Nonsymmetric => BandLu::factor(k, bw, get)
                .map(GramFactor::BandLu)
                .map_err(|e| gram_error("coarse".into(), e)),
        }
    }
}
