//! Partition of the unit square into N x N square subdomains aligned with
//! the primal mesh, classification of free DOFs into subdomain-interior,
//! edge-interior and crosspoint sets, and discrete harmonic extensions
//! from subdomain boundaries.
//!
//! The interface basis functions used by the Schwarz preconditioner are
//! built here: the coarse basis has one column per crosspoint (value one
//! there, linear along each incident subdomain edge, zero on the rest of
//! the interface and on the domain boundary, discrete harmonic in every
//! subdomain) and each subdomain edge contributes one column per interior
//! edge DOF (a hat on the edge, harmonically extended into the two
//! adjacent subdomains).

use crate::linalg::band::{BandCholesky, FactorError};
use crate::linalg::sparse::SparseOperator;
use crate::linalg::SparseVector;
use crate::mesh::TriangleMesh;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PartitionError {
    #[error("fine mesh n={n} is not aligned with {n_sub} subdomains per side")]
    Misaligned { n: usize, n_sub: usize },
    #[error("subdomain edges need at least one interior DOF: n={n}, subdomains={n_sub}")]
    DegenerateEdge { n: usize, n_sub: usize },
    #[error("local Dirichlet block for subdomain {subdomain} failed to factor: {source}")]
    LocalFactorization {
        subdomain: usize,
        source: FactorError,
    },
}

/// Class of a free DOF within the decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DofClass {
    /// Interior to the given subdomain (row-major id).
    Interior(usize),
    /// Interior to the given interface edge (index into `Partition::edges`).
    EdgeInterior(usize),
    /// Crosspoint (index into `Partition::crosspoints`).
    Crosspoint(usize),
}

#[derive(Debug, Clone)]
pub struct Subdomain {
    /// Grid position (column, row) in the subdomain lattice.
    pub grid: (usize, usize),
    pub triangles: Vec<usize>,
    /// Free DOFs strictly inside the subdomain, ascending.
    pub interior_dofs: Vec<usize>,
    /// Free DOFs on the subdomain boundary (excluding the domain
    /// boundary), ascending.
    pub boundary_dofs: Vec<usize>,
}

/// An interface edge between two adjacent subdomains.
#[derive(Debug, Clone)]
pub struct InterfaceEdge {
    /// Row-major ids of the adjacent subdomains, smaller first.
    pub subdomains: (usize, usize),
    /// Interior edge DOFs, ordered along the edge.
    pub dofs: Vec<usize>,
}

/// Decomposition of the mesh into square subdomains with DOF classes.
#[derive(Debug, Clone)]
pub struct Partition {
    n_sub: usize,
    ratio: usize,
    subdomains: Vec<Subdomain>,
    edges: Vec<InterfaceEdge>,
    crosspoints: Vec<usize>,
    dof_class: Vec<DofClass>,
}

/// Builds the aligned N x N partition; requires n divisible by N and at
/// least one interior DOF per subdomain edge (n/N >= 2).
pub fn build_partition(mesh: &TriangleMesh, n_sub: usize) -> Result<Partition, PartitionError> {
    let n = mesh.n();
    assert!(n_sub >= 1, "need at least one subdomain per side");
    if n % n_sub != 0 {
        return Err(PartitionError::Misaligned { n, n_sub });
    }
    let m = n / n_sub;
    if m < 2 {
        return Err(PartitionError::DegenerateEdge { n, n_sub });
    }

    let mut subdomains: Vec<Subdomain> = (0..n_sub * n_sub)
        .map(|id| Subdomain {
            grid: (id % n_sub, id / n_sub),
            triangles: Vec::new(),
            interior_dofs: Vec::new(),
            boundary_dofs: Vec::new(),
        })
        .collect();

    for t in 0..mesh.num_triangles() {
        let c = mesh.centroid(t);
        let sx = ((c.x * n_sub as f64).floor() as usize).min(n_sub - 1);
        let sy = ((c.y * n_sub as f64).floor() as usize).min(n_sub - 1);
        subdomains[sy * n_sub + sx].triangles.push(t);
    }

    // Interface edges, enumerated then sorted by subdomain pair.
    let mut edges: Vec<InterfaceEdge> = Vec::new();
    for gx in 1..n_sub {
        for seg in 0..n_sub {
            let dofs = (1..m)
                .map(|t| mesh.free_index(mesh.vertex_at(gx * m, seg * m + t)).unwrap())
                .collect();
            edges.push(InterfaceEdge {
                subdomains: (seg * n_sub + gx - 1, seg * n_sub + gx),
                dofs,
            });
        }
    }
    for gy in 1..n_sub {
        for seg in 0..n_sub {
            let dofs = (1..m)
                .map(|t| mesh.free_index(mesh.vertex_at(seg * m + t, gy * m)).unwrap())
                .collect();
            edges.push(InterfaceEdge {
                subdomains: ((gy - 1) * n_sub + seg, gy * n_sub + seg),
                dofs,
            });
        }
    }
    edges.sort_by_key(|e| e.subdomains);

    let mut dof_class = vec![None; mesh.num_free_dofs()];
    let mut crosspoints = Vec::new();
    for dof in 0..mesh.num_free_dofs() {
        let (i, j) = mesh.grid_coords(mesh.free_vertex(dof));
        match (i % m == 0, j % m == 0) {
            (true, true) => {
                dof_class[dof] = Some(DofClass::Crosspoint(crosspoints.len()));
                crosspoints.push(dof);
            }
            (false, false) => {
                let id = (j / m) * n_sub + i / m;
                dof_class[dof] = Some(DofClass::Interior(id));
                subdomains[id].interior_dofs.push(dof);
            }
            _ => {} // edge-interior, classified from the edge lists below
        }
    }
    for (e, edge) in edges.iter().enumerate() {
        for &dof in &edge.dofs {
            debug_assert!(dof_class[dof].is_none());
            dof_class[dof] = Some(DofClass::EdgeInterior(e));
        }
    }
    let dof_class: Vec<DofClass> = dof_class
        .into_iter()
        .map(|c| c.expect("every free DOF belongs to exactly one class"))
        .collect();

    // Subdomain boundary DOFs: free vertices on the four sides.
    for sub in subdomains.iter_mut() {
        let (sx, sy) = sub.grid;
        let (x0, x1) = (sx * m, (sx + 1) * m);
        let (y0, y1) = (sy * m, (sy + 1) * m);
        let mut dofs = Vec::new();
        for i in x0..=x1 {
            for j in [y0, y1] {
                if let Some(d) = mesh.free_index(mesh.vertex_at(i, j)) {
                    dofs.push(d);
                }
            }
        }
        for j in y0 + 1..y1 {
            for i in [x0, x1] {
                if let Some(d) = mesh.free_index(mesh.vertex_at(i, j)) {
                    dofs.push(d);
                }
            }
        }
        dofs.sort_unstable();
        dofs.dedup();
        sub.boundary_dofs = dofs;
    }

    Ok(Partition {
        n_sub,
        ratio: m,
        subdomains,
        edges,
        crosspoints,
        dof_class,
    })
}

impl Partition {
    pub fn subdomains_per_side(&self) -> usize {
        self.n_sub
    }

    /// H/h.
    pub fn ratio(&self) -> usize {
        self.ratio
    }

    pub fn subdomains(&self) -> &[Subdomain] {
        &self.subdomains
    }

    pub fn edges(&self) -> &[InterfaceEdge] {
        &self.edges
    }

    pub fn crosspoints(&self) -> &[usize] {
        &self.crosspoints
    }

    pub fn dof_class(&self, dof: usize) -> DofClass {
        self.dof_class[dof]
    }

    pub fn num_free_dofs(&self) -> usize {
        self.dof_class.len()
    }
}

/// Factorized interior blocks of the FEM operator, one per subdomain,
/// ready to extend boundary data discrete-harmonically.
pub struct HarmonicExtender {
    blocks: Vec<InteriorBlock>,
}

struct InteriorBlock {
    dofs: Vec<usize>,
    factor: Option<BandCholesky>,
}

impl HarmonicExtender {
    pub fn new(partition: &Partition, a_fem: &SparseOperator) -> Result<Self, PartitionError> {
        let mut blocks = Vec::with_capacity(partition.subdomains().len());
        for (k, sub) in partition.subdomains().iter().enumerate() {
            let dofs = sub.interior_dofs.clone();
            let factor = if dofs.is_empty() {
                None
            } else {
                let mut bw = 0usize;
                for (li, &g) in dofs.iter().enumerate() {
                    for (c, _) in a_fem.row(g) {
                        if let Ok(lj) = dofs.binary_search(&c) {
                            bw = bw.max(li.abs_diff(lj));
                        }
                    }
                }
                let factor = BandCholesky::factor(dofs.len(), bw, |li, lj| {
                    a_fem.get(dofs[li], dofs[lj])
                })
                .map_err(|source| PartitionError::LocalFactorization {
                    subdomain: k,
                    source,
                })?;
                Some(factor)
            };
            blocks.push(InteriorBlock { dofs, factor });
        }
        Ok(Self { blocks })
    }

    /// Interior values of the discrete harmonic extension of `boundary`
    /// into subdomain `k`, as (dof, value) pairs. Boundary entries not
    /// coupled to this subdomain contribute nothing.
    pub fn extend_interior(
        &self,
        a_fem: &SparseOperator,
        k: usize,
        boundary: &SparseVector,
    ) -> Vec<(usize, f64)> {
        let block = &self.blocks[k];
        let Some(factor) = &block.factor else {
            return Vec::new();
        };
        let mut rhs = vec![0.0; block.dofs.len()];
        for (b, val) in boundary.iter() {
            for (row, a) in a_fem.column(b) {
                if let Ok(li) = block.dofs.binary_search(&row) {
                    rhs[li] -= val * a;
                }
            }
        }
        let interior = factor.solve(&rhs);
        block
            .dofs
            .iter()
            .copied()
            .zip(interior)
            .collect()
    }

    /// The factorized interior FEM block of subdomain `k` (None when the
    /// subdomain has no interior DOFs).
    pub fn interior_factor(&self, k: usize) -> Option<&BandCholesky> {
        self.blocks[k].factor.as_ref()
    }

    /// Consumes the extender, handing out the interior factorizations.
    pub fn into_interior_factors(self) -> Vec<Option<BandCholesky>> {
        self.blocks.into_iter().map(|b| b.factor).collect()
    }
}

/// Discrete harmonic extension of boundary data into subdomain `k`; the
/// result carries the boundary values together with the interior ones.
pub fn harmonic_extend(
    extender: &HarmonicExtender,
    a_fem: &SparseOperator,
    k: usize,
    boundary: &SparseVector,
) -> SparseVector {
    let mut pairs: Vec<(usize, f64)> = boundary.iter().collect();
    pairs.extend(extender.extend_interior(a_fem, k, boundary));
    SparseVector::from_pairs(pairs)
}

/// Coarse basis columns, one per crosspoint: one at the crosspoint, linear
/// along the four incident subdomain edges (down to zero at their far
/// endpoints), zero on the rest of the interface and on the domain
/// boundary, discrete harmonic in the four touching subdomains.
pub fn coarse_basis(
    mesh: &TriangleMesh,
    partition: &Partition,
    a_fem: &SparseOperator,
    extender: &HarmonicExtender,
) -> Vec<SparseVector> {
    let n_sub = partition.subdomains_per_side();
    let m = partition.ratio();
    partition
        .crosspoints()
        .iter()
        .map(|&cp| {
            let (i, j) = mesh.grid_coords(mesh.free_vertex(cp));
            let (gx, gy) = (i / m, j / m);
            let mut profile = vec![(cp, 1.0)];
            for (dx, dy) in [(1i64, 0i64), (-1, 0), (0, 1), (0, -1)] {
                for t in 1..m {
                    let vi = (i as i64 + dx * t as i64) as usize;
                    let vj = (j as i64 + dy * t as i64) as usize;
                    let dof = mesh
                        .free_index(mesh.vertex_at(vi, vj))
                        .expect("edge interior points are free");
                    profile.push((dof, 1.0 - t as f64 / m as f64));
                }
            }
            let boundary = SparseVector::from_pairs(profile);
            let mut pairs: Vec<(usize, f64)> = boundary.iter().collect();
            for sy in [gy - 1, gy] {
                for sx in [gx - 1, gx] {
                    let k = sy * n_sub + sx;
                    pairs.extend(extender.extend_interior(a_fem, k, &boundary));
                }
            }
            SparseVector::from_pairs(pairs)
        })
        .collect()
}

/// Edge basis columns for one interface edge: a hat at each interior edge
/// DOF, zero on the rest of the interface, harmonically extended into the
/// two adjacent subdomains.
pub fn edge_basis(
    partition: &Partition,
    a_fem: &SparseOperator,
    extender: &HarmonicExtender,
    edge: usize,
) -> Vec<SparseVector> {
    let record = &partition.edges()[edge];
    record
        .dofs
        .iter()
        .map(|&dof| {
            let boundary = SparseVector::from_pairs(vec![(dof, 1.0)]);
            let mut pairs: Vec<(usize, f64)> = boundary.iter().collect();
            pairs.extend(extender.extend_interior(a_fem, record.subdomains.0, &boundary));
            pairs.extend(extender.extend_interior(a_fem, record.subdomains.1, &boundary));
            SparseVector::from_pairs(pairs)
        })
        .collect()
}
