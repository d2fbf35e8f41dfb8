//! Structured primal triangulation of the unit square and the Donald dual
//! mesh built from edge midpoints and triangle centroids.
//!
//! The grid has `n` subdivisions per side (`h = 1/n`); every square cell is
//! split by its lower-left to upper-right diagonal. Vertices are numbered
//! row-major by grid coordinates and free (non-Dirichlet) degrees of freedom
//! are numbered in the same order skipping boundary vertices, so assembled
//! matrices are reproducible bit for bit.

use std::ops::{Add, Mul, Sub};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("mesh needs at least 2 subdivisions per side, got {0}")]
    TooCoarse(usize),
}

/// Point (or vector) in the plane.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, other: Self) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Counterclockwise perpendicular (-y, x).
    pub fn perp(self) -> Self {
        Self::new(-self.y, self.x)
    }

    pub fn midpoint(self, other: Self) -> Self {
        Self::new(0.5 * (self.x + other.x), 0.5 * (self.y + other.y))
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, rhs: Point2) -> Point2 {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, rhs: Point2) -> Point2 {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, s: f64) -> Point2 {
        Point2::new(self.x * s, self.y * s)
    }
}

/// Primal triangulation of the unit square.
#[derive(Debug, Clone)]
pub struct TriangleMesh {
    n: usize,
    vertices: Vec<Point2>,
    triangles: Vec<[usize; 3]>,
    boundary: Vec<bool>,
    free_index: Vec<Option<usize>>,
    free_vertices: Vec<usize>,
}

/// Builds the uniform n x n criss-cross mesh, each cell split by the
/// diagonal from its lower-left to its upper-right corner.
pub fn build_structured_mesh(n: usize) -> Result<TriangleMesh, MeshError> {
    if n < 2 {
        return Err(MeshError::TooCoarse(n));
    }
    let h = 1.0 / n as f64;
    let side = n + 1;
    let mut vertices = Vec::with_capacity(side * side);
    let mut boundary = Vec::with_capacity(side * side);
    for j in 0..side {
        for i in 0..side {
            vertices.push(Point2::new(i as f64 * h, j as f64 * h));
            boundary.push(i == 0 || j == 0 || i == n || j == n);
        }
    }
    let mut triangles = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let v00 = j * side + i;
            let v10 = v00 + 1;
            let v01 = v00 + side;
            let v11 = v01 + 1;
            // Lower-right then upper-left triangle, both counterclockwise.
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
        }
    }
    let mut free_index = vec![None; side * side];
    let mut free_vertices = Vec::new();
    for (v, &on_boundary) in boundary.iter().enumerate() {
        if !on_boundary {
            free_index[v] = Some(free_vertices.len());
            free_vertices.push(v);
        }
    }
    Ok(TriangleMesh {
        n,
        vertices,
        triangles,
        boundary,
        free_index,
        free_vertices,
    })
}

impl TriangleMesh {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn num_free_dofs(&self) -> usize {
        self.free_vertices.len()
    }

    pub fn vertex(&self, v: usize) -> Point2 {
        self.vertices[v]
    }

    pub fn triangle(&self, t: usize) -> [usize; 3] {
        self.triangles[t]
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn is_boundary(&self, v: usize) -> bool {
        self.boundary[v]
    }

    /// Free DOF index of a vertex, `None` on the Dirichlet boundary.
    pub fn free_index(&self, v: usize) -> Option<usize> {
        self.free_index[v]
    }

    /// Vertex carrying the given free DOF.
    pub fn free_vertex(&self, dof: usize) -> usize {
        self.free_vertices[dof]
    }

    /// Vertex index from grid coordinates (i, j), 0 <= i, j <= n.
    pub fn vertex_at(&self, i: usize, j: usize) -> usize {
        j * (self.n + 1) + i
    }

    /// Grid coordinates of a vertex.
    pub fn grid_coords(&self, v: usize) -> (usize, usize) {
        (v % (self.n + 1), v / (self.n + 1))
    }

    pub fn triangle_points(&self, t: usize) -> [Point2; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Signed area of triangle `t` (positive for this mesh).
    pub fn triangle_area(&self, t: usize) -> f64 {
        let [p1, p2, p3] = self.triangle_points(t);
        0.5 * ((p2 - p1).x * (p3 - p1).y - (p2 - p1).y * (p3 - p1).x)
    }

    pub fn centroid(&self, t: usize) -> Point2 {
        let [p1, p2, p3] = self.triangle_points(t);
        (p1 + p2 + p3) * (1.0 / 3.0)
    }

    /// Plain-text summary of the mesh.
    pub fn summary(&self) -> String {
        format!(
            "mesh: n={} h={:.6e} vertices={} triangles={} free_dofs={} diagonal=lower-left/upper-right",
            self.n,
            self.h(),
            self.num_vertices(),
            self.num_triangles(),
            self.num_free_dofs()
        )
    }
}

/// One straight piece of a control-volume boundary inside a triangle: from
/// an edge midpoint to the centroid (or back), bounding the region of
/// `owner` (local vertex 0..3).
#[derive(Debug, Clone, Copy)]
pub struct DualSegment {
    pub triangle: usize,
    pub owner: usize,
    pub start: Point2,
    pub end: Point2,
    pub midpoint: Point2,
    /// Unit outward normal of the owner region scaled by segment length.
    pub normal: Point2,
}

/// The six dual segments of every triangle (two per vertex region).
pub fn dual_segments(mesh: &TriangleMesh) -> Vec<DualSegment> {
    let mut segments = Vec::with_capacity(6 * mesh.num_triangles());
    for t in 0..mesh.num_triangles() {
        let pts = mesh.triangle_points(t);
        let c = mesh.centroid(t);
        for owner in 0..3 {
            let pa = pts[owner];
            let m_ab = pa.midpoint(pts[(owner + 1) % 3]);
            let m_ac = pa.midpoint(pts[(owner + 2) % 3]);
            // Region centroid of the quad (pa, m_ab, c, m_ac).
            let g = (pa + m_ab + c + m_ac) * 0.25;
            for (s, e) in [(m_ab, c), (c, m_ac)] {
                let mid = s.midpoint(e);
                let mut normal = (e - s).perp();
                if normal.dot(mid - g) < 0.0 {
                    normal = normal * -1.0;
                }
                segments.push(DualSegment {
                    triangle: t,
                    owner,
                    start: s,
                    end: e,
                    midpoint: mid,
                    normal,
                });
            }
        }
    }
    segments
}

/// Control volume areas, one per vertex: |omega_x| = sum of |tau|/3 over
/// the incident triangles.
pub fn control_volume_areas(mesh: &TriangleMesh) -> Vec<f64> {
    let mut areas = vec![0.0; mesh.num_vertices()];
    for t in 0..mesh.num_triangles() {
        let third = mesh.triangle_area(t) / 3.0;
        for v in mesh.triangle(t) {
            areas[v] += third;
        }
    }
    areas
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_for_small_meshes() {
        let m = build_structured_mesh(2).unwrap();
        assert_eq!(m.num_vertices(), 9);
        assert_eq!(m.num_triangles(), 8);
        assert_eq!(m.num_free_dofs(), 1);
        assert_eq!(m.free_vertex(0), m.vertex_at(1, 1));

        let m = build_structured_mesh(8).unwrap();
        assert_eq!(m.num_vertices(), 81);
        assert_eq!(m.num_triangles(), 128);
        assert_eq!(m.num_free_dofs(), 49);
    }

    #[test]
    fn rejects_degenerate_subdivision() {
        assert!(matches!(build_structured_mesh(1), Err(MeshError::TooCoarse(1))));
    }

    #[test]
    fn triangle_areas_partition_unit_square() {
        let m = build_structured_mesh(4).unwrap();
        let total: f64 = (0..m.num_triangles()).map(|t| m.triangle_area(t)).sum();
        assert!((total - 1.0).abs() < 1e-14);
        for t in 0..m.num_triangles() {
            assert!(m.triangle_area(t) > 0.0);
        }
    }

    #[test]
    fn dual_segment_geometry_on_reference_triangle() {
        // Segment from m_12 = (1/2, 0) to the centroid of the unit right
        // triangle has length sqrt(5)/6.
        let m = build_structured_mesh(2).unwrap();
        let segs = dual_segments(&m);
        assert_eq!(segs.len(), 48);
        for s in &segs {
            let len = (s.end - s.start).norm();
            assert!((s.normal.norm() - len).abs() < 1e-14);
        }
        // Mesh triangle 0 spans (0,0), (1/2,0), (1/2,1/2): scaled copy of
        // the unit right triangle, so the segment length scales by 1/2.
        let tri0: Vec<&DualSegment> = segs.iter().filter(|s| s.triangle == 0).collect();
        assert_eq!(tri0.len(), 6);
        let expected = (5.0f64).sqrt() / 6.0 / 2.0;
        let found = tri0
            .iter()
            .any(|s| ((s.end - s.start).norm() - expected).abs() < 1e-13);
        assert!(found);
    }

    #[test]
    fn twin_segments_cancel() {
        let m = build_structured_mesh(3).unwrap();
        let segs = dual_segments(&m);
        for t in 0..m.num_triangles() {
            let tri: Vec<&DualSegment> = segs.iter().filter(|s| s.triangle == t).collect();
            for a in 0..6 {
                let mut twins = 0;
                for b in 0..6 {
                    if a != b && same_unordered(tri[a], tri[b]) {
                        twins += 1;
                        let sum = tri[a].normal + tri[b].normal;
                        assert!(sum.norm() < 1e-14);
                        assert_ne!(tri[a].owner, tri[b].owner);
                    }
                }
                assert_eq!(twins, 1);
            }
        }
    }

    fn same_unordered(a: &DualSegment, b: &DualSegment) -> bool {
        let eq = |p: Point2, q: Point2| (p - q).norm() < 1e-14;
        (eq(a.start, b.start) && eq(a.end, b.end)) || (eq(a.start, b.end) && eq(a.end, b.start))
    }

    #[test]
    fn constant_flux_through_owner_region_boundary_vanishes() {
        // For each owner region, the two dual segments plus the two pieces
        // along the triangle edges form a closed polygon; a constant field
        // has zero net flux through it.
        let m = build_structured_mesh(2).unwrap();
        let segs = dual_segments(&m);
        for t in 0..m.num_triangles() {
            let pts = m.triangle_points(t);
            for owner in 0..3 {
                let pa = pts[owner];
                let m_ab = pa.midpoint(pts[(owner + 1) % 3]);
                let m_ac = pa.midpoint(pts[(owner + 2) % 3]);
                let g = (pa + m_ab + m.centroid(t) + m_ac) * 0.25;
                let mut net = segs
                    .iter()
                    .filter(|s| s.triangle == t && s.owner == owner)
                    .fold(Point2::default(), |acc, s| acc + s.normal);
                // Outward normals of the edge pieces pa -> m_ab and m_ac -> pa.
                for (s, e) in [(pa, m_ab), (m_ac, pa)] {
                    let mut nrm = (e - s).perp();
                    if nrm.dot(s.midpoint(e) - g) < 0.0 {
                        nrm = nrm * -1.0;
                    }
                    net = net + nrm;
                }
                assert!(net.norm() < 1e-14);
            }
        }
    }

    #[test]
    fn control_volume_areas_match_donald_construction() {
        let m = build_structured_mesh(2).unwrap();
        let areas = control_volume_areas(&m);
        let center = m.vertex_at(1, 1);
        assert!((areas[center] - 0.25).abs() < 1e-14);
        // Bottom-right corner touches a single triangle, lower-left two.
        assert!((areas[m.vertex_at(2, 0)] - 1.0 / 24.0).abs() < 1e-14);
        assert!((areas[m.vertex_at(0, 0)] - 1.0 / 12.0).abs() < 1e-14);
        let total: f64 = areas.iter().sum();
        assert!((total - 1.0).abs() < 1e-13);
    }
}
