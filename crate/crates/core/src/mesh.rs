//! Conforming triangulations of the unit square.
//!
//! Meshes are structured: level `k` has `n = 2^k` segments per side and each
//! cell is split by one of its diagonals, lower-left to upper-right by
//! default. Uniform refinement by edge midpoints reproduces the next level
//! exactly.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// Default cap on the number of vertices a mesh may hold.
pub const DEFAULT_VERTEX_CAP: usize = 1_000_000;

/// Minimum admissible triangle area.
pub const MIN_AREA: f64 = 1e-16;

/// Diagonal direction used to split each square cell.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DiagonalConvention {
    /// Lower-left to upper-right.
    #[default]
    #[serde(rename = "ll-ur")]
    LowerLeftUpperRight,
    /// Upper-left to lower-right.
    #[serde(rename = "ul-lr")]
    UpperLeftLowerRight,
}

impl DiagonalConvention {
    pub fn tag(self) -> &'static str {
        match self {
            DiagonalConvention::LowerLeftUpperRight => "ll-ur",
            DiagonalConvention::UpperLeftLowerRight => "ul-lr",
        }
    }
}

impl std::str::FromStr for DiagonalConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ll-ur" => Ok(DiagonalConvention::LowerLeftUpperRight),
            "ul-lr" => Ok(DiagonalConvention::UpperLeftLowerRight),
            _ => Err(Error::Parse(format!("unknown diagonal convention '{s}'"))),
        }
    }
}

/// A mesh edge with canonical orientation `vertices[0] < vertices[1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    pub vertices: [usize; 2],
    /// One or two adjacent triangles.
    pub triangles: Vec<usize>,
}

impl Edge {
    pub fn is_boundary(&self) -> bool {
        self.triangles.len() == 1
    }
}

#[derive(Clone, Debug)]
pub struct TriMesh {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    edges: Vec<Edge>,
    /// `triangle_edges[t][e]` is the edge opposite local vertex `e`.
    triangle_edges: Vec<[usize; 3]>,
    boundary: Vec<bool>,
    level: u32,
    h: f64,
}

pub fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

fn dist(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn vertex_count(level: u32) -> Option<usize> {
    if level >= 31 {
        return None;
    }
    let n = 1usize << level;
    (n + 1).checked_mul(n + 1)
}

/// Structured mesh of the unit square at `level`, using the default vertex cap.
pub fn build_unit_square(level: u32) -> Result<TriMesh> {
    build_unit_square_with_cap(level, DEFAULT_VERTEX_CAP)
}

pub fn build_unit_square_with_cap(level: u32, vertex_cap: usize) -> Result<TriMesh> {
    build_unit_square_with(level, DiagonalConvention::default(), vertex_cap)
}

pub fn build_unit_square_with(level: u32, diagonal: DiagonalConvention, vertex_cap: usize) -> Result<TriMesh> {
    if level == 0 {
        return Err(Error::Capacity("mesh level must be at least 1".into()));
    }
    match vertex_count(level) {
        Some(count) if count <= vertex_cap => {}
        _ => {
            return Err(Error::Capacity(format!(
                "level {level} exceeds the vertex cap of {vertex_cap}"
            )))
        }
    }
    let n = 1usize << level;
    let stride = n + 1;
    let mut vertices = Vec::with_capacity(stride * stride);
    for j in 0..=n {
        for i in 0..=n {
            vertices.push([i as f64 / n as f64, j as f64 / n as f64]);
        }
    }
    let mut triangles = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let a = j * stride + i;
            let b = a + 1;
            let c = a + stride + 1;
            let d = a + stride;
            match diagonal {
                DiagonalConvention::LowerLeftUpperRight => {
                    triangles.push([a, b, c]);
                    triangles.push([a, c, d]);
                }
                DiagonalConvention::UpperLeftLowerRight => {
                    triangles.push([a, b, d]);
                    triangles.push([b, c, d]);
                }
            }
        }
    }
    TriMesh::from_parts(vertices, triangles, level)
}

/// Splits every triangle into four congruent children through its edge midpoints.
pub fn uniform_refine(mesh: &TriMesh) -> Result<TriMesh> {
    uniform_refine_with_cap(mesh, DEFAULT_VERTEX_CAP)
}

pub fn uniform_refine_with_cap(mesh: &TriMesh, vertex_cap: usize) -> Result<TriMesh> {
    let new_count = mesh.num_vertices() + mesh.num_edges();
    if new_count > vertex_cap {
        return Err(Error::Capacity(format!(
            "refinement to {new_count} vertices exceeds the vertex cap of {vertex_cap}"
        )));
    }
    let mut vertices = mesh.vertices.clone();
    vertices.reserve(mesh.num_edges());
    let mut midpoint = Vec::with_capacity(mesh.num_edges());
    for edge in &mesh.edges {
        let [i, j] = edge.vertices;
        let (a, b) = (mesh.vertices[i], mesh.vertices[j]);
        midpoint.push(vertices.len());
        vertices.push([0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]);
    }
    let mut triangles = Vec::with_capacity(4 * mesh.num_triangles());
    for (t, &[v0, v1, v2]) in mesh.triangles.iter().enumerate() {
        let [e0, e1, e2] = mesh.triangle_edges[t];
        // m_k is the midpoint of the edge opposite v_k.
        let (m0, m1, m2) = (midpoint[e0], midpoint[e1], midpoint[e2]);
        triangles.push([v0, m2, m1]);
        triangles.push([m2, v1, m0]);
        triangles.push([m1, m0, v2]);
        triangles.push([m2, m0, m1]);
    }
    TriMesh::from_parts(vertices, triangles, mesh.level + 1)
}

impl TriMesh {
    /// Builds connectivity for an arbitrary conforming triangulation.
    ///
    /// Triangles are reoriented counterclockwise if needed; degenerate
    /// triangles and non-manifold edges are rejected.
    pub fn from_parts(vertices: Vec<Point>, mut triangles: Vec<[usize; 3]>, level: u32) -> Result<Self> {
        let nv = vertices.len();
        for (t, tri) in triangles.iter_mut().enumerate() {
            if let Some(&bad) = tri.iter().find(|&&v| v >= nv) {
                return Err(Error::Index(format!("triangle {t} references vertex {bad} of {nv}")));
            }
            let area = signed_area(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]);
            if area.abs() <= MIN_AREA {
                return Err(Error::Geometry(format!("triangle {t} has area {area:e}")));
            }
            if area < 0.0 {
                tri.swap(1, 2);
            }
        }

        let mut keyed: Vec<(usize, usize, usize, usize)> = Vec::with_capacity(3 * triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            for e in 0..3 {
                let a = tri[(e + 1) % 3];
                let b = tri[(e + 2) % 3];
                keyed.push((a.min(b), a.max(b), t, e));
            }
        }
        keyed.sort_unstable();

        let mut edges: Vec<Edge> = Vec::new();
        let mut triangle_edges = vec![[usize::MAX; 3]; triangles.len()];
        for (i, j, t, e) in keyed {
            match edges.last_mut() {
                Some(last) if last.vertices == [i, j] => {
                    if last.triangles.len() == 2 {
                        return Err(Error::Geometry(format!("edge ({i},{j}) has more than two triangles")));
                    }
                    last.triangles.push(t);
                }
                _ => edges.push(Edge { vertices: [i, j], triangles: vec![t] }),
            }
            triangle_edges[t][e] = edges.len() - 1;
        }

        let mut boundary = vec![false; nv];
        for edge in edges.iter().filter(|e| e.is_boundary()) {
            boundary[edge.vertices[0]] = true;
            boundary[edge.vertices[1]] = true;
        }

        let h = triangles
            .iter()
            .map(|&[a, b, c]| {
                let (pa, pb, pc) = (vertices[a], vertices[b], vertices[c]);
                dist(pa, pb).max(dist(pb, pc)).max(dist(pc, pa))
            })
            .fold(0.0, f64::max);

        Ok(TriMesh { vertices, triangles, edges, triangle_edges, boundary, level, h })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn vertex(&self, i: usize) -> Point {
        self.vertices[i]
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn triangle_points(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn triangle_edges(&self, t: usize) -> [usize; 3] {
        self.triangle_edges[t]
    }

    pub fn boundary_flags(&self) -> &[bool] {
        &self.boundary
    }

    pub fn is_boundary(&self, i: usize) -> bool {
        self.boundary[i]
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn num_boundary_vertices(&self) -> usize {
        self.boundary.iter().filter(|&&b| b).count()
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    /// Largest triangle diameter.
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_points(t);
        signed_area(a, b, c)
    }

    /// Interior vertex indices in ascending order.
    pub fn interior_vertices(&self) -> Vec<usize> {
        (0..self.num_vertices()).filter(|&i| !self.boundary[i]).collect()
    }

    /// Area of the triangles touching each vertex.
    pub fn patch_areas(&self) -> Vec<f64> {
        let mut patch = vec![0.0; self.num_vertices()];
        for t in 0..self.num_triangles() {
            let area = self.area(t);
            for &v in &self.triangles[t] {
                patch[v] += area;
            }
        }
        patch
    }

    /// Lookup table from canonical vertex pair to edge index.
    pub fn edge_lookup(&self) -> HashMap<[usize; 2], usize> {
        self.edges.iter().enumerate().map(|(k, e)| (e.vertices, k)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DelaunayReport {
    pub ok: bool,
    pub violating_edges: Vec<usize>,
    pub tolerance: f64,
}

/// Checks the edge-weight form of the Delaunay condition: the summed
/// weights `ω_E^T` across each interior edge are nonnegative, and each
/// boundary edge weight is nonnegative.
pub fn delaunay_check(mesh: &TriMesh) -> Result<DelaunayReport> {
    let summed = crate::eafe::summed_edge_weights(mesh)?;
    let scale = summed.iter().fold(0.0_f64, |m, w| m.max(w.abs()));
    let tolerance = 1e-12 * scale;
    let violating_edges: Vec<usize> = summed
        .iter()
        .enumerate()
        .filter(|(_, &w)| w < -tolerance)
        .map(|(k, _)| k)
        .collect();
    Ok(DelaunayReport { ok: violating_edges.is_empty(), violating_edges, tolerance })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn total_area(mesh: &TriMesh) -> f64 {
        (0..mesh.num_triangles()).map(|t| mesh.area(t)).sum()
    }

    #[test]
    fn level_one_counts() {
        let mesh = build_unit_square(1).unwrap();
        assert_eq!(mesh.num_vertices(), 9);
        assert_eq!(mesh.num_triangles(), 8);
        assert!((mesh.h() - 2f64.sqrt() / 2.0).abs() < 1e-15);
        assert_eq!(mesh.interior_vertices(), vec![4]);
    }

    #[test]
    fn level_three_counts() {
        let mesh = build_unit_square(3).unwrap();
        assert_eq!(mesh.num_vertices(), 81);
        assert_eq!(mesh.num_triangles(), 128);
    }

    #[test]
    fn level_eight_counts_match_formula() {
        let mesh = build_unit_square(8).unwrap();
        assert_eq!(mesh.num_vertices(), (256 + 1) * (256 + 1));
        assert_eq!(mesh.num_vertices(), 66049);
        assert_eq!(mesh.num_triangles(), 2 * 4usize.pow(8));
        assert_eq!(mesh.num_triangles(), 131072);
    }

    #[test]
    fn counts_match_explicit_construction_at_small_levels() {
        for k in 1..=4u32 {
            let mesh = build_unit_square(k).unwrap();
            let n = 1usize << k;
            assert_eq!(mesh.num_vertices(), (n + 1) * (n + 1));
            assert_eq!(mesh.num_triangles(), 2 * n * n);
        }
    }

    #[test]
    fn invalid_levels() {
        assert!(matches!(build_unit_square(0), Err(Error::Capacity(_))));
        assert!(matches!(build_unit_square(10), Err(Error::Capacity(_))));
        assert!(matches!(build_unit_square(200), Err(Error::Capacity(_))));
        assert!(matches!(build_unit_square_with_cap(3, 80), Err(Error::Capacity(_))));
        let mesh = build_unit_square(2).unwrap();
        assert!(matches!(uniform_refine_with_cap(&mesh, 50), Err(Error::Capacity(_))));
    }

    #[test]
    fn refine_counts_and_boundary() {
        let mesh = build_unit_square(1).unwrap();
        let fine = uniform_refine(&mesh).unwrap();
        assert_eq!(fine.num_vertices(), 25);
        assert_eq!(fine.num_triangles(), 32);
        assert_eq!(fine.level(), 2);
        for k in 1..=4u32 {
            let mesh = build_unit_square(k).unwrap();
            assert_eq!(mesh.num_boundary_vertices(), 4 << k);
            let fine = uniform_refine(&mesh).unwrap();
            assert_eq!(fine.num_boundary_vertices(), 4 << (k + 1));
        }
    }

    fn sorted_points(mesh: &TriMesh) -> Vec<(i64, i64)> {
        let scale = (1u64 << 20) as f64;
        let mut pts: Vec<(i64, i64)> = mesh
            .vertices()
            .iter()
            .map(|p| ((p[0] * scale).round() as i64, (p[1] * scale).round() as i64))
            .collect();
        pts.sort_unstable();
        pts
    }

    fn sorted_triangles(mesh: &TriMesh) -> Vec<[(i64, i64); 3]> {
        let scale = (1u64 << 20) as f64;
        let key = |p: Point| ((p[0] * scale).round() as i64, (p[1] * scale).round() as i64);
        let mut tris: Vec<[(i64, i64); 3]> = (0..mesh.num_triangles())
            .map(|t| {
                let mut k = mesh.triangle_points(t).map(key);
                k.sort_unstable();
                k
            })
            .collect();
        tris.sort_unstable();
        tris
    }

    #[test]
    fn refined_mesh_equals_next_level() {
        let refined = uniform_refine(&build_unit_square(2).unwrap()).unwrap();
        let direct = build_unit_square(3).unwrap();
        assert_eq!(sorted_points(&refined), sorted_points(&direct));
        assert_eq!(sorted_triangles(&refined), sorted_triangles(&direct));
        assert!((refined.h() - direct.h()).abs() < 1e-15);
    }

    #[test]
    fn other_diagonal_refines_consistently() {
        let ul = DiagonalConvention::UpperLeftLowerRight;
        let coarse = build_unit_square_with(2, ul, DEFAULT_VERTEX_CAP).unwrap();
        let direct = build_unit_square_with(3, ul, DEFAULT_VERTEX_CAP).unwrap();
        let refined = uniform_refine(&coarse).unwrap();
        assert_eq!(sorted_points(&refined), sorted_points(&direct));
        assert_eq!(sorted_triangles(&refined), sorted_triangles(&direct));
        assert_ne!(sorted_triangles(&direct), sorted_triangles(&build_unit_square(3).unwrap()));
        assert!(delaunay_check(&direct).unwrap().ok);
        assert_eq!("ul-lr".parse::<DiagonalConvention>().unwrap(), ul);
        assert!("x".parse::<DiagonalConvention>().is_err());
    }

    #[test]
    fn invariants_hold_across_levels() {
        let h1 = build_unit_square(1).unwrap().h();
        let mut mesh = build_unit_square(1).unwrap();
        for _ in 0..5 {
            assert!((total_area(&mesh) - 1.0).abs() < 1e-12);
            assert!((0..mesh.num_triangles()).all(|t| mesh.area(t) > 0.0));
            let v = mesh.num_vertices() as i64;
            let e = mesh.num_edges() as i64;
            let f = mesh.num_triangles() as i64;
            assert_eq!(v - e + f, 1);
            let expected_h = 2f64.powi(1 - mesh.level() as i32) * h1;
            assert!((mesh.h() - expected_h).abs() < 1e-14);
            for edge in mesh.edges() {
                let [i, j] = edge.vertices;
                assert!(i < j);
                for &t in &edge.triangles {
                    let tri = mesh.triangles()[t];
                    assert!(tri.contains(&i) && tri.contains(&j));
                }
                let on_boundary = mesh.is_boundary(i) && mesh.is_boundary(j);
                if !on_boundary {
                    assert_eq!(edge.triangles.len(), 2);
                }
            }
            assert!(delaunay_check(&mesh).unwrap().ok);
            mesh = uniform_refine(&mesh).unwrap();
        }
    }

    #[test]
    fn structured_mesh_is_delaunay() {
        let report = delaunay_check(&build_unit_square(3).unwrap()).unwrap();
        assert!(report.ok);
        assert!(report.violating_edges.is_empty());
    }

    #[test]
    fn equilateral_triangle_is_delaunay() {
        let mesh = TriMesh::from_parts(
            vec![[0.0, 0.0], [1.0, 0.0], [0.5, 3f64.sqrt() / 2.0]],
            vec![[0, 1, 2]],
            1,
        )
        .unwrap();
        assert!(delaunay_check(&mesh).unwrap().ok);
    }

    #[test]
    fn obtuse_pair_violates_delaunay() {
        // Two triangles sharing the edge (0,1) with 100° opposite angles:
        // apex at distance d from the midpoint with tan(50°) = (1/2) / d.
        let d = 0.5 / 50f64.to_radians().tan();
        let mesh = TriMesh::from_parts(
            vec![[0.0, 0.0], [1.0, 0.0], [0.5, d], [0.5, -d]],
            vec![[0, 1, 2], [1, 0, 3]],
            1,
        )
        .unwrap();
        let report = delaunay_check(&mesh).unwrap();
        assert!(!report.ok);
        let shared = mesh.edge_lookup()[&[0, 1]];
        assert_eq!(report.violating_edges, vec![shared]);
    }

    #[test]
    fn degenerate_triangle_rejected() {
        let err = TriMesh::from_parts(vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]], vec![[0, 1, 2]], 1);
        assert!(matches!(err, Err(Error::Geometry(_))));
        let err = TriMesh::from_parts(vec![[0.0, 0.0], [1.0, 0.0]], vec![[0, 1, 2]], 1);
        assert!(matches!(err, Err(Error::Index(_))));
    }

    #[test]
    fn clockwise_input_is_reoriented() {
        let mesh = TriMesh::from_parts(vec![[0.0, 0.0], [0.0, 1.0], [1.0, 0.0]], vec![[0, 1, 2]], 1).unwrap();
        assert!(mesh.area(0) > 0.0);
    }
}
