//! Conforming triangulations of the unit square and nested refinement hierarchies.

use crate::{Error, Result};
use std::collections::HashMap;
use std::io::Write;
use std::sync::Arc;

/// A conforming triangle mesh with counterclockwise element orientation.
#[derive(Debug, Clone)]
pub struct Triangulation {
    level: u32,
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    /// Unique edges as sorted vertex pairs, in first-seen scan order.
    edges: Vec<[usize; 2]>,
    /// Per triangle: edge ids of (v0,v1), (v1,v2), (v2,v0).
    triangle_edges: Vec<[usize; 3]>,
    boundary_vertex: Vec<bool>,
    boundary_edge: Vec<bool>,
    mesh_size: f64,
}

impl Triangulation {
    fn from_cells(vertices: Vec<[f64; 2]>, triangles: Vec<[usize; 3]>, level: u32) -> Result<Self> {
        let nv = vertices.len();
        let mut edge_ids: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edges: Vec<[usize; 2]> = Vec::new();
        let mut incidence: Vec<u8> = Vec::new();
        let mut triangle_edges = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            for &v in tri {
                if v >= nv {
                    return Err(Error::Mesh(format!(
                        "triangle {t} references vertex {v} but mesh has {nv} vertices"
                    )));
                }
            }
            let [a, b, c] = *tri;
            if a == b || b == c || a == c {
                return Err(Error::Mesh(format!("triangle {t} has repeated vertices")));
            }
            let mut ids = [0usize; 3];
            for (k, (p, q)) in [(a, b), (b, c), (c, a)].into_iter().enumerate() {
                let key = (p.min(q), p.max(q));
                let id = *edge_ids.entry(key).or_insert_with(|| {
                    edges.push([key.0, key.1]);
                    incidence.push(0);
                    edges.len() - 1
                });
                incidence[id] += 1;
                ids[k] = id;
            }
            triangle_edges.push(ids);
        }
        for (e, &count) in incidence.iter().enumerate() {
            if count > 2 {
                return Err(Error::Mesh(format!(
                    "edge {:?} shared by {count} triangles; mesh is not conforming",
                    edges[e]
                )));
            }
        }
        let boundary_edge: Vec<bool> = incidence.iter().map(|&c| c == 1).collect();
        let mut boundary_vertex = vec![false; nv];
        for (e, &[p, q]) in edges.iter().enumerate() {
            if boundary_edge[e] {
                boundary_vertex[p] = true;
                boundary_vertex[q] = true;
            }
        }
        let mesh_size = edges
            .iter()
            .map(|&[p, q]| {
                let d = [vertices[q][0] - vertices[p][0], vertices[q][1] - vertices[p][1]];
                (d[0] * d[0] + d[1] * d[1]).sqrt()
            })
            .fold(0.0, f64::max);
        let mesh = Self {
            level,
            vertices,
            triangles,
            edges,
            triangle_edges,
            boundary_vertex,
            boundary_edge,
            mesh_size,
        };
        for t in 0..mesh.n_triangles() {
            if mesh.signed_area(t) <= 0.0 {
                return Err(Error::Mesh(format!(
                    "triangle {t} is degenerate or clockwise (signed area {})",
                    mesh.signed_area(t)
                )));
            }
        }
        Ok(mesh)
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn vertex(&self, v: usize) -> [f64; 2] {
        self.vertices[v]
    }

    pub fn triangle(&self, t: usize) -> [usize; 3] {
        self.triangles[t]
    }

    pub fn edge(&self, e: usize) -> [usize; 2] {
        self.edges[e]
    }

    pub fn triangle_edge_ids(&self, t: usize) -> [usize; 3] {
        self.triangle_edges[t]
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.boundary_vertex[v]
    }

    pub fn is_boundary_edge(&self, e: usize) -> bool {
        self.boundary_edge[e]
    }

    /// Longest edge length.
    pub fn mesh_size(&self) -> f64 {
        self.mesh_size
    }

    fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        let p = self.vertices[a];
        let q = self.vertices[b];
        let r = self.vertices[c];
        0.5 * ((q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0]))
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        self.signed_area(t)
    }

    /// Corner coordinates of triangle `t`.
    pub fn triangle_coords(&self, t: usize) -> [[f64; 2]; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Physical coordinates of a barycentric point inside triangle `t`.
    pub fn point_in_triangle(&self, t: usize, bary: [f64; 3]) -> [f64; 2] {
        let [p, q, r] = self.triangle_coords(t);
        [
            bary[0] * p[0] + bary[1] * q[0] + bary[2] * r[0],
            bary[0] * p[1] + bary[1] * q[1] + bary[2] * r[1],
        ]
    }

    /// Barycentric coordinates of physical point `x` with respect to triangle `t`.
    pub fn barycentric(&self, t: usize, x: [f64; 2]) -> [f64; 3] {
        let [p, q, r] = self.triangle_coords(t);
        let det = (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0]);
        let l1 = ((x[0] - p[0]) * (r[1] - p[1]) - (x[1] - p[1]) * (r[0] - p[0])) / det;
        let l2 = ((q[0] - p[0]) * (x[1] - p[1]) - (q[1] - p[1]) * (x[0] - p[0])) / det;
        [1.0 - l1 - l2, l1, l2]
    }

    /// Writes the plain-text mesh format: a `vertices N triangles M` header,
    /// then one `x y boundary_flag` line per vertex and one `i j k` line per triangle.
    pub fn write_text<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "vertices {} triangles {}", self.n_vertices(), self.n_triangles())?;
        for (v, p) in self.vertices.iter().enumerate() {
            writeln!(w, "{} {} {}", p[0], p[1], u8::from(self.boundary_vertex[v]))?;
        }
        for tri in &self.triangles {
            writeln!(w, "{} {} {}", tri[0], tri[1], tri[2])?;
        }
        Ok(())
    }
}

/// Deterministic bit mixer used to pick diagonal directions; a fixed-key
/// splitmix so meshes are reproducible across runs and platforms.
fn cell_bit(k: u64) -> bool {
    let mut z = k.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    (z ^ (z >> 31)) & 1 == 1
}

/// Uniform n-by-n triangulation of the unit square; each cell is split along
/// one of its diagonals. The direction is chosen by a fixed deterministic
/// hash of the cell index: an irregular pattern avoids the mesh translation
/// symmetries that produce misleading superconvergence in rate studies,
/// while keeping the mesh reproducible.
pub fn build_structured_mesh(n: usize) -> Result<Triangulation> {
    if n == 0 {
        return Err(Error::Mesh("structured mesh needs n >= 1".into()));
    }
    let np = n + 1;
    let mut vertices = Vec::with_capacity(np * np);
    for j in 0..np {
        for i in 0..np {
            vertices.push([i as f64 / n as f64, j as f64 / n as f64]);
        }
    }
    let idx = |i: usize, j: usize| j * np + i;
    let mut triangles = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let v00 = idx(i, j);
            let v10 = idx(i + 1, j);
            let v01 = idx(i, j + 1);
            let v11 = idx(i + 1, j + 1);
            if cell_bit((j * n + i) as u64) {
                triangles.push([v00, v10, v11]);
                triangles.push([v00, v11, v01]);
            } else {
                triangles.push([v00, v10, v01]);
                triangles.push([v10, v11, v01]);
            }
        }
    }
    Triangulation::from_cells(vertices, triangles, 0)
}

/// Red refinement: every triangle is split into four congruent children by
/// connecting edge midpoints. Returns the refined mesh and the parent triangle
/// of each child. Children of parent `t` are `4t..4t+4`; the first three keep
/// a corner of the parent, the fourth is the interior triangle.
pub fn refine_uniform(mesh: &Triangulation) -> Result<(Triangulation, Vec<usize>)> {
    let nv = mesh.n_vertices();
    let mut vertices = mesh.vertices.clone();
    vertices.reserve(mesh.n_edges());
    for &[p, q] in &mesh.edges {
        let a = mesh.vertices[p];
        let b = mesh.vertices[q];
        vertices.push([0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]);
    }
    let mut triangles = Vec::with_capacity(4 * mesh.n_triangles());
    let mut parent = Vec::with_capacity(4 * mesh.n_triangles());
    for t in 0..mesh.n_triangles() {
        let [v0, v1, v2] = mesh.triangles[t];
        let [e01, e12, e20] = mesh.triangle_edges[t];
        let m01 = nv + e01;
        let m12 = nv + e12;
        let m20 = nv + e20;
        triangles.push([v0, m01, m20]);
        triangles.push([m01, v1, m12]);
        triangles.push([m20, m12, v2]);
        triangles.push([m01, m12, m20]);
        parent.extend_from_slice(&[t, t, t, t]);
    }
    let refined = Triangulation::from_cells(vertices, triangles, mesh.level + 1)?;
    Ok((refined, parent))
}

/// A nested family of meshes produced by uniform refinement of a common
/// coarse mesh. `levels[0]` is the coarsest.
#[derive(Debug, Clone)]
pub struct MeshHierarchy {
    levels: Vec<Arc<Triangulation>>,
    /// `parents[k][child]` is the level-`k` parent of triangle `child` on level `k+1`.
    parents: Vec<Vec<usize>>,
}

impl MeshHierarchy {
    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn level(&self, k: usize) -> &Arc<Triangulation> {
        &self.levels[k]
    }

    pub fn coarsest(&self) -> &Arc<Triangulation> {
        &self.levels[0]
    }

    pub fn finest(&self) -> &Arc<Triangulation> {
        self.levels.last().unwrap()
    }

    /// Ancestor of triangle `tri` (living on `level`) at the coarser `target_level`.
    pub fn ancestor(&self, level: usize, tri: usize, target_level: usize) -> usize {
        assert!(target_level <= level && level < self.levels.len());
        let mut t = tri;
        for k in (target_level..level).rev() {
            t = self.parents[k][t];
        }
        t
    }
}

/// Builds `fine_levels` uniform refinements on top of a structured n-by-n coarse mesh.
pub fn build_hierarchy(n_coarse: usize, fine_levels: usize) -> Result<MeshHierarchy> {
    let mut levels = vec![Arc::new(build_structured_mesh(n_coarse)?)];
    let mut parents = Vec::new();
    for _ in 0..fine_levels {
        let (next, parent) = refine_uniform(levels.last().unwrap())?;
        levels.push(Arc::new(next));
        parents.push(parent);
    }
    Ok(MeshHierarchy { levels, parents })
}

/// Smallest hierarchy level whose cell size resolves `H^2`, i.e. the first
/// level `k` with `cell(k) <= sqrt(2) * H^2` where `cell = mesh_size / sqrt(2)`
/// is the axis-aligned cell width of the structured family. With `H` the coarse
/// cell width `1/n`, this reproduces the pairs (1/2 -> 1/4) and (1/4 -> 1/16).
pub fn choose_fine_level_for_coupling(h_coarse: f64, hierarchy: &MeshHierarchy) -> Result<usize> {
    let target = std::f64::consts::SQRT_2 * h_coarse * h_coarse;
    for k in 0..hierarchy.n_levels() {
        let cell = hierarchy.level(k).mesh_size() / std::f64::consts::SQRT_2;
        if cell <= target * (1.0 + 1e-12) {
            return Ok(k);
        }
    }
    let finest_cell = hierarchy.finest().mesh_size() / std::f64::consts::SQRT_2;
    let needed = (finest_cell / target).log2().ceil() as usize;
    Err(Error::Mesh(format!(
        "no hierarchy level resolves H^2 = {:.3e} (finest cell {:.3e}); add about {} refinement level(s)",
        h_coarse * h_coarse,
        finest_cell,
        needed.max(1)
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn structured_counts() {
        let m1 = build_structured_mesh(1).unwrap();
        assert_eq!(m1.n_vertices(), 4);
        assert_eq!(m1.n_triangles(), 2);
        let m2 = build_structured_mesh(2).unwrap();
        assert_eq!(m2.n_vertices(), 9);
        assert_eq!(m2.n_triangles(), 8);
        for n in [3usize, 4, 7] {
            let m = build_structured_mesh(n).unwrap();
            assert_eq!(m.n_vertices(), (n + 1) * (n + 1));
            assert_eq!(m.n_triangles(), 2 * n * n);
            // Euler: V - E + T = 1 for a disk
            assert_eq!(m.n_edges(), m.n_vertices() + m.n_triangles() - 1);
        }
    }

    #[test]
    fn structured_mesh_size_and_areas() {
        for n in [1usize, 2, 4, 8] {
            let m = build_structured_mesh(n).unwrap();
            assert!((m.mesh_size() - std::f64::consts::SQRT_2 / n as f64).abs() < 1e-15);
            let total: f64 = (0..m.n_triangles()).map(|t| m.triangle_area(t)).sum();
            assert!((total - 1.0).abs() < 1e-14, "area sum {total}");
            for t in 0..m.n_triangles() {
                assert!(m.triangle_area(t) > 0.0);
            }
        }
    }

    #[test]
    fn boundary_detection() {
        for n in [2usize, 4, 5] {
            let m = build_structured_mesh(n).unwrap();
            let flagged = (0..m.n_vertices()).filter(|&v| m.is_boundary_vertex(v)).count();
            assert_eq!(flagged, 4 * n);
            for v in 0..m.n_vertices() {
                let [x, y] = m.vertex(v);
                let on_edge = x == 0.0 || x == 1.0 || y == 0.0 || y == 1.0;
                assert_eq!(m.is_boundary_vertex(v), on_edge);
            }
        }
    }

    #[test]
    fn refinement_counts_and_nesting() {
        let coarse = build_structured_mesh(2).unwrap();
        let (fine, parent) = refine_uniform(&coarse).unwrap();
        assert_eq!(fine.n_triangles(), 4 * coarse.n_triangles());
        assert_eq!(fine.n_vertices(), coarse.n_vertices() + coarse.n_edges());
        assert_eq!(fine.level(), 1);
        assert_eq!(parent.len(), fine.n_triangles());
        // each child covers a quarter of its parent and sits inside it
        for c in 0..fine.n_triangles() {
            let p = parent[c];
            assert_eq!(p, c / 4);
            assert!((fine.triangle_area(c) - 0.25 * coarse.triangle_area(p)).abs() < 1e-15);
            let centroid = fine.point_in_triangle(c, [1.0 / 3.0; 3]);
            let bc = coarse.barycentric(p, centroid);
            assert!(bc.iter().all(|&l| (-1e-12..=1.0 + 1e-12).contains(&l)));
        }
        // first 9 coarse vertices keep their ids and coordinates
        for v in 0..coarse.n_vertices() {
            assert_eq!(coarse.vertex(v), fine.vertex(v));
        }
        let total: f64 = (0..fine.n_triangles()).map(|t| fine.triangle_area(t)).sum();
        assert!((total - 1.0).abs() < 1e-14);
    }

    #[test]
    fn refined_matches_structured_size() {
        // refining n=2 twice gives the cell size of n=8
        let h = build_hierarchy(2, 2).unwrap();
        let direct = build_structured_mesh(8).unwrap();
        assert!((h.finest().mesh_size() - direct.mesh_size()).abs() < 1e-15);
        assert_eq!(h.finest().n_triangles(), direct.n_triangles());
        assert_eq!(h.finest().n_vertices(), direct.n_vertices());
    }

    #[test]
    fn hierarchy_ancestor_chain() {
        let h = build_hierarchy(2, 3).unwrap();
        assert_eq!(h.n_levels(), 4);
        let fine = h.level(3);
        for t in 0..fine.n_triangles() {
            let centroid = fine.point_in_triangle(t, [1.0 / 3.0; 3]);
            for target in 0..3 {
                let a = h.ancestor(3, t, target);
                let bc = h.level(target).barycentric(a, centroid);
                assert!(
                    bc.iter().all(|&l| (-1e-12..=1.0 + 1e-12).contains(&l)),
                    "centroid of fine {t} outside ancestor {a} on level {target}"
                );
            }
            assert_eq!(h.ancestor(3, t, 3), t);
        }
    }

    #[test]
    fn coupling_rule_examples() {
        let h = build_hierarchy(4, 3).unwrap();
        assert_eq!(choose_fine_level_for_coupling(0.25, &h).unwrap(), 2);
        let h2 = build_hierarchy(2, 2).unwrap();
        assert_eq!(choose_fine_level_for_coupling(0.5, &h2).unwrap(), 1);
        // too-shallow hierarchy is rejected with a hint
        let shallow = build_hierarchy(4, 1).unwrap();
        let err = choose_fine_level_for_coupling(0.25, &shallow).unwrap_err();
        assert!(err.to_string().contains("refinement level"), "{err}");
    }

    #[test]
    fn construction_is_deterministic() {
        let a = build_structured_mesh(4).unwrap();
        let b = build_structured_mesh(4).unwrap();
        assert_eq!(a.triangles, b.triangles);
        assert_eq!(a.edges, b.edges);
        let (ra, pa) = refine_uniform(&a).unwrap();
        let (rb, pb) = refine_uniform(&b).unwrap();
        assert_eq!(ra.triangles, rb.triangles);
        assert_eq!(pa, pb);
    }

    #[test]
    fn nonconforming_mesh_rejected() {
        // three triangles sharing one edge
        let verts = vec![[0.0, 0.0], [1.0, 0.0], [0.5, 1.0], [0.5, -1.0], [1.5, 1.0]];
        let tris = vec![[0, 1, 2], [0, 3, 1], [0, 1, 4]];
        assert!(Triangulation::from_cells(verts, tris, 0).is_err());
    }

    #[test]
    fn clockwise_triangle_rejected() {
        let verts = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        assert!(Triangulation::from_cells(verts.clone(), vec![[0, 2, 1]], 0).is_err());
        assert!(Triangulation::from_cells(verts, vec![[0, 1, 2]], 0).is_ok());
    }

    #[test]
    fn text_export_round_shape() {
        let m = build_structured_mesh(1).unwrap();
        let mut buf = Vec::new();
        m.write_text(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let expected = "vertices 4 triangles 2\n\
                        0 0 1\n1 0 1\n0 1 1\n1 1 1\n\
                        0 1 3\n0 3 2\n";
        assert_eq!(text, expected);
    }

    #[test]
    fn barycentric_round_trip() {
        let m = build_structured_mesh(3).unwrap();
        for t in [0usize, 5, 11] {
            let b = [0.2, 0.3, 0.5];
            let x = m.point_in_triangle(t, b);
            let back = m.barycentric(t, x);
            for k in 0..3 {
                assert!((b[k] - back[k]).abs() < 1e-14);
            }
        }
    }
}
