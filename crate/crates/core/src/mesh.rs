//! Structured P1 triangulations of axis-aligned rectangles and their
//! one-dimensional interface traces.
//!
//! Meshes are immutable after construction and safe to share across threads.

use crate::error::{invalid, Result};

/// Axis-aligned rectangle `[x0, x1] x [y0, y1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Rect {
        Rect { x0, y0, x1, y1 }
    }

    pub fn unit_square() -> Rect {
        Rect::new(0.0, 0.0, 1.0, 1.0)
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }
}

/// Which way the diagonal of each grid cell runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Diagonal {
    /// Diagonal from the south-west to the north-east corner.
    Ne,
    /// Diagonal from the south-east to the north-west corner.
    Nw,
}

/// One of the four sides of the meshed rectangle.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RectSide {
    Left,
    Right,
    Bottom,
    Top,
}

/// Role of a boundary edge in the coupled problem.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EdgeTag {
    /// Edge on the outer boundary; vertices on it carry Dirichlet data.
    OuterDirichlet,
    /// Edge on the interface between the two subdomains.
    Interface,
}

#[derive(Clone, Copy, Debug)]
pub struct BoundaryEdge {
    /// Vertex indices, ordered by increasing coordinate along the side.
    pub vertices: [usize; 2],
    /// Side of the rectangle the edge lies on.
    pub side: RectSide,
    pub tag: EdgeTag,
    /// The unique triangle this edge belongs to.
    pub triangle: usize,
}

/// Conforming triangulation of an axis-aligned rectangle.
#[derive(Clone, Debug)]
pub struct Mesh2D {
    /// Vertex coordinates.
    pub vertices: Vec<[f64; 2]>,
    /// Vertex index triples, counter-clockwise.
    pub triangles: Vec<[usize; 3]>,
    pub boundary_edges: Vec<BoundaryEdge>,
    /// Max triangle diameter.
    pub cell_size: f64,
}

impl Mesh2D {
    /// Build a mesh from raw parts; `cell_size` is derived.
    pub fn from_parts(
        vertices: Vec<[f64; 2]>,
        triangles: Vec<[usize; 3]>,
        boundary_edges: Vec<BoundaryEdge>,
    ) -> Result<Mesh2D> {
        if vertices.len() < 3 || triangles.is_empty() {
            return Err(invalid("mesh needs at least one triangle"));
        }
        for t in &triangles {
            if t.iter().any(|&v| v >= vertices.len()) {
                return Err(invalid("triangle refers to a missing vertex"));
            }
        }
        let mut mesh = Mesh2D {
            vertices,
            triangles,
            boundary_edges,
            cell_size: 0.0,
        };
        for t in 0..mesh.triangles.len() {
            if mesh.signed_area(t) <= 0.0 {
                return Err(invalid(format!("triangle {t} is not counter-clockwise")));
            }
            mesh.cell_size = mesh.cell_size.max(mesh.diameter(t));
        }
        Ok(mesh)
    }

    pub fn triangle_coords(&self, t: usize) -> [[f64; 2]; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn signed_area(&self, t: usize) -> f64 {
        let [p, q, r] = self.triangle_coords(t);
        0.5 * ((q[0] - p[0]) * (r[1] - p[1]) - (r[0] - p[0]) * (q[1] - p[1]))
    }

    pub fn diameter(&self, t: usize) -> f64 {
        let [p, q, r] = self.triangle_coords(t);
        dist(p, q).max(dist(q, r)).max(dist(r, p))
    }

    /// Radius of the inscribed circle, `2 * area / perimeter`.
    pub fn inradius(&self, t: usize) -> f64 {
        let [p, q, r] = self.triangle_coords(t);
        let perimeter = dist(p, q) + dist(q, r) + dist(r, p);
        2.0 * self.signed_area(t) / perimeter
    }

    /// Tag all edges on `side` as interface edges and everything else as
    /// outer Dirichlet boundary.
    pub fn mark_interface(&mut self, side: RectSide) -> Result<()> {
        if !self.boundary_edges.iter().any(|e| e.side == side) {
            return Err(invalid("no boundary edges on the requested side"));
        }
        for e in &mut self.boundary_edges {
            e.tag = if e.side == side {
                EdgeTag::Interface
            } else {
                EdgeTag::OuterDirichlet
            };
        }
        Ok(())
    }

    /// Plain-text dump: `v x y`, `t i j k`, `e i j tag` lines.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for v in &self.vertices {
            out.push_str(&format!("v {} {}\n", v[0], v[1]));
        }
        for t in &self.triangles {
            out.push_str(&format!("t {} {} {}\n", t[0], t[1], t[2]));
        }
        for e in &self.boundary_edges {
            let tag = match e.tag {
                EdgeTag::OuterDirichlet => "outer_dirichlet",
                EdgeTag::Interface => "interface",
            };
            out.push_str(&format!("e {} {} {}\n", e.vertices[0], e.vertices[1], tag));
        }
        out
    }

    /// Copy of the mesh with triangles listed in a different order.
    /// Boundary-edge back-references are remapped.
    pub fn with_triangle_order(&self, order: &[usize]) -> Result<Mesh2D> {
        if order.len() != self.triangles.len() {
            return Err(invalid("permutation length mismatch"));
        }
        let mut inverse = vec![usize::MAX; order.len()];
        for (new_idx, &old_idx) in order.iter().enumerate() {
            inverse[old_idx] = new_idx;
        }
        let triangles = order.iter().map(|&t| self.triangles[t]).collect();
        let boundary_edges = self
            .boundary_edges
            .iter()
            .map(|e| BoundaryEdge {
                triangle: inverse[e.triangle],
                ..*e
            })
            .collect();
        Mesh2D::from_parts(self.vertices.clone(), triangles, boundary_edges)
    }
}

fn dist(p: [f64; 2], q: [f64; 2]) -> f64 {
    ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
}

/// Structured triangulation of `rect` with `nx` by `ny` grid cells, two
/// triangles per cell. All boundary edges start out tagged as outer
/// Dirichlet; see [`Mesh2D::mark_interface`].
pub fn build_rect_tri_mesh(rect: Rect, nx: usize, ny: usize, diagonal: Diagonal) -> Result<Mesh2D> {
    if nx == 0 || ny == 0 {
        return Err(invalid("cell counts must be at least 1"));
    }
    if rect.width() <= 0.0 || rect.height() <= 0.0 {
        return Err(invalid("rectangle is degenerate"));
    }

    let dx = rect.width() / nx as f64;
    let dy = rect.height() / ny as f64;
    let vid = |i: usize, j: usize| j * (nx + 1) + i;

    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            // Exact endpoints keep the two subdomain meshes agreeing on the interface line.
            let x = if i == nx { rect.x1 } else { rect.x0 + i as f64 * dx };
            let y = if j == ny { rect.y1 } else { rect.y0 + j as f64 * dy };
            vertices.push([x, y]);
        }
    }

    let mut triangles = Vec::with_capacity(2 * nx * ny);
    // Per cell: indices of the triangles owning the bottom/right/top/left edge.
    let mut owners = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let sw = vid(i, j);
            let se = vid(i + 1, j);
            let ne = vid(i + 1, j + 1);
            let nw = vid(i, j + 1);
            let t0 = triangles.len();
            match diagonal {
                Diagonal::Ne => {
                    triangles.push([sw, se, ne]);
                    triangles.push([sw, ne, nw]);
                    owners.push([t0, t0, t0 + 1, t0 + 1]);
                }
                Diagonal::Nw => {
                    triangles.push([sw, se, nw]);
                    triangles.push([se, ne, nw]);
                    owners.push([t0, t0 + 1, t0 + 1, t0]);
                }
            }
        }
    }

    let cell_owner = |i: usize, j: usize| owners[j * nx + i];
    let mut boundary_edges = Vec::with_capacity(2 * (nx + ny));
    for i in 0..nx {
        boundary_edges.push(BoundaryEdge {
            vertices: [vid(i, 0), vid(i + 1, 0)],
            side: RectSide::Bottom,
            tag: EdgeTag::OuterDirichlet,
            triangle: cell_owner(i, 0)[0],
        });
        boundary_edges.push(BoundaryEdge {
            vertices: [vid(i, ny), vid(i + 1, ny)],
            side: RectSide::Top,
            tag: EdgeTag::OuterDirichlet,
            triangle: cell_owner(i, ny - 1)[2],
        });
    }
    for j in 0..ny {
        boundary_edges.push(BoundaryEdge {
            vertices: [vid(0, j), vid(0, j + 1)],
            side: RectSide::Left,
            tag: EdgeTag::OuterDirichlet,
            triangle: cell_owner(0, j)[3],
        });
        boundary_edges.push(BoundaryEdge {
            vertices: [vid(nx, j), vid(nx, j + 1)],
            side: RectSide::Right,
            tag: EdgeTag::OuterDirichlet,
            triangle: cell_owner(nx - 1, j)[1],
        });
    }

    Mesh2D::from_parts(vertices, triangles, boundary_edges)
}

/// Ordered trace of one subdomain mesh along the interface.
///
/// Breakpoints are arclengths along the interface, starting at 0.
#[derive(Clone, Debug)]
pub struct InterfaceTrace {
    pub side: RectSide,
    /// Strictly increasing; first is 0, last is the interface length.
    pub breakpoints: Vec<f64>,
    /// Owning triangle of each segment.
    pub triangles: Vec<usize>,
    /// Outward normal of the owning subdomain, per segment.
    pub normals: Vec<[f64; 2]>,
    /// Mesh vertex at each breakpoint.
    pub vertex_ids: Vec<usize>,
    /// Coordinate held fixed along the interface line.
    fixed: f64,
    /// Arclength origin in the varying coordinate.
    start: f64,
    vertical: bool,
}

impl InterfaceTrace {
    pub fn length(&self) -> f64 {
        *self.breakpoints.last().unwrap()
    }

    pub fn segment_count(&self) -> usize {
        self.triangles.len()
    }

    /// 2D point at arclength `s`.
    pub fn point_at(&self, s: f64) -> [f64; 2] {
        if self.vertical {
            [self.fixed, self.start + s]
        } else {
            [self.start + s, self.fixed]
        }
    }
}

/// Extract the ordered interface trace of `mesh` on `side`. Requires the
/// side's edges to be tagged [`EdgeTag::Interface`].
pub fn interface_trace(mesh: &Mesh2D, side: RectSide) -> Result<InterfaceTrace> {
    let vertical = matches!(side, RectSide::Left | RectSide::Right);
    let along = |v: usize| mesh.vertices[v][if vertical { 1 } else { 0 }];

    let mut edges: Vec<&BoundaryEdge> = mesh
        .boundary_edges
        .iter()
        .filter(|e| e.side == side && e.tag == EdgeTag::Interface)
        .collect();
    if edges.is_empty() {
        return Err(invalid("no interface edges on the requested side"));
    }
    edges.sort_by(|a, b| along(a.vertices[0]).total_cmp(&along(b.vertices[0])));

    let first = edges[0].vertices[0];
    let fixed = mesh.vertices[first][if vertical { 0 } else { 1 }];
    let start = along(first);

    let mut breakpoints = vec![0.0];
    let mut triangles = Vec::with_capacity(edges.len());
    let mut normals = Vec::with_capacity(edges.len());
    let mut vertex_ids = vec![first];
    for e in &edges {
        let [a, b] = e.vertices;
        if *vertex_ids.last().unwrap() != a {
            return Err(invalid("interface edges do not form a contiguous chain"));
        }
        breakpoints.push(along(b) - start);
        vertex_ids.push(b);
        triangles.push(e.triangle);
        normals.push(outward_normal(mesh, e));
    }

    Ok(InterfaceTrace {
        side,
        breakpoints,
        triangles,
        normals,
        vertex_ids,
        fixed,
        start,
        vertical,
    })
}

/// Unit normal of a boundary edge pointing away from its triangle.
fn outward_normal(mesh: &Mesh2D, edge: &BoundaryEdge) -> [f64; 2] {
    let [a, b] = edge.vertices;
    let p = mesh.vertices[a];
    let q = mesh.vertices[b];
    let opposite = mesh.triangles[edge.triangle]
        .iter()
        .copied()
        .find(|v| *v != a && *v != b)
        .expect("boundary edge not part of its triangle");
    let r = mesh.vertices[opposite];
    let e = [q[0] - p[0], q[1] - p[1]];
    let len = (e[0] * e[0] + e[1] * e[1]).sqrt();
    let mut n = [e[1] / len, -e[0] / len];
    if n[0] * (r[0] - p[0]) + n[1] * (r[1] - p[1]) > 0.0 {
        n = [-n[0], -n[1]];
    }
    n
}

/// Mesh quality and consistency report. Reporting only; never fails.
#[derive(Clone, Debug)]
pub struct MeshDiagnostics {
    pub n_vertices: usize,
    pub n_triangles: usize,
    pub n_edges: usize,
    pub min_area: f64,
    /// Edges shared by more than two triangles, tagged boundary edges not
    /// matching their triangle, or hanging nodes on boundary edges.
    pub conformity_violations: usize,
    /// Max over triangles of diameter / inradius.
    pub max_shape_ratio: f64,
    /// Mesh cell size over the smallest triangle diameter.
    pub quasiuniformity: f64,
}

pub fn validate_mesh(mesh: &Mesh2D) -> MeshDiagnostics {
    let mut min_area = f64::INFINITY;
    let mut max_shape_ratio: f64 = 0.0;
    let mut min_diameter = f64::INFINITY;
    for t in 0..mesh.triangles.len() {
        min_area = min_area.min(mesh.signed_area(t));
        max_shape_ratio = max_shape_ratio.max(mesh.diameter(t) / mesh.inradius(t));
        min_diameter = min_diameter.min(mesh.diameter(t));
    }

    let mut edge_count: Vec<([usize; 2], usize)> = Vec::with_capacity(3 * mesh.triangles.len());
    for t in &mesh.triangles {
        for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
            edge_count.push(([a.min(b), a.max(b)], 1));
        }
    }
    edge_count.sort_by_key(|(e, _)| *e);
    let mut violations = 0;
    let mut edges: Vec<([usize; 2], usize)> = Vec::new();
    for (e, _) in edge_count {
        match edges.last_mut() {
            Some((last, n)) if *last == e => *n += 1,
            _ => edges.push((e, 1)),
        }
    }
    for (e, n) in &edges {
        if *n > 2 {
            violations += 1;
        }
        if *n == 1 {
            // Border edge: no vertex may sit strictly inside it (hanging node).
            let p = mesh.vertices[e[0]];
            let q = mesh.vertices[e[1]];
            let len2 = (q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2);
            for (v, c) in mesh.vertices.iter().enumerate() {
                if v == e[0] || v == e[1] {
                    continue;
                }
                let t = ((c[0] - p[0]) * (q[0] - p[0]) + (c[1] - p[1]) * (q[1] - p[1])) / len2;
                if t <= 0.0 || t >= 1.0 {
                    continue;
                }
                let proj = [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])];
                if dist(proj, *c) < 1e-12 * len2.sqrt() {
                    violations += 1;
                }
            }
        }
    }

    // Every tagged boundary edge must appear exactly once and belong to its triangle.
    for be in &mesh.boundary_edges {
        let key = [
            be.vertices[0].min(be.vertices[1]),
            be.vertices[0].max(be.vertices[1]),
        ];
        let found = edges.binary_search_by_key(&key, |(e, _)| *e);
        match found {
            Ok(idx) if edges[idx].1 == 1 => {}
            _ => violations += 1,
        }
        let tri = mesh.triangles[be.triangle];
        if !tri.contains(&be.vertices[0]) || !tri.contains(&be.vertices[1]) {
            violations += 1;
        }
    }

    MeshDiagnostics {
        n_vertices: mesh.vertices.len(),
        n_triangles: mesh.triangles.len(),
        n_edges: edges.len(),
        min_area,
        conformity_violations: violations,
        max_shape_ratio,
        quasiuniformity: mesh.cell_size / min_diameter,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_mesh_counts() {
        let mesh = build_rect_tri_mesh(Rect::unit_square(), 1, 1, Diagonal::Ne).unwrap();
        assert_eq!(mesh.vertices.len(), 4);
        assert_eq!(mesh.triangles.len(), 2);
        assert_eq!(mesh.boundary_edges.len(), 4);
    }

    #[test]
    fn two_by_two_counts() {
        // Counted by hand from the structured pattern.
        let mesh = build_rect_tri_mesh(Rect::unit_square(), 2, 2, Diagonal::Ne).unwrap();
        assert_eq!(mesh.vertices.len(), 9);
        assert_eq!(mesh.triangles.len(), 8);
        assert_eq!(mesh.boundary_edges.len(), 8);
    }

    #[test]
    fn coarsest_study_pair() {
        // The coarsest mesh pair of the refinement study.
        let m1 = build_rect_tri_mesh(Rect::new(0.0, 0.0, 0.5, 1.0), 2, 4, Diagonal::Ne).unwrap();
        let m2 = build_rect_tri_mesh(Rect::new(0.5, 0.0, 1.0, 1.0), 3, 6, Diagonal::Ne).unwrap();
        assert_eq!(m1.vertices.len(), 3 * 5);
        assert_eq!(m1.triangles.len(), 16);
        assert_eq!(m2.vertices.len(), 4 * 7);
        assert_eq!(m2.triangles.len(), 36);
        // Grid spacing 1/4 and 1/6; triangle diameter is the cell diagonal.
        assert!((m1.cell_size - 0.25 * 2f64.sqrt()).abs() < 1e-15);
        assert!((m2.cell_size - 2f64.sqrt() / 6.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(build_rect_tri_mesh(Rect::unit_square(), 0, 1, Diagonal::Ne).is_err());
        assert!(build_rect_tri_mesh(Rect::new(0.0, 0.0, 0.0, 1.0), 1, 1, Diagonal::Ne).is_err());
    }

    #[test]
    fn areas_sum_to_rectangle_area() {
        for diag in [Diagonal::Ne, Diagonal::Nw] {
            let rect = Rect::new(0.25, -1.0, 2.0, 0.5);
            let mesh = build_rect_tri_mesh(rect, 3, 5, diag).unwrap();
            let total: f64 = (0..mesh.triangles.len()).map(|t| mesh.signed_area(t)).sum();
            let exact = rect.width() * rect.height();
            assert!((total - exact).abs() <= 1e-12 * exact);
        }
    }

    #[test]
    fn euler_relation() {
        for (nx, ny) in [(1, 1), (2, 4), (5, 3)] {
            let mesh = build_rect_tri_mesh(Rect::unit_square(), nx, ny, Diagonal::Nw).unwrap();
            let d = validate_mesh(&mesh);
            assert_eq!(d.conformity_violations, 0);
            // V - E + T = 1 for a triangulated disk.
            assert_eq!(
                d.n_vertices as i64 - d.n_edges as i64 + d.n_triangles as i64,
                1
            );
        }
    }

    #[test]
    fn shape_ratio_of_unit_right_triangle() {
        // diameter sqrt(2) over inradius (2 - sqrt(2)) / 2, and identical
        // across structured refinement levels by similarity.
        let expected = 2f64.sqrt() / ((2.0 - 2f64.sqrt()) / 2.0);
        let mut ratios = Vec::new();
        for n in [1usize, 2, 4, 8] {
            let mesh = build_rect_tri_mesh(Rect::unit_square(), n, n, Diagonal::Ne).unwrap();
            let d = validate_mesh(&mesh);
            assert_eq!(d.conformity_violations, 0);
            ratios.push(d.max_shape_ratio);
        }
        for r in &ratios {
            assert!((r - expected).abs() < 1e-12, "ratio {r} vs {expected}");
        }
    }

    #[test]
    fn single_segment_trace() {
        let mut mesh = build_rect_tri_mesh(Rect::new(0.5, 0.0, 1.0, 1.0), 1, 1, Diagonal::Ne).unwrap();
        mesh.mark_interface(RectSide::Left).unwrap();
        let trace = interface_trace(&mesh, RectSide::Left).unwrap();
        assert_eq!(trace.segment_count(), 1);
        assert_eq!(trace.breakpoints, vec![0.0, 1.0]);
        assert_eq!(trace.normals[0], [-1.0, 0.0]);
    }

    #[test]
    fn omega1_trace_normals_point_right() {
        let mut mesh = build_rect_tri_mesh(Rect::new(0.0, 0.0, 0.5, 1.0), 2, 4, Diagonal::Ne).unwrap();
        mesh.mark_interface(RectSide::Right).unwrap();
        let trace = interface_trace(&mesh, RectSide::Right).unwrap();
        assert_eq!(trace.segment_count(), 4);
        for (k, n) in trace.normals.iter().enumerate() {
            assert_eq!(*n, [1.0, 0.0]);
            let len = trace.breakpoints[k + 1] - trace.breakpoints[k];
            assert!((len - 0.25).abs() < 1e-15);
        }
        let p = trace.point_at(0.375);
        assert!((p[0] - 0.5).abs() < 1e-15 && (p[1] - 0.375).abs() < 1e-15);
    }

    #[test]
    fn omega2_trace_six_segments() {
        let mut mesh = build_rect_tri_mesh(Rect::new(0.5, 0.0, 1.0, 1.0), 3, 6, Diagonal::Ne).unwrap();
        mesh.mark_interface(RectSide::Left).unwrap();
        let trace = interface_trace(&mesh, RectSide::Left).unwrap();
        assert_eq!(trace.segment_count(), 6);
        for k in 0..6 {
            let len = trace.breakpoints[k + 1] - trace.breakpoints[k];
            assert!((len - 1.0 / 6.0).abs() < 1e-15);
        }
    }

    #[test]
    fn trace_requires_interface_tag() {
        let mesh = build_rect_tri_mesh(Rect::unit_square(), 2, 2, Diagonal::Ne).unwrap();
        assert!(interface_trace(&mesh, RectSide::Right).is_err());
    }

    #[test]
    fn dump_roundtrip_format() {
        let mut mesh = build_rect_tri_mesh(Rect::unit_square(), 1, 1, Diagonal::Ne).unwrap();
        mesh.mark_interface(RectSide::Right).unwrap();
        let dump = mesh.dump();
        assert!(dump.contains("v 0 0\n"));
        assert!(dump.contains("t 0 1 3\n"));
        assert!(dump.contains("interface"));
        assert_eq!(dump.lines().count(), 4 + 2 + 4);
    }

    #[test]
    fn triangle_relabel_keeps_edges_consistent() {
        let mut mesh = build_rect_tri_mesh(Rect::unit_square(), 2, 3, Diagonal::Ne).unwrap();
        mesh.mark_interface(RectSide::Right).unwrap();
        let order: Vec<usize> = (0..mesh.triangles.len()).rev().collect();
        let relabeled = mesh.with_triangle_order(&order).unwrap();
        assert_eq!(validate_mesh(&relabeled).conformity_violations, 0);
        let t = interface_trace(&relabeled, RectSide::Right).unwrap();
        assert_eq!(t.segment_count(), 3);
    }
}
