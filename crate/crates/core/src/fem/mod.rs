//! P1 finite element space on a subdomain mesh: dof classification,
//! stiffness/mass/load assembly, nodal interpolation, Dirichlet lifts.

pub mod quadrature;

use crate::error::{invalid, Result};
use crate::mesh::{EdgeTag, Mesh2D, RectSide};
use crate::sparse::{CscMatrix, Triplets};
use quadrature::gauss_triangle;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DofClass {
    Interior,
    Interface,
    Dirichlet,
}

/// P1 space over one subdomain. Free dofs are numbered with all interior
/// dofs first, then the interface dofs ordered along the interface; this
/// ordering is what the saddle-point block layout relies on.
#[derive(Clone, Debug)]
pub struct FeSpace {
    mesh: Mesh2D,
    pub class: Vec<DofClass>,
    /// Vertex index -> free dof index (interior then interface).
    pub free_index: Vec<Option<usize>>,
    /// Vertex ids of interior dofs, in vertex order.
    pub interior: Vec<usize>,
    /// Vertex ids of interface dofs, ordered by arclength along the interface.
    pub interface: Vec<usize>,
    pub interface_side: Option<RectSide>,
}

impl FeSpace {
    pub fn new(mesh: Mesh2D) -> Result<FeSpace> {
        let n = mesh.vertices.len();
        let mut class = vec![DofClass::Interior; n];
        let mut interface_side = None;
        for e in &mesh.boundary_edges {
            if e.tag == EdgeTag::Interface {
                interface_side = Some(e.side);
                for &v in &e.vertices {
                    if class[v] == DofClass::Interior {
                        class[v] = DofClass::Interface;
                    }
                }
            }
        }
        // Dirichlet wins at shared vertices (the interface endpoints lie on
        // the outer boundary).
        for e in &mesh.boundary_edges {
            if e.tag == EdgeTag::OuterDirichlet {
                for &v in &e.vertices {
                    class[v] = DofClass::Dirichlet;
                }
            }
        }

        let interior: Vec<usize> = (0..n).filter(|&v| class[v] == DofClass::Interior).collect();
        let mut interface: Vec<usize> =
            (0..n).filter(|&v| class[v] == DofClass::Interface).collect();
        if let Some(side) = interface_side {
            let along = |v: usize| {
                let c = mesh.vertices[v];
                match side {
                    RectSide::Left | RectSide::Right => c[1],
                    RectSide::Bottom | RectSide::Top => c[0],
                }
            };
            interface.sort_by(|&a, &b| along(a).total_cmp(&along(b)));
        }

        let mut free_index = vec![None; n];
        for (k, &v) in interior.iter().chain(interface.iter()).enumerate() {
            free_index[v] = Some(k);
        }
        if interior.is_empty() && interface.is_empty() {
            return Err(invalid("space has no free dofs"));
        }
        Ok(FeSpace {
            mesh,
            class,
            free_index,
            interior,
            interface,
            interface_side,
        })
    }

    pub fn mesh(&self) -> &Mesh2D {
        &self.mesh
    }

    pub fn n_vertices(&self) -> usize {
        self.mesh.vertices.len()
    }

    pub fn n_free(&self) -> usize {
        self.interior.len() + self.interface.len()
    }

    pub fn dirichlet_vertices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_vertices()).filter(|&v| self.class[v] == DofClass::Dirichlet)
    }

    /// Restrict an all-vertex vector to free dofs.
    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.interior
            .iter()
            .chain(self.interface.iter())
            .map(|&v| full[v])
            .collect()
    }

    /// Scatter free-dof coefficients into an all-vertex vector, leaving
    /// Dirichlet entries at zero.
    pub fn scatter(&self, free: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.n_vertices()];
        for (k, &v) in self.interior.iter().chain(self.interface.iter()).enumerate() {
            full[v] = free[k];
        }
        full
    }
}

/// Constant gradients of the three P1 basis functions and the triangle area.
pub fn p1_gradients(tri: &[[f64; 2]; 3]) -> ([[f64; 2]; 3], f64) {
    let [p, q, r] = *tri;
    let det = (q[0] - p[0]) * (r[1] - p[1]) - (r[0] - p[0]) * (q[1] - p[1]);
    let grads = [
        [(q[1] - r[1]) / det, (r[0] - q[0]) / det],
        [(r[1] - p[1]) / det, (p[0] - r[0]) / det],
        [(p[1] - q[1]) / det, (q[0] - p[0]) / det],
    ];
    (grads, 0.5 * det)
}

/// Stiffness-plus-mass form over ALL vertex dofs:
/// `sum_K beta grad(phi_i) . grad(phi_j) + a phi_i phi_j`.
/// Entries are exact (P1 gradients are constant, the mass term closed-form).
pub fn assemble_stiffness_full(space: &FeSpace, beta: f64, a: f64) -> Triplets {
    let mesh = space.mesh();
    let n = mesh.vertices.len();
    let mut out = Triplets::new(n, n);
    for t in 0..mesh.triangles.len() {
        let tri = mesh.triangle_coords(t);
        let (grads, area) = p1_gradients(&tri);
        let verts = mesh.triangles[t];
        for i in 0..3 {
            for j in 0..3 {
                let stiff = beta * (grads[i][0] * grads[j][0] + grads[i][1] * grads[j][1]) * area;
                let mass = a * area / 12.0 * if i == j { 2.0 } else { 1.0 };
                out.push(verts[i], verts[j], stiff + mass);
            }
        }
    }
    out
}

/// Stiffness matrix over free dofs. `beta > 0`, `a >= 0`.
pub fn assemble_stiffness(space: &FeSpace, beta: f64, a: f64) -> CscMatrix {
    restrict_to_free(space, &assemble_stiffness_full(space, beta, a)).to_csc()
}

pub fn restrict_to_free(space: &FeSpace, full: &Triplets) -> Triplets {
    let n = space.n_free();
    let mut out = Triplets::new(n, n);
    for &(i, j, v) in &full.entries {
        if let (Some(fi), Some(fj)) = (space.free_index[i], space.free_index[j]) {
            out.push(fi, fj, v);
        }
    }
    out
}

/// Load vector `(f, phi_i)` over ALL vertex dofs, degree-4 quadrature.
pub fn assemble_load_full(space: &FeSpace, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let mesh = space.mesh();
    let rule = gauss_triangle(4).expect("degree-4 rule");
    let mut out = vec![0.0; mesh.vertices.len()];
    for t in 0..mesh.triangles.len() {
        let [p, q, r] = mesh.triangle_coords(t);
        let jac = (q[0] - p[0]) * (r[1] - p[1]) - (r[0] - p[0]) * (q[1] - p[1]);
        let verts = mesh.triangles[t];
        for (&[u, v], &w) in rule.nodes.iter().zip(&rule.weights) {
            let x = p[0] + u * (q[0] - p[0]) + v * (r[0] - p[0]);
            let y = p[1] + u * (q[1] - p[1]) + v * (r[1] - p[1]);
            let fv = f(x, y) * w * jac;
            out[verts[0]] += fv * (1.0 - u - v);
            out[verts[1]] += fv * u;
            out[verts[2]] += fv * v;
        }
    }
    out
}

pub fn assemble_load(space: &FeSpace, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    space.restrict(&assemble_load_full(space, f))
}

/// Coefficients of the nodal interpolant `I_h g`, including Dirichlet dofs.
pub fn nodal_interpolate(space: &FeSpace, g: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    space
        .mesh()
        .vertices
        .iter()
        .map(|&[x, y]| g(x, y))
        .collect()
}

/// Dirichlet lift for boundary data `g` and the matching right-hand-side
/// correction `-A * lift` restricted to free dofs, where `A` is the full
/// stiffness form passed in.
pub fn lift_dirichlet(
    space: &FeSpace,
    g: impl Fn(f64, f64) -> f64,
    stiffness_full: &Triplets,
) -> (Vec<f64>, Vec<f64>) {
    let mut lift = vec![0.0; space.n_vertices()];
    for v in space.dirichlet_vertices() {
        let [x, y] = space.mesh().vertices[v];
        lift[v] = g(x, y);
    }
    let mut correction = vec![0.0; space.n_free()];
    for &(i, j, v) in &stiffness_full.entries {
        if let Some(fi) = space.free_index[i] {
            if space.free_index[j].is_none() {
                correction[fi] -= v * lift[j];
            }
        }
    }
    (lift, correction)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_rect_tri_mesh, Diagonal, Rect};

    fn unit_space(n: usize) -> FeSpace {
        let mesh = build_rect_tri_mesh(Rect::unit_square(), n, n, Diagonal::Ne).unwrap();
        FeSpace::new(mesh).unwrap()
    }

    fn omega1_space(ny: usize) -> FeSpace {
        let mut mesh =
            build_rect_tri_mesh(Rect::new(0.0, 0.0, 0.5, 1.0), ny / 2, ny, Diagonal::Ne).unwrap();
        mesh.mark_interface(RectSide::Right).unwrap();
        FeSpace::new(mesh).unwrap()
    }

    #[test]
    fn classification_counts() {
        // 2x4 mesh of the left subdomain: 15 vertices, 3 interface dofs
        // (interface endpoints are Dirichlet), 3 interior dofs.
        let space = omega1_space(4);
        assert_eq!(space.n_vertices(), 15);
        assert_eq!(space.interface.len(), 3);
        assert_eq!(space.interior.len(), 3);
        assert_eq!(space.n_free(), 6);
        // Interface dofs are ordered by increasing y and numbered after the
        // interior block.
        let ys: Vec<f64> = space
            .interface
            .iter()
            .map(|&v| space.mesh().vertices[v][1])
            .collect();
        assert!(ys.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(space.free_index[space.interface[0]], Some(3));
    }

    #[test]
    fn every_vertex_classified_once() {
        let space = omega1_space(8);
        let d = space.dirichlet_vertices().count();
        assert_eq!(
            d + space.interior.len() + space.interface.len(),
            space.n_vertices()
        );
    }

    #[test]
    fn element_stiffness_reference_triangle() {
        // Hand integration of P1 gradients on (0,0),(1,0),(0,1).
        let tri = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let (grads, area) = p1_gradients(&tri);
        let expected = [
            [1.0, -0.5, -0.5],
            [-0.5, 0.5, 0.0],
            [-0.5, 0.0, 0.5],
        ];
        for i in 0..3 {
            for j in 0..3 {
                let k = (grads[i][0] * grads[j][0] + grads[i][1] * grads[j][1]) * area;
                assert!((k - expected[i][j]).abs() < 1e-15, "entry ({i},{j})");
            }
        }
    }

    #[test]
    fn beta_scales_linearly() {
        let space = unit_space(3);
        let k1 = assemble_stiffness(&space, 1.0, 0.0);
        let k2 = assemble_stiffness(&space, 2.0, 0.0);
        for (a, b) in k1.values.iter().zip(&k2.values) {
            assert_eq!(2.0 * a, *b);
        }
    }

    #[test]
    fn stiffness_exactly_symmetric() {
        let space = omega1_space(6);
        let k = assemble_stiffness(&space, 3.7, 0.9);
        assert_eq!(k.max_asymmetry(), 0.0);
    }

    #[test]
    fn row_sums_vanish_without_mass() {
        // Gradient of constants: row sums over ALL dofs are zero.
        let space = unit_space(4);
        let full = assemble_stiffness_full(&space, 2.5, 0.0);
        let ones = vec![1.0; space.n_vertices()];
        let mut sums = vec![0.0; space.n_vertices()];
        full.accumulate_matvec(1.0, &ones, &mut sums);
        for s in sums {
            assert!(s.abs() < 1e-12);
        }
    }

    #[test]
    fn load_zero_and_constant() {
        let space = unit_space(4);
        let zero = assemble_load(&space, |_, _| 0.0);
        assert!(zero.iter().all(|&v| v == 0.0));
        // f = 1: entry at an interior vertex is the hexagonal support area / 3 = h^2.
        let full = assemble_load_full(&space, |_, _| 1.0);
        for &v in &space.interior {
            assert!((full[v] - 1.0 / 16.0).abs() < 1e-14);
        }
    }

    #[test]
    fn interpolation_reproduces_linears() {
        let space = unit_space(5);
        let g = |x: f64, y: f64| 3.0 * x - 2.0 * y + 0.25;
        let coeffs = nodal_interpolate(&space, g);
        for (v, c) in space.mesh().vertices.iter().zip(&coeffs) {
            assert!((c - g(v[0], v[1])).abs() < 1e-15);
        }
    }

    #[test]
    fn lift_zero_data() {
        let space = omega1_space(4);
        let k = assemble_stiffness_full(&space, 1.0, 0.0);
        let (lift, corr) = lift_dirichlet(&space, |_, _| 0.0, &k);
        assert!(lift.iter().all(|&v| v == 0.0));
        assert!(corr.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn lift_vanishes_on_free_dofs() {
        let space = omega1_space(4);
        let k = assemble_stiffness_full(&space, 1.0, 0.0);
        let (lift, _) = lift_dirichlet(&space, |x, y| x + y, &k);
        for v in 0..space.n_vertices() {
            if space.free_index[v].is_some() {
                assert_eq!(lift[v], 0.0);
            } else {
                let [x, y] = space.mesh().vertices[v];
                assert_eq!(lift[v], x + y);
            }
        }
    }
}
