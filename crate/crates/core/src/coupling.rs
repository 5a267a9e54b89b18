//! Cross-mesh interface machinery: the merged partition of the two
//! interface traces, mortar mass and flux blocks, the interface L2
//! projection, and a numerical estimator for the inverse-trace constant.
//!
//! All interface integrands produced by the method are polynomial on each
//! merged segment (piecewise-linear traces, piecewise-constant fluxes), so
//! two-point Gauss per merged segment integrates every block exactly.
//!
//! Sign convention: the interface normal is fixed to the outward normal of
//! the first subdomain in every averaged flux term. With the multiplier
//! equal to the first subdomain's outward flux, the discrete form is then
//! consistent term by term, which the patch and consistency tests check.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::fem::quadrature::{gauss_segment, SegmentRule};
use crate::fem::{assemble_stiffness, p1_gradients, FeSpace};
use crate::mesh::InterfaceTrace;
use crate::sparse::{solve_linear, Triplets};

/// Relative tolerance for fusing nearly-equal breakpoints.
const FUSE_REL_TOL: f64 = 1e-12;

/// Common refinement of two interface traces.
#[derive(Clone, Debug)]
pub struct MergedPartition {
    pub trace1: InterfaceTrace,
    pub trace2: InterfaceTrace,
    /// Sorted fused union of both traces' breakpoints.
    pub breakpoints: Vec<f64>,
    /// Parent segment on the first trace, per merged segment.
    pub parent1: Vec<usize>,
    /// Parent segment on the second trace, per merged segment.
    pub parent2: Vec<usize>,
}

impl MergedPartition {
    pub fn segment_count(&self) -> usize {
        self.parent1.len()
    }

    pub fn length(&self) -> f64 {
        *self.breakpoints.last().unwrap()
    }

    pub fn segment(&self, m: usize) -> (f64, f64) {
        (self.breakpoints[m], self.breakpoints[m + 1])
    }
}

/// Merge the breakpoints of both traces into one partition with parent
/// back-references. Both traces must cover the same interface.
pub fn merge_partitions(t1: &InterfaceTrace, t2: &InterfaceTrace) -> Result<MergedPartition> {
    let len = t1.length();
    if (len - t2.length()).abs() > FUSE_REL_TOL * len {
        return Err(invalid("traces cover intervals of different extent"));
    }
    let tol = FUSE_REL_TOL * len;

    let mut union: Vec<f64> = t1
        .breakpoints
        .iter()
        .chain(t2.breakpoints.iter())
        .copied()
        .collect();
    union.sort_by(f64::total_cmp);
    let mut breakpoints: Vec<f64> = Vec::with_capacity(union.len());
    for b in union {
        match breakpoints.last() {
            Some(&last) if (b - last).abs() <= tol => {}
            _ => breakpoints.push(b),
        }
    }
    // Snap the ends so the merged partition tiles the interface exactly.
    breakpoints[0] = 0.0;
    *breakpoints.last_mut().unwrap() = len;

    let locate = |bps: &[f64], s: f64| -> usize {
        // Index of the segment of `bps` containing s (s strictly inside Γ).
        match bps.binary_search_by(|b| b.total_cmp(&s)) {
            Ok(k) => k.min(bps.len() - 2),
            Err(k) => k - 1,
        }
    };

    let mut parent1 = Vec::with_capacity(breakpoints.len() - 1);
    let mut parent2 = Vec::with_capacity(breakpoints.len() - 1);
    for m in 0..breakpoints.len() - 1 {
        let mid = 0.5 * (breakpoints[m] + breakpoints[m + 1]);
        parent1.push(locate(&t1.breakpoints, mid));
        parent2.push(locate(&t2.breakpoints, mid));
    }

    Ok(MergedPartition {
        trace1: t1.clone(),
        trace2: t2.clone(),
        breakpoints,
        parent1,
        parent2,
    })
}

/// Multiplier space: hat functions of the second subdomain's trace mesh.
/// By default the two interface-endpoint dofs are excluded, since traces
/// of the subdomain space vanish there.
#[derive(Clone, Debug)]
pub struct MultiplierSpace {
    /// Breakpoints of the trace mesh the multipliers live on.
    pub breakpoints: Vec<f64>,
    /// Breakpoint index of each dof.
    pub dofs: Vec<usize>,
    /// Dof index of each breakpoint, if it carries one.
    pub dof_of_break: Vec<Option<usize>>,
    /// Mesh vertex behind each dof.
    pub vertex_ids: Vec<usize>,
    pub include_endpoints: bool,
}

impl MultiplierSpace {
    pub fn new(trace: &InterfaceTrace, include_endpoints: bool) -> Result<MultiplierSpace> {
        let n_break = trace.breakpoints.len();
        let range: Vec<usize> = if include_endpoints {
            (0..n_break).collect()
        } else {
            (1..n_break - 1).collect()
        };
        if range.is_empty() {
            return Err(invalid("multiplier space has no dofs"));
        }
        let mut dof_of_break = vec![None; n_break];
        for (k, &b) in range.iter().enumerate() {
            dof_of_break[b] = Some(k);
        }
        let vertex_ids = range.iter().map(|&b| trace.vertex_ids[b]).collect();
        Ok(MultiplierSpace {
            breakpoints: trace.breakpoints.clone(),
            dofs: range,
            dof_of_break,
            vertex_ids,
            include_endpoints,
        })
    }

    pub fn n_dofs(&self) -> usize {
        self.dofs.len()
    }

    /// Value of basis function `k` at arclength `s`.
    pub fn eval_basis(&self, k: usize, s: f64) -> f64 {
        let b = self.dofs[k];
        let node = self.breakpoints[b];
        if b > 0 {
            let left = self.breakpoints[b - 1];
            if s >= left && s <= node {
                return (s - left) / (node - left);
            }
        }
        if b + 1 < self.breakpoints.len() {
            let right = self.breakpoints[b + 1];
            if s >= node && s <= right {
                return (right - s) / (right - node);
            }
        }
        0.0
    }

    /// Evaluate a multiplier function from its dof coefficients; excluded
    /// endpoint dofs are treated as zero.
    pub fn eval(&self, coeffs: &[f64], s: f64) -> f64 {
        let k = match self
            .breakpoints
            .binary_search_by(|b| b.total_cmp(&s))
        {
            Ok(k) => k.min(self.breakpoints.len() - 2),
            Err(k) => (k - 1).min(self.breakpoints.len() - 2),
        };
        let (a, b) = (self.breakpoints[k], self.breakpoints[k + 1]);
        let t = (s - a) / (b - a);
        let ca = self.dof_of_break[k].map_or(0.0, |d| coeffs[d]);
        let cb = self.dof_of_break[k + 1].map_or(0.0, |d| coeffs[d]);
        ca * (1.0 - t) + cb * t
    }
}

/// Which trace a mortar block integrates against.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TraceSide {
    Gamma1,
    Gamma2,
}

/// All interface blocks of the saddle-point system, indexed by mesh
/// vertices (columns) and multiplier dofs (rows) where applicable.
///
/// * `q1`, `q2`: mortar mass, `(k, j) -> int psi_k phi_j` over the trace.
/// * `q_mm`: multiplier mass.
/// * `r1`, `r2`: flux mass, `int psi_k (beta grad phi_j . nu)` with `nu`
///   the first subdomain's outward normal on both sides.
/// * `n11`, `n12`, `n22`: flux-flux blocks
///   `int (beta_a grad phi_i . nu)(beta_b grad phi_j . nu)`.
///
/// Flux blocks carry columns for every vertex of an interface-adjacent
/// triangle, not only interface vertices: an off-interface hat has a
/// nonzero normal derivative on the interface.
#[derive(Clone, Debug)]
pub struct CouplingBlocks {
    pub q1: Triplets,
    pub q2: Triplets,
    pub q_mm: DMatrix<f64>,
    pub r1: Triplets,
    pub r2: Triplets,
    pub n11: Triplets,
    pub n12: Triplets,
    pub n22: Triplets,
}

/// Hat values of a trace segment's two endpoint basis functions at `s`.
fn trace_hats(trace: &InterfaceTrace, seg: usize, s: f64) -> [(usize, f64); 2] {
    let a = trace.breakpoints[seg];
    let b = trace.breakpoints[seg + 1];
    let t = (s - a) / (b - a);
    [
        (trace.vertex_ids[seg], 1.0 - t),
        (trace.vertex_ids[seg + 1], t),
    ]
}

/// Constant flux values `beta * grad(phi_i) . normal` of the three basis
/// functions of the triangle owning a trace segment.
fn segment_fluxes(
    space: &FeSpace,
    triangle: usize,
    beta: f64,
    normal: [f64; 2],
) -> [(usize, f64); 3] {
    let mesh = space.mesh();
    let (grads, _) = p1_gradients(&mesh.triangle_coords(triangle));
    let verts = mesh.triangles[triangle];
    [0, 1, 2].map(|i| {
        (
            verts[i],
            beta * (grads[i][0] * normal[0] + grads[i][1] * normal[1]),
        )
    })
}

/// Assemble all coupling blocks on the merged partition. `seg_weight`
/// multiplies the integrand on each merged segment (used for the
/// per-segment penalty variant; pass `|_| 1.0` for plain blocks).
pub fn assemble_coupling_blocks(
    merged: &MergedPartition,
    space1: &FeSpace,
    space2: &FeSpace,
    mult: &MultiplierSpace,
    beta1: f64,
    beta2: f64,
    seg_weight: impl Fn(usize) -> f64,
) -> CouplingBlocks {
    let v1 = space1.n_vertices();
    let v2 = space2.n_vertices();
    let nl = mult.n_dofs();
    let gauss = gauss_segment(2).expect("2-point rule");

    let mut q1 = Triplets::new(nl, v1);
    let mut q2 = Triplets::new(nl, v2);
    let mut q_mm = DMatrix::<f64>::zeros(nl, nl);
    let mut r1 = Triplets::new(nl, v1);
    let mut r2 = Triplets::new(nl, v2);
    let mut n11 = Triplets::new(v1, v1);
    let mut n12 = Triplets::new(v1, v2);
    let mut n22 = Triplets::new(v2, v2);

    for m in 0..merged.segment_count() {
        let (a, b) = merged.segment(m);
        let w_seg = seg_weight(m);
        let p1 = merged.parent1[m];
        let p2 = merged.parent2[m];
        // Fixed normal: outward normal of the first subdomain.
        let nu = merged.trace1.normals[p1];
        let flux1 = segment_fluxes(space1, merged.trace1.triangles[p1], beta1, nu);
        let flux2 = segment_fluxes(space2, merged.trace2.triangles[p2], beta2, nu);

        // Multiplier dofs supported on this segment.
        let mult_here: Vec<(usize, usize)> = [p2, p2 + 1]
            .iter()
            .filter_map(|&bp| mult.dof_of_break[bp].map(|d| (d, bp)))
            .collect();

        for (&x, &gw) in gauss.nodes.iter().zip(&gauss.weights) {
            let s = a + x * (b - a);
            let w = gw * (b - a) * w_seg;
            let hats1 = trace_hats(&merged.trace1, p1, s);
            let hats2 = trace_hats(&merged.trace2, p2, s);
            for &(k, bp) in &mult_here {
                let psi = {
                    // On this segment the dof's hat is linear toward its node.
                    let (l, r) = (merged.trace2.breakpoints[p2], merged.trace2.breakpoints[p2 + 1]);
                    let t = (s - l) / (r - l);
                    if bp == p2 {
                        1.0 - t
                    } else {
                        t
                    }
                };
                for &(vert, phi) in &hats1 {
                    q1.push(k, vert, w * psi * phi);
                }
                for &(vert, phi) in &hats2 {
                    q2.push(k, vert, w * psi * phi);
                }
                for &(l, lbp) in &mult_here {
                    let (lo, hi) = (merged.trace2.breakpoints[p2], merged.trace2.breakpoints[p2 + 1]);
                    let t = (s - lo) / (hi - lo);
                    let psi_l = if lbp == p2 { 1.0 - t } else { t };
                    q_mm[(k, l)] += w * psi * psi_l;
                }
                for &(vert, fx) in &flux1 {
                    r1.push(k, vert, w * psi * fx);
                }
                for &(vert, fx) in &flux2 {
                    r2.push(k, vert, w * psi * fx);
                }
            }
            for &(vi, fi) in &flux1 {
                for &(vj, fj) in &flux1 {
                    n11.push(vi, vj, w * fi * fj);
                }
                for &(vj, fj) in &flux2 {
                    n12.push(vi, vj, w * fi * fj);
                }
            }
            for &(vi, fi) in &flux2 {
                for &(vj, fj) in &flux2 {
                    n22.push(vi, vj, w * fi * fj);
                }
            }
        }
    }

    CouplingBlocks {
        q1,
        q2,
        q_mm,
        r1,
        r2,
        n11,
        n12,
        n22,
    }
}

/// Mortar mass block of one trace against the multiplier space: rows over
/// multiplier dofs, columns over the mesh vertices of the trace.
pub fn assemble_mortar_mass(
    merged: &MergedPartition,
    side: TraceSide,
    mult: &MultiplierSpace,
) -> Triplets {
    let gauss = gauss_segment(2).expect("2-point rule");
    let trace = match side {
        TraceSide::Gamma1 => &merged.trace1,
        TraceSide::Gamma2 => &merged.trace2,
    };
    let ncols = trace.vertex_ids.iter().copied().max().unwrap_or(0) + 1;
    let mut out = Triplets::new(mult.n_dofs(), ncols);
    for m in 0..merged.segment_count() {
        let (a, b) = merged.segment(m);
        let parent = match side {
            TraceSide::Gamma1 => merged.parent1[m],
            TraceSide::Gamma2 => merged.parent2[m],
        };
        let p2 = merged.parent2[m];
        let mult_here: Vec<(usize, usize)> = [p2, p2 + 1]
            .iter()
            .filter_map(|&bp| mult.dof_of_break[bp].map(|d| (d, bp)))
            .collect();
        for (&x, &gw) in gauss.nodes.iter().zip(&gauss.weights) {
            let s = a + x * (b - a);
            let w = gw * (b - a);
            let hats = trace_hats(trace, parent, s);
            let (lo, hi) = (merged.trace2.breakpoints[p2], merged.trace2.breakpoints[p2 + 1]);
            let t = (s - lo) / (hi - lo);
            for &(k, kbp) in &mult_here {
                let psi = if kbp == p2 { 1.0 - t } else { t };
                for &(vert, phi) in &hats {
                    out.push(k, vert, w * psi * phi);
                }
            }
        }
    }
    out
}

/// Multiplier mass matrix `int psi_i psi_j`.
pub fn assemble_multiplier_mass(mult: &MultiplierSpace) -> DMatrix<f64> {
    let gauss = gauss_segment(2).expect("2-point rule");
    let nl = mult.n_dofs();
    let mut q = DMatrix::<f64>::zeros(nl, nl);
    for seg in 0..mult.breakpoints.len() - 1 {
        let (a, b) = (mult.breakpoints[seg], mult.breakpoints[seg + 1]);
        let here: Vec<(usize, usize)> = [seg, seg + 1]
            .iter()
            .filter_map(|&bp| mult.dof_of_break[bp].map(|d| (d, bp)))
            .collect();
        for (&x, &gw) in gauss.nodes.iter().zip(&gauss.weights) {
            let s = a + x * (b - a);
            let t = (s - a) / (b - a);
            let w = gw * (b - a);
            for &(k, kbp) in &here {
                let pk = if kbp == seg { 1.0 - t } else { t };
                for &(l, lbp) in &here {
                    let pl = if lbp == seg { 1.0 - t } else { t };
                    q[(k, l)] += w * pk * pl;
                }
            }
        }
    }
    q
}

/// Flux mass block: rows over multiplier dofs, columns over all vertices
/// of interface-adjacent triangles of `space`. The flux direction is
/// `normal_sign` times the subdomain's own outward normal.
pub fn assemble_flux_mass(
    merged: &MergedPartition,
    side: TraceSide,
    space: &FeSpace,
    beta: f64,
    normal_sign: f64,
    mult: &MultiplierSpace,
) -> Triplets {
    let gauss = gauss_segment(2).expect("2-point rule");
    let mut out = Triplets::new(mult.n_dofs(), space.n_vertices());
    for m in 0..merged.segment_count() {
        let (a, b) = merged.segment(m);
        let (trace, parent) = match side {
            TraceSide::Gamma1 => (&merged.trace1, merged.parent1[m]),
            TraceSide::Gamma2 => (&merged.trace2, merged.parent2[m]),
        };
        let nu = trace.normals[parent];
        let nu = [normal_sign * nu[0], normal_sign * nu[1]];
        let fluxes = segment_fluxes(space, trace.triangles[parent], beta, nu);
        let p2 = merged.parent2[m];
        let mult_here: Vec<(usize, usize)> = [p2, p2 + 1]
            .iter()
            .filter_map(|&bp| mult.dof_of_break[bp].map(|d| (d, bp)))
            .collect();
        for (&x, &gw) in gauss.nodes.iter().zip(&gauss.weights) {
            let s = a + x * (b - a);
            let w = gw * (b - a);
            let (lo, hi) = (merged.trace2.breakpoints[p2], merged.trace2.breakpoints[p2 + 1]);
            let t = (s - lo) / (hi - lo);
            for &(k, kbp) in &mult_here {
                let psi = if kbp == p2 { 1.0 - t } else { t };
                for &(vert, fx) in &fluxes {
                    out.push(k, vert, w * psi * fx);
                }
            }
        }
    }
    out
}

/// The three flux-flux blocks (same-side 1, cross, same-side 2) with the
/// fixed interface normal on both sides.
pub fn assemble_flux_flux(
    merged: &MergedPartition,
    space1: &FeSpace,
    space2: &FeSpace,
    beta1: f64,
    beta2: f64,
) -> (Triplets, Triplets, Triplets) {
    // Multiplier space is irrelevant for these blocks; reuse the main
    // assembler with a trivial one-dof space on trace 2.
    let mult = MultiplierSpace::new(&merged.trace2, true).expect("trace has vertices");
    let blocks = assemble_coupling_blocks(merged, space1, space2, &mult, beta1, beta2, |_| 1.0);
    (blocks.n11, blocks.n12, blocks.n22)
}

/// L2-project a function on the interface onto the multiplier space:
/// solves `Q_mm c = (phi, psi_k)`.
pub fn l2_project(phi: impl Fn(f64) -> f64, mult: &MultiplierSpace) -> Result<Vec<f64>> {
    let q = assemble_multiplier_mass(mult);
    let rule = gauss_segment(5).expect("5-point rule");
    let moments = moment_vector(&phi, mult, &rule);
    let chol = q
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Internal("multiplier mass matrix not SPD".into()))?;
    let c = chol.solve(&DVector::from_vec(moments));
    Ok(c.iter().copied().collect())
}

/// Moment vector `(phi, psi_k)` with the given per-segment rule.
pub fn moment_vector(
    phi: &impl Fn(f64) -> f64,
    mult: &MultiplierSpace,
    rule: &SegmentRule,
) -> Vec<f64> {
    let mut out = vec![0.0; mult.n_dofs()];
    for seg in 0..mult.breakpoints.len() - 1 {
        let (a, b) = (mult.breakpoints[seg], mult.breakpoints[seg + 1]);
        for (&x, &gw) in rule.nodes.iter().zip(&rule.weights) {
            let s = a + x * (b - a);
            let t = (s - a) / (b - a);
            let w = gw * (b - a) * phi(s);
            if let Some(k) = mult.dof_of_break[seg] {
                out[k] += w * (1.0 - t);
            }
            if let Some(k) = mult.dof_of_break[seg + 1] {
                out[k] += w * t;
            }
        }
    }
    out
}

/// Largest eigenvalue of the symmetric pencil `M v = mu K v`. `K` must be
/// positive definite, or positive semidefinite with only the constant
/// vector in its kernel when `deflate_constants` is set.
pub fn max_pencil_eigenvalue(
    m: &DMatrix<f64>,
    k: &DMatrix<f64>,
    deflate_constants: bool,
) -> Result<f64> {
    let n = m.nrows();
    let (m_red, k_red) = if deflate_constants {
        // Basis of the complement of span{(1,...,1)}: e_i - e_{i+1}.
        let mut w = DMatrix::<f64>::zeros(n, n - 1);
        for i in 0..n - 1 {
            w[(i, i)] = 1.0;
            w[(i + 1, i)] = -1.0;
        }
        (&w.transpose() * m * &w, &w.transpose() * k * &w)
    } else {
        (m.clone(), k.clone())
    };
    let chol = k_red
        .cholesky()
        .ok_or_else(|| Error::InvalidArgument("pencil matrix K not SPD on the test space".into()))?;
    let l_inv = chol
        .l()
        .try_inverse()
        .ok_or_else(|| Error::Internal("singular Cholesky factor".into()))?;
    let b = &l_inv * m_red * l_inv.transpose();
    let eig = b.symmetric_eigen();
    Ok(eig.eigenvalues.iter().copied().fold(f64::MIN, f64::max))
}

/// Estimate the inverse-trace constant: the largest value of
/// `||h^(1/2) grad(v_h) . nu||_(interface) / ||grad v_h||_(subdomain)`
/// over the space's free dofs, computed from the generalized eigenvalue
/// problem `h T v = mu K v` (flux-flux Gram against stiffness).
pub fn estimate_trace_constant(space: &FeSpace) -> Result<f64> {
    let side = space
        .interface_side
        .ok_or_else(|| invalid("space has no interface"))?;
    let trace = crate::mesh::interface_trace(space.mesh(), side)?;
    let h = space.mesh().cell_size;

    // One-sided flux Gram over free dofs, beta = 1, own outward normal.
    let n_free = space.n_free();
    let mut t = Triplets::new(n_free, n_free);
    for seg in 0..trace.segment_count() {
        let len = trace.breakpoints[seg + 1] - trace.breakpoints[seg];
        let fluxes = segment_fluxes(space, trace.triangles[seg], 1.0, trace.normals[seg]);
        for &(vi, fi) in &fluxes {
            for &(vj, fj) in &fluxes {
                if let (Some(a), Some(b)) = (space.free_index[vi], space.free_index[vj]) {
                    t.push(a, b, h * len * fi * fj);
                }
            }
        }
    }
    let k = assemble_stiffness(space, 1.0, 0.0);

    if n_free <= 160 {
        let mut m_d = DMatrix::<f64>::zeros(n_free, n_free);
        for &(i, j, v) in &t.entries {
            m_d[(i, j)] += v;
        }
        let mut k_d = DMatrix::<f64>::zeros(n_free, n_free);
        for j in 0..k.ncols {
            for idx in k.col_ptr[j]..k.col_ptr[j + 1] {
                k_d[(k.row_idx[idx], j)] = k.values[idx];
            }
        }
        return Ok(max_pencil_eigenvalue(&m_d, &k_d, false)?.max(0.0).sqrt());
    }

    // Power iteration on K^-1 (h T) with the generalized Rayleigh quotient.
    let mut x = vec![1.0; n_free];
    let mut mu_prev = 0.0;
    for iter in 0..1000 {
        let mut mx = vec![0.0; n_free];
        t.accumulate_matvec(1.0, &x, &mut mx);
        let (y, _) = solve_linear(&k, &mx)?;
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::Internal("trace estimator degenerated".into()));
        }
        x = y.iter().map(|v| v / norm).collect();
        let mut mx = vec![0.0; n_free];
        t.accumulate_matvec(1.0, &x, &mut mx);
        let num: f64 = x.iter().zip(&mx).map(|(a, b)| a * b).sum();
        let kx = k.matvec(&x);
        let den: f64 = x.iter().zip(&kx).map(|(a, b)| a * b).sum();
        let mu = num / den;
        if iter > 3 && (mu - mu_prev).abs() <= 1e-12 * mu.abs() {
            return Ok(mu.max(0.0).sqrt());
        }
        mu_prev = mu;
    }
    Ok(mu_prev.max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_rect_tri_mesh, interface_trace, Diagonal, Rect, RectSide};

    fn pair(n1y: usize, n2y: usize) -> (FeSpace, FeSpace, MergedPartition) {
        let mut m1 =
            build_rect_tri_mesh(Rect::new(0.0, 0.0, 0.5, 1.0), n1y / 2, n1y, Diagonal::Ne).unwrap();
        m1.mark_interface(RectSide::Right).unwrap();
        let mut m2 =
            build_rect_tri_mesh(Rect::new(0.5, 0.0, 1.0, 1.0), n2y / 2, n2y, Diagonal::Ne).unwrap();
        m2.mark_interface(RectSide::Left).unwrap();
        let s1 = FeSpace::new(m1).unwrap();
        let s2 = FeSpace::new(m2).unwrap();
        let t1 = interface_trace(s1.mesh(), RectSide::Right).unwrap();
        let t2 = interface_trace(s2.mesh(), RectSide::Left).unwrap();
        let merged = merge_partitions(&t1, &t2).unwrap();
        (s1, s2, merged)
    }

    #[test]
    fn merge_sorted_union() {
        let (_, _, merged) = pair(2, 3);
        // {0, 1/2, 1} u {0, 1/3, 2/3, 1}
        let expected = [0.0, 1.0 / 3.0, 0.5, 2.0 / 3.0, 1.0];
        assert_eq!(merged.breakpoints.len(), 5);
        for (a, b) in merged.breakpoints.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(merged.segment_count(), 4);
        assert_eq!(merged.parent1, vec![0, 0, 1, 1]);
        assert_eq!(merged.parent2, vec![0, 1, 1, 2]);
    }

    #[test]
    fn merge_identical_traces() {
        let (_, _, merged) = pair(4, 4);
        assert_eq!(merged.breakpoints.len(), 5);
        assert_eq!(merged.parent1, merged.parent2);
    }

    #[test]
    fn merge_quarter_sixth() {
        let (_, _, merged) = pair(4, 6);
        let expected = [
            0.0,
            1.0 / 6.0,
            0.25,
            1.0 / 3.0,
            0.5,
            2.0 / 3.0,
            0.75,
            5.0 / 6.0,
            1.0,
        ];
        assert_eq!(merged.segment_count(), 8);
        for (a, b) in merged.breakpoints.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn merge_lengths_tile_interface() {
        let (_, _, merged) = pair(4, 6);
        let total: f64 = (0..merged.segment_count())
            .map(|m| {
                let (a, b) = merged.segment(m);
                b - a
            })
            .sum();
        assert!((total - merged.length()).abs() < 1e-14);
    }

    #[test]
    fn merge_rejects_mismatched_extent() {
        let mut m1 =
            build_rect_tri_mesh(Rect::new(0.0, 0.0, 0.5, 1.0), 1, 2, Diagonal::Ne).unwrap();
        m1.mark_interface(RectSide::Right).unwrap();
        let mut m2 =
            build_rect_tri_mesh(Rect::new(0.5, 0.0, 1.0, 0.5), 1, 2, Diagonal::Ne).unwrap();
        m2.mark_interface(RectSide::Left).unwrap();
        let t1 = interface_trace(&m1, RectSide::Right).unwrap();
        let t2 = interface_trace(&m2, RectSide::Left).unwrap();
        assert!(merge_partitions(&t1, &t2).is_err());
    }

    #[test]
    fn multiplier_mass_three_segments() {
        // Hand integration of hat products on a uniform 3-segment mesh,
        // endpoint dofs excluded: [[2h/3, h/6], [h/6, 2h/3]] with h = 1/3.
        let (_, s2, merged) = pair(2, 3);
        let _ = s2;
        let mult = MultiplierSpace::new(&merged.trace2, false).unwrap();
        assert_eq!(mult.n_dofs(), 2);
        let q = assemble_multiplier_mass(&mult);
        assert!((q[(0, 0)] - 2.0 / 9.0).abs() < 1e-15);
        assert!((q[(0, 1)] - 1.0 / 18.0).abs() < 1e-15);
        assert!((q[(1, 0)] - 1.0 / 18.0).abs() < 1e-15);
        assert!((q[(1, 1)] - 2.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn q_mm_row_sum_is_h_for_interior_dof() {
        let (_, _, merged) = pair(4, 6);
        let mult = MultiplierSpace::new(&merged.trace2, false).unwrap();
        let q = assemble_multiplier_mass(&mult);
        // Dof 2 (node 1/2) has both neighbors in the dof set.
        let row_sum: f64 = (0..mult.n_dofs()).map(|l| q[(2, l)]).sum();
        assert!((row_sum - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn mortar_mass_matching_traces_is_1d_mass() {
        // With identical traces, the mortar block restricted to multiplier
        // columns equals the 1D mass matrix of the common mesh.
        let (_, _, merged) = pair(4, 4);
        let mult = MultiplierSpace::new(&merged.trace2, false).unwrap();
        let q1 = assemble_mortar_mass(&merged, TraceSide::Gamma1, &mult).to_csc();
        let q_mm = assemble_multiplier_mass(&mult);
        for k in 0..mult.n_dofs() {
            for (bp, &vert) in merged.trace1.vertex_ids.iter().enumerate() {
                if let Some(l) = mult.dof_of_break[bp] {
                    assert!((q1.get(k, vert) - q_mm[(k, l)]).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn flux_block_single_triangle_value() {
        // Triangle (1/2,0),(1/2,1),(0,0): basis at (0,0) is 1 - 2x, flux
        // grad . nu = -2; column entry is -2 beta int(psi_k).
        let (s1, _, merged) = pair(2, 3);
        let mult = MultiplierSpace::new(&merged.trace2, false).unwrap();
        let r1 = assemble_flux_mass(&merged, TraceSide::Gamma1, &s1, 2.5, 1.0, &mult).to_csc();
        // The 1x2 mesh of the left subdomain: interface edge from (1/2,0)
        // to (1/2,1/2) is owned by triangle (sw, se, ne) with sw = (0,0).
        // Its basis hat at sw has flux -2 on that edge.
        // int psi_0 over [0, 1/2] with psi_0 the hat at 1/3 of the 3-segment
        // trace mesh: 1/6 over the rising part [0, 1/3] plus 1/8 over
        // [1/3, 1/2] of the falling part.
        let psi0_mass = 1.0 / 6.0 + 1.0 / 8.0;
        let sw = 0; // vertex (0,0) has index 0
        let expected = -2.0 * 2.5 * psi0_mass;
        assert!(
            (r1.get(0, sw) - expected).abs() < 1e-14,
            "{} vs {}",
            r1.get(0, sw),
            expected
        );
    }

    #[test]
    fn zero_beta_gives_zero_flux_blocks() {
        let (s1, s2, merged) = pair(4, 6);
        let mult = MultiplierSpace::new(&merged.trace2, false).unwrap();
        let r1 = assemble_flux_mass(&merged, TraceSide::Gamma1, &s1, 0.0, 1.0, &mult);
        assert!(r1.entries.iter().all(|&(_, _, v)| v == 0.0));
        let (n11, n12, n22) = assemble_flux_flux(&merged, &s1, &s2, 0.0, 0.0);
        for t in [n11, n12, n22] {
            assert!(t.entries.iter().all(|&(_, _, v)| v == 0.0));
        }
    }

    #[test]
    fn flux_partition_of_unity_column_sums() {
        // Sum over all basis functions of grad(phi) is zero, so the flux
        // columns of the full vertex set sum to zero per multiplier row.
        let (s1, _, merged) = pair(4, 6);
        let mult = MultiplierSpace::new(&merged.trace2, false).unwrap();
        let r1 = assemble_flux_mass(&merged, TraceSide::Gamma1, &s1, 3.0, 1.0, &mult);
        let mut row_sums = vec![0.0; mult.n_dofs()];
        for &(k, _, v) in &r1.entries {
            row_sums[k] += v;
        }
        for s in row_sums {
            assert!(s.abs() < 1e-13);
        }
    }

    #[test]
    fn flux_flux_gram_is_psd_and_rank_deficient() {
        let (s1, s2, merged) = pair(4, 6);
        let (n11, _, n22) = assemble_flux_flux(&merged, &s1, &s2, 1.5, 2.5);
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for block in [(&n11, s1.n_vertices()), (&n22, s2.n_vertices())] {
            let (t, n) = block;
            for _ in 0..50 {
                let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let quad = t.bilinear(&v, &v);
                assert!(quad >= -1e-12, "flux Gram not PSD: {quad}");
            }
        }
    }

    #[test]
    fn projection_is_idempotent_on_the_space() {
        let (_, _, merged) = pair(4, 6);
        let mult = MultiplierSpace::new(&merged.trace2, false).unwrap();
        let coeffs: Vec<f64> = (0..mult.n_dofs()).map(|k| 0.3 + 0.2 * k as f64).collect();
        let c = coeffs.clone();
        let mult2 = mult.clone();
        let proj = l2_project(move |s| mult2.eval(&c, s), &mult).unwrap();
        for (a, b) in proj.iter().zip(&coeffs) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn projection_of_one_with_excluded_endpoints() {
        let (_, _, merged) = pair(4, 6);
        let mult = MultiplierSpace::new(&merged.trace2, false).unwrap();
        let proj = l2_project(|_| 1.0, &mult).unwrap();
        // Not the constant one near the endpoints...
        assert!((proj[0] - 1.0).abs() > 1e-3);
        // ...but orthogonality holds against every basis function.
        let rule = gauss_segment(5).unwrap();
        let mults = mult.clone();
        let proj2 = proj.clone();
        let residual = moment_vector(&move |s| 1.0 - mults.eval(&proj2, s), &mult, &rule);
        for r in residual {
            assert!(r.abs() < 1e-12);
        }
    }

    #[test]
    fn pencil_eigenvalue_single_triangle_hand_value() {
        // Right triangle with legs h, interface on one leg: the quotient
        // 2 (a-b)^2 / ((a-b)^2 + (a-c)^2) has maximum 2, so C_I = sqrt(2).
        let h = 0.25;
        let k = DMatrix::from_row_slice(3, 3, &[1.0, -0.5, -0.5, -0.5, 0.5, 0.0, -0.5, 0.0, 0.5]);
        let mut t = DMatrix::zeros(3, 3);
        // Edge from (0,0) to (0,h) owned by the triangle; fluxes of the
        // three hats along nu = (1,0): -1/h, 1/h, 0. Gram weighted by h
        // (edge length) and h (the cell size factor).
        let f = [-1.0 / h, 1.0 / h, 0.0];
        for i in 0..3 {
            for j in 0..3 {
                t[(i, j)] = h * h * f[i] * f[j];
            }
        }
        let mu = max_pencil_eigenvalue(&t, &k, true).unwrap();
        assert!((mu - 2.0).abs() < 1e-8, "mu = {mu}");
    }

    #[test]
    fn trace_constant_stable_under_refinement() {
        let mut estimates = Vec::new();
        for n in [4usize, 8, 16] {
            let mut mesh =
                build_rect_tri_mesh(Rect::new(0.0, 0.0, 0.5, 1.0), n / 2, n, Diagonal::Ne)
                    .unwrap();
            mesh.mark_interface(RectSide::Right).unwrap();
            let space = FeSpace::new(mesh).unwrap();
            estimates.push(estimate_trace_constant(&space).unwrap());
        }
        let min = estimates.iter().copied().fold(f64::MAX, f64::min);
        let max = estimates.iter().copied().fold(f64::MIN, f64::max);
        assert!(
            (max - min) / max < 0.05,
            "estimates vary too much: {estimates:?}"
        );
    }

    #[test]
    fn trace_constant_bounded_under_one_directional_refinement() {
        // Refining only one grid direction (desk scale) must not blow up
        // the estimate.
        let mut across = Vec::new();
        let mut along = Vec::new();
        for k in [1usize, 2, 4] {
            let mut mesh =
                build_rect_tri_mesh(Rect::new(0.0, 0.0, 0.5, 1.0), 2 * k, 4, Diagonal::Ne)
                    .unwrap();
            mesh.mark_interface(RectSide::Right).unwrap();
            across.push(estimate_trace_constant(&FeSpace::new(mesh).unwrap()).unwrap());

            let mut mesh =
                build_rect_tri_mesh(Rect::new(0.0, 0.0, 0.5, 1.0), 2, 4 * k, Diagonal::Ne)
                    .unwrap();
            mesh.mark_interface(RectSide::Right).unwrap();
            along.push(estimate_trace_constant(&FeSpace::new(mesh).unwrap()).unwrap());
        }
        for e in across.iter().chain(along.iter()) {
            assert!(*e < 10.0, "estimate unbounded: {across:?} {along:?}");
        }
    }
}
