//! Global stabilized saddle-point system: assembly from the subdomain and
//! coupling blocks, direct solve, and evaluation of the underlying
//! bilinear form for verification.
//!
//! Unknown layout: interior dofs of subdomain 1, its interface dofs,
//! interior dofs of subdomain 2, its interface dofs, multiplier dofs.

use crate::analysis::ProblemSpec;
use crate::coupling::{assemble_coupling_blocks, CouplingBlocks, MergedPartition, MultiplierSpace};
use crate::error::{invalid, Result};
use crate::fem::{assemble_load_full, assemble_stiffness_full, FeSpace};
use crate::sparse::{solve_linear, CscMatrix, SolveStats, Triplets};

/// Stabilization switch and penalty rule of the discrete form.
#[derive(Clone, Copy, Debug)]
pub struct MethodParams {
    /// Symmetry switch in `[0, 1]`; 1 gives the symmetric formulation.
    pub s: f64,
    /// Penalty scale; the penalty is `gamma0 * h`.
    pub gamma0: f64,
    /// Use a per-merged-segment penalty `gamma0 * local h` instead of the
    /// global rule.
    pub local_gamma: bool,
}

impl Default for MethodParams {
    fn default() -> Self {
        MethodParams {
            s: 1.0,
            gamma0: 1.0,
            local_gamma: false,
        }
    }
}

impl MethodParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.s) {
            return Err(invalid("stabilization switch must lie in [0, 1]"));
        }
        if !(self.gamma0 > 0.0) || !self.gamma0.is_finite() {
            return Err(invalid("penalty scale must be positive and finite"));
        }
        Ok(())
    }
}

/// Coercivity-safe upper bound for the penalty scale given the measured
/// inverse-trace constant and the coefficient bounds. Reported, not
/// enforced: at strong coefficient contrast the bound is vacuous while the
/// method remains well behaved.
pub fn admissible_gamma0(c_i: f64, m_l: f64, m_u: f64) -> f64 {
    m_l / (c_i * c_i * m_u * m_u)
}

/// Block sizes of the saddle system.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DofLayout {
    pub n1_interior: usize,
    pub n1_interface: usize,
    pub n2_interior: usize,
    pub n2_interface: usize,
    pub n_mult: usize,
}

impl DofLayout {
    pub fn n1(&self) -> usize {
        self.n1_interior + self.n1_interface
    }

    pub fn n2(&self) -> usize {
        self.n2_interior + self.n2_interface
    }

    pub fn offset_u2(&self) -> usize {
        self.n1()
    }

    pub fn offset_mult(&self) -> usize {
        self.n1() + self.n2()
    }

    pub fn total(&self) -> usize {
        self.n1() + self.n2() + self.n_mult
    }
}

/// The assembled system `A U = F` plus everything needed to reconstruct
/// full subdomain coefficient vectors and to evaluate the bilinear form.
#[derive(Clone, Debug)]
pub struct SaddleSystem {
    /// Reduced matrix over free dofs and multipliers.
    pub a: CscMatrix,
    pub rhs: Vec<f64>,
    pub layout: DofLayout,
    /// Penalty value actually used (`gamma0 * h` for the global rule).
    pub gamma: f64,
    pub s: f64,
    /// Full-form triplets over (all vertices of mesh 1) + (all vertices of
    /// mesh 2) + multipliers; realizes the bilinear form including
    /// Dirichlet columns.
    full: Triplets,
    /// Load vector in the same full indexing.
    load_full: Vec<f64>,
    /// Dirichlet lift per subdomain (all-vertex vectors).
    lift1: Vec<f64>,
    lift2: Vec<f64>,
    /// Free vertex ids, in reduced order, per subdomain.
    free1: Vec<usize>,
    free2: Vec<usize>,
}

/// Discrete solution: full vertex coefficients per subdomain (Dirichlet
/// values included) and multiplier coefficients.
#[derive(Clone, Debug)]
pub struct Solution {
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
    pub lambda: Vec<f64>,
    pub stats: SolveStats,
}

/// Coefficient view of a trial or test function for [`evaluate_form`]:
/// all-vertex vectors per subdomain plus multiplier coefficients.
#[derive(Clone, Copy, Debug)]
pub struct Coeffs<'a> {
    pub u1: &'a [f64],
    pub u2: &'a [f64],
    pub lambda: &'a [f64],
}

/// Assemble the stabilized saddle-point system.
///
/// The multiplier coupling enters with the jump taken as `v_2 - v_1` and
/// the flux average taken along the first subdomain's outward normal on
/// both sides; this is the sign convention under which the form is
/// consistent, which the patch and consistency tests pin down.
pub fn build_saddle_system(
    problem: &ProblemSpec,
    params: &MethodParams,
    space1: &FeSpace,
    space2: &FeSpace,
    mult: &MultiplierSpace,
    merged: &MergedPartition,
    blocks: &CouplingBlocks,
) -> Result<SaddleSystem> {
    params.validate()?;
    problem.validate_coefficients()?;
    if blocks.q1.ncols != space1.n_vertices()
        || blocks.q2.ncols != space2.n_vertices()
        || blocks.q_mm.nrows() != mult.n_dofs()
    {
        return Err(invalid("coupling blocks do not match the given spaces"));
    }

    let v1 = space1.n_vertices();
    let v2 = space2.n_vertices();
    let nl = mult.n_dofs();
    let layout = DofLayout {
        n1_interior: space1.interior.len(),
        n1_interface: space1.interface.len(),
        n2_interior: space2.interior.len(),
        n2_interface: space2.interface.len(),
        n_mult: nl,
    };

    let h = space1.mesh().cell_size.max(space2.mesh().cell_size);
    let gamma = params.gamma0 * h;
    let s = params.s;

    // For the per-segment rule the penalty weight moves inside the
    // interface integrals; the outer factor becomes 1.
    let local_blocks;
    let (cb, gamma_factor) = if params.local_gamma {
        let g0 = params.gamma0;
        local_blocks = assemble_coupling_blocks(
            merged,
            space1,
            space2,
            mult,
            problem.beta1,
            problem.beta2,
            |m| {
                let len1 = merged.trace1.breakpoints[merged.parent1[m] + 1]
                    - merged.trace1.breakpoints[merged.parent1[m]];
                let len2 = merged.trace2.breakpoints[merged.parent2[m] + 1]
                    - merged.trace2.breakpoints[merged.parent2[m]];
                g0 * len1.max(len2)
            },
        );
        (&local_blocks, 1.0)
    } else {
        (blocks, gamma)
    };

    // Full-form assembly over all vertex dofs plus multipliers.
    let off2 = v1;
    let off_l = v1 + v2;
    let mut full = Triplets::new(off_l + nl, off_l + nl);

    let k1 = assemble_stiffness_full(space1, problem.beta1, problem.a1);
    for &(i, j, v) in &k1.entries {
        full.push(i, j, v);
    }
    let k2 = assemble_stiffness_full(space2, problem.beta2, problem.a2);
    for &(i, j, v) in &k2.entries {
        full.push(off2 + i, off2 + j, v);
    }

    // Flux-flux stabilization: -(s gamma / 4) per block; the same-side
    // blocks already contain both (i, j) orders.
    let nq = -s * gamma_factor / 4.0;
    if nq != 0.0 {
        for &(i, j, v) in &cb.n11.entries {
            full.push(i, j, nq * v);
        }
        for &(i, j, v) in &cb.n22.entries {
            full.push(off2 + i, off2 + j, nq * v);
        }
        for &(i, j, v) in &cb.n12.entries {
            full.push(i, off2 + j, nq * v);
            full.push(off2 + j, i, nq * v);
        }
    }

    // Multiplier coupling. Jump sign: -1 on the first trace, +1 on the
    // second. Flux terms carry gamma/2, with the s factor only on the
    // primal-row side.
    for &(k, j, v) in &cb.q1.entries {
        full.push(off_l + k, j, -v);
        full.push(j, off_l + k, -v);
    }
    for &(k, j, v) in &cb.q2.entries {
        full.push(off_l + k, off2 + j, v);
        full.push(off2 + j, off_l + k, v);
    }
    for &(k, j, v) in &cb.r1.entries {
        let base = 0.5 * gamma_factor * v;
        full.push(off_l + k, j, base);
        full.push(j, off_l + k, s * base);
    }
    for &(k, j, v) in &cb.r2.entries {
        let base = 0.5 * gamma_factor * v;
        full.push(off_l + k, off2 + j, base);
        full.push(off2 + j, off_l + k, s * base);
    }

    // Multiplier mass: -gamma Q_mm.
    for k in 0..nl {
        for l in 0..nl {
            let m = if params.local_gamma {
                cb.q_mm[(k, l)]
            } else {
                gamma * blocks.q_mm[(k, l)]
            };
            if m != 0.0 {
                full.push(off_l + k, off_l + l, -m);
            }
        }
    }

    // Load and Dirichlet lift in full indexing.
    let mut load_full = vec![0.0; off_l + nl];
    let f1 = problem.f1.clone();
    for (i, v) in assemble_load_full(space1, |x, y| f1(x, y)).into_iter().enumerate() {
        load_full[i] = v;
    }
    let f2 = problem.f2.clone();
    for (i, v) in assemble_load_full(space2, |x, y| f2(x, y)).into_iter().enumerate() {
        load_full[off2 + i] = v;
    }

    let g = problem.g.clone();
    let mut lift1 = vec![0.0; v1];
    for v in space1.dirichlet_vertices() {
        let [x, y] = space1.mesh().vertices[v];
        lift1[v] = g(x, y);
    }
    let mut lift2 = vec![0.0; v2];
    for v in space2.dirichlet_vertices() {
        let [x, y] = space2.mesh().vertices[v];
        lift2[v] = g(x, y);
    }

    // Reduce to free dofs: map full index -> reduced index.
    let map = |idx: usize| -> Option<usize> {
        if idx < v1 {
            space1.free_index[idx]
        } else if idx < off_l {
            space2.free_index[idx - off2].map(|f| layout.offset_u2() + f)
        } else {
            Some(layout.offset_mult() + (idx - off_l))
        }
    };
    let lift_at = |idx: usize| -> f64 {
        if idx < v1 {
            lift1[idx]
        } else if idx < off_l {
            lift2[idx - off2]
        } else {
            0.0
        }
    };

    let n_red = layout.total();
    let mut reduced = Triplets::new(n_red, n_red);
    let mut rhs = vec![0.0; n_red];
    for i in 0..load_full.len() {
        if let Some(ri) = map(i) {
            rhs[ri] = load_full[i];
        }
    }
    for &(i, j, v) in &full.entries {
        match (map(i), map(j)) {
            (Some(ri), Some(rj)) => reduced.push(ri, rj, v),
            (Some(ri), None) => rhs[ri] -= v * lift_at(j),
            _ => {}
        }
    }

    let free1: Vec<usize> = space1
        .interior
        .iter()
        .chain(space1.interface.iter())
        .copied()
        .collect();
    let free2: Vec<usize> = space2
        .interior
        .iter()
        .chain(space2.interface.iter())
        .copied()
        .collect();

    Ok(SaddleSystem {
        a: reduced.to_csc(),
        rhs,
        layout,
        gamma,
        s,
        full,
        load_full,
        lift1,
        lift2,
        free1,
        free2,
    })
}

/// Solve the assembled system and reconstruct full subdomain coefficients.
pub fn solve(system: &SaddleSystem) -> Result<Solution> {
    let (x, stats) = solve_linear(&system.a, &system.rhs)?;
    let mut u1 = system.lift1.clone();
    for (k, &vert) in system.free1.iter().enumerate() {
        u1[vert] = x[k];
    }
    let mut u2 = system.lift2.clone();
    let off2 = system.layout.offset_u2();
    for (k, &vert) in system.free2.iter().enumerate() {
        u2[vert] = x[off2 + k];
    }
    let lambda = x[system.layout.offset_mult()..].to_vec();
    Ok(Solution {
        u1,
        u2,
        lambda,
        stats,
    })
}

impl SaddleSystem {
    /// Evaluate the bilinear form on coefficient vectors:
    /// `A(trial_u, trial_lambda; test_u, test_lambda)`.
    ///
    /// Vectors include Dirichlet entries, so interpolants of non-zero
    /// boundary data can be tested directly.
    pub fn evaluate_form(&self, trial: Coeffs<'_>, test: Coeffs<'_>) -> Result<f64> {
        let v1 = self.lift1.len();
        let v2 = self.lift2.len();
        let nl = self.layout.n_mult;
        for c in [&trial, &test] {
            if c.u1.len() != v1 || c.u2.len() != v2 || c.lambda.len() != nl {
                return Err(invalid("coefficient vector lengths do not match the system"));
            }
        }
        let concat = |c: &Coeffs<'_>| -> Vec<f64> {
            c.u1.iter()
                .chain(c.u2.iter())
                .chain(c.lambda.iter())
                .copied()
                .collect()
        };
        Ok(self.full.bilinear(&concat(&test), &concat(&trial)))
    }

    /// The action of the full form on trial coefficients, evaluated
    /// against every basis function at once: returns `A_full * trial`.
    pub fn apply_full(&self, trial: Coeffs<'_>) -> Vec<f64> {
        let x: Vec<f64> = trial
            .u1
            .iter()
            .chain(trial.u2.iter())
            .chain(trial.lambda.iter())
            .copied()
            .collect();
        let mut y = vec![0.0; x.len()];
        self.full.accumulate_matvec(1.0, &x, &mut y);
        y
    }

    /// Load functional against every basis function, full indexing.
    pub fn load_full(&self) -> &[f64] {
        &self.load_full
    }

    /// Coordinate-format dump of the reduced matrix, `i j value` lines.
    pub fn dump_matrix(&self) -> String {
        self.a.dump_coo()
    }
}
