//! Error norms, empirical convergence orders, manufactured problems, and
//! the refinement-study driver.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::coupling::{assemble_coupling_blocks, merge_partitions, MultiplierSpace};
use crate::error::{invalid, Error, Result};
use crate::fem::quadrature::gauss_segment;
use crate::fem::{p1_gradients, FeSpace};
use crate::mesh::{build_rect_tri_mesh, interface_trace, Diagonal, Rect, RectSide};
use crate::system::{build_saddle_system, solve, MethodParams, Solution};

pub type Field2 = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
pub type Field1 = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Interface problem data: per-subdomain coefficients and sources,
/// Dirichlet data, and optionally the exact solution for error studies.
#[derive(Clone)]
pub struct ProblemSpec {
    pub beta1: f64,
    pub beta2: f64,
    pub a1: f64,
    pub a2: f64,
    pub f1: Field2,
    pub f2: Field2,
    pub g: Field2,
    pub exact_u1: Option<Field2>,
    pub exact_u2: Option<Field2>,
    /// Exact multiplier (first subdomain's outward flux) on the interface.
    pub exact_lambda: Option<Field1>,
}

impl std::fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("beta1", &self.beta1)
            .field("beta2", &self.beta2)
            .field("a1", &self.a1)
            .field("a2", &self.a2)
            .field("has_exact", &self.exact_u1.is_some())
            .finish()
    }
}

impl ProblemSpec {
    pub fn validate_coefficients(&self) -> Result<()> {
        if !(self.beta1 > 0.0 && self.beta2 > 0.0)
            || !self.beta1.is_finite()
            || !self.beta2.is_finite()
        {
            return Err(invalid("diffusion coefficients must be positive and finite"));
        }
        if self.a1 < 0.0 || self.a2 < 0.0 {
            return Err(invalid("reaction coefficients must be non-negative"));
        }
        Ok(())
    }

    /// When an exact solution is attached, check that the source terms
    /// equal `-beta lap(u) + a u` by finite differences on a sample grid.
    pub fn validate(&self) -> Result<()> {
        self.validate_coefficients()?;
        let (Some(u1), Some(u2)) = (&self.exact_u1, &self.exact_u2) else {
            return Ok(());
        };
        for (u, f, beta, a, x_range) in [
            (u1, &self.f1, self.beta1, self.a1, (0.05, 0.45)),
            (u2, &self.f2, self.beta2, self.a2, (0.55, 0.95)),
        ] {
            let mut max_f: f64 = 0.0;
            let mut max_diff: f64 = 0.0;
            for i in 0..5 {
                for j in 0..5 {
                    let x = x_range.0 + (x_range.1 - x_range.0) * i as f64 / 4.0;
                    let y = 0.05 + 0.9 * j as f64 / 4.0;
                    let expected = -beta * fd_laplacian(u.as_ref(), x, y) + a * u(x, y);
                    let actual = f(x, y);
                    max_f = max_f.max(actual.abs());
                    max_diff = max_diff.max((expected - actual).abs());
                }
            }
            if max_diff > 1e-4 * max_f.max(1e-30) {
                return Err(invalid(format!(
                    "source term inconsistent with exact solution: defect {max_diff:.3e} vs scale {max_f:.3e}"
                )));
            }
        }
        Ok(())
    }
}

/// Second-order central difference gradient.
pub fn fd_gradient(f: &dyn Fn(f64, f64) -> f64, x: f64, y: f64) -> [f64; 2] {
    // Fourth-order central stencil; balances truncation and roundoff
    // around 1e-12 for smooth order-one data.
    let h = 1e-4;
    let d = |fp2: f64, fp1: f64, fm1: f64, fm2: f64| (-fp2 + 8.0 * fp1 - 8.0 * fm1 + fm2) / (12.0 * h);
    [
        d(f(x + 2.0 * h, y), f(x + h, y), f(x - h, y), f(x - 2.0 * h, y)),
        d(f(x, y + 2.0 * h), f(x, y + h), f(x, y - h), f(x, y - 2.0 * h)),
    ]
}

fn fd_laplacian(f: &dyn Fn(f64, f64) -> f64, x: f64, y: f64) -> f64 {
    let h = 1e-4;
    (f(x + h, y) + f(x - h, y) + f(x, y + h) + f(x, y - h) - 4.0 * f(x, y)) / (h * h)
}

/// Manufactured interface problem with exact solution
/// `u = sin^2(pi x) sin^2(pi y)` on the unit square split at `x = 1/2`.
/// The normal derivative vanishes on the interface, so the exact
/// multiplier is identically zero for any coefficient pair.
pub fn manufactured_problem(beta1: f64, beta2: f64) -> ProblemSpec {
    manufactured_problem_with_reaction(beta1, beta2, 0.0, 0.0)
}

/// Same exact solution with non-zero reaction coefficients folded into
/// the sources.
pub fn manufactured_problem_with_reaction(beta1: f64, beta2: f64, a1: f64, a2: f64) -> ProblemSpec {
    let u = |x: f64, y: f64| (PI * x).sin().powi(2) * (PI * y).sin().powi(2);
    let lap = |x: f64, y: f64| {
        2.0 * PI * PI
            * ((2.0 * PI * x).cos() * (PI * y).sin().powi(2)
                + (PI * x).sin().powi(2) * (2.0 * PI * y).cos())
    };
    let source = move |beta: f64, a: f64| {
        Arc::new(move |x: f64, y: f64| -beta * lap(x, y) + a * u(x, y)) as Field2
    };
    ProblemSpec {
        beta1,
        beta2,
        a1,
        a2,
        f1: source(beta1, a1),
        f2: source(beta2, a2),
        g: Arc::new(|_, _| 0.0),
        exact_u1: Some(Arc::new(u)),
        exact_u2: Some(Arc::new(u)),
        exact_lambda: Some(Arc::new(|_| 0.0)),
    }
}

/// Squared L2 error of a P1 coefficient vector against a function,
/// degree-4 quadrature.
pub fn mesh_l2_error_sq(space: &FeSpace, coeffs: &[f64], exact: &dyn Fn(f64, f64) -> f64) -> f64 {
    let rule = crate::fem::quadrature::gauss_triangle(4).expect("degree-4 rule");
    let mesh = space.mesh();
    let mut total = 0.0;
    for t in 0..mesh.triangles.len() {
        let [p, q, r] = mesh.triangle_coords(t);
        let verts = mesh.triangles[t];
        let jac = (q[0] - p[0]) * (r[1] - p[1]) - (r[0] - p[0]) * (q[1] - p[1]);
        for (&[u, v], &w) in rule.nodes.iter().zip(&rule.weights) {
            let x = p[0] + u * (q[0] - p[0]) + v * (r[0] - p[0]);
            let y = p[1] + u * (q[1] - p[1]) + v * (r[1] - p[1]);
            let uh = coeffs[verts[0]] * (1.0 - u - v) + coeffs[verts[1]] * u + coeffs[verts[2]] * v;
            let diff = uh - exact(x, y);
            total += w * jac * diff * diff;
        }
    }
    total
}

/// Squared full H1 error (seminorm plus L2) of a P1 coefficient vector,
/// with the exact gradient obtained by finite differences.
pub fn mesh_h1_error_sq(space: &FeSpace, coeffs: &[f64], exact: &dyn Fn(f64, f64) -> f64) -> f64 {
    let rule = crate::fem::quadrature::gauss_triangle(4).expect("degree-4 rule");
    let mesh = space.mesh();
    let mut total = 0.0;
    for t in 0..mesh.triangles.len() {
        let tri = mesh.triangle_coords(t);
        let (grads, _) = p1_gradients(&tri);
        let verts = mesh.triangles[t];
        let gh = [
            coeffs[verts[0]] * grads[0][0] + coeffs[verts[1]] * grads[1][0] + coeffs[verts[2]] * grads[2][0],
            coeffs[verts[0]] * grads[0][1] + coeffs[verts[1]] * grads[1][1] + coeffs[verts[2]] * grads[2][1],
        ];
        let [p, q, r] = tri;
        let jac = (q[0] - p[0]) * (r[1] - p[1]) - (r[0] - p[0]) * (q[1] - p[1]);
        for (&[u, v], &w) in rule.nodes.iter().zip(&rule.weights) {
            let x = p[0] + u * (q[0] - p[0]) + v * (r[0] - p[0]);
            let y = p[1] + u * (q[1] - p[1]) + v * (r[1] - p[1]);
            let uh = coeffs[verts[0]] * (1.0 - u - v) + coeffs[verts[1]] * u + coeffs[verts[2]] * v;
            let ge = fd_gradient(exact, x, y);
            let dv = uh - exact(x, y);
            let dx = gh[0] - ge[0];
            let dy = gh[1] - ge[1];
            total += w * jac * (dv * dv + dx * dx + dy * dy);
        }
    }
    total
}

/// `||u - u_h||_(L2)` over both subdomains.
pub fn error_l2_domain(
    solution: &Solution,
    problem: &ProblemSpec,
    space1: &FeSpace,
    space2: &FeSpace,
) -> Result<f64> {
    let (Some(u1), Some(u2)) = (&problem.exact_u1, &problem.exact_u2) else {
        return Err(invalid("problem has no exact solution attached"));
    };
    let sq = mesh_l2_error_sq(space1, &solution.u1, u1.as_ref())
        + mesh_l2_error_sq(space2, &solution.u2, u2.as_ref());
    Ok(sq.sqrt())
}

/// Broken H1 error: root of the summed subdomain-wise H1 errors.
pub fn error_h1_broken(
    solution: &Solution,
    problem: &ProblemSpec,
    space1: &FeSpace,
    space2: &FeSpace,
) -> Result<f64> {
    let (Some(u1), Some(u2)) = (&problem.exact_u1, &problem.exact_u2) else {
        return Err(invalid("problem has no exact solution attached"));
    };
    let sq = mesh_h1_error_sq(space1, &solution.u1, u1.as_ref())
        + mesh_h1_error_sq(space2, &solution.u2, u2.as_ref());
    Ok(sq.sqrt())
}

/// `||lambda - lambda_h||_(L2)` on the interface, two-point Gauss per
/// multiplier segment.
pub fn error_l2_interface(
    solution: &Solution,
    problem: &ProblemSpec,
    mult: &MultiplierSpace,
) -> Result<f64> {
    let Some(lambda) = &problem.exact_lambda else {
        return Err(invalid("problem has no exact multiplier attached"));
    };
    let rule = gauss_segment(2).expect("2-point rule");
    let mut total = 0.0;
    for seg in 0..mult.breakpoints.len() - 1 {
        let (a, b) = (mult.breakpoints[seg], mult.breakpoints[seg + 1]);
        total += rule.integrate(a, b, |s| {
            let d = lambda(s) - mult.eval(&solution.lambda, s);
            d * d
        });
    }
    Ok(total.sqrt())
}

/// Empirical orders of convergence:
/// `rate_k = ln(e_k / e_(k+1)) / ln(h_k / h_(k+1))`.
pub fn eoc(errors: &[f64], hs: &[f64]) -> Result<Vec<f64>> {
    if errors.len() != hs.len() || errors.len() < 2 {
        return Err(invalid("need equally many errors and mesh sizes, at least two"));
    }
    if errors.iter().any(|e| !(*e > 0.0)) || hs.iter().any(|h| !(*h > 0.0)) {
        return Err(invalid("errors and mesh sizes must be positive"));
    }
    if hs.windows(2).any(|w| w[1] >= w[0]) {
        return Err(invalid("mesh sizes must be strictly decreasing"));
    }
    Ok(errors
        .windows(2)
        .zip(hs.windows(2))
        .map(|(e, h)| (e[0] / e[1]).ln() / (h[0] / h[1]).ln())
        .collect())
}

/// Configuration of a refinement study on the manufactured problem.
#[derive(Clone, Debug)]
pub struct StudyConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub a1: f64,
    pub a2: f64,
    pub s: f64,
    pub gamma0: f64,
    pub local_gamma: bool,
    /// Mesh-size denominators per level: `h_i = 1 / n_i`. Each `n` must be
    /// even so the half-width subdomains tile exactly.
    pub levels: Vec<(u32, u32)>,
    pub diagonal: Diagonal,
    pub endpoint_dofs: bool,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            beta1: 1.0,
            beta2: 1.0,
            a1: 0.0,
            a2: 0.0,
            s: 1.0,
            gamma0: 1.0,
            local_gamma: false,
            levels: base_ladder(5),
            diagonal: Diagonal::Ne,
            endpoint_dofs: false,
        }
    }
}

/// The standard refinement ladder `(1/4, 1/6) * 2^-k`.
pub fn base_ladder(levels: usize) -> Vec<(u32, u32)> {
    (0..levels as u32).map(|k| (4 << k, 6 << k)).collect()
}

#[derive(Clone, Copy, Debug)]
pub struct ReportRow {
    pub h1: f64,
    pub h2: f64,
    pub h: f64,
    pub e_u_l2: f64,
    pub e_u_h1: f64,
    pub e_lambda_l2: f64,
    pub p: Option<f64>,
    pub q: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct StudyMeta {
    pub beta1: f64,
    pub beta2: f64,
    pub s: f64,
    pub gamma0: f64,
    pub diagonal: Diagonal,
    pub endpoint_dofs: bool,
}

/// Per-level errors and rates of one study, mirroring the usual
/// convergence-table layout.
#[derive(Clone, Debug)]
pub struct ConvergenceReport {
    pub rows: Vec<ReportRow>,
    pub meta: StudyMeta,
}

impl ConvergenceReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("h1,h2,h,e_u_l2,e_u_h1,e_lambda_l2,p,q\n");
        for r in &self.rows {
            let fmt_rate = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{:e},{:e},{:e},{},{}\n",
                r.h1,
                r.h2,
                r.h,
                r.e_u_l2,
                r.e_u_h1,
                r.e_lambda_l2,
                fmt_rate(r.p),
                fmt_rate(r.q)
            ));
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let m = &self.meta;
        let mut out = format!(
            "Study: beta = ({}, {}), S = {}, gamma0 = {}, diagonal = {:?}, endpoint dofs = {}\n\n",
            m.beta1, m.beta2, m.s, m.gamma0, m.diagonal, m.endpoint_dofs
        );
        out.push_str("| h1 | h2 | h | e_u_l2 | e_u_h1 | e_lambda_l2 | p | q |\n");
        out.push_str("|---|---|---|---|---|---|---|---|\n");
        for r in &self.rows {
            let fmt_rate = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_default();
            out.push_str(&format!(
                "| {} | {} | {} | {:.5e} | {:.5e} | {:.5e} | {} | {} |\n",
                r.h1,
                r.h2,
                r.h,
                r.e_u_l2,
                r.e_u_h1,
                r.e_lambda_l2,
                fmt_rate(r.p),
                fmt_rate(r.q)
            ));
        }
        out
    }
}

/// Build the two subdomain spaces, multiplier space, and merged partition
/// for one refinement level. `n1`, `n2` are the mesh-size denominators.
pub fn build_level(
    n1: u32,
    n2: u32,
    diagonal: Diagonal,
    endpoint_dofs: bool,
) -> Result<(FeSpace, FeSpace, MultiplierSpace, crate::coupling::MergedPartition)> {
    for n in [n1, n2] {
        if n < 2 || n % 2 != 0 {
            return Err(invalid(format!(
                "mesh denominator {n} must be even so h = 1/{n} tiles the half-width subdomains"
            )));
        }
    }
    let mut m1 = build_rect_tri_mesh(
        Rect::new(0.0, 0.0, 0.5, 1.0),
        (n1 / 2) as usize,
        n1 as usize,
        diagonal,
    )?;
    m1.mark_interface(RectSide::Right)?;
    let mut m2 = build_rect_tri_mesh(
        Rect::new(0.5, 0.0, 1.0, 1.0),
        (n2 / 2) as usize,
        n2 as usize,
        diagonal,
    )?;
    m2.mark_interface(RectSide::Left)?;
    let space1 = FeSpace::new(m1)?;
    let space2 = FeSpace::new(m2)?;
    let t1 = interface_trace(space1.mesh(), RectSide::Right)?;
    let t2 = interface_trace(space2.mesh(), RectSide::Left)?;
    let merged = merge_partitions(&t1, &t2)?;
    let mult = MultiplierSpace::new(&merged.trace2, endpoint_dofs)?;
    Ok((space1, space2, mult, merged))
}

/// Run the manufactured-solution refinement study.
pub fn run_convergence_study(config: &StudyConfig) -> Result<ConvergenceReport> {
    if config.levels.is_empty() {
        return Err(invalid("study needs at least one level"));
    }
    let problem = manufactured_problem_with_reaction(config.beta1, config.beta2, config.a1, config.a2);
    let params = MethodParams {
        s: config.s,
        gamma0: config.gamma0,
        local_gamma: config.local_gamma,
    };

    let mut rows = Vec::with_capacity(config.levels.len());
    for (level, &(n1, n2)) in config.levels.iter().enumerate() {
        let with_level = |e: Error| -> Error {
            Error::SolverFailure(format!("level {level} (1/{n1}, 1/{n2}): {e}"))
        };
        let (space1, space2, mult, merged) =
            build_level(n1, n2, config.diagonal, config.endpoint_dofs)?;
        let blocks = assemble_coupling_blocks(
            &merged,
            &space1,
            &space2,
            &mult,
            config.beta1,
            config.beta2,
            |_| 1.0,
        );
        let system = build_saddle_system(&problem, &params, &space1, &space2, &mult, &merged, &blocks)?;
        let solution = solve(&system).map_err(with_level)?;
        let h1 = 1.0 / n1 as f64;
        let h2 = 1.0 / n2 as f64;
        rows.push(ReportRow {
            h1,
            h2,
            h: h1.max(h2),
            e_u_l2: error_l2_domain(&solution, &problem, &space1, &space2)?,
            e_u_h1: error_h1_broken(&solution, &problem, &space1, &space2)?,
            e_lambda_l2: error_l2_interface(&solution, &problem, &mult)?,
            p: None,
            q: None,
        });
    }

    let hs: Vec<f64> = rows.iter().map(|r| r.h).collect();
    let e_u: Vec<f64> = rows.iter().map(|r| r.e_u_l2).collect();
    let e_l: Vec<f64> = rows.iter().map(|r| r.e_lambda_l2).collect();
    if rows.len() >= 2 {
        let p = eoc(&e_u, &hs)?;
        let q = eoc(&e_l, &hs)?;
        for (k, row) in rows.iter_mut().enumerate().skip(1) {
            row.p = Some(p[k - 1]);
            row.q = Some(q[k - 1]);
        }
    }

    Ok(ConvergenceReport {
        rows,
        meta: StudyMeta {
            beta1: config.beta1,
            beta2: config.beta2,
            s: config.s,
            gamma0: config.gamma0,
            diagonal: config.diagonal,
            endpoint_dofs: config.endpoint_dofs,
        },
    })
}
