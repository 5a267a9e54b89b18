//! Minimal sparse matrix support: triplet assembly, CSC storage, and a
//! direct solver (LU with partial pivoting, diagonal equilibration, and
//! iterative refinement).

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};

use crate::error::{Error, Result};

/// Unsorted (row, col, value) entries; duplicates are summed when the
/// matrix is compressed.
#[derive(Clone, Debug)]
pub struct Triplets {
    pub nrows: usize,
    pub ncols: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

impl Triplets {
    pub fn new(nrows: usize, ncols: usize) -> Triplets {
        Triplets {
            nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.nrows && col < self.ncols);
        self.entries.push((row, col, value));
    }

    /// y += alpha * A x, accumulated in entry order.
    pub fn accumulate_matvec(&self, alpha: f64, x: &[f64], y: &mut [f64]) {
        for &(i, j, v) in &self.entries {
            y[i] += alpha * v * x[j];
        }
    }

    /// x^T A y.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        self.entries
            .iter()
            .map(|&(i, j, v)| x[i] * v * y[j])
            .sum()
    }

    pub fn to_csc(&self) -> CscMatrix {
        CscMatrix::from_triplets(self)
    }
}

/// Compressed sparse column matrix.
#[derive(Clone, Debug)]
pub struct CscMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub col_ptr: Vec<usize>,
    pub row_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CscMatrix {
    /// Compress triplets, summing duplicates. The sort is stable, so equal
    /// (row, col) contributions are added in insertion order; assembling the
    /// transposed half of a symmetric matrix in the same order therefore
    /// yields bitwise-identical sums.
    pub fn from_triplets(t: &Triplets) -> CscMatrix {
        let mut order: Vec<usize> = (0..t.entries.len()).collect();
        order.sort_by_key(|&k| (t.entries[k].1, t.entries[k].0));

        let mut counts = vec![0usize; t.ncols];
        let mut row_idx: Vec<usize> = Vec::new();
        let mut values: Vec<f64> = Vec::new();
        let mut last: Option<(usize, usize)> = None;
        for &k in &order {
            let (i, j, v) = t.entries[k];
            if last == Some((j, i)) {
                *values.last_mut().unwrap() += v;
            } else {
                row_idx.push(i);
                values.push(v);
                counts[j] += 1;
                last = Some((j, i));
            }
        }
        let mut col_ptr = vec![0usize; t.ncols + 1];
        for j in 0..t.ncols {
            col_ptr[j + 1] = col_ptr[j] + counts[j];
        }
        CscMatrix {
            nrows: t.nrows,
            ncols: t.ncols,
            col_ptr,
            row_idx,
            values,
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        let start = self.col_ptr[col];
        let end = self.col_ptr[col + 1];
        match self.row_idx[start..end].binary_search(&row) {
            Ok(k) => self.values[start + k],
            Err(_) => 0.0,
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        for j in 0..self.ncols {
            let xj = x[j];
            for k in self.col_ptr[j]..self.col_ptr[j + 1] {
                y[self.row_idx[k]] += self.values[k] * xj;
            }
        }
        y
    }

    /// Exact max-norm of A - A^T.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for j in 0..self.ncols {
            for k in self.col_ptr[j]..self.col_ptr[j + 1] {
                let i = self.row_idx[k];
                let diff = (self.values[k] - self.get(j, i)).abs();
                worst = worst.max(diff);
            }
        }
        worst
    }

    /// Coordinate-format text dump: one `i j value` line per entry.
    pub fn dump_coo(&self) -> String {
        let mut out = String::new();
        for j in 0..self.ncols {
            for k in self.col_ptr[j]..self.col_ptr[j + 1] {
                out.push_str(&format!("{} {} {:.16e}\n", self.row_idx[k], j, self.values[k]));
            }
        }
        out
    }
}

/// Convergence data from [`solve_linear`].
#[derive(Clone, Copy, Debug)]
pub struct SolveStats {
    /// Final ||Ax - b||_2 / ||b||_2 (1 if b = 0).
    pub rel_residual: f64,
    pub refinement_steps: usize,
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Direct sparse solve of `A x = b` via LU with partial pivoting.
///
/// The matrix is symmetrically equilibrated before factorization so that
/// extreme coefficient contrasts do not poison the pivoting, and the
/// solution is polished by iterative refinement against the original
/// matrix.
pub fn solve_linear(a: &CscMatrix, b: &[f64]) -> Result<(Vec<f64>, SolveStats)> {
    let n = a.nrows;
    if a.ncols != n || b.len() != n {
        return Err(Error::InvalidArgument("dimension mismatch in solve".into()));
    }

    // Symmetric equilibration: s_i = 1 / sqrt(max |a_ij| over row and column i).
    let mut scale = vec![0.0f64; n];
    for j in 0..a.ncols {
        for k in a.col_ptr[j]..a.col_ptr[j + 1] {
            let v = a.values[k].abs();
            let i = a.row_idx[k];
            scale[i] = scale[i].max(v);
            scale[j] = scale[j].max(v);
        }
    }
    for s in &mut scale {
        if *s <= 0.0 {
            return Err(Error::SolverFailure("matrix has an empty row/column".into()));
        }
        *s = 1.0 / s.sqrt();
    }

    let mut triplets = Vec::with_capacity(a.nnz());
    for j in 0..a.ncols {
        for k in a.col_ptr[j]..a.col_ptr[j + 1] {
            let i = a.row_idx[k];
            triplets.push(Triplet::new(i, j, scale[i] * a.values[k] * scale[j]));
        }
    }
    let scaled = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &triplets)
        .map_err(|e| Error::SolverFailure(format!("matrix creation: {e:?}")))?;
    let lu = scaled
        .sp_lu()
        .map_err(|e| Error::SolverFailure(format!("LU factorization: {e:?}")))?;

    // Solve D A D y = D b, x = D y.
    let solve_scaled = |rhs: &[f64]| -> Vec<f64> {
        let m = faer::Mat::<f64>::from_fn(n, 1, |i, _| rhs[i] * scale[i]);
        let y = lu.solve(&m);
        (0..n).map(|i| y[(i, 0)] * scale[i]).collect()
    };

    let bnorm = norm2(b);
    let mut x = solve_scaled(b);
    if bnorm == 0.0 {
        return Ok((
            vec![0.0; n],
            SolveStats {
                rel_residual: 0.0,
                refinement_steps: 0,
            },
        ));
    }

    let residual = |x: &[f64]| -> Vec<f64> {
        let ax = a.matvec(x);
        (0..n).map(|i| b[i] - ax[i]).collect()
    };

    let mut r = residual(&x);
    let mut rel = norm2(&r) / bnorm;
    let mut steps = 0;
    while rel > 1e-13 && steps < 3 {
        let dx = solve_scaled(&r);
        let candidate: Vec<f64> = x.iter().zip(&dx).map(|(xi, di)| xi + di).collect();
        let r_new = residual(&candidate);
        let rel_new = norm2(&r_new) / bnorm;
        if !rel_new.is_finite() || rel_new >= rel {
            break;
        }
        x = candidate;
        r = r_new;
        rel = rel_new;
        steps += 1;
    }

    if !rel.is_finite() || rel > 1e-6 {
        return Err(Error::SolverFailure(format!(
            "relative residual {rel:.3e} after {steps} refinement steps"
        )));
    }
    Ok((
        x,
        SolveStats {
            rel_residual: rel,
            refinement_steps: steps,
        },
    ))
}
