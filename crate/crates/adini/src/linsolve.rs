//! Linear solvers: Jacobi-preconditioned conjugate gradients for the
//! assembled sparse systems, plus small dense routines (LU solve, rank)
//! for reference solves and kernel-dimension checks.

use crate::assembly::SparseSym;
use crate::{Error, Result};

/// Iteration statistics reported by [`cg_solve`].
#[derive(Clone, Copy, Debug, Default)]
pub struct CgStats {
    /// Matrix-vector products spent in the inner iteration.
    pub iterations: usize,
    /// Times the recurrence was discarded and restarted from the true
    /// residual `b - A x`.
    pub restarts: usize,
    /// Final true relative residual `‖b - A x‖ / ‖b‖`.
    pub residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Default iteration cap for [`cg_solve`]: generous for the moderately
/// conditioned systems produced by coarse meshes, overridable for fine ones.
pub fn default_maxit(n: usize) -> usize {
    (50.0 * (n.max(1) as f64).sqrt()).ceil() as usize + 100
}

/// Conjugate gradients with Jacobi preconditioning and true-residual
/// verification.
///
/// The inner recurrence runs until it *claims* the tolerance; the claim is
/// then checked against the recomputed residual `b - A x`. If rounding in
/// the recurrence overstated progress, the iteration restarts from the true
/// residual, which acts as iterative refinement and pushes through the
/// stagnation plateau of ill-conditioned fine-mesh systems.
///
/// Returns the solution and statistics, or [`Error::CgStalled`] carrying the
/// best iterate if `maxit` products are exhausted first. Requires a
/// symmetric positive definite matrix; a nonpositive diagonal or curvature
/// panics, as that indicates a bug upstream rather than bad user input.
pub fn cg_solve(a: &SparseSym, b: &[f64], tol: f64, maxit: usize) -> Result<(Vec<f64>, CgStats)> {
    let n = a.n();
    assert_eq!(b.len(), n, "right-hand side length must match the matrix");
    assert!(tol > 0.0, "tolerance must be positive");
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return Ok((vec![0.0; n], CgStats::default()));
    }
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| {
            assert!(
                d > 0.0,
                "conjugate gradients requires a positive diagonal (got {d})"
            );
            1.0 / d
        })
        .collect();

    let mut x = vec![0.0; n];
    let mut stats = CgStats::default();
    let mut best = (f64::INFINITY, Vec::new());
    loop {
        // Recomputed true residual; the only convergence authority.
        let ax = a.apply(&x);
        let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, axi)| bi - axi).collect();
        let rel = norm(&r) / bnorm;
        if rel < best.0 {
            best = (rel, x.clone());
        }
        if rel <= tol {
            stats.residual = rel;
            return Ok((x, stats));
        }
        if stats.iterations >= maxit {
            return Err(Error::CgStalled {
                maxit,
                residual: best.0,
                best: best.1,
            });
        }

        let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        while stats.iterations < maxit {
            let ap = a.apply(&p);
            let pap = dot(&p, &ap);
            assert!(
                pap > 0.0,
                "conjugate gradients met nonpositive curvature ({pap}); matrix not SPD"
            );
            let alpha = rz / pap;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            stats.iterations += 1;
            // Claim convergence with margin, then let the outer loop verify.
            if norm(&r) / bnorm <= 0.5 * tol {
                break;
            }
            z.iter_mut()
                .zip(&r)
                .zip(&inv_diag)
                .for_each(|((zi, ri), di)| *zi = ri * di);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        stats.restarts += 1;
    }
}

/// Solve the dense row-major system `a x = b` by LU factorization with
/// partial (row) pivoting. Row pivoting is essential: matrices such as a
/// permuted identity have zero diagonal entries, which defeat any scheme
/// that only ever pivots on the diagonal.
pub fn dense_solve(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    let n = b.len();
    assert_eq!(a.len(), n * n, "matrix data must be n*n");
    let mut m = a.to_vec();
    let mut x = b.to_vec();
    let scale = m.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    for col in 0..n {
        let (piv_row, piv_val) = (col..n)
            .map(|r| (r, m[r * n + col].abs()))
            .max_by(|u, v| u.1.total_cmp(&v.1))
            .expect("column range is nonempty");
        if piv_val <= f64::EPSILON * scale.max(1.0) * n as f64 {
            return Err(Error::SingularMatrix {
                step: col,
                pivot: piv_val,
            });
        }
        if piv_row != col {
            for j in 0..n {
                m.swap(col * n + j, piv_row * n + j);
            }
            x.swap(col, piv_row);
        }
        let pivot = m[col * n + col];
        for r in col + 1..n {
            let factor = m[r * n + col] / pivot;
            if factor == 0.0 {
                continue;
            }
            for j in col..n {
                m[r * n + j] -= factor * m[col * n + j];
            }
            x[r] -= factor * x[col];
        }
    }
    for col in (0..n).rev() {
        let mut acc = x[col];
        for j in col + 1..n {
            acc -= m[col * n + j] * x[j];
        }
        x[col] = acc / m[col * n + col];
    }
    Ok(x)
}

/// Numerical rank of a dense row-major `nrows x ncols` matrix by Gaussian
/// elimination with full pivoting: pivots below `rel_tol` times the largest
/// entry of the input count as zero.
pub fn dense_rank(a: &[f64], nrows: usize, ncols: usize, rel_tol: f64) -> usize {
    assert_eq!(a.len(), nrows * ncols, "matrix data must be nrows*ncols");
    let mut m = a.to_vec();
    let scale = m.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    if scale == 0.0 {
        return 0;
    }
    let steps = nrows.min(ncols);
    let mut rank = 0;
    while rank < steps {
        let mut piv = (rank, rank, 0.0f64);
        for r in rank..nrows {
            for c in rank..ncols {
                let v = m[r * ncols + c].abs();
                if v > piv.2 {
                    piv = (r, c, v);
                }
            }
        }
        if piv.2 <= rel_tol * scale {
            break;
        }
        let (pr, pc, _) = piv;
        if pr != rank {
            for j in 0..ncols {
                m.swap(rank * ncols + j, pr * ncols + j);
            }
        }
        if pc != rank {
            for i in 0..nrows {
                m.swap(i * ncols + rank, i * ncols + pc);
            }
        }
        let pivot = m[rank * ncols + rank];
        for r in rank + 1..nrows {
            let factor = m[r * ncols + rank] / pivot;
            if factor == 0.0 {
                continue;
            }
            for j in rank..ncols {
                m[r * ncols + j] -= factor * m[rank * ncols + j];
            }
        }
        rank += 1;
    }
    rank
}
