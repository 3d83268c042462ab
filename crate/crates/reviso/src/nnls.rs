//! Nonnegative least squares, Lawson-Hanson active-set method.
//!
//! Sized for desk-scale systems (tens of rows and columns); the restricted
//! least-squares subproblems are solved by QR on the selected columns.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Solve min ||A x - b|| subject to x >= 0.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>, max_iter: usize) -> Result<DVector<f64>> {
    let n = a.ncols();
    let mut x = DVector::zeros(n);
    let mut passive: Vec<bool> = vec![false; n];
    let tol = 1e-12 * a.norm().max(1.0) * b.norm().max(1.0);

    for _ in 0..max_iter {
        let residual = b - a * &x;
        let grad = a.transpose() * &residual;
        let candidate = (0..n)
            .filter(|&j| !passive[j])
            .max_by(|&p, &q| grad[p].total_cmp(&grad[q]));
        let Some(j) = candidate else { break };
        if grad[j] <= tol {
            break;
        }
        passive[j] = true;

        loop {
            let cols: Vec<usize> = (0..n).filter(|&k| passive[k]).collect();
            let z = restricted_ls(a, b, &cols)?;
            if z.iter().all(|&v| v > 0.0) {
                x.fill(0.0);
                for (&k, &v) in cols.iter().zip(z.iter()) {
                    x[k] = v;
                }
                break;
            }
            // Backtrack along the segment from x to z until a variable hits zero.
            let mut alpha = f64::INFINITY;
            for (&k, &zv) in cols.iter().zip(z.iter()) {
                if zv <= 0.0 {
                    let step = x[k] / (x[k] - zv);
                    alpha = alpha.min(step);
                }
            }
            let mut xnew = x.clone();
            for (&k, &zv) in cols.iter().zip(z.iter()) {
                xnew[k] += alpha * (zv - x[k]);
            }
            for &k in &cols {
                if xnew[k] <= 1e-14 {
                    xnew[k] = 0.0;
                    passive[k] = false;
                }
            }
            x = xnew;
        }
    }
    Ok(x)
}

/// Minimum-norm nonnegative tie-break: augments the system with a tiny ridge
/// so an over-determined weight vector picks the smallest-norm solution.
pub fn nnls_min_norm(a: &DMatrix<f64>, b: &DVector<f64>, ridge: f64) -> Result<DVector<f64>> {
    let (m, n) = (a.nrows(), a.ncols());
    let mut aug = DMatrix::zeros(m + n, n);
    aug.view_mut((0, 0), (m, n)).copy_from(a);
    for j in 0..n {
        aug[(m + j, j)] = ridge.sqrt();
    }
    let mut baug = DVector::zeros(m + n);
    baug.rows_mut(0, m).copy_from(b);
    nnls(&aug, &baug, 50 * n.max(4))
}

fn restricted_ls(a: &DMatrix<f64>, b: &DVector<f64>, cols: &[usize]) -> Result<DVector<f64>> {
    let m = a.nrows();
    let mut sub = DMatrix::zeros(m, cols.len());
    for (jj, &j) in cols.iter().enumerate() {
        sub.set_column(jj, &a.column(j));
    }
    let qr = sub.qr();
    let q = qr.q();
    let r = qr.r();
    let rhs = q.transpose() * b;
    r.solve_upper_triangular(&rhs)
        .ok_or_else(|| Error::DegenerateInput("rank-deficient NNLS subproblem".into()))
}
