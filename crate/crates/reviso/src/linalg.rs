//! Dense linear-algebra helpers shared across modules.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Angle between two nonzero vectors, in [0, pi].
pub fn angle(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let na = a.norm();
    let nb = b.norm();
    let c = (a.dot(b) / (na * nb)).clamp(-1.0, 1.0);
    c.acos()
}

/// Geodesic distance between unit vectors (same as [`angle`], named for intent).
pub fn geodesic(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    angle(a, b)
}

/// Symmetric positive-definite square root via eigendecomposition.
pub fn spd_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    spd_power(m, 0.5)
}

/// Symmetric positive-definite inverse square root.
pub fn spd_inv_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    spd_power(m, -0.5)
}

fn spd_power(m: &DMatrix<f64>, p: f64) -> Result<DMatrix<f64>> {
    let sym = nalgebra::SymmetricEigen::new(m.clone());
    let min = sym.eigenvalues.min();
    if min <= 0.0 {
        return Err(Error::DegenerateInput(format!(
            "matrix not positive definite (min eigenvalue {min:.3e})"
        )));
    }
    let d = DMatrix::from_diagonal(&sym.eigenvalues.map(|l| l.powf(p)));
    Ok(&sym.eigenvectors * d * sym.eigenvectors.transpose())
}

/// Frobenius distance of a square matrix from the identity.
pub fn identity_deviation(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    (m - DMatrix::<f64>::identity(n, n)).norm()
}

/// Rotation in the plane spanned by unit vectors `from` and `to`, mapping
/// `from` to `to` and fixing the orthogonal complement of their span.
pub fn rotation_between(from: &DVector<f64>, to: &DVector<f64>) -> Result<DMatrix<f64>> {
    let n = from.len();
    let a = from / from.norm();
    let c = a.dot(to).clamp(-1.0, 1.0);
    let rej = to - &a * a.dot(to);
    let s = rej.norm();
    if s < 1e-14 {
        if c > 0.0 {
            return Ok(DMatrix::identity(n, n));
        }
        return Err(Error::InvalidInput(
            "rotation between antipodal vectors is not unique".into(),
        ));
    }
    let p = rej / s;
    let alpha = s.atan2(c);
    let (sin, cos) = alpha.sin_cos();
    let mut r = DMatrix::identity(n, n);
    r += (&a * a.transpose() + &p * p.transpose()) * (cos - 1.0);
    r += (&p * a.transpose() - &a * p.transpose()) * sin;
    Ok(r)
}

/// Rotation chart for SO(n), n in 2..=5: a product of Givens rotations, one
/// parameter per coordinate plane, applied in lexicographic plane order.
pub fn rotation_from_chart(n: usize, params: &[f64]) -> Result<DMatrix<f64>> {
    let expect = n * (n - 1) / 2;
    if params.len() != expect {
        return Err(Error::InvalidInput(format!(
            "rotation chart for n={n} needs {expect} parameters, got {}",
            params.len()
        )));
    }
    let mut r = DMatrix::identity(n, n);
    let mut idx = 0;
    for i in 0..n {
        for j in (i + 1)..n {
            let (s, c) = params[idx].sin_cos();
            let mut g = DMatrix::identity(n, n);
            g[(i, i)] = c;
            g[(j, j)] = c;
            g[(i, j)] = -s;
            g[(j, i)] = s;
            r = g * r;
            idx += 1;
        }
    }
    Ok(r)
}

/// Number of chart parameters for SO(n).
pub fn rotation_chart_dim(n: usize) -> usize {
    n * (n - 1) / 2
}

/// Unit-determinant chart for SL(n): unit lower-triangular times a trace-free
/// exponential diagonal times unit upper-triangular. Parameter layout: the
/// n(n-1)/2 strict lower entries (row-major), then n-1 diagonal logs (the last
/// diagonal log is minus their sum), then the n(n-1)/2 strict upper entries.
pub fn unimodular_from_chart(n: usize, params: &[f64]) -> Result<DMatrix<f64>> {
    let expect = unimodular_chart_dim(n);
    if params.len() != expect {
        return Err(Error::InvalidInput(format!(
            "unimodular chart for n={n} needs {expect} parameters, got {}",
            params.len()
        )));
    }
    let off = n * (n - 1) / 2;
    let mut lower = DMatrix::identity(n, n);
    let mut upper = DMatrix::identity(n, n);
    let mut idx = 0;
    for i in 0..n {
        for j in 0..i {
            lower[(i, j)] = params[idx];
            upper[(j, i)] = params[off + n - 1 + idx];
            idx += 1;
        }
    }
    let mut diag = DMatrix::zeros(n, n);
    let mut sum = 0.0;
    for i in 0..(n - 1) {
        diag[(i, i)] = params[off + i].exp();
        sum += params[off + i];
    }
    diag[(n - 1, n - 1)] = (-sum).exp();
    Ok(lower * diag * upper)
}

/// Number of chart parameters for SL(n).
pub fn unimodular_chart_dim(n: usize) -> usize {
    n * n - 1
}

/// Gram-Schmidt orthonormal basis from the first `m` vectors; the inputs must
/// be linearly independent within `tol`.
pub fn gram_schmidt(vs: &[DVector<f64>], m: usize, tol: f64) -> Result<Vec<DVector<f64>>> {
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(m);
    for v in vs.iter().take(m) {
        let mut w = v.clone();
        for b in &basis {
            let d = b.dot(&w);
            w -= b * d;
        }
        let norm = w.norm();
        if norm <= tol * v.norm().max(1.0) {
            return Err(Error::DegenerateInput(
                "linearly dependent vectors in Gram-Schmidt".into(),
            ));
        }
        basis.push(w / norm);
    }
    Ok(basis)
}

/// Orthonormal basis of the span, scanning all candidates and skipping
/// near-dependent ones until m vectors are found.
pub fn gram_schmidt_span(vs: &[DVector<f64>], m: usize, tol: f64) -> Result<Vec<DVector<f64>>> {
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(m);
    for v in vs {
        if basis.len() == m {
            break;
        }
        let mut w = v.clone();
        for b in &basis {
            let d = b.dot(&w);
            w -= b * d;
        }
        let norm = w.norm();
        if norm > tol * v.norm().max(1.0) {
            basis.push(w / norm);
        }
    }
    if basis.len() < m {
        return Err(Error::DegenerateInput(
            "vectors do not span the requested dimension".into(),
        ));
    }
    Ok(basis)
}

/// Extend an orthonormal set to a full orthonormal basis of R^n.
pub fn complete_basis(partial: &[DVector<f64>], n: usize) -> Vec<DVector<f64>> {
    let mut basis = partial.to_vec();
    for axis in 0..n {
        if basis.len() == n {
            break;
        }
        let mut w = DVector::zeros(n);
        w[axis] = 1.0;
        for b in &basis {
            let d = b.dot(&w);
            w -= b * d;
        }
        let norm = w.norm();
        if norm > 1e-7 {
            basis.push(w / norm);
        }
    }
    // An orthonormal partial set always leaves some axis with residual at
    // least 1/sqrt(n), so failure here means the input was invalid.
    assert_eq!(basis.len(), n, "complete_basis: input not orthonormal");
    basis
}

/// Solve a square linear system, erroring on singularity.
pub fn solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    a.clone().lu().solve(b).ok_or(Error::SingularTransform {
        det: a.determinant(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::prelude::*;

    fn rand_unit(n: usize, rng: &mut StdRng) -> DVector<f64> {
        loop {
            let v = DVector::from_fn(n, |_, _| rng.random::<f64>() * 2.0 - 1.0);
            let norm = v.norm();
            if norm > 1e-3 {
                return v / norm;
            }
        }
    }

    #[test]
    fn rotation_between_maps_and_is_orthogonal() {
        let mut rng = StdRng::seed_from_u64(7);
        for n in 2..=5 {
            for _ in 0..20 {
                let a = rand_unit(n, &mut rng);
                let b = rand_unit(n, &mut rng);
                let r = rotation_between(&a, &b).unwrap();
                assert_relative_eq!((&r * &a - &b).norm(), 0.0, epsilon = 1e-12);
                assert_relative_eq!(
                    identity_deviation(&(r.transpose() * &r)),
                    0.0,
                    epsilon = 1e-12
                );
                assert_relative_eq!(r.determinant(), 1.0, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn chart_rotations_are_special_orthogonal() {
        let mut rng = StdRng::seed_from_u64(11);
        for n in 2..=5 {
            let d = rotation_chart_dim(n);
            for _ in 0..10 {
                let params: Vec<f64> =
                    (0..d).map(|_| rng.random::<f64>() * 6.0 - 3.0).collect();
                let r = rotation_from_chart(n, &params).unwrap();
                assert_relative_eq!(
                    identity_deviation(&(r.transpose() * &r)),
                    0.0,
                    epsilon = 1e-12
                );
                assert_relative_eq!(r.determinant(), 1.0, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn chart_unimodulars_have_unit_determinant() {
        let mut rng = StdRng::seed_from_u64(13);
        for n in 2..=5 {
            let d = unimodular_chart_dim(n);
            let at_zero = unimodular_from_chart(n, &vec![0.0; d]).unwrap();
            assert_relative_eq!(identity_deviation(&at_zero), 0.0, epsilon = 1e-15);
            for _ in 0..10 {
                let params: Vec<f64> =
                    (0..d).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
                let m = unimodular_from_chart(n, &params).unwrap();
                assert_relative_eq!(m.determinant(), 1.0, epsilon = 1e-10);
            }
        }
        // The chart reaches non-triangular matrices: parameters (-1, 0, 1)
        // give the shear product [[1,1],[-1,0]].
        let m = unimodular_from_chart(2, &[-1.0, 0.0, 1.0]).unwrap();
        assert_relative_eq!(m[(0, 0)], 1.0, epsilon = 1e-15);
        assert_relative_eq!(m[(1, 0)], -1.0, epsilon = 1e-15);
        assert_relative_eq!(m.determinant(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn spd_sqrt_squares_back() {
        let mut rng = StdRng::seed_from_u64(3);
        for n in 2..=5 {
            let a = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() * 2.0 - 1.0);
            let m = &a * a.transpose() + DMatrix::identity(n, n) * 0.5;
            let s = spd_sqrt(&m).unwrap();
            assert_relative_eq!((&s * &s - &m).norm(), 0.0, epsilon = 1e-10);
            let si = spd_inv_sqrt(&m).unwrap();
            assert_relative_eq!(
                identity_deviation(&(&si * &m * &si)),
                0.0,
                epsilon = 1e-10
            );
        }
    }
}
