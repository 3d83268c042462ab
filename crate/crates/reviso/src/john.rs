//! John positions: maximal inscribed ellipsoids, normalization of a body so
//! its inscribed ellipsoid is the unit ball, and extraction of ball contact
//! points with nonnegative weights reproducing the identity.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geom::{AffineMap, Polytope};
use crate::{linalg, nnls, opt, unit_ball_volume};

/// Default tolerance for contact identification and weight fitting.
pub const DEFAULT_JOHN_TOL: f64 = 1e-6;

/// Ellipsoid {x : (x - center)^T shape (x - center) <= 1} with SPD shape.
#[derive(Debug, Clone)]
pub struct Ellipsoid {
    pub center: DVector<f64>,
    pub shape: DMatrix<f64>,
}

impl Ellipsoid {
    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn volume(&self) -> f64 {
        unit_ball_volume(self.dim()) / self.shape.determinant().sqrt()
    }

    /// Map taking the unit ball onto the ellipsoid.
    pub fn principal_map(&self) -> Result<AffineMap> {
        Ok(AffineMap {
            linear: linalg::spd_inv_sqrt(&self.shape)?,
            shift: self.center.clone(),
        })
    }
}

/// Ball contact points with weights: sum c_i u_i (x) u_i = Id and
/// sum c_i u_i = 0 up to the stored residuals.
#[derive(Debug, Clone)]
pub struct JohnDecomposition {
    pub contacts: Vec<DVector<f64>>,
    pub weights: Vec<f64>,
    pub residual_iso: f64,
    pub residual_centred: f64,
}

impl JohnDecomposition {
    pub fn new(contacts: Vec<DVector<f64>>, weights: Vec<f64>) -> JohnDecomposition {
        let (residual_iso, residual_centred) = moment_residuals(&contacts, &weights);
        JohnDecomposition {
            contacts,
            weights,
            residual_iso,
            residual_centred,
        }
    }

    pub fn dim(&self) -> usize {
        self.contacts.first().map_or(0, |u| u.len())
    }

    pub fn count(&self) -> usize {
        self.contacts.len()
    }
}

fn moment_residuals(contacts: &[DVector<f64>], weights: &[f64]) -> (f64, f64) {
    let n = contacts.first().map_or(0, |u| u.len());
    let mut moment = DMatrix::zeros(n, n);
    let mut bary = DVector::zeros(n);
    for (u, &c) in contacts.iter().zip(weights) {
        moment += u * u.transpose() * c;
        bary += u * c;
    }
    (linalg::identity_deviation(&moment), bary.norm())
}

/// Minimum-volume enclosing ellipsoid of a point set via multiplicative
/// weight updates on the lifted second-moment matrix. Returns (center,
/// shape); approximation quality eps is enough for a warm start.
fn khachiyan_mvee(
    points: &[DVector<f64>],
    eps: f64,
    max_iter: usize,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let m = points.len();
    let n = points[0].len();
    let lifted: Vec<DVector<f64>> = points
        .iter()
        .map(|p| {
            let mut q = DVector::zeros(n + 1);
            q.rows_mut(0, n).copy_from(p);
            q[n] = 1.0;
            q
        })
        .collect();
    let mut w = DVector::from_element(m, 1.0 / m as f64);
    for _ in 0..max_iter {
        let mut mm = DMatrix::zeros(n + 1, n + 1);
        for (q, &wi) in lifted.iter().zip(w.iter()) {
            mm += q * q.transpose() * wi;
        }
        let inv = mm
            .try_inverse()
            .ok_or(Error::DegenerateInput("flat point set".into()))?;
        let mut best = (f64::NEG_INFINITY, 0usize);
        for (i, q) in lifted.iter().enumerate() {
            let kappa = (q.transpose() * &inv * q)[(0, 0)];
            if kappa > best.0 {
                best = (kappa, i);
            }
        }
        let (kappa, j) = best;
        if kappa <= (n as f64 + 1.0) * (1.0 + eps) {
            break;
        }
        let beta = (kappa - n as f64 - 1.0) / ((n as f64 + 1.0) * (kappa - 1.0));
        w *= 1.0 - beta;
        w[j] += beta;
    }
    let mut center = DVector::zeros(n);
    for (p, &wi) in points.iter().zip(w.iter()) {
        center += p * wi;
    }
    let mut second = DMatrix::zeros(n, n);
    for (p, &wi) in points.iter().zip(w.iter()) {
        second += p * p.transpose() * wi;
    }
    second -= &center * center.transpose();
    let shape = second
        .try_inverse()
        .ok_or(Error::DegenerateInput("flat point set".into()))?
        / n as f64;
    Ok((center, shape))
}

/// Barrier state: center d and symmetric B with E = {d + B z : |z| <= 1}.
struct BarrierProblem<'a> {
    n: usize,
    normals: &'a [DVector<f64>],
    offsets: &'a [f64],
}

impl BarrierProblem<'_> {
    fn param_len(&self) -> usize {
        self.n + self.n * (self.n + 1) / 2
    }

    fn unpack(&self, theta: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.n;
        let d = DVector::from_fn(n, |i, _| theta[i]);
        let mut b = DMatrix::zeros(n, n);
        let mut idx = n;
        for i in 0..n {
            for j in i..n {
                b[(i, j)] = theta[idx];
                b[(j, i)] = theta[idx];
                idx += 1;
            }
        }
        (d, b)
    }

    /// Slacks phi_i = b_i - <u_i, d> - |B u_i|; all must stay positive.
    fn slacks(&self, d: &DVector<f64>, b: &DMatrix<f64>) -> Vec<f64> {
        self.normals
            .iter()
            .zip(self.offsets)
            .map(|(u, &off)| off - u.dot(d) - (b * u).norm())
            .collect()
    }

    fn feasible(&self, theta: &DVector<f64>) -> bool {
        let (d, b) = self.unpack(theta);
        if b.clone().cholesky().is_none() {
            return false;
        }
        self.slacks(&d, &b).iter().all(|&s| s > 0.0)
    }

    fn objective(&self, theta: &DVector<f64>, mu: f64) -> f64 {
        let (d, b) = self.unpack(theta);
        let Some(chol) = b.clone().cholesky() else {
            return f64::NEG_INFINITY;
        };
        let logdet = 2.0 * chol.l().diagonal().iter().map(|x| x.ln()).sum::<f64>();
        let mut f = logdet;
        for s in self.slacks(&d, &b) {
            if s <= 0.0 {
                return f64::NEG_INFINITY;
            }
            f += mu * s.ln();
        }
        f
    }

    fn gradient(&self, theta: &DVector<f64>, mu: f64) -> DVector<f64> {
        let n = self.n;
        let (d, b) = self.unpack(theta);
        let binv = b.clone().try_inverse().expect("iterates keep B invertible");
        let mut g = DVector::zeros(self.param_len());
        let mut idx = n;
        for i in 0..n {
            for j in i..n {
                g[idx] = if i == j {
                    binv[(i, i)]
                } else {
                    2.0 * binv[(i, j)]
                };
                idx += 1;
            }
        }
        for (u, &off) in self.normals.iter().zip(self.offsets) {
            let v = &b * u;
            let s = v.norm();
            let phi = off - u.dot(&d) - s;
            let dir = v / s;
            let scale = mu / phi;
            for r in 0..n {
                g[r] -= scale * u[r];
            }
            let mut idx = n;
            for i in 0..n {
                for j in i..n {
                    let ds = if i == j {
                        dir[i] * u[i]
                    } else {
                        dir[i] * u[j] + dir[j] * u[i]
                    };
                    g[idx] -= scale * ds;
                    idx += 1;
                }
            }
        }
        g
    }

    /// Exact Hessian; the objective is concave so -H is positive
    /// semidefinite everywhere in the feasible region.
    fn hessian(&self, theta: &DVector<f64>, mu: f64) -> DMatrix<f64> {
        let n = self.n;
        let p = self.param_len();
        let (d, b) = self.unpack(theta);
        let binv = b.clone().try_inverse().expect("iterates keep B invertible");
        let mut h = DMatrix::zeros(p, p);
        let mut pairs = Vec::with_capacity(p - n);
        for k in 0..n {
            for l in k..n {
                pairs.push((k, l));
            }
        }

        // logdet along symmetrized elementary directions E_p, E_q:
        // second derivative is -tr(B^-1 E_p B^-1 E_q).
        for (pi, &(k, l)) in pairs.iter().enumerate() {
            for (qi, &(r, s)) in pairs.iter().enumerate() {
                let mut tr = binv[(l, r)] * binv[(s, k)];
                if r != s {
                    tr += binv[(l, s)] * binv[(r, k)];
                }
                if k != l {
                    tr += binv[(k, r)] * binv[(s, l)];
                    if r != s {
                        tr += binv[(k, s)] * binv[(r, l)];
                    }
                }
                h[(n + pi, n + qi)] -= tr;
            }
        }

        for (u, &off) in self.normals.iter().zip(self.offsets) {
            let v = &b * u;
            let s = v.norm();
            let nhat = &v / s;
            let phi = off - u.dot(&d) - s;
            let mut gphi = DVector::zeros(p);
            for r in 0..n {
                gphi[r] = -u[r];
            }
            // Directional derivatives E_p u of the map B -> B u.
            let mut dirs: Vec<DVector<f64>> = Vec::with_capacity(pairs.len());
            for &(k, l) in &pairs {
                let mut w = DVector::zeros(n);
                if k == l {
                    w[k] = u[k];
                } else {
                    w[k] = u[l];
                    w[l] = u[k];
                }
                dirs.push(w);
            }
            let proj: Vec<f64> = dirs.iter().map(|w| nhat.dot(w)).collect();
            for (pi, &a) in proj.iter().enumerate() {
                gphi[n + pi] = -a;
            }
            // Curvature of the norm term: s'' = (w_p . w_q - a_p a_q) / s.
            for pi in 0..pairs.len() {
                for qi in 0..pairs.len() {
                    let sdd = (dirs[pi].dot(&dirs[qi]) - proj[pi] * proj[qi]) / s;
                    h[(n + pi, n + qi)] -= mu * sdd / phi;
                }
            }
            let scale = mu / (phi * phi);
            h -= &gphi * gphi.transpose() * scale;
        }
        h
    }
}

/// John ellipsoid: the unique maximal-volume ellipsoid inside the body.
/// Warm start from the polar's enclosing ellipsoid, then a barrier Newton
/// path to relative volume optimality 1e-8.
pub fn max_inscribed_ellipsoid(poly: &Polytope) -> Result<Ellipsoid> {
    let n = poly.dim();
    let hs = poly.halfspaces();
    let normals: Vec<DVector<f64>> = hs.iter().map(|h| h.normal.clone()).collect();
    let offsets: Vec<f64> = hs.iter().map(|h| h.offset).collect();
    let m = normals.len();
    let z = opt::interior_point(&normals, &offsets, n).ok_or(Error::EmptyInterior)?;
    let r0 = normals
        .iter()
        .zip(&offsets)
        .map(|(u, &b)| b - u.dot(&z))
        .fold(f64::INFINITY, f64::min);
    if r0 <= 0.0 {
        return Err(Error::EmptyInterior);
    }

    let problem = BarrierProblem {
        n,
        normals: &normals,
        offsets: &offsets,
    };
    let p = problem.param_len();

    // Warm start: polar vertices about z, their enclosing ellipsoid, and its
    // polar, which is an inscribed ellipsoid of the recentred body.
    let mut d0 = z.clone();
    let mut b0 = DMatrix::identity(n, n) * (0.9 * r0);
    let polar: Vec<DVector<f64>> = normals
        .iter()
        .zip(&offsets)
        .map(|(u, &b)| u / (b - u.dot(&z)))
        .collect();
    if let Ok((pc, pa)) = khachiyan_mvee(&polar, 1e-3, 4000) {
        // Polar of {x: (x-pc)^T pa (x-pc) <= 1}: quadratic form q with the
        // inscribed ellipsoid centred at -q^{-1} pc.
        if let Some(pa_inv) = pa.clone().try_inverse() {
            let q = pa_inv - &pc * pc.transpose();
            if let Some(q_inv) = q.clone().try_inverse() {
                let centre = -(&q_inv * &pc);
                let denom = 1.0 + (pc.transpose() * &q_inv * &pc)[(0, 0)];
                if denom > 0.0 {
                    let shape = q / denom;
                    if let Ok(binv_half) = linalg::spd_inv_sqrt(&shape) {
                        let cand_d = &z + &centre;
                        let mut cand_b = binv_half * 0.95;
                        let mut ok = false;
                        for _ in 0..60 {
                            let mut theta = DVector::zeros(p);
                            pack(&mut theta, &cand_d, &cand_b, n);
                            if problem.feasible(&theta) {
                                ok = true;
                                break;
                            }
                            cand_b *= 0.9;
                        }
                        if ok {
                            d0 = cand_d;
                            b0 = cand_b;
                        }
                    }
                }
            }
        }
    }

    let mut theta = DVector::zeros(p);
    pack(&mut theta, &d0, &b0, n);
    debug_assert!(problem.feasible(&theta));

    // Central path: the duality gap in log-volume is m * mu.
    let mu_final = (1e-8 / m as f64).max(1e-12);
    let mut mu = 1e-2;
    let mut total_iters = 0usize;
    loop {
        for _ in 0..60 {
            total_iters += 1;
            let g = problem.gradient(&theta, mu);
            let h = problem.hessian(&theta, mu);
            let neg_h = -h;
            let delta = match neg_h.clone().cholesky() {
                Some(ch) => ch.solve(&g),
                None => linalg::solve(&neg_h, &g).unwrap_or_else(|_| g.clone()),
            };
            let ascent = g.dot(&delta);
            let decrement = ascent.abs();
            if decrement <= 1e-13 * (1.0 + problem.objective(&theta, mu).abs()) {
                break;
            }
            let dir = if ascent > 0.0 { delta } else { g.clone() };
            let f0 = problem.objective(&theta, mu);
            let slope = g.dot(&dir);
            let mut t = 1.0;
            let mut stepped = false;
            for _ in 0..50 {
                let cand = &theta + &dir * t;
                if problem.feasible(&cand)
                    && problem.objective(&cand, mu) >= f0 + 1e-4 * t * slope
                {
                    theta = cand;
                    stepped = true;
                    break;
                }
                t *= 0.5;
            }
            if !stepped {
                break;
            }
            if total_iters > 4000 {
                return Err(Error::NoConvergence {
                    op: "max_inscribed_ellipsoid",
                    iters: total_iters,
                    residual: mu * m as f64,
                });
            }
        }
        if mu <= mu_final {
            break;
        }
        mu = (mu * 0.02).max(mu_final);
    }

    let (d, b) = problem.unpack(&theta);
    let b_inv = b
        .clone()
        .try_inverse()
        .ok_or(Error::DecompositionFailed("singular ellipsoid map".into()))?;
    let shape = &b_inv.transpose() * &b_inv;
    let shape = (shape.clone() + shape.transpose()) / 2.0;
    Ok(Ellipsoid { center: d, shape })
}

fn pack(theta: &mut DVector<f64>, d: &DVector<f64>, b: &DMatrix<f64>, n: usize) {
    for i in 0..n {
        theta[i] = d[i];
    }
    let mut idx = n;
    for i in 0..n {
        for j in i..n {
            theta[idx] = b[(i, j)];
            idx += 1;
        }
    }
}

/// Affine image of the body whose inscribed ellipsoid is the unit ball,
/// together with the map used.
pub fn john_normalize(poly: &Polytope) -> Result<(Polytope, AffineMap)> {
    let e = max_inscribed_ellipsoid(poly)?;
    let linear = linalg::spd_sqrt(&e.shape)?;
    let shift = -(&linear * &e.center);
    let map = AffineMap { linear, shift };
    Ok((poly.affine_image(&map)?, map))
}

/// Contact decomposition with the default tolerance.
pub fn contact_decomposition(poly: &Polytope) -> Result<JohnDecomposition> {
    contact_decomposition_with(poly, DEFAULT_JOHN_TOL)
}

/// Contacts are facets whose slack against the unit ball is at most 10*tol;
/// weights solve the stacked moment system by minimum-norm nonnegative
/// least squares, with residual required below tol.
pub fn contact_decomposition_with(poly: &Polytope, tol: f64) -> Result<JohnDecomposition> {
    let n = poly.dim();
    let slack = crate::CONTACT_SCALE * tol;
    let mut contacts: Vec<DVector<f64>> = Vec::new();
    for h in poly.halfspaces() {
        if h.offset < 1.0 - slack {
            return Err(Error::NotJohnPosition(format!(
                "facet at distance {:.6} cuts the unit ball",
                h.offset
            )));
        }
        if h.offset - 1.0 <= slack {
            let norm = h.normal.norm();
            contacts.push(h.normal / norm);
        }
    }
    if contacts.len() < n + 1 {
        return Err(Error::NotJohnPosition(format!(
            "{} contacts found, need at least {}",
            contacts.len(),
            n + 1
        )));
    }
    let weights = fit_weights(&contacts, tol)?;
    // Keep the support: a tangent facet assigned no weight carries nothing.
    let kept: Vec<(DVector<f64>, f64)> = contacts
        .into_iter()
        .zip(weights)
        .filter(|&(_, w)| w > 1e-10)
        .collect();
    if kept.len() < n + 1 {
        return Err(Error::DecompositionFailed(format!(
            "weight support {} is below {}",
            kept.len(),
            n + 1
        )));
    }
    let (contacts, weights) = kept.into_iter().unzip();
    Ok(JohnDecomposition::new(contacts, weights))
}

/// Nonnegative weights for given unit vectors solving the moment system
/// (identity part scaled so the l2 residual is the Frobenius norm, then the
/// barycentre rows, then the trace row).
pub fn fit_weights(contacts: &[DVector<f64>], tol: f64) -> Result<Vec<f64>> {
    let n = contacts[0].len();
    let k = contacts.len();
    let rows = n * (n + 1) / 2 + n + 1;
    let mut a = DMatrix::zeros(rows, k);
    let mut t = DVector::zeros(rows);
    let sqrt2 = 2f64.sqrt();
    for (col, u) in contacts.iter().enumerate() {
        let mut r = 0;
        for i in 0..n {
            for j in i..n {
                a[(r, col)] = if i == j {
                    u[i] * u[i]
                } else {
                    sqrt2 * u[i] * u[j]
                };
                r += 1;
            }
        }
        for i in 0..n {
            a[(r, col)] = u[i];
            r += 1;
        }
        a[(r, col)] = 1.0;
    }
    let mut r = 0;
    for i in 0..n {
        for j in i..n {
            t[r] = if i == j { 1.0 } else { 0.0 };
            r += 1;
        }
    }
    r += n;
    t[r] = n as f64;
    let w = nnls::nnls_min_norm(&a, &t, 1e-10)?;
    let residual = (&a * &w - &t).norm();
    if residual > tol {
        return Err(Error::DecompositionFailed(format!(
            "weight fit residual {residual:.3e} exceeds {tol:.1e}"
        )));
    }
    Ok(w.iter().copied().collect())
}

/// Per-invariant verification report for a decomposition.
#[derive(Debug, Clone)]
pub struct JohnReport {
    pub count: usize,
    pub dim: usize,
    pub residual_iso: f64,
    pub residual_centred: f64,
    pub trace_deviation: f64,
    pub max_weight: f64,
    pub min_weight: f64,
    pub max_unit_deviation: f64,
    pub cardinality_ok: bool,
    pub trace_ok: bool,
    pub weights_ok: bool,
    pub iso_ok: bool,
    pub centred_ok: bool,
    pub units_ok: bool,
}

impl JohnReport {
    pub fn passed(&self) -> bool {
        self.cardinality_ok
            && self.trace_ok
            && self.weights_ok
            && self.iso_ok
            && self.centred_ok
            && self.units_ok
    }
}

/// Recompute all John condition residuals for a decomposition.
pub fn verify_john(d: &JohnDecomposition, tol: f64) -> JohnReport {
    let n = d.dim();
    let k = d.count();
    let (residual_iso, residual_centred) = moment_residuals(&d.contacts, &d.weights);
    let trace_deviation = (d.weights.iter().sum::<f64>() - n as f64).abs();
    let max_weight = d.weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min_weight = d.weights.iter().copied().fold(f64::INFINITY, f64::min);
    let max_unit_deviation = d
        .contacts
        .iter()
        .map(|u| (u.norm() - 1.0).abs())
        .fold(0.0f64, f64::max);
    JohnReport {
        count: k,
        dim: n,
        residual_iso,
        residual_centred,
        trace_deviation,
        max_weight,
        min_weight,
        max_unit_deviation,
        cardinality_ok: k >= n + 1 && k <= n * (n + 3) / 2,
        trace_ok: trace_deviation <= tol * (n as f64),
        weights_ok: min_weight > 0.0 && max_weight <= 1.0 + tol,
        iso_ok: residual_iso <= tol,
        centred_ok: residual_centred <= tol,
        units_ok: max_unit_deviation <= tol,
    }
}
