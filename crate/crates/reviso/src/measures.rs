//! Centred isotropic measures on the unit sphere: validation, the simplex
//! reference measure, Caratheodory support reduction, lifting to R^{n+1},
//! spherical distances, and a seeded corpus generator.

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Polytope;
use crate::{linalg, ot};

/// Validation gate used where an operation requires a valid measure.
pub const DEFAULT_MEASURE_TOL: f64 = 1e-6;

/// Atomic measure on S^{n-1}: unit atoms with positive weights.
#[derive(Debug, Clone)]
pub struct SphericalMeasure {
    dim: usize,
    atoms: Vec<(DVector<f64>, f64)>,
}

/// Residuals of the three defining constraints.
#[derive(Debug, Clone)]
pub struct MeasureReport {
    pub residual_iso: f64,
    pub residual_centred: f64,
    pub residual_mass: f64,
    pub iso_ok: bool,
    pub centred_ok: bool,
    pub mass_ok: bool,
}

impl MeasureReport {
    pub fn passed(&self) -> bool {
        self.iso_ok && self.centred_ok && self.mass_ok
    }
}

#[derive(Serialize, Deserialize)]
struct MeasureJson {
    dim: usize,
    atoms: Vec<Vec<f64>>,
}

impl SphericalMeasure {
    /// Atoms must be unit within 1e-6 (then renormalized) with positive
    /// weights.
    pub fn new(dim: usize, atoms: Vec<(DVector<f64>, f64)>) -> Result<SphericalMeasure> {
        if !(2..=5).contains(&dim) {
            return Err(Error::InvalidDimension(dim));
        }
        if atoms.is_empty() {
            return Err(Error::InvalidInput("measure needs at least one atom".into()));
        }
        let mut clean = Vec::with_capacity(atoms.len());
        for (i, (u, c)) in atoms.into_iter().enumerate() {
            if u.len() != dim {
                return Err(Error::InvalidInput(format!(
                    "atom {i} has dimension {} in a {dim}-dimensional measure",
                    u.len()
                )));
            }
            let norm = u.norm();
            if (norm - 1.0).abs() > 1e-6 {
                return Err(Error::InvalidInput(format!(
                    "atom {i} has norm {norm:.8}, not a unit vector"
                )));
            }
            if !(c > 0.0) {
                return Err(Error::InvalidInput(format!("atom {i} has weight {c}")));
            }
            clean.push((u / norm, c));
        }
        Ok(SphericalMeasure { dim, atoms: clean })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn atoms(&self) -> &[(DVector<f64>, f64)] {
        &self.atoms
    }

    pub fn support(&self) -> Vec<DVector<f64>> {
        self.atoms.iter().map(|(u, _)| u.clone()).collect()
    }

    pub fn mass(&self) -> f64 {
        self.atoms.iter().map(|&(_, c)| c).sum()
    }

    /// (second moment, first moment, mass).
    pub fn moments(&self) -> (DMatrix<f64>, DVector<f64>, f64) {
        let n = self.dim;
        let mut second = DMatrix::zeros(n, n);
        let mut first = DVector::zeros(n);
        let mut mass = 0.0;
        for (u, c) in &self.atoms {
            second += u * u.transpose() * *c;
            first += u * *c;
            mass += c;
        }
        (second, first, mass)
    }

    pub fn validate(&self, tol: f64) -> MeasureReport {
        let (second, first, mass) = self.moments();
        let residual_iso = linalg::identity_deviation(&second);
        let residual_centred = first.norm();
        let residual_mass = (mass - self.dim as f64).abs();
        MeasureReport {
            residual_iso,
            residual_centred,
            residual_mass,
            iso_ok: residual_iso <= tol,
            centred_ok: residual_centred <= tol,
            mass_ok: residual_mass <= tol,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let atoms = self
            .atoms
            .iter()
            .map(|(u, c)| {
                let mut row: Vec<f64> = u.iter().copied().collect();
                row.push(*c);
                row
            })
            .collect();
        Ok(serde_json::to_string_pretty(&MeasureJson {
            dim: self.dim,
            atoms,
        })?)
    }

    pub fn from_json(text: &str) -> Result<SphericalMeasure> {
        let raw: MeasureJson = serde_json::from_str(text)?;
        let mut atoms = Vec::with_capacity(raw.atoms.len());
        for (i, row) in raw.atoms.iter().enumerate() {
            if row.len() != raw.dim + 1 {
                return Err(Error::InvalidInput(format!(
                    "atom row {i} has {} entries, expected {}",
                    row.len(),
                    raw.dim + 1
                )));
            }
            let u = DVector::from_column_slice(&row[..raw.dim]);
            atoms.push((u, row[raw.dim]));
        }
        SphericalMeasure::new(raw.dim, atoms)
    }
}

/// Lift to R^{n+1}: u maps to -sqrt(n/(n+1)) u + sqrt(1/(n+1)) e_{n+1},
/// weights scale by (n+1)/n.
#[derive(Debug, Clone)]
pub struct LiftedSystem {
    pub dim: usize,
    pub vectors: Vec<DVector<f64>>,
    pub weights: Vec<f64>,
}

/// Residuals of the lifted constraints.
#[derive(Debug, Clone)]
pub struct LiftedReport {
    pub residual_iso: f64,
    pub residual_axis: f64,
    pub residual_mass: f64,
}

impl LiftedReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.residual_iso <= tol && self.residual_axis <= tol && self.residual_mass <= tol
    }
}

impl LiftedSystem {
    pub fn validate(&self) -> LiftedReport {
        let n1 = self.dim;
        let mut second = DMatrix::zeros(n1, n1);
        let mut first = DVector::zeros(n1);
        let mut mass = 0.0;
        for (u, &c) in self.vectors.iter().zip(&self.weights) {
            second += u * u.transpose() * c;
            first += u * c;
            mass += c;
        }
        let mut axis_target = DVector::zeros(n1);
        axis_target[n1 - 1] = (n1 as f64).sqrt();
        LiftedReport {
            residual_iso: linalg::identity_deviation(&second),
            residual_axis: (first - axis_target).norm(),
            residual_mass: (mass - n1 as f64).abs(),
        }
    }
}

/// Lift of a single unit vector.
pub fn lift_vector(u: &DVector<f64>) -> DVector<f64> {
    let n = u.len();
    let a = (n as f64 / (n as f64 + 1.0)).sqrt();
    let b = (1.0 / (n as f64 + 1.0)).sqrt();
    let mut v = DVector::zeros(n + 1);
    v.rows_mut(0, n).copy_from(&(-(u * a)));
    v[n] = b;
    v
}

pub fn lift(measure: &SphericalMeasure) -> Result<LiftedSystem> {
    let report = measure.validate(DEFAULT_MEASURE_TOL);
    if !report.passed() {
        return Err(Error::InvalidMeasure(format!(
            "residuals iso {:.3e}, centred {:.3e}, mass {:.3e}",
            report.residual_iso, report.residual_centred, report.residual_mass
        )));
    }
    let n = measure.dim() as f64;
    Ok(LiftedSystem {
        dim: measure.dim() + 1,
        vectors: measure.atoms().iter().map(|(u, _)| lift_vector(u)).collect(),
        weights: measure.atoms().iter().map(|&(_, c)| c * (n + 1.0) / n).collect(),
    })
}

/// Contact points of a regular simplex circumscribed about the unit ball.
pub(crate) fn circumscribed_simplex_contacts(simplex: &Polytope) -> Result<Vec<DVector<f64>>> {
    let n = simplex.dim();
    let hs = simplex.halfspaces();
    if hs.len() != n + 1 {
        return Err(Error::InvalidSimplex(format!(
            "{} facets, expected {}",
            hs.len(),
            n + 1
        )));
    }
    for h in &hs {
        if (h.offset - 1.0).abs() > 1e-7 {
            return Err(Error::InvalidSimplex(format!(
                "facet at distance {:.8} from the origin",
                h.offset
            )));
        }
    }
    let target = -1.0 / n as f64;
    for i in 0..hs.len() {
        for j in i + 1..hs.len() {
            let dot = hs[i].normal.dot(&hs[j].normal);
            if (dot - target).abs() > 1e-7 {
                return Err(Error::InvalidSimplex(format!(
                    "normals {i},{j} have inner product {dot:.8}, expected {target:.8}"
                )));
            }
        }
    }
    Ok(hs.into_iter().map(|h| h.normal).collect())
}

/// The measure with weight n/(n+1) at each contact point of the simplex.
pub fn simplex_measure(simplex: &Polytope) -> Result<SphericalMeasure> {
    let n = simplex.dim();
    let contacts = circumscribed_simplex_contacts(simplex)?;
    let w = n as f64 / (n as f64 + 1.0);
    SphericalMeasure::new(n, contacts.into_iter().map(|u| (u, w)).collect())
}

/// The reference measure in the standard orientation.
pub fn standard_simplex_measure(n: usize) -> Result<SphericalMeasure> {
    let w = n as f64 / (n as f64 + 1.0);
    SphericalMeasure::new(
        n,
        crate::geom::regular_simplex_contacts(n)
            .into_iter()
            .map(|u| (u, w))
            .collect(),
    )
}

/// Support reduction to at most n(n+3)/2 + 1 atoms preserving all moments:
/// repeatedly step along a kernel direction of the moment map until a
/// weight reaches zero.
pub fn caratheodory_reduce(measure: &SphericalMeasure) -> Result<SphericalMeasure> {
    let n = measure.dim();
    let cap = n * (n + 3) / 2 + 1;
    let mut atoms: Vec<(DVector<f64>, f64)> = measure.atoms().to_vec();

    while atoms.len() > cap {
        let k = atoms.len();
        let rows = cap;
        let mut a = DMatrix::zeros(rows, k);
        for (col, (u, _)) in atoms.iter().enumerate() {
            let mut r = 0;
            for i in 0..n {
                for j in i..n {
                    a[(r, col)] = u[i] * u[j];
                    r += 1;
                }
            }
            for i in 0..n {
                a[(r, col)] = u[i];
                r += 1;
            }
            a[(r, col)] = 1.0;
        }
        // Kernel direction: orthogonalize coordinate vectors against the
        // row space (columns of Q from QR of A^T) and keep the best.
        let qr = a.transpose().qr();
        let q = qr.q();
        let mut best: Option<(f64, DVector<f64>)> = None;
        for i in 0..k {
            let mut h = DVector::zeros(k);
            h[i] = 1.0;
            for c in 0..q.ncols() {
                let col = q.column(c);
                let proj = col.dot(&h);
                h -= DVector::from(col) * proj;
            }
            let norm = h.norm();
            if best.as_ref().is_none_or(|(b, _)| norm > *b) {
                best = Some((norm, h));
            }
        }
        let (norm, mut h) = best.expect("k > 0");
        if norm < 1e-10 {
            let partial = SphericalMeasure { dim: n, atoms };
            return Err(Error::ReductionStalled {
                diagnostics: format!(
                    "no kernel direction at {k} atoms (best residual {norm:.3e})"
                ),
                partial: Box::new(partial),
            });
        }
        h /= norm;
        // Orient toward the fastest weight decrease, then stop at the first
        // weight to hit zero; ties break by atom index.
        let rate = |h: &DVector<f64>| {
            h.iter()
                .zip(&atoms)
                .map(|(&hi, &(_, c))| hi / c)
                .fold(f64::NEG_INFINITY, f64::max)
        };
        if rate(&(-&h)) > rate(&h) {
            h = -h;
        }
        let mut tau = f64::INFINITY;
        let mut hit = usize::MAX;
        for (i, (&hi, &(_, c))) in h.iter().zip(&atoms).enumerate() {
            if hi > 0.0 {
                let t = c / hi;
                if t < tau {
                    tau = t;
                    hit = i;
                }
            }
        }
        if hit == usize::MAX {
            let partial = SphericalMeasure { dim: n, atoms };
            return Err(Error::ReductionStalled {
                diagnostics: format!("kernel direction decreases no weight at {k} atoms"),
                partial: Box::new(partial),
            });
        }
        for (i, (_, c)) in atoms.iter_mut().enumerate() {
            *c -= tau * h[i];
        }
        atoms[hit].1 = 0.0;
        atoms.retain(|&(_, c)| c > 1e-13);
    }
    Ok(SphericalMeasure { dim: n, atoms })
}

fn one_sided_deviation(xs: &[DVector<f64>], ys: &[DVector<f64>]) -> f64 {
    xs.iter()
        .map(|x| {
            ys.iter()
                .map(|y| linalg::geodesic(x, y))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

/// Spherical Hausdorff distance as the smaller of the two one-sided
/// max-min geodesic deviations.
pub fn spherical_hausdorff(xs: &[DVector<f64>], ys: &[DVector<f64>]) -> Result<f64> {
    if xs.is_empty() || ys.is_empty() {
        return Err(Error::InvalidInput("empty point set".into()));
    }
    Ok(one_sided_deviation(xs, ys).min(one_sided_deviation(ys, xs)))
}

/// Symmetric variant taking the larger one-sided deviation.
pub fn spherical_hausdorff_max(xs: &[DVector<f64>], ys: &[DVector<f64>]) -> Result<f64> {
    if xs.is_empty() || ys.is_empty() {
        return Err(Error::InvalidInput("empty point set".into()));
    }
    Ok(one_sided_deviation(xs, ys).max(one_sided_deviation(ys, xs)))
}

/// Mass of each closed geodesic cap of radius eps around the simplex
/// contact points; every atom must land in some cap, and the masses must
/// stay within 2n*eps of n/(n+1).
pub fn cap_masses(
    measure: &SphericalMeasure,
    simplex: &Polytope,
    eps: f64,
) -> Result<Vec<f64>> {
    if !(0.0..0.5).contains(&eps) {
        return Err(Error::InvalidParameter(format!(
            "cap radius {eps} outside [0, 1/2)"
        )));
    }
    let n = measure.dim();
    let contacts = circumscribed_simplex_contacts(simplex)?;
    let band = eps + 1e-12;
    let mut masses = vec![0.0; contacts.len()];
    let mut stray_count = 0usize;
    let mut stray_first = usize::MAX;
    for (idx, (u, c)) in measure.atoms().iter().enumerate() {
        let mut covered = false;
        for (i, w) in contacts.iter().enumerate() {
            if linalg::geodesic(u, w) <= band {
                masses[i] += c;
                covered = true;
                break;
            }
        }
        if !covered {
            stray_count += 1;
            stray_first = stray_first.min(idx);
        }
    }
    if stray_count > 0 {
        return Err(Error::CapsNotCovering {
            count: stray_count,
            first: stray_first,
        });
    }
    let target = n as f64 / (n as f64 + 1.0);
    let bound = 2.0 * n as f64 * eps + 1e-9;
    for (i, &m) in masses.iter().enumerate() {
        if (m - target).abs() > bound {
            return Err(Error::HypothesisViolated(format!(
                "cap {i} has mass {m:.9}, deviation {:.3e} exceeds 2n*eps = {:.3e}",
                (m - target).abs(),
                2.0 * n as f64 * eps
            )));
        }
    }
    Ok(masses)
}

/// Kantorovich W1 with geodesic ground cost, solved exactly on the
/// transport polytope.
pub fn wasserstein_w1(mu: &SphericalMeasure, nu: &SphericalMeasure) -> Result<f64> {
    if mu.dim() != nu.dim() {
        return Err(Error::InvalidInput("dimension mismatch".into()));
    }
    if (mu.mass() - nu.mass()).abs() > 1e-8 * mu.mass().max(1.0) {
        return Err(Error::InvalidInput(format!(
            "mass mismatch: {} vs {}",
            mu.mass(),
            nu.mass()
        )));
    }
    let supplies: Vec<f64> = mu.atoms().iter().map(|&(_, c)| c).collect();
    let demands: Vec<f64> = nu.atoms().iter().map(|&(_, c)| c).collect();
    let cost: Vec<Vec<f64>> = mu
        .atoms()
        .iter()
        .map(|(u, _)| {
            nu.atoms()
                .iter()
                .map(|(v, _)| linalg::geodesic(u, v))
                .collect()
        })
        .collect();
    Ok(ot::transport(&supplies, &demands, &cost, 1e-8)?.cost)
}

/// W1 distance to the simplex measure together with its proved ceiling
/// 13 n^2 eps, valid whenever the cap hypotheses hold.
pub fn w1_simplex_bound(
    measure: &SphericalMeasure,
    simplex: &Polytope,
    eps: f64,
) -> Result<(f64, f64)> {
    cap_masses(measure, simplex, eps)?;
    let reference = simplex_measure(simplex)?;
    let w1 = wasserstein_w1(measure, &reference)?;
    let n = measure.dim() as f64;
    let bound = 13.0 * n * n * eps;
    if w1 > bound + 1e-9 {
        return Err(Error::HypothesisViolated(format!(
            "W1 {w1:.9} exceeds 13 n^2 eps = {bound:.9}"
        )));
    }
    Ok((w1, bound))
}

/// Deterministic corpus generator: random unit atoms, alternately
/// recentred and whitened until the invariants pass within 1e-9.
///
/// Recentring by t moves atoms to (u - t)/|u - t| and rebalances weights by
/// (1 - <u, 2t>): the weight factor cancels the atom motion's first-order
/// isotropy perturbation, so with t = b/(n+1) the first moment b and the
/// isotropy residual both drop quadratically; whitening then restores
/// isotropy and total mass exactly.
pub fn random_isotropic(n: usize, k: usize, seed: u64) -> Result<SphericalMeasure> {
    if !(2..=5).contains(&n) {
        return Err(Error::InvalidDimension(n));
    }
    if k < n + 1 {
        return Err(Error::InvalidParameter(format!(
            "{k} atoms cannot be centred isotropic in dimension {n}; need at least {}",
            n + 1
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rounds_left = 10_000usize;
    while rounds_left > 0 {
        let mut atoms: Vec<(DVector<f64>, f64)> = (0..k)
            .map(|_| {
                let u = DVector::from_fn(n, |_, _| {
                    // Box-Muller normal deviate.
                    let a: f64 = rng.random::<f64>().max(1e-12);
                    let b: f64 = rng.random();
                    (-2.0 * a.ln()).sqrt() * (std::f64::consts::TAU * b).cos()
                });
                (u.normalize(), n as f64 / k as f64)
            })
            .collect();
        while rounds_left > 0 {
            rounds_left -= 1;
            let mut second = DMatrix::zeros(n, n);
            for (u, c) in &atoms {
                second += u * u.transpose() * *c;
            }
            let Ok(whiten) = linalg::spd_inv_sqrt(&second) else {
                break;
            };
            for (u, c) in &mut atoms {
                let v = &whiten * &*u;
                let s = v.norm_squared();
                *c *= s;
                *u = v / s.sqrt();
            }
            let mut first = DVector::zeros(n);
            for (u, c) in &atoms {
                first += u * *c;
            }
            if first.norm() <= 1e-9 {
                let measure = SphericalMeasure { dim: n, atoms };
                debug_assert!(measure.validate(1e-8).passed());
                return Ok(measure);
            }
            // Damp large steps so weights stay positive and atoms clear of t.
            let lam = (0.15 * (n as f64 + 1.0) / first.norm()).min(1.0);
            let t = &first * (lam / (n as f64 + 1.0));
            let mut healthy = true;
            for (u, c) in &mut atoms {
                *c *= 1.0 - 2.0 * u.dot(&t);
                let v = &*u - &t;
                let norm = v.norm();
                if !(norm > 1e-6 && *c > 0.0 && c.is_finite()) {
                    healthy = false;
                    break;
                }
                *u = v / norm;
            }
            if !healthy {
                break;
            }
        }
    }
    Err(Error::GeneratorFailed(format!(
        "no centred isotropic configuration for n = {n}, k = {k}, seed = {seed}"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::AffineMap;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn rot2(theta: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[theta.cos(), -theta.sin(), theta.sin(), theta.cos()])
    }

    fn axis_measure() -> SphericalMeasure {
        let atoms = vec![
            (DVector::from_vec(vec![1.0, 0.0]), 0.5),
            (DVector::from_vec(vec![-1.0, 0.0]), 0.5),
            (DVector::from_vec(vec![0.0, 1.0]), 0.5),
            (DVector::from_vec(vec![0.0, -1.0]), 0.5),
        ];
        SphericalMeasure::new(2, atoms).unwrap()
    }

    fn rotated_axis_measure(theta: f64, scale: f64) -> Vec<(DVector<f64>, f64)> {
        let r = rot2(theta);
        axis_measure()
            .atoms()
            .iter()
            .map(|(u, c)| (&r * u, c * scale))
            .collect()
    }

    #[test]
    fn axis_measure_validates_and_detects_skew() {
        let report = axis_measure().validate(1e-12);
        assert!(report.passed(), "{report:?}");

        let mut atoms = axis_measure().atoms().to_vec();
        atoms[0].1 = 0.6;
        let skew = SphericalMeasure::new(2, atoms).unwrap();
        let report = skew.validate(1e-9);
        assert!(!report.iso_ok);
        assert!(!report.passed());
    }

    #[test]
    fn simplex_measure_reference_weights() {
        for n in [2usize, 4] {
            let s = Polytope::regular_simplex(n).unwrap();
            let mu = simplex_measure(&s).unwrap();
            assert_eq!(mu.atoms().len(), n + 1);
            for &(_, c) in mu.atoms() {
                assert_relative_eq!(c, n as f64 / (n as f64 + 1.0), epsilon = 1e-12);
            }
            assert_relative_eq!(mu.mass(), n as f64, epsilon = 1e-12);
            assert!(mu.validate(1e-9).passed());
        }
    }

    #[test]
    fn simplex_measure_rotation_equivariant() {
        let s = Polytope::regular_simplex(2).unwrap();
        let map = AffineMap {
            linear: rot2(0.7),
            shift: DVector::zeros(2),
        };
        let rotated = s.affine_image(&map).unwrap();
        let mu = simplex_measure(&rotated).unwrap();
        assert!(mu.validate(1e-9).passed());
        for &(_, c) in mu.atoms() {
            assert_relative_eq!(c, 2.0 / 3.0, epsilon = 1e-12);
        }
        let base = standard_simplex_measure(2).unwrap();
        let d = spherical_hausdorff(&mu.support(), &base.support()).unwrap();
        assert_relative_eq!(d, 0.7, epsilon = 1e-9);
    }

    #[test]
    fn simplex_measure_rejects_non_simplices() {
        assert!(matches!(
            simplex_measure(&Polytope::cube(2).unwrap()),
            Err(Error::InvalidSimplex(_))
        ));
        let scaled = Polytope::regular_simplex(3).unwrap().scaled(1.1).unwrap();
        assert!(matches!(
            simplex_measure(&scaled),
            Err(Error::InvalidSimplex(_))
        ));
    }

    #[test]
    fn caratheodory_reduces_oversupported_planar_measure() {
        let mut atoms = Vec::new();
        for theta in [0.0, 0.4, 0.9] {
            atoms.extend(rotated_axis_measure(theta, 1.0 / 3.0));
        }
        let fat = SphericalMeasure::new(2, atoms).unwrap();
        assert_eq!(fat.atoms().len(), 12);
        assert!(fat.validate(1e-12).passed());

        let reduced = caratheodory_reduce(&fat).unwrap();
        assert!(reduced.atoms().len() <= 6, "{} atoms", reduced.atoms().len());
        assert!(reduced.validate(1e-9).passed());
        // Support containment: every kept atom is an input atom.
        for (u, _) in reduced.atoms() {
            assert!(
                fat.atoms().iter().any(|(v, _)| (u - v).norm() < 1e-12),
                "atom not in the input support"
            );
        }
    }

    #[test]
    fn caratheodory_keeps_small_supports() {
        let mu = standard_simplex_measure(3).unwrap();
        let reduced = caratheodory_reduce(&mu).unwrap();
        assert_eq!(reduced.atoms().len(), mu.atoms().len());
        for ((u, c), (v, d)) in mu.atoms().iter().zip(reduced.atoms()) {
            assert_eq!((u - v).norm(), 0.0);
            assert_eq!(c, d);
        }
    }

    #[test]
    fn lift_matches_formula() {
        let u = DVector::from_vec(vec![1.0, 0.0]);
        let v = lift_vector(&u);
        assert_relative_eq!(v[0], -(2.0f64 / 3.0).sqrt(), epsilon = 1e-15);
        assert_relative_eq!(v[1], 0.0, epsilon = 1e-15);
        assert_relative_eq!(v[2], (1.0f64 / 3.0).sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn lift_of_simplex_measure_is_orthonormal() {
        let mu = standard_simplex_measure(2).unwrap();
        let lifted = lift(&mu).unwrap();
        let k = lifted.vectors.len();
        for i in 0..k {
            for j in 0..k {
                let dot = lifted.vectors[i].dot(&lifted.vectors[j]);
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_relative_eq!(dot, expect, epsilon = 1e-9);
            }
        }
        let report = lifted.validate();
        assert!(report.passed(1e-9), "{report:?}");
    }

    #[test]
    fn lift_mass_and_rejection() {
        for n in 2..=4 {
            let mu = random_isotropic(n, 2 * n + 1, 5).unwrap();
            let lifted = lift(&mu).unwrap();
            assert_relative_eq!(
                lifted.weights.iter().sum::<f64>(),
                n as f64 + 1.0,
                epsilon = 1e-7
            );
            assert!(lifted.validate().passed(1e-6));
        }
        let mut atoms = axis_measure().atoms().to_vec();
        atoms[0].1 = 0.6;
        let skew = SphericalMeasure::new(2, atoms).unwrap();
        assert!(matches!(lift(&skew), Err(Error::InvalidMeasure(_))));
    }

    #[test]
    fn hausdorff_examples() {
        let x = standard_simplex_measure(2).unwrap().support();
        assert_eq!(spherical_hausdorff(&x, &x).unwrap(), 0.0);

        let theta = 0.2;
        let r = rot2(theta);
        let y: Vec<DVector<f64>> = x.iter().map(|u| &r * u).collect();
        assert_relative_eq!(spherical_hausdorff(&x, &y).unwrap(), theta, epsilon = 1e-12);

        let e1 = DVector::from_vec(vec![1.0, 0.0]);
        let antipode = vec![-&e1];
        assert_relative_eq!(
            spherical_hausdorff(&[e1.clone()], &antipode).unwrap(),
            std::f64::consts::PI,
            epsilon = 1e-12
        );

        // A strict subset has one-sided deviation zero, so the verbatim
        // distance vanishes while the symmetric variant does not.
        let e2 = DVector::from_vec(vec![0.0, 1.0]);
        let pair = vec![e1.clone(), e2];
        let single = vec![e1];
        assert_eq!(spherical_hausdorff(&single, &pair).unwrap(), 0.0);
        assert_relative_eq!(
            spherical_hausdorff_max(&single, &pair).unwrap(),
            std::f64::consts::FRAC_PI_2,
            epsilon = 1e-12
        );
    }

    fn split_simplex_measure(delta: f64) -> SphericalMeasure {
        let contacts = crate::geom::regular_simplex_contacts(2);
        let mut atoms = Vec::new();
        for w in &contacts {
            for sign in [-1.0, 1.0] {
                atoms.push((rot2(sign * delta) * w, 1.0 / 3.0));
            }
        }
        SphericalMeasure::new(2, atoms).unwrap()
    }

    #[test]
    fn cap_masses_exact_and_perturbed() {
        for n in 2..=4 {
            let s = Polytope::regular_simplex(n).unwrap();
            let mu = standard_simplex_measure(n).unwrap();
            let masses = cap_masses(&mu, &s, 0.0).unwrap();
            for m in masses {
                assert_relative_eq!(m, n as f64 / (n as f64 + 1.0), epsilon = 1e-12);
            }
        }

        let s = Polytope::regular_simplex(2).unwrap();
        let split = split_simplex_measure(0.01);
        assert!(split.validate(1e-12).passed());
        let masses = cap_masses(&split, &s, 0.01).unwrap();
        for m in masses {
            assert_relative_eq!(m, 2.0 / 3.0, epsilon = 1e-12);
        }

        let mut atoms = standard_simplex_measure(2).unwrap().atoms().to_vec();
        atoms.push((rot2(0.6) * &atoms[0].0, 1e-3));
        let stray = SphericalMeasure::new(2, atoms).unwrap();
        match cap_masses(&stray, &s, 0.1) {
            Err(Error::CapsNotCovering { count, first }) => {
                assert_eq!(count, 1);
                assert_eq!(first, 3);
            }
            other => panic!("expected CapsNotCovering, got {other:?}"),
        }
    }

    #[test]
    fn w1_basics() {
        let mu = standard_simplex_measure(2).unwrap();
        assert_relative_eq!(wasserstein_w1(&mu, &mu).unwrap(), 0.0, epsilon = 1e-12);

        let a = SphericalMeasure::new(2, vec![(DVector::from_vec(vec![1.0, 0.0]), 1.0)]).unwrap();
        let d = 0.8;
        let b =
            SphericalMeasure::new(2, vec![(rot2(d) * DVector::from_vec(vec![1.0, 0.0]), 1.0)])
                .unwrap();
        assert_relative_eq!(wasserstein_w1(&a, &b).unwrap(), d, epsilon = 1e-9);
        assert_relative_eq!(
            wasserstein_w1(&a, &b).unwrap(),
            wasserstein_w1(&b, &a).unwrap(),
            epsilon = 1e-12
        );

        let theta = 0.3;
        let s = Polytope::regular_simplex(2).unwrap();
        let rotated = s
            .affine_image(&AffineMap {
                linear: rot2(theta),
                shift: DVector::zeros(2),
            })
            .unwrap();
        let nu = simplex_measure(&rotated).unwrap();
        let w1 = wasserstein_w1(&mu, &nu).unwrap();
        assert!(w1 > 0.0);
        assert!(w1 <= 2.0 * theta + 1e-9, "w1 = {w1}");

        let unbalanced =
            SphericalMeasure::new(2, vec![(DVector::from_vec(vec![0.0, 1.0]), 0.5)]).unwrap();
        assert!(matches!(
            wasserstein_w1(&a, &unbalanced),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn w1_simplex_bound_holds() {
        let s = Polytope::regular_simplex(2).unwrap();
        let split = split_simplex_measure(0.01);
        let (w1, bound) = w1_simplex_bound(&split, &s, 0.01).unwrap();
        assert_relative_eq!(w1, 2.0 * 0.01, epsilon = 1e-6);
        assert_relative_eq!(bound, 13.0 * 4.0 * 0.01, epsilon = 1e-12);
    }

    #[test]
    fn random_isotropic_families() {
        let mu = random_isotropic(3, 6, 7).unwrap();
        assert!(mu.validate(1e-8).passed());
        assert_eq!(mu.atoms().len(), 6);

        // Three atoms in the plane force the simplex configuration.
        for seed in [1u64, 2, 3] {
            let tight = random_isotropic(2, 3, seed).unwrap();
            for &(_, c) in tight.atoms() {
                assert_relative_eq!(c, 2.0 / 3.0, epsilon = 1e-6);
            }
            let d = spherical_hausdorff(
                &tight.support(),
                &standard_simplex_measure(2).unwrap().support(),
            )
            .unwrap();
            assert!(d <= std::f64::consts::TAU / 6.0 + 1e-9);
        }

        assert!(random_isotropic(2, 2, 1).is_err());
    }

    #[test]
    fn support_touches_every_direction() {
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        for n in 2..=4 {
            let mu = random_isotropic(n, 3 * n, 21).unwrap();
            for _ in 0..100 {
                let v = DVector::from_fn(n, |_, _| rng.random::<f64>() * 2.0 - 1.0).normalize();
                let best = mu
                    .atoms()
                    .iter()
                    .map(|(u, _)| u.dot(&v))
                    .fold(f64::NEG_INFINITY, f64::max);
                assert!(
                    best >= 1.0 / n as f64 - 1e-7,
                    "dim {n}: best cosine {best} below 1/n"
                );
            }
        }
    }

    #[test]
    fn json_round_trip() {
        let mu = random_isotropic(3, 7, 11).unwrap();
        let text = mu.to_json().unwrap();
        let back = SphericalMeasure::from_json(&text).unwrap();
        assert_eq!(back.atoms().len(), mu.atoms().len());
        for ((u, c), (v, d)) in mu.atoms().iter().zip(back.atoms()) {
            assert!((u - v).norm() < 1e-12);
            assert_relative_eq!(c, d, epsilon = 1e-12);
        }
    }

    #[test]
    fn w1_triangle_inequality() {
        let a = random_isotropic(2, 5, 40).unwrap();
        let b = random_isotropic(2, 6, 41).unwrap();
        let c = random_isotropic(2, 4, 42).unwrap();
        let ab = wasserstein_w1(&a, &b).unwrap();
        let bc = wasserstein_w1(&b, &c).unwrap();
        let ac = wasserstein_w1(&a, &c).unwrap();
        assert!(ac <= ab + bc + 1e-9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn reduction_preserves_moments(
            thetas in proptest::collection::vec(0.0f64..std::f64::consts::PI, 3..6),
        ) {
            let share = 1.0 / thetas.len() as f64;
            let mut atoms = Vec::new();
            for theta in &thetas {
                atoms.extend(rotated_axis_measure(*theta, share));
            }
            let fat = SphericalMeasure::new(2, atoms).unwrap();
            let (s0, f0, m0) = fat.moments();
            let reduced = caratheodory_reduce(&fat).unwrap();
            prop_assert!(reduced.atoms().len() <= 6);
            let (s1, f1, m1) = reduced.moments();
            prop_assert!((s0 - s1).norm() < 1e-9);
            prop_assert!((f0 - f1).norm() < 1e-9);
            prop_assert!((m0 - m1).abs() < 1e-9);
            for (u, _) in reduced.atoms() {
                prop_assert!(fat.atoms().iter().any(|(v, _)| (u - v).norm() < 1e-12));
            }
        }
    }
}
