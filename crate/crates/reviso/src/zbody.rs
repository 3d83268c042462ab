//! Bodies cut out by the unit-offset halfspaces of an isotropic direction
//! family, and quantitative proximity of such bodies to the regular simplex
//! circumscribed about the unit ball: rotation-optimal sandwich fits, maximal
//! subset determinants, straightening of near-orthonormal frames, and
//! certified volume deficits for bodies with a stray contact direction.

use std::f64::consts::PI;

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geom::{AffineMap, Halfspace, Polytope};
use crate::measures::{self, SphericalMeasure, DEFAULT_MEASURE_TOL};
use crate::{linalg, opt, DEFAULT_TOL};

/// Largest direction family accepted by the exhaustive subset enumeration.
pub const SUBSET_CAP: usize = 24;

/// Number of local-search starts for rotation fitting.
const ROTATION_STARTS: usize = 24;

/// Decomposition-of-identity residual accepted by frame operations.
const FRAME_TOL: f64 = 1e-6;

/// Best sandwich of a body between two scaled copies of a rotated regular
/// simplex: `scale * simplex` sits inside the body, which sits inside
/// `lambda * scale * simplex`.
#[derive(Debug, Clone)]
pub struct SimplexFit {
    /// Regular simplex circumscribed about the unit ball, rotated to fit.
    pub simplex: Polytope,
    /// Rotation carrying the body onto the reference simplex frame.
    pub rotation: DMatrix<f64>,
    /// Inner scale: `scale * simplex` is contained in the body.
    pub scale: f64,
    /// Dilation ratio between the outer and inner simplex copies; >= 1.
    pub lambda: f64,
    /// True when an exhaustive planar rotation scan confirmed the minimum;
    /// in higher dimensions the fit is the best local-search value found.
    pub certified: bool,
}

impl SimplexFit {
    /// Log dilation ratio; zero exactly for rotated regular simplices.
    pub fn distance(&self) -> f64 {
        self.lambda.ln()
    }
}

/// Intersection of the halfspaces at unit offset along each atom direction.
pub fn z_body(measure: &SphericalMeasure) -> Result<Polytope> {
    let n = measure.dim();
    let report = measure.validate(DEFAULT_MEASURE_TOL);
    if !report.passed() {
        return Err(Error::InvalidMeasure(format!(
            "isotropy residual {:.3e}, barycentre residual {:.3e}, mass residual {:.3e}",
            report.residual_iso, report.residual_centred, report.residual_mass
        )));
    }
    let hs: Vec<Halfspace> = measure
        .support()
        .into_iter()
        .map(|normal| Halfspace {
            normal,
            offset: 1.0,
        })
        .collect();
    Polytope::from_halfspaces(n, &hs, DEFAULT_TOL)
}

/// Log dilation ratio of the tightest simplex sandwich at a fixed rotation.
/// The inner scale is the largest s with s*T inside phi(K); the outer scale
/// is the smallest multiple of T containing phi(K).
fn log_dilation(
    phi: &DMatrix<f64>,
    body_vertices: &[DVector<f64>],
    body_halfspaces: &[Halfspace],
    simplex_contacts: &[DVector<f64>],
    simplex_vertices: &[DVector<f64>],
) -> f64 {
    let mut outer: f64 = 0.0;
    for v in body_vertices {
        let pv = phi * v;
        let g = simplex_contacts
            .iter()
            .map(|w| w.dot(&pv))
            .fold(f64::NEG_INFINITY, f64::max);
        outer = outer.max(g);
    }
    let mut inner_gauge: f64 = 0.0;
    for p in simplex_vertices {
        let q = phi.tr_mul(p);
        let g = body_halfspaces
            .iter()
            .map(|h| h.normal.dot(&q) / h.offset)
            .fold(f64::NEG_INFINITY, f64::max);
        inner_gauge = inner_gauge.max(g);
    }
    (outer * inner_gauge).ln()
}

/// Multi-start Nelder-Mead over the rotation chart; deterministic seed and
/// start grid, reduced by minimum value with index tie-break.
fn best_rotation<F>(n: usize, objective: &F) -> (Vec<f64>, f64)
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let m = linalg::rotation_chart_dim(n);
    let mut starts: Vec<Vec<f64>> = vec![vec![0.0; m]];
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED_0001);
    for _ in 1..ROTATION_STARTS {
        starts.push((0..m).map(|_| rng.random_range(-PI..PI)).collect());
    }
    let (value, _, x) = starts
        .par_iter()
        .enumerate()
        .map(|(idx, s)| {
            let run = opt::nelder_mead(|p| objective(p), s, 0.35, 600, 1e-12);
            (run.value, idx, run.x)
        })
        .min_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)))
        .expect("at least one start");
    let polish = opt::nelder_mead(|p| objective(p), &x, 0.02, 400, 1e-13);
    if polish.value < value {
        (polish.x, polish.value)
    } else {
        (x, value)
    }
}

/// Tightest sandwich of `body` between scaled copies of a rotated regular
/// simplex, minimized over rotations by multi-start local search. In the
/// plane an exhaustive scan over the fundamental rotation interval backs the
/// search and certifies the minimum.
pub fn simplex_distance(body: &Polytope) -> Result<SimplexFit> {
    let n = body.dim();
    let body_halfspaces = body.halfspaces();
    for h in &body_halfspaces {
        if h.offset <= body.tol() {
            return Err(Error::OriginOutside);
        }
    }
    let reference = Polytope::regular_simplex(n)?;
    let simplex_contacts = crate::geom::regular_simplex_contacts(n);
    let simplex_vertices = reference.vertices().to_vec();
    let body_vertices = body.vertices().to_vec();

    let objective = |params: &[f64]| -> f64 {
        let phi = linalg::rotation_from_chart(n, params).expect("chart length fixed");
        log_dilation(
            &phi,
            &body_vertices,
            &body_halfspaces,
            &simplex_contacts,
            &simplex_vertices,
        )
    };

    let (mut best_x, mut best_val) = best_rotation(n, &objective);
    let mut certified = false;
    if n == 2 {
        // The contact set of the reference simplex is invariant under the
        // rotation by 2*pi/3, so the scan covers one fundamental interval.
        let period = 2.0 * PI / 3.0;
        let steps = 21_000;
        let mut scan_best = (f64::INFINITY, 0.0);
        for i in 0..steps {
            let theta = period * i as f64 / steps as f64;
            let v = objective(&[theta]);
            if v < scan_best.0 {
                scan_best = (v, theta);
            }
        }
        let refine = opt::nelder_mead(|p| objective(p), &[scan_best.1], 2e-4, 200, 1e-14);
        if refine.value < best_val {
            best_val = refine.value;
            best_x = refine.x;
        }
        certified = true;
    }

    let phi = linalg::rotation_from_chart(n, &best_x)?;
    let lambda = best_val.exp().max(1.0);
    let mut inner_gauge: f64 = 0.0;
    for p in &simplex_vertices {
        let q = phi.tr_mul(p);
        let g = body_halfspaces
            .iter()
            .map(|h| h.normal.dot(&q) / h.offset)
            .fold(f64::NEG_INFINITY, f64::max);
        inner_gauge = inner_gauge.max(g);
    }
    let fitted = reference.affine_image(&AffineMap {
        linear: phi.transpose(),
        shift: DVector::zeros(n),
    })?;
    Ok(SimplexFit {
        simplex: fitted,
        rotation: phi,
        scale: 1.0 / inner_gauge,
        lambda,
        certified,
    })
}

/// Rotation of the reference contact configuration minimizing the spherical
/// deviation from the support of the measure; returns the rotated simplex
/// and the deviation attained. The deviation depends on the support alone,
/// so the weights are not gated.
pub fn nearest_circumscribed_simplex(measure: &SphericalMeasure) -> Result<(Polytope, f64)> {
    let n = measure.dim();
    let support = measure.support();
    let contacts = crate::geom::regular_simplex_contacts(n);
    let objective = |params: &[f64]| -> f64 {
        let phi = linalg::rotation_from_chart(n, params).expect("chart length fixed");
        let rotated: Vec<DVector<f64>> = contacts.iter().map(|w| &phi * w).collect();
        measures::spherical_hausdorff(&support, &rotated).unwrap_or(f64::INFINITY)
    };
    let (mut best_x, mut best_val) = best_rotation(n, &objective);
    if n == 2 {
        let period = 2.0 * PI / 3.0;
        let steps = 4_000;
        let mut scan_best = (f64::INFINITY, 0.0);
        for i in 0..steps {
            let theta = period * i as f64 / steps as f64;
            let v = objective(&[theta]);
            if v < scan_best.0 {
                scan_best = (v, theta);
            }
        }
        let refine = opt::nelder_mead(|p| objective(p), &[scan_best.1], 1e-3, 200, 1e-14);
        if refine.value < best_val {
            best_val = refine.value;
            best_x = refine.x;
        }
    }
    let phi = linalg::rotation_from_chart(n, &best_x)?;
    let simplex = Polytope::regular_simplex(n)?.affine_image(&AffineMap {
        linear: phi,
        shift: DVector::zeros(n),
    })?;
    Ok((simplex, best_val.max(0.0)))
}

/// Maximal squared subset determinant of a decomposition-of-identity frame,
/// with the total over all subsets for cross-checking.
#[derive(Debug, Clone)]
pub struct SubsetDeterminant {
    /// Indices of a maximizing n-subset.
    pub indices: Vec<usize>,
    /// Squared determinant of the maximizing subset.
    pub det_sq: f64,
    /// Sum of squared determinants over all n-subsets; equals the
    /// determinant of the frame moment matrix.
    pub cauchy_binet: f64,
}

/// Exhaustive maximal squared determinant over n-subsets of a frame with
/// sum of outer squares equal to the identity. The maximum is at least the
/// mean, so it is at least 1/binomial(k, n).
pub fn max_det_subset(vectors: &[DVector<f64>], tol: f64) -> Result<SubsetDeterminant> {
    let k = vectors.len();
    if k == 0 {
        return Err(Error::InvalidInput("empty direction family".into()));
    }
    let n = vectors[0].len();
    if !(2..=5).contains(&n) {
        return Err(Error::InvalidDimension(n));
    }
    if vectors.iter().any(|v| v.len() != n) {
        return Err(Error::InvalidInput("mixed dimensions in frame".into()));
    }
    if k > SUBSET_CAP {
        return Err(Error::CardinalityTooLarge { k, cap: SUBSET_CAP });
    }
    if k < n {
        return Err(Error::InsufficientData(format!(
            "{k} vectors cannot span dimension {n}"
        )));
    }
    let mut moment = DMatrix::zeros(n, n);
    for v in vectors {
        moment += v * v.transpose();
    }
    let deviation = linalg::identity_deviation(&moment);
    if deviation > tol {
        return Err(Error::InvalidFrame(format!(
            "identity residual {deviation:.3e} exceeds {tol:.1e}"
        )));
    }
    let mut best_indices = Vec::new();
    let mut best = f64::NEG_INFINITY;
    let mut total = 0.0;
    for combo in (0..k).combinations(n) {
        let cols: Vec<DVector<f64>> = combo.iter().map(|&i| vectors[i].clone()).collect();
        let det = DMatrix::from_columns(&cols).determinant();
        let det_sq = det * det;
        total += det_sq;
        if det_sq > best {
            best = det_sq;
            best_indices = combo;
        }
    }
    Ok(SubsetDeterminant {
        indices: best_indices,
        det_sq: best,
        cauchy_binet: total,
    })
}

/// Orthonormal basis tracking the leading vectors of a clustered frame:
/// every vector is either short or angle-close to one of the first n, and
/// the Gram-Schmidt basis of the first n stays within 3*sqrt(k)*eta of them.
pub fn near_orthonormal_frame(vectors: &[DVector<f64>], eta: f64) -> Result<Vec<DVector<f64>>> {
    let k = vectors.len();
    if k == 0 {
        return Err(Error::InvalidInput("empty direction family".into()));
    }
    let n = vectors[0].len();
    if !(2..=5).contains(&n) {
        return Err(Error::InvalidDimension(n));
    }
    if vectors.iter().any(|v| v.len() != n) {
        return Err(Error::InvalidInput("mixed dimensions in frame".into()));
    }
    if k < n {
        return Err(Error::InsufficientData(format!(
            "{k} vectors cannot span dimension {n}"
        )));
    }
    let eta_cap = 1.0 / (3.0 * (k as f64).sqrt());
    if eta <= 0.0 || eta >= eta_cap {
        return Err(Error::HypothesisViolated(format!(
            "eta {eta:.3e} outside (0, {eta_cap:.3e})"
        )));
    }
    let mut moment = DMatrix::zeros(n, n);
    for v in vectors {
        moment += v * v.transpose();
    }
    let deviation = linalg::identity_deviation(&moment);
    if deviation > FRAME_TOL {
        return Err(Error::InvalidFrame(format!(
            "identity residual {deviation:.3e} exceeds {FRAME_TOL:.1e}"
        )));
    }
    for (i, v) in vectors.iter().enumerate() {
        let norm = v.norm();
        if norm == 0.0 {
            return Err(Error::HypothesisViolated(format!("vector {i} is zero")));
        }
        if norm <= eta {
            continue;
        }
        let clustered = vectors
            .iter()
            .take(n)
            .any(|lead| linalg::angle(v, lead) <= eta);
        if !clustered {
            return Err(Error::HypothesisViolated(format!(
                "vector {i} is neither shorter than eta nor within eta of a leading vector"
            )));
        }
    }
    let unit: Vec<DVector<f64>> = vectors.iter().take(n).map(|v| v / v.norm()).collect();
    let basis = linalg::gram_schmidt(&unit, n, 1e-10)?;
    let cap = 3.0 * (k as f64).sqrt() * eta;
    for i in 0..n {
        let drift = linalg::angle(&vectors[i], &basis[i]);
        if drift >= cap + 1e-12 {
            return Err(Error::HypothesisViolated(format!(
                "orthogonalized axis {i} drifted {drift:.3e}, beyond {cap:.3e}"
            )));
        }
    }
    Ok(basis)
}

/// Small rotation of an orthonormal basis equalizing its inner products with
/// an axis direction at exactly 1/sqrt(n). The basis sum has norm sqrt(n)
/// and lies within n*tau of the axis, so the rotation moves each basis
/// vector by less than n*tau.
pub fn align_frame_to_axis(
    basis: &[DVector<f64>],
    axis: &DVector<f64>,
    tau: f64,
) -> Result<Vec<DVector<f64>>> {
    let n = axis.len();
    if !(2..=5).contains(&n) {
        return Err(Error::InvalidDimension(n));
    }
    if basis.len() != n || basis.iter().any(|w| w.len() != n) {
        return Err(Error::InvalidFrame(
            "alignment needs a full orthonormal basis".into(),
        ));
    }
    let mut gram = DMatrix::zeros(n, n);
    for (i, a) in basis.iter().enumerate() {
        for (j, b) in basis.iter().enumerate() {
            gram[(i, j)] = a.dot(b);
        }
    }
    if linalg::identity_deviation(&gram) > 1e-8 {
        return Err(Error::InvalidFrame("basis is not orthonormal".into()));
    }
    let norm = axis.norm();
    if norm == 0.0 {
        return Err(Error::DegenerateInput("zero axis direction".into()));
    }
    let e = axis / norm;
    let tau_cap = 1.0 / (2.0 * n as f64);
    if tau <= 0.0 || tau >= tau_cap {
        return Err(Error::HypothesisViolated(format!(
            "tau {tau:.3e} outside (0, {tau_cap:.3e})"
        )));
    }
    let target = 1.0 / (n as f64).sqrt();
    for (i, w) in basis.iter().enumerate() {
        let d = e.dot(w);
        if d <= target - tau || d >= target + tau {
            return Err(Error::HypothesisViolated(format!(
                "inner product {d:.6} of basis vector {i} outside ({:.6}, {:.6})",
                target - tau,
                target + tau
            )));
        }
    }
    let mut sum = DVector::zeros(n);
    for w in basis {
        sum += w;
    }
    let phi = linalg::rotation_between(&sum, &e)?;
    let rotated: Vec<DVector<f64>> = basis.iter().map(|w| &phi * w).collect();
    let cap = n as f64 * tau;
    for (i, (w, aligned)) in basis.iter().zip(&rotated).enumerate() {
        let d = e.dot(aligned);
        if (d - target).abs() > 1e-10 {
            return Err(Error::NormalizationFailed(format!(
                "aligned inner product {d:.12} misses {target:.12} at index {i}"
            )));
        }
        let moved = linalg::angle(w, aligned);
        if moved >= cap + 1e-12 {
            return Err(Error::HypothesisViolated(format!(
                "basis vector {i} moved {moved:.3e}, beyond {cap:.3e}"
            )));
        }
    }
    Ok(rotated)
}

/// Contact directions of a polytope all of whose facets touch the unit ball.
fn circumscribed_contacts(body: &Polytope) -> Result<Vec<DVector<f64>>> {
    let mut contacts = Vec::new();
    for h in body.halfspaces() {
        if (h.offset - 1.0).abs() > 1e-7 {
            return Err(Error::HypothesisViolated(format!(
                "facet offset {:.9} does not touch the unit sphere",
                h.offset
            )));
        }
        contacts.push(h.normal);
    }
    Ok(contacts)
}

/// Containment margins of a circumscribed body between contracted and
/// dilated copies of a circumscribed regular simplex.
#[derive(Debug, Clone)]
pub struct SandwichReport {
    pub dim: usize,
    pub eta: f64,
    /// Contraction factor of the inner simplex copy.
    pub inner_scale: f64,
    /// Dilation factor of the outer simplex copy.
    pub outer_scale: f64,
    /// Largest halfspace excess of an inner-copy vertex over the body;
    /// nonpositive values certify containment.
    pub max_inner_violation: f64,
    /// Largest excess of a body vertex over the outer copy's facets.
    pub max_outer_violation: f64,
    /// Bound on the log dilation ratio of the body implied by the fit.
    pub distance_bound: f64,
}

impl SandwichReport {
    pub fn passed(&self) -> bool {
        self.max_inner_violation <= 1e-9 && self.max_outer_violation <= 1e-9
    }
}

/// Certifies that a circumscribed body whose contacts all lie within eta of
/// the contacts of a circumscribed regular simplex is sandwiched between the
/// (1 - 3 n eta) and (1 + 3 n eta) copies of that simplex.
pub fn sandwich_check(body: &Polytope, simplex: &Polytope, eta: f64) -> Result<SandwichReport> {
    let n = body.dim();
    if simplex.dim() != n {
        return Err(Error::InvalidInput("dimension mismatch".into()));
    }
    let eta_cap = 1.0 / (9.0 * n as f64);
    if eta <= 0.0 || eta >= eta_cap {
        return Err(Error::HypothesisViolated(format!(
            "eta {eta:.3e} outside (0, {eta_cap:.3e})"
        )));
    }
    let simplex_contacts = measures::circumscribed_simplex_contacts(simplex)?;
    let body_contacts = circumscribed_contacts(body)?;
    for (i, u) in body_contacts.iter().enumerate() {
        let close = simplex_contacts
            .iter()
            .any(|w| linalg::angle(u, w) <= eta + 1e-12);
        if !close {
            return Err(Error::HypothesisViolated(format!(
                "contact {i} is farther than eta from every simplex contact"
            )));
        }
    }
    let inner_scale = 1.0 - 3.0 * n as f64 * eta;
    let outer_scale = 1.0 + 3.0 * n as f64 * eta;
    let body_halfspaces = body.halfspaces();
    let mut max_inner_violation = f64::NEG_INFINITY;
    for v in simplex.vertices() {
        let scaled = v * inner_scale;
        for h in &body_halfspaces {
            max_inner_violation = max_inner_violation.max(h.normal.dot(&scaled) - h.offset);
        }
    }
    let mut max_outer_violation = f64::NEG_INFINITY;
    for x in body.vertices() {
        for w in &simplex_contacts {
            max_outer_violation = max_outer_violation.max(w.dot(x) - outer_scale);
        }
    }
    Ok(SandwichReport {
        dim: n,
        eta,
        inner_scale,
        outer_scale,
        max_inner_violation,
        max_outer_violation,
        distance_bound: 9.0 * n as f64 * eta,
    })
}

/// Threshold separating matched contacts from a stray one, relative to eta.
fn stray_contact_factor(n: usize) -> f64 {
    9.0 * 2f64.powi(n as i32 + 2) * (n as f64).powi(2 * n as i32 + 2)
}

/// Volume ratio of a circumscribed body with one stray contact against the
/// matched circumscribed regular simplex. The first n+1 entries of the
/// contact list must match the simplex contacts one-to-one within eta, and
/// the list ends with the stray direction; the ratio is certified to fall
/// below 1 - min_angle / (2^{n+2} n^{2n}).
pub fn far_vertex_deficit(
    body: &Polytope,
    simplex: &Polytope,
    contacts: &[DVector<f64>],
    eta: f64,
) -> Result<f64> {
    let n = body.dim();
    if simplex.dim() != n {
        return Err(Error::InvalidInput("dimension mismatch".into()));
    }
    let gamma = stray_contact_factor(n);
    if eta <= 0.0 || eta >= 1.0 / gamma {
        return Err(Error::HypothesisViolated(format!(
            "eta {eta:.3e} outside (0, {:.3e})",
            1.0 / gamma
        )));
    }
    let simplex_contacts = measures::circumscribed_simplex_contacts(simplex)?;
    if contacts.len() < n + 2 {
        return Err(Error::HypothesisViolated(format!(
            "need {} matched contacts plus a stray one, got {}",
            n + 1,
            contacts.len()
        )));
    }
    let body_contacts = circumscribed_contacts(body)?;
    if contacts.len() != body_contacts.len() {
        return Err(Error::InvalidInput(format!(
            "contact list covers {} directions but the body has {} facets",
            contacts.len(),
            body_contacts.len()
        )));
    }
    for (i, u) in contacts.iter().enumerate() {
        let matched = body_contacts.iter().any(|c| linalg::angle(c, u) <= 1e-7);
        if !matched {
            return Err(Error::InvalidInput(format!(
                "contact {i} does not match a facet of the body"
            )));
        }
    }
    let mut claimed = vec![false; simplex_contacts.len()];
    for (i, u) in contacts.iter().take(n + 1).enumerate() {
        let mut nearest = (f64::INFINITY, usize::MAX);
        for (j, w) in simplex_contacts.iter().enumerate() {
            if claimed[j] {
                continue;
            }
            let a = linalg::angle(u, w);
            if a < nearest.0 {
                nearest = (a, j);
            }
        }
        if nearest.0 > eta + 1e-12 {
            return Err(Error::HypothesisViolated(format!(
                "contact {i} is {:.3e} from its simplex contact, above eta {eta:.3e}",
                nearest.0
            )));
        }
        claimed[nearest.1] = true;
    }
    let stray = contacts.last().expect("nonempty contact list");
    let min_angle = simplex_contacts
        .iter()
        .map(|w| linalg::angle(stray, w))
        .fold(f64::INFINITY, f64::min);
    if min_angle < gamma * eta {
        return Err(Error::HypothesisViolated(format!(
            "stray contact is {min_angle:.3e} from the simplex contacts, below {:.3e}",
            gamma * eta
        )));
    }
    let ratio = body.volume() / simplex.volume();
    let bound = 1.0 - min_angle / (2f64.powi(n as i32 + 2) * (n as f64).powi(2 * n as i32));
    if ratio > bound + 1e-9 {
        return Err(Error::HypothesisViolated(format!(
            "volume ratio {ratio:.9} exceeds the certified bound {bound:.9}"
        )));
    }
    Ok(ratio)
}
