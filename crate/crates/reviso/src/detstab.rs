//! Determinant bounds for decomposition-of-identity frames: the weighted
//! determinant inequality, its strengthening by a subset-variance factor
//! with a full certificate, the arithmetic-geometric stability ratio, and
//! the two-point quadratic bound feeding the variance factor.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg;
use crate::zbody::SUBSET_CAP;

/// One n-subset of the frame: its squared determinant (the subset's weight
/// in the determinant expansion) and the product of its t values.
#[derive(Debug, Clone)]
pub struct SubsetTerm {
    pub indices: Vec<usize>,
    pub det_sq: f64,
    pub t_product: f64,
}

/// Certificate for the strengthened determinant inequality: the determinant
/// equals the subset expansion t0^2 and dominates theta_star times the
/// weighted product baseline.
#[derive(Debug, Clone)]
pub struct ThetaCertificate {
    /// Variance strengthening factor; always at least 1, and 1 exactly when
    /// every subset with positive weight has the same t product.
    pub theta_star: f64,
    /// Root of the subset expansion: t0^2 = sum of det_sq * t_product.
    pub t0: f64,
    /// Determinant of the weighted moment matrix.
    pub lhs: f64,
    /// Product of t_i raised to the squared vector norms.
    pub rhs_base: f64,
    pub subset_terms: Vec<SubsetTerm>,
}

/// Shared gate: uniform dimension (2..=6, since lifted frames live one
/// dimension up), identity frame residual within tol.
fn frame_gate(vectors: &[DVector<f64>], tol: f64) -> Result<usize> {
    if vectors.is_empty() {
        return Err(Error::InvalidInput("empty direction family".into()));
    }
    let n = vectors[0].len();
    if !(2..=6).contains(&n) {
        return Err(Error::InvalidDimension(n));
    }
    if vectors.iter().any(|v| v.len() != n) {
        return Err(Error::InvalidInput("mixed dimensions in frame".into()));
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
    Ok(n)
}

fn positive_gate(ts: &[f64]) -> Result<()> {
    if let Some(t) = ts.iter().find(|t| !(**t > 0.0) || !t.is_finite()) {
        return Err(Error::InvalidInput(format!("nonpositive weight {t}")));
    }
    Ok(())
}

/// Weighted determinant inequality: the determinant of the weighted moment
/// matrix dominates the product of the weights raised to the squared norms.
/// Returns (determinant, product baseline).
pub fn ball_barthe(vectors: &[DVector<f64>], ts: &[f64], tol: f64) -> Result<(f64, f64)> {
    let n = frame_gate(vectors, tol)?;
    if ts.len() != vectors.len() {
        return Err(Error::InvalidInput(
            "weight list does not match the frame".into(),
        ));
    }
    positive_gate(ts)?;
    let mut weighted = DMatrix::zeros(n, n);
    let mut log_rhs = 0.0;
    for (v, &t) in vectors.iter().zip(ts) {
        weighted += v * v.transpose() * t;
        log_rhs += v.norm_squared() * t.ln();
    }
    let lhs = weighted.determinant();
    let rhs = log_rhs.exp();
    if lhs < rhs - tol {
        return Err(Error::HypothesisViolated(format!(
            "determinant {lhs:.12e} fell below the product baseline {rhs:.12e}"
        )));
    }
    Ok((lhs, rhs))
}

/// Strengthened determinant inequality with an exhaustive subset
/// certificate: enumerates every n-subset, forms the variance factor
/// theta_star over the subset probability measure, and checks the
/// expansion, weight, and domination identities.
pub fn theta_star(vectors: &[DVector<f64>], ts: &[f64], tol: f64) -> Result<ThetaCertificate> {
    let n = frame_gate(vectors, tol)?;
    let k = vectors.len();
    if ts.len() != k {
        return Err(Error::InvalidInput(
            "weight list does not match the frame".into(),
        ));
    }
    positive_gate(ts)?;
    if k <= n {
        return Err(Error::InsufficientData(format!(
            "need more than {n} vectors for a subset variance, got {k}"
        )));
    }
    if k > SUBSET_CAP {
        return Err(Error::CardinalityTooLarge { k, cap: SUBSET_CAP });
    }

    let combos: Vec<Vec<usize>> = (0..k).combinations(n).collect();
    let subset_terms: Vec<SubsetTerm> = combos
        .into_par_iter()
        .map(|indices| {
            let cols: Vec<DVector<f64>> = indices.iter().map(|&i| vectors[i].clone()).collect();
            let det = DMatrix::from_columns(&cols).determinant();
            let t_product = indices.iter().map(|&i| ts[i].ln()).sum::<f64>().exp();
            SubsetTerm {
                indices,
                det_sq: det * det,
                t_product,
            }
        })
        .collect();

    let total_weight: f64 = subset_terms.iter().map(|s| s.det_sq).sum();
    if (total_weight - 1.0).abs() > 1e-8 {
        return Err(Error::InvalidFrame(format!(
            "subset weights sum to {total_weight:.12}, not 1"
        )));
    }
    let expansion: f64 = subset_terms.iter().map(|s| s.det_sq * s.t_product).sum();
    let t0 = expansion.sqrt();
    let theta = 1.0
        + 0.5
            * subset_terms
                .iter()
                .map(|s| {
                    let r = s.t_product.sqrt() / t0 - 1.0;
                    s.det_sq * r * r
                })
                .sum::<f64>();

    let mut weighted = DMatrix::zeros(n, n);
    let mut log_rhs = 0.0;
    for (v, &t) in vectors.iter().zip(ts) {
        weighted += v * v.transpose() * t;
        log_rhs += v.norm_squared() * t.ln();
    }
    let lhs = weighted.determinant();
    let rhs_base = log_rhs.exp();

    let scale = lhs.abs().max(1.0);
    if (lhs - expansion).abs() > 1e-9 * scale {
        return Err(Error::HypothesisViolated(format!(
            "determinant {lhs:.12e} does not match its subset expansion {expansion:.12e}"
        )));
    }
    // Each atom's squared norm equals the total weight of subsets using it.
    for (i, v) in vectors.iter().enumerate() {
        let used: f64 = subset_terms
            .iter()
            .filter(|s| s.indices.contains(&i))
            .map(|s| s.det_sq)
            .sum();
        if (used - v.norm_squared()).abs() > 1e-9 {
            return Err(Error::HypothesisViolated(format!(
                "subset weight {used:.12} at atom {i} misses the squared norm {:.12}",
                v.norm_squared()
            )));
        }
    }
    if theta < 1.0 {
        return Err(Error::HypothesisViolated(format!(
            "variance factor {theta:.12} below 1"
        )));
    }
    if lhs < theta * rhs_base - tol {
        return Err(Error::HypothesisViolated(format!(
            "determinant {lhs:.12e} fell below the strengthened baseline {:.12e}",
            theta * rhs_base
        )));
    }
    Ok(ThetaCertificate {
        theta_star: theta,
        t0,
        lhs,
        rhs_base,
        subset_terms,
    })
}

/// Ratio of the weighted arithmetic mean to the weighted geometric mean,
/// together with its variance lower bound. Returns (ratio, bound).
pub fn amgm_stability(values: &[f64], weights: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() || values.len() != weights.len() {
        return Err(Error::InvalidInput(
            "values and weights must be nonempty and match".into(),
        ));
    }
    if let Some(f) = values.iter().find(|f| !(**f > 0.0) || !f.is_finite()) {
        return Err(Error::InvalidInput(format!("nonpositive value {f}")));
    }
    if weights.iter().any(|w| *w < 0.0) {
        return Err(Error::InvalidInput("negative weight".into()));
    }
    let mass: f64 = weights.iter().sum();
    if (mass - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidInput(format!(
            "weights sum to {mass:.15}, not a probability vector"
        )));
    }
    let mean: f64 = values.iter().zip(weights).map(|(f, w)| f * w).sum();
    let log_geo: f64 = values.iter().zip(weights).map(|(f, w)| f.ln() * w).sum();
    let ratio = mean / log_geo.exp();
    let root = mean.sqrt();
    let bound = 1.0
        + 0.5
            * values
                .iter()
                .zip(weights)
                .map(|(f, w)| {
                    let r = f.sqrt() / root - 1.0;
                    w * r * r
                })
                .sum::<f64>();
    if ratio < bound - 1e-12 {
        return Err(Error::HypothesisViolated(format!(
            "mean ratio {ratio:.12} fell below its variance bound {bound:.12}"
        )));
    }
    Ok((ratio, bound))
}

/// Two-point quadratic bound: for positive a, b, x the deviation
/// (xa-1)^2 + (xb-1)^2 is at least (a^2-b^2)^2 / (2 (a^2+b^2)^2), with
/// minimum (a-b)^2/(a^2+b^2) attained at x = (a+b)/(a^2+b^2).
/// Returns (deviation, bound).
pub fn xab_bound(a: f64, b: f64, x: f64) -> Result<(f64, f64)> {
    if !(a > 0.0) || !(b > 0.0) || !(x > 0.0) {
        return Err(Error::InvalidInput(format!(
            "inputs must be positive, got a={a}, b={b}, x={x}"
        )));
    }
    let lhs = (x * a - 1.0).powi(2) + (x * b - 1.0).powi(2);
    let s = a * a + b * b;
    let rhs = (a * a - b * b).powi(2) / (2.0 * s * s);
    if lhs < rhs - 1e-12 {
        return Err(Error::HypothesisViolated(format!(
            "deviation {lhs:.12e} fell below its bound {rhs:.12e}"
        )));
    }
    Ok((lhs, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::regular_simplex_contacts;
    use crate::measures::random_isotropic;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn simplex_frame() -> Vec<DVector<f64>> {
        regular_simplex_contacts(2)
            .into_iter()
            .map(|u| u * (2f64 / 3.0).sqrt())
            .collect()
    }

    fn axis_frame() -> Vec<DVector<f64>> {
        vec![
            DVector::from_vec(vec![1.0, 0.0]) / 2f64.sqrt(),
            DVector::from_vec(vec![-1.0, 0.0]) / 2f64.sqrt(),
            DVector::from_vec(vec![0.0, 1.0]) / 2f64.sqrt(),
            DVector::from_vec(vec![0.0, -1.0]) / 2f64.sqrt(),
        ]
    }

    #[test]
    fn determinant_dominates_the_product_baseline() {
        let frame = simplex_frame();
        let (lhs, rhs) = ball_barthe(&frame, &[1.0, 1.0, 1.0], 1e-9).unwrap();
        assert_relative_eq!(lhs, 1.0, max_relative = 1e-12);
        assert_relative_eq!(rhs, 1.0, max_relative = 1e-12);

        let basis = vec![
            DVector::from_vec(vec![1.0, 0.0]),
            DVector::from_vec(vec![0.0, 1.0]),
        ];
        let (lhs, rhs) = ball_barthe(&basis, &[2.0, 5.0], 1e-9).unwrap();
        assert_relative_eq!(lhs, 10.0, max_relative = 1e-12);
        assert_relative_eq!(rhs, 10.0, max_relative = 1e-12);

        // Contact order of the planar simplex puts the vertical atom first.
        let (lhs, rhs) = ball_barthe(&frame, &[1.0, 2.0, 3.0], 1e-9).unwrap();
        assert_relative_eq!(lhs, 11.0 / 3.0, max_relative = 1e-12);
        assert_relative_eq!(rhs, 6f64.powf(2.0 / 3.0), max_relative = 1e-12);
        assert!(lhs >= rhs);

        let skew = vec![
            DVector::from_vec(vec![1.0, 0.0]),
            DVector::from_vec(vec![1.0, 0.5]),
        ];
        assert!(matches!(
            ball_barthe(&skew, &[1.0, 1.0], 1e-9),
            Err(Error::InvalidFrame(_))
        ));
        assert!(matches!(
            ball_barthe(&simplex_frame(), &[1.0, -1.0, 1.0], 1e-9),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn variance_factor_certificate_on_the_simplex_frame() {
        let frame = simplex_frame();
        let cert = theta_star(&frame, &[2.5, 2.5, 2.5], 1e-9).unwrap();
        assert_relative_eq!(cert.theta_star, 1.0, max_relative = 1e-12);
        assert_relative_eq!(cert.lhs, 2.5 * 2.5, max_relative = 1e-12);
        assert_relative_eq!(cert.rhs_base, 2.5 * 2.5, max_relative = 1e-12);

        let cert = theta_star(&frame, &[4.0, 1.0, 1.0], 1e-9).unwrap();
        // Subset weights are 1/3 each; the t products are (4, 4, 1).
        let t0 = 3f64.sqrt();
        let expected = 1.0
            + (2.0 * (2.0 / t0 - 1.0).powi(2) + (1.0 / t0 - 1.0).powi(2)) / 6.0;
        assert_relative_eq!(cert.theta_star, expected, max_relative = 1e-12);
        assert_relative_eq!(cert.t0, t0, max_relative = 1e-12);
        assert_relative_eq!(cert.lhs, 3.0, max_relative = 1e-12);
        assert_relative_eq!(cert.rhs_base, 4f64.powf(2.0 / 3.0), max_relative = 1e-12);
        assert!(cert.lhs >= cert.theta_star * cert.rhs_base - 1e-12);
        assert_eq!(cert.subset_terms.len(), 3);

        let basis = vec![
            DVector::from_vec(vec![1.0, 0.0]),
            DVector::from_vec(vec![0.0, 1.0]),
        ];
        assert!(matches!(
            theta_star(&basis, &[1.0, 2.0], 1e-9),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn subset_weights_match_squared_norms() {
        let cert = theta_star(&axis_frame(), &[2.0, 2.0, 1.0, 1.0], 1e-9).unwrap();
        for i in 0..4 {
            let used: f64 = cert
                .subset_terms
                .iter()
                .filter(|s| s.indices.contains(&i))
                .map(|s| s.det_sq)
                .sum();
            assert_relative_eq!(used, 0.5, max_relative = 1e-12);
        }
        assert_eq!(cert.subset_terms.len(), 6);
    }

    #[test]
    fn collinear_pair_keeps_the_factor_at_one() {
        // Only subsets with positive weight constrain the factor: the two
        // collinear atoms never span, so unequal products there are free.
        let frame = vec![
            DVector::from_vec(vec![1.0, 0.0]),
            DVector::from_vec(vec![0.0, 0.5f64.sqrt()]),
            DVector::from_vec(vec![0.0, 0.5f64.sqrt()]),
        ];
        let cert = theta_star(&frame, &[1.0, 2.0, 2.0], 1e-9).unwrap();
        assert_relative_eq!(cert.theta_star, 1.0, max_relative = 1e-12);
        assert_relative_eq!(cert.lhs, 2.0, max_relative = 1e-12);
        assert_relative_eq!(cert.rhs_base, 2.0, max_relative = 1e-12);
    }

    #[test]
    fn mean_ratio_examples() {
        let (ratio, bound) = amgm_stability(&[3.7, 3.7, 3.7], &[0.2, 0.3, 0.5]).unwrap();
        assert_relative_eq!(ratio, 1.0, max_relative = 1e-12);
        assert_relative_eq!(bound, 1.0, max_relative = 1e-12);

        let (ratio, bound) = amgm_stability(&[1.0, 4.0], &[0.5, 0.5]).unwrap();
        assert_relative_eq!(ratio, 1.25, max_relative = 1e-12);
        let expected =
            1.0 + 0.5 * (0.5 * (0.4f64.sqrt() - 1.0).powi(2) + 0.5 * (1.6f64.sqrt() - 1.0).powi(2));
        assert_relative_eq!(bound, expected, max_relative = 1e-12);
        assert!(ratio >= bound);

        let (ratio, bound) =
            amgm_stability(&[1.0, 1.0, 9.0], &[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]).unwrap();
        assert!(ratio >= bound);

        assert!(matches!(
            amgm_stability(&[1.0, 0.0], &[0.5, 0.5]),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            amgm_stability(&[1.0, 2.0], &[0.5, 0.6]),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn two_point_bound_examples() {
        let (lhs, rhs) = xab_bound(1.7, 1.7, 0.4).unwrap();
        assert_eq!(rhs, 0.0);
        assert!(lhs >= 0.0);

        let (lhs, rhs) = xab_bound(2.0, 1.0, 0.6).unwrap();
        assert_relative_eq!(lhs, 0.2, max_relative = 1e-12);
        assert_relative_eq!(rhs, 0.18, max_relative = 1e-12);

        let (a, b) = (1.0, 3.0);
        let mut sweep_min = f64::INFINITY;
        for i in 1..=2000 {
            let x = 2.0 * i as f64 / 2000.0;
            sweep_min = sweep_min.min(xab_bound(a, b, x).unwrap().0);
        }
        let min_value = (a - b).powi(2) / (a * a + b * b);
        assert!(sweep_min >= min_value - 1e-6);
        let minimizer = (a + b) / (a * a + b * b);
        let (at_min, rhs) = xab_bound(a, b, minimizer).unwrap();
        assert_relative_eq!(at_min, min_value, max_relative = 1e-12);
        assert_relative_eq!(rhs, 0.32, max_relative = 1e-12);
        assert!(at_min >= rhs);

        assert!(matches!(xab_bound(1.0, 1.0, 0.0), Err(Error::InvalidInput(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn certificates_chain_down_to_the_plain_inequality(
            n in 2usize..=4,
            extra in 1usize..=4,
            seed in 0u64..10_000,
            t_seed in 0u64..10_000,
        ) {
            let k = n + extra;
            let mu = random_isotropic(n, k, seed).unwrap();
            let frame: Vec<DVector<f64>> = mu
                .atoms()
                .iter()
                .map(|(u, c)| u * c.sqrt())
                .collect();
            let mut rng = ChaCha8Rng::seed_from_u64(t_seed);
            let ts: Vec<f64> = (0..k).map(|_| rng.random_range(0.2f64..5.0)).collect();

            let cert = theta_star(&frame, &ts, 1e-6).unwrap();
            let (lhs, rhs) = ball_barthe(&frame, &ts, 1e-6).unwrap();
            prop_assert!((cert.lhs - lhs).abs() <= 1e-12 * lhs.abs().max(1.0));
            prop_assert!((cert.rhs_base - rhs).abs() <= 1e-12 * rhs.abs().max(1.0));

            let total: f64 = cert.subset_terms.iter().map(|s| s.det_sq).sum();
            prop_assert!((total - 1.0).abs() <= 1e-10);
            prop_assert!((cert.t0 * cert.t0 - cert.lhs).abs() <= 1e-10 * cert.lhs.max(1.0));
            prop_assert!(cert.theta_star >= 1.0);
            prop_assert!(cert.lhs >= cert.theta_star * cert.rhs_base - 1e-10);
            prop_assert!(cert.lhs >= cert.rhs_base - 1e-10);

            let constant = theta_star(&frame, &vec![1.9; k], 1e-6).unwrap();
            prop_assert!(constant.theta_star - 1.0 <= 1e-12);
        }
    }
}
