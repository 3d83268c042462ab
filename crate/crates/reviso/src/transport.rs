//! Transport map between the exponential and Gaussian densities: pointwise
//! evaluation with derivatives, derivative-bound reports, two-sided Gaussian
//! tail inequalities, the lifted cone map with its Jacobian, the pointwise
//! product chain, and seeded Monte Carlo integrals over the lifted cone.

use std::f64::consts::PI;

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::measures::{lift, LiftedSystem, SphericalMeasure};
use crate::special;
use crate::zbody::{z_body, SUBSET_CAP};
use crate::{factorial, quad};

/// Transport-map value at t: position phi with phi_prime = sqrt(pi)
/// exp(phi^2 - t) and phi_second = phi_prime (2 phi phi_prime - 1).
#[derive(Debug, Clone, Copy)]
pub struct PhiValue {
    pub t: f64,
    pub phi: f64,
    pub phi_prime: f64,
    pub phi_second: f64,
}

/// Point strictly inside the lifted cone, with its importance weight.
#[derive(Debug, Clone)]
pub struct ConeSample {
    pub y: DVector<f64>,
    pub weight: f64,
}

impl ConeSample {
    /// Validates strict cone membership against the lifted directions.
    pub fn new(system: &LiftedSystem, y: DVector<f64>, weight: f64) -> Result<Self> {
        cone_margins(system, &y)?;
        Ok(Self { y, weight })
    }
}

fn cone_margins(system: &LiftedSystem, y: &DVector<f64>) -> Result<Vec<f64>> {
    if y.len() != system.dim {
        return Err(Error::InvalidInput(format!(
            "point dimension {} does not match the lifted system {}",
            y.len(),
            system.dim
        )));
    }
    let mut margins = Vec::with_capacity(system.vectors.len());
    for (index, u) in system.vectors.iter().enumerate() {
        let value = u.dot(y);
        if value <= 0.0 {
            return Err(Error::OutOfCone { index, value });
        }
        margins.push(value);
    }
    Ok(margins)
}

/// Slope of the log Gaussian tail, stable for all x via the scaled
/// complementary error function.
fn log_tail_slope(x: f64) -> f64 {
    if x >= 0.46875 {
        -2.0 / (PI.sqrt() * special::erfcx(x))
    } else {
        -(-x * x).exp() / (PI.sqrt() * special::gauss_tail(x))
    }
}

/// Solves tail(phi) = e^{-t} for the transport map by safeguarded Newton in
/// log space, then fills in the closed-form derivatives.
pub fn phi_eval(t: f64) -> Result<PhiValue> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::OutOfDomain(format!(
            "transport map needs t > 0, got {t}"
        )));
    }
    let objective = |x: f64| special::ln_gauss_tail(x) + t;
    let mut lo = -10.0;
    let mut hi = t.sqrt() + 1.0;
    if objective(lo) <= 0.0 {
        lo = -30.0;
    }
    let mut x = if t >= 4.0 {
        (t - (2.0 * (PI * t).sqrt()).ln()).max(2.0).sqrt()
    } else {
        0.0
    };
    x = x.clamp(lo + 1e-8, hi - 1e-8);
    let mut iters = 0usize;
    for _ in 0..200 {
        iters += 1;
        let value = objective(x);
        if value > 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        if value.abs() <= 1e-15 * (1.0 + t) {
            break;
        }
        let next = x - value / log_tail_slope(x);
        x = if next > lo && next < hi {
            next
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= f64::EPSILON * (1.0 + x.abs()) {
            break;
        }
    }
    let residual = (special::gauss_tail(x) - (-t).exp()).abs();
    if !(residual <= 1e-12) {
        return Err(Error::NoConvergence {
            op: "phi_eval",
            iters,
            residual,
        });
    }
    let phi_prime = PI.sqrt() * (x * x - t).exp();
    Ok(PhiValue {
        t,
        phi: x,
        phi_prime,
        phi_second: phi_prime * (2.0 * x * phi_prime - 1.0),
    })
}

/// Derivative bounds at one grid point t >= 4: the position window
/// sqrt(2) < phi < sqrt(t), the slope window 1/(3 sqrt(t)) < phi' < 1, the
/// curvature bound phi'' < -1/(12 t^{3/2}), and the sharper slope chain
/// 1/(3 phi) < phi' < (1 - 1/(4 phi^2))/(2 phi).
#[derive(Debug, Clone)]
pub struct PhiBoundsEntry {
    pub value: PhiValue,
    pub phi_window: bool,
    pub prime_window: bool,
    pub second_bound: bool,
    pub prime_chain: bool,
}

impl PhiBoundsEntry {
    pub fn passed(&self) -> bool {
        self.phi_window && self.prime_window && self.second_bound && self.prime_chain
    }
}

pub fn phi_bounds_check(grid: &[f64]) -> Result<Vec<PhiBoundsEntry>> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("empty grid".into()));
    }
    if let Some(t) = grid.iter().find(|t| !(**t >= 4.0)) {
        return Err(Error::OutOfDomain(format!(
            "derivative bounds hold for t >= 4, got {t}"
        )));
    }
    grid.iter()
        .map(|&t| {
            let value = phi_eval(t)?;
            let p = value.phi;
            Ok(PhiBoundsEntry {
                phi_window: 2f64.sqrt() < p && p < t.sqrt(),
                prime_window: 1.0 / (3.0 * t.sqrt()) < value.phi_prime && value.phi_prime < 1.0,
                second_bound: value.phi_second < -1.0 / (12.0 * t.powf(1.5)),
                prime_chain: 1.0 / (3.0 * p) < value.phi_prime
                    && value.phi_prime < (1.0 - 1.0 / (4.0 * p * p)) / (2.0 * p),
                value,
            })
        })
        .collect()
}

/// Two-sided Gaussian tail bounds at z, with the tail evaluated by
/// quadrature independently of the error-function engine.
#[derive(Debug, Clone, Copy)]
pub struct TailBounds {
    pub z: f64,
    pub tail: f64,
    pub lower: f64,
    pub upper: f64,
    pub improved_upper: f64,
}

impl TailBounds {
    pub fn passed(&self) -> bool {
        self.lower < self.tail && self.tail < self.improved_upper && self.improved_upper < self.upper
    }
}

pub fn gordon_mill_check(z: f64) -> Result<TailBounds> {
    if !(z > 0.0) || !z.is_finite() {
        return Err(Error::OutOfDomain(format!(
            "tail bounds need z > 0, got {z}"
        )));
    }
    let tail = quad::tanh_sinh(|s| (-s * s).exp(), z, z + 40.0) / PI.sqrt();
    let upper = (-z * z).exp() / (2.0 * PI.sqrt() * z);
    let zsq2 = 2.0 * z * z;
    Ok(TailBounds {
        z,
        tail,
        lower: upper * zsq2 / (zsq2 + 1.0),
        upper,
        improved_upper: upper * (zsq2 + 2.0) / (zsq2 + 3.0),
    })
}

/// Lifted cone map at a sample: the weighted transported image and its
/// Jacobian, a symmetric positive definite matrix.
pub fn theta_map(
    system: &LiftedSystem,
    sample: &ConeSample,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let margins = cone_margins(system, &sample.y)?;
    let d = system.dim;
    let mut image = DVector::zeros(d);
    let mut jacobian = DMatrix::zeros(d, d);
    for ((u, &c), &s) in system.vectors.iter().zip(&system.weights).zip(&margins) {
        let value = phi_eval(s)?;
        image += u * (c * value.phi);
        jacobian += u * u.transpose() * (c * value.phi_prime);
    }
    Ok((image, jacobian))
}

/// Pointwise chain at one cone sample: the image norm against the weighted
/// square sum, and the weighted slope product against the Jacobian
/// determinant damped by the subset variance factor.
#[derive(Debug, Clone)]
pub struct ChainReport {
    pub norm_sq: f64,
    pub weighted_sq: f64,
    pub theta: f64,
    pub prime_product: f64,
    pub jacobian_det: f64,
}

impl ChainReport {
    /// Both inequalities within relative tolerance tol.
    pub fn passed(&self, tol: f64) -> bool {
        let damped = self.theta * self.prime_product;
        self.norm_sq <= self.weighted_sq + tol * self.weighted_sq.abs().max(1.0)
            && damped <= self.jacobian_det + tol * self.jacobian_det.abs().max(damped).max(1.0)
    }
}

pub fn pointwise_chain(system: &LiftedSystem, sample: &ConeSample) -> Result<ChainReport> {
    let margins = cone_margins(system, &sample.y)?;
    let d = system.dim;
    let k = system.vectors.len();
    let mut image = DVector::zeros(d);
    let mut jacobian = DMatrix::zeros(d, d);
    let mut weighted_sq = 0.0;
    let mut log_product = 0.0;
    let mut primes = Vec::with_capacity(k);
    for ((u, &c), &s) in system.vectors.iter().zip(&system.weights).zip(&margins) {
        let value = phi_eval(s)?;
        image += u * (c * value.phi);
        jacobian += u * u.transpose() * (c * value.phi_prime);
        weighted_sq += c * value.phi * value.phi;
        log_product += c * value.phi_prime.ln();
        primes.push(value.phi_prime);
    }
    let theta = if k > d {
        let scaled: Vec<DVector<f64>> = system
            .vectors
            .iter()
            .zip(&system.weights)
            .map(|(u, &c)| u * c.sqrt())
            .collect();
        crate::detstab::theta_star(&scaled, &primes, 1e-6)?.theta_star
    } else {
        1.0
    };
    Ok(ChainReport {
        norm_sq: image.norm_squared(),
        weighted_sq,
        theta,
        prime_product: log_product.exp(),
        jacobian_det: jacobian.determinant(),
    })
}

/// Squared subset determinants of the scaled lifted directions, fixed once
/// per system; they form a probability vector over size-(n+1) subsets.
struct SubsetWeights {
    subsets: Vec<(Vec<usize>, f64)>,
}

impl SubsetWeights {
    fn new(system: &LiftedSystem) -> Result<Self> {
        let d = system.dim;
        let k = system.vectors.len();
        if k > SUBSET_CAP {
            return Err(Error::CardinalityTooLarge { k, cap: SUBSET_CAP });
        }
        let scaled: Vec<DVector<f64>> = system
            .vectors
            .iter()
            .zip(&system.weights)
            .map(|(u, &c)| u * c.sqrt())
            .collect();
        let subsets: Vec<(Vec<usize>, f64)> = (0..k)
            .combinations(d)
            .map(|indices| {
                let cols: Vec<DVector<f64>> =
                    indices.iter().map(|&i| scaled[i].clone()).collect();
                let det = DMatrix::from_columns(&cols).determinant();
                (indices, det * det)
            })
            .collect();
        let total: f64 = subsets.iter().map(|(_, d)| d).sum();
        if (total - 1.0).abs() > 1e-8 {
            return Err(Error::InvalidFrame(format!(
                "subset weights sum to {total:.12}, not 1"
            )));
        }
        Ok(Self { subsets })
    }

    fn theta(&self, log_ts: &[f64]) -> f64 {
        let expansion: f64 = self
            .subsets
            .iter()
            .map(|(indices, d)| d * indices.iter().map(|&i| log_ts[i]).sum::<f64>().exp())
            .sum();
        let t0 = expansion.sqrt();
        1.0 + 0.5
            * self
                .subsets
                .iter()
                .map(|(indices, d)| {
                    let half: f64 = 0.5 * indices.iter().map(|&i| log_ts[i]).sum::<f64>();
                    let r = half.exp() / t0 - 1.0;
                    d * r * r
                })
                .sum::<f64>()
    }
}

/// Importance sampler over the lifted cone: heights follow the polynomial
/// exponential density and slices are drawn by rejection from the scaled
/// bounding box of the circumscribed body.
struct ConeSampler {
    directions: Vec<DVector<f64>>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    base: f64,
    lambda: f64,
    sqrt_n: f64,
    n: usize,
}

impl ConeSampler {
    fn new(measure: &SphericalMeasure) -> Result<Self> {
        let body = z_body(measure)?;
        let n = body.dim();
        let mut lo = vec![f64::INFINITY; n];
        let mut hi = vec![f64::NEG_INFINITY; n];
        for v in body.vertices() {
            for j in 0..n {
                lo[j] = lo[j].min(v[j]);
                hi[j] = hi[j].max(v[j]);
            }
        }
        let box_volume: f64 = lo.iter().zip(&hi).map(|(a, b)| b - a).product();
        let lambda = ((n + 1) as f64).sqrt();
        let base =
            factorial(n) * box_volume / (lambda.powi(n as i32 + 1) * (n as f64).powf(n as f64 / 2.0));
        Ok(Self {
            directions: measure.atoms().iter().map(|(u, _)| u.clone()).collect(),
            lo,
            hi,
            base,
            lambda,
            sqrt_n: (n as f64).sqrt(),
            n,
        })
    }

    /// One proposal; accepted iff the box point lands strictly inside the
    /// height-r slice of the cone.
    fn draw(&self, rng: &mut ChaCha8Rng) -> Option<(DVector<f64>, f64)> {
        let mut r = 0.0;
        for _ in 0..=self.n {
            r -= (1.0 - rng.random::<f64>()).ln();
        }
        r /= self.lambda;
        let scale = r / self.sqrt_n;
        let x = DVector::from_fn(self.n, |j, _| {
            scale * (self.lo[j] + (self.hi[j] - self.lo[j]) * rng.random::<f64>())
        });
        for u in &self.directions {
            if self.sqrt_n * u.dot(&x) >= r {
                return None;
            }
        }
        Some((x, r))
    }
}

fn mc_estimate<F>(sampler: &ConeSampler, samples: usize, seed: u64, value: F) -> (f64, f64)
where
    F: Fn(&DVector<f64>, f64) -> f64 + Sync,
{
    let chunks = 64usize;
    let stats: Vec<(f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mixed = seed ^ (c as u64)
                .wrapping_mul(0x9E37_79B9_7F4A_7C15)
                .wrapping_add(0xD1B5_4A32_D192_ED03);
            let mut rng = ChaCha8Rng::seed_from_u64(mixed);
            let count = samples / chunks + usize::from(c < samples % chunks);
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            for _ in 0..count {
                if let Some((x, r)) = sampler.draw(&mut rng) {
                    let v = sampler.base * value(&x, r);
                    sum += v;
                    sum_sq += v * v;
                }
            }
            (sum, sum_sq)
        })
        .collect();
    let total = samples as f64;
    let sum: f64 = stats.iter().map(|(s, _)| s).sum();
    let sum_sq: f64 = stats.iter().map(|(_, q)| q).sum();
    let mean = sum / total;
    let variance = ((sum_sq - sum * sum / total) / (total - 1.0)).max(0.0);
    (mean, (variance / total).sqrt())
}

fn sample_gate(samples: usize) -> Result<()> {
    if samples < 10_000 {
        return Err(Error::InvalidInput(format!(
            "need at least 10000 samples, got {samples}"
        )));
    }
    Ok(())
}

/// Monte Carlo estimate of the exponential integral over the lifted cone;
/// its exact value is the volume ratio of the circumscribed body to the
/// regular simplex. Returns (estimate, standard error).
pub fn witness_integral(
    measure: &SphericalMeasure,
    samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    sample_gate(samples)?;
    let sampler = ConeSampler::new(measure)?;
    Ok(mc_estimate(&sampler, samples, seed, |_, _| 1.0))
}

/// Monte Carlo estimate of the damped Gaussian product integral over the
/// lifted cone; it dominates the witness integral pointwise and never
/// exceeds 1. Returns (estimate, standard error).
pub fn chain_integral(
    measure: &SphericalMeasure,
    samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    sample_gate(samples)?;
    let system = lift(measure)?;
    let sampler = ConeSampler::new(measure)?;
    let weights = SubsetWeights::new(&system)?;
    let d = system.dim;
    let root = (d as f64).sqrt();
    let log_pi = -(d as f64) / 2.0 * PI.ln();
    let value = |x: &DVector<f64>, r: f64| -> f64 {
        let mut image = DVector::zeros(d);
        let mut jacobian = DMatrix::zeros(d, d);
        let mut log_ts = Vec::with_capacity(system.vectors.len());
        for ((u, &c), dir) in system
            .vectors
            .iter()
            .zip(&system.weights)
            .zip(&sampler.directions)
        {
            let s = (r - sampler.sqrt_n * dir.dot(x)) / root;
            let pv = phi_eval(s).expect("slice membership keeps margins positive");
            image += u * (c * pv.phi);
            jacobian += u * u.transpose() * (c * pv.phi_prime);
            log_ts.push(pv.phi_prime.ln());
        }
        let theta = weights.theta(&log_ts);
        let det = jacobian.determinant();
        if !(det > 0.0) {
            return 0.0;
        }
        (log_pi + sampler.lambda * r - image.norm_squared() + det.ln() - theta.ln()).exp()
    };
    Ok(mc_estimate(&sampler, samples, seed, value))
}

/// Draws points strictly inside the lifted cone, distributed as the
/// witness sampler's accepted proposals.
pub fn cone_samples(
    measure: &SphericalMeasure,
    count: usize,
    seed: u64,
) -> Result<Vec<ConeSample>> {
    let system = lift(measure)?;
    let sampler = ConeSampler::new(measure)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let mut proposals = 0usize;
    while out.len() < count {
        proposals += 1;
        if proposals > 200_000 * count.max(1) {
            return Err(Error::NoConvergence {
                op: "cone_samples",
                iters: proposals,
                residual: f64::NAN,
            });
        }
        if let Some((x, r)) = sampler.draw(&mut rng) {
            let mut y = DVector::zeros(sampler.n + 1);
            y.rows_mut(0, sampler.n).copy_from(&x);
            y[sampler.n] = r;
            if let Ok(sample) = ConeSample::new(&system, y, sampler.base) {
                out.push(sample);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{random_isotropic, standard_simplex_measure};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn axis_measure() -> SphericalMeasure {
        let atoms = vec![
            (DVector::from_vec(vec![1.0, 0.0]), 0.5),
            (DVector::from_vec(vec![-1.0, 0.0]), 0.5),
            (DVector::from_vec(vec![0.0, 1.0]), 0.5),
            (DVector::from_vec(vec![0.0, -1.0]), 0.5),
        ];
        SphericalMeasure::new(2, atoms).unwrap()
    }

    #[test]
    fn phi_matches_the_tail_oracle() {
        let root = phi_eval(2f64.ln()).unwrap();
        assert!(root.phi.abs() <= 1e-10);
        assert_relative_eq!(root.phi_prime, PI.sqrt() / 2.0, max_relative = 1e-12);

        // Independent bisection on the tail equation.
        let t: f64 = 4.0;
        let (mut a, mut b) = (0.0, 3.0);
        for _ in 0..80 {
            let mid = 0.5 * (a + b);
            if special::gauss_tail(mid) > (-t).exp() {
                a = mid;
            } else {
                b = mid;
            }
        }
        let value = phi_eval(t).unwrap();
        assert_relative_eq!(value.phi, 0.5 * (a + b), max_relative = 1e-9);
        assert!(2f64.sqrt() < value.phi && value.phi < 2.0);

        let far = phi_eval(100.0).unwrap();
        assert!(far.phi < 10.0);
        assert!(far.phi_prime > 1.0 / 30.0 && far.phi_prime < 1.0);

        for &t in &[0.01, 0.1, 2f64.ln(), 1.0, 4.0, 37.0, 1e3, 1e4] {
            let v = phi_eval(t).unwrap();
            assert!((special::gauss_tail(v.phi) - (-t).exp()).abs() <= 1e-12);
        }

        assert!(matches!(phi_eval(0.0), Err(Error::OutOfDomain(_))));
        assert!(matches!(phi_eval(-3.0), Err(Error::OutOfDomain(_))));
    }

    #[test]
    fn phi_derivatives_match_finite_differences() {
        for &t in &[0.01, 0.1, 2f64.ln(), 1.0, 2.0, 4.0, 10.0, 100.0, 1e4] {
            let v = phi_eval(t).unwrap();
            let h = 1e-6 * (1.0 + t);
            let up = phi_eval(t + h).unwrap();
            let down = phi_eval(t - h).unwrap();
            let slope = (up.phi - down.phi) / (2.0 * h);
            assert_relative_eq!(slope, v.phi_prime, max_relative = 1e-6);
            let curve = (up.phi_prime - down.phi_prime) / (2.0 * h);
            assert_relative_eq!(curve, v.phi_second, max_relative = 1e-4);
        }

        let grid: Vec<f64> = (0..200)
            .map(|i| 0.01 * (1e4f64 / 0.01).powf(i as f64 / 199.0))
            .collect();
        let mut last = f64::NEG_INFINITY;
        for &t in &grid {
            let v = phi_eval(t).unwrap();
            assert!(v.phi > last);
            last = v.phi;
            assert!(v.phi_second < 0.0);
            if t > 2f64.ln() + 1e-9 {
                assert!(v.phi_prime > 0.0 && v.phi_prime < 1.0);
            }
        }
    }

    #[test]
    fn derivative_bounds_hold_on_the_log_grid() {
        let grid: Vec<f64> = (0..11).map(|j| 4.0 * 2f64.powi(j)).collect();
        let entries = phi_bounds_check(&grid).unwrap();
        assert_eq!(entries.len(), 11);
        assert!(entries.iter().all(|e| e.passed()));
        assert!(entries[0].value.phi_second < -1.0 / 96.0);
        assert!(matches!(
            phi_bounds_check(&[4.0, 2.0]),
            Err(Error::OutOfDomain(_))
        ));
    }

    #[test]
    fn tail_bounds_bracket_the_quadrature() {
        let at_one = gordon_mill_check(1.0).unwrap();
        let upper = (-1f64).exp() / (2.0 * PI.sqrt());
        assert_relative_eq!(at_one.upper, upper, max_relative = 1e-12);
        assert_relative_eq!(at_one.lower, upper * 2.0 / 3.0, max_relative = 1e-12);
        assert!(at_one.passed());

        for &z in &[0.3, 1.0, 2f64.sqrt(), 3.0, 10.0] {
            let bounds = gordon_mill_check(z).unwrap();
            assert_relative_eq!(bounds.tail, special::gauss_tail(z), max_relative = 1e-11);
            assert!(bounds.passed());
            assert!(bounds.improved_upper < bounds.upper);
        }

        let far = gordon_mill_check(10.0).unwrap();
        assert!((far.upper - far.lower) / far.tail < 0.01);
        assert!(matches!(gordon_mill_check(0.0), Err(Error::OutOfDomain(_))));
    }

    #[test]
    fn theta_map_on_the_orthonormal_lift() {
        let system = lift(&standard_simplex_measure(2).unwrap()).unwrap();
        let t = 0.9;
        let mut y = DVector::zeros(3);
        for u in &system.vectors {
            y += u * t;
        }
        let sample = ConeSample::new(&system, y, 1.0).unwrap();
        let (image, jacobian) = theta_map(&system, &sample).unwrap();
        let v = phi_eval(t).unwrap();
        let expected = DVector::from_vec(vec![0.0, 0.0, 3f64.sqrt() * v.phi]);
        assert!((image - expected).norm() < 1e-9);
        assert!((jacobian - DMatrix::identity(3, 3) * v.phi_prime).norm() < 1e-9);

        let outside = ConeSample {
            y: DVector::from_vec(vec![0.0, 0.0, -1.0]),
            weight: 1.0,
        };
        assert!(matches!(
            theta_map(&system, &outside),
            Err(Error::OutOfCone { .. })
        ));
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let measure = random_isotropic(2, 5, 7).unwrap();
        let system = lift(&measure).unwrap();
        let points = cone_samples(&measure, 20, 11).unwrap();
        let h = 1e-5;
        for sample in &points {
            let (_, jacobian) = theta_map(&system, sample).unwrap();
            let eigen = jacobian.clone().symmetric_eigen();
            assert!(eigen.eigenvalues.iter().all(|&l| l > 0.0));
            for j in 0..3 {
                let mut up = sample.y.clone();
                up[j] += h;
                let mut down = sample.y.clone();
                down[j] -= h;
                let (iu, _) =
                    theta_map(&system, &ConeSample::new(&system, up, 1.0).unwrap()).unwrap();
                let (id, _) =
                    theta_map(&system, &ConeSample::new(&system, down, 1.0).unwrap()).unwrap();
                let column = (iu - id) / (2.0 * h);
                for i in 0..3 {
                    assert!((column[i] - jacobian[(i, j)]).abs() <= 1e-6);
                }
            }
        }
    }

    #[test]
    fn chain_holds_pointwise() {
        // Orthonormal lift at a symmetric point: both sides are equalities.
        let system = lift(&standard_simplex_measure(2).unwrap()).unwrap();
        let mut y = DVector::zeros(3);
        for u in &system.vectors {
            y += u * 1.3;
        }
        let report = pointwise_chain(&system, &ConeSample::new(&system, y, 1.0).unwrap()).unwrap();
        assert!((report.norm_sq - report.weighted_sq).abs() <= 1e-10);
        assert!((report.theta * report.prime_product - report.jacobian_det).abs() <= 1e-10);
        assert_relative_eq!(report.theta, 1.0, max_relative = 1e-12);

        // Margins straddling six orders of magnitude stay inside the map's
        // domain.
        let skew = &system.vectors[0] * 1e-6 + &system.vectors[1] + &system.vectors[2];
        let report =
            pointwise_chain(&system, &ConeSample::new(&system, skew, 1.0).unwrap()).unwrap();
        assert!(report.passed(1e-9));

        let measure = random_isotropic(2, 5, 23).unwrap();
        let wide = lift(&measure).unwrap();
        for sample in cone_samples(&measure, 100, 5).unwrap() {
            let report = pointwise_chain(&wide, &sample).unwrap();
            assert!(report.passed(1e-9));
            assert!(report.theta >= 1.0);
        }

        let measure = random_isotropic(3, 6, 41).unwrap();
        let lifted = lift(&measure).unwrap();
        for sample in cone_samples(&measure, 25, 6).unwrap() {
            let report = pointwise_chain(&lifted, &sample).unwrap();
            assert!(report.passed(1e-9));
        }
    }

    #[test]
    fn witness_integral_matches_exact_ratios() {
        let simplex = standard_simplex_measure(2).unwrap();
        let (estimate, stderr) = witness_integral(&simplex, 200_000, 17).unwrap();
        assert!(stderr < 0.005);
        assert!((estimate - 1.0).abs() <= 3.0 * stderr);

        // The bounding box of the square body is the body itself, so the
        // sampler accepts every proposal and the estimate is exact.
        let (estimate, stderr) = witness_integral(&axis_measure(), 20_000, 3).unwrap();
        assert_relative_eq!(estimate, 4.0 / (3.0 * 3f64.sqrt()), max_relative = 1e-12);
        assert!(stderr <= 1e-8);

        let measure = random_isotropic(3, 7, 19).unwrap();
        let body = z_body(&measure).unwrap();
        let exact = body.volume() / crate::simplex_volume(3);
        let (estimate, stderr) = witness_integral(&measure, 200_000, 29).unwrap();
        assert!((estimate - exact).abs() <= 3.0 * stderr);
        assert!((estimate - exact).abs() <= 0.02 * exact);

        assert!(matches!(
            witness_integral(&simplex, 100, 1),
            Err(Error::InvalidInput(_))
        ));
        let skewed = SphericalMeasure::new(
            2,
            vec![
                (DVector::from_vec(vec![1.0, 0.0]), 1.0),
                (DVector::from_vec(vec![-1.0, 0.0]), 1.0),
            ],
        )
        .unwrap();
        assert!(matches!(
            witness_integral(&skewed, 20_000, 1),
            Err(Error::InvalidMeasure(_))
        ));
    }

    #[test]
    fn integrated_chain_upper_bounds_one() {
        // Orthonormal lift: the chain integrand collapses to the witness
        // integrand, so the two estimates coincide sample by sample.
        let simplex = standard_simplex_measure(2).unwrap();
        let (w, _) = witness_integral(&simplex, 50_000, 13).unwrap();
        let (c, ce) = chain_integral(&simplex, 50_000, 13).unwrap();
        assert!((c - w).abs() <= 1e-10);
        assert!(c <= 1.0 + 3.0 * ce);

        let cases = [
            (axis_measure(), 101u64),
            (random_isotropic(2, 4, 57).unwrap(), 103),
            (random_isotropic(3, 5, 71).unwrap(), 107),
        ];
        for (measure, seed) in &cases {
            let (w, we) = witness_integral(measure, 150_000, *seed).unwrap();
            let (c, ce) = chain_integral(measure, 150_000, *seed).unwrap();
            assert!(c <= 1.0 + 3.0 * ce, "chain estimate {c} above 1 ({ce})");
            assert!(
                c >= w - 3.0 * (we + ce),
                "chain {c} below witness {w} ({we}, {ce})"
            );
            assert!(w <= 1.0 + 3.0 * we);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn phi_value_is_internally_consistent(u in 0f64..1f64) {
            let t = 0.01 * (1e4f64 / 0.01).powf(u);
            let v = phi_eval(t).unwrap();
            prop_assert!((special::gauss_tail(v.phi) - (-t).exp()).abs() <= 1e-12);
            let h = 1e-6 * (1.0 + t);
            let slope = (phi_eval(t + h).unwrap().phi - phi_eval(t - h).unwrap().phi) / (2.0 * h);
            prop_assert!((slope - v.phi_prime).abs() <= 1e-5 * v.phi_prime.abs());
            prop_assert!(v.phi_second < 0.0);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn chain_passes_at_random_cone_points(
            n in 2usize..=3,
            extra in 1usize..=3,
            seed in 0u64..5_000,
        ) {
            let measure = random_isotropic(n, n + 1 + extra, seed).unwrap();
            let system = lift(&measure).unwrap();
            let samples = cone_samples(&measure, 4, seed ^ 0xABCD).unwrap();
            for sample in &samples {
                let report = pointwise_chain(&system, sample).unwrap();
                prop_assert!(report.passed(1e-9));
                prop_assert!(report.theta >= 1.0);
            }
        }
    }
}
