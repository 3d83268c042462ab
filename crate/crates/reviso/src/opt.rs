//! Derivative-free local search and feasibility helpers.

use nalgebra::DVector;

/// Result of a Nelder-Mead run.
#[derive(Debug, Clone)]
pub struct NmResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
}

/// Nelder-Mead simplex minimization with standard coefficients.
/// `scale` sets the initial simplex edge per coordinate.
pub fn nelder_mead<F>(f: F, x0: &[f64], scale: f64, max_iter: usize, ftol: f64) -> NmResult
where
    F: Fn(&[f64]) -> f64,
{
    let n = x0.len();
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut p = x0.to_vec();
        p[i] += scale;
        simplex.push(p);
    }
    let mut values: Vec<f64> = simplex.iter().map(|p| f(p)).collect();

    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    let mut iterations = 0;
    for _ in 0..max_iter {
        iterations += 1;
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let best = order[0];
        let worst = order[n];
        let second_worst = order[n - 1];
        if (values[worst] - values[best]).abs()
            <= ftol * (1.0 + values[best].abs())
        {
            break;
        }

        let mut centroid = vec![0.0; n];
        for &i in order.iter().take(n) {
            for (c, &xi) in centroid.iter_mut().zip(&simplex[i]) {
                *c += xi / n as f64;
            }
        }

        let blend = |a: &[f64], b: &[f64], t: f64| -> Vec<f64> {
            a.iter().zip(b).map(|(&x, &y)| x + t * (y - x)).collect()
        };

        let reflected = blend(&centroid, &simplex[worst], -alpha);
        let fr = f(&reflected);
        if fr < values[best] {
            let expanded = blend(&centroid, &simplex[worst], -gamma);
            let fe = f(&expanded);
            if fe < fr {
                simplex[worst] = expanded;
                values[worst] = fe;
            } else {
                simplex[worst] = reflected;
                values[worst] = fr;
            }
        } else if fr < values[second_worst] {
            simplex[worst] = reflected;
            values[worst] = fr;
        } else {
            let contracted = blend(&centroid, &simplex[worst], rho);
            let fc = f(&contracted);
            if fc < values[worst] {
                simplex[worst] = contracted;
                values[worst] = fc;
            } else {
                let best_point = simplex[best].clone();
                for i in 0..=n {
                    if i == best {
                        continue;
                    }
                    simplex[i] = blend(&best_point, &simplex[i], sigma);
                    values[i] = f(&simplex[i]);
                }
            }
        }
    }

    let (argmin, &value) = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .unwrap();
    NmResult {
        x: simplex[argmin].clone(),
        value,
        iterations,
    }
}

/// Strictly interior point of {x : <a_i, x> <= b_i} via log-sum-exp smoothing:
/// minimizes tau * ln sum exp((a_i x - b_i)/tau) by damped gradient descent
/// with decreasing tau. Returns None when the final point is infeasible.
pub fn interior_point(
    normals: &[DVector<f64>],
    offsets: &[f64],
    dim: usize,
) -> Option<DVector<f64>> {
    let mut x = DVector::zeros(dim);
    let mut tau = 1.0;
    for _ in 0..60 {
        for _ in 0..200 {
            let slacks: Vec<f64> = normals
                .iter()
                .zip(offsets)
                .map(|(a, &b)| (a.dot(&x) - b) / tau)
                .collect();
            let m = slacks.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let weights: Vec<f64> = slacks.iter().map(|&s| (s - m).exp()).collect();
            let wsum: f64 = weights.iter().sum();
            let mut grad = DVector::zeros(dim);
            for (a, &w) in normals.iter().zip(&weights) {
                grad += a * (w / wsum);
            }
            let gn = grad.norm();
            if gn < 1e-12 {
                break;
            }
            // Step length bounded by tau keeps the smoothed objective stable.
            x -= grad * (tau / gn.max(1.0)).min(0.25);
        }
        tau *= 0.5;
        if tau < 1e-10 {
            break;
        }
    }
    let worst = normals
        .iter()
        .zip(offsets)
        .map(|(a, &b)| a.dot(&x) - b)
        .fold(f64::NEG_INFINITY, f64::max);
    if worst < -1e-12 {
        Some(x)
    } else {
        None
    }
}

/// Ordinary least squares fit y = a + b x; returns (intercept, slope, r2).
pub fn fit_line(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    (intercept, slope, r2)
}
