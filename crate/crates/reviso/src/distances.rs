//! Affine-invariant distances between convex bodies: the symmetric-difference
//! distance after unit-volume normalization, the Banach-Mazur distance, and
//! the dilation chain relating the two. Both distances are reported as upper
//! bounds witnessed by an explicit transform; in the plane a deterministic
//! dense scan certifies the reported minimum, in higher dimensions the result
//! is the best of several local searches.

use crate::error::{Error, Result};
use crate::geom::{AffineMap, Halfspace, Polytope};
use crate::linalg::{
    rotation_chart_dim, rotation_from_chart, spd_inv_sqrt, unimodular_chart_dim,
    unimodular_from_chart,
};
use crate::opt::nelder_mead;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::f64::consts::TAU;

/// How a reported distance value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Certificate {
    /// A deterministic dense scan (plane only) reproduces the minimum.
    ScanCertified,
    /// Best value found by multi-start local search alone.
    Heuristic,
}

impl Certificate {
    pub fn label(&self) -> &'static str {
        match self {
            Certificate::ScanCertified => "scan-certified",
            Certificate::Heuristic => "heuristic",
        }
    }
}

/// Upper bound on an affine-invariant distance plus the witnessing transform.
///
/// For the symmetric-difference distance the transform applies to the
/// unit-volume centred normalization of the first body (unit determinant) and
/// the shift translates the normalized second body. For the Banach-Mazur
/// distance the transform maps the second body to a copy containing the
/// first, with volume ratio at most e^(n * value).
#[derive(Debug, Clone)]
pub struct DistanceResult {
    pub value: f64,
    pub transform: AffineMap,
    pub certificate: Certificate,
}

/// Dilation data for a nested pair: the second body contains the first and
/// sits inside the e^delta dilate of it about the first body's centroid.
#[derive(Debug, Clone)]
pub struct NestedChain {
    /// Smallest d with M - c inside e^d (K - c), c the centroid of K.
    pub delta: f64,
    /// Symmetric-difference volume of the unit-volume scalings about c.
    pub sym_diff: f64,
    /// First-order bound 2 d e^d on that symmetric difference.
    pub linear_bound: f64,
    /// Dilation-volume bound 2 (e^{n d} - 1); sym_diff never exceeds it.
    pub dilate_bound: f64,
}

/// Both distance bounds, the coarse relation between them, and the dilation
/// chain when one body contains the other.
#[derive(Debug, Clone)]
pub struct DistanceRelationReport {
    pub vol: DistanceResult,
    pub bm: DistanceResult,
    /// Comparison value 2 e^{n^2} times the Banach-Mazur bound.
    pub relation_bound: f64,
    /// Both values carry scan certificates, so the comparison is asserted.
    pub asserted: bool,
    /// vol.value <= relation_bound within tolerance.
    pub holds: bool,
    pub nested: Option<NestedChain>,
}

impl DistanceRelationReport {
    /// True when every comparison the report is entitled to make holds: the
    /// dilation-volume chain whenever the pair is nested, and the coarse
    /// relation whenever both distances carry scan certificates.
    pub fn passed(&self) -> bool {
        let chain_ok = self
            .nested
            .as_ref()
            .is_none_or(|c| c.sym_diff <= c.dilate_bound + 1e-9);
        let relation_ok = !self.asserted || self.holds;
        chain_ok && relation_ok
    }
}

const SEARCH_SEED: u64 = 0x7AFF_5EED;
/// Objective ceiling returned for invalid or wildly out-of-range parameters;
/// unit-volume symmetric differences never exceed 2 and sandwich logs stay
/// far below it on the searched region.
const PENALTY: f64 = 50.0;
/// A scan certifies the result when it reproduces the best value within this
/// slack (relative above the floor).
const CERT_FLOOR: f64 = 5e-4;

fn certificate_for(dim: usize, scan: Option<f64>, best: f64) -> Certificate {
    match scan {
        Some(s) if dim == 2 && s - best <= (0.01 * best.abs()).max(CERT_FLOOR) => {
            Certificate::ScanCertified
        }
        _ => Certificate::Heuristic,
    }
}

/// Unit-volume copy centred at its centroid; returns the scale and the
/// original centroid so the witnessing transform can be mapped back.
fn unit_normalize(p: &Polytope) -> Result<(Polytope, f64, DVector<f64>)> {
    let n = p.dim();
    let scale = p.volume().powf(-1.0 / n as f64);
    let c = p.centroid();
    let map = AffineMap {
        linear: DMatrix::identity(n, n) * scale,
        shift: -&c * scale,
    };
    Ok((p.affine_image(&map)?, scale, c))
}

/// Det-one whitening of the vertex cloud plus the vertex mean. Vertex clouds
/// transform exactly under affine maps, so affinely matched bodies whiten to
/// clouds differing by an orthogonal map only.
fn vertex_whitening(p: &Polytope) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let n = p.dim();
    let vs = p.vertices();
    let count = vs.len() as f64;
    let mut mean = DVector::zeros(n);
    for v in vs {
        mean += v;
    }
    mean /= count;
    let mut cov = DMatrix::zeros(n, n);
    for v in vs {
        let d = v - &mean;
        cov += &d * d.transpose();
    }
    cov /= count;
    let w = spd_inv_sqrt(&cov)?;
    let det = w.determinant();
    if !(det > 0.0) {
        return Err(Error::SingularTransform { det });
    }
    Ok((w / det.powf(1.0 / n as f64), mean))
}

/// Minimizes c . x over free x subject to rows[i] . x <= rhs[i]. Small dense
/// two-phase simplex; Dantzig pricing with a Bland fallback against cycling.
fn simplex_lp(c: &[f64], rows: &[Vec<f64>], rhs: &[f64]) -> Result<Vec<f64>> {
    let k = c.len();
    let m = rows.len();
    if m == 0 || rhs.len() != m || rows.iter().any(|r| r.len() != k) {
        return Err(Error::InvalidInput("malformed linear program".into()));
    }
    let split = 2 * k;
    let slack_end = split + m;
    let nart = rhs.iter().filter(|&&b| b < 0.0).count();
    let total = slack_end + nart;
    let mut a = vec![vec![0.0; total]; m];
    let mut b = vec![0.0; m];
    let mut basis = vec![0usize; m];
    let mut art = slack_end;
    for i in 0..m {
        let sign = if rhs[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..k {
            a[i][j] = sign * rows[i][j];
            a[i][k + j] = -sign * rows[i][j];
        }
        a[i][split + i] = sign;
        b[i] = sign * rhs[i];
        if sign < 0.0 {
            a[i][art] = 1.0;
            basis[i] = art;
            art += 1;
        } else {
            basis[i] = split + i;
        }
    }

    // Reduced costs of `cost` priced out over the current basis.
    let priced = |cost: &[f64], a: &[Vec<f64>], basis: &[usize]| -> Vec<f64> {
        let mut obj = cost.to_vec();
        for (row, &bi) in a.iter().zip(basis) {
            let cb = cost[bi];
            if cb != 0.0 {
                for (o, &aij) in obj.iter_mut().zip(row) {
                    *o -= cb * aij;
                }
            }
        }
        obj
    };

    let run_phase = |a: &mut Vec<Vec<f64>>,
                     b: &mut Vec<f64>,
                     basis: &mut Vec<usize>,
                     obj: &mut Vec<f64>,
                     allowed: usize|
     -> Result<()> {
        let m = a.len();
        let eps = 1e-11;
        let soft_cap = 400 + 40 * m;
        let hard_cap = 20_000 + 200 * m;
        let mut iters = 0usize;
        loop {
            iters += 1;
            if iters > hard_cap {
                return Err(Error::NoConvergence {
                    op: "simplex_lp",
                    iters,
                    residual: obj.iter().cloned().fold(0.0, f64::min).abs(),
                });
            }
            let bland = iters > soft_cap;
            let mut enter = None;
            if bland {
                for (j, &oj) in obj.iter().enumerate().take(allowed) {
                    if oj < -eps {
                        enter = Some(j);
                        break;
                    }
                }
            } else {
                let mut best = -eps;
                for (j, &oj) in obj.iter().enumerate().take(allowed) {
                    if oj < best {
                        best = oj;
                        enter = Some(j);
                    }
                }
            }
            let Some(e) = enter else {
                return Ok(());
            };
            let mut leave: Option<usize> = None;
            let mut best_ratio = f64::INFINITY;
            for i in 0..m {
                if a[i][e] > eps {
                    let ratio = b[i] / a[i][e];
                    let better = ratio < best_ratio - 1e-13
                        || (ratio < best_ratio + 1e-13
                            && leave.is_none_or(|l| basis[i] < basis[l]));
                    if better {
                        best_ratio = ratio;
                        leave = Some(i);
                    }
                }
            }
            let Some(l) = leave else {
                return Err(Error::Unbounded);
            };
            let piv = a[l][e];
            for v in a[l].iter_mut() {
                *v /= piv;
            }
            b[l] /= piv;
            let pivot_row = a[l].clone();
            let pivot_b = b[l];
            for (i, row) in a.iter_mut().enumerate() {
                if i != l {
                    let f = row[e];
                    if f != 0.0 {
                        for (x, &p) in row.iter_mut().zip(&pivot_row) {
                            *x -= f * p;
                        }
                        b[i] -= f * pivot_b;
                        row[e] = 0.0;
                        if b[i] < 0.0 && b[i] > -1e-12 {
                            b[i] = 0.0;
                        }
                    }
                }
            }
            let f = obj[e];
            if f != 0.0 {
                for (o, &p) in obj.iter_mut().zip(&pivot_row) {
                    *o -= f * p;
                }
                obj[e] = 0.0;
            }
            basis[l] = e;
        }
    };

    if nart > 0 {
        let mut cost1 = vec![0.0; total];
        for cj in cost1.iter_mut().skip(slack_end) {
            *cj = 1.0;
        }
        let mut obj = priced(&cost1, &a, &basis);
        run_phase(&mut a, &mut b, &mut basis, &mut obj, total)?;
        let infeas: f64 = (0..m)
            .filter(|&i| basis[i] >= slack_end)
            .map(|i| b[i])
            .sum();
        if infeas > 1e-8 {
            return Err(Error::InvalidInput("infeasible linear program".into()));
        }
        // Pivot leftover artificials out on any structural column; a fully
        // zero row is redundant and dropped.
        let mut i = 0;
        while i < m && i < a.len() {
            if basis[i] >= slack_end {
                if let Some(j) = (0..slack_end).find(|&j| a[i][j].abs() > 1e-9) {
                    let piv = a[i][j];
                    for v in a[i].iter_mut() {
                        *v /= piv;
                    }
                    b[i] /= piv;
                    let pivot_row = a[i].clone();
                    let pivot_b = b[i];
                    for (r, row) in a.iter_mut().enumerate() {
                        if r != i {
                            let f = row[j];
                            if f != 0.0 {
                                for (x, &p) in row.iter_mut().zip(&pivot_row) {
                                    *x -= f * p;
                                }
                                b[r] -= f * pivot_b;
                            }
                        }
                    }
                    basis[i] = j;
                    i += 1;
                } else {
                    a.remove(i);
                    b.remove(i);
                    basis.remove(i);
                }
            } else {
                i += 1;
            }
        }
    }
    let mut cost2 = vec![0.0; total];
    cost2[..k].copy_from_slice(c);
    for j in 0..k {
        cost2[k + j] = -c[j];
    }
    let mut obj = priced(&cost2, &a, &basis);
    run_phase(&mut a, &mut b, &mut basis, &mut obj, slack_end)?;
    let mut full = vec![0.0; split];
    for (i, &bi) in basis.iter().enumerate() {
        if bi < split {
            full[bi] = b[i];
        }
    }
    Ok((0..k).map(|j| full[j] - full[k + j]).collect())
}

/// Smallest t with body + a inside t * shape for some shift a; returns (t, a).
fn circumscribed_scale(body: &Polytope, shape: &Polytope) -> Result<(f64, DVector<f64>)> {
    let n = body.dim();
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    for f in shape.halfspaces() {
        // h_body(u) + <a, u> <= t h_shape(u), plus t >= 0.
        let mut row = vec![-f.offset];
        row.extend(f.normal.iter());
        rows.push(row);
        rhs.push(-body.support(&f.normal));
    }
    let mut free = vec![0.0; n + 1];
    free[0] = -1.0;
    rows.push(free);
    rhs.push(0.0);
    let mut c = vec![0.0; n + 1];
    c[0] = 1.0;
    let x = simplex_lp(&c, &rows, &rhs)?;
    Ok((x[0], DVector::from_column_slice(&x[1..])))
}

/// Largest s with s * shape + b inside the host for some shift b; the host
/// facets are passed in to avoid rebuilding them per call. Returns (s, b).
fn inscribed_scale(
    shape: &Polytope,
    host_hs: &[Halfspace],
    dim: usize,
) -> Result<(f64, DVector<f64>)> {
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    for f in host_hs {
        // s h_shape(v) + <b, v> <= h_host(v), plus s >= 0.
        let mut row = vec![shape.support(&f.normal)];
        row.extend(f.normal.iter());
        rows.push(row);
        rhs.push(f.offset);
    }
    let mut free = vec![0.0; dim + 1];
    free[0] = -1.0;
    rows.push(free);
    rhs.push(0.0);
    let mut c = vec![0.0; dim + 1];
    c[0] = -1.0;
    let x = simplex_lp(&c, &rows, &rhs)?;
    Ok((x[0], DVector::from_column_slice(&x[1..])))
}

/// Best sandwich of the body between a translate of t * shape and s * shape:
/// log of the smallest ratio t / s, with the covering scale and shift kept
/// for the witnessing transform.
struct Sandwich {
    ratio_log: f64,
    outer_scale: f64,
    outer_shift: DVector<f64>,
}

fn sandwich(body: &Polytope, body_hs: &[Halfspace], shape: &Polytope) -> Result<Sandwich> {
    let (t, a) = circumscribed_scale(body, shape)?;
    let (s, _) = inscribed_scale(shape, body_hs, body.dim())?;
    if s <= 1e-12 {
        return Err(Error::DegenerateInput("inscribed scale collapsed".into()));
    }
    Ok(Sandwich {
        ratio_log: (t / s).ln().max(0.0),
        outer_scale: t,
        outer_shift: a,
    })
}

fn grid_axis(range: f64, pts: usize) -> Vec<f64> {
    (0..pts)
        .map(|i| -range + 2.0 * range * i as f64 / (pts - 1) as f64)
        .collect()
}

/// Symmetric-difference distance after unit-volume normalization, minimized
/// over unit-determinant maps of the first body and translations of the
/// second. The reported value is a certified-or-heuristic upper bound.
pub fn delta_vol(k: &Polytope, m: &Polytope) -> Result<DistanceResult> {
    if k.dim() != m.dim() {
        return Err(Error::InvalidInput("dimension mismatch".into()));
    }
    let n = k.dim();
    let (k0, _, _) = unit_normalize(k)?;
    let (m0, _, _) = unit_normalize(m)?;
    let cn = unimodular_chart_dim(n);

    let eval_mat = |lin: &DMatrix<f64>, x: &[f64]| -> f64 {
        // Folding the translation into the first body's map keeps one affine
        // image per evaluation: V(L K0 - x, sym diff, M0) = V(L K0, sym diff, M0 + x).
        let shift = DVector::from_fn(n, |i, _| -x[i]);
        let map = AffineMap {
            linear: lin.clone(),
            shift,
        };
        match k0
            .affine_image(&map)
            .and_then(|img| img.symmetric_difference_volume(&m0))
        {
            Ok(v) => v,
            Err(_) => PENALTY,
        }
    };
    let eval_joint = |z: &[f64]| -> f64 {
        if z.iter().any(|v| !v.is_finite() || v.abs() > 10.0) {
            return PENALTY + z.iter().map(|v| v.abs()).sum::<f64>();
        }
        match unimodular_from_chart(n, &z[..cn]) {
            Ok(lin) => eval_mat(&lin, &z[cn..]),
            Err(_) => PENALTY,
        }
    };

    // Full-chart multi-start local search.
    let mut rng = ChaCha8Rng::seed_from_u64(SEARCH_SEED);
    let mut starts: Vec<Vec<f64>> = vec![vec![0.0; cn + n]];
    for _ in 0..(3 * n + 2) {
        let mut z: Vec<f64> = (0..cn).map(|_| rng.random::<f64>() * 1.8 - 0.9).collect();
        z.extend((0..n).map(|_| rng.random::<f64>() - 0.5));
        starts.push(z);
    }
    let chart_iters = 300 * (cn + n);
    let chart_locals: Vec<(f64, Vec<f64>)> = starts
        .par_iter()
        .map(|z0| {
            let r = nelder_mead(&eval_joint, z0, 0.3, chart_iters, 1e-12);
            (r.value, r.x)
        })
        .collect();

    // Moment-matched branch: whitening both vertex clouds reduces affinely
    // related pairs to a rotation, searched on its own chart.
    let (wk, mk) = vertex_whitening(&k0)?;
    let (wm, mm) = vertex_whitening(&m0)?;
    let wm_inv = wm
        .clone()
        .try_inverse()
        .ok_or(Error::SingularTransform { det: 0.0 })?;
    let rn = rotation_chart_dim(n);
    let eval_rot = |z: &[f64]| -> f64 {
        if z.iter().any(|v| !v.is_finite() || v.abs() > 30.0) {
            return PENALTY;
        }
        match rotation_from_chart(n, &z[..rn]) {
            Ok(o) => eval_mat(&(&wm_inv * o * &wk), &z[rn..]),
            Err(_) => PENALTY,
        }
    };
    let mut probes: Vec<Vec<f64>> = vec![vec![0.0; rn]];
    for _ in 0..23 {
        probes.push((0..rn).map(|_| rng.random::<f64>() * TAU - TAU / 2.0).collect());
    }
    let mut probe_vals: Vec<(f64, Vec<f64>)> = probes
        .into_iter()
        .map(|q| {
            let o = rotation_from_chart(n, &q).expect("probe length matches the chart");
            let lin = &wm_inv * &o * &wk;
            let guess = &lin * &mk - &mm;
            let mut z = q;
            z.extend(guess.iter());
            (eval_rot(&z), z)
        })
        .collect();
    probe_vals.sort_by(|a, b| a.0.total_cmp(&b.0));
    let rot_iters = 300 * (rn + n);
    let rot_locals: Vec<(f64, Vec<f64>)> = probe_vals
        .iter()
        .take(3)
        .collect::<Vec<_>>()
        .par_iter()
        .map(|(_, z0)| {
            let r = nelder_mead(&eval_rot, z0, 0.25, rot_iters, 1e-12);
            (r.value, r.x)
        })
        .collect();

    // Dense scan over the chart and translations (plane only): the coarse
    // grid finds the basin, nested refinements and a polish descend in it.
    let mut scan_entry: Option<(f64, Vec<f64>)> = None;
    if n == 2 {
        let ga = grid_axis(1.6, 9);
        let gb = grid_axis(0.8, 5);
        let gs = grid_axis(0.8, 5);
        let coarse: Vec<(f64, Vec<f64>)> = ga
            .par_iter()
            .map(|&a| {
                let mut best = (f64::INFINITY, vec![0.0; 5]);
                for &l in &gb {
                    for &c in &ga {
                        for &x in &gs {
                            for &y in &gs {
                                let z = [a, l, c, x, y];
                                let v = eval_joint(&z);
                                if v < best.0 {
                                    best = (v, z.to_vec());
                                }
                            }
                        }
                    }
                }
                best
            })
            .collect();
        let mut best = coarse
            .into_iter()
            .reduce(|p, q| if q.0 < p.0 { q } else { p })
            .expect("scan grid is nonempty");
        let mut steps = [0.4; 5];
        for _ in 0..4 {
            for s in steps.iter_mut() {
                *s *= 0.32;
            }
            let centre = best.1.clone();
            for code in 0..243 {
                let mut z = centre.clone();
                let mut q = code;
                for (d, s) in steps.iter().enumerate() {
                    z[d] += ((q % 3) as f64 - 1.0) * s;
                    q /= 3;
                }
                let v = eval_joint(&z);
                if v < best.0 {
                    best = (v, z);
                }
            }
        }
        let polish = nelder_mead(&eval_joint, &best.1, 0.03, 600, 1e-12);
        if polish.value < best.0 {
            best = (polish.value, polish.x);
        }
        scan_entry = Some(best);
    }

    // Deterministic winner: scan first so exact ties keep the certificate.
    let mut cands: Vec<(f64, DMatrix<f64>, DVector<f64>)> = Vec::new();
    if let Some((v, z)) = &scan_entry {
        let lin = unimodular_from_chart(n, &z[..cn])?;
        cands.push((*v, lin, DVector::from_column_slice(&z[cn..])));
    }
    for (v, z) in &chart_locals {
        if let Ok(lin) = unimodular_from_chart(n, &z[..cn]) {
            cands.push((*v, lin, DVector::from_column_slice(&z[cn..])));
        }
    }
    for (v, z) in &rot_locals {
        if let Ok(o) = rotation_from_chart(n, &z[..rn]) {
            cands.push((*v, &wm_inv * o * &wk, DVector::from_column_slice(&z[rn..])));
        }
    }
    let (value, linear, shift) = cands
        .into_iter()
        .min_by(|p, q| p.0.total_cmp(&q.0))
        .expect("at least one search branch ran");
    let certificate = certificate_for(n, scan_entry.as_ref().map(|s| s.0), value);
    Ok(DistanceResult {
        value: value.max(0.0),
        transform: AffineMap { linear, shift },
        certificate,
    })
}

/// Banach-Mazur distance: ln of the best sandwiching ratio of the first body
/// between homothets of an affine image of the second, minimized over shapes
/// by alternating exact containment scaling with local shape search. The
/// reported value is a certified-or-heuristic upper bound.
pub fn delta_bm(k: &Polytope, m: &Polytope) -> Result<DistanceResult> {
    if k.dim() != m.dim() {
        return Err(Error::InvalidInput("dimension mismatch".into()));
    }
    let n = k.dim();
    let (k0, alpha, ck) = unit_normalize(k)?;
    let (m0, beta, cm) = unit_normalize(m)?;
    let khs = k0.halfspaces();
    let (wk, _) = vertex_whitening(&k0)?;
    let wk_inv = wk
        .clone()
        .try_inverse()
        .ok_or(Error::SingularTransform { det: 0.0 })?;

    // Both orientations of the second body; linear images cannot flip one.
    let mut mirror = DMatrix::identity(n, n);
    mirror[(0, 0)] = -1.0;
    let oriented = [
        (m0.clone(), DMatrix::identity(n, n)),
        (
            m0.affine_image(&AffineMap {
                linear: mirror.clone(),
                shift: DVector::zeros(n),
            })?,
            mirror,
        ),
    ];

    let cn = unimodular_chart_dim(n);
    let rn = rotation_chart_dim(n);
    let mut cands: Vec<(f64, usize, DMatrix<f64>)> = Vec::new();
    let mut scan_best: Option<f64> = None;
    let mut rng = ChaCha8Rng::seed_from_u64(SEARCH_SEED ^ 0xB3);

    for (oi, (mor, _)) in oriented.iter().enumerate() {
        let eval_lin = |lin: &DMatrix<f64>| -> f64 {
            let map = AffineMap {
                linear: lin.clone(),
                shift: DVector::zeros(n),
            };
            match mor
                .affine_image(&map)
                .and_then(|shape| sandwich(&k0, &khs, &shape))
            {
                Ok(s) => s.ratio_log,
                Err(_) => PENALTY,
            }
        };
        let eval_chart = |p: &[f64]| -> f64 {
            if p.iter().any(|v| !v.is_finite() || v.abs() > 8.0) {
                return PENALTY + p.iter().map(|v| v.abs()).sum::<f64>();
            }
            match unimodular_from_chart(n, p) {
                Ok(lin) => eval_lin(&lin),
                Err(_) => PENALTY,
            }
        };

        // Dense chart scan with exact containment scaling (plane only): the
        // scaling and shift are solved exactly per point, so the scan only
        // covers the three shape parameters.
        if n == 2 {
            let ga = grid_axis(1.6, 9);
            let gb = grid_axis(0.8, 5);
            let coarse: Vec<(f64, Vec<f64>)> = ga
                .par_iter()
                .map(|&a| {
                    let mut best = (f64::INFINITY, vec![0.0; 3]);
                    for &l in &gb {
                        for &c in &ga {
                            let z = [a, l, c];
                            let v = eval_chart(&z);
                            if v < best.0 {
                                best = (v, z.to_vec());
                            }
                        }
                    }
                    best
                })
                .collect();
            let mut best = coarse
                .into_iter()
                .reduce(|p, q| if q.0 < p.0 { q } else { p })
                .expect("chart grid is nonempty");
            let mut steps = [0.4; 3];
            for _ in 0..4 {
                for s in steps.iter_mut() {
                    *s *= 0.32;
                }
                let centre = best.1.clone();
                for code in 0..27 {
                    let mut z = centre.clone();
                    let mut q = code;
                    for (d, s) in steps.iter().enumerate() {
                        z[d] += ((q % 3) as f64 - 1.0) * s;
                        q /= 3;
                    }
                    let v = eval_chart(&z);
                    if v < best.0 {
                        best = (v, z);
                    }
                }
            }
            let polish = nelder_mead(&eval_chart, &best.1, 0.03, 400, 1e-13);
            if polish.value < best.0 {
                best = (polish.value, polish.x);
            }
            scan_best = Some(scan_best.map_or(best.0, |s: f64| s.min(best.0)));
            if let Ok(lin) = unimodular_from_chart(2, &best.1) {
                cands.push((best.0, oi, lin));
            }
        }

        // Full-chart multi-start local search.
        let mut starts: Vec<Vec<f64>> = vec![vec![0.0; cn]];
        for _ in 0..5 {
            starts.push((0..cn).map(|_| rng.random::<f64>() * 1.8 - 0.9).collect());
        }
        let chart_iters = 200 * cn;
        let locals: Vec<(f64, Vec<f64>)> = starts
            .par_iter()
            .map(|p0| {
                let r = nelder_mead(&eval_chart, p0, 0.3, chart_iters, 1e-12);
                (r.value, r.x)
            })
            .collect();
        for (v, p) in locals {
            if let Ok(lin) = unimodular_from_chart(n, &p) {
                cands.push((v, oi, lin));
            }
        }

        // Moment-matched rotations between the whitened clouds.
        let (wm, _) = vertex_whitening(mor)?;
        let eval_rot = |q: &[f64]| -> f64 {
            if q.iter().any(|v| !v.is_finite() || v.abs() > 30.0) {
                return PENALTY;
            }
            match rotation_from_chart(n, q) {
                Ok(o) => eval_lin(&(&wk_inv * o * &wm)),
                Err(_) => PENALTY,
            }
        };
        let mut probes: Vec<Vec<f64>> = vec![vec![0.0; rn]];
        for _ in 0..15 {
            probes.push((0..rn).map(|_| rng.random::<f64>() * TAU - TAU / 2.0).collect());
        }
        let mut probe_vals: Vec<(f64, Vec<f64>)> = probes
            .into_iter()
            .map(|q| (eval_rot(&q), q))
            .collect();
        probe_vals.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (_, q0) in probe_vals.iter().take(2) {
            let r = nelder_mead(&eval_rot, q0, 0.25, 200 * rn, 1e-12);
            if let Ok(o) = rotation_from_chart(n, &r.x) {
                cands.push((r.value, oi, &wk_inv * o * &wm));
            }
        }
    }

    let (value, oi, lin) = cands
        .into_iter()
        .min_by(|p, q| p.0.total_cmp(&q.0))
        .expect("at least one search branch ran");
    let certificate = certificate_for(n, scan_best, value);

    // Witnessing transform back on the raw bodies: the covering copy of the
    // second body contains the first, with volume ratio at most e^{n value}.
    let shape = oriented[oi].0.affine_image(&AffineMap {
        linear: lin.clone(),
        shift: DVector::zeros(n),
    })?;
    let sw = sandwich(&k0, &khs, &shape)?;
    let composite = &lin * &oriented[oi].1;
    let full = &composite * (sw.outer_scale * beta / alpha);
    let shift = &ck - &sw.outer_shift / alpha - &full * &cm;
    Ok(DistanceResult {
        value: value.max(0.0),
        transform: AffineMap {
            linear: full,
            shift,
        },
        certificate,
    })
}

/// Dilation data when the second body contains the first: the exact gap
/// delta about the first body's centroid and the symmetric difference of the
/// unit-volume scalings, with its two dilation bounds.
pub fn nested_chain(k: &Polytope, m: &Polytope) -> Result<Option<NestedChain>> {
    if k.dim() != m.dim() {
        return Err(Error::InvalidInput("dimension mismatch".into()));
    }
    let n = k.dim() as f64;
    let c = k.centroid();
    let kc = k.translate(&(-&c));
    let mc = m.translate(&(-&c));
    if !kc.vertices().iter().all(|v| mc.contains(v, 1e-8)) {
        return Ok(None);
    }
    let mut delta: f64 = 0.0;
    for v in mc.vertices() {
        delta = delta.max(kc.gauge(v)?.ln());
    }
    let delta = delta.max(0.0);
    // Both bodies scale about the shared centre, matching the nested frame.
    let k0 = kc.scaled(kc.volume().powf(-1.0 / n))?;
    let m0 = mc.scaled(mc.volume().powf(-1.0 / n))?;
    let sym_diff = k0.symmetric_difference_volume(&m0)?;
    Ok(Some(NestedChain {
        delta,
        sym_diff,
        linear_bound: 2.0 * delta * delta.exp(),
        dilate_bound: 2.0 * ((n * delta).exp() - 1.0),
    }))
}

/// Evaluates both distance bounds, the coarse relation between them, and the
/// nested dilation chain when one body contains the other. The relation is
/// asserted only when both values carry scan certificates.
pub fn distance_relation_check(k: &Polytope, m: &Polytope) -> Result<DistanceRelationReport> {
    let vol = delta_vol(k, m)?;
    let bm = delta_bm(k, m)?;
    let n = k.dim() as f64;
    let relation_bound = 2.0 * (n * n).exp() * bm.value;
    let asserted = vol.certificate == Certificate::ScanCertified
        && bm.certificate == Certificate::ScanCertified;
    let holds = vol.value <= relation_bound + 1e-6;
    let nested = nested_chain(k, m)?;
    Ok(DistanceRelationReport {
        vol,
        bm,
        relation_bound,
        asserted,
        holds,
        nested,
    })
}
