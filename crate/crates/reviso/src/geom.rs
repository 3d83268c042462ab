//! Convex polytope geometry for dimensions 2 through 5: incremental hulls,
//! dual (vertex/halfspace) representations, exact volume and surface area,
//! affine images, intersections, and symmetric differences.
//!
//! Hull predicates run on a deterministically joggled copy of the input so
//! degenerate configurations (coplanar vertex families, polars of simplicial
//! bodies) never produce inconsistent insertion decisions. All reported
//! metric data comes from planes refit on the original coordinates and from
//! the divergence identity n V = sum_f area_f offset_f, so results are exact
//! up to floating point even for degenerate inputs.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::DEFAULT_TOL;

/// Closed halfspace {x : <normal, x> <= offset} with unit normal.
#[derive(Debug, Clone)]
pub struct Halfspace {
    pub normal: DVector<f64>,
    pub offset: f64,
}

/// Affine map x -> linear * x + shift.
#[derive(Debug, Clone)]
pub struct AffineMap {
    pub linear: DMatrix<f64>,
    pub shift: DVector<f64>,
}

impl AffineMap {
    pub fn identity(n: usize) -> Self {
        AffineMap {
            linear: DMatrix::identity(n, n),
            shift: DVector::zeros(n),
        }
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.linear * x + &self.shift
    }

    /// Composition: self after other (x -> self(other(x))).
    pub fn compose(&self, other: &AffineMap) -> AffineMap {
        AffineMap {
            linear: &self.linear * &other.linear,
            shift: &self.linear * &other.shift + &self.shift,
        }
    }

    pub fn inverse(&self) -> Result<AffineMap> {
        let inv = self
            .linear
            .clone()
            .try_inverse()
            .ok_or(Error::SingularTransform {
                det: self.linear.determinant(),
            })?;
        let shift = -(&inv * &self.shift);
        Ok(AffineMap { linear: inv, shift })
    }
}

/// Geometric facet: supporting halfspace plus its (n-1)-measure.
#[derive(Debug, Clone)]
struct FacetInfo {
    normal: DVector<f64>,
    offset: f64,
    area: f64,
}

/// Bounded convex polytope with both representations kept in sync and exact
/// metric data cached at construction.
#[derive(Debug, Clone)]
pub struct Polytope {
    dim: usize,
    vertices: Vec<DVector<f64>>,
    facets: Vec<FacetInfo>,
    volume: f64,
    centroid: DVector<f64>,
    tol: f64,
}

#[derive(Serialize, Deserialize)]
struct BodyJson {
    dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    halfspaces: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    vertices: Option<Vec<Vec<f64>>>,
}

impl Polytope {
    /// Hull of a point set. Points are deduplicated within `tol`; interior
    /// and non-extreme points are dropped. Errors when the set is not
    /// full-dimensional.
    pub fn from_vertices(dim: usize, points: &[DVector<f64>], tol: f64) -> Result<Polytope> {
        check_dim(dim)?;
        if points.iter().any(|p| p.len() != dim) {
            return Err(Error::InvalidInput("point dimension mismatch".into()));
        }
        let points = dedup_points(points, tol);
        if points.len() < dim + 1 {
            return Err(Error::DegenerateInput(format!(
                "{} distinct points cannot span R^{dim}",
                points.len()
            )));
        }
        let m = measure_point_set(dim, &points)?;
        if m.volume <= 0.0 {
            return Err(Error::DegenerateInput("hull has no volume".into()));
        }
        // A vertex proper lies on at least dim facet planes.
        let scale = points.iter().map(|p| p.norm()).fold(1.0f64, f64::max);
        let band = 1e-7 * scale;
        let vertices: Vec<DVector<f64>> = m
            .vertex_ids
            .iter()
            .map(|&i| points[i].clone())
            .filter(|v| {
                m.facets
                    .iter()
                    .filter(|f| (f.normal.dot(v) - f.offset).abs() <= band)
                    .count()
                    >= dim
            })
            .collect();
        if vertices.len() < dim + 1 {
            return Err(Error::DegenerateInput("hull has no volume".into()));
        }
        Ok(Polytope {
            dim,
            vertices,
            facets: m.facets,
            volume: m.volume,
            centroid: m.centroid,
            tol,
        })
    }

    /// Intersection of halfspaces. Must be bounded with nonempty interior.
    /// Normals are renormalized; redundant halfspaces are dropped.
    pub fn from_halfspaces(dim: usize, halfspaces: &[Halfspace], tol: f64) -> Result<Polytope> {
        check_dim(dim)?;
        let mut hs: Vec<Halfspace> = Vec::with_capacity(halfspaces.len());
        for h in halfspaces {
            if h.normal.len() != dim {
                return Err(Error::InvalidInput("halfspace dimension mismatch".into()));
            }
            let norm = h.normal.norm();
            if norm <= tol {
                return Err(Error::DegenerateInput("zero halfspace normal".into()));
            }
            hs.push(Halfspace {
                normal: &h.normal / norm,
                offset: h.offset / norm,
            });
        }
        let normals: Vec<DVector<f64>> = hs.iter().map(|h| h.normal.clone()).collect();
        let offsets: Vec<f64> = hs.iter().map(|h| h.offset).collect();
        let interior =
            crate::opt::interior_point(&normals, &offsets, dim).ok_or(Error::EmptyInterior)?;

        // Polar transform about the interior point: vertex enumeration via the
        // hull of the dual points. Each dual facet simplex names dim original
        // halfspaces; the vertex is recovered exactly by solving them, which
        // is immune to sliver-triangulation noise in the dual facet planes.
        let mut dual_points: Vec<DVector<f64>> = Vec::with_capacity(hs.len());
        let mut origin: Vec<usize> = Vec::with_capacity(hs.len());
        for (i, h) in hs.iter().enumerate() {
            let slack = h.offset - h.normal.dot(&interior);
            if slack <= tol * 1e-3 {
                return Err(Error::EmptyInterior);
            }
            let p = &h.normal / slack;
            if !dual_points.iter().any(|q| (&p - q).norm() <= 1e-12) {
                dual_points.push(p);
                origin.push(i);
            }
        }
        if dual_points.len() < dim + 1 {
            return Err(Error::Unbounded);
        }
        let dual_hull = convex_hull(dim, &dual_points, 1e-12).map_err(|_| Error::Unbounded)?;
        // Bounded iff the origin is strictly interior to the dual hull. The
        // threshold scales with the joggle noise left in sliver facets.
        let dual_scale = dual_points.iter().map(|p| p.norm()).fold(1.0f64, f64::max);
        let feas = 1e-7
            * (1.0 + interior.norm() + hs.iter().map(|h| h.offset.abs()).fold(0.0f64, f64::max));
        let mut vertices = Vec::new();
        let mut a = DMatrix::zeros(dim, dim);
        let mut b = DVector::zeros(dim);
        // True dual facet planes are refit exactly from the dual points, so
        // any facet with a dual point strictly beyond its plane is a joggle
        // artifact; its solve would yield a spurious near-boundary point.
        let legit = 1e-9 * dual_scale.max(1.0);
        for f in &dual_hull.facets {
            if dual_points
                .iter()
                .any(|q| f.normal.dot(q) > f.offset + legit)
            {
                continue;
            }
            if f.offset <= 1e-5 * dual_scale.max(1.0) {
                return Err(Error::Unbounded);
            }
            for (row, &pid) in f.simplex.iter().enumerate() {
                let h = &hs[origin[pid]];
                a.set_row(row, &h.normal.transpose());
                b[row] = h.offset;
            }
            // Gate on conditioning: with unit rows, a small sigma_min turns
            // roundoff into macroscopic drift along a near-null direction
            // while residuals stay tiny. Every vertex also appears through a
            // well-conditioned subset of its concurrent planes.
            let smin = a
                .clone()
                .svd(false, false)
                .singular_values
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min);
            if smin <= 1e-8 {
                continue;
            }
            let Some(x) = a.clone().lu().solve(&b) else {
                continue;
            };
            if (&a * &x - &b).amax() > feas {
                continue;
            }
            if hs.iter().all(|h| h.normal.dot(&x) <= h.offset + feas) {
                vertices.push(x);
            }
        }
        // Copies of one vertex recovered from different plane subsets differ
        // by solve roundoff, which can exceed tol on ill-conditioned subsets.
        let vertices = dedup_points(&vertices, tol.max(1e-6));
        if vertices.len() < dim + 1 {
            return Err(Error::DegenerateInput(
                "halfspace intersection has no interior".into(),
            ));
        }
        let mut poly = Polytope::from_vertices(dim, &vertices, tol)?;
        // Swap in the caller's plane data where it matches a derived facet:
        // it is exact where the reconstruction carries roundoff.
        let scale = poly.scale();
        for f in &mut poly.facets {
            if let Some(h) = hs.iter().find(|h| {
                (&h.normal - &f.normal).norm() < 1e-6
                    && (h.offset - f.offset).abs() < 1e-6 * scale.max(1.0)
            }) {
                f.normal = h.normal.clone();
                f.offset = h.offset;
            }
        }
        Ok(poly)
    }

    /// Regular simplex circumscribed about the unit ball, centred at the
    /// origin: facets <w_i, x> <= 1, vertices -n w_i.
    pub fn regular_simplex(dim: usize) -> Result<Polytope> {
        check_dim(dim)?;
        let contacts = regular_simplex_contacts(dim);
        let vertices: Vec<DVector<f64>> = contacts.iter().map(|w| w * -(dim as f64)).collect();
        let mut poly = Polytope::from_vertices(dim, &vertices, DEFAULT_TOL)?;
        // Install the exact closed-form contact planes.
        for f in &mut poly.facets {
            if let Some(w) = contacts.iter().find(|w| (&f.normal - *w).norm() < 1e-6) {
                f.normal = w.clone();
                f.offset = 1.0;
            }
        }
        Ok(poly)
    }

    /// Cube [-1, 1]^n.
    pub fn cube(dim: usize) -> Result<Polytope> {
        check_dim(dim)?;
        let mut hs = Vec::new();
        for i in 0..dim {
            for s in [-1.0, 1.0] {
                let mut u = DVector::zeros(dim);
                u[i] = s;
                hs.push(Halfspace {
                    normal: u,
                    offset: 1.0,
                });
            }
        }
        Polytope::from_halfspaces(dim, &hs, DEFAULT_TOL)
    }

    /// Cross-polytope conv{+-e_i}.
    pub fn cross_polytope(dim: usize) -> Result<Polytope> {
        check_dim(dim)?;
        let mut pts = Vec::new();
        for i in 0..dim {
            for s in [-1.0, 1.0] {
                let mut v = DVector::zeros(dim);
                v[i] = s;
                pts.push(v);
            }
        }
        Polytope::from_vertices(dim, &pts, DEFAULT_TOL)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn vertices(&self) -> &[DVector<f64>] {
        &self.vertices
    }

    pub fn halfspaces(&self) -> Vec<Halfspace> {
        self.facets
            .iter()
            .map(|f| Halfspace {
                normal: f.normal.clone(),
                offset: f.offset,
            })
            .collect()
    }

    /// Geometric facet count (coplanar pieces merged).
    pub fn facet_count(&self) -> usize {
        self.facets.len()
    }

    /// Facet areas aligned with `halfspaces()`.
    pub fn facet_areas(&self) -> Vec<f64> {
        self.facets.iter().map(|f| f.area).collect()
    }

    fn scale(&self) -> f64 {
        self.vertices
            .iter()
            .map(|v| v.norm())
            .fold(1.0f64, f64::max)
    }

    pub fn volume(&self) -> f64 {
        self.volume
    }

    pub fn surface_area(&self) -> f64 {
        self.facets.iter().map(|f| f.area).sum()
    }

    /// Isoperimetric ratio S^n / V^{n-1}.
    pub fn isoperimetric_ratio(&self) -> f64 {
        let v = self.volume();
        let s = self.surface_area();
        s.powi(self.dim as i32) / v.powi(self.dim as i32 - 1)
    }

    /// Volume centroid.
    pub fn centroid(&self) -> DVector<f64> {
        self.centroid.clone()
    }

    pub fn vertex_centroid(&self) -> DVector<f64> {
        let mut c = DVector::zeros(self.dim);
        for v in &self.vertices {
            c += v;
        }
        c / self.vertices.len() as f64
    }

    /// Membership within the given absolute tolerance.
    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        self.facets.iter().all(|f| f.normal.dot(x) <= f.offset + tol)
    }

    /// Support function h(u) = max_x <u, x>.
    pub fn support(&self, dir: &DVector<f64>) -> f64 {
        self.vertices
            .iter()
            .map(|v| dir.dot(v))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Gauge (Minkowski functional). Requires the origin strictly inside.
    pub fn gauge(&self, x: &DVector<f64>) -> Result<f64> {
        let mut g: f64 = 0.0;
        for f in &self.facets {
            if f.offset <= self.tol {
                return Err(Error::OriginOutside);
            }
            g = g.max(f.normal.dot(x) / f.offset);
        }
        Ok(g.max(0.0))
    }

    /// Radial function r(d) = max {t >= 0 : t d in K}; requires 0 interior.
    pub fn radial(&self, dir: &DVector<f64>) -> Result<f64> {
        let g = self.gauge(dir)?;
        if g <= 0.0 {
            return Err(Error::Unbounded);
        }
        Ok(1.0 / g)
    }

    /// Image under an invertible affine map. Exact: no re-hulling; facet
    /// areas scale by |det M| |M^{-T} u|.
    pub fn affine_image(&self, map: &AffineMap) -> Result<Polytope> {
        let det = map.linear.determinant();
        if det.abs() < 1e-12 {
            return Err(Error::SingularTransform { det });
        }
        let inv_t = map
            .linear
            .clone()
            .try_inverse()
            .ok_or(Error::SingularTransform { det })?
            .transpose();
        let vertices: Vec<DVector<f64>> = self.vertices.iter().map(|v| map.apply(v)).collect();
        let facets = self
            .facets
            .iter()
            .map(|f| {
                let w = &inv_t * &f.normal;
                let norm = w.norm();
                FacetInfo {
                    normal: &w / norm,
                    offset: (f.offset + w.dot(&map.shift)) / norm,
                    area: f.area * det.abs() * norm,
                }
            })
            .collect();
        Ok(Polytope {
            dim: self.dim,
            vertices,
            facets,
            volume: self.volume * det.abs(),
            centroid: map.apply(&self.centroid),
            tol: self.tol,
        })
    }

    /// Translate by t.
    pub fn translate(&self, t: &DVector<f64>) -> Polytope {
        let map = AffineMap {
            linear: DMatrix::identity(self.dim, self.dim),
            shift: t.clone(),
        };
        self.affine_image(&map).expect("translation is invertible")
    }

    /// Uniform scaling about the origin.
    pub fn scaled(&self, s: f64) -> Result<Polytope> {
        let map = AffineMap {
            linear: DMatrix::identity(self.dim, self.dim) * s,
            shift: DVector::zeros(self.dim),
        };
        self.affine_image(&map)
    }

    /// Intersection volume; zero when the interiors are disjoint.
    pub fn intersection_volume(&self, other: &Polytope) -> Result<f64> {
        if self.dim != other.dim {
            return Err(Error::InvalidInput("dimension mismatch".into()));
        }
        if self.dim == 2 {
            let mut poly = polygon_loop(self);
            for f in &other.facets {
                poly = clip_polygon(&poly, &f.normal, f.offset);
                if poly.len() < 3 {
                    return Ok(0.0);
                }
            }
            return Ok(polygon_area(&poly));
        }
        let mut hs = self.halfspaces();
        hs.extend(other.halfspaces());
        match Polytope::from_halfspaces(self.dim, &hs, self.tol) {
            Ok(p) => Ok(p.volume()),
            Err(Error::EmptyInterior) | Err(Error::DegenerateInput(_)) => Ok(0.0),
            Err(e) => Err(e),
        }
    }

    /// Volume of the symmetric difference V(K delta M); disjoint bodies allowed.
    pub fn symmetric_difference_volume(&self, other: &Polytope) -> Result<f64> {
        let inter = self.intersection_volume(other)?;
        Ok((self.volume() + other.volume() - 2.0 * inter).max(0.0))
    }

    /// Fraction of the volume on the side {<dir, x> >= <dir, centroid>}.
    pub fn centroid_halfspace_fraction(&self, dir: &DVector<f64>) -> Result<f64> {
        let norm = dir.norm();
        if norm <= 0.0 {
            return Err(Error::InvalidInput("zero direction".into()));
        }
        let u = dir / norm;
        let c = self.centroid();
        let cut = Halfspace {
            normal: -&u,
            offset: -u.dot(&c),
        };
        let vol = self.volume();
        if self.dim == 2 {
            let poly = clip_polygon(&polygon_loop(self), &cut.normal, cut.offset);
            let piece = if poly.len() < 3 { 0.0 } else { polygon_area(&poly) };
            return Ok(piece / vol);
        }
        let mut hs = self.halfspaces();
        hs.push(cut);
        let piece = Polytope::from_halfspaces(self.dim, &hs, self.tol)?.volume();
        Ok(piece / vol)
    }

    /// Consistency report between the stored representations.
    pub fn dual_representation_check(&self) -> Result<()> {
        let scale = self.scale();
        let tol = 100.0 * self.tol * scale;
        for (i, v) in self.vertices.iter().enumerate() {
            for f in &self.facets {
                if f.normal.dot(v) > f.offset + tol {
                    return Err(Error::InvalidInput(format!(
                        "vertex {i} violates a halfspace by {:.3e}",
                        f.normal.dot(v) - f.offset
                    )));
                }
            }
        }
        for (j, f) in self.facets.iter().enumerate() {
            let support = self
                .vertices
                .iter()
                .map(|v| f.normal.dot(v))
                .fold(f64::NEG_INFINITY, f64::max);
            if support < f.offset - tol {
                return Err(Error::InvalidInput(format!(
                    "halfspace {j} is not supporting (gap {:.3e})",
                    f.offset - support
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(BodyJson {
            dim: self.dim,
            halfspaces: Some(
                self.facets
                    .iter()
                    .map(|f| {
                        let mut row: Vec<f64> = f.normal.iter().copied().collect();
                        row.push(f.offset);
                        row
                    })
                    .collect(),
            ),
            vertices: Some(
                self.vertices
                    .iter()
                    .map(|v| v.iter().copied().collect())
                    .collect(),
            ),
        })
        .expect("body serialization cannot fail")
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Polytope> {
        let body: BodyJson = serde_json::from_value(value.clone())?;
        let tol = DEFAULT_TOL;
        match (&body.vertices, &body.halfspaces) {
            (Some(vs), _) if !vs.is_empty() => {
                let pts: Vec<DVector<f64>> =
                    vs.iter().map(|v| DVector::from_vec(v.clone())).collect();
                Polytope::from_vertices(body.dim, &pts, tol)
            }
            (_, Some(hs)) if !hs.is_empty() => {
                let list: Result<Vec<Halfspace>> = hs
                    .iter()
                    .map(|row| {
                        if row.len() != body.dim + 1 {
                            return Err(Error::InvalidInput(
                                "halfspace row must have dim + 1 entries".into(),
                            ));
                        }
                        Ok(Halfspace {
                            normal: DVector::from_vec(row[..body.dim].to_vec()),
                            offset: row[body.dim],
                        })
                    })
                    .collect();
                Polytope::from_halfspaces(body.dim, &list?, tol)
            }
            _ => Err(Error::InvalidInput(
                "body JSON needs vertices or halfspaces".into(),
            )),
        }
    }
}

/// Contact unit vectors w_1..w_{n+1} of the regular circumscribed simplex:
/// sum w_i = 0, <w_i, w_j> = -1/n for i != j.
pub fn regular_simplex_contacts(dim: usize) -> Vec<DVector<f64>> {
    let n = dim;
    // Equiangular frame: project the standard basis of R^{n+1} onto the
    // hyperplane orthogonal to (1,...,1), expressed in an orthonormal basis.
    let mut raw: Vec<DVector<f64>> = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let mut e = DVector::zeros(n + 1);
        e[i] = 1.0;
        let mean = 1.0 / (n as f64 + 1.0);
        let p = e - DVector::from_element(n + 1, mean);
        raw.push(&p / p.norm());
    }
    let basis = linalg::gram_schmidt(&raw, n, 1e-12).expect("frame spans the hyperplane");
    raw.iter()
        .map(|w| DVector::from_fn(n, |r, _| basis[r].dot(w)))
        .map(|v| {
            let norm = v.norm();
            v / norm
        })
        .collect()
}

fn check_dim(dim: usize) -> Result<()> {
    if (2..=5).contains(&dim) {
        Ok(())
    } else {
        Err(Error::InvalidDimension(dim))
    }
}

fn dedup_points(points: &[DVector<f64>], tol: f64) -> Vec<DVector<f64>> {
    let scale = points.iter().map(|p| p.norm()).fold(1.0f64, f64::max);
    let merge = tol * scale;
    let mut out: Vec<DVector<f64>> = Vec::with_capacity(points.len());
    for p in points {
        if !out.iter().any(|q| (p - q).norm() <= merge) {
            out.push(p.clone());
        }
    }
    out
}

/// Simplicial facet of a working hull.
#[derive(Debug, Clone)]
struct HullFacet {
    normal: DVector<f64>,
    offset: f64,
    simplex: Vec<usize>,
}

struct Hull {
    facets: Vec<HullFacet>,
}

impl Hull {
    fn vertex_ids(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self
            .facets
            .iter()
            .flat_map(|f| f.simplex.iter().copied())
            .collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}

/// Hyperplane through the points `ids`, oriented away from `interior`.
fn facet_plane(
    points: &[DVector<f64>],
    ids: &[usize],
    interior: &DVector<f64>,
    tol: f64,
) -> Result<(DVector<f64>, f64)> {
    let n = points[0].len();
    let base = &points[ids[0]];
    let edges: Vec<DVector<f64>> = ids[1..].iter().map(|&i| &points[i] - base).collect();
    let basis = linalg::gram_schmidt(&edges, n - 1, tol)
        .map_err(|_| Error::DegenerateInput("degenerate facet".into()))?;
    let full = linalg::complete_basis(&basis, n);
    let mut normal = full[n - 1].clone();
    let mut offset = normal.dot(base);
    if normal.dot(interior) > offset {
        normal = -normal;
        offset = -offset;
    }
    Ok((normal, offset))
}

/// Deterministic symmetry-breaking perturbation: small against geometric
/// feature scales, large against the plane-fit noise it induces (~1e-10), so
/// every visibility predicate is decided by the joggle, never by noise.
const JOGGLE_REL: f64 = 1e-6;

/// Beneath-beyond incremental convex hull with simplicial facets.
fn convex_hull(dim: usize, points: &[DVector<f64>], tol: f64) -> Result<Hull> {
    use rand::{Rng, SeedableRng};
    let n = dim;
    let scale = points.iter().map(|p| p.norm()).fold(1.0f64, f64::max);
    let degen = tol.max(1e-9) * scale;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x9E37_79B9_7F4A_7C15);
    let jog: Vec<DVector<f64>> = points
        .iter()
        .map(|p| {
            p + DVector::from_fn(n, |_, _| (rng.random::<f64>() - 0.5) * JOGGLE_REL * scale)
        })
        .collect();

    // Initial affinely independent simplex, greedily maximizing spread.
    // Degeneracy of the input is judged on the original coordinates.
    let mut chosen: Vec<usize> = vec![0];
    {
        let mut best = (0.0, 0usize);
        for (i, p) in points.iter().enumerate() {
            let d = (p - &points[0]).norm();
            if d > best.0 {
                best = (d, i);
            }
        }
        if best.0 <= degen {
            return Err(Error::DegenerateInput("all points coincide".into()));
        }
        chosen.push(best.1);
    }
    while chosen.len() < n + 1 {
        let base = &points[chosen[0]];
        let edges: Vec<DVector<f64>> = chosen[1..].iter().map(|&i| &points[i] - base).collect();
        let basis = linalg::gram_schmidt(&edges, edges.len(), 1e-13)?;
        let mut best = (0.0, 0usize);
        for (i, p) in points.iter().enumerate() {
            if chosen.contains(&i) {
                continue;
            }
            let mut r = p - base;
            for b in &basis {
                let d = b.dot(&r);
                r -= b * d;
            }
            let dist = r.norm();
            if dist > best.0 {
                best = (dist, i);
            }
        }
        if best.0 <= degen {
            return Err(Error::DegenerateInput(
                "points are not full-dimensional".into(),
            ));
        }
        chosen.push(best.1);
    }

    let mut interior = DVector::zeros(n);
    for &i in &chosen {
        interior += &jog[i];
    }
    interior /= (n + 1) as f64;

    let mut facets: Vec<HullFacet> = Vec::new();
    for skip in 0..=n {
        let ids: Vec<usize> = chosen
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != skip)
            .map(|(_, &i)| i)
            .collect();
        let (normal, offset) = facet_plane(&jog, &ids, &interior, 1e-13)?;
        facets.push(HullFacet {
            normal,
            offset,
            simplex: ids,
        });
    }

    // Insert remaining points farthest-first for numerical robustness.
    let mut order: Vec<usize> = (0..points.len()).filter(|i| !chosen.contains(i)).collect();
    order.sort_by(|&a, &b| {
        let da = (&jog[a] - &interior).norm();
        let db = (&jog[b] - &interior).norm();
        db.total_cmp(&da).then(a.cmp(&b))
    });

    for p_idx in order {
        let p = &jog[p_idx];
        let visible: Vec<usize> = facets
            .iter()
            .enumerate()
            .filter(|(_, f)| f.normal.dot(p) > f.offset)
            .map(|(k, _)| k)
            .collect();
        if visible.is_empty() {
            continue;
        }
        // Horizon ridges: (n-1)-subsets shared by exactly one visible facet.
        let mut ridge_count: std::collections::HashMap<Vec<usize>, usize> =
            std::collections::HashMap::new();
        for &k in &visible {
            let s = &facets[k].simplex;
            for skip in 0..s.len() {
                let mut ridge: Vec<usize> = s
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != skip)
                    .map(|(_, &v)| v)
                    .collect();
                ridge.sort_unstable();
                *ridge_count.entry(ridge).or_insert(0) += 1;
            }
        }
        let visible_set: std::collections::HashSet<usize> = visible.iter().copied().collect();
        let mut new_facets: Vec<HullFacet> = Vec::new();
        let mut horizon: Vec<Vec<usize>> = ridge_count
            .iter()
            .filter(|&(_, &c)| c == 1)
            .map(|(r, _)| r.clone())
            .collect();
        horizon.sort();
        for ridge in horizon {
            let mut ids = ridge.clone();
            ids.push(p_idx);
            match facet_plane(&jog, &ids, &interior, 1e-13) {
                Ok((normal, offset)) => new_facets.push(HullFacet {
                    normal,
                    offset,
                    simplex: ids,
                }),
                Err(_) => continue,
            }
        }
        let mut kept: Vec<HullFacet> = facets
            .into_iter()
            .enumerate()
            .filter(|(k, _)| !visible_set.contains(k))
            .map(|(_, f)| f)
            .collect();
        kept.extend(new_facets);
        facets = kept;
    }

    // Refit output planes from the original coordinates; exact whenever the
    // facet's points are truly coplanar. A refit is only trusted inside the
    // joggle's perturbation range: sliver facets with nearly affinely
    // dependent original points whip arbitrarily far and keep the joggled
    // plane instead (they carry negligible area and are filtered later).
    let mut interior_orig = DVector::zeros(n);
    for &i in &chosen {
        interior_orig += &points[i];
    }
    interior_orig /= (n + 1) as f64;
    for f in &mut facets {
        if let Ok((normal, offset)) = facet_plane(points, &f.simplex, &interior_orig, 1e-13) {
            if (&normal - &f.normal).norm() <= 1e-2
                && (offset - f.offset).abs() <= 1e-2 * scale.max(1.0)
            {
                f.normal = normal;
                f.offset = offset;
            }
        }
    }

    Ok(Hull { facets })
}

/// Distinct geometric facet planes of a hull (coplanar pieces merged).
fn merged_planes(hull: &Hull, points: &[DVector<f64>]) -> Vec<Halfspace> {
    let scale = points.iter().map(|v| v.norm()).fold(1.0f64, f64::max);
    let ang = 1e-6;
    let mut out: Vec<Halfspace> = Vec::new();
    for f in &hull.facets {
        let dup = out.iter().any(|h| {
            (&h.normal - &f.normal).norm() <= ang && (h.offset - f.offset).abs() <= ang * scale
        });
        if !dup {
            out.push(Halfspace {
                normal: f.normal.clone(),
                offset: f.offset,
            });
        }
    }
    out
}

/// Exact metric data of the hull of a full-dimensional point set.
struct Measures {
    volume: f64,
    centroid: DVector<f64>,
    facets: Vec<FacetInfo>,
    vertex_ids: Vec<usize>,
}

/// Volume, centroid, and geometric facet measures of conv(points), computed
/// recursively: facet areas are (dim-1)-volumes in facet coordinates and the
/// divergence identity assembles the volume and centroid. Exact for
/// degenerate (coplanar-family) inputs because every true facet plane is
/// refit from original coordinates.
fn measure_point_set(dim: usize, points: &[DVector<f64>]) -> Result<Measures> {
    let hull = convex_hull(dim, points, 1e-9)?;
    let vertex_ids = hull.vertex_ids();
    let scale = points.iter().map(|p| p.norm()).fold(1.0f64, f64::max);

    if dim == 2 {
        // Order hull vertices counterclockwise; shoelace formulas are exact.
        let mut c = DVector::zeros(2);
        for &i in &vertex_ids {
            c += &points[i];
        }
        c /= vertex_ids.len() as f64;
        let mut ids = vertex_ids.clone();
        ids.sort_by(|&a, &b| {
            let ta = (points[a][1] - c[1]).atan2(points[a][0] - c[0]);
            let tb = (points[b][1] - c[1]).atan2(points[b][0] - c[0]);
            ta.total_cmp(&tb)
        });
        let k = ids.len();
        let mut twice = 0.0;
        let mut cx = 0.0;
        let mut cy = 0.0;
        let mut facets: Vec<FacetInfo> = Vec::with_capacity(k);
        for i in 0..k {
            let a = &points[ids[i]];
            let b = &points[ids[(i + 1) % k]];
            let cross = a[0] * b[1] - b[0] * a[1];
            twice += cross;
            cx += (a[0] + b[0]) * cross;
            cy += (a[1] + b[1]) * cross;
            let e = b - a;
            let len = e.norm();
            if len > 1e-14 * scale.max(1.0) {
                // Outward normal of a ccw loop.
                let normal = DVector::from_vec(vec![e[1] / len, -e[0] / len]);
                let offset = normal.dot(a);
                merge_facet_contribution(&mut facets, normal, offset, len, scale);
            }
        }
        if twice <= 0.0 {
            return Err(Error::DegenerateInput("hull has no area".into()));
        }
        let area = twice / 2.0;
        let centroid = DVector::from_vec(vec![cx / (3.0 * twice), cy / (3.0 * twice)]);
        return Ok(Measures {
            volume: area,
            centroid,
            facets,
            vertex_ids,
        });
    }

    let planes = merged_planes(&hull, points);
    let band = 1e-7 * scale.max(1.0);
    let mut facets: Vec<FacetInfo> = Vec::new();
    let mut vol_sum = 0.0;
    let mut cent_sum = DVector::zeros(dim);
    for h in &planes {
        // Joggle-artifact planes fail one of the three gates below and carry
        // no area; true facet planes pass all of them with wide margins.
        let incident: Vec<DVector<f64>> = vertex_ids
            .iter()
            .map(|&i| &points[i])
            .filter(|v| (h.normal.dot(v) - h.offset).abs() <= band)
            .cloned()
            .collect();
        if incident.len() < dim {
            continue;
        }
        let base = incident[0].clone();
        let dirs: Vec<DVector<f64>> = incident[1..].iter().map(|v| v - &base).collect();
        let Ok(basis) = linalg::gram_schmidt_span(&dirs, dim - 1, 1e-9) else {
            continue;
        };
        let coords: Vec<DVector<f64>> = incident
            .iter()
            .map(|v| DVector::from_fn(dim - 1, |r, _| basis[r].dot(&(v - &base))))
            .collect();
        let sub = match measure_point_set(dim - 1, &coords) {
            Ok(s) => s,
            Err(Error::DegenerateInput(_)) => continue,
            Err(e) => return Err(e),
        };
        let mut centroid_f = base.clone();
        for (r, b) in basis.iter().enumerate() {
            centroid_f += b * sub.centroid[r];
        }
        vol_sum += sub.volume * h.offset;
        cent_sum += centroid_f * (sub.volume * h.offset);
        facets.push(FacetInfo {
            normal: h.normal.clone(),
            offset: h.offset,
            area: sub.volume,
        });
    }
    let volume = vol_sum / dim as f64;
    if volume <= 0.0 || facets.len() < dim + 1 {
        return Err(Error::DegenerateInput("hull has no volume".into()));
    }
    let centroid = cent_sum / ((dim as f64 + 1.0) * volume);
    Ok(Measures {
        volume,
        centroid,
        facets,
        vertex_ids,
    })
}

/// Accumulate a 2D edge into the facet list, merging collinear edges.
fn merge_facet_contribution(
    facets: &mut Vec<FacetInfo>,
    normal: DVector<f64>,
    offset: f64,
    area: f64,
    scale: f64,
) {
    for f in facets.iter_mut() {
        if (&f.normal - &normal).norm() <= 1e-9 && (f.offset - offset).abs() <= 1e-9 * scale.max(1.0)
        {
            f.area += area;
            return;
        }
    }
    facets.push(FacetInfo {
        normal,
        offset,
        area,
    });
}

/// Vertices of a 2D polytope in counterclockwise order.
pub fn polygon_loop(poly: &Polytope) -> Vec<DVector<f64>> {
    assert_eq!(poly.dim, 2);
    let c = poly.vertex_centroid();
    let mut vs: Vec<DVector<f64>> = poly.vertices.to_vec();
    vs.sort_by(|a, b| {
        let ta = (a[1] - c[1]).atan2(a[0] - c[0]);
        let tb = (b[1] - c[1]).atan2(b[0] - c[0]);
        ta.total_cmp(&tb)
    });
    vs
}

/// Shoelace area of a simple polygon given in order.
pub fn polygon_area(loop_pts: &[DVector<f64>]) -> f64 {
    let k = loop_pts.len();
    let mut twice = 0.0;
    for i in 0..k {
        let a = &loop_pts[i];
        let b = &loop_pts[(i + 1) % k];
        twice += a[0] * b[1] - b[0] * a[1];
    }
    twice.abs() / 2.0
}

/// Perimeter of a polygon loop.
pub fn polygon_perimeter(loop_pts: &[DVector<f64>]) -> f64 {
    let k = loop_pts.len();
    (0..k)
        .map(|i| (&loop_pts[(i + 1) % k] - &loop_pts[i]).norm())
        .sum()
}

/// Sutherland-Hodgman clip of a polygon loop by {<u, x> <= b}.
pub fn clip_polygon(loop_pts: &[DVector<f64>], u: &DVector<f64>, b: f64) -> Vec<DVector<f64>> {
    let mut out = Vec::with_capacity(loop_pts.len() + 2);
    let k = loop_pts.len();
    for i in 0..k {
        let cur = &loop_pts[i];
        let nxt = &loop_pts[(i + 1) % k];
        let dc = u.dot(cur) - b;
        let dn = u.dot(nxt) - b;
        if dc <= 0.0 {
            out.push(cur.clone());
        }
        if (dc < 0.0 && dn > 0.0) || (dc > 0.0 && dn < 0.0) {
            let t = dc / (dc - dn);
            out.push(cur + (nxt - cur) * t);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{simplex_surface, simplex_volume};
    use approx::assert_relative_eq;
    use rand::prelude::*;

    #[test]
    fn cube_volume_surface_all_dims() {
        for n in 2..=5 {
            let c = match Polytope::cube(n) {
                Ok(c) => c,
                Err(e) => panic!("cube({n}): {e}"),
            };
            assert_relative_eq!(c.volume(), 2f64.powi(n as i32), max_relative = 1e-10);
            assert_relative_eq!(
                c.surface_area(),
                n as f64 * 2f64.powi(n as i32),
                max_relative = 1e-10
            );
            assert_eq!(c.facet_count(), 2 * n);
            assert_eq!(c.vertices().len(), 1 << n);
            assert_relative_eq!(c.centroid().norm(), 0.0, epsilon = 1e-9);
            c.dual_representation_check().unwrap();
        }
    }

    #[test]
    fn regular_simplex_closed_forms() {
        for n in 2..=5 {
            let s = Polytope::regular_simplex(n).unwrap();
            assert_relative_eq!(s.volume(), simplex_volume(n), max_relative = 1e-9);
            assert_relative_eq!(s.surface_area(), simplex_surface(n), max_relative = 1e-9);
            assert_eq!(s.facet_count(), n + 1);
            assert_eq!(s.vertices().len(), n + 1);
            // Circumscribed about the unit ball: all contact planes at offset 1.
            for h in s.halfspaces() {
                assert_relative_eq!(h.offset, 1.0, epsilon = 1e-12);
                assert_relative_eq!(h.normal.norm(), 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn simplex_contacts_tight_frame() {
        for n in 2..=5 {
            let ws = regular_simplex_contacts(n);
            assert_eq!(ws.len(), n + 1);
            let mut sum = DVector::zeros(n);
            for w in &ws {
                sum += w;
            }
            assert_relative_eq!(sum.norm(), 0.0, epsilon = 1e-12);
            for i in 0..=n {
                for j in 0..i {
                    assert_relative_eq!(ws[i].dot(&ws[j]), -1.0 / n as f64, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn cross_polytope_volume_and_offsets() {
        let oct = Polytope::cross_polytope(3).unwrap();
        assert_relative_eq!(oct.volume(), 4.0 / 3.0, max_relative = 1e-10);
        assert_relative_eq!(oct.surface_area(), 4.0 * 3f64.sqrt(), max_relative = 1e-10);
        assert_eq!(oct.facet_count(), 8);
        let sq = Polytope::cross_polytope(2).unwrap();
        for h in sq.halfspaces() {
            assert_relative_eq!(h.offset, 1.0 / 2f64.sqrt(), epsilon = 1e-12);
        }
    }

    #[test]
    fn from_halfspaces_recovers_cube_vertices() {
        let c = Polytope::cube(3).unwrap();
        assert_eq!(c.vertices().len(), 8);
        for v in c.vertices() {
            for x in v.iter() {
                assert_relative_eq!(x.abs(), 1.0, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn unbounded_detected() {
        let hs = vec![Halfspace {
            normal: DVector::from_vec(vec![1.0, 0.0]),
            offset: 1.0,
        }];
        assert!(matches!(
            Polytope::from_halfspaces(2, &hs, 1e-9),
            Err(Error::Unbounded)
        ));
    }

    #[test]
    fn degenerate_vertices_detected() {
        let pts: Vec<DVector<f64>> = (0..5)
            .map(|i| DVector::from_vec(vec![i as f64, 2.0 * i as f64]))
            .collect();
        assert!(matches!(
            Polytope::from_vertices(2, &pts, 1e-9),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn affine_image_scales_volume_by_det() {
        let mut rng = StdRng::seed_from_u64(5);
        for n in 2..=4 {
            let body = Polytope::regular_simplex(n).unwrap();
            for _ in 0..10 {
                let m = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() * 2.0 - 1.0)
                    + DMatrix::identity(n, n) * 1.5;
                let t = DVector::from_fn(n, |_, _| rng.random::<f64>() - 0.5);
                let det = m.determinant().abs();
                if det < 1e-3 {
                    continue;
                }
                let img = body
                    .affine_image(&AffineMap {
                        linear: m,
                        shift: t,
                    })
                    .unwrap();
                assert_relative_eq!(img.volume(), det * body.volume(), max_relative = 1e-8);
                img.dual_representation_check().unwrap();
                // Surface area matches a fresh hull of the mapped vertices.
                let rebuilt = Polytope::from_vertices(n, img.vertices(), 1e-9).unwrap();
                assert_relative_eq!(
                    img.surface_area(),
                    rebuilt.surface_area(),
                    max_relative = 1e-8
                );
            }
        }
    }

    #[test]
    fn symmetric_difference_shifted_squares() {
        let sq = Polytope::cube(2).unwrap();
        let shifted = sq.translate(&DVector::from_vec(vec![1.0, 0.0]));
        assert_relative_eq!(
            sq.symmetric_difference_volume(&shifted).unwrap(),
            4.0,
            max_relative = 1e-10
        );
        assert_relative_eq!(
            sq.symmetric_difference_volume(&sq).unwrap(),
            0.0,
            epsilon = 1e-10
        );
        let far = sq.translate(&DVector::from_vec(vec![10.0, 0.0]));
        assert_relative_eq!(
            sq.symmetric_difference_volume(&far).unwrap(),
            8.0,
            max_relative = 1e-10
        );
    }

    #[test]
    fn symmetric_difference_3d_matches_inclusion() {
        let c = Polytope::cube(3).unwrap();
        let small = c.scaled(0.5).unwrap();
        assert_relative_eq!(
            c.symmetric_difference_volume(&small).unwrap(),
            8.0 - 1.0,
            max_relative = 1e-9
        );
    }

    #[test]
    fn centroid_fraction_simplex_toward_vertex() {
        // Cutting T^n at the centroid perpendicular to a contact direction:
        // the side containing the opposite vertex holds (n/(n+1))^n.
        for n in 2..=3 {
            let s = Polytope::regular_simplex(n).unwrap();
            let w = s.halfspaces()[0].normal.clone();
            let frac = s.centroid_halfspace_fraction(&(-w)).unwrap();
            let expect = ((n as f64) / (n as f64 + 1.0)).powi(n as i32);
            assert_relative_eq!(frac, expect, max_relative = 1e-9);
        }
    }

    #[test]
    fn centroid_of_simplex_is_origin() {
        for n in 2..=5 {
            let s = Polytope::regular_simplex(n).unwrap();
            assert_relative_eq!(s.centroid().norm(), 0.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn random_hulls_satisfy_duality() {
        let mut rng = StdRng::seed_from_u64(99);
        for n in 2..=5 {
            for _ in 0..5 {
                let pts: Vec<DVector<f64>> = (0..3 * n + 4)
                    .map(|_| {
                        let v = DVector::from_fn(n, |_, _| rng.random::<f64>() * 2.0 - 1.0);
                        let norm = v.norm();
                        if norm > 1e-6 {
                            v / norm
                        } else {
                            DVector::from_element(n, 1.0 / (n as f64).sqrt())
                        }
                    })
                    .collect();
                let Ok(p) = Polytope::from_vertices(n, &pts, 1e-9) else {
                    continue;
                };
                p.dual_representation_check().unwrap();
                assert!(p.volume() > 0.0);
                // Round trip through halfspaces preserves the metric data.
                let q = Polytope::from_halfspaces(n, &p.halfspaces(), 1e-9).unwrap();
                for v in q.vertices() {
                    let viol = p
                        .halfspaces()
                        .iter()
                        .map(|h| h.normal.dot(v) - h.offset)
                        .fold(f64::NEG_INFINITY, f64::max);
                    assert!(viol < 1e-6, "dim {n}: dual vertex violates by {viol:.3e}");
                }
                assert_relative_eq!(q.volume(), p.volume(), max_relative = 1e-7);
                assert_relative_eq!(q.surface_area(), p.surface_area(), max_relative = 1e-7);
                for v in p.vertices() {
                    assert!(q.contains(v, 1e-6), "dim {n}: original vertex lost");
                }
            }
        }
    }

    #[test]
    fn json_round_trip() {
        let s = Polytope::regular_simplex(3).unwrap();
        let j = s.to_json();
        let back = Polytope::from_json(&j).unwrap();
        assert_relative_eq!(back.volume(), s.volume(), max_relative = 1e-9);
        let hs_only = serde_json::json!({
            "dim": 2,
            "halfspaces": [[1.0, 0.0, 1.0], [-1.0, 0.0, 1.0], [0.0, 1.0, 1.0], [0.0, -1.0, 1.0]],
        });
        let sq = Polytope::from_json(&hs_only).unwrap();
        assert_relative_eq!(sq.volume(), 4.0, max_relative = 1e-9);
    }

    #[test]
    fn polygon_clip_matches_known_area() {
        let sq = Polytope::cube(2).unwrap();
        let cut = clip_polygon(&polygon_loop(&sq), &DVector::from_vec(vec![1.0, 1.0]), 0.0);
        assert_relative_eq!(polygon_area(&cut), 2.0, max_relative = 1e-12);
    }

    #[test]
    fn gauge_and_radial() {
        let s = Polytope::regular_simplex(2).unwrap();
        let w = s.halfspaces()[0].normal.clone();
        assert_relative_eq!(s.gauge(&w).unwrap(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(s.radial(&(-w.clone())).unwrap(), 2.0, epsilon = 1e-9);
        assert_relative_eq!(s.support(&w), 1.0, epsilon = 1e-9);
    }
}
