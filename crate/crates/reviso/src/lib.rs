//! Convex-geometry numerics for reverse isoperimetric stability constructions.
//!
//! The crate verifies, at desk scale (dimensions 2 through 5), the building
//! blocks behind stability versions of the reverse isoperimetric inequality:
//! John positions and contact decompositions, centred isotropic measures on
//! the sphere and the polytopes they circumscribe, determinant stability
//! certificates, the Gaussian transport map, affine-invariant distances,
//! planar sharp bounds, and an experiment harness tying them together.

pub mod detstab;
pub mod distances;
pub mod error;
pub mod geom;
pub mod harness;
pub mod john;
pub mod linalg;
pub mod measures;
pub mod nnls;
pub mod opt;
pub mod ot;
pub mod planar;
pub mod quad;
pub mod special;
pub mod transport;
pub mod zbody;

pub use error::{Error, Result};

/// Default absolute/relative tolerance for geometric predicates.
pub const DEFAULT_TOL: f64 = 1e-9;

/// Contact detection threshold is this multiple of the working tolerance.
pub const CONTACT_SCALE: f64 = 10.0;

/// Volume of the regular simplex circumscribed about the unit ball in R^n.
pub fn simplex_volume(n: usize) -> f64 {
    let nf = n as f64;
    nf.powf(nf / 2.0) * (nf + 1.0).powf((nf + 1.0) / 2.0) / factorial(n)
}

/// Surface area of the regular simplex circumscribed about the unit ball.
pub fn simplex_surface(n: usize) -> f64 {
    n as f64 * simplex_volume(n)
}

/// Isoperimetric ratio S^n / V^{n-1} of the circumscribed regular simplex.
pub fn simplex_isoperimetric_ratio(n: usize) -> f64 {
    let nf = n as f64;
    nf.powi(n as i32) * simplex_volume(n)
}

pub(crate) fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Volume of the unit ball in R^n.
pub fn unit_ball_volume(n: usize) -> f64 {
    // V_n = pi^{n/2} / Gamma(n/2 + 1), by the half-integer Gamma recursion.
    let mut v = 1.0;
    let mut k = n;
    while k >= 2 {
        v *= 2.0 * std::f64::consts::PI / k as f64;
        k -= 2;
    }
    if k == 1 {
        v *= 2.0;
    }
    v
}
