use serde::{Deserialize, Serialize};

use crate::cost::euclidean;
use crate::error::{Error, Result};

const GOLDEN_TOL: f64 = 1e-8;
const SCAN_POINTS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    /// `min(1, 2 exp(−min_i dist_i² / 2σ²))`
    pub bound: f64,
    /// Distance from each mean to the decision surface.
    pub distances: [f64; 2],
    /// `min(1, 2 exp(−dist_i² / 2σ²))` for each mean separately.
    pub per_class: [f64; 2],
    /// Prototype separation `‖f2 − f1‖`.
    pub separation: f64,
    /// Focal difference `w* + g`.
    pub offset: f64,
}

/// Probability bound for misclassifying a sample whose score exceeds `g`.
///
/// The decision surface is `{x : ‖x − f1‖ − (w* + g) = ‖x − f2‖}`, one sheet
/// of a hyperboloid of revolution about the line through `f1` and `f2`.
pub fn misclassification_bound(
    f1: &[f64],
    f2: &[f64],
    w_star: f64,
    g: f64,
    m1: &[f64],
    m2: &[f64],
    sigma: f64,
) -> Result<BoundReport> {
    let dim = f1.len();
    for v in [f2, m1, m2] {
        if v.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: v.len(),
            });
        }
    }
    if dim == 0 {
        return Err(Error::invalid("empty vectors"));
    }
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::invalid(format!("sigma must be > 0, got {sigma}")));
    }
    let all_finite = [f1, f2, m1, m2].iter().all(|v| v.iter().all(|x| x.is_finite()));
    if !all_finite || !w_star.is_finite() || !g.is_finite() {
        return Err(Error::invalid("non-finite input"));
    }
    let matched = euclidean(m1, f1) + euclidean(m2, f2);
    let crossed = euclidean(m1, f2) + euclidean(m2, f1);
    if !(matched < crossed) {
        return Err(Error::Precondition(format!(
            "means are not closer to their own prototypes: {matched} >= {crossed}"
        )));
    }
    let d = euclidean(f1, f2);
    let s = w_star + g;
    if !(s.abs() < d) {
        return Err(Error::Geometry(format!(
            "|w* + g| = {} must be below the prototype separation {d}",
            s.abs()
        )));
    }
    let e: Vec<f64> = f1.iter().zip(f2).map(|(a, b)| (b - a) / d).collect();
    let mut distances = [0.0; 2];
    for (slot, m) in distances.iter_mut().zip([m1, m2]) {
        let rel: Vec<f64> = m.iter().zip(f1).map(|(m, f)| m - f).collect();
        let alpha: f64 = rel.iter().zip(&e).map(|(r, e)| r * e).sum();
        let rho = rel
            .iter()
            .zip(&e)
            .map(|(r, e)| (r - alpha * e).powi(2))
            .sum::<f64>()
            .sqrt();
        *slot = distance_to_surface(alpha, rho, d, s);
    }
    let tail = |dist: f64| (2.0 * (-dist * dist / (2.0 * sigma * sigma)).exp()).min(1.0);
    let min_dist = distances[0].min(distances[1]);
    Ok(BoundReport {
        bound: tail(min_dist),
        distances,
        per_class: [tail(distances[0]), tail(distances[1])],
        separation: d,
        offset: s,
    })
}

/// `√(t² + r²) − √((t − d)² + r²)`, rationalized to avoid cancellation.
fn focal_difference(t: f64, r: f64, d: f64) -> f64 {
    let a = t.hypot(r);
    let b = (t - d).hypot(r);
    if a + b == 0.0 {
        return 0.0;
    }
    d * (2.0 * t - d) / (a + b)
}

/// Axial coordinate of the surface at radius `r`, found by bisection.
/// The focal difference is strictly increasing in `t` for `r > 0`.
pub(crate) fn surface_axial(r: f64, d: f64, s: f64) -> f64 {
    let (mut lo, mut hi) = (d / 2.0, d / 2.0);
    let mut width = d.max(1.0);
    while focal_difference(lo, r, d) > s {
        lo -= width;
        width *= 2.0;
    }
    width = d.max(1.0);
    while focal_difference(hi, r, d) < s {
        hi += width;
        width *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if focal_difference(mid, r, d) < s {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `min_{r ≥ 0} √((t(r) − α)² + (r − ρ)²)` in the plane spanned by the axis
/// and the point's radial direction.
fn distance_to_surface(alpha: f64, rho: f64, d: f64, s: f64) -> f64 {
    let f = |r: f64| (surface_axial(r, d, s) - alpha).hypot(r - rho);
    let hi = rho + 10.0 * d;
    // coarse scan locates the basin, golden section refines it
    let step = hi / SCAN_POINTS as f64;
    let mut best = 0;
    let mut best_val = f(0.0);
    for k in 1..=SCAN_POINTS {
        let v = f(k as f64 * step);
        if v < best_val {
            best_val = v;
            best = k;
        }
    }
    let mut a = best.saturating_sub(1) as f64 * step;
    let mut b = ((best + 1).min(SCAN_POINTS)) as f64 * step;
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut dd = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(dd));
    while b - a > GOLDEN_TOL {
        if fc < fd {
            b = dd;
            dd = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = dd;
            fc = fd;
            dd = a + inv_phi * (b - a);
            fd = f(dd);
        }
    }
    f(0.5 * (a + b)).min(best_val)
}
