//! Procrustes distance between matched point sets and the local (windowed)
//! Procrustes loss over every control point of a document.

use crate::error::{Error, Result};
use crate::geom::{centroid, Point};
use crate::svg::SvgDoc;

/// RMS radius below which a set counts as collapsed to a point.
const COLLAPSED: f64 = 1e-12;

fn rotate(p: Point, (c, s): (f64, f64)) -> Point {
    Point::new(c * p.x - s * p.y, s * p.x + c * p.y)
}

fn rms_radius(points: &[Point], c: Point) -> f64 {
    (points.iter().map(|p| (*p - c).norm_sq()).sum::<f64>() / points.len() as f64).sqrt()
}

/// Procrustes distance: both sets are centred and scaled to unit RMS radius,
/// `p2` is rotated onto `p1` by the least-squares rotation (no reflection),
/// and the Euclidean distances between corresponding points are summed.
///
/// A set collapsed to a single point has no shape; the distance is then the
/// RMS radius of the other set (0 when both are collapsed).
pub fn procrustes_dist(p1: &[Point], p2: &[Point]) -> Result<f64> {
    if p1.len() != p2.len() || p1.len() < 2 {
        return Err(Error::contract(format!(
            "procrustes_dist needs two matched sets of at least 2 points, got {} and {}",
            p1.len(),
            p2.len()
        )));
    }
    Ok(dist_and_grad(p1, p2, None))
}

/// Distance between `fixed` and `moving`; when `grad` is given, adds
/// d(distance)/d(moving) into it. The derivative includes the dependence of
/// the optimal rotation on `moving`.
pub(crate) fn dist_and_grad(fixed: &[Point], moving: &[Point], grad: Option<&mut [Point]>) -> f64 {
    let n = fixed.len() as f64;
    let (cf, cm) = (centroid(fixed), centroid(moving));
    let (sf, sm) = (rms_radius(fixed, cf), rms_radius(moving, cm));
    if sm < COLLAPSED {
        return if sf < COLLAPSED { 0.0 } else { sf };
    }
    if sf < COLLAPSED {
        if let Some(g) = grad {
            for (gk, q) in g.iter_mut().zip(moving) {
                *gk += (*q - cm) / (n * sm);
            }
        }
        return sm;
    }
    let a: Vec<Point> = fixed.iter().map(|p| (*p - cf) / sf).collect();
    let b: Vec<Point> = moving.iter().map(|q| (*q - cm) / sm).collect();
    // angle that rotates b onto a in the least-squares sense
    let (mut s, mut c) = (0.0, 0.0);
    for (ai, bi) in a.iter().zip(&b) {
        s += bi.cross(*ai);
        c += bi.dot(*ai);
    }
    let norm = s.hypot(c);
    let rot = if norm > 0.0 { (c / norm, s / norm) } else { (1.0, 0.0) };
    let rb: Vec<Point> = b.iter().map(|&bi| rotate(bi, rot)).collect();
    let mut dist = 0.0;
    let mut u = vec![Point::ZERO; b.len()];
    for i in 0..b.len() {
        let r = rb[i] - a[i];
        let len = r.norm();
        dist += len;
        if len > 0.0 {
            u[i] = r / len;
        }
    }
    let Some(grad) = grad else {
        return dist;
    };

    // dD/db_k at fixed rotation, plus the path through the angle
    let inv_rot = (rot.0, -rot.1);
    let mut g: Vec<Point> = u.iter().map(|&ui| rotate(ui, inv_rot)).collect();
    if norm > 0.0 {
        let d_theta: f64 = u.iter().zip(&rb).map(|(ui, rbi)| ui.dot(rbi.perp())).sum();
        let norm2 = norm * norm;
        for (gk, ak) in g.iter_mut().zip(&a) {
            let ds = Point::new(ak.y, -ak.x);
            *gk += (ds * c - *ak * s) * (d_theta / norm2);
        }
    }
    // through b = (q - mean q) / rms
    let g_mean = centroid(&g);
    let e: Vec<Point> = moving.iter().map(|q| *q - cm).collect();
    let ge: f64 = g.iter().zip(&e).map(|(gi, ei)| gi.dot(*ei)).sum();
    for k in 0..g.len() {
        grad[k] += (g[k] - g_mean) / sm - e[k] * (ge / (n * sm * sm * sm));
    }
    dist
}

/// Indices of the cyclic window centred on `k`: `window` points either side.
pub fn window_indices(k: usize, d: usize, window: usize) -> impl Iterator<Item = usize> {
    let w = window as isize;
    (-w..=w).map(move |o| (k as isize + o).rem_euclid(d as isize) as usize)
}

/// Sum of Procrustes distances between the window of every control point in
/// `initial` and the same window in `current`, and its gradient with respect
/// to the control points of `current` (one vector per path).
pub fn local_procrustes_loss(current: &SvgDoc, initial: &SvgDoc, window: usize) -> Result<(f64, Vec<Vec<Point>>)> {
    if !current.same_structure(initial) {
        return Err(Error::contract("local Procrustes loss needs structurally identical documents"));
    }
    if window == 0 {
        return Err(Error::contract("Procrustes window must be at least 1"));
    }
    let size = 2 * window + 1;
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(current.paths.len());
    let (mut p0, mut pi) = (Vec::with_capacity(size), Vec::with_capacity(size));
    let mut g = vec![Point::ZERO; size];
    for (cur, init) in current.paths.iter().zip(&initial.paths) {
        let d = cur.points.len();
        let mut grad = vec![Point::ZERO; d];
        for k in 0..d {
            p0.clear();
            pi.clear();
            for j in window_indices(k, d, window) {
                p0.push(init.points[j]);
                pi.push(cur.points[j]);
            }
            g.iter_mut().for_each(|v| *v = Point::ZERO);
            total += dist_and_grad(&p0, &pi, Some(&mut g));
            for (j, gj) in window_indices(k, d, window).zip(&g) {
                grad[j] += *gj;
            }
        }
        grads.push(grad);
    }
    Ok((total, grads))
}
