//! Initial customized SVG: affine pre-alignment of matched exemplar paths onto
//! their components and curve fitting for unmatched components.

use std::collections::HashSet;
use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geom::{centroid, segment_distance, signed_area2, Affine, Cubic, Point};
use crate::matching::MatchSet;
use crate::raster::{path_mask, RenderOptions};
use crate::segment::Component;
use crate::svg::{ellipse_cubics, sample_boundary, Path, SvgDoc};

/// Points per side of each CPD registration.
pub const CPD_SAMPLES: usize = 100;
pub const DEFAULT_FIT_TOL: f64 = 1.0;
/// Upper bound on control points of a fitted path.
pub const MAX_FIT_POINTS: usize = 180;
const CORNER_ANGLE: f64 = PI / 3.0;
const MIN_SIGMA2: f64 = 1e-12;
const SMOOTHING_PASSES: usize = 2;
/// Samples on each side used to estimate a tangent on a pixel contour.
const REPARAM_PASSES: usize = 20;
/// Likelihood gain per target point a rotated CPD start needs to win.
pub const RESTART_MARGIN: f64 = 0.1;
/// Second-moment determinant (unit RMS radius) below which a set is collinear.
const FLAT_MOMENT: f64 = 1e-9;
const TANGENT_REACH: usize = 3;

/// Convex hull with positive signed area (counter-clockwise in a y-up frame)
/// and no collinear vertices.
pub fn convex_hull(points: &[Point]) -> Result<Vec<Point>> {
    let mut pts: Vec<Point> = points.iter().copied().filter(|p| p.is_finite()).collect();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return Err(Error::Degenerate(format!("hull of {} distinct points", pts.len())));
    }
    let turn = |o: Point, a: Point, b: Point| (a - o).cross(b - o);
    let chain = |iter: &mut dyn Iterator<Item = Point>| {
        let mut out: Vec<Point> = Vec::new();
        for p in iter {
            while out.len() >= 2 && turn(out[out.len() - 2], out[out.len() - 1], p) <= 0.0 {
                out.pop();
            }
            out.push(p);
        }
        out.pop();
        out
    };
    let mut hull = chain(&mut pts.iter().copied());
    hull.extend(chain(&mut pts.iter().rev().copied()));
    if hull.len() < 3 {
        return Err(Error::Degenerate("all points are collinear".into()));
    }
    Ok(hull)
}

/// Corners of the minimum-variance-aligned bounding box, in order.
pub fn oriented_bbox(points: &[Point]) -> [Point; 4] {
    let c = centroid(points);
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in points {
        let d = *p - c;
        sxx += d.x * d.x;
        sxy += d.x * d.y;
        syy += d.y * d.y;
    }
    let angle = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    let u = Point::new(angle.cos(), angle.sin());
    let v = u.perp();
    let (mut lo_u, mut hi_u, mut lo_v, mut hi_v) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in points {
        let d = *p - c;
        lo_u = lo_u.min(d.dot(u));
        hi_u = hi_u.max(d.dot(u));
        lo_v = lo_v.min(d.dot(v));
        hi_v = hi_v.max(d.dot(v));
    }
    [c + u * lo_u + v * lo_v, c + u * hi_u + v * lo_v, c + u * hi_u + v * hi_v, c + u * lo_u + v * hi_v]
}

/// `n` points evenly spaced in arc length around a closed polygon, starting at vertex 0.
pub fn densify_closed(poly: &[Point], n: usize) -> Vec<Point> {
    let k = poly.len();
    let lens: Vec<f64> = (0..k).map(|i| poly[i].dist(poly[(i + 1) % k])).collect();
    let total: f64 = lens.iter().sum();
    if total <= 0.0 {
        return vec![poly[0]; n];
    }
    let mut out = Vec::with_capacity(n);
    let (mut edge, mut start) = (0, 0.0);
    for s in 0..n {
        let target = total * s as f64 / n as f64;
        while edge + 1 < k && start + lens[edge] < target {
            start += lens[edge];
            edge += 1;
        }
        let t = if lens[edge] > 0.0 { ((target - start) / lens[edge]).clamp(0.0, 1.0) } else { 0.0 };
        out.push(poly[edge].lerp(poly[(edge + 1) % k], t));
    }
    out
}

/// Convex hull densified to `n` samples; collinear input falls back to the
/// oriented bounding box.
pub fn hull_samples(points: &[Point], n: usize) -> Vec<Point> {
    match convex_hull(points) {
        Ok(h) => densify_closed(&h, n),
        Err(_) => densify_closed(&oriented_bbox(points), n),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CpdParams {
    /// Uniform outlier weight of the mixture.
    pub w: f64,
    pub max_iter: usize,
    /// Relative change of the objective that counts as converged.
    pub tol: f64,
}

impl Default for CpdParams {
    fn default() -> Self {
        CpdParams { w: 0.1, max_iter: 100, tol: 1e-6 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CpdResult {
    /// Maps source points onto the target.
    pub xf: Affine,
    pub iterations: usize,
    /// False when the iteration cap was hit; `xf` is then the best iterate.
    pub converged: bool,
    /// The affine estimate was degenerate and was replaced by a similarity
    /// built from centroids and RMS radii.
    pub similarity_fallback: bool,
}

fn normalized(points: &[Point]) -> Result<(Vec<Point>, Point, f64)> {
    let c = centroid(points);
    let rms = (points.iter().map(|p| (*p - c).norm_sq()).sum::<f64>() / points.len() as f64).sqrt();
    if !(rms > 0.0 && rms.is_finite()) {
        return Err(Error::Degenerate("point set has zero spread".into()));
    }
    Ok((points.iter().map(|p| (*p - c) / rms).collect(), c, rms))
}

pub fn cpd_affine(source: &[Point], target: &[Point]) -> Result<CpdResult> {
    cpd_affine_with(source, target, &CpdParams::default())
}

/// Coherent point drift, affine variant: EM fit of a Gaussian mixture centred
/// on the transformed source points, plus a uniform outlier term, to the
/// target points. Both sets are centred and scaled to unit RMS radius first.
///
/// EM is run from the identity and from the other quarter turns; a rotated
/// start replaces the identity only when its final likelihood is better by
/// [`RESTART_MARGIN`] nats per target point.
pub fn cpd_affine_with(source: &[Point], target: &[Point], params: &CpdParams) -> Result<CpdResult> {
    if source.len() < 3 || target.len() < 3 {
        return Err(Error::contract(format!(
            "CPD needs at least 3 points per set, got {} and {}",
            source.len(),
            target.len()
        )));
    }
    if source.iter().chain(target).any(|p| !p.is_finite()) {
        return Err(Error::contract("CPD input has non-finite points"));
    }
    if !(0.0..1.0).contains(&params.w) || params.max_iter == 0 {
        return Err(Error::contract("CPD needs w in [0, 1) and at least one iteration"));
    }
    let (y, my, sy) = normalized(source)?;
    let (x, mx, sx) = normalized(target)?;

    let k = sx / sy;
    let similarity = Affine { linear: [[k, 0.0], [0.0, k]], translation: mx - my * k };
    if moment_det(&y) < FLAT_MOMENT || moment_det(&x) < FLAT_MOMENT {
        // a collinear set pins down only one axis of B
        return Ok(CpdResult { xf: similarity, iterations: 0, converged: true, similarity_fallback: true });
    }

    let mut best = em_affine(&x, &y, Affine::IDENTITY, params);
    let margin = RESTART_MARGIN * x.len() as f64;
    for k in 1..4 {
        let run = em_affine(&x, &y, Affine::rotate(k as f64 * PI / 2.0), params);
        if run.nll < best.nll - margin {
            best = run;
        }
    }
    let xf = best.xf;

    // undo the normalization: x = sx * (B (y - my) / sy + t) + mx
    let linear = xf.linear.map(|row| row.map(|v| v * k));
    let lin = Affine { linear, translation: Point::ZERO };
    let mut out = Affine { linear, translation: xf.translation * sx + mx - lin.apply(my) };
    let det = out.det();
    let sane = det.is_finite() && (1e-3..=1e3).contains(&det.abs()) && out.translation.is_finite();
    if !sane {
        out = similarity;
    }
    Ok(CpdResult { xf: out, iterations: best.iterations, converged: best.converged, similarity_fallback: !sane })
}

/// Determinant of the second-moment matrix of a centred set.
fn moment_det(pts: &[Point]) -> f64 {
    let k = pts.len() as f64;
    let sxx = pts.iter().map(|p| p.x * p.x).sum::<f64>() / k;
    let syy = pts.iter().map(|p| p.y * p.y).sum::<f64>() / k;
    let sxy = pts.iter().map(|p| p.x * p.y).sum::<f64>() / k;
    sxx * syy - sxy * sxy
}

struct EmRun {
    xf: Affine,
    /// Negative log-likelihood of the targets under the final mixture.
    nll: f64,
    iterations: usize,
    converged: bool,
}

fn em_affine(x: &[Point], y: &[Point], start: Affine, params: &CpdParams) -> EmRun {
    let (m, n) = (y.len(), x.len());
    let mut b = start.linear;
    let mut t = start.translation;
    let mut sigma2 = x.iter().map(|&xj| y.iter().map(|&yi| (xj - start.apply(yi)).norm_sq()).sum::<f64>()).sum::<f64>()
        / (2.0 * (m * n) as f64);
    let mut p = vec![0.0; m * n];
    let mut prev = f64::NAN;
    let mut best = (f64::INFINITY, start, sigma2);
    let mut result = None;
    let mut iterations = 0;
    for _ in 0..params.max_iter {
        iterations += 1;
        let xf = Affine { linear: b, translation: t };
        let ty: Vec<Point> = y.iter().map(|&q| xf.apply(q)).collect();
        // E step
        let c = 2.0 * PI * sigma2 * params.w / (1.0 - params.w) * m as f64 / n as f64;
        let mut objective = 0.0;
        for j in 0..n {
            let mut den = c;
            for i in 0..m {
                let e = (-(x[j] - ty[i]).norm_sq() / (2.0 * sigma2)).exp();
                p[i * n + j] = e;
                den += e;
            }
            if den > 0.0 {
                for i in 0..m {
                    p[i * n + j] /= den;
                }
                objective -= den.ln();
            }
        }
        let pt1: Vec<f64> = (0..n).map(|j| (0..m).map(|i| p[i * n + j]).sum()).collect();
        let p1: Vec<f64> = (0..m).map(|i| p[i * n..(i + 1) * n].iter().sum()).collect();
        let np: f64 = p1.iter().sum();
        objective += np * sigma2.ln();
        if objective < best.0 {
            best = (objective, xf, sigma2);
        }
        if prev.is_finite() && (objective - prev).abs() <= params.tol * objective.abs() {
            result = Some((xf, sigma2));
            break;
        }
        prev = objective;
        if np < 1e-12 {
            break;
        }

        // M step
        let mu_x = (0..n).fold(Point::ZERO, |acc, j| acc + x[j] * pt1[j]) / np;
        let mu_y = (0..m).fold(Point::ZERO, |acc, i| acc + y[i] * p1[i]) / np;
        let mut a = [[0.0; 2]; 2];
        let mut yy = [[0.0; 2]; 2];
        for i in 0..m {
            let dy = y[i] - mu_y;
            let mut px = Point::ZERO;
            for j in 0..n {
                px += (x[j] - mu_x) * p[i * n + j];
            }
            a[0][0] += px.x * dy.x;
            a[0][1] += px.x * dy.y;
            a[1][0] += px.y * dy.x;
            a[1][1] += px.y * dy.y;
            yy[0][0] += p1[i] * dy.x * dy.x;
            yy[0][1] += p1[i] * dy.x * dy.y;
            yy[1][1] += p1[i] * dy.y * dy.y;
        }
        yy[1][0] = yy[0][1];
        let det = yy[0][0] * yy[1][1] - yy[0][1] * yy[1][0];
        if det.abs() < 1e-300 {
            break;
        }
        let inv = [[yy[1][1] / det, -yy[0][1] / det], [-yy[1][0] / det, yy[0][0] / det]];
        for r in 0..2 {
            for c in 0..2 {
                b[r][c] = a[r][0] * inv[0][c] + a[r][1] * inv[1][c];
            }
        }
        t = mu_x - Point::new(b[0][0] * mu_y.x + b[0][1] * mu_y.y, b[1][0] * mu_y.x + b[1][1] * mu_y.y);
        let sxx: f64 = (0..n).map(|j| pt1[j] * (x[j] - mu_x).norm_sq()).sum();
        let trace = a[0][0] * b[0][0] + a[0][1] * b[0][1] + a[1][0] * b[1][0] + a[1][1] * b[1][1];
        sigma2 = ((sxx - trace) / (2.0 * np)).max(MIN_SIGMA2);
        if !sigma2.is_finite() {
            break;
        }
    }
    let converged = result.is_some();
    let (xf, sigma2) = result.unwrap_or((best.1, best.2));
    EmRun { xf, nll: mixture_nll(x, y, &xf, sigma2, params.w), iterations, converged }
}

/// -sum_j ln p(x_j) for the mixture (1 - w) / m * sum_i N(Ty_i, sigma2 I) + w / n,
/// evaluated with a log-sum-exp over the components.
fn mixture_nll(x: &[Point], y: &[Point], xf: &Affine, sigma2: f64, w: f64) -> f64 {
    let (m, n) = (y.len() as f64, x.len() as f64);
    let ty: Vec<Point> = y.iter().map(|&q| xf.apply(q)).collect();
    let log_gauss = -(2.0 * PI * sigma2).ln() + (1.0 - w).ln() - m.ln();
    let log_outlier = if w > 0.0 { w.ln() - n.ln() } else { f64::NEG_INFINITY };
    let mut nll = 0.0;
    let mut terms = Vec::with_capacity(y.len() + 1);
    for &xj in x {
        terms.clear();
        terms.extend(ty.iter().map(|&q| log_gauss - (xj - q).norm_sq() / (2.0 * sigma2)));
        terms.push(log_outlier);
        let top = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        nll -= top + terms.iter().map(|v| (v - top).exp()).sum::<f64>().ln();
    }
    nll
}

/// Map every control point through `xf`.
pub fn transform_path(path: &Path, xf: &Affine) -> Path {
    path.transformed(xf)
}

/// Piecewise cubic fit of a closed contour.
///
/// The contour is oriented to positive signed area, started at its top-most
/// (then left-most) vertex and resampled at unit spacing. A binomial smoothing
/// of the samples supplies corner angles and tangents: samples turning by more
/// than 60° between the chords to their second neighbours on either side are
/// corners. The spans between corners get least-squares cubics through the
/// smoothed samples, split at the worst sample until the piece is within
/// `err_tol` of both the smoothed samples and the raw contour. If that needs
/// more than [`MAX_FIT_POINTS`] control points the tolerance is relaxed.
/// Contours with fewer than 8 samples become an ellipse with the same second
/// moments.
pub fn fit_path_to_boundary(boundary: &[Point], err_tol: f64) -> Path {
    let mut pts: Vec<Point> = boundary.iter().copied().filter(|p| p.is_finite()).collect();
    pts.dedup();
    while pts.len() > 1 && pts.first() == pts.last() {
        pts.pop();
    }
    if pts.len() < 3 || signed_area2(&pts).abs() < 1e-9 {
        return ellipse_fallback(&pts);
    }
    if signed_area2(&pts) < 0.0 {
        pts.reverse();
    }
    let start =
        (0..pts.len()).min_by(|&a, &b| pts[a].y.total_cmp(&pts[b].y).then(pts[a].x.total_cmp(&pts[b].x))).unwrap();
    pts.rotate_left(start);
    let perimeter: f64 = (0..pts.len()).map(|i| pts[i].dist(pts[(i + 1) % pts.len()])).sum();
    let n = perimeter.round() as usize;
    if n < 8 {
        return ellipse_fallback(&pts);
    }
    let samples = densify_closed(&pts, n);
    let smooth = smooth_loop(&samples);
    let corners = detect_corners(&smooth);

    let mut tol = err_tol.max(1e-3);
    loop {
        let segs = fit_closed(&samples, &smooth, &corners, tol);
        if segs.len() * 3 <= MAX_FIT_POINTS {
            return Path::from_cubics("fit", &segs, crate::svg::Rgb::BLACK, 1.0).expect("fitted path is valid");
        }
        tol *= 1.5;
    }
}

fn ellipse_fallback(pts: &[Point]) -> Path {
    let c = if pts.is_empty() { Point::ZERO } else { centroid(pts) };
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in pts {
        let d = *p - c;
        sxx += d.x * d.x;
        sxy += d.x * d.y;
        syy += d.y * d.y;
    }
    let k = pts.len().max(1) as f64;
    let (sxx, sxy, syy) = (sxx / k, sxy / k, syy / k);
    let mid = (sxx + syy) / 2.0;
    let rad = (((sxx - syy) / 2.0).powi(2) + sxy * sxy).sqrt();
    // points on a circle of radius r have variance r^2 / 2 per axis
    let r1 = (2.0 * (mid + rad)).sqrt().max(0.5);
    let r2 = (2.0 * (mid - rad).max(0.0)).sqrt().max(0.5);
    let angle = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    let xf = Affine::translate(c.x, c.y).then_after(&Affine::rotate(angle));
    let segs: Vec<Cubic> = ellipse_cubics(Point::ZERO, r1, r2).iter().map(|s| s.map(&xf)).collect();
    Path::from_cubics("fit", &segs, crate::svg::Rgb::BLACK, 1.0).expect("ellipse is valid")
}

/// Binomial smoothing of a closed loop so pixel staircases do not read as
/// corners or tilt tangents.
fn smooth_loop(samples: &[Point]) -> Vec<Point> {
    let n = samples.len();
    let mut smooth: Vec<Point> = samples.to_vec();
    for _ in 0..SMOOTHING_PASSES {
        let prev = smooth.clone();
        let pv = |i: isize| prev[i.rem_euclid(n as isize) as usize];
        smooth = (0..n as isize).map(|i| (pv(i - 1) + pv(i) * 2.0 + pv(i + 1)) / 4.0).collect();
    }
    smooth
}

fn detect_corners(smooth: &[Point]) -> Vec<usize> {
    let n = smooth.len();
    let sm = |i: isize| smooth[i.rem_euclid(n as isize) as usize];
    let angle: Vec<f64> = (0..n as isize)
        .map(|i| {
            let a = sm(i) - sm(i - 2);
            let b = sm(i + 2) - sm(i);
            a.cross(b).atan2(a.dot(b)).abs()
        })
        .collect();
    let ang = |i: isize| angle[i.rem_euclid(n as isize) as usize];
    (0..n as isize)
        .filter(|&i| {
            let v = ang(i);
            v > CORNER_ANGLE && (1..=2).all(|k| v > ang(i - k) && v >= ang(i + k))
        })
        .map(|i| i as usize)
        .collect()
}

fn unit(v: Point) -> Point {
    let n = v.norm();
    if n > 0.0 {
        v / n
    } else {
        Point::new(1.0, 0.0)
    }
}

/// Split the closed sample loop at corners (or at two opposite smooth points
/// when there are fewer than two corners) and fit each span.
fn fit_closed(samples: &[Point], smooth: &[Point], corners: &[usize], tol: f64) -> Vec<Cubic> {
    let n = samples.len();
    let at = |i: usize| samples[i % n];
    let smooth_tangent = |i: usize| unit(smooth[(i + TANGENT_REACH) % n] - smooth[(i + n - TANGENT_REACH) % n]);
    let breaks: Vec<(usize, bool)> = match corners.len() {
        0 => vec![(0, false), (n / 2, false)],
        1 => vec![(corners[0], true), (corners[0] + n / 2, false)],
        _ => corners.iter().map(|&c| (c, true)).collect(),
    };
    let mut segs = Vec::new();
    for k in 0..breaks.len() {
        let (a, a_corner) = breaks[k];
        let (mut b, b_corner) = breaks[(k + 1) % breaks.len()];
        if b <= a {
            b += n;
        }
        let span: Vec<Point> = (a..=b).map(at).collect();
        let mut span_sm: Vec<Point> = (a..=b).map(|i| smooth[i % n]).collect();
        let last = span.len() - 1;
        if a_corner {
            span_sm[0] = span[0];
        }
        if b_corner {
            span_sm[last] = span[last];
        }
        let reach = TANGENT_REACH.min(last);
        let t0 = if a_corner { unit(span[reach] - span[0]) } else { smooth_tangent(a) };
        let t1 = if b_corner { unit(span[last] - span[last - reach]) } else { smooth_tangent(b) };
        fit_span(&span, &span_sm, t0, t1, tol, &mut segs);
    }
    segs
}

/// Least-squares cubic through the smoothed span `pts` with fixed end points
/// and tangent directions (both along the direction of travel), recursively
/// split. A piece is accepted once it is within `tol` of both the smoothed
/// samples and the raw contour span `raw`.
fn fit_span(raw: &[Point], pts: &[Point], t0: Point, t1: Point, tol: f64, out: &mut Vec<Cubic>) {
    let (p0, p3) = (pts[0], pts[pts.len() - 1]);
    if pts.len() <= 2 {
        let d = p0.dist(p3) / 3.0;
        out.push(Cubic::new(p0, p0 + t0 * d, p3 - t1 * d, p3));
        return;
    }
    let mut u = chord_params(pts);
    let mut cubic = least_squares_cubic(pts, &u, t0, t1);
    let (mut err, mut worst) = max_error(pts, &u, &cubic);
    let mut pass = 0;
    loop {
        if err <= tol && stray(raw, &cubic) <= tol {
            out.push(cubic);
            return;
        }
        if pass == REPARAM_PASSES || err <= tol {
            break;
        }
        reparameterize(pts, &mut u, &cubic);
        cubic = least_squares_cubic(pts, &u, t0, t1);
        (err, worst) = max_error(pts, &u, &cubic);
        pass += 1;
    }
    if pts.len() <= 3 {
        out.push(cubic);
        return;
    }
    if err <= tol {
        worst = pts.len() / 2;
    }
    let split = worst.clamp(1, pts.len() - 2);
    let reach = TANGENT_REACH.min(split).min(pts.len() - 1 - split);
    let tm = unit(pts[split + reach] - pts[split - reach]);
    fit_span(&raw[..=split], &pts[..=split], t0, tm, tol, out);
    fit_span(&raw[split..], &pts[split..], tm, t1, tol, out);
}

/// Largest distance from the cubic, densely sampled, to the polyline `raw`.
fn stray(raw: &[Point], c: &Cubic) -> f64 {
    let k = 2 * raw.len();
    (0..=k)
        .map(|i| {
            let q = c.eval(i as f64 / k as f64);
            raw.windows(2).map(|w| segment_distance(q, w[0], w[1]).0).fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

fn chord_params(pts: &[Point]) -> Vec<f64> {
    let mut u = vec![0.0; pts.len()];
    for i in 1..pts.len() {
        u[i] = u[i - 1] + pts[i].dist(pts[i - 1]);
    }
    let total = u[pts.len() - 1];
    if total > 0.0 {
        u.iter_mut().for_each(|v| *v /= total);
    }
    u
}

fn least_squares_cubic(pts: &[Point], u: &[f64], t0: Point, t1: Point) -> Cubic {
    let (p0, p3) = (pts[0], pts[pts.len() - 1]);
    let (mut c00, mut c01, mut c11, mut r0, mut r1) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (p, &t) in pts.iter().zip(u) {
        let [b0, b1, b2, b3] = crate::geom::bernstein3(t);
        let a0 = t0 * b1;
        let a1 = t1 * (-b2);
        let r = *p - (p0 * (b0 + b1) + p3 * (b2 + b3));
        c00 += a0.dot(a0);
        c01 += a0.dot(a1);
        c11 += a1.dot(a1);
        r0 += a0.dot(r);
        r1 += a1.dot(r);
    }
    let det = c00 * c11 - c01 * c01;
    let chord = p0.dist(p3);
    let (mut al0, mut al1) = if det.abs() > 1e-12 {
        ((r0 * c11 - r1 * c01) / det, (c00 * r1 - c01 * r0) / det)
    } else {
        (chord / 3.0, chord / 3.0)
    };
    let floor = 1e-6 * chord;
    if al0 < floor || al1 < floor {
        al0 = chord / 3.0;
        al1 = chord / 3.0;
    }
    Cubic::new(p0, p0 + t0 * al0, p3 - t1 * al1, p3)
}

fn max_error(pts: &[Point], u: &[f64], c: &Cubic) -> (f64, usize) {
    let mut worst = (0.0, pts.len() / 2);
    for i in 1..pts.len() - 1 {
        let d = c.eval(u[i]).dist(pts[i]);
        if d > worst.0 {
            worst = (d, i);
        }
    }
    worst
}

fn reparameterize(pts: &[Point], u: &mut [f64], c: &Cubic) {
    for (p, t) in pts.iter().zip(u.iter_mut()) {
        let d = c.eval(*t) - *p;
        let d1 = c.deriv(*t);
        let d2 = c.deriv2(*t);
        let den = d1.dot(d1) + d.dot(d2);
        if den.abs() > 1e-12 {
            *t = (*t - d.dot(d1) / den).clamp(0.0, 1.0);
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PrealignParams {
    pub cpd: CpdParams,
    pub samples: usize,
    /// Fitting tolerance in pixels of the component raster.
    pub fit_tol: f64,
}

impl Default for PrealignParams {
    fn default() -> Self {
        PrealignParams { cpd: CpdParams::default(), samples: CPD_SAMPLES, fit_tol: DEFAULT_FIT_TOL }
    }
}

/// Where each path of the initial SVG came from.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Matched {
        id: String,
        component: usize,
        exemplar_id: String,
        exemplar_index: usize,
        score: f64,
        /// SVG `matrix(a b c d e f)` coefficients, canvas units.
        transform: [f64; 6],
        exemplar_fill: String,
        cpd_iterations: usize,
        cpd_converged: bool,
        similarity_fallback: bool,
    },
    Fitted {
        id: String,
        component: usize,
        segments: usize,
    },
}

impl Provenance {
    pub fn id(&self) -> &str {
        match self {
            Provenance::Matched { id, .. } | Provenance::Fitted { id, .. } => id,
        }
    }

    pub fn component(&self) -> usize {
        match self {
            Provenance::Matched { component, .. } | Provenance::Fitted { component, .. } => *component,
        }
    }
}

/// The initial customized SVG, one path per target component, with provenance
/// in output (z) order.
#[derive(Clone, Debug, Serialize)]
pub struct InitialSvg {
    #[serde(skip)]
    pub doc: SvgDoc,
    pub provenance: Vec<Provenance>,
    pub warnings: Vec<String>,
}

/// Assemble the initial SVG.
///
/// `exemplar_regions[i]` is the visible region of exemplar path `i` in a
/// render at the same resolution as the target components (see
/// [`crate::segment::region_components`]). CPD registers the densified convex
/// hull of that region onto the densified hull of the component; paths with
/// no visible region use the hull of their own boundary samples instead.
pub fn build_initial_svg(
    matches: &MatchSet,
    exemplar: &SvgDoc,
    exemplar_regions: &[Option<Component>],
    components: &[Component],
    params: &PrealignParams,
) -> Result<InitialSvg> {
    if !matches.is_total(components.len()) {
        return Err(Error::contract("match set is not a partition of the components"));
    }
    if exemplar_regions.len() != exemplar.paths.len() {
        return Err(Error::contract(format!(
            "{} exemplar regions for {} paths",
            exemplar_regions.len(),
            exemplar.paths.len()
        )));
    }
    if let Some(a) = matches.assignments.iter().find(|a| a.path >= exemplar.paths.len()) {
        return Err(Error::contract(format!("assignment to missing path {}", a.path)));
    }
    let Some(first) = components.first() else {
        return Ok(InitialSvg {
            doc: SvgDoc::new(exemplar.width, exemplar.height, Vec::new())?,
            provenance: Vec::new(),
            warnings: Vec::new(),
        });
    };
    let (w, h) = (first.mask.width, first.mask.height);
    if components.iter().any(|c| (c.mask.width, c.mask.height) != (w, h)) {
        return Err(Error::contract("components have different raster sizes"));
    }
    let to_canvas = Affine::scale(exemplar.width / w as f64, exemplar.height / h as f64);
    let region_points = |c: &Component| -> Vec<Point> {
        let pts = if c.edge_points.len() >= 3 { &c.edge_points } else { &c.boundary };
        pts.iter().map(|&p| to_canvas.apply(p)).collect()
    };

    let mut warnings = Vec::new();
    let mut source_cache: Vec<Option<Vec<Point>>> = vec![None; exemplar.paths.len()];
    let mut matched: Vec<(usize, usize, f64)> =
        matches.assignments.iter().map(|a| (a.path, a.component, a.score)).collect();
    matched.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut clone_count = vec![0usize; exemplar.paths.len()];
    for &(i, _, _) in &matched {
        clone_count[i] += 1;
    }

    let mut used: HashSet<String> = HashSet::new();
    let mut unique = |base: String| {
        let mut id = base.clone();
        let mut k = 1;
        while !used.insert(id.clone()) {
            k += 1;
            id = format!("{base}-{k}");
        }
        id
    };

    let mut matched_out: Vec<(Path, Provenance)> = Vec::with_capacity(matched.len());
    for &(i, j, score) in &matched {
        let path = &exemplar.paths[i];
        let source = source_cache[i]
            .get_or_insert_with(|| match &exemplar_regions[i] {
                Some(r) => hull_samples(&region_points(r), params.samples),
                None => hull_samples(&sample_boundary(path, 4 * params.samples), params.samples),
            })
            .clone();
        let target = hull_samples(&region_points(&components[j]), params.samples);
        let cpd = match cpd_affine_with(&source, &target, &params.cpd) {
            Ok(r) => r,
            Err(e) => {
                warnings.push(format!("path `{}` -> component {j}: {e}; translated by centroid", path.id));
                let d = centroid(&target) - centroid(&source);
                CpdResult {
                    xf: Affine::translate(d.x, d.y),
                    iterations: 0,
                    converged: false,
                    similarity_fallback: true,
                }
            }
        };
        if !cpd.converged {
            warnings.push(format!(
                "CPD for path `{}` -> component {j} stopped after {} iterations without converging",
                path.id, cpd.iterations
            ));
        }
        let id = unique(if clone_count[i] > 1 { format!("{}-c{j}", path.id) } else { path.id.clone() });
        let mut out = transform_path(path, &cpd.xf);
        out.id = id.clone();
        out.fill = components[j].mean_color.clamped();
        let prov = Provenance::Matched {
            id,
            component: j,
            exemplar_id: path.id.clone(),
            exemplar_index: i,
            score,
            transform: cpd.xf.to_svg_matrix(),
            exemplar_fill: path.fill.to_hex(),
            cpd_iterations: cpd.iterations,
            cpd_converged: cpd.converged,
            similarity_fallback: cpd.similarity_fallback,
        };
        matched_out.push((out, prov));
    }

    // each fitted path goes right above the matched path it overlaps most
    let opts = RenderOptions::default();
    let masks: Vec<Vec<bool>> =
        matched_out.iter().map(|(p, _)| path_mask(p, (exemplar.width, exemplar.height), w, h, &opts)).collect();
    let mut slots: Vec<Vec<usize>> = vec![Vec::new(); matched_out.len() + 1];
    for &j in &matches.unmatched {
        let comp = &components[j];
        let mut best = (0usize, matched_out.len());
        for (k, m) in masks.iter().enumerate() {
            let overlap = m.iter().zip(&comp.mask.data).filter(|(a, b)| **a && **b).count();
            if overlap > best.0 {
                best = (overlap, k);
            }
        }
        slots[best.1].push(j);
    }
    for slot in &mut slots {
        slot.sort_by(|&a, &b| components[b].area.cmp(&components[a].area).then(a.cmp(&b)));
    }
    let mut fitted = |j: usize| -> (Path, Provenance) {
        let comp = &components[j];
        let mut p = fit_path_to_boundary(&comp.boundary, params.fit_tol).transformed(&to_canvas);
        p.id = unique(format!("fit-c{j}"));
        p.fill = comp.mean_color.clamped();
        let prov = Provenance::Fitted { id: p.id.clone(), component: j, segments: p.segment_count() };
        (p, prov)
    };

    let mut paths = Vec::with_capacity(components.len());
    let mut provenance = Vec::with_capacity(components.len());
    for (k, (p, prov)) in matched_out.into_iter().enumerate() {
        paths.push(p);
        provenance.push(prov);
        for &j in &slots[k] {
            let (p, prov) = fitted(j);
            paths.push(p);
            provenance.push(prov);
        }
    }
    for &j in slots.last().unwrap() {
        let (p, prov) = fitted(j);
        paths.push(p);
        provenance.push(prov);
    }
    Ok(InitialSvg { doc: SvgDoc::new(exemplar.width, exemplar.height, paths)?, provenance, warnings })
}
