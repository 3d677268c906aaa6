//! Differentiable anti-aliased rasterizer.
//!
//! A pixel's coverage is a smooth step of its signed distance to the path
//! boundary, with the sign taken from the nonzero winding rule. Distances are
//! measured to the exact cubic (closest point by Newton refinement of a
//! polyline seed), so coverage is smooth in the control points wherever the
//! closest point is unique. Paths are composited back to front in straight
//! alpha. The backward pass differentiates exactly this model.

mod image;

pub use self::image::Image;

use crate::error::{Error, Result};
use crate::geom::{bernstein3, segment_distance, Affine, Cubic, Point};
use crate::svg::{Path, Rgb, SvgDoc};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RenderOptions {
    /// Minimum flattening steps per cubic segment (more are used for long
    /// or strongly bent segments).
    pub steps_per_segment: usize,
    /// Half-width of the coverage ramp, in pixels.
    pub smoothing_radius: f64,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions { steps_per_segment: 16, smoothing_radius: 1.0 }
    }
}

/// Largest allowed gap between a cubic and its flattening, in pixels.
const FLATTEN_TOL: f64 = 0.05;
/// Within this distance of the curve the local side test overrides the
/// polyline winding, which can disagree with the exact curve in thin slivers.
const LOCAL_SIGN_BAND: f64 = 0.25;

/// Quintic smooth step on `u ∈ [0, 1]` and its derivative.
#[inline]
fn smooth_step(u: f64) -> (f64, f64) {
    if u <= 0.0 {
        (0.0, 0.0)
    } else if u >= 1.0 {
        (1.0, 0.0)
    } else {
        let u2 = u * u;
        let v = u2 * u * (10.0 + u * (-15.0 + 6.0 * u));
        let dv = 30.0 * u2 * (1.0 - u) * (1.0 - u);
        (v, dv)
    }
}

/// Signed distance (pixels, positive inside) at which the coverage ramp of
/// half-width `radius` reaches `alpha`. Inverse of the forward ramp.
pub fn coverage_to_distance(alpha: f64, radius: f64) -> f64 {
    if alpha <= 0.0 {
        return -radius;
    }
    if alpha >= 1.0 {
        return radius;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if smooth_step(mid).0 < alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo + hi - 1.0) * radius
}

fn to_pixels(path: &Path, scale: Point) -> Vec<Cubic> {
    let xf = Affine::scale(scale.x, scale.y);
    path.segments().map(|c| c.map(&xf)).collect()
}

/// Closed polyline through the segments; `owner[i]` is the segment and start
/// parameter of edge `i`, which spans `dt` in that segment's parameter.
struct Flattened {
    verts: Vec<Point>,
    owner: Vec<(u32, f64, f64)>,
}

fn flatten(segs: &[Cubic], min_steps: usize) -> Flattened {
    let mut verts = Vec::new();
    let mut owner = Vec::new();
    for (k, seg) in segs.iter().enumerate() {
        // chord error is at most max|C''| / (8 n^2)
        let a = (seg.p0 - seg.p1 * 2.0 + seg.p2).norm();
        let b = (seg.p1 - seg.p2 * 2.0 + seg.p3).norm();
        let need = (6.0 * a.max(b) / (8.0 * FLATTEN_TOL)).sqrt().ceil();
        let n = min_steps.max(need.min(4096.0) as usize);
        let dt = 1.0 / n as f64;
        for i in 0..n {
            let t = i as f64 * dt;
            verts.push(seg.eval(t));
            owner.push((k as u32, t, dt));
        }
    }
    Flattened { verts, owner }
}

/// Nonzero-winding inside test at pixel centers, one row at a time.
fn winding_rows(verts: &[Point], x0: usize, y0: usize, w: usize, h: usize) -> Vec<bool> {
    let n = verts.len();
    let mut rows: Vec<Vec<(f64, i32)>> = vec![Vec::new(); h];
    for i in 0..n {
        let a = verts[i];
        let b = verts[(i + 1) % n];
        if a.y == b.y {
            continue;
        }
        let (lo, hi) = if a.y < b.y { (a.y, b.y) } else { (b.y, a.y) };
        // rows whose center yc satisfies lo <= yc < hi
        let first = (lo - 0.5 - y0 as f64).ceil().max(0.0) as usize;
        let last = ((hi - 0.5 - y0 as f64).ceil() as isize).min(h as isize);
        let dir = if b.y > a.y { 1 } else { -1 };
        for (r, row) in rows.iter_mut().enumerate().take(last.max(0) as usize).skip(first) {
            let yc = (y0 + r) as f64 + 0.5;
            if yc < lo || yc >= hi {
                continue;
            }
            let x = a.x + (yc - a.y) * (b.x - a.x) / (b.y - a.y);
            row.push((x, dir));
        }
    }
    let mut inside = vec![false; w * h];
    for (r, row) in rows.iter_mut().enumerate() {
        if row.is_empty() {
            continue;
        }
        row.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut wind = 0;
        let mut k = 0;
        for c in 0..w {
            let xc = (x0 + c) as f64 + 0.5;
            while k < row.len() && row[k].0 < xc {
                wind += row[k].1;
                k += 1;
            }
            inside[r * w + c] = wind != 0;
        }
    }
    inside
}

/// Closest point on `seg` to `p` by clamped Newton iteration from `t`.
fn refine(seg: &Cubic, p: Point, mut t: f64) -> (f64, f64) {
    for _ in 0..12 {
        let diff = seg.eval(t) - p;
        let d1 = seg.deriv(t);
        let g = diff.dot(d1);
        let h = d1.norm_sq() + diff.dot(seg.deriv2(t));
        if h <= 0.0 {
            break;
        }
        let next = (t - g / h).clamp(0.0, 1.0);
        let done = (next - t).abs() < 1e-12;
        t = next;
        if done {
            break;
        }
    }
    (seg.eval(t).dist(p), t)
}

/// Pixel in the anti-aliasing band, with its closest boundary point.
#[derive(Clone, Copy, Debug)]
struct BandSample {
    local: u32,
    seg: u32,
    t: f64,
    /// Signed distance (positive inside).
    sd: f64,
}

/// Signed-distance view of one path over its pixel bounding box.
struct Field {
    x0: usize,
    y0: usize,
    w: usize,
    h: usize,
    /// Final inside flag (sd > 0 in the band, winding elsewhere).
    inside: Vec<bool>,
    band: Vec<BandSample>,
}

fn path_field(segs: &[Cubic], width: usize, height: usize, opts: &RenderOptions) -> Field {
    let flat = flatten(segs, opts.steps_per_segment);
    let r = opts.smoothing_radius;
    let reach = r + 2.0 * FLATTEN_TOL;
    let mut lo = Point::new(f64::INFINITY, f64::INFINITY);
    let mut hi = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for v in &flat.verts {
        lo.x = lo.x.min(v.x);
        lo.y = lo.y.min(v.y);
        hi.x = hi.x.max(v.x);
        hi.y = hi.y.max(v.y);
    }
    let clamp_lo = |v: f64, n: usize| ((v - reach - 1.0).floor().max(0.0) as usize).min(n);
    let clamp_hi = |v: f64, n: usize| ((v + reach + 1.0).ceil().max(0.0) as usize).min(n);
    let x0 = clamp_lo(lo.x, width);
    let y0 = clamp_lo(lo.y, height);
    let w = clamp_hi(hi.x, width).saturating_sub(x0);
    let h = clamp_hi(hi.y, height).saturating_sub(y0);

    let mut inside = winding_rows(&flat.verts, x0, y0, w, h);
    let area2: f64 = (0..flat.verts.len()).map(|i| flat.verts[i].cross(flat.verts[(i + 1) % flat.verts.len()])).sum();
    // interior lies on the side where cross(tangent, p - q) has the sign of the area
    let orient = if area2 > 0.0 {
        1.0
    } else if area2 < 0.0 {
        -1.0
    } else {
        0.0
    };

    // nearest polyline edge for pixels within reach
    let mut best: Vec<(f64, u32, f64)> = vec![(f64::INFINITY, 0, 0.0); w * h];
    let n = flat.verts.len();
    if w > 0 && h > 0 {
        for e in 0..n {
            let a = flat.verts[e];
            let b = flat.verts[(e + 1) % n];
            let cx0 = ((a.x.min(b.x) - reach - 0.5).floor() - x0 as f64).max(0.0) as usize;
            let cy0 = ((a.y.min(b.y) - reach - 0.5).floor() - y0 as f64).max(0.0) as usize;
            let cx1 = (((a.x.max(b.x) + reach + 0.5).ceil() - x0 as f64).max(0.0) as usize).min(w);
            let cy1 = (((a.y.max(b.y) + reach + 0.5).ceil() - y0 as f64).max(0.0) as usize).min(h);
            for ly in cy0..cy1 {
                let py = (y0 + ly) as f64 + 0.5;
                for lx in cx0..cx1 {
                    let p = Point::new((x0 + lx) as f64 + 0.5, py);
                    let (d, t) = segment_distance(p, a, b);
                    let slot = &mut best[ly * w + lx];
                    if d < reach && d < slot.0 {
                        *slot = (d, e as u32, t);
                    }
                }
            }
        }
    }

    let nseg = segs.len();
    let mut band = Vec::new();
    for (i, &(d_poly, e, te)) in best.iter().enumerate() {
        if !d_poly.is_finite() {
            continue;
        }
        let p = Point::new((x0 + i % w) as f64 + 0.5, (y0 + i / w) as f64 + 0.5);
        let (k, t_start, dt) = flat.owner[e as usize];
        let k = k as usize;
        let (mut d, mut t) = refine(&segs[k], p, t_start + te * dt);
        let mut seg = k;
        // the closest point may sit just across a segment join
        if t <= 0.0 {
            let prev = (k + nseg - 1) % nseg;
            let (d2, t2) = refine(&segs[prev], p, 1.0);
            if d2 < d {
                (d, t, seg) = (d2, t2, prev);
            }
        } else if t >= 1.0 {
            let next = (k + 1) % nseg;
            let (d2, t2) = refine(&segs[next], p, 0.0);
            if d2 < d {
                (d, t, seg) = (d2, t2, next);
            }
        }
        if d >= r {
            continue;
        }
        let mut positive = inside[i];
        if d < LOCAL_SIGN_BAND && orient != 0.0 {
            let tangent = segs[seg].deriv(t);
            if tangent.norm_sq() > 1e-18 {
                let side = tangent.cross(p - segs[seg].eval(t)) * orient;
                if side != 0.0 {
                    positive = side > 0.0;
                }
            }
        }
        inside[i] = positive && d > 0.0;
        band.push(BandSample { local: i as u32, seg: seg as u32, t, sd: if positive { d } else { -d } });
    }
    Field { x0, y0, w, h, inside, band }
}

#[derive(Debug)]
struct PathRecord {
    x0: usize,
    y0: usize,
    w: usize,
    h: usize,
    /// Raw coverage per local pixel.
    alpha: Vec<f64>,
    /// Color beneath this path per local pixel, before it was composited.
    below: Vec<[f64; 3]>,
    band: Vec<BandSample>,
    segs: Vec<Cubic>,
}

/// Record of a forward render, consumed by one [`RenderTape::backward`] call.
#[derive(Debug)]
pub struct RenderTape {
    width: usize,
    height: usize,
    scale: Point,
    opts: RenderOptions,
    records: Vec<PathRecord>,
    /// `(fill, opacity)` per path.
    paints: Vec<(Rgb, f64)>,
    point_counts: Vec<usize>,
    consumed: bool,
}

/// Gradient of a scalar loss with respect to one path's parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct PathGrad {
    /// `dL/d(x, y)` per control point, in canvas units.
    pub points: Vec<Point>,
    pub fill: [f64; 3],
}

impl PathGrad {
    pub fn zeros(n: usize) -> Self {
        PathGrad { points: vec![Point::ZERO; n], fill: [0.0; 3] }
    }
}

fn rasterize_path(path: &Path, scale: Point, width: usize, height: usize, opts: &RenderOptions) -> PathRecord {
    let segs = to_pixels(path, scale);
    let field = path_field(&segs, width, height, opts);
    let r = opts.smoothing_radius;
    let mut alpha: Vec<f64> = field.inside.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    for s in &field.band {
        alpha[s.local as usize] = smooth_step((s.sd + r) / (2.0 * r)).0;
    }
    PathRecord { x0: field.x0, y0: field.y0, w: field.w, h: field.h, alpha, below: Vec::new(), band: field.band, segs }
}

/// Render with default options.
pub fn render(doc: &SvgDoc, width: usize, height: usize, background: Rgb) -> Result<(Image, RenderTape)> {
    render_with(doc, width, height, background, &RenderOptions::default())
}

pub fn render_with(
    doc: &SvgDoc,
    width: usize,
    height: usize,
    background: Rgb,
    opts: &RenderOptions,
) -> Result<(Image, RenderTape)> {
    if width < 8 || height < 8 {
        return Err(Error::contract(format!("render size {width}x{height} below 8x8")));
    }
    if opts.steps_per_segment == 0 || opts.smoothing_radius <= 0.0 {
        return Err(Error::contract("invalid render options"));
    }
    let scale = Point::new(width as f64 / doc.width, height as f64 / doc.height);
    let mut img = Image::filled(width, height, background);
    let mut records = Vec::with_capacity(doc.paths.len());
    for path in &doc.paths {
        let mut rec = rasterize_path(path, scale, width, height, opts);
        let a_scale = path.opacity;
        let fill = path.fill.0;
        rec.below = vec![[0.0; 3]; rec.w * rec.h];
        for ly in 0..rec.h {
            for lx in 0..rec.w {
                let li = ly * rec.w + lx;
                let a = rec.alpha[li] * a_scale;
                if a <= 0.0 {
                    continue;
                }
                let o = img.index(rec.x0 + lx, rec.y0 + ly);
                let px = &mut img.data[o..o + 3];
                rec.below[li] = [px[0], px[1], px[2]];
                for c in 0..3 {
                    px[c] = (1.0 - a) * px[c] + a * fill[c];
                }
            }
        }
        records.push(rec);
    }
    let tape = RenderTape {
        width,
        height,
        scale,
        opts: *opts,
        records,
        paints: doc.paths.iter().map(|p| (p.fill, p.opacity)).collect(),
        point_counts: doc.paths.iter().map(|p| p.points.len()).collect(),
        consumed: false,
    };
    Ok((img, tape))
}

impl RenderTape {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Backpropagate `dL/dI` (RGB, same size as the render) to every path's
    /// control points and fill. May be called once per tape.
    pub fn backward(&mut self, grad_image: &Image) -> Result<Vec<PathGrad>> {
        if self.consumed {
            return Err(Error::TapeReused);
        }
        if grad_image.width != self.width || grad_image.height != self.height || grad_image.channels != 3 {
            return Err(Error::contract(format!(
                "gradient image {}x{}x{} does not match render {}x{}x3",
                grad_image.width, grad_image.height, grad_image.channels, self.width, self.height
            )));
        }
        self.consumed = true;
        let r = self.opts.smoothing_radius;
        let mut g = grad_image.data.clone();
        let mut out: Vec<PathGrad> = self.point_counts.iter().map(|&n| PathGrad::zeros(n)).collect();

        for (pi, rec) in self.records.iter().enumerate().rev() {
            let (fill, opacity) = self.paints[pi];
            let fill = fill.0;
            // dL/d(raw coverage) per local pixel
            let mut d_alpha = vec![0.0; rec.w * rec.h];
            let grad = &mut out[pi];
            for ly in 0..rec.h {
                for lx in 0..rec.w {
                    let li = ly * rec.w + lx;
                    let a = rec.alpha[li] * opacity;
                    if a <= 0.0 {
                        continue;
                    }
                    let o = ((rec.y0 + ly) * self.width + rec.x0 + lx) * 3;
                    let below = rec.below[li];
                    let mut da = 0.0;
                    for c in 0..3 {
                        grad.fill[c] += g[o + c] * a;
                        da += g[o + c] * (fill[c] - below[c]);
                        g[o + c] *= 1.0 - a;
                    }
                    d_alpha[li] = da * opacity;
                }
            }

            // band pixels move with their closest boundary point
            let d = grad.points.len();
            for s in &rec.band {
                let da = d_alpha[s.local as usize];
                if da == 0.0 {
                    continue;
                }
                let dsd = smooth_step((s.sd + r) / (2.0 * r)).1 / (2.0 * r);
                let dist = s.sd.abs();
                if dsd == 0.0 || dist < 1e-12 {
                    continue;
                }
                let lx = s.local as usize % rec.w;
                let ly = s.local as usize / rec.w;
                let p = Point::new((rec.x0 + lx) as f64 + 0.5, (rec.y0 + ly) as f64 + 0.5);
                let seg = &rec.segs[s.seg as usize];
                let q = seg.eval(s.t);
                // sd = sign * |p - q|, q stationary in t
                let dq = (p - q) * (-s.sd.signum() / dist) * (da * dsd);
                let k = s.seg as usize;
                let idx = [3 * k, 3 * k + 1, 3 * k + 2, (3 * k + 3) % d];
                for (j, w) in idx.iter().zip(bernstein3(s.t)) {
                    grad.points[*j] += dq * w;
                }
            }
            for p in grad.points.iter_mut() {
                p.x *= self.scale.x;
                p.y *= self.scale.y;
            }
        }
        Ok(out)
    }
}

/// Hard region of a path (coverage > 0.5), over the full image.
pub fn path_mask(path: &Path, canvas: (f64, f64), width: usize, height: usize, opts: &RenderOptions) -> Vec<bool> {
    let scale = Point::new(width as f64 / canvas.0, height as f64 / canvas.1);
    let field = path_field(&to_pixels(path, scale), width, height, opts);
    let mut mask = vec![false; width * height];
    for ly in 0..field.h {
        let row = (field.y0 + ly) * width + field.x0;
        mask[row..row + field.w].copy_from_slice(&field.inside[ly * field.w..(ly + 1) * field.w]);
    }
    mask
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Cubic;

    fn rect(id: &str, x0: f64, y0: f64, x1: f64, y1: f64, fill: Rgb) -> Path {
        let c = [Point::new(x0, y0), Point::new(x1, y0), Point::new(x1, y1), Point::new(x0, y1)];
        let segs: Vec<_> = (0..4).map(|i| Cubic::line(c[i], c[(i + 1) % 4])).collect();
        Path::from_cubics(id, &segs, fill, 1.0).unwrap()
    }

    #[test]
    fn full_cover_paints_every_pixel() {
        let c = Rgb::new(0.2, 0.4, 0.6);
        let doc = SvgDoc::new(16.0, 16.0, vec![rect("a", -5.0, -5.0, 21.0, 21.0, c)]).unwrap();
        let (img, _) = render(&doc, 16, 16, Rgb::WHITE).unwrap();
        for px in img.data.chunks(3) {
            for k in 0..3 {
                assert!((px[k] - c.0[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn empty_doc_is_background() {
        let doc = SvgDoc::new(16.0, 16.0, vec![]).unwrap();
        let (img, _) = render(&doc, 16, 16, Rgb::WHITE).unwrap();
        assert!(img.data.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn too_small_is_rejected() {
        let doc = SvgDoc::new(16.0, 16.0, vec![]).unwrap();
        assert!(render(&doc, 4, 16, Rgb::WHITE).is_err());
    }

    #[test]
    fn tape_is_single_use() {
        let doc = SvgDoc::new(16.0, 16.0, vec![rect("a", 2.0, 2.0, 9.0, 9.0, Rgb::BLACK)]).unwrap();
        let (img, mut tape) = render(&doc, 16, 16, Rgb::WHITE).unwrap();
        let zero = Image::new(img.width, img.height, 3);
        let grads = tape.backward(&zero).unwrap();
        assert!(grads[0].points.iter().all(|p| *p == Point::ZERO));
        assert_eq!(grads[0].fill, [0.0; 3]);
        assert!(matches!(tape.backward(&zero), Err(Error::TapeReused)));
    }

    #[test]
    fn mean_red_gradient_on_full_cover() {
        let doc = SvgDoc::new(16.0, 16.0, vec![rect("a", -8.0, -8.0, 24.0, 24.0, Rgb::new(0.3, 0.3, 0.3))]).unwrap();
        let (img, mut tape) = render(&doc, 16, 16, Rgb::WHITE).unwrap();
        let n = (img.width * img.height) as f64;
        let mut g = Image::new(16, 16, 3);
        for px in g.data.chunks_mut(3) {
            px[0] = 1.0 / n;
        }
        let grads = tape.backward(&g).unwrap();
        assert!((grads[0].fill[0] - 1.0).abs() < 1e-12);
        assert_eq!(grads[0].fill[1], 0.0);
        assert!(grads[0].points.iter().all(|p| p.norm() < 1e-12));
    }

    #[test]
    fn coverage_inverse_round_trips() {
        for i in 0..=20 {
            let sd = -1.0 + i as f64 * 0.1;
            let a = smooth_step((sd + 1.0) / 2.0).0;
            assert!((coverage_to_distance(a, 1.0) - sd).abs() < 1e-9, "{sd}");
        }
        assert_eq!(coverage_to_distance(0.5, 1.0), 0.0);
    }

    #[test]
    fn canvas_scale_is_applied() {
        // canvas 8x8 rendered at 32x32: a square [2,6] covers pixels 8..24
        let doc = SvgDoc::new(8.0, 8.0, vec![rect("a", 2.0, 2.0, 6.0, 6.0, Rgb::BLACK)]).unwrap();
        let (img, _) = render(&doc, 32, 32, Rgb::WHITE).unwrap();
        assert!(img.rgb(16, 16).0[0] < 1e-12);
        assert!(img.rgb(4, 4).0[0] > 1.0 - 1e-12);
        let m = path_mask(&doc.paths[0], (8.0, 8.0), 32, 32, &RenderOptions::default());
        assert_eq!(m.iter().filter(|&&b| b).count(), 16 * 16);
    }
}
