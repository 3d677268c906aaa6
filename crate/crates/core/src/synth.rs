//! Synthetic shapes and scenes for tests, demos and acceptance runs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::geom::{Affine, Cubic, Point};
use crate::svg::{Path, Rgb, SvgDoc};

/// Deterministic generator for a seed.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn polygon(id: &str, pts: &[Point], fill: Rgb) -> Path {
    let n = pts.len();
    let segs: Vec<_> = (0..n).map(|i| Cubic::line(pts[i], pts[(i + 1) % n])).collect();
    Path::from_cubics(id, &segs, fill, 1.0).unwrap()
}

pub fn rect(id: &str, x0: f64, y0: f64, x1: f64, y1: f64, fill: Rgb) -> Path {
    polygon(id, &[Point::new(x0, y0), Point::new(x1, y0), Point::new(x1, y1), Point::new(x0, y1)], fill)
}

/// Closed spline through `k` points on a perturbed circle, with smooth handles.
pub fn blob(rng: &mut impl Rng, id: &str, center: Point, radius: f64, k: usize, wobble: f64, fill: Rgb) -> Path {
    let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let anchors: Vec<Point> = (0..k)
        .map(|i| {
            let a = phase + std::f64::consts::TAU * i as f64 / k as f64;
            let r = radius * (1.0 + rng.gen_range(-wobble..wobble));
            center + Point::new(a.cos(), a.sin()) * r
        })
        .collect();
    // Catmull-Rom handles
    let segs: Vec<Cubic> = (0..k)
        .map(|i| {
            let j = (i + 1) % k;
            let ti = (anchors[j] - anchors[(i + k - 1) % k]) / 6.0;
            let tj = (anchors[(j + 1) % k] - anchors[i]) / 6.0;
            Cubic::new(anchors[i], anchors[i] + ti, anchors[j] - tj, anchors[j])
        })
        .collect();
    Path::from_cubics(id, &segs, fill, 1.0).unwrap()
}

pub fn random_color(rng: &mut impl Rng) -> Rgb {
    Rgb::new(rng.gen_range(0.05..0.95), rng.gen_range(0.05..0.95), rng.gen_range(0.05..0.95))
}

/// Three overlapping random blobs on a `size`×`size` canvas.
pub fn random_scene(rng: &mut impl Rng, size: f64) -> SvgDoc {
    let paths = (0..3)
        .map(|i| {
            let c = Point::new(rng.gen_range(0.3..0.7) * size, rng.gen_range(0.3..0.7) * size);
            let r = rng.gen_range(0.15..0.3) * size;
            let k = rng.gen_range(3..6);
            let fill = random_color(rng);
            blob(rng, &format!("p{i}"), c, r, k, 0.2, fill)
        })
        .collect();
    SvgDoc::new(size, size, paths).unwrap()
}

/// Standard four-arc circle.
pub fn circle(id: &str, c: Point, r: f64, fill: Rgb) -> Path {
    use crate::svg::KAPPA as K;
    let pts = [Point::new(c.x + r, c.y), Point::new(c.x, c.y + r), Point::new(c.x - r, c.y), Point::new(c.x, c.y - r)];
    let tan = [Point::new(0.0, r), Point::new(-r, 0.0), Point::new(0.0, -r), Point::new(r, 0.0)];
    let segs: Vec<_> = (0..4)
        .map(|i| {
            let j = (i + 1) % 4;
            Cubic::new(pts[i], pts[i] + tan[i] * K, pts[j] - tan[j] * K, pts[j])
        })
        .collect();
    Path::from_cubics(id, &segs, fill, 1.0).unwrap()
}

/// `n` points uniform in the box [0, w] x [0, h].
pub fn point_cloud(rng: &mut impl Rng, n: usize, w: f64, h: f64) -> Vec<Point> {
    (0..n).map(|_| Point::new(rng.gen_range(0.0..w), rng.gen_range(0.0..h))).collect()
}

/// Rotation up to `max_angle` radians, independent axis scales in `scale`,
/// then a translation of up to `max_shift` times the box size per axis.
pub fn random_affine(rng: &mut impl Rng, max_angle: f64, scale: (f64, f64), max_shift: f64, w: f64, h: f64) -> Affine {
    let angle = rng.gen_range(-max_angle..=max_angle);
    let (sx, sy) = (rng.gen_range(scale.0..=scale.1), rng.gen_range(scale.0..=scale.1));
    let t = Point::new(rng.gen_range(-max_shift..=max_shift) * w, rng.gen_range(-max_shift..=max_shift) * h);
    Affine::translate(t.x, t.y).then_after(&Affine::rotate(angle)).then_after(&Affine::scale(sx, sy))
}

/// Isotropic Gaussian noise of standard deviation `sigma` per axis.
pub fn gaussian_jitter(rng: &mut impl Rng, pts: &[Point], sigma: f64) -> Vec<Point> {
    let normal = Normal::new(0.0, sigma).expect("sigma is finite and non-negative");
    pts.iter().map(|&p| p + Point::new(normal.sample(rng), normal.sample(rng))).collect()
}

/// Five distinctly colored shapes on a white `size`×`size` canvas.
pub fn showcase(size: f64) -> SvgDoc {
    let k = size / 256.0;
    let p = |x: f64, y: f64| Point::new(x * k, y * k);
    let mut rng = rng(7);
    let paths = vec![
        circle("sun", p(190.0, 60.0), 28.0 * k, Rgb::new(0.95, 0.8, 0.1)),
        rect("box", 30.0 * k, 150.0 * k, 100.0 * k, 220.0 * k, Rgb::new(0.2, 0.3, 0.8)),
        polygon("tri", &[p(60.0, 30.0), p(110.0, 110.0), p(20.0, 100.0)], Rgb::new(0.8, 0.15, 0.15)),
        blob(&mut rng, "blob", p(180.0, 180.0), 40.0 * k, 5, 0.2, Rgb::new(0.15, 0.65, 0.3)),
        polygon(
            "kite",
            &[p(128.0, 100.0), p(150.0, 130.0), p(128.0, 170.0), p(106.0, 130.0)],
            Rgb::new(0.55, 0.2, 0.6),
        ),
    ];
    SvgDoc::new(size, size, paths).unwrap()
}

/// Each path moved by its own similarity about its control-point centroid:
/// rotation up to 20°, scale in [0.8, 1.25], shift up to 10% of the longer side.
pub fn perturb_paths(rng: &mut impl Rng, doc: &SvgDoc) -> SvgDoc {
    let mut out = doc.clone();
    let reach = 0.1 * doc.width.max(doc.height);
    for p in out.paths.iter_mut() {
        let c = crate::geom::centroid(&p.points);
        let angle = rng.gen_range(-20f64..=20.0).to_radians();
        let scale = rng.gen_range(0.8..=1.25);
        let (dir, len) = (rng.gen_range(0.0..std::f64::consts::TAU), rng.gen_range(0.0..=reach));
        let xf = Affine::translate(c.x + len * dir.cos(), c.y + len * dir.sin())
            .then_after(&Affine::similarity(angle, scale, Point::ZERO))
            .then_after(&Affine::translate(-c.x, -c.y));
        *p = p.transformed(&xf);
    }
    out
}

/// Exemplar and a perturbed copy for retargeting. Draws whose shapes leave
/// the canvas, or whose render does not show exactly one region per path
/// (split shapes, enclosed background pockets), are redrawn.
pub fn retarget_pair(seed: u64, size: f64) -> (SvgDoc, SvgDoc) {
    let exemplar = showcase(size);
    let px = size.round() as usize;
    let mut rng = rng(seed);
    loop {
        let target = perturb_paths(&mut rng, &exemplar);
        let inside = target.all_points().all(|q| q.x >= 1.0 && q.y >= 1.0 && q.x <= size - 1.0 && q.y <= size - 1.0);
        if !inside {
            continue;
        }
        let (img, _) = crate::raster::render(&target, px, px, Rgb::WHITE).unwrap();
        let tol = crate::segment::DEFAULT_COLOR_TOL;
        let comps = crate::segment::connected_components(&img, tol, crate::segment::default_min_area(px, px));
        if comps.len() == target.paths.len() {
            return (exemplar, target);
        }
    }
}
