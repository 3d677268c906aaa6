//! Arc-length parameterized queries on closed splines.

use super::Path;
use crate::geom::{Cubic, Point};

// 8-point Gauss-Legendre nodes/weights on [-1, 1].
const GL_X: [f64; 8] = [
    -0.960_289_856_497_536_3,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL_W: [f64; 8] = [
    0.101_228_536_290_376_26,
    0.222_381_034_453_374_48,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362,
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_48,
    0.101_228_536_290_376_26,
];
const PANELS: usize = 16;

/// Arc length of `c` over `[0, t]` (composite Gauss-Legendre).
fn cubic_length_to(c: &Cubic, t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let h = t / PANELS as f64;
    let mut total = 0.0;
    for k in 0..PANELS {
        let mid = (k as f64 + 0.5) * h;
        let half = 0.5 * h;
        for (x, w) in GL_X.iter().zip(GL_W.iter()) {
            total += w * half * c.deriv(mid + half * x).norm();
        }
    }
    total
}

/// Parameter `t` at which the arc length of `c` reaches `s` (`0 <= s <= total`).
fn cubic_param_at(c: &Cubic, s: f64, total: f64) -> f64 {
    if total <= 0.0 || s <= 0.0 {
        return 0.0;
    }
    if s >= total {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut t = s / total;
    for _ in 0..60 {
        let f = cubic_length_to(c, t) - s;
        if f.abs() < 1e-13 * total.max(1.0) {
            break;
        }
        if f > 0.0 {
            hi = t;
        } else {
            lo = t;
        }
        let speed = c.deriv(t).norm();
        let newton = t - f / speed;
        t = if speed > 1e-12 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if hi - lo < 1e-15 {
            break;
        }
    }
    t
}

struct ArcTable {
    segs: Vec<Cubic>,
    /// `cumulative[k]` = length of segments `0..k`.
    cumulative: Vec<f64>,
}

impl ArcTable {
    fn new(path: &Path) -> Self {
        let segs: Vec<Cubic> = path.segments().collect();
        let mut cumulative = Vec::with_capacity(segs.len() + 1);
        cumulative.push(0.0);
        let mut acc = 0.0;
        for s in &segs {
            acc += cubic_length_to(s, 1.0);
            cumulative.push(acc);
        }
        ArcTable { segs, cumulative }
    }

    fn total(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    /// Segment and parameter at arc length `s`. A position exactly on a join
    /// resolves to the end of the incoming segment; `s = 0` resolves to the
    /// end of the last segment.
    fn locate_incoming(&self, s: f64) -> (usize, f64) {
        let n = self.segs.len();
        let total = self.total();
        let eps = 1e-12 * total.max(1.0);
        if s <= eps {
            return (n - 1, 1.0);
        }
        let mut k = 0;
        while k + 1 < n && s > self.cumulative[k + 1] + eps {
            k += 1;
        }
        if (s - self.cumulative[k + 1]).abs() <= eps {
            return (k, 1.0);
        }
        let len = self.cumulative[k + 1] - self.cumulative[k];
        (k, cubic_param_at(&self.segs[k], s - self.cumulative[k], len))
    }
}

/// Total arc length of a closed path.
pub fn arc_length(path: &Path) -> f64 {
    ArcTable::new(path).total()
}

/// `n` points evenly spaced in arc length, the first at control point 0.
pub fn sample_boundary(path: &Path, n: usize) -> Vec<Point> {
    assert!(n >= 3, "sample_boundary needs n >= 3");
    let table = ArcTable::new(path);
    let total = table.total();
    (0..n)
        .map(|i| {
            let (k, t) = table.locate_incoming(total * i as f64 / n as f64);
            table.segs[k].eval(t)
        })
        .collect()
}

/// Signed curvature at arc-length-uniform samples.
#[derive(Clone, Debug, PartialEq)]
pub struct CurvatureProfile {
    pub values: Vec<f64>,
    /// Sample indices where the tangent vanished; their value is reported as 0.
    pub degenerate: Vec<usize>,
}

/// Signed curvature `(x'y'' - y'x'') / (x'^2 + y'^2)^{3/2}` at `n` arc-length
/// uniform samples starting at control point 0. Samples on a join use the
/// incoming segment.
pub fn curvature_profile(path: &Path, n: usize) -> CurvatureProfile {
    assert!(n >= 8, "curvature_profile needs n >= 8");
    let table = ArcTable::new(path);
    let total = table.total();
    let mut values = Vec::with_capacity(n);
    let mut degenerate = Vec::new();
    for i in 0..n {
        let (k, t) = table.locate_incoming(total * i as f64 / n as f64);
        match table.segs[k].curvature(t) {
            Some(kappa) => values.push(kappa),
            None => {
                values.push(0.0);
                degenerate.push(i);
            }
        }
    }
    CurvatureProfile { values, degenerate }
}

#[cfg(test)]
mod tests {
    use super::super::parse::ellipse_cubics;
    use super::super::Rgb;
    use super::*;
    use crate::geom::Affine;

    fn poly(pts: &[Point]) -> Path {
        let n = pts.len();
        let segs: Vec<_> = (0..n).map(|i| Cubic::line(pts[i], pts[(i + 1) % n])).collect();
        Path::from_cubics("p", &segs, Rgb::BLACK, 1.0).unwrap()
    }

    fn circle(r: f64) -> Path {
        Path::from_cubics("c", &ellipse_cubics(Point::ZERO, r, r), Rgb::BLACK, 1.0).unwrap()
    }

    fn unit_square() -> Path {
        poly(&[Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(1.0, 1.0), Point::new(0.0, 1.0)])
    }

    #[test]
    fn square_samples_hit_corners() {
        let s = sample_boundary(&unit_square(), 4);
        let expect = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)];
        for (p, (x, y)) in s.iter().zip(expect) {
            assert!(p.dist(Point::new(x, y)) < 1e-6, "{p:?}");
        }
    }

    #[test]
    fn three_samples_lie_on_boundary() {
        let tri = poly(&[Point::new(0.0, 0.0), Point::new(7.0, 1.0), Point::new(2.0, 5.0)]);
        for p in sample_boundary(&tri, 3) {
            let d = (0..3)
                .map(|k| {
                    let c = tri.segment(k);
                    crate::geom::segment_distance(p, c.p0, c.p3).0
                })
                .fold(f64::INFINITY, f64::min);
            assert!(d < 1e-9);
        }
    }

    /// Oracle: dense flattening, then resampling by cumulative chord length.
    fn flatten_resample(path: &Path, n: usize) -> Vec<Point> {
        let per_seg = 20_000;
        let mut pts = Vec::new();
        for c in path.segments() {
            for i in 0..per_seg {
                pts.push(c.eval(i as f64 / per_seg as f64));
            }
        }
        pts.push(pts[0]);
        let mut cum = vec![0.0];
        for w in pts.windows(2) {
            cum.push(cum.last().unwrap() + w[0].dist(w[1]));
        }
        let total = *cum.last().unwrap();
        (0..n)
            .map(|i| {
                let s = total * i as f64 / n as f64;
                let j = cum.partition_point(|&c| c <= s).max(1) - 1;
                let f = (s - cum[j]) / (cum[j + 1] - cum[j]);
                pts[j].lerp(pts[j + 1], f)
            })
            .collect()
    }

    #[test]
    fn circle_samples_match_flattening_oracle() {
        let r = 40.0;
        let c = circle(r);
        let ours = sample_boundary(&c, 50);
        let oracle = flatten_resample(&c, 50);
        for (a, b) in ours.iter().zip(&oracle) {
            assert!((a.norm() - r).abs() < 0.002 * r);
            assert!(a.dist(*b) < 1e-4);
        }
    }

    #[test]
    fn splitting_a_segment_does_not_move_samples() {
        let c = circle(10.0);
        let segs: Vec<Cubic> = c.segments().collect();
        let (a, b) = segs[1].split(0.37);
        let split = Path::from_cubics("s", &[segs[0], a, b, segs[2], segs[3]], Rgb::BLACK, 1.0).unwrap();
        for (p, q) in sample_boundary(&c, 37).iter().zip(sample_boundary(&split, 37)) {
            assert!(p.dist(q) < 1e-6);
        }
    }

    #[test]
    fn straight_edges_have_zero_curvature() {
        let prof = curvature_profile(&unit_square(), 16);
        assert!(prof.values.iter().all(|&k| k == 0.0));
        assert!(prof.degenerate.is_empty());
    }

    #[test]
    fn circle_curvature_is_inverse_radius() {
        let r = 25.0;
        let prof = curvature_profile(&circle(r), 64);
        for k in prof.values {
            // y-down canvas: counter-clockwise in a y-up sense means positive
            assert!((k.abs() * r - 1.0).abs() < 0.03, "{k}");
        }
    }

    #[test]
    fn mirroring_negates_curvature() {
        let c = circle(12.0).transformed(&Affine::scale(1.0, 1.3));
        let m = c.transformed(&Affine::scale(-1.0, 1.0));
        let a = curvature_profile(&c, 32).values;
        let b = curvature_profile(&m, 32).values;
        for (x, y) in a.iter().zip(&b) {
            assert!((x + y).abs() < 1e-9 * x.abs().max(1.0));
        }
    }

    #[test]
    fn degenerate_tangent_is_flagged() {
        let p = Point::new(1.0, 1.0);
        let q = Point::new(5.0, 1.0);
        // first segment has a zero-speed start (p0 == p1 == p2 == p3 collapsed handle)
        let segs = [Cubic::new(p, p, q, q), Cubic::line(q, p)];
        let path = Path::from_cubics("d", &segs, Rgb::BLACK, 1.0).unwrap();
        let prof = curvature_profile(&path, 8);
        assert!(prof.values.iter().all(|k| k.is_finite()));
    }
}
