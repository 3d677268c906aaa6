//! Small 2D geometry toolkit: points, affine maps and cubic Bézier helpers.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const ZERO: Point = Point { x: 0.0, y: 0.0 };

    #[inline]
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    #[inline]
    pub fn dot(self, o: Point) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3D cross product.
    #[inline]
    pub fn cross(self, o: Point) -> f64 {
        self.x * o.y - self.y * o.x
    }

    #[inline]
    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.norm_sq().sqrt()
    }

    #[inline]
    pub fn dist(self, o: Point) -> f64 {
        (self - o).norm()
    }

    #[inline]
    pub fn lerp(self, o: Point, t: f64) -> Point {
        self + (o - self) * t
    }

    /// Rotate by +90°: (x, y) -> (-y, x).
    #[inline]
    pub fn perp(self) -> Point {
        Point::new(-self.y, self.x)
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Point {
    type Output = Point;
    #[inline]
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Point {
    #[inline]
    fn add_assign(&mut self, o: Point) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Point {
    type Output = Point;
    #[inline]
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl SubAssign for Point {
    #[inline]
    fn sub_assign(&mut self, o: Point) {
        self.x -= o.x;
        self.y -= o.y;
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    #[inline]
    fn mul(self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s)
    }
}

impl Div<f64> for Point {
    type Output = Point;
    #[inline]
    fn div(self, s: f64) -> Point {
        Point::new(self.x / s, self.y / s)
    }
}

impl Neg for Point {
    type Output = Point;
    #[inline]
    fn neg(self) -> Point {
        Point::new(-self.x, -self.y)
    }
}

pub fn centroid(points: &[Point]) -> Point {
    let n = points.len().max(1) as f64;
    points.iter().fold(Point::ZERO, |acc, &p| acc + p) / n
}

/// Affine map `p -> linear * p + translation`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    /// Row-major 2×2 linear part.
    pub linear: [[f64; 2]; 2],
    pub translation: Point,
}

impl Default for Affine {
    fn default() -> Self {
        Affine::IDENTITY
    }
}

impl Affine {
    pub const IDENTITY: Affine = Affine { linear: [[1.0, 0.0], [0.0, 1.0]], translation: Point::ZERO };

    /// Build from SVG `matrix(a b c d e f)` coefficients.
    pub fn from_svg_matrix(a: f64, b: f64, c: f64, d: f64, e: f64, f: f64) -> Self {
        Affine { linear: [[a, c], [b, d]], translation: Point::new(e, f) }
    }

    /// The six SVG `matrix()` coefficients `[a b c d e f]`.
    pub fn to_svg_matrix(&self) -> [f64; 6] {
        [
            self.linear[0][0],
            self.linear[1][0],
            self.linear[0][1],
            self.linear[1][1],
            self.translation.x,
            self.translation.y,
        ]
    }

    pub fn translate(tx: f64, ty: f64) -> Self {
        Affine { translation: Point::new(tx, ty), ..Affine::IDENTITY }
    }

    pub fn scale(sx: f64, sy: f64) -> Self {
        Affine { linear: [[sx, 0.0], [0.0, sy]], translation: Point::ZERO }
    }

    /// Counter-clockwise rotation (in a y-up frame) by `angle` radians about the origin.
    pub fn rotate(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Affine { linear: [[c, -s], [s, c]], translation: Point::ZERO }
    }

    /// Rotation, uniform scale, then translation.
    pub fn similarity(angle: f64, scale: f64, translation: Point) -> Self {
        let r = Affine::rotate(angle);
        Affine {
            linear: [
                [r.linear[0][0] * scale, r.linear[0][1] * scale],
                [r.linear[1][0] * scale, r.linear[1][1] * scale],
            ],
            translation,
        }
    }

    #[inline]
    pub fn apply(&self, p: Point) -> Point {
        let m = &self.linear;
        Point::new(
            m[0][0] * p.x + m[0][1] * p.y + self.translation.x,
            m[1][0] * p.x + m[1][1] * p.y + self.translation.y,
        )
    }

    /// `self ∘ other`: apply `other` first.
    pub fn then_after(&self, other: &Affine) -> Affine {
        let a = &self.linear;
        let b = &other.linear;
        let mut linear = [[0.0; 2]; 2];
        for (i, row) in linear.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        Affine { linear, translation: self.apply(other.translation) }
    }

    pub fn det(&self) -> f64 {
        self.linear[0][0] * self.linear[1][1] - self.linear[0][1] * self.linear[1][0]
    }

    pub fn inverse(&self) -> Option<Affine> {
        let det = self.det();
        if det.abs() < 1e-300 || !det.is_finite() {
            return None;
        }
        let m = &self.linear;
        let linear = [[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]];
        let inv = Affine { linear, translation: Point::ZERO };
        let t = inv.apply(self.translation);
        Some(Affine { linear, translation: -t })
    }
}

/// Cubic Bézier segment with control points `p0..p3`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cubic {
    pub p0: Point,
    pub p1: Point,
    pub p2: Point,
    pub p3: Point,
}

/// Bernstein basis of degree 3 at `t`.
#[inline]
pub fn bernstein3(t: f64) -> [f64; 4] {
    let s = 1.0 - t;
    [s * s * s, 3.0 * s * s * t, 3.0 * s * t * t, t * t * t]
}

impl Cubic {
    pub fn new(p0: Point, p1: Point, p2: Point, p3: Point) -> Self {
        Cubic { p0, p1, p2, p3 }
    }

    /// Degenerate cubic tracing the straight line `a -> b` at uniform speed.
    pub fn line(a: Point, b: Point) -> Self {
        Cubic::new(a, a.lerp(b, 1.0 / 3.0), a.lerp(b, 2.0 / 3.0), b)
    }

    /// Degree elevation of a quadratic.
    pub fn from_quad(a: Point, c: Point, b: Point) -> Self {
        Cubic::new(a, a + (c - a) * (2.0 / 3.0), b + (c - b) * (2.0 / 3.0), b)
    }

    #[inline]
    pub fn eval(&self, t: f64) -> Point {
        let w = bernstein3(t);
        self.p0 * w[0] + self.p1 * w[1] + self.p2 * w[2] + self.p3 * w[3]
    }

    #[inline]
    pub fn deriv(&self, t: f64) -> Point {
        let s = 1.0 - t;
        (self.p1 - self.p0) * (3.0 * s * s) + (self.p2 - self.p1) * (6.0 * s * t) + (self.p3 - self.p2) * (3.0 * t * t)
    }

    #[inline]
    pub fn deriv2(&self, t: f64) -> Point {
        (self.p2 - self.p1 * 2.0 + self.p0) * (6.0 * (1.0 - t)) + (self.p3 - self.p2 * 2.0 + self.p1) * (6.0 * t)
    }

    /// De Casteljau split at `t`.
    pub fn split(&self, t: f64) -> (Cubic, Cubic) {
        let a = self.p0.lerp(self.p1, t);
        let b = self.p1.lerp(self.p2, t);
        let c = self.p2.lerp(self.p3, t);
        let ab = a.lerp(b, t);
        let bc = b.lerp(c, t);
        let m = ab.lerp(bc, t);
        (Cubic::new(self.p0, a, ab, m), Cubic::new(m, bc, c, self.p3))
    }

    /// Signed curvature at `t`; `None` where the speed vanishes.
    pub fn curvature(&self, t: f64) -> Option<f64> {
        let d1 = self.deriv(t);
        let d2 = self.deriv2(t);
        let speed_sq = d1.norm_sq();
        if speed_sq < 1e-12 {
            return None;
        }
        Some(d1.cross(d2) / speed_sq.powf(1.5))
    }

    pub fn map(&self, xf: &Affine) -> Cubic {
        Cubic::new(xf.apply(self.p0), xf.apply(self.p1), xf.apply(self.p2), xf.apply(self.p3))
    }
}

/// Twice the signed area of a closed polygon (positive when counter-clockwise
/// in a y-up frame, i.e. `Σ x_i y_{i+1} - x_{i+1} y_i > 0`).
pub fn signed_area2(poly: &[Point]) -> f64 {
    let n = poly.len();
    (0..n).map(|i| poly[i].cross(poly[(i + 1) % n])).sum()
}

/// Distance from `p` to the segment `a-b`, with the clamped parameter of the closest point.
#[inline]
pub fn segment_distance(p: Point, a: Point, b: Point) -> (f64, f64) {
    let ab = b - a;
    let len_sq = ab.norm_sq();
    let t = if len_sq > 0.0 { ((p - a).dot(ab) / len_sq).clamp(0.0, 1.0) } else { 0.0 };
    ((p - a.lerp(b, t)).norm(), t)
}
