//! Document model for the SVG subset handled by the pipeline: z-ordered,
//! uniformly filled, closed piecewise-cubic paths.

mod parse;
mod path_data;
mod query;
mod write;

use serde::{Deserialize, Serialize};

pub use parse::{ellipse_cubics, parse_svg, KAPPA};
pub use query::{arc_length, curvature_profile, sample_boundary, CurvatureProfile};
pub use write::serialize_svg;

use crate::error::{Error, Result};
use crate::geom::{Affine, Cubic, Point};

/// Linear RGB triple, each channel in `[0, 1]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Rgb(pub [f64; 3]);

impl Rgb {
    pub const WHITE: Rgb = Rgb([1.0, 1.0, 1.0]);
    pub const BLACK: Rgb = Rgb([0.0, 0.0, 0.0]);

    pub fn new(r: f64, g: f64, b: f64) -> Self {
        Rgb([r, g, b])
    }

    pub fn from_u8(r: u8, g: u8, b: u8) -> Self {
        Rgb([r as f64 / 255.0, g as f64 / 255.0, b as f64 / 255.0])
    }

    /// 8-bit quantization, rounding half up.
    pub fn to_u8(self) -> [u8; 3] {
        self.0.map(|c| (c.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8)
    }

    pub fn to_hex(self) -> String {
        let [r, g, b] = self.to_u8();
        format!("#{r:02x}{g:02x}{b:02x}")
    }

    pub fn clamped(self) -> Rgb {
        Rgb(self.0.map(|c| c.clamp(0.0, 1.0)))
    }

    /// Largest per-channel absolute difference.
    pub fn max_diff(self, o: Rgb) -> f64 {
        (0..3).map(|c| (self.0[c] - o.0[c]).abs()).fold(0.0, f64::max)
    }

    pub fn dist_sq(self, o: Rgb) -> f64 {
        (0..3).map(|c| (self.0[c] - o.0[c]).powi(2)).sum()
    }
}

/// A closed piecewise cubic Bézier spline with a uniform fill.
///
/// Segment `k` uses control points `3k, 3k+1, 3k+2` and `3(k+1) mod d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub id: String,
    pub points: Vec<Point>,
    pub fill: Rgb,
    pub opacity: f64,
}

impl Path {
    pub fn new(id: impl Into<String>, points: Vec<Point>, fill: Rgb, opacity: f64) -> Result<Self> {
        let path = Path { id: id.into(), points, fill, opacity };
        path.validate()?;
        Ok(path)
    }

    /// Build a closed path from consecutive cubic segments (`seg[k].p3 == seg[k+1].p0`).
    pub fn from_cubics(id: impl Into<String>, cubics: &[Cubic], fill: Rgb, opacity: f64) -> Result<Self> {
        let mut points = Vec::with_capacity(cubics.len() * 3);
        for c in cubics {
            points.extend_from_slice(&[c.p0, c.p1, c.p2]);
        }
        Path::new(id, points, fill, opacity)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.points.len();
        if d < 6 || !d.is_multiple_of(3) {
            return Err(Error::contract(format!(
                "path `{}` has {d} control points; need a multiple of 3 that is at least 6",
                self.id
            )));
        }
        if let Some(p) = self.points.iter().find(|p| !p.is_finite()) {
            return Err(Error::contract(format!("path `{}` has non-finite point {p:?}", self.id)));
        }
        let in_unit = |v: f64| (0.0..=1.0).contains(&v);
        if !self.fill.0.iter().all(|&c| in_unit(c)) || !in_unit(self.opacity) {
            return Err(Error::contract(format!("path `{}` fill/opacity outside [0,1]", self.id)));
        }
        Ok(())
    }

    pub fn segment_count(&self) -> usize {
        self.points.len() / 3
    }

    /// Control point indices of segment `k`.
    #[inline]
    pub fn segment_indices(&self, k: usize) -> [usize; 4] {
        let d = self.points.len();
        [3 * k, 3 * k + 1, 3 * k + 2, (3 * k + 3) % d]
    }

    #[inline]
    pub fn segment(&self, k: usize) -> Cubic {
        let [a, b, c, d] = self.segment_indices(k);
        let p = &self.points;
        Cubic::new(p[a], p[b], p[c], p[d])
    }

    pub fn segments(&self) -> impl Iterator<Item = Cubic> + '_ {
        (0..self.segment_count()).map(|k| self.segment(k))
    }

    pub fn transformed(&self, xf: &Affine) -> Path {
        Path { points: self.points.iter().map(|&p| xf.apply(p)).collect(), ..self.clone() }
    }

    /// Axis-aligned bounds of the control polygon (contains the curve).
    pub fn control_bounds(&self) -> (Point, Point) {
        let mut lo = Point::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in &self.points {
            lo.x = lo.x.min(p.x);
            lo.y = lo.y.min(p.y);
            hi.x = hi.x.max(p.x);
            hi.y = hi.y.max(p.y);
        }
        (lo, hi)
    }
}

/// An ordered list of paths; index is z-order (later paths are drawn on top).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvgDoc {
    pub width: f64,
    pub height: f64,
    pub paths: Vec<Path>,
}

impl SvgDoc {
    pub fn new(width: f64, height: f64, paths: Vec<Path>) -> Result<Self> {
        let doc = SvgDoc { width, height, paths };
        doc.validate()?;
        Ok(doc)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.width > 0.0 && self.height > 0.0) || !self.width.is_finite() || !self.height.is_finite() {
            return Err(Error::contract(format!("canvas must be positive, got {}x{}", self.width, self.height)));
        }
        let mut seen = std::collections::HashSet::new();
        for p in &self.paths {
            p.validate()?;
            if !seen.insert(p.id.as_str()) {
                return Err(Error::contract(format!("duplicate path id `{}`", p.id)));
            }
        }
        Ok(())
    }

    pub fn all_points(&self) -> impl Iterator<Item = Point> + '_ {
        self.paths.iter().flat_map(|p| p.points.iter().copied())
    }

    /// True when both docs have the same path ids, order and control point counts.
    pub fn same_structure(&self, other: &SvgDoc) -> bool {
        self.paths.len() == other.paths.len()
            && self.paths.iter().zip(&other.paths).all(|(a, b)| a.id == b.id && a.points.len() == b.points.len())
    }
}
