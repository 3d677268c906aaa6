//! Flat-color decomposition of the target image and per-path segmentation of
//! the exemplar render.

use std::collections::VecDeque;

use serde::Serialize;

use crate::geom::Point;
use crate::raster::{coverage_to_distance, path_mask, Image, RenderOptions};
use crate::svg::{Rgb, SvgDoc};

pub const DEFAULT_COLOR_TOL: f64 = 0.02;
/// Fraction of the canvas below which a flood region is treated as a sliver.
pub const DEFAULT_MIN_AREA_FRACTION: f64 = 0.0005;

/// Default `min_area` in pixels for an image of the given size.
pub fn default_min_area(width: usize, height: usize) -> usize {
    ((width * height) as f64 * DEFAULT_MIN_AREA_FRACTION).ceil() as usize
}

/// Boolean bitmap at image resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize) -> Self {
        Mask { width, height, data: vec![false; width * height] }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    /// Out-of-range coordinates read as false.
    #[inline]
    pub fn get_signed(&self, x: isize, y: isize) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height && self.get(x as usize, y as usize)
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn overlap(&self, other: &Mask) -> usize {
        self.data.iter().zip(&other.data).filter(|(a, b)| **a && **b).count()
    }
}

#[derive(Clone, Debug)]
pub struct Component {
    pub id: usize,
    pub mask: Mask,
    pub mean_color: Rgb,
    pub area: usize,
    /// Mean pixel center, in pixels.
    pub centroid: Point,
    /// Outer contour along pixel edges, vertices at pixel corners, closed
    /// (last vertex connects to the first), counter-clockwise as seen on a
    /// y-down screen (negative shoelace sum).
    pub boundary: Vec<Point>,
    /// Sub-pixel estimates of where the region's edge crosses between
    /// neighbouring pixel centers.
    pub edge_points: Vec<Point>,
}

/// Per-pixel labels; `-1` is background or unlabeled.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LabelMap {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<i32>,
    /// Labels that own no pixels (e.g. fully occluded paths).
    pub empty: Vec<usize>,
}

impl LabelMap {
    pub fn from_components(components: &[Component], width: usize, height: usize) -> Self {
        let mut labels = vec![-1; width * height];
        for c in components {
            for (i, &m) in c.mask.data.iter().enumerate() {
                if m {
                    labels[i] = c.id as i32;
                }
            }
        }
        LabelMap { width, height, labels, empty: Vec::new() }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> i32 {
        self.labels[y * self.width + x]
    }

    /// Color-coded view for debugging; background is black.
    pub fn to_debug_image(&self) -> Image {
        let mut img = Image::new(self.width, self.height, 3);
        for (i, &l) in self.labels.iter().enumerate() {
            if l >= 0 {
                let c = palette(l as usize);
                img.data[i * 3..i * 3 + 3].copy_from_slice(&c.0);
            }
        }
        img
    }
}

/// Well-separated deterministic colors (golden-angle hue walk).
fn palette(i: usize) -> Rgb {
    let h = (i as f64 * 0.618_033_988_749_895).fract() * 6.0;
    let x = 1.0 - (h % 2.0 - 1.0).abs();
    let (r, g, b) = match h as usize {
        0 => (1.0, x, 0.0),
        1 => (x, 1.0, 0.0),
        2 => (0.0, 1.0, x),
        3 => (0.0, x, 1.0),
        4 => (x, 0.0, 1.0),
        _ => (1.0, 0.0, x),
    };
    Rgb::new(0.2 + 0.8 * r, 0.2 + 0.8 * g, 0.2 + 0.8 * b)
}

/// What lies behind the components.
#[derive(Clone, Debug, PartialEq)]
pub enum Background {
    None,
    /// Transparent pixels (alpha = 0).
    Alpha(Mask),
    /// Corner color key; the mask holds the pixels flood-connected to the keyed corners.
    Key(Rgb, Mask),
}

impl Background {
    fn contains(&self, i: usize) -> bool {
        match self {
            Background::None => false,
            Background::Alpha(m) | Background::Key(_, m) => m.data[i],
        }
    }
}

const NEIGHBORS: [(isize, isize); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];

fn neighbors(i: usize, w: usize, h: usize) -> impl Iterator<Item = usize> {
    let (x, y) = ((i % w) as isize, (i / w) as isize);
    NEIGHBORS.iter().filter_map(move |&(dx, dy)| {
        let (nx, ny) = (x + dx, y + dy);
        (nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h).then(|| ny as usize * w + nx as usize)
    })
}

/// Background detection: alpha when present, otherwise a color key shared by
/// at least three of the four corners, grown by flood fill from those corners.
/// A key that would swallow the whole image is ignored.
pub fn detect_background(img: &Image, color_tol: f64) -> Background {
    let (w, h) = (img.width, img.height);
    if w == 0 || h == 0 {
        return Background::None;
    }
    if img.channels == 4 {
        let mut m = Mask::new(w, h);
        for i in 0..w * h {
            m.data[i] = img.data[i * 4 + 3] <= 0.0;
        }
        return if m.data.iter().any(|&b| b) { Background::Alpha(m) } else { Background::None };
    }
    let corners = [0, w - 1, (h - 1) * w, (h - 1) * w + w - 1];
    let color = |i: usize| img.rgb(i % w, i / w);
    let mut key = None;
    for &c in &corners {
        let votes = corners.iter().filter(|&&o| color(o).max_diff(color(c)) <= color_tol).count();
        if votes >= 3 {
            key = Some(color(c));
            break;
        }
    }
    let Some(key) = key else {
        return Background::None;
    };
    let mut m = Mask::new(w, h);
    let mut queue = VecDeque::new();
    for &c in &corners {
        if color(c).max_diff(key) <= color_tol && !m.data[c] {
            m.data[c] = true;
            queue.push_back(c);
        }
    }
    while let Some(i) = queue.pop_front() {
        for n in neighbors(i, w, h) {
            if !m.data[n] && color(n).max_diff(color(i)) <= color_tol {
                m.data[n] = true;
                queue.push_back(n);
            }
        }
    }
    if m.data.iter().all(|&b| b) {
        Background::None
    } else {
        Background::Key(key, m)
    }
}

/// Flat-color connected components with automatic background detection.
pub fn connected_components(img: &Image, color_tol: f64, min_area: usize) -> Vec<Component> {
    let bg = detect_background(img, color_tol);
    connected_components_with(img, color_tol, min_area, &bg)
}

/// Flat-color connected components over the non-background pixels.
///
/// Adjacent pixels join when their max-channel difference is at most
/// `color_tol`. Regions smaller than `min_area`, and regions without a 2x2
/// block (one-pixel-wide strips), are dissolved pixel by pixel
/// into the neighbouring surviving region (or keyed background) of nearest
/// color; regions with no surviving neighbour are dropped.
pub fn connected_components_with(img: &Image, color_tol: f64, min_area: usize, bg: &Background) -> Vec<Component> {
    let (w, h) = (img.width, img.height);
    let n = w * h;
    let color = |i: usize| img.rgb(i % w, i / w);

    // flood regions
    let mut region = vec![usize::MAX; n];
    let mut regions: Vec<Vec<usize>> = Vec::new();
    let mut queue = VecDeque::new();
    for seed in 0..n {
        if region[seed] != usize::MAX || bg.contains(seed) {
            continue;
        }
        let r = regions.len();
        let mut pixels = vec![seed];
        region[seed] = r;
        queue.push_back(seed);
        while let Some(i) = queue.pop_front() {
            for nb in neighbors(i, w, h) {
                if region[nb] == usize::MAX && !bg.contains(nb) && color(nb).max_diff(color(i)) <= color_tol {
                    region[nb] = r;
                    pixels.push(nb);
                    queue.push_back(nb);
                }
            }
        }
        regions.push(pixels);
    }

    // surviving regions keep their pixels; the mean color comes from interior pixels
    const BG: usize = OWNER_BG;
    const FREE: usize = OWNER_FREE;
    let mut owner = vec![FREE; n];
    let mut means: Vec<Rgb> = Vec::new();
    let mut core_area: Vec<usize> = Vec::new();
    let mut keep = Vec::new();
    for (r, pixels) in regions.iter().enumerate() {
        // anti-aliased strips along an edge are one pixel wide: no 2x2 block, no interior
        let interior: Vec<usize> = pixels
            .iter()
            .copied()
            .filter(|&i| {
                let (x, y) = (i % w, i / w);
                x > 0 && y > 0 && x + 1 < w && y + 1 < h && neighbors(i, w, h).all(|nb| region[nb] == r)
            })
            .collect();
        let solid = if interior.is_empty() { pixels } else { &interior };
        let block = pixels.iter().any(|&i| {
            let (x, y) = (i % w, i / w);
            x + 1 < w && y + 1 < h && [i + 1, i + w, i + w + 1].iter().all(|&j| region[j] == r)
        });
        if pixels.len() >= min_area && (block || pixels.len() == n) {
            let k = means.len();
            let mut acc = [0.0; 3];
            for &i in pixels {
                owner[i] = k;
            }
            for &i in solid {
                let c = color(i);
                (0..3).for_each(|ch| acc[ch] += c.0[ch]);
            }
            means.push(Rgb(acc.map(|v| v / solid.len() as f64)));
            core_area.push(pixels.len());
            keep.push(r);
        }
    }
    let key = match bg {
        Background::Key(c, m) => {
            for (i, &b) in m.data.iter().enumerate() {
                if b {
                    owner[i] = BG;
                }
            }
            Some(*c)
        }
        _ => None,
    };

    // dissolve slivers in breadth-first waves from assigned pixels
    let mut frontier: Vec<usize> = (0..n)
        .filter(|&i| owner[i] == FREE && !bg.contains(i) && neighbors(i, w, h).any(|nb| owner[nb] != FREE))
        .collect();
    let mut queued = vec![false; n];
    frontier.iter().for_each(|&i| queued[i] = true);
    while !frontier.is_empty() {
        let mut decided = Vec::with_capacity(frontier.len());
        for &i in &frontier {
            let c = color(i);
            let mut best: Option<(f64, usize, usize)> = None;
            for nb in neighbors(i, w, h) {
                let o = owner[nb];
                if o == FREE {
                    continue;
                }
                let (ref_color, area) =
                    if o == BG { (key.expect("keyed background"), 0) } else { (means[o], core_area[o]) };
                let d = c.dist_sq(ref_color);
                let better = match best {
                    None => true,
                    Some((bd, ba, bo)) => d < bd || (d == bd && (area > ba || (area == ba && o < bo))),
                };
                if better {
                    best = Some((d, area, o));
                }
            }
            if let Some((_, _, o)) = best {
                decided.push((i, o));
            }
        }
        let mut next = Vec::new();
        for &(i, o) in &decided {
            owner[i] = o;
        }
        for &(i, _) in &decided {
            for nb in neighbors(i, w, h) {
                if owner[nb] == FREE && !bg.contains(nb) && !queued[nb] {
                    queued[nb] = true;
                    next.push(nb);
                }
            }
        }
        frontier = next;
    }

    let mut comps: Vec<Component> = (0..means.len())
        .map(|k| {
            let mut c = assemble(img, &owner, k, means[k]);
            c.edge_points = edge_points(img, &owner, k, &means, key, bg);
            c
        })
        .collect();

    // by area, largest first; ties by first pixel for determinism
    let first_pixel = |c: &Component| c.mask.data.iter().position(|&b| b).unwrap_or(usize::MAX);
    comps.sort_by(|a, b| b.area.cmp(&a.area).then(first_pixel(a).cmp(&first_pixel(b))));
    for (id, c) in comps.iter_mut().enumerate() {
        c.id = id;
    }
    comps
}

const OWNER_BG: usize = usize::MAX - 1;
const OWNER_FREE: usize = usize::MAX;

/// Mask, area, centroid and contour of the pixels owned by `k`.
fn assemble(img: &Image, owner: &[usize], k: usize, mean_color: Rgb) -> Component {
    let (w, h) = (img.width, img.height);
    let mut mask = Mask::new(w, h);
    let (mut sx, mut sy, mut area) = (0.0, 0.0, 0usize);
    for (i, &o) in owner.iter().enumerate() {
        if o == k {
            mask.data[i] = true;
            sx += (i % w) as f64 + 0.5;
            sy += (i / w) as f64 + 0.5;
            area += 1;
        }
    }
    Component {
        id: k,
        boundary: outer_contour(&mask),
        mask,
        mean_color,
        area,
        centroid: Point::new(sx / area.max(1) as f64, sy / area.max(1) as f64),
        edge_points: Vec::new(),
    }
}

/// Components for the regions of a label map over `img` (typically an
/// exemplar render and its [`exemplar_segments`]), with the same sub-pixel
/// edge extraction as [`connected_components`]. Unlabeled pixels are taken to
/// show `background`. Entry `k` is `None` when label `k` owns no pixel.
pub fn region_components(img: &Image, labels: &LabelMap, n_labels: usize, background: Rgb) -> Vec<Option<Component>> {
    let (w, h) = (img.width, img.height);
    assert_eq!((labels.width, labels.height), (w, h), "label map and image differ in size");
    let owner: Vec<usize> =
        labels.labels.iter().map(|&l| if l >= 0 && (l as usize) < n_labels { l as usize } else { OWNER_BG }).collect();
    let mut acc = vec![[0.0; 3]; n_labels];
    let mut count = vec![0usize; n_labels];
    let mut any = vec![false; n_labels];
    for (i, &o) in owner.iter().enumerate() {
        if o == OWNER_BG {
            continue;
        }
        any[o] = true;
        let interior = neighbors(i, w, h).count() == 4 && neighbors(i, w, h).all(|nb| owner[nb] == o);
        if interior {
            let c = img.rgb(i % w, i / w);
            (0..3).for_each(|ch| acc[o][ch] += c.0[ch]);
            count[o] += 1;
        }
    }
    for (i, &o) in owner.iter().enumerate() {
        if o != OWNER_BG && count[o] == 0 {
            // no interior pixel: fall back to every pixel of the region
            let c = img.rgb(i % w, i / w);
            (0..3).for_each(|ch| acc[o][ch] += c.0[ch]);
        }
    }
    let means: Vec<Rgb> = (0..n_labels)
        .map(|k| {
            let n = if count[k] > 0 { count[k] } else { owner.iter().filter(|&&o| o == k).count().max(1) };
            Rgb(acc[k].map(|v| v / n as f64))
        })
        .collect();
    (0..n_labels)
        .map(|k| {
            any[k].then(|| {
                let mut c = assemble(img, &owner, k, means[k]);
                c.edge_points = edge_points(img, &owner, k, &means, Some(background), &Background::None);
                c
            })
        })
        .collect()
}

/// Sub-pixel crossings of the 0.5-coverage level between component `k` and
/// each differently owned 4-neighbour, assuming the pixel color is a blend of
/// the two owners' colors.
fn edge_points(img: &Image, owner: &[usize], k: usize, means: &[Rgb], key: Option<Rgb>, bg: &Background) -> Vec<Point> {
    const BG: usize = OWNER_BG;
    const FREE: usize = OWNER_FREE;
    let (w, h) = (img.width, img.height);
    let inner = means[k];
    let mut out = Vec::new();
    for i in 0..w * h {
        if owner[i] != k {
            continue;
        }
        for nb in neighbors(i, w, h) {
            let o = owner[nb];
            if o == k {
                continue;
            }
            let pa = Point::new((i % w) as f64 + 0.5, (i / w) as f64 + 0.5);
            let pb = Point::new((nb % w) as f64 + 0.5, (nb / w) as f64 + 0.5);
            let membership = |j: usize| -> Option<f64> {
                if matches!(bg, Background::Alpha(_)) && (o == FREE || bg.contains(nb)) {
                    return Some(img.alpha(j % w, j / w));
                }
                let outer = match o {
                    BG => key?,
                    FREE => return None,
                    _ => means[o],
                };
                let diff: [f64; 3] = std::array::from_fn(|c| inner.0[c] - outer.0[c]);
                let norm: f64 = diff.iter().map(|d| d * d).sum();
                if norm < 1e-6 {
                    return None;
                }
                let px = img.rgb(j % w, j / w);
                let proj: f64 = (0..3).map(|c| (px.0[c] - outer.0[c]) * diff[c]).sum::<f64>() / norm;
                Some(proj.clamp(0.0, 1.0))
            };
            let (Some(ua), Some(ub)) = (membership(i), membership(nb)) else {
                continue;
            };
            if !(ua >= 0.5 && ub < 0.5) {
                continue;
            }
            let sa = coverage_to_distance(ua, 1.0);
            let sb = coverage_to_distance(ub, 1.0);
            let t = if sa - sb > 1e-12 { sa / (sa - sb) } else { 0.5 };
            out.push(pa.lerp(pb, t.clamp(0.0, 1.0)));
        }
    }
    out
}

/// Crack-following trace of the outer boundary of a 4-connected mask.
///
/// Starts at the top-left corner of the first pixel in raster order and keeps
/// the region on the left of travel, which is counter-clockwise on screen
/// (y down). Diagonal-only contacts are not crossed.
pub fn outer_contour(mask: &Mask) -> Vec<Point> {
    let Some(start) = mask.data.iter().position(|&b| b) else {
        return Vec::new();
    };
    let w = mask.width;
    let (sx, sy) = ((start % w) as isize, (start / w) as isize);
    let inside = |x: isize, y: isize| mask.get_signed(x, y);
    // vertex (x, y) is the top-left corner of pixel (x, y); directions: 0 right, 1 down, 2 left, 3 up
    let step = [(1isize, 0isize), (0, 1), (-1, 0), (0, -1)];
    // pixels to the left and right of a move from vertex (x, y) in direction d
    let sides = |x: isize, y: isize, d: usize| -> ((isize, isize), (isize, isize)) {
        match d {
            0 => ((x, y - 1), (x, y)),
            1 => ((x, y), (x - 1, y)),
            2 => ((x - 1, y), (x - 1, y - 1)),
            _ => ((x - 1, y - 1), (x, y - 1)),
        }
    };
    // start moving down the left edge of the first pixel: region on the left
    let (mut x, mut y, mut d) = (sx, sy, 1usize);
    let mut out = vec![Point::new(x as f64, y as f64)];
    loop {
        x += step[d].0;
        y += step[d].1;
        if (x, y) == (sx, sy) && d == 2 {
            break;
        }
        // prefer turning left (keeps 4-connectivity), then straight, then right
        let mut next = None;
        for turn in [3usize, 0, 1] {
            let nd = (d + turn) % 4;
            let ((lx, ly), (rx, ry)) = sides(x, y, nd);
            if inside(lx, ly) && !inside(rx, ry) {
                next = Some(nd);
                break;
            }
        }
        let nd = next.expect("contour is closed");
        if nd != d {
            out.push(Point::new(x as f64, y as f64));
        }
        d = nd;
        if out.len() > 4 * (mask.width + 1) * (mask.height + 1) {
            break;
        }
    }
    out
}

/// Label each pixel with the top-most path whose hard region contains it.
pub fn exemplar_segments(doc: &SvgDoc, width: usize, height: usize) -> LabelMap {
    let opts = RenderOptions::default();
    let mut labels = vec![-1; width * height];
    for (i, path) in doc.paths.iter().enumerate() {
        let m = path_mask(path, (doc.width, doc.height), width, height, &opts);
        for (l, inside) in labels.iter_mut().zip(m) {
            if inside {
                *l = i as i32;
            }
        }
    }
    let mut counts = vec![0usize; doc.paths.len()];
    for &l in &labels {
        if l >= 0 {
            counts[l as usize] += 1;
        }
    }
    LabelMap { width, height, labels, empty: (0..doc.paths.len()).filter(|&i| counts[i] == 0).collect() }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn canvas(w: usize, h: usize, bg: Rgb) -> Image {
        Image::filled(w, h, bg)
    }

    fn fill_rect(img: &mut Image, x0: usize, y0: usize, x1: usize, y1: usize, c: Rgb) {
        for y in y0..y1 {
            for x in x0..x1 {
                img.set_rgb(x, y, c);
            }
        }
    }

    #[test]
    fn two_squares_on_transparent_background() {
        let mut img = Image::new(40, 30, 4);
        let mut put = |x0: usize, y0: usize, s: usize, c: [f64; 3]| {
            for y in y0..y0 + s {
                for x in x0..x0 + s {
                    let i = img.index(x, y);
                    img.data[i..i + 4].copy_from_slice(&[c[0], c[1], c[2], 1.0]);
                }
            }
        };
        put(2, 3, 10, [1.0, 0.0, 0.0]);
        put(20, 10, 6, [0.0, 0.0, 1.0]);
        let comps = connected_components(&img, DEFAULT_COLOR_TOL, 1);
        assert_eq!(comps.len(), 2);
        assert_eq!(comps[0].area, 100);
        assert_eq!(comps[1].area, 36);
        assert_eq!(comps[0].centroid, Point::new(7.0, 8.0));
        assert_eq!(comps[1].centroid, Point::new(23.0, 13.0));
        assert_eq!(comps[0].mean_color, Rgb::new(1.0, 0.0, 0.0));
    }

    #[test]
    fn solid_image_is_one_component() {
        let img = canvas(16, 12, Rgb::new(0.3, 0.6, 0.9));
        let comps = connected_components(&img, DEFAULT_COLOR_TOL, 1);
        assert_eq!(comps.len(), 1);
        assert_eq!(comps[0].area, 16 * 12);
    }

    #[test]
    fn diagonal_contact_does_not_connect() {
        let mut img = canvas(10, 10, Rgb::WHITE);
        fill_rect(&mut img, 2, 2, 5, 5, Rgb::BLACK);
        fill_rect(&mut img, 5, 5, 8, 8, Rgb::BLACK);
        let comps = connected_components(&img, DEFAULT_COLOR_TOL, 1);
        assert_eq!(comps.len(), 2);
        assert!(comps.iter().all(|c| c.area == 9));
    }

    #[test]
    fn corner_key_background_is_removed() {
        let mut img = canvas(20, 20, Rgb::WHITE);
        fill_rect(&mut img, 5, 5, 15, 15, Rgb::new(0.2, 0.4, 0.6));
        // an enclosed white hole is content, not background
        fill_rect(&mut img, 9, 9, 11, 11, Rgb::WHITE);
        let comps = connected_components(&img, DEFAULT_COLOR_TOL, 1);
        assert_eq!(comps.len(), 2);
        assert_eq!(comps[0].area, 96);
        assert_eq!(comps[1].area, 4);
    }

    #[test]
    fn fully_transparent_image_is_empty() {
        let img = Image::new(8, 8, 4);
        assert!(connected_components(&img, DEFAULT_COLOR_TOL, 1).is_empty());
    }

    #[test]
    fn slivers_dissolve_into_nearest_color() {
        let mut img = canvas(30, 10, Rgb::WHITE);
        fill_rect(&mut img, 0, 0, 14, 10, Rgb::new(1.0, 0.0, 0.0));
        fill_rect(&mut img, 16, 0, 30, 10, Rgb::new(0.0, 0.0, 1.0));
        // anti-aliasing-like columns in between
        fill_rect(&mut img, 14, 0, 15, 10, Rgb::new(0.8, 0.0, 0.2));
        fill_rect(&mut img, 15, 0, 16, 10, Rgb::new(0.3, 0.0, 0.7));
        let comps = connected_components(&img, DEFAULT_COLOR_TOL, 20);
        assert_eq!(comps.len(), 2);
        let red = comps.iter().find(|c| c.mean_color.0[0] > 0.5).unwrap();
        assert_eq!(red.area, 150);
        assert_eq!(red.mean_color, Rgb::new(1.0, 0.0, 0.0));
        assert_eq!(comps.iter().map(|c| c.area).sum::<usize>(), 300);
    }

    #[test]
    fn contour_of_rectangle() {
        let mut m = Mask::new(6, 5);
        for y in 1..4 {
            for x in 2..5 {
                m.data[y * 6 + x] = true;
            }
        }
        let c = outer_contour(&m);
        assert_eq!(c, vec![Point::new(2.0, 1.0), Point::new(2.0, 4.0), Point::new(5.0, 4.0), Point::new(5.0, 1.0)]);
    }

    #[test]
    fn contour_skips_holes_and_diagonal_pinches() {
        // ring with a hole plus a pixel touching one corner diagonally
        let mut m = Mask::new(8, 8);
        for y in 1..5 {
            for x in 1..5 {
                m.data[y * 8 + x] = !(x == 2 && y == 2);
            }
        }
        m.data[5 * 8 + 5] = true;
        let c = outer_contour(&m);
        assert_eq!(c.len(), 4);
        assert!(c.iter().all(|p| p.x <= 5.0 && p.y <= 5.0));
    }

    #[test]
    fn nested_squares_segment_by_painter_order() {
        use crate::synth::rect;
        let doc = SvgDoc::new(
            20.0,
            20.0,
            vec![rect("big", 2.0, 2.0, 18.0, 18.0, Rgb::BLACK), rect("small", 6.0, 6.0, 14.0, 14.0, Rgb::WHITE)],
        )
        .unwrap();
        let lm = exemplar_segments(&doc, 20, 20);
        assert_eq!(lm.get(10, 10), 1);
        assert_eq!(lm.get(3, 3), 0);
        assert_eq!(lm.get(0, 0), -1);
        assert_eq!(lm.labels.iter().filter(|&&l| l == 1).count(), 64);
        assert_eq!(lm.labels.iter().filter(|&&l| l == 0).count(), 256 - 64);
        assert!(lm.empty.is_empty());
    }

    #[test]
    fn fully_occluded_path_is_flagged() {
        use crate::synth::rect;
        let doc = SvgDoc::new(
            20.0,
            20.0,
            vec![rect("under", 5.0, 5.0, 10.0, 10.0, Rgb::BLACK), rect("over", 0.0, 0.0, 20.0, 20.0, Rgb::WHITE)],
        )
        .unwrap();
        let lm = exemplar_segments(&doc, 20, 20);
        assert_eq!(lm.empty, vec![0]);
    }
}
