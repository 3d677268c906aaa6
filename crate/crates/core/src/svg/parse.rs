use std::collections::HashSet;

use roxmltree::{Document, Node};

use super::path_data::{parse_path_data, PathDataError};
use super::{Path, Rgb, SvgDoc};
use crate::error::{Error, Result};
use crate::geom::{Affine, Cubic, Point};

const DEFAULT_CANVAS: f64 = 512.0;
/// Handle length for a quarter-circle cubic.
pub const KAPPA: f64 = 0.552_284_749_830_793_4;

#[derive(Clone, Copy)]
struct Style {
    fill: Option<Rgb>,
    fill_opacity: f64,
    opacity: f64,
    xf: Affine,
}

/// Parse the supported SVG subset into an [`SvgDoc`].
///
/// Every subpath becomes its own closed [`Path`]; lines and quadratics are
/// promoted to cubics and transforms are baked into the coordinates.
pub fn parse_svg(text: &str) -> Result<SvgDoc> {
    if text.trim().is_empty() {
        return SvgDoc::new(DEFAULT_CANVAS, DEFAULT_CANVAS, Vec::new());
    }
    let doc = Document::parse(text).map_err(|e| {
        let pos = e.pos();
        Error::Parse { line: pos.row, column: pos.col, message: e.to_string() }
    })?;
    let root = doc.root_element();
    if root.tag_name().name() != "svg" {
        return Err(parse_err(&doc, root, format!("root element is <{}>, expected <svg>", root.tag_name().name())));
    }

    let (width, height, base) = canvas(&doc, root)?;
    let mut ctx = Ctx { doc: &doc, paths: Vec::new(), ids: HashSet::new(), counter: 0 };
    let style = Style { fill: Some(Rgb::BLACK), fill_opacity: 1.0, opacity: 1.0, xf: base };
    for child in root.children().filter(Node::is_element) {
        ctx.visit(child, style)?;
    }
    SvgDoc::new(width, height, ctx.paths)
}

fn parse_err(doc: &Document, node: Node, message: String) -> Error {
    let pos = doc.text_pos_at(node.range().start);
    Error::Parse { line: pos.row, column: pos.col, message }
}

fn length(s: &str) -> Option<f64> {
    let s = s.trim();
    let s = s.strip_suffix("px").unwrap_or(s);
    s.trim().parse().ok().filter(|v: &f64| v.is_finite())
}

fn number_list(s: &str) -> Option<Vec<f64>> {
    s.split(|c: char| c.is_ascii_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().ok().filter(|v| v.is_finite()))
        .collect()
}

fn canvas(doc: &Document, root: Node) -> Result<(f64, f64, Affine)> {
    if let Some(vb) = root.attribute("viewBox") {
        let v = number_list(vb)
            .filter(|v| v.len() == 4 && v[2] > 0.0 && v[3] > 0.0)
            .ok_or_else(|| parse_err(doc, root, format!("bad viewBox `{vb}`")))?;
        return Ok((v[2], v[3], Affine::translate(-v[0], -v[1])));
    }
    let w = root.attribute("width").and_then(length);
    let h = root.attribute("height").and_then(length);
    match (w, h) {
        (Some(w), Some(h)) if w > 0.0 && h > 0.0 => Ok((w, h, Affine::IDENTITY)),
        (None, None) => Ok((DEFAULT_CANVAS, DEFAULT_CANVAS, Affine::IDENTITY)),
        _ => Err(parse_err(doc, root, "bad or partial width/height".into())),
    }
}

/// Parse a `transform` attribute (matrix/translate/scale/rotate, composed left to right).
fn parse_transform(s: &str) -> Option<Affine> {
    let mut xf = Affine::IDENTITY;
    let mut rest = s.trim();
    while !rest.is_empty() {
        let open = rest.find('(')?;
        let close = rest.find(')')?;
        let name = rest[..open].trim().trim_start_matches(',').trim();
        let args = number_list(&rest[open + 1..close])?;
        let t = match (name, args.as_slice()) {
            ("matrix", &[a, b, c, d, e, f]) => Affine::from_svg_matrix(a, b, c, d, e, f),
            ("translate", &[tx]) => Affine::translate(tx, 0.0),
            ("translate", &[tx, ty]) => Affine::translate(tx, ty),
            ("scale", &[s]) => Affine::scale(s, s),
            ("scale", &[sx, sy]) => Affine::scale(sx, sy),
            ("rotate", &[deg]) => Affine::rotate(deg.to_radians()),
            ("rotate", &[deg, cx, cy]) => Affine::translate(cx, cy)
                .then_after(&Affine::rotate(deg.to_radians()))
                .then_after(&Affine::translate(-cx, -cy)),
            _ => return None,
        };
        xf = xf.then_after(&t);
        rest = rest[close + 1..].trim_start_matches([',', ' ', '\t', '\n', '\r']);
    }
    Some(xf)
}

enum Paint {
    None,
    Color(Rgb),
    Url,
}

fn parse_paint(s: &str) -> Option<Paint> {
    let s = s.trim();
    if s == "none" {
        return Some(Paint::None);
    }
    if s.starts_with("url(") {
        return Some(Paint::Url);
    }
    if let Some(hex) = s.strip_prefix('#') {
        let v: Vec<u8> = hex.chars().map(|c| c.to_digit(16).map(|d| d as u8)).collect::<Option<_>>()?;
        return match v.len() {
            3 => Some(Paint::Color(Rgb::from_u8(v[0] * 17, v[1] * 17, v[2] * 17))),
            6 => Some(Paint::Color(Rgb::from_u8(v[0] * 16 + v[1], v[2] * 16 + v[3], v[4] * 16 + v[5]))),
            _ => None,
        };
    }
    if let Some(body) = s.strip_prefix("rgb(").and_then(|r| r.strip_suffix(')')) {
        let parts: Vec<&str> = body.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return None;
        }
        let mut c = [0.0; 3];
        for (slot, part) in c.iter_mut().zip(&parts) {
            *slot = match part.strip_suffix('%') {
                Some(p) => p.trim().parse::<f64>().ok()? / 100.0,
                None => part.parse::<f64>().ok()? / 255.0,
            }
            .clamp(0.0, 1.0);
        }
        return Some(Paint::Color(Rgb(c)));
    }
    let named = match s {
        "black" => Rgb::from_u8(0, 0, 0),
        "white" => Rgb::from_u8(255, 255, 255),
        "red" => Rgb::from_u8(255, 0, 0),
        "green" => Rgb::from_u8(0, 128, 0),
        "lime" => Rgb::from_u8(0, 255, 0),
        "blue" => Rgb::from_u8(0, 0, 255),
        "yellow" => Rgb::from_u8(255, 255, 0),
        "gray" | "grey" => Rgb::from_u8(128, 128, 128),
        "orange" => Rgb::from_u8(255, 165, 0),
        "purple" => Rgb::from_u8(128, 0, 128),
        _ => return None,
    };
    Some(Paint::Color(named))
}

struct Ctx<'a, 'input> {
    doc: &'a Document<'input>,
    paths: Vec<Path>,
    ids: HashSet<String>,
    counter: usize,
}

impl Ctx<'_, '_> {
    /// Presentation attribute, with a minimal inline `style` override.
    fn attr<'n>(node: Node<'n, '_>, name: &str) -> Option<&'n str> {
        if let Some(style) = node.attribute("style") {
            for decl in style.split(';') {
                if let Some((k, v)) = decl.split_once(':') {
                    if k.trim() == name {
                        return Some(v.trim());
                    }
                }
            }
        }
        node.attribute(name)
    }

    fn element_id(&self, node: Node) -> String {
        node.attribute("id").map(str::to_owned).unwrap_or_else(|| format!("path{}", self.counter))
    }

    fn unsupported(&self, node: Node, feature: &str) -> Error {
        Error::Unsupported { feature: feature.to_owned(), path_id: self.element_id(node) }
    }

    fn style_for(&self, node: Node, parent: Style) -> Result<Style> {
        let mut st = parent;
        for blocked in ["clip-path", "mask", "filter"] {
            if Self::attr(node, blocked).is_some_and(|v| v.trim() != "none") {
                return Err(self.unsupported(node, blocked));
            }
        }
        if let Some(stroke) = Self::attr(node, "stroke") {
            if stroke.trim() != "none" {
                return Err(self.unsupported(node, "stroke"));
            }
        }
        if let Some(fill) = Self::attr(node, "fill") {
            st.fill = match parse_paint(fill) {
                Some(Paint::Color(c)) => Some(c),
                Some(Paint::None) => None,
                Some(Paint::Url) => return Err(self.unsupported(node, "gradient or pattern fill")),
                None => return Err(parse_err(self.doc, node, format!("bad fill `{fill}`"))),
            };
        }
        let unit = |name: &str| -> Result<Option<f64>> {
            match Self::attr(node, name) {
                None => Ok(None),
                Some(v) => {
                    let v = v.trim();
                    let parsed = match v.strip_suffix('%') {
                        Some(p) => p.parse::<f64>().ok().map(|x| x / 100.0),
                        None => v.parse::<f64>().ok(),
                    };
                    parsed
                        .filter(|x| x.is_finite())
                        .map(|x| Some(x.clamp(0.0, 1.0)))
                        .ok_or_else(|| parse_err(self.doc, node, format!("bad {name} `{v}`")))
                }
            }
        };
        if let Some(v) = unit("fill-opacity")? {
            st.fill_opacity = v;
        }
        // group opacity is approximated per path
        if let Some(v) = unit("opacity")? {
            st.opacity *= v;
        }
        if let Some(t) = node.attribute("transform") {
            let local =
                parse_transform(t).ok_or_else(|| parse_err(self.doc, node, format!("unsupported transform `{t}`")))?;
            st.xf = st.xf.then_after(&local);
        }
        Ok(st)
    }

    fn visit(&mut self, node: Node, parent: Style) -> Result<()> {
        let name = node.tag_name().name();
        match name {
            "defs" | "title" | "desc" | "metadata" | "linearGradient" | "radialGradient" | "clipPath" | "mask"
            | "filter" | "pattern" | "symbol" => Ok(()),
            "g" | "svg" => {
                let st = self.style_for(node, parent)?;
                for child in node.children().filter(Node::is_element) {
                    self.visit(child, st)?;
                }
                Ok(())
            }
            "path" | "rect" | "circle" | "ellipse" | "polygon" | "polyline" => {
                let st = self.style_for(node, parent)?;
                let subpaths = self.geometry(node)?;
                self.emit(node, st, subpaths)
            }
            "style" => Err(self.unsupported(node, "CSS style element")),
            other => Err(self.unsupported(node, &format!("<{other}> element"))),
        }
    }

    fn num_attr(&self, node: Node, name: &str, default: Option<f64>) -> Result<f64> {
        match node.attribute(name) {
            Some(v) => length(v).ok_or_else(|| parse_err(self.doc, node, format!("bad {name} `{v}`"))),
            None => default.ok_or_else(|| parse_err(self.doc, node, format!("missing {name}"))),
        }
    }

    fn geometry(&self, node: Node) -> Result<Vec<Vec<Cubic>>> {
        match node.tag_name().name() {
            "path" => {
                let d = node.attribute("d").unwrap_or("");
                parse_path_data(d).map_err(|e| match e {
                    PathDataError::Syntax { offset, message } => {
                        parse_err(self.doc, node, format!("path data offset {offset}: {message}"))
                    }
                    PathDataError::Unsupported(feature) => self.unsupported(node, feature),
                })
            }
            "rect" => {
                if node.attribute("rx").is_some() || node.attribute("ry").is_some() {
                    return Err(self.unsupported(node, "rounded rect"));
                }
                let x = self.num_attr(node, "x", Some(0.0))?;
                let y = self.num_attr(node, "y", Some(0.0))?;
                let w = self.num_attr(node, "width", None)?;
                let h = self.num_attr(node, "height", None)?;
                if w <= 0.0 || h <= 0.0 {
                    return Ok(Vec::new());
                }
                let c = [Point::new(x, y), Point::new(x + w, y), Point::new(x + w, y + h), Point::new(x, y + h)];
                Ok(vec![(0..4).map(|i| Cubic::line(c[i], c[(i + 1) % 4])).collect()])
            }
            "circle" | "ellipse" => {
                let cx = self.num_attr(node, "cx", Some(0.0))?;
                let cy = self.num_attr(node, "cy", Some(0.0))?;
                let (rx, ry) = if node.tag_name().name() == "circle" {
                    let r = self.num_attr(node, "r", None)?;
                    (r, r)
                } else {
                    (self.num_attr(node, "rx", None)?, self.num_attr(node, "ry", None)?)
                };
                if rx <= 0.0 || ry <= 0.0 {
                    return Ok(Vec::new());
                }
                Ok(vec![ellipse_cubics(Point::new(cx, cy), rx, ry)])
            }
            _ => {
                let pts = node
                    .attribute("points")
                    .and_then(number_list)
                    .filter(|v| v.len() % 2 == 0)
                    .ok_or_else(|| parse_err(self.doc, node, "bad points list".into()))?;
                let pts: Vec<Point> = pts.chunks(2).map(|c| Point::new(c[0], c[1])).collect();
                if pts.len() < 2 {
                    return Ok(Vec::new());
                }
                let n = pts.len();
                Ok(vec![(0..n).map(|i| Cubic::line(pts[i], pts[(i + 1) % n])).collect()])
            }
        }
    }

    fn emit(&mut self, node: Node, st: Style, subpaths: Vec<Vec<Cubic>>) -> Result<()> {
        let base_id = self.element_id(node);
        self.counter += 1;
        let Some(fill) = st.fill else {
            // unfilled and unstroked: invisible
            return Ok(());
        };
        for (k, segs) in subpaths.into_iter().enumerate() {
            let segs: Vec<Cubic> = segs.iter().map(|c| c.map(&st.xf)).collect();
            let mut id = if k == 0 { base_id.clone() } else { format!("{base_id}-{k}") };
            let mut dup = 1;
            while self.ids.contains(&id) {
                id = format!("{base_id}-dup{dup}");
                dup += 1;
            }
            self.ids.insert(id.clone());
            self.paths.push(Path::from_cubics(id, &segs, fill, st.fill_opacity * st.opacity)?);
        }
        Ok(())
    }
}

/// Four-arc cubic approximation of an axis-aligned ellipse, starting at angle 0.
pub fn ellipse_cubics(c: Point, rx: f64, ry: f64) -> Vec<Cubic> {
    let pts =
        [Point::new(c.x + rx, c.y), Point::new(c.x, c.y + ry), Point::new(c.x - rx, c.y), Point::new(c.x, c.y - ry)];
    let tangents = [Point::new(0.0, ry), Point::new(-rx, 0.0), Point::new(0.0, -ry), Point::new(rx, 0.0)];
    (0..4)
        .map(|i| {
            let j = (i + 1) % 4;
            Cubic::new(pts[i], pts[i] + tangents[i] * KAPPA, pts[j] - tangents[j] * KAPPA, pts[j])
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_with_hex_fill() {
        let doc = parse_svg(
            r##"<svg xmlns="http://www.w3.org/2000/svg" width="20" height="20">
                <path id="sq" d="M0 0 L10 0 L10 10 L0 10 Z" fill="#ff0000"/>
            </svg>"##,
        )
        .unwrap();
        assert_eq!(doc.paths.len(), 1);
        let p = &doc.paths[0];
        assert_eq!(p.points.len(), 12);
        assert_eq!(p.fill, Rgb::new(1.0, 0.0, 0.0));
        assert_eq!(p.id, "sq");
    }

    #[test]
    fn empty_documents() {
        assert!(parse_svg("").unwrap().paths.is_empty());
        let doc = parse_svg(r#"<svg xmlns="http://www.w3.org/2000/svg" width="64" height="32"/>"#).unwrap();
        assert!(doc.paths.is_empty());
        assert_eq!((doc.width, doc.height), (64.0, 32.0));
    }

    #[test]
    fn referenced_gradient_is_unsupported() {
        let err = parse_svg(
            r##"<svg xmlns="http://www.w3.org/2000/svg" width="20" height="20">
                <defs><linearGradient id="g"><stop offset="0" stop-color="#000"/></linearGradient></defs>
                <path id="grad" d="M0 0 L10 0 L10 10 Z" fill="url(#g)"/>
            </svg>"##,
        )
        .unwrap_err();
        match err {
            Error::Unsupported { feature, path_id } => {
                assert!(feature.contains("gradient"));
                assert_eq!(path_id, "grad");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_xml_reports_position() {
        let err = parse_svg("<svg>\n  <path d='M0 0'\n</svg>").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert!(line >= 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn strokes_are_unsupported() {
        let err = parse_svg(r#"<svg width="10" height="10"><path id="s" d="M0 0 L5 0 L5 5 Z" stroke="black"/></svg>"#)
            .unwrap_err();
        assert!(matches!(err, Error::Unsupported { ref feature, .. } if feature == "stroke"));
    }

    #[test]
    fn transforms_are_baked() {
        let doc = parse_svg(
            r#"<svg width="100" height="100"><g transform="translate(10 20)">
                 <path d="M0 0 L1 0 L1 1 Z" transform="scale(2)" fill="rgb(0,128,255)"/>
               </g></svg>"#,
        )
        .unwrap();
        let p = &doc.paths[0];
        assert_eq!(p.points[0], Point::new(10.0, 20.0));
        assert_eq!(p.points[3], Point::new(12.0, 20.0));
        assert!((p.fill.0[1] - 128.0 / 255.0).abs() < 1e-12);
    }

    #[test]
    fn rotate_about_center() {
        let xf = parse_transform("rotate(90 5 5)").unwrap();
        let p = xf.apply(Point::new(10.0, 5.0));
        assert!(p.dist(Point::new(5.0, 10.0)) < 1e-12);
    }

    #[test]
    fn viewbox_defines_canvas() {
        let doc = parse_svg(
            r#"<svg width="512" height="512" viewBox="10 10 100 50"><path d="M10 10 L20 10 L20 20 Z"/></svg>"#,
        )
        .unwrap();
        assert_eq!((doc.width, doc.height), (100.0, 50.0));
        assert_eq!(doc.paths[0].points[0], Point::ZERO);
    }

    #[test]
    fn subpaths_split_with_shared_fill_and_opacity() {
        let doc = parse_svg(
            r##"<svg width="50" height="50"><path id="two" d="M0 0 L4 0 L0 4 Z M10 10 L14 10 L10 14 Z" fill="#00ff00" opacity="0.5" fill-opacity="0.5"/></svg>"##,
        )
        .unwrap();
        assert_eq!(doc.paths.len(), 2);
        assert_eq!(doc.paths[1].id, "two-1");
        assert_eq!(doc.paths[1].fill, doc.paths[0].fill);
        assert_eq!(doc.paths[0].opacity, 0.25);
    }

    #[test]
    fn fill_none_is_dropped_and_default_black() {
        let doc = parse_svg(
            r#"<svg width="50" height="50"><path d="M0 0 L4 0 L0 4 Z" fill="none"/><path d="M0 0 L4 0 L0 4 Z"/></svg>"#,
        )
        .unwrap();
        assert_eq!(doc.paths.len(), 1);
        assert_eq!(doc.paths[0].fill, Rgb::BLACK);
        assert_eq!(doc.paths[0].id, "path1");
    }

    #[test]
    fn basic_shapes() {
        let doc = parse_svg(
            r#"<svg width="50" height="50"><rect x="1" y="2" width="3" height="4"/><circle cx="10" cy="10" r="5"/><polygon points="0,0 5,0 5,5"/></svg>"#,
        )
        .unwrap();
        let counts: Vec<_> = doc.paths.iter().map(|p| p.points.len()).collect();
        assert_eq!(counts, vec![12, 12, 9]);
    }
}
