use std::fmt::Write as _;

use super::SvgDoc;

fn escape_attr(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// Serialize to SVG text: one `<path>` per path, absolute `C` commands, hex fill.
///
/// Coordinates use the shortest decimal form that round-trips exactly.
pub fn serialize_svg(doc: &SvgDoc) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = doc.width,
        h = doc.height
    );
    for path in &doc.paths {
        let mut d = String::new();
        let p0 = path.points[0];
        let _ = write!(d, "M{} {}", p0.x, p0.y);
        for seg in path.segments() {
            let _ = write!(d, " C{} {} {} {} {} {}", seg.p1.x, seg.p1.y, seg.p2.x, seg.p2.y, seg.p3.x, seg.p3.y);
        }
        d.push_str(" Z");
        let _ = write!(out, r#"  <path id="{}" d="{}" fill="{}""#, escape_attr(&path.id), d, path.fill.to_hex());
        if path.opacity < 1.0 {
            let _ = write!(out, r#" fill-opacity="{}""#, path.opacity);
        }
        out.push_str("/>\n");
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::super::{parse_svg, Path, Rgb};
    use super::*;
    use crate::geom::Point;

    fn square(id: &str, x: f64, fill: Rgb) -> Path {
        let c = [Point::new(x, 0.0), Point::new(x + 10.0, 0.0), Point::new(x + 10.0, 10.0), Point::new(x, 10.0)];
        let segs: Vec<_> = (0..4).map(|i| crate::geom::Cubic::line(c[i], c[(i + 1) % 4])).collect();
        Path::from_cubics(id, &segs, fill, 1.0).unwrap()
    }

    #[test]
    fn roundtrip_red_square() {
        let doc = SvgDoc::new(32.0, 32.0, vec![square("a", 0.0, Rgb::new(1.0, 0.0, 0.0))]).unwrap();
        let back = parse_svg(&serialize_svg(&doc)).unwrap();
        assert_eq!(back, doc);
    }

    #[test]
    fn order_is_preserved() {
        let doc = SvgDoc::new(
            32.0,
            32.0,
            vec![square("first", 0.0, Rgb::new(1.0, 0.0, 0.0)), square("second", 5.0, Rgb::new(0.0, 0.0, 1.0))],
        )
        .unwrap();
        let text = serialize_svg(&doc);
        assert!(text.find("first").unwrap() < text.find("second").unwrap());
        let back = parse_svg(&text).unwrap();
        assert_eq!(back.paths[1].id, "second");
    }

    #[test]
    fn grey_quantizes_half_up() {
        let doc = SvgDoc::new(32.0, 32.0, vec![square("g", 0.0, Rgb::new(0.5, 0.5, 0.5))]).unwrap();
        assert!(serialize_svg(&doc).contains(r##"fill="#808080""##));
    }

    #[test]
    fn ids_are_escaped() {
        let doc = SvgDoc::new(32.0, 32.0, vec![square("a\"<b", 0.0, Rgb::BLACK)]).unwrap();
        let back = parse_svg(&serialize_svg(&doc)).unwrap();
        assert_eq!(back.paths[0].id, "a\"<b");
    }
}
