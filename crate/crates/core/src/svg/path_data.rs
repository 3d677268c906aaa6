//! Path-data (`d` attribute) parsing into closed cubic subpaths.

use crate::geom::{Cubic, Point};

#[derive(Debug, PartialEq)]
pub(crate) enum PathDataError {
    Syntax { offset: usize, message: String },
    Unsupported(&'static str),
}

struct Lexer<'a> {
    s: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn skip_ws_comma(&mut self) {
        while self.pos < self.s.len() && (self.s[self.pos].is_ascii_whitespace() || self.s[self.pos] == b',') {
            self.pos += 1;
        }
    }

    fn peek_command(&mut self) -> Option<u8> {
        self.skip_ws_comma();
        self.s.get(self.pos).copied().filter(|c| c.is_ascii_alphabetic() && *c != b'e' && *c != b'E')
    }

    fn err(&self, message: impl Into<String>) -> PathDataError {
        PathDataError::Syntax { offset: self.pos, message: message.into() }
    }

    fn number(&mut self) -> Result<f64, PathDataError> {
        self.skip_ws_comma();
        let start = self.pos;
        let s = self.s;
        let mut i = self.pos;
        if i < s.len() && matches!(s[i], b'+' | b'-') {
            i += 1;
        }
        let mut digits = 0;
        while i < s.len() && s[i].is_ascii_digit() {
            i += 1;
            digits += 1;
        }
        if i < s.len() && s[i] == b'.' {
            i += 1;
            while i < s.len() && s[i].is_ascii_digit() {
                i += 1;
                digits += 1;
            }
        }
        if digits == 0 {
            return Err(self.err("expected number"));
        }
        if i < s.len() && matches!(s[i], b'e' | b'E') {
            let mut j = i + 1;
            if j < s.len() && matches!(s[j], b'+' | b'-') {
                j += 1;
            }
            let exp_start = j;
            while j < s.len() && s[j].is_ascii_digit() {
                j += 1;
            }
            if j > exp_start {
                i = j;
            }
        }
        self.pos = i;
        let text = std::str::from_utf8(&s[start..i]).expect("ascii");
        let v: f64 = text
            .parse()
            .map_err(|_| PathDataError::Syntax { offset: start, message: format!("bad number `{text}`") })?;
        if !v.is_finite() {
            return Err(PathDataError::Syntax { offset: start, message: format!("non-finite number `{text}`") });
        }
        Ok(v)
    }

    fn point(&mut self) -> Result<Point, PathDataError> {
        let x = self.number()?;
        let y = self.number()?;
        Ok(Point::new(x, y))
    }
}

#[derive(Default)]
struct Builder {
    subpaths: Vec<Vec<Cubic>>,
    current: Vec<Cubic>,
    start: Point,
    pen: Point,
    /// Reflection source for S/T shorthands.
    last_ctrl: Option<(u8, Point)>,
}

impl Builder {
    fn finish_subpath(&mut self) {
        if self.current.is_empty() {
            return;
        }
        let mut segs = std::mem::take(&mut self.current);
        let end = segs.last().unwrap().p3;
        if end.dist(self.start) > 1e-9 * (1.0 + self.start.norm()) {
            segs.push(Cubic::line(end, self.start));
        } else {
            // snap for exact closure
            segs.last_mut().unwrap().p3 = self.start;
        }
        if segs.len() == 1 {
            // a single closed loop; split so that d >= 6
            let (a, b) = segs[0].split(0.5);
            segs = vec![a, b];
        }
        self.subpaths.push(segs);
    }

    fn push(&mut self, c: Cubic) {
        self.current.push(c);
        self.pen = c.p3;
    }
}

/// Parse SVG path data into closed subpaths of cubic segments. Open subpaths
/// are closed with a straight segment, as filling implies.
pub(crate) fn parse_path_data(d: &str) -> Result<Vec<Vec<Cubic>>, PathDataError> {
    let mut lx = Lexer { s: d.as_bytes(), pos: 0 };
    let mut b = Builder::default();
    let mut cmd: Option<u8> = None;

    loop {
        lx.skip_ws_comma();
        if lx.pos >= lx.s.len() {
            break;
        }
        let c = match lx.peek_command() {
            Some(c) => {
                lx.pos += 1;
                c
            }
            None => match cmd {
                // implicit repetition; a repeated moveto becomes lineto
                Some(b'M') => b'L',
                Some(b'm') => b'l',
                Some(c) if !matches!(c, b'Z' | b'z') => c,
                _ => return Err(lx.err("expected command")),
            },
        };
        if cmd.is_none() && !matches!(c, b'M' | b'm') {
            return Err(lx.err("path data must start with a moveto"));
        }
        let rel = c.is_ascii_lowercase();
        let origin = |b: &Builder| if rel { b.pen } else { Point::ZERO };
        match c.to_ascii_uppercase() {
            b'M' => {
                b.finish_subpath();
                let p = lx.point()? + origin(&b);
                b.start = p;
                b.pen = p;
                b.last_ctrl = None;
            }
            b'L' => {
                let p = lx.point()? + origin(&b);
                b.push(Cubic::line(b.pen, p));
                b.last_ctrl = None;
            }
            b'H' => {
                let x = lx.number()? + if rel { b.pen.x } else { 0.0 };
                b.push(Cubic::line(b.pen, Point::new(x, b.pen.y)));
                b.last_ctrl = None;
            }
            b'V' => {
                let y = lx.number()? + if rel { b.pen.y } else { 0.0 };
                b.push(Cubic::line(b.pen, Point::new(b.pen.x, y)));
                b.last_ctrl = None;
            }
            b'C' => {
                let o = origin(&b);
                let c1 = lx.point()? + o;
                let c2 = lx.point()? + o;
                let p = lx.point()? + o;
                b.push(Cubic::new(b.pen, c1, c2, p));
                b.last_ctrl = Some((b'C', c2));
            }
            b'S' => {
                let o = origin(&b);
                let c1 = match b.last_ctrl {
                    Some((b'C', c)) => b.pen * 2.0 - c,
                    _ => b.pen,
                };
                let c2 = lx.point()? + o;
                let p = lx.point()? + o;
                b.push(Cubic::new(b.pen, c1, c2, p));
                b.last_ctrl = Some((b'C', c2));
            }
            b'Q' => {
                let o = origin(&b);
                let q = lx.point()? + o;
                let p = lx.point()? + o;
                b.push(Cubic::from_quad(b.pen, q, p));
                b.last_ctrl = Some((b'Q', q));
            }
            b'T' => {
                let o = origin(&b);
                let q = match b.last_ctrl {
                    Some((b'Q', c)) => b.pen * 2.0 - c,
                    _ => b.pen,
                };
                let p = lx.point()? + o;
                b.push(Cubic::from_quad(b.pen, q, p));
                b.last_ctrl = Some((b'Q', q));
            }
            b'Z' => {
                b.finish_subpath();
                b.pen = b.start;
                b.last_ctrl = None;
            }
            b'A' => return Err(PathDataError::Unsupported("elliptical arc command")),
            _ => {
                return Err(PathDataError::Syntax {
                    offset: lx.pos - 1,
                    message: format!("unknown command `{}`", c as char),
                })
            }
        }
        cmd = Some(c);
    }
    b.finish_subpath();
    Ok(b.subpaths)
}
