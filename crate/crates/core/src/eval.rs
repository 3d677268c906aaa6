//! Evaluation metrics: shape similarity, smoothness, Sim_cus and the
//! embedding-based similarities served by an external backend.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geom::Point;
use crate::optimize::protocol::BackendClient;
use crate::raster::Image;
use crate::svg::{curvature_profile, Rgb, SvgDoc};

pub const DEFAULT_SMOOTHNESS_SAMPLES: usize = 256;

/// Nearest-neighbour search structure: points sorted by x.
struct SortedByX(Vec<Point>);

impl SortedByX {
    fn new(points: &[Point]) -> Self {
        let mut v = points.to_vec();
        v.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
        SortedByX(v)
    }

    /// Squared distance from `p` to its nearest point, or any value `<=
    /// floor` once one closer than `floor` is found.
    fn nearest_sq(&self, p: Point, floor: f64) -> f64 {
        let v = &self.0;
        let start = v.partition_point(|q| q.x < p.x);
        let mut best = f64::INFINITY;
        let (mut lo, mut hi) = (start, start);
        loop {
            let mut moved = false;
            if hi < v.len() {
                let dx = v[hi].x - p.x;
                if dx * dx < best {
                    best = best.min((v[hi] - p).norm_sq());
                    hi += 1;
                    moved = true;
                } else {
                    hi = v.len();
                }
            }
            if lo > 0 {
                let dx = p.x - v[lo - 1].x;
                if dx * dx < best {
                    best = best.min((v[lo - 1] - p).norm_sq());
                    lo -= 1;
                    moved = true;
                } else {
                    lo = 0;
                }
            }
            if !moved || best <= floor {
                return best;
            }
        }
    }
}

fn directed_sq(from: &[Point], to: &SortedByX, mut cmax: f64) -> f64 {
    for &a in from {
        // a point closer than the running maximum cannot raise it
        let d = to.nearest_sq(a, cmax);
        if d > cmax {
            cmax = d;
        }
    }
    cmax
}

/// Symmetric Hausdorff distance between two point sets, in their own
/// coordinates.
pub fn hausdorff(a: &[Point], b: &[Point]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::contract("Hausdorff distance of an empty point set"));
    }
    if a.iter().chain(b).any(|p| !p.is_finite()) {
        return Err(Error::contract("Hausdorff distance of non-finite points"));
    }
    let ab = directed_sq(a, &SortedByX::new(b), 0.0);
    let both = directed_sq(b, &SortedByX::new(a), ab);
    Ok(both.sqrt())
}

fn unit_points(doc: &SvgDoc) -> Vec<Point> {
    doc.all_points().map(|p| Point::new(p.x / doc.width, p.y / doc.height)).collect()
}

/// `1 - hausdorff` over all control points of each document, each scaled to
/// the unit square by its own canvas size.
pub fn shape_similarity(exemplar: &SvgDoc, customized: &SvgDoc) -> Result<f64> {
    Ok(1.0 - hausdorff(&unit_points(exemplar), &unit_points(customized))?)
}

/// `1 / (1 + V)` where `V` is the mean over paths of the mean absolute change
/// of curvature between consecutive arc-length-uniform samples (cyclic).
/// Curvature is measured in coordinates divided by the longer canvas side.
pub fn smoothness(doc: &SvgDoc, samples_per_path: usize) -> Result<f64> {
    if samples_per_path < 16 {
        return Err(Error::contract("smoothness needs at least 16 samples per path"));
    }
    if doc.paths.is_empty() {
        return Ok(1.0);
    }
    let unit = doc.width.max(doc.height);
    let mut total = 0.0;
    for path in &doc.paths {
        let k: Vec<f64> = curvature_profile(path, samples_per_path).values.iter().map(|v| v * unit).collect();
        let n = k.len();
        total += (0..n).map(|i| (k[(i + 1) % n] - k[i]).abs()).sum::<f64>() / n as f64;
    }
    Ok(1.0 / (1.0 + total / doc.paths.len() as f64))
}

/// `1 - MSE` over all pixels and RGB channels. Images with alpha are first
/// flattened over white.
pub fn sim_cus(target: &Image, rendered: &Image) -> Result<f64> {
    if target.width != rendered.width || target.height != rendered.height {
        return Err(Error::contract(format!(
            "sim_cus needs equal sizes, got {}x{} and {}x{}",
            target.width, target.height, rendered.width, rendered.height
        )));
    }
    let (a, b) = (target.to_rgb(Rgb::WHITE), rendered.to_rgb(Rgb::WHITE));
    let n = a.data.len() as f64;
    let mse: f64 = a.data.iter().zip(&b.data).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n;
    Ok(1.0 - mse)
}

pub fn cosine(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::contract(format!("cosine of embeddings with {} and {} values", a.len(), b.len())));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum();
    let na: f64 = a.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok(dot / (na * nb))
}

/// Second argument of [`clip_similarity`].
#[derive(Clone, Copy, Debug)]
pub enum ClipQuery<'a> {
    Image(&'a Image),
    Text(&'a str),
}

/// Cosine of backend embeddings; `None` when no backend is configured.
pub fn clip_similarity(backend: Option<&mut BackendClient>, a: &Image, b: ClipQuery<'_>) -> Result<Option<f64>> {
    let Some(client) = backend else {
        return Ok(None);
    };
    let ea = client.embed_image(a)?;
    let eb = match b {
        ClipQuery::Image(img) => client.embed_image(img)?,
        ClipQuery::Text(t) => client.embed_text(t)?,
    };
    cosine(&ea, &eb).map(Some)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsReport {
    pub sim_shape: f64,
    pub smoothness: f64,
    pub exemplar_smoothness: f64,
    pub sim_cus: f64,
    /// Image-image embedding cosine against the exemplar render; `null` when
    /// no backend is configured.
    pub sim_exp: Option<f64>,
    /// Image-text embedding cosine against the prompt; `null` without a
    /// backend or prompt.
    pub sim_clip: Option<f64>,
    /// Embedding model reported by the backend.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
}

impl MetricsReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub const CSV_HEADER: [&'static str; 7] =
        ["name", "sim_shape", "smoothness", "exemplar_smoothness", "sim_cus", "sim_exp", "sim_clip"];

    fn csv_record(&self, name: &str) -> Vec<String> {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        vec![
            name.to_string(),
            self.sim_shape.to_string(),
            self.smoothness.to_string(),
            self.exemplar_smoothness.to_string(),
            self.sim_cus.to_string(),
            opt(self.sim_exp),
            opt(self.sim_clip),
        ]
    }
}

/// CSV with one row per named report; unavailable metrics are empty cells.
pub fn metrics_csv(rows: &[(String, MetricsReport)]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(MetricsReport::CSV_HEADER).map_err(io)?;
    for (name, r) in rows {
        w.write_record(r.csv_record(name)).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

/// Inputs for a full metrics report.
pub struct EvalInputs<'a> {
    pub exemplar: &'a SvgDoc,
    pub customized: &'a SvgDoc,
    pub target: &'a Image,
    /// Render of `customized` at the target's size.
    pub rendered: &'a Image,
    /// Render of `exemplar`, for Sim_exp.
    pub exemplar_render: Option<&'a Image>,
    pub prompt: Option<&'a str>,
}

pub fn evaluate(inputs: &EvalInputs<'_>, mut backend: Option<&mut BackendClient>) -> Result<MetricsReport> {
    let sim_exp = match inputs.exemplar_render {
        Some(ex) => clip_similarity(backend.as_deref_mut(), inputs.rendered, ClipQuery::Image(ex))?,
        None => None,
    };
    let sim_clip = match inputs.prompt {
        Some(p) => clip_similarity(backend.as_deref_mut(), inputs.rendered, ClipQuery::Text(p))?,
        None => None,
    };
    Ok(MetricsReport {
        sim_shape: shape_similarity(inputs.exemplar, inputs.customized)?,
        smoothness: smoothness(inputs.customized, DEFAULT_SMOOTHNESS_SAMPLES)?,
        exemplar_smoothness: smoothness(inputs.exemplar, DEFAULT_SMOOTHNESS_SAMPLES)?,
        sim_cus: sim_cus(inputs.target, inputs.rendered)?,
        sim_exp,
        sim_clip,
        model: backend.and_then(|b| b.model.clone()),
    })
}
