//! Dual semantic matching of exemplar paths to target components over dense
//! feature grids.

use std::path::Path as FsPath;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::Image;
use crate::segment::LabelMap;
use crate::svg::Rgb;

pub const DEFAULT_TAU: f64 = 0.0625;
/// Patch size used for builtin descriptors.
pub const DEFAULT_BUILTIN_PATCH: usize = 4;
pub const BUILTIN_COLOR_WEIGHT: f64 = 1.0;
pub const BUILTIN_POSITION_WEIGHT: f64 = 0.25;

const FGRD_MAGIC: &[u8; 4] = b"FGRD";
const FGRD_VERSION: u32 = 1;
const FGRD_DTYPE_F32: u32 = 0;
const FGRD_HEADER_LEN: usize = 4 + 6 * 4;

/// Dense per-cell descriptors, row-major `(row, col, channel)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureGrid {
    pub gh: usize,
    pub gw: usize,
    pub channels: usize,
    /// Source pixels per cell side.
    pub patch: usize,
    pub data: Vec<f32>,
}

impl FeatureGrid {
    pub fn new(gh: usize, gw: usize, channels: usize, patch: usize, data: Vec<f32>) -> Result<Self> {
        if gh == 0 || gw == 0 || channels == 0 || patch == 0 {
            return Err(Error::FeatureGrid(format!(
                "dimensions must be positive (gh={gh}, gw={gw}, C={channels}, patch={patch})"
            )));
        }
        if data.len() != gh * gw * channels {
            return Err(Error::FeatureGrid(format!(
                "expected {} values for {gh}x{gw}x{channels}, got {}",
                gh * gw * channels,
                data.len()
            )));
        }
        if let Some(k) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::FeatureGrid(format!("non-finite value at index {k}")));
        }
        Ok(FeatureGrid { gh, gw, channels, patch, data })
    }

    #[inline]
    pub fn cell(&self, row: usize, col: usize) -> &[f32] {
        let i = (row * self.gw + col) * self.channels;
        &self.data[i..i + self.channels]
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(FGRD_HEADER_LEN + self.data.len() * 4);
        out.extend_from_slice(FGRD_MAGIC);
        for v in [FGRD_VERSION, self.gh as u32, self.gw as u32, self.channels as u32, self.patch as u32, FGRD_DTYPE_F32]
        {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < FGRD_HEADER_LEN {
            return Err(Error::FeatureGrid(format!("truncated header ({} bytes)", bytes.len())));
        }
        if &bytes[..4] != FGRD_MAGIC {
            return Err(Error::FeatureGrid("bad magic, expected \"FGRD\"".into()));
        }
        let field = |k: usize| u32::from_le_bytes(bytes[4 + 4 * k..8 + 4 * k].try_into().unwrap());
        let (version, gh, gw, channels, patch, dtype) = (field(0), field(1), field(2), field(3), field(4), field(5));
        if version != FGRD_VERSION {
            return Err(Error::FeatureGrid(format!("unsupported version {version}")));
        }
        if dtype != FGRD_DTYPE_F32 {
            return Err(Error::FeatureGrid(format!("unsupported dtype {dtype}")));
        }
        let count = (gh as u64) * (gw as u64) * (channels as u64);
        let body = &bytes[FGRD_HEADER_LEN..];
        if body.len() as u64 != count * 4 {
            return Err(Error::FeatureGrid(format!("payload has {} bytes, header implies {}", body.len(), count * 4)));
        }
        let data = body.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        FeatureGrid::new(gh as usize, gw as usize, channels as usize, patch as usize, data)
    }

    pub fn read(path: impl AsRef<FsPath>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path)?;
        FeatureGrid::from_bytes(&bytes).map_err(|e| match e {
            Error::FeatureGrid(m) => Error::FeatureGrid(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn write(&self, path: impl AsRef<FsPath>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    /// Pixel size of a label map that this grid covers exactly.
    pub fn covered_size(&self) -> (usize, usize) {
        (self.gw * self.patch, self.gh * self.patch)
    }
}

/// Mean feature per label; `None` marks labels that own no grid cell.
pub type PooledFeatures = Vec<Option<Vec<f64>>>;

/// Downsample `labels` to the grid by majority vote per cell and average the
/// features of the cells each label wins.
///
/// Background (`-1`) takes part in the vote; ties go to a real label, then to
/// the lowest label index.
pub fn pool_features(grid: &FeatureGrid, labels: &LabelMap, n_labels: usize) -> Result<PooledFeatures> {
    let p = grid.patch;
    let fits = |pixels: usize, cells: usize| pixels.div_ceil(p).abs_diff(cells) <= 1;
    if !fits(labels.width, grid.gw) || !fits(labels.height, grid.gh) {
        return Err(Error::contract(format!(
            "label map {}x{} does not match grid {}x{} with patch {p}",
            labels.width, labels.height, grid.gw, grid.gh
        )));
    }
    let mut sums = vec![vec![0.0; grid.channels]; n_labels];
    let mut cells = vec![0usize; n_labels];
    let mut votes = vec![0usize; n_labels + 1];
    for r in 0..grid.gh {
        for c in 0..grid.gw {
            votes.iter_mut().for_each(|v| *v = 0);
            for y in r * p..((r + 1) * p).min(labels.height) {
                for x in c * p..((c + 1) * p).min(labels.width) {
                    let l = labels.get(x, y);
                    if l >= 0 && (l as usize) < n_labels {
                        votes[l as usize + 1] += 1;
                    } else {
                        votes[0] += 1;
                    }
                }
            }
            let mut winner = 0;
            for k in 1..votes.len() {
                if votes[k] > 0 && (votes[k] > votes[winner] || winner == 0 && votes[k] == votes[0]) {
                    winner = k;
                }
            }
            if winner == 0 {
                continue;
            }
            let l = winner - 1;
            cells[l] += 1;
            for (s, &v) in sums[l].iter_mut().zip(grid.cell(r, c)) {
                *s += v as f64;
            }
        }
    }
    Ok(sums
        .into_iter()
        .zip(cells)
        .map(|(s, n)| (n > 0).then(|| s.into_iter().map(|v| v / n as f64).collect()))
        .collect())
}

/// Dense `rows x cols` matrix (paths by components).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::contract("ragged similarity matrix"));
        }
        Ok(SimilarityMatrix { rows: rows.len(), cols, data: rows.concat() })
    }

    pub fn filled(rows: usize, cols: usize, v: f64) -> Self {
        SimilarityMatrix { rows, cols, data: vec![v; rows * cols] }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.cols.max(1)).map(|r| r.to_vec()).collect()
    }
}

/// Pairwise cosine similarity; undefined features give rows/columns of −1 and
/// zero-norm vectors give 0.
pub fn cosine_similarity_matrix(paths: &[Option<Vec<f64>>], comps: &[Option<Vec<f64>>]) -> Result<SimilarityMatrix> {
    let mut dim = None;
    for v in paths.iter().chain(comps).flatten() {
        match dim {
            None => dim = Some(v.len()),
            Some(d) if d != v.len() => {
                return Err(Error::contract(format!("feature dimension mismatch: {d} vs {}", v.len())))
            }
            _ => {}
        }
    }
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut sim = SimilarityMatrix::filled(paths.len(), comps.len(), -1.0);
    for (i, a) in paths.iter().enumerate() {
        let Some(a) = a else { continue };
        let na = norm(a);
        for (j, b) in comps.iter().enumerate() {
            let Some(b) = b else { continue };
            let nb = norm(b);
            let s = if na == 0.0 || nb == 0.0 {
                0.0
            } else {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                (dot / (na * nb)).clamp(-1.0, 1.0)
            };
            sim.set(i, j, s);
        }
    }
    Ok(sim)
}

/// Softmax along each row and along each column, as two separate matrices.
pub fn softmax_factors(sim: &SimilarityMatrix) -> (SimilarityMatrix, SimilarityMatrix) {
    let (n, m) = (sim.rows, sim.cols);
    let mut row = sim.clone();
    for i in 0..n {
        let mx = (0..m).map(|j| sim.get(i, j)).fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = (0..m).map(|j| (sim.get(i, j) - mx).exp()).sum();
        for j in 0..m {
            row.set(i, j, (sim.get(i, j) - mx).exp() / z);
        }
    }
    let mut col = sim.clone();
    for j in 0..m {
        let mx = (0..n).map(|i| sim.get(i, j)).fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = (0..n).map(|i| (sim.get(i, j) - mx).exp()).sum();
        for i in 0..n {
            col.set(i, j, (sim.get(i, j) - mx).exp() / z);
        }
    }
    (row, col)
}

/// Elementwise product of the row softmax and the column softmax.
pub fn dual_softmax(sim: &SimilarityMatrix) -> SimilarityMatrix {
    let (mut row, col) = softmax_factors(sim);
    for (r, c) in row.data.iter_mut().zip(&col.data) {
        *r *= c;
    }
    row
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub component: usize,
    pub path: usize,
    pub score: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchSet {
    pub assignments: Vec<Assignment>,
    pub unmatched: Vec<usize>,
}

impl MatchSet {
    pub fn path_for(&self, component: usize) -> Option<usize> {
        self.assignments.iter().find(|a| a.component == component).map(|a| a.path)
    }

    /// Every component in `0..m` appears exactly once.
    pub fn is_total(&self, m: usize) -> bool {
        let mut seen = vec![0; m];
        for j in self.assignments.iter().map(|a| a.component).chain(self.unmatched.iter().copied()) {
            if j >= m {
                return false;
            }
            seen[j] += 1;
        }
        seen.iter().all(|&c| c == 1)
    }
}

/// Column argmax (lowest path index on ties), kept when strictly above `tau`.
pub fn extract_matches(sim2: &SimilarityMatrix, tau: f64) -> MatchSet {
    let mut out = MatchSet::default();
    for j in 0..sim2.cols {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..sim2.rows {
            let v = sim2.get(i, j);
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((i, v));
            }
        }
        match best {
            Some((path, score)) if score > tau => out.assignments.push(Assignment { component: j, path, score }),
            _ => out.unmatched.push(j),
        }
    }
    out
}

/// Result of matching pooled features: the raw cosine matrix, its dual
/// softmax, and the thresholded assignment.
#[derive(Clone, Debug, Serialize)]
pub struct Matching {
    pub sim: SimilarityMatrix,
    pub sim2: SimilarityMatrix,
    pub matches: MatchSet,
}

/// Cosine, dual softmax and extraction in one step. Components without a
/// defined feature are always unmatched.
pub fn match_features(paths: &[Option<Vec<f64>>], comps: &[Option<Vec<f64>>], tau: f64) -> Result<Matching> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::contract(format!("tau must lie in (0, 1), got {tau}")));
    }
    let sim = cosine_similarity_matrix(paths, comps)?;
    let sim2 = dual_softmax(&sim);
    let mut matches = extract_matches(&sim2, tau);
    let undefined: Vec<usize> = matches
        .assignments
        .iter()
        .filter(|a| comps[a.component].is_none() || paths[a.path].is_none())
        .map(|a| a.component)
        .collect();
    if !undefined.is_empty() {
        matches.assignments.retain(|a| !undefined.contains(&a.component));
        matches.unmatched.extend(undefined);
        matches.unmatched.sort_unstable();
    }
    Ok(Matching { sim, sim2, matches })
}

fn srgb_to_linear(c: f64) -> f64 {
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

/// CIE L*a*b* (D65) of an sRGB-encoded color.
pub fn srgb_to_lab(c: Rgb) -> [f64; 3] {
    let [r, g, b] = c.0.map(|v| srgb_to_linear(v.clamp(0.0, 1.0)));
    let x = 0.412_456_4 * r + 0.357_576_1 * g + 0.180_437_5 * b;
    let y = 0.212_672_9 * r + 0.715_152_2 * g + 0.072_175_0 * b;
    let z = 0.019_333_9 * r + 0.119_192_0 * g + 0.950_304_1 * b;
    let f = |t: f64| {
        const D: f64 = 6.0 / 29.0;
        if t > D * D * D {
            t.cbrt()
        } else {
            t / (3.0 * D * D) + 4.0 / 29.0
        }
    };
    let (fx, fy, fz) = (f(x / 0.950_47), f(y), f(z / 1.088_83));
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

/// Non-neural 5-channel descriptor per `patch x patch` cell: the cell's mean
/// color in L*a*b*, mapped to `((L-50)/50, a/50, b/50)`, then the cell center
/// in `[0, 1]` image coordinates, weighted 1.0 and 0.25 respectively.
/// Transparent pixels are composited over white.
pub fn builtin_descriptor_grid(img: &Image, patch: usize) -> Result<FeatureGrid> {
    if patch < 4 {
        return Err(Error::contract(format!("descriptor patch must be at least 4, got {patch}")));
    }
    if img.width == 0 || img.height == 0 {
        return Err(Error::contract("empty image"));
    }
    let img = img.to_rgb(Rgb::WHITE);
    let (w, h) = (img.width, img.height);
    let (gw, gh) = (w.div_ceil(patch), h.div_ceil(patch));
    let mut data = Vec::with_capacity(gh * gw * 5);
    for r in 0..gh {
        for c in 0..gw {
            let (x0, x1) = (c * patch, ((c + 1) * patch).min(w));
            let (y0, y1) = (r * patch, ((r + 1) * patch).min(h));
            let mut acc = [0.0; 3];
            for y in y0..y1 {
                for x in x0..x1 {
                    let px = img.rgb(x, y);
                    (0..3).for_each(|k| acc[k] += px.0[k]);
                }
            }
            let count = ((x1 - x0) * (y1 - y0)) as f64;
            let [l, a, b] = srgb_to_lab(Rgb(acc.map(|v| v / count)));
            let cx = (x0 + x1) as f64 / 2.0 / w as f64;
            let cy = (y0 + y1) as f64 / 2.0 / h as f64;
            let cw = BUILTIN_COLOR_WEIGHT;
            let pw = BUILTIN_POSITION_WEIGHT;
            data.extend([cw * (l - 50.0) / 50.0, cw * a / 50.0, cw * b / 50.0, pw * cx, pw * cy].map(|v| v as f32));
        }
    }
    FeatureGrid::new(gh, gw, 5, patch, data)
}
