//! Path optimization: gradient descent on control points and fill colors
//! against an image-level loss plus a λ-weighted local Procrustes loss.

mod image_loss;
mod procrustes;
pub mod protocol;

use std::sync::mpsc::Sender;

use serde::{Deserialize, Serialize};

pub use image_loss::{multiscale_mse, ImageLoss, MultiScaleMse, SCALES};
pub use procrustes::{local_procrustes_loss, procrustes_dist, window_indices};

use crate::error::{Error, Result};
use crate::geom::Point;
use crate::raster::{render, Image, RenderTape};
use crate::svg::{Rgb, SvgDoc};

/// Renders are composited over white, matching how targets are flattened.
pub const BACKGROUND: Rgb = Rgb::WHITE;
/// Early stopping looks at the total loss this many steps back.
pub const EARLY_STOP_SPAN: usize = 20;
pub const EARLY_STOP_REL: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "endpoint")]
pub enum LossBackendKind {
    Builtin,
    /// Endpoint string as accepted by [`protocol::Endpoint::parse`].
    External(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimConfig {
    pub iterations: usize,
    /// Adam step size for control points, in canvas units.
    pub lr_points: f64,
    pub lr_color: f64,
    pub lambda_start: f64,
    pub lambda_end: f64,
    /// Control points on each side of the window centre.
    pub window: usize,
    /// Longer side of the optimization render, in pixels.
    pub render_size: usize,
    pub loss_backend: LossBackendKind,
    /// Step sizes decay geometrically from their full value at step 0 to
    /// this fraction of it at the last step.
    pub lr_final_fraction: f64,
    /// Halvings tried when a step would raise the total loss; a step that
    /// still raises it is rejected. 0 takes every step as proposed.
    pub backtrack: usize,
    /// Stop once the total loss changed by less than [`EARLY_STOP_REL`]
    /// (relative) over [`EARLY_STOP_SPAN`] steps.
    pub early_stop: bool,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            iterations: 200,
            lr_points: 0.4,
            lr_color: 0.01,
            lambda_start: 0.01,
            lambda_end: 0.04,
            window: 2,
            render_size: 512,
            lr_final_fraction: 0.01,
            backtrack: 3,
            loss_backend: LossBackendKind::Builtin,
            early_stop: false,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::contract(format!("optimizer config: {m}")));
        if self.iterations == 0 {
            return bad("iterations must be at least 1");
        }
        if !(self.lambda_start.is_finite() && self.lambda_end.is_finite()) || self.lambda_start > self.lambda_end {
            return bad("need finite lambda_start <= lambda_end");
        }
        if self.lambda_start < 0.0 {
            return bad("lambda must be non-negative");
        }
        if self.window == 0 {
            return bad("window must be at least 1");
        }
        if !(self.lr_points >= 0.0 && self.lr_color >= 0.0 && self.lr_points.is_finite() && self.lr_color.is_finite()) {
            return bad("step sizes must be finite and non-negative");
        }
        if !(self.lr_final_fraction > 0.0 && self.lr_final_fraction <= 1.0) {
            return bad("lr_final_fraction must lie in (0, 1]");
        }
        if self.render_size < 8 {
            return bad("render_size must be at least 8");
        }
        Ok(())
    }

    /// Balance factor at `step`, linear from `lambda_start` at step 0 to
    /// `lambda_end` at the last step.
    pub fn lambda(&self, step: usize) -> f64 {
        if self.iterations <= 1 {
            return self.lambda_start;
        }
        let f = step.min(self.iterations - 1) as f64 / (self.iterations - 1) as f64;
        self.lambda_start + (self.lambda_end - self.lambda_start) * f
    }

    /// Multiplier on both step sizes at `step`.
    pub fn lr_scale(&self, step: usize) -> f64 {
        if self.iterations <= 1 {
            return 1.0;
        }
        let f = step.min(self.iterations - 1) as f64 / (self.iterations - 1) as f64;
        self.lr_final_fraction.powf(f)
    }

    /// Render dimensions for a canvas: `render_size` on the longer side.
    pub fn render_dims(&self, canvas_w: f64, canvas_h: f64) -> (usize, usize) {
        let s = self.render_size as f64;
        if canvas_w >= canvas_h {
            (self.render_size, ((s * canvas_h / canvas_w).round() as usize).max(8))
        } else {
            (((s * canvas_w / canvas_h).round() as usize).max(8), self.render_size)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LossReport {
    pub step: usize,
    pub total: f64,
    pub image_term: f64,
    pub procrustes_term: f64,
    pub lambda: f64,
}

pub fn total_loss(image_term: f64, procrustes_term: f64, step: usize, config: &OptimConfig) -> LossReport {
    let lambda = config.lambda(step);
    LossReport { step, total: image_term + lambda * procrustes_term, image_term, procrustes_term, lambda }
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Clone, Debug, Default)]
struct Moments {
    points_m: Vec<Point>,
    /// Second moment shared by all point coordinates of the path.
    points_v: f64,
    fill_m: [f64; 3],
    fill_v: [f64; 3],
}

/// Forward pass at one geometry, kept until its backward pass is needed.
#[derive(Debug)]
struct Evaluated {
    tape: RenderTape,
    image_term: f64,
    d_image: Image,
    proc_term: f64,
    proc_grads: Vec<Vec<Point>>,
}

/// Optimizer state. `initial` is never modified.
#[derive(Debug)]
pub struct OptimState {
    pub current: SvgDoc,
    pub initial: SvgDoc,
    pub step: usize,
    moments: Vec<Moments>,
    /// Multiplier left over from backtracking, at most 1.
    trust: f64,
    /// Evaluation of `current` from the accepted trial of the last step.
    pending: Option<Evaluated>,
    pub history: Vec<LossReport>,
}

fn adam(m: &mut f64, v: &mut f64, g: f64, t: i32) -> f64 {
    *m = BETA1 * *m + (1.0 - BETA1) * g;
    *v = BETA2 * *v + (1.0 - BETA2) * g * g;
    let mh = *m / (1.0 - BETA1.powi(t));
    let vh = *v / (1.0 - BETA2.powi(t));
    mh / (vh.sqrt() + ADAM_EPS)
}

fn evaluate(
    doc: &SvgDoc,
    initial: &SvgDoc,
    target: &Image,
    config: &OptimConfig,
    backend: &mut dyn ImageLoss,
) -> Result<Evaluated> {
    let (rendered, tape) = render(doc, target.width, target.height, BACKGROUND)?;
    let (image_term, d_image) = backend.loss_grad(&rendered, target)?;
    let (proc_term, proc_grads) = local_procrustes_loss(doc, initial, config.window)?;
    Ok(Evaluated { tape, image_term, d_image, proc_term, proc_grads })
}

/// Adam directions per path: `(points, fill)`.
type Directions = Vec<(Vec<Point>, [f64; 3])>;

fn apply(doc: &SvgDoc, dirs: &Directions, lr_p: f64, lr_c: f64) -> SvgDoc {
    let mut out = doc.clone();
    for (path, (dp, dc)) in out.paths.iter_mut().zip(dirs) {
        for (p, d) in path.points.iter_mut().zip(dp) {
            *p -= *d * lr_p;
        }
        for (v, d) in path.fill.0.iter_mut().zip(dc) {
            *v = (*v - lr_c * d).clamp(0.0, 1.0);
        }
    }
    out
}

impl OptimState {
    pub fn new(initial: &SvgDoc) -> OptimState {
        let moments = initial
            .paths
            .iter()
            .map(|p| Moments { points_m: vec![Point::ZERO; p.points.len()], ..Default::default() })
            .collect();
        OptimState {
            current: initial.clone(),
            initial: initial.clone(),
            step: 0,
            moments,
            trust: 1.0,
            pending: None,
            history: Vec::new(),
        }
    }

    /// One step: render, both losses, backward, Adam update, color clamp,
    /// then backtracking on the total loss when enabled.
    /// `target` must already be at the render size for this canvas.
    pub fn step(&mut self, target: &Image, config: &OptimConfig, backend: &mut dyn ImageLoss) -> Result<LossReport> {
        let ev = match self.pending.take() {
            Some(ev) => ev,
            None => evaluate(&self.current, &self.initial, target, config, backend)?,
        };
        let Evaluated { mut tape, image_term, d_image, proc_term, proc_grads } = ev;
        let mut grads = tape.backward(&d_image)?;
        let report = total_loss(image_term, proc_term, self.step, config);
        for (g, pg) in grads.iter_mut().zip(&proc_grads) {
            for (a, b) in g.points.iter_mut().zip(pg) {
                *a += *b * report.lambda;
            }
        }
        for (g, path) in grads.iter().zip(&self.current.paths) {
            let finite = g.points.iter().all(|p| p.is_finite()) && g.fill.iter().all(|v| v.is_finite());
            if !finite {
                return Err(Error::NonFiniteGradient { path_id: path.id.clone(), step: self.step });
            }
        }
        if !report.total.is_finite() {
            return Err(Error::Backend {
                backend: backend.name().to_string(),
                message: format!("non-finite loss at step {}", self.step),
            });
        }

        let t = (self.step + 1) as i32;
        let dirs: Directions = grads
            .iter()
            .zip(&mut self.moments)
            .map(|(g, mo)| {
                let n = (2 * g.points.len()).max(1) as f64;
                let sq = g.points.iter().map(|p| p.x * p.x + p.y * p.y).sum::<f64>() / n;
                mo.points_v = BETA2 * mo.points_v + (1.0 - BETA2) * sq;
                let denom = (mo.points_v / (1.0 - BETA2.powi(t))).sqrt() + ADAM_EPS;
                let c1 = 1.0 - BETA1.powi(t);
                let dp = g
                    .points
                    .iter()
                    .zip(&mut mo.points_m)
                    .map(|(gp, m)| {
                        *m = *m * BETA1 + *gp * (1.0 - BETA1);
                        *m * (1.0 / (c1 * denom))
                    })
                    .collect();
                let dc = std::array::from_fn(|c| adam(&mut mo.fill_m[c], &mut mo.fill_v[c], g.fill[c], t));
                (dp, dc)
            })
            .collect();
        let scale = config.lr_scale(self.step);
        let (lr_p, lr_c) = (config.lr_points * scale, config.lr_color * scale);
        if config.backtrack == 0 {
            self.current = apply(&self.current, &dirs, lr_p, lr_c);
        } else {
            let mut s = self.trust;
            for _ in 0..=config.backtrack {
                let trial = apply(&self.current, &dirs, lr_p * s, lr_c * s);
                let ev = evaluate(&trial, &self.initial, target, config, backend)?;
                if ev.image_term + report.lambda * ev.proc_term <= report.total {
                    self.current = trial;
                    self.pending = Some(ev);
                    s = (2.0 * s).min(1.0);
                    break;
                }
                s *= 0.5;
            }
            // after a full rejection the next step starts over at full size
            self.trust = if self.pending.is_some() { s } else { 1.0 };
        }
        self.step += 1;
        self.history.push(report);
        Ok(report)
    }

    fn converged(&self) -> bool {
        let n = self.history.len();
        if n <= EARLY_STOP_SPAN {
            return false;
        }
        let (now, then) = (self.history[n - 1].total, self.history[n - 1 - EARLY_STOP_SPAN].total);
        (now - then).abs() <= EARLY_STOP_REL * then.abs()
    }
}

#[derive(Clone, Debug)]
pub struct OptimResult {
    pub doc: SvgDoc,
    pub history: Vec<LossReport>,
    pub stopped_early: bool,
}

/// Resample `target` (flattened over white) to the render size of `doc`.
pub fn prepare_target(target: &Image, doc: &SvgDoc, config: &OptimConfig) -> Image {
    let (w, h) = config.render_dims(doc.width, doc.height);
    let rgb = target.to_rgb(BACKGROUND);
    if rgb.width == w && rgb.height == h {
        rgb
    } else {
        rgb.resized(w, h)
    }
}

/// Run the optimization from `init`. Each step's report is also sent on
/// `progress` when given (send failures are ignored).
pub fn optimize_paths(
    init: &SvgDoc,
    target: &Image,
    config: &OptimConfig,
    backend: &mut dyn ImageLoss,
    progress: Option<&Sender<LossReport>>,
) -> Result<OptimResult> {
    config.validate()?;
    init.validate()?;
    let target = prepare_target(target, init, config);
    let mut state = OptimState::new(init);
    let mut stopped_early = false;
    for _ in 0..config.iterations {
        let report = state.step(&target, config, backend)?;
        if let Some(tx) = progress {
            let _ = tx.send(report);
        }
        if config.early_stop && state.converged() {
            stopped_early = state.step < config.iterations;
            break;
        }
    }
    Ok(OptimResult { doc: state.current, history: state.history, stopped_early })
}
