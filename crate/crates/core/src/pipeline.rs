//! End-to-end pipeline: load, segment, match, pre-align, optimize, evaluate.
//!
//! Each stage reports failures as a [`StageError`] carrying the stage name and
//! an exit class, so drivers can map them to process exit codes.

use std::fmt;
use std::path::{Path as FsPath, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::Error;
use crate::eval::{evaluate, EvalInputs, MetricsReport};
use crate::matching::{
    builtin_descriptor_grid, match_features, pool_features, FeatureGrid, Matching, DEFAULT_BUILTIN_PATCH, DEFAULT_TAU,
};
use crate::optimize::protocol::{BackendClient, Endpoint};
use crate::optimize::{optimize_paths, ImageLoss, LossBackendKind, LossReport, MultiScaleMse, OptimConfig, BACKGROUND};
use crate::prealign::{build_initial_svg, InitialSvg, PrealignParams};
use crate::raster::{render, Image};
use crate::segment::{
    connected_components, default_min_area, exemplar_segments, region_components, Component, LabelMap,
    DEFAULT_COLOR_TOL,
};
use crate::svg::{parse_svg, serialize_svg, SvgDoc};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Config,
    Load,
    Segment,
    Match,
    Prealign,
    Optimize,
    Serialize,
    Eval,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).ok().and_then(|v| v.as_str().map(String::from));
        f.write_str(s.as_deref().unwrap_or("?"))
    }
}

/// Exit classes: bad inputs, a failing stage, or an unusable backend.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FailureClass {
    Input,
    Stage,
    Backend,
}

impl FailureClass {
    pub fn exit_code(self) -> i32 {
        match self {
            FailureClass::Input => 2,
            FailureClass::Stage => 3,
            FailureClass::Backend => 4,
        }
    }
}

#[derive(Debug)]
pub struct StageError {
    pub stage: Stage,
    pub class: FailureClass,
    pub error: Error,
}

impl StageError {
    /// Backend errors are always [`FailureClass::Backend`]; anything raised
    /// while loading or configuring is an input error.
    pub fn new(stage: Stage, error: Error) -> StageError {
        let class = match (&error, stage) {
            (Error::Backend { .. }, _) => FailureClass::Backend,
            (_, Stage::Config | Stage::Load) => FailureClass::Input,
            _ => FailureClass::Stage,
        };
        StageError { stage, class, error }
    }

    pub fn input(stage: Stage, message: impl Into<String>) -> StageError {
        StageError { stage, class: FailureClass::Input, error: Error::Contract(message.into()) }
    }

    pub fn code(&self) -> &'static str {
        self.error.code()
    }

    pub fn exit_code(&self) -> i32 {
        self.class.exit_code()
    }
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "stage {} failed [{}]: {}", self.stage, self.code(), self.error)
    }
}

impl std::error::Error for StageError {}

pub type StageResult<T> = std::result::Result<T, StageError>;

trait AtStage<T> {
    fn at(self, stage: Stage) -> StageResult<T>;
}

impl<T> AtStage<T> for crate::Result<T> {
    fn at(self, stage: Stage) -> StageResult<T> {
        self.map_err(|e| StageError::new(stage, e))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchConfig {
    pub tau: f64,
    /// Max-channel color difference joining neighbouring target pixels.
    pub color_tol: f64,
    /// Smallest kept component in pixels; `None` scales with the image.
    pub min_area: Option<usize>,
    /// Cell size of the builtin descriptor grid.
    pub patch: usize,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig { tau: DEFAULT_TAU, color_tol: DEFAULT_COLOR_TOL, min_area: None, patch: DEFAULT_BUILTIN_PATCH }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub exemplar_svg: PathBuf,
    pub target_image: PathBuf,
    pub feature_grid_exemplar: Option<PathBuf>,
    pub feature_grid_target: Option<PathBuf>,
    pub output_svg: PathBuf,
    pub optim: OptimConfig,
    #[serde(rename = "match")]
    pub matching: MatchConfig,
    /// Loss and embedding service endpoint; `None` uses the builtin loss and
    /// leaves embedding metrics empty.
    pub backend: Option<String>,
    pub seed: u64,
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> StageResult<PipelineConfig> {
        serde_json::from_str(text).map_err(|e| StageError::new(Stage::Config, e.into()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    /// Reconcile `backend` with `optim.loss_backend`: either one names the
    /// endpoint for both uses, and they may not disagree.
    pub fn resolve_backend(&mut self) -> StageResult<()> {
        match (&self.backend, &self.optim.loss_backend) {
            (Some(b), LossBackendKind::External(e)) if b != e => {
                Err(StageError::input(Stage::Config, format!("backend `{b}` disagrees with optim.loss_backend `{e}`")))
            }
            (Some(b), _) => {
                self.optim.loss_backend = LossBackendKind::External(b.clone());
                Ok(())
            }
            (None, LossBackendKind::External(e)) => {
                self.backend = Some(e.clone());
                Ok(())
            }
            (None, LossBackendKind::Builtin) => Ok(()),
        }
    }

    pub fn validate(&self) -> StageResult<()> {
        let need = |p: &PathBuf, what: &str| {
            if p.as_os_str().is_empty() {
                Err(StageError::input(Stage::Config, format!("no {what} given")))
            } else {
                Ok(())
            }
        };
        need(&self.exemplar_svg, "exemplar SVG")?;
        need(&self.target_image, "target image")?;
        need(&self.output_svg, "output SVG")?;
        validate_match(&self.matching)?;
        if self.feature_grid_exemplar.is_some() != self.feature_grid_target.is_some() {
            return Err(StageError::input(
                Stage::Config,
                "feature grids must be given for both the exemplar and the target",
            ));
        }
        self.optim.validate().at(Stage::Config)?;
        if let Some(b) = &self.backend {
            Endpoint::parse(b).at(Stage::Config)?;
        }
        Ok(())
    }

    /// Stage plan for a dry run.
    pub fn plan(&self) -> Vec<String> {
        let descriptors = match (&self.feature_grid_exemplar, &self.feature_grid_target) {
            (Some(e), Some(t)) => format!("feature grids {} / {}", e.display(), t.display()),
            _ => format!("builtin descriptors (patch {})", self.matching.patch),
        };
        let loss = match &self.optim.loss_backend {
            LossBackendKind::Builtin => "builtin multi-scale loss".to_string(),
            LossBackendKind::External(e) => format!("backend {e}"),
        };
        let o = &self.optim;
        vec![
            format!("load: exemplar {}, target {}", self.exemplar_svg.display(), self.target_image.display()),
            format!(
                "segment: color_tol {}, min_area {}",
                self.matching.color_tol,
                self.matching.min_area.map_or("auto".to_string(), |a| a.to_string())
            ),
            format!("match: {descriptors}, tau {}", self.matching.tau),
            "prealign: affine CPD for matched paths, spline fit for the rest".to_string(),
            format!(
                "optimize: {} steps at {} px, lambda {} -> {}, window {}, {loss}",
                o.iterations, o.render_size, o.lambda_start, o.lambda_end, o.window
            ),
            format!("write: {}", self.output_svg.display()),
            format!("write: {}", sidecar(&self.output_svg, "provenance.json").display()),
            format!("write: {}", sidecar(&self.output_svg, "metrics.json").display()),
        ]
    }
}

fn validate_match(m: &MatchConfig) -> StageResult<()> {
    if !(m.tau > 0.0 && m.tau < 1.0) {
        return Err(StageError::input(Stage::Config, format!("tau must lie in (0, 1), got {}", m.tau)));
    }
    if !(0.0..1.0).contains(&m.color_tol) {
        return Err(StageError::input(Stage::Config, format!("color_tol must lie in [0, 1), got {}", m.color_tol)));
    }
    if m.patch < 4 {
        return Err(StageError::input(Stage::Config, "descriptor patch must be at least 4"));
    }
    Ok(())
}

/// `out.svg` -> `out.<suffix>` next to it.
pub fn sidecar(output: &FsPath, suffix: &str) -> PathBuf {
    let stem = output.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    output.with_file_name(format!("{stem}.{suffix}"))
}

fn read_text(path: &FsPath) -> StageResult<String> {
    std::fs::read_to_string(path).map_err(|e| StageError::input(Stage::Load, format!("{}: {e}", path.display())))
}

pub fn load_svg(path: &FsPath) -> StageResult<SvgDoc> {
    let text = read_text(path)?;
    parse_svg(&text).map_err(|e| StageError {
        stage: Stage::Load,
        class: FailureClass::Input,
        error: Error::Contract(format!("{}: {e}", path.display())),
    })
}

pub fn load_image(path: &FsPath) -> StageResult<Image> {
    if !path.exists() {
        return Err(StageError::input(Stage::Load, format!("{}: no such file", path.display())));
    }
    Image::load_png(path).map_err(|e| StageError::input(Stage::Load, format!("{}: {e}", path.display())))
}

pub fn load_grid(path: &FsPath) -> StageResult<FeatureGrid> {
    FeatureGrid::read(path).map_err(|e| StageError::input(Stage::Load, format!("{}: {e}", path.display())))
}

/// Everything the alignment stage computed.
#[derive(Clone, Debug)]
pub struct Alignment {
    pub components: Vec<Component>,
    pub matching: Matching,
    pub initial: InitialSvg,
    /// Exemplar rendered at the target size.
    pub exemplar_render: Image,
    pub component_labels: LabelMap,
    pub descriptors: &'static str,
}

/// Segment the target, match its components to exemplar paths and build the
/// initial SVG. `grids` are (exemplar, target) feature grids; without them
/// builtin descriptors are computed from the exemplar render and the target.
pub fn align(
    exemplar: &SvgDoc,
    target: &Image,
    grids: Option<(&FeatureGrid, &FeatureGrid)>,
    config: &MatchConfig,
) -> StageResult<Alignment> {
    validate_match(config)?;
    let (w, h) = (target.width, target.height);
    let min_area = config.min_area.unwrap_or_else(|| default_min_area(w, h));
    let components = connected_components(target, config.color_tol, min_area);
    let component_labels = LabelMap::from_components(&components, w, h);

    let (exemplar_render, _) = render(exemplar, w, h, BACKGROUND).at(Stage::Segment)?;
    let path_labels = exemplar_segments(exemplar, w, h);
    let regions = region_components(&exemplar_render, &path_labels, exemplar.paths.len(), BACKGROUND);

    let builtin;
    let (ge, gt, descriptors) = match grids {
        Some((ge, gt)) => (ge, gt, "feature_grid"),
        None => {
            builtin = (
                builtin_descriptor_grid(&exemplar_render, config.patch).at(Stage::Match)?,
                builtin_descriptor_grid(target, config.patch).at(Stage::Match)?,
            );
            (&builtin.0, &builtin.1, "builtin")
        }
    };
    let path_feats = pool_features(ge, &path_labels, exemplar.paths.len()).at(Stage::Match)?;
    let comp_feats = pool_features(gt, &component_labels, components.len()).at(Stage::Match)?;
    let matching = match_features(&path_feats, &comp_feats, config.tau).at(Stage::Match)?;

    let initial = build_initial_svg(&matching.matches, exemplar, &regions, &components, &PrealignParams::default())
        .at(Stage::Prealign)?;
    Ok(Alignment { components, matching, initial, exemplar_render, component_labels, descriptors })
}

/// Connect to the configured loss backend, or the builtin loss.
pub fn loss_backend(kind: &LossBackendKind) -> StageResult<Box<dyn ImageLoss>> {
    match kind {
        LossBackendKind::Builtin => Ok(Box::new(MultiScaleMse)),
        LossBackendKind::External(e) => {
            let ep = Endpoint::parse(e).at(Stage::Config)?;
            let client = BackendClient::connect(&ep).at(Stage::Optimize)?;
            Ok(Box::new(client))
        }
    }
}

/// Connect to the embedding backend for metrics, if one is configured.
pub fn embedding_backend(endpoint: Option<&str>) -> StageResult<Option<BackendClient>> {
    endpoint
        .map(|e| {
            let ep = Endpoint::parse(e).at(Stage::Config)?;
            BackendClient::connect(&ep).at(Stage::Eval)
        })
        .transpose()
}

#[derive(Clone, Debug)]
pub struct Optimized {
    pub doc: SvgDoc,
    /// Serialized `doc`; parsing it gives `doc` back.
    pub svg: String,
    pub history: Vec<LossReport>,
    pub stopped_early: bool,
    pub backend: String,
}

/// Optimize `initial` towards `target` and serialize the result. The returned
/// document is the parsed serialization, so it is exactly what was written.
pub fn optimize(initial: &SvgDoc, target: &Image, config: &OptimConfig) -> StageResult<Optimized> {
    let mut backend = loss_backend(&config.loss_backend)?;
    let out = optimize_paths(initial, target, config, backend.as_mut(), None).at(Stage::Optimize)?;
    let svg = serialize_svg(&out.doc);
    let doc = parse_svg(&svg).at(Stage::Serialize)?;
    Ok(Optimized {
        doc,
        svg,
        history: out.history,
        stopped_early: out.stopped_early,
        backend: backend.name().to_string(),
    })
}

/// Metrics of `customized` against the target and the exemplar. Renders are
/// quantized to 8 bits like a target read from PNG.
pub fn metrics(
    exemplar: &SvgDoc,
    customized: &SvgDoc,
    target: &Image,
    prompt: Option<&str>,
    backend: Option<&mut BackendClient>,
) -> StageResult<MetricsReport> {
    let (w, h) = (target.width, target.height);
    let rendered = render(customized, w, h, BACKGROUND).at(Stage::Eval)?.0.quantized();
    let exemplar_render = render(exemplar, w, h, BACKGROUND).at(Stage::Eval)?.0.quantized();
    let with_backend = backend.is_some();
    let inputs = EvalInputs {
        exemplar,
        customized,
        target,
        rendered: &rendered,
        exemplar_render: with_backend.then_some(&exemplar_render),
        prompt,
    };
    evaluate(&inputs, backend).at(Stage::Eval)
}

/// Provenance of an alignment: components, matches and per-path origin.
pub fn alignment_provenance(al: &Alignment, tau: f64) -> Value {
    let by_component: Vec<Option<&str>> = {
        let mut v = vec![None; al.components.len()];
        for p in &al.initial.provenance {
            v[p.component()] = Some(p.id());
        }
        v
    };
    let components: Vec<Value> = al
        .components
        .iter()
        .map(|c| {
            json!({
                "id": c.id,
                "area": c.area,
                "color": c.mean_color.to_hex(),
                "centroid": [c.centroid.x, c.centroid.y],
                "output_path": by_component[c.id],
            })
        })
        .collect();
    json!({
        "components": components,
        "matching": {
            "descriptors": al.descriptors,
            "tau": tau,
            "assignments": al.matching.matches.assignments.iter().map(|a| json!({
                "component": a.component, "path": a.path, "score": a.score,
            })).collect::<Vec<_>>(),
            "unmatched": al.matching.matches.unmatched,
        },
        "paths": al.initial.provenance,
        "warnings": al.initial.warnings,
    })
}

pub fn optimization_provenance(opt: &Optimized, model: Option<&str>) -> Value {
    json!({
        "backend": opt.backend,
        "model": model,
        "steps": opt.history.len(),
        "stopped_early": opt.stopped_early,
        "first": opt.history.first(),
        "last": opt.history.last(),
    })
}

pub fn to_pretty_json(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("JSON value serializes") + "\n"
}

/// Files written by a full run.
#[derive(Clone, Debug)]
pub struct RunOutputs {
    pub alignment: Alignment,
    pub optimized: Optimized,
    pub metrics: MetricsReport,
    pub provenance: Value,
    /// The initial SVG as serialized between the two stages.
    pub initial_svg: String,
}

/// Run every stage in memory. The initial SVG passes through its
/// serialization, exactly as when the stages run as separate commands.
pub fn run(config: &PipelineConfig) -> StageResult<RunOutputs> {
    let mut config = config.clone();
    config.resolve_backend()?;
    config.validate()?;
    let exemplar = load_svg(&config.exemplar_svg)?;
    let target = load_image(&config.target_image)?;
    let grids = match (&config.feature_grid_exemplar, &config.feature_grid_target) {
        (Some(e), Some(t)) => Some((load_grid(e)?, load_grid(t)?)),
        _ => None,
    };
    let alignment = align(&exemplar, &target, grids.as_ref().map(|(a, b)| (a, b)), &config.matching)?;
    let initial_svg = serialize_svg(&alignment.initial.doc);
    let initial = parse_svg(&initial_svg).at(Stage::Serialize)?;
    let optimized = optimize(&initial, &target, &config.optim)?;
    let mut embed = embedding_backend(config.backend.as_deref())?;
    let metrics = metrics(&exemplar, &optimized.doc, &target, None, embed.as_mut())?;
    let mut provenance = json!({
        "tool": "svgcustom",
        "version": env!("CARGO_PKG_VERSION"),
        "seed": config.seed,
        "config": config,
        "target": {"width": target.width, "height": target.height},
    });
    let extra = alignment_provenance(&alignment, config.matching.tau);
    if let (Value::Object(p), Value::Object(a)) = (&mut provenance, extra) {
        p.extend(a);
        p.insert("optimization".into(), optimization_provenance(&optimized, metrics.model.as_deref()));
    }
    Ok(RunOutputs { alignment, optimized, metrics, provenance, initial_svg })
}
