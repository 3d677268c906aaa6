use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use svgcustom::optimize::BACKGROUND;
use svgcustom::pipeline::{
    self, align, alignment_provenance, embedding_backend, load_grid, load_image, load_svg, metrics,
    optimization_provenance, sidecar, to_pretty_json, PipelineConfig, Stage, StageError, StageResult,
};
use svgcustom::raster::{render, Image};
use svgcustom::svg::{serialize_svg, SvgDoc};
use svgcustom::Error;

#[derive(Parser)]
#[command(name = "svgcustom", version, about = "Retarget an exemplar SVG onto a customized raster image")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Align and optimize; writes the SVG plus provenance and metrics JSON.
    Run(RunArgs),
    /// Segment, match and pre-align; writes the initial SVG and provenance.
    Align(RunArgs),
    /// Optimize an initial SVG towards the target.
    Optimize(OptimizeArgs),
    /// Rasterize an SVG to PNG.
    Render(RenderArgs),
    /// Print the metrics of an SVG against a target image.
    Eval(EvalArgs),
}

/// Settings shared by the pipeline commands; flags override `--config`.
#[derive(Args, Clone, Default)]
struct Settings {
    /// JSON pipeline config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    lambda_start: Option<f64>,
    #[arg(long)]
    lambda_end: Option<f64>,
    /// Procrustes window half-width in control points.
    #[arg(long)]
    window: Option<usize>,
    /// Loss and embedding service, `tcp://host:port`, `unix://path` or `cmd:<command>`.
    #[arg(long)]
    backend: Option<String>,
    /// FGRD feature grid of the exemplar render.
    #[arg(long)]
    features_exemplar: Option<PathBuf>,
    /// FGRD feature grid of the target image.
    #[arg(long)]
    features_target: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Also write per-stage debug PNGs next to the output.
    #[arg(long)]
    debug: bool,
    /// Validate and print the stage plan without running anything.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    exemplar: Option<PathBuf>,
    #[arg(long)]
    target: Option<PathBuf>,
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[command(flatten)]
    settings: Settings,
}

#[derive(Args)]
struct OptimizeArgs {
    /// Initial SVG, as written by `align`.
    #[arg(long)]
    initial: PathBuf,
    #[arg(long)]
    target: Option<PathBuf>,
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Exemplar SVG; when given, metrics JSON is written too.
    #[arg(long)]
    exemplar: Option<PathBuf>,
    #[command(flatten)]
    settings: Settings,
}

#[derive(Args)]
struct RenderArgs {
    svg: PathBuf,
    /// Longer side in pixels.
    #[arg(long, default_value_t = 512)]
    size: usize,
    /// Defaults to the SVG path with a `.png` extension.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    svg: PathBuf,
    #[arg(long)]
    target: PathBuf,
    /// Defaults to the evaluated SVG itself.
    #[arg(long)]
    exemplar: Option<PathBuf>,
    #[arg(long)]
    backend: Option<String>,
    /// Text prompt for the text-image similarity (needs a backend).
    #[arg(long)]
    prompt: Option<String>,
    /// Also write the report here.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Align(a) => cmd_align(a),
        Command::Optimize(a) => cmd_optimize(a),
        Command::Render(a) => cmd_render(a),
        Command::Eval(a) => cmd_eval(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("svgcustom: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn config_error(msg: String) -> StageError {
    StageError::input(Stage::Config, msg)
}

/// Config file (if any) with flag overrides applied, backend resolved.
fn resolve(
    s: &Settings,
    exemplar: Option<PathBuf>,
    target: Option<PathBuf>,
    output: Option<PathBuf>,
) -> StageResult<PipelineConfig> {
    let mut c = match &s.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| config_error(format!("{}: {e}", p.display())))?;
            PipelineConfig::from_json(&text)?
        }
        None => PipelineConfig::default(),
    };
    if let Some(v) = exemplar {
        c.exemplar_svg = v;
    }
    if let Some(v) = target {
        c.target_image = v;
    }
    if let Some(v) = output {
        c.output_svg = v;
    }
    if let Some(v) = s.tau {
        c.matching.tau = v;
    }
    if let Some(v) = s.iterations {
        c.optim.iterations = v;
    }
    if let Some(v) = s.lambda_start {
        c.optim.lambda_start = v;
    }
    if let Some(v) = s.lambda_end {
        c.optim.lambda_end = v;
    }
    if let Some(v) = s.window {
        c.optim.window = v;
    }
    if let Some(v) = &s.backend {
        c.backend = Some(v.clone());
        c.optim.loss_backend = svgcustom::optimize::LossBackendKind::External(v.clone());
    }
    if let Some(v) = &s.features_exemplar {
        c.feature_grid_exemplar = Some(v.clone());
    }
    if let Some(v) = &s.features_target {
        c.feature_grid_target = Some(v.clone());
    }
    if let Some(v) = s.seed {
        c.seed = v;
    }
    c.resolve_backend()?;
    Ok(c)
}

fn write(path: &Path, contents: &[u8]) -> StageResult<()> {
    std::fs::write(path, contents)
        .map_err(|e| StageError::new(Stage::Serialize, Error::Contract(format!("{}: {e}", path.display()))))
}

fn save_png(img: &Image, path: &Path) -> StageResult<()> {
    img.save_png(path)
        .map_err(|e| StageError::new(Stage::Serialize, Error::Contract(format!("{}: {e}", path.display()))))
}

fn render_at(doc: &SvgDoc, like: &Image, stage: Stage) -> StageResult<Image> {
    render(doc, like.width, like.height, BACKGROUND).map(|r| r.0).map_err(|e| StageError::new(stage, e))
}

fn print_plan(lines: &[String]) {
    println!("plan (dry run, nothing written):");
    for (i, l) in lines.iter().enumerate() {
        println!("  {}. {l}", i + 1);
    }
}

fn cmd_run(a: RunArgs) -> StageResult<()> {
    let config = resolve(&a.settings, a.exemplar, a.target, a.output)?;
    config.validate()?;
    if a.settings.dry_run {
        let mut plan = config.plan();
        if a.settings.debug {
            plan.push(format!("write: debug PNGs {}", sidecar(&config.output_svg, "debug-*.png").display()));
        }
        print_plan(&plan);
        return Ok(());
    }
    let out = pipeline::run(&config)?;
    let o = &config.output_svg;
    write(o, out.optimized.svg.as_bytes())?;
    write(&sidecar(o, "provenance.json"), to_pretty_json(&out.provenance).as_bytes())?;
    let report = out.metrics.to_json().map_err(|e| StageError::new(Stage::Eval, e))?;
    write(&sidecar(o, "metrics.json"), report.as_bytes())?;
    if a.settings.debug {
        let al = &out.alignment;
        let target_like = &al.exemplar_render;
        save_png(&al.component_labels.to_debug_image(), &sidecar(o, "debug-segments.png"))?;
        save_png(&al.exemplar_render, &sidecar(o, "debug-exemplar.png"))?;
        save_png(&render_at(&al.initial.doc, target_like, Stage::Prealign)?, &sidecar(o, "debug-initial.png"))?;
        save_png(&render_at(&out.optimized.doc, target_like, Stage::Optimize)?, &sidecar(o, "debug-final.png"))?;
    }
    println!("wrote {}", o.display());
    Ok(())
}

fn cmd_align(a: RunArgs) -> StageResult<()> {
    let config = resolve(&a.settings, a.exemplar, a.target, a.output)?;
    config.validate()?;
    let o = &config.output_svg;
    if a.settings.dry_run {
        let mut plan: Vec<String> = config.plan().into_iter().take(4).collect();
        plan.push(format!("write: {}", o.display()));
        plan.push(format!("write: {}", sidecar(o, "provenance.json").display()));
        print_plan(&plan);
        return Ok(());
    }
    let exemplar = load_svg(&config.exemplar_svg)?;
    let target = load_image(&config.target_image)?;
    let grids = match (&config.feature_grid_exemplar, &config.feature_grid_target) {
        (Some(e), Some(t)) => Some((load_grid(e)?, load_grid(t)?)),
        _ => None,
    };
    let al = align(&exemplar, &target, grids.as_ref().map(|(e, t)| (e, t)), &config.matching)?;
    write(o, serialize_svg(&al.initial.doc).as_bytes())?;
    let mut prov = alignment_provenance(&al, config.matching.tau);
    if let Some(m) = prov.as_object_mut() {
        m.insert("seed".into(), config.seed.into());
    }
    write(&sidecar(o, "provenance.json"), to_pretty_json(&prov).as_bytes())?;
    if a.settings.debug {
        save_png(&al.component_labels.to_debug_image(), &sidecar(o, "debug-segments.png"))?;
        save_png(&al.exemplar_render, &sidecar(o, "debug-exemplar.png"))?;
        save_png(&render_at(&al.initial.doc, &al.exemplar_render, Stage::Prealign)?, &sidecar(o, "debug-initial.png"))?;
    }
    println!("wrote {}", o.display());
    Ok(())
}

fn cmd_optimize(a: OptimizeArgs) -> StageResult<()> {
    let mut config = resolve(&a.settings, a.exemplar.clone(), a.target, a.output)?;
    if config.exemplar_svg.as_os_str().is_empty() {
        // the exemplar is only needed for metrics
        config.exemplar_svg = a.initial.clone();
    }
    config.validate()?;
    let o = &config.output_svg;
    if a.settings.dry_run {
        let mut plan = vec![format!("load: initial {}, target {}", a.initial.display(), config.target_image.display())];
        plan.extend(config.plan().into_iter().skip(4));
        if a.exemplar.is_none() {
            plan.pop();
        }
        print_plan(&plan);
        return Ok(());
    }
    let initial = load_svg(&a.initial)?;
    let target = load_image(&config.target_image)?;
    let opt = pipeline::optimize(&initial, &target, &config.optim)?;
    write(o, opt.svg.as_bytes())?;
    let mut embed = None;
    let report = match &a.exemplar {
        Some(p) => {
            let exemplar = load_svg(p)?;
            embed = embedding_backend(config.backend.as_deref())?;
            Some(metrics(&exemplar, &opt.doc, &target, None, embed.as_mut())?)
        }
        None => None,
    };
    let model = report.as_ref().and_then(|r| r.model.as_deref());
    write(&sidecar(o, "provenance.json"), to_pretty_json(&optimization_provenance(&opt, model)).as_bytes())?;
    if let Some(r) = &report {
        let json = r.to_json().map_err(|e| StageError::new(Stage::Eval, e))?;
        write(&sidecar(o, "metrics.json"), json.as_bytes())?;
    }
    drop(embed);
    if a.settings.debug {
        save_png(&render_at(&initial, &target, Stage::Optimize)?, &sidecar(o, "debug-initial.png"))?;
        save_png(&render_at(&opt.doc, &target, Stage::Optimize)?, &sidecar(o, "debug-final.png"))?;
    }
    println!("wrote {}", o.display());
    Ok(())
}

fn cmd_render(a: RenderArgs) -> StageResult<()> {
    if a.size < 1 {
        return Err(config_error("--size must be at least 1".into()));
    }
    let doc = load_svg(&a.svg)?;
    let s = a.size as f64;
    let (w, h) = if doc.width >= doc.height {
        (a.size, ((s * doc.height / doc.width).round() as usize).max(1))
    } else {
        (((s * doc.width / doc.height).round() as usize).max(1), a.size)
    };
    let (img, _) = render(&doc, w, h, BACKGROUND).map_err(|e| StageError::new(Stage::Serialize, e))?;
    let out = a.output.unwrap_or_else(|| a.svg.with_extension("png"));
    save_png(&img, &out)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> StageResult<()> {
    let customized = load_svg(&a.svg)?;
    let exemplar = match &a.exemplar {
        Some(p) => load_svg(p)?,
        None => customized.clone(),
    };
    let target = load_image(&a.target)?;
    let mut embed = embedding_backend(a.backend.as_deref())?;
    let report = metrics(&exemplar, &customized, &target, a.prompt.as_deref(), embed.as_mut())?;
    let json = report.to_json().map_err(|e| StageError::new(Stage::Eval, e))?;
    if let Some(o) = &a.output {
        write(o, json.as_bytes())?;
    }
    print!("{json}");
    Ok(())
}
