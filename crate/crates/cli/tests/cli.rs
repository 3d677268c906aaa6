use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use svgcustom::matching::builtin_descriptor_grid;
use svgcustom::raster::render;
use svgcustom::svg::{serialize_svg, Rgb};
use svgcustom::synth;
use tempfile::TempDir;

const CONFIG: &str = r#"{"optim": {"iterations": 40, "render_size": 128}}"#;

struct Fixture {
    dir: TempDir,
    exemplar: PathBuf,
    target: PathBuf,
    config: PathBuf,
}

impl Fixture {
    /// Perturbed showcase scene on a 128 canvas.
    fn new() -> Fixture {
        let dir = tempfile::tempdir().unwrap();
        let (exemplar, perturbed) = synth::retarget_pair(4, 128.0);
        let f = Fixture {
            exemplar: dir.path().join("exemplar.svg"),
            target: dir.path().join("target.png"),
            config: dir.path().join("config.json"),
            dir,
        };
        std::fs::write(&f.exemplar, serialize_svg(&exemplar)).unwrap();
        render(&perturbed, 128, 128, Rgb::WHITE).unwrap().0.save_png(&f.target).unwrap();
        std::fs::write(&f.config, CONFIG).unwrap();
        f
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

fn svgcustom(args: &[&dyn AsRef<std::ffi::OsStr>]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_svgcustom"));
    for a in args {
        cmd.arg(a);
    }
    cmd.output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn align_then_optimize_equals_run() {
    let f = Fixture::new();
    let (run_out, init, opt_out) = (f.path("run.svg"), f.path("init.svg"), f.path("opt.svg"));
    let o = svgcustom(&[
        &"run",
        &"--config",
        &f.config,
        &"--exemplar",
        &f.exemplar,
        &"--target",
        &f.target,
        &"-o",
        &run_out,
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = svgcustom(&[
        &"align",
        &"--config",
        &f.config,
        &"--exemplar",
        &f.exemplar,
        &"--target",
        &f.target,
        &"-o",
        &init,
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = svgcustom(&[
        &"optimize",
        &"--config",
        &f.config,
        &"--initial",
        &init,
        &"--target",
        &f.target,
        &"--exemplar",
        &f.exemplar,
        &"-o",
        &opt_out,
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(std::fs::read(&run_out).unwrap(), std::fs::read(&opt_out).unwrap());
    assert_eq!(std::fs::read(f.path("run.metrics.json")).unwrap(), std::fs::read(f.path("opt.metrics.json")).unwrap());
    let prov = read_json(&f.path("run.provenance.json"));
    assert_eq!(prov["optimization"]["steps"], 40);
    assert_eq!(prov["config"]["match"]["tau"], 0.0625);
    let metrics = read_json(&f.path("run.metrics.json"));
    assert!(metrics["sim_cus"].as_f64().unwrap() >= 0.99);
}

#[test]
fn flags_override_the_config_file() {
    let f = Fixture::new();
    let out = f.path("out.svg");
    let o = svgcustom(&[
        &"run",
        &"--config",
        &f.config,
        &"--iterations",
        &"3",
        &"--tau",
        &"0.2",
        &"--lambda-start",
        &"0.02",
        &"--seed",
        &"9",
        &"--exemplar",
        &f.exemplar,
        &"--target",
        &f.target,
        &"-o",
        &out,
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let prov = read_json(&f.path("out.provenance.json"));
    assert_eq!(prov["optimization"]["steps"], 3);
    assert_eq!(prov["config"]["match"]["tau"], 0.2);
    assert_eq!(prov["config"]["optim"]["lambda_start"], 0.02);
    assert_eq!(prov["config"]["optim"]["render_size"], 128);
    assert_eq!(prov["seed"], 9);
}

#[test]
fn self_retarget_keeps_the_exemplar() {
    let dir = tempfile::tempdir().unwrap();
    let doc = synth::showcase(128.0);
    let (ex, target, out) = (dir.path().join("ex.svg"), dir.path().join("t.png"), dir.path().join("out.svg"));
    std::fs::write(&ex, serialize_svg(&doc)).unwrap();
    render(&doc, 128, 128, Rgb::WHITE).unwrap().0.save_png(&target).unwrap();
    let o = svgcustom(&[&"run", &"--iterations", &"20", &"--exemplar", &ex, &"--target", &target, &"-o", &out]);
    assert!(o.status.success(), "{}", stderr(&o));
    let prov = read_json(&dir.path().join("out.provenance.json"));
    let assignments = prov["matching"]["assignments"].as_array().unwrap();
    let identity = prov["paths"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|p| p["kind"] == "matched" && p["id"] == p["exemplar_id"])
        .count();
    assert!(10 * identity >= 9 * doc.paths.len(), "{identity} identity matches of {}", assignments.len());
    let metrics = read_json(&dir.path().join("out.metrics.json"));
    assert!(metrics["sim_cus"].as_f64().unwrap() >= 0.99, "{metrics}");
}

#[test]
fn missing_target_is_an_input_error_naming_the_path() {
    let f = Fixture::new();
    let missing = f.path("nope.png");
    let out = f.path("out.svg");
    let o = svgcustom(&[&"run", &"--exemplar", &f.exemplar, &"--target", &missing, &"-o", &out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains(&missing.display().to_string()), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn bad_settings_and_unreachable_backends() {
    let f = Fixture::new();
    let out = f.path("out.svg");
    let o = svgcustom(&[&"run", &"--tau", &"1.5", &"--exemplar", &f.exemplar, &"--target", &f.target, &"-o", &out]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("tau"));
    let o = svgcustom(&[&"run", &"--exemplar", &f.exemplar, &"--target", &f.target]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let o = svgcustom(&[
        &"run",
        &"--features-exemplar",
        &f.config,
        &"--exemplar",
        &f.exemplar,
        &"--target",
        &f.target,
        &"-o",
        &out,
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    // nothing listens on port 1
    let o = svgcustom(&[
        &"run",
        &"--config",
        &f.config,
        &"--backend",
        &"tcp://127.0.0.1:1",
        &"--exemplar",
        &f.exemplar,
        &"--target",
        &f.target,
        &"-o",
        &out,
    ]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    assert!(stderr(&o).contains("[backend]"), "{}", stderr(&o));
    std::fs::write(f.path("broken.json"), "{\"optim\": ").unwrap();
    let o = svgcustom(&[
        &"run",
        &"--config",
        &f.path("broken.json"),
        &"--exemplar",
        &f.exemplar,
        &"--target",
        &f.target,
        &"-o",
        &out,
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn unparsable_exemplar_is_an_input_error() {
    let f = Fixture::new();
    std::fs::write(f.path("bad.svg"), "<svg><path d=").unwrap();
    let o = svgcustom(&[&"run", &"--exemplar", &f.path("bad.svg"), &"--target", &f.target, &"-o", &f.path("o.svg")]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("bad.svg"));
}

#[test]
fn dry_run_prints_the_plan_and_writes_nothing() {
    let f = Fixture::new();
    let out = f.path("out.svg");
    let o = svgcustom(&[
        &"run",
        &"--dry-run",
        &"--debug",
        &"--config",
        &f.config,
        &"--window",
        &"3",
        &"--exemplar",
        &f.exemplar,
        &"--target",
        &f.target,
        &"-o",
        &out,
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let plan = String::from_utf8(o.stdout).unwrap();
    assert!(plan.contains("40 steps at 128 px"), "{plan}");
    assert!(plan.contains("window 3"), "{plan}");
    assert!(plan.contains("tau 0.0625"), "{plan}");
    assert!(plan.contains("out.metrics.json"), "{plan}");
    let written: Vec<_> = std::fs::read_dir(f.dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(written.len(), 3, "{written:?}");
}

#[test]
fn debug_writes_stage_images() {
    let f = Fixture::new();
    let out = f.path("out.svg");
    let o = svgcustom(&[
        &"run",
        &"--debug",
        &"--iterations",
        &"2",
        &"--exemplar",
        &f.exemplar,
        &"--target",
        &f.target,
        &"-o",
        &out,
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    for name in ["segments", "exemplar", "initial", "final"] {
        let p = f.path(&format!("out.debug-{name}.png"));
        let img = svgcustom::raster::Image::load_png(&p).unwrap();
        assert_eq!((img.width, img.height), (128, 128), "{name}");
    }
}

#[test]
fn render_is_byte_stable() {
    let f = Fixture::new();
    let (a, b) = (f.path("a.png"), f.path("b.png"));
    for p in [&a, &b] {
        let o = svgcustom(&[&"render", &f.exemplar, &"--size", &"512", &"-o", p]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let bytes = std::fs::read(&a).unwrap();
    assert_eq!(bytes, std::fs::read(&b).unwrap());
    let img = svgcustom::raster::Image::load_png(&a).unwrap();
    assert_eq!((img.width, img.height), (512, 512));
}

#[test]
fn eval_of_an_svg_against_its_render() {
    let f = Fixture::new();
    let png = f.path("self.png");
    let o = svgcustom(&[&"render", &f.exemplar, &"--size", &"128", &"-o", &png]);
    assert!(o.status.success());
    let report = f.path("report.json");
    let o = svgcustom(&[&"eval", &f.exemplar, &"--target", &png, &"-o", &report]);
    assert!(o.status.success(), "{}", stderr(&o));
    let printed: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(printed["sim_cus"], 1.0);
    assert_eq!(printed["sim_shape"], 1.0);
    assert!(printed["sim_exp"].is_null());
    assert_eq!(read_json(&report), printed);
}

#[test]
fn align_with_feature_grids_lists_each_component_once() {
    let f = Fixture::new();
    let exemplar = svgcustom::svg::parse_svg(&std::fs::read_to_string(&f.exemplar).unwrap()).unwrap();
    let target = svgcustom::raster::Image::load_png(&f.target).unwrap();
    let (ex_img, _) = render(&exemplar, 128, 128, Rgb::WHITE).unwrap();
    let (ge, gt) = (f.path("ex.fgrd"), f.path("t.fgrd"));
    builtin_descriptor_grid(&ex_img, 8).unwrap().write(&ge).unwrap();
    builtin_descriptor_grid(&target, 8).unwrap().write(&gt).unwrap();
    let init = f.path("init.svg");
    let o = svgcustom(&[
        &"align",
        &"--features-exemplar",
        &ge,
        &"--features-target",
        &gt,
        &"--exemplar",
        &f.exemplar,
        &"--target",
        &f.target,
        &"-o",
        &init,
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let prov = read_json(&f.path("init.provenance.json"));
    assert_eq!(prov["matching"]["descriptors"], "feature_grid");
    let n = prov["components"].as_array().unwrap().len();
    assert!(n > 0);
    let mut seen = vec![0; n];
    for a in prov["matching"]["assignments"].as_array().unwrap() {
        seen[a["component"].as_u64().unwrap() as usize] += 1;
    }
    for u in prov["matching"]["unmatched"].as_array().unwrap() {
        seen[u.as_u64().unwrap() as usize] += 1;
    }
    assert!(seen.iter().all(|&c| c == 1), "{seen:?}");
    let out = svgcustom::svg::parse_svg(&std::fs::read_to_string(&init).unwrap()).unwrap();
    assert_eq!(out.paths.len(), n);
}

#[test]
fn optimize_dry_run_and_missing_initial() {
    let f = Fixture::new();
    let out = f.path("o.svg");
    let o = svgcustom(&[&"optimize", &"--dry-run", &"--initial", &f.exemplar, &"--target", &f.target, &"-o", &out]);
    assert!(o.status.success(), "{}", stderr(&o));
    let plan = String::from_utf8(o.stdout).unwrap();
    assert!(plan.contains("o.provenance.json") && !plan.contains("metrics"), "{plan}");
    let missing = f.path("none.svg");
    let o = svgcustom(&[&"optimize", &"--initial", &missing, &"--target", &f.target, &"-o", &out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("none.svg"));
}
