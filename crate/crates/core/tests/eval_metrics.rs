use proptest::prelude::*;
use rand::Rng;
use svgcustom::eval::*;
use svgcustom::geom::{Affine, Point};
use svgcustom::raster::{render, Image};
use svgcustom::svg::{Rgb, SvgDoc};
use svgcustom::{synth, Error};

fn brute_hausdorff(a: &[Point], b: &[Point]) -> f64 {
    let directed = |x: &[Point], y: &[Point]| {
        x.iter().map(|p| y.iter().map(|q| p.dist(*q)).fold(f64::INFINITY, f64::min)).fold(0.0, f64::max)
    };
    directed(a, b).max(directed(b, a))
}

#[test]
fn hausdorff_matches_brute_force_on_random_pairs() {
    let mut rng = synth::rng(51);
    for i in 0..100 {
        let (n, m) = (rng.gen_range(1..80), rng.gen_range(1..80));
        let a = synth::point_cloud(&mut rng, n, 1.0, 1.0);
        let mut b = synth::point_cloud(&mut rng, m, 1.0, 1.0);
        if i % 4 == 0 {
            // clustered sets and shared x coordinates
            b = b.iter().map(|p| Point::new((p.x * 4.0).round() / 4.0, p.y * 0.1)).collect();
        }
        let (fast, slow) = (hausdorff(&a, &b).unwrap(), brute_hausdorff(&a, &b));
        assert!((fast - slow).abs() < 1e-12, "pair {i}: {fast} vs {slow}");
    }
}

#[test]
fn hausdorff_closed_forms_and_errors() {
    let a = [Point::new(0.0, 0.0)];
    let b = [Point::new(0.3, 0.4)];
    assert!((hausdorff(&a, &b).unwrap() - 0.5).abs() < 1e-15);
    let p = [Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(0.5, 2.0)];
    let q = [p[2], p[0], p[1], p[0]];
    assert_eq!(hausdorff(&p, &q).unwrap(), 0.0);
    assert!(matches!(hausdorff(&[], &b), Err(Error::Contract(_))));
    assert!(matches!(hausdorff(&a, &[Point::new(f64::NAN, 0.0)]), Err(Error::Contract(_))));
}

fn cloud() -> impl Strategy<Value = Vec<Point>> {
    proptest::collection::vec((-1.0..1.0f64, -1.0..1.0f64).prop_map(|(x, y)| Point::new(x, y)), 1..30)
}

proptest! {
    #[test]
    fn hausdorff_is_a_metric_on_sets(a in cloud(), b in cloud(), c in cloud()) {
        let (ab, ba) = (hausdorff(&a, &b).unwrap(), hausdorff(&b, &a).unwrap());
        prop_assert_eq!(ab, ba);
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(hausdorff(&a, &a).unwrap(), 0.0);
        let (bc, ac) = (hausdorff(&b, &c).unwrap(), hausdorff(&a, &c).unwrap());
        prop_assert!(ac <= ab + bc + 1e-12);
        if ab == 0.0 {
            // equal as sets: every point has a twin
            prop_assert!(a.iter().all(|p| b.contains(p)) && b.iter().all(|p| a.contains(p)));
        }
    }
}

fn two_squares(dx: f64) -> SvgDoc {
    SvgDoc::new(
        200.0,
        100.0,
        vec![
            synth::rect("a", 10.0 + dx, 10.0, 50.0 + dx, 50.0, Rgb::new(1.0, 0.0, 0.0)),
            synth::rect("b", 60.0 + dx, 40.0, 90.0 + dx, 90.0, Rgb::new(0.0, 0.0, 1.0)),
        ],
    )
    .unwrap()
}

#[test]
fn shape_similarity_uses_unit_coordinates() {
    assert_eq!(shape_similarity(&two_squares(0.0), &two_squares(0.0)).unwrap(), 1.0);
    // a tenth of the width
    let s = shape_similarity(&two_squares(0.0), &two_squares(20.0)).unwrap();
    assert!((s - 0.9).abs() < 1e-12, "{s}");
    // each doc is normalized by its own canvas
    let mut big = two_squares(0.0);
    big.width *= 2.0;
    big.height *= 2.0;
    for p in big.paths.iter_mut() {
        p.points.iter_mut().for_each(|q| *q = *q * 2.0);
    }
    assert!((shape_similarity(&two_squares(0.0), &big).unwrap() - 1.0).abs() < 1e-12);
}

fn circle_doc() -> SvgDoc {
    SvgDoc::new(100.0, 100.0, vec![synth::circle("c", Point::new(50.0, 50.0), 30.0, Rgb::new(0.2, 0.6, 0.3))]).unwrap()
}

#[test]
fn smoothness_closed_forms() {
    assert_eq!(smoothness(&two_squares(0.0), 64).unwrap(), 1.0);
    assert_eq!(smoothness(&SvgDoc::new(10.0, 10.0, vec![]).unwrap(), 64).unwrap(), 1.0);
    let s = smoothness(&circle_doc(), DEFAULT_SMOOTHNESS_SAMPLES).unwrap();
    assert!(s > 0.99 && s <= 1.0, "{s}");
    assert!(matches!(smoothness(&circle_doc(), 8), Err(Error::Contract(_))));
}

#[test]
fn a_wiggly_path_lowers_smoothness() {
    let mut rng = synth::rng(52);
    let smooth = circle_doc();
    let mut worse = smooth.clone();
    worse.paths.push(synth::blob(&mut rng, "z", Point::new(40.0, 60.0), 25.0, 9, 0.5, Rgb::new(0.9, 0.1, 0.1)));
    let (a, b) = (
        smoothness(&smooth, DEFAULT_SMOOTHNESS_SAMPLES).unwrap(),
        smoothness(&worse, DEFAULT_SMOOTHNESS_SAMPLES).unwrap(),
    );
    assert!(b < a, "{b} vs {a}");
}

proptest! {
    #[test]
    fn smoothness_is_similarity_invariant(
        seed in 0u64..1000,
        angle in -3.1..3.1f64,
        scale in 0.3..3.0f64,
        tx in -50.0..50.0f64,
        ty in -50.0..50.0f64,
    ) {
        let doc = synth::random_scene(&mut synth::rng(seed), 100.0);
        let xf = Affine::similarity(angle, scale, Point::new(tx, ty));
        let moved = SvgDoc::new(
            doc.width * scale,
            doc.height * scale,
            doc.paths.iter().map(|p| p.transformed(&xf)).collect(),
        )
        .unwrap();
        let (a, b) = (smoothness(&doc, 128).unwrap(), smoothness(&moved, 128).unwrap());
        prop_assert!((a - b).abs() < 1e-6 * a, "{} vs {}", a, b);
    }
}

#[test]
fn sim_cus_closed_forms() {
    let black = Image::filled(8, 8, Rgb::new(0.0, 0.0, 0.0));
    let white = Image::filled(8, 8, Rgb::WHITE);
    assert_eq!(sim_cus(&black, &white).unwrap(), 0.0);
    assert_eq!(sim_cus(&white, &white).unwrap(), 1.0);
    let mut half = black.clone();
    for y in 0..4 {
        for x in 0..8 {
            half.set_rgb(x, y, Rgb::WHITE);
        }
    }
    assert_eq!(sim_cus(&black, &half).unwrap(), 0.5);
    assert_eq!(sim_cus(&half, &black).unwrap(), 0.5);
    assert!(matches!(sim_cus(&black, &Image::filled(4, 8, Rgb::WHITE)), Err(Error::Contract(_))));
    // transparent pixels count as white
    let clear = Image::new(8, 8, 4);
    assert_eq!(sim_cus(&clear, &white).unwrap(), 1.0);
}

#[test]
fn cosine_edge_cases() {
    assert!((cosine(&[1.0, 2.0], &[2.0, 4.0]).unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(cosine(&[1.0, 0.0], &[0.0, 3.0]).unwrap(), 0.0);
    assert_eq!(cosine(&[0.0, 0.0], &[0.0, 3.0]).unwrap(), 0.0);
    assert!(cosine(&[1.0], &[1.0, 2.0]).is_err());
}

#[test]
fn reports_without_a_backend() {
    let ex = two_squares(0.0);
    let cu = two_squares(20.0);
    let (target, _) = render(&ex, 200, 100, Rgb::WHITE).unwrap();
    let (rendered, _) = render(&cu, 200, 100, Rgb::WHITE).unwrap();
    let inputs = EvalInputs {
        exemplar: &ex,
        customized: &cu,
        target: &target,
        rendered: &rendered,
        exemplar_render: Some(&target),
        prompt: Some("two squares"),
    };
    let r = evaluate(&inputs, None).unwrap();
    assert!((r.sim_shape - 0.9).abs() < 1e-12);
    assert_eq!((r.smoothness, r.exemplar_smoothness), (1.0, 1.0));
    assert!(r.sim_cus < 1.0 && r.sim_cus > 0.0);
    assert_eq!((r.sim_exp, r.sim_clip), (None, None));
    let json: serde_json::Value = serde_json::from_str(&r.to_json().unwrap()).unwrap();
    assert!(json["sim_exp"].is_null());
    assert!(json.get("model").is_none());
    let csv = metrics_csv(&[("a".into(), r.clone())]).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "name,sim_shape,smoothness,exemplar_smoothness,sim_cus,sim_exp,sim_clip");
    assert!(lines[1].starts_with("a,") && lines[1].ends_with(",,"));
}
