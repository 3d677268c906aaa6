use proptest::prelude::*;
use svgcustom::matching::*;
use svgcustom::raster::{render, Image};
use svgcustom::segment::{connected_components, default_min_area, LabelMap, DEFAULT_COLOR_TOL};
use svgcustom::svg::Rgb;
use svgcustom::synth;

/// Double-double arithmetic: an unevaluated sum hi + lo carrying ~106 bits.
#[derive(Clone, Copy, Debug)]
struct Dd(f64, f64);

impl Dd {
    fn from(x: f64) -> Dd {
        Dd(x, 0.0)
    }
    fn two_sum(a: f64, b: f64) -> Dd {
        let s = a + b;
        let bb = s - a;
        Dd(s, (a - (s - bb)) + (b - bb))
    }
    fn add(self, o: Dd) -> Dd {
        let s = Dd::two_sum(self.0, o.0);
        let t = Dd::two_sum(self.1, o.1);
        let r = Dd::two_sum(s.0, s.1 + t.0);
        Dd::two_sum(r.0, r.1 + t.1)
    }
    fn mul(self, o: Dd) -> Dd {
        let p = self.0 * o.0;
        let e = self.0.mul_add(o.0, -p);
        Dd::two_sum(p, e + self.0 * o.1 + self.1 * o.0)
    }
    fn div(self, o: Dd) -> Dd {
        let q1 = self.0 / o.0;
        let r = self.add(o.mul(Dd::from(-q1)));
        let q2 = r.0 / o.0;
        let r = r.add(o.mul(Dd::from(-q2)));
        let q3 = r.0 / o.0;
        Dd::two_sum(q1, q2).add(Dd::from(q3))
    }
    /// Taylor series; fine for |x| <= 1.
    fn exp(x: f64) -> Dd {
        let x = Dd::from(x);
        let mut term = Dd::from(1.0);
        let mut sum = Dd::from(1.0);
        for k in 1..40 {
            term = term.mul(x).div(Dd::from(k as f64));
            sum = sum.add(term);
        }
        sum
    }
}

fn dual_softmax_oracle(s: &[[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let e = s.map(|r| r.map(Dd::exp));
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            let row = e[i][j].div(e[i][0].add(e[i][1]));
            let col = e[i][j].div(e[0][j].add(e[1][j]));
            out[i][j] = row.mul(col).0;
        }
    }
    out
}

#[test]
fn two_by_two_matches_extended_precision_oracle() {
    let s = [[0.9, 0.1], [0.2, 0.8]];
    let got = dual_softmax(&SimilarityMatrix::from_rows(&s.map(|r| r.to_vec())).unwrap());
    let want = dual_softmax_oracle(&s);
    for i in 0..2 {
        for j in 0..2 {
            let rel = (got.get(i, j) - want[i][j]).abs() / want[i][j];
            assert!(rel < 1e-14, "({i},{j}): {} vs {}", got.get(i, j), want[i][j]);
        }
    }
    let off = got.get(0, 1).max(got.get(1, 0));
    assert!(got.get(0, 0) > off && got.get(1, 1) > off);
}

fn matrix() -> impl Strategy<Value = SimilarityMatrix> {
    (1usize..7, 1usize..7).prop_flat_map(|(n, m)| {
        prop::collection::vec(-1.0f64..1.0, n * m).prop_map(move |data| SimilarityMatrix { rows: n, cols: m, data })
    })
}

proptest! {
    #[test]
    fn softmax_factor_sums_and_product_bound(sim in matrix()) {
        let (row, col) = softmax_factors(&sim);
        let sim2 = dual_softmax(&sim);
        for i in 0..sim.rows {
            let s: f64 = (0..sim.cols).map(|j| row.get(i, j)).sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
        }
        for j in 0..sim.cols {
            let s: f64 = (0..sim.rows).map(|i| col.get(i, j)).sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
        }
        for k in 0..sim2.data.len() {
            prop_assert!(sim2.data[k] > 0.0 && sim2.data[k] <= 1.0);
            prop_assert!(sim2.data[k] <= row.data[k].min(col.data[k]));
        }
    }

    #[test]
    fn global_shift_keeps_column_argmax(sim in matrix(), shift in -5.0f64..5.0) {
        let shifted = SimilarityMatrix { data: sim.data.iter().map(|v| v + shift).collect(), ..sim.clone() };
        let a = extract_matches(&dual_softmax(&sim), 0.0);
        let b = extract_matches(&dual_softmax(&shifted), 0.0);
        let paths = |m: &MatchSet| m.assignments.iter().map(|x| (x.component, x.path)).collect::<Vec<_>>();
        prop_assert_eq!(paths(&a), paths(&b));
    }

    #[test]
    fn extraction_is_a_deterministic_partition(sim in matrix(), tau in 0.01f64..0.99) {
        let sim2 = dual_softmax(&sim);
        let a = extract_matches(&sim2, tau);
        prop_assert_eq!(&a, &extract_matches(&sim2, tau));
        prop_assert!(a.is_total(sim.cols));
        prop_assert!(a.assignments.iter().all(|x| x.score > tau));
    }
}

#[test]
fn rotated_image_permutes_descriptor_cells() {
    let mut rng = synth::rng(3);
    let doc = synth::random_scene(&mut rng, 64.0);
    let (img, _) = render(&doc, 64, 64, Rgb::WHITE).unwrap();
    // new(x, y) = old(y, n-1-x): a quarter turn
    let n = 64;
    let mut rot = Image::new(n, n, 3);
    for y in 0..n {
        for x in 0..n {
            rot.set_rgb(x, y, img.rgb(y, n - 1 - x));
        }
    }
    let a = builtin_descriptor_grid(&img, 8).unwrap();
    let b = builtin_descriptor_grid(&rot, 8).unwrap();
    let g = a.gw;
    for r in 0..g {
        for c in 0..g {
            let old = a.cell(g - 1 - c, r);
            let new = b.cell(r, c);
            for k in 0..3 {
                assert!((old[k] - new[k]).abs() < 1e-6);
            }
            assert!((new[3] - (0.25 - old[4])).abs() < 1e-7);
            assert!((new[4] - old[3]).abs() < 1e-7);
        }
    }
}

#[test]
fn two_color_card_separates_regions() {
    let (w, h) = (32, 16);
    let mut img = Image::filled(w, h, Rgb::new(1.0, 0.0, 0.0));
    for y in 0..h {
        for x in w / 2..w {
            img.set_rgb(x, y, Rgb::new(0.0, 0.0, 1.0));
        }
    }
    let labels = LabelMap {
        width: w,
        height: h,
        labels: (0..w * h).map(|i| if i % w < w / 2 { 0 } else { 1 }).collect(),
        empty: vec![],
    };
    let grid = builtin_descriptor_grid(&img, 4).unwrap();
    let f = pool_features(&grid, &labels, 2).unwrap();
    // direct computation from published L*a*b* of sRGB red and blue; mean cell
    // centers are x = 0.25 and 0.75 of the width, y = 0.5
    let red = [(53.2408 - 50.0) / 50.0, 80.0925 / 50.0, 67.2032 / 50.0, 0.0625, 0.125];
    let blue = [(32.2970 - 50.0) / 50.0, 79.1875 / 50.0, -107.8602 / 50.0, 0.1875, 0.125];
    for (got, want) in f.iter().zip([red, blue]) {
        let got = got.as_ref().unwrap();
        for k in 0..5 {
            assert!((got[k] - want[k]).abs() < 1e-4, "{got:?} vs {want:?}");
        }
    }
    let cos = |a: &[f64], b: &[f64]| {
        let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        d / (a.iter().map(|x| x * x).sum::<f64>().sqrt() * b.iter().map(|x| x * x).sum::<f64>().sqrt())
    };
    let sim = cosine_similarity_matrix(&f, &f).unwrap();
    assert!((sim.get(0, 1) - cos(&red, &blue)).abs() < 1e-4);
    assert!(sim.get(0, 1) < sim.get(0, 0) && sim.get(0, 1) < sim.get(1, 1));
}

#[test]
fn self_match_is_identity_on_random_scenes() {
    let mut rng = synth::rng(21);
    for _ in 0..10 {
        let doc = synth::random_scene(&mut rng, 128.0);
        let (img, _) = render(&doc, 128, 128, Rgb::WHITE).unwrap();
        let comps = connected_components(&img, DEFAULT_COLOR_TOL, default_min_area(128, 128));
        let labels = LabelMap::from_components(&comps, 128, 128);
        let grid = builtin_descriptor_grid(&img, DEFAULT_BUILTIN_PATCH).unwrap();
        let f = pool_features(&grid, &labels, comps.len()).unwrap();
        let m = match_features(&f, &f, DEFAULT_TAU).unwrap();
        for j in 0..comps.len() {
            if f[j].is_none() {
                continue;
            }
            assert_eq!(m.matches.path_for(j), Some(j), "component {j} of {}", comps.len());
            for i in (0..comps.len()).filter(|&i| i != j) {
                assert!(m.sim2.get(j, j) > m.sim2.get(i, j));
            }
        }
    }
}

#[test]
fn fgrd_files_round_trip_through_disk() {
    let grid = builtin_descriptor_grid(&Image::filled(20, 12, Rgb::new(0.3, 0.3, 0.9)), 4).unwrap();
    let path = std::env::temp_dir().join(format!("fgrd-{}.bin", std::process::id()));
    grid.write(&path).unwrap();
    let back = FeatureGrid::read(&path).unwrap();
    std::fs::remove_file(&path).unwrap();
    assert_eq!(back, grid);
    assert_eq!((back.gh, back.gw, back.patch), (3, 5, 4));
}
