use proptest::prelude::*;
use svgcustom::geom::Point;
use svgcustom::raster::{render, Image};
use svgcustom::segment::{connected_components, default_min_area, exemplar_segments, DEFAULT_COLOR_TOL};
use svgcustom::svg::{Rgb, SvgDoc};
use svgcustom::synth;

#[test]
fn rendered_circle_edge_points_lie_on_the_circle() {
    let (c, r) = (Point::new(61.3, 66.8), 37.4);
    let doc = SvgDoc::new(128.0, 128.0, vec![synth::circle("c", c, r, Rgb::new(0.1, 0.5, 0.8))]).unwrap();
    let (img, _) = render(&doc, 128, 128, Rgb::WHITE).unwrap();
    let comps = connected_components(&img, DEFAULT_COLOR_TOL, default_min_area(128, 128));
    assert_eq!(comps.len(), 1);
    let comp = &comps[0];
    assert!(comp.mean_color.max_diff(Rgb::new(0.1, 0.5, 0.8)) < 1e-12);
    assert!(comp.edge_points.len() > 100);
    // the four-arc cubic circle deviates from a true circle by about 2.7e-4 r
    let worst = comp.edge_points.iter().map(|p| (p.dist(c) - r).abs()).fold(0.0, f64::max);
    assert!(worst < 0.03, "edge point off the circle by {worst}");
    assert!((comp.centroid.dist(c)) < 0.05);
    let area = std::f64::consts::PI * r * r;
    assert!((comp.area as f64 - area).abs() / area < 0.01);
}

#[test]
fn overlapping_paths_split_on_their_visible_regions() {
    let doc = SvgDoc::new(
        100.0,
        100.0,
        vec![
            synth::rect("back", 10.0, 10.0, 70.0, 70.0, Rgb::new(0.9, 0.2, 0.1)),
            synth::circle("front", Point::new(60.0, 60.0), 25.0, Rgb::new(0.1, 0.3, 0.9)),
        ],
    )
    .unwrap();
    let (img, _) = render(&doc, 100, 100, Rgb::WHITE).unwrap();
    let comps = connected_components(&img, DEFAULT_COLOR_TOL, default_min_area(100, 100));
    assert_eq!(comps.len(), 2);
    let labels = exemplar_segments(&doc, 100, 100);
    for comp in &comps {
        let path = if comp.mean_color.0[0] > 0.5 { 0 } else { 1 };
        let agree = (0..100 * 100).filter(|&i| comp.mask.data[i] && labels.labels[i] == path).count();
        assert!(agree as f64 / comp.area as f64 > 0.99);
    }
}

fn rect_image() -> impl Strategy<Value = Image> {
    let rect = (0usize..24, 0usize..24, 1usize..12, 1usize..12, 0usize..4);
    prop::collection::vec(rect, 1..6).prop_map(|rects| {
        let palette =
            [Rgb::new(1.0, 0.0, 0.0), Rgb::new(0.0, 0.6, 0.0), Rgb::new(0.0, 0.0, 1.0), Rgb::new(0.2, 0.2, 0.2)];
        let mut img = Image::filled(32, 32, Rgb::WHITE);
        for (x, y, w, h, c) in rects {
            for yy in y..(y + h).min(32) {
                for xx in x..(x + w).min(32) {
                    img.set_rgb(xx, yy, palette[c]);
                }
            }
        }
        img
    })
}

proptest! {
    #[test]
    fn components_are_disjoint_and_respect_min_area(img in rect_image(), min_area in 1usize..8) {
        let comps = connected_components(&img, DEFAULT_COLOR_TOL, min_area);
        let mut seen = vec![false; 32 * 32];
        let mut total = 0;
        for (k, c) in comps.iter().enumerate() {
            prop_assert_eq!(c.id, k);
            prop_assert_eq!(c.area, c.mask.count());
            prop_assert!(c.area >= min_area);
            prop_assert!(c.boundary.len() >= 4);
            for (i, &m) in c.mask.data.iter().enumerate() {
                if m {
                    prop_assert!(!seen[i]);
                    seen[i] = true;
                }
            }
            total += c.area;
        }
        prop_assert!(total <= 32 * 32);
        prop_assert!(comps.windows(2).all(|w| w[0].area >= w[1].area));
    }

    #[test]
    fn contour_is_clockwise_in_y_down_and_encloses_the_mask(img in rect_image()) {
        // counter-clockwise on screen is clockwise in y-down coordinates: negative shoelace sum
        for c in connected_components(&img, DEFAULT_COLOR_TOL, 1) {
            let b = &c.boundary;
            let area2: f64 = (0..b.len()).map(|i| b[i].cross(b[(i + 1) % b.len()])).sum();
            prop_assert!(area2 < 0.0);
            prop_assert!(-area2 / 2.0 >= c.area as f64);
        }
    }
}
