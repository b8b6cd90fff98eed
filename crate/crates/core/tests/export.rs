use abc_core::abc::AbcSurface;
use abc_core::export::format::TrimCurve;
use abc_core::export::*;
use abc_core::scene::*;
use abc_core::weights::WeightMode;

fn surface(c: &SceneConfig) -> AbcSurface {
    build(c).unwrap().surface
}

fn plateau_square(n: usize, m: usize, r: u32) -> AbcSurface {
    surface(&square_scene(n, m, r, WeightMode::Plateau, true))
}

fn expected_degree(n: usize, m: usize, r: usize) -> usize {
    n * (2 * r + 1).max(r + n + m)
}

#[test]
fn square_without_inner_knots_has_one_cell_per_segment() {
    let a = surface(&square_scene(2, 1, 2, WeightMode::Plateau, false));
    let part = partition(&a).unwrap();
    assert_eq!(part.cells.len(), a.len() + 1);
    for l in 0..a.len() {
        assert_eq!(part.boundary_cells(l).count(), 1);
    }
    assert!(part.tiling_defect() < 1e-9);
}

#[test]
fn inner_ribbon_knot_splits_the_boundary_cell() {
    let a = plateau_square(2, 1, 2);
    let part = partition(&a).unwrap();
    assert_eq!(part.boundary_cells(0).count(), 2);
    assert_eq!(part.cells.len(), a.len() + 2);
    assert_eq!(part.levels.len(), 1);
    let lv = part.levels[0];
    assert!((lv.knot - 0.5).abs() < 1e-15);
    assert!(lv.straightness(&a.reparams[0]) < 1e-9);
}

#[test]
fn extracted_degrees_follow_the_formula() {
    for (n, m, r) in [(2, 1, 2), (3, 2, 3)] {
        let a = plateau_square(n, m, r);
        let ps = extract_all(&a, &partition(&a).unwrap()).unwrap();
        let d = expected_degree(n, m, r as usize);
        assert_eq!(max_degree(&ps), (d, d), "n={n} m={m} r={r}");
    }
}

#[test]
fn patches_match_direct_evaluation() {
    let a = plateau_square(2, 1, 2);
    let ps = extract_all(&a, &partition(&a).unwrap()).unwrap();
    let chk = check_patches(&a, &ps, 500, 0).unwrap();
    assert!(chk.max_relative_error < 1e-9, "{chk:?}");
    assert!(chk.min_denominator > 0.0);
    assert_eq!(chk.samples, 500 * ps.len());
}

#[test]
fn patches_agree_along_piece_edges() {
    let a = plateau_square(2, 1, 2);
    let ps = extract_all(&a, &partition(&a).unwrap()).unwrap();
    for p in &ps {
        let n = p.polygon.len();
        for i in 0..n {
            let (x, y) = (p.polygon[i], p.polygon[(i + 1) % n]);
            for t in [0.0, 0.3, 0.7] {
                let s = [x[0] + t * (y[0] - x[0]), x[1] + t * (y[1] - x[1])];
                let exact = a.eval(s).unwrap();
                assert!((p.eval(s) - exact).norm() < 1e-12 * exact.norm().max(1.0));
            }
        }
    }
}

#[test]
fn interior_plateau_patches_are_the_base() {
    let a = plateau_square(2, 1, 2);
    let part = partition(&a).unwrap();
    let interior = part
        .cells
        .iter()
        .position(|c| c.kind == CellKind::Interior)
        .unwrap();
    let ps = extract_all(&a, &part).unwrap();
    let inner: Vec<_> = ps.iter().filter(|p| p.cell == interior).collect();
    assert!(!inner.is_empty());
    for p in inner {
        assert!(p.ribbons.is_empty());
        for s in abc_core::export::partition::interior_samples(&p.polygon, 3) {
            assert!((p.eval(s) - a.base.eval3(s)).norm() < 1e-13);
        }
    }
}

#[test]
fn round_trip_is_evaluation_identical() {
    let a = plateau_square(2, 1, 2);
    let ps = extract_all(&a, &partition(&a).unwrap()).unwrap();
    for mode in [TrimMode::Parametric, TrimMode::Geometric, TrimMode::Hybrid] {
        let doc = ExportDoc::new(&a, &ps, mode).unwrap();
        let back = read_doc(&write_doc(&doc)).unwrap();
        assert_eq!(back.mode, mode);
        assert_eq!(back.patches.len(), ps.len());
        for (rec, p) in back.patches.iter().zip(&ps) {
            for s in abc_core::export::partition::interior_samples(&p.polygon, 2) {
                let d = (rec.eval(s) - p.eval(s)).norm();
                assert!(d < 1e-12 * p.eval(s).norm().max(1.0), "{d:e}");
            }
        }
    }
}

#[test]
fn trim_entries_follow_the_mode() {
    let a = plateau_square(2, 1, 2);
    let ps = extract_all(&a, &partition(&a).unwrap()).unwrap();
    let count = |mode| {
        let doc = ExportDoc::new(&a, &ps, mode).unwrap();
        let spatial: Vec<usize> = doc
            .patches
            .iter()
            .flat_map(|p| p.trim.iter())
            .filter_map(|t| match t {
                TrimCurve::Spatial { segment, .. } => Some(*segment),
                TrimCurve::Planar { .. } => None,
            })
            .collect();
        spatial
    };
    assert!(count(TrimMode::Parametric).is_empty());
    let geo = count(TrimMode::Geometric);
    for l in 0..a.len() {
        assert!(geo.contains(&l));
    }
    assert!(count(TrimMode::Hybrid).iter().all(|l| l % 2 == 0));
}

#[test]
fn spatial_curves_are_ribbon_boundaries_and_lie_on_the_blend() {
    let a = plateau_square(2, 1, 2);
    let ps = extract_all(&a, &partition(&a).unwrap()).unwrap();
    let doc = ExportDoc::new(&a, &ps, TrimMode::Geometric).unwrap();
    assert_eq!(doc.curves.len(), a.len());
    for c in &doc.curves {
        let r = &a.ribbons[c.segment].surface;
        for i in 0..=10 {
            let u = i as f64 / 10.0;
            let on_ribbon = r.eval3([u, 0.0]);
            assert!((c.eval(u) - on_ribbon).norm() < 1e-13);
            let s = a.trim.as_ref().unwrap().boundary_point(c.segment, u).unwrap();
            assert!((a.eval(s).unwrap() - c.eval(u)).norm() < 1e-9);
        }
    }
}

#[test]
fn emit_writes_exchange_file_and_mesh() {
    let a = plateau_square(2, 1, 2);
    let ps = extract_all(&a, &partition(&a).unwrap()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("square.abc");
    let doc = emit(&a, &ps, TrimMode::Hybrid, &path, 4).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("ABC-PATCHES 1\n"));
    assert_eq!(read_doc(&text).unwrap(), doc);
    let obj = std::fs::read_to_string(path.with_extension("obj")).unwrap();
    assert!(obj.lines().any(|l| l.starts_with("v ")));
    assert!(obj.lines().any(|l| l.starts_with("vn ")));
    assert!(obj.lines().any(|l| l.starts_with("f ")));
}

#[test]
fn malformed_exchange_file_reports_the_line() {
    let a = plateau_square(2, 1, 2);
    let ps = extract_all(&a, &partition(&a).unwrap()).unwrap();
    let text = write_doc(&ExportDoc::new(&a, &ps, TrimMode::Parametric).unwrap());
    let broken = text.replacen("degree", "degre", 1);
    let e = read_doc(&broken).unwrap_err().to_string();
    assert!(e.contains("line"), "{e}");
}

#[test]
fn cylinder_shared_arc_has_one_boundary_cell_per_ribbon_span() {
    let [_, small] = cylinder_scenes();
    let a = surface(&small);
    let part = partition(&a).unwrap();
    assert_eq!(part.boundary_cells(0).count(), 10);
    assert!(part.tiling_defect() < 1e-9);
    for lv in part.levels.iter().filter(|l| l.segment == 0) {
        assert!(lv.straightness(&a.reparams[0]) < 1e-9);
    }
}
