use std::sync::OnceLock;

use abc_core::abc::{verify_contact, AbcSurface, Level, VerifyOptions};
use abc_core::bezier::Rect;
use abc_core::export::partition::bbox;
use abc_core::export::{merged_grid, partition, pieces, Piece};
use abc_core::fit::{fit_reparam, CorrespondenceSet, FitOptions};
use abc_core::knots::KnotVector;
use abc_core::scene::*;
use abc_core::trim::{point_in_polygon, polygon_area};
use abc_core::weights::WeightMode;
use proptest::prelude::*;

fn cached(cell: &'static OnceLock<AbcSurface>, make: fn() -> SceneConfig) -> &'static AbcSurface {
    cell.get_or_init(|| build(&make()).expect("example builds").surface)
}

fn square_plain() -> &'static AbcSurface {
    static S: OnceLock<AbcSurface> = OnceLock::new();
    cached(&S, || square_scene(2, 1, 2, WeightMode::Plain, false))
}

fn square_plateau() -> &'static AbcSurface {
    static S: OnceLock<AbcSurface> = OnceLock::new();
    cached(&S, || square_scene(2, 1, 2, WeightMode::Plateau, true))
}

fn fender() -> &'static AbcSurface {
    static S: OnceLock<AbcSurface> = OnceLock::new();
    cached(&S, fender_scene)
}

fn triangle() -> &'static AbcSurface {
    static S: OnceLock<AbcSurface> = OnceLock::new();
    cached(&S, || triangle_scene(true))
}

fn square_pieces() -> &'static (Vec<Piece>, Vec<f64>) {
    static P: OnceLock<(Vec<Piece>, Vec<f64>)> = OnceLock::new();
    P.get_or_init(|| {
        let a = square_plateau();
        let part = partition(a).unwrap();
        let areas = part.cells.iter().map(|c| c.area()).collect();
        (pieces(a, &part), areas)
    })
}

fn scenes() -> [&'static AbcSurface; 4] {
    [square_plain(), square_plateau(), fender(), triangle()]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn traced_boundary_satisfies_the_implicit_equations(which in 0usize..4, seg in 0usize..6, u in 0.0f64..=1.0) {
        let a = scenes()[which];
        let j = seg % a.len();
        let lp = a.trim.as_ref().unwrap();
        let s = lp.boundary_point(j, u).unwrap();
        let k = &a.reparams[j];
        prop_assert!((k.p.eval(s) - u).abs() < 1e-9);
        prop_assert!(k.q.eval(s).abs() < 1e-10);
    }

    #[test]
    fn membership_agrees_with_traced_polygon(x in -0.2f64..1.2, y in -0.2f64..1.2) {
        let lp = square_plain().trim.as_ref().unwrap();
        let poly = lp.polygon();
        let margin = x.abs().min(y.abs()).min((1.0 - x).abs()).min((1.0 - y).abs());
        prop_assume!(margin > 1e-8);
        prop_assert_eq!(lp.contains([x, y]), point_in_polygon(&poly, [x, y]));
    }

    #[test]
    fn weights_vanish_on_the_boundary(which in 0usize..4, seg in 0usize..6, u in 0.0f64..=1.0) {
        let a = scenes()[which];
        let j = seg % a.len();
        let s = a.trim.as_ref().unwrap().boundary_point(j, u).unwrap();
        let (w, wl) = a.weights.eval(s);
        prop_assert!(w.abs() < 1e-10, "{w:e}");
        for (l, x) in wl.iter().enumerate() {
            if l != j {
                prop_assert!(x.abs() < 1e-10, "w_{l} = {x:e}");
            }
        }
    }

    #[test]
    fn blend_lies_in_the_box_of_its_terms(which in 0usize..4, x in 0.0f64..=1.0, y in 0.0f64..=1.0) {
        let a = scenes()[which];
        let lp = a.trim.as_ref().unwrap();
        let poly = lp.polygon();
        let (lo, hi) = bbox(&poly);
        let s = [lo[0] + x * (hi[0] - lo[0]), lo[1] + y * (hi[1] - lo[1])];
        prop_assume!(point_in_polygon(&poly, s));
        let (w, wl) = a.weights.eval(s);
        prop_assume!(w >= 0.0 && wl.iter().all(|x| *x >= 0.0) && w + wl.iter().sum::<f64>() > 1e-12);
        let mut terms = vec![a.base.eval3(s)];
        for (l, k) in a.reparams.iter().enumerate() {
            if wl[l] > 0.0 {
                let t = k.eval(s);
                terms.push(a.ribbons[l].surface.eval3(t));
            }
        }
        let p = a.eval(s).unwrap();
        for c in 0..3 {
            let lo = terms.iter().map(|t| t[c]).fold(f64::INFINITY, f64::min);
            let hi = terms.iter().map(|t| t[c]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(p[c] >= lo - 1e-12 && p[c] <= hi + 1e-12);
        }
    }

    #[test]
    fn blend_derivatives_match_finite_differences(which in 0usize..4, x in 0.05f64..0.95, y in 0.05f64..0.95) {
        let a = scenes()[which];
        let poly = a.trim.as_ref().unwrap().polygon();
        let (lo, hi) = bbox(&poly);
        let s = [lo[0] + x * (hi[0] - lo[0]), lo[1] + y * (hi[1] - lo[1])];
        let h = 1e-5;
        let near = [[h, 0.0], [-h, 0.0], [0.0, h], [0.0, -h]].iter().all(|d| point_in_polygon(&poly, [s[0] + 2.0 * d[0], s[1] + 2.0 * d[1]]));
        prop_assume!(near && a.weights.denominator(s) > 1e-6);
        let j = a.eval_jet(s).unwrap();
        let f = |d: [f64; 2]| a.eval([s[0] + d[0], s[1] + d[1]]).unwrap();
        let du = (f([h, 0.0]) - f([-h, 0.0])) / (2.0 * h);
        let dv = (f([0.0, h]) - f([0.0, -h])) / (2.0 * h);
        prop_assert!((du - j.du).norm() <= 1e-5 * j.du.norm().max(1.0));
        prop_assert!((dv - j.dv).norm() <= 1e-5 * j.dv.norm().max(1.0));
    }

    #[test]
    fn plateau_is_exact_beyond_the_stripes(iu in 0usize..64, iv in 0usize..64) {
        let ws = &square_plateau().weights;
        let (bu, bv) = ws.breakpoints();
        let central = |b: &[f64]| -> Vec<(f64, f64)> {
            b.windows(2).filter(|w| w[0] >= 0.3 && w[1] <= 0.7).map(|w| (w[0], w[1])).collect()
        };
        let (cu, cv) = (central(&bu), central(&bv));
        prop_assume!(!cu.is_empty() && !cv.is_empty());
        let ((u0, u1), (v0, v1)) = (cu[iu % cu.len()], cv[iv % cv.len()]);
        let rect = Rect::new(u0, u1, v0, v1);
        let widths = [0.1; 4];
        for (f, h) in ws.w.factors().iter().zip(widths) {
            let (nu, nv) = f.spline.shape();
            for i in 0..nu {
                for j in 0..nv {
                    let (su, sv) = (f.spline.knots_u().support(i), f.spline.knots_v().support(j));
                    if su.0 >= 0.3 && su.1 <= 0.7 && sv.0 >= 0.3 && sv.1 <= 0.7 {
                        prop_assert_eq!(f.spline.coeff(i, j), h);
                    }
                }
            }
        }
        let w = ws.w.bezier_on(rect).unwrap();
        let level = ws.plateau_value.unwrap();
        prop_assert!(w.coeffs.iter().all(|c| (c - level).abs() <= 4.0 * f64::EPSILON * level), "{:?} vs {level}", w.coeffs);
        for wl in &ws.w_per_ribbon {
            prop_assert!(wl.bezier_on(rect).unwrap().is_zero());
        }
    }

    #[test]
    fn pieces_do_not_cross_breakpoints(index in 0usize..4096) {
        let (ps, _) = square_pieces();
        let p = &ps[index % ps.len()];
        let (gu, gv) = merged_grid(square_plateau());
        let (lo, hi) = bbox(&p.polygon);
        prop_assert!(lo[0] >= p.grid.u0 && hi[0] <= p.grid.u1 && lo[1] >= p.grid.v0 && hi[1] <= p.grid.v1);
        prop_assert!(!gu.iter().any(|b| *b > lo[0] + 1e-12 && *b < hi[0] - 1e-12));
        prop_assert!(!gv.iter().any(|b| *b > lo[1] + 1e-12 && *b < hi[1] - 1e-12));
    }

    #[test]
    fn enlarging_the_space_never_worsens_the_fit(
        data in prop::collection::vec((0.0f64..=1.0, 0.0f64..=1.0, -1.0f64..1.0, -1.0f64..1.0), 40..80),
    ) {
        let corr = CorrespondenceSet {
            interpolate: vec![],
            approximate: data.iter().map(|(x, y, p, q)| ([*x, *y], [*p, *q])).collect(),
        };
        let opts = FitOptions::default();
        let coarse = KnotVector::uniform(2, 0.0, 1.0, 2);
        let fine = KnotVector::uniform(2, 0.0, 1.0, 4);
        let a = fit_reparam(&coarse, &coarse, &corr, &[], &[], &opts).unwrap().objective;
        let b = fit_reparam(&fine, &fine, &corr, &[], &[], &opts).unwrap().objective;
        for k in 0..2 {
            prop_assert!(b[k] <= a[k] + 1e-10 * (1.0 + a[k].abs()), "{b:?} vs {a:?}");
        }
    }
}

#[test]
fn loops_close_and_fitted_corners_map_to_the_unit_ends() {
    for a in scenes() {
        let lp = a.trim.as_ref().unwrap();
        for j in 0..a.len() {
            let start = lp.boundary_point(j, 0.0).unwrap();
            let end = lp.boundary_point(lp.prev(j), 1.0).unwrap();
            assert!((start[0] - end[0]).hypot(start[1] - end[1]) < 1e-9);
            let c0 = a.reparams[j].eval(lp.corners[j]);
            let c1 = a.reparams[j].eval(lp.corners[lp.next(j)]);
            assert!(c0[0].abs() < 1e-9 && c0[1].abs() < 1e-9);
            assert!((c1[0] - 1.0).abs() < 1e-9 && c1[1].abs() < 1e-9);
        }
    }
}

#[test]
fn prescribed_corner_jacobians_hold() {
    let rep = verify_contact(triangle(), Level::G2, &VerifyOptions::default()).unwrap();
    for c in &rep.corners {
        assert!(c.jacobian_gap < 1e-9, "corner {}: {:e}", c.corner, c.jacobian_gap);
    }
}

#[test]
fn pieces_tile_their_cells() {
    let (ps, areas) = square_pieces();
    for (ci, area) in areas.iter().enumerate() {
        let sum: f64 = ps.iter().filter(|p| p.cell == ci).map(|p| polygon_area(&p.polygon).abs()).sum();
        assert!((sum - area.abs()).abs() < 1e-12, "cell {ci}: {sum} vs {area}");
    }
}
