//! Measurements shared by the property suites and the acceptance gate. Each
//! returns the defect of one identity at one sample.
#![allow(dead_code)]

use abc_core::arith::{compose_cell, multiply, power};
use abc_core::bezier::Rect;
use abc_core::diffgeo::{curvature_tensor_from_jet, frame_from_jet, gaussian_mean_from_jet};
use abc_core::jet::Jet2;
use abc_core::knots::KnotVector;
use abc_core::spline::{Direction, ScalarSurfaceSpline, SurfaceJet, VectorSurfaceSpline};

/// Spline on `[0,1]²` with the given degrees, inner knots and coefficients
/// taken cyclically from `coeffs`.
pub fn spline(deg: [usize; 2], inner: [&[f64]; 2], coeffs: &[f64]) -> ScalarSurfaceSpline {
    let ku = KnotVector::with_inner(deg[0], 0.0, 1.0, inner[0]);
    let kv = KnotVector::with_inner(deg[1], 0.0, 1.0, inner[1]);
    let n = ku.num_basis() * kv.num_basis();
    let c = (0..n).map(|i| coeffs[i % coeffs.len()]).collect();
    ScalarSurfaceSpline::new(ku, kv, c).expect("consistent shape")
}

fn rel(err: f64, scale: f64) -> f64 {
    err / scale.abs().max(1.0)
}

/// `|Σ N_i(x) − 1|`.
pub fn unity_defect(k: &KnotVector, x: f64) -> f64 {
    let s: f64 = k.basis_funs(k.find_span(x), x).iter().sum();
    (s - 1.0).abs()
}

/// Largest change of value at `pts` after inserting `x` in direction `dir`.
pub fn refinement_defect(f: &ScalarSurfaceSpline, dir: Direction, x: f64, pts: &[[f64; 2]]) -> f64 {
    let g = f.insert_knot(dir, x).expect("insertion inside the domain");
    pts.iter().fold(0.0, |m, s| m.max((f.eval(*s) - g.eval(*s)).abs()))
}

/// Largest relative gap between jet entries and central differences of
/// values and first derivatives at step `h`.
pub fn derivative_defect(f: &ScalarSurfaceSpline, s: [f64; 2], h: f64) -> f64 {
    let j = f.jet(s);
    let at = |du: f64, dv: f64| f.jet([s[0] + du, s[1] + dv]);
    let (up, um, vp, vm) = (at(h, 0.0), at(-h, 0.0), at(0.0, h), at(0.0, -h));
    let fd_du = (up.v - um.v) / (2.0 * h);
    let fd_dv = (vp.v - vm.v) / (2.0 * h);
    let fd_duu = (up.du - um.du) / (2.0 * h);
    let fd_duv = (vp.du - vm.du) / (2.0 * h);
    let fd_dvv = (vp.dv - vm.dv) / (2.0 * h);
    [
        rel(fd_du - j.du, j.du),
        rel(fd_dv - j.dv, j.dv),
        rel(fd_duu - j.duu, j.duu),
        rel(fd_duv - j.duv, j.duv),
        rel(fd_dvv - j.dvv, j.dvv),
    ]
    .into_iter()
    .fold(0.0, |m, e| m.max(e.abs()))
}

/// Relative gap of `f·g` to the pointwise product, and whether its degree
/// is the sum of the factor degrees.
pub fn product_defect(f: &ScalarSurfaceSpline, g: &ScalarSurfaceSpline, pts: &[[f64; 2]]) -> (f64, bool) {
    let p = multiply(f, g).expect("common domain");
    let err = pts.iter().fold(0.0, |m: f64, s| {
        let want = f.eval(*s) * g.eval(*s);
        m.max(rel(p.eval(*s) - want, want).abs())
    });
    (err, p.degree() == f.degree() + g.degree())
}

/// Relative gap of `f^r` to the pointwise power, and whether its degree is
/// `r` times that of `f`.
pub fn power_defect(f: &ScalarSurfaceSpline, r: u32, pts: &[[f64; 2]]) -> (f64, bool) {
    let p = power(f, r).expect("positive exponent");
    let err = pts.iter().fold(0.0, |m: f64, s| {
        let want = f.eval(*s).powi(r as i32);
        m.max(rel(p.eval(*s) - want, want).abs())
    });
    (err, p.degree() == f.degree().scaled(r as usize))
}

/// Relative gap of the Bernstein form of `r ∘ κ` on `cell` to pointwise
/// composition, and whether every component has degree `|deg r| · deg κ`.
pub fn compose_defect(r: &VectorSurfaceSpline, kappa: &VectorSurfaceSpline, cell: Rect, pts: &[[f64; 2]]) -> (f64, bool) {
    let comp = compose_cell(r, kappa, cell).expect("image in one piece");
    let dr = r.degree().total();
    let dk = kappa.degree();
    let degrees_ok = comp.iter().all(|c| c.deg == (dr * dk.u, dr * dk.v));
    let mut err = 0.0f64;
    for s in pts {
        let t = kappa.eval(*s);
        let want = r.eval([t[0], t[1]]);
        for (c, w) in comp.iter().zip(&want) {
            err = err.max(rel(c.eval(*s) - w, *w).abs());
        }
    }
    (err, degrees_ok)
}

/// A regular map of `[0,1]²` into itself with its jets.
#[derive(Debug, Clone, Copy)]
pub struct Warp {
    pub c: [f64; 2],
}

impl Warp {
    pub fn jets(&self, s: [f64; 2]) -> [Jet2; 2] {
        let [u, v] = s;
        let [a, b] = self.c;
        [
            Jet2 {
                v: 0.1 + 0.8 * u + a * u * v,
                du: 0.8 + a * v,
                dv: a * u,
                duu: 0.0,
                duv: a,
                dvv: 0.0,
            },
            Jet2 {
                v: 0.1 + 0.8 * v + b * u * u,
                du: 2.0 * b * u,
                dv: 0.8,
                duu: 2.0 * b,
                duv: 0.0,
                dvv: 0.0,
            },
        ]
    }
}

/// Jet of `S ∘ φ` at `s` by the chain rule.
pub fn composed_jet(surface: &VectorSurfaceSpline, warp: &Warp, s: [f64; 2]) -> SurfaceJet {
    let [p, q] = warp.jets(s);
    let inner = surface.jets([p.v, q.v]);
    SurfaceJet::from_components([inner[0].compose(&p, &q), inner[1].compose(&p, &q), inner[2].compose(&p, &q)])
}

/// Gaps of normal and ambient curvature tensor between `S ∘ φ` at `s` and
/// `S` at `φ(s)`.
pub fn reparam_defect(surface: &VectorSurfaceSpline, warp: &Warp, s: [f64; 2]) -> (f64, f64) {
    let [p, q] = warp.jets(s);
    let direct = SurfaceJet::from_components({
        let j = surface.jets([p.v, q.v]);
        [j[0], j[1], j[2]]
    });
    let moved = composed_jet(surface, warp, s);
    let n0 = frame_from_jet(&direct).expect("regular").normal;
    let n1 = frame_from_jet(&moved).expect("regular").normal;
    let e0 = curvature_tensor_from_jet(&direct).expect("regular");
    let e1 = curvature_tensor_from_jet(&moved).expect("regular");
    ((n0 - n1).norm(), e0.distance(&e1))
}

/// Gaps between curvature-tensor eigenvalues and the determinant/trace
/// formulas, and `|E n|`.
pub fn shape_operator_defect(j: &SurfaceJet) -> (f64, f64, f64) {
    let e = curvature_tensor_from_jet(j).expect("regular");
    let (k, h) = gaussian_mean_from_jet(j).expect("regular");
    ((e.gaussian() - k).abs(), (e.mean() - h).abs(), (e.matrix * e.normal).norm())
}

/// Graph surface `[u, v, f(u,v)]` over `[0,1]²` with a spline height.
pub fn graph(height: &ScalarSurfaceSpline) -> VectorSurfaceSpline {
    let ku = height.knots_u().clone();
    let kv = height.knots_v().clone();
    let x = ScalarSurfaceSpline::interpolate(ku.clone(), kv.clone(), |u, _| u).expect("valid knots");
    let y = ScalarSurfaceSpline::interpolate(ku, kv, |_, v| v).expect("valid knots");
    VectorSurfaceSpline::new(vec![x, y, height.clone()]).expect("matching knots")
}

/// Bézier map of `[0,1]²` into `[0.05,0.95]²` close to an affine shrink.
pub fn inner_map(deg: usize, wobble: [f64; 2]) -> VectorSurfaceSpline {
    let k = KnotVector::bezier(deg, 0.0, 1.0);
    let [a, b] = wobble;
    let p = ScalarSurfaceSpline::interpolate(k.clone(), k.clone(), move |u, v| 0.1 + 0.8 * u + a * u * v * (1.0 - u))
        .expect("valid knots");
    let q = ScalarSurfaceSpline::interpolate(k.clone(), k, move |u, v| 0.1 + 0.8 * v + b * u * v * (1.0 - v))
        .expect("valid knots");
    VectorSurfaceSpline::new(vec![p, q]).expect("matching knots")
}

/// Bézier spline of three components over `[0,1]²`.
pub fn bezier_vector(deg: [usize; 2], coeffs: &[f64]) -> VectorSurfaceSpline {
    let comps = (0..3)
        .map(|k| {
            let shifted: Vec<f64> = coeffs.iter().cycle().skip(7 * k).take(coeffs.len()).copied().collect();
            spline(deg, [&[], &[]], &shifted)
        })
        .collect();
    VectorSurfaceSpline::new(comps).expect("matching knots")
}

/// Distance from `x` to the nearest breakpoint of `k`.
pub fn breakpoint_distance(k: &KnotVector, x: f64) -> f64 {
    k.breakpoints().iter().fold(f64::INFINITY, |m, b| m.min((x - b).abs()))
}
