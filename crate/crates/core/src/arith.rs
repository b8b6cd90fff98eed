//! Exact arithmetic on polynomial splines: sums, products, powers and
//! per-cell composition.

use nalgebra::DMatrix;

use crate::bezier::{bernstein_all, BezierPatch, Rect};
use crate::error::{AbcError, Result};
use crate::knots::{merge_breakpoints, KnotVector, KNOT_EPS};
use crate::spline::{Direction, ScalarSurfaceSpline, VectorSurfaceSpline};

fn same_domain(f: &ScalarSurfaceSpline, g: &ScalarSurfaceSpline) -> Result<()> {
    let (a, b) = (f.domain(), g.domain());
    let tol = KNOT_EPS * 10.0;
    if (a.u0 - b.u0).abs() > tol
        || (a.u1 - b.u1).abs() > tol
        || (a.v0 - b.v0).abs() > tol
        || (a.v1 - b.v1).abs() > tol
    {
        return Err(AbcError::DomainMismatch);
    }
    Ok(())
}

/// Smoothness order of `kv` at `x`: `degree - multiplicity`, or `None`
/// when `x` is not a knot (infinitely smooth there).
fn continuity(kv: &KnotVector, x: f64) -> Option<isize> {
    let m = kv.multiplicity(x);
    if m == 0 {
        None
    } else {
        Some(kv.degree() as isize - m as isize)
    }
}

/// Knot vector of degree `deg` over the merged breakpoints of `a` and `b`
/// with the continuity the combined function is guaranteed to have.
fn combined_knots(a: &KnotVector, b: &KnotVector, deg: usize) -> KnotVector {
    let ba = a.breakpoints();
    let bb = b.breakpoints();
    let breaks = merge_breakpoints(&[&ba, &bb]);
    let mut mult = Vec::with_capacity(breaks.len().saturating_sub(2));
    for &x in &breaks[1..breaks.len() - 1] {
        let c = match (continuity(a, x), continuity(b, x)) {
            (Some(ca), Some(cb)) => ca.min(cb),
            (Some(c), None) | (None, Some(c)) => c,
            (None, None) => deg as isize,
        };
        let m = (deg as isize - c).clamp(1, deg as isize + 1) as usize;
        mult.push(m);
    }
    KnotVector::from_breakpoints(deg, &breaks, &mult)
}

fn combine<F>(
    f: &ScalarSurfaceSpline,
    g: &ScalarSurfaceSpline,
    du: usize,
    dv: usize,
    op: F,
) -> Result<ScalarSurfaceSpline>
where
    F: Fn(&BezierPatch, &BezierPatch) -> BezierPatch,
{
    same_domain(f, g)?;
    let ku = combined_knots(f.knots_u(), g.knots_u(), du);
    let kv = combined_knots(f.knots_v(), g.knots_v(), dv);
    let bu = ku.breakpoints();
    let bv = kv.breakpoints();
    let pf = f.bezier_pieces(&bu, &bv);
    let pg = g.bezier_pieces(&bu, &bv);
    let pieces: Vec<Vec<BezierPatch>> = pf
        .iter()
        .zip(&pg)
        .map(|(rf, rg)| rf.iter().zip(rg).map(|(a, b)| op(a, b)).collect())
        .collect();
    ScalarSurfaceSpline::from_bezier_pieces(ku, kv, &pieces)
}

/// Exact sum over a common domain.
pub fn add(f: &ScalarSurfaceSpline, g: &ScalarSurfaceSpline) -> Result<ScalarSurfaceSpline> {
    let d = f.degree().max(g.degree());
    combine(f, g, d.u, d.v, |a, b| a.add(b))
}

/// Exact difference over a common domain.
pub fn sub(f: &ScalarSurfaceSpline, g: &ScalarSurfaceSpline) -> Result<ScalarSurfaceSpline> {
    let d = f.degree().max(g.degree());
    combine(f, g, d.u, d.v, |a, b| a.add(&b.scale(-1.0)))
}

pub fn scale(f: &ScalarSurfaceSpline, s: f64) -> ScalarSurfaceSpline {
    f.map_coeffs(|c| c * s)
}

/// Exact product over a common domain; degrees add componentwise.
pub fn multiply(f: &ScalarSurfaceSpline, g: &ScalarSurfaceSpline) -> Result<ScalarSurfaceSpline> {
    let d = f.degree() + g.degree();
    combine(f, g, d.u, d.v, |a, b| a.mul(b))
}

/// Exact `r`-th power; the degree is multiplied by `r`.
pub fn power(f: &ScalarSurfaceSpline, r: u32) -> Result<ScalarSurfaceSpline> {
    if r == 0 {
        return Err(AbcError::Invalid("power exponent must be at least 1".into()));
    }
    let mut out = f.clone();
    for _ in 1..r {
        out = multiply(&out, f)?;
    }
    Ok(out)
}

/// Product of many factors.
pub fn product(fs: &[&ScalarSurfaceSpline]) -> Result<ScalarSurfaceSpline> {
    let (first, rest) = fs
        .split_first()
        .ok_or_else(|| AbcError::Invalid("empty product".into()))?;
    let mut out = (*first).clone();
    for g in rest {
        out = multiply(&out, g)?;
    }
    Ok(out)
}

/// Chebyshev points of the first kind mapped to `[a, b]`.
fn chebyshev(n: usize, a: f64, b: f64) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (a + b)];
    }
    (0..n)
        .map(|k| {
            let t = 0.5 - 0.5 * ((2 * k + 1) as f64 * std::f64::consts::PI / (2 * n) as f64).cos();
            a + t * (b - a)
        })
        .collect()
}

fn bernstein_collocation(n: usize, nodes: &[f64], a: f64, b: f64) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(nodes.len(), n + 1);
    for (i, x) in nodes.iter().enumerate() {
        let t = (x - a) / (b - a);
        for (j, v) in bernstein_all(n, t).into_iter().enumerate() {
            m[(i, j)] = v;
        }
    }
    m
}

fn check_inside_span(kv: &KnotVector, lo: f64, hi: f64, tol: f64, dir: char) -> Result<()> {
    for x in kv.inner_breakpoints() {
        if x > lo + tol && x < hi - tol {
            return Err(AbcError::StraddlesKnot { knot: x, direction: dir });
        }
    }
    Ok(())
}

/// Exact Bezier form of `r ∘ κ` over `cell`, one patch per component of `r`.
///
/// `κ` must be a single polynomial piece on `cell` and map it into a single
/// polynomial piece of `r`; the composed degree is `|deg r| * deg κ`.
pub fn compose_cell(
    r: &VectorSurfaceSpline,
    kappa: &VectorSurfaceSpline,
    cell: Rect,
) -> Result<Vec<BezierPatch>> {
    if !(cell.u1 - cell.u0 > KNOT_EPS && cell.v1 - cell.v0 > KNOT_EPS) {
        return Err(AbcError::DegenerateCell(cell.u0, cell.u1, cell.v0, cell.v1));
    }
    if kappa.dim() != 2 {
        return Err(AbcError::Invalid("reparametrization must have 2 components".into()));
    }
    let tol = 1e-9;
    check_inside_span(kappa.knots_u(), cell.u0, cell.u1, tol, 'u')?;
    check_inside_span(kappa.knots_v(), cell.v0, cell.v1, tol, 'v')?;

    let ks = kappa.components();
    let kspan_u = kappa.knots_u().find_span(cell.center()[0]);
    let kspan_v = kappa.knots_v().find_span(cell.center()[1]);
    let kap = |s: [f64; 2]| -> [f64; 2] {
        [
            ks[0].eval_in_span(s, kspan_u, kspan_v),
            ks[1].eval_in_span(s, kspan_u, kspan_v),
        ]
    };

    // image extent by dense sampling
    let ns = 24;
    let (mut ulo, mut uhi, mut vlo, mut vhi) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for i in 0..=ns {
        for j in 0..=ns {
            let t = kap(cell.point(i as f64 / ns as f64, j as f64 / ns as f64));
            ulo = ulo.min(t[0]);
            uhi = uhi.max(t[0]);
            vlo = vlo.min(t[1]);
            vhi = vhi.max(t[1]);
        }
    }
    check_inside_span(r.knots_u(), ulo, uhi, tol, 'u')?;
    check_inside_span(r.knots_v(), vlo, vhi, tol, 'v')?;
    compose_in_span(r, kappa, cell, kap(cell.center()))
}

/// `r ∘ κ` over `cell` using the polynomial piece of `r` containing `tau`.
///
/// The image of `cell` is not checked; the result equals `r ∘ κ` wherever
/// `κ` lands in that piece.
pub fn compose_in_span(
    r: &VectorSurfaceSpline,
    kappa: &VectorSurfaceSpline,
    cell: Rect,
    tau: [f64; 2],
) -> Result<Vec<BezierPatch>> {
    if !(cell.u1 - cell.u0 > KNOT_EPS && cell.v1 - cell.v0 > KNOT_EPS) {
        return Err(AbcError::DegenerateCell(cell.u0, cell.u1, cell.v0, cell.v1));
    }
    check_inside_span(kappa.knots_u(), cell.u0, cell.u1, 1e-9, 'u')?;
    check_inside_span(kappa.knots_v(), cell.v0, cell.v1, 1e-9, 'v')?;
    let ks = kappa.components();
    let kspan_u = kappa.knots_u().find_span(cell.center()[0]);
    let kspan_v = kappa.knots_v().find_span(cell.center()[1]);
    let kap = |s: [f64; 2]| -> [f64; 2] {
        [
            ks[0].eval_in_span(s, kspan_u, kspan_v),
            ks[1].eval_in_span(s, kspan_u, kspan_v),
        ]
    };
    let rspan_u = r.knots_u().find_span(tau[0]);
    let rspan_v = r.knots_v().find_span(tau[1]);

    let m = r.degree().total();
    let dk = kappa.degree();
    let (nu, nv) = (m * dk.u, m * dk.v);
    let xs = chebyshev(nu + 1, cell.u0, cell.u1);
    let ys = chebyshev(nv + 1, cell.v0, cell.v1);
    let cu = bernstein_collocation(nu, &xs, cell.u0, cell.u1)
        .lu()
        .try_inverse()
        .ok_or_else(|| AbcError::Singular("Bernstein collocation (u)".into()))?;
    let cv = bernstein_collocation(nv, &ys, cell.v0, cell.v1)
        .lu()
        .try_inverse()
        .ok_or_else(|| AbcError::Singular("Bernstein collocation (v)".into()))?;

    let images: Vec<[f64; 2]> = xs
        .iter()
        .flat_map(|&x| ys.iter().map(move |&y| [x, y]))
        .map(kap)
        .collect();
    let mut out = Vec::with_capacity(r.dim());
    for comp in r.components() {
        let vals = DMatrix::from_fn(xs.len(), ys.len(), |i, j| {
            comp.eval_in_span(images[i * ys.len() + j], rspan_u, rspan_v)
        });
        let c = &cu * vals * cv.transpose();
        let mut coeffs = Vec::with_capacity((nu + 1) * (nv + 1));
        for i in 0..=nu {
            for j in 0..=nv {
                coeffs.push(c[(i, j)]);
            }
        }
        out.push(BezierPatch::new((nu, nv), cell, coeffs));
    }
    Ok(out)
}

/// Restriction of a scalar spline to a cell lying in a single knot span.
pub fn restrict(f: &ScalarSurfaceSpline, cell: Rect) -> Result<BezierPatch> {
    if !(cell.u1 - cell.u0 > KNOT_EPS && cell.v1 - cell.v0 > KNOT_EPS) {
        return Err(AbcError::DegenerateCell(cell.u0, cell.u1, cell.v0, cell.v1));
    }
    check_inside_span(f.knots_u(), cell.u0, cell.u1, 1e-9, 'u')?;
    check_inside_span(f.knots_v(), cell.v0, cell.v1, 1e-9, 'v')?;
    // the cell may extend beyond the domain; the Bernstein form of the
    // prolonged piece is obtained from its values
    let d = f.degree();
    let su = f.knots_u().find_span(cell.center()[0]);
    let sv = f.knots_v().find_span(cell.center()[1]);
    let xs = chebyshev(d.u + 1, cell.u0, cell.u1);
    let ys = chebyshev(d.v + 1, cell.v0, cell.v1);
    let cu = bernstein_collocation(d.u, &xs, cell.u0, cell.u1)
        .lu()
        .try_inverse()
        .ok_or_else(|| AbcError::Singular("Bernstein collocation (u)".into()))?;
    let cv = bernstein_collocation(d.v, &ys, cell.v0, cell.v1)
        .lu()
        .try_inverse()
        .ok_or_else(|| AbcError::Singular("Bernstein collocation (v)".into()))?;
    let vals = DMatrix::from_fn(xs.len(), ys.len(), |i, j| f.eval_in_span([xs[i], ys[j]], su, sv));
    let c = cu * vals * cv.transpose();
    let mut coeffs = Vec::with_capacity((d.u + 1) * (d.v + 1));
    for i in 0..=d.u {
        for j in 0..=d.v {
            coeffs.push(c[(i, j)]);
        }
    }
    Ok(BezierPatch::new((d.u, d.v), cell, coeffs))
}

/// Partial derivative of a vector spline, componentwise.
pub fn vector_partial(s: &VectorSurfaceSpline, dir: Direction) -> Result<VectorSurfaceSpline> {
    VectorSurfaceSpline::new(s.components().iter().map(|c| c.partial(dir, 1)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spline::DegreePair;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spline(rng: &mut ChaCha8Rng, deg: usize, inner: &[f64]) -> ScalarSurfaceSpline {
        let ku = KnotVector::with_inner(deg, 0.0, 1.0, inner);
        let kv = KnotVector::with_inner(deg, 0.0, 1.0, &[0.5]);
        let n = ku.num_basis() * kv.num_basis();
        let c = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        ScalarSurfaceSpline::new(ku, kv, c).unwrap()
    }

    #[test]
    fn constant_times_g() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = random_spline(&mut rng, 3, &[0.3, 0.7]);
        let two = ScalarSurfaceSpline::constant(
            KnotVector::bezier(0, 0.0, 1.0),
            KnotVector::bezier(0, 0.0, 1.0),
            2.0,
        );
        let p = multiply(&two, &g).unwrap();
        for _ in 0..50 {
            let s = [rng.gen::<f64>(), rng.gen::<f64>()];
            assert!((p.eval(s) - 2.0 * g.eval(s)).abs() < 1e-13);
        }
    }

    #[test]
    fn product_degrees_and_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = random_spline(&mut rng, 3, &[0.25]);
        let g = random_spline(&mut rng, 3, &[0.6]);
        let p = multiply(&f, &g).unwrap();
        assert_eq!(p.degree(), DegreePair::new(6, 6));
        for _ in 0..200 {
            let s = [rng.gen::<f64>(), rng.gen::<f64>()];
            let e = f.eval(s) * g.eval(s);
            assert!((p.eval(s) - e).abs() <= 1e-12 * e.abs().max(1.0));
        }
        let s = add(&f, &g).unwrap();
        assert!((s.eval([0.3, 0.9]) - f.eval([0.3, 0.9]) - g.eval([0.3, 0.9])).abs() < 1e-13);
    }

    #[test]
    fn power_degree_and_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = random_spline(&mut rng, 3, &[0.4]);
        assert_eq!(power(&f, 1).unwrap(), f);
        let c = power(&f, 3).unwrap();
        assert_eq!(c.degree(), DegreePair::new(9, 9));
        for _ in 0..100 {
            let s = [rng.gen::<f64>(), rng.gen::<f64>()];
            let e = f.eval(s).powi(3);
            assert!((c.eval(s) - e).abs() <= 1e-12 * e.abs().max(1.0));
        }
    }

    #[test]
    fn domain_mismatch() {
        let a = ScalarSurfaceSpline::constant(
            KnotVector::bezier(1, 0.0, 1.0),
            KnotVector::bezier(1, 0.0, 1.0),
            1.0,
        );
        let b = ScalarSurfaceSpline::constant(
            KnotVector::bezier(1, 0.0, 2.0),
            KnotVector::bezier(1, 0.0, 1.0),
            1.0,
        );
        assert!(matches!(multiply(&a, &b), Err(AbcError::DomainMismatch)));
    }

    #[test]
    fn compose_identity_like_ribbon() {
        let k = KnotVector::bezier(1, -2.0, 2.0);
        let r = VectorSurfaceSpline::interpolate(k.clone(), k, |u, v| [u, v, 0.0]).unwrap();
        let kk = KnotVector::bezier(2, 0.0, 1.0);
        let kappa = VectorSurfaceSpline::new(vec![
            ScalarSurfaceSpline::interpolate(kk.clone(), kk.clone(), |u, v| u * v + 0.1).unwrap(),
            ScalarSurfaceSpline::interpolate(kk.clone(), kk.clone(), |u, v| u - v * v).unwrap(),
        ])
        .unwrap();
        let cell = Rect::new(0.1, 0.6, 0.2, 0.9);
        let c = compose_cell(&r, &kappa, cell).unwrap();
        assert_eq!(c[0].deg, (4, 4));
        let s = [0.3, 0.5];
        assert!((c[0].eval(s) - (0.15 + 0.1)).abs() < 1e-13);
        assert!((c[1].eval(s) - (0.3 - 0.25)).abs() < 1e-13);
        assert!(c[2].eval(s).abs() < 1e-13);
    }

    #[test]
    fn compose_straddle_rejected() {
        let ku = KnotVector::with_inner(3, 0.0, 1.0, &[0.5]);
        let kv = KnotVector::bezier(2, 0.0, 1.0);
        let r = VectorSurfaceSpline::interpolate(ku, kv, |u, v| [u, v, u * v]).unwrap();
        let k = KnotVector::bezier(1, 0.0, 1.0);
        let kappa = VectorSurfaceSpline::new(vec![
            ScalarSurfaceSpline::interpolate(k.clone(), k.clone(), |u, _| u).unwrap(),
            ScalarSurfaceSpline::interpolate(k.clone(), k.clone(), |_, v| v).unwrap(),
        ])
        .unwrap();
        let err = compose_cell(&r, &kappa, Rect::new(0.2, 0.8, 0.0, 1.0)).unwrap_err();
        match err {
            AbcError::StraddlesKnot { knot, direction } => {
                assert_eq!(direction, 'u');
                assert!((knot - 0.5).abs() < 1e-15);
            }
            e => panic!("unexpected {e:?}"),
        }
        assert!(compose_cell(&r, &kappa, Rect::new(0.5, 0.5, 0.0, 1.0)).is_err());
    }

    #[test]
    fn compose_degree_counts() {
        let ku = KnotVector::bezier(3, 0.0, 1.0);
        let kv = KnotVector::bezier(2, 0.0, 1.0);
        let r = VectorSurfaceSpline::interpolate(ku, kv, |u, v| [u * u * u, v * v * u, u + v])
            .unwrap();
        let k = KnotVector::bezier(3, 0.0, 1.0);
        let kappa = VectorSurfaceSpline::new(vec![
            ScalarSurfaceSpline::interpolate(k.clone(), k.clone(), |u, v| 0.5 * u + 0.1 * v * v * v)
                .unwrap(),
            ScalarSurfaceSpline::interpolate(k.clone(), k.clone(), |u, v| 0.3 * v + 0.2 * u * u)
                .unwrap(),
        ])
        .unwrap();
        let cell = Rect::new(0.0, 1.0, 0.0, 1.0);
        let c = compose_cell(&r, &kappa, cell).unwrap();
        assert_eq!(c[0].deg, (15, 15));
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let s = [rng.gen::<f64>(), rng.gen::<f64>()];
            let t = kappa.eval(s);
            let e = r.eval([t[0], t[1]]);
            for k in 0..3 {
                assert!((c[k].eval(s) - e[k]).abs() <= 1e-10 * e[k].abs().max(1.0));
            }
        }
    }
}
