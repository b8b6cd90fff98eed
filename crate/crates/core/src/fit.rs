//! Fitting reparametrizations from correspondences between base and ribbons.

use nalgebra::{DMatrix, DVector, Matrix2, Matrix3, Matrix3x2, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{AbcError, Result};
use crate::knots::KnotVector;
use crate::linalg::{pinv, thin_plate, ConstrainedLsq};
use crate::spline::{ScalarSurfaceSpline, Surface};
use crate::trim::Reparametrization;

pub type Pair = ([f64; 2], [f64; 2]);

/// Pairs `(σ, τ)` to interpolate exactly and pairs to approximate.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorrespondenceSet {
    pub interpolate: Vec<Pair>,
    pub approximate: Vec<Pair>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Harvest {
    pub pairs: Vec<Pair>,
    /// Ribbon parameters whose projection failed.
    pub dropped: Vec<[f64; 2]>,
}

/// Foot point of the orthogonal projection of `x` onto `b`, by Newton on
/// `Dbᵀ (b - x) = 0` starting at `guess`.
pub fn project_point<S: Surface + ?Sized>(b: &S, x: &Vector3<f64>, guess: [f64; 2]) -> Result<[f64; 2]> {
    let mut s = Vector2::new(guess[0], guess[1]);
    let mut gnorm = f64::INFINITY;
    for _ in 0..60 {
        let j = b.jet([s[0], s[1]]);
        let d = j.p - x;
        let g = Vector2::new(j.du.dot(&d), j.dv.dot(&d));
        gnorm = g.norm();
        let scale = j.du.norm().max(j.dv.norm()).max(1e-300);
        if gnorm < 1e-14 * scale * (1.0 + x.norm()) {
            return Ok([s[0], s[1]]);
        }
        let gn = Matrix2::new(
            j.du.dot(&j.du),
            j.du.dot(&j.dv),
            j.dv.dot(&j.du),
            j.dv.dot(&j.dv),
        );
        let full = gn + Matrix2::new(j.duu.dot(&d), j.duv.dot(&d), j.duv.dot(&d), j.dvv.dot(&d));
        let h = if full.determinant() > 0.0 && full[(0, 0)] > 0.0 { full } else { gn };
        let Some(hi) = h.try_inverse() else {
            return Err(AbcError::NoConvergence { residual: gnorm });
        };
        let step = hi * g;
        s -= step;
        if step.norm() < 1e-16 * (1.0 + s.norm()) {
            break;
        }
    }
    let j = b.jet([s[0], s[1]]);
    let d = j.p - x;
    if j.du.dot(&d).abs() < 1e-8 && j.dv.dot(&d).abs() < 1e-8 {
        Ok([s[0], s[1]])
    } else {
        Err(AbcError::NoConvergence { residual: gnorm })
    }
}

/// Projects `r(τ)` onto `b` for each sample `τ`.
pub fn harvest_correspondences<B, R, G>(b: &B, r: &R, taus: &[[f64; 2]], guess: G) -> Harvest
where
    B: Surface + ?Sized,
    R: Surface + ?Sized,
    G: Fn([f64; 2]) -> [f64; 2],
{
    let mut pairs = Vec::with_capacity(taus.len());
    let mut dropped = Vec::new();
    for &t in taus {
        let x = r.point(t);
        match project_point(b, &x, guess(t)) {
            Ok(s) => pairs.push((s, t)),
            Err(_) => dropped.push(t),
        }
    }
    Harvest { pairs, dropped }
}

/// `T = (I - n nᵀ) Db(σ)`: the base Jacobian projected into the plane normal to `n`.
pub fn corner_tangent_frame<S: Surface + ?Sized>(b: &S, sigma: [f64; 2], n: &Vector3<f64>) -> Result<Matrix3x2<f64>> {
    let j = b.jet(sigma);
    let n = n.normalize();
    let proj = Matrix3::identity() - n * n.transpose();
    let t = proj * Matrix3x2::from_columns(&[j.du, j.dv]);
    let area = t.column(0).cross(&t.column(1)).norm();
    if area < 1e-12 * j.du.norm() * j.dv.norm() || area < 1e-300 {
        return Err(AbcError::DegenerateFrame(area));
    }
    Ok(t)
}

/// Required corner Jacobians of `κ_prev` and `κ_next` so that both
/// reparametrized ribbons have Jacobian `T` at the corner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CornerTargets {
    pub prev: Matrix2<f64>,
    pub next: Matrix2<f64>,
    /// `|Dr_prev·prev - Dr_next·next|`.
    pub mismatch: f64,
}

fn ribbon_jacobian<S: Surface + ?Sized>(r: &S, tau: [f64; 2]) -> Result<Matrix3x2<f64>> {
    let j = r.jet(tau);
    let d = Matrix3x2::from_columns(&[j.du, j.dv]);
    let c = j.du.cross(&j.dv).norm();
    if c < 1e-12 {
        return Err(AbcError::DegenerateFrame(c));
    }
    Ok(d)
}

fn preimage(d: &Matrix3x2<f64>, t: &Matrix3x2<f64>) -> Matrix2<f64> {
    let g = d.transpose() * d;
    g.try_inverse().expect("rank checked") * d.transpose() * t
}

pub fn corner_jacobian_conditions<P, N>(r_prev: &P, r_next: &N, t: &Matrix3x2<f64>) -> Result<CornerTargets>
where
    P: Surface + ?Sized,
    N: Surface + ?Sized,
{
    let dp = ribbon_jacobian(r_prev, [1.0, 0.0])?;
    let dn = ribbon_jacobian(r_next, [0.0, 0.0])?;
    let prev = preimage(&dp, t);
    let next = preimage(&dn, t);
    let mismatch = (dp * prev - dn * next).norm();
    Ok(CornerTargets { prev, next, mismatch })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Fairness weight relative to the data term.
    pub lambda: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { lambda: 1e-6 }
    }
}

/// Prescribed `Dκ(σ)`, rows `∇p` and `∇q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JacobianCondition {
    pub sigma: [f64; 2],
    pub jacobian: Matrix2<f64>,
}

#[derive(Debug, Clone)]
pub struct FitReport {
    pub reparam: Reparametrization,
    /// Attained objective of the `p` and `q` problems.
    pub objective: [f64; 2],
    pub constraint_residual: f64,
}

/// Nonzero entries of the row `∂^a_u ∂^b_v N_ij(σ)` in row-major coefficient order.
pub fn basis_row(ku: &KnotVector, kv: &KnotVector, s: [f64; 2], du: usize, dv: usize) -> Vec<(usize, f64)> {
    let (p, q) = (ku.degree(), kv.degree());
    let su = ku.find_span(s[0]);
    let sv = kv.find_span(s[1]);
    let bu = ku.basis_derivs(su, s[0], du);
    let bv = kv.basis_derivs(sv, s[1], dv);
    let nv = kv.num_basis();
    let mut out = Vec::with_capacity((p + 1) * (q + 1));
    for a in 0..=p {
        for b in 0..=q {
            out.push(((su - p + a) * nv + sv - q + b, bu[du][a] * bv[dv][b]));
        }
    }
    out
}

/// Fits `κ = [p, q]` in the given tensor-product space.
///
/// Interpolation pairs, Jacobian conditions and levelset pairs are exact
/// constraints; approximation pairs enter a least-squares term regularized
/// by thin-plate energy scaled with the number of approximation rows.
pub fn fit_reparam(
    ku: &KnotVector,
    kv: &KnotVector,
    corr: &CorrespondenceSet,
    jacobians: &[JacobianCondition],
    levelsets: &[Pair],
    opts: &FitOptions,
) -> Result<FitReport> {
    let n = ku.num_basis() * kv.num_basis();
    let interp: Vec<&Pair> = corr.interpolate.iter().chain(levelsets.iter()).collect();
    let nc = interp.len() + 2 * jacobians.len();
    let na = corr.approximate.len();
    let mut c = DMatrix::zeros(nc, n);
    let mut a = DMatrix::zeros(na, n);
    let mut dp = DVector::zeros(nc);
    let mut dq = DVector::zeros(nc);
    let mut bp = DVector::zeros(na);
    let mut bq = DVector::zeros(na);
    for (row, (s, t)) in interp.iter().enumerate() {
        for (i, v) in basis_row(ku, kv, *s, 0, 0) {
            c[(row, i)] = v;
        }
        dp[row] = t[0];
        dq[row] = t[1];
    }
    for (k, jc) in jacobians.iter().enumerate() {
        let r0 = interp.len() + 2 * k;
        for (i, v) in basis_row(ku, kv, jc.sigma, 1, 0) {
            c[(r0, i)] = v;
        }
        for (i, v) in basis_row(ku, kv, jc.sigma, 0, 1) {
            c[(r0 + 1, i)] = v;
        }
        dp[r0] = jc.jacobian[(0, 0)];
        dp[r0 + 1] = jc.jacobian[(0, 1)];
        dq[r0] = jc.jacobian[(1, 0)];
        dq[r0 + 1] = jc.jacobian[(1, 1)];
    }
    for (row, (s, t)) in corr.approximate.iter().enumerate() {
        for (i, v) in basis_row(ku, kv, *s, 0, 0) {
            a[(row, i)] = v;
        }
        bp[row] = t[0];
        bq[row] = t[1];
    }
    let m = thin_plate(ku, kv);
    let lambda = opts.lambda * (na.max(1) as f64);
    let mut sols = ConstrainedLsq {
        a: &a,
        b: &bp,
        c: &c,
        d: &dp,
        fairness: &m,
        lambda,
    }
    .solve_many(&[(&bp, &dp), (&bq, &dq)])?;
    let sq = sols.pop().unwrap();
    let sp = sols.pop().unwrap();
    let p = ScalarSurfaceSpline::new(ku.clone(), kv.clone(), sp.x.iter().copied().collect())?;
    let q = ScalarSurfaceSpline::new(ku.clone(), kv.clone(), sq.x.iter().copied().collect())?;
    Ok(FitReport {
        reparam: Reparametrization::new(p, q)?,
        objective: [sp.objective, sq.objective],
        constraint_residual: sp.constraint_residual.max(sq.constraint_residual),
    })
}

/// `δ = Db⁺ ∂₂r`: the parameter direction whose image best matches the
/// transversal ribbon derivative.
pub fn levelset_direction<S: Surface + ?Sized>(b: &S, anchor: [f64; 2], d2r: &Vector3<f64>) -> Result<[f64; 2]> {
    let j = b.jet(anchor);
    let d = Matrix3x2::from_columns(&[j.du, j.dv]);
    let c = j.du.cross(&j.dv).norm();
    if c < 1e-12 {
        return Err(AbcError::DegenerateFrame(c));
    }
    let dm = DMatrix::from_fn(3, 2, |i, k| d[(i, k)]);
    let pi = pinv(&dm, 1e-14);
    let v = DVector::from_column_slice(d2r.as_slice());
    let delta = pi * v;
    Ok([delta[0], delta[1]])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spline::VectorSurfaceSpline;

    fn plane(scale: f64) -> VectorSurfaceSpline {
        let k = KnotVector::bezier(1, -2.0, 2.0);
        VectorSurfaceSpline::interpolate(k.clone(), k, move |u, v| [scale * u, scale * v, 0.0]).unwrap()
    }

    #[test]
    fn self_projection_recovers_parameters() {
        let k = KnotVector::uniform(3, 0.0, 1.0, 3);
        let b = VectorSurfaceSpline::interpolate(k.clone(), k, |u, v| {
            [u, v, 0.3 * (3.0 * u).sin() * v]
        })
        .unwrap();
        let taus: Vec<[f64; 2]> = (0..5).map(|i| [0.1 + 0.15 * i as f64, 0.3 + 0.1 * i as f64]).collect();
        let h = harvest_correspondences(&b, &b, &taus, |t| [t[0] + 0.03, t[1] - 0.02]);
        assert!(h.dropped.is_empty());
        for (s, t) in h.pairs {
            assert!((s[0] - t[0]).abs() < 1e-9 && (s[1] - t[1]).abs() < 1e-9);
        }
    }

    #[test]
    fn offset_plane_projects_to_shadow() {
        let b = plane(1.0);
        let k = KnotVector::bezier(1, 0.0, 1.0);
        let r = VectorSurfaceSpline::interpolate(k.clone(), k, |u, v| [u, v, 0.5]).unwrap();
        let h = harvest_correspondences(&b, &r, &[[0.25, 0.75]], |_| [0.0, 0.0]);
        assert!((h.pairs[0].0[0] - 0.25).abs() < 1e-14 && (h.pairs[0].0[1] - 0.75).abs() < 1e-14);
    }

    #[test]
    fn tangent_frame_projection() {
        let b = plane(1.0);
        let t = corner_tangent_frame(&b, [0.0, 0.0], &Vector3::z()).unwrap();
        assert!((t - Matrix3x2::new(1.0, 0.0, 0.0, 1.0, 0.0, 0.0)).norm() < 1e-15);
        let n = Vector3::new(1e-3, 0.0, 1.0).normalize();
        let t = corner_tangent_frame(&b, [0.0, 0.0], &n).unwrap();
        assert!((n.transpose() * t).norm() < 1e-15);
        assert!(corner_tangent_frame(&b, [0.0, 0.0], &Vector3::x()).is_err());
    }

    #[test]
    fn corner_targets_identity_and_preimage() {
        let r = plane(1.0);
        let t = Matrix3x2::new(1.0, 0.0, 0.0, 1.0, 0.0, 0.0);
        let c = corner_jacobian_conditions(&r, &r, &t).unwrap();
        assert!((c.prev - Matrix2::identity()).norm() < 1e-14);
        let a = Matrix2::new(2.0, 1.0, -0.5, 3.0);
        let r2 = plane(2.0);
        let c = corner_jacobian_conditions(&r2, &r2, &(Matrix3x2::new(2.0, 0.0, 0.0, 2.0, 0.0, 0.0) * a)).unwrap();
        assert!((c.next - a).norm() < 1e-12);
        assert!(c.mismatch < 1e-12);
    }

    #[test]
    fn affine_reproduction() {
        let k = KnotVector::bezier(1, 0.0, 1.0);
        let f = |s: [f64; 2]| [0.5 * s[0] + 0.2 * s[1] - 0.1, -0.3 * s[0] + s[1]];
        let mut corr = CorrespondenceSet::default();
        for i in 0..6 {
            for j in 0..6 {
                let s = [i as f64 / 5.0, j as f64 / 5.0];
                corr.approximate.push((s, f(s)));
            }
        }
        let fit = fit_reparam(&k, &k, &corr, &[], &[], &FitOptions::default()).unwrap();
        for s in [[0.3, 0.4], [0.9, 0.1]] {
            let v = fit.reparam.eval(s);
            let e = f(s);
            assert!((v[0] - e[0]).abs() < 1e-11 && (v[1] - e[1]).abs() < 1e-11);
        }
    }

    #[test]
    fn levelset_direction_of_identity_and_scaled() {
        let d = levelset_direction(&plane(1.0), [0.2, 0.3], &Vector3::y()).unwrap();
        assert!((d[0]).abs() < 1e-15 && (d[1] - 1.0).abs() < 1e-15);
        let d = levelset_direction(&plane(2.0), [0.2, 0.3], &Vector3::y()).unwrap();
        assert!((d[1] - 0.5).abs() < 1e-15);
    }
}
