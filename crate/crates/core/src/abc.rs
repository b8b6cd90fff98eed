//! The blended surface: evaluation with derivatives, contact-order estimates
//! and checks of the boundary continuity hypotheses.

use nalgebra::{Matrix2, Matrix3x2, Vector3};
use serde::{Deserialize, Serialize};

use crate::diffgeo::{self, CurvatureTensor};
use crate::error::{AbcError, Result};
use crate::jet::Jet2;
use crate::knots::KnotVector;
use crate::spline::{ScalarSurfaceSpline, Surface, SurfaceJet, VectorSurfaceSpline};
use crate::trim::{point_in_polygon, Reparametrization, TrimLoop};
use crate::weights::{FactoredWeight, WeightMode, WeightSystem};

pub const CORNER_TOLERANCE: f64 = 1e-9;
/// Relative size below which the blend denominator counts as vanishing.
pub const DENOMINATOR_EPS: f64 = 1e-14;

/// A ribbon surface with its contact exponent. Polynomial in `v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RibbonSpec {
    pub surface: VectorSurfaceSpline,
    pub exponent: u32,
}

impl RibbonSpec {
    pub fn new(surface: VectorSurfaceSpline, exponent: u32) -> Result<Self> {
        if surface.dim() != 3 {
            return Err(AbcError::Invalid("ribbons must be surfaces in R^3".into()));
        }
        if !surface.knots_v().inner_breakpoints().is_empty() {
            return Err(AbcError::Invalid("ribbon knot vector in v must not have inner knots".into()));
        }
        if exponent == 0 {
            return Err(AbcError::Invalid("ribbon exponent must be positive".into()));
        }
        Ok(RibbonSpec { surface, exponent })
    }
}

/// `a = (w b + ∑ w_ℓ r_ℓ∘κ_ℓ) / (w + ∑ w_ℓ)`, with `a(σ_ℓ) = r_ℓ(0,0)`.
#[derive(Debug, Clone)]
pub struct AbcSurface {
    pub base: VectorSurfaceSpline,
    pub ribbons: Vec<RibbonSpec>,
    pub reparams: Vec<Reparametrization>,
    /// `corners[ℓ]` is the start point of segment `ℓ`, where `a = r_ℓ(0,0)`.
    pub corners: Vec<Option<[f64; 2]>>,
    pub weights: WeightSystem,
    pub trim: Option<TrimLoop>,
    pub corner_tolerance: f64,
}

fn check_counts(base: &VectorSurfaceSpline, ribbons: &[RibbonSpec], n_reparams: usize, weights: &WeightSystem) -> Result<()> {
    if base.dim() != 3 {
        return Err(AbcError::Invalid("base must be a surface in R^3".into()));
    }
    if ribbons.len() != n_reparams || weights.len() != n_reparams {
        return Err(AbcError::Invalid(format!(
            "{} ribbons, {} reparametrizations, {} ribbon weights",
            ribbons.len(),
            n_reparams,
            weights.len()
        )));
    }
    Ok(())
}

impl AbcSurface {
    pub fn new(base: VectorSurfaceSpline, ribbons: Vec<RibbonSpec>, trim: TrimLoop, weights: WeightSystem) -> Result<Self> {
        check_counts(&base, &ribbons, trim.len(), &weights)?;
        Ok(AbcSurface {
            base,
            ribbons,
            reparams: trim.reparams.clone(),
            corners: trim.corners.iter().map(|c| Some(*c)).collect(),
            weights,
            trim: Some(trim),
            corner_tolerance: CORNER_TOLERANCE,
        })
    }

    /// Blend without a closed trimming loop.
    pub fn from_parts(
        base: VectorSurfaceSpline,
        ribbons: Vec<RibbonSpec>,
        reparams: Vec<Reparametrization>,
        corners: Vec<Option<[f64; 2]>>,
        weights: WeightSystem,
    ) -> Result<Self> {
        check_counts(&base, &ribbons, reparams.len(), &weights)?;
        if corners.len() != reparams.len() {
            return Err(AbcError::Invalid("one corner entry per segment required".into()));
        }
        Ok(AbcSurface {
            base,
            ribbons,
            reparams,
            corners,
            weights,
            trim: None,
            corner_tolerance: CORNER_TOLERANCE,
        })
    }

    pub fn len(&self) -> usize {
        self.ribbons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ribbons.is_empty()
    }

    pub fn prev(&self, l: usize) -> usize {
        (l + self.len() - 1) % self.len()
    }

    /// Index of the corner within tolerance of `s`.
    pub fn corner_at(&self, s: [f64; 2]) -> Option<usize> {
        self.corners.iter().position(|c| {
            c.is_some_and(|c| ((c[0] - s[0]).powi(2) + (c[1] - s[1]).powi(2)).sqrt() < self.corner_tolerance)
        })
    }

    /// `r_ℓ∘κ_ℓ` as a surface jet in the domain parameters.
    pub fn composed_ribbon_jet(&self, l: usize, s: [f64; 2]) -> SurfaceJet {
        let [p, q] = self.reparams[l].jets(s);
        let r = self.ribbons[l].surface.jet([p.v, q.v]);
        let c = r.components().map(|rc| rc.compose(&p, &q));
        SurfaceJet::from_components(c)
    }

    fn check_denominator(&self, s: [f64; 2], den: f64, mag: f64) -> Result<()> {
        if !den.is_finite() || den == 0.0 || den.abs() <= DENOMINATOR_EPS * mag {
            return Err(AbcError::DegenerateWeights(s[0], s[1], den));
        }
        Ok(())
    }

    pub fn eval(&self, s: [f64; 2]) -> Result<Vector3<f64>> {
        if let Some(l) = self.corner_at(s) {
            return Ok(self.ribbons[l].surface.eval3([0.0, 0.0]));
        }
        let (w, ws) = self.weights.eval(s);
        let mut num = if w != 0.0 { self.base.eval3(s) * w } else { Vector3::zeros() };
        let mut mag = w.abs();
        for (l, wl) in ws.iter().enumerate() {
            if *wl != 0.0 {
                num += self.ribbons[l].surface.eval3(self.reparams[l].eval(s)) * *wl;
            }
            mag += wl.abs();
        }
        let den = w + ws.iter().sum::<f64>();
        self.check_denominator(s, den, mag)?;
        Ok(num / den)
    }

    /// Value, first and second derivatives of the blend by the quotient rule.
    pub fn eval_jet(&self, s: [f64; 2]) -> Result<SurfaceJet> {
        let (w, ws) = self.weights.jets(s);
        let mut num = [Jet2::default(); 3];
        let mut den = w;
        let mut mag = w.v.abs();
        if w.v != 0.0 || w.du != 0.0 || w.dv != 0.0 {
            let b = self.base.jet(s).components();
            for k in 0..3 {
                num[k] = num[k] + w * b[k];
            }
        }
        for (l, wl) in ws.iter().enumerate() {
            den = den + *wl;
            mag += wl.v.abs();
            if wl.v == 0.0 && wl.du == 0.0 && wl.dv == 0.0 && wl.duu == 0.0 && wl.duv == 0.0 && wl.dvv == 0.0 {
                continue;
            }
            let r = self.composed_ribbon_jet(l, s).components();
            for k in 0..3 {
                num[k] = num[k] + *wl * r[k];
            }
        }
        self.check_denominator(s, den.v, mag)?;
        let inv = den.recip();
        Ok(SurfaceJet::from_components(num.map(|n| n * inv)))
    }

    /// Unit normal; at a corner the ribbon normal there.
    pub fn eval_normal(&self, s: [f64; 2]) -> Result<Vector3<f64>> {
        if let Some(l) = self.corner_at(s) {
            return Ok(diffgeo::frame(&self.ribbons[l].surface, [0.0, 0.0])?.normal);
        }
        Ok(diffgeo::frame_from_jet(&self.eval_jet(s)?)?.normal)
    }

    /// Ambient curvature tensor; at a corner the ribbon tensor there.
    pub fn eval_curvature(&self, s: [f64; 2]) -> Result<CurvatureTensor> {
        if let Some(l) = self.corner_at(s) {
            return diffgeo::curvature_tensor(&self.ribbons[l].surface, [0.0, 0.0]);
        }
        diffgeo::curvature_tensor_from_jet(&self.eval_jet(s)?)
    }

    pub fn gaussian_curvature(&self, s: [f64; 2]) -> Result<f64> {
        Ok(diffgeo::gaussian_mean_from_jet(&self.eval_jet(s)?)?.0)
    }

    /// `Dr̄_ℓ(σ) = Dr_ℓ(κ_ℓ(σ)) Dκ_ℓ(σ)`.
    pub fn composed_jacobian(&self, l: usize, s: [f64; 2]) -> Matrix3x2<f64> {
        let j = self.composed_ribbon_jet(l, s);
        Matrix3x2::from_columns(&[j.du, j.dv])
    }

    /// `w / w_j` and `w_ℓ / w_j` at `s`.
    pub fn relative_weights(&self, j: usize, s: [f64; 2]) -> (f64, Vec<f64>) {
        let (w, ws) = self.weights.eval(s);
        let d = ws[j];
        (w / d, ws.iter().map(|x| x / d).collect())
    }
}

/// Log-log regression slope of `|f|` against `t`; `None` when `f`
/// vanishes at every sample.
pub fn loglog_slope(ts: &[f64], fs: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = ts
        .iter()
        .zip(fs)
        .filter(|(_, f)| f.abs() > 0.0 && f.is_finite())
        .map(|(t, f)| (t.ln(), f.abs().ln()))
        .collect();
    if pts.len() < 2 || pts.len() < ts.len() {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}

/// Ray lengths used for slope regression: log-spaced in `[1e-5, 1e-2]`.
pub fn slope_radii(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 10f64.powf(-5.0 + 3.0 * i as f64 / (n - 1) as f64))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaySlopes {
    pub direction: [f64; 2],
    /// Slope of `w / w_j`; `None` when `w` vanishes along the ray.
    pub w_bar: Option<f64>,
    /// `(ℓ, slope)` for every applicable `w_ℓ / w_j`.
    pub w_bar_l: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactSlopes {
    pub segment: usize,
    pub sigma: [f64; 2],
    pub rays: Vec<RaySlopes>,
    /// Directions that left the trimmed domain.
    pub skipped: Vec<[f64; 2]>,
}

impl ContactSlopes {
    /// Smallest slope over all rays and weights.
    pub fn min_slope(&self) -> Option<f64> {
        self.rays
            .iter()
            .flat_map(|r| r.w_bar.into_iter().chain(r.w_bar_l.iter().map(|x| x.1)))
            .fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.min(x))))
    }

    pub fn all_slopes(&self) -> Vec<f64> {
        self.rays
            .iter()
            .flat_map(|r| r.w_bar.into_iter().chain(r.w_bar_l.iter().map(|x| x.1)))
            .collect()
    }
}

/// Inward unit normal of segment `j` at `s`, from `∇q_j`.
pub fn inward_normal(a: &AbcSurface, j: usize, s: [f64; 2]) -> [f64; 2] {
    let g = a.reparams[j].q.jet(s).gradient();
    let n = (g[0] * g[0] + g[1] * g[1]).sqrt();
    [g[0] / n, g[1] / n]
}

/// Fan of unit directions around the inward normal, at the given angles.
pub fn ray_fan(a: &AbcSurface, j: usize, s: [f64; 2], angles: &[f64]) -> Vec<[f64; 2]> {
    let n = inward_normal(a, j, s);
    angles
        .iter()
        .map(|t| [n[0] * t.cos() - n[1] * t.sin(), n[0] * t.sin() + n[1] * t.cos()])
        .collect()
}

/// Decay slopes of `w / w_j` and of `w_ℓ / w_j` along rays from `σ ∈ Γ_j`.
/// `ℓ = j` is skipped, as is `ℓ = j − 1` when `σ` is the corner `σ_j`.
pub fn contact_order_estimate(a: &AbcSurface, j: usize, sigma: [f64; 2], dirs: &[[f64; 2]]) -> ContactSlopes {
    let ts = slope_radii(13);
    let poly = a.trim.as_ref().map(|t| t.polygon());
    let at_corner = a.corners[j].is_some_and(|c| ((c[0] - sigma[0]).powi(2) + (c[1] - sigma[1]).powi(2)).sqrt() < 1e-9);
    let mut rays = Vec::new();
    let mut skipped = Vec::new();
    for d in dirs {
        let pts: Vec<[f64; 2]> = ts.iter().map(|t| [sigma[0] + t * d[0], sigma[1] + t * d[1]]).collect();
        let inside = pts.iter().all(|p| {
            a.reparams[j].q.eval(*p) > 0.0 && poly.as_ref().is_none_or(|poly| point_in_polygon(poly, *p))
        });
        if !inside {
            skipped.push(*d);
            continue;
        }
        let rel: Vec<(f64, Vec<f64>)> = pts.iter().map(|p| a.relative_weights(j, *p)).collect();
        let wb: Vec<f64> = rel.iter().map(|r| r.0).collect();
        let mut w_bar_l = Vec::new();
        for l in 0..a.len() {
            if l == j || (at_corner && l == a.prev(j)) {
                continue;
            }
            let f: Vec<f64> = rel.iter().map(|r| r.1[l]).collect();
            if let Some(k) = loglog_slope(&ts, &f) {
                w_bar_l.push((l, k));
            }
        }
        rays.push(RaySlopes {
            direction: *d,
            w_bar: loglog_slope(&ts, &wb),
            w_bar_l,
        });
    }
    ContactSlopes {
        segment: j,
        sigma,
        rays,
        skipped,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Level {
    G0,
    G1,
    G2,
}

impl Level {
    pub fn order(self) -> usize {
        self as usize
    }

    pub fn parse(s: &str) -> Option<Level> {
        match s.to_ascii_uppercase().as_str() {
            "G0" => Some(Level::G0),
            "G1" => Some(Level::G1),
            "G2" => Some(Level::G2),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    /// Boundary samples in total, spread over the segments.
    pub samples: usize,
    pub normal_offset: f64,
    pub curvature_offset: f64,
    pub rank_grid: usize,
    pub rank_tol: f64,
    pub point_tol: f64,
    pub normal_tol: f64,
    pub curvature_tol: f64,
    pub jacobian_tol: f64,
    /// Points per segment at which decay slopes are measured.
    pub slope_points: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            samples: 500,
            normal_offset: 1e-4,
            curvature_offset: 1e-3,
            rank_grid: 33,
            rank_tol: 1e-8,
            point_tol: 1e-9,
            normal_tol: 1e-8,
            curvature_tol: 1e-6,
            jacobian_tol: 1e-8,
            slope_points: 3,
        }
    }
}

/// Hypotheses at the corner `σ_j` between segments `j − 1` and `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CornerCheck {
    pub corner: usize,
    pub point_gap: f64,
    pub normal_angle: f64,
    pub curvature_gap: f64,
    /// Smallest singular value of `t Dr̄_j + (1 − t) Dr̄_{j−1}` over the grid.
    pub min_singular: f64,
    pub jacobian_gap: f64,
    pub jacobian_prev: [[f64; 2]; 3],
    pub jacobian_next: [[f64; 2]; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentCheck {
    pub segment: usize,
    pub claimed_order: u32,
    /// Max `|a(γ_j(u)) − r_j(u,0)|`.
    pub position_gap: f64,
    /// Max normal angle to the ribbon at the normal offset.
    pub normal_angle: f64,
    /// Max curvature tensor gap to the ribbon at the curvature offset.
    pub curvature_gap: f64,
    pub min_slope: Option<f64>,
    pub slopes: Vec<ContactSlopes>,
    pub samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hypotheses {
    pub point: bool,
    pub normal: bool,
    pub rank: bool,
    pub curvature: bool,
    pub jacobian: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactReport {
    pub level: Level,
    pub corners: Vec<CornerCheck>,
    pub segments: Vec<SegmentCheck>,
    pub hypotheses: Hypotheses,
    /// Verdicts for G0, G1, G2.
    pub verdicts: [bool; 3],
}

impl ContactReport {
    pub fn verdict(&self, level: Level) -> bool {
        self.verdicts[level.order()]
    }

    pub fn max_position_gap(&self) -> f64 {
        self.segments.iter().fold(0.0, |m, s| m.max(s.position_gap))
    }

    pub fn max_normal_angle(&self) -> f64 {
        self.segments.iter().fold(0.0, |m, s| m.max(s.normal_angle))
    }

    pub fn max_curvature_gap(&self) -> f64 {
        self.segments.iter().fold(0.0, |m, s| m.max(s.curvature_gap))
    }
}

fn to_rows(m: &Matrix3x2<f64>) -> [[f64; 2]; 3] {
    [[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]], [m[(2, 0)], m[(2, 1)]]]
}

fn corner_check(a: &AbcSurface, j: usize, sigma: [f64; 2], opts: &VerifyOptions) -> Result<CornerCheck> {
    let i = a.prev(j);
    let (rp, rn) = (&a.ribbons[i].surface, &a.ribbons[j].surface);
    let (sp, sn) = (a.reparams[i].eval(sigma), a.reparams[j].eval(sigma));
    let point_gap = (rp.eval3(sp) - rn.eval3(sn)).norm();
    let (jp, jn) = (rp.jet(sp), rn.jet(sn));
    let normal_angle = diffgeo::normal_angle(&diffgeo::frame_from_jet(&jp)?.normal, &diffgeo::frame_from_jet(&jn)?.normal).0;
    let curvature_gap = diffgeo::curvature_tensor_from_jet(&jp)?.distance(&diffgeo::curvature_tensor_from_jet(&jn)?);
    let dp = a.composed_jacobian(i, sigma);
    let dn = a.composed_jacobian(j, sigma);
    let mut min_singular = f64::INFINITY;
    for k in 0..opts.rank_grid {
        let t = k as f64 / (opts.rank_grid - 1) as f64;
        let m = dn * t + dp * (1.0 - t);
        let sv = m.svd(false, false).singular_values;
        min_singular = min_singular.min(sv.min());
    }
    Ok(CornerCheck {
        corner: j,
        point_gap,
        normal_angle,
        curvature_gap,
        min_singular,
        jacobian_gap: (dp - dn).norm() / (1.0 + dn.norm()),
        jacobian_prev: to_rows(&dp),
        jacobian_next: to_rows(&dn),
    })
}

fn segment_check(a: &AbcSurface, lp: &TrimLoop, j: usize, m: usize, opts: &VerifyOptions, level: Level) -> Result<SegmentCheck> {
    let ribbon = &a.ribbons[j].surface;
    let mut position_gap = 0.0f64;
    let mut normal_angle = 0.0f64;
    let mut curvature_gap = 0.0f64;
    for i in 0..m {
        let u = (i as f64 + 0.5) / m as f64;
        let s = lp.boundary_point(j, u)?;
        position_gap = position_gap.max((a.eval(s)? - ribbon.eval3([u, 0.0])).norm());
        if level >= Level::G1 {
            let d = inward_normal(a, j, s);
            let o = [s[0] + opts.normal_offset * d[0], s[1] + opts.normal_offset * d[1]];
            let na = a.eval_normal(o)?;
            let nr = diffgeo::frame(ribbon, a.reparams[j].eval(o))?.normal;
            normal_angle = normal_angle.max(diffgeo::normal_angle(&na, &nr).0);
        }
        if level >= Level::G2 {
            let d = inward_normal(a, j, s);
            let o = [s[0] + opts.curvature_offset * d[0], s[1] + opts.curvature_offset * d[1]];
            let ea = a.eval_curvature(o)?;
            let er = diffgeo::curvature_tensor(ribbon, a.reparams[j].eval(o))?;
            curvature_gap = curvature_gap.max(ea.distance(&er));
        }
    }
    let angles = [-std::f64::consts::FRAC_PI_4, 0.0, std::f64::consts::FRAC_PI_4];
    let mut slopes = Vec::new();
    for i in 0..opts.slope_points {
        let u = (i as f64 + 0.5) / opts.slope_points as f64;
        let s = lp.boundary_point(j, u)?;
        slopes.push(contact_order_estimate(a, j, s, &ray_fan(a, j, s, &angles)));
    }
    let min_slope = slopes
        .iter()
        .filter_map(|c| c.min_slope())
        .fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.min(x))));
    Ok(SegmentCheck {
        segment: j,
        claimed_order: a.ribbons[j].exponent - 1,
        position_gap,
        normal_angle,
        curvature_gap,
        min_slope,
        slopes,
        samples: m,
    })
}

/// Checks the corner hypotheses of the continuity theorems and measures
/// boundary residuals up to `level`. Failures are reported, not raised,
/// except for evaluation errors.
pub fn verify_contact(a: &AbcSurface, level: Level, opts: &VerifyOptions) -> Result<ContactReport> {
    let mut corners = Vec::new();
    for j in 0..a.len() {
        if let Some(c) = a.corners[j] {
            corners.push(corner_check(a, j, c, opts)?);
        }
    }
    let mut segments = Vec::new();
    if let Some(lp) = &a.trim {
        let m = opts.samples.div_ceil(a.len());
        for j in 0..a.len() {
            segments.push(segment_check(a, lp, j, m, opts, level)?);
        }
    }
    let hypotheses = Hypotheses {
        point: corners.iter().all(|c| c.point_gap < opts.point_tol),
        normal: corners.iter().all(|c| c.normal_angle < opts.normal_tol),
        rank: corners.iter().all(|c| c.min_singular > opts.rank_tol),
        curvature: corners.iter().all(|c| c.curvature_gap < opts.curvature_tol),
        jacobian: corners.iter().all(|c| c.jacobian_gap < opts.jacobian_tol),
    };
    let slopes_ok = |k: usize| {
        segments
            .iter()
            .all(|s| s.min_slope.is_none_or(|m| m >= (k + 1) as f64 - 0.1))
    };
    let g0 = hypotheses.point && slopes_ok(0);
    let g1 = g0 && hypotheses.normal && hypotheses.rank && slopes_ok(1);
    let g2 = g1 && hypotheses.curvature && hypotheses.jacobian && slopes_ok(2);
    Ok(ContactReport {
        level,
        corners,
        segments,
        hypotheses,
        verdicts: [g0, g1, g2],
    })
}

/// Closed form of the two-ribbon blend with a curvature discontinuity at the origin.
pub fn counterexample_closed_form(x: f64, y: f64) -> Vector3<f64> {
    let c = x.powi(3) + 2.0 * y.powi(3);
    let d = x.powi(3) + y.powi(3);
    Vector3::new(x * c, y * c, x * x * (x.powi(3) + 4.0 * y.powi(3))) / d
}

/// Two ribbons over the same parabolic cylinder `z = x²`, reparametrized with
/// Jacobians `I` and `2I` at the origin, weights `x³` and `y³`, no base.
pub fn build_counterexample() -> Result<AbcSurface> {
    let k1 = KnotVector::bezier(1, 0.0, 1.0);
    let k2 = KnotVector::bezier(2, 0.0, 1.0);
    let lin = |f: fn(f64, f64) -> f64| ScalarSurfaceSpline::interpolate(k1.clone(), k1.clone(), f);
    let quad = |f: fn(f64, f64) -> f64| ScalarSurfaceSpline::interpolate(k2.clone(), k2.clone(), f);
    let r_prev = VectorSurfaceSpline::new(vec![quad(|u, _| u)?, quad(|_, v| v)?, quad(|u, _| u * u)?])?;
    let r_next = VectorSurfaceSpline::new(vec![quad(|_, v| 2.0 * v)?, quad(|u, _| 2.0 * u)?, quad(|_, v| 4.0 * v * v)?])?;
    let kappa_prev = Reparametrization::new(lin(|x, _| x)?, lin(|_, y| y)?)?;
    let kappa_next = Reparametrization::new(lin(|_, y| y)?, lin(|x, _| x)?)?;
    let zero = ScalarSurfaceSpline::constant(k1.clone(), k1.clone(), 0.0);
    let base = VectorSurfaceSpline::new(vec![zero.clone(), zero.clone(), zero])?;
    let weights = WeightSystem {
        w: FactoredWeight::new(0.0, vec![]),
        w_per_ribbon: vec![
            FactoredWeight::new(1.0, vec![(lin(|x, _| x)?, 3)]),
            FactoredWeight::new(1.0, vec![(lin(|_, y| y)?, 3)]),
        ],
        exponents: vec![3, 3],
        mode: WeightMode::Plain,
        plateau_value: None,
    };
    AbcSurface::from_parts(
        base,
        vec![RibbonSpec::new(r_prev, 3)?, RibbonSpec::new(r_next, 3)?],
        vec![kappa_prev, kappa_next],
        vec![None, Some([0.0, 0.0])],
        weights,
    )
}

/// Limit of `f(t)` as `t → 0` from samples at `t, t/2, t/4, …` by repeated
/// Richardson elimination assuming an expansion in integer powers of `t`.
pub fn richardson_limit<F: Fn(f64) -> f64>(f: F, t0: f64, levels: usize) -> f64 {
    let mut table: Vec<f64> = (0..levels).map(|k| f(t0 / 2f64.powi(k as i32))).collect();
    for order in 1..levels {
        let fac = 2f64.powi(order as i32);
        for k in 0..levels - order {
            table[k] = (fac * table[k + 1] - table[k]) / (fac - 1.0);
        }
    }
    table[0]
}

/// Both ribbon Jacobians at the counterexample corner as 2x2 blocks.
pub fn counterexample_jacobians(a: &AbcSurface) -> (Matrix2<f64>, Matrix2<f64>) {
    let p = a.composed_jacobian(0, [0.0, 0.0]);
    let n = a.composed_jacobian(1, [0.0, 0.0]);
    (
        Matrix2::new(p[(0, 0)], p[(0, 1)], p[(1, 0)], p[(1, 1)]),
        Matrix2::new(n[(0, 0)], n[(0, 1)], n[(1, 0)], n[(1, 1)]),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counterexample_matches_closed_form() {
        let a = build_counterexample().unwrap();
        for (x, y) in [(0.3, 0.4), (0.5, 0.5), (0.9, 0.05)] {
            let got = a.eval([x, y]).unwrap();
            let want = counterexample_closed_form(x, y);
            assert!((got - want).norm() < 1e-13 * want.norm().max(1.0));
        }
        assert_eq!(a.eval([0.0, 0.0]).unwrap(), Vector3::zeros());
    }

    #[test]
    fn counterexample_jacobians_differ() {
        let a = build_counterexample().unwrap();
        let (p, n) = counterexample_jacobians(&a);
        assert!((p - Matrix2::identity()).norm() < 1e-14);
        assert!((n - Matrix2::identity() * 2.0).norm() < 1e-14);
        let r = verify_contact(&a, Level::G2, &VerifyOptions::default()).unwrap();
        assert!(r.verdict(Level::G1));
        assert!(!r.verdict(Level::G2));
        assert!(!r.hypotheses.jacobian && r.hypotheses.curvature);
    }

    #[test]
    fn gaussian_curvature_limits() {
        let a = build_counterexample().unwrap();
        let k = |phi: f64| {
            let a = &a;
            move |t: f64| a.gaussian_curvature([t * phi.cos(), t * phi.sin()]).unwrap()
        };
        let axis = richardson_limit(k(1e-9), 1e-2, 4);
        assert!(axis.abs() < 1e-6, "{axis}");
        let diag = richardson_limit(k(std::f64::consts::FRAC_PI_4), 1e-2, 4);
        assert!((diag + 41.0 / 81.0).abs() < 1e-6, "{diag}");
    }

    #[test]
    fn quotient_derivatives_match_differences() {
        let a = build_counterexample().unwrap();
        let s = [0.4, 0.3];
        let j = a.eval_jet(s).unwrap();
        let h = 1e-6;
        let fd = (a.eval([s[0] + h, s[1]]).unwrap() - a.eval([s[0] - h, s[1]]).unwrap()) / (2.0 * h);
        assert!((fd - j.du).norm() < 1e-7 * j.du.norm());
        let fd = (a.eval([s[0], s[1] + h]).unwrap() - a.eval([s[0], s[1] - h]).unwrap()) / (2.0 * h);
        assert!((fd - j.dv).norm() < 1e-7 * j.dv.norm());
    }

    #[test]
    fn slope_of_power_law() {
        let ts = slope_radii(9);
        let fs: Vec<f64> = ts.iter().map(|t| 3.0 * t.powi(3)).collect();
        assert!((loglog_slope(&ts, &fs).unwrap() - 3.0).abs() < 1e-12);
        assert!(loglog_slope(&ts, &vec![0.0; 9]).is_none());
    }
}
