//! Straight critical levelsets of the boundary parameter `p_ℓ`.

use serde::{Deserialize, Serialize};

use crate::error::{AbcError, Result};
use crate::knots::KnotVector;
use crate::trim::Reparametrization;

/// Tolerance for `p_ℓ = u` along a straightened levelset.
pub const LEVELSET_TOL: f64 = 1e-9;
const CHECK_SAMPLES: usize = 16;

/// The segment `{anchor + t δ : 0 ≤ t ≤ extent}` on which `p_ℓ = knot`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelSegment {
    pub segment: usize,
    pub knot: f64,
    pub anchor: [f64; 2],
    pub direction: [f64; 2],
    pub extent: f64,
}

impl LevelSegment {
    pub fn point(&self, t: f64) -> [f64; 2] {
        [self.anchor[0] + t * self.direction[0], self.anchor[1] + t * self.direction[1]]
    }

    pub fn end(&self) -> [f64; 2] {
        self.point(self.extent)
    }

    /// Largest `|p_ℓ − knot|` at evenly spaced points of the segment.
    pub fn straightness(&self, kappa: &Reparametrization) -> f64 {
        (0..=CHECK_SAMPLES)
            .map(|i| (kappa.p.eval(self.point(self.extent * i as f64 / CHECK_SAMPLES as f64)) - self.knot).abs())
            .fold(0.0, f64::max)
    }
}

/// Interpolation pairs `(anchor + t δ, [knot, t])` for `count` evenly spaced
/// `t ∈ [0, extent]`.
pub fn straightening_constraints(level: &LevelSegment, count: usize) -> Vec<([f64; 2], [f64; 2])> {
    let count = count.max(2);
    (0..count)
        .map(|i| {
            let t = level.extent * i as f64 / (count - 1) as f64;
            (level.point(t), [level.knot, t])
        })
        .collect()
}

/// Interpolation pairs that make `p_ℓ` constant and `q_ℓ = t` along the whole
/// segment: on every knot span of `(ku, kv)` crossed by the segment, the
/// restriction is a polynomial of degree `deg_u + deg_v` in `t`, pinned at
/// at least that many plus one Chebyshev nodes.
pub fn span_constraints(
    level: &LevelSegment,
    ku: &KnotVector,
    kv: &KnotVector,
    per_span: usize,
) -> Vec<([f64; 2], [f64; 2])> {
    let mut ts = vec![0.0, level.extent];
    for (kvec, axis) in [(ku, 0), (kv, 1)] {
        let d = level.direction[axis];
        if d.abs() < 1e-300 {
            continue;
        }
        for x in kvec.inner_breakpoints() {
            let t = (x - level.anchor[axis]) / d;
            if t > 0.0 && t < level.extent {
                ts.push(t);
            }
        }
    }
    ts.sort_by(f64::total_cmp);
    ts.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    let n = per_span.max(ku.degree() + kv.degree() + 1);
    let mut out = Vec::new();
    for w in ts.windows(2) {
        for k in 0..n {
            let c = 0.5 - 0.5 * ((2 * k + 1) as f64 * std::f64::consts::PI / (2 * n) as f64).cos();
            let t = w[0] + c * (w[1] - w[0]);
            out.push((level.point(t), [level.knot, t]));
        }
    }
    out
}

/// The levelset `p_ℓ = knot` leaving the boundary at `anchor`, as a straight
/// segment reaching `q_ℓ = target`. The direction is tangent to the levelset
/// at the anchor and normalized to `∇q_ℓ · δ = 1`.
pub fn critical_levelset(
    kappa: &Reparametrization,
    segment: usize,
    knot: f64,
    anchor: [f64; 2],
    target: f64,
) -> Result<LevelSegment> {
    let j = kappa.jacobian(anchor);
    let tangent = [-j[(0, 1)], j[(0, 0)]];
    let dq = j[(1, 0)] * tangent[0] + j[(1, 1)] * tangent[1];
    if dq.abs() < 1e-12 {
        return Err(AbcError::Partition(format!(
            "levelset p = {knot} of segment {segment} is tangent to the boundary"
        )));
    }
    let direction = [tangent[0] / dq, tangent[1] / dq];
    let mut level = LevelSegment {
        segment,
        knot,
        anchor,
        direction,
        extent: target,
    };
    // q along the segment is t up to fitting error
    let mut t = target;
    for _ in 0..50 {
        let x = level.point(t);
        let g = kappa.q.jet(x).gradient();
        let f = kappa.q.eval(x) - target;
        let d = g[0] * direction[0] + g[1] * direction[1];
        if d.abs() < 1e-14 {
            break;
        }
        let step = f / d;
        t -= step;
        if step.abs() < 1e-15 * (1.0 + t.abs()) {
            break;
        }
    }
    if !(t > 0.0) || (kappa.q.eval(level.point(t)) - target).abs() > 1e-9 * target.max(1.0) {
        return Err(AbcError::Partition(format!(
            "levelset p = {knot} of segment {segment} does not reach q = {target}"
        )));
    }
    level.extent = t;
    let dev = level.straightness(kappa);
    if dev > LEVELSET_TOL {
        return Err(AbcError::Partition(format!(
            "levelset p = {knot} of segment {segment} is not straight: deviation {dev:e}"
        )));
    }
    Ok(level)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spline::ScalarSurfaceSpline;

    fn affine() -> Reparametrization {
        let k = KnotVector::bezier(1, -1.0, 2.0);
        let p = ScalarSurfaceSpline::interpolate(k.clone(), k.clone(), |x, y| 0.5 * x + 0.25 * y).unwrap();
        let q = ScalarSurfaceSpline::interpolate(k.clone(), k, |_, y| 2.0 * y).unwrap();
        Reparametrization::new(p, q).unwrap()
    }

    #[test]
    fn constraints_are_collinear_with_matching_t() {
        let l = LevelSegment {
            segment: 0,
            knot: 0.3,
            anchor: [0.2, 0.0],
            direction: [0.1, 1.0],
            extent: 0.4,
        };
        let c = straightening_constraints(&l, 3);
        assert_eq!(c.len(), 3);
        for (s, tau) in &c {
            assert_eq!(tau[0], 0.3);
            let t = tau[1];
            assert!((s[0] - (0.2 + 0.1 * t)).abs() < 1e-15 && (s[1] - t).abs() < 1e-15);
        }
        assert_eq!(c[2].1[1], 0.4);
    }

    #[test]
    fn span_constraints_cover_every_crossed_span() {
        let l = LevelSegment {
            segment: 0,
            knot: 0.5,
            anchor: [0.5, 0.0],
            direction: [0.0, 1.0],
            extent: 0.6,
        };
        let k = KnotVector::uniform(3, 0.0, 1.0, 4);
        let c = span_constraints(&l, &k, &k, 0);
        // crosses v = 0.25 and v = 0.5: three pieces of 7 nodes
        assert_eq!(c.len(), 21);
        for (s, tau) in &c {
            assert_eq!(s[1], tau[1]);
        }
        let in_first = c.iter().filter(|(s, _)| s[1] < 0.25).count();
        assert_eq!(in_first, 7);
    }

    #[test]
    fn affine_levelset_is_straight_and_reaches_target() {
        let k = affine();
        let anchor = [0.6, 0.0];
        let l = critical_levelset(&k, 0, 0.3, anchor, 0.2).unwrap();
        assert!(l.straightness(&k) < 1e-14);
        assert!((k.q.eval(l.end()) - 0.2).abs() < 1e-13);
        assert!((l.extent - 0.2).abs() < 1e-13);
    }
}
