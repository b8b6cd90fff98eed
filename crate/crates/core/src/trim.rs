//! Implicitly defined trimming curves, corners, loops and boundary stripes.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::bezier::Rect;
use crate::error::{AbcError, Result};
use crate::jet::Jet2;
use crate::spline::{ScalarSurfaceSpline, VectorSurfaceSpline};

pub const CORNER_TOL: f64 = 1e-9;
const NEWTON_MAX: usize = 50;
const NEWTON_TOL: f64 = 1e-11;

/// The pair `κ = [p, q]`: `p` parametrizes the trimming curve, `q` is its
/// implicit representation (`q = 0` on the curve, `q > 0` inside).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reparametrization {
    pub p: ScalarSurfaceSpline,
    pub q: ScalarSurfaceSpline,
}

impl Reparametrization {
    pub fn new(p: ScalarSurfaceSpline, q: ScalarSurfaceSpline) -> Result<Self> {
        if p.knots_u() != q.knots_u() || p.knots_v() != q.knots_v() {
            return Err(AbcError::Invalid(
                "p and q of a reparametrization must share knot vectors".into(),
            ));
        }
        Ok(Reparametrization { p, q })
    }

    pub fn as_vector(&self) -> VectorSurfaceSpline {
        VectorSurfaceSpline::new(vec![self.p.clone(), self.q.clone()])
            .expect("shared knots checked at construction")
    }

    pub fn domain(&self) -> Rect {
        self.p.domain()
    }

    pub fn eval(&self, s: [f64; 2]) -> [f64; 2] {
        [self.p.eval(s), self.q.eval(s)]
    }

    pub fn jets(&self, s: [f64; 2]) -> [Jet2; 2] {
        let su = self.p.knots_u().find_span(s[0]);
        let sv = self.p.knots_v().find_span(s[1]);
        [self.p.jet_in_span(s, su, sv), self.q.jet_in_span(s, su, sv)]
    }

    /// `Dκ` with rows `∇p` and `∇q`.
    pub fn jacobian(&self, s: [f64; 2]) -> Matrix2<f64> {
        let [p, q] = self.jets(s);
        Matrix2::new(p.du, p.dv, q.du, q.dv)
    }
}

fn newton(kappa: &Reparametrization, target: [f64; 2], guess: [f64; 2]) -> Result<[f64; 2]> {
    let mut x = Vector2::new(guess[0], guess[1]);
    let t = Vector2::new(target[0], target[1]);
    let mut res = f64::INFINITY;
    for _ in 0..NEWTON_MAX {
        let f = Vector2::from(kappa.eval([x[0], x[1]])) - t;
        res = f.norm();
        if res < NEWTON_TOL * 0.01 {
            return Ok([x[0], x[1]]);
        }
        let j = kappa.jacobian([x[0], x[1]]);
        let Some(ji) = j.try_inverse() else {
            return Err(AbcError::NoConvergence { residual: res });
        };
        let dx = ji * f;
        x -= dx;
        if dx.norm() < 1e-15 * (1.0 + x.norm()) {
            let f = Vector2::from(kappa.eval([x[0], x[1]])) - t;
            res = f.norm();
            break;
        }
    }
    if res < NEWTON_TOL {
        Ok([x[0], x[1]])
    } else {
        Err(AbcError::NoConvergence { residual: res })
    }
}

/// Newton solution of `κ(σ) = target` from `guess`.
pub fn solve_corner(kappa: &Reparametrization, target: [f64; 2], guess: [f64; 2]) -> Result<[f64; 2]> {
    newton(kappa, target, guess)
}

/// Points `ξ_i` with `κ(ξ_i) = [i/M, 0]`, by continuation from `start`
/// (a point near `κ = [0, 0]`).
pub fn trace_boundary(kappa: &Reparametrization, start: [f64; 2], samples: usize) -> Result<Vec<[f64; 2]>> {
    trace_range(kappa, start, 0.0, 1.0, samples)
}

/// As `trace_boundary` over `[u0, u1]`.
pub fn trace_range(
    kappa: &Reparametrization,
    start: [f64; 2],
    u0: f64,
    u1: f64,
    samples: usize,
) -> Result<Vec<[f64; 2]>> {
    let samples = samples.max(1);
    let first = newton(kappa, [u0, 0.0], start).map_err(|_| AbcError::TraceSingular { u: u0 })?;
    let mut pts = vec![first];
    let mut x = first;
    let mut u = u0;
    let du_full = (u1 - u0) / samples as f64;
    let dir = du_full.signum();
    let mut step = du_full.abs();
    for i in 1..=samples {
        let target = if i == samples { u1 } else { u0 + du_full * i as f64 };
        while (target - u) * dir > 0.0 {
            let remaining = (target - u).abs();
            let h = step.min(remaining);
            let goal = if h == remaining { target } else { u + dir * h };
            let Some(ji) = kappa.jacobian(x).try_inverse() else {
                return Err(AbcError::TraceSingular { u });
            };
            let tangent = ji * Vector2::new(goal - u, 0.0);
            let pred = [x[0] + tangent[0], x[1] + tangent[1]];
            match newton(kappa, [goal, 0.0], pred) {
                Ok(nx) => {
                    x = nx;
                    u = goal;
                    step = (2.0 * step).min(du_full.abs());
                }
                Err(_) => {
                    step *= 0.5;
                    if step < 1e-10 * du_full.abs() {
                        return Err(AbcError::TraceSingular { u });
                    }
                }
            }
        }
        pts.push(x);
    }
    Ok(pts)
}

/// Crossing-number point-in-polygon test.
pub fn point_in_polygon(poly: &[[f64; 2]], s: [f64; 2]) -> bool {
    let mut inside = false;
    let n = poly.len();
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a[1] > s[1]) != (b[1] > s[1]) {
            let x = a[0] + (s[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
            if s[0] < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

pub fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    let mut a = 0.0;
    for i in 0..n {
        let (p, q) = (poly[i], poly[(i + 1) % n]);
        a += p[0] * q[1] - q[0] * p[1];
    }
    0.5 * a
}

fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

/// Proper intersection of two closed segments (shared endpoints excluded).
pub fn segments_cross(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    let (o1, o2) = (orient(a, b, c), orient(a, b, d));
    let (o3, o4) = (orient(c, d, a), orient(c, d, b));
    o1 * o2 < 0.0 && o3 * o4 < 0.0
}

/// Cell-center membership on an `n × n` grid over `rect`, by scanlines in `u`.
/// Entry `i * n + k` belongs to the cell center at `u`-index `i`, `v`-index `k`.
pub fn inside_mask(poly: &[[f64; 2]], rect: Rect, n: usize) -> Vec<bool> {
    let mut mask = vec![false; n * n];
    let m = poly.len();
    let mut xs = Vec::new();
    for k in 0..n {
        let v = rect.v0 + (rect.v1 - rect.v0) * (k as f64 + 0.5) / n as f64;
        xs.clear();
        for e in 0..m {
            let (a, b) = (poly[e], poly[(e + 1) % m]);
            if (a[1] > v) != (b[1] > v) {
                xs.push(a[0] + (v - a[1]) * (b[0] - a[0]) / (b[1] - a[1]));
            }
        }
        xs.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let mut c = 0;
        for i in 0..n {
            let u = rect.u0 + (rect.u1 - rect.u0) * (i as f64 + 0.5) / n as f64;
            while c < xs.len() && xs[c] < u {
                c += 1;
            }
            mask[i * n + k] = c % 2 == 1;
        }
    }
    mask
}

/// Closed loop of trimming curves with corners and stripe widths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrimLoop {
    pub reparams: Vec<Reparametrization>,
    pub corners: Vec<[f64; 2]>,
    pub stripe_widths: Vec<f64>,
    /// Traced boundary polylines, `traces[ℓ][i]` at `u = i / M`.
    pub traces: Vec<Vec<[f64; 2]>>,
}

/// Trace resolution used for loop validation and membership oracles.
pub const TRACE_SAMPLES: usize = 128;

impl TrimLoop {
    /// Solves the corners from the guesses, traces all segments and checks
    /// closure, simplicity and the sign convention `q > 0` inside.
    pub fn new(
        reparams: Vec<Reparametrization>,
        corner_guesses: &[[f64; 2]],
        stripe_widths: Vec<f64>,
    ) -> Result<Self> {
        let l = reparams.len();
        if l < 2 || corner_guesses.len() != l || stripe_widths.len() != l {
            return Err(AbcError::TrimLoop(format!(
                "need matching counts: {} reparametrizations, {} corners, {} widths",
                l,
                corner_guesses.len(),
                stripe_widths.len()
            )));
        }
        if let Some(h) = stripe_widths.iter().find(|h| !(**h > 0.0)) {
            return Err(AbcError::TrimLoop(format!("stripe width {h} must be positive")));
        }
        let mut corners = Vec::with_capacity(l);
        for (k, g) in reparams.iter().zip(corner_guesses) {
            corners.push(solve_corner(k, [0.0, 0.0], *g)?);
        }
        for j in 0..l {
            let prev = &reparams[(j + l - 1) % l];
            let v = prev.eval(corners[j]);
            if (v[0] - 1.0).abs() > CORNER_TOL || v[1].abs() > CORNER_TOL {
                return Err(AbcError::TrimLoop(format!(
                    "corner {j}: previous reparametrization gives [{:.3e}, {:.3e}] instead of [1, 0]",
                    v[0], v[1]
                )));
            }
        }
        let mut traces = Vec::with_capacity(l);
        for (k, c) in reparams.iter().zip(&corners) {
            traces.push(trace_boundary(k, *c, TRACE_SAMPLES)?);
        }
        let out = TrimLoop {
            reparams,
            corners,
            stripe_widths,
            traces,
        };
        out.check_closure()?;
        out.check_simple()?;
        out.check_orientation()?;
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.reparams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reparams.is_empty()
    }

    pub fn prev(&self, j: usize) -> usize {
        (j + self.len() - 1) % self.len()
    }

    pub fn next(&self, j: usize) -> usize {
        (j + 1) % self.len()
    }

    fn check_closure(&self) -> Result<()> {
        for j in 0..self.len() {
            let end = *self.traces[self.prev(j)].last().unwrap();
            let start = self.traces[j][0];
            let gap = ((end[0] - start[0]).powi(2) + (end[1] - start[1]).powi(2)).sqrt();
            if gap > CORNER_TOL {
                return Err(AbcError::TrimLoop(format!("loop not closed at corner {j}: gap {gap:e}")));
            }
        }
        Ok(())
    }

    fn check_simple(&self) -> Result<()> {
        let poly = self.polygon();
        let n = poly.len();
        for i in 0..n {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            for k in i + 2..n {
                if i == 0 && k == n - 1 {
                    continue;
                }
                let (c, d) = (poly[k], poly[(k + 1) % n]);
                if segments_cross(a, b, c, d) {
                    return Err(AbcError::TrimLoop(format!(
                        "trimming loop self-intersects near ({:.4}, {:.4})",
                        a[0], a[1]
                    )));
                }
            }
        }
        Ok(())
    }

    fn check_orientation(&self) -> Result<()> {
        let poly = self.polygon();
        let area = polygon_area(&poly);
        if area <= 0.0 {
            return Err(AbcError::TrimLoop(
                "trimming loop must run counterclockwise (interior to the left)".into(),
            ));
        }
        for (j, k) in self.reparams.iter().enumerate() {
            let m = self.traces[j][TRACE_SAMPLES / 2];
            let g = k.q.jet(m).gradient();
            let len = (g[0] * g[0] + g[1] * g[1]).sqrt();
            let step = 1e-4 * self.domain_scale();
            let probe = [m[0] + step * g[0] / len, m[1] + step * g[1] / len];
            if !point_in_polygon(&poly, probe) {
                return Err(AbcError::TrimLoop(format!(
                    "q of segment {j} is not positive on the interior side"
                )));
            }
        }
        Ok(())
    }

    fn domain_scale(&self) -> f64 {
        let r = self.reparams[0].domain();
        (r.u1 - r.u0).max(r.v1 - r.v0)
    }

    /// Closed polygon through all traced points (corners not repeated).
    pub fn polygon(&self) -> Vec<[f64; 2]> {
        let mut out = Vec::new();
        for t in &self.traces {
            out.extend_from_slice(&t[..t.len() - 1]);
        }
        out
    }

    /// Sign-convention membership: `q_ℓ(σ) ≥ 0` for every segment.
    pub fn contains(&self, s: [f64; 2]) -> bool {
        self.reparams.iter().all(|k| k.q.eval(s) >= 0.0)
    }

    /// Traced point of segment `j` at parameter `u`, by Newton from the
    /// nearest stored sample.
    pub fn boundary_point(&self, j: usize, u: f64) -> Result<[f64; 2]> {
        let m = self.traces[j].len() - 1;
        let i = ((u * m as f64).round() as isize).clamp(0, m as isize) as usize;
        solve_corner(&self.reparams[j], [u, 0.0], self.traces[j][i])
    }

    /// Grid-based check that stripes are connected and only neighbors meet.
    pub fn check_stripes(&self, rect: Rect, n: usize) -> Result<()> {
        let l = self.len();
        let poly = self.polygon();
        let inside = inside_mask(&poly, rect, n);
        let mut member = vec![vec![false; n * n]; l];
        for i in 0..n {
            for k in 0..n {
                if !inside[i * n + k] {
                    continue;
                }
                let s = rect.point((i as f64 + 0.5) / n as f64, (k as f64 + 0.5) / n as f64);
                for (j, kap) in self.reparams.iter().enumerate() {
                    member[j][i * n + k] = kap.q.eval(s) <= self.stripe_widths[j];
                }
            }
        }
        for a in 0..l {
            if components(&member[a], n) > 1 {
                return Err(AbcError::StripeTopology(format!("stripe {a} is not connected")));
            }
            for b in a + 1..l {
                let both: Vec<bool> = member[a].iter().zip(&member[b]).map(|(x, y)| *x && *y).collect();
                let neighbors = b == self.next(a) || a == self.next(b);
                let any = both.iter().any(|x| *x);
                if any && !neighbors {
                    return Err(AbcError::StripeTopology(format!(
                        "stripes {a} and {b} intersect but are not neighbors"
                    )));
                }
                if neighbors && components(&both, n) > 1 {
                    return Err(AbcError::StripeTopology(format!(
                        "intersection of stripes {a} and {b} is not connected"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Number of 4-connected components of `true` cells.
fn components(mask: &[bool], n: usize) -> usize {
    let mut seen = vec![false; mask.len()];
    let mut count = 0;
    let mut stack = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || seen[start] {
            continue;
        }
        count += 1;
        seen[start] = true;
        stack.push(start);
        while let Some(c) = stack.pop() {
            let (i, k) = (c / n, c % n);
            let mut nb = Vec::with_capacity(4);
            if i > 0 {
                nb.push(c - n);
            }
            if i + 1 < n {
                nb.push(c + n);
            }
            if k > 0 {
                nb.push(c - 1);
            }
            if k + 1 < n {
                nb.push(c + 1);
            }
            for x in nb {
                if mask[x] && !seen[x] {
                    seen[x] = true;
                    stack.push(x);
                }
            }
        }
    }
    count
}

/// `q̄(σ) ≤ h`.
pub fn stripe_contains(qbar: &ScalarSurfaceSpline, h: f64, s: [f64; 2]) -> bool {
    qbar.eval(s) <= h
}
