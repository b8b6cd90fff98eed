//! Tensor-product polynomial B-spline surfaces.

use nalgebra::{DMatrix, Vector3};
use serde::{Deserialize, Serialize};

use crate::bezier::{BezierPatch, Rect};
use crate::error::{AbcError, Result};
use crate::jet::Jet2;
use crate::knots::KnotVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    U,
    V,
}

/// Coordinate degree of a bivariate spline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DegreePair {
    pub u: usize,
    pub v: usize,
}

impl DegreePair {
    pub fn new(u: usize, v: usize) -> Self {
        DegreePair { u, v }
    }

    pub fn total(&self) -> usize {
        self.u + self.v
    }

    pub fn max(self, o: DegreePair) -> DegreePair {
        DegreePair::new(self.u.max(o.u), self.v.max(o.v))
    }

    pub fn scaled(self, k: usize) -> DegreePair {
        DegreePair::new(self.u * k, self.v * k)
    }
}

impl std::ops::Add for DegreePair {
    type Output = DegreePair;
    fn add(self, o: DegreePair) -> DegreePair {
        DegreePair::new(self.u + o.u, self.v + o.v)
    }
}

impl std::fmt::Display for DegreePair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{},{}]", self.u, self.v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarSurfaceSpline {
    knots_u: KnotVector,
    knots_v: KnotVector,
    /// Row-major, `coeffs[i * nv + j]`, `i` indexing the u basis.
    coeffs: Vec<f64>,
}

impl ScalarSurfaceSpline {
    pub fn new(knots_u: KnotVector, knots_v: KnotVector, coeffs: Vec<f64>) -> Result<Self> {
        let (nu, nv) = (knots_u.num_basis(), knots_v.num_basis());
        if coeffs.len() != nu * nv {
            return Err(AbcError::CoefficientShape {
                got_u: coeffs.len() / nv.max(1),
                got_v: nv,
                want_u: nu,
                want_v: nv,
            });
        }
        Ok(ScalarSurfaceSpline {
            knots_u,
            knots_v,
            coeffs,
        })
    }

    pub fn constant(knots_u: KnotVector, knots_v: KnotVector, c: f64) -> Self {
        let n = knots_u.num_basis() * knots_v.num_basis();
        ScalarSurfaceSpline {
            knots_u,
            knots_v,
            coeffs: vec![c; n],
        }
    }

    /// Interpolates `f` at the Greville points; exact for functions in the space.
    pub fn interpolate<F: Fn(f64, f64) -> f64>(
        knots_u: KnotVector,
        knots_v: KnotVector,
        f: F,
    ) -> Result<Self> {
        let gu = knots_u.greville();
        let gv = knots_v.greville();
        let bu = collocation(&knots_u, &gu);
        let bv = collocation(&knots_v, &gv);
        let vals = DMatrix::from_fn(gu.len(), gv.len(), |i, j| f(gu[i], gv[j]));
        let bu_inv = bu
            .try_inverse()
            .ok_or_else(|| AbcError::Singular("Greville collocation (u)".into()))?;
        let bv_inv = bv
            .try_inverse()
            .ok_or_else(|| AbcError::Singular("Greville collocation (v)".into()))?;
        let c = bu_inv * vals * bv_inv.transpose();
        Ok(Self::from_matrix(knots_u, knots_v, &c))
    }

    pub(crate) fn from_matrix(knots_u: KnotVector, knots_v: KnotVector, m: &DMatrix<f64>) -> Self {
        let (nu, nv) = (m.nrows(), m.ncols());
        let mut coeffs = Vec::with_capacity(nu * nv);
        for i in 0..nu {
            for j in 0..nv {
                coeffs.push(m[(i, j)]);
            }
        }
        ScalarSurfaceSpline {
            knots_u,
            knots_v,
            coeffs,
        }
    }

    pub(crate) fn to_matrix(&self) -> DMatrix<f64> {
        let (nu, nv) = self.shape();
        DMatrix::from_fn(nu, nv, |i, j| self.coeffs[i * nv + j])
    }

    pub fn knots_u(&self) -> &KnotVector {
        &self.knots_u
    }

    pub fn knots_v(&self) -> &KnotVector {
        &self.knots_v
    }

    pub fn knots(&self, dir: Direction) -> &KnotVector {
        match dir {
            Direction::U => &self.knots_u,
            Direction::V => &self.knots_v,
        }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.knots_u.num_basis(), self.knots_v.num_basis())
    }

    pub fn coeff(&self, i: usize, j: usize) -> f64 {
        self.coeffs[i * self.knots_v.num_basis() + j]
    }

    pub fn degree(&self) -> DegreePair {
        DegreePair::new(self.knots_u.degree(), self.knots_v.degree())
    }

    pub fn domain(&self) -> Rect {
        let (u0, u1) = self.knots_u.domain();
        let (v0, v1) = self.knots_v.domain();
        Rect::new(u0, u1, v0, v1)
    }

    pub fn eval(&self, s: [f64; 2]) -> f64 {
        let su = self.knots_u.find_span(s[0]);
        let sv = self.knots_v.find_span(s[1]);
        self.eval_in_span(s, su, sv)
    }

    /// Evaluates the polynomial piece belonging to the given spans.
    pub fn eval_in_span(&self, s: [f64; 2], su: usize, sv: usize) -> f64 {
        let (p, q) = (self.knots_u.degree(), self.knots_v.degree());
        let nv = self.knots_v.num_basis();
        let bu = self.knots_u.basis_funs(su, s[0]);
        let bv = self.knots_v.basis_funs(sv, s[1]);
        let mut acc = 0.0;
        for (a, nu_a) in bu.iter().enumerate() {
            let row = (su - p + a) * nv + sv - q;
            let mut r = 0.0;
            for (b, nv_b) in bv.iter().enumerate() {
                r += self.coeffs[row + b] * nv_b;
            }
            acc += nu_a * r;
        }
        acc
    }

    /// Value with first and second partial derivatives.
    pub fn jet(&self, s: [f64; 2]) -> Jet2 {
        let su = self.knots_u.find_span(s[0]);
        let sv = self.knots_v.find_span(s[1]);
        self.jet_in_span(s, su, sv)
    }

    pub fn jet_in_span(&self, s: [f64; 2], su: usize, sv: usize) -> Jet2 {
        let (p, q) = (self.knots_u.degree(), self.knots_v.degree());
        let nv = self.knots_v.num_basis();
        let du = self.knots_u.basis_derivs(su, s[0], 2);
        let dv = self.knots_v.basis_derivs(sv, s[1], 2);
        let mut j = Jet2::default();
        for a in 0..=p {
            let row = (su - p + a) * nv + sv - q;
            let (mut r0, mut r1, mut r2) = (0.0, 0.0, 0.0);
            for b in 0..=q {
                let c = self.coeffs[row + b];
                r0 += c * dv[0][b];
                r1 += c * dv[1][b];
                r2 += c * dv[2][b];
            }
            j.v += du[0][a] * r0;
            j.du += du[1][a] * r0;
            j.duu += du[2][a] * r0;
            j.dv += du[0][a] * r1;
            j.duv += du[1][a] * r1;
            j.dvv += du[0][a] * r2;
        }
        j
    }

    /// Exact partial derivative spline of the given order.
    pub fn partial(&self, dir: Direction, order: usize) -> ScalarSurfaceSpline {
        let mut out = self.clone();
        for _ in 0..order {
            out = out.partial_once(dir);
        }
        out
    }

    fn partial_once(&self, dir: Direction) -> ScalarSurfaceSpline {
        let kv = self.knots(dir);
        let Some(dk) = kv.derivative() else {
            let (a, b) = kv.domain();
            let zero = KnotVector::bezier(0, a, b);
            return match dir {
                Direction::U => ScalarSurfaceSpline::constant(zero, self.knots_v.clone(), 0.0),
                Direction::V => ScalarSurfaceSpline::constant(self.knots_u.clone(), zero, 0.0),
            };
        };
        let p = kv.degree() as f64;
        let t = kv.knots();
        let m = self.to_matrix();
        let n = kv.num_basis();
        let diff = |i: usize| -> f64 {
            let d = t[i + kv.degree() + 1] - t[i + 1];
            if d.abs() < 1e-300 {
                0.0
            } else {
                p / d
            }
        };
        match dir {
            Direction::U => {
                let r = DMatrix::from_fn(n - 1, m.ncols(), |i, j| {
                    diff(i) * (m[(i + 1, j)] - m[(i, j)])
                });
                Self::from_matrix(dk, self.knots_v.clone(), &r)
            }
            Direction::V => {
                let r = DMatrix::from_fn(m.nrows(), n - 1, |i, j| {
                    diff(j) * (m[(i, j + 1)] - m[(i, j)])
                });
                Self::from_matrix(self.knots_u.clone(), dk, &r)
            }
        }
    }

    /// Boehm knot insertion; the spline is unchanged pointwise.
    pub fn insert_knot(&self, dir: Direction, x: f64) -> Result<ScalarSurfaceSpline> {
        let kv = self.knots(dir);
        let new_kv = kv.with_knot(x)?;
        let a = insertion_matrix(kv, x);
        let m = self.to_matrix();
        Ok(match dir {
            Direction::U => Self::from_matrix(new_kv, self.knots_v.clone(), &(a * m)),
            Direction::V => Self::from_matrix(self.knots_u.clone(), new_kv, &(m * a.transpose())),
        })
    }

    /// Bezier pieces over the grid given by the breakpoint lists, which must
    /// contain this spline's own breakpoints and share its domain.
    pub fn bezier_pieces(&self, breaks_u: &[f64], breaks_v: &[f64]) -> Vec<Vec<BezierPatch>> {
        let eu = bezier_extraction(&self.knots_u, breaks_u);
        let ev = bezier_extraction(&self.knots_v, breaks_v);
        let y = &eu * self.to_matrix() * ev.transpose();
        let (p, q) = (self.knots_u.degree(), self.knots_v.degree());
        let mut out = Vec::with_capacity(breaks_u.len() - 1);
        for cu in 0..breaks_u.len() - 1 {
            let mut row = Vec::with_capacity(breaks_v.len() - 1);
            for cv in 0..breaks_v.len() - 1 {
                let rect = Rect::new(breaks_u[cu], breaks_u[cu + 1], breaks_v[cv], breaks_v[cv + 1]);
                let mut c = Vec::with_capacity((p + 1) * (q + 1));
                for a in 0..=p {
                    for b in 0..=q {
                        c.push(y[(cu * (p + 1) + a, cv * (q + 1) + b)]);
                    }
                }
                row.push(BezierPatch::new((p, q), rect, c));
            }
            out.push(row);
        }
        out
    }

    /// Bezier piece on a single cell lying inside one knot span.
    pub fn bezier_on(&self, rect: Rect) -> BezierPatch {
        let bu = cell_breaks(&self.knots_u, rect.u0, rect.u1);
        let bv = cell_breaks(&self.knots_v, rect.v0, rect.v1);
        let pieces = self.bezier_pieces(&bu.0, &bv.0);
        pieces[bu.1][bv.1].clone()
    }

    /// Inverse of `bezier_pieces`: least-squares recovery of B-spline
    /// coefficients in the given space from per-cell Bezier data.
    pub fn from_bezier_pieces(
        knots_u: KnotVector,
        knots_v: KnotVector,
        pieces: &[Vec<BezierPatch>],
    ) -> Result<Self> {
        let (p, q) = (knots_u.degree(), knots_v.degree());
        let bu = knots_u.breakpoints();
        let bv = knots_v.breakpoints();
        let cu = bu.len() - 1;
        let cv = bv.len() - 1;
        if pieces.len() != cu || pieces.iter().any(|r| r.len() != cv) {
            return Err(AbcError::Invalid("piece grid does not match knot spans".into()));
        }
        let mut y = DMatrix::zeros(cu * (p + 1), cv * (q + 1));
        for (iu, row) in pieces.iter().enumerate() {
            for (iv, piece) in row.iter().enumerate() {
                let e = piece.elevate_to(p, q);
                for a in 0..=p {
                    for b in 0..=q {
                        y[(iu * (p + 1) + a, iv * (q + 1) + b)] = e.coeff(a, b);
                    }
                }
            }
        }
        let eu = bezier_extraction(&knots_u, &bu);
        let ev = bezier_extraction(&knots_v, &bv);
        let eu_p = pinv(&eu)?;
        let ev_p = pinv(&ev)?;
        let x = eu_p * y * ev_p.transpose();
        Ok(Self::from_matrix(knots_u, knots_v, &x))
    }

    pub fn map_coeffs<F: Fn(f64) -> f64>(&self, f: F) -> ScalarSurfaceSpline {
        ScalarSurfaceSpline {
            knots_u: self.knots_u.clone(),
            knots_v: self.knots_v.clone(),
            coeffs: self.coeffs.iter().map(|c| f(*c)).collect(),
        }
    }

    pub fn with_coeffs(&self, coeffs: Vec<f64>) -> ScalarSurfaceSpline {
        assert_eq!(coeffs.len(), self.coeffs.len());
        ScalarSurfaceSpline {
            knots_u: self.knots_u.clone(),
            knots_v: self.knots_v.clone(),
            coeffs,
        }
    }

    /// Same function after inserting every knot of `knots_u`/`knots_v`
    /// missing from this spline. Both targets must contain this spline's knots.
    pub fn refine_to(&self, knots_u: &KnotVector, knots_v: &KnotVector) -> Result<Self> {
        let mut out = self.clone();
        for (dir, target) in [(Direction::U, knots_u), (Direction::V, knots_v)] {
            for x in target.inner_breakpoints() {
                let want = target.multiplicity(x);
                while out.knots(dir).multiplicity(x) < want {
                    out = out.insert_knot(dir, x)?;
                }
            }
        }
        Ok(out)
    }
}

/// Bezier pieces of a scalar spline over its own knot spans, for fast
/// restriction to cells.
#[derive(Debug, Clone)]
pub struct PieceGrid {
    pub breaks_u: Vec<f64>,
    pub breaks_v: Vec<f64>,
    pub pieces: Vec<Vec<BezierPatch>>,
}

fn locate(breaks: &[f64], lo: f64, hi: f64, dir: char) -> Result<usize> {
    let tol = 1e-9;
    for &x in &breaks[1..breaks.len() - 1] {
        if x > lo + tol && x < hi - tol {
            return Err(AbcError::StraddlesKnot { knot: x, direction: dir });
        }
    }
    let mid = 0.5 * (lo + hi);
    let n = breaks.len() - 1;
    let mut k = 0;
    while k + 1 < n && mid >= breaks[k + 1] {
        k += 1;
    }
    Ok(k)
}

impl PieceGrid {
    pub fn new(f: &ScalarSurfaceSpline) -> Self {
        let breaks_u = f.knots_u().breakpoints();
        let breaks_v = f.knots_v().breakpoints();
        let pieces = f.bezier_pieces(&breaks_u, &breaks_v);
        PieceGrid {
            breaks_u,
            breaks_v,
            pieces,
        }
    }

    /// Bernstein form over `cell`, which must lie in a single span
    /// (prolongation applies beyond the domain).
    pub fn restrict(&self, cell: Rect) -> Result<BezierPatch> {
        let iu = locate(&self.breaks_u, cell.u0, cell.u1, 'u')?;
        let iv = locate(&self.breaks_v, cell.v0, cell.v1, 'v')?;
        Ok(self.pieces[iu][iv].sub_patch(cell))
    }
}

/// Collocation matrix `B[i][k] = N_k(x_i)`.
pub(crate) fn collocation(kv: &KnotVector, xs: &[f64]) -> DMatrix<f64> {
    let n = kv.num_basis();
    let p = kv.degree();
    let mut m = DMatrix::zeros(xs.len(), n);
    for (i, &x) in xs.iter().enumerate() {
        let s = kv.find_span(x);
        for (a, b) in kv.basis_funs(s, x).iter().enumerate() {
            m[(i, s - p + a)] = *b;
        }
    }
    m
}

/// Matrix mapping old coefficients to new ones when inserting `x` once.
pub(crate) fn insertion_matrix(kv: &KnotVector, x: f64) -> DMatrix<f64> {
    let p = kv.degree();
    let n = kv.num_basis();
    let t = kv.knots();
    // span k with t[k] <= x < t[k+1]
    let k = kv.find_span(x);
    let mut a = DMatrix::zeros(n + 1, n);
    for i in 0..=n {
        if i + p <= k {
            a[(i, i)] = 1.0;
        } else if i >= k + 1 {
            a[(i, i - 1)] = 1.0;
        } else {
            let alpha = (x - t[i]) / (t[i + p] - t[i]);
            a[(i, i)] = alpha;
            a[(i, i - 1)] = 1.0 - alpha;
        }
    }
    a
}

/// Rows: Bezier coefficients cell by cell over `breaks`; columns: B-spline basis.
pub(crate) fn bezier_extraction(kv: &KnotVector, breaks: &[f64]) -> DMatrix<f64> {
    let p = kv.degree();
    let target = p.max(1);
    let mut cur = kv.clone();
    let mut mat = DMatrix::<f64>::identity(kv.num_basis(), kv.num_basis());
    for &x in &breaks[1..breaks.len() - 1] {
        while cur.multiplicity(x) < target {
            let a = insertion_matrix(&cur, x);
            mat = a * mat;
            cur = cur.with_knot(x).expect("breakpoint inside domain");
        }
    }
    let cells = breaks.len() - 1;
    let mut out = DMatrix::zeros(cells * (p + 1), kv.num_basis());
    for c in 0..cells {
        let first = cur.find_span(0.5 * (breaks[c] + breaks[c + 1])) - p;
        for a in 0..=p {
            out.set_row(c * (p + 1) + a, &mat.row(first + a));
        }
    }
    out
}

/// Breakpoints of the span containing `[a, b]`, with the cell index.
fn cell_breaks(kv: &KnotVector, a: f64, b: f64) -> (Vec<f64>, usize) {
    let mut bps = kv.breakpoints();
    for x in [a, b] {
        if !bps.iter().any(|k| (k - x).abs() <= crate::knots::KNOT_EPS) && kv.contains(x) {
            bps.push(x);
        }
    }
    bps.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let idx = bps
        .iter()
        .position(|k| (k - a).abs() <= crate::knots::KNOT_EPS)
        .unwrap_or(0);
    (bps, idx)
}

pub(crate) fn pinv(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.max();
    svd.pseudo_inverse(smax * 1e-13)
        .map_err(|e| AbcError::Singular(e.to_string()))
}

/// Two or three scalar splines sharing knot vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorSurfaceSpline {
    components: Vec<ScalarSurfaceSpline>,
}

/// Position with first and second partial derivatives of a surface in R^3.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceJet {
    pub p: Vector3<f64>,
    pub du: Vector3<f64>,
    pub dv: Vector3<f64>,
    pub duu: Vector3<f64>,
    pub duv: Vector3<f64>,
    pub dvv: Vector3<f64>,
}

impl SurfaceJet {
    pub fn from_components(c: [Jet2; 3]) -> Self {
        let v = |f: fn(&Jet2) -> f64| Vector3::new(f(&c[0]), f(&c[1]), f(&c[2]));
        SurfaceJet {
            p: v(|j| j.v),
            du: v(|j| j.du),
            dv: v(|j| j.dv),
            duu: v(|j| j.duu),
            duv: v(|j| j.duv),
            dvv: v(|j| j.dvv),
        }
    }

    pub fn components(&self) -> [Jet2; 3] {
        let mk = |k: usize| Jet2 {
            v: self.p[k],
            du: self.du[k],
            dv: self.dv[k],
            duu: self.duu[k],
            duv: self.duv[k],
            dvv: self.dvv[k],
        };
        [mk(0), mk(1), mk(2)]
    }
}

/// Anything that can report a second-order jet at a parameter.
pub trait Surface {
    fn jet(&self, s: [f64; 2]) -> SurfaceJet;

    fn point(&self, s: [f64; 2]) -> Vector3<f64> {
        self.jet(s).p
    }
}

impl VectorSurfaceSpline {
    pub fn new(components: Vec<ScalarSurfaceSpline>) -> Result<Self> {
        if components.len() < 2 || components.len() > 3 {
            return Err(AbcError::Invalid("vector spline needs 2 or 3 components".into()));
        }
        let (ku, kv) = (components[0].knots_u(), components[0].knots_v());
        if components
            .iter()
            .any(|c| c.knots_u() != ku || c.knots_v() != kv)
        {
            return Err(AbcError::Invalid("components must share knot vectors".into()));
        }
        Ok(VectorSurfaceSpline { components })
    }

    /// Greville interpolation of a vector-valued function.
    pub fn interpolate<F: Fn(f64, f64) -> [f64; 3]>(
        knots_u: KnotVector,
        knots_v: KnotVector,
        f: F,
    ) -> Result<Self> {
        let comps = (0..3)
            .map(|k| ScalarSurfaceSpline::interpolate(knots_u.clone(), knots_v.clone(), |u, v| f(u, v)[k]))
            .collect::<Result<Vec<_>>>()?;
        Self::new(comps)
    }

    pub fn components(&self) -> &[ScalarSurfaceSpline] {
        &self.components
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn degree(&self) -> DegreePair {
        self.components[0].degree()
    }

    pub fn knots_u(&self) -> &KnotVector {
        self.components[0].knots_u()
    }

    pub fn knots_v(&self) -> &KnotVector {
        self.components[0].knots_v()
    }

    pub fn domain(&self) -> Rect {
        self.components[0].domain()
    }

    pub fn eval(&self, s: [f64; 2]) -> Vec<f64> {
        self.components.iter().map(|c| c.eval(s)).collect()
    }

    pub fn eval3(&self, s: [f64; 2]) -> Vector3<f64> {
        let v = self.eval(s);
        Vector3::new(v[0], v[1], v.get(2).copied().unwrap_or(0.0))
    }

    pub fn jets(&self, s: [f64; 2]) -> Vec<Jet2> {
        let su = self.knots_u().find_span(s[0]);
        let sv = self.knots_v().find_span(s[1]);
        self.components
            .iter()
            .map(|c| c.jet_in_span(s, su, sv))
            .collect()
    }

    pub fn jets_in_span(&self, s: [f64; 2], su: usize, sv: usize) -> Vec<Jet2> {
        self.components
            .iter()
            .map(|c| c.jet_in_span(s, su, sv))
            .collect()
    }

    pub fn insert_knot(&self, dir: Direction, x: f64) -> Result<Self> {
        let comps = self
            .components
            .iter()
            .map(|c| c.insert_knot(dir, x))
            .collect::<Result<Vec<_>>>()?;
        Self::new(comps)
    }
}

impl Surface for VectorSurfaceSpline {
    fn jet(&self, s: [f64; 2]) -> SurfaceJet {
        let j = self.jets(s);
        let z = j.get(2).copied().unwrap_or_default();
        SurfaceJet::from_components([j[0], j[1], z])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cubic() -> KnotVector {
        KnotVector::new(vec![0., 0., 0., 0., 0.3, 0.6, 0.6, 1., 1., 1., 1.], 3).unwrap()
    }

    fn sample_spline() -> ScalarSurfaceSpline {
        let ku = cubic();
        let kv = KnotVector::uniform(2, 0.0, 2.0, 3);
        let n = ku.num_basis() * kv.num_basis();
        let coeffs = (0..n).map(|i| ((i * 37 % 11) as f64 - 5.0) * 0.3).collect();
        ScalarSurfaceSpline::new(ku, kv, coeffs).unwrap()
    }

    #[test]
    fn constant_spline_evaluates_to_constant() {
        let s = ScalarSurfaceSpline::constant(cubic(), cubic(), 3.0);
        for &p in &[[0.1, 0.2], [0.5, 0.9]] {
            assert!((s.eval(p) - 3.0).abs() < 1e-14);
        }
        // prolonged pieces carry cancellation proportional to their growth
        assert!((s.eval([-1.0, 2.0]) - 3.0).abs() < 1e-11);
    }

    #[test]
    fn bilinear_linear_precision() {
        let k = KnotVector::bezier(1, 0.0, 1.0);
        let s = ScalarSurfaceSpline::new(k.clone(), k, vec![0.0, 0.5, 0.5, 1.0]).unwrap();
        assert!((s.eval([0.5, 0.5]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let k = KnotVector::bezier(1, 0.0, 1.0);
        assert!(ScalarSurfaceSpline::new(k.clone(), k, vec![0.0; 3]).is_err());
    }

    #[test]
    fn partial_of_u_is_one() {
        let k = KnotVector::uniform(2, 0.0, 1.0, 3);
        let s = ScalarSurfaceSpline::interpolate(k.clone(), k, |u, _| u).unwrap();
        let d = s.partial(Direction::U, 1);
        assert!((d.eval([0.3, 0.8]) - 1.0).abs() < 1e-13);
        let c = ScalarSurfaceSpline::constant(cubic(), cubic(), 2.0).partial(Direction::V, 1);
        assert!(c.coeffs().iter().all(|x| x.abs() < 1e-14));
        let z = s.partial(Direction::U, 5);
        assert!(z.coeffs().iter().all(|x| *x == 0.0));
    }

    #[test]
    fn jet_matches_partials() {
        let s = sample_spline();
        let p = [0.41, 1.3];
        let j = s.jet(p);
        let du = s.partial(Direction::U, 1).eval(p);
        let dvv = s.partial(Direction::V, 2).eval(p);
        let duv = s.partial(Direction::U, 1).partial(Direction::V, 1).eval(p);
        assert!((j.du - du).abs() < 1e-11);
        assert!((j.dvv - dvv).abs() < 1e-10);
        assert!((j.duv - duv).abs() < 1e-10);
    }

    #[test]
    fn insert_knot_keeps_values_and_counts() {
        let s = sample_spline();
        let r = s.insert_knot(Direction::U, 0.45).unwrap();
        assert_eq!(r.shape().0, s.shape().0 + 1);
        for k in 0..20 {
            let p = [k as f64 / 19.0, 2.0 * ((k * 7) % 19) as f64 / 19.0];
            assert!((r.eval(p) - s.eval(p)).abs() < 1e-13);
        }
        // existing knot 0.6 already has multiplicity 2 in a cubic vector
        let r2 = s.insert_knot(Direction::U, 0.6).unwrap();
        let r3 = r2.insert_knot(Direction::U, 0.6).unwrap();
        assert!(r3.insert_knot(Direction::U, 0.6).is_err());
        assert!(s.insert_knot(Direction::U, 1.5).is_err());
    }

    #[test]
    fn bezier_pieces_round_trip() {
        let s = sample_spline();
        let bu = s.knots_u().breakpoints();
        let bv = s.knots_v().breakpoints();
        let pieces = s.bezier_pieces(&bu, &bv);
        let p = [0.5, 0.9];
        let cell = &pieces[1][1];
        assert!(cell.rect.contains(p));
        assert!((cell.eval(p) - s.eval(p)).abs() < 1e-13);
        let back =
            ScalarSurfaceSpline::from_bezier_pieces(s.knots_u().clone(), s.knots_v().clone(), &pieces)
                .unwrap();
        for (a, b) in back.coeffs().iter().zip(s.coeffs()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
