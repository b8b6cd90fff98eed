//! Tensor-product polynomial patches in Bernstein form over a rectangle.
//!
//! These are the exact per-cell pieces used by spline arithmetic and by the
//! rational export. Products and degree elevation are computed with the
//! closed-form Bernstein product rule, so no interpolation error enters.

use serde::{Deserialize, Serialize};

/// Axis-aligned parameter rectangle `[u0, u1] x [v0, v1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub u0: f64,
    pub u1: f64,
    pub v0: f64,
    pub v1: f64,
}

impl Rect {
    pub fn new(u0: f64, u1: f64, v0: f64, v1: f64) -> Self {
        Rect { u0, u1, v0, v1 }
    }

    pub fn contains(&self, s: [f64; 2]) -> bool {
        s[0] >= self.u0 && s[0] <= self.u1 && s[1] >= self.v0 && s[1] <= self.v1
    }

    pub fn area(&self) -> f64 {
        (self.u1 - self.u0) * (self.v1 - self.v0)
    }

    pub fn center(&self) -> [f64; 2] {
        [0.5 * (self.u0 + self.u1), 0.5 * (self.v0 + self.v1)]
    }

    /// Map unit-square coordinates to the rectangle.
    pub fn point(&self, s: f64, t: f64) -> [f64; 2] {
        [self.u0 + s * (self.u1 - self.u0), self.v0 + t * (self.v1 - self.v0)]
    }
}

pub(crate) fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut r = 1.0;
    for i in 0..k {
        r = r * (n - i) as f64 / (i + 1) as f64;
    }
    r.round()
}

fn binomial_row(n: usize) -> Vec<f64> {
    (0..=n).map(|k| binomial(n, k)).collect()
}

/// Scalar tensor-product Bernstein polynomial over `rect`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BezierPatch {
    pub deg: (usize, usize),
    pub rect: Rect,
    /// Row-major, `coeffs[i * (deg.1 + 1) + j]`, `i` along u.
    pub coeffs: Vec<f64>,
}

fn de_casteljau(c: &mut [f64], t: f64) -> f64 {
    let n = c.len();
    for r in 1..n {
        for i in 0..n - r {
            c[i] = (1.0 - t) * c[i] + t * c[i + 1];
        }
    }
    c[0]
}

impl BezierPatch {
    pub fn new(deg: (usize, usize), rect: Rect, coeffs: Vec<f64>) -> Self {
        assert_eq!(coeffs.len(), (deg.0 + 1) * (deg.1 + 1));
        BezierPatch { deg, rect, coeffs }
    }

    pub fn constant(rect: Rect, c: f64) -> Self {
        BezierPatch {
            deg: (0, 0),
            rect,
            coeffs: vec![c],
        }
    }

    pub fn coeff(&self, i: usize, j: usize) -> f64 {
        self.coeffs[i * (self.deg.1 + 1) + j]
    }

    fn local(&self, s: [f64; 2]) -> (f64, f64) {
        let r = &self.rect;
        ((s[0] - r.u0) / (r.u1 - r.u0), (s[1] - r.v0) / (r.v1 - r.v0))
    }

    /// Evaluates at a global parameter; valid (as polynomial) outside the rectangle too.
    pub fn eval(&self, s: [f64; 2]) -> f64 {
        let (x, y) = self.local(s);
        let (p, q) = self.deg;
        let mut col = vec![0.0; p + 1];
        let mut row = vec![0.0; q + 1];
        for i in 0..=p {
            row.copy_from_slice(&self.coeffs[i * (q + 1)..(i + 1) * (q + 1)]);
            col[i] = de_casteljau(&mut row, y);
        }
        de_casteljau(&mut col, x)
    }

    /// Exact product over the same rectangle.
    pub fn mul(&self, other: &BezierPatch) -> BezierPatch {
        debug_assert!(rect_close(&self.rect, &other.rect));
        let (p1, q1) = self.deg;
        let (p2, q2) = other.deg;
        let (p, q) = (p1 + p2, q1 + q2);
        let (bp1, bq1, bp2, bq2) = (
            binomial_row(p1),
            binomial_row(q1),
            binomial_row(p2),
            binomial_row(q2),
        );
        let (bp, bq) = (binomial_row(p), binomial_row(q));
        // scale inputs by their binomials, convolve, then divide
        let a: Vec<f64> = (0..=p1)
            .flat_map(|i| (0..=q1).map(move |j| (i, j)))
            .map(|(i, j)| self.coeff(i, j) * bp1[i] * bq1[j])
            .collect();
        let b: Vec<f64> = (0..=p2)
            .flat_map(|i| (0..=q2).map(move |j| (i, j)))
            .map(|(i, j)| other.coeff(i, j) * bp2[i] * bq2[j])
            .collect();
        let mut c = vec![0.0; (p + 1) * (q + 1)];
        for i in 0..=p1 {
            for j in 0..=q1 {
                let av = a[i * (q1 + 1) + j];
                if av == 0.0 {
                    continue;
                }
                for k in 0..=p2 {
                    let row = (i + k) * (q + 1) + j;
                    let brow = &b[k * (q2 + 1)..(k + 1) * (q2 + 1)];
                    for (l, bv) in brow.iter().enumerate() {
                        c[row + l] += av * bv;
                    }
                }
            }
        }
        for i in 0..=p {
            for j in 0..=q {
                c[i * (q + 1) + j] /= bp[i] * bq[j];
            }
        }
        BezierPatch {
            deg: (p, q),
            rect: self.rect,
            coeffs: c,
        }
    }

    pub fn elevate_to(&self, p: usize, q: usize) -> BezierPatch {
        assert!(p >= self.deg.0 && q >= self.deg.1);
        if (p, q) == self.deg {
            return self.clone();
        }
        let (tp, tq) = (p - self.deg.0, q - self.deg.1);
        let ones = BezierPatch {
            deg: (tp, tq),
            rect: self.rect,
            coeffs: vec![1.0; (tp + 1) * (tq + 1)],
        };
        self.mul(&ones)
    }

    pub fn add(&self, other: &BezierPatch) -> BezierPatch {
        let p = self.deg.0.max(other.deg.0);
        let q = self.deg.1.max(other.deg.1);
        let a = self.elevate_to(p, q);
        let b = other.elevate_to(p, q);
        BezierPatch {
            deg: (p, q),
            rect: self.rect,
            coeffs: a.coeffs.iter().zip(&b.coeffs).map(|(x, y)| x + y).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> BezierPatch {
        BezierPatch {
            deg: self.deg,
            rect: self.rect,
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    pub fn powi(&self, r: u32) -> BezierPatch {
        let mut out = BezierPatch::constant(self.rect, 1.0);
        for _ in 0..r {
            out = out.mul(self);
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()))
    }

    /// True when all coefficients agree to within `tol` (relative to their magnitude).
    pub fn is_constant(&self, tol: f64) -> bool {
        let c0 = self.coeffs[0];
        let scale = self.max_abs().max(1.0);
        self.coeffs.iter().all(|c| (c - c0).abs() <= tol * scale)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| *c == 0.0)
    }

    /// Collapses a patch whose coefficients are all equal to a degree-(0,0) patch.
    pub fn reduce_constant(&self, tol: f64) -> BezierPatch {
        if self.is_constant(tol) {
            BezierPatch::constant(self.rect, self.coeffs[0])
        } else {
            self.clone()
        }
    }

    /// Polynomial degree actually attained in each direction, via vanishing
    /// forward differences of the coefficient rows/columns.
    pub fn actual_degree(&self, tol: f64) -> (usize, usize) {
        let (p, q) = self.deg;
        let scale = self.max_abs().max(1e-300);
        let deg_along = |n: usize, lines: Vec<Vec<f64>>| -> usize {
            let mut d = n;
            while d > 0 {
                // degree <= d-1 iff all d-th differences vanish
                let ok = lines.iter().all(|line| {
                    let mut diff = line.clone();
                    for _ in 0..d {
                        for i in 0..diff.len() - 1 {
                            diff[i] = diff[i + 1] - diff[i];
                        }
                        diff.pop();
                    }
                    diff.iter().all(|x| x.abs() <= tol * scale * (1u64 << d.min(60)) as f64)
                });
                if ok {
                    d -= 1;
                } else {
                    break;
                }
            }
            d
        };
        let rows_u: Vec<Vec<f64>> = (0..=q)
            .map(|j| (0..=p).map(|i| self.coeff(i, j)).collect())
            .collect();
        let rows_v: Vec<Vec<f64>> = (0..=p)
            .map(|i| (0..=q).map(|j| self.coeff(i, j)).collect())
            .collect();
        (deg_along(p, rows_u), deg_along(q, rows_v))
    }
}

fn split(c: &[f64], t: f64) -> (Vec<f64>, Vec<f64>) {
    let n = c.len();
    let mut w = c.to_vec();
    let mut left = vec![0.0; n];
    let mut right = vec![0.0; n];
    left[0] = w[0];
    right[n - 1] = w[n - 1];
    for r in 1..n {
        for i in 0..n - r {
            w[i] = (1.0 - t) * w[i] + t * w[i + 1];
        }
        left[r] = w[0];
        right[n - 1 - r] = w[n - 1 - r];
    }
    (left, right)
}

/// Coefficients of the same polynomial over the local interval `[t0, t1]`.
fn subdivide_1d(c: &[f64], t0: f64, t1: f64) -> Vec<f64> {
    if (1.0 - t0).abs() >= t1.abs() {
        let (_, right) = split(c, t0);
        split(&right, (t1 - t0) / (1.0 - t0)).0
    } else {
        let (left, _) = split(c, t1);
        split(&left, t0 / t1).1
    }
}

impl BezierPatch {
    /// The same polynomial in Bernstein form over another rectangle.
    pub fn sub_patch(&self, rect: Rect) -> BezierPatch {
        let (p, q) = self.deg;
        let r = &self.rect;
        let (a0, a1) = ((rect.u0 - r.u0) / (r.u1 - r.u0), (rect.u1 - r.u0) / (r.u1 - r.u0));
        let (b0, b1) = ((rect.v0 - r.v0) / (r.v1 - r.v0), (rect.v1 - r.v0) / (r.v1 - r.v0));
        let mut tmp = vec![0.0; (p + 1) * (q + 1)];
        for i in 0..=p {
            let row = subdivide_1d(&self.coeffs[i * (q + 1)..(i + 1) * (q + 1)], b0, b1);
            tmp[i * (q + 1)..(i + 1) * (q + 1)].copy_from_slice(&row);
        }
        let mut out = vec![0.0; (p + 1) * (q + 1)];
        for j in 0..=q {
            let col: Vec<f64> = (0..=p).map(|i| tmp[i * (q + 1) + j]).collect();
            let sub = subdivide_1d(&col, a0, a1);
            for i in 0..=p {
                out[i * (q + 1) + j] = sub[i];
            }
        }
        BezierPatch {
            deg: self.deg,
            rect,
            coeffs: out,
        }
    }
}

fn rect_close(a: &Rect, b: &Rect) -> bool {
    let tol = 1e-9;
    (a.u0 - b.u0).abs() < tol
        && (a.u1 - b.u1).abs() < tol
        && (a.v0 - b.v0).abs() < tol
        && (a.v1 - b.v1).abs() < tol
}

/// Bernstein basis values of degree `n` at local parameter `t`.
pub(crate) fn bernstein_all(n: usize, t: f64) -> Vec<f64> {
    let mut b = vec![0.0; n + 1];
    b[0] = 1.0;
    let s = 1.0 - t;
    for j in 1..=n {
        let mut saved = 0.0;
        for k in 0..j {
            let temp = b[k];
            b[k] = saved + s * temp;
            saved = t * temp;
        }
        b[j] = saved;
    }
    b
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> Rect {
        Rect::new(0.0, 1.0, 0.0, 1.0)
    }

    #[test]
    fn bernstein_sums_to_one() {
        for n in 0..8 {
            let s: f64 = bernstein_all(n, 0.37).iter().sum();
            assert!((s - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn product_matches_pointwise() {
        let a = BezierPatch::new((2, 1), unit(), vec![1.0, -2.0, 0.5, 3.0, 2.0, -1.0]);
        let b = BezierPatch::new((1, 2), unit(), vec![0.3, 1.0, -0.7, 2.0, 0.1, 0.4]);
        let c = a.mul(&b);
        assert_eq!(c.deg, (3, 3));
        for &(x, y) in &[(0.1, 0.2), (0.5, 0.5), (0.9, 0.3), (1.3, -0.2)] {
            let e = a.eval([x, y]) * b.eval([x, y]);
            assert!((c.eval([x, y]) - e).abs() < 1e-13);
        }
    }

    #[test]
    fn elevation_preserves_values() {
        let a = BezierPatch::new((1, 1), Rect::new(1.0, 3.0, -1.0, 0.0), vec![1.0, 2.0, 3.0, 5.0]);
        let e = a.elevate_to(4, 3);
        assert_eq!(e.actual_degree(1e-12), (1, 1));
        for &(x, y) in &[(1.5, -0.5), (2.9, -0.1)] {
            assert!((a.eval([x, y]) - e.eval([x, y])).abs() < 1e-13);
        }
    }

    #[test]
    fn sub_patch_preserves_polynomial() {
        let a = BezierPatch::new((2, 1), unit(), vec![1.0, -2.0, 0.5, 3.0, 2.0, -1.0]);
        for rect in [Rect::new(0.2, 0.7, 0.1, 0.4), Rect::new(-0.5, 1.5, 0.3, 2.0)] {
            let s = a.sub_patch(rect);
            for &(x, y) in &[(0.3, 0.2), (0.6, 0.35), (1.2, 1.0)] {
                assert!((s.eval([x, y]) - a.eval([x, y])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_detection() {
        let c = BezierPatch::constant(unit(), 2.5).elevate_to(5, 5);
        assert!(c.is_constant(1e-14));
        assert_eq!(c.reduce_constant(1e-14).deg, (0, 0));
        assert_eq!(c.actual_degree(1e-12), (0, 0));
    }
}
