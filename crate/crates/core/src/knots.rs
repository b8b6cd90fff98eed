//! Clamped knot vectors and B-spline basis evaluation.
//!
//! Basis functions are evaluated with the span index clamped to the first
//! and last non-empty interval. Because the Cox-de Boor recurrence for a
//! fixed span is a polynomial identity in the parameter, this prolongs the
//! boundary pieces to all of the real line.

use serde::{Deserialize, Serialize};

use crate::error::{AbcError, Result};

/// Tolerance used when comparing knot values.
pub const KNOT_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnotVector {
    knots: Vec<f64>,
    degree: usize,
}

impl KnotVector {
    pub fn new(knots: Vec<f64>, degree: usize) -> Result<Self> {
        if knots.len() < 2 * degree + 2 {
            return Err(AbcError::InvalidKnots(format!(
                "{} knots are too few for degree {}",
                knots.len(),
                degree
            )));
        }
        if knots.iter().any(|k| !k.is_finite()) {
            return Err(AbcError::InvalidKnots("non-finite knot".into()));
        }
        if knots.windows(2).any(|w| w[1] < w[0]) {
            return Err(AbcError::InvalidKnots("knots must be nondecreasing".into()));
        }
        let n = knots.len();
        let (a, b) = (knots[0], knots[n - 1]);
        if knots[..=degree].iter().any(|&k| k != a) || knots[n - degree - 1..].iter().any(|&k| k != b)
        {
            return Err(AbcError::InvalidKnots(
                "end knots must have multiplicity degree + 1".into(),
            ));
        }
        if b - a <= KNOT_EPS {
            return Err(AbcError::InvalidKnots("empty natural domain".into()));
        }
        for w in knots[degree + 1..n - degree - 1].iter() {
            if *w <= a || *w >= b {
                return Err(AbcError::InvalidKnots(format!(
                    "inner knot {w} not strictly inside ({a}, {b})"
                )));
            }
        }
        let kv = KnotVector { knots, degree };
        for x in kv.inner_breakpoints() {
            if kv.multiplicity(x) > degree + 1 {
                return Err(AbcError::MultiplicityOverflow(x));
            }
        }
        Ok(kv)
    }

    /// Single polynomial piece on `[a, b]`.
    pub fn bezier(degree: usize, a: f64, b: f64) -> Self {
        let mut knots = vec![a; degree + 1];
        knots.extend(std::iter::repeat(b).take(degree + 1));
        KnotVector { knots, degree }
    }

    /// Clamped vector with `cells` uniform spans of simple knots.
    pub fn uniform(degree: usize, a: f64, b: f64, cells: usize) -> Self {
        let cells = cells.max(1);
        let inner: Vec<f64> = (1..cells)
            .map(|i| a + (b - a) * i as f64 / cells as f64)
            .collect();
        Self::with_inner(degree, a, b, &inner)
    }

    /// Clamped vector with the given simple inner knots.
    pub fn with_inner(degree: usize, a: f64, b: f64, inner: &[f64]) -> Self {
        let mut knots = vec![a; degree + 1];
        knots.extend_from_slice(inner);
        knots.extend(std::iter::repeat(b).take(degree + 1));
        KnotVector { knots, degree }
    }

    /// Clamped vector over the given breakpoints (ends included), each inner
    /// breakpoint repeated according to `mult`.
    pub fn from_breakpoints(degree: usize, breaks: &[f64], mult: &[usize]) -> Self {
        let mut knots = vec![breaks[0]; degree + 1];
        for (x, m) in breaks[1..breaks.len() - 1].iter().zip(mult) {
            knots.extend(std::iter::repeat(*x).take(*m));
        }
        knots.extend(std::iter::repeat(breaks[breaks.len() - 1]).take(degree + 1));
        KnotVector { knots, degree }
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn num_basis(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.knots[0], self.knots[self.knots.len() - 1])
    }

    pub fn contains(&self, x: f64) -> bool {
        let (a, b) = self.domain();
        x >= a - KNOT_EPS && x <= b + KNOT_EPS
    }

    /// Distinct inner knot values.
    pub fn inner_breakpoints(&self) -> Vec<f64> {
        let n = self.knots.len();
        let mut out: Vec<f64> = Vec::new();
        for &k in &self.knots[self.degree + 1..n - self.degree - 1] {
            if out.last().map_or(true, |l| k - l > KNOT_EPS) {
                out.push(k);
            }
        }
        out
    }

    /// Domain ends plus distinct inner knots, ascending.
    pub fn breakpoints(&self) -> Vec<f64> {
        let (a, b) = self.domain();
        let mut out = vec![a];
        out.extend(self.inner_breakpoints());
        out.push(b);
        out
    }

    pub fn multiplicity(&self, x: f64) -> usize {
        self.knots.iter().filter(|k| (*k - x).abs() <= KNOT_EPS).count()
    }

    /// Greville abscissae, one per basis function.
    pub fn greville(&self) -> Vec<f64> {
        let p = self.degree;
        (0..self.num_basis())
            .map(|i| {
                if p == 0 {
                    0.5 * (self.knots[i] + self.knots[i + 1])
                } else {
                    self.knots[i + 1..=i + p].iter().sum::<f64>() / p as f64
                }
            })
            .collect()
    }

    /// Support interval of basis function `i`.
    pub fn support(&self, i: usize) -> (f64, f64) {
        (self.knots[i], self.knots[i + self.degree + 1])
    }

    /// Span index `s` with `knots[s] <= x < knots[s+1]`, clamped to the
    /// first/last non-empty span for prolongation.
    pub fn find_span(&self, x: f64) -> usize {
        let p = self.degree;
        let nb = self.num_basis();
        if x >= self.knots[nb] {
            return nb - 1;
        }
        if x <= self.knots[p] {
            return p;
        }
        // binary search on [p, nb)
        let (mut lo, mut hi) = (p, nb);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if x < self.knots[mid] {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        lo
    }

    /// Nonzero basis values `N_{span-p..=span}(x)`.
    pub fn basis_funs(&self, span: usize, x: f64) -> Vec<f64> {
        let p = self.degree;
        let u = &self.knots;
        let mut n = vec![0.0; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        n[0] = 1.0;
        for j in 1..=p {
            left[j] = x - u[span + 1 - j];
            right[j] = u[span + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = n[r] / (right[r + 1] + left[j - r]);
                n[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            n[j] = saved;
        }
        n
    }

    /// Basis values and derivatives up to order `nd`; `out[k][j]` is the
    /// k-th derivative of `N_{span-p+j}`.
    pub fn basis_derivs(&self, span: usize, x: f64, nd: usize) -> Vec<Vec<f64>> {
        let p = self.degree;
        let u = &self.knots;
        let mut ndu = vec![vec![0.0; p + 1]; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        ndu[0][0] = 1.0;
        for j in 1..=p {
            left[j] = x - u[span + 1 - j];
            right[j] = u[span + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                ndu[j][r] = right[r + 1] + left[j - r];
                let temp = ndu[r][j - 1] / ndu[j][r];
                ndu[r][j] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            ndu[j][j] = saved;
        }
        let mut ders = vec![vec![0.0; p + 1]; nd + 1];
        for j in 0..=p {
            ders[0][j] = ndu[j][p];
        }
        let mut a = vec![vec![0.0; p + 1]; 2];
        for r in 0..=p {
            let (mut s1, mut s2) = (0usize, 1usize);
            a[0][0] = 1.0;
            for k in 1..=nd.min(p) {
                let mut d = 0.0;
                let rk = r as isize - k as isize;
                let pk = p - k;
                if r >= k {
                    a[s2][0] = a[s1][0] / ndu[pk + 1][rk as usize];
                    d = a[s2][0] * ndu[rk as usize][pk];
                }
                let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
                let j2 = if (r as isize - 1) <= pk as isize { k - 1 } else { p - r };
                for j in j1..=j2 {
                    let idx = (rk + j as isize) as usize;
                    a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][idx];
                    d += a[s2][j] * ndu[idx][pk];
                }
                if r <= pk {
                    a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                    d += a[s2][k] * ndu[r][pk];
                }
                ders[k][r] = d;
                std::mem::swap(&mut s1, &mut s2);
            }
        }
        let mut fac = p as f64;
        for k in 1..=nd.min(p) {
            for v in ders[k].iter_mut() {
                *v *= fac;
            }
            fac *= (p - k) as f64;
        }
        ders
    }

    /// Knot vector after inserting `x` once.
    pub fn with_knot(&self, x: f64) -> Result<KnotVector> {
        let (a, b) = self.domain();
        if x <= a + KNOT_EPS || x >= b - KNOT_EPS {
            return Err(AbcError::OutsideDomain { value: x, lo: a, hi: b });
        }
        if self.multiplicity(x) + 1 > self.degree + 1 {
            return Err(AbcError::MultiplicityOverflow(x));
        }
        let mut knots = self.knots.clone();
        let pos = knots.partition_point(|k| *k <= x);
        // snap to an existing knot within tolerance
        let val = knots
            .iter()
            .find(|k| (**k - x).abs() <= KNOT_EPS)
            .copied()
            .unwrap_or(x);
        knots.insert(pos, val);
        Ok(KnotVector {
            knots,
            degree: self.degree,
        })
    }

    /// Derivative knot vector (degree reduced by one, end knots trimmed).
    pub(crate) fn derivative(&self) -> Option<KnotVector> {
        if self.degree == 0 {
            return None;
        }
        let n = self.knots.len();
        Some(KnotVector {
            knots: self.knots[1..n - 1].to_vec(),
            degree: self.degree - 1,
        })
    }
}

/// Merge ascending breakpoint lists with tolerance `KNOT_EPS`.
pub fn merge_breakpoints(lists: &[&[f64]]) -> Vec<f64> {
    let mut all: Vec<f64> = lists.iter().flat_map(|l| l.iter().copied()).collect();
    all.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut out: Vec<f64> = Vec::with_capacity(all.len());
    for x in all {
        if out.last().map_or(true, |l| x - l > KNOT_EPS) {
            out.push(x);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_unclamped() {
        assert!(KnotVector::new(vec![0.0, 0.5, 1.0, 1.0], 1).is_err());
        assert!(KnotVector::new(vec![0.0, 0.0, 1.0, 1.0], 1).is_ok());
    }

    #[test]
    fn rejects_decreasing_and_short() {
        assert!(KnotVector::new(vec![0.0, 0.0, 0.7, 0.5, 1.0, 1.0], 1).is_err());
        assert!(KnotVector::new(vec![0.0, 0.0, 1.0], 1).is_err());
    }

    #[test]
    fn span_clamps_outside_domain() {
        let kv = KnotVector::uniform(3, 0.0, 1.0, 4);
        assert_eq!(kv.find_span(-5.0), 3);
        assert_eq!(kv.find_span(5.0), kv.num_basis() - 1);
        assert_eq!(kv.find_span(1.0), kv.num_basis() - 1);
        assert_eq!(kv.find_span(0.3), 4);
    }

    #[test]
    fn basis_partition_of_unity() {
        let kv = KnotVector::new(vec![0., 0., 0., 0., 0.2, 0.2, 0.7, 1., 1., 1., 1.], 3).unwrap();
        for i in 0..=50 {
            let x = i as f64 / 50.0;
            let s = kv.find_span(x);
            let sum: f64 = kv.basis_funs(s, x).iter().sum();
            assert!((sum - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn derivs_match_basis() {
        let kv = KnotVector::uniform(3, 0.0, 2.0, 3);
        let x = 0.77;
        let s = kv.find_span(x);
        let d = kv.basis_derivs(s, x, 2);
        let b = kv.basis_funs(s, x);
        for j in 0..4 {
            assert!((d[0][j] - b[j]).abs() < 1e-15);
        }
        // derivatives of a partition of unity sum to zero
        assert!(d[1].iter().sum::<f64>().abs() < 1e-12);
        assert!(d[2].iter().sum::<f64>().abs() < 1e-11);
    }

    #[test]
    fn degree_zero_vector() {
        let kv = KnotVector::new(vec![0.0, 1.0], 0).unwrap();
        assert_eq!(kv.num_basis(), 1);
        let s = kv.find_span(0.4);
        assert_eq!(kv.basis_funs(s, 0.4), vec![1.0]);
        assert_eq!(kv.basis_derivs(s, 0.4, 2)[1], vec![0.0]);
    }

    #[test]
    fn greville_of_bezier() {
        let kv = KnotVector::bezier(3, 0.0, 1.0);
        let g = kv.greville();
        assert_eq!(g.len(), 4);
        assert!((g[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn merge_dedups_with_tolerance() {
        let m = merge_breakpoints(&[&[0.0, 0.5, 1.0], &[0.0, 0.5 + 1e-14, 0.75, 1.0]]);
        assert_eq!(m.len(), 4);
    }
}
