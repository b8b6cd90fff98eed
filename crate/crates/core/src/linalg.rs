//! Quadrature, fairness matrices and equality-constrained least squares.

use nalgebra::{DMatrix, DVector};

use crate::error::{AbcError, Result};
use crate::knots::KnotVector;

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, 0.0);
            for k in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * k + 1) as f64 * z * p1 - k as f64 * p2) / (k + 1) as f64;
            }
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// `G[i][j] = ∫ N_i^(k) N_j^(k)` over the domain of `kv`.
pub fn gram_1d(kv: &KnotVector, k: usize) -> DMatrix<f64> {
    let n = kv.num_basis();
    let p = kv.degree();
    let mut g = DMatrix::zeros(n, n);
    if k > p {
        return g;
    }
    let (gx, gw) = gauss_legendre(p + 1);
    let bps = kv.breakpoints();
    for c in 0..bps.len() - 1 {
        let (a, b) = (bps[c], bps[c + 1]);
        let span = kv.find_span(0.5 * (a + b));
        for (x, w) in gx.iter().zip(&gw) {
            let t = 0.5 * (a + b) + 0.5 * (b - a) * x;
            let d = kv.basis_derivs(span, t, k);
            let wt = 0.5 * (b - a) * w;
            for i in 0..=p {
                for j in 0..=p {
                    g[(span - p + i, span - p + j)] += wt * d[k][i] * d[k][j];
                }
            }
        }
    }
    g
}

/// Thin-plate energy `∫ f_uu² + 2 f_uv² + f_vv²` as a quadratic form on the
/// row-major coefficient vector of a tensor-product spline.
pub fn thin_plate(ku: &KnotVector, kv: &KnotVector) -> DMatrix<f64> {
    let (u0, u1, u2) = (gram_1d(ku, 0), gram_1d(ku, 1), gram_1d(ku, 2));
    let (v0, v1, v2) = (gram_1d(kv, 0), gram_1d(kv, 1), gram_1d(kv, 2));
    u2.kronecker(&v0) + u1.kronecker(&v1) * 2.0 + u0.kronecker(&v2)
}

/// Moore-Penrose pseudo-inverse with relative cutoff.
pub fn pinv(m: &DMatrix<f64>, rel: f64) -> DMatrix<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return DMatrix::zeros(m.ncols(), m.nrows());
    }
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let cut = smax * rel;
    let u = svd.u.unwrap();
    let vt = svd.v_t.unwrap();
    let mut out = DMatrix::zeros(m.ncols(), m.nrows());
    for (k, s) in svd.singular_values.iter().enumerate() {
        if *s > cut && *s > 0.0 {
            out += vt.row(k).transpose() * u.column(k).transpose() / *s;
        }
    }
    out
}

/// Numerical rank and an orthonormal basis of the null space.
pub fn null_space(c: &DMatrix<f64>, rel: f64) -> (usize, DMatrix<f64>) {
    let n = c.ncols();
    let padded = if c.nrows() < n {
        let mut p = DMatrix::zeros(n, n);
        p.rows_mut(0, c.nrows()).copy_from(c);
        p
    } else {
        c.clone()
    };
    let svd = padded.svd(false, true);
    let smax = svd.singular_values.max();
    let rank = svd.singular_values.iter().filter(|s| **s > smax * rel).count();
    let vt = svd.v_t.unwrap();
    // singular values are not guaranteed sorted
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|a, b| svd.singular_values[*b].partial_cmp(&svd.singular_values[*a]).unwrap());
    let mut z = DMatrix::zeros(n, n - rank);
    for (k, &idx) in order[rank..].iter().enumerate() {
        z.set_column(k, &vt.row(idx).transpose());
    }
    (rank, z)
}

/// Relative singular value cutoff for equality constraints.
pub const EQUALITY_RANK_TOL: f64 = 1e-14;
const REFINE_STEPS: usize = 3;

/// Equality-constrained, fairness-regularized least squares.
///
/// Minimizes `|A x - b|² + λ xᵀ M x` subject to `C x = d`.
pub struct ConstrainedLsq<'a> {
    pub a: &'a DMatrix<f64>,
    pub b: &'a DVector<f64>,
    pub c: &'a DMatrix<f64>,
    pub d: &'a DVector<f64>,
    pub fairness: &'a DMatrix<f64>,
    pub lambda: f64,
}

#[derive(Debug, Clone)]
pub struct LsqSolution {
    pub x: DVector<f64>,
    pub objective: f64,
    pub constraint_residual: f64,
}

impl ConstrainedLsq<'_> {
    pub fn solve(&self) -> Result<LsqSolution> {
        Ok(self.solve_many(&[(self.b, self.d)])?.remove(0))
    }

    /// Solves for several right-hand sides `(b, d)` sharing `A`, `C` and the
    /// fairness term; `self.b` and `self.d` are ignored.
    pub fn solve_many(&self, rhs: &[(&DVector<f64>, &DVector<f64>)]) -> Result<Vec<LsqSolution>> {
        let n = self.fairness.ncols();
        let has_c = self.c.nrows() > 0;
        let pc = if has_c { pinv(self.c, EQUALITY_RANK_TOL) } else { DMatrix::zeros(n, 0) };
        let z = if has_c { null_space(self.c, EQUALITY_RANK_TOL).1 } else { DMatrix::identity(n, n) };
        // the pseudo-inverse alone is not accurate enough on ill-conditioned
        // consistent systems; refinement restores the residual
        let refine = |x: &mut DVector<f64>, d: &DVector<f64>| {
            if has_c {
                for _ in 0..REFINE_STEPS {
                    let r = d - self.c * &*x;
                    *x += &pc * r;
                }
            }
        };
        let reduced = if z.ncols() == 0 {
            None
        } else {
            let az = self.a * &z;
            let lhs = az.transpose() * &az + z.transpose() * self.fairness * &z * self.lambda;
            Some((az, pinv(&lhs, 1e-14)))
        };
        let mut out = Vec::with_capacity(rhs.len());
        for (b, d) in rhs {
            let mut x0 = if has_c { &pc * *d } else { DVector::zeros(n) };
            refine(&mut x0, d);
            if has_c {
                let res = self.c * &x0 - *d;
                let tol = 1e-9 * (1.0 + d.norm());
                if res.norm() > tol {
                    let indices = res
                        .iter()
                        .enumerate()
                        .filter(|(_, r)| r.abs() > tol / (res.len() as f64).sqrt())
                        .map(|(i, _)| i)
                        .collect();
                    return Err(AbcError::Infeasible {
                        indices,
                        residual: res.norm(),
                    });
                }
            }
            let mut x = match &reduced {
                None => x0,
                Some((az, li)) => {
                    let r0 = *b - self.a * &x0;
                    let g = az.transpose() * r0 - z.transpose() * (self.fairness * &x0) * self.lambda;
                    let y = li * g;
                    x0 + &z * y
                }
            };
            refine(&mut x, d);
            let r = self.a * &x - *b;
            let objective = r.norm_squared() + self.lambda * (x.transpose() * self.fairness * &x)[(0, 0)];
            let constraint_residual = if has_c { (self.c * &x - *d).amax() } else { 0.0 };
            out.push(LsqSolution {
                x,
                objective,
                constraint_residual,
            });
        }
        Ok(out)
    }
}

/// Symmetric quadratic form with sparse access.
pub trait QuadForm {
    fn dim(&self) -> usize;
    fn entry(&self, a: usize, b: usize) -> f64;
    /// Indices `b` with possibly nonzero `entry(a, b)`.
    fn neighbors(&self, a: usize) -> Vec<usize>;
}

impl QuadForm for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }
    fn entry(&self, a: usize, b: usize) -> f64 {
        self[(a, b)]
    }
    fn neighbors(&self, _a: usize) -> Vec<usize> {
        (0..self.nrows()).collect()
    }
}

/// Thin-plate energy of a tensor-product spline, assembled on demand from
/// one-dimensional Gram matrices.
pub struct ThinPlateOp {
    gu: [DMatrix<f64>; 3],
    gv: [DMatrix<f64>; 3],
    nu: usize,
    nv: usize,
    pu: usize,
    pv: usize,
}

impl ThinPlateOp {
    pub fn new(ku: &KnotVector, kv: &KnotVector) -> Self {
        ThinPlateOp {
            gu: [gram_1d(ku, 0), gram_1d(ku, 1), gram_1d(ku, 2)],
            gv: [gram_1d(kv, 0), gram_1d(kv, 1), gram_1d(kv, 2)],
            nu: ku.num_basis(),
            nv: kv.num_basis(),
            pu: ku.degree(),
            pv: kv.degree(),
        }
    }
}

impl QuadForm for ThinPlateOp {
    fn dim(&self) -> usize {
        self.nu * self.nv
    }
    fn entry(&self, a: usize, b: usize) -> f64 {
        let (i, j) = (a / self.nv, a % self.nv);
        let (k, l) = (b / self.nv, b % self.nv);
        self.gu[2][(i, k)] * self.gv[0][(j, l)]
            + 2.0 * self.gu[1][(i, k)] * self.gv[1][(j, l)]
            + self.gu[0][(i, k)] * self.gv[2][(j, l)]
    }
    fn neighbors(&self, a: usize) -> Vec<usize> {
        let (i, j) = (a / self.nv, a % self.nv);
        let mut out = Vec::new();
        for k in i.saturating_sub(self.pu)..(i + self.pu + 1).min(self.nu) {
            for l in j.saturating_sub(self.pv)..(j + self.pv + 1).min(self.nv) {
                out.push(k * self.nv + l);
            }
        }
        out
    }
}

/// Sparse linear equality `Σ coef·x[index] = rhs`.
pub type SparseRow = (Vec<(usize, f64)>, f64);

/// Minimizes the quadratic form with some entries fixed, subject to sparse
/// equalities; free entries may carry per-entry lower bounds.
///
/// Bounded entries are handled by an active set: violators are clamped to
/// their bound and the problem is re-solved until none remain.
pub fn fair_fill<Q: QuadForm>(
    m: &Q,
    fixed: &[Option<f64>],
    lower: Option<&[f64]>,
    equalities: &[SparseRow],
) -> Result<DVector<f64>> {
    let n = fixed.len();
    let mut fix: Vec<Option<f64>> = fixed.to_vec();
    for _round in 0..n + 1 {
        let free: Vec<usize> = (0..n).filter(|i| fix[*i].is_none()).collect();
        let mut x = DVector::from_iterator(n, fix.iter().map(|v| v.unwrap_or(0.0)));
        if !free.is_empty() {
            let nf = free.len();
            let mut pos = vec![usize::MAX; n];
            for (k, &f) in free.iter().enumerate() {
                pos[f] = k;
            }
            let mut mff = DMatrix::zeros(nf, nf);
            let mut g = DVector::zeros(nf);
            for (k, &f) in free.iter().enumerate() {
                for b in m.neighbors(f) {
                    let e = m.entry(f, b);
                    if e == 0.0 {
                        continue;
                    }
                    if pos[b] != usize::MAX {
                        mff[(k, pos[b])] = e;
                    } else if let Some(v) = fix[b] {
                        g[k] += e * v;
                    }
                }
            }
            // equalities restricted to free entries
            let mut rows = Vec::new();
            let mut rhs = Vec::new();
            for (coefs, r) in equalities {
                let mut row = vec![0.0; nf];
                let mut rr = *r;
                let mut any = false;
                for &(i, c) in coefs {
                    if pos[i] != usize::MAX {
                        row[pos[i]] += c;
                        any = any || c != 0.0;
                    } else {
                        rr -= c * fix[i].unwrap_or(0.0);
                    }
                }
                if any {
                    rows.push(row);
                    rhs.push(rr);
                } else if rr.abs() > 1e-12 {
                    return Err(AbcError::Infeasible {
                        indices: vec![rows.len()],
                        residual: rr.abs(),
                    });
                }
            }
            let (x0, z) = if rows.is_empty() {
                (DVector::zeros(nf), None)
            } else {
                let e = DMatrix::from_fn(rows.len(), nf, |i, j| rows[i][j]);
                let d = DVector::from_vec(rhs);
                let (_, z) = null_space(&e, 1e-11);
                let x0 = pinv(&e, 1e-11) * &d;
                let res = (&e * &x0 - &d).amax();
                if res > 1e-11 * (1.0 + d.amax()) {
                    return Err(AbcError::Infeasible {
                        indices: (0..d.len()).collect(),
                        residual: res,
                    });
                }
                (x0, Some(z))
            };
            let sol = match z {
                None => solve_spd(&mff, &(-&g))?,
                Some(z) => {
                    if z.ncols() == 0 {
                        x0
                    } else {
                        let lhs = z.transpose() * &mff * &z;
                        let rhs = -(z.transpose() * (&g + &mff * &x0));
                        let y = solve_spd(&lhs, &rhs)?;
                        x0 + z * y
                    }
                }
            };
            if sol.iter().any(|v| !v.is_finite()) {
                return Err(AbcError::Singular("fairness fill".into()));
            }
            for (k, &f) in free.iter().enumerate() {
                x[f] = sol[k];
            }
        }
        let Some(lb) = lower else {
            return Ok(x);
        };
        let violators: Vec<usize> = (0..n)
            .filter(|i| fix[*i].is_none() && x[*i] < lb[*i])
            .collect();
        if violators.is_empty() {
            return Ok(x);
        }
        for i in violators {
            fix[i] = Some(lb[i]);
        }
    }
    Err(AbcError::Singular("active set did not settle".into()))
}

fn solve_spd(m: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let scale = m.diagonal().amax().max(1e-300);
    if let Some(ch) = m.clone().cholesky() {
        if ch.l().diagonal().min() > 1e-7 * scale.sqrt() {
            return Ok(ch.solve(rhs));
        }
    }
    Ok(pinv(m, 1e-13) * rhs)
}
