//! Blending weights: plain products of the implicit boundary functions and
//! the boundary-stripe plateau variant.

use rayon::prelude::*;

use crate::arith;
use crate::bezier::{BezierPatch, Rect};
use crate::error::{AbcError, Result};
use crate::fit::basis_row;
use crate::jet::Jet2;
use crate::knots::{merge_breakpoints, KnotVector, KNOT_EPS};
use crate::linalg::{fair_fill, SparseRow, ThinPlateOp};
use crate::spline::{DegreePair, Direction, PieceGrid, ScalarSurfaceSpline};
use crate::trim::{inside_mask, point_in_polygon, TrimLoop};

/// Margin on sampled extrema when deciding support membership.
pub const CLASSIFY_MARGIN: f64 = 1e-10;
pub const MAX_REFINE_ROUNDS: usize = 12;
/// Grid resolution of the positivity screen.
pub const POSITIVITY_GRID: usize = 512;
/// Values below `-POSITIVITY_TOL · max|coeff|` fail the screen.
pub const POSITIVITY_TOL: f64 = 1e-5;
/// Relative tolerance on weights along traced boundaries.
pub const IMPLICIT_TOL: f64 = 1e-10;
const CELL_SAMPLES: usize = 9;
const CONSTANT_TOL: f64 = 1e-13;

#[derive(Debug, Clone)]
pub struct Factor {
    pub spline: ScalarSurfaceSpline,
    pub exponent: u32,
    grid: PieceGrid,
}

/// `constant · ∏ fᵢ^{rᵢ}`, kept unexpanded for evaluation and degree bookkeeping.
#[derive(Debug, Clone)]
pub struct FactoredWeight {
    pub constant: f64,
    factors: Vec<Factor>,
}

impl FactoredWeight {
    pub fn new(constant: f64, factors: Vec<(ScalarSurfaceSpline, u32)>) -> Self {
        let factors = factors
            .into_iter()
            .map(|(spline, exponent)| Factor {
                grid: PieceGrid::new(&spline),
                spline,
                exponent,
            })
            .collect();
        FactoredWeight { constant, factors }
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn is_identically_zero(&self) -> bool {
        self.constant == 0.0
    }

    pub fn eval(&self, s: [f64; 2]) -> f64 {
        self.factors
            .iter()
            .fold(self.constant, |acc, f| acc * f.spline.eval(s).powi(f.exponent as i32))
    }

    pub fn jet(&self, s: [f64; 2]) -> Jet2 {
        self.factors
            .iter()
            .fold(Jet2::constant(self.constant), |acc, f| acc * f.spline.jet(s).powi(f.exponent))
    }

    /// `∑ rᵢ deg fᵢ`.
    pub fn nominal_degree(&self) -> DegreePair {
        self.factors
            .iter()
            .fold(DegreePair::new(0, 0), |acc, f| acc + f.spline.degree().scaled(f.exponent as usize))
    }

    /// Merged breakpoints of all factors; empty when there are none.
    pub fn breakpoints(&self) -> (Vec<f64>, Vec<f64>) {
        let us: Vec<Vec<f64>> = self.factors.iter().map(|f| f.spline.knots_u().breakpoints()).collect();
        let vs: Vec<Vec<f64>> = self.factors.iter().map(|f| f.spline.knots_v().breakpoints()).collect();
        let ur: Vec<&[f64]> = us.iter().map(|v| v.as_slice()).collect();
        let vr: Vec<&[f64]> = vs.iter().map(|v| v.as_slice()).collect();
        (merge_breakpoints(&ur), merge_breakpoints(&vr))
    }

    /// Bernstein form on a cell inside one span of every factor. Factors that
    /// are constant on the cell contribute degree zero.
    pub fn bezier_on(&self, cell: Rect) -> Result<BezierPatch> {
        let mut out = BezierPatch::constant(cell, self.constant);
        if self.constant == 0.0 {
            return Ok(out);
        }
        for f in &self.factors {
            let piece = f.grid.restrict(cell)?.reduce_constant(CONSTANT_TOL);
            out = out.mul(&piece.powi(f.exponent));
        }
        Ok(out)
    }

    /// Degree on a cell, counting only factors that are non-constant there.
    pub fn local_degree(&self, cell: Rect) -> Result<DegreePair> {
        let mut d = DegreePair::new(0, 0);
        if self.constant == 0.0 {
            return Ok(d);
        }
        for f in &self.factors {
            let piece = f.grid.restrict(cell)?;
            if !piece.is_constant(CONSTANT_TOL) {
                d = d + f.spline.degree().scaled(f.exponent as usize);
            }
        }
        Ok(d)
    }

    /// Bound on `|w|` from the coefficient magnitudes of the factors.
    pub fn magnitude(&self) -> f64 {
        self.factors.iter().fold(self.constant.abs(), |acc, f| {
            let m = f.spline.coeffs().iter().fold(0.0f64, |m, c| m.max(c.abs()));
            acc * m.powi(f.exponent as i32)
        })
    }

    /// Full spline `constant · ∏ fᵢ^{rᵢ}` by exact arithmetic.
    pub fn expand(&self) -> Result<ScalarSurfaceSpline> {
        let Some(first) = self.factors.first() else {
            return Err(AbcError::Invalid("weight without factors has no spline space".into()));
        };
        let mut acc = arith::power(&first.spline, first.exponent)?;
        for f in &self.factors[1..] {
            acc = arith::multiply(&acc, &arith::power(&f.spline, f.exponent)?)?;
        }
        Ok(arith::scale(&acc, self.constant))
    }
}

/// Boundary-affecting (`I`) and beyond-stripe (`J`) coefficient indices in a
/// refined tensor space; indices in neither are free.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexClassification {
    pub knots_u: KnotVector,
    pub knots_v: KnotVector,
    pub boundary: Vec<bool>,
    pub beyond: Vec<bool>,
    pub rounds: usize,
}

impl IndexClassification {
    pub fn is_free(&self, k: usize) -> bool {
        !self.boundary[k] && !self.beyond[k]
    }

    /// `(|I|, |J|, free)`.
    pub fn counts(&self) -> (usize, usize, usize) {
        let i = self.boundary.iter().filter(|x| **x).count();
        let j = self.beyond.iter().filter(|x| **x).count();
        (i, j, self.boundary.len() - i - j)
    }
}

/// Index range of cells `[breaks[c], breaks[c+1]]` inside `[lo, hi]`.
fn cell_range(breaks: &[f64], lo: f64, hi: f64) -> (usize, usize) {
    let a = breaks.iter().position(|b| *b >= lo - KNOT_EPS).unwrap_or(0);
    let b = breaks.iter().rposition(|b| *b <= hi + KNOT_EPS).unwrap_or(breaks.len() - 1);
    (a, b.max(a))
}

fn cell_extrema(q: &ScalarSurfaceSpline, bu: &[f64], bv: &[f64]) -> Vec<(f64, f64)> {
    let nv = bv.len() - 1;
    (0..(bu.len() - 1) * nv)
        .into_par_iter()
        .map(|c| {
            let r = Rect::new(bu[c / nv], bu[c / nv + 1], bv[c % nv], bv[c % nv + 1]);
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for a in 0..CELL_SAMPLES {
                for b in 0..CELL_SAMPLES {
                    let s = r.point(
                        a as f64 / (CELL_SAMPLES - 1) as f64,
                        b as f64 / (CELL_SAMPLES - 1) as f64,
                    );
                    let x = q.eval(s);
                    lo = lo.min(x);
                    hi = hi.max(x);
                }
            }
            (lo, hi)
        })
        .collect()
}

fn classify_once(ku: &KnotVector, kv: &KnotVector, q: &ScalarSurfaceSpline, h: f64) -> (Vec<bool>, Vec<bool>) {
    let bu = ku.breakpoints();
    let bv = kv.breakpoints();
    let ext = cell_extrema(q, &bu, &bv);
    let ncv = bv.len() - 1;
    let ru: Vec<(usize, usize)> = (0..ku.num_basis())
        .map(|i| {
            let (lo, hi) = ku.support(i);
            cell_range(&bu, lo, hi)
        })
        .collect();
    let rv: Vec<(usize, usize)> = (0..kv.num_basis())
        .map(|j| {
            let (lo, hi) = kv.support(j);
            cell_range(&bv, lo, hi)
        })
        .collect();
    let n = ku.num_basis() * kv.num_basis();
    let mut boundary = vec![false; n];
    let mut beyond = vec![false; n];
    for (i, &(ua, ub)) in ru.iter().enumerate() {
        for (j, &(va, vb)) in rv.iter().enumerate() {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for cu in ua..ub {
                for cv in va..vb {
                    let (a, b) = ext[cu * ncv + cv];
                    lo = lo.min(a);
                    hi = hi.max(b);
                }
            }
            let k = i * kv.num_basis() + j;
            boundary[k] = lo <= CLASSIFY_MARGIN && hi >= -CLASSIFY_MARGIN;
            beyond[k] = hi > h - CLASSIFY_MARGIN;
        }
    }
    (boundary, beyond)
}

fn varies(q: &ScalarSurfaceSpline, dir: Direction) -> bool {
    let d = q.partial(dir, 1);
    let scale = q.coeffs().iter().fold(0.0f64, |m, c| m.max(c.abs())).max(1.0);
    d.coeffs().iter().any(|c| c.abs() > 1e-14 * scale)
}

/// Classifies the coefficients of `q` for stripe width `h`, refining `q`'s
/// own space until `I ∩ J = ∅`.
pub fn classify_indices(q: &ScalarSurfaceSpline, h: f64) -> Result<IndexClassification> {
    classify_in_space(q.knots_u().clone(), q.knots_v().clone(), q, h)
}

/// As `classify_indices`, for the tensor space `ku ⊗ kv` with memberships
/// decided by `q`. Spans inside conflicting supports are bisected in the
/// directions along which `q` varies.
pub fn classify_in_space(
    mut ku: KnotVector,
    mut kv: KnotVector,
    q: &ScalarSurfaceSpline,
    h: f64,
) -> Result<IndexClassification> {
    let dirs = [varies(q, Direction::U), varies(q, Direction::V)];
    for round in 0..=MAX_REFINE_ROUNDS {
        let (boundary, beyond) = classify_once(&ku, &kv, q, h);
        if !beyond.iter().any(|x| *x) {
            return Err(AbcError::StripeCoversDomain(h));
        }
        let nv = kv.num_basis();
        let conflicts: Vec<usize> = (0..boundary.len()).filter(|k| boundary[*k] && beyond[*k]).collect();
        if conflicts.is_empty() {
            return Ok(IndexClassification {
                knots_u: ku,
                knots_v: kv,
                boundary,
                beyond,
                rounds: round,
            });
        }
        if round == MAX_REFINE_ROUNDS {
            break;
        }
        let mut mids_u = Vec::new();
        let mut mids_v = Vec::new();
        for k in conflicts {
            if dirs[0] {
                collect_mids(&ku, ku.support(k / nv), &mut mids_u);
            }
            if dirs[1] {
                collect_mids(&kv, kv.support(k % nv), &mut mids_v);
            }
        }
        if mids_u.is_empty() && mids_v.is_empty() {
            break;
        }
        ku = insert_all(ku, mids_u)?;
        kv = insert_all(kv, mids_v)?;
    }
    Err(AbcError::RefinementExhausted {
        rounds: MAX_REFINE_ROUNDS,
    })
}

fn collect_mids(kv: &KnotVector, (lo, hi): (f64, f64), out: &mut Vec<f64>) {
    let b = kv.breakpoints();
    for w in b.windows(2) {
        if w[0] >= lo - KNOT_EPS && w[1] <= hi + KNOT_EPS {
            out.push(0.5 * (w[0] + w[1]));
        }
    }
}

fn insert_all(mut kv: KnotVector, mut xs: Vec<f64>) -> Result<KnotVector> {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    xs.dedup_by(|a, b| (*a - *b).abs() <= KNOT_EPS);
    for x in xs {
        kv = kv.with_knot(x)?;
    }
    Ok(kv)
}

/// A plateau function together with the classification that produced it.
#[derive(Debug, Clone)]
pub struct Plateau {
    pub spline: ScalarSurfaceSpline,
    pub classes: IndexClassification,
}

/// `q̄`: coefficients of `q` on `I`, `h` on `J`, thin-plate fair elsewhere.
pub fn plateau_weight(q: &ScalarSurfaceSpline, h: f64) -> Result<Plateau> {
    let classes = classify_indices(q, h)?;
    let refined = q.refine_to(&classes.knots_u, &classes.knots_v)?;
    let fixed: Vec<Option<f64>> = (0..refined.coeffs().len())
        .map(|k| {
            if classes.boundary[k] {
                Some(refined.coeffs()[k])
            } else if classes.beyond[k] {
                Some(h)
            } else {
                None
            }
        })
        .collect();
    let op = ThinPlateOp::new(&classes.knots_u, &classes.knots_v);
    let x = fair_fill(&op, &fixed, None, &[])?;
    Ok(Plateau {
        spline: refined.with_coeffs(x.iter().copied().collect()),
        classes,
    })
}

/// Neighbor plateaus feeding a zero-plateau weight.
#[derive(Debug, Clone, Copy)]
pub struct NeighborPlateaus<'a> {
    pub prev: &'a ScalarSurfaceSpline,
    pub h_prev: f64,
    pub next: &'a ScalarSurfaceSpline,
    pub h_next: f64,
}

/// `q̃`: agrees with `q̄₋ q̄₊` near the zero set of `q`, vanishes where `q > h`.
///
/// Near the zero set at most one neighbor plateau is non-constant, so
/// `q̄₋ q̄₊ = h₊ q̄₋ + h₋ q̄₊ − h₋ h₊` there; the right side is used as the
/// lower-degree representative and the identity is verified on every
/// boundary-affecting cell. Free coefficients are fair, nonnegative and
/// constrained to vanish at `vanish_on`.
pub fn zero_plateau_weight(
    nb: NeighborPlateaus<'_>,
    q: &ScalarSurfaceSpline,
    h: f64,
    vanish_on: &[[f64; 2]],
) -> Result<Plateau> {
    let hh = nb.h_prev * nb.h_next;
    let s_hat = arith::add(&arith::scale(nb.prev, nb.h_next), &arith::scale(nb.next, nb.h_prev))?
        .map_coeffs(|c| c - hh);
    let classes = classify_in_space(s_hat.knots_u().clone(), s_hat.knots_v().clone(), q, h)?;
    let s_hat = s_hat.refine_to(&classes.knots_u, &classes.knots_v)?;
    check_surrogate(&s_hat, &nb, &classes)?;
    // the fill acts on d = q̃ − ŝ, which is zero on I, so q̃ inherits the
    // transversal profile of ŝ across the free band
    let sc = s_hat.coeffs();
    let fixed: Vec<Option<f64>> = (0..sc.len())
        .map(|k| {
            if classes.boundary[k] {
                Some(0.0)
            } else if classes.beyond[k] {
                Some(-sc[k])
            } else {
                None
            }
        })
        .collect();
    let lower: Vec<f64> = sc.iter().map(|c| -c).collect();
    let dom = s_hat.domain();
    let equalities: Vec<SparseRow> = vanish_on
        .iter()
        .filter(|s| dom.contains(**s))
        .map(|s| {
            let row = basis_row(&classes.knots_u, &classes.knots_v, *s, 0, 0);
            let rhs = -row.iter().map(|(i, c)| c * sc[*i]).sum::<f64>();
            (row, rhs)
        })
        .collect();
    let op = ThinPlateOp::new(&classes.knots_u, &classes.knots_v);
    let d = fair_fill(&op, &fixed, Some(&lower), &equalities)?;
    let x: Vec<f64> = sc.iter().zip(d.iter()).map(|(s, d)| s + d).collect();
    Ok(Plateau {
        spline: s_hat.with_coeffs(x),
        classes,
    })
}

fn check_surrogate(s_hat: &ScalarSurfaceSpline, nb: &NeighborPlateaus<'_>, classes: &IndexClassification) -> Result<()> {
    let (ku, kv) = (&classes.knots_u, &classes.knots_v);
    let (p, q) = (ku.degree(), kv.degree());
    let bu = ku.breakpoints();
    let bv = kv.breakpoints();
    let nv = kv.num_basis();
    for cu in 0..bu.len() - 1 {
        for cv in 0..bv.len() - 1 {
            let r = Rect::new(bu[cu], bu[cu + 1], bv[cv], bv[cv + 1]);
            let c = r.center();
            let (su, sv) = (ku.find_span(c[0]), kv.find_span(c[1]));
            let touched = (su - p..=su).any(|i| (sv - q..=sv).any(|j| classes.boundary[i * nv + j]));
            if !touched {
                continue;
            }
            for a in 0..5 {
                for b in 0..5 {
                    let s = r.point(a as f64 / 4.0, b as f64 / 4.0);
                    let exact = nb.prev.eval(s) * nb.next.eval(s);
                    let diff = (s_hat.eval(s) - exact).abs();
                    if diff > 1e-9 * (1.0 + exact.abs()) {
                        return Err(AbcError::StripeTopology(format!(
                            "both neighbor plateaus vary near ({:.4}, {:.4})",
                            s[0], s[1]
                        )));
                    }
                }
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightMode {
    Plain,
    Plateau,
}

/// The weight `w` of the base surface and one weight per ribbon.
#[derive(Debug, Clone)]
pub struct WeightSystem {
    pub w: FactoredWeight,
    pub w_per_ribbon: Vec<FactoredWeight>,
    pub exponents: Vec<u32>,
    pub mode: WeightMode,
    /// `∏ h_ℓ^{r_ℓ}` in plateau mode.
    pub plateau_value: Option<f64>,
}

fn check_exponents(lp: &TrimLoop, exponents: &[u32]) -> Result<()> {
    if exponents.len() != lp.len() {
        return Err(AbcError::Invalid(format!(
            "{} exponents for {} segments",
            exponents.len(),
            lp.len()
        )));
    }
    if exponents.contains(&0) {
        return Err(AbcError::Invalid("exponents must be positive".into()));
    }
    Ok(())
}

/// `w = ∏ q_ℓ^{r_ℓ}` and `w_ℓ = ∏_{j≠ℓ} q_j^{r_j}`.
pub fn plain_weights(lp: &TrimLoop, exponents: &[u32]) -> Result<WeightSystem> {
    check_exponents(lp, exponents)?;
    let qs: Vec<&ScalarSurfaceSpline> = lp.reparams.iter().map(|k| &k.q).collect();
    screen_positivity(lp, &qs, POSITIVITY_GRID)?;
    let factor = |j: usize| (qs[j].clone(), exponents[j]);
    let w = FactoredWeight::new(1.0, (0..lp.len()).map(factor).collect());
    let w_per_ribbon = (0..lp.len())
        .map(|l| FactoredWeight::new(1.0, (0..lp.len()).filter(|j| *j != l).map(factor).collect()))
        .collect();
    let ws = WeightSystem {
        w,
        w_per_ribbon,
        exponents: exponents.to_vec(),
        mode: WeightMode::Plain,
        plateau_value: None,
    };
    ws.verify_implicit(lp)?;
    Ok(ws)
}

/// `w = ∏ q̄_ℓ^{r_ℓ}` and `w_ℓ = q̃_ℓ^{r_ℓ}`.
pub fn plateau_weights(lp: &TrimLoop, exponents: &[u32]) -> Result<WeightSystem> {
    check_exponents(lp, exponents)?;
    let dom = lp.reparams[0].domain();
    lp.check_stripes(dom, 128)?;
    let l = lp.len();
    let qbars: Vec<Plateau> = (0..l)
        .map(|j| plateau_weight(&lp.reparams[j].q, lp.stripe_widths[j]))
        .collect::<Result<_>>()?;
    let mut qtildes = Vec::with_capacity(l);
    for j in 0..l {
        let (a, b) = (lp.prev(j), lp.next(j));
        let nb = NeighborPlateaus {
            prev: &qbars[a].spline,
            h_prev: lp.stripe_widths[a],
            next: &qbars[b].spline,
            h_next: lp.stripe_widths[b],
        };
        let pts: Vec<[f64; 2]> = lp.traces[a].iter().chain(&lp.traces[b]).copied().collect();
        let qt = zero_plateau_weight(nb, &lp.reparams[j].q, lp.stripe_widths[j], &pts).map_err(|e| match e {
            // the free band cannot represent a function vanishing on both neighbor traces
            AbcError::Infeasible { residual, .. } => AbcError::Implicitness {
                weight: format!("w_{j}"),
                segment: a,
                residual,
            },
            e => e,
        })?;
        qtildes.push(qt);
    }
    let refs: Vec<&ScalarSurfaceSpline> = qbars.iter().chain(&qtildes).map(|p| &p.spline).collect();
    screen_positivity(lp, &refs, POSITIVITY_GRID)?;
    let w = FactoredWeight::new(
        1.0,
        qbars.iter().zip(exponents).map(|(p, r)| (p.spline.clone(), *r)).collect(),
    );
    let w_per_ribbon = qtildes
        .iter()
        .zip(exponents)
        .map(|(p, r)| FactoredWeight::new(1.0, vec![(p.spline.clone(), *r)]))
        .collect();
    let value = lp
        .stripe_widths
        .iter()
        .zip(exponents)
        .map(|(h, r)| h.powi(*r as i32))
        .product();
    let ws = WeightSystem {
        w,
        w_per_ribbon,
        exponents: exponents.to_vec(),
        mode: WeightMode::Plateau,
        plateau_value: Some(value),
    };
    ws.verify_implicit(lp)?;
    Ok(ws)
}

/// Samples each function on the interior of the loop and reports the first
/// clearly negative value.
pub fn screen_positivity(lp: &TrimLoop, fs: &[&ScalarSurfaceSpline], n: usize) -> Result<()> {
    let poly = lp.polygon();
    let (mut u0, mut u1, mut v0, mut v1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in &poly {
        u0 = u0.min(p[0]);
        u1 = u1.max(p[0]);
        v0 = v0.min(p[1]);
        v1 = v1.max(p[1]);
    }
    let rect = Rect::new(u0, u1, v0, v1);
    let raw = inside_mask(&poly, rect, n);
    // erode by one cell: chords of the traced polygon may cut slightly
    // outside curved segments
    let mask: Vec<bool> = (0..n * n)
        .map(|c| {
            let (i, j) = ((c / n) as isize, (c % n) as isize);
            (-1..=1).all(|di| {
                (-1..=1).all(|dj| {
                    let (a, b) = (i + di, j + dj);
                    a >= 0 && b >= 0 && a < n as isize && b < n as isize && raw[a as usize * n + b as usize]
                })
            })
        })
        .collect();
    for (idx, f) in fs.iter().enumerate() {
        let scale = f.coeffs().iter().fold(0.0f64, |m, c| m.max(c.abs()));
        let tol = -POSITIVITY_TOL * scale;
        let bad = (0..n * n).into_par_iter().find_first(|&c| {
            if !mask[c] {
                return false;
            }
            let s = rect.point((c / n) as f64 / n as f64 + 0.5 / n as f64, (c % n) as f64 / n as f64 + 0.5 / n as f64);
            f.eval(s) < tol
        });
        if let Some(c) = bad {
            let s = rect.point((c / n) as f64 / n as f64 + 0.5 / n as f64, (c % n) as f64 / n as f64 + 0.5 / n as f64);
            return Err(AbcError::Positivity {
                factor: idx,
                x: s[0],
                y: s[1],
                value: f.eval(s),
            });
        }
    }
    Ok(())
}

fn magnitude(w: &FactoredWeight) -> f64 {
    w.magnitude()
}

impl WeightSystem {
    pub fn len(&self) -> usize {
        self.w_per_ribbon.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w_per_ribbon.is_empty()
    }

    /// `(w, [w_ℓ])` at `s`.
    pub fn eval(&self, s: [f64; 2]) -> (f64, Vec<f64>) {
        (self.w.eval(s), self.w_per_ribbon.iter().map(|w| w.eval(s)).collect())
    }

    pub fn jets(&self, s: [f64; 2]) -> (Jet2, Vec<Jet2>) {
        (self.w.jet(s), self.w_per_ribbon.iter().map(|w| w.jet(s)).collect())
    }

    /// `w + ∑ w_ℓ`.
    pub fn denominator(&self, s: [f64; 2]) -> f64 {
        let (w, ws) = self.eval(s);
        w + ws.iter().sum::<f64>()
    }

    /// Checks `w = 0` on every segment and `w_ℓ = 0` on every segment
    /// `j ≠ ℓ`, at points between the stored trace samples. Returns the
    /// largest relative residual.
    pub fn verify_implicit(&self, lp: &TrimLoop) -> Result<f64> {
        let mut worst = 0.0f64;
        for j in 0..lp.len() {
            let m = lp.traces[j].len() - 1;
            for i in 0..m {
                let s = lp.boundary_point(j, (i as f64 + 0.5) / m as f64)?;
                let check = |name: String, w: &FactoredWeight, worst: &mut f64| -> Result<()> {
                    let r = w.eval(s).abs() / magnitude(w).max(1.0);
                    *worst = worst.max(r);
                    if r > IMPLICIT_TOL {
                        return Err(AbcError::Implicitness {
                            weight: name,
                            segment: j,
                            residual: r,
                        });
                    }
                    Ok(())
                };
                check("w".into(), &self.w, &mut worst)?;
                for (l, wl) in self.w_per_ribbon.iter().enumerate() {
                    if l != j {
                        check(format!("w_{l}"), wl, &mut worst)?;
                    }
                }
            }
        }
        Ok(worst)
    }

    /// Merged breakpoints of all weights.
    pub fn breakpoints(&self) -> (Vec<f64>, Vec<f64>) {
        let mut us = Vec::new();
        let mut vs = Vec::new();
        for w in std::iter::once(&self.w).chain(&self.w_per_ribbon) {
            let (u, v) = w.breakpoints();
            us.push(u);
            vs.push(v);
        }
        let ur: Vec<&[f64]> = us.iter().map(|v| v.as_slice()).collect();
        let vr: Vec<&[f64]> = vs.iter().map(|v| v.as_slice()).collect();
        (merge_breakpoints(&ur), merge_breakpoints(&vr))
    }

    /// Componentwise maximum of local degrees of `w` and of each `w_ℓ` over
    /// the knot cells meeting the trimmed domain.
    pub fn max_piece_degrees(&self, lp: &TrimLoop) -> Result<(DegreePair, Vec<DegreePair>)> {
        let (bu, bv) = self.breakpoints();
        let cells = cells_meeting(lp, &bu, &bv);
        let mut dw = DegreePair::new(0, 0);
        let mut dl = vec![DegreePair::new(0, 0); self.len()];
        for c in cells {
            dw = dw.max(self.w.local_degree(c)?);
            for (d, w) in dl.iter_mut().zip(&self.w_per_ribbon) {
                *d = d.max(w.local_degree(c)?);
            }
        }
        Ok((dw, dl))
    }
}

/// Cells of the breakpoint grid that intersect the region bounded by the loop.
pub fn cells_meeting(lp: &TrimLoop, bu: &[f64], bv: &[f64]) -> Vec<Rect> {
    let poly = lp.polygon();
    let mut out = Vec::new();
    for cu in 0..bu.len() - 1 {
        for cv in 0..bv.len() - 1 {
            let r = Rect::new(bu[cu], bu[cu + 1], bv[cv], bv[cv + 1]);
            let vertex = poly.iter().any(|p| r.contains(*p));
            let sample = (0..5).any(|a| (0..5).any(|b| point_in_polygon(&poly, r.point(a as f64 / 4.0, b as f64 / 4.0))));
            if vertex || sample {
                out.push(r);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trim::tests::unit_square_loop;

    fn linear_u(cells: usize) -> ScalarSurfaceSpline {
        let ku = KnotVector::uniform(3, 0.0, 1.0, cells);
        let kv = KnotVector::bezier(3, 0.0, 1.0);
        ScalarSurfaceSpline::interpolate(ku, kv, |x, _| x).unwrap()
    }

    #[test]
    fn classify_linear_is_disjoint() {
        let q = linear_u(8);
        let c = classify_indices(&q, 0.5).unwrap();
        let nv = c.knots_v.num_basis();
        for k in 0..c.boundary.len() {
            assert!(!(c.boundary[k] && c.beyond[k]));
            let (lo, hi) = c.knots_u.support(k / nv);
            assert_eq!(c.boundary[k], lo <= 0.0, "I is supports touching u = 0");
            assert_eq!(c.beyond[k], hi > 0.5 - CLASSIFY_MARGIN);
        }
    }

    #[test]
    fn huge_width_is_rejected() {
        let q = linear_u(4);
        assert!(matches!(classify_indices(&q, 10.0), Err(AbcError::StripeCoversDomain(_))));
    }

    #[test]
    fn constant_is_fixed_point() {
        let kv = KnotVector::uniform(2, 0.0, 1.0, 3);
        let q = ScalarSurfaceSpline::constant(kv.clone(), kv, 0.3);
        let p = plateau_weight(&q, 0.3).unwrap();
        assert!(p.spline.coeffs().iter().all(|c| (c - 0.3).abs() < 1e-15));
    }

    #[test]
    fn linear_plateau() {
        let q = linear_u(8);
        let p = plateau_weight(&q, 0.25).unwrap();
        for i in 0..=20 {
            let y = i as f64 / 20.0;
            assert!((p.spline.eval([0.0, y])).abs() < 1e-14);
            assert!((p.spline.eval([0.01, y]) - 0.01).abs() < 1e-14);
            assert!((p.spline.eval([0.8, y]) - 0.25).abs() < 1e-15);
        }
        // every basis function active beyond u = 0.5 + support carries exactly h
        let nv = p.classes.knots_v.num_basis();
        for (k, c) in p.spline.coeffs().iter().enumerate() {
            if p.classes.knots_u.support(k / nv).0 >= 0.5 {
                assert_eq!(*c, 0.25);
            }
        }
    }

    #[test]
    fn plain_square() {
        let lp = unit_square_loop();
        let ws = plain_weights(&lp, &[1, 1, 1, 1]).unwrap();
        assert_eq!(ws.w.nominal_degree(), DegreePair::new(4, 4));
        let e = ws.w.expand().unwrap();
        for s in [[0.3, 0.4], [0.9, 0.1]] {
            let (x, y) = (s[0], s[1]);
            let want = x * y * (1.0 - x) * (1.0 - y);
            assert!((ws.w.eval(s) - want).abs() < 1e-14);
            assert!((e.eval(s) - want).abs() < 1e-13);
        }
        assert!(ws.verify_implicit(&lp).unwrap() < 1e-14);
    }

    #[test]
    fn plateau_square() {
        let lp = unit_square_loop();
        let ws = plateau_weights(&lp, &[2, 2, 2, 2]).unwrap();
        let v = ws.plateau_value.unwrap();
        assert!((v - 0.2f64.powi(8)).abs() < 1e-20);
        assert!((ws.w.eval([0.5, 0.5]) - v).abs() < 1e-12 * v);
        for w in &ws.w_per_ribbon {
            assert_eq!(w.eval([0.5, 0.5]), 0.0);
        }
        let (dw, dl) = ws.max_piece_degrees(&lp).unwrap();
        assert!(dw.u <= 4 && dw.v <= 4, "{dw}");
        for d in dl {
            assert!(d.u <= 2 && d.v <= 2, "{d}");
        }
        // contact near the middle of the bottom edge
        let (w0, ws0) = ws.eval([0.5, 1e-3]);
        assert!(w0 > 0.0 && ws0[0] > 0.0);
    }

    #[test]
    fn scanline_matches_point_test() {
        let lp = unit_square_loop();
        let poly = lp.polygon();
        let rect = Rect::new(-0.5, 1.5, -0.5, 1.5);
        let n = 40;
        let m = inside_mask(&poly, rect, n);
        for i in 0..n {
            for k in 0..n {
                let s = rect.point((i as f64 + 0.5) / n as f64, (k as f64 + 0.5) / n as f64);
                assert_eq!(m[i * n + k], point_in_polygon(&poly, s));
            }
        }
    }
}
