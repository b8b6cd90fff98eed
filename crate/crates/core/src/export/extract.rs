//! Exact rational pieces of the blend on the cells of a partition clipped to
//! the merged knot grid.

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::partition::{bbox, interior_samples, DomainPartition, EdgeKind};
use crate::abc::AbcSurface;
use crate::arith::{compose_in_span, restrict};
use crate::bezier::{BezierPatch, Rect};
use crate::error::{AbcError, Result};
use crate::knots::{merge_breakpoints, KnotVector};
use crate::trim::polygon_area;

/// Ribbon weights below this fraction of their magnitude on a piece are
/// treated as absent there.
pub const ZERO_WEIGHT_TOL: f64 = 1e-13;
const SPAN_TOL: f64 = 1e-9;

/// A cell clipped to one rectangle of the merged breakpoint grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    pub cell: usize,
    pub grid: Rect,
    pub polygon: Vec<[f64; 2]>,
    pub edges: Vec<EdgeKind>,
}

/// `numerator / denominator` on the bounding box of `polygon`.
#[derive(Debug, Clone, PartialEq)]
pub struct RationalPatch {
    pub cell: usize,
    pub rect: Rect,
    pub polygon: Vec<[f64; 2]>,
    pub edges: Vec<EdgeKind>,
    pub numerator: [BezierPatch; 3],
    pub denominator: BezierPatch,
    /// Ribbons whose weight does not vanish on the piece.
    pub ribbons: Vec<usize>,
}

impl RationalPatch {
    pub fn degree(&self) -> (usize, usize) {
        self.numerator[0].deg
    }

    pub fn eval(&self, s: [f64; 2]) -> Vector3<f64> {
        let d = self.denominator.eval(s);
        Vector3::new(
            self.numerator[0].eval(s) / d,
            self.numerator[1].eval(s) / d,
            self.numerator[2].eval(s) / d,
        )
    }
}

/// Breakpoints of the base, the reparametrizations and all weights.
pub fn merged_grid(a: &AbcSurface) -> (Vec<f64>, Vec<f64>) {
    let mut us = vec![a.base.knots_u().breakpoints()];
    let mut vs = vec![a.base.knots_v().breakpoints()];
    for k in &a.reparams {
        us.push(k.p.knots_u().breakpoints());
        vs.push(k.p.knots_v().breakpoints());
    }
    let (wu, wv) = a.weights.breakpoints();
    us.push(wu);
    vs.push(wv);
    let ur: Vec<&[f64]> = us.iter().map(|v| v.as_slice()).collect();
    let vr: Vec<&[f64]> = vs.iter().map(|v| v.as_slice()).collect();
    (merge_breakpoints(&ur), merge_breakpoints(&vr))
}

type Tagged = Vec<([f64; 2], EdgeKind)>;

/// One Sutherland–Hodgman pass against the half-plane `sign·(x[axis] − c) ≥ 0`.
/// Each vertex carries the kind of the edge arriving at it.
fn clip_half(poly: &Tagged, axis: usize, c: f64, sign: f64) -> Tagged {
    let mut out = Vec::with_capacity(poly.len() + 2);
    let n = poly.len();
    if n == 0 {
        return out;
    }
    let inside = |p: &[f64; 2]| sign * (p[axis] - c) >= 0.0;
    let cut = |a: [f64; 2], b: [f64; 2]| {
        let t = (c - a[axis]) / (b[axis] - a[axis]);
        let mut x = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
        x[axis] = c;
        x
    };
    for i in 0..n {
        let (s, _) = poly[(i + n - 1) % n];
        let (e, kind) = poly[i];
        match (inside(&s), inside(&e)) {
            (true, true) => out.push((e, kind)),
            (true, false) => out.push((cut(s, e), kind)),
            (false, true) => {
                out.push((cut(s, e), EdgeKind::Grid));
                out.push((e, kind));
            }
            (false, false) => {}
        }
    }
    out
}

fn clip_rect(poly: &Tagged, r: Rect) -> Tagged {
    let p = clip_half(poly, 0, r.u0, 1.0);
    let p = clip_half(&p, 0, r.u1, -1.0);
    let p = clip_half(&p, 1, r.v0, 1.0);
    clip_half(&p, 1, r.v1, -1.0)
}

/// Converts arriving-edge tags to the leaving-edge convention of `Cell` and
/// drops repeated vertices.
fn to_leaving(t: Tagged) -> (Vec<[f64; 2]>, Vec<EdgeKind>) {
    let mut pts: Vec<([f64; 2], EdgeKind)> = Vec::with_capacity(t.len());
    for (p, k) in t {
        if pts.last().is_some_and(|(q, _)| *q == p) {
            pts.last_mut().unwrap().1 = k;
            continue;
        }
        pts.push((p, k));
    }
    while pts.len() > 1 && pts[0].0 == pts[pts.len() - 1].0 {
        let (_, k) = pts.pop().unwrap();
        pts[0].1 = k;
    }
    let n = pts.len();
    let poly = pts.iter().map(|x| x.0).collect();
    let edges = (0..n).map(|i| pts[(i + 1) % n].1).collect();
    (poly, edges)
}

/// Cells clipped to the merged grid; slivers below `1e-12` of the cell area
/// are dropped.
pub fn pieces(a: &AbcSurface, part: &DomainPartition) -> Vec<Piece> {
    let (gu, gv) = merged_grid(a);
    let mut out = Vec::new();
    for (ci, cell) in part.cells.iter().enumerate() {
        let n = cell.polygon.len();
        let tagged: Tagged = (0..n)
            .map(|i| (cell.polygon[i], cell.edges[(i + n - 1) % n]))
            .collect();
        let (lo, hi) = bbox(&cell.polygon);
        let min_area = 1e-12 * cell.area();
        for iu in 0..gu.len() - 1 {
            if gu[iu + 1] <= lo[0] || gu[iu] >= hi[0] {
                continue;
            }
            for iv in 0..gv.len() - 1 {
                if gv[iv + 1] <= lo[1] || gv[iv] >= hi[1] {
                    continue;
                }
                let grid = Rect::new(gu[iu], gu[iu + 1], gv[iv], gv[iv + 1]);
                let clipped = clip_rect(&tagged, grid);
                if clipped.len() < 3 {
                    continue;
                }
                let (polygon, edges) = to_leaving(clipped);
                if polygon.len() < 3 || polygon_area(&polygon) <= min_area {
                    continue;
                }
                out.push(Piece {
                    cell: ci,
                    grid,
                    polygon,
                    edges,
                });
            }
        }
    }
    out
}

/// Evaluation points for span checks: vertices and interior grid points.
fn probe_points(poly: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut pts = poly.to_vec();
    pts.extend(interior_samples(poly, 8));
    pts
}

fn span_of(kv: &KnotVector, lo: f64, hi: f64) -> Option<f64> {
    let inner = kv.inner_breakpoints();
    if inner.iter().any(|&x| x > lo + SPAN_TOL && x < hi - SPAN_TOL) {
        return None;
    }
    Some(0.5 * (lo + hi))
}

/// Exact Bernstein form of the blend on a piece. The numerator degree is the
/// componentwise maximum of `deg w + deg b` and `deg w_ℓ + |deg r_ℓ| deg κ_ℓ`
/// over the ribbons present on the piece, with `deg w` counting only factors
/// that are non-constant there.
pub fn extract_rational(a: &AbcSurface, piece: &Piece) -> Result<RationalPatch> {
    let (lo, hi) = bbox(&piece.polygon);
    let rect = Rect::new(lo[0], hi[0], lo[1], hi[1]);
    let w = a.weights.w.bezier_on(rect)?;
    let b: Vec<BezierPatch> = a
        .base
        .components()
        .iter()
        .map(|c| restrict(c, rect))
        .collect::<Result<_>>()?;
    let mut num: Vec<BezierPatch> = b.iter().map(|bc| w.mul(bc)).collect();
    let mut den = w;
    let mut ribbons = Vec::new();
    let probes = probe_points(&piece.polygon);
    for (j, wj) in a.weights.w_per_ribbon.iter().enumerate() {
        let wb = wj.bezier_on(rect)?;
        if wb.max_abs() <= ZERO_WEIGHT_TOL * wj.magnitude().max(f64::MIN_POSITIVE) {
            continue;
        }
        let kappa = &a.reparams[j];
        let r = &a.ribbons[j].surface;
        let taus: Vec<[f64; 2]> = probes.iter().map(|s| kappa.eval(*s)).collect();
        let (tlo, thi) = bbox(&taus);
        let su = span_of(r.knots_u(), tlo[0], thi[0]);
        let sv = span_of(r.knots_v(), tlo[1], thi[1]);
        let (Some(tu), Some(tv)) = (su, sv) else {
            return Err(AbcError::StraddlesKnot {
                knot: tlo[0],
                direction: if su.is_none() { 'u' } else { 'v' },
            });
        };
        let comp = compose_in_span(r, &kappa.as_vector(), rect, [tu, tv])?;
        for (n, c) in num.iter_mut().zip(&comp) {
            *n = n.add(&wb.mul(c));
        }
        den = den.add(&wb);
        ribbons.push(j);
    }
    let p = num.iter().map(|n| n.deg.0).max().unwrap().max(den.deg.0);
    let q = num.iter().map(|n| n.deg.1).max().unwrap().max(den.deg.1);
    let numerator = [num[0].elevate_to(p, q), num[1].elevate_to(p, q), num[2].elevate_to(p, q)];
    Ok(RationalPatch {
        cell: piece.cell,
        rect,
        polygon: piece.polygon.clone(),
        edges: piece.edges.clone(),
        numerator,
        denominator: den.elevate_to(p, q),
        ribbons,
    })
}

/// All pieces of the partition, extracted in parallel.
pub fn extract_all(a: &AbcSurface, part: &DomainPartition) -> Result<Vec<RationalPatch>> {
    pieces(a, part).par_iter().map(|p| extract_rational(a, p)).collect()
}

/// Largest componentwise maximum of numerator degrees.
pub fn max_degree(patches: &[RationalPatch]) -> (usize, usize) {
    patches
        .iter()
        .fold((0, 0), |(p, q), x| (p.max(x.degree().0), q.max(x.degree().1)))
}
