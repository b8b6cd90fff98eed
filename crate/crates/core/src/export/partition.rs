//! Partition of the trimmed domain into an interior cell and boundary cells
//! bounded by traced boundary arcs, straight levelsets and auxiliary arcs.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use super::levelset::{critical_levelset, LevelSegment, LEVELSET_TOL};
use crate::abc::AbcSurface;
use crate::error::{AbcError, Result};
use crate::trim::{point_in_polygon, polygon_area, segments_cross, trace_range, TrimLoop};

/// What an edge of a cell polygon lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeKind {
    /// The trimming curve `γ_ℓ`.
    Boundary(usize),
    /// A straight levelset `μ_ℓ^i`.
    Level { segment: usize, index: usize },
    /// The auxiliary arc `α_ℓ` of segment `ℓ`.
    Alpha(usize),
    /// The straight cut from corner `σ_ℓ` into the domain.
    Diagonal(usize),
    /// A breakpoint line of the merged knot grid.
    Grid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CellKind {
    Interior,
    /// Between `μ_ℓ^{span-1}` and `μ_ℓ^{span}` (corner cuts at the ends).
    Boundary { segment: usize, span: usize },
}

/// Counterclockwise polygon; `edges[i]` runs from `polygon[i]` to
/// `polygon[i + 1]` (cyclically).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub kind: CellKind,
    pub polygon: Vec<[f64; 2]>,
    pub edges: Vec<EdgeKind>,
}

impl Cell {
    pub fn area(&self) -> f64 {
        polygon_area(&self.polygon)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainPartition {
    pub cells: Vec<Cell>,
    pub levels: Vec<LevelSegment>,
    /// `(σ_ℓ, D_ℓ)` per corner.
    pub diagonals: Vec<([f64; 2], [f64; 2])>,
    /// Boundary of the union of the cells, traced along the `γ` arcs.
    pub outline: Vec<[f64; 2]>,
}

impl DomainPartition {
    pub fn interior(&self) -> &Cell {
        self.cells
            .iter()
            .find(|c| c.kind == CellKind::Interior)
            .expect("partition always has an interior cell")
    }

    pub fn boundary_cells(&self, segment: usize) -> impl Iterator<Item = &Cell> {
        self.cells
            .iter()
            .filter(move |c| matches!(c.kind, CellKind::Boundary { segment: s, .. } if s == segment))
    }

    pub fn area(&self) -> f64 {
        self.cells.iter().map(Cell::area).sum()
    }

    /// `|∑ cell areas − outline area| / outline area`.
    pub fn tiling_defect(&self) -> f64 {
        let total = polygon_area(&self.outline);
        (self.area() - total).abs() / total
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartitionOptions {
    /// `α_ℓ` joins points with `q_ℓ = (1 + offset) h_ℓ`.
    pub offset: f64,
    /// Points per auxiliary arc.
    pub arc_samples: usize,
    /// Trace points per unit of boundary parameter.
    pub trace_density: usize,
}

impl Default for PartitionOptions {
    fn default() -> Self {
        PartitionOptions {
            offset: 0.1,
            arc_samples: 16,
            trace_density: 96,
        }
    }
}

pub fn partition(a: &AbcSurface) -> Result<DomainPartition> {
    partition_with(a, &PartitionOptions::default())
}

fn fail(msg: String) -> AbcError {
    AbcError::Partition(msg)
}

/// Point with `q_{ℓ-1} = c_{ℓ-1}` and `q_ℓ = c_ℓ` near corner `σ_ℓ`.
fn corner_cut(lp: &TrimLoop, l: usize, targets: &[f64]) -> Result<[f64; 2]> {
    let a = lp.prev(l);
    let (ka, kl) = (&lp.reparams[a], &lp.reparams[l]);
    let c = Vector2::new(targets[a], targets[l]);
    let mut x = Vector2::from(lp.corners[l]);
    for _ in 0..60 {
        let s = [x[0], x[1]];
        let (ga, gl) = (ka.q.jet(s).gradient(), kl.q.jet(s).gradient());
        let j = Matrix2::new(ga[0], ga[1], gl[0], gl[1]);
        let f = Vector2::new(ka.q.eval(s), kl.q.eval(s)) - c;
        let Some(ji) = j.try_inverse() else {
            break;
        };
        let dx = ji * f;
        x -= dx;
        if dx.norm() < 1e-15 * (1.0 + x.norm()) {
            break;
        }
    }
    let s = [x[0], x[1]];
    let res = (ka.q.eval(s) - c[0]).abs().max((kl.q.eval(s) - c[1]).abs());
    if !(res < 1e-10) {
        return Err(fail(format!("no corner cut at corner {l}: residual {res:e}")));
    }
    Ok(s)
}

fn hermite(p0: [f64; 2], t0: [f64; 2], p1: [f64; 2], t1: [f64; 2], s: f64) -> [f64; 2] {
    let (s2, s3) = (s * s, s * s * s);
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    [
        h00 * p0[0] + h10 * t0[0] + h01 * p1[0] + h11 * t1[0],
        h00 * p0[1] + h10 * t0[1] + h01 * p1[1] + h11 * t1[1],
    ]
}

/// Unit tangent of the `q_ℓ` levelset at `s`, oriented along increasing `p_ℓ`.
fn offset_tangent(lp: &TrimLoop, l: usize, s: [f64; 2]) -> [f64; 2] {
    let j = lp.reparams[l].jacobian(s);
    let mut t = [-j[(1, 1)], j[(1, 0)]];
    if j[(0, 0)] * t[0] + j[(0, 1)] * t[1] < 0.0 {
        t = [-t[0], -t[1]];
    }
    let n = t[0].hypot(t[1]);
    [t[0] / n, t[1] / n]
}

/// Cubic Hermite arc through the endpoints with tangents along the offset
/// levelset, scaled by the chord; `n + 1` points.
fn alpha_arc(lp: &TrimLoop, l: usize, p0: [f64; 2], p1: [f64; 2], n: usize) -> Vec<[f64; 2]> {
    let chord = (p1[0] - p0[0]).hypot(p1[1] - p0[1]);
    let (a, b) = (offset_tangent(lp, l, p0), offset_tangent(lp, l, p1));
    let t0 = [a[0] * chord, a[1] * chord];
    let t1 = [b[0] * chord, b[1] * chord];
    let mut pts: Vec<[f64; 2]> = (0..=n).map(|i| hermite(p0, t0, p1, t1, i as f64 / n as f64)).collect();
    pts[0] = p0;
    pts[n] = p1;
    pts
}

fn is_simple(poly: &[[f64; 2]]) -> bool {
    let n = poly.len();
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        for k in i + 2..n {
            if i == 0 && k == n - 1 {
                continue;
            }
            if segments_cross(a, b, poly[k], poly[(k + 1) % n]) {
                return false;
            }
        }
    }
    true
}

/// Builds the cells. Requires a closed loop, ribbons that are Bézier in `v`,
/// and straight levelsets at every inner `u`-knot of every ribbon.
pub fn partition_with(a: &AbcSurface, opts: &PartitionOptions) -> Result<DomainPartition> {
    let lp = a
        .trim
        .as_ref()
        .ok_or_else(|| fail("export needs a closed trimming loop".into()))?;
    let l_count = lp.len();
    for (l, r) in a.ribbons.iter().enumerate() {
        if !r.surface.knots_v().inner_breakpoints().is_empty() {
            return Err(fail(format!("ribbon {l} must be a single Bézier piece in v")));
        }
    }
    let targets: Vec<f64> = lp.stripe_widths.iter().map(|h| (1.0 + opts.offset) * h).collect();
    let outer = lp.polygon();
    let cuts: Vec<[f64; 2]> = (0..l_count).map(|l| corner_cut(lp, l, &targets)).collect::<Result<_>>()?;
    for (l, d) in cuts.iter().enumerate() {
        if !point_in_polygon(&outer, *d) {
            return Err(fail(format!("corner cut at corner {l} leaves the domain")));
        }
    }

    let non_neighbor = |l: usize, j: usize| j != l && j != lp.prev(l) && j != lp.next(l);
    let mut levels = Vec::new();
    // per segment: boundary params, boundary anchors, inner endpoints, edge kinds of the cuts
    let mut spans: Vec<(Vec<f64>, Vec<[f64; 2]>, Vec<[f64; 2]>, Vec<EdgeKind>)> = Vec::with_capacity(l_count);
    for l in 0..l_count {
        let kappa = &lp.reparams[l];
        let knots = a.ribbons[l].surface.knots_u().inner_breakpoints();
        let mut us = vec![0.0];
        let mut anchors = vec![lp.corners[l]];
        let mut ends = vec![cuts[l]];
        let mut kinds = vec![EdgeKind::Diagonal(l)];
        for (i, &u) in knots.iter().enumerate() {
            let anchor = lp.boundary_point(l, u)?;
            let level = critical_levelset(kappa, l, u, anchor, targets[l])?;
            for k in 1..=8 {
                let x = level.point(level.extent * k as f64 / 8.0);
                if !point_in_polygon(&outer, x) {
                    return Err(fail(format!("levelset {i} of segment {l} leaves the domain")));
                }
                for j in (0..l_count).filter(|&j| non_neighbor(l, j)) {
                    if lp.reparams[j].q.eval(x) <= lp.stripe_widths[j] {
                        return Err(fail(format!("levelset {i} of segment {l} enters the stripe of segment {j}")));
                    }
                }
            }
            us.push(u);
            anchors.push(anchor);
            ends.push(level.end());
            kinds.push(EdgeKind::Level { segment: l, index: i });
            levels.push(level);
        }
        let nx = lp.next(l);
        us.push(1.0);
        anchors.push(lp.corners[nx]);
        ends.push(cuts[nx]);
        kinds.push(EdgeKind::Diagonal(nx));
        spans.push((us, anchors, ends, kinds));
    }

    let mut cells = Vec::new();
    let mut interior_poly = Vec::new();
    let mut interior_edges = Vec::new();
    let mut outline = Vec::new();
    for (l, (us, anchors, ends, kinds)) in spans.iter().enumerate() {
        let kappa = &lp.reparams[l];
        for i in 0..us.len() - 1 {
            let n = ((opts.trace_density as f64 * (us[i + 1] - us[i])).ceil() as usize).max(4);
            let mut arc = trace_range(kappa, anchors[i], us[i], us[i + 1], n)?;
            arc[0] = anchors[i];
            arc[n] = anchors[i + 1];
            let alpha = alpha_arc(lp, l, ends[i], ends[i + 1], opts.arc_samples);
            let mut poly = Vec::new();
            let mut edges = Vec::new();
            for p in &arc[..n] {
                poly.push(*p);
                edges.push(EdgeKind::Boundary(l));
            }
            poly.push(arc[n]);
            edges.push(kinds[i + 1]);
            for p in alpha[1..].iter().rev() {
                poly.push(*p);
                edges.push(EdgeKind::Alpha(l));
            }
            poly.push(alpha[0]);
            edges.push(kinds[i]);
            outline.extend_from_slice(&arc[..n]);
            interior_poly.extend_from_slice(&alpha[..alpha.len() - 1]);
            interior_edges.extend(std::iter::repeat(EdgeKind::Alpha(l)).take(alpha.len() - 1));
            cells.push(Cell {
                kind: CellKind::Boundary { segment: l, span: i },
                polygon: poly,
                edges,
            });
        }
    }
    cells.push(Cell {
        kind: CellKind::Interior,
        polygon: interior_poly,
        edges: interior_edges,
    });

    let part = DomainPartition {
        cells,
        levels,
        diagonals: (0..l_count).map(|l| (lp.corners[l], cuts[l])).collect(),
        outline,
    };
    validate(a, &part, &spans.iter().map(|s| s.0.clone()).collect::<Vec<_>>())?;
    Ok(part)
}

fn validate(a: &AbcSurface, part: &DomainPartition, params: &[Vec<f64>]) -> Result<()> {
    for c in &part.cells {
        if !(c.area() > 0.0) || !is_simple(&c.polygon) {
            return Err(fail(format!("cell {:?} is not a simple counterclockwise polygon", c.kind)));
        }
    }
    let defect = part.tiling_defect();
    if defect > 1e-9 {
        return Err(fail(format!("cells do not tile the domain: area defect {defect:e}")));
    }
    // p_ℓ stays within its knot span on each boundary cell
    for c in &part.cells {
        let CellKind::Boundary { segment, span } = c.kind else {
            continue;
        };
        // the end spans extend past the corners
        let ps = &params[segment];
        let lo = if span == 0 { f64::NEG_INFINITY } else { ps[span] };
        let hi = if span + 2 == ps.len() { f64::INFINITY } else { ps[span + 1] };
        let p = &a.reparams[segment].p;
        let inside = |x: [f64; 2]| {
            let v = p.eval(x);
            v >= lo - LEVELSET_TOL && v <= hi + LEVELSET_TOL
        };
        if !c.polygon.iter().all(|x| inside(*x)) || !interior_samples(&c.polygon, 12).into_iter().all(inside) {
            return Err(fail(format!(
                "a ribbon breakpoint of segment {segment} crosses boundary cell {span}"
            )));
        }
    }
    Ok(())
}

/// Grid points of the bounding box that fall inside the polygon.
pub fn interior_samples(poly: &[[f64; 2]], n: usize) -> Vec<[f64; 2]> {
    let (lo, hi) = bbox(poly);
    let mut out = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let x = [
                lo[0] + (hi[0] - lo[0]) * (i as f64 + 0.5) / n as f64,
                lo[1] + (hi[1] - lo[1]) * (j as f64 + 0.5) / n as f64,
            ];
            if point_in_polygon(poly, x) {
                out.push(x);
            }
        }
    }
    out
}

pub fn bbox(poly: &[[f64; 2]]) -> ([f64; 2], [f64; 2]) {
    poly.iter().fold(([f64::MAX; 2], [f64::MIN; 2]), |(lo, hi), p| {
        ([lo[0].min(p[0]), lo[1].min(p[1])], [hi[0].max(p[0]), hi[1].max(p[1])])
    })
}
