//! Text exchange format for trimmed rational patches, and OBJ tessellation.
//!
//! ```text
//! ABC-PATCHES 1
//! mode <parametric|geometric|hybrid>
//! readonly true
//! curves <K>
//! curve <segment> degree <d> knots <n>
//! <n knots>
//! control <m>
//! <x y z>            (m lines)
//! patches <N>
//! patch <index> cell <cell> degree <p> <q>
//! knots_u <p+1 copies of u0, p+1 copies of u1>
//! knots_v <q+1 copies of v0, q+1 copies of v1>
//! control <(p+1)(q+1)>
//! <x y z w>          (homogeneous, u index outer)
//! trim <T>
//! planar <k>
//! <u v>              (k lines, a degree-1 curve)
//! spatial <segment> <u0> <u1>
//! end
//! ```
//!
//! Reals are written with 17 significant digits. Spatial trim entries
//! reference `curve <segment>` restricted to `[u0, u1]`.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;

use super::extract::RationalPatch;
use super::partition::EdgeKind;
use super::TrimMode;
use crate::abc::AbcSurface;
use crate::bezier::{BezierPatch, Rect};
use crate::error::{AbcError, Result};

pub const FORMAT_HEADER: &str = "ABC-PATCHES";
pub const FORMAT_VERSION: u32 = 1;

/// `c_ℓ(u) = r_ℓ(u, 0)` as a spline curve.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialCurve {
    pub segment: usize,
    pub degree: usize,
    pub knots: Vec<f64>,
    pub control: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrimCurve {
    Planar { points: Vec<[f64; 2]> },
    Spatial { segment: usize, u0: f64, u1: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchRecord {
    pub cell: usize,
    pub degree: (usize, usize),
    pub rect: Rect,
    /// Homogeneous `[x w, y w, z w, w]`, `control[i * (q + 1) + j]`.
    pub control: Vec<[f64; 4]>,
    pub trim: Vec<TrimCurve>,
}

impl PatchRecord {
    fn component(&self, k: usize) -> BezierPatch {
        BezierPatch::new(self.degree, self.rect, self.control.iter().map(|c| c[k]).collect())
    }

    pub fn eval(&self, s: [f64; 2]) -> Vector3<f64> {
        let w = self.component(3).eval(s);
        Vector3::new(
            self.component(0).eval(s) / w,
            self.component(1).eval(s) / w,
            self.component(2).eval(s) / w,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExportDoc {
    pub version: u32,
    pub mode: TrimMode,
    pub readonly: bool,
    pub curves: Vec<SpatialCurve>,
    pub patches: Vec<PatchRecord>,
}

fn boundary_curve(a: &AbcSurface, l: usize) -> Result<SpatialCurve> {
    let r = &a.ribbons[l].surface;
    let kv = r.knots_v();
    let d = kv.degree();
    if kv.knots()[..=d].iter().any(|&x| x != 0.0) {
        return Err(AbcError::Invalid(format!(
            "ribbon {l} is not clamped at v = 0; its boundary curve is not representable"
        )));
    }
    let (nu, _) = r.components()[0].shape();
    let control = (0..nu)
        .map(|i| {
            let c = r.components();
            [c[0].coeff(i, 0), c[1].coeff(i, 0), c[2].coeff(i, 0)]
        })
        .collect();
    Ok(SpatialCurve {
        segment: l,
        degree: r.knots_u().degree(),
        knots: r.knots_u().knots().to_vec(),
        control,
    })
}

impl SpatialCurve {
    /// de Boor evaluation.
    pub fn eval(&self, u: f64) -> Vector3<f64> {
        let kv = crate::knots::KnotVector::new(self.knots.clone(), self.degree).expect("validated knots");
        let span = kv.find_span(u);
        let basis = kv.basis_funs(span, u);
        let mut out = Vector3::zeros();
        for (k, b) in basis.iter().enumerate() {
            let c = self.control[span - self.degree + k];
            out += *b * Vector3::new(c[0], c[1], c[2]);
        }
        out
    }
}

/// Trim loop of one patch: maximal runs of planar edges become polylines,
/// boundary edges of spatially described segments become curve ranges.
fn trim_loop(a: &AbcSurface, p: &RationalPatch, mode: TrimMode) -> Vec<TrimCurve> {
    let n = p.polygon.len();
    let class = |k: EdgeKind| match k {
        EdgeKind::Boundary(l) if mode.spatial(l) => Some(l),
        _ => None,
    };
    let start = (0..n)
        .find(|&i| class(p.edges[(i + n - 1) % n]) != class(p.edges[i]))
        .unwrap_or(0);
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        let first = (start + i) % n;
        let c = class(p.edges[first]);
        let mut len = 1;
        while i + len < n && class(p.edges[(start + i + len) % n]) == c {
            len += 1;
        }
        let last = (first + len) % n;
        match c {
            Some(l) => {
                let pl = &a.reparams[l].p;
                out.push(TrimCurve::Spatial {
                    segment: l,
                    u0: pl.eval(p.polygon[first]).clamp(0.0, 1.0),
                    u1: pl.eval(p.polygon[last]).clamp(0.0, 1.0),
                });
            }
            None => {
                let points = (0..=len).map(|k| p.polygon[(first + k) % n]).collect();
                out.push(TrimCurve::Planar { points });
            }
        }
        i += len;
    }
    out
}

impl ExportDoc {
    pub fn new(a: &AbcSurface, patches: &[RationalPatch], mode: TrimMode) -> Result<Self> {
        let curves = (0..a.len())
            .filter(|&l| mode.spatial(l))
            .map(|l| boundary_curve(a, l))
            .collect::<Result<_>>()?;
        let patches = patches
            .iter()
            .map(|p| {
                let control = (0..p.denominator.coeffs.len())
                    .map(|k| {
                        [
                            p.numerator[0].coeffs[k],
                            p.numerator[1].coeffs[k],
                            p.numerator[2].coeffs[k],
                            p.denominator.coeffs[k],
                        ]
                    })
                    .collect();
                PatchRecord {
                    cell: p.cell,
                    degree: p.degree(),
                    rect: p.rect,
                    control,
                    trim: trim_loop(a, p, mode),
                }
            })
            .collect();
        Ok(ExportDoc {
            version: FORMAT_VERSION,
            mode,
            readonly: true,
            curves,
            patches,
        })
    }
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn join(xs: impl IntoIterator<Item = f64>) -> String {
    xs.into_iter().map(num).collect::<Vec<_>>().join(" ")
}

pub fn write_doc(doc: &ExportDoc) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{FORMAT_HEADER} {}", doc.version);
    let _ = writeln!(s, "mode {}", doc.mode.name());
    let _ = writeln!(s, "readonly {}", doc.readonly);
    let _ = writeln!(s, "curves {}", doc.curves.len());
    for c in &doc.curves {
        let _ = writeln!(s, "curve {} degree {} knots {}", c.segment, c.degree, c.knots.len());
        let _ = writeln!(s, "{}", join(c.knots.iter().copied()));
        let _ = writeln!(s, "control {}", c.control.len());
        for p in &c.control {
            let _ = writeln!(s, "{}", join(*p));
        }
    }
    let _ = writeln!(s, "patches {}", doc.patches.len());
    for (i, p) in doc.patches.iter().enumerate() {
        let (du, dv) = p.degree;
        let r = p.rect;
        let _ = writeln!(s, "patch {i} cell {} degree {du} {dv}", p.cell);
        let ku = std::iter::repeat(r.u0).take(du + 1).chain(std::iter::repeat(r.u1).take(du + 1));
        let kv = std::iter::repeat(r.v0).take(dv + 1).chain(std::iter::repeat(r.v1).take(dv + 1));
        let _ = writeln!(s, "knots_u {}", join(ku));
        let _ = writeln!(s, "knots_v {}", join(kv));
        let _ = writeln!(s, "control {}", p.control.len());
        for c in &p.control {
            let _ = writeln!(s, "{}", join(*c));
        }
        let _ = writeln!(s, "trim {}", p.trim.len());
        for t in &p.trim {
            match t {
                TrimCurve::Planar { points } => {
                    let _ = writeln!(s, "planar {}", points.len());
                    for q in points {
                        let _ = writeln!(s, "{}", join(*q));
                    }
                }
                TrimCurve::Spatial { segment, u0, u1 } => {
                    let _ = writeln!(s, "spatial {segment} {} {}", num(*u0), num(*u1));
                }
            }
        }
    }
    s.push_str("end\n");
    s
}

struct Reader<'a> {
    lines: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
    line: usize,
}

impl<'a> Reader<'a> {
    fn new(s: &'a str) -> Self {
        Reader {
            lines: s.lines().enumerate().peekable(),
            line: 0,
        }
    }

    fn err(&self, msg: impl Into<String>) -> AbcError {
        AbcError::Parse {
            line: self.line,
            msg: msg.into(),
        }
    }

    fn next(&mut self) -> Result<Vec<&'a str>> {
        for (i, l) in self.lines.by_ref() {
            self.line = i + 1;
            let t: Vec<&str> = l.split_whitespace().collect();
            if !t.is_empty() {
                return Ok(t);
            }
        }
        Err(self.err("unexpected end of file"))
    }

    /// Tokens after the keyword `kw`.
    fn keyword(&mut self, kw: &str) -> Result<Vec<&'a str>> {
        let t = self.next()?;
        if t[0] != kw {
            return Err(self.err(format!("expected `{kw}`, found `{}`", t[0])));
        }
        Ok(t[1..].to_vec())
    }

    fn usize(&self, t: &str) -> Result<usize> {
        t.parse().map_err(|_| self.err(format!("expected an integer, found `{t}`")))
    }

    fn real(&self, t: &str) -> Result<f64> {
        let x: f64 = t.parse().map_err(|_| self.err(format!("expected a number, found `{t}`")))?;
        if !x.is_finite() {
            return Err(self.err("non-finite number"));
        }
        Ok(x)
    }

    fn reals(&self, t: &[&str], n: usize) -> Result<Vec<f64>> {
        if t.len() != n {
            return Err(self.err(format!("expected {n} numbers, found {}", t.len())));
        }
        t.iter().map(|x| self.real(x)).collect()
    }

    fn row<const N: usize>(&mut self) -> Result<[f64; N]> {
        let t = self.next()?;
        let v = self.reals(&t, N)?;
        Ok(std::array::from_fn(|i| v[i]))
    }

    fn count(&mut self, kw: &str) -> Result<usize> {
        let t = self.keyword(kw)?;
        if t.len() != 1 {
            return Err(self.err(format!("`{kw}` takes one count")));
        }
        self.usize(t[0])
    }
}

/// Bézier knot vector `[a; d+1] ++ [b; d+1]` with `a < b`.
fn bezier_knots(r: &Reader, k: &[f64], d: usize) -> Result<(f64, f64)> {
    let (a, b) = (k[0], k[d + 1]);
    if !(a < b) || k[..=d].iter().any(|&x| x != a) || k[d + 1..].iter().any(|&x| x != b) {
        return Err(r.err("patch knot vectors must be a single Bézier span"));
    }
    Ok((a, b))
}

pub fn read_doc(s: &str) -> Result<ExportDoc> {
    let mut r = Reader::new(s);
    let h = r.next()?;
    if h.len() != 2 || h[0] != FORMAT_HEADER {
        return Err(r.err(format!("missing `{FORMAT_HEADER}` header")));
    }
    let version = r.usize(h[1])? as u32;
    if version != FORMAT_VERSION {
        return Err(r.err(format!("unsupported version {version}")));
    }
    let m = r.keyword("mode")?;
    let mode = m
        .first()
        .and_then(|x| TrimMode::parse(x))
        .ok_or_else(|| r.err("unknown trimming mode"))?;
    let ro = r.keyword("readonly")?;
    let readonly = match ro.first().copied() {
        Some("true") => true,
        Some("false") => false,
        _ => return Err(r.err("readonly must be true or false")),
    };
    let nc = r.count("curves")?;
    let mut curves = Vec::with_capacity(nc);
    for _ in 0..nc {
        let t = r.keyword("curve")?;
        if t.len() != 5 || t[1] != "degree" || t[3] != "knots" {
            return Err(r.err("expected `curve <segment> degree <d> knots <n>`"));
        }
        let (segment, degree, nk) = (r.usize(t[0])?, r.usize(t[2])?, r.usize(t[4])?);
        let kt = r.next()?;
        let knots = r.reals(&kt, nk)?;
        crate::knots::KnotVector::new(knots.clone(), degree).map_err(|e| r.err(e.to_string()))?;
        let m = r.count("control")?;
        if m + degree + 1 != nk {
            return Err(r.err("control count does not match knots and degree"));
        }
        let control = (0..m).map(|_| r.row::<3>()).collect::<Result<_>>()?;
        curves.push(SpatialCurve {
            segment,
            degree,
            knots,
            control,
        });
    }
    let np = r.count("patches")?;
    let mut patches = Vec::with_capacity(np);
    for i in 0..np {
        let t = r.keyword("patch")?;
        if t.len() != 6 || t[1] != "cell" || t[3] != "degree" || r.usize(t[0])? != i {
            return Err(r.err(format!("expected `patch {i} cell <c> degree <p> <q>`")));
        }
        let (cell, du, dv) = (r.usize(t[2])?, r.usize(t[4])?, r.usize(t[5])?);
        let ku = r.keyword("knots_u")?;
        let ku = r.reals(&ku, 2 * du + 2)?;
        let (u0, u1) = bezier_knots(&r, &ku, du)?;
        let kv = r.keyword("knots_v")?;
        let kv = r.reals(&kv, 2 * dv + 2)?;
        let (v0, v1) = bezier_knots(&r, &kv, dv)?;
        let m = r.count("control")?;
        if m != (du + 1) * (dv + 1) {
            return Err(r.err("control count does not match degrees"));
        }
        let control = (0..m).map(|_| r.row::<4>()).collect::<Result<_>>()?;
        let nt = r.count("trim")?;
        let mut trim = Vec::with_capacity(nt);
        for _ in 0..nt {
            let t = r.next()?;
            match (t[0], t.len()) {
                ("planar", 2) => {
                    let k = r.usize(t[1])?;
                    let points = (0..k).map(|_| r.row::<2>()).collect::<Result<_>>()?;
                    trim.push(TrimCurve::Planar { points });
                }
                ("spatial", 4) => {
                    let segment = r.usize(t[1])?;
                    if !curves.iter().any(|c| c.segment == segment) {
                        return Err(r.err(format!("spatial trim references missing curve {segment}")));
                    }
                    trim.push(TrimCurve::Spatial {
                        segment,
                        u0: r.real(t[2])?,
                        u1: r.real(t[3])?,
                    });
                }
                _ => return Err(r.err(format!("unknown trim entry `{}`", t[0]))),
            }
        }
        patches.push(PatchRecord {
            cell,
            degree: (du, dv),
            rect: Rect::new(u0, u1, v0, v1),
            control,
            trim,
        });
    }
    r.keyword("end")?;
    Ok(ExportDoc {
        version,
        mode,
        readonly,
        curves,
        patches,
    })
}

/// Triangulated preview: a `density × density` grid per patch, keeping the
/// triangles whose centroid lies in the patch's trim polygon.
pub fn write_obj(patches: &[RationalPatch], density: usize) -> String {
    let n = density.max(2);
    let mut s = String::from("# trimmed rational patches\n");
    let mut base = 1usize;
    for p in patches {
        let r = p.rect;
        let at = |i: usize, j: usize| r.point(i as f64 / n as f64, j as f64 / n as f64);
        let mut index = vec![0usize; (n + 1) * (n + 1)];
        let mut faces = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let quad = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)];
                for tri in [[quad[0], quad[1], quad[2]], [quad[0], quad[2], quad[3]]] {
                    let c = tri.iter().fold([0.0, 0.0], |acc, &(a, b)| {
                        let x = at(a, b);
                        [acc[0] + x[0] / 3.0, acc[1] + x[1] / 3.0]
                    });
                    if crate::trim::point_in_polygon(&p.polygon, c) {
                        faces.push(tri);
                        for &(a, b) in &tri {
                            index[a * (n + 1) + b] = 1;
                        }
                    }
                }
            }
        }
        let h = 1e-6 * (r.u1 - r.u0).max(r.v1 - r.v0);
        for i in 0..=n {
            for j in 0..=n {
                let k = i * (n + 1) + j;
                if index[k] == 0 {
                    continue;
                }
                index[k] = base;
                base += 1;
                let x = at(i, j);
                let v = p.eval(x);
                let du = p.eval([x[0] + h, x[1]]) - p.eval([x[0] - h, x[1]]);
                let dv = p.eval([x[0], x[1] + h]) - p.eval([x[0], x[1] - h]);
                let nrm = du.cross(&dv).normalize();
                let _ = writeln!(s, "v {} {} {}", v[0], v[1], v[2]);
                let _ = writeln!(s, "vn {} {} {}", nrm[0], nrm[1], nrm[2]);
            }
        }
        for tri in faces {
            let ids: Vec<usize> = tri.iter().map(|&(a, b)| index[a * (n + 1) + b]).collect();
            let _ = writeln!(s, "f {0}//{0} {1}//{1} {2}//{2}", ids[0], ids[1], ids[2]);
        }
    }
    s
}

/// Writes the exchange file to `path` and the tessellation next to it with
/// extension `obj`.
pub fn emit(
    a: &AbcSurface,
    patches: &[RationalPatch],
    mode: TrimMode,
    path: &Path,
    density: usize,
) -> Result<ExportDoc> {
    let doc = ExportDoc::new(a, patches, mode)?;
    std::fs::write(path, write_doc(&doc))?;
    std::fs::write(path.with_extension("obj"), write_obj(patches, density))?;
    Ok(doc)
}
