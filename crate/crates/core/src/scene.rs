//! Scene descriptions and the pipeline from ribbons to a blended surface.

use std::f64::consts::PI;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::export::{span_constraints, LevelSegment};
use crate::abc::{AbcSurface, Level, RibbonSpec};
use crate::diffgeo;
use crate::error::AbcError;
use crate::fit::{
    corner_jacobian_conditions, corner_tangent_frame, fit_reparam, harvest_correspondences, levelset_direction,
    project_point, CorrespondenceSet, FitOptions, JacobianCondition, Pair,
};
use crate::knots::KnotVector;
use crate::spline::{DegreePair, ScalarSurfaceSpline, Surface, VectorSurfaceSpline};
use crate::trim::{solve_corner, Reparametrization, TrimLoop};
use crate::weights::{plain_weights, plateau_weights, WeightMode};

pub const CONFIG_VERSION: u32 = 1;

/// Tensor-product spline in serialized form. `control[i * n_v + j]` holds
/// one entry per component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineSpec {
    pub degree: [usize; 2],
    pub knots_u: Vec<f64>,
    pub knots_v: Vec<f64>,
    pub control: Vec<Vec<f64>>,
}

impl SplineSpec {
    pub fn from_components(comps: &[ScalarSurfaceSpline]) -> Self {
        let c0 = &comps[0];
        let n = c0.coeffs().len();
        SplineSpec {
            degree: [c0.degree().u, c0.degree().v],
            knots_u: c0.knots_u().knots().to_vec(),
            knots_v: c0.knots_v().knots().to_vec(),
            control: (0..n).map(|k| comps.iter().map(|c| c.coeffs()[k]).collect()).collect(),
        }
    }

    pub fn from_spline(s: &VectorSurfaceSpline) -> Self {
        Self::from_components(s.components())
    }

    pub fn from_reparam(k: &Reparametrization) -> Self {
        Self::from_components(&[k.p.clone(), k.q.clone()])
    }

    fn components(&self, dim: usize, field: &str) -> Result<Vec<ScalarSurfaceSpline>, AbcError> {
        let bad = |msg: String| AbcError::Invalid(format!("{field}: {msg}"));
        let ku = KnotVector::new(self.knots_u.clone(), self.degree[0]).map_err(|e| bad(format!("knots_u: {e}")))?;
        let kv = KnotVector::new(self.knots_v.clone(), self.degree[1]).map_err(|e| bad(format!("knots_v: {e}")))?;
        let n = ku.num_basis() * kv.num_basis();
        if self.control.len() != n {
            return Err(bad(format!("expected {n} control entries, found {}", self.control.len())));
        }
        if let Some(k) = self.control.iter().position(|c| c.len() != dim) {
            return Err(bad(format!("control[{k}] must have {dim} entries")));
        }
        if self.control.iter().flatten().any(|x| !x.is_finite()) {
            return Err(bad("control entries must be finite".into()));
        }
        (0..dim)
            .map(|d| ScalarSurfaceSpline::new(ku.clone(), kv.clone(), self.control.iter().map(|c| c[d]).collect()))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| bad(e.to_string()))
    }

    pub fn to_surface(&self, field: &str) -> Result<VectorSurfaceSpline, AbcError> {
        VectorSurfaceSpline::new(self.components(3, field)?)
    }

    pub fn to_reparam(&self, field: &str) -> Result<Reparametrization, AbcError> {
        let mut c = self.components(2, field)?;
        let q = c.pop().expect("two components");
        let p = c.pop().expect("two components");
        Reparametrization::new(p, q)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RibbonConfig {
    pub surface: SplineSpec,
    pub exponent: u32,
    pub stripe_width: f64,
}

/// Settings of the reparametrization fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub degree: usize,
    /// Uniform cells of the fit space over the base domain.
    pub cells: [usize; 2],
    /// Ribbon parameter samples in `u` and `v`.
    pub samples: [usize; 2],
    pub u_range: [f64; 2],
    pub v_range: [f64; 2],
    pub lambda: f64,
    pub corner_jacobians: bool,
    pub straight_levelsets: bool,
    /// Minimum interpolation nodes per knot span crossed by a levelset.
    pub levelset_points: usize,
    /// Transversal ribbon parameter reached by each straightened levelset.
    pub levelset_extent: f64,
    /// Resolution of the nearest-point table used to seed projections.
    pub guess_grid: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            degree: 3,
            cells: [6, 6],
            samples: [25, 9],
            u_range: [-0.05, 1.05],
            v_range: [-0.1, 1.0],
            lambda: 1e-6,
            corner_jacobians: true,
            straight_levelsets: false,
            levelset_points: 6,
            levelset_extent: 0.5,
            guess_grid: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ReparamSource {
    Fit(FitConfig),
    Explicit {
        reparams: Vec<SplineSpec>,
        corner_guesses: Vec<[f64; 2]>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub version: u32,
    pub name: String,
    pub base: SplineSpec,
    pub ribbons: Vec<RibbonConfig>,
    pub reparam: ReparamSource,
    pub weights: WeightMode,
    /// Continuity level the scene is designed for.
    pub level: Level,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Config,
    Harvest,
    Fit,
    Trim,
    Weights,
    Assemble,
}

#[derive(Debug, thiserror::Error)]
#[error("{stage:?} stage: {source}")]
pub struct BuildError {
    pub stage: Stage,
    #[source]
    pub source: AbcError,
}

fn at(stage: Stage) -> impl Fn(AbcError) -> BuildError {
    move |source| BuildError { stage, source }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub segment: usize,
    pub pairs: usize,
    pub dropped: usize,
    pub objective: [f64; 2],
    pub constraint_residual: f64,
    pub jacobian_constraints: usize,
    pub levelset_constraints: usize,
    /// `|Dr_prev T_prev - Dr_next T_next|` at the start corner, when prescribed.
    pub corner_mismatch: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildReport {
    pub name: String,
    pub segments: usize,
    pub corners: Vec<[f64; 2]>,
    pub fits: Vec<FitSummary>,
    pub weight_mode: WeightMode,
    pub implicit_residual: f64,
    pub nominal_w_degree: DegreePair,
    pub piece_w_degree: DegreePair,
    pub piece_ribbon_weight_degrees: Vec<DegreePair>,
}

#[derive(Debug, Clone)]
pub struct Built {
    pub surface: AbcSurface,
    pub report: BuildReport,
}

impl SceneConfig {
    pub fn validate(&self) -> Result<(), AbcError> {
        let bad = |m: String| Err(AbcError::Invalid(m));
        if self.version != CONFIG_VERSION {
            return bad(format!("version: expected {CONFIG_VERSION}, found {}", self.version));
        }
        if self.ribbons.len() < 2 {
            return bad(format!("ribbons: need at least 2, found {}", self.ribbons.len()));
        }
        for (i, r) in self.ribbons.iter().enumerate() {
            if r.exponent == 0 {
                return bad(format!("ribbons[{i}].exponent must be at least 1"));
            }
            if !(r.stripe_width > 0.0 && r.stripe_width.is_finite()) {
                return bad(format!("ribbons[{i}].stripe_width must be positive"));
            }
        }
        match &self.reparam {
            ReparamSource::Fit(f) => {
                if f.degree == 0 || f.cells[0] == 0 || f.cells[1] == 0 {
                    return bad("reparam.degree and reparam.cells must be positive".into());
                }
                if f.samples[0] < 2 || f.samples[1] < 2 {
                    return bad("reparam.samples must be at least 2 in each direction".into());
                }
                if !(f.u_range[0] < f.u_range[1] && f.v_range[0] < f.v_range[1]) {
                    return bad("reparam.u_range and reparam.v_range must be increasing".into());
                }
                if !(f.lambda >= 0.0) {
                    return bad("reparam.lambda must be non-negative".into());
                }
                if f.guess_grid < 2 {
                    return bad("reparam.guess_grid must be at least 2".into());
                }
                if f.straight_levelsets && (f.levelset_points < 2 || !(f.levelset_extent > 0.0)) {
                    return bad("reparam.levelset_points must be at least 2 with positive extent".into());
                }
            }
            ReparamSource::Explicit { reparams, corner_guesses } => {
                if reparams.len() != self.ribbons.len() || corner_guesses.len() != self.ribbons.len() {
                    return bad(format!(
                        "reparam: {} reparametrizations and {} corner guesses for {} ribbons",
                        reparams.len(),
                        corner_guesses.len(),
                        self.ribbons.len()
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, AbcError> {
        let c: SceneConfig = serde_json::from_str(s).map_err(|e| AbcError::Parse { line: e.line(), msg: format!("scene config: {e}") })?;
        c.validate()?;
        Ok(c)
    }
}

/// Nearest sample of a surface over a parameter grid; seeds projections.
struct GuessTable {
    params: Vec<[f64; 2]>,
    points: Vec<Vector3<f64>>,
}

impl GuessTable {
    fn new(b: &VectorSurfaceSpline, n: usize) -> Self {
        let dom = b.domain();
        let mut params = Vec::with_capacity((n + 1) * (n + 1));
        for i in 0..=n {
            for j in 0..=n {
                params.push(dom.point(i as f64 / n as f64, j as f64 / n as f64));
            }
        }
        let points = params.iter().map(|s| b.eval3(*s)).collect();
        GuessTable { params, points }
    }

    fn nearest(&self, x: &Vector3<f64>) -> [f64; 2] {
        let k = self
            .points
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - x).norm_squared().total_cmp(&(b.1 - x).norm_squared()))
            .map(|(k, _)| k)
            .expect("non-empty table");
        self.params[k]
    }
}

struct Fitted {
    reparams: Vec<Reparametrization>,
    corners: Vec<[f64; 2]>,
    summaries: Vec<FitSummary>,
}

fn linspace(a: f64, b: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| a + (b - a) * i as f64 / (n - 1) as f64)
}

fn fit_reparams(base: &VectorSurfaceSpline, ribbons: &[RibbonSpec], fc: &FitConfig) -> Result<Fitted, BuildError> {
    let l = ribbons.len();
    let table = GuessTable::new(base, fc.guess_grid);
    let dom = base.domain();
    let inside = |s: [f64; 2]| s[0] >= dom.u0 && s[0] <= dom.u1 && s[1] >= dom.v0 && s[1] <= dom.v1;

    let mut corners = Vec::with_capacity(l);
    for r in ribbons {
        let x = r.surface.eval3([0.0, 0.0]);
        corners.push(project_point(base, &x, table.nearest(&x)).map_err(at(Stage::Harvest))?);
    }

    // Jacobian conditions, indexed by the segment they constrain
    let mut jacobians: Vec<Vec<JacobianCondition>> = vec![Vec::new(); l];
    let mut mismatch = vec![None; l];
    if fc.corner_jacobians {
        for j in 0..l {
            let i = (j + l - 1) % l;
            let n = diffgeo::frame(&ribbons[j].surface, [0.0, 0.0]).map_err(at(Stage::Fit))?.normal;
            let t = corner_tangent_frame(base, corners[j], &n).map_err(at(Stage::Fit))?;
            let tg = corner_jacobian_conditions(&ribbons[i].surface, &ribbons[j].surface, &t).map_err(at(Stage::Fit))?;
            jacobians[i].push(JacobianCondition { sigma: corners[j], jacobian: tg.prev });
            jacobians[j].push(JacobianCondition { sigma: corners[j], jacobian: tg.next });
            mismatch[j] = Some(tg.mismatch);
        }
    }

    let ku = KnotVector::uniform(fc.degree, dom.u0, dom.u1, fc.cells[0]);
    let kv = KnotVector::uniform(fc.degree, dom.v0, dom.v1, fc.cells[1]);
    let opts = FitOptions { lambda: fc.lambda };
    let mut reparams = Vec::with_capacity(l);
    let mut summaries = Vec::with_capacity(l);
    for (j, r) in ribbons.iter().enumerate() {
        let taus: Vec<[f64; 2]> = linspace(fc.u_range[0], fc.u_range[1], fc.samples[0])
            .flat_map(|u| linspace(fc.v_range[0], fc.v_range[1], fc.samples[1]).map(move |v| [u, v]))
            .collect();
        let h = harvest_correspondences(base, &r.surface, &taus, |t| table.nearest(&r.surface.eval3(t)));
        let mut corr = CorrespondenceSet {
            interpolate: vec![(corners[j], [0.0, 0.0]), (corners[(j + 1) % l], [1.0, 0.0])],
            approximate: Vec::new(),
        };
        let mut dropped = h.dropped.len();
        for p in h.pairs {
            if inside(p.0) {
                corr.approximate.push(p);
            } else {
                dropped += 1;
            }
        }
        if corr.approximate.len() < 3 {
            return Err(BuildError {
                stage: Stage::Harvest,
                source: AbcError::Invalid(format!("ribbon {j}: only {} usable correspondences", corr.approximate.len())),
            });
        }
        let mut fit = fit_reparam(&ku, &kv, &corr, &jacobians[j], &[], &opts).map_err(at(Stage::Fit))?;
        let mut levelsets: Vec<Pair> = Vec::new();
        if fc.straight_levelsets {
            for u in r.surface.knots_u().inner_breakpoints() {
                let x = r.surface.eval3([u, 0.0]);
                let anchor = solve_corner(&fit.reparam, [u, 0.0], table.nearest(&x)).map_err(at(Stage::Fit))?;
                let d2r = r.surface.jet([u, 0.0]).dv;
                let direction = levelset_direction(base, anchor, &d2r).map_err(at(Stage::Fit))?;
                let level = LevelSegment {
                    segment: j,
                    knot: u,
                    anchor,
                    direction,
                    extent: fc.levelset_extent,
                };
                levelsets.extend(span_constraints(&level, &ku, &kv, fc.levelset_points));
            }
            if !levelsets.is_empty() {
                fit = fit_reparam(&ku, &kv, &corr, &jacobians[j], &levelsets, &opts).map_err(at(Stage::Fit))?;
            }
        }
        summaries.push(FitSummary {
            segment: j,
            pairs: corr.approximate.len(),
            dropped,
            objective: fit.objective,
            constraint_residual: fit.constraint_residual,
            jacobian_constraints: jacobians[j].len(),
            levelset_constraints: levelsets.len(),
            corner_mismatch: mismatch[j],
        });
        reparams.push(fit.reparam);
    }
    Ok(Fitted {
        reparams,
        corners,
        summaries,
    })
}

/// Runs the whole pipeline: reparametrizations, loop, weights, blend.
pub fn build(config: &SceneConfig) -> Result<Built, BuildError> {
    config.validate().map_err(at(Stage::Config))?;
    let base = config.base.to_surface("base").map_err(at(Stage::Config))?;
    let ribbons = config
        .ribbons
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let s = r.surface.to_surface(&format!("ribbons[{i}].surface"))?;
            RibbonSpec::new(s, r.exponent).map_err(|e| AbcError::Invalid(format!("ribbons[{i}]: {e}")))
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(at(Stage::Config))?;
    let widths: Vec<f64> = config.ribbons.iter().map(|r| r.stripe_width).collect();
    let exponents: Vec<u32> = config.ribbons.iter().map(|r| r.exponent).collect();

    let (reparams, guesses, fits) = match &config.reparam {
        ReparamSource::Fit(fc) => {
            let f = fit_reparams(&base, &ribbons, fc)?;
            (f.reparams, f.corners, f.summaries)
        }
        ReparamSource::Explicit { reparams, corner_guesses } => {
            let ks = reparams
                .iter()
                .enumerate()
                .map(|(i, s)| s.to_reparam(&format!("reparam.reparams[{i}]")))
                .collect::<Result<Vec<_>, _>>()
                .map_err(at(Stage::Config))?;
            (ks, corner_guesses.clone(), Vec::new())
        }
    };
    let lp = TrimLoop::new(reparams, &guesses, widths).map_err(at(Stage::Trim))?;
    let weights = match config.weights {
        WeightMode::Plain => plain_weights(&lp, &exponents),
        WeightMode::Plateau => plateau_weights(&lp, &exponents),
    }
    .map_err(at(Stage::Weights))?;
    let implicit_residual = weights.verify_implicit(&lp).map_err(at(Stage::Weights))?;
    let (piece_w, piece_wl) = weights.max_piece_degrees(&lp).map_err(at(Stage::Weights))?;
    let report = BuildReport {
        name: config.name.clone(),
        segments: lp.len(),
        corners: lp.corners.clone(),
        fits,
        weight_mode: config.weights,
        implicit_residual,
        nominal_w_degree: weights.w.nominal_degree(),
        piece_w_degree: piece_w,
        piece_ribbon_weight_degrees: piece_wl,
    };
    let surface = AbcSurface::new(base, ribbons, lp, weights).map_err(at(Stage::Assemble))?;
    Ok(Built { surface, report })
}

/// A built scene in reloadable form: the configuration with its fitted
/// reparametrizations frozen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bundle {
    pub version: u32,
    pub config: SceneConfig,
    pub report: BuildReport,
}

impl Bundle {
    pub fn new(config: &SceneConfig, built: &Built) -> Self {
        let mut frozen = config.clone();
        frozen.reparam = ReparamSource::Explicit {
            reparams: built.surface.reparams.iter().map(SplineSpec::from_reparam).collect(),
            corner_guesses: built.report.corners.clone(),
        };
        Bundle {
            version: CONFIG_VERSION,
            config: frozen,
            report: built.report.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("bundle serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, AbcError> {
        let b: Bundle = serde_json::from_str(s).map_err(|e| AbcError::Parse { line: e.line(), msg: format!("bundle: {e}") })?;
        if b.version != CONFIG_VERSION {
            return Err(AbcError::Invalid(format!("bundle version: expected {CONFIG_VERSION}, found {}", b.version)));
        }
        b.config.validate()?;
        Ok(b)
    }

    /// Rebuilds the surface; deterministic given the frozen reparametrizations.
    pub fn load(&self) -> Result<Built, BuildError> {
        let mut built = build(&self.config)?;
        built.report.fits = self.report.fits.clone();
        Ok(built)
    }
}

// ---------------------------------------------------------------------------
// Example scenes

fn interp3<F: Fn(f64, f64) -> [f64; 3]>(ku: KnotVector, kv: KnotVector, f: F) -> VectorSurfaceSpline {
    VectorSurfaceSpline::interpolate(ku, kv, f).expect("interpolation on valid knots")
}

fn interp_reparam<P: Fn(f64, f64) -> f64, Q: Fn(f64, f64) -> f64>(
    ku: &KnotVector,
    kv: &KnotVector,
    p: P,
    q: Q,
) -> SplineSpec {
    let p = ScalarSurfaceSpline::interpolate(ku.clone(), kv.clone(), p).expect("valid knots");
    let q = ScalarSurfaceSpline::interpolate(ku.clone(), kv.clone(), q).expect("valid knots");
    SplineSpec::from_components(&[p, q])
}

fn polygon_edges(vertices: &[[f64; 2]]) -> Vec<([f64; 2], [f64; 2], [f64; 2])> {
    let l = vertices.len();
    (0..l)
        .map(|k| {
            let (p, q) = (vertices[k], vertices[(k + 1) % l]);
            let e = [q[0] - p[0], q[1] - p[1]];
            let len = e[0].hypot(e[1]);
            (p, e, [-e[1] / len, e[0] / len])
        })
        .collect()
}

/// Ribbons `S(P + u E + v w N)` along the edges of a convex polygon, with
/// `N` the inward unit normal.
fn edge_ribbons<S: Fn(f64, f64) -> [f64; 3] + Copy>(
    s: S,
    vertices: &[[f64; 2]],
    degree: [usize; 2],
    width: f64,
) -> Vec<VectorSurfaceSpline> {
    polygon_edges(vertices)
        .into_iter()
        .map(|(p, e, n)| {
            interp3(KnotVector::bezier(degree[0], 0.0, 1.0), KnotVector::bezier(degree[1], 0.0, 1.0), move |u, v| {
                s(p[0] + u * e[0] + v * width * n[0], p[1] + u * e[1] + v * width * n[1])
            })
        })
        .collect()
}

fn ribbon_configs(surfaces: Vec<VectorSurfaceSpline>, exponent: u32, width: f64) -> Vec<RibbonConfig> {
    surfaces
        .iter()
        .map(|s| RibbonConfig {
            surface: SplineSpec::from_spline(s),
            exponent,
            stripe_width: width,
        })
        .collect()
}

/// Unit square with axis-aligned affine reparametrizations, knot-aligned
/// with the base. `deg b = deg κ = [n,n]`, `deg r = [n,m]`, exponents `r`.
/// With `split`, the first ribbon has an inner knot at `u = 1/2`.
pub fn square_scene(n: usize, m: usize, r: u32, weights: WeightMode, split: bool) -> SceneConfig {
    assert!(n >= 1 && m >= 1 && m <= n && r >= 1);
    let f = move |x: f64, y: f64| {
        let mut z = 0.3 * x * y - 0.2 * x + 0.1 * y;
        if m >= 2 {
            z += 0.15 * x * x - 0.1 * y * y;
        }
        z
    };
    let surf = move |x: f64, y: f64| [x, y, f(x, y)];
    let bump = move |x: f64, y: f64| if n >= 2 { 0.4 * x * (1.0 - x) * y * (1.0 - y) } else { 0.05 };
    let k = KnotVector::uniform(n, -0.5, 1.5, 4);
    let base = interp3(k.clone(), k.clone(), move |x, y| {
        let p = surf(x, y);
        [p[0], p[1], p[2] + bump(x, y)]
    });
    // A_ℓ and κ_ℓ = A_ℓ⁻¹
    let maps: [(fn(f64, f64) -> [f64; 2], fn(f64, f64) -> [f64; 2]); 4] = [
        (|u, v| [u, v], |x, y| [x, y]),
        (|u, v| [1.0 - v, u], |x, y| [y, 1.0 - x]),
        (|u, v| [1.0 - u, 1.0 - v], |x, y| [1.0 - x, 1.0 - y]),
        (|u, v| [v, 1.0 - u], |x, y| [1.0 - y, x]),
    ];
    let mut ribbons = Vec::new();
    let mut reparams = Vec::new();
    for (i, (a, kappa)) in maps.iter().enumerate() {
        let inner: &[f64] = if split && i == 0 { &[0.5] } else { &[] };
        let ku = KnotVector::with_inner(n, 0.0, 1.0, inner);
        let a = *a;
        ribbons.push(interp3(ku, KnotVector::bezier(m, 0.0, 1.0), move |u, v| {
            let x = a(u, v);
            surf(x[0], x[1])
        }));
        let kappa = *kappa;
        reparams.push(interp_reparam(&k, &k, move |x, y| kappa(x, y)[0], move |x, y| kappa(x, y)[1]));
    }
    SceneConfig {
        version: CONFIG_VERSION,
        name: format!("square-n{n}-m{m}-r{r}"),
        base: SplineSpec::from_spline(&base),
        ribbons: ribbon_configs(ribbons, r, 0.1),
        reparam: ReparamSource::Explicit {
            reparams,
            corner_guesses: vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
        },
        weights,
        level: match r {
            1 => Level::G0,
            2 => Level::G1,
            _ => Level::G2,
        },
        seed: 0,
    }
}

/// Regular hexagon with `q_ℓ = d_ℓ (1 + x²y²/10)`, `d_ℓ` the distance to
/// edge `ℓ`; bicubic reparametrizations, exponents 3.
pub fn hexagon_scene(weights: WeightMode) -> SceneConfig {
    let vertices: Vec<[f64; 2]> = (0..6)
        .map(|k| {
            let t = k as f64 * PI / 3.0;
            [t.cos(), t.sin()]
        })
        .collect();
    let surf = |x: f64, y: f64| [x, y, 0.1 * (x * x - y * y)];
    let k = KnotVector::uniform(3, -1.2, 1.2, 4);
    let base = interp3(k.clone(), k.clone(), move |x, y| {
        let p = surf(x, y);
        [p[0], p[1], p[2] + 0.05 * (1.0 - x * x - y * y)]
    });
    let edges = polygon_edges(&vertices);
    let reparams = edges
        .iter()
        .map(|&(p, e, nrm)| {
            let e2 = e[0] * e[0] + e[1] * e[1];
            interp_reparam(
                &k,
                &k,
                move |x, y| ((x - p[0]) * e[0] + (y - p[1]) * e[1]) / e2,
                move |x, y| ((x - p[0]) * nrm[0] + (y - p[1]) * nrm[1]) * (1.0 + 0.1 * x * x * y * y),
            )
        })
        .collect();
    SceneConfig {
        version: CONFIG_VERSION,
        name: "hexagon".into(),
        base: SplineSpec::from_spline(&base),
        ribbons: ribbon_configs(edge_ribbons(surf, &vertices, [2, 2], 1.0), 3, 0.15),
        reparam: ReparamSource::Explicit {
            reparams,
            corner_guesses: vertices,
        },
        weights,
        level: Level::G1,
        seed: 0,
    }
}

fn polygon_fit_scene<S: Fn(f64, f64) -> [f64; 3] + Copy, B: Fn(f64, f64) -> f64 + Copy>(
    name: &str,
    vertices: &[[f64; 2]],
    surf: S,
    bump: B,
    ribbon_degree: [usize; 2],
    rect: [f64; 4],
    exponent: u32,
    level: Level,
    fit: FitConfig,
) -> SceneConfig {
    let ku = KnotVector::uniform(3, rect[0], rect[1], 4);
    let kv = KnotVector::uniform(3, rect[2], rect[3], 4);
    let base = interp3(ku, kv, move |x, y| {
        let p = surf(x, y);
        [p[0], p[1], p[2] + bump(x, y)]
    });
    SceneConfig {
        version: CONFIG_VERSION,
        name: name.into(),
        base: SplineSpec::from_spline(&base),
        ribbons: ribbon_configs(edge_ribbons(surf, vertices, ribbon_degree, 0.5), exponent, 0.15),
        reparam: ReparamSource::Fit(fit),
        weights: WeightMode::Plain,
        level,
        seed: 0,
    }
}

/// Triangle on a quadratic graph; the base carries a cubic bump. Exponents
/// 3 for curvature continuity.
pub fn triangle_scene(corner_jacobians: bool) -> SceneConfig {
    let surf = |x: f64, y: f64| [x, y, 0.3 * x * x - 0.2 * x * y + 0.25 * y * y];
    let bump = |x: f64, y: f64| 0.05 + 0.1 * x * y - 0.08 * x * x * y + 0.05 * y * y * y;
    polygon_fit_scene(
        if corner_jacobians { "triangle" } else { "triangle-free-corners" },
        &[[0.0, 0.0], [1.0, 0.0], [0.4, 0.9]],
        surf,
        bump,
        [2, 2],
        [-0.4, 1.4, -0.4, 1.3],
        3,
        Level::G2,
        FitConfig {
            corner_jacobians,
            ..FitConfig::default()
        },
    )
}

/// Quadrilateral opening in a cubic fender-like sheet. Exponents 2.
pub fn fender_scene() -> SceneConfig {
    let surf = |x: f64, y: f64| [x, y, 0.35 * x * x - 0.12 * x * x * x + 0.25 * y * y + 0.1 * x * y * y];
    let bump = |x: f64, y: f64| 0.04 - 0.06 * x * y + 0.05 * x * x * y;
    polygon_fit_scene(
        "fender",
        &[[0.0, 0.0], [1.2, 0.0], [1.1, 0.8], [0.1, 0.7]],
        surf,
        bump,
        [3, 3],
        [-0.4, 1.6, -0.4, 1.2],
        2,
        Level::G1,
        FitConfig::default(),
    )
}

/// Inner knots of the ribbons along the cylinder intersection.
pub const CYLINDER_INNER_KNOTS: usize = 9;

fn intersection_point(u: f64) -> [f64; 3] {
    let phi = PI * (1.0 - u);
    let (x, y) = (0.5 * phi.cos(), 0.5 * phi.sin());
    [x, y, (1.0 - y * y).sqrt()]
}

/// Two trimmed pieces of the cylinders `y² + z² = 1` and `x² + y² = 1/4`
/// sharing the upper half of their intersection curve. The first piece is
/// parametrized over `(x, y)`, the second over `(φ, z)`.
pub fn cylinder_scenes() -> [SceneConfig; 2] {
    let inner: Vec<f64> = (1..=CYLINDER_INNER_KNOTS)
        .map(|i| i as f64 / (CYLINDER_INNER_KNOTS + 1) as f64)
        .collect();
    let ku_arc = KnotVector::with_inner(3, 0.0, 1.0, &inner);
    // creased corners: the corner Jacobian conditions do not apply
    let fit = FitConfig {
        cells: [12, 12],
        samples: [41, 9],
        corner_jacobians: false,
        straight_levelsets: true,
        levelset_points: 7,
        levelset_extent: 0.06,
        ..FitConfig::default()
    };

    // large cylinder, graph over (x, y): a crescent between the hole and
    // an arc centered at (0, 0.3) through (±0.5, 0)
    let big = |x: f64, y: f64| [x, y, (1.0 - y * y).sqrt()];
    let kb_u = KnotVector::uniform(3, -1.0, 1.0, 8);
    let kb_v = KnotVector::uniform(3, -0.35, 0.95, 8);
    let base1 = interp3(kb_u, kb_v, big);
    let (cy, rad) = (0.3f64, (0.25f64 + 0.09).sqrt());
    let psi0 = (-cy).atan2(0.5);
    let sweep = PI - 2.0 * psi0;
    let outer = interp3(KnotVector::uniform(3, 0.0, 1.0, 4), KnotVector::bezier(3, 0.0, 1.0), move |u, v| {
        let psi = psi0 + u * sweep;
        let r = rad - 0.4 * v;
        big(r * psi.cos(), cy + r * psi.sin())
    });
    let arc1 = interp3(ku_arc.clone(), KnotVector::bezier(1, 0.0, 1.0), |u, v| {
        let c = intersection_point(u);
        let phi = PI * (1.0 - u);
        let t = Vector3::new(phi.cos(), phi.sin(), -c[1] * phi.sin() / c[2]).normalize();
        [c[0] + v * t[0], c[1] + v * t[1], c[2] + v * t[2]]
    });
    let large = SceneConfig {
        version: CONFIG_VERSION,
        name: "cylinder-large".into(),
        base: SplineSpec::from_spline(&base1),
        ribbons: ribbon_configs(vec![outer, arc1], 1, 0.05),
        // one radial levelset per polynomial piece needs the finer grid
        reparam: ReparamSource::Fit(FitConfig {
            cells: [24, 24],
            v_range: [-0.1, 0.45],
            ..fit.clone()
        }),
        weights: WeightMode::Plain,
        level: Level::G0,
        seed: 0,
    };

    // small cylinder over (φ, z)
    let small = |phi: f64, z: f64| [0.5 * phi.cos(), 0.5 * phi.sin(), z];
    let ks_u = KnotVector::uniform(3, -0.3, PI + 0.3, 8);
    let ks_v = KnotVector::uniform(3, 0.6, 1.8, 8);
    let base2 = interp3(ks_u, ks_v, small);
    let straight2 = |p: [f64; 2], q: [f64; 2], w: f64| {
        let (_, e, n) = polygon_edges(&[p, q])[0];
        interp3(KnotVector::bezier(3, 0.0, 1.0), KnotVector::bezier(3, 0.0, 1.0), move |u, v| {
            small(p[0] + u * e[0] + v * w * n[0], p[1] + u * e[1] + v * w * n[1])
        })
    };
    let arc2 = interp3(ku_arc, KnotVector::bezier(1, 0.0, 1.0), |u, v| {
        let c = intersection_point(1.0 - u);
        [c[0], c[1], c[2] + 0.5 * v]
    });
    let r2 = vec![
        arc2,
        straight2([PI, 1.0], [PI, 1.5], 2.0),
        straight2([PI, 1.5], [0.0, 1.5], 0.5),
        straight2([0.0, 1.5], [0.0, 1.0], 2.0),
    ];
    let small_scene = SceneConfig {
        version: CONFIG_VERSION,
        name: "cylinder-small".into(),
        base: SplineSpec::from_spline(&base2),
        ribbons: ribbon_configs(r2, 1, 0.05),
        reparam: ReparamSource::Fit(fit),
        weights: WeightMode::Plain,
        level: Level::G0,
        seed: 0,
    };
    [large, small_scene]
}

/// Segment of each cylinder piece that runs along the shared curve; the
/// pieces traverse it in opposite directions.
pub const CYLINDER_SEAM: [usize; 2] = [1, 0];

/// `max |a¹(γ¹(u)) − a²(γ²(1 − u))|` over `samples` midpoints along the
/// shared curve of the two cylinder pieces.
pub fn cylinder_seam_gap(large: &AbcSurface, small: &AbcSurface, samples: usize) -> Result<f64, AbcError> {
    let missing = || AbcError::Invalid("cylinder piece without trim loop".into());
    let (t1, t2) = (large.trim.as_ref().ok_or_else(missing)?, small.trim.as_ref().ok_or_else(missing)?);
    let mut gap = 0.0f64;
    for i in 0..samples {
        let u = (i as f64 + 0.5) / samples as f64;
        let p = large.eval(t1.boundary_point(CYLINDER_SEAM[0], u)?)?;
        let q = small.eval(t2.boundary_point(CYLINDER_SEAM[1], 1.0 - u)?)?;
        gap = gap.max((p - q).norm());
    }
    Ok(gap)
}

/// All example scenes by name.
pub fn examples() -> Vec<SceneConfig> {
    let mut v = vec![
        square_scene(3, 2, 3, WeightMode::Plateau, true),
        hexagon_scene(WeightMode::Plain),
        triangle_scene(true),
        fender_scene(),
    ];
    v.extend(cylinder_scenes());
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips_through_json() {
        let c = square_scene(2, 1, 2, WeightMode::Plain, false);
        let back = SceneConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn validation_names_the_field() {
        let mut c = square_scene(2, 1, 2, WeightMode::Plain, false);
        c.ribbons[2].exponent = 0;
        let e = c.validate().unwrap_err().to_string();
        assert!(e.contains("ribbons[2].exponent"), "{e}");
    }

    #[test]
    fn square_builds_and_is_exact_on_the_boundary() {
        let b = build(&square_scene(2, 1, 2, WeightMode::Plain, false)).unwrap();
        let a = &b.surface;
        for u in [0.1, 0.5, 0.9] {
            let p = a.eval([u, 0.0]).unwrap();
            let r = a.ribbons[0].surface.eval3([u, 0.0]);
            assert!((p - r).norm() < 1e-12);
        }
    }

    #[test]
    fn bundle_reload_is_deterministic() {
        let c = square_scene(2, 1, 2, WeightMode::Plain, false);
        let b = build(&c).unwrap();
        let bundle = Bundle::from_json(&Bundle::new(&c, &b).to_json()).unwrap();
        let again = bundle.load().unwrap();
        for s in [[0.3, 0.4], [0.7, 0.2]] {
            assert_eq!(b.surface.eval(s).unwrap(), again.surface.eval(s).unwrap());
        }
    }
}
