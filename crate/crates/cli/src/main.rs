//! Command-line driver: build, check, render and export blended surfaces.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use abc_core::abc::{
    build_counterexample, counterexample_closed_form, richardson_limit, verify_contact, AbcSurface, ContactReport,
    Level, VerifyOptions,
};
use abc_core::diffgeo::{frame_from_jet, isophote_value};
use abc_core::error::AbcError;
use abc_core::export::{check_patches, emit, extract_all, max_degree, partition, TrimMode};
use nalgebra::Vector3;
use abc_core::scene::{
    build, cylinder_scenes, cylinder_seam_gap, triangle_scene, BuildError, Built, Bundle, SceneConfig, Stage,
};
use abc_core::trim::point_in_polygon;
use clap::{Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

const SEAM_TOL: f64 = 1e-9;
const CLOSED_FORM_TOL: f64 = 1e-12;

#[derive(Parser)]
#[command(name = "abc", version, about = "Blended trimmed spline surfaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit reparametrizations, build weights and write a bundle.
    Build {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "bundle.json")]
        out: PathBuf,
    },
    /// Verify boundary contact of a bundle or scene.
    Check {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        level: Option<LevelArg>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a mesh or a raster over the trimmed domain.
    Render {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value = "mesh")]
        what: RenderKind,
        #[arg(long, default_value_t = 64)]
        density: usize,
        /// Light direction `x,y,z` for isophotes.
        #[arg(long, default_value = "0,0,1")]
        light: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Convert to trimmed rational patches.
    Export {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value = "parametric")]
        mode: ModeArg,
        #[arg(long, default_value_t = 8)]
        density: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate, build and check a named example.
    Examples {
        #[arg(value_enum)]
        name: ExampleName,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "examples-out")]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum LevelArg {
    G0,
    G1,
    G2,
}

impl From<LevelArg> for Level {
    fn from(l: LevelArg) -> Level {
        match l {
            LevelArg::G0 => Level::G0,
            LevelArg::G1 => Level::G1,
            LevelArg::G2 => Level::G2,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Parametric,
    Geometric,
    Hybrid,
}

impl From<ModeArg> for TrimMode {
    fn from(m: ModeArg) -> TrimMode {
        match m {
            ModeArg::Parametric => TrimMode::Parametric,
            ModeArg::Geometric => TrimMode::Geometric,
            ModeArg::Hybrid => TrimMode::Hybrid,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum RenderKind {
    Mesh,
    Isophotes,
    Curvature,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExampleName {
    Counterexample,
    Cylinders,
    Triangle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
enum Code {
    Validation = 2,
    Verification = 3,
    Numerical = 4,
    Io = 5,
}

#[derive(Debug, Serialize)]
struct Failure {
    stage: String,
    code: Code,
    exit: u8,
    message: String,
}

impl Failure {
    fn new(stage: &str, code: Code, message: impl Into<String>) -> Self {
        Failure {
            stage: stage.into(),
            code,
            exit: code as u8,
            message: message.into(),
        }
    }

    fn from_abc(stage: &str, e: AbcError) -> Self {
        let code = match e {
            AbcError::Io(_) => Code::Io,
            AbcError::Invalid(_) | AbcError::Parse { .. } | AbcError::InvalidKnots(_) | AbcError::CoefficientShape { .. } => {
                Code::Validation
            }
            _ => Code::Numerical,
        };
        Failure::new(stage, code, e.to_string())
    }

    fn from_build(e: BuildError) -> Self {
        let stage = serde_json::to_value(e.stage).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default();
        let mut f = Failure::from_abc(&stage, e.source);
        if e.stage == Stage::Config && f.code == Code::Numerical {
            f.code = Code::Validation;
            f.exit = Code::Validation as u8;
        }
        f
    }
}

type CmdResult = Result<(), Failure>;

fn io(stage: &str) -> impl Fn(std::io::Error) -> Failure + '_ {
    move |e| Failure::new(stage, Code::Io, e.to_string())
}

fn write(stage: &str, path: &Path, text: &str) -> CmdResult {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io(stage))?;
    }
    std::fs::write(path, text).map_err(io(stage))
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("report serializes") + "\n"
}

/// Reads a bundle, or a scene configuration that is then built.
fn load(path: &Path) -> Result<(SceneConfig, Built), Failure> {
    let text = std::fs::read_to_string(path).map_err(io("load"))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Failure::new("load", Code::Validation, format!("{}: {e}", path.display())))?;
    if value.get("config").is_some() && value.get("report").is_some() {
        let bundle = Bundle::from_json(&text).map_err(|e| Failure::from_abc("load", e))?;
        let built = bundle.load().map_err(Failure::from_build)?;
        Ok((bundle.config, built))
    } else {
        let config = SceneConfig::from_json(&text).map_err(|e| Failure::from_abc("config", e))?;
        let built = build(&config).map_err(Failure::from_build)?;
        Ok((config, built))
    }
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn cmd_build(config: &Path, out: &Path) -> CmdResult {
    let text = std::fs::read_to_string(config).map_err(io("load"))?;
    let scene = SceneConfig::from_json(&text).map_err(|e| Failure::from_abc("config", e))?;
    let built = build(&scene).map_err(Failure::from_build)?;
    let r = &built.report;
    println!("scene {}: {} segments, weights {:?}", r.name, r.segments, r.weight_mode);
    println!("deg w nominal {} per piece {}", r.nominal_w_degree, r.piece_w_degree);
    for (l, d) in r.piece_ribbon_weight_degrees.iter().enumerate() {
        println!("deg w_{l} per piece {d}");
    }
    for f in &r.fits {
        println!("fit {}: {} pairs, constraint residual {:.3e}", f.segment, f.pairs, f.constraint_residual);
    }
    println!("implicit residual {:.3e}", r.implicit_residual);
    write("build", out, &Bundle::new(&scene, &built).to_json())?;
    write("build", &sibling(out, "report.json"), &json(r))?;
    println!("wrote {}", out.display());
    Ok(())
}

fn print_contact(name: &str, rep: &ContactReport) {
    let h = &rep.hypotheses;
    println!(
        "{name}: hypotheses point {} normal {} rank {} curvature {} jacobian {}",
        h.point, h.normal, h.rank, h.curvature, h.jacobian
    );
    println!(
        "{name}: max position gap {:.3e}, normal angle {:.3e}, curvature gap {:.3e}",
        rep.max_position_gap(),
        rep.max_normal_angle(),
        rep.max_curvature_gap()
    );
    for c in &rep.corners {
        println!("{name}: corner {} jacobian gap {:.3e}", c.corner, c.jacobian_gap);
    }
    let v = rep.verdicts;
    println!(
        "{name}: G0 {} G1 {} G2 {}",
        verdict_word(v[0]),
        verdict_word(v[1]),
        verdict_word(v[2])
    );
}

fn verdict_word(b: bool) -> &'static str {
    if b {
        "pass"
    } else {
        "fail"
    }
}

fn check(name: &str, a: &AbcSurface, level: Level) -> Result<ContactReport, Failure> {
    let rep = verify_contact(a, level, &VerifyOptions::default()).map_err(|e| Failure::from_abc("check", e))?;
    print_contact(name, &rep);
    Ok(rep)
}

fn verdict(rep: &ContactReport, level: Level) -> CmdResult {
    if rep.verdict(level) {
        Ok(())
    } else {
        Err(Failure::new("check", Code::Verification, format!("{level:?} contact not established")))
    }
}

fn cmd_check(config: &Path, level: Option<Level>, out: Option<&Path>) -> CmdResult {
    let (scene, built) = load(config)?;
    let level = level.unwrap_or(scene.level);
    let rep = check(&scene.name, &built.surface, level)?;
    if let Some(out) = out {
        write("check", out, &json(&rep))?;
    }
    verdict(&rep, level)
}

/// Grid over the bounding box of the trimmed domain; `None` outside.
fn domain_grid(a: &AbcSurface, density: usize) -> Result<Vec<Vec<Option<[f64; 2]>>>, Failure> {
    let lp = a
        .trim
        .as_ref()
        .ok_or_else(|| Failure::new("render", Code::Validation, "surface has no trim loop"))?;
    let poly = lp.polygon();
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in &poly {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let n = density.max(2);
    Ok((0..=n)
        .map(|i| {
            (0..=n)
                .map(|j| {
                    let s = [
                        lo[0] + (hi[0] - lo[0]) * i as f64 / n as f64,
                        lo[1] + (hi[1] - lo[1]) * j as f64 / n as f64,
                    ];
                    point_in_polygon(&poly, s).then_some(s)
                })
                .collect()
        })
        .collect())
}

fn mesh_obj(a: &AbcSurface, density: usize) -> Result<String, Failure> {
    let grid = domain_grid(a, density)?;
    let mut index = vec![vec![0usize; grid[0].len()]; grid.len()];
    let mut s = String::new();
    let mut count = 0;
    for (i, row) in grid.iter().enumerate() {
        for (j, p) in row.iter().enumerate() {
            let Some(p) = p else { continue };
            let x = a.eval(*p).map_err(|e| Failure::from_abc("render", e))?;
            let nv = a.eval_normal(*p).unwrap_or_else(|_| Vector3::z());
            let _ = writeln!(s, "v {:.12} {:.12} {:.12}", x[0], x[1], x[2]);
            let _ = writeln!(s, "vn {:.12} {:.12} {:.12}", nv[0], nv[1], nv[2]);
            count += 1;
            index[i][j] = count;
        }
    }
    for i in 0..grid.len() - 1 {
        for j in 0..grid[0].len() - 1 {
            let (a0, a1, b0, b1) = (index[i][j], index[i + 1][j], index[i][j + 1], index[i + 1][j + 1]);
            for t in [[a0, a1, b1], [a0, b1, b0]] {
                if t.iter().all(|&k| k > 0) {
                    let _ = writeln!(s, "f {0}//{0} {1}//{1} {2}//{2}", t[0], t[1], t[2]);
                }
            }
        }
    }
    Ok(s)
}

fn parse_light(s: &str) -> Result<Vector3<f64>, Failure> {
    let bad = || Failure::new("render", Code::Validation, format!("light: expected x,y,z, found {s}"));
    let v: Vec<f64> = s.split(',').map(|t| t.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|_| bad())?;
    if v.len() != 3 {
        return Err(bad());
    }
    let l = Vector3::new(v[0], v[1], v[2]);
    if l.norm() == 0.0 {
        return Err(bad());
    }
    Ok(l.normalize())
}

fn cmd_render(config: &Path, what: RenderKind, density: usize, light: &str, out: &Path) -> CmdResult {
    let (_, built) = load(config)?;
    let a = &built.surface;
    match what {
        RenderKind::Mesh => write("render", out, &mesh_obj(a, density)?),
        RenderKind::Isophotes => {
            let l = parse_light(light)?;
            let mut s = String::from("u,v,isophote\n");
            for p in domain_grid(a, density)?.into_iter().flatten().flatten() {
                let f = a
                    .eval_jet(p)
                    .and_then(|j| frame_from_jet(&j))
                    .map_err(|e| Failure::from_abc("render", e))?;
                let _ = writeln!(s, "{:.12},{:.12},{:.12}", p[0], p[1], isophote_value(&f, &l));
            }
            write("render", out, &s)
        }
        RenderKind::Curvature => {
            let mut s = String::from("u,v,gaussian,mean\n");
            let mut hs = Vec::new();
            for p in domain_grid(a, density)?.into_iter().flatten().flatten() {
                let c = a.eval_curvature(p).map_err(|e| Failure::from_abc("render", e))?;
                let (k, h) = (c.gaussian(), c.mean());
                hs.push(h);
                let _ = writeln!(s, "{:.12},{:.12},{:.12},{:.12}", p[0], p[1], k, h);
            }
            if !hs.is_empty() {
                let mean = hs.iter().sum::<f64>() / hs.len() as f64;
                let dev = hs.iter().fold(0.0f64, |m, h| m.max((h - mean).abs()));
                println!("mean curvature {mean:.6e}, max deviation {dev:.3e} over {} points", hs.len());
            }
            write("render", out, &s)
        }
    }
}

fn cmd_export(config: &Path, mode: TrimMode, density: usize, seed: u64, out: &Path) -> CmdResult {
    let (_, built) = load(config)?;
    let a = &built.surface;
    let part = partition(a).map_err(|e| Failure::from_abc("export", e))?;
    let patches = extract_all(a, &part).map_err(|e| Failure::from_abc("export", e))?;
    let chk = check_patches(a, &patches, 16, seed).map_err(|e| Failure::from_abc("export", e))?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io("export"))?;
    }
    emit(a, &patches, mode, out, density).map_err(|e| Failure::from_abc("export", e))?;
    let (p, q) = max_degree(&patches);
    println!(
        "{} cells, {} patches, max degree [{p},{q}], mode {}",
        part.cells.len(),
        patches.len(),
        mode.name()
    );
    println!(
        "max relative error {:.3e} over {} samples, min denominator {:.3e}",
        chk.max_relative_error, chk.samples, chk.min_denominator
    );
    println!("wrote {} and {}", out.display(), out.with_extension("obj").display());
    Ok(())
}

#[derive(Serialize)]
struct CounterexampleReport {
    seed: u64,
    samples: usize,
    max_relative_error: f64,
    limit_point: [f64; 3],
    limit_normal: [f64; 3],
    gaussian_limits: [(f64, f64); 3],
}

fn counterexample(seed: u64, out: &Path) -> CmdResult {
    let a = build_counterexample().map_err(|e| Failure::from_abc("examples", e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = 1000;
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let (x, y) = (rng.gen_range(1e-3..1.0), rng.gen_range(1e-3..1.0));
        let want = counterexample_closed_form(x, y);
        let got = a.eval([x, y]).map_err(|e| Failure::from_abc("examples", e))?;
        worst = worst.max((got - want).norm() / want.norm().max(1.0));
    }
    let ray = |phi: f64, t: f64| [t * phi.cos(), t * phi.sin()];
    let phi = PI / 4.0;
    let lim = |f: &dyn Fn(f64) -> f64| richardson_limit(f, 1e-2, 6);
    let limit_point = [0, 1, 2].map(|k| lim(&|t| a.eval(ray(phi, t)).map_or(f64::NAN, |p| p[k])));
    let limit_normal = [0, 1, 2].map(|k| lim(&|t| a.eval_normal(ray(phi, t)).map_or(f64::NAN, |n| n[k])));
    let gaussian_limits = [0.0, PI / 4.0, PI / 2.0].map(|phi| {
        // the closed form is undefined on the axes, so approach them at a tiny angle
        let phi = phi.clamp(1e-6, PI / 2.0 - 1e-6);
        (phi, lim(&|t| a.gaussian_curvature(ray(phi, t)).unwrap_or(f64::NAN)))
    });
    println!("counterexample: max relative deviation from closed form {worst:.3e} at {samples} points");
    println!("counterexample: limit point {limit_point:?}, limit normal {limit_normal:?}");
    for (phi, k) in gaussian_limits {
        println!("counterexample: K along phi = {phi:.6} tends to {k:.6e}");
    }
    let rep = CounterexampleReport {
        seed,
        samples,
        max_relative_error: worst,
        limit_point,
        limit_normal,
        gaussian_limits,
    };
    write("examples", &out.join("counterexample.json"), &json(&rep))?;
    if worst > CLOSED_FORM_TOL {
        return Err(Failure::new("examples", Code::Verification, format!("closed form deviation {worst:e}")));
    }
    Ok(())
}

fn save_scene(scene: &SceneConfig, built: &Built, out: &Path) -> CmdResult {
    write("examples", &out.join(format!("{}.config.json", scene.name)), &scene.to_json())?;
    write("examples", &out.join(format!("{}.bundle.json", scene.name)), &Bundle::new(scene, built).to_json())
}

fn build_seeded(mut scene: SceneConfig, seed: u64) -> Result<(SceneConfig, Built), Failure> {
    scene.seed = seed;
    let built = build(&scene).map_err(Failure::from_build)?;
    Ok((scene, built))
}

fn cmd_examples(name: ExampleName, seed: u64, out: &Path) -> CmdResult {
    std::fs::create_dir_all(out).map_err(io("examples"))?;
    match name {
        ExampleName::Counterexample => counterexample(seed, out),
        ExampleName::Triangle => {
            let (scene, built) = build_seeded(triangle_scene(true), seed)?;
            save_scene(&scene, &built, out)?;
            let rep = check(&scene.name, &built.surface, Level::G2)?;
            write("examples", &out.join(format!("{}.check.json", scene.name)), &json(&rep))?;
            verdict(&rep, Level::G2)
        }
        ExampleName::Cylinders => {
            let mut surfaces = Vec::new();
            for scene in cylinder_scenes() {
                let (scene, built) = build_seeded(scene, seed)?;
                save_scene(&scene, &built, out)?;
                let rep = check(&scene.name, &built.surface, Level::G0)?;
                write("examples", &out.join(format!("{}.check.json", scene.name)), &json(&rep))?;
                verdict(&rep, Level::G0)?;
                surfaces.push(built.surface);
            }
            let gap = cylinder_seam_gap(&surfaces[0], &surfaces[1], 1000).map_err(|e| Failure::from_abc("examples", e))?;
            println!("cylinders: max gap along the shared curve {gap:.3e}");
            if gap > SEAM_TOL {
                return Err(Failure::new("examples", Code::Verification, format!("seam gap {gap:e}")));
            }
            Ok(())
        }
    }
}

fn run(cli: Cli) -> CmdResult {
    match cli.command {
        Command::Build { config, out } => cmd_build(&config, &out),
        Command::Check { config, level, out } => cmd_check(&config, level.map(Level::from), out.as_deref()),
        Command::Render {
            config,
            what,
            density,
            light,
            out,
        } => cmd_render(&config, what, density, &light, &out),
        Command::Export {
            config,
            mode,
            density,
            seed,
            out,
        } => cmd_export(&config, mode.into(), density, seed, &out),
        Command::Examples { name, seed, out } => cmd_examples(name, seed, &out),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error [{}] {}", f.stage, f.message);
            eprintln!("{}", serde_json::to_string(&f).expect("failure serializes"));
            ExitCode::from(f.exit)
        }
    }
}
