//! The `tdrs` command-line tool.
//!
//! Every subcommand accepts `--config FILE` with `key=value` lines; keys are
//! the long flag names with `-` replaced by `_`, and flags override the file.
//! The fully resolved settings are echoed to stderr. Stdout carries only
//! data.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 1 | I/O or parse failure |
//! | 2 | invalid usage or configuration |
//! | 3 | singular matrix |
//! | 4 | degenerate target |
//! | 5 | gradient ascent did not reach the hyperplane |
//! | 6 | degenerate ground-truth mask |
//! | 7 | dimension mismatch |
//! | 8 | a numerical tolerance was violated (a `verify` check or a solver precondition) |

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::detectors::{self, Detector};
use crate::error::{Error, Result};
use crate::eval::{self, DetectionMap};
use crate::io;
use crate::solver::{self, AscentConfig, GridSpec, Hyperplane, SolutionKind};
use crate::stats::{OriginShift, Scene, SceneStats, TargetSignature};
use crate::synth::{self, SynthConfig};

pub const EXIT_IO: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_SINGULAR: u8 = 3;
pub const EXIT_DEGENERATE_TARGET: u8 = 4;
pub const EXIT_NO_CONVERGENCE: u8 = 5;
pub const EXIT_DEGENERATE_MASK: u8 = 6;
pub const EXIT_DIMENSION: u8 = 7;
pub const EXIT_VERIFY: u8 = 8;

/// Tolerances applied by `verify`.
pub mod tolerance {
    pub const SOLUTION_RESIDUAL: f64 = 1e-9;
    pub const ASCENT_RESIDUAL: f64 = 1e-6;
    pub const GRADIENT_REL_ERROR: f64 = 1e-6;
    pub const COSINE: f64 = 1e-10;
    pub const C: f64 = 1e-8;
    pub const PLATEAU: f64 = 1e-9;
    pub const ENERGY_SLACK: f64 = 1e-10;
}

#[derive(Debug, Parser)]
#[command(
    name = "tdrs",
    version,
    about = "Target detection with CEM, MF and origin-optimized CE detectors"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a seeded synthetic scene, its mask and target spectrum.
    Synth(SynthArgs),
    /// Run one detector and write its detection map.
    Detect(DetectArgs),
    /// Run every detector and write energy, R² and scatter tables.
    Compare(CompareArgs),
    /// Score a detection map against a ground-truth mask.
    Roc(RocArgs),
    /// Sample g(μ) over a grid of origins for a two-band scene.
    Surface(SurfaceArgs),
    /// Check the basic-equation and equivalence identities on a scene.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Cem,
    Mf,
    CeClosed,
    CeAscent,
}

impl MethodArg {
    fn label(self) -> &'static str {
        match self {
            MethodArg::Cem => "cem",
            MethodArg::Mf => "mf",
            MethodArg::CeClosed => "ce-closed",
            MethodArg::CeAscent => "ce-ascent",
        }
    }
}

impl Display for MethodArg {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for MethodArg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        <Self as ValueEnum>::from_str(s, false)
    }
}

#[derive(Debug, Args)]
pub struct ConfigArg {
    /// key=value settings file; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SceneArgs {
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// Target spectrum CSV (band,value).
    #[arg(long)]
    pub target: Option<PathBuf>,
    /// Ridge added to the covariance and correlation diagonals.
    #[arg(long)]
    pub ridge: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Scene file to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Mask CSV to write.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// Target spectrum CSV to write.
    #[arg(long)]
    pub target: Option<PathBuf>,
    /// "centered" or "x,y" of the block's top-left pixel.
    #[arg(long)]
    pub tgt_position: Option<String>,
}

#[derive(Debug, Args)]
pub struct AscentArgs {
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub grad_tol: Option<f64>,
    #[arg(long)]
    pub initial_step: Option<f64>,
    #[arg(long)]
    pub backtrack_factor: Option<f64>,
    #[arg(long)]
    pub armijo_c: Option<f64>,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[command(flatten)]
    pub input: SceneArgs,
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
    /// Detection map CSV to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub ascent: AscentArgs,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[command(flatten)]
    pub input: SceneArgs,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RocArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    /// Detection map CSV (x,y,score).
    #[arg(long)]
    pub map: Option<PathBuf>,
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// ROC CSV to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SurfaceArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[command(flatten)]
    pub input: SceneArgs,
    /// Grid CSV to write (mu1,mu2,g).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Hyperplane line CSV to write.
    #[arg(long)]
    pub line: Option<PathBuf>,
    /// "mu1_min,mu1_max,mu2_min,mu2_max"; defaults to the data extent plus margin.
    #[arg(long, allow_hyphen_values = true)]
    pub range: Option<String>,
    /// "nx,ny".
    #[arg(long)]
    pub resolution: Option<String>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[command(flatten)]
    pub input: SceneArgs,
    /// Sampled hyperplane solutions to check.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Extra origin "v1,v2,..." checked as if it were a solution.
    #[arg(long, allow_hyphen_values = true)]
    pub mu: Option<String>,
}

/// Maps an error to the documented exit code.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Singular { .. } => EXIT_SINGULAR,
        Error::DegenerateTarget(_) => EXIT_DEGENERATE_TARGET,
        Error::MaxItersExceeded { .. } => EXIT_NO_CONVERGENCE,
        Error::DegenerateMask => EXIT_DEGENERATE_MASK,
        Error::DimensionMismatch { .. } => EXIT_DIMENSION,
        Error::ConfigInvalid(_) => EXIT_CONFIG,
        Error::PreconditionFailed { .. } => EXIT_VERIFY,
        _ => EXIT_IO,
    }
}

/// Entry point for the binary.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}

/// Runs a parsed command and returns its exit code.
pub fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Synth(args) => cmd_synth(args).map(|()| 0),
        Command::Detect(args) => cmd_detect(args).map(|()| 0),
        Command::Compare(args) => cmd_compare(args).map(|()| 0),
        Command::Roc(args) => cmd_roc(args).map(|()| 0),
        Command::Surface(args) => cmd_surface(args).map(|()| 0),
        Command::Verify(args) => cmd_verify(args),
    }
}

/// Flag-over-file setting resolution with a log of the resolved values.
struct Settings {
    command: &'static str,
    file: BTreeMap<String, String>,
    resolved: Vec<(String, String)>,
}

impl Settings {
    fn load(command: &'static str, config: &ConfigArg) -> Result<Self> {
        let mut file = BTreeMap::new();
        if let Some(path) = &config.config {
            for (k, v) in io::read_key_values(path)? {
                file.insert(k, v);
            }
        }
        Ok(Self {
            command,
            file,
            resolved: Vec::new(),
        })
    }

    fn get<T>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let from_file = self.file.remove(key);
        let value = match flag {
            Some(v) => Some(v),
            None => match from_file {
                Some(raw) => Some(
                    raw.parse::<T>()
                        .map_err(|e| Error::ConfigInvalid(format!("{key}: {e} ({raw:?})")))?,
                ),
                None => None,
            },
        };
        if let Some(v) = &value {
            self.resolved.push((key.to_string(), v.to_string()));
        }
        Ok(value)
    }

    fn get_or<T>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        match self.get(key, flag)? {
            Some(v) => Ok(v),
            None => {
                self.resolved.push((key.to_string(), default.to_string()));
                Ok(default)
            }
        }
    }

    fn path(&mut self, key: &str, flag: Option<PathBuf>) -> Result<Option<PathBuf>> {
        let flag = flag.map(|p| p.display().to_string());
        Ok(self.get::<String>(key, flag)?.map(PathBuf::from))
    }

    fn required_path(&mut self, key: &str, flag: Option<PathBuf>) -> Result<PathBuf> {
        self.path(key, flag)?
            .ok_or_else(|| Error::ConfigInvalid(format!("--{} is required", key.replace('_', "-"))))
    }

    /// Fails on leftover file keys, then echoes the resolved settings.
    fn finish(self) -> Result<()> {
        if let Some(key) = self.file.keys().next() {
            return Err(Error::ConfigInvalid(format!(
                "unknown key {key:?} for {}",
                self.command
            )));
        }
        for (k, v) in &self.resolved {
            eprintln!("tdrs {}: {k}={v}", self.command);
        }
        Ok(())
    }
}

struct Inputs {
    scene: Scene,
    target: TargetSignature,
    stats: SceneStats,
}

fn load_inputs(settings: &mut Settings, args: SceneArgs) -> Result<(PathBuf, PathBuf, f64)> {
    let scene = settings.required_path("scene", args.scene)?;
    let target = settings.required_path("target", args.target)?;
    let ridge = settings.get_or("ridge", args.ridge, 0.0)?;
    Ok((scene, target, ridge))
}

fn read_inputs(scene: &Path, target: &Path, ridge: f64) -> Result<Inputs> {
    let scene = io::read_scene(scene)?;
    let target = io::read_spectrum(target)?;
    if target.len() != scene.bands() {
        return Err(Error::DimensionMismatch {
            expected: scene.bands(),
            found: target.len(),
        });
    }
    let stats = SceneStats::compute(&scene, ridge)?;
    Ok(Inputs {
        scene,
        target,
        stats,
    })
}

fn parse_floats(key: &str, raw: &str) -> Result<Vec<f64>> {
    raw.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::ConfigInvalid(format!("{key}: bad number {s:?}")))
        })
        .collect()
}

pub fn cmd_synth(args: SynthArgs) -> Result<()> {
    let mut settings = Settings::load("synth", &args.config)?;
    let out = settings.required_path("out", args.out)?;
    let mask = settings.path("mask", args.mask)?;
    let target = settings.path("target", args.target)?;

    let mut config = SynthConfig::default();
    if let Some(seed) = settings.get("seed", args.seed)? {
        config.seed = seed;
    }
    if let Some(pos) = settings.get::<String>("tgt_position", args.tgt_position)? {
        config.set("tgt_position", &pos)?;
    }
    let leftovers: Vec<(String, String)> = std::mem::take(&mut settings.file).into_iter().collect();
    for (key, value) in leftovers {
        if !config.set(&key, &value)? {
            return Err(Error::ConfigInvalid(format!(
                "unknown key {key:?} for synth"
            )));
        }
    }
    for (k, v) in config.to_key_values() {
        if !settings.resolved.iter().any(|(rk, _)| rk == &k) {
            settings.resolved.push((k, v));
        }
    }
    settings.finish()?;

    let generated = synth::generate(&config)?;
    io::write_scene(&generated.scene, &out)?;
    if let Some(path) = mask {
        io::write_mask(&generated.mask, path)?;
    }
    if let Some(path) = target {
        io::write_spectrum(&generated.target, path)?;
    }
    Ok(())
}

fn ascent_config(settings: &mut Settings, args: AscentArgs) -> Result<AscentConfig> {
    let defaults = AscentConfig::default();
    let config = AscentConfig {
        max_iters: settings.get_or("max_iters", args.max_iters, defaults.max_iters)?,
        grad_tol: settings.get_or("grad_tol", args.grad_tol, defaults.grad_tol)?,
        initial_step: settings.get_or("initial_step", args.initial_step, defaults.initial_step)?,
        backtrack_factor: settings.get_or(
            "backtrack_factor",
            args.backtrack_factor,
            defaults.backtrack_factor,
        )?,
        armijo_c: settings.get_or("armijo_c", args.armijo_c, defaults.armijo_c)?,
        ..defaults
    };
    config.validate()?;
    Ok(config)
}

/// Builds the detector for a CLI method name.
pub fn build_detector(
    stats: &SceneStats,
    d: &TargetSignature,
    method: MethodArg,
    ascent: &AscentConfig,
) -> Result<Detector> {
    match method {
        MethodArg::Cem => detectors::cem(stats, d),
        MethodArg::Mf => detectors::mf(stats, d),
        MethodArg::CeClosed => {
            let sol = solver::solve_basic_equation(stats, d, SolutionKind::MinimalShift, None)?;
            detectors::ce_detector(stats, d, &sol.mu_star)
        }
        MethodArg::CeAscent => {
            let trace = solver::gradient_ascent(stats, d, &OriginShift::zeros(d.len()), ascent)?;
            let mu = trace.final_origin();
            let residual = solver::basic_equation_residual(stats, d, &mu)?.abs();
            if residual > solver::ASCENT_RESIDUAL_TOL {
                return Err(Error::MaxItersExceeded {
                    trace: Box::new(trace),
                });
            }
            detectors::ce_detector(stats, d, &mu)
        }
    }
}

pub fn cmd_detect(args: DetectArgs) -> Result<()> {
    let mut settings = Settings::load("detect", &args.config)?;
    let (scene, target, ridge) = load_inputs(&mut settings, args.input)?;
    let method = settings
        .get::<MethodArg>("method", args.method)?
        .ok_or_else(|| Error::ConfigInvalid("--method is required".into()))?;
    let out = settings.path("out", args.out)?;
    let ascent = ascent_config(&mut settings, args.ascent)?;
    settings.finish()?;

    let inputs = read_inputs(&scene, &target, ridge)?;
    let detector = build_detector(&inputs.stats, &inputs.target, method, &ascent)?;
    let mut map = eval::detect(&inputs.scene, &detector)?;
    map.method = method.label().to_string();
    if let Some(out) = out {
        io::write_map(&map, out)?;
    }
    println!("{},{}", method.label(), io::fmt_f64(detector.energy()));
    Ok(())
}

pub fn cmd_compare(args: CompareArgs) -> Result<()> {
    let mut settings = Settings::load("compare", &args.config)?;
    let (scene, target, ridge) = load_inputs(&mut settings, args.input)?;
    let out = settings.required_path("out", args.out)?;
    settings.finish()?;

    let inputs = read_inputs(&scene, &target, ridge)?;
    let ascent = AscentConfig::default();
    let mut maps: Vec<(&str, Detector, DetectionMap)> = Vec::new();
    for (label, method) in [
        ("cem", MethodArg::Cem),
        ("mf", MethodArg::Mf),
        ("ce", MethodArg::CeClosed),
    ] {
        let det = build_detector(&inputs.stats, &inputs.target, method, &ascent)?;
        let mut map = eval::detect(&inputs.scene, &det)?;
        map.method = label.to_string();
        maps.push((label, det, map));
    }

    std::fs::create_dir_all(&out)?;
    for (label, _, map) in &maps {
        io::write_map(map, out.join(format!("map_{label}.csv")))?;
    }
    let energy_rows: Vec<[String; 2]> = maps
        .iter()
        .map(|(label, det, _)| [label.to_string(), io::fmt_f64(det.energy())])
        .collect();
    io::write_table(out.join("energy.csv"), &["method", "energy"], &energy_rows)?;

    let pairs = [(1, 2), (0, 2), (0, 1)];
    let mut r2_rows = Vec::new();
    for (a, b) in pairs {
        let r2 = eval::r_squared(&maps[a].2, &maps[b].2)?;
        r2_rows.push([
            maps[a].0.to_string(),
            maps[b].0.to_string(),
            io::fmt_f64(r2),
        ]);
    }
    io::write_table(
        out.join("r2.csv"),
        &["method_a", "method_b", "r2"],
        &r2_rows,
    )?;
    for (a, b) in [(1, 2), (0, 2)] {
        let (la, lb) = (maps[a].0, maps[b].0);
        io::write_table(
            out.join(format!("scatter_{la}_{lb}.csv")),
            &[la, lb],
            maps[a]
                .2
                .scores
                .iter()
                .zip(&maps[b].2.scores)
                .map(|(x, y)| [io::fmt_f64(*x), io::fmt_f64(*y)]),
        )?;
    }

    println!("method,energy");
    for [label, energy] in &energy_rows {
        println!("{label},{energy}");
    }
    Ok(())
}

pub fn cmd_roc(args: RocArgs) -> Result<()> {
    let mut settings = Settings::load("roc", &args.config)?;
    let map = settings.required_path("map", args.map)?;
    let mask = settings.required_path("mask", args.mask)?;
    let out = settings.path("out", args.out)?;
    settings.finish()?;

    let map = io::read_map(map)?;
    let mask = io::read_mask(mask)?;
    if (map.width, map.height) != (mask.width, mask.height) {
        return Err(Error::DimensionMismatch {
            expected: map.len(),
            found: mask.labels.len(),
        });
    }
    let curve = eval::roc(&map, &mask)?;
    if let Some(out) = out {
        io::write_roc(&curve, out)?;
    }
    println!("auc,{}", io::fmt_f64(curve.auc));
    Ok(())
}

/// Default surface extent: pixels, target and hyperplane point plus a 10% margin.
fn default_range(scene: &Scene, d: &TargetSignature, plane: &Hyperplane) -> [f64; 4] {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    let extra = [d.as_vector().as_slice(), plane.point.as_slice()];
    for p in scene.pixels().chain(extra) {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let pad = |k: usize| 0.1 * (hi[k] - lo[k]).max(1e-12);
    [
        lo[0] - pad(0),
        hi[0] + pad(0),
        lo[1] - pad(1),
        hi[1] + pad(1),
    ]
}

pub fn cmd_surface(args: SurfaceArgs) -> Result<()> {
    let mut settings = Settings::load("surface", &args.config)?;
    let (scene, target, ridge) = load_inputs(&mut settings, args.input)?;
    let out = settings.required_path("out", args.out)?;
    let line = settings.path("line", args.line)?;
    let range = settings.get::<String>("range", args.range)?;
    let resolution = settings.get_or("resolution", args.resolution, "101,101".to_string())?;
    settings.finish()?;

    let inputs = read_inputs(&scene, &target, ridge)?;
    if inputs.scene.bands() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            found: inputs.scene.bands(),
        });
    }
    let plane = Hyperplane::new(&inputs.stats, &inputs.target)?;
    let range = match range {
        Some(raw) => parse_floats("range", &raw)?,
        None => default_range(&inputs.scene, &inputs.target, &plane).to_vec(),
    };
    let res = parse_floats("resolution", &resolution)?;
    let (&[x0, x1, y0, y1], &[nx, ny]) = (range.as_slice(), res.as_slice()) else {
        return Err(Error::ConfigInvalid(
            "range needs 4 values and resolution needs 2".into(),
        ));
    };
    if !(nx >= 1.0 && ny >= 1.0 && nx.fract() == 0.0 && ny.fract() == 0.0) {
        return Err(Error::ConfigInvalid(
            "resolution must be positive integers".into(),
        ));
    }
    let grid = GridSpec {
        mu1: (x0, x1),
        mu2: (y0, y1),
        resolution: (nx as usize, ny as usize),
    };
    let surface = solver::g_surface_grid(&inputs.stats, &inputs.target, &grid)?;
    io::write_table(
        &out,
        &["mu1", "mu2", "g"],
        surface
            .cells
            .iter()
            .map(|c| [io::fmt_f64(c.mu1), io::fmt_f64(c.mu2), io::fmt_f64(c.g)]),
    )?;
    if let Some(line) = line {
        let dir = &plane.tangents[0];
        io::write_table(
            line,
            &["param", "mu1", "mu2"],
            [
                [
                    "point".to_string(),
                    io::fmt_f64(plane.point[0]),
                    io::fmt_f64(plane.point[1]),
                ],
                [
                    "direction".to_string(),
                    io::fmt_f64(dir[0]),
                    io::fmt_f64(dir[1]),
                ],
            ],
        )?;
    }
    let max = surface.max_cell();
    println!("max_g,{}", io::fmt_f64(max.g));
    println!(
        "plateau,{}",
        io::fmt_f64(detectors::plateau_value(&inputs.stats, &inputs.target)?)
    );
    Ok(())
}

/// One row of the `verify` report.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    fn at_most(name: &'static str, value: f64, tolerance: f64) -> Self {
        Self {
            name,
            value,
            tolerance,
            passed: value <= tolerance,
        }
    }
}

/// `(d−μ)ᵀR_μ⁻¹(d−μ)` from a fresh Cholesky factorization of the dense
/// `R_μ`. Slower than [`detectors::g_value`] but free of the `s − p²/q`
/// cancellation, which matters when a ridge holds up a flat band.
fn g_direct(stats: &SceneStats, d: &TargetSignature, mu: &OriginShift) -> Result<f64> {
    let r_mu = stats.shifted_correlation(mu)?;
    let chol = r_mu.cholesky().ok_or(Error::Singular {
        what: "shifted correlation",
        ridge: stats.ridge(),
    })?;
    let a = d.as_vector() - mu.as_vector();
    Ok(a.dot(&chol.solve(&a)))
}

/// Central-difference gradient of `g`, independent of the analytic one.
///
/// The step along band `i` is `1e-4·σᵢ` with `σᵢ² = (K + εI)ᵢᵢ`, so
/// nearly-constant bands held up only by the ridge get a proportionally
/// small step.
pub fn finite_difference_gradient(
    stats: &SceneStats,
    d: &TargetSignature,
    mu: &OriginShift,
) -> Result<DVector<f64>> {
    let sigma = stats.effective_covariance().diagonal().map(f64::sqrt);
    let mut out = DVector::zeros(mu.len());
    for i in 0..mu.len() {
        let h = 1e-4 * sigma[i];
        let mut plus = mu.as_vector().clone();
        let mut minus = mu.as_vector().clone();
        plus[i] += h;
        minus[i] -= h;
        let gp = g_direct(stats, d, &OriginShift::from_vector(plus)?)?;
        let gm = g_direct(stats, d, &OriginShift::from_vector(minus)?)?;
        out[i] = (gp - gm) / (2.0 * h);
    }
    Ok(out)
}

/// Runs every identity check on one scene and target.
///
/// `extra_mu` is treated as an additional claimed solution of the basic
/// equation.
pub fn verify_checks(
    stats: &SceneStats,
    d: &TargetSignature,
    samples: usize,
    seed: u64,
    extra_mu: Option<&OriginShift>,
) -> Result<Vec<Check>> {
    let bands = stats.bands();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let spread = stats
        .covariance()
        .diagonal()
        .map(f64::sqrt)
        .amax()
        .max(1e-12);

    let mut solutions = vec![
        solver::solve_basic_equation(stats, d, SolutionKind::MinimalShift, None)?.mu_star,
        solver::solve_basic_equation(stats, d, SolutionKind::AlongTargetLine, None)?.mu_star,
    ];
    for _ in 0..samples {
        let coeffs: Vec<f64> = (0..bands - 1)
            .map(|_| rng.random_range(-3.0..3.0) * spread)
            .collect();
        solutions.push(
            solver::solve_basic_equation(stats, d, SolutionKind::Sampled, Some(&coeffs))?.mu_star,
        );
    }
    if let Some(mu) = extra_mu {
        stats.check_len(mu.len())?;
        solutions.push(mu.clone());
    }

    let plateau = detectors::plateau_value(stats, d)?;
    let mf_dir = detectors::mf(stats, d)?.direction();
    let (mut max_res, mut min_cos, mut max_c, mut max_plateau) =
        (0.0_f64, 1.0_f64, 0.0_f64, 0.0_f64);
    for mu in &solutions {
        max_res = max_res.max(solver::basic_equation_residual(stats, d, mu)?.abs());
        let ce = detectors::ce_detector(stats, d, mu)?;
        let u = ce.w() * (1.0 / ce.energy());
        let v = stats.solve_cov(&(d.as_vector() - stats.mean()));
        min_cos = min_cos.min(ce.direction().dot(&mf_dir));
        max_c = max_c.max((u.dot(&v) / v.dot(&v) - 1.0).abs());
        let g = detectors::g_value(stats, d, mu)?;
        max_plateau = max_plateau.max((g - plateau).abs() / plateau);
    }

    let sigma = stats.effective_covariance().diagonal().map(f64::sqrt);
    let mut probes = vec![
        OriginShift::zeros(bands),
        OriginShift::from_vector(stats.mean().clone())?,
    ];
    for _ in 0..samples.max(1) {
        let offset = DVector::from_fn(bands, |i, _| rng.random_range(-2.0..2.0) * sigma[i]);
        probes.push(OriginShift::from_vector(stats.mean() + offset)?);
    }
    let mut max_grad_err = 0.0_f64;
    for mu in &probes {
        let analytic = detectors::g_gradient(stats, d, mu)?;
        let fd = finite_difference_gradient(stats, d, mu)?;
        let scale = analytic.norm().max(fd.norm());
        if scale > 0.0 {
            max_grad_err = max_grad_err.max((analytic - fd).norm() / scale);
        }
    }

    let ascent_residual = match solver::gradient_ascent(
        stats,
        d,
        &OriginShift::zeros(bands),
        &AscentConfig::default(),
    ) {
        Ok(trace) => solver::basic_equation_residual(stats, d, &trace.final_origin())?.abs(),
        Err(Error::MaxItersExceeded { trace }) => {
            solver::basic_equation_residual(stats, d, &trace.final_origin())?.abs()
        }
        Err(e) => return Err(e),
    };

    let cem_g = 1.0 / detectors::cem(stats, d)?.energy();
    Ok(vec![
        Check::at_most(
            "basic_equation_residual",
            max_res,
            tolerance::SOLUTION_RESIDUAL,
        ),
        Check::at_most(
            "gradient_fd_rel_error",
            max_grad_err,
            tolerance::GRADIENT_REL_ERROR,
        ),
        Check::at_most("equivalence_cosine_gap", 1.0 - min_cos, tolerance::COSINE),
        Check::at_most("equivalence_c_error", max_c, tolerance::C),
        Check::at_most("plateau_rel_deviation", max_plateau, tolerance::PLATEAU),
        Check::at_most(
            "energy_inequality_excess",
            cem_g - plateau,
            tolerance::ENERGY_SLACK,
        ),
        Check::at_most(
            "ascent_residual",
            ascent_residual,
            tolerance::ASCENT_RESIDUAL,
        ),
    ])
}

pub fn cmd_verify(args: VerifyArgs) -> Result<u8> {
    let mut settings = Settings::load("verify", &args.config)?;
    let (scene, target, ridge) = load_inputs(&mut settings, args.input)?;
    let samples = settings.get_or("samples", args.samples, 16)?;
    let seed = settings.get_or("seed", args.seed, 0)?;
    let mu = settings.get::<String>("mu", args.mu)?;
    settings.finish()?;

    let inputs = read_inputs(&scene, &target, ridge)?;
    let extra = match mu {
        Some(raw) => Some(OriginShift::new(parse_floats("mu", &raw)?)?),
        None => None,
    };
    let checks = verify_checks(&inputs.stats, &inputs.target, samples, seed, extra.as_ref())?;

    println!("check,value,tolerance,status");
    println!(
        "precision,{},0,{}",
        io::fmt_f64(ridge),
        if ridge > 0.0 { "reduced" } else { "full" }
    );
    for c in &checks {
        println!(
            "{},{},{},{}",
            c.name,
            io::fmt_f64(c.value),
            io::fmt_f64(c.tolerance),
            if c.passed { "pass" } else { "fail" }
        );
    }
    let failed: Vec<&str> = checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| c.name)
        .collect();
    if failed.is_empty() {
        Ok(0)
    } else {
        eprintln!("verify: violated tolerances: {}", failed.join(", "));
        Ok(EXIT_VERIFY)
    }
}
