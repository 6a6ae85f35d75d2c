//! Command-line surface: inpaint PNGs, emit theory curves, run experiments.
//!
//! Every tunable flag may also come from a `key=value` config file passed
//! with `--config`. Flags win over the file, the file wins over defaults.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::direct_fill::{fill, fill_telea, FillConfig, TeleaConfig};
use crate::error::{Error, Result};
use crate::experiments::{
    self as exp, all_hard_pass, verdict_text, BlurScenario, Check, DotConfig, LimitExample, RateConfig, RateFamily,
};
use crate::fill_policy::{ReadyConfig, ReadyPolicy};
use crate::implicit_fill::{fill_semi_implicit, Omega, SemiImplicitConfig, Solver, Stop};
use crate::lattice::{read_mask_png, BoundaryMode, FillState, PixelGrid};
use crate::stencil::{Guide, MethodTag, Vec2};
use crate::testdata::smooth_guide;
use crate::theory;

/// Environment variable holding the default worker count.
pub const THREADS_ENV: &str = "SHELLFILL_THREADS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_STALL: i32 = 3;
pub const EXIT_ACCEPTANCE: i32 = 4;

#[derive(Parser, Debug)]
#[command(name = "shellfill", version, about = "Shell-based inpainting, limit theory and experiments")]
pub struct Cli {
    /// Worker threads; defaults to $SHELLFILL_THREADS, then all cores
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Plain key=value config file
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Inpaint an image inside a mask
    Inpaint(InpaintArgs),
    /// Emit closed-form curves as CSV
    Theory(TheoryArgs),
    /// Run an experiment and write CSVs plus a verdict file
    Experiment(ExperimentArgs),
}

#[derive(Args, Debug, Default)]
pub struct EngineArgs {
    /// ct, guidefill, semi-implicit or telea
    #[arg(long)]
    pub method: Option<String>,
    /// Neighborhood radius in pixels
    #[arg(long)]
    pub r: Option<i64>,
    #[arg(long)]
    pub mu: Option<f64>,
    /// Guide angle in degrees
    #[arg(long)]
    pub theta: Option<f64>,
    /// Guide field id instead of a constant angle (`smooth`)
    #[arg(long)]
    pub guide: Option<String>,
    /// onion, confidence or coupled
    #[arg(long)]
    pub ready: Option<String>,
    /// direct, jacobi or sor
    #[arg(long)]
    pub solver: Option<String>,
    /// `star` or a number in (0, 2)
    #[arg(long)]
    pub omega: Option<String>,
    /// Sweeps per shell; 0 solves to residual 1e-13
    #[arg(long)]
    pub sweeps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct InpaintArgs {
    pub image: PathBuf,
    pub mask: PathBuf,
    #[arg(short, long, default_value = "output.png")]
    pub output: PathBuf,
    #[command(flatten)]
    pub engine: EngineArgs,
    /// Wrap the x axis
    #[arg(long)]
    pub periodic: bool,
    /// Print shells filled, sweeps per shell and wall time
    #[arg(long)]
    pub stats: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TheoryKind {
    Limits,
    Norms,
    Blur,
    Spectrum,
}

#[derive(Args, Debug)]
pub struct TheoryArgs {
    pub kind: TheoryKind,
    #[command(flatten)]
    pub engine: EngineArgs,
    /// Angle step of the theta grid in degrees
    #[arg(long)]
    pub step: Option<f64>,
    /// Write to a file instead of stdout
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ExperimentId {
    Dot,
    Limits,
    Rates,
    Blur,
}

#[derive(Args, Debug)]
pub struct ExperimentArgs {
    pub id: ExperimentId,
    #[command(flatten)]
    pub engine: EngineArgs,
    /// Rate preset: table1, table1-ct10, table1-ct50, table1-smooth, acceptance
    #[arg(long)]
    pub preset: Option<String>,
    /// Blur scenario: fig14, fig14-vertical, fig16, degenerate, all
    #[arg(long)]
    pub scenario: Option<String>,
    /// Limit example: g1 or g2
    #[arg(long)]
    pub example: Option<String>,
    /// Angle step of the theta grid in degrees
    #[arg(long)]
    pub step: Option<f64>,
    /// Add h = 2^-12 and 2^-13 to the rate study
    #[arg(long)]
    pub fine: bool,
    /// Parent directory of the timestamped run directory
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

/// `key=value` settings from a config file. Blank lines and `#` comments
/// are skipped; keys use the long flag names.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Config(format!("line {}: expected key=value", n + 1)));
            };
            values.insert(k.trim().replace('_', "-"), v.trim().to_string());
        }
        Ok(Self { values })
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Self::parse(&fs::read_to_string(p)?),
            None => Ok(Self::default()),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// Flag value, else file value, else `default`.
    pub fn pick<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T> {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.get(key) {
            Some(s) => s.parse().map_err(|_| Error::Config(format!("bad value for {key}: {s}"))),
            None => Ok(default),
        }
    }

    fn pick_opt<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>> {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self
                .get(key)
                .map(|s| s.parse().map_err(|_| Error::Config(format!("bad value for {key}: {s}"))))
                .transpose(),
        }
    }
}

/// Fully resolved engine settings.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub method: MethodTag,
    pub r: i64,
    pub mu: f64,
    pub theta_deg: f64,
    pub guide_field: Option<String>,
    pub ready: ReadyPolicy,
    /// `None` for direct methods.
    pub solver: Option<Solver>,
    pub omega: Omega,
    pub sweeps: usize,
    pub seed: u64,
}

impl RunConfig {
    pub fn resolve(args: &EngineArgs, file: &ConfigFile, default_method: &str, default_mu: f64) -> Result<Self> {
        let name: String = file.pick(args.method.clone(), "method", default_method.to_string())?;
        let method = parse_method(&name)?;
        let ready_name: String = file.pick(args.ready.clone(), "ready", "onion".to_string())?;
        let ready = ReadyPolicy::from_name(&ready_name)
            .ok_or_else(|| Error::Config(format!("unknown ready policy {ready_name}")))?;
        let default_solver = if method.is_semi_implicit() { "sor" } else { "direct" };
        let solver_name: String = file.pick(args.solver.clone(), "solver", default_solver.to_string())?;
        let solver = match solver_name.as_str() {
            "direct" => None,
            s => Some(Solver::from_name(s).ok_or_else(|| Error::Config(format!("unknown solver {s}")))?),
        };
        let omega_name: String = file.pick(args.omega.clone(), "omega", "star".to_string())?;
        let omega = parse_omega(&omega_name)?;
        let cfg = Self {
            method,
            r: file.pick(args.r, "r", 3)?,
            mu: file.pick(args.mu, "mu", default_mu)?,
            theta_deg: file.pick(args.theta, "theta", 90.0)?,
            guide_field: file.pick_opt(args.guide.clone(), "guide")?,
            ready,
            solver,
            omega,
            sweeps: file.pick(args.sweeps, "sweeps", 0)?,
            seed: file.pick(args.seed, "seed", 0)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.r < 1 {
            return Err(Error::InvalidRadius(self.r));
        }
        if !(self.mu > 0.0) {
            return Err(Error::Config(format!("mu must be positive, got {}", self.mu)));
        }
        if !(self.theta_deg > 0.0 && self.theta_deg < 180.0) {
            return Err(Error::Config(format!("theta must lie in (0, 180), got {}", self.theta_deg)));
        }
        if self.method.is_semi_implicit() != self.solver.is_some() {
            return Err(Error::Config(format!(
                "solver {} does not fit method {}",
                self.solver.map_or("direct", |s| if s == Solver::Sor { "sor" } else { "jacobi" }),
                self.method.name()
            )));
        }
        if let Some(g) = &self.guide_field {
            if g != "smooth" {
                return Err(Error::Config(format!("unknown guide field {g}")));
            }
        }
        Ok(())
    }

    fn guide(&self, grid: &PixelGrid) -> Guide {
        match self.guide_field.as_deref() {
            Some(_) => {
                let h = grid.spacing_h();
                let field: Arc<dyn Fn(usize, usize) -> Vec2 + Send + Sync> =
                    Arc::new(move |i, j| smooth_guide((i + 1) as f64 * h, (j + 1) as f64 * h));
                Guide::Field(field)
            }
            None => Guide::from_angle(self.theta_deg.to_radians()),
        }
    }
}

fn parse_method(name: &str) -> Result<MethodTag> {
    MethodTag::from_name(name).ok_or_else(|| Error::Config(format!("unknown method {name}")))
}

fn parse_omega(s: &str) -> Result<Omega> {
    if s == "star" {
        return Ok(Omega::Star);
    }
    match s.parse::<f64>() {
        Ok(w) if w > 0.0 && w < 2.0 => Ok(Omega::Fixed(w)),
        _ => Err(Error::Config(format!("omega must be `star` or lie in (0, 2), got {s}"))),
    }
}

/// Exit code for an engine or configuration error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Stall { .. } | Error::Divergence(_) | Error::IllPosed(_) => EXIT_STALL,
        _ => EXIT_USAGE,
    }
}

/// Parse the process arguments, run, and return the exit code.
pub fn main_with_args() -> i32 {
    let cli = Cli::parse();
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(cli: &Cli) -> Result<i32> {
    let file = ConfigFile::load(cli.config.as_deref())?;
    let env_threads = std::env::var(THREADS_ENV).ok().and_then(|v| v.parse().ok());
    let threads = file.pick_opt(cli.threads.or(env_threads), "threads")?;
    if let Some(n) = threads {
        // A second call in the same process keeps the existing pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match &cli.command {
        Command::Inpaint(a) => cmd_inpaint(a, &file),
        Command::Theory(a) => cmd_theory(a, &file),
        Command::Experiment(a) => cmd_experiment(a, &file),
    }
}

pub fn cmd_inpaint(a: &InpaintArgs, file: &ConfigFile) -> Result<i32> {
    let cfg = RunConfig::resolve(&a.engine, file, "guidefill", 100.0)?;
    let periodic = a.periodic || file.get("periodic") == Some("true");
    let mode = if periodic { BoundaryMode::PeriodicX } else { BoundaryMode::DirichletX };
    for path in [&a.image, &a.mask] {
        if !path.is_file() {
            return Err(Error::Config(format!("no such file: {}", path.display())));
        }
    }
    let (mw, mh, mask) = read_mask_png(&a.mask)?;
    let probe = image::image_dimensions(&a.image)?;
    if (probe.0 as usize, probe.1 as usize) != (mw, mh) {
        return Err(Error::SizeMismatch(format!("image is {}x{}, mask is {mw}x{mh}", probe.0, probe.1)));
    }
    let mut grid = PixelGrid::read_png(&a.image, 1.0 / mw.max(mh) as f64, mode)?;
    let mut state = FillState::from_mask(grid.geometry(), &mask)?;
    let guide = cfg.guide(&grid);
    let start = Instant::now();
    let (shells, sweeps) = match (cfg.method, cfg.solver) {
        (MethodTag::Telea, _) => (fill_telea(&mut grid, &mut state, &TeleaConfig::new(cfg.r))?.shells, Vec::new()),
        (method, None) => {
            let fc = FillConfig::new(method, cfg.r, cfg.mu, guide).with_ready(ReadyConfig::new(cfg.ready));
            (fill(&mut grid, &mut state, &fc)?.shells, Vec::new())
        }
        (_, Some(solver)) => {
            let mut sc = SemiImplicitConfig::new(cfg.r, cfg.mu, guide, solver, cfg.sweeps);
            sc.fill.ready = ReadyConfig::new(cfg.ready);
            sc.omega = cfg.omega;
            if cfg.sweeps == 0 {
                sc.stop = Stop::Residual { tol: exp::SOLVE_TOL, max_sweeps: 5000 };
            }
            let rep = fill_semi_implicit(&mut grid, &mut state, &sc)?;
            (rep.fill.shells, rep.sweeps_per_shell)
        }
    };
    grid.write_png(&a.output)?;
    if a.stats {
        eprintln!("shells filled: {shells}");
        if !sweeps.is_empty() {
            let list: Vec<String> = sweeps.iter().map(usize::to_string).collect();
            eprintln!("sweeps per shell: {}", list.join(","));
        }
        eprintln!("wall time: {:.3} s", start.elapsed().as_secs_f64());
    }
    Ok(EXIT_OK)
}

fn theta_grid(step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step < 90.0) {
        return Err(Error::Config(format!("step must lie in (0, 90), got {step}")));
    }
    let n = (180.0 / step).ceil() as usize;
    Ok((1..n).map(|k| k as f64 * step).filter(|t| *t < 180.0).collect())
}

pub fn cmd_theory(a: &TheoryArgs, file: &ConfigFile) -> Result<i32> {
    let r: i64 = file.pick(a.engine.r, "r", 3)?;
    let thetas = theta_grid(file.pick(a.step, "step", 1.0)?)?;
    let method_name: String = file.pick(a.engine.method.clone(), "method", "ct".to_string())?;
    let csv = match a.kind {
        TheoryKind::Limits => theory::limits_csv(parse_method(&method_name)?, r, &thetas)?,
        TheoryKind::Norms => {
            let omega = match parse_omega(&file.pick(a.engine.omega.clone(), "omega", "star".to_string())?)? {
                Omega::Star => None,
                Omega::Fixed(w) => Some(w),
            };
            theory::norms_csv(r, omega, &thetas)?
        }
        TheoryKind::Blur => {
            let mu = file.pick(a.engine.mu, "mu", 100.0)?;
            theory::blur_csv(parse_method(&method_name)?, r, mu, &thetas)?
        }
        TheoryKind::Spectrum => theory::spectrum_csv(&theory::half_ball_spectrum(r)?),
    };
    match &a.output {
        Some(p) => fs::write(p, csv)?,
        None => print!("{csv}"),
    }
    Ok(EXIT_OK)
}

/// Create `<parent>/<id>-<unix seconds>`, adding a suffix on collision.
pub fn run_dir(parent: &Path, id: &str) -> Result<PathBuf> {
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let mut dir = parent.join(format!("{id}-{secs}"));
    let mut k = 1;
    while dir.exists() {
        dir = parent.join(format!("{id}-{secs}-{k}"));
        k += 1;
    }
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

/// Named CSV outputs and checks of one experiment run.
#[derive(Debug, Default)]
pub struct Bundle {
    pub files: Vec<(String, String)>,
    pub checks: Vec<Check>,
}

impl Bundle {
    pub fn write(&self, dir: &Path) -> Result<()> {
        for (name, body) in &self.files {
            fs::write(dir.join(name), body)?;
        }
        fs::write(dir.join("verdict.txt"), verdict_text(&self.checks))?;
        Ok(())
    }
}

pub fn cmd_experiment(a: &ExperimentArgs, file: &ConfigFile) -> Result<i32> {
    let bundle = experiment_bundle(a, file)?;
    let parent: PathBuf = file.pick(a.out_dir.clone(), "out-dir", PathBuf::from("runs"))?;
    let id = match a.id {
        ExperimentId::Dot => "dot",
        ExperimentId::Limits => "limits",
        ExperimentId::Rates => "rates",
        ExperimentId::Blur => "blur",
    };
    let dir = run_dir(&parent, id)?;
    bundle.write(&dir)?;
    print!("{}", verdict_text(&bundle.checks));
    println!("outputs in {}", dir.display());
    Ok(if all_hard_pass(&bundle.checks) { EXIT_OK } else { EXIT_ACCEPTANCE })
}

/// Run an experiment without touching the file system.
pub fn experiment_bundle(a: &ExperimentArgs, file: &ConfigFile) -> Result<Bundle> {
    let mut b = Bundle::default();
    let step = file.pick(a.step, "step", 1.0)?;
    match a.id {
        ExperimentId::Dot => {
            let r = file.pick(a.engine.r, "r", 3)?;
            let mu = file.pick(a.engine.mu, "mu", 40.0)?;
            let name: String = file.pick(a.engine.method.clone(), "method", "all".to_string())?;
            let methods = if name == "all" {
                vec![MethodTag::CoherenceTransport, MethodTag::Guidefill, MethodTag::GuidefillSemiImplicit]
            } else {
                vec![parse_method(&name)?]
            };
            let thetas = theta_grid(step)?;
            for m in methods {
                let rows = exp::exp_dot(m, r, mu, &thetas, &DotConfig::default())?;
                b.checks.push(exp::dot_checks(m, r, &rows)?);
                b.files.push((format!("dot_{}_r{r}.csv", m.name()), exp::dot_csv(&rows)));
            }
        }
        ExperimentId::Limits => {
            let example: String = file.pick(a.example.clone(), "example", "g1".to_string())?;
            let h = file.pick(None, "h", 2f64.powi(-10))?;
            let r_max = file.pick(None, "r-max", 12)?;
            let (ex, s, sp, p) = match example.as_str() {
                "g1" => {
                    let mu = file.pick(a.engine.mu, "mu", 10.0)?;
                    (LimitExample::MarzBall { mu, theta: 20f64.to_radians() }, 2.0, 0.0, 1.0)
                }
                "g2" => (LimitExample::OffsetGaussianBox, 0.5, 0.5, 2.0),
                e => return Err(Error::Config(format!("unknown limit example {e}"))),
            };
            let rows = exp::exp_limits(ex, s, sp, p, h, &(3..=r_max).collect::<Vec<_>>())?;
            let check = exp::limits_check(&rows, &[3, 4, 5]);
            b.checks.push(if example == "g1" { check } else { check.report_only() });
            b.files.push((format!("limits_{example}.csv"), exp::limits_csv(&rows)));
        }
        ExperimentId::Rates => {
            let preset: String = file.pick(a.preset.clone(), "preset", "acceptance".to_string())?;
            let mut h_list = exp::desk_h_list();
            if a.fine || file.get("fine") == Some("true") {
                h_list.extend([2f64.powi(-12), 2f64.powi(-13)]);
            }
            for (family, s, sp, ps) in rate_preset(&preset)? {
                for report in exp::exp_rates(family, s, sp, &ps, &h_list)? {
                    b.checks.push(exp::rate_check(&report));
                    let p = if report.norm_p.is_infinite() { "inf".to_string() } else { report.norm_p.to_string() };
                    b.files.push((format!("rates_{}_s{s}_sp{sp}_p{p}.csv", report.label), report.to_csv()));
                }
            }
        }
        ExperimentId::Blur => {
            let name: String = file.pick(a.scenario.clone(), "scenario", "all".to_string())?;
            let scenarios = if name == "all" {
                vec![
                    BlurScenario::Fig14,
                    BlurScenario::Fig14Vertical,
                    BlurScenario::Fig16,
                    BlurScenario::DegenerateControl,
                ]
            } else {
                vec![BlurScenario::from_name(&name).ok_or_else(|| Error::Config(format!("unknown scenario {name}")))?]
            };
            for sc in scenarios {
                let slices = exp::exp_blur(sc, &sc.default_heights())?;
                b.checks.push(exp::blur_check(sc, &slices));
                for (k, s) in slices.iter().enumerate() {
                    b.files.push((format!("blur_{}_slice{}.csv", sc.name(), k + 1), s.to_csv()));
                }
            }
        }
    }
    Ok(b)
}

/// Rate configurations of a named preset.
pub fn rate_preset(name: &str) -> Result<Vec<RateConfig>> {
    let all = exp::reference_configs(false);
    let keep = |f: &dyn Fn(&RateFamily) -> bool| all.iter().filter(|c| f(&c.0)).cloned().collect::<Vec<_>>();
    Ok(match name {
        "table1" => all.clone(),
        "acceptance" => exp::reference_configs(true),
        "table1-ct10" => keep(&|f| matches!(f, RateFamily::CtConstant { mu, .. } if *mu == 10.0)),
        "table1-ct50" => keep(&|f| matches!(f, RateFamily::CtConstant { mu, .. } if *mu == 50.0)),
        "table1-smooth" => keep(&|f| matches!(f, RateFamily::GuidefillSmooth { .. })),
        p => return Err(Error::Config(format!("unknown rate preset {p}"))),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_precedence() {
        let file = ConfigFile::parse("# comment\nr = 5\nmu=20\nout_dir = x\n\n").unwrap();
        assert_eq!(file.pick(Some(7), "r", 3).unwrap(), 7);
        assert_eq!(file.pick(None, "r", 3).unwrap(), 5);
        assert_eq!(file.pick(None, "sweeps", 9usize).unwrap(), 9);
        assert_eq!(file.get("out-dir"), Some("x"));
        assert!(file.pick::<i64>(None, "mu", 1).is_ok());
        assert!(ConfigFile::parse("novalue").is_err());
        assert!(ConfigFile::parse("r=abc").unwrap().pick::<i64>(None, "r", 1).is_err());
    }

    #[test]
    fn run_config_validation() {
        let file = ConfigFile::default();
        let mut args = EngineArgs { method: Some("semi-implicit".into()), ..Default::default() };
        let cfg = RunConfig::resolve(&args, &file, "guidefill", 100.0).unwrap();
        assert_eq!(cfg.solver, Some(Solver::Sor));
        args.solver = Some("direct".into());
        assert!(RunConfig::resolve(&args, &file, "guidefill", 100.0).is_err());
        let bad = EngineArgs { theta: Some(0.0), ..Default::default() };
        assert!(RunConfig::resolve(&bad, &file, "guidefill", 100.0).is_err());
        let bad = EngineArgs { omega: Some("2.5".into()), ..Default::default() };
        assert!(RunConfig::resolve(&bad, &file, "guidefill", 100.0).is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Stall { shell: 4 }), EXIT_STALL);
        assert_eq!(exit_code(&Error::Config("x".into())), EXIT_USAGE);
        assert_eq!(exit_code(&Error::SizeMismatch("x".into())), EXIT_USAGE);
    }

    #[test]
    fn theta_grid_excludes_ends() {
        let g = theta_grid(45.0).unwrap();
        assert_eq!(g, vec![45.0, 90.0, 135.0]);
        assert_eq!(theta_grid(1.0).unwrap().len(), 179);
    }

    #[test]
    fn presets() {
        assert_eq!(rate_preset("acceptance").unwrap().len(), 4);
        assert_eq!(rate_preset("table1-smooth").unwrap().len(), 4);
        assert_eq!(rate_preset("table1").unwrap().len(), 12);
        assert!(rate_preset("nope").is_err());
    }

    #[test]
    fn parses_subcommands() {
        let cli = Cli::try_parse_from(["shellfill", "theory", "spectrum", "--r", "3"]).unwrap();
        assert!(matches!(cli.command, Command::Theory(TheoryArgs { kind: TheoryKind::Spectrum, .. })));
        let cli = Cli::try_parse_from(["shellfill", "--threads", "2", "experiment", "blur", "--scenario", "fig14"]).unwrap();
        assert_eq!(cli.threads, Some(2));
        assert!(Cli::try_parse_from(["shellfill", "theory", "bogus"]).is_err());
    }

    #[test]
    fn blur_bundle_passes() {
        let cli = Cli::try_parse_from(["shellfill", "experiment", "blur", "--scenario", "fig14"]).unwrap();
        let Command::Experiment(a) = &cli.command else { unreachable!() };
        let b = experiment_bundle(a, &ConfigFile::default()).unwrap();
        assert_eq!(b.files.len(), 2);
        assert!(all_hard_pass(&b.checks));
        let dir = tempfile::tempdir().unwrap();
        let out = run_dir(dir.path(), "blur").unwrap();
        b.write(&out).unwrap();
        assert!(fs::read_to_string(out.join("verdict.txt")).unwrap().starts_with("PASS blur fig14"));
    }
}
