use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use topotex::grid::{load_grid, save_grid, GridFormat};
use topotex::persistence::{sublevel_persistence, Connectivity};
use topotex::pipeline::{
    analyze_depth, analyze_roundness, locate_minima, noise_rows_csv, slope, theory, verify_overlap, AnalyzeConfig,
    NoiseStudy, NoiseStudyConfig,
};
use topotex::scoring::threshold_loops;
use topotex::synth::{
    add_gaussian_noise, gaussian_bump_surface, spherical_grid_with, GaussianBumps, Placement, ProcessParams,
};
use topotex::ScalarGrid;

#[derive(Parser)]
#[command(name = "topotex", version, about = "Surface texture scoring with cubical persistent homology")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Main output file (grid, CSV table); stdout when omitted
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// JSON report file; stdout when omitted
    #[arg(long, global = true)]
    report: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Image side in pixels (command-specific default)
    #[arg(long, global = true)]
    pixels: Option<usize>,
    /// Physical image width, mm
    #[arg(long, global = true, default_value_t = 2.55, value_parser = positive)]
    width_mm: f64,
    /// Tolerance in percent
    #[arg(long, global = true, default_value_t = 5.0, value_parser = positive)]
    tol: f64,
    /// Worker threads (0 = all cores)
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic surface
    Gen(GenArgs),
    /// Print the closed-form model quantities as JSON
    Theory(TheoryArgs),
    /// Compare lifetimes of generated lattices with the closed-form model
    Verify(VerifyArgs),
    /// Score a measured surface
    #[command(subcommand)]
    Analyze(AnalyzeKind),
    /// Fit a plane through the strike minima
    Slope(SlopeArgs),
    /// Depth and roundness scores of a noisy bump texture across SNR
    NoiseStudy(NoiseArgs),
    /// Dump a persistence diagram as CSV
    Persistence(PersistenceArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Surface {
    Spherical,
    Bumps,
}

#[derive(Clone, Copy, ValueEnum)]
enum PlacementArg {
    Exact,
    Snapped,
}

impl From<PlacementArg> for Placement {
    fn from(p: PlacementArg) -> Self {
        match p {
            PlacementArg::Exact => Placement::Exact,
            PlacementArg::Snapped => Placement::Snapped,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ConnArg {
    Four,
    Eight,
}

impl From<ConnArg> for Connectivity {
    fn from(c: ConnArg) -> Self {
        match c {
            ConnArg::Four => Connectivity::Four,
            ConnArg::Eight => Connectivity::Eight,
        }
    }
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum, default_value_t = Surface::Spherical)]
    surface: Surface,
    #[arg(long, default_value_t = 0.25, value_parser = overlap)]
    overlap: f64,
    /// Strikes per side (bumps per side for --surface bumps)
    #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u64).range(1..))]
    n: u64,
    #[arg(long, value_enum, default_value_t = PlacementArg::Exact)]
    placement: PlacementArg,
    /// Bump standard deviation in pixels (default: a sixth of the spacing)
    #[arg(long, value_parser = positive)]
    bump_sigma_px: Option<f64>,
    /// Add Gaussian noise at this SNR, dB
    #[arg(long, alias = "snr-db")]
    noise_snr_db: Option<f64>,
}

#[derive(Args)]
struct TheoryArgs {
    #[arg(long, default_value_t = 0.25, value_parser = overlap)]
    overlap: f64,
    #[arg(long, default_value_t = 8)]
    n: usize,
    /// Thresholds as multiples of the merge height
    #[arg(long, value_delimiter = ',', default_value = "0.5,1.1")]
    epsilon: Vec<f64>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, value_delimiter = ',', default_value = "0,0.25,0.5", value_parser = overlap)]
    overlaps: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0.5,1.1")]
    epsilon: Vec<f64>,
}

#[derive(Subcommand)]
enum AnalyzeKind {
    Depth(AnalyzeArgs),
    Roundness(AnalyzeArgs),
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Grid file (.csv or .pgm)
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_parser = overlap)]
    overlap: f64,
    /// Strikes per side
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    n: u64,
    /// Physical depth of the normalized range (default: strike radius)
    #[arg(long, value_parser = positive)]
    depth_scale_mm: Option<f64>,
    /// Maximum scan depth in µm, for physical slopes
    #[arg(long, value_parser = positive)]
    depth_max_um: Option<f64>,
    /// Keep minima born at exactly zero
    #[arg(long)]
    keep_zero_births: bool,
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u64).range(1..))]
    n_thresholds: u64,
    /// Roundness curve CSV
    #[arg(long)]
    curve: Option<PathBuf>,
}

#[derive(Args)]
struct SlopeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    n_strikes: u64,
    #[arg(long, value_parser = positive)]
    depth_max_um: Option<f64>,
    #[arg(long)]
    keep_zero_births: bool,
}

#[derive(Args)]
struct NoiseArgs {
    #[arg(long, value_delimiter = ',', default_value = "10,15,20,25,30,35,40,50")]
    snr_db: Vec<f64>,
    #[arg(long, default_value_t = 10)]
    trials: u64,
    #[arg(long, default_value_t = 4)]
    per_side: usize,
    #[arg(long, value_parser = positive)]
    bump_sigma_px: Option<f64>,
}

#[derive(Args)]
struct PersistenceArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Dump loops of the distance transform at this normalized threshold
    /// instead of the sublevel diagram of the grid
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long, value_enum, default_value_t = ConnArg::Eight)]
    connectivity: ConnArg,
}

fn overlap(s: &str) -> Result<f64, String> {
    let r: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if (0.0..1.0).contains(&r) {
        Ok(r)
    } else {
        Err(format!("overlap must be in [0, 1), got {r}"))
    }
}

fn positive(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("expected a positive number, got {v}"))
    }
}

fn write_text(path: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => std::io::stdout().write_all(text.as_bytes()).context("writing stdout"),
    }
}

fn write_json(path: Option<&Path>, value: &impl Serialize) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

fn load(path: &Path, width_mm: f64) -> anyhow::Result<ScalarGrid> {
    Ok(load_grid(path, GridFormat::from_path(path))?.with_width_mm(width_mm))
}

/// Outcome of a command that ran: success, or a tolerance failure.
enum Outcome {
    Pass,
    Fail,
}

fn gen(g: &Global, a: &GenArgs) -> anyhow::Result<Outcome> {
    let Some(out) = &g.out else { bail!("gen needs --out") };
    let pixels = g.pixels.unwrap_or(1000);
    let n = a.n as usize;
    let grid = match a.surface {
        Surface::Spherical => {
            let params = ProcessParams::from_overlap(a.overlap, n, g.width_mm, pixels);
            spherical_grid_with(&params, a.placement.into())?
        }
        Surface::Bumps => gaussian_bump_surface(&GaussianBumps {
            per_side: n,
            sigma_px: a.bump_sigma_px,
            pixels,
        })?
        .with_width_mm(g.width_mm),
    };
    let grid = match a.noise_snr_db {
        Some(snr) => add_gaussian_noise(&grid, snr, g.seed).map(|v| v.clamp(0.0, 1.0))?,
        None => grid,
    };
    save_grid(&grid, out, GridFormat::from_path(out))?;
    Ok(Outcome::Pass)
}

fn verify(g: &Global, a: &VerifyArgs) -> anyhow::Result<Outcome> {
    let pixels = g.pixels.unwrap_or(4080);
    let rows = a
        .overlaps
        .iter()
        .map(|&r| verify_overlap(r, pixels, &a.epsilon))
        .collect::<topotex::Result<Vec<_>>>()?;
    let mut pass = true;
    let mut table = String::from("overlap,check,theory,measured,percent_diff,status\n");
    for row in &rows {
        for (name, c) in row.checks() {
            let ok = c.within(g.tol);
            pass &= ok;
            table.push_str(&format!(
                "{},{name},{:.6},{:.6},{:.3},{}\n",
                row.overlap,
                c.theory,
                c.measured,
                c.percent_diff,
                if ok { "pass" } else { "FAIL" }
            ));
        }
    }
    write_text(g.out.as_deref(), &table)?;
    if g.report.is_some() {
        write_json(g.report.as_deref(), &rows)?;
    }
    Ok(if pass { Outcome::Pass } else { Outcome::Fail })
}

fn analyze(g: &Global, kind: &AnalyzeKind) -> anyhow::Result<Outcome> {
    let a = match kind {
        AnalyzeKind::Depth(a) | AnalyzeKind::Roundness(a) => a,
    };
    let grid = load(&a.input, g.width_mm)?;
    let mut config = AnalyzeConfig::new(a.overlap, a.n as usize);
    config.depth_scale_mm = a.depth_scale_mm;
    config.depth_max_um = a.depth_max_um;
    config.drop_zero_births = !a.keep_zero_births;
    config.roundness.n_thresholds = a.n_thresholds as usize;
    let report = match kind {
        AnalyzeKind::Depth(_) => analyze_depth(&grid, &config)?,
        AnalyzeKind::Roundness(_) => {
            let (report, curve) = analyze_roundness(&grid, &config)?;
            if let Some(path) = &a.curve {
                write_text(Some(path), &curve.to_csv())?;
            }
            report
        }
    };
    write_json(g.report.as_deref(), &report)?;
    Ok(Outcome::Pass)
}

#[derive(Serialize)]
struct SlopeReport {
    c0: f64,
    c1: f64,
    c2: f64,
    m_x: Option<f64>,
    m_y: Option<f64>,
    residual_rms: f64,
    minima: Vec<[f64; 3]>,
    filter_log: Vec<String>,
}

fn slope_cmd(g: &Global, a: &SlopeArgs) -> anyhow::Result<Outcome> {
    let grid = topotex::grid::normalize(&load(&a.input, g.width_mm)?);
    let n = a.n_strikes as usize;
    let minima = locate_minima(&grid, n * n, !a.keep_zero_births, 300)?;
    let (fit, slopes) = slope(&grid, &minima, a.depth_max_um)?;
    let report = SlopeReport {
        c0: fit.c0,
        c1: fit.c1,
        c2: fit.c2,
        m_x: slopes.map(|s| s[0]),
        m_y: slopes.map(|s| s[1]),
        residual_rms: fit.residual_rms,
        minima: minima.points.iter().map(|&(x, y, z)| [y, x, z]).collect(),
        filter_log: minima.log,
    };
    write_json(g.report.as_deref(), &report)?;
    Ok(Outcome::Pass)
}

fn noise_study(g: &Global, a: &NoiseArgs) -> anyhow::Result<Outcome> {
    let mut config = NoiseStudyConfig::default();
    config.bumps = GaussianBumps {
        per_side: a.per_side,
        sigma_px: a.bump_sigma_px,
        pixels: g.pixels.unwrap_or(config.bumps.pixels),
    };
    config.roundness.max_loops = Some(a.per_side * a.per_side);
    config.snr_db = a.snr_db.clone();
    config.trials = a.trials;
    let rows = NoiseStudy::new(config)?.run()?;
    write_text(g.out.as_deref(), &noise_rows_csv(&rows))?;
    if g.report.is_some() {
        write_json(g.report.as_deref(), &rows)?;
    }
    Ok(Outcome::Pass)
}

fn persistence(g: &Global, a: &PersistenceArgs) -> anyhow::Result<Outcome> {
    let grid = load(&a.input, g.width_mm)?;
    let d = match a.threshold {
        Some(t) => threshold_loops(&grid, t, a.connectivity.into())?,
        None => sublevel_persistence(&grid, a.connectivity.into()),
    };
    write_text(g.out.as_deref(), &d.to_csv())?;
    Ok(Outcome::Pass)
}

fn run(cli: &Cli) -> anyhow::Result<Outcome> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.global.threads)
        .build_global()
        .context("starting thread pool")?;
    let g = &cli.global;
    match &cli.command {
        Command::Gen(a) => gen(g, a),
        Command::Theory(a) => {
            let params = ProcessParams::from_overlap(a.overlap, a.n, g.width_mm, g.pixels.unwrap_or(1000));
            write_json(g.report.as_deref(), &theory(&params, &a.epsilon)?)?;
            Ok(Outcome::Pass)
        }
        Command::Verify(a) => verify(g, a),
        Command::Analyze(kind) => analyze(g, kind),
        Command::Slope(a) => slope_cmd(g, a),
        Command::NoiseStudy(a) => noise_study(g, a),
        Command::Persistence(a) => persistence(g, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::Fail) => {
            eprintln!("topotex: tolerance of {}% exceeded", cli.global.tol);
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("topotex: {e:#}");
            ExitCode::from(1)
        }
    }
}
