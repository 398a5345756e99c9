use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use wifidop::coverage::{geometric_indicator, wlan_indicator, CoverageGrid, GridLayout};
use wifidop::dop::{self, DopConfig};
use wifidop::io::{self as wio, fmt_f64};
use wifidop::propagation::PropagationModel;
use wifidop::radio::{dbm_to_mw, ApId, Dimension, Environment, Position, RssScan};
use wifidop::sim::{self, EvaluationReport, ExperimentConfig, NoiseModel, DEFAULT_BIN_EDGES};
use wifidop::solver::{self, SolverConfig};

/// Wi-Fi positioning quality: DOP, multilateration, coverage compactness
/// and trajectory simulation.
#[derive(Debug, Parser)]
#[command(name = "wifidop", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// DOP of each scan evaluated at a fixed point.
    Dop(DopArgs),
    /// Estimate a position for each scan.
    Locate(LocateArgs),
    /// Compactness indicators of one AP's coverage cells.
    Coverage(CoverageArgs),
    /// Simulate a walk, locate every sample and write a report.
    Simulate(SimulateArgs),
    /// Summarize a report written by `simulate`.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// Environment description (JSON).
    #[arg(long)]
    env: PathBuf,
    /// Override the environment's dimension.
    #[arg(long, value_parser = parse_dim)]
    dim: Option<Dimension>,
}

#[derive(Debug, Args)]
struct DopArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    scans: PathBuf,
    /// Evaluation point, `x,y,z` in meters.
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    at: Position,
    /// Weight rows by the inverse squared range sensitivity.
    #[arg(long)]
    weighted: bool,
    /// Model used for the sensitivities when `--weighted` is set.
    #[arg(long, default_value = "friis")]
    model: PropagationModel,
}

#[derive(Debug, Args)]
struct LocateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    scans: PathBuf,
    #[arg(long, default_value = "friis")]
    model: PropagationModel,
    /// Use the lambda-free Friis range inversion.
    #[arg(long)]
    friis_legacy_inversion: bool,
}

#[derive(Debug, Args)]
struct CoverageArgs {
    #[arg(long)]
    env: PathBuf,
    /// Floor extent in meters, `WxH`.
    #[arg(long, value_parser = parse_extent)]
    grid: (f64, f64),
    /// Pixel edge, meters.
    #[arg(long, default_value_t = 0.5)]
    pixel: f64,
    #[arg(long, default_value_t = 1)]
    floors: usize,
    #[arg(long, default_value_t = 3.0)]
    floor_height: f64,
    /// Quality threshold, e.g. `-75dBm`.
    #[arg(long, value_parser = parse_dbm, allow_hyphen_values = true)]
    q: f64,
    #[arg(long)]
    ap: String,
    #[arg(long, default_value = "friis")]
    model: PropagationModel,
    /// Write cell membership as `floor,i,j` rows.
    #[arg(long)]
    dump: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    trajectory: PathBuf,
    /// Shadowing standard deviation, dB.
    #[arg(long, default_value_t = 2.0)]
    sigma: f64,
    /// RNG seed; `WIFIDOP_SEED` takes precedence when set.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "friis")]
    model: PropagationModel,
    /// Report CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Attach the DOP at the true position instead of at the estimate.
    #[arg(long)]
    dop_at_truth: bool,
    /// Solve every sample from the AP centroid.
    #[arg(long)]
    no_warm_start: bool,
    /// Drop readings below this level, e.g. `-90dBm`.
    #[arg(long, value_parser = parse_dbm, allow_hyphen_values = true)]
    dropout_dbm: Option<f64>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    report: PathBuf,
    /// Emit plot-ready data blocks instead of the table.
    #[arg(long)]
    gnuplot: bool,
}

fn parse_dim(s: &str) -> Result<Dimension, String> {
    s.parse::<u8>()
        .ok()
        .and_then(Dimension::from_count)
        .ok_or_else(|| format!("dimension must be 2 or 3, got `{s}`"))
}

fn parse_point(s: &str) -> Result<Position, String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| format!("`{p}` is not a number")))
        .collect::<Result<_, _>>()?;
    match parts.as_slice() {
        [x, y, z] => Ok(Position::new(*x, *y, *z)),
        [x, y] => Ok(Position::new(*x, *y, 0.0)),
        _ => Err(format!("expected `x,y,z`, got `{s}`")),
    }
}

fn parse_extent(s: &str) -> Result<(f64, f64), String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected `WxH`, got `{s}`"))?;
    let num = |v: &str| v.trim().parse::<f64>().map_err(|_| format!("`{v}` is not a number"));
    Ok((num(w)?, num(h)?))
}

/// Level in dBm, with or without the unit suffix, returned in mW.
fn parse_dbm(s: &str) -> Result<f64, String> {
    let t = s.trim();
    let t = t.strip_suffix("dBm").or_else(|| t.strip_suffix("dbm")).unwrap_or(t);
    let level: f64 = t.trim().parse().map_err(|_| format!("`{s}` is not a dBm level"))?;
    dbm_to_mw(level).map_err(|e| e.to_string())
}

fn load_env(common: &Common) -> Result<Environment> {
    let env = wio::load_environment(&common.env).with_context(|| format!("loading {}", common.env.display()))?;
    Ok(match common.dim {
        Some(d) => env.with_dimension(d),
        None => env,
    })
}

fn load_scans(path: &Path) -> Result<Vec<RssScan>> {
    wio::load_scans(path).with_context(|| format!("loading {}", path.display()))
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn run_dop(args: DopArgs) -> Result<()> {
    let env = load_env(&args.common)?;
    let scans = load_scans(&args.scans)?;
    let cfg = DopConfig {
        weighting: args.weighted.then_some(args.model),
        ..DopConfig::default()
    };
    let mut out = io::stdout().lock();
    writeln!(out, "timestamp,visible,qualified,dop,classification")?;
    for scan in &scans {
        let a = dop::assess(&env, scan, &args.at, &cfg).with_context(|| format!("scan at t={}", scan.timestamp))?;
        writeln!(
            out,
            "{},{},{},{},{}",
            fmt_f64(scan.timestamp),
            a.visible_count,
            a.qualified_count,
            fmt_f64(a.dop),
            a.classification
        )?;
    }
    Ok(())
}

fn run_locate(args: LocateArgs) -> Result<()> {
    let env = load_env(&args.common)?;
    let scans = load_scans(&args.scans)?;
    let cfg = SolverConfig::new(args.model.with_legacy_inversion(args.friis_legacy_inversion));
    let fixes = solver::solve_trajectory(&env, &scans, &cfg);
    let with_truth = scans.iter().any(|s| s.truth.is_some());

    let mut out = io::stdout().lock();
    write!(out, "timestamp,x,y,z,residual,iterations,converged,dop,classification")?;
    if with_truth {
        write!(out, ",truth_x,truth_y,truth_z,error_m")?;
    }
    writeln!(out)?;
    for (scan, fix) in scans.iter().zip(&fixes) {
        let p = fix.position;
        write!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            fmt_f64(scan.timestamp),
            fmt_f64(p.x),
            fmt_f64(p.y),
            fmt_f64(p.z),
            fmt_f64(fix.residual_norm),
            fix.iterations,
            fix.converged,
            fmt_f64(fix.assessment.dop),
            fix.assessment.classification
        )?;
        if with_truth {
            match scan.truth {
                Some(t) => write!(
                    out,
                    ",{},{},{},{}",
                    fmt_f64(t.x),
                    fmt_f64(t.y),
                    fmt_f64(t.z),
                    fmt_f64((p - t).norm())
                )?,
                None => write!(out, ",,,,")?,
            }
        }
        writeln!(out)?;
    }
    Ok(())
}

fn run_coverage(args: CoverageArgs) -> Result<()> {
    let env = wio::load_environment(&args.env).with_context(|| format!("loading {}", args.env.display()))?;
    let layout = GridLayout::covering(args.grid.0, args.grid.1, args.pixel, args.floors, args.floor_height)?;
    let grid = CoverageGrid::simulate(&env, &args.model, layout, args.q)?;
    let cells = grid.extract_cells(&ApId::new(&args.ap))?;

    let mut out = io::stdout().lock();
    writeln!(out, "floor,size,g_prime")?;
    for cell in &cells {
        let g = match geometric_indicator(cell) {
            Ok(g) => fmt_f64(g),
            Err(_) => "nan".to_owned(),
        };
        writeln!(out, "{},{},{}", cell.floor, cell.len(), g)?;
    }
    match wlan_indicator(&cells) {
        Ok(g) => writeln!(out, "g_wlan,{}", fmt_f64(g))?,
        Err(e) => {
            out.flush()?;
            bail!("no G_WLAN for `{}`: {e}", args.ap);
        }
    }

    if let Some(path) = args.dump {
        let mut w = output(Some(&path))?;
        writeln!(w, "floor,i,j")?;
        for cell in &cells {
            for (i, j) in &cell.pixels {
                writeln!(w, "{},{i},{j}", cell.floor)?;
            }
        }
        w.flush()?;
    }
    Ok(())
}

fn print_summary(out: &mut impl Write, report: &EvaluationReport) -> io::Result<()> {
    writeln!(out, "dop_bin,count,mean_error_m,max_error_m")?;
    let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_else(|| "-".to_owned());
    for b in report.bins.iter().chain(std::iter::once(&report.infinite)) {
        let label = if b.lower.is_infinite() {
            "inf".to_owned()
        } else {
            format!("[{}, {})", fmt_f64(b.lower), fmt_f64(b.upper))
        };
        writeln!(out, "{label},{},{},{}", b.count, opt(b.mean_error), opt(b.max_error))?;
    }
    writeln!(out, "spearman,{}", opt(report.spearman))?;
    writeln!(out, "trend_ok,{}", report.mean_error_trend_ok())
}

fn run_simulate(args: SimulateArgs) -> Result<()> {
    let env = load_env(&args.common)?;
    let trajectory =
        wio::load_trajectory(&args.trajectory).with_context(|| format!("loading {}", args.trajectory.display()))?;
    let seed = match std::env::var("WIFIDOP_SEED") {
        Ok(v) => v
            .trim()
            .parse::<u64>()
            .with_context(|| format!("WIFIDOP_SEED=`{v}` is not a seed"))?,
        Err(_) => args.seed,
    };
    let mut noise = NoiseModel::new(args.sigma, seed)?;
    if let Some(d) = args.dropout_dbm {
        noise = noise.with_dropout(d);
    }
    let mut cfg = ExperimentConfig::new(noise, SolverConfig::new(args.model));
    cfg.dop_at_truth = args.dop_at_truth;
    cfg.warm_start = !args.no_warm_start;
    log::info!("simulating with {} seed {seed}", args.model);
    let report = sim::run_experiment(&env, &trajectory, &cfg)?;

    let mut w = output(args.out.as_deref())?;
    wio::write_report(&mut w, &report.records)?;
    w.flush()?;
    if args.out.is_some() {
        print_summary(&mut io::stdout().lock(), &report)?;
    }
    Ok(())
}

fn run_evaluate(args: EvaluateArgs) -> Result<()> {
    let file = File::open(&args.report).with_context(|| format!("opening {}", args.report.display()))?;
    let records = wio::read_report(file).with_context(|| format!("reading {}", args.report.display()))?;
    let report = EvaluationReport::from_records(records, &DEFAULT_BIN_EDGES)?;
    let mut out = io::stdout().lock();
    if args.gnuplot {
        writeln!(out, "# dop error_m")?;
        for r in report.records.iter().filter(|r| r.dop.is_finite()) {
            writeln!(out, "{} {}", fmt_f64(r.dop), fmt_f64(r.error_m))?;
        }
        writeln!(out, "\n\n# time dop")?;
        for r in &report.records {
            writeln!(out, "{} {}", fmt_f64(r.time), fmt_f64(r.dop))?;
        }
        return Ok(());
    }
    print_summary(&mut out, &report)?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Dop(a) => run_dop(a),
        Command::Locate(a) => run_locate(a),
        Command::Coverage(a) => run_coverage(a),
        Command::Simulate(a) => run_simulate(a),
        Command::Evaluate(a) => run_evaluate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e)
            if e.downcast_ref::<io::Error>()
                .is_some_and(|io| io.kind() == io::ErrorKind::BrokenPipe) =>
        {
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
