//! Batch driver: orbit dumps, single-scheme runs, scheme comparisons and
//! beam-pattern exports.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use mabeam::export;
use mabeam::grid::build_time_grid;
use mabeam::metrics::{eval_pattern, evaluate};
use mabeam::optimizer::{run, Termination};
use mabeam::{Error, EvaluationReport, Preset, RunOutcome, Scenario, ScenarioConfig, Scheme};

#[derive(Debug, Parser)]
#[command(name = "mabeam", version, about = "Movable-antenna LEO beam coverage optimizer")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Scenario file; overrides --preset.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Built-in scenario used when --config is absent.
    #[arg(long, global = true, value_name = "NAME", default_value = "paper", value_parser = ["paper", "desk"])]
    preset: String,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Log progress to standard error.
    #[arg(short, long, global = true)]
    verbose: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Dump the satellite pass and the visibility cap angle.
    Orbit,
    /// Optimize with one scheme and export the results.
    Run {
        #[arg(long, value_parser = parse_scheme)]
        scheme: Scheme,
    },
    /// Run several schemes and tabulate leakage and SLR.
    Compare {
        #[arg(long, value_delimiter = ',', num_args = 1.., value_parser = parse_scheme)]
        schemes: Vec<Scheme>,
    },
    /// Export the beam pattern of one time slot.
    Pattern {
        /// 1-based slot index.
        #[arg(long)]
        slot: usize,
        /// Scheme producing the trajectory when --trajectory is absent.
        #[arg(long, value_parser = parse_scheme, default_value = "upa-steering")]
        scheme: Scheme,
        /// trajectory.csv from a previous run.
        #[arg(long, value_name = "PATH")]
        trajectory: Option<PathBuf>,
    },
}

fn parse_scheme(s: &str) -> Result<Scheme, String> {
    s.parse::<Scheme>().map_err(|e| e.to_string())
}

/// Failure with its process exit code.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn usage(error: anyhow::Error) -> Self {
        Self { code: 2, error }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) | Error::Domain(_) => 2,
            _ => 1,
        };
        Self { code, error: e.into() }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        Self { code: 1, error }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    let level = if cli.common.verbose { log::LevelFilter::Info } else { log::LevelFilter::Warn };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();

    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn dispatch(cli: &Cli) -> Result<(), Failure> {
    let config = load_config(&cli.common)?;
    let out = &cli.common.out;
    match &cli.command {
        Command::Orbit => orbit(&config, out),
        Command::Run { scheme } => run_one(&config, *scheme, out),
        Command::Compare { schemes } => compare(&config, schemes, out),
        Command::Pattern { slot, scheme, trajectory } => pattern(&config, *slot, *scheme, trajectory.as_deref(), out),
    }
}

fn load_config(common: &Common) -> Result<ScenarioConfig, Failure> {
    let config = match &common.config {
        Some(path) => ScenarioConfig::load(path)?,
        None => ScenarioConfig::preset(common.preset.parse::<Preset>()?),
    };
    config.validate()?;
    Ok(config)
}

fn io<T>(r: mabeam::Result<T>, what: &Path) -> anyhow::Result<T> {
    r.with_context(|| format!("writing {}", what.display()))
}

fn orbit(config: &ScenarioConfig, out: &Path) -> Result<(), Failure> {
    let orbit = config.orbit_config();
    orbit.validate()?;
    let grid = build_time_grid(orbit.interval(), config.grid.time_slots)?;
    let states: Vec<_> = grid.times.iter().map(|&t| orbit.state(t)).collect();
    let path = out.join("orbit.csv");
    io(export::write_orbit(&path, &states), &path)?;
    let path = out.join("orbit.txt");
    io(export::write_orbit_summary(&path, &orbit), &path)?;
    let (_, t) = orbit.orbital_period();
    println!("interval T = {t:.4} s, visibility half-angle = {:.4} deg", orbit.visibility_half_angle().to_degrees());
    Ok(())
}

type Writer<'a> = &'a dyn Fn(&Path) -> mabeam::Result<()>;

/// Everything a finished run exports.
fn write_run(scenario: &Scenario, scheme: Scheme, outcome: &RunOutcome, report: &EvaluationReport, out: &Path) -> anyhow::Result<()> {
    let traj = &outcome.trajectory;
    let files: [(&str, Writer); 6] = [
        ("trajectory.csv", &|p| export::write_trajectory(p, scenario, traj)),
        ("iterations.csv", &|p| export::write_iterations(p, &outcome.log)),
        ("timing.csv", &|p| export::write_timing(p, &outcome.log)),
        ("report.txt", &|p| export::write_report(p, scheme, &outcome.log, report)),
        ("slots.csv", &|p| export::write_slot_metrics(p, scenario, report)),
        ("grid_sets.csv", &|p| export::write_grid_sets(p, &scenario.grid_sets)),
    ];
    for (name, write) in files {
        let path = out.join(name);
        io(write(&path), &path)?;
    }
    let mut nadir = Vec::with_capacity(traj.slots());
    for m in 0..traj.slots() {
        let (samples, sub) = eval_pattern(scenario, traj, m)?;
        let path = out.join("patterns").join(format!("slot_{:03}.csv", m + 1));
        io(export::write_pattern(&path, &samples), &path)?;
        nadir.push((m, sub));
    }
    let path = out.join("nadir.csv");
    io(export::write_nadir(&path, &nadir), &path)
}

fn write_failed(out: &Path, message: &str) -> anyhow::Result<()> {
    fs::create_dir_all(out)?;
    fs::write(out.join("FAILED"), format!("{message}\n")).with_context(|| format!("writing FAILED marker in {}", out.display()))
}

struct SchemeResult {
    outcome: RunOutcome,
    report: EvaluationReport,
    seconds: f64,
}

/// Runs one scheme into `out`. Partial results are flushed next to a FAILED
/// marker before the failure is returned.
fn execute(scenario: &Scenario, scheme: Scheme, out: &Path) -> Result<SchemeResult, Failure> {
    let path = out.join("resolved.scenario");
    fs::create_dir_all(out).and_then(|_| fs::write(&path, scenario.config.to_toml_string())).with_context(|| format!("writing {}", path.display()))?;
    let _ = fs::remove_file(out.join("FAILED"));

    let start = Instant::now();
    let outcome = match run(&scenario.problem, &scenario.config.optimizer_config(scheme)) {
        Ok(o) => o,
        Err(e) => {
            write_failed(out, &e.to_string())?;
            return Err(e.into());
        }
    };
    let seconds = start.elapsed().as_secs_f64();
    let report = evaluate(&scenario.problem, &outcome.trajectory);
    write_run(scenario, scheme, &outcome, &report, out)?;
    if let Termination::Aborted(why) = &outcome.log.termination {
        let message = format!("{scheme} aborted after {} iterations: {why}", outcome.log.iterations());
        write_failed(out, &message)?;
        return Err(anyhow::anyhow!(message).into());
    }
    Ok(SchemeResult { outcome, report, seconds })
}

fn run_one(config: &ScenarioConfig, scheme: Scheme, out: &Path) -> Result<(), Failure> {
    let scenario = Scenario::build(config)?;
    let r = execute(&scenario, scheme, out)?;
    println!(
        "{scheme}: {} after {} iterations, I = {:.6}, average gain = {:.6}, SLR = {:.4} dB",
        r.outcome.log.termination,
        r.outcome.log.iterations(),
        r.report.leakage,
        r.report.average_gain,
        r.report.slr_db
    );
    Ok(())
}

fn compare(config: &ScenarioConfig, schemes: &[Scheme], out: &Path) -> Result<(), Failure> {
    if schemes.len() < 2 {
        return Err(Failure::usage(anyhow::anyhow!("compare needs at least two schemes, got {}", schemes.len())));
    }
    let scenario = Scenario::build(config)?;
    let mut table = String::from("scheme,status,leakage,average_gain,slr,slr_db,iterations,termination\n");
    let mut timing = String::from("scheme,wall_time_s\n");
    let mut failed = Vec::new();
    for &scheme in schemes {
        match execute(&scenario, scheme, &out.join(scheme.name())) {
            Ok(r) => {
                let (log, rep) = (&r.outcome.log, &r.report);
                writeln!(
                    table,
                    "{scheme},ok,{},{},{},{:.4},{},{}",
                    rep.leakage,
                    rep.average_gain,
                    rep.slr,
                    rep.slr_db,
                    log.iterations(),
                    log.termination
                )
                .unwrap();
                writeln!(timing, "{scheme},{}", r.seconds).unwrap();
                println!("{scheme}: I = {:.6}, SLR = {:.4} dB", rep.leakage, rep.slr_db);
            }
            Err(f) => {
                eprintln!("error: {scheme}: {:#}", f.error);
                writeln!(table, "{scheme},FAILED,,,,,,").unwrap();
                failed.push(scheme.name());
            }
        }
    }
    let path = out.join("comparison.csv");
    fs::write(&path, table).with_context(|| format!("writing {}", path.display()))?;
    let path = out.join("comparison_timing.csv");
    fs::write(&path, timing).with_context(|| format!("writing {}", path.display()))?;
    if !failed.is_empty() {
        return Err(anyhow::anyhow!("schemes failed: {}", failed.join(", ")).into());
    }
    Ok(())
}

fn pattern(config: &ScenarioConfig, slot: usize, scheme: Scheme, trajectory: Option<&Path>, out: &Path) -> Result<(), Failure> {
    if slot == 0 || slot > config.grid.time_slots {
        return Err(Failure::usage(anyhow::anyhow!("--slot must be in 1..={}, got {slot}", config.grid.time_slots)));
    }
    let scenario = Scenario::build(config)?;
    let traj = match trajectory {
        Some(path) => {
            let traj = export::read_trajectory(path, scenario.wavelength)?;
            if traj.slots() != config.grid.time_slots || traj.antennas() != config.array.antennas {
                return Err(Error::Config(format!(
                    "{} holds {} slots of {} antennas, the scenario needs {} of {}",
                    path.display(),
                    traj.slots(),
                    traj.antennas(),
                    config.grid.time_slots,
                    config.array.antennas
                ))
                .into());
            }
            traj
        }
        None => run(&scenario.problem, &config.optimizer_config(scheme))?.trajectory,
    };
    let (samples, nadir) = eval_pattern(&scenario, &traj, slot - 1)?;
    let path = out.join(format!("pattern_slot_{slot:03}.csv"));
    io(export::write_pattern(&path, &samples), &path)?;
    println!("slot {slot}: sub-satellite gain = {:.6} ({})", nadir.gain, nadir.tag.as_str());
    Ok(())
}
