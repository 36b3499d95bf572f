use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use covsim::calibrate::{calibrate_ascs, CalibrationOptions, CalibrationTargets, Observable};
use covsim::choice::MnlParams;
use covsim::engine::{stats_csv, SimConfig};
use covsim::manifest::RunManifest;
use covsim::netio::{
    load_gtfs_subset_with_warnings, load_road_network, validate_network, GtfsOptions, DEFAULT_SNAP_RADIUS,
};
use covsim::population::Phase;
use covsim::scenario::{observables, run_matrix, run_scenario_with, Assets, Matrix, ScenarioConfig, PRECOVID_FIT};
use covsim::sociability::{aggregate, read_frames, temporal_profile};
use covsim::toy::{build_toy, ToyOptions};
use covsim::Error;

/// Reopening-scenario transport simulation and street sociability metrics.
#[derive(Parser)]
#[command(name = "covsim", version)]
struct Cli {
    /// Emit log records as JSON lines on stderr.
    #[arg(long, global = true)]
    json_logs: bool,

    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Load and validate a road network and GTFS feed.
    Net(NetArgs),
    /// Run a scenario matrix and write reports.
    Run(RunArgs),
    /// Fit alternative-specific constants to observed targets.
    Calibrate(CalibrateArgs),
    /// Compute sociability indicators from a detection stream.
    Sociability(SociabilityArgs),
    /// Write the toy-city assets directory.
    Toy(ToyArgs),
}

#[derive(Args)]
struct NetArgs {
    /// Node CSV (id,x,y).
    #[arg(long)]
    nodes: PathBuf,
    /// Link CSV (id,from,to,length,capacity,freespeed,modes).
    #[arg(long)]
    links: PathBuf,
    /// GTFS feed directory.
    #[arg(long)]
    gtfs: PathBuf,
    /// Service weekday used to filter calendar.txt, e.g. "monday".
    #[arg(long)]
    day: Option<String>,
    /// Maximum stop-to-node snapping distance, meters.
    #[arg(long, default_value_t = DEFAULT_SNAP_RADIUS)]
    snap_radius: f64,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario matrix JSON.
    #[arg(long)]
    matrix: PathBuf,
    /// Assets directory.
    #[arg(long)]
    assets: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the matrix seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the matrix iteration count.
    #[arg(long)]
    iterations: Option<usize>,
    /// Also write each scenario's final event log as JSON lines.
    #[arg(long)]
    events: bool,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Starting parameters JSON.
    #[arg(long)]
    base: PathBuf,
    /// Targets JSON, e.g. {"transit_share": 0.2}.
    #[arg(long)]
    targets: PathBuf,
    /// Assets directory.
    #[arg(long)]
    assets: PathBuf,
    /// Fitted parameters JSON.
    #[arg(long)]
    out: PathBuf,
    /// Phase simulated while fitting.
    #[arg(long, default_value = "covid")]
    phase: Phase,
    /// Schedule variant (default: the phase's own).
    #[arg(long)]
    schedule: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Simulation iterations per evaluation.
    #[arg(long, default_value_t = 10)]
    iterations: usize,
    /// Convergence tolerance, percentage points.
    #[arg(long, default_value_t = 1.0)]
    tol_pp: f64,
    #[arg(long, default_value_t = 50)]
    max_iter: usize,
    #[arg(long, default_value_t = 1.0)]
    step: f64,
}

#[derive(Args)]
struct SociabilityArgs {
    /// Detection frames, JSON lines.
    #[arg(long)]
    frames: PathBuf,
    /// Report JSON.
    #[arg(long)]
    out: PathBuf,
    /// Hour-of-day profile CSV.
    #[arg(long)]
    profile: Option<PathBuf>,
    /// Local time offset from UTC, hours.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    tz: f64,
}

#[derive(Args)]
struct ToyArgs {
    /// Output assets directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 625)]
    agents_per_zone: usize,
    /// Iterations recorded in the generated matrix.json.
    #[arg(long, default_value_t = 50)]
    iterations: usize,
}

/// Exit statuses: 0 success, 1 bad input, 2 validation findings.
enum Failure {
    Input(String),
    Findings,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Input(e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

fn init_logging(json: bool) {
    let mut b = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"));
    if json {
        b.format(|buf, rec| {
            let line = serde_json::json!({
                "level": rec.level().as_str(),
                "target": rec.target(),
                "message": rec.args().to_string(),
            });
            writeln!(buf, "{line}")
        });
    }
    b.init();
}

fn write_file(path: &Path, contents: &str) -> Result<(), Error> {
    std::fs::write(path, contents).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn cmd_net(a: NetArgs) -> CmdResult {
    let road = load_road_network(&a.nodes, &a.links)?;
    let opts = GtfsOptions { service_day: a.day };
    let (schedule, warnings) = load_gtfs_subset_with_warnings(&a.gtfs, &opts)?;
    for w in warnings {
        log::warn!("{w}");
    }
    let report = validate_network(&road, &schedule, a.snap_radius);
    println!(
        "{} nodes, {} links, {} stops, {} routes, {} trips",
        road.nodes().len(),
        road.links().len(),
        schedule.stops.len(),
        schedule.routes.len(),
        schedule.trip_count()
    );
    for f in &report.findings {
        println!("finding: {f}");
    }
    if report.is_clean() {
        Ok(())
    } else {
        Err(Failure::Findings)
    }
}

fn cmd_run(a: RunArgs) -> CmdResult {
    let mut matrix: Matrix = read_json(&a.matrix)?;
    if let Some(s) = a.seed {
        matrix.seed = s;
    }
    if let Some(n) = a.iterations {
        matrix.sim.iterations = n;
    }
    matrix.sim.validate()?;
    let mut manifest = RunManifest::new("run", Some(matrix.seed));
    let assets = manifest.time("load", || Assets::load(&a.assets, matrix.sim.snap_radius))?;
    manifest.add_input(&a.matrix)?;
    for f in &assets.files {
        manifest.add_input(f)?;
    }
    let out = manifest.time("simulate", || run_matrix(&matrix.scenarios, &assets, &matrix.sim, matrix.seed))?;

    std::fs::create_dir_all(&a.out).map_err(|e| Failure::Input(format!("{}: {e}", a.out.display())))?;
    manifest.time("write", || -> Result<(), Error> {
        for (i, r) in out.reports.iter().enumerate() {
            let doc = serde_json::json!({ "report": r, "comparison": &out.comparisons[i] });
            write_file(
                &a.out.join(format!("report_{}.json", r.name)),
                &(serde_json::to_string_pretty(&doc)? + "\n"),
            )?;
            write_file(&a.out.join(format!("stats_{}.csv", r.name)), &stats_csv(&out.stats[i]))?;
            if a.events {
                let cfg = &matrix.scenarios[i];
                let net = assets.network(cfg.schedule_variant())?;
                let path = a.out.join(format!("events_{}.jsonl", r.name));
                let f = File::create(&path).map_err(|e| Error::Io {
                    path: path.clone(),
                    source: e,
                })?;
                let mut w = BufWriter::new(f);
                out.logs[i].write_jsonl(net, &assets.population, &mut w)?;
                w.flush().map_err(|e| Error::Io { path, source: e })?;
            }
        }
        write_file(&a.out.join("modeshare.csv"), &out.modeshare_csv())
    })?;
    manifest.write(&a.out.join("manifest.json"))?;
    print!("{}", out.modeshare_csv());
    Ok(())
}

fn cmd_calibrate(a: CalibrateArgs) -> CmdResult {
    let base: MnlParams = read_json(&a.base)?;
    base.validate()?;
    let raw: BTreeMap<String, f64> = read_json(&a.targets)?;
    let mut parsed = BTreeMap::new();
    for (k, v) in raw {
        parsed.insert(k.parse::<Observable>()?, v);
    }
    let targets = CalibrationTargets::new(parsed)?;

    let sim = SimConfig {
        iterations: a.iterations,
        ..SimConfig::default()
    };
    sim.validate()?;
    let assets = Assets::load(&a.assets, sim.snap_radius)?;
    let mut scenario = ScenarioConfig::new("calibration", a.phase, 1.0);
    scenario.schedule_variant = a.schedule;

    let needs_baseline = targets.iter().any(|(o, _)| !matches!(o, Observable::Share(_)));
    let baseline = if needs_baseline {
        let base_cfg = ScenarioConfig::new("baseline", Phase::PreCovid, 1.0);
        let p = assets.params.get(PRECOVID_FIT).unwrap_or(&base);
        Some(run_scenario_with(&base_cfg, &assets, &sim, a.seed, p)?)
    } else {
        None
    };

    let opts = CalibrationOptions {
        step: a.step,
        tol_pp: a.tol_pp,
        max_iter: a.max_iter,
        ..CalibrationOptions::default()
    };
    let result = calibrate_ascs(&base, &targets, &opts, |p| {
        let r = run_scenario_with(&scenario, &assets, &sim, a.seed, p)?;
        Ok(observables(&r, baseline.as_ref().unwrap_or(&r)))
    })?;
    log::info!(
        "calibration finished after {} iterations (converged: {}, mean |residual| {:.4})",
        result.iterations,
        result.converged,
        result.average_abs_residual
    );
    if !result.converged {
        log::warn!("tolerance not reached; writing the best parameters seen");
    }
    write_file(&a.out, &(serde_json::to_string_pretty(&result.params).map_err(Error::from)? + "\n"))?;
    println!("{}", serde_json::to_string_pretty(&result).map_err(Error::from)?);
    Ok(())
}

fn cmd_sociability(a: SociabilityArgs) -> CmdResult {
    let file = File::open(&a.frames).map_err(|e| Failure::Input(format!("{}: {e}", a.frames.display())))?;
    let frames = read_frames(BufReader::new(file), &a.frames.display().to_string())?;
    let report = aggregate(&frames)?;
    write_file(&a.out, &(serde_json::to_string_pretty(&report).map_err(Error::from)? + "\n"))?;
    if let Some(p) = &a.profile {
        write_file(p, &temporal_profile(&frames, a.tz)?.to_csv())?;
    }
    println!(
        "{} frames, avg pedestrian density {:.3}, safety rate {}",
        report.frames,
        report.avg_pedestrian_density,
        report.safety_rate.map_or("undefined".to_string(), |r| format!("{r:.4}"))
    );
    Ok(())
}

fn cmd_toy(a: ToyArgs) -> CmdResult {
    let toy = build_toy(&ToyOptions {
        agents_per_zone: a.agents_per_zone,
        seed: a.seed,
        iterations: a.iterations,
    })?;
    toy.write(&a.out)?;
    println!(
        "wrote {} agents, {} scenarios to {}",
        toy.population.agents.len(),
        toy.matrix.scenarios.len(),
        a.out.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    init_logging(cli.json_logs);
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size thread pool: {e}");
        }
    }
    let res = match cli.cmd {
        Cmd::Net(a) => cmd_net(a),
        Cmd::Run(a) => cmd_run(a),
        Cmd::Calibrate(a) => cmd_calibrate(a),
        Cmd::Sociability(a) => cmd_sociability(a),
        Cmd::Toy(a) => cmd_toy(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Findings) => ExitCode::from(2),
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
