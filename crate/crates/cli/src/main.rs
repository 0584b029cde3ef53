use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use swarm_construct::engine::{run_scenario, FailureInjection, SimConfig};
use swarm_construct::io::bench::{bench, write_csv};
use swarm_construct::io::render::render_frames;
use swarm_construct::io::shapefile;
use swarm_construct::io::trace::{read_trace, write_trace, TraceHeader};
use swarm_construct::io::validate::validate_trace;

/// Swarm construction simulator.
#[derive(Parser)]
#[command(name = "swarm-construct", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write its trace and metrics.
    Run(RunArgs),
    /// Render PPM frames from a trace.
    Render(RenderArgs),
    /// Replay a trace and check every world invariant.
    Validate(ValidateArgs),
    /// Sweep robot counts and write a makespan CSV.
    Bench(BenchArgs),
}

#[derive(Args)]
struct SimArgs {
    #[arg(long)]
    shape: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 2)]
    radius: usize,
    #[arg(long = "stuck-threshold", default_value_t = 50)]
    stuck_threshold: u32,
    #[arg(long = "max-ticks", default_value_t = 100_000)]
    max_ticks: u64,
}

impl SimArgs {
    fn config(&self, robots: u32) -> SimConfig {
        let mut config = SimConfig::new(&self.shape, robots);
        config.seed = self.seed;
        config.sensor_radius = self.radius;
        config.stuck_threshold = self.stuck_threshold;
        config.max_ticks = self.max_ticks;
        config
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    sim: SimArgs,
    #[arg(long, default_value_t = 4)]
    robots: u32,
    /// Remove a robot at a tick, as ROBOT:TICK. Repeatable.
    #[arg(long = "fail", value_parser = parse_failure)]
    fail: Vec<FailureInjection>,
    #[arg(long, default_value = "trace.jsonl")]
    trace: PathBuf,
    #[arg(long, default_value = "metrics.json")]
    metrics: PathBuf,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    trace: PathBuf,
    /// Shape file; defaults to the one recorded in the trace header.
    #[arg(long)]
    shape: Option<PathBuf>,
    #[arg(long = "out-dir")]
    out_dir: PathBuf,
    /// Frame interval in ticks; 0 renders only the first and last frames.
    #[arg(long, default_value_t = 0)]
    every: u64,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    trace: PathBuf,
    #[arg(long)]
    shape: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    sim: SimArgs,
    /// Comma-separated robot counts.
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
    robots: Vec<u32>,
    #[arg(long, default_value_t = 1)]
    trials: u32,
    #[arg(long, default_value = "bench.csv")]
    csv: PathBuf,
}

fn parse_failure(s: &str) -> Result<FailureInjection, String> {
    let (robot, tick) = s
        .split_once(':')
        .ok_or_else(|| format!("expected ROBOT:TICK, got {s:?}"))?;
    Ok(FailureInjection {
        robot_id: robot.parse().map_err(|e| format!("bad robot id {robot:?}: {e}"))?,
        tick: tick.parse().map_err(|e| format!("bad tick {tick:?}: {e}"))?,
    })
}

/// Exit code 1: the run or trace failed a check. Exit code 2: bad input.
enum Failure {
    Check(String),
    Usage(String),
}

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

fn open(path: &Path) -> Result<BufReader<File>, Failure> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn cmd_run(args: RunArgs) -> Result<(), Failure> {
    let scenario = shapefile::load(&args.sim.shape).map_err(usage)?;
    let mut config = args.sim.config(args.robots);
    config.failure_injections = args.fail;
    let out = run_scenario(&scenario, &config).map_err(usage)?;
    let header = TraceHeader::new(config, scenario.shape_hash.clone(), out.spawns.clone());
    write_trace(&header, &out.trace, create(&args.trace)?).map_err(usage)?;
    let metrics = serde_json::to_string_pretty(&out.metrics).map_err(usage)?;
    fs::write(&args.metrics, metrics + "\n").map_err(usage)?;
    let m = &out.metrics;
    println!(
        "completed={} makespan={} blocks={}/{} parallelism_index={} replans={} retargets={}",
        m.completed,
        m.makespan_ticks,
        out.final_world.blocks().len(),
        scenario.shape.len(),
        m.parallelism_index,
        m.replans_total,
        m.retargets_total
    );
    if let Some(d) = &m.diagnostic {
        eprintln!("{d}");
    }
    Ok(())
}

fn cmd_render(args: RenderArgs) -> Result<(), Failure> {
    let (header, events) = read_trace(open(&args.trace)?).map_err(usage)?;
    let shape_path = args.shape.unwrap_or_else(|| header.config.shape_file.clone());
    let scenario = shapefile::load(&shape_path).map_err(usage)?;
    let written = render_frames(&header, &events, &scenario, &args.out_dir, args.every).map_err(usage)?;
    println!("wrote {} frames to {}", written.len(), args.out_dir.display());
    Ok(())
}

fn cmd_validate(args: ValidateArgs) -> Result<(), Failure> {
    let scenario = shapefile::load(&args.shape).map_err(usage)?;
    let (header, events) = match read_trace(open(&args.trace)?) {
        Ok(t) => t,
        Err(e) => return Err(Failure::Check(format!("FAIL structure: {e}"))),
    };
    let report = validate_trace(&header, &events, &scenario);
    print!("{report}");
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Check("validation failed".to_string()))
    }
}

fn cmd_bench(args: BenchArgs) -> Result<(), Failure> {
    if args.robots.is_empty() || args.robots.contains(&0) {
        return Err(usage("--robots needs positive counts"));
    }
    let scenario = shapefile::load(&args.sim.shape).map_err(usage)?;
    let name = args
        .sim
        .shape
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let base = args.sim.config(1);
    let rows = bench(&scenario, &name, &base, &args.robots, args.trials).map_err(usage)?;
    write_csv(&rows, create(&args.csv)?).map_err(usage)?;
    println!("wrote {} rows to {}", rows.len(), args.csv.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Render(a) => cmd_render(a),
        Command::Validate(a) => cmd_validate(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
