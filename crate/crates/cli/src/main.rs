//! `mlc-sim`: run scenarios, paired baselines, batch sweeps and fixture files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use mlc_core::batch::{run_all, run_grid, write_aggregate, BatchGrid};
use mlc_core::engine::write_topology;
use mlc_core::metrics::write_trace;
use mlc_core::{fixtures, run, CommMode, ConfigError, MotionMode, RunOutput, ScenarioConfig, SimError, Summary};

#[derive(Parser)]
#[command(
    name = "mlc-sim",
    version,
    about = "Multi-level clustering wildfire monitoring simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the clustered swarm for one or more seeds.
    Run(RunArgs),
    /// Run the direct-communication baseline; later `run`s in the same
    /// output directory pick it up for the normalized miss ratio.
    Baseline(RunArgs),
    /// Sweep a parameter grid and write one aggregate row per combination.
    Batch(BatchArgs),
    /// Regenerate the six-agent golden expansion files.
    Fixtures {
        #[arg(long, default_value = "crates/core/tests/fixtures")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// Scenario JSON; missing fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed range, `N..M` (end exclusive) or `N..=M`.
    #[arg(long, value_parser = parse_seeds, conflicts_with = "seed")]
    seeds: Option<Range<u64>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Simulated seconds.
    #[arg(long)]
    duration: Option<f64>,
    /// Abort on the first clustering-rule violation.
    #[arg(long)]
    strict: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    max_cluster_size: Option<usize>,
    #[arg(long)]
    cd: Option<f64>,
    #[arg(long)]
    ct: Option<f64>,
    /// random, explore or track.
    #[arg(long)]
    motion: Option<MotionMode>,
}

#[derive(Args)]
struct BatchArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated lists; each defaults to the config value.
    #[arg(long, value_delimiter = ',')]
    max_cluster_size: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    cd: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    ct: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    motion: Vec<MotionMode>,
    /// Also run the direct baseline per seed and report normalized miss ratios.
    #[arg(long)]
    paired: bool,
}

fn parse_seeds(s: &str) -> Result<Range<u64>, String> {
    let bad = || format!("expected N..M or N..=M, got `{s}`");
    if let Some((a, b)) = s.split_once("..=") {
        let (a, b): (u64, u64) = (a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?);
        return Ok(a..b + 1);
    }
    let (a, b) = s.split_once("..").ok_or_else(bad)?;
    let (a, b): (u64, u64) = (a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?);
    if b <= a {
        return Err(format!("empty seed range `{s}`"));
    }
    Ok(a..b)
}

/// Failure classes with a stable exit code each.
#[derive(Debug)]
enum Failure {
    Config(anyhow::Error),
    Invariant(anyhow::Error),
    Io(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Invariant(_) => 2,
            Failure::Io(_) => 3,
        }
    }

    fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Config(e) | Failure::Invariant(e) | Failure::Io(e) => e,
        }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(ConfigError::Io(io)) => Failure::Io(io.into()),
            SimError::Config(c) => Failure::Config(c.into()),
            SimError::Io(io) => Failure::Io(io.into()),
            other => Failure::Invariant(other.into()),
        }
    }
}

fn io(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Io(e.into())
}

type CliResult<T> = Result<T, Failure>;

fn threads() -> usize {
    let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    match std::env::var("MLC_SIM_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
    {
        Some(n) if n > 0 => n.min(cores),
        _ => cores,
    }
}

fn base_config(common: &Common) -> CliResult<ScenarioConfig> {
    let mut cfg = match &common.config {
        Some(path) => ScenarioConfig::load(path).map_err(|e| match e {
            ConfigError::Io(err) => io(anyhow!(err).context(format!("reading {}", path.display()))),
            other => Failure::Config(anyhow!(other).context(format!("in {}", path.display()))),
        })?,
        None => ScenarioConfig::default(),
    };
    if let Some(d) = common.duration {
        cfg.sim_time = d;
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    cfg.strict |= common.strict;
    Ok(cfg)
}

fn validated(cfg: ScenarioConfig) -> CliResult<ScenarioConfig> {
    cfg.validate().map_err(|e| Failure::Config(e.into()))?;
    Ok(cfg)
}

fn seeds(common: &Common, cfg: &ScenarioConfig) -> Vec<u64> {
    match &common.seeds {
        Some(r) => r.clone().collect(),
        None => vec![cfg.seed],
    }
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .with_context(|| format!("creating {}", path.display()))
        .map_err(io)
}

fn write_outputs(dir: &Path, prefix: &str, seed: u64, out: &RunOutput, summary: &Summary) -> CliResult<()> {
    let mut w = create(&dir.join(format!("{prefix}trace_{seed}.csv")))?;
    write_trace(&out.trace, &mut w).map_err(io)?;
    w.flush().map_err(io)?;

    let mut w = create(&dir.join(format!("{prefix}topology_{seed}.csv")))?;
    write_topology(&out.final_topology, &mut w).map_err(io)?;
    w.flush().map_err(io)?;

    let mut w = create(&dir.join(summary_name(prefix, seed)))?;
    serde_json::to_writer_pretty(&mut w, summary).map_err(io)?;
    writeln!(w).map_err(io)?;
    w.flush().map_err(io)
}

fn summary_name(prefix: &str, seed: u64) -> String {
    format!("{prefix}summary_{seed}.json")
}

fn read_baseline(dir: &Path, seed: u64) -> CliResult<Option<Summary>> {
    let path = dir.join(summary_name("baseline_", seed));
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(&path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(io)?;
    serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", path.display()))
        .map(Some)
        .map_err(io)
}

fn cmd_run(args: &RunArgs, comm: CommMode) -> CliResult<()> {
    let mut base = base_config(&args.common)?;
    if let Some(k) = args.max_cluster_size {
        base.protocol.max_cluster_size = k;
    }
    if let Some(c) = args.cd {
        base.propagation.c_d = c;
    }
    if let Some(c) = args.ct {
        base.propagation.c_t = c;
    }
    if let Some(m) = args.motion {
        base.motion.mode = m;
    }
    base.comm = comm;
    let base = validated(base)?;

    let dir = &args.common.out;
    std::fs::create_dir_all(dir)
        .with_context(|| format!("creating {}", dir.display()))
        .map_err(io)?;
    let prefix = if comm == CommMode::Direct { "baseline_" } else { "" };

    let configs: Vec<ScenarioConfig> = seeds(&args.common, &base)
        .into_iter()
        .map(|seed| ScenarioConfig { seed, ..base.clone() })
        .collect();
    let results = run_all(&configs, threads(), run);

    // report every seed before failing on the first error
    let mut first_failure = None;
    for (cfg, result) in configs.iter().zip(results) {
        match result {
            Ok(out) => {
                let mut summary = out.summary.clone();
                if comm != CommMode::Direct {
                    if let Some(b) = read_baseline(dir, cfg.seed)? {
                        summary.pair_with(&b);
                    }
                }
                write_outputs(dir, prefix, cfg.seed, &out, &summary)?;
                print_summary(&summary);
            }
            Err(e) => {
                eprintln!("seed {}: {e}", cfg.seed);
                first_failure.get_or_insert(Failure::from(e));
            }
        }
    }
    first_failure.map_or(Ok(()), Err)
}

fn print_summary(s: &Summary) {
    let opt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.3}"));
    println!(
        "seed {:>4}  main cluster {:.3}  links {:.2} (max {})  rate {:.1}  miss {:.3}  normalized miss {}  violations {}",
        s.seed,
        s.main_cluster_ratio,
        s.avg_links,
        s.max_links,
        s.avg_data_rate,
        s.mission_miss,
        opt(s.normalized_miss),
        s.rule_violations
    );
}

fn cmd_batch(args: &BatchArgs) -> CliResult<()> {
    let base = validated(base_config(&args.common)?)?;
    let or_base = |v: &Vec<f64>, d: f64| if v.is_empty() { vec![d] } else { v.clone() };
    let grid = BatchGrid {
        seeds: seeds(&args.common, &base),
        c_d: or_base(&args.cd, base.propagation.c_d),
        c_t: or_base(&args.ct, base.propagation.c_t),
        max_cluster_size: if args.max_cluster_size.is_empty() {
            vec![base.protocol.max_cluster_size]
        } else {
            args.max_cluster_size.clone()
        },
        motion: if args.motion.is_empty() {
            vec![base.motion.mode]
        } else {
            args.motion.clone()
        },
        paired: args.paired,
    };
    for combo in grid.combinations() {
        validated(combo.apply(&base, base.seed))?;
    }

    let dir = &args.common.out;
    std::fs::create_dir_all(dir)
        .with_context(|| format!("creating {}", dir.display()))
        .map_err(io)?;
    let rows = run_grid(&base, &grid, threads());
    let path = dir.join("aggregate.csv");
    let mut w = create(&path)?;
    write_aggregate(&rows, &mut w).map_err(io)?;
    w.flush().map_err(io)?;
    for r in &rows {
        for f in &r.failures {
            eprintln!(
                "c_d {} c_t {} max {} {:?}: {f}",
                r.combination.c_d, r.combination.c_t, r.combination.max_cluster_size, r.combination.motion
            );
        }
    }
    println!(
        "{} combinations x {} seeds -> {}",
        rows.len(),
        grid.seeds.len(),
        path.display()
    );
    Ok(())
}

fn cmd_fixtures(out: &Path) -> CliResult<()> {
    for path in fixtures::write_golden_files(out, &[2.0, 3.0])? {
        println!("{}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a, CommMode::Mlc),
        Command::Baseline(a) => cmd_run(a, CommMode::Direct),
        Command::Batch(a) => cmd_batch(a),
        Command::Fixtures { out } => cmd_fixtures(out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            ExitCode::from(f.code())
        }
    }
}
