//! Command-line driver for the coalescing-flow experiment harness.
//!
//! Every run resolves its configuration from defaults, then the optional
//! TOML config file, then command-line flags, writes a manifest before any
//! computation, and drops a report (JSON + CSV), plot data, and any extra
//! tabular outputs into the output directory.
//!
//! Exit codes: 0 when every verdict passed (or `--no-verdict` was given),
//! 1 when a verdict row failed, 2 for configuration or I/O errors.

use anyhow::{Context, Result};
use arratia::coupling::CouplingCheckConfig;
use arratia::harness::{
    run_coupling_check, run_distribution_check, run_lil_marginals, run_lil_paths, run_simulate,
    run_scaling_check, run_sudakov_check, DistCheckConfig, LilMarginalsConfig, LilPathsConfig,
    ScalingCheckConfig, SimulateConfig, SudakovCheckConfig,
};
use arratia::report::{config_hash, plot_csv, ExperimentRun, StatRow};
use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

#[derive(Parser, Debug)]
#[command(
    name = "arratia",
    version,
    about = "Monte Carlo laboratory for coalescing Brownian particle systems",
    after_help = "Outputs written to --out: manifest.json, report.json, report.csv, \
                  plotdata/*.csv, plus experiment-specific tables (flowpath.csv, \
                  coupling_rows.csv, sudakov_rows.csv)."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML config file; sections are named after subcommands
    /// (e.g. [dist_check]); flags override file values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; every random stream derives from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = one per core). Changes wall time only, never
    /// statistics.
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Headline replication count of the experiment.
    #[arg(long, global = true)]
    replications: Option<usize>,
    /// Geometric grid ratio for the iterated-logarithm experiments.
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Envelope widening parameter for the iterated-logarithm experiments.
    #[arg(long, global = true)]
    epsilon: Option<f64>,
    /// Time point (repeatable). dist-check uses the first value,
    /// scaling-check all values, simulate takes them as save times.
    #[arg(long = "t", global = true)]
    t: Vec<f64>,
    /// Report verdicts but always exit 0.
    #[arg(long, global = true)]
    no_verdict: bool,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq)]
enum Command {
    /// Run raw flow replications and export frames as CSV.
    Simulate,
    /// Exact-sampler and flow checks of the cluster-width survival law.
    DistCheck,
    /// Self-similarity across times and the rescaled limit law.
    ScalingCheck,
    /// Envelope-event marginal frequencies and series summability.
    LilMarginals,
    /// Per-path running maxima of width/envelope ratios.
    LilPaths,
    /// Supremum bound checks for the ladder Gaussian process.
    SudakovCheck,
    /// Coupled-construction equivalence against the direct flow.
    CouplingCheck,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::DistCheck => "dist-check",
            Command::ScalingCheck => "scaling-check",
            Command::LilMarginals => "lil-marginals",
            Command::LilPaths => "lil-paths",
            Command::SudakovCheck => "sudakov-check",
            Command::CouplingCheck => "coupling-check",
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    run: RunSection,
    simulate: Option<SimulateConfig>,
    dist_check: Option<DistCheckConfig>,
    scaling_check: Option<ScalingCheckConfig>,
    lil_marginals: Option<LilMarginalsConfig>,
    lil_paths: Option<LilPathsConfig>,
    sudakov_check: Option<SudakovCheckConfig>,
    coupling_check: Option<CouplingCheckConfig>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RunSection {
    seed: Option<u64>,
    workers: Option<usize>,
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    subcommand: &'a str,
    config_path: Option<&'a Path>,
    resolved_config: serde_json::Value,
    config_hash: String,
    seed: u64,
    out_dir: &'a Path,
    tool_version: &'a str,
    timestamp_unix_ms: u128,
}

#[derive(Serialize)]
struct ReportFile<'a> {
    experiment: &'a str,
    seed: u64,
    config_hash: &'a str,
    passed: bool,
    rows: &'a [StatRow],
    timestamp_unix_ms: u128,
    wall_ms: u64,
}

fn now_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0)
}

/// Resolved experiment: its serialized config (for the manifest), the hash,
/// the seed, and the closure that runs it.
struct Prepared {
    resolved: serde_json::Value,
    hash: String,
    seed: u64,
    run: Box<dyn FnOnce() -> Result<ExperimentRun>>,
}

fn prepare(cli: &Cli, file: FileConfig) -> Result<Prepared> {
    let seed_flag = cli.seed;
    let reps = cli.replications;
    let t = cli.t.clone();
    macro_rules! prep {
        ($cfg:expr, $runner:path) => {{
            let cfg = $cfg;
            Ok(Prepared {
                resolved: serde_json::to_value(&cfg)?,
                hash: config_hash(&cfg),
                seed: cfg.seed,
                run: Box::new(move || Ok($runner(&cfg)?)),
            })
        }};
    }
    match cli.command {
        Command::Simulate => {
            let mut cfg = file.simulate.unwrap_or_default();
            if let Some(s) = seed_flag {
                cfg.seed = s;
            }
            if let Some(r) = reps {
                cfg.replications = r;
            }
            if !t.is_empty() {
                cfg.save_times = t;
                cfg.horizon = cfg.save_times.iter().cloned().fold(f64::MIN, f64::max);
            }
            prep!(cfg, run_simulate)
        }
        Command::DistCheck => {
            let mut cfg = file.dist_check.unwrap_or_default();
            if let Some(s) = seed_flag {
                cfg.seed = s;
            }
            if let Some(r) = reps {
                cfg.exact_replications = r;
            }
            if let Some(&t0) = t.first() {
                cfg.t = t0;
            }
            prep!(cfg, run_distribution_check)
        }
        Command::ScalingCheck => {
            let mut cfg = file.scaling_check.unwrap_or_default();
            if let Some(s) = seed_flag {
                cfg.seed = s;
            }
            if let Some(r) = reps {
                cfg.replications = r;
            }
            if !t.is_empty() {
                cfg.t_values = t;
            }
            prep!(cfg, run_scaling_check)
        }
        Command::LilMarginals => {
            let mut cfg = file.lil_marginals.unwrap_or_default();
            if let Some(s) = seed_flag {
                cfg.seed = s;
            }
            if let Some(r) = reps {
                cfg.replications = r;
            }
            if let Some(a) = cli.alpha {
                cfg.alpha = a;
            }
            if let Some(e) = cli.epsilon {
                cfg.epsilon = e;
            }
            prep!(cfg, run_lil_marginals)
        }
        Command::LilPaths => {
            let mut cfg = file.lil_paths.unwrap_or_default();
            if let Some(s) = seed_flag {
                cfg.seed = s;
            }
            if let Some(r) = reps {
                cfg.paths = r;
            }
            if let Some(a) = cli.alpha {
                cfg.alpha = a;
            }
            if let Some(e) = cli.epsilon {
                cfg.epsilon = e;
            }
            prep!(cfg, run_lil_paths)
        }
        Command::SudakovCheck => {
            let mut cfg = file.sudakov_check.unwrap_or_default();
            if let Some(s) = seed_flag {
                cfg.seed = s;
            }
            if let Some(r) = reps {
                cfg.replications = r;
            }
            prep!(cfg, run_sudakov_check)
        }
        Command::CouplingCheck => {
            let mut cfg = file.coupling_check.unwrap_or_default();
            if let Some(s) = seed_flag {
                cfg.seed = s;
            }
            if let Some(r) = reps {
                cfg.replications = r;
            }
            prep!(cfg, run_coupling_check)
        }
    }
}

fn execute(cli: Cli) -> Result<bool> {
    let file: FileConfig = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read config file {}", path.display()))?;
            toml::from_str(&text)
                .with_context(|| format!("cannot parse config file {}", path.display()))?
        }
        None => FileConfig::default(),
    };

    let out_dir = file.run.out.clone().filter(|_| cli.out == Path::new("out")).unwrap_or_else(|| cli.out.clone());
    let workers = if cli.workers > 0 {
        cli.workers
    } else {
        file.run.workers.unwrap_or(0)
    };
    let mut cli = cli;
    if cli.seed.is_none() {
        cli.seed = file.run.seed;
    }

    let prepared = prepare(&cli, file)?;

    std::fs::create_dir_all(out_dir.join("plotdata"))
        .with_context(|| format!("cannot create output directory {}", out_dir.display()))?;
    let manifest = Manifest {
        subcommand: cli.command.name(),
        config_path: cli.config.as_deref(),
        resolved_config: prepared.resolved.clone(),
        config_hash: prepared.hash.clone(),
        seed: prepared.seed,
        out_dir: &out_dir,
        tool_version: env!("CARGO_PKG_VERSION"),
        timestamp_unix_ms: now_ms(),
    };
    std::fs::write(out_dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)
        .context("writing manifest.json")?;

    if workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .context("initialising worker pool")?;
    }

    let run = (prepared.run)()?;
    let passed = run.report.passed();

    let report_file = ReportFile {
        experiment: &run.report.experiment,
        seed: run.report.seed,
        config_hash: &run.report.config_hash,
        passed,
        rows: &run.report.rows,
        timestamp_unix_ms: now_ms(),
        wall_ms: run.report.wall_ms,
    };
    std::fs::write(out_dir.join("report.json"), serde_json::to_string_pretty(&report_file)?)
        .context("writing report.json")?;
    std::fs::write(out_dir.join("report.csv"), run.report.to_csv())
        .context("writing report.csv")?;
    for (figure, points) in &run.plots {
        std::fs::write(out_dir.join("plotdata").join(format!("{figure}.csv")), plot_csv(points))
            .with_context(|| format!("writing plot data {figure}"))?;
    }
    for (name, table) in &run.tables {
        std::fs::write(out_dir.join(format!("{name}.csv")), table)
            .with_context(|| format!("writing table {name}"))?;
    }

    for row in &run.report.rows {
        println!(
            "{:<52} value={:<12.6} threshold={:<12.6} {}",
            row.name, row.value, row.threshold, row.verdict
        );
    }
    println!(
        "{}: {} ({} rows, seed {}, outputs in {})",
        run.report.experiment,
        if passed { "all verdicts pass" } else { "VERDICT FAILURES" },
        run.report.rows.len(),
        run.report.seed,
        out_dir.display()
    );
    Ok(passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let no_verdict = cli.no_verdict;
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            if no_verdict {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
