use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use matchpool::config::{ConfigFile, ModelKind, RunConfig};
use matchpool::continuum::continuum_run;
use matchpool::oracles::verify_all;
use matchpool::output::{
    batch_summary, continuum_csv, partition_csv, sweep_csv, timeseries_csv, to_json, write_file,
    BatchSummary, ContinuumReport, SweepRow,
};
use matchpool::simulation::run_batch;
use matchpool::{Error, StrategyKind, StripPartition};

/// Environment variable naming the default output directory.
const OUTPUT_DIR_ENV: &str = "MATCHPOOL_OUTPUT_DIR";

#[derive(Parser)]
#[command(
    name = "matchpool",
    version,
    about = "Two-sided dynamic matching pool simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a seeded batch of discrete simulations.
    Simulate(RunArgs),
    /// Run the deterministic mean-field model.
    Continuum(RunArgs),
    /// Run a batch for every (n, T) combination.
    Sweep(SweepArgs),
    /// Run the exact oracle sweeps; exits nonzero on any failure.
    Verify,
    /// Print the strip partition for a lifetime as CSV.
    PartitionDump {
        #[arg(long = "T")]
        lifetime: u32,
        /// Write to this file instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args, Default)]
struct Common {
    /// TOML file with defaults; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    steps: Option<u64>,
    /// accept-all, reasonable or modified.
    #[arg(long)]
    strategy: Option<StrategyKind>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Also write one time-series CSV per run.
    #[arg(long)]
    timeseries: bool,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long = "T")]
    lifetime: Option<u32>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct SweepArgs {
    /// Comma-separated entry rates.
    #[arg(long, value_delimiter = ',', required = true)]
    n: Vec<usize>,
    /// Comma-separated lifetimes.
    #[arg(long = "T", value_delimiter = ',', required = true)]
    lifetime: Vec<u32>,
    #[command(flatten)]
    common: Common,
}

enum Failure {
    Usage(String),
    Run(Error),
    Verify,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter(m) | Error::Config { message: m, .. } => Failure::Usage(m),
            other => Failure::Run(other),
        }
    }
}

fn resolve(n: Option<usize>, lifetime: Option<u32>, c: &Common) -> Result<RunConfig, Failure> {
    let file = match &c.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let flags = ConfigFile {
        n,
        lifetime,
        steps: c.steps,
        strategy: c.strategy,
        seed: c.seed,
        runs: c.runs,
        model: None,
        output_dir: c.output_dir.clone(),
        timeseries: c.timeseries.then_some(true),
    };
    let mut cfg = file.overlay(flags).resolve()?;
    if cfg.output_dir.is_none() {
        cfg.output_dir = std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from);
    }
    Ok(cfg)
}

fn print_batch(s: &BatchSummary) {
    let fmt = |x: Option<f64>| x.map(|v| format!("{v:.2}")).unwrap_or_else(|| "-".into());
    println!("run  seed  avg_population  loss/T  loss_matched/T");
    for (i, r) in s.runs.iter().enumerate() {
        println!(
            "{:>3}  {:>4}  {:>14.1}  {:>6}  {:>14}",
            i + 1,
            r.seed,
            r.avg_population,
            fmt(r.loss_over_t),
            fmt(r.loss_matched_over_t)
        );
    }
    println!(
        "mean population {:.1} ± {:.2}%",
        s.population.mean, s.population.half_range_pct
    );
    if let Some(l) = s.loss_over_t {
        println!("mean loss/T {:.2} ± {:.2}%", l.mean, l.half_range_pct);
    }
}

fn simulate(cfg: &RunConfig) -> Result<(), Failure> {
    let results = run_batch(cfg)?;
    let summary = batch_summary(cfg, &results)?;
    print_batch(&summary);
    if let Some(dir) = &cfg.output_dir {
        write_file(&dir.join("summary.json"), &to_json(&summary)?)?;
        if cfg.timeseries {
            for r in &results {
                let path = dir.join(format!("timeseries_seed{}.csv", r.seed));
                write_file(&path, &timeseries_csv(&r.series))?;
            }
        }
    }
    Ok(())
}

fn continuum(mut cfg: RunConfig) -> Result<(), Failure> {
    cfg.model = ModelKind::Continuum;
    let summary = continuum_run(&cfg)?;
    let fmt = |x: Option<f64>| x.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into());
    println!("average population {:.2}", summary.avg_population);
    println!("average loss/T {}", fmt(summary.loss_over_t));
    println!(
        "average loss/T (matched) {}",
        fmt(summary.loss_matched_over_t)
    );
    match summary.converged_at {
        Some(s) => println!("converged at step {s}"),
        None => println!("not converged"),
    }
    if let Some(dir) = &cfg.output_dir {
        let report = ContinuumReport::new(&cfg, &summary);
        write_file(&dir.join("continuum.json"), &to_json(&report)?)?;
        if cfg.timeseries {
            write_file(&dir.join("continuum.csv"), &continuum_csv(&summary))?;
        }
    }
    Ok(())
}

fn sweep(args: &SweepArgs) -> Result<(), Failure> {
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    let mut out_dir = None;
    for &n in &args.n {
        for &t in &args.lifetime {
            let cfg = resolve(Some(n), Some(t), &args.common)?;
            let summary = batch_summary(&cfg, &run_batch(&cfg)?)?;
            rows.push(SweepRow::from(&summary));
            out_dir = cfg.output_dir.clone();
            summaries.push(summary);
        }
    }
    let table = sweep_csv(&rows);
    print!("{table}");
    if let Some(dir) = out_dir {
        write_file(&dir.join("sweep.csv"), &table)?;
        write_file(&dir.join("sweep.json"), &to_json(&summaries)?)?;
    }
    Ok(())
}

fn verify() -> Result<(), Failure> {
    let outcomes = verify_all()?;
    for o in &outcomes {
        let tag = if o.passed { "PASS" } else { "FAIL" };
        println!("{tag} {}: {}", o.name, o.detail);
    }
    if outcomes.iter().all(|o| o.passed) {
        Ok(())
    } else {
        Err(Failure::Verify)
    }
}

fn partition_dump(lifetime: u32, output: Option<&Path>) -> Result<(), Failure> {
    let csv = partition_csv(&StripPartition::build(lifetime)?);
    match output {
        Some(path) => write_file(path, &csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => resolve(a.n, a.lifetime, &a.common).and_then(|c| simulate(&c)),
        Command::Continuum(a) => resolve(a.n, a.lifetime, &a.common).and_then(continuum),
        Command::Sweep(a) => sweep(a),
        Command::Verify => verify(),
        Command::PartitionDump { lifetime, output } => partition_dump(*lifetime, output.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
        Err(Failure::Verify) => {
            eprintln!("verification failed");
            ExitCode::FAILURE
        }
    }
}
