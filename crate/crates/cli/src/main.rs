use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use diffpath::evaluation::Method;
use serde::{Deserialize, Serialize};

mod commands;

#[derive(Parser, Debug)]
#[command(name = "diffpath", version, about = "Differential network paths from heterogeneous data")]
struct Cli {
    /// Worker threads for the parallel parts (defaults to all cores).
    #[arg(long, global = true, env = "DIFFPATH_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "lowercase")]
enum Command {
    /// Estimate both correlation matrices, trace the path and select a model.
    Estimate(EstimateArgs),
    /// Write a synthetic two-group experiment with its ground truth.
    Simulate(SimulateArgs),
    /// Time the path against the proximal-gradient solver on synthetic data.
    Bench(BenchArgs),
    /// Re-run a command from the config.json written by an earlier run.
    #[serde(skip)]
    Replay(ReplayArgs),
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
struct EstimateArgs {
    /// JSON manifest listing the datasets of the two groups.
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Maximum number of nonzero entries before the path stops.
    #[arg(long, default_value_t = 100)]
    c: usize,
    /// Eigenvalue floor parameter of the PSD projection.
    #[arg(long, default_value_t = 1e-8)]
    mu: f64,
    /// Report the solution at this penalty instead of running stability selection.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    lambda_min: f64,
    /// Stability grid as "low:high:points:log|lin"; defaults to the path's range.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long, default_value_t = 10)]
    stars_repeats: usize,
    #[arg(long, default_value_t = 0.8)]
    stars_fraction: f64,
    #[arg(long, default_value_t = 0.001)]
    stars_threshold: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
struct SimulateArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 50)]
    d: usize,
    /// Total edge changes between the groups, split between deletions and insertions.
    #[arg(long, default_value_t = 20)]
    k: usize,
    /// Datasets per group.
    #[arg(long, default_value_t = 4)]
    datasets: usize,
    /// Samples per dataset.
    #[arg(long, default_value_t = 200)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
struct BenchArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 20)]
    d: usize,
    #[arg(long, default_value_t = 200)]
    m: usize,
    #[arg(long, default_value_t = 20)]
    k: usize,
    #[arg(long, default_value_t = 3)]
    seeds: usize,
    #[arg(long, default_value_t = 100)]
    c: usize,
    /// Solver grid as "low:high:points:log|lin"; defaults to 50 points over each path.
    #[arg(long)]
    grid: Option<String>,
    /// Comma-separated subset of path, pgd5, pgd.
    #[arg(long, value_delimiter = ',', default_value = "path,pgd5,pgd", value_parser = parse_method)]
    methods: Vec<Method>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
struct ReplayArgs {
    /// config.json from an earlier run.
    #[arg(long)]
    config: PathBuf,
    /// Write to this directory instead of the recorded one.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: diffpath::Error| e.to_string())
}

/// Echo written next to every output; `replay` reads it back.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct RunConfig {
    version: String,
    #[serde(flatten)]
    command: Command,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<diffpath::Error>() {
            return match e {
                diffpath::Error::NoStableLambda { .. } => 3,
                e if e.is_numerical() => 4,
                _ => 2,
            };
        }
    }
    2
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        anyhow::ensure!(n > 0, "--threads must be at least 1");
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let command = match cli.command {
        Command::Replay(r) => {
            let text = std::fs::read_to_string(&r.config)
                .with_context(|| format!("reading {}", r.config.display()))?;
            let mut cfg: RunConfig = serde_json::from_str(&text)
                .with_context(|| format!("parsing {}", r.config.display()))?;
            if let Some(out) = r.out {
                commands::set_out(&mut cfg.command, out);
            }
            cfg.command
        }
        c => c,
    };
    commands::execute(command)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use diffpath::evaluation::StabilityProfile;

    #[test]
    fn error_kinds_map_to_exit_codes() {
        let code = |e: diffpath::Error| exit_code(&anyhow::Error::from(e).context("while running"));
        assert_eq!(code(diffpath::Error::Invalid("x".into())), 2);
        assert_eq!(code(diffpath::Error::DimensionMismatch { expected: 3, found: 4 }), 2);
        assert_eq!(code(diffpath::Error::SingularMatrix), 4);
        assert_eq!(code(diffpath::Error::NotPsd { min_eigenvalue: -1.0 }), 4);
        let profile = StabilityProfile {
            lambdas: vec![1.0],
            instability: vec![None],
            monotone_instability: vec![None],
            chosen_lambda: None,
            threshold: 0.001,
        };
        assert_eq!(code(diffpath::Error::NoStableLambda { profile: Box::new(profile) }), 3);
        assert_eq!(exit_code(&anyhow::anyhow!("plain")), 2);
    }

    #[test]
    fn config_round_trips_through_json() {
        let cli = Cli::parse_from(["diffpath", "simulate", "--out", "x", "--d", "10"]);
        let cfg = RunConfig {
            version: "0".into(),
            command: cli.command,
        };
        let text = serde_json::to_string(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(serde_json::to_string(&back).unwrap(), text);
    }
}
