use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use diffpath::covariance::estimate_correlation;
use diffpath::datagen::SyntheticProtocol;
use diffpath::evaluation::{
    stars_select, timing_benchmark, write_pr_csv, write_stability_csv, write_timing_csv, BenchSpec,
    GridSpec, StabilityProfile, StarsOptions,
};
use diffpath::io::{
    dataset_csv_bytes, edge_tsv_bytes, load_groups, matrix_csv_bytes, path_json_bytes, write_atomic,
    write_json, Manifest, ManifestEntry, ManifestGroup,
};
use diffpath::{compute_path, Error, PathOptions, SparseDelta};
use log::info;
use serde::Serialize;

use crate::{BenchArgs, Command, EstimateArgs, RunConfig, SimulateArgs};

pub(crate) fn set_out(command: &mut Command, out: PathBuf) {
    match command {
        Command::Estimate(a) => a.out = out,
        Command::Simulate(a) => a.out = out,
        Command::Bench(a) => a.out = out,
        Command::Replay(_) => {}
    }
}

pub(crate) fn execute(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Estimate(a) => estimate(a),
        Command::Simulate(a) => simulate(a),
        Command::Bench(a) => bench(a),
        Command::Replay(_) => anyhow::bail!("a recorded config cannot itself be a replay"),
    }
}

fn prepare_out(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))
}

fn echo_config(dir: &Path, command: Command) -> anyhow::Result<()> {
    let cfg = RunConfig {
        version: env!("CARGO_PKG_VERSION").to_string(),
        command,
    };
    write_json(&cfg, &dir.join("config.json"))?;
    Ok(())
}

fn parse_grid(spec: &Option<String>) -> anyhow::Result<Option<Vec<f64>>> {
    Ok(match spec {
        Some(s) => Some(s.parse::<GridSpec>()?.values()),
        None => None,
    })
}

fn csv_bytes(write: impl FnOnce(&mut Vec<u8>) -> diffpath::Result<()>) -> diffpath::Result<Vec<u8>> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok(buf)
}

#[derive(Serialize)]
struct Selection {
    lambda: f64,
    /// "user" or "stability".
    rule: &'static str,
    edges: usize,
}

fn estimate(mut args: EstimateArgs) -> anyhow::Result<()> {
    if !(args.mu >= 0.0) {
        return Err(Error::Invalid(format!("--mu must be non-negative, got {}", args.mu)).into());
    }
    let groups = load_groups(&args.manifest)?;
    args.manifest = fs::canonicalize(&args.manifest).unwrap_or(args.manifest);
    let out = args.out.clone();
    prepare_out(&out)?;
    echo_config(&out, Command::Estimate(args.clone()))?;

    let names = groups.group_a.variable_names().to_vec();
    if groups.group_b.variable_names() != names {
        log::warn!("variable names differ between groups; using those of '{}'", groups.labels[0]);
    }
    let sigma = estimate_correlation::<f64>(&groups.group_a, args.mu)?;
    let sigma_prime = estimate_correlation::<f64>(&groups.group_b, args.mu)?;
    write_atomic(&out.join("sigma.csv"), &matrix_csv_bytes(sigma.as_matrix(), &names)?)?;
    write_atomic(&out.join("sigma_prime.csv"), &matrix_csv_bytes(sigma_prime.as_matrix(), &names)?)?;

    let opts = PathOptions {
        max_active: args.c,
        lambda_min: args.lambda_min,
    };
    let path = compute_path(&sigma, &sigma_prime, opts)?;
    write_atomic(&out.join("path.json"), &path_json_bytes(&path)?)?;
    info!("path: {} knots, {}", path.knots().len(), path.termination());

    let (lambda, delta, rule): (f64, SparseDelta<f64>, _) = match args.lambda {
        Some(lambda) => {
            if !(lambda >= 0.0) {
                return Err(Error::Invalid(format!("--lambda must be non-negative, got {lambda}")).into());
            }
            (lambda, path.interpolate(lambda)?, "user")
        }
        None => {
            let opts = StarsOptions {
                repeats: args.stars_repeats,
                fraction: args.stars_fraction,
                threshold: args.stars_threshold,
                grid: parse_grid(&args.grid)?,
                max_active: args.c,
                mu: args.mu,
                seed: args.seed,
                ..StarsOptions::default()
            };
            let write_profile = |p: &StabilityProfile| -> anyhow::Result<()> {
                let bytes = csv_bytes(|b| write_stability_csv(p, b))?;
                write_atomic(&out.join("stability.csv"), &bytes)?;
                Ok(())
            };
            match stars_select(&groups.group_a, &groups.group_b, &opts) {
                Ok(r) => {
                    write_profile(&r.profile)?;
                    (r.chosen_lambda, r.delta, "stability")
                }
                Err(Error::NoStableLambda { profile }) => {
                    write_profile(&profile)?;
                    return Err(Error::NoStableLambda { profile }.into());
                }
                Err(e) => return Err(e.into()),
            }
        }
    };
    write_atomic(&out.join("edges.tsv"), &edge_tsv_bytes(&delta, &names))?;
    let selection = Selection {
        lambda,
        rule,
        edges: delta.upper_support().len(),
    };
    write_json(&selection, &out.join("selection.json"))?;
    info!("selected {} edges at lambda {lambda}", selection.edges);
    Ok(())
}

fn simulate(args: SimulateArgs) -> anyhow::Result<()> {
    if args.d < 3 || args.datasets == 0 || args.samples < 2 {
        return Err(Error::Invalid(format!(
            "need d >= 3, at least one dataset and 2 samples, got d={} datasets={} samples={}",
            args.d, args.datasets, args.samples
        ))
        .into());
    }
    let protocol = SyntheticProtocol::heterogeneous(args.d, args.k, &vec![args.samples; args.datasets]);
    let inst = protocol.generate(args.seed)?;
    let out = args.out.clone();
    prepare_out(&out)?;

    let mut groups = Vec::new();
    for (label, coll) in [("a", &inst.group_a), ("b", &inst.group_b)] {
        let mut entries = Vec::new();
        for (s, ds) in coll.datasets().iter().enumerate() {
            let file = format!("group_{label}_{s}.csv");
            write_atomic(&out.join(&file), &dataset_csv_bytes(ds)?)?;
            entries.push(ManifestEntry {
                path: file.into(),
                source_id: ds.source_id().to_string(),
            });
        }
        groups.push(ManifestGroup {
            label: label.to_string(),
            datasets: entries,
        });
    }
    write_json(&Manifest { groups }, &out.join("manifest.json"))?;
    write_json(&inst.truth_record(&protocol), &out.join("truth.json"))?;
    echo_config(&out, Command::Simulate(args))?;
    Ok(())
}

fn bench(args: BenchArgs) -> anyhow::Result<()> {
    if args.methods.is_empty() {
        return Err(Error::Invalid("--methods lists nothing".into()).into());
    }
    let spec = BenchSpec {
        d: args.d,
        m: args.m,
        k: args.k,
        n_seeds: args.seeds,
        c: args.c,
        lambda_grid: parse_grid(&args.grid)?,
        methods: args.methods.clone(),
        seed: args.seed,
    };
    let out = args.out.clone();
    prepare_out(&out)?;
    echo_config(&out, Command::Bench(args))?;
    let result = timing_benchmark(&spec)?;
    write_atomic(&out.join("timing.csv"), &csv_bytes(|b| write_timing_csv(&result.timings, b))?)?;
    write_atomic(&out.join("pr.csv"), &csv_bytes(|b| write_pr_csv(&result.curves, b))?)?;
    Ok(())
}
