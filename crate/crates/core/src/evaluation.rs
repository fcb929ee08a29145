//! Precision/recall along a path, stability-based selection of `λ`, and the
//! timing harness used for benchmarks.

use std::collections::BTreeSet;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use log::info;
use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::{estimate_correlation, DatasetCollection, EIGEN_FLOOR};
use crate::datagen::{rng_for, split_seed, EdgeSet, SyntheticProtocol};
use crate::error::{Error, Result};
use crate::linalg::VecIndex;
use crate::path::{compute_path, PathOptions, SolutionPath, SparseDelta};
use crate::reference::{proximal_gradient_solve, SolveOptions};

/// Upper-triangle pairs of a set of vec indices.
pub fn upper_pairs(active: &[VecIndex], d: usize) -> EdgeSet {
    active
        .iter()
        .map(|e| e.pair(d))
        .filter(|&(i, j)| i < j)
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PRPoint {
    pub lambda: f64,
    pub precision: f64,
    pub recall: f64,
    pub n_selected: usize,
    pub true_positives: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PRCurve {
    pub points: Vec<PRPoint>,
    pub ground_truth_size: usize,
}

impl PRCurve {
    /// Build from `(λ, selected pairs)` items; precision is 1 for an empty selection.
    pub fn from_supports<'a>(
        items: impl IntoIterator<Item = (f64, &'a EdgeSet)>,
        truth: &EdgeSet,
    ) -> Result<Self> {
        if truth.is_empty() {
            return Err(Error::Invalid("precision/recall needs a non-empty truth set".into()));
        }
        let points = items
            .into_iter()
            .map(|(lambda, selected)| {
                let tp = selected.intersection(truth).count();
                let n = selected.len();
                PRPoint {
                    lambda,
                    precision: if n == 0 { 1.0 } else { tp as f64 / n as f64 },
                    recall: tp as f64 / truth.len() as f64,
                    n_selected: n,
                    true_positives: tp,
                }
            })
            .collect();
        Ok(Self {
            points,
            ground_truth_size: truth.len(),
        })
    }

    pub fn max_recall(&self) -> f64 {
        self.points.iter().map(|p| p.recall).fold(0.0, f64::max)
    }

    /// Best precision among points reaching at least `recall`.
    pub fn interpolated_precision(&self, recall: f64) -> Option<f64> {
        self.points
            .iter()
            .filter(|p| p.recall >= recall)
            .map(|p| p.precision)
            .reduce(f64::max)
    }
}

/// One point per knot. The selection at a knot is the active set of the
/// segment just below it; at the final knot it is the knot's own support,
/// so a hit that broke the budget is never counted.
pub fn precision_recall(path: &SolutionPath<f64>, truth: &EdgeSet) -> Result<PRCurve> {
    let d = path.dim();
    let last = path.knots().len() - 1;
    let supports: Vec<(f64, EdgeSet)> = path
        .knots()
        .iter()
        .enumerate()
        .map(|(t, k)| {
            let sel = if t == last {
                k.delta.upper_support().into_iter().collect()
            } else {
                upper_pairs(&k.active, d)
            };
            (k.lambda, sel)
        })
        .collect();
    PRCurve::from_supports(supports.iter().map(|(l, s)| (*l, s)), truth)
}

/// Area under the interpolated-precision envelope:
/// `Σ (r_i − r_{i−1}) · max{p : recall ≥ r_i}` over distinct recall levels.
pub fn pr_area(curve: &PRCurve) -> f64 {
    let mut levels: Vec<f64> = curve.points.iter().map(|p| p.recall).collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    let mut area = 0.0;
    let mut prev = 0.0;
    for r in levels {
        if r <= 0.0 {
            continue;
        }
        let p = curve.interpolated_precision(r).unwrap_or(0.0);
        area += (r - prev) * p;
        prev = r;
    }
    area
}

/// Upper-triangle selection of the last knot whose segment keeps at most
/// `budget` nonzero vec entries.
pub fn support_within_budget(path: &SolutionPath<f64>, budget: usize) -> EdgeSet {
    let d = path.dim();
    let last = path.knots().len() - 1;
    let mut best = EdgeSet::new();
    for (t, k) in path.knots().iter().enumerate() {
        if t == last {
            if k.delta.nnz() <= budget {
                best = k.delta.upper_support().into_iter().collect();
            }
        } else if k.active.len() <= budget {
            best = upper_pairs(&k.active, d);
        } else {
            break;
        }
    }
    best
}

/// Grid of candidate `λ` values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub low: f64,
    pub high: f64,
    pub points: usize,
    pub log: bool,
}

impl GridSpec {
    /// Values in decreasing order.
    pub fn values(&self) -> Vec<f64> {
        let n = self.points;
        if n == 1 {
            return vec![self.high];
        }
        let mut v: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 / (n - 1) as f64;
                if self.log {
                    (self.low.ln() + t * (self.high.ln() - self.low.ln())).exp()
                } else {
                    self.low + t * (self.high - self.low)
                }
            })
            .collect();
        v[0] = self.low;
        v[n - 1] = self.high;
        v.reverse();
        v
    }
}

impl FromStr for GridSpec {
    type Err = Error;

    /// `low:high:n:log` or `low:high:n:lin`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Invalid(format!("grid must look like 'a:b:n:log|lin', got '{s}'"));
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 4 {
            return Err(bad());
        }
        let low: f64 = parts[0].parse().map_err(|_| bad())?;
        let high: f64 = parts[1].parse().map_err(|_| bad())?;
        let points: usize = parts[2].parse().map_err(|_| bad())?;
        let log = match parts[3] {
            "log" => true,
            "lin" => false,
            _ => return Err(bad()),
        };
        if !(low > 0.0 || (!log && low >= 0.0)) || !(high > low) || points == 0 {
            return Err(Error::Invalid(format!(
                "grid needs 0 < a < b (a >= 0 for lin) and n >= 1, got '{s}'"
            )));
        }
        Ok(Self {
            low,
            high,
            points,
            log,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityProfile {
    /// Decreasing.
    pub lambdas: Vec<f64>,
    /// `None` where some subsample path does not reach that `λ`.
    pub instability: Vec<Option<f64>>,
    /// Running supremum from the largest `λ` down.
    pub monotone_instability: Vec<Option<f64>>,
    pub chosen_lambda: Option<f64>,
    pub threshold: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StarsOptions {
    pub repeats: usize,
    pub fraction: f64,
    pub threshold: f64,
    /// Decreasing grid; `None` spans the full-data path on a log scale.
    pub grid: Option<Vec<f64>>,
    pub default_grid_points: usize,
    pub max_active: usize,
    pub mu: f64,
    pub seed: u64,
}

impl Default for StarsOptions {
    fn default() -> Self {
        Self {
            repeats: 10,
            fraction: 0.8,
            threshold: 0.001,
            grid: None,
            default_grid_points: 50,
            max_active: 100,
            mu: EIGEN_FLOOR,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct StarsResult {
    pub chosen_lambda: f64,
    pub delta: SparseDelta<f64>,
    pub profile: StabilityProfile,
    pub path: SolutionPath<f64>,
}

/// Correlation estimates for both groups followed by the path.
pub fn fit_path(
    group_a: &DatasetCollection,
    group_b: &DatasetCollection,
    max_active: usize,
    mu: f64,
) -> Result<SolutionPath<f64>> {
    if group_a.dim() != group_b.dim() {
        return Err(Error::DimensionMismatch {
            expected: group_a.dim(),
            found: group_b.dim(),
        });
    }
    let (sa, sb) = rayon::join(
        || estimate_correlation::<f64>(group_a, mu),
        || estimate_correlation::<f64>(group_b, mu),
    );
    compute_path(
        &sa?,
        &sb?,
        PathOptions {
            max_active,
            lambda_min: 0.0,
        },
    )
}

fn subsample(coll: &DatasetCollection, fraction: f64, seed: u64) -> Result<DatasetCollection> {
    let sets = coll
        .datasets()
        .iter()
        .enumerate()
        .map(|(s, ds)| {
            let m = ds.len();
            let keep = ((fraction * m as f64).ceil() as usize).min(m);
            if keep < 2 {
                return Err(Error::InsufficientSamples { needed: 2, got: keep });
            }
            let mut rng = rng_for(split_seed(seed, s as u64));
            let mut rows = sample(&mut rng, m, keep).into_vec();
            rows.sort_unstable();
            ds.select_rows(&rows)
        })
        .collect::<Result<Vec<_>>>()?;
    DatasetCollection::new(sets)
}

/// Default grid for selection: log-spaced over the covered range of `path`.
pub fn default_grid(path: &SolutionPath<f64>, points: usize) -> Vec<f64> {
    let high = path.first_lambda();
    let low = if path.last_lambda() > 0.0 {
        path.last_lambda()
    } else {
        high * 1e-3
    };
    if !(high > low) {
        return vec![high];
    }
    GridSpec {
        low,
        high,
        points,
        log: true,
    }
    .values()
}

/// Stability-based choice of `λ`: the smallest grid value whose running
/// maximum instability (from the largest `λ` down) stays within the threshold.
pub fn stars_select(
    group_a: &DatasetCollection,
    group_b: &DatasetCollection,
    opts: &StarsOptions,
) -> Result<StarsResult> {
    if opts.repeats == 0 {
        return Err(Error::Invalid("stars repeats must be positive".into()));
    }
    if !(opts.fraction > 0.0 && opts.fraction <= 1.0) {
        return Err(Error::Invalid(format!(
            "stars fraction must lie in (0, 1], got {}",
            opts.fraction
        )));
    }
    let path = fit_path(group_a, group_b, opts.max_active, opts.mu)?;
    let d = path.dim();
    let mut grid = match &opts.grid {
        Some(g) if !g.is_empty() => g.clone(),
        Some(_) => return Err(Error::Invalid("lambda grid is empty".into())),
        None => default_grid(&path, opts.default_grid_points),
    };
    grid.sort_by(|a, b| b.total_cmp(a));

    let selections: Vec<Vec<Option<EdgeSet>>> = (0..opts.repeats)
        .into_par_iter()
        .map(|r| {
            let rs = split_seed(opts.seed, r as u64);
            let a = subsample(group_a, opts.fraction, split_seed(rs, 0))?;
            let b = subsample(group_b, opts.fraction, split_seed(rs, 1))?;
            let sub = fit_path(&a, &b, opts.max_active, opts.mu)?;
            grid.iter()
                .map(|&lam| match sub.interpolate(lam) {
                    Ok(delta) => Ok(Some(delta.upper_support().into_iter().collect())),
                    Err(Error::OutOfRange { .. }) => Ok(None),
                    Err(e) => Err(e),
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let pairs = (d * (d - 1) / 2).max(1) as f64;
    let reps = opts.repeats as f64;
    let instability: Vec<Option<f64>> = (0..grid.len())
        .map(|g| {
            let mut counts = std::collections::BTreeMap::<(usize, usize), usize>::new();
            for sel in &selections {
                for &p in sel[g].as_ref()? {
                    *counts.entry(p).or_default() += 1;
                }
            }
            let total: f64 = counts
                .values()
                .map(|&c| {
                    let theta = c as f64 / reps;
                    2.0 * theta * (1.0 - theta)
                })
                .sum();
            Some(total / pairs)
        })
        .collect();

    let mut monotone = Vec::with_capacity(grid.len());
    let mut sup = 0.0f64;
    let mut covered = true;
    let mut chosen = None;
    for (g, ins) in instability.iter().enumerate() {
        let usable = covered && ins.is_some() && grid[g] >= path.last_lambda();
        if !usable {
            covered = false;
            monotone.push(None);
            continue;
        }
        sup = sup.max(ins.expect("checked"));
        monotone.push(Some(sup));
        if sup <= opts.threshold {
            chosen = Some(grid[g]);
        }
    }
    let profile = StabilityProfile {
        lambdas: grid,
        instability,
        monotone_instability: monotone,
        chosen_lambda: chosen,
        threshold: opts.threshold,
    };
    let Some(chosen_lambda) = chosen else {
        return Err(Error::NoStableLambda {
            profile: Box::new(profile),
        });
    };
    info!("stability selection chose lambda = {chosen_lambda}");
    Ok(StarsResult {
        chosen_lambda,
        delta: path.interpolate(chosen_lambda)?,
        profile,
        path,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Exact path.
    Path,
    /// Five accelerated proximal-gradient iterations per grid value.
    Pgd5,
    /// Proximal gradient run to convergence per grid value.
    Pgd,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Path, Method::Pgd5, Method::Pgd];

    pub fn name(self) -> &'static str {
        match self {
            Method::Path => "path",
            Method::Pgd5 => "pgd5",
            Method::Pgd => "pgd",
        }
    }

    pub fn solver_options(self) -> SolveOptions {
        match self {
            Method::Pgd5 => SolveOptions {
                max_iter: 5,
                tol: 0.0,
                accelerate: true,
            },
            _ => SolveOptions {
                max_iter: 20_000,
                tol: 1e-8,
                accelerate: true,
            },
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown method '{s}' (expected path, pgd5 or pgd)")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchSpec {
    pub d: usize,
    pub m: usize,
    pub k: usize,
    pub n_seeds: usize,
    pub c: usize,
    /// `None`: 50 log-spaced values over each seed's path range.
    pub lambda_grid: Option<Vec<f64>>,
    pub methods: Vec<Method>,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub method: Method,
    pub d: usize,
    pub m: usize,
    pub seed: u64,
    pub wall_ms: f64,
    /// Knots for the path, grid size for the iterative solvers.
    pub knots: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PRRecord {
    pub method: Method,
    pub seed: u64,
    pub curve: PRCurve,
    pub area: f64,
}

#[derive(Clone, Debug, Default)]
pub struct BenchOutput {
    pub timings: Vec<TimingRow>,
    pub curves: Vec<PRRecord>,
}

/// PR curve of the solver on a grid of `λ` values.
pub fn solver_curve(
    sigma: &crate::linalg::CorrelationMatrix<f64>,
    sigma_prime: &crate::linalg::CorrelationMatrix<f64>,
    grid: &[f64],
    opts: SolveOptions,
    truth: &EdgeSet,
) -> Result<PRCurve> {
    let supports = grid
        .iter()
        .map(|&lam| {
            let r = proximal_gradient_solve(sigma, sigma_prime, lam, opts)?;
            let sel: EdgeSet = SparseDelta::from_dense(&r.delta).upper_support().into_iter().collect();
            Ok((lam, sel))
        })
        .collect::<Result<Vec<_>>>()?;
    PRCurve::from_supports(supports.iter().map(|(l, s)| (*l, s)), truth)
}

/// Run every method on `n_seeds` synthetic instances. Seeds run one after
/// another so wall times are not distorted by contention.
pub fn timing_benchmark(spec: &BenchSpec) -> Result<BenchOutput> {
    if spec.n_seeds == 0 || spec.methods.is_empty() {
        return Err(Error::Invalid("benchmark needs at least one seed and one method".into()));
    }
    let protocol = SyntheticProtocol::single(spec.d, spec.k, spec.m);
    let mut out = BenchOutput::default();
    for s in 0..spec.n_seeds {
        let seed = split_seed(spec.seed, s as u64);
        let inst = protocol.generate(seed)?;
        let sigma = estimate_correlation::<f64>(&inst.group_a, EIGEN_FLOOR)?;
        let sigma_prime = estimate_correlation::<f64>(&inst.group_b, EIGEN_FLOOR)?;
        let opts = PathOptions {
            max_active: spec.c,
            lambda_min: 0.0,
        };
        let start = Instant::now();
        let path = compute_path(&sigma, &sigma_prime, opts)?;
        let path_ms = start.elapsed().as_secs_f64() * 1e3;
        let grid = spec
            .lambda_grid
            .clone()
            .unwrap_or_else(|| default_grid(&path, 50));

        for &method in &spec.methods {
            let (wall_ms, knots, curve) = match method {
                Method::Path => (path_ms, path.knots().len(), precision_recall(&path, &inst.truth)?),
                _ => {
                    let start = Instant::now();
                    let curve =
                        solver_curve(&sigma, &sigma_prime, &grid, method.solver_options(), &inst.truth)?;
                    (start.elapsed().as_secs_f64() * 1e3, grid.len(), curve)
                }
            };
            out.timings.push(TimingRow {
                method,
                d: spec.d,
                m: spec.m,
                seed,
                wall_ms,
                knots,
            });
            out.curves.push(PRRecord {
                method,
                seed,
                area: pr_area(&curve),
                curve,
            });
        }
    }
    Ok(out)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Csv {
        path: "<output>".into(),
        message: e.to_string(),
    }
}

pub const TIMING_HEADER: [&str; 6] = ["method", "d", "m", "seed", "wall_ms", "knots"];

pub fn write_timing_csv<W: Write>(rows: &[TimingRow], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(TIMING_HEADER).map_err(csv_err)?;
    for r in rows {
        wr.write_record([
            r.method.name().to_string(),
            r.d.to_string(),
            r.m.to_string(),
            r.seed.to_string(),
            format!("{:.3}", r.wall_ms),
            r.knots.to_string(),
        ])
        .map_err(csv_err)?;
    }
    wr.flush().map_err(|e| csv_err(e.into()))
}

pub fn write_pr_csv<W: Write>(records: &[PRRecord], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["method", "seed", "lambda", "precision", "recall", "n_selected"])
        .map_err(csv_err)?;
    for rec in records {
        for p in &rec.curve.points {
            wr.write_record([
                rec.method.name().to_string(),
                rec.seed.to_string(),
                p.lambda.to_string(),
                p.precision.to_string(),
                p.recall.to_string(),
                p.n_selected.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    wr.flush().map_err(|e| csv_err(e.into()))
}

pub fn write_stability_csv<W: Write>(profile: &StabilityProfile, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["lambda", "instability", "monotone_instability"])
        .map_err(csv_err)?;
    let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for (g, &lam) in profile.lambdas.iter().enumerate() {
        wr.write_record([
            lam.to_string(),
            fmt(profile.instability[g]),
            fmt(profile.monotone_instability[g]),
        ])
        .map_err(csv_err)?;
    }
    wr.flush().map_err(|e| csv_err(e.into()))
}

/// Edge sets selected along a path, keyed by knot.
pub fn selections(path: &SolutionPath<f64>) -> Vec<BTreeSet<(usize, usize)>> {
    path.knots()
        .iter()
        .map(|k| upper_pairs(&k.active, path.dim()))
        .collect()
}
