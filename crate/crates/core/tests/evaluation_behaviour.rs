mod common;

use std::time::Instant;

use common::instance;
use diffpath::datagen::SyntheticProtocol;
use diffpath::evaluation::{
    default_grid, precision_recall, solver_curve, stars_select, timing_benchmark, BenchSpec, Method,
    StarsOptions,
};
use diffpath::{compute_path, PathOptions};

#[test]
fn early_path_is_precise() {
    let (mut early_precision, mut n) = (0.0, 0);
    for seed in 0..20 {
        let inst = instance(50, 20, &[1000], 300 + seed);
        let path = compute_path(&inst.sigma, &inst.sigma_prime, PathOptions::default()).unwrap();
        let curve = precision_recall(&path, &inst.truth).unwrap();
        for p in curve.points.iter().filter(|p| p.n_selected > 0 && p.recall <= 0.5) {
            assert_eq!(p.true_positives as f64, p.precision * p.n_selected as f64);
            early_precision += p.precision;
            n += 1;
        }
    }
    let mean = early_precision / n as f64;
    assert!(mean >= 0.8, "mean precision while recall <= 0.5: {mean}");
}

#[test]
fn knot_count_on_the_standard_protocol() {
    let spec = BenchSpec {
        d: 50,
        m: 1000,
        k: 20,
        n_seeds: 3,
        c: 100,
        lambda_grid: None,
        methods: vec![Method::Path],
        seed: 8,
    };
    let out = timing_benchmark(&spec).unwrap();
    assert_eq!(out.timings.len(), 3);
    for row in &out.timings {
        assert!((20..=100).contains(&row.knots), "{} knots", row.knots);
    }
}

#[test]
fn stability_selection_on_synthetic_benchmark() {
    let (mut size, mut recall) = (0.0, 0.0);
    for seed in 0..10 {
        let inst = SyntheticProtocol::single(50, 20, 1000).generate(500 + seed).unwrap();
        // with only 1225 pairs the default 0.001 keeps two or three edges
        let opts = StarsOptions {
            seed,
            threshold: 0.005,
            ..Default::default()
        };
        let r = stars_select(&inst.group_a, &inst.group_b, &opts).unwrap();
        let support: Vec<_> = r.delta.upper_support();
        let hits = support.iter().filter(|p| inst.truth.contains(p)).count();
        size += support.len() as f64;
        recall += hits as f64 / inst.truth.len() as f64;
    }
    size /= 10.0;
    recall /= 10.0;
    assert!((10.0..=60.0).contains(&size), "mean support {size}");
    assert!(recall >= 0.4, "mean recall {recall}");
}

#[test]
fn stability_selection_is_deterministic() {
    let inst = SyntheticProtocol::heterogeneous(15, 6, &[120, 80]).generate(4).unwrap();
    let opts = StarsOptions {
        repeats: 6,
        seed: 99,
        threshold: 0.05,
        ..Default::default()
    };
    let a = stars_select(&inst.group_a, &inst.group_b, &opts).unwrap();
    let b = stars_select(&inst.group_a, &inst.group_b, &opts).unwrap();
    assert_eq!(a.profile, b.profile);
    assert_eq!(a.delta, b.delta);
    for ins in a.profile.instability.iter().flatten() {
        assert!((0.0..=0.5).contains(ins));
    }
}

#[test]
fn path_is_faster_than_converged_sweep_at_d100() {
    let inst = instance(100, 20, &[1000], 41);
    let start = Instant::now();
    let path = compute_path(&inst.sigma, &inst.sigma_prime, PathOptions::default()).unwrap();
    let path_time = start.elapsed();
    let grid = default_grid(&path, 50);
    let start = Instant::now();
    solver_curve(&inst.sigma, &inst.sigma_prime, &grid, Method::Pgd.solver_options(), &inst.truth).unwrap();
    let sweep_time = start.elapsed();
    assert!(path_time < sweep_time, "path {path_time:?} vs sweep {sweep_time:?}");
}
