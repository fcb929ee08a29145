//! Timing-based checks, kept in one test so nothing else competes for the CPU.

mod common;

use std::time::Instant;

use common::{instance, random_correlation};
use diffpath::{compute_path, GammaOperator, PathOptions, VecIndex};

fn best_of<F: FnMut()>(runs: usize, mut f: F) -> f64 {
    (0..runs)
        .map(|_| {
            let t = Instant::now();
            f();
            t.elapsed().as_secs_f64()
        })
        .fold(f64::INFINITY, f64::min)
}

fn per_knot_seconds(d: usize) -> f64 {
    let inst = instance(d, 20, &[2000], 17);
    let opts = PathOptions {
        max_active: 60,
        lambda_min: 0.0,
    };
    let knots = compute_path(&inst.sigma, &inst.sigma_prime, opts).unwrap().knots().len();
    best_of(3, || {
        compute_path(&inst.sigma, &inst.sigma_prime, opts).unwrap();
    }) / knots as f64
}

fn column_seconds(d: usize) -> f64 {
    let s = random_correlation(d, 2, 1);
    let sp = random_correlation(d, 2, 2);
    let op = GammaOperator::new(&s, &sp).unwrap();
    let cols = 200;
    best_of(5, || {
        for e in 0..cols {
            std::hint::black_box(op.column(VecIndex((e * 7919) % (d * d))));
        }
    }) / cols as f64
}

#[test]
fn cost_grows_with_the_square_of_the_dimension() {
    let knot_ratio = per_knot_seconds(200) / per_knot_seconds(100);
    assert!((2.5..=6.0).contains(&knot_ratio), "per-knot time ratio {knot_ratio}");
    let column_ratio = column_seconds(400) / column_seconds(200);
    assert!((2.0..=8.0).contains(&column_ratio), "column time ratio {column_ratio}");
}
