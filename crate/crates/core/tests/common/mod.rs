#![allow(dead_code)]

use diffpath::datagen::{EdgeSet, SyntheticProtocol};
use diffpath::{estimate_correlation, CorrelationMatrix};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Normalized Gram matrix of `d + extra` random directions.
pub fn random_correlation(d: usize, extra: usize, seed: u64) -> CorrelationMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = DMatrix::<f64>::from_fn(d, d + extra, |_, _| rng.random_range(-1.0..1.0));
    let g = &x * x.transpose();
    CorrelationMatrix::new(DMatrix::from_fn(d, d, |i, j| {
        if i == j {
            1.0
        } else {
            g[(i.min(j), i.max(j))] / (g[(i, i)] * g[(j, j)]).sqrt()
        }
    }))
    .unwrap()
}

pub struct Instance {
    pub sigma: CorrelationMatrix<f64>,
    pub sigma_prime: CorrelationMatrix<f64>,
    pub truth: EdgeSet,
}

pub fn instance(d: usize, k: usize, sizes: &[usize], seed: u64) -> Instance {
    let inst = SyntheticProtocol::heterogeneous(d, k, sizes).generate(seed).unwrap();
    Instance {
        sigma: estimate_correlation(&inst.group_a, 1e-8).unwrap(),
        sigma_prime: estimate_correlation(&inst.group_b, 1e-8).unwrap(),
        truth: inst.truth,
    }
}
