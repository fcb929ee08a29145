use diffpath::datagen::{
    build_precision_pair, perturb_graph, precision_to_correlation, sample_npn, scale_free_graph,
    SyntheticProtocol, TransformSet,
};
use diffpath::{estimate_correlation, CorrelationMatrix, DatasetCollection};
use nalgebra::{DMatrix, SymmetricEigen};

#[test]
fn preferential_attachment_has_hubs() {
    let mut ratio = 0.0;
    for seed in 0..20 {
        let g = scale_free_graph(200, 1, seed).unwrap();
        let deg = g.degrees();
        assert_eq!(deg.iter().sum::<usize>(), 2 * g.edge_count());
        let mean = deg.iter().sum::<usize>() as f64 / 200.0;
        ratio += *deg.iter().max().unwrap() as f64 / mean;
    }
    ratio /= 20.0;
    assert!(ratio >= 3.0, "top degree / mean degree = {ratio}");
}

#[test]
fn twenty_changes_every_seed() {
    for seed in 0..100 {
        let g = scale_free_graph(50, 1, seed).unwrap();
        let h = perturb_graph(&g, 20, seed + 1000).unwrap();
        assert_eq!(g.symmetric_difference(&h).len(), 20);
        assert_eq!(g.edge_count(), h.edge_count());
    }
}

#[test]
fn precision_pairs_differ_exactly_on_perturbed_edges() {
    for seed in 0..10 {
        let g = scale_free_graph(50, 1, seed).unwrap();
        let h = perturb_graph(&g, 20, seed + 1).unwrap();
        let pair = build_precision_pair(&g, &h, 0.05, seed + 2).unwrap();
        for om in [&pair.omega, &pair.omega_prime] {
            assert!(SymmetricEigen::new(om.clone()).eigenvalues.min() >= 0.05 - 1e-10);
        }
        let diff = &pair.omega - &pair.omega_prime;
        let mut support = std::collections::BTreeSet::new();
        for i in 0..50 {
            assert_eq!(diff[(i, i)], 0.0);
            for j in i + 1..50 {
                if diff[(i, j)] != 0.0 {
                    support.insert((i, j));
                }
            }
        }
        assert_eq!(support, pair.true_delta_support);
        assert_eq!(support.len(), 20);
        let c = precision_to_correlation(&pair.omega).unwrap();
        assert!((0..50).all(|i| c.get(i, i) == 1.0));
    }
}

#[test]
fn sine_of_tau_recovers_latent_correlation() {
    let sigma = CorrelationMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.6, 0.6, 1.0])).unwrap();
    let ds = sample_npn(&sigma, &TransformSet::random(2, 5), 20_000, 6, "mc").unwrap();
    let est = estimate_correlation::<f64>(&DatasetCollection::new(vec![ds]).unwrap(), 1e-8).unwrap();
    assert!((est.get(0, 1) - 0.6).abs() <= 0.03, "estimate {}", est.get(0, 1));
}

#[test]
fn protocol_outputs_are_reproducible_and_sized() {
    let p = SyntheticProtocol::heterogeneous(20, 6, &[50, 80]);
    let a = p.generate(3).unwrap();
    let b = p.generate(3).unwrap();
    assert_eq!(a.truth, b.truth);
    assert_eq!(a.group_a.datasets()[1].samples(), b.group_a.datasets()[1].samples());
    assert_eq!(a.group_b.total_samples(), 130);
    assert_eq!(a.truth.len(), 6);
    let c = p.generate(4).unwrap();
    assert_ne!(a.group_a.datasets()[0].samples(), c.group_a.datasets()[0].samples());
}
