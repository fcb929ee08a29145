//! Synthetic differential networks: paired scale-free structures, precision
//! matrices that differ exactly on the perturbed edges, and non-paranormal samples.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::{Dataset, DatasetCollection};
use crate::error::{Error, Result};
use crate::linalg::{max_eigenvalue, min_eigenvalue, CorrelationMatrix};

pub type EdgeSet = BTreeSet<(usize, usize)>;

/// Derive an independent stream seed from a master seed (splitmix64 finalizer).
pub fn split_seed(master: u64, stream: u64) -> u64 {
    let mut z = master
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(stream.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn ordered(i: usize, j: usize) -> (usize, usize) {
    if i < j {
        (i, j)
    } else {
        (j, i)
    }
}

/// Undirected simple graph with edges stored as `(i, j)`, `i < j`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphStructure {
    d: usize,
    edges: EdgeSet,
}

impl GraphStructure {
    pub fn new(d: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut set = EdgeSet::new();
        for (i, j) in edges {
            if i == j {
                return Err(Error::Invalid(format!("self-loop at node {i}")));
            }
            if i >= d || j >= d {
                return Err(Error::Invalid(format!("edge ({i}, {j}) out of range for d = {d}")));
            }
            set.insert(ordered(i, j));
        }
        Ok(Self { d, edges: set })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn edges(&self) -> &EdgeSet {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.edges.contains(&ordered(i, j))
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.d];
        for &(i, j) in &self.edges {
            deg[i] += 1;
            deg[j] += 1;
        }
        deg
    }

    pub fn symmetric_difference(&self, other: &GraphStructure) -> EdgeSet {
        self.edges.symmetric_difference(&other.edges).copied().collect()
    }

    fn non_edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.d {
            for j in i + 1..self.d {
                if !self.edges.contains(&(i, j)) {
                    out.push((i, j));
                }
            }
        }
        out
    }
}

/// Barabási–Albert preferential attachment.
///
/// Starts from a clique on `attach_m + 1` nodes; every later node links to
/// `attach_m` distinct existing nodes chosen with probability proportional
/// to degree. With `attach_m = 1` the result is a tree.
pub fn scale_free_graph(d: usize, attach_m: usize, seed: u64) -> Result<GraphStructure> {
    if d < 3 {
        return Err(Error::Invalid(format!("scale-free graph needs d >= 3, got {d}")));
    }
    if attach_m == 0 || attach_m >= d {
        return Err(Error::Invalid(format!(
            "attach_m must lie in [1, {}), got {attach_m}",
            d
        )));
    }
    let mut rng = rng_for(seed);
    let mut edges = EdgeSet::new();
    // each node appears once per incident edge
    let mut endpoints: Vec<usize> = Vec::new();
    for i in 0..=attach_m {
        for j in i + 1..=attach_m {
            edges.insert((i, j));
            endpoints.push(i);
            endpoints.push(j);
        }
    }
    for new in attach_m + 1..d {
        let mut targets = BTreeSet::new();
        while targets.len() < attach_m {
            targets.insert(endpoints[rng.random_range(0..endpoints.len())]);
        }
        for t in targets {
            edges.insert((t, new));
            endpoints.push(t);
            endpoints.push(new);
        }
    }
    Ok(GraphStructure { d, edges })
}

/// Delete `k/2` random edges and insert `k/2` random non-edges.
pub fn perturb_graph(g: &GraphStructure, k: usize, seed: u64) -> Result<GraphStructure> {
    if k % 2 != 0 {
        return Err(Error::Invalid(format!("change count k must be even, got {k}")));
    }
    perturb_graph_with(g, k / 2, k / 2, seed)
}

/// Delete `k_delete` edges and insert `k_insert` edges absent from `g`,
/// each set drawn uniformly without replacement.
pub fn perturb_graph_with(
    g: &GraphStructure,
    k_delete: usize,
    k_insert: usize,
    seed: u64,
) -> Result<GraphStructure> {
    let existing: Vec<(usize, usize)> = g.edges.iter().copied().collect();
    let absent = g.non_edges();
    if k_delete > existing.len() {
        return Err(Error::Invalid(format!(
            "cannot delete {k_delete} of {} edges",
            existing.len()
        )));
    }
    if k_insert > absent.len() {
        return Err(Error::Invalid(format!(
            "cannot insert {k_insert} edges, only {} pairs absent",
            absent.len()
        )));
    }
    let mut rng = rng_for(seed);
    let mut edges = g.edges.clone();
    for p in sample(&mut rng, existing.len(), k_delete) {
        edges.remove(&existing[p]);
    }
    for p in sample(&mut rng, absent.len(), k_insert) {
        edges.insert(absent[p]);
    }
    Ok(GraphStructure { d: g.d, edges })
}

#[derive(Clone, Debug)]
pub struct PrecisionPair {
    pub omega: DMatrix<f64>,
    pub omega_prime: DMatrix<f64>,
    /// Upper-triangle pairs where the two matrices differ.
    pub true_delta_support: EdgeSet,
    /// Common diagonal boost: both matrices carry `(1 + gamma) I`.
    pub gamma: f64,
}

/// Edge weights `w = sign(v) + v`, `v ~ N(0, 1)`, shared on common edges,
/// plus a common diagonal `(1 + γ)I` with `γ = max(0, −λ_min) + gamma_margin`.
pub fn build_precision_pair(
    g: &GraphStructure,
    g_prime: &GraphStructure,
    gamma_margin: f64,
    seed: u64,
) -> Result<PrecisionPair> {
    if g.d != g_prime.d {
        return Err(Error::DimensionMismatch {
            expected: g.d,
            found: g_prime.d,
        });
    }
    if !(gamma_margin > 0.0) {
        return Err(Error::Invalid(format!(
            "gamma_margin must be positive, got {gamma_margin}"
        )));
    }
    let d = g.d;
    let mut rng = rng_for(seed);
    let union: EdgeSet = g.edges.union(&g_prime.edges).copied().collect();
    let mut w = DMatrix::zeros(d, d);
    let mut w_prime = DMatrix::zeros(d, d);
    for &(i, j) in &union {
        let v: f64 = rng.sample(StandardNormal);
        let weight = v.signum() + v;
        if g.edges.contains(&(i, j)) {
            w[(i, j)] = weight;
            w[(j, i)] = weight;
        }
        if g_prime.edges.contains(&(i, j)) {
            w_prime[(i, j)] = weight;
            w_prime[(j, i)] = weight;
        }
    }
    let lowest = min_eigenvalue(&w).min(min_eigenvalue(&w_prime));
    let gamma = (-lowest).max(0.0) + gamma_margin;
    let boost = DMatrix::identity(d, d) * (1.0 + gamma);
    Ok(PrecisionPair {
        omega: w + &boost,
        omega_prime: w_prime + boost,
        true_delta_support: g.symmetric_difference(g_prime),
        gamma,
    })
}

/// Invert a precision matrix and rescale the covariance to unit diagonal.
pub fn precision_to_correlation(omega: &DMatrix<f64>) -> Result<CorrelationMatrix<f64>> {
    let cov = Cholesky::new(omega.clone())
        .ok_or(Error::SingularMatrix)?
        .inverse();
    let d = cov.nrows();
    let inv_sqrt: Vec<f64> = (0..d).map(|i| 1.0 / cov[(i, i)].sqrt()).collect();
    let corr = DMatrix::from_fn(d, d, |i, j| {
        if i == j {
            1.0
        } else {
            cov[(i, j)] * inv_sqrt[i] * inv_sqrt[j]
        }
    });
    CorrelationMatrix::new((&corr + corr.transpose()) * 0.5)
}

/// Strictly increasing marginal transforms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transform {
    /// `2 + x`
    Shift2,
    /// `2x`
    Scale2,
    /// `2^x`
    Exp2,
    /// `x³`
    Cube,
    /// `∛x`
    Cbrt,
}

impl Transform {
    pub const ALL: [Transform; 5] = [
        Transform::Shift2,
        Transform::Scale2,
        Transform::Exp2,
        Transform::Cube,
        Transform::Cbrt,
    ];

    /// The forward map `f(x)`.
    pub fn forward(self, x: f64) -> f64 {
        match self {
            Transform::Shift2 => 2.0 + x,
            Transform::Scale2 => 2.0 * x,
            Transform::Exp2 => x.exp2(),
            Transform::Cube => x * x * x,
            Transform::Cbrt => x.cbrt(),
        }
    }

    /// Observation generated from a latent Gaussian value `z`.
    ///
    /// This is `f⁻¹(z)` except for `Exp2`, whose inverse is undefined for
    /// `z ≤ 0`; there the observation is `2^z`, still strictly increasing in `z`.
    pub fn observe(self, z: f64) -> f64 {
        match self {
            Transform::Shift2 => z - 2.0,
            Transform::Scale2 => z / 2.0,
            Transform::Exp2 => z.exp2(),
            Transform::Cube => z.cbrt(),
            Transform::Cbrt => z * z * z,
        }
    }
}

impl fmt::Display for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Transform::Shift2 => "shift2",
            Transform::Scale2 => "scale2",
            Transform::Exp2 => "exp2",
            Transform::Cube => "cube",
            Transform::Cbrt => "cbrt",
        };
        f.write_str(s)
    }
}

impl FromStr for Transform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Transform::ALL
            .into_iter()
            .find(|t| t.to_string() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown transform '{s}'")))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TransformSet {
    tags: Vec<Transform>,
}

impl TransformSet {
    pub fn new(tags: Vec<Transform>) -> Self {
        Self { tags }
    }

    pub fn identity_like(d: usize, t: Transform) -> Self {
        Self { tags: vec![t; d] }
    }

    /// Each coordinate drawn uniformly from the five transforms.
    pub fn random(d: usize, seed: u64) -> Self {
        let mut rng = rng_for(seed);
        let tags = (0..d)
            .map(|_| Transform::ALL[rng.random_range(0..Transform::ALL.len())])
            .collect();
        Self { tags }
    }

    pub fn tags(&self) -> &[Transform] {
        &self.tags
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }
}

/// Lower-triangular-ish factor `L` with `L Lᵀ = Σ`; falls back to an
/// eigen square root when Cholesky fails on a singular PSD matrix.
fn gaussian_factor(sigma: &DMatrix<f64>) -> DMatrix<f64> {
    if let Some(ch) = Cholesky::new(sigma.clone()) {
        return ch.l();
    }
    let eig = SymmetricEigen::new(sigma.clone());
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots)
}

/// Latent Gaussian draws `z ~ N(0, Σ)` as an `m × d` matrix.
pub fn sample_gaussian(sigma: &CorrelationMatrix<f64>, m: usize, seed: u64) -> DMatrix<f64> {
    let d = sigma.dim();
    let factor = gaussian_factor(sigma.as_matrix());
    let mut rng = rng_for(seed);
    let mut z = DMatrix::zeros(m, d);
    for r in 0..m {
        let n = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let row = &factor * n;
        for c in 0..d {
            z[(r, c)] = row[c];
        }
    }
    z
}

/// Non-paranormal sample: Gaussian draws pushed through per-coordinate observations.
pub fn sample_npn(
    sigma: &CorrelationMatrix<f64>,
    transforms: &TransformSet,
    m: usize,
    seed: u64,
    source_id: impl Into<String>,
) -> Result<Dataset> {
    let d = sigma.dim();
    if transforms.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: transforms.len(),
        });
    }
    if m < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: m });
    }
    sigma.check_psd(1e-8)?;
    let mut x = sample_gaussian(sigma, m, seed);
    for (c, t) in transforms.tags().iter().enumerate() {
        for r in 0..m {
            x[(r, c)] = t.observe(x[(r, c)]);
        }
    }
    Dataset::new(x, source_id)
}

/// Parameters of one synthetic two-group experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticProtocol {
    pub d: usize,
    pub k_delete: usize,
    pub k_insert: usize,
    pub attach_m: usize,
    pub gamma_margin: f64,
    /// Sample size of each dataset in the first group.
    pub samples_a: Vec<usize>,
    pub samples_b: Vec<usize>,
}

impl SyntheticProtocol {
    /// `k` total changes split evenly, one dataset of `m` samples per group.
    pub fn single(d: usize, k: usize, m: usize) -> Self {
        Self::heterogeneous(d, k, &[m])
    }

    pub fn heterogeneous(d: usize, k: usize, sizes: &[usize]) -> Self {
        Self {
            d,
            k_delete: k / 2,
            k_insert: k - k / 2,
            attach_m: 1,
            gamma_margin: 0.05,
            samples_a: sizes.to_vec(),
            samples_b: sizes.to_vec(),
        }
    }

    pub fn change_count(&self) -> usize {
        self.k_delete + self.k_insert
    }

    /// Build the networks and draw every dataset from `seed`.
    pub fn generate(&self, seed: u64) -> Result<SyntheticInstance> {
        if self.samples_a.is_empty() || self.samples_b.is_empty() {
            return Err(Error::Invalid("each group needs at least one dataset".into()));
        }
        let g = scale_free_graph(self.d, self.attach_m, split_seed(seed, 0))?;
        let g_prime = perturb_graph_with(&g, self.k_delete, self.k_insert, split_seed(seed, 1))?;
        let pair = build_precision_pair(&g, &g_prime, self.gamma_margin, split_seed(seed, 2))?;
        let sigma = precision_to_correlation(&pair.omega)?;
        let sigma_prime = precision_to_correlation(&pair.omega_prime)?;

        let draw = |group: u64, sizes: &[usize], corr: &CorrelationMatrix<f64>| -> Result<_> {
            let items: Vec<(TransformSet, Dataset)> = sizes
                .par_iter()
                .enumerate()
                .map(|(s, &m)| {
                    let stream = group * 1000 + s as u64;
                    let tf = TransformSet::random(self.d, split_seed(seed, stream));
                    let id = format!("{}{}", if group == 1 { "a" } else { "b" }, s);
                    let ds = sample_npn(corr, &tf, m, split_seed(seed, stream + 500), id)?;
                    Ok((tf, ds))
                })
                .collect::<Result<_>>()?;
            let (tfs, sets): (Vec<_>, Vec<_>) = items.into_iter().unzip();
            Ok((tfs, DatasetCollection::new(sets)?))
        };
        let (transforms_a, group_a) = draw(1, &self.samples_a, &sigma)?;
        let (transforms_b, group_b) = draw(2, &self.samples_b, &sigma_prime)?;

        Ok(SyntheticInstance {
            truth: pair.true_delta_support.clone(),
            graph: g,
            graph_prime: g_prime,
            pair,
            sigma,
            sigma_prime,
            transforms_a,
            transforms_b,
            group_a,
            group_b,
            seed,
        })
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticInstance {
    pub graph: GraphStructure,
    pub graph_prime: GraphStructure,
    pub pair: PrecisionPair,
    pub sigma: CorrelationMatrix<f64>,
    pub sigma_prime: CorrelationMatrix<f64>,
    pub transforms_a: Vec<TransformSet>,
    pub transforms_b: Vec<TransformSet>,
    pub group_a: DatasetCollection,
    pub group_b: DatasetCollection,
    /// Perturbed edges, `(i, j)` with `i < j`.
    pub truth: EdgeSet,
    pub seed: u64,
}

/// Ground-truth record written next to simulated data.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TruthRecord {
    pub true_delta_support: Vec<(usize, usize)>,
    pub omega_spectra: OmegaSpectra,
    pub seeds: SeedRecord,
    pub parameters: SyntheticProtocol,
    pub transforms_a: Vec<TransformSet>,
    pub transforms_b: Vec<TransformSet>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OmegaSpectra {
    pub omega_min: f64,
    pub omega_max: f64,
    pub omega_prime_min: f64,
    pub omega_prime_max: f64,
    pub gamma: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SeedRecord {
    pub master: u64,
    pub graph: u64,
    pub perturbation: u64,
    pub weights: u64,
}

impl SyntheticInstance {
    pub fn truth_record(&self, protocol: &SyntheticProtocol) -> TruthRecord {
        TruthRecord {
            true_delta_support: self.truth.iter().copied().collect(),
            omega_spectra: OmegaSpectra {
                omega_min: min_eigenvalue(&self.pair.omega),
                omega_max: max_eigenvalue(&self.pair.omega),
                omega_prime_min: min_eigenvalue(&self.pair.omega_prime),
                omega_prime_max: max_eigenvalue(&self.pair.omega_prime),
                gamma: self.pair.gamma,
            },
            seeds: SeedRecord {
                master: self.seed,
                graph: split_seed(self.seed, 0),
                perturbation: split_seed(self.seed, 1),
                weights: split_seed(self.seed, 2),
            },
            parameters: protocol.clone(),
            transforms_a: self.transforms_a.clone(),
            transforms_b: self.transforms_b.clone(),
        }
    }
}
