//! Rank-based correlation estimation for heterogeneous dataset collections.
//!
//! Each dataset yields a Kendall's tau matrix; the collection's taus are
//! averaged with weights `m_s / m`, mapped through `sin(π/2 · τ)`, and the
//! result is projected onto the positive semi-definite correlation matrices.

use std::f64::consts::FRAC_PI_2;

use log::{debug, warn};
use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kendall::{counts_from_ranks, dense_ranks};
use crate::linalg::{max_asymmetry, CorrelationMatrix};
use crate::scalar::{lit, Real};

/// Smallest eigenvalue kept by [`project_psd`].
pub const EIGEN_FLOOR: f64 = 1e-8;
/// Fraction of tied pairs above which a data-quality warning is logged.
pub const TIE_WARNING_FRACTION: f64 = 0.01;

/// `m_s × d` sample matrix from one source.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    samples: DMatrix<f64>,
    source_id: String,
    variable_names: Vec<String>,
}

impl Dataset {
    pub fn new(samples: DMatrix<f64>, source_id: impl Into<String>) -> Result<Self> {
        let names = (0..samples.ncols()).map(|j| format!("x{j}")).collect();
        Self::with_names(samples, source_id, names)
    }

    pub fn with_names(
        samples: DMatrix<f64>,
        source_id: impl Into<String>,
        variable_names: Vec<String>,
    ) -> Result<Self> {
        if samples.nrows() < 2 {
            return Err(Error::InsufficientSamples {
                needed: 2,
                got: samples.nrows(),
            });
        }
        if samples.ncols() == 0 {
            return Err(Error::Invalid("dataset has no variables".into()));
        }
        if variable_names.len() != samples.ncols() {
            return Err(Error::DimensionMismatch {
                expected: samples.ncols(),
                found: variable_names.len(),
            });
        }
        let source_id = source_id.into();
        if samples.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("dataset {source_id}")));
        }
        Ok(Self {
            samples,
            source_id,
            variable_names,
        })
    }

    pub fn samples(&self) -> &DMatrix<f64> {
        &self.samples
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn variable_names(&self) -> &[String] {
        &self.variable_names
    }

    /// Number of samples `m_s`.
    pub fn len(&self) -> usize {
        self.samples.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.samples.ncols()
    }

    /// Rows `rows` of this dataset, keeping the source id.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let samples = self.samples.select_rows(rows);
        Self::with_names(samples, self.source_id.clone(), self.variable_names.clone())
    }
}

/// Datasets sharing one latent correlation structure.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetCollection {
    datasets: Vec<Dataset>,
}

impl DatasetCollection {
    pub fn new(datasets: Vec<Dataset>) -> Result<Self> {
        let first = datasets
            .first()
            .ok_or_else(|| Error::Invalid("dataset collection is empty".into()))?;
        let d = first.dim();
        for ds in &datasets[1..] {
            if ds.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: ds.dim(),
                });
            }
        }
        Ok(Self { datasets })
    }

    pub fn datasets(&self) -> &[Dataset] {
        &self.datasets
    }

    pub fn dim(&self) -> usize {
        self.datasets[0].dim()
    }

    pub fn total_samples(&self) -> usize {
        self.datasets.iter().map(Dataset::len).sum()
    }

    pub fn variable_names(&self) -> &[String] {
        self.datasets[0].variable_names()
    }
}

/// Symmetric matrix of Kendall's tau estimates with unit diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct TauMatrix {
    entries: DMatrix<f64>,
}

impl TauMatrix {
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        let d = entries.nrows();
        if entries.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: entries.ncols(),
            });
        }
        let asym = max_asymmetry(&entries);
        if asym > 0.0 {
            return Err(Error::NotSymmetric { max_asymmetry: asym });
        }
        if (0..d).any(|i| entries[(i, i)] != 1.0) || entries.iter().any(|x| !(x.abs() <= 1.0)) {
            return Err(Error::Invalid("tau matrix needs unit diagonal and entries in [-1, 1]".into()));
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn get(&self, k: usize, l: usize) -> f64 {
        self.entries[(k, l)]
    }
}

/// Pairwise Kendall's tau over the columns of one dataset.
pub fn tau_matrix(ds: &Dataset) -> TauMatrix {
    let d = ds.dim();
    let ranks: Vec<Vec<u32>> = (0..d)
        .into_par_iter()
        .map(|k| {
            let col: Vec<f64> = ds.samples.column(k).iter().copied().collect();
            dense_ranks(&col)
        })
        .collect();
    let pairs: Vec<(usize, usize)> = (0..d)
        .flat_map(|l| (0..l).map(move |k| (k, l)))
        .collect();
    let counts: Vec<_> = pairs
        .par_iter()
        .map(|&(k, l)| counts_from_ranks(&ranks[k], &ranks[l]))
        .collect();

    let mut entries = DMatrix::identity(d, d);
    let (mut tied, mut total) = (0u64, 0u64);
    for (&(k, l), c) in pairs.iter().zip(&counts) {
        let tau = c.tau();
        entries[(k, l)] = tau;
        entries[(l, k)] = tau;
        tied += c.tied_pairs;
        total += c.total_pairs;
    }
    if total > 0 && tied as f64 > TIE_WARNING_FRACTION * total as f64 {
        warn!(
            "dataset {}: {:.2}% of sample pairs are tied; Kendall's tau treats ties as sign 0",
            ds.source_id,
            100.0 * tied as f64 / total as f64
        );
    }
    TauMatrix { entries }
}

/// Sample-size weighted average `Σ_s (m_s/m) τ̂⁽ˢ⁾`.
pub fn weighted_tau(coll: &DatasetCollection) -> TauMatrix {
    let total = coll.total_samples() as f64;
    let d = coll.dim();
    let mut acc = DMatrix::<f64>::zeros(d, d);
    for ds in coll.datasets() {
        let w = ds.len() as f64 / total;
        acc += tau_matrix(ds).entries * w;
    }
    for k in 0..d {
        acc[(k, k)] = 1.0;
        for l in 0..k {
            let v = acc[(k, l)].clamp(-1.0, 1.0);
            acc[(k, l)] = v;
            acc[(l, k)] = v;
        }
    }
    TauMatrix { entries: acc }
}

/// `sin(π/2 · τ)` off the diagonal, 1 on it. Not necessarily PSD.
pub fn tau_to_correlation<T: Real>(tau: &TauMatrix) -> DMatrix<T> {
    let d = tau.dim();
    DMatrix::from_fn(d, d, |k, l| {
        if k == l {
            T::one()
        } else {
            lit((FRAC_PI_2 * tau.get(k, l)).sin())
        }
    })
}

/// Nearest-PSD surrogate by eigenvalue clipping and unit-diagonal rescaling.
///
/// Eigenvalues below `max(EIGEN_FLOOR, mu/2)` are raised to that floor, the
/// matrix is reassembled, and `D^{-1/2} M D^{-1/2}` restores the unit diagonal.
/// An input that is already PSD is returned unchanged (after symmetrization).
pub fn project_psd<T: Real>(sigma_tilde: &DMatrix<T>, mu: f64) -> Result<CorrelationMatrix<T>> {
    let d = sigma_tilde.nrows();
    if sigma_tilde.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: sigma_tilde.ncols(),
        });
    }
    if sigma_tilde.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("matrix to project".into()));
    }
    let asym = max_asymmetry(sigma_tilde);
    if asym > T::tol(1e-10).to_f64_lossy() {
        return Err(Error::NotSymmetric { max_asymmetry: asym });
    }
    if mu < 0.0 {
        return Err(Error::Invalid(format!("mu must be non-negative, got {mu}")));
    }
    let sym = (sigma_tilde + sigma_tilde.transpose()) * lit::<T>(0.5);
    let eig = SymmetricEigen::new(sym.clone());
    let scale = eig.eigenvalues.amax().max(T::one());
    if eig.eigenvalues.min() >= -T::tol(1e-12) * scale {
        return CorrelationMatrix::from_raw(sym);
    }
    let floor: T = lit(EIGEN_FLOOR.max(mu / 2.0));
    debug!("projecting onto PSD cone with eigenvalue floor {floor}");
    let clipped = eig.eigenvalues.map(|l| l.max(floor));
    let q = &eig.eigenvectors;
    let m = q * DMatrix::from_diagonal(&clipped) * q.transpose();
    let inv_sqrt: Vec<T> = (0..d).map(|i| T::one() / m[(i, i)].sqrt()).collect();
    let rescaled = DMatrix::from_fn(d, d, |i, j| m[(i, j)] * inv_sqrt[i] * inv_sqrt[j]);
    CorrelationMatrix::from_raw(rescaled)
}

/// Both stages of the estimate: before and after the PSD projection.
#[derive(Clone, Debug)]
pub struct CorrelationEstimate<T: Real> {
    pub tau: TauMatrix,
    pub pre_projection: DMatrix<T>,
    pub projected: CorrelationMatrix<T>,
}

pub fn estimate_correlation_detailed<T: Real>(
    coll: &DatasetCollection,
    mu: f64,
) -> Result<CorrelationEstimate<T>> {
    let tau = weighted_tau(coll);
    let pre_projection = tau_to_correlation::<T>(&tau);
    let projected = project_psd(&pre_projection, mu)?;
    Ok(CorrelationEstimate {
        tau,
        pre_projection,
        projected,
    })
}

/// weighted tau → sine transform → PSD projection.
pub fn estimate_correlation<T: Real>(
    coll: &DatasetCollection,
    mu: f64,
) -> Result<CorrelationMatrix<T>> {
    Ok(estimate_correlation_detailed(coll, mu)?.projected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::min_eigenvalue;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_dataset(m: usize, d: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Dataset::new(DMatrix::from_fn(m, d, |_, _| rng.random::<f64>()), format!("s{seed}")).unwrap()
    }

    fn brute_tau(x: &[f64], y: &[f64]) -> f64 {
        let m = x.len();
        let mut s = 0i64;
        for i in 0..m {
            for j in i + 1..m {
                s += ((x[i] - x[j]) * (y[i] - y[j])).signum() as i64
                    * ((x[i] != x[j] && y[i] != y[j]) as i64);
            }
        }
        s as f64 / (m * (m - 1) / 2) as f64
    }

    #[test]
    fn tau_matrix_single_column() {
        let ds = Dataset::new(DMatrix::from_column_slice(3, 1, &[1., 2., 3.]), "a").unwrap();
        assert_eq!(tau_matrix(&ds).entries(), &DMatrix::identity(1, 1));
    }

    #[test]
    fn duplicated_columns_have_tau_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let col: Vec<f64> = (0..10).map(|_| rng.random()).collect();
        let other: Vec<f64> = (0..10).map(|_| rng.random()).collect();
        let mut data = col.clone();
        data.extend(&other);
        data.extend(&col);
        let ds = Dataset::new(DMatrix::from_column_slice(10, 3, &data), "dup").unwrap();
        let t = tau_matrix(&ds);
        assert_eq!(t.get(0, 2), 1.0);
    }

    #[test]
    fn tau_matrix_matches_pairwise_brute_force() {
        let ds = random_dataset(6, 3, 11);
        let t = tau_matrix(&ds);
        for k in 0..3 {
            for l in 0..3 {
                let want = if k == l {
                    1.0
                } else {
                    let x: Vec<f64> = ds.samples().column(k).iter().copied().collect();
                    let y: Vec<f64> = ds.samples().column(l).iter().copied().collect();
                    brute_tau(&x, &y)
                };
                assert_eq!(t.get(k, l), want);
            }
        }
    }

    #[test]
    fn weighted_tau_cases() {
        let a = random_dataset(20, 3, 1);
        let single = DatasetCollection::new(vec![a.clone()]).unwrap();
        assert_eq!(weighted_tau(&single), tau_matrix(&a));

        let twice = DatasetCollection::new(vec![a.clone(), a.clone()]).unwrap();
        let w = weighted_tau(&twice);
        assert!((w.entries() - tau_matrix(&a).entries()).amax() < 1e-15);

        // constant columns give tau 0; a comonotone pair gives tau 1 on the 300-row block
        let zeros = Dataset::new(
            DMatrix::from_fn(100, 2, |i, j| if j == 0 { i as f64 } else { 0.0 }),
            "flat",
        )
        .unwrap();
        let ones = Dataset::new(DMatrix::from_fn(300, 2, |i, _| i as f64), "mono").unwrap();
        let mut taus = [0.0, 0.0];
        for (slot, ds) in taus.iter_mut().zip([&zeros, &ones]) {
            *slot = tau_matrix(ds).get(0, 1);
        }
        assert_eq!(taus, [0.0, 1.0]);
        let mixed = DatasetCollection::new(vec![zeros, ones]).unwrap();
        assert!((weighted_tau(&mixed).get(0, 1) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn mismatched_dimensions_rejected() {
        let a = random_dataset(5, 3, 1);
        let b = random_dataset(5, 4, 2);
        assert!(matches!(
            DatasetCollection::new(vec![a, b]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn sine_transform_values() {
        let tau = TauMatrix::new(DMatrix::from_row_slice(
            3,
            3,
            &[1.0, 0.0, 1.0 / 3.0, 0.0, 1.0, 1.0, 1.0 / 3.0, 1.0, 1.0],
        ))
        .unwrap();
        let s = tau_to_correlation::<f64>(&tau);
        assert_eq!(s[(0, 1)], 0.0);
        assert_eq!(s[(1, 2)], 1.0);
        assert!((s[(0, 2)] - 0.5).abs() < 1e-15);
        assert_eq!(s[(0, 0)], 1.0);
    }

    #[test]
    fn projection_cases() {
        let id = DMatrix::<f64>::identity(3, 3);
        assert_eq!(project_psd(&id, 0.0).unwrap().as_matrix(), &id);

        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 1.2, 1.2, 1.0]);
        let p = project_psd(&bad, 0.0).unwrap();
        assert!((p.as_matrix() - DMatrix::from_element(2, 2, 1.0)).amax() < 1e-7);
        assert_eq!(p.get(0, 0), 1.0);

        let ns = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.2, 1.0]);
        assert!(matches!(project_psd(&ns, 0.0), Err(Error::NotSymmetric { .. })));
    }

    #[test]
    fn projection_fixes_indefinite_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let d = 6;
            let mut m = DMatrix::<f64>::identity(d, d);
            for j in 0..d {
                for i in 0..j {
                    let v = rng.random_range(-0.95..0.95);
                    m[(i, j)] = v;
                    m[(j, i)] = v;
                }
            }
            let p = project_psd(&m, 0.0).unwrap();
            assert!(min_eigenvalue(p.as_matrix()) >= -1e-8);
            for i in 0..d {
                assert_eq!(p.get(i, i), 1.0);
            }
        }
    }

    #[test]
    fn forced_unit_diagonal() {
        let ds = random_dataset(50, 2, 8);
        let coll = DatasetCollection::new(vec![ds]).unwrap();
        let s = estimate_correlation::<f64>(&coll, 0.0).unwrap();
        assert_eq!(s.get(0, 0), 1.0);
        assert_eq!(s.get(1, 1), 1.0);
    }
}
