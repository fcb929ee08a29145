//! Kronecker-structured Hessian of the D-trace loss and the incrementally
//! maintained inverse of its active block.
//!
//! The Hessian `Γ = ½(Σ ⊗ Σ′ + Σ′ ⊗ Σ)` is `d² × d²` and is never formed.
//! Entries, columns and sparse products are evaluated directly from the two
//! `d × d` correlation matrices, so memory stays `O(d²)` plus the active block.

use std::fmt;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

/// Position in `vec(A)`, the column-major stacking of a `d × d` matrix:
/// `e = i + d·j` for entry `(i, j)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VecIndex(pub usize);

impl VecIndex {
    #[inline]
    pub fn from_pair(i: usize, j: usize, d: usize) -> Self {
        assert!(i < d && j < d, "entry ({i}, {j}) out of range for d = {d}");
        VecIndex(i + d * j)
    }

    #[inline]
    pub fn pair(self, d: usize) -> (usize, usize) {
        (self.0 % d, self.0 / d)
    }

    /// Index of the transposed entry `(j, i)`.
    #[inline]
    pub fn transpose(self, d: usize) -> Self {
        let (i, j) = self.pair(d);
        VecIndex(j + d * i)
    }

    #[inline]
    pub fn is_diagonal(self, d: usize) -> bool {
        let (i, j) = self.pair(d);
        i == j
    }

    #[inline]
    pub fn get(self) -> usize {
        self.0
    }
}

impl fmt::Display for VecIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Symmetric `d × d` matrix with unit diagonal and entries in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationMatrix<T: Real> {
    entries: DMatrix<T>,
}

impl<T: Real> CorrelationMatrix<T> {
    /// Validates symmetry (exact), the unit diagonal, and the entry range.
    pub fn new(entries: DMatrix<T>) -> Result<Self> {
        let d = entries.nrows();
        if entries.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: entries.ncols(),
            });
        }
        if d == 0 {
            return Err(Error::Invalid("correlation matrix must be non-empty".into()));
        }
        if entries.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("correlation matrix".into()));
        }
        let asym = max_asymmetry(&entries);
        if asym > 0.0 {
            return Err(Error::NotSymmetric { max_asymmetry: asym });
        }
        for i in 0..d {
            if entries[(i, i)] != T::one() {
                return Err(Error::Invalid(format!(
                    "diagonal entry {i} is {} instead of 1",
                    entries[(i, i)]
                )));
            }
        }
        if entries.iter().any(|&x| x.abs() > T::one()) {
            return Err(Error::Invalid("correlation entry outside [-1, 1]".into()));
        }
        Ok(Self { entries })
    }

    /// Symmetrize, clamp to `[-1, 1]` and force the unit diagonal before validating.
    pub(crate) fn from_raw(mut m: DMatrix<T>) -> Result<Self> {
        let d = m.nrows();
        for j in 0..d {
            for i in 0..j {
                let v = lit::<T>(0.5) * (m[(i, j)] + m[(j, i)]);
                let v = v.clamp(-T::one(), T::one());
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
            m[(j, j)] = T::one();
        }
        Self::new(m)
    }

    pub fn identity(d: usize) -> Self {
        Self {
            entries: DMatrix::identity(d, d),
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.entries[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<T> {
        &self.entries
    }

    pub fn into_matrix(self) -> DMatrix<T> {
        self.entries
    }

    pub fn min_eigenvalue(&self) -> T {
        min_eigenvalue(&self.entries)
    }

    /// Fails with `NotPsd` when the smallest eigenvalue is below `-tol`.
    pub fn check_psd(&self, tol: f64) -> Result<()> {
        let min = self.min_eigenvalue();
        if min < -lit::<T>(tol) {
            return Err(Error::NotPsd {
                min_eigenvalue: min.to_f64_lossy(),
            });
        }
        Ok(())
    }
}

pub(crate) fn max_asymmetry<T: Real>(m: &DMatrix<T>) -> f64 {
    let d = m.nrows();
    let mut worst = 0.0f64;
    for j in 0..d {
        for i in 0..j {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs().to_f64_lossy());
        }
    }
    worst
}

pub(crate) fn min_eigenvalue<T: Real>(m: &DMatrix<T>) -> T {
    SymmetricEigen::new(m.clone()).eigenvalues.min()
}

pub(crate) fn max_eigenvalue<T: Real>(m: &DMatrix<T>) -> T {
    SymmetricEigen::new(m.clone()).eigenvalues.max()
}

/// Implicit `Γ = ½(Σ ⊗ Σ′ + Σ′ ⊗ Σ)` over column-major vec indices.
///
/// With `e ↔ (i, j)` and `f ↔ (k, l)`:
/// `Γ[e, f] = ½(Σ[i,k]·Σ′[j,l] + Σ′[i,k]·Σ[j,l])`.
#[derive(Clone, Debug)]
pub struct GammaOperator<T: Real> {
    sigma: DMatrix<T>,
    sigma_prime: DMatrix<T>,
}

impl<T: Real> GammaOperator<T> {
    pub fn new(sigma: &CorrelationMatrix<T>, sigma_prime: &CorrelationMatrix<T>) -> Result<Self> {
        if sigma.dim() != sigma_prime.dim() {
            return Err(Error::DimensionMismatch {
                expected: sigma.dim(),
                found: sigma_prime.dim(),
            });
        }
        Ok(Self {
            sigma: sigma.as_matrix().clone(),
            sigma_prime: sigma_prime.as_matrix().clone(),
        })
    }

    pub fn dim(&self) -> usize {
        self.sigma.nrows()
    }

    /// Length of the vectorized space, `d²`.
    pub fn vec_len(&self) -> usize {
        self.dim() * self.dim()
    }

    pub fn sigma(&self) -> &DMatrix<T> {
        &self.sigma
    }

    pub fn sigma_prime(&self) -> &DMatrix<T> {
        &self.sigma_prime
    }

    #[inline]
    fn check(&self, e: VecIndex) {
        assert!(
            e.0 < self.vec_len(),
            "vec index {} out of range for d = {}",
            e.0,
            self.dim()
        );
    }

    pub fn entry(&self, e: VecIndex, f: VecIndex) -> T {
        self.check(e);
        self.check(f);
        let d = self.dim();
        let (i, j) = e.pair(d);
        let (k, l) = f.pair(d);
        lit::<T>(0.5)
            * (self.sigma[(i, k)] * self.sigma_prime[(j, l)]
                + self.sigma_prime[(i, k)] * self.sigma[(j, l)])
    }

    /// Column `Γ[:, e]` in `O(d²)`.
    pub fn column(&self, e: VecIndex) -> Vec<T> {
        let mut out = vec![T::zero(); self.vec_len()];
        self.accumulate(e, T::one(), &mut out);
        out
    }

    /// `out += coef · Γ[:, f]`.
    fn accumulate(&self, f: VecIndex, coef: T, out: &mut [T]) {
        self.check(f);
        let d = self.dim();
        let (k, l) = f.pair(d);
        let half = lit::<T>(0.5) * coef;
        let s_k = self.sigma.column(k);
        let sp_k = self.sigma_prime.column(k);
        for j in 0..d {
            let p = half * self.sigma_prime[(j, l)];
            let q = half * self.sigma[(j, l)];
            let col = &mut out[d * j..d * (j + 1)];
            for (i, o) in col.iter_mut().enumerate() {
                *o += p * s_k[i] + q * sp_k[i];
            }
        }
    }

    /// `Γ · x` for a sparse vector `x`, in `O(nnz · d²)`.
    pub fn apply_sparse(&self, x: &[(VecIndex, T)]) -> Vec<T> {
        let mut out = vec![T::zero(); self.vec_len()];
        for &(f, coef) in x {
            if coef != T::zero() {
                self.accumulate(f, coef, &mut out);
            }
        }
        out
    }

    /// `(Γ[:, A]·a, Γ[:, A]·b)` in a single sweep over the active columns.
    pub fn apply_active_pair(&self, active: &[VecIndex], a: &[T], b: &[T]) -> (Vec<T>, Vec<T>) {
        assert_eq!(active.len(), a.len());
        assert_eq!(active.len(), b.len());
        let d = self.dim();
        let n = self.vec_len();
        let mut ga = vec![T::zero(); n];
        let mut gb = vec![T::zero(); n];
        let half = lit::<T>(0.5);
        for (idx, &f) in active.iter().enumerate() {
            self.check(f);
            let (k, l) = f.pair(d);
            let s_k = self.sigma.column(k);
            let sp_k = self.sigma_prime.column(k);
            for j in 0..d {
                let sp_jl = half * self.sigma_prime[(j, l)];
                let s_jl = half * self.sigma[(j, l)];
                let (pa, qa) = (a[idx] * sp_jl, a[idx] * s_jl);
                let (pb, qb) = (b[idx] * sp_jl, b[idx] * s_jl);
                let range = d * j..d * (j + 1);
                for ((oa, ob), i) in ga[range.clone()]
                    .iter_mut()
                    .zip(gb[range].iter_mut())
                    .zip(0..d)
                {
                    let (x, y) = (s_k[i], sp_k[i]);
                    *oa += pa * x + qa * y;
                    *ob += pb * x + qb * y;
                }
            }
        }
        (ga, gb)
    }

    /// Dense `Γ[A, A]`.
    pub fn block(&self, active: &[VecIndex]) -> DMatrix<T> {
        let n = active.len();
        DMatrix::from_fn(n, n, |r, c| self.entry(active[r], active[c]))
    }
}

/// Inverse of `Γ[A, A]` maintained through block updates as `A` grows and shrinks.
#[derive(Clone, Debug)]
pub struct ActiveInverse<T: Real> {
    active: Vec<VecIndex>,
    block: DMatrix<T>,
    inv: DMatrix<T>,
    condition_estimate: T,
}

/// Schur complements below this fraction of the diagonal count as singular.
pub const SCHUR_TOLERANCE: f64 = 1e-10;
/// Infinity-norm condition estimates above this count as singular.
pub const CONDITION_LIMIT: f64 = 1e12;

impl<T: Real> Default for ActiveInverse<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> ActiveInverse<T> {
    pub fn new() -> Self {
        Self {
            active: Vec::new(),
            block: DMatrix::zeros(0, 0),
            inv: DMatrix::zeros(0, 0),
            condition_estimate: T::one(),
        }
    }

    pub fn active(&self) -> &[VecIndex] {
        &self.active
    }

    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    pub fn inverse(&self) -> &DMatrix<T> {
        &self.inv
    }

    /// The assembled `Γ[A, A]` in active order.
    pub fn block(&self) -> &DMatrix<T> {
        &self.block
    }

    pub fn condition_estimate(&self) -> T {
        self.condition_estimate
    }

    pub fn position(&self, e: VecIndex) -> Option<usize> {
        self.active.iter().position(|&a| a == e)
    }

    pub fn contains(&self, e: VecIndex) -> bool {
        self.position(e).is_some()
    }

    /// `(Γ[A, A])⁻¹ · x`.
    pub fn solve(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.len());
        let n = self.len();
        let mut out = vec![T::zero(); n];
        for c in 0..n {
            let xc = x[c];
            if xc == T::zero() {
                continue;
            }
            let col = self.inv.column(c);
            for (o, &v) in out.iter_mut().zip(col.iter()) {
                *o += v * xc;
            }
        }
        out
    }

    /// Append `e` to the active set. On failure the state is left untouched.
    pub fn extend(&mut self, op: &GammaOperator<T>, e: VecIndex) -> Result<()> {
        assert!(!self.contains(e), "vec index {e} is already active");
        let n = self.len();
        let u: Vec<T> = self.active.iter().map(|&f| op.entry(f, e)).collect();
        let g = op.entry(e, e);
        let w = self.solve(&u);
        let mut schur = g;
        for (ui, wi) in u.iter().zip(&w) {
            schur -= *ui * *wi;
        }
        let scale = g.abs().max(T::one());
        if !(schur.abs() > T::tol(SCHUR_TOLERANCE) * scale) {
            return Err(Error::SingularActiveSet { index: e });
        }
        let inv_schur = T::one() / schur;

        let mut inv = DMatrix::zeros(n + 1, n + 1);
        for c in 0..n {
            for r in 0..n {
                inv[(r, c)] = self.inv[(r, c)] + w[r] * w[c] * inv_schur;
            }
            inv[(n, c)] = -w[c] * inv_schur;
            inv[(c, n)] = -w[c] * inv_schur;
        }
        inv[(n, n)] = inv_schur;

        let mut block = self.block.clone().resize(n + 1, n + 1, T::zero());
        for (r, &ur) in u.iter().enumerate() {
            block[(r, n)] = ur;
            block[(n, r)] = ur;
        }
        block[(n, n)] = g;

        let cond = inf_norm(&block) * inf_norm(&inv);
        if !(cond <= lit::<T>(CONDITION_LIMIT)) {
            return Err(Error::SingularActiveSet { index: e });
        }
        self.active.push(e);
        self.block = block;
        self.inv = inv;
        self.condition_estimate = cond;
        Ok(())
    }

    /// Remove `e` from the active set (partitioned-inverse downdate).
    pub fn shrink(&mut self, e: VecIndex) {
        let p = self
            .position(e)
            .unwrap_or_else(|| panic!("vec index {e} is not active"));
        let n = self.len();
        let pivot = self.inv[(p, p)];
        let keep: Vec<usize> = (0..n).filter(|&r| r != p).collect();
        let m = keep.len();
        let inv = DMatrix::from_fn(m, m, |r, c| {
            let (rr, cc) = (keep[r], keep[c]);
            self.inv[(rr, cc)] - self.inv[(rr, p)] * self.inv[(p, cc)] / pivot
        });
        let block = DMatrix::from_fn(m, m, |r, c| self.block[(keep[r], keep[c])]);
        self.active.remove(p);
        self.condition_estimate = if m == 0 {
            T::one()
        } else {
            inf_norm(&block) * inf_norm(&inv)
        };
        self.block = block;
        self.inv = inv;
    }

    /// `‖inv · Γ[A, A] − I‖_∞` (max-entry norm).
    pub fn residual(&self) -> T {
        let n = self.len();
        let prod = &self.inv * &self.block;
        let mut worst = T::zero();
        for c in 0..n {
            for r in 0..n {
                let target = if r == c { T::one() } else { T::zero() };
                worst = worst.max((prod[(r, c)] - target).abs());
            }
        }
        worst
    }

    /// One Newton–Schulz step `X ← X(2I − ΓX)`, squaring the residual.
    pub fn refine(&mut self) {
        let n = self.len();
        if n == 0 {
            return;
        }
        let gx = &self.block * &self.inv;
        let two_minus = DMatrix::<T>::identity(n, n) * lit::<T>(2.0) - gx;
        let refined = &self.inv * two_minus;
        // keep the stored inverse exactly symmetric
        self.inv = (&refined + refined.transpose()) * lit::<T>(0.5);
    }
}

fn inf_norm<T: Real>(m: &DMatrix<T>) -> T {
    m.row_iter()
        .map(|row| row.iter().fold(T::zero(), |acc, &x| acc + x.abs()))
        .fold(T::zero(), |a, b| a.max(b))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Random correlation matrix from a Gram matrix of random unit vectors.
    pub(crate) fn random_correlation(d: usize, seed: u64) -> CorrelationMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::<f64>::from_fn(d, d + 3, |_, _| rng.random_range(-1.0..1.0));
        let g = &x * x.transpose();
        let s = DMatrix::from_fn(d, d, |i, j| g[(i, j)] / (g[(i, i)] * g[(j, j)]).sqrt());
        CorrelationMatrix::from_raw(s).unwrap()
    }

    /// Materialized Kronecker product, row-major over (block row, inner row).
    fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
        let (n, m) = (a.nrows(), b.nrows());
        DMatrix::from_fn(n * m, n * m, |r, c| {
            a[(r / m, c / m)] * b[(r % m, c % m)]
        })
    }

    fn explicit_gamma(s: &CorrelationMatrix<f64>, sp: &CorrelationMatrix<f64>) -> DMatrix<f64> {
        (kron(s.as_matrix(), sp.as_matrix()) + kron(sp.as_matrix(), s.as_matrix())) * 0.5
    }

    #[test]
    fn vec_index_roundtrip() {
        let d = 5;
        for i in 0..d {
            for j in 0..d {
                let e = VecIndex::from_pair(i, j, d);
                assert_eq!(e.pair(d), (i, j));
                assert_eq!(e.transpose(d).transpose(d), e);
            }
        }
        assert_eq!(VecIndex::from_pair(1, 2, 3), VecIndex(7));
    }

    #[test]
    fn identity_gamma_entries() {
        let id = CorrelationMatrix::<f64>::identity(2);
        let op = GammaOperator::new(&id, &id).unwrap();
        let e00 = VecIndex::from_pair(0, 0, 2);
        let e11 = VecIndex::from_pair(1, 1, 2);
        assert_eq!(op.entry(e00, e00), 1.0);
        assert_eq!(op.entry(e00, e11), 0.0);
        for e in 0..4 {
            let col = op.column(VecIndex(e));
            for (f, &x) in col.iter().enumerate() {
                assert_eq!(x, if e == f { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn entries_match_materialized_kronecker() {
        for d in 2..=6 {
            let s = random_correlation(d, 10 + d as u64);
            let sp = random_correlation(d, 20 + d as u64);
            let op = GammaOperator::new(&s, &sp).unwrap();
            let dense = explicit_gamma(&s, &sp);
            for e in 0..d * d {
                for f in 0..d * d {
                    // materialized layout: row (j, i) ↔ block j, inner i, i.e. index e itself
                    // because the Kronecker row index of vec entry (i, j) is j·d + i = e.
                    let got = op.entry(VecIndex(e), VecIndex(f));
                    assert!((got - dense[(e, f)]).abs() <= 1e-12, "d={d} e={e} f={f}");
                }
            }
        }
    }

    #[test]
    fn gamma_symmetries() {
        let d = 4;
        let s = random_correlation(d, 1);
        let sp = random_correlation(d, 2);
        let op = GammaOperator::new(&s, &sp).unwrap();
        for e in 0..d * d {
            for f in 0..d * d {
                let (e, f) = (VecIndex(e), VecIndex(f));
                assert_eq!(op.entry(e, f), op.entry(f, e));
                let x = op.entry(e.transpose(d), f.transpose(d));
                assert!((op.entry(e, f) - x).abs() <= 1e-15);
            }
        }
    }

    #[test]
    fn column_matches_entry_loop_and_exchange() {
        let d = 3;
        let s = random_correlation(d, 3);
        let sp = random_correlation(d, 4);
        let op = GammaOperator::new(&s, &sp).unwrap();
        for e in 0..d * d {
            let e = VecIndex(e);
            let col = op.column(e);
            for f in 0..d * d {
                assert!((col[f] - op.entry(VecIndex(f), e)).abs() <= 1e-14);
            }
            let partner = op.column(e.transpose(d));
            for f in 0..d * d {
                let ft = VecIndex(f).transpose(d).0;
                assert!((partner[ft] - col[f]).abs() <= 1e-14);
            }
        }
    }

    #[test]
    fn apply_sparse_and_pair_agree_with_columns() {
        let d = 4;
        let s = random_correlation(d, 5);
        let sp = random_correlation(d, 6);
        let op = GammaOperator::new(&s, &sp).unwrap();
        let active = [VecIndex(1), VecIndex(6), VecIndex(15)];
        let a = [0.3, -1.2, 2.0];
        let b = [1.0, 0.5, -0.25];
        let (ga, gb) = op.apply_active_pair(&active, &a, &b);
        let xa: Vec<_> = active.iter().copied().zip(a).collect();
        let sa = op.apply_sparse(&xa);
        for e in 0..d * d {
            let mut want_a = 0.0;
            let mut want_b = 0.0;
            for (k, &f) in active.iter().enumerate() {
                want_a += op.entry(VecIndex(e), f) * a[k];
                want_b += op.entry(VecIndex(e), f) * b[k];
            }
            assert!((ga[e] - want_a).abs() < 1e-13);
            assert!((gb[e] - want_b).abs() < 1e-13);
            assert!((sa[e] - want_a).abs() < 1e-13);
        }
    }

    #[test]
    #[should_panic]
    fn entry_out_of_range_panics() {
        let id = CorrelationMatrix::<f64>::identity(2);
        let op = GammaOperator::new(&id, &id).unwrap();
        op.entry(VecIndex(4), VecIndex(0));
    }

    #[test]
    fn extend_from_empty_is_reciprocal() {
        let s = random_correlation(3, 7);
        let sp = random_correlation(3, 8);
        let op = GammaOperator::new(&s, &sp).unwrap();
        let mut ai = ActiveInverse::new();
        let e = VecIndex(5);
        ai.extend(&op, e).unwrap();
        assert_eq!(ai.inverse()[(0, 0)], 1.0 / op.entry(e, e));
    }

    fn dense_inverse(op: &GammaOperator<f64>, active: &[VecIndex]) -> DMatrix<f64> {
        op.block(active).try_inverse().unwrap()
    }

    fn max_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).amax()
    }

    #[test]
    fn grow_to_four_matches_dense_inverse() {
        let s = random_correlation(3, 9);
        let sp = random_correlation(3, 10);
        let op = GammaOperator::new(&s, &sp).unwrap();
        let mut ai = ActiveInverse::new();
        for e in [0, 4, 5, 7] {
            ai.extend(&op, VecIndex(e)).unwrap();
            let want = dense_inverse(&op, ai.active());
            assert!(max_diff(ai.inverse(), &want) < 1e-8);
        }
    }

    #[test]
    fn duplicated_row_is_singular() {
        let ones = CorrelationMatrix::new(DMatrix::from_element(3, 3, 1.0)).unwrap();
        let op = GammaOperator::new(&ones, &ones).unwrap();
        let mut ai = ActiveInverse::new();
        ai.extend(&op, VecIndex(0)).unwrap();
        match ai.extend(&op, VecIndex(4)) {
            Err(Error::SingularActiveSet { index }) => assert_eq!(index, VecIndex(4)),
            other => panic!("expected singular, got {other:?}"),
        }
        assert_eq!(ai.len(), 1);
    }

    #[test]
    fn shrink_cases() {
        let s = random_correlation(3, 11);
        let sp = random_correlation(3, 12);
        let op = GammaOperator::new(&s, &sp).unwrap();

        let mut one = ActiveInverse::new();
        one.extend(&op, VecIndex(2)).unwrap();
        one.shrink(VecIndex(2));
        assert!(one.is_empty());

        let mut ai = ActiveInverse::new();
        for e in [0, 3, 8] {
            ai.extend(&op, VecIndex(e)).unwrap();
        }
        let before = ai.inverse().clone();
        ai.extend(&op, VecIndex(4)).unwrap();
        ai.shrink(VecIndex(4));
        assert!(max_diff(ai.inverse(), &before) < 1e-10);

        let mut five = ActiveInverse::new();
        for e in [0, 1, 4, 6, 8] {
            five.extend(&op, VecIndex(e)).unwrap();
        }
        five.shrink(VecIndex(4));
        let want = dense_inverse(&op, five.active());
        assert!(max_diff(five.inverse(), &want) < 1e-8);
    }

    #[test]
    #[should_panic]
    fn shrink_inactive_panics() {
        let mut ai = ActiveInverse::<f64>::new();
        ai.shrink(VecIndex(0));
    }

    #[test]
    fn refine_reduces_residual() {
        let s = random_correlation(4, 13);
        let sp = random_correlation(4, 14);
        let op = GammaOperator::new(&s, &sp).unwrap();
        let mut ai = ActiveInverse::new();
        for e in [0, 2, 5, 9, 11] {
            ai.extend(&op, VecIndex(e)).unwrap();
        }
        ai.refine();
        assert!(ai.residual() < 1e-12);
    }

    #[test]
    fn correlation_validation() {
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(matches!(
            CorrelationMatrix::new(bad),
            Err(Error::NotSymmetric { .. })
        ));
        let diag = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        assert!(CorrelationMatrix::new(diag).is_err());
        let ok = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        assert!(CorrelationMatrix::new(ok).is_ok());
    }

    #[test]
    fn generic_over_f32() {
        let m = DMatrix::<f32>::from_row_slice(2, 2, &[1.0, 0.25, 0.25, 1.0]);
        let c = CorrelationMatrix::new(m).unwrap();
        let op = GammaOperator::new(&c, &c).unwrap();
        let mut ai = ActiveInverse::new();
        ai.extend(&op, VecIndex(1)).unwrap();
        ai.extend(&op, VecIndex(2)).unwrap();
        assert!(ai.residual() < 1e-5);
    }

    #[test]
    fn random_extend_shrink_sequences_stay_accurate() {
        let d = 4;
        let s = random_correlation(d, 15);
        let sp = random_correlation(d, 16);
        let op = GammaOperator::new(&s, &sp).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut ai = ActiveInverse::new();
        for _ in 0..50 {
            let e = VecIndex(rng.random_range(0..d * d));
            if ai.contains(e) {
                ai.shrink(e);
            } else {
                let _ = ai.extend(&op, e);
            }
            assert!(ai.residual() <= 1e-8);
        }
    }
}
