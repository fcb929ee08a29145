//! Exact solution path of the lasso-penalized D-trace loss.
//!
//! For `λ > 0` the estimator minimizes
//! `¼(⟨ΣΔ, ΔΣ′⟩ + ⟨Σ′Δ, ΔΣ⟩) − ⟨Δ, Σ − Σ′⟩ + λ‖Δ‖₁`.
//! Stationarity in vectorized form reads `Γ vec(Δ) + v + λν = 0` with
//! `ν ∈ ∂‖vec(Δ)‖₁` and `v = vec(Σ′ − Σ)`. On a fixed active set `A` with
//! signs `s_A` the active block solves `vec(Δ)_A = −Γ_AA⁻¹(v_A + λ s_A)`, so
//! the path is piecewise linear in `λ` and changes direction only when a
//! variable enters (hit) or a coefficient returns to zero (cross).
//!
//! Sign convention: `v` is `vec(Σ′ − Σ)`, which is what the gradient
//! `½(ΣΔΣ′ + Σ′ΔΣ) − Σ + Σ′` produces. Writing it as `vec(Σ − Σ′)` flips
//! every hitting time and disagrees with the stationarity conditions.
//!
//! Transposed entries `(i, j)` and `(j, i)` always share the same hitting and
//! crossing times; they enter and leave together so every solution is symmetric.

use std::fmt;

use log::debug;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{ActiveInverse, CorrelationMatrix, GammaOperator, VecIndex};
use crate::scalar::{lit, Real};

/// Relative margin a candidate must clear below the current knot.
pub const STRICTNESS: f64 = 1e-12;
/// Denominators smaller than this are skipped as candidates.
pub const DENOMINATOR_GUARD: f64 = 1e-12;
/// A just-changed variable may not trigger the opposite event within this relative margin.
const REENTRY_GUARD: f64 = 1e-9;
/// Inputs whose smallest eigenvalue is below `-PSD_TOLERANCE` are rejected.
pub const PSD_TOLERANCE: f64 = 1e-6;
/// Refresh the active inverse once its residual exceeds this.
const REFINE_TRIGGER: f64 = 1e-11;

/// Sparse `d × d` matrix stored as vec-indexed entries, sorted by index.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseDelta<T: Real> {
    dim: usize,
    entries: Vec<(VecIndex, T)>,
}

impl<T: Real> SparseDelta<T> {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            entries: Vec::new(),
        }
    }

    /// Drops exact zeros and sorts by index.
    pub fn from_entries(dim: usize, entries: impl IntoIterator<Item = (VecIndex, T)>) -> Self {
        let mut entries: Vec<_> = entries.into_iter().filter(|e| e.1 != T::zero()).collect();
        entries.sort_by_key(|e| e.0);
        Self { dim, entries }
    }

    pub fn from_dense(m: &DMatrix<T>) -> Self {
        let d = m.nrows();
        Self::from_entries(
            d,
            (0..d * d).map(|e| {
                let idx = VecIndex(e);
                let (i, j) = idx.pair(d);
                (idx, m[(i, j)])
            }),
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(VecIndex, T)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let e = VecIndex::from_pair(i, j, self.dim);
        self.entries
            .binary_search_by_key(&e, |x| x.0)
            .map(|p| self.entries[p].1)
            .unwrap_or_else(|_| T::zero())
    }

    pub fn to_dense(&self) -> DMatrix<T> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for &(e, x) in &self.entries {
            let (i, j) = e.pair(self.dim);
            m[(i, j)] = x;
        }
        m
    }

    /// Upper-triangle (`i < j`) support.
    pub fn upper_support(&self) -> Vec<(usize, usize)> {
        let mut s: Vec<_> = self
            .entries
            .iter()
            .map(|&(e, _)| e.pair(self.dim))
            .filter(|&(i, j)| i < j)
            .collect();
        s.sort_unstable();
        s
    }

    pub fn max_asymmetry(&self) -> T {
        let mut worst = T::zero();
        for &(e, x) in &self.entries {
            let (i, j) = e.pair(self.dim);
            worst = worst.max((x - self.get(j, i)).abs());
        }
        worst
    }

    pub fn max_abs_diff(&self, other: &SparseDelta<T>) -> T {
        assert_eq!(self.dim, other.dim);
        (self.to_dense() - other.to_dense()).amax()
    }
}

/// Why the path stopped.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Termination {
    /// `|A|` exceeded the budget `c`.
    ActiveSetLimit { size: usize },
    /// Adding `index` would make `Γ_AA` singular.
    SingularActiveSet { index: VecIndex },
    /// The next event lies at or below `lambda_min`.
    LambdaMin,
    /// No hit or cross candidate remains.
    Exhausted,
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Termination::ActiveSetLimit { size } => write!(f, "active set size {size} exceeds budget"),
            Termination::SingularActiveSet { index } => {
                write!(f, "active block singular at vec index {index}")
            }
            Termination::LambdaMin => write!(f, "reached lambda_min"),
            Termination::Exhausted => write!(f, "no further events"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    /// `index` (and its transpose `partner`, if off-diagonal) entered with `sign`.
    Hit {
        index: VecIndex,
        partner: Option<VecIndex>,
        sign: i8,
    },
    /// `index` (and `partner`) returned to zero and left the active set.
    Cross {
        index: VecIndex,
        partner: Option<VecIndex>,
    },
    Terminal { reason: Termination },
}

/// Breakpoint of the path. `delta` is the solution at `lambda`; `active` and
/// `signs` describe the segment just below it.
#[derive(Clone, Debug)]
pub struct Knot<T: Real> {
    pub lambda: T,
    pub delta: SparseDelta<T>,
    pub active: Vec<VecIndex>,
    pub signs: Vec<i8>,
    pub event: Event,
}

#[derive(Clone, Debug)]
pub struct SolutionPath<T: Real> {
    dim: usize,
    knots: Vec<Knot<T>>,
    budget_c: usize,
    lambda_min: T,
    termination: Termination,
}

impl<T: Real> SolutionPath<T> {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn knots(&self) -> &[Knot<T>] {
        &self.knots
    }

    pub fn budget(&self) -> usize {
        self.budget_c
    }

    pub fn lambda_min(&self) -> T {
        self.lambda_min
    }

    pub fn termination(&self) -> Termination {
        self.termination
    }

    /// `λ₁ = ‖Σ − Σ′‖_∞`.
    pub fn first_lambda(&self) -> T {
        self.knots[0].lambda
    }

    /// Smallest `λ` the path covers.
    pub fn last_lambda(&self) -> T {
        self.knots[self.knots.len() - 1].lambda
    }

    /// `Δ̂(λ)` as the convex combination of the bracketing knots.
    pub fn interpolate(&self, lambda: T) -> Result<SparseDelta<T>> {
        if lambda >= self.first_lambda() {
            return Ok(SparseDelta::zeros(self.dim));
        }
        let last = self.last_lambda();
        if lambda < last {
            return Err(Error::OutOfRange {
                lambda: lambda.to_f64_lossy(),
                last_covered: last.to_f64_lossy(),
            });
        }
        // knots[t].lambda > lambda >= knots[t + 1].lambda
        let t = self.knots.partition_point(|k| k.lambda > lambda) - 1;
        let (hi, lo) = (&self.knots[t], &self.knots[t + 1]);
        if lambda == lo.lambda {
            return Ok(lo.delta.clone());
        }
        let span = hi.lambda - lo.lambda;
        let w_lo = (hi.lambda - lambda) / span;
        let w_hi = (lambda - lo.lambda) / span;
        let entries = hi.active.iter().map(|&e| {
            let (i, j) = e.pair(self.dim);
            (e, w_lo * lo.delta.get(i, j) + w_hi * hi.delta.get(i, j))
        });
        Ok(SparseDelta::from_entries(self.dim, entries))
    }

    /// Midpoint of each segment `[λ_{t+1}, λ_t]`.
    pub fn segment_midpoints(&self) -> Vec<T> {
        self.knots
            .windows(2)
            .map(|w| lit::<T>(0.5) * (w[0].lambda + w[1].lambda))
            .collect()
    }
}

/// Entry event candidate from the hitting-time scan.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HitCandidate<T> {
    pub lambda: T,
    pub index: VecIndex,
    pub sign: i8,
}

/// Exit event candidate from the crossing-time scan.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CrossCandidate<T> {
    pub lambda: T,
    pub index: VecIndex,
}

/// Quantities shared by the hit and cross scans at one iteration.
struct Directions<T> {
    /// `Γ_AA⁻¹ v_A`
    a: Vec<T>,
    /// `Γ_AA⁻¹ s_A`
    b: Vec<T>,
    /// `Γ_{:,A} a`
    ga: Vec<T>,
    /// `Γ_{:,A} b`
    gb: Vec<T>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum LastChange {
    None,
    Added(VecIndex),
    Removed(VecIndex),
}

/// Mutable state of the homotopy between knots.
#[derive(Clone, Debug)]
pub struct PathState<T: Real> {
    pub t: usize,
    /// Current knot; `+∞` before the first event.
    pub lambda_t: T,
    pub inverse: ActiveInverse<T>,
    /// `s_A`, aligned with `inverse.active()`.
    pub signs: Vec<T>,
    /// `vec(Σ′ − Σ)`.
    pub v: Vec<T>,
    gamma: GammaOperator<T>,
    last_change: LastChange,
}

impl<T: Real> PathState<T> {
    pub fn new(sigma: &CorrelationMatrix<T>, sigma_prime: &CorrelationMatrix<T>) -> Result<Self> {
        let gamma = GammaOperator::new(sigma, sigma_prime)?;
        let d = gamma.dim();
        let (s, sp) = (gamma.sigma(), gamma.sigma_prime());
        let v = (0..d * d)
            .map(|e| {
                let (i, j) = VecIndex(e).pair(d);
                sp[(i, j)] - s[(i, j)]
            })
            .collect();
        Ok(Self {
            t: 0,
            lambda_t: lit(f64::INFINITY),
            inverse: ActiveInverse::new(),
            signs: Vec::new(),
            v,
            gamma,
            last_change: LastChange::None,
        })
    }

    pub fn gamma(&self) -> &GammaOperator<T> {
        &self.gamma
    }

    pub fn active(&self) -> &[VecIndex] {
        self.inverse.active()
    }

    fn directions(&self) -> Directions<T> {
        let active = self.inverse.active();
        let v_a: Vec<T> = active.iter().map(|e| self.v[e.0]).collect();
        let mut a = self.inverse.solve(&v_a);
        let mut b = self.inverse.solve(&self.signs);
        // transposed entries share one trajectory; averaging removes rounding drift
        let d = self.gamma.dim();
        let half: T = lit(0.5);
        for (p, e) in active.iter().enumerate() {
            if e.pair(d).0 > e.pair(d).1 {
                if let Some(q) = self.inverse.position(e.transpose(d)) {
                    let (am, bm) = (half * (a[p] + a[q]), half * (b[p] + b[q]));
                    (a[p], a[q], b[p], b[q]) = (am, am, bm, bm);
                }
            }
        }
        let (ga, gb) = self.gamma.apply_active_pair(active, &a, &b);
        Directions { a, b, ga, gb }
    }

    fn below_current(&self, lambda: T) -> bool {
        if !self.lambda_t.is_finite() {
            return true;
        }
        lambda < self.lambda_t - T::tol(STRICTNESS) * self.lambda_t.abs().max(T::one())
    }

    fn at_current(&self, lambda: T) -> bool {
        self.lambda_t.is_finite()
            && (lambda - self.lambda_t).abs() <= T::tol(STRICTNESS) * self.lambda_t.abs().max(T::one())
    }

    fn too_close(&self, lambda: T) -> bool {
        self.lambda_t.is_finite()
            && lambda >= self.lambda_t - T::tol(REENTRY_GUARD) * self.lambda_t.abs().max(T::one())
    }

    /// Next hitting time over `e ∉ A` (one representative per transposed pair).
    pub fn hitting_event(&self) -> Option<HitCandidate<T>> {
        self.hit_from(&self.directions())
    }

    /// Next crossing time over `e ∈ A`.
    pub fn crossing_event(&self) -> Option<CrossCandidate<T>> {
        self.cross_from(&self.directions())
    }

    fn hit_from(&self, dirs: &Directions<T>) -> Option<HitCandidate<T>> {
        let d = self.gamma.dim();
        let mut in_active = vec![false; d * d];
        for e in self.inverse.active() {
            in_active[e.0] = true;
        }
        let guard = T::tol(DENOMINATOR_GUARD);
        let mut best: Option<HitCandidate<T>> = None;
        for e in 0..d * d {
            let idx = VecIndex(e);
            let (i, j) = idx.pair(d);
            // the lower-triangle entry has the smaller vec index of the pair
            if i < j || in_active[e] {
                continue;
            }
            let num = dirs.ga[e] - self.v[e];
            for sign in [1i8, -1] {
                let den = lit::<T>(sign as f64) - dirs.gb[e];
                if den.abs() < guard {
                    continue;
                }
                let mut lambda = num / den;
                if !self.below_current(lambda) {
                    // an entry reaching the boundary together with the last event
                    // joins now if its constraint would be violated just below
                    let entering = lit::<T>(sign as f64) * den > guard;
                    if !(entering && self.at_current(lambda)) {
                        continue;
                    }
                    lambda = self.lambda_t;
                }
                if self.last_change == LastChange::Removed(idx) && self.too_close(lambda) {
                    continue;
                }
                if best.is_none_or(|b| lambda > b.lambda) {
                    best = Some(HitCandidate {
                        lambda,
                        index: idx,
                        sign,
                    });
                }
            }
        }
        best
    }

    fn cross_from(&self, dirs: &Directions<T>) -> Option<CrossCandidate<T>> {
        let d = self.gamma.dim();
        let guard = T::tol(DENOMINATOR_GUARD);
        let mut best: Option<CrossCandidate<T>> = None;
        let mut order: Vec<usize> = (0..self.inverse.len()).collect();
        let active = self.inverse.active();
        order.sort_by_key(|&p| active[p]);
        for p in order {
            let idx = active[p];
            let (i, j) = idx.pair(d);
            if i < j {
                continue;
            }
            if dirs.b[p].abs() < guard {
                continue;
            }
            let lambda = -dirs.a[p] / dirs.b[p];
            if !self.below_current(lambda) {
                continue;
            }
            if self.last_change == LastChange::Added(idx) && self.too_close(lambda) {
                continue;
            }
            if best.is_none_or(|b| lambda > b.lambda) {
                best = Some(CrossCandidate { lambda, index: idx });
            }
        }
        best
    }

    /// `vec(Δ)_A = −(a + λ b)` on the current active set, with `zeroed` forced to 0.
    fn segment_delta(&self, dirs: &Directions<T>, lambda: T, zeroed: &[VecIndex]) -> SparseDelta<T> {
        let d = self.gamma.dim();
        let entries = self
            .inverse
            .active()
            .iter()
            .enumerate()
            .filter(|(_, e)| !zeroed.contains(e))
            .map(|(p, &e)| (e, -(dirs.a[p] + lambda * dirs.b[p])));
        SparseDelta::from_entries(d, entries)
    }

    fn signs_i8(&self) -> Vec<i8> {
        self.signs
            .iter()
            .map(|&s| if s > T::zero() { 1 } else { -1 })
            .collect()
    }

    fn refresh_if_needed(&mut self) {
        if self.inverse.len() > 1 && self.inverse.residual() > T::tol(REFINE_TRIGGER) {
            self.inverse.refine();
        }
    }

    fn add(&mut self, e: VecIndex, sign: T) -> Result<()> {
        self.inverse.extend(&self.gamma, e)?;
        self.signs.push(sign);
        Ok(())
    }

    fn remove(&mut self, e: VecIndex) {
        let p = self.inverse.position(e).expect("index must be active");
        self.inverse.shrink(e);
        self.signs.remove(p);
    }
}

/// Options for [`compute_path`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathOptions {
    /// Maximum number of nonzero vec entries (the budget `c`).
    pub max_active: usize,
    pub lambda_min: f64,
}

impl Default for PathOptions {
    fn default() -> Self {
        Self {
            max_active: 100,
            lambda_min: 0.0,
        }
    }
}

/// Trace the piecewise-linear path from `λ₁ = ‖Σ − Σ′‖_∞` downward until
/// `|A| > c`, `Γ_AA` turns singular, or `λ ≤ lambda_min`.
pub fn compute_path<T: Real>(
    sigma: &CorrelationMatrix<T>,
    sigma_prime: &CorrelationMatrix<T>,
    opts: PathOptions,
) -> Result<SolutionPath<T>> {
    if opts.max_active == 0 {
        return Err(Error::Invalid("budget c must be at least 1".into()));
    }
    if !(opts.lambda_min >= 0.0) {
        return Err(Error::Invalid(format!(
            "lambda_min must be non-negative, got {}",
            opts.lambda_min
        )));
    }
    sigma.check_psd(PSD_TOLERANCE)?;
    sigma_prime.check_psd(PSD_TOLERANCE)?;
    let mut st = PathState::new(sigma, sigma_prime)?;
    let d = st.gamma.dim();
    let lambda_min: T = lit(opts.lambda_min);
    let mut knots: Vec<Knot<T>> = Vec::new();

    let termination = loop {
        let dirs = st.directions();
        let hit = st.hit_from(&dirs);
        let cross = st.cross_from(&dirs);

        enum Next<T> {
            Hit(HitCandidate<T>),
            Cross(CrossCandidate<T>),
        }
        let next = match (hit, cross) {
            (Some(h), Some(c)) => {
                // ties within the strictness margin go to the hit
                let margin = T::tol(STRICTNESS) * h.lambda.abs().max(T::one());
                if h.lambda + margin >= c.lambda {
                    Some(Next::Hit(h))
                } else {
                    Some(Next::Cross(c))
                }
            }
            (Some(h), None) => Some(Next::Hit(h)),
            (None, Some(c)) => Some(Next::Cross(c)),
            (None, None) => None,
        };
        let next_lambda = match &next {
            Some(Next::Hit(h)) => Some(h.lambda),
            Some(Next::Cross(c)) => Some(c.lambda),
            None => None,
        };

        let reached_floor = next_lambda.is_none_or(|l| l <= lambda_min);
        if reached_floor {
            let reason = if next.is_none() {
                Termination::Exhausted
            } else {
                Termination::LambdaMin
            };
            if st.lambda_t > lambda_min {
                knots.push(Knot {
                    lambda: lambda_min,
                    delta: st.segment_delta(&dirs, lambda_min, &[]),
                    active: st.active().to_vec(),
                    signs: st.signs_i8(),
                    event: Event::Terminal { reason },
                });
            }
            break reason;
        }

        match next.expect("checked above") {
            Next::Hit(h) => {
                let partner = (!h.index.is_diagonal(d)).then(|| h.index.transpose(d));
                let delta = st.segment_delta(&dirs, h.lambda, &[]);
                let sign: T = lit(h.sign as f64);
                let added = st.add(h.index, sign).and_then(|()| match partner {
                    Some(p) => st.add(p, sign).inspect_err(|_| st.remove(h.index)),
                    None => Ok(()),
                });
                if let Err(err) = added {
                    let index = match err {
                        Error::SingularActiveSet { index } => index,
                        other => return Err(other),
                    };
                    let reason = Termination::SingularActiveSet { index };
                    if st.lambda_t == h.lambda {
                        knots.pop();
                    }
                    knots.push(Knot {
                        lambda: h.lambda,
                        delta,
                        active: st.active().to_vec(),
                        signs: st.signs_i8(),
                        event: Event::Terminal { reason },
                    });
                    break reason;
                }
                st.refresh_if_needed();
                st.last_change = LastChange::Added(h.index);
                let tied = st.lambda_t == h.lambda;
                if let (true, Some(last)) = (tied, knots.last_mut()) {
                    // same knot; the entry is still zero here
                    last.active = st.active().to_vec();
                    last.signs = st.signs_i8();
                    debug!("knot {}: tied hit {} at lambda {}", st.t, h.index, h.lambda);
                    if st.inverse.len() > opts.max_active {
                        break Termination::ActiveSetLimit {
                            size: st.inverse.len(),
                        };
                    }
                    continue;
                }
                st.lambda_t = h.lambda;
                st.t += 1;
                knots.push(Knot {
                    lambda: h.lambda,
                    delta,
                    active: st.active().to_vec(),
                    signs: st.signs_i8(),
                    event: Event::Hit {
                        index: h.index,
                        partner,
                        sign: h.sign,
                    },
                });
                debug!("knot {}: hit {} at lambda {}", st.t, h.index, h.lambda);
                if st.inverse.len() > opts.max_active {
                    break Termination::ActiveSetLimit {
                        size: st.inverse.len(),
                    };
                }
            }
            Next::Cross(c) => {
                let partner = (!c.index.is_diagonal(d)).then(|| c.index.transpose(d));
                let zeroed: Vec<VecIndex> = std::iter::once(c.index).chain(partner).collect();
                let delta = st.segment_delta(&dirs, c.lambda, &zeroed);
                for &e in &zeroed {
                    st.remove(e);
                }
                st.refresh_if_needed();
                st.last_change = LastChange::Removed(c.index);
                st.lambda_t = c.lambda;
                st.t += 1;
                knots.push(Knot {
                    lambda: c.lambda,
                    delta,
                    active: st.active().to_vec(),
                    signs: st.signs_i8(),
                    event: Event::Cross {
                        index: c.index,
                        partner,
                    },
                });
                debug!("knot {}: cross {} at lambda {}", st.t, c.index, c.lambda);
            }
        }
    };

    Ok(SolutionPath {
        dim: d,
        knots,
        budget_c: opts.max_active,
        lambda_min,
        termination,
    })
}

/// Direct dense solve of `vec(Δ)_A = −Γ_AA⁻¹(v_A + λ s_A)` by LU factorization,
/// independent of the incrementally maintained inverse.
pub fn direct_active_solution<T: Real>(
    sigma: &CorrelationMatrix<T>,
    sigma_prime: &CorrelationMatrix<T>,
    active: &[VecIndex],
    signs: &[i8],
    lambda: T,
) -> Result<SparseDelta<T>> {
    assert_eq!(active.len(), signs.len());
    let gamma = GammaOperator::new(sigma, sigma_prime)?;
    let d = gamma.dim();
    let block = gamma.block(active);
    let rhs = nalgebra::DVector::from_iterator(
        active.len(),
        active.iter().zip(signs).map(|(&e, &s)| {
            let (i, j) = e.pair(d);
            let v = sigma_prime.get(i, j) - sigma.get(i, j);
            -(v + lambda * lit::<T>(s as f64))
        }),
    );
    let sol = block.lu().solve(&rhs).ok_or(Error::SingularMatrix)?;
    Ok(SparseDelta::from_entries(
        d,
        active.iter().copied().zip(sol.iter().copied()),
    ))
}

/// Outcome of [`kkt_check`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KktReport<T> {
    /// `max |Γ_e vec(Δ) + v_e + λ sign(Δ_e)|` over nonzero entries.
    pub max_stationarity_residual: T,
    /// `max (|Γ_e vec(Δ) + v_e| − λ)⁺` over zero entries.
    pub max_dual_violation: T,
    pub ok: bool,
}

/// Subgradient optimality check using full rows of `Γ`.
pub fn kkt_check<T: Real>(
    delta: &SparseDelta<T>,
    lambda: T,
    sigma: &CorrelationMatrix<T>,
    sigma_prime: &CorrelationMatrix<T>,
    tol: T,
) -> Result<KktReport<T>> {
    let gamma = GammaOperator::new(sigma, sigma_prime)?;
    let d = gamma.dim();
    if delta.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: delta.dim(),
        });
    }
    let g = gamma.apply_sparse(delta.entries());
    let mut stationarity = T::zero();
    let mut dual = T::zero();
    let mut nz = vec![T::zero(); d * d];
    for &(e, x) in delta.entries() {
        nz[e.0] = x;
    }
    for (e, &x) in nz.iter().enumerate() {
        let (i, j) = VecIndex(e).pair(d);
        let r = g[e] + sigma_prime.get(i, j) - sigma.get(i, j);
        if x != T::zero() {
            let s = if x > T::zero() { T::one() } else { -T::one() };
            stationarity = stationarity.max((r + lambda * s).abs());
        } else {
            dual = dual.max(r.abs() - lambda);
        }
    }
    Ok(KktReport {
        max_stationarity_residual: stationarity,
        max_dual_violation: dual.max(T::zero()),
        ok: stationarity <= tol && dual <= tol,
    })
}
