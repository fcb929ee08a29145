//! Proximal-gradient solver of the penalized D-trace problem at a single `λ`.
//!
//! Much slower than the path, but it shares no code with it beyond the input
//! types, which makes it a useful cross-check.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{max_eigenvalue, CorrelationMatrix};
use crate::path::PSD_TOLERANCE;
use crate::scalar::{lit, Real};

#[derive(Clone, Debug)]
pub struct SolveReport<T: Real> {
    pub delta: DMatrix<T>,
    pub iterations: usize,
    pub final_objective: T,
    /// Largest violation of the subgradient optimality conditions.
    pub stationarity_residual: T,
    /// `false` when `max_iter` ran out before the step size fell below `tol`.
    pub converged: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveOptions {
    pub max_iter: usize,
    /// Stop once the max-norm change between iterates is at most this.
    pub tol: f64,
    pub accelerate: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            max_iter: 10_000,
            tol: 1e-10,
            accelerate: false,
        }
    }
}

fn inner<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>) -> T {
    a.component_mul(b).sum()
}

/// The smooth part `¼(⟨ΣΔ, ΔΣ′⟩ + ⟨Σ′Δ, ΔΣ⟩) − ⟨Δ, Σ − Σ′⟩`.
pub fn dtrace_loss<T: Real>(delta: &DMatrix<T>, sigma: &DMatrix<T>, sigma_prime: &DMatrix<T>) -> T {
    let quad = inner(&(sigma * delta), &(delta * sigma_prime))
        + inner(&(sigma_prime * delta), &(delta * sigma));
    lit::<T>(0.25) * quad - inner(delta, &(sigma - sigma_prime))
}

/// Loss plus `λ‖Δ‖₁` (entrywise, diagonal included).
pub fn objective_value<T: Real>(
    delta: &DMatrix<T>,
    sigma: &DMatrix<T>,
    sigma_prime: &DMatrix<T>,
    lambda: T,
) -> T {
    assert_eq!(delta.shape(), sigma.shape());
    assert_eq!(delta.shape(), sigma_prime.shape());
    dtrace_loss(delta, sigma, sigma_prime) + lambda * delta.iter().fold(T::zero(), |s, x| s + x.abs())
}

/// `½(ΣΔΣ′ + Σ′ΔΣ) − Σ + Σ′`.
pub fn gradient<T: Real>(delta: &DMatrix<T>, sigma: &DMatrix<T>, sigma_prime: &DMatrix<T>) -> DMatrix<T> {
    let half: T = lit(0.5);
    (sigma * delta * sigma_prime + sigma_prime * delta * sigma) * half - sigma + sigma_prime
}

pub fn soft_threshold<T: Real>(x: &DMatrix<T>, t: T) -> DMatrix<T> {
    x.map(|v| {
        if v > t {
            v - t
        } else if v < -t {
            v + t
        } else {
            T::zero()
        }
    })
}

/// Largest violation of `0 ∈ ∇L(Δ) + λ∂‖Δ‖₁`.
pub fn stationarity_residual<T: Real>(
    delta: &DMatrix<T>,
    sigma: &DMatrix<T>,
    sigma_prime: &DMatrix<T>,
    lambda: T,
) -> T {
    let g = gradient(delta, sigma, sigma_prime);
    delta.iter().zip(g.iter()).fold(T::zero(), |worst, (&x, &gx)| {
        let r = if x > T::zero() {
            (gx + lambda).abs()
        } else if x < T::zero() {
            (gx - lambda).abs()
        } else {
            (gx.abs() - lambda).max(T::zero())
        };
        worst.max(r)
    })
}

/// ISTA (or FISTA with function-value restart) with step `1/(λ_max(Σ)·λ_max(Σ′))`.
pub fn proximal_gradient_solve<T: Real>(
    sigma: &CorrelationMatrix<T>,
    sigma_prime: &CorrelationMatrix<T>,
    lambda: T,
    opts: SolveOptions,
) -> Result<SolveReport<T>> {
    if sigma.dim() != sigma_prime.dim() {
        return Err(Error::DimensionMismatch {
            expected: sigma.dim(),
            found: sigma_prime.dim(),
        });
    }
    if !(lambda > T::zero()) {
        return Err(Error::Invalid(format!("lambda must be positive, got {lambda}")));
    }
    sigma.check_psd(PSD_TOLERANCE)?;
    sigma_prime.check_psd(PSD_TOLERANCE)?;
    let (s, sp) = (sigma.as_matrix(), sigma_prime.as_matrix());
    let d = s.nrows();

    let lipschitz = max_eigenvalue(s) * max_eigenvalue(sp);
    let step = T::one() / lipschitz;
    let tol: T = lit(opts.tol);

    let mut x = DMatrix::<T>::zeros(d, d);
    let mut y = x.clone();
    let mut theta = T::one();
    let mut f_x = objective_value(&x, s, sp, lambda);
    let mut converged = false;
    let mut iterations = 0;
    let mut just_restarted = false;

    while iterations < opts.max_iter {
        iterations += 1;
        let g = gradient(&y, s, sp);
        let x_new = soft_threshold(&(&y - g * step), step * lambda);
        let f_new = objective_value(&x_new, s, sp, lambda);

        if opts.accelerate && f_new > f_x && !just_restarted {
            // momentum overshot: restart from the last iterate
            theta = T::one();
            y = x.clone();
            just_restarted = true;
            continue;
        }
        just_restarted = false;

        let change = (&x_new - &x).amax();
        if opts.accelerate {
            let four: T = lit(4.0);
            let theta_new = (T::one() + (T::one() + four * theta * theta).sqrt()) * lit(0.5);
            y = &x_new + (&x_new - &x) * ((theta - T::one()) / theta_new);
            theta = theta_new;
        } else {
            y = x_new.clone();
        }
        x = x_new;
        f_x = f_new;
        if change <= tol {
            converged = true;
            break;
        }
    }

    let stationarity_residual = stationarity_residual(&x, s, sp, lambda);
    Ok(SolveReport {
        final_objective: f_x,
        delta: x,
        iterations,
        stationarity_residual,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::tests::random_correlation;
    use crate::path::{kkt_check, SparseDelta};

    /// Objective written with explicit traces, `⟨A, B⟩ = tr(ABᵀ)`.
    fn objective_by_traces(delta: &DMatrix<f64>, s: &DMatrix<f64>, sp: &DMatrix<f64>, lambda: f64) -> f64 {
        let ip = |a: &DMatrix<f64>, b: &DMatrix<f64>| (a * b.transpose()).trace();
        0.25 * (ip(&(s * delta), &(delta * sp)) + ip(&(sp * delta), &(delta * s))) - ip(delta, &(s - sp))
            + lambda * delta.iter().map(|v| v.abs()).sum::<f64>()
    }

    #[test]
    fn zero_delta_has_zero_objective() {
        let s = random_correlation(4, 1);
        let sp = random_correlation(4, 2);
        let z = DMatrix::zeros(4, 4);
        assert_eq!(objective_value(&z, s.as_matrix(), sp.as_matrix(), 0.3), 0.0);
        let id = DMatrix::<f64>::identity(3, 3);
        let diff = &id - &id;
        assert_eq!(objective_value(&diff, &id, &id, 0.1), 0.0);
    }

    #[test]
    fn objective_matches_trace_form() {
        let s = random_correlation(4, 3);
        let sp = random_correlation(4, 4);
        let delta = DMatrix::from_fn(4, 4, |i, j| ((i * 7 + j * 3) % 5) as f64 * 0.1 - 0.2);
        let a = objective_value(&delta, s.as_matrix(), sp.as_matrix(), 0.2);
        let b = objective_by_traces(&delta, s.as_matrix(), sp.as_matrix(), 0.2);
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let s = random_correlation(4, 5);
        let sp = random_correlation(4, 6);
        let (s, sp) = (s.as_matrix(), sp.as_matrix());
        let delta = DMatrix::from_fn(4, 4, |i, j| (i as f64 - j as f64) * 0.05 + 0.01);
        let g = gradient(&delta, s, sp);
        let h = 1e-5;
        for i in 0..4 {
            for j in 0..4 {
                let mut plus = delta.clone();
                plus[(i, j)] += h;
                let mut minus = delta.clone();
                minus[(i, j)] -= h;
                let fd = (dtrace_loss(&plus, s, sp) - dtrace_loss(&minus, s, sp)) / (2.0 * h);
                assert!((fd - g[(i, j)]).abs() <= 1e-6 * g[(i, j)].abs().max(1.0));
            }
        }
    }

    #[test]
    fn equal_inputs_converge_to_zero() {
        let s = random_correlation(5, 7);
        let r = proximal_gradient_solve(&s, &s, 0.05, SolveOptions::default()).unwrap();
        assert!(r.converged);
        assert_eq!(r.delta.amax(), 0.0);
    }

    #[test]
    fn large_lambda_gives_zero() {
        let s = random_correlation(5, 8);
        let sp = random_correlation(5, 9);
        let lam1 = (s.as_matrix() - sp.as_matrix()).amax();
        let r = proximal_gradient_solve(&s, &sp, lam1, SolveOptions::default()).unwrap();
        assert_eq!(r.delta.amax(), 0.0);
    }

    #[test]
    fn ista_objective_is_monotone_and_kkt_holds() {
        let s = random_correlation(10, 10);
        let sp = random_correlation(10, 11);
        let lam1 = (s.as_matrix() - sp.as_matrix()).amax();
        let lambda = 0.3 * lam1;
        let mut last = f64::INFINITY;
        for iters in [1, 2, 5, 10, 50, 200] {
            let r = proximal_gradient_solve(
                &s,
                &sp,
                lambda,
                SolveOptions { max_iter: iters, tol: 0.0, accelerate: false },
            )
            .unwrap();
            assert!(r.final_objective <= last + 1e-12);
            last = r.final_objective;
        }
        let r = proximal_gradient_solve(
            &s,
            &sp,
            lambda,
            SolveOptions { max_iter: 200_000, tol: 1e-12, accelerate: true },
        )
        .unwrap();
        assert!(r.converged);
        let sparse = SparseDelta::from_dense(&r.delta);
        assert!(kkt_check(&sparse, lambda, &s, &sp, 1e-6).unwrap().ok);
    }

    #[test]
    fn rejects_non_positive_lambda() {
        let s = random_correlation(3, 1);
        assert!(proximal_gradient_solve(&s, &s, 0.0, SolveOptions::default()).is_err());
    }
}
