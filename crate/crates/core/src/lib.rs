//! Exact solution paths for differential network estimation from
//! heterogeneous non-paranormal data.
//!
//! The pipeline estimates a latent correlation matrix per group from
//! Kendall's tau, projects it onto the PSD cone, and traces the full
//! piecewise-linear path of the lasso-penalized D-trace estimator of the
//! difference between the two precision matrices.
//!
//! ```
//! use diffpath::{compute_path, CorrelationMatrix, PathOptions};
//! use nalgebra::DMatrix;
//!
//! let a = CorrelationMatrix::<f64>::identity(3);
//! let b = CorrelationMatrix::new(DMatrix::from_row_slice(
//!     3, 3, &[1.0, 0.4, 0.0, 0.4, 1.0, 0.0, 0.0, 0.0, 1.0],
//! )).unwrap();
//! let path = compute_path(&a, &b, PathOptions::default()).unwrap();
//! assert_eq!(path.first_lambda(), 0.4);
//! ```

pub mod covariance;
pub mod datagen;
pub mod error;
pub mod evaluation;
pub mod io;
pub mod kendall;
pub mod linalg;
pub mod path;
pub mod reference;
pub mod scalar;

pub use covariance::{
    estimate_correlation, project_psd, tau_matrix, tau_to_correlation, weighted_tau, Dataset,
    DatasetCollection, TauMatrix,
};
pub use error::{Error, Result};
pub use linalg::{ActiveInverse, CorrelationMatrix, GammaOperator, VecIndex};
pub use path::{compute_path, kkt_check, Event, Knot, PathOptions, SolutionPath, SparseDelta, Termination};
pub use reference::{objective_value, proximal_gradient_solve, SolveOptions, SolveReport};
pub use scalar::Real;

pub type CorrelationMatrixF64 = CorrelationMatrix<f64>;
pub type CorrelationMatrixF32 = CorrelationMatrix<f32>;
pub type SolutionPathF64 = SolutionPath<f64>;
pub type SolutionPathF32 = SolutionPath<f32>;
pub type SparseDeltaF64 = SparseDelta<f64>;
