//! Fitting and information calculations.

mod fit;
mod info;
pub mod solver;

pub use fit::{fit_mle, moment_start, ratio_baseline_fit, FitResult};
pub use info::{assumed_information, g_vector, info_matrices, neyman_score, pseudo_true_lambda, sandwich_cov, GVector, InfoPair};
pub use solver::SolverOptions;
