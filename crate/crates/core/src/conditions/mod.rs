//! Numerical checks of the consistency and orthogonality conditions.

mod checks;
mod orthogonalize;
mod report;

pub use checks::{arm_totals, check_consistency, check_coxwong, check_m_orthogonality, check_moment_match, Statistic};
pub use orthogonalize::{orthogonalize, OrthoPath, OrthoRow};
pub use report::{
    default_lambda_grid, verdict, CheckOptions, Condition, ConditionReport, Residual, Tolerance, Verdict,
    DEFAULT_TOLERANCE,
};
