//! Numerical building blocks shared by the statistical modules.

pub mod diff;
pub mod halton;
pub mod linalg;
pub mod ode;
pub mod quadrature;
pub mod special;
