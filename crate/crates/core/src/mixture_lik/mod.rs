//! Marginal (random-effects integrated) stratum likelihoods and
//! expectations under a true mixture.

pub mod expect;
pub mod kernel;
pub mod mixing;
pub mod model;

pub use expect::{expect_scalar, expect_under_true, ExpectMethod, Expectation, TrueModel};
pub use kernel::{KernelDerivs, PairKernel, PairObs};
pub use mixing::{AssumedMixing, Transform};
pub use model::{pair_loglik, pair_loglik_grad, AssumedModel, ClosedForm, Derivs, Order};
