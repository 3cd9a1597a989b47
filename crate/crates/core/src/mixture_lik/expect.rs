//! Expectations under a true doubly-stochastic law.

use rayon::prelude::*;

use super::kernel::{PairKernel, PairObs};
use super::model::AssumedModel;
use crate::error::{MisfitError, Result};
use crate::families::DensityFamily;
use crate::rng::substream;

const MC_CHUNK: usize = 10_000;

/// Data-generating law: the kernel at `ψ*`, a true mixing law and the stratum
/// design `(r₁, r₀)`, each stratum type equally frequent.
#[derive(Debug, Clone, PartialEq)]
pub struct TrueModel {
    pub kernel: PairKernel,
    pub psi_star: f64,
    pub mixing: DensityFamily,
    pub design: Vec<(f64, f64)>,
}

impl TrueModel {
    pub fn new(kernel: PairKernel, psi_star: f64, mixing: DensityFamily) -> Self {
        TrueModel { kernel, psi_star, mixing, design: vec![(1.0, 1.0)] }
    }

    pub fn with_design(mut self, design: Vec<(f64, f64)>) -> Self {
        self.design = design;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel.check_psi(self.psi_star)?;
        self.mixing.validate()?;
        if self.design.is_empty() {
            return Err(MisfitError::invalid("stratum_counts", "design is empty"));
        }
        if self.design.iter().any(|(a, b)| !(*a >= 1.0 && *b >= 1.0)) {
            return Err(MisfitError::invalid("stratum_counts", "counts must be at least 1"));
        }
        if self.kernel.positive_effect() {
            let ok = match &self.mixing {
                DensityFamily::Normal { .. } => false,
                DensityFamily::DiscreteAtoms { points, .. } => points.iter().all(|p| *p > 0.0),
                _ => true,
            };
            if !ok {
                return Err(MisfitError::invalid("mixing", "effects must be positive for this kernel"));
            }
        }
        Ok(())
    }

    /// Draws stratum `index` of a sample (the design is cycled).
    pub fn sample_stratum<R: rand::Rng + ?Sized>(&self, index: usize, rng: &mut R) -> PairObs {
        let (r1, r0) = self.design[index % self.design.len()];
        let gamma = self.mixing.sample_unchecked(rng);
        self.kernel.sample(self.psi_star, gamma, r1, r0, rng)
    }
}

impl AssumedModel {
    /// The assumed model's own law at `(ψ, λ)` as a [`TrueModel`].
    pub fn as_true(&self, psi: f64, lambda: &[f64], design: &[(f64, f64)]) -> Result<TrueModel> {
        self.check(psi, lambda)?;
        Ok(TrueModel {
            kernel: self.kernel,
            psi_star: psi,
            mixing: self.mixing.family(lambda),
            design: design.to_vec(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExpectMethod {
    /// Nested quadrature at `level` and `level + 1`; the difference is the
    /// reported error.
    Quadrature { level: u32 },
    MonteCarlo { n: usize, seed: u64 },
}

impl Default for ExpectMethod {
    fn default() -> Self {
        ExpectMethod::Quadrature { level: 0 }
    }
}

/// Componentwise expectation with error estimates (quadrature level
/// difference, or Monte Carlo standard error).
#[derive(Debug, Clone, PartialEq)]
pub struct Expectation {
    pub value: Vec<f64>,
    pub error: Vec<f64>,
}

/// `E_m[f(Y₁, Y₀)]` for a vector-valued `f` of length `dim`.
pub fn expect_under_true<F>(f: &F, dim: usize, truth: &TrueModel, method: ExpectMethod) -> Result<Expectation>
where
    F: Fn(&PairObs, &mut [f64]) -> Result<()> + Sync,
{
    truth.validate()?;
    match method {
        ExpectMethod::Quadrature { level } => {
            let coarse = nested(f, dim, truth, level)?;
            let fine = nested(f, dim, truth, level + 1)?;
            let error = coarse.iter().zip(&fine).map(|(a, b)| (a - b).abs()).collect();
            Ok(Expectation { value: fine, error })
        }
        ExpectMethod::MonteCarlo { n, seed } => monte_carlo(f, dim, truth, n, seed),
    }
}

/// Scalar convenience wrapper returning `(value, error)`.
pub fn expect_scalar<F>(f: &F, truth: &TrueModel, method: ExpectMethod) -> Result<(f64, f64)>
where
    F: Fn(&PairObs) -> Result<f64> + Sync,
{
    let e = expect_under_true(
        &|o: &PairObs, out: &mut [f64]| {
            out[0] = f(o)?;
            Ok(())
        },
        1,
        truth,
        method,
    )?;
    Ok((e.value[0], e.error[0]))
}

fn nested<F>(f: &F, dim: usize, truth: &TrueModel, level: u32) -> Result<Vec<f64>>
where
    F: Fn(&PairObs, &mut [f64]) -> Result<()> + Sync,
{
    let outer = truth.mixing.rule(level)?;
    let cells: Vec<(usize, f64, f64)> = (0..truth.design.len())
        .flat_map(|j| outer.iter().map(move |(g, w)| (j, g, w)))
        .collect();
    let parts: Vec<Result<Vec<f64>>> = cells
        .par_iter()
        .map(|&(j, gamma, wg)| {
            let (r1, r0) = truth.design[j];
            let (rule1, rule0) = truth.kernel.arm_rules(truth.psi_star, gamma, r1, r0, level)?;
            let mut acc = vec![0.0; dim];
            let mut buf = vec![0.0; dim];
            for (y1, w1) in rule1.iter() {
                for (y0, w0) in rule0.iter() {
                    let w = w1 * w0;
                    if w == 0.0 {
                        continue;
                    }
                    f(&PairObs { y1, y0, r1, r0 }, &mut buf)?;
                    for (a, b) in acc.iter_mut().zip(&buf) {
                        *a += w * b;
                    }
                }
            }
            Ok(acc.into_iter().map(|a| a * wg).collect())
        })
        .collect();
    let scale = 1.0 / truth.design.len() as f64;
    let mut total = vec![0.0; dim];
    for part in parts {
        for (t, v) in total.iter_mut().zip(part?) {
            *t += scale * v;
        }
    }
    if total.iter().any(|v| !v.is_finite()) {
        return Err(MisfitError::numerical("expectation is not finite", f64::NAN));
    }
    Ok(total)
}

fn monte_carlo<F>(f: &F, dim: usize, truth: &TrueModel, n: usize, seed: u64) -> Result<Expectation>
where
    F: Fn(&PairObs, &mut [f64]) -> Result<()> + Sync,
{
    if n == 0 {
        return Err(MisfitError::invalid("n", "Monte Carlo needs at least one draw"));
    }
    let chunks = n.div_ceil(MC_CHUNK);
    let parts: Vec<Result<(Vec<f64>, Vec<f64>)>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = substream(seed, c as u64);
            let lo = c * MC_CHUNK;
            let hi = (lo + MC_CHUNK).min(n);
            let mut s = vec![0.0; dim];
            let mut s2 = vec![0.0; dim];
            let mut buf = vec![0.0; dim];
            for i in lo..hi {
                let o = truth.sample_stratum(i, &mut rng);
                f(&o, &mut buf)?;
                for k in 0..dim {
                    s[k] += buf[k];
                    s2[k] += buf[k] * buf[k];
                }
            }
            Ok((s, s2))
        })
        .collect();
    let mut s = vec![0.0; dim];
    let mut s2 = vec![0.0; dim];
    for p in parts {
        let (a, b) = p?;
        for k in 0..dim {
            s[k] += a[k];
            s2[k] += b[k];
        }
    }
    let nf = n as f64;
    let value: Vec<f64> = s.iter().map(|v| v / nf).collect();
    let error = (0..dim)
        .map(|k| {
            let var = (s2[k] / nf - value[k] * value[k]).max(0.0) * nf / (nf - 1.0).max(1.0);
            (var / nf).sqrt()
        })
        .collect();
    Ok(Expectation { value, error })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixture_lik::{AssumedMixing, Order};

    fn atoms() -> DensityFamily {
        DensityFamily::DiscreteAtoms { points: vec![0.5, 1.0, 2.5], weights: vec![0.3, 0.4, 0.3] }
    }

    fn truths() -> Vec<TrueModel> {
        vec![
            TrueModel::new(PairKernel::exponential(), 1.5, atoms()),
            TrueModel::new(PairKernel::exponential(), 1.5, DensityFamily::LogNormal { log_mean: 0.0, log_sd: 1.0 }),
            TrueModel::new(PairKernel::Poisson, 0.4, atoms()).with_design(vec![(1.0, 3.0), (2.0, 1.0)]),
            TrueModel::new(PairKernel::Normal, 0.3, DensityFamily::Normal { mean: 0.0, var: 2.0 }),
        ]
    }

    #[test]
    fn normalization() {
        for t in truths() {
            let (v, e) = expect_scalar(&|_o: &PairObs| Ok(1.0), &t, ExpectMethod::default()).unwrap();
            assert!((v - 1.0).abs() < 1e-8 && e < 1e-8, "{t:?}: {v}");
        }
    }

    #[test]
    fn symmetric_score_has_zero_mean_for_every_lambda() {
        let m = AssumedModel::new(PairKernel::exponential(), AssumedMixing::Gamma);
        let t = TrueModel::new(PairKernel::exponential(), 1.5, atoms());
        for &kap in &[0.5, 1.0, 2.0, 5.0] {
            for &rho in &[0.5, 1.0, 2.0, 5.0] {
                let f = |o: &PairObs| Ok(m.derivs(1.5, &[kap, rho], o, Some(Order::Gradient))?.grad[0]);
                let (v, e) = expect_scalar(&f, &t, ExpectMethod::default()).unwrap();
                assert!(v.abs() < 1e-8 && e < 1e-8, "{kap} {rho}: {v} ± {e}");
            }
        }
    }

    #[test]
    fn correctly_specified_score_is_unbiased() {
        let m = AssumedModel::new(PairKernel::exponential(), AssumedMixing::Gamma);
        let t = m.as_true(1.5, &[2.0, 1.3], &[(1.0, 1.0)]).unwrap();
        let e = expect_under_true(
            &|o: &PairObs, out: &mut [f64]| {
                let d = m.derivs(1.5, &[2.0, 1.3], o, Some(Order::Gradient))?;
                out.copy_from_slice(&d.grad);
                Ok(())
            },
            3,
            &t,
            ExpectMethod::Quadrature { level: 1 },
        )
        .unwrap();
        for k in 0..3 {
            assert!(e.value[k].abs() < 1e-8, "{k}: {:?}", e);
        }
    }

    #[test]
    fn monte_carlo_agrees_with_quadrature() {
        for t in truths() {
            let f = |o: &PairObs| Ok((o.y1 - o.y0).abs().sqrt() + o.y1);
            let (q, qe) = expect_scalar(&f, &t, ExpectMethod::default()).unwrap();
            let (m, me) = expect_scalar(&f, &t, ExpectMethod::MonteCarlo { n: 200_000, seed: 5 }).unwrap();
            assert!((q - m).abs() <= 3.0 * (qe + me), "{t:?}: {q} vs {m} ± {me}");
        }
    }

    #[test]
    fn monte_carlo_is_thread_independent() {
        let t = truths().remove(1);
        let f = |o: &PairObs| Ok(o.y1 * o.y0);
        let a = expect_scalar(&f, &t, ExpectMethod::MonteCarlo { n: 25_000, seed: 9 }).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| expect_scalar(&f, &t, ExpectMethod::MonteCarlo { n: 25_000, seed: 9 }).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn zero_draws_is_rejected() {
        let t = truths().remove(0);
        let r = expect_scalar(&|_o: &PairObs| Ok(1.0), &t, ExpectMethod::MonteCarlo { n: 0, seed: 1 });
        assert!(matches!(r, Err(MisfitError::InvalidArgument { .. })));
    }
}
