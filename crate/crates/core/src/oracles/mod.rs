//! Gradient oracles: `H_{n+1} ≈ ∇f(θ_n)` together with the number of Monte
//! Carlo samples spent computing it.

mod mc;
mod moments;

pub use mc::{IidSource, InitPolicy, McOracle, SamplerKind};
pub use moments::{estimate_oracle_moments, OracleMoments, DEFAULT_REPLICATIONS};

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::prox::{ParamVector, SmoothObjective};

#[derive(Clone, Debug, PartialEq)]
pub struct OracleOutput {
    pub gradient: ParamVector,
    pub samples_used: u64,
}

/// Source of approximate gradients for the perturbed solvers.
pub trait GradientOracle {
    fn dim(&self) -> usize;

    /// `H` at `theta` for (1-based) `iteration` using a batch of `batch`
    /// samples drawn from `rng`.
    fn estimate(&mut self, theta: &ParamVector, iteration: usize, batch: usize, rng: &mut dyn RngCore)
        -> Result<OracleOutput>;

    /// The true gradient, when the oracle knows it. Solvers use it to record
    /// `η = H − ∇f`.
    fn exact_gradient(&self, _theta: &ParamVector) -> Option<Result<ParamVector>> {
        None
    }

    /// Forget any state carried between calls (e.g. a warm-started chain).
    fn reset(&mut self) {}
}

impl<T: GradientOracle + ?Sized> GradientOracle for Box<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn estimate(&mut self, theta: &ParamVector, iteration: usize, batch: usize, rng: &mut dyn RngCore) -> Result<OracleOutput> {
        (**self).estimate(theta, iteration, batch, rng)
    }
    fn exact_gradient(&self, theta: &ParamVector) -> Option<Result<ParamVector>> {
        (**self).exact_gradient(theta)
    }
    fn reset(&mut self) {
        (**self).reset()
    }
}

fn check_dim(theta: &ParamVector, dim: usize) -> Result<()> {
    if theta.dim() != dim {
        return Err(Error::invalid(format!("oracle expects dimension {dim}, got {}", theta.dim())));
    }
    Ok(())
}

/// `H = ∇f(θ)`; consumes no samples.
pub struct ExactOracle<O> {
    obj: O,
}

impl<O: SmoothObjective> ExactOracle<O> {
    pub fn new(obj: O) -> Self {
        ExactOracle { obj }
    }
}

impl<O: SmoothObjective> GradientOracle for ExactOracle<O> {
    fn dim(&self) -> usize {
        self.obj.dim()
    }

    fn estimate(&mut self, theta: &ParamVector, _iteration: usize, _batch: usize, _rng: &mut dyn RngCore) -> Result<OracleOutput> {
        Ok(OracleOutput {
            gradient: self.obj.gradient(theta)?,
            samples_used: 0,
        })
    }

    fn exact_gradient(&self, theta: &ParamVector) -> Option<Result<ParamVector>> {
        Some(self.obj.gradient(theta))
    }
}

/// `H = ∇f(θ) + η` with `η ~ N(bias/m, sd²/m · I)` for a batch of size `m`.
///
/// A controlled stand-in for a Monte Carlo oracle on problems where the
/// exact gradient is known; it exposes that gradient for diagnostics.
pub struct NoisyOracle<O> {
    obj: O,
    sd: f64,
    bias: Option<ParamVector>,
}

impl<O: SmoothObjective> NoisyOracle<O> {
    pub fn new(obj: O, sd: f64) -> Result<Self> {
        if !(sd >= 0.0) || !sd.is_finite() {
            return Err(Error::invalid(format!("noise sd must be finite and >= 0, got {sd}")));
        }
        Ok(NoisyOracle { obj, sd, bias: None })
    }

    pub fn with_bias(mut self, bias: ParamVector) -> Result<Self> {
        check_dim(&bias, self.obj.dim())?;
        self.bias = Some(bias);
        Ok(self)
    }
}

impl<O: SmoothObjective> GradientOracle for NoisyOracle<O> {
    fn dim(&self) -> usize {
        self.obj.dim()
    }

    fn estimate(&mut self, theta: &ParamVector, _iteration: usize, batch: usize, rng: &mut dyn RngCore) -> Result<OracleOutput> {
        let m = batch.max(1) as f64;
        let mut h = self.obj.gradient(theta)?;
        let scale = self.sd / m.sqrt();
        for v in h.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *v += scale * z;
        }
        if let Some(b) = &self.bias {
            h.0.axpy(1.0 / m, &b.0, 1.0);
        }
        Ok(OracleOutput {
            gradient: h,
            samples_used: batch as u64,
        })
    }

    fn exact_gradient(&self, theta: &ParamVector) -> Option<Result<ParamVector>> {
        Some(self.obj.gradient(theta))
    }
}

pub type ComponentGradient = Box<dyn Fn(&ParamVector) -> ParamVector + Send + Sync>;

/// `f = N⁻¹ Σ f_i`; `H = m⁻¹ Σ_k ∇f_{I_k}(θ)` with `I_k` uniform on the
/// components. In full-batch mode every component is used once instead.
///
/// The oracle is also a [`SmoothObjective`] whose gradient is the full mean,
/// computed the same way as the full-batch estimate.
pub struct MinibatchOracle {
    dim: usize,
    components: Vec<ComponentGradient>,
    full_batch: bool,
}

impl MinibatchOracle {
    pub fn new(dim: usize, components: Vec<ComponentGradient>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::invalid("minibatch oracle needs at least one component"));
        }
        Ok(MinibatchOracle {
            dim,
            components,
            full_batch: false,
        })
    }

    pub fn full_batch(mut self, on: bool) -> Self {
        self.full_batch = on;
        self
    }

    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    fn mean_over(&self, theta: &ParamVector, indices: impl Iterator<Item = usize>, count: usize) -> ParamVector {
        let mut sum = ParamVector::zeros(self.dim);
        for i in indices {
            sum.0 += (self.components[i])(theta).0;
        }
        sum.0 /= count as f64;
        sum
    }
}

impl SmoothObjective for MinibatchOracle {
    fn dim(&self) -> usize {
        self.dim
    }

    fn gradient(&self, theta: &ParamVector) -> Result<ParamVector> {
        check_dim(theta, self.dim)?;
        let n = self.components.len();
        Ok(self.mean_over(theta, 0..n, n))
    }
}

impl GradientOracle for MinibatchOracle {
    fn dim(&self) -> usize {
        self.dim
    }

    fn estimate(&mut self, theta: &ParamVector, _iteration: usize, batch: usize, rng: &mut dyn RngCore) -> Result<OracleOutput> {
        check_dim(theta, self.dim)?;
        let n = self.components.len();
        if self.full_batch {
            return Ok(OracleOutput {
                gradient: self.mean_over(theta, 0..n, n),
                samples_used: n as u64,
            });
        }
        let m = batch.max(1);
        let draws: Vec<usize> = (0..m).map(|_| rng.random_range(0..n)).collect();
        Ok(OracleOutput {
            gradient: self.mean_over(theta, draws.into_iter(), m),
            samples_used: m as u64,
        })
    }

    fn exact_gradient(&self, theta: &ParamVector) -> Option<Result<ParamVector>> {
        Some(SmoothObjective::gradient(self, theta))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prox::FnObjective;

    fn quadratic() -> FnObjective {
        // f(θ) = ½θᵀDθ + cᵀθ
        FnObjective::new(3, |t| ParamVector::from_vec(vec![2.0 * t[0] + 1.0, 0.5 * t[1] - 2.0, 3.0 * t[2]]))
            .with_value(|t| t[0] * t[0] + 0.25 * t[1] * t[1] + 1.5 * t[2] * t[2] + t[0] - 2.0 * t[1])
    }

    #[test]
    fn exact_oracle_matches_finite_differences() {
        let obj = quadratic();
        let mut oracle = ExactOracle::new(&obj);
        let theta = ParamVector::from_slice(&[0.3, -1.2, 2.0]);
        let out = oracle.estimate(&theta, 1, 10, &mut crate::stream(0)).unwrap();
        assert_eq!(out.samples_used, 0);
        let h = 1e-5;
        for i in 0..3 {
            let mut up = theta.clone();
            let mut down = theta.clone();
            up[i] += h;
            down[i] -= h;
            let fd = (obj.value(&up).unwrap() - obj.value(&down).unwrap()) / (2.0 * h);
            assert!((fd - out.gradient[i]).abs() < 1e-6 * (1.0 + out.gradient.norm()));
        }
        let eta = out.gradient.sub(&oracle.exact_gradient(&theta).unwrap().unwrap());
        assert_eq!(eta.norm(), 0.0);
    }

    fn two_constant_components() -> MinibatchOracle {
        MinibatchOracle::new(
            2,
            vec![
                Box::new(|_: &ParamVector| ParamVector::from_slice(&[1.0, 0.0])),
                Box::new(|_: &ParamVector| ParamVector::from_slice(&[-1.0, 2.0])),
            ],
        )
        .unwrap()
    }

    #[test]
    fn minibatch_full_batch_is_exact() {
        let mut oracle = two_constant_components().full_batch(true);
        let theta = ParamVector::zeros(2);
        let out = oracle.estimate(&theta, 1, 1, &mut crate::stream(3)).unwrap();
        assert_eq!(out.gradient, SmoothObjective::gradient(&oracle, &theta).unwrap());
        assert_eq!(out.samples_used, 2);
        assert!(MinibatchOracle::new(1, vec![]).is_err());
    }

    #[test]
    fn minibatch_mean_over_draws() {
        let mut oracle = two_constant_components();
        let mut rng = crate::stream(11);
        let draws = 100_000;
        let mut sum = [0.0; 2];
        let mut sq = [0.0; 2];
        for _ in 0..draws {
            let h = oracle.estimate(&ParamVector::zeros(2), 1, 1, &mut rng).unwrap().gradient;
            for j in 0..2 {
                sum[j] += h[j];
                sq[j] += h[j] * h[j];
            }
        }
        let expected = [0.0, 1.0];
        for j in 0..2 {
            let mean = sum[j] / draws as f64;
            let se = ((sq[j] / draws as f64 - mean * mean) / draws as f64).sqrt();
            assert!((mean - expected[j]).abs() < 3.0 * se + 1e-12, "component {j}: {mean} ± {se}");
        }
    }

    #[test]
    fn noisy_oracle_is_seeded_and_scaled() {
        let obj = quadratic();
        let mut a = NoisyOracle::new(&obj, 1.0).unwrap();
        let theta = ParamVector::zeros(3);
        let x = a.estimate(&theta, 1, 4, &mut crate::stream(5)).unwrap();
        let y = a.estimate(&theta, 1, 4, &mut crate::stream(5)).unwrap();
        assert_eq!(x, y);
        assert_eq!(x.samples_used, 4);
        let mut silent = NoisyOracle::new(&obj, 0.0).unwrap().with_bias(ParamVector::from_slice(&[2.0, 0.0, 0.0])).unwrap();
        let z = silent.estimate(&theta, 1, 4, &mut crate::stream(5)).unwrap();
        assert_eq!(z.gradient.sub(&obj.gradient(&theta).unwrap()).as_slice(), &[0.5, 0.0, 0.0]);
        assert!(NoisyOracle::new(&obj, -1.0).is_err());
    }
}
