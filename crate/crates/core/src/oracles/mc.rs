//! Monte Carlo oracle `H = m⁻¹ Σ_j H_θ(X_j)` with i.i.d. draws from `π_θ` or
//! a Markov chain driven by a `π_θ`-invariant kernel.

use rand::RngCore;

use crate::error::{Error, Result};
use crate::prox::ParamVector;

use super::{check_dim, GradientOracle, OracleOutput};

/// Adds `H_θ(x)` into the accumulator.
pub type Integrand<X> = Box<dyn Fn(&ParamVector, &X, &mut ParamVector)>;
pub type IidSampler<X> = Box<dyn Fn(&ParamVector, &mut dyn RngCore) -> Result<X>>;
pub type Kernel<X> = Box<dyn Fn(&ParamVector, &X, &mut dyn RngCore) -> Result<X>>;

/// Exact sampler from `π_θ`.
pub trait IidSource<X> {
    /// Called once per oracle call, before the batch is drawn; lets a
    /// sampler build per-`θ` tables.
    fn prepare(&mut self, _theta: &ParamVector) -> Result<()> {
        Ok(())
    }

    fn draw(&mut self, theta: &ParamVector, rng: &mut dyn RngCore) -> Result<X>;
}

struct FnSource<X>(IidSampler<X>);

impl<X> IidSource<X> for FnSource<X> {
    fn draw(&mut self, theta: &ParamVector, rng: &mut dyn RngCore) -> Result<X> {
        (self.0)(theta, rng)
    }
}
type ExactGradient = Box<dyn Fn(&ParamVector) -> Result<ParamVector>>;

/// How the chain at iteration `n + 1` is started.
pub enum InitPolicy<X> {
    /// Continue from the last state of the previous call; the first call (or
    /// the first after [`GradientOracle::reset`]) starts from `initial`.
    Warm { initial: X },
    /// Draw a new `X_0 ~ ν_θ` at every call.
    Fresh { nu: IidSampler<X> },
}

impl<X> InitPolicy<X> {
    pub fn fresh(nu: impl Fn(&ParamVector, &mut dyn RngCore) -> Result<X> + 'static) -> Self {
        InitPolicy::Fresh { nu: Box::new(nu) }
    }
}

pub enum SamplerKind<X> {
    Iid(Box<dyn IidSource<X>>),
    /// `burn_in` kernel steps are discarded before averaging. For a warm
    /// start they are run only when the chain is (re)initialised.
    Markov {
        kernel: Kernel<X>,
        init: InitPolicy<X>,
        burn_in: usize,
    },
}

impl<X: 'static> SamplerKind<X> {
    pub fn iid(draw: impl Fn(&ParamVector, &mut dyn RngCore) -> Result<X> + 'static) -> Self {
        SamplerKind::Iid(Box::new(FnSource(Box::new(draw))))
    }

    pub fn markov(
        kernel: impl Fn(&ParamVector, &X, &mut dyn RngCore) -> Result<X> + 'static,
        init: InitPolicy<X>,
        burn_in: usize,
    ) -> Self {
        SamplerKind::Markov {
            kernel: Box::new(kernel),
            init,
            burn_in,
        }
    }
}

pub struct McOracle<X> {
    dim: usize,
    integrand: Integrand<X>,
    sampler: SamplerKind<X>,
    state: Option<X>,
    exact: Option<ExactGradient>,
}

impl<X: Clone> McOracle<X> {
    pub fn new(dim: usize, integrand: impl Fn(&ParamVector, &X, &mut ParamVector) + 'static, sampler: SamplerKind<X>) -> Self
    where
        X: 'static,
    {
        McOracle {
            dim,
            integrand: Box::new(integrand),
            sampler,
            state: None,
            exact: None,
        }
    }

    /// Expose the true gradient so solvers can record `η`.
    pub fn with_exact_gradient(mut self, exact: impl Fn(&ParamVector) -> Result<ParamVector> + 'static) -> Self {
        self.exact = Some(Box::new(exact));
        self
    }

    /// Last chain state (Markov samplers only).
    pub fn chain_state(&self) -> Option<&X> {
        self.state.as_ref()
    }

    fn run(&mut self, theta: &ParamVector, m: usize, rng: &mut dyn RngCore) -> Result<(ParamVector, u64)> {
        let mut acc = ParamVector::zeros(self.dim);
        let used = match &mut self.sampler {
            SamplerKind::Iid(source) => {
                source.prepare(theta)?;
                for _ in 0..m {
                    let x = source.draw(theta, rng)?;
                    (self.integrand)(theta, &x, &mut acc);
                }
                m as u64
            }
            SamplerKind::Markov { kernel, init, burn_in } => {
                let mut used = 0u64;
                let mut x = match (init, self.state.take()) {
                    (InitPolicy::Warm { .. }, Some(x)) => x,
                    (InitPolicy::Warm { initial }, None) => {
                        let mut x = initial.clone();
                        for _ in 0..*burn_in {
                            x = kernel(theta, &x, rng)?;
                        }
                        used += *burn_in as u64;
                        x
                    }
                    (InitPolicy::Fresh { nu }, _) => {
                        let mut x = nu(theta, rng)?;
                        for _ in 0..*burn_in {
                            x = kernel(theta, &x, rng)?;
                        }
                        used += *burn_in as u64;
                        // X_0 itself is the first of the m averaged states.
                        (self.integrand)(theta, &x, &mut acc);
                        for _ in 1..m {
                            x = kernel(theta, &x, rng)?;
                            (self.integrand)(theta, &x, &mut acc);
                        }
                        acc.0 /= m as f64;
                        self.state = Some(x);
                        return Ok((acc, used + m as u64));
                    }
                };
                for _ in 0..m {
                    x = kernel(theta, &x, rng)?;
                    (self.integrand)(theta, &x, &mut acc);
                }
                self.state = Some(x);
                used + m as u64
            }
        };
        acc.0 /= m as f64;
        Ok((acc, used))
    }
}

impl<X: Clone> GradientOracle for McOracle<X> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn estimate(&mut self, theta: &ParamVector, iteration: usize, batch: usize, rng: &mut dyn RngCore) -> Result<OracleOutput> {
        check_dim(theta, self.dim)?;
        let m = batch.max(1);
        let (gradient, samples_used) = self.run(theta, m, rng).map_err(|e| Error::Oracle {
            iteration,
            source: Box::new(e),
        })?;
        Ok(OracleOutput { gradient, samples_used })
    }

    fn exact_gradient(&self, theta: &ParamVector) -> Option<Result<ParamVector>> {
        self.exact.as_ref().map(|f| f(theta))
    }

    fn reset(&mut self) {
        self.state = None;
    }
}
