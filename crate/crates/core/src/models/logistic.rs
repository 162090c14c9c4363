//! Logistic regression with Gaussian random effects,
//!
//! ```text
//! P(Y_i = 1 | U) = s(x_iᵀβ + σ z_iᵀU),   U ~ N(0, I_q),   s(t) = eᵗ/(1 + eᵗ),
//! ```
//!
//! with parameter `θ = (β_1, …, β_p, σ)`. The gradient of `−ℓ` is
//! `E_{π_θ}[H_θ(U)]` under the posterior of `U`, sampled by a two-block
//! Polya-Gamma Gibbs sampler.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use super::polya_gamma::sample_polya_gamma;
use crate::error::{Error, Result};
use crate::oracles::{GradientOracle, OracleOutput};
use crate::prox::{BoxConstraint, ElasticNetPenalty, ParamVector, Penalty};

/// Lower end of the box on `σ`.
pub const SIGMA_FLOOR: f64 = 1e-6;

fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogisticREModel {
    x: DMatrix<f64>,
    z: DMatrix<f64>,
    y: DVector<f64>,
}

/// State `(u, w)` of the augmented Gibbs sampler.
#[derive(Clone, Debug, PartialEq)]
pub struct GibbsState {
    pub u: DVector<f64>,
    pub w: DVector<f64>,
}

impl LogisticREModel {
    pub fn new(x: DMatrix<f64>, z: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        let n = y.len();
        if x.nrows() != n || z.nrows() != n {
            return Err(Error::invalid(format!(
                "X has {} rows, Z has {}, Y has {n} entries",
                x.nrows(),
                z.nrows()
            )));
        }
        if z.ncols() == 0 {
            return Err(Error::invalid("at least one random effect is required"));
        }
        if y.iter().any(|v| *v != 0.0 && *v != 1.0) {
            return Err(Error::invalid("responses must be 0 or 1"));
        }
        Ok(LogisticREModel { x, z, y })
    }

    pub fn n_obs(&self) -> usize {
        self.y.len()
    }

    pub fn n_covariates(&self) -> usize {
        self.x.ncols()
    }

    pub fn n_effects(&self) -> usize {
        self.z.ncols()
    }

    /// `p + 1`.
    pub fn dim(&self) -> usize {
        self.x.ncols() + 1
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn z(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    fn split(&self, theta: &ParamVector) -> Result<(DVector<f64>, f64)> {
        if theta.dim() != self.dim() {
            return Err(Error::invalid(format!("expected dimension {}, got {}", self.dim(), theta.dim())));
        }
        let p = self.n_covariates();
        Ok((theta.0.rows(0, p).into_owned(), theta[p]))
    }

    /// `Xβ`.
    pub fn linear_predictor(&self, theta: &ParamVector) -> Result<DVector<f64>> {
        let (beta, _) = self.split(theta)?;
        Ok(&self.x * beta)
    }

    /// `H_θ(u) = −Σ_i (Y_i − s(x_iᵀβ + σz_iᵀu)) (x_i, z_iᵀu)`.
    pub fn logistic_h(&self, theta: &ParamVector, u: &DVector<f64>) -> Result<ParamVector> {
        let xb = self.linear_predictor(theta)?;
        let mut acc = HAccumulator::new(self.n_obs());
        acc.add(self, &xb, theta[self.n_covariates()], u);
        Ok(acc.finish(self, 1))
    }

    /// Mean and covariance of `u | w, Y`:
    /// `Γ = (I + σ² Σ w_i z_iz_iᵀ)⁻¹`, `μ = σΓ Σ((Y_i − ½) − w_i x_iᵀβ) z_i`.
    pub fn conditional_u(&self, theta: &ParamVector, w: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let xb = self.linear_predictor(theta)?;
        let (mu, chol) = self.conditional_u_factor(&xb, theta[self.n_covariates()], w)?;
        Ok((mu, chol.inverse()))
    }

    fn conditional_u_factor(
        &self,
        xb: &DVector<f64>,
        sigma: f64,
        w: &DVector<f64>,
    ) -> Result<(DVector<f64>, nalgebra::Cholesky<f64, nalgebra::Dyn>)> {
        let q = self.n_effects();
        let mut precision = DMatrix::identity(q, q);
        let mut rhs = DVector::zeros(q);
        for i in 0..self.n_obs() {
            let zi = self.z.row(i);
            let wi = w[i];
            for a in 0..q {
                if zi[a] == 0.0 {
                    continue;
                }
                rhs[a] += sigma * ((self.y[i] - 0.5) - wi * xb[i]) * zi[a];
                for b in 0..q {
                    precision[(a, b)] += sigma * sigma * wi * zi[a] * zi[b];
                }
            }
        }
        let chol = match precision.clone().cholesky() {
            Some(c) => c,
            None => (precision + DMatrix::identity(q, q) * 1e-12)
                .cholesky()
                .ok_or_else(|| Error::Numerical("conditional precision of u is not positive definite".into()))?,
        };
        let mu = chol.solve(&rhs);
        Ok((mu, chol))
    }

    fn draw_w(&self, xb: &DVector<f64>, sigma: f64, u: &DVector<f64>, rng: &mut dyn RngCore) -> Result<DVector<f64>> {
        let zu = &self.z * u;
        let mut w = DVector::zeros(self.n_obs());
        for i in 0..self.n_obs() {
            w[i] = sample_polya_gamma((xb[i] + sigma * zu[i]).abs(), rng)?;
        }
        Ok(w)
    }

    fn step_with(&self, xb: &DVector<f64>, sigma: f64, state: &GibbsState, rng: &mut dyn RngCore) -> Result<GibbsState> {
        let (mu, chol) = self.conditional_u_factor(xb, sigma, &state.w)?;
        let xi = DVector::from_fn(self.n_effects(), |_, _| rng.sample::<f64, _>(StandardNormal));
        // Cov = P⁻¹ = L⁻ᵀL⁻¹, so μ + L⁻ᵀξ has the right law.
        let lt = chol.l().transpose();
        let shift = lt
            .solve_upper_triangular(&xi)
            .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
        let u = mu + shift;
        let w = self.draw_w(xb, sigma, &u, rng)?;
        Ok(GibbsState { u, w })
    }

    /// One sweep: `u | w` from its Gaussian conditional, then
    /// `w_i | u ~ PG(1, |x_iᵀβ + σz_iᵀu|)`.
    pub fn gibbs_step(&self, theta: &ParamVector, state: &GibbsState, rng: &mut dyn RngCore) -> Result<GibbsState> {
        let xb = self.linear_predictor(theta)?;
        self.step_with(&xb, theta[self.n_covariates()], state, rng)
    }

    /// `u ~ N(0, I)` followed by `w | u`.
    pub fn prior_state(&self, theta: &ParamVector, rng: &mut dyn RngCore) -> Result<GibbsState> {
        let xb = self.linear_predictor(theta)?;
        let u = DVector::from_fn(self.n_effects(), |_, _| rng.sample::<f64, _>(StandardNormal));
        let w = self.draw_w(&xb, theta[self.n_covariates()], &u, rng)?;
        Ok(GibbsState { u, w })
    }

    /// `Σ_i (Y_i η_i − log(1 + e^{η_i}))` given `η`.
    fn conditional_loglik(&self, eta: impl Iterator<Item = f64>) -> f64 {
        eta.zip(self.y.iter()).map(|(e, y)| y * e - softplus(e)).sum()
    }

    /// Elastic net on `β` only, with `σ ≥ SIGMA_FLOOR`.
    pub fn penalty(&self, lambda: f64, alpha: f64) -> Result<Penalty> {
        let p = self.n_covariates();
        let mut mask = vec![true; p + 1];
        mask[p] = false;
        let en = ElasticNetPenalty::new(lambda, alpha, mask)?;
        let mut lower = vec![f64::NEG_INFINITY; p + 1];
        lower[p] = SIGMA_FLOOR;
        let bx = BoxConstraint::new(lower, vec![f64::INFINITY; p + 1])?;
        Penalty::composite(en, bx)
    }

    /// Gibbs-chain oracle. Warm chains start from `u = 0` and continue across
    /// calls; fresh chains start from the prior at every call.
    pub fn oracle(self: &Arc<Self>, warm: bool, burn_in: usize) -> LogisticOracle {
        LogisticOracle {
            model: Arc::clone(self),
            warm,
            burn_in,
            state: None,
        }
    }
}

/// Accumulates `Σ_j H_θ(u_j)` with one `Xᵀr` product at the end.
struct HAccumulator {
    residual_sum: DVector<f64>,
    sigma_term: f64,
}

impl HAccumulator {
    fn new(n: usize) -> Self {
        HAccumulator {
            residual_sum: DVector::zeros(n),
            sigma_term: 0.0,
        }
    }

    fn add(&mut self, model: &LogisticREModel, xb: &DVector<f64>, sigma: f64, u: &DVector<f64>) {
        let zu = &model.z * u;
        for i in 0..model.n_obs() {
            let r = model.y[i] - sigmoid(xb[i] + sigma * zu[i]);
            self.residual_sum[i] += r;
            self.sigma_term += r * zu[i];
        }
    }

    fn finish(self, model: &LogisticREModel, count: usize) -> ParamVector {
        let p = model.n_covariates();
        let mut h = DVector::zeros(p + 1);
        h.rows_mut(0, p).copy_from(&(model.x.tr_mul(&self.residual_sum) * -1.0));
        h[p] = -self.sigma_term;
        ParamVector(h / count as f64)
    }
}

/// `m⁻¹ Σ_j H_θ(u_j)` along the Polya-Gamma Gibbs chain.
pub struct LogisticOracle {
    model: Arc<LogisticREModel>,
    warm: bool,
    burn_in: usize,
    state: Option<GibbsState>,
}

impl LogisticOracle {
    pub fn chain_state(&self) -> Option<&GibbsState> {
        self.state.as_ref()
    }
}

impl GradientOracle for LogisticOracle {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn estimate(&mut self, theta: &ParamVector, iteration: usize, batch: usize, rng: &mut dyn RngCore) -> Result<OracleOutput> {
        let wrap = |e: Error| Error::Oracle {
            iteration,
            source: Box::new(e),
        };
        let model = &*self.model;
        let xb = model.linear_predictor(theta)?;
        let sigma = theta[model.n_covariates()];
        let m = batch.max(1);
        let mut used = 0u64;
        let mut state = match (self.warm, self.state.take()) {
            (true, Some(s)) => s,
            (warm, _) => {
                let mut s = if warm {
                    let u = DVector::zeros(model.n_effects());
                    let w = model.draw_w(&xb, sigma, &u, rng).map_err(wrap)?;
                    GibbsState { u, w }
                } else {
                    model.prior_state(theta, rng).map_err(wrap)?
                };
                for _ in 0..self.burn_in {
                    s = model.step_with(&xb, sigma, &s, rng).map_err(wrap)?;
                }
                used += self.burn_in as u64;
                s
            }
        };
        let mut acc = HAccumulator::new(model.n_obs());
        for _ in 0..m {
            state = model.step_with(&xb, sigma, &state, rng).map_err(wrap)?;
            acc.add(model, &xb, sigma, &state.u);
        }
        self.state = Some(state);
        Ok(OracleOutput {
            gradient: acc.finish(model, m),
            samples_used: used + m as u64,
        })
    }

    fn reset(&mut self) {
        self.state = None;
    }
}

/// Fixed panel `u^(1..S) ~ N(0, I_q)` so that `ℓ̂(θ)` uses common random
/// numbers across `θ`.
#[derive(Clone, Debug)]
pub struct LoglikPanel {
    draws: DMatrix<f64>,
}

pub const DEFAULT_PANEL_SIZE: usize = 10_000;

impl LoglikPanel {
    pub fn new(q: usize, n_samples: usize, rng: &mut dyn RngCore) -> Result<Self> {
        if n_samples == 0 {
            return Err(Error::invalid("log-likelihood panel needs at least one draw"));
        }
        Ok(LoglikPanel {
            draws: DMatrix::from_fn(q, n_samples, |_, _| rng.sample::<f64, _>(StandardNormal)),
        })
    }

    pub fn len(&self) -> usize {
        self.draws.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.ncols() == 0
    }

    /// `log S⁻¹ Σ_j Π_i P(Y_i | u^(j))`, in log-sum-exp form.
    pub fn loglik(&self, model: &LogisticREModel, theta: &ParamVector) -> Result<f64> {
        if self.draws.nrows() != model.n_effects() {
            return Err(Error::invalid("panel dimension differs from the number of random effects"));
        }
        if model.n_obs() == 0 {
            return Ok(0.0);
        }
        let xb = model.linear_predictor(theta)?;
        let sigma = theta[model.n_covariates()];
        let zu = &model.z * &self.draws;
        let terms: Vec<f64> = (0..self.len())
            .map(|j| model.conditional_loglik((0..model.n_obs()).map(|i| xb[i] + sigma * zu[(i, j)])))
            .collect();
        Ok(log_sum_exp(&terms) - (self.len() as f64).ln())
    }
}

/// Prior Monte Carlo estimate of `ℓ(θ)` from `n_samples` fresh draws.
pub fn logistic_loglik_mc(theta: &ParamVector, model: &LogisticREModel, n_samples: usize, rng: &mut dyn RngCore) -> Result<f64> {
    LoglikPanel::new(model.n_effects(), n_samples, rng)?.loglik(model, theta)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SecondMomentCheck {
    pub estimate: f64,
    pub standard_error: f64,
    /// `√(q(2 + q))`.
    pub bound: f64,
}

impl SecondMomentCheck {
    pub fn passed(&self) -> bool {
        self.estimate <= self.bound + 3.0 * self.standard_error
    }
}

/// Gibbs estimate of `∫‖u‖² π_θ(du)` against `√(q(2 + q))`. The chain starts
/// from the prior, discards a tenth of `chain_length` and uses batch means
/// (20 batches) for the standard error.
pub fn second_moment_check(
    theta: &ParamVector,
    model: &LogisticREModel,
    chain_length: usize,
    rng: &mut dyn RngCore,
) -> Result<SecondMomentCheck> {
    const BATCHES: usize = 20;
    if chain_length < BATCHES {
        return Err(Error::invalid(format!("chain_length must be >= {BATCHES}")));
    }
    let xb = model.linear_predictor(theta)?;
    let sigma = theta[model.n_covariates()];
    let mut state = model.prior_state(theta, rng)?;
    for _ in 0..chain_length / 10 {
        state = model.step_with(&xb, sigma, &state, rng)?;
    }
    let per_batch = chain_length / BATCHES;
    let mut means = Vec::with_capacity(BATCHES);
    for _ in 0..BATCHES {
        let mut s = 0.0;
        for _ in 0..per_batch {
            state = model.step_with(&xb, sigma, &state, rng)?;
            s += state.u.norm_squared();
        }
        means.push(s / per_batch as f64);
    }
    let mean = means.iter().sum::<f64>() / BATCHES as f64;
    let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (BATCHES - 1) as f64;
    let q = model.n_effects() as f64;
    Ok(SecondMomentCheck {
        estimate: mean,
        standard_error: (var / BATCHES as f64).sqrt(),
        bound: (q * (2.0 + q)).sqrt(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_obs: usize,
    pub n_covariates: usize,
    pub n_effects: usize,
    /// Correlation between neighbouring columns of `X`.
    pub ar_rho: f64,
    /// Fraction of `β` set to zero.
    pub sparsity: f64,
    pub beta_range: (f64, f64),
    pub sigma2: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    /// `N = 100`, `p = 200`, `q = 5`, `λ = 6`: the large design shrunk while
    /// keeping `λ/N`.
    pub fn desk() -> Self {
        SyntheticSpec {
            n_obs: 100,
            n_covariates: 200,
            n_effects: 5,
            ar_rho: 0.8,
            sparsity: 0.98,
            beta_range: (1.0, 5.0),
            sigma2: 0.1,
            lambda: 6.0,
            alpha: 1.0,
            seed: 0,
        }
    }

    /// `N = 500`, `p = 1000`, `q = 5`, `λ = 30`.
    pub fn full() -> Self {
        SyntheticSpec {
            n_obs: 500,
            n_covariates: 1000,
            lambda: 30.0,
            ..SyntheticSpec::desk()
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = self.n_obs > 0
            && self.n_covariates > 0
            && self.n_effects > 0
            && self.ar_rho.abs() < 1.0
            && (0.0..=1.0).contains(&self.sparsity)
            && self.beta_range.0 <= self.beta_range.1
            && self.sigma2 >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("bad synthetic spec {self:?}")))
        }
    }
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec::desk()
    }
}

pub struct SyntheticInstance {
    pub model: LogisticREModel,
    pub beta_true: DVector<f64>,
    /// `(β_true, σ_true)`.
    pub theta_true: ParamVector,
}

/// `z_i = e_{⌈iq/N⌉}` for 1-based `i`: consecutive blocks of observations
/// share a random effect.
pub fn repeated_measures_design(n: usize, q: usize) -> DMatrix<f64> {
    let mut z = DMatrix::zeros(n, q);
    for i in 0..n {
        let k = ((i + 1) * q).div_ceil(n);
        z[(i, k - 1)] = 1.0;
    }
    z
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticInstance> {
    spec.validate()?;
    let (n, p, q) = (spec.n_obs, spec.n_covariates, spec.n_effects);
    let mut rng = crate::stream(spec.seed);
    let innovation = (1.0 - spec.ar_rho * spec.ar_rho).sqrt();
    let mut x = DMatrix::zeros(n, p);
    for i in 0..n {
        x[(i, 0)] = rng.sample::<f64, _>(StandardNormal);
    }
    for j in 1..p {
        for i in 0..n {
            let e: f64 = rng.sample(StandardNormal);
            x[(i, j)] = spec.ar_rho * x[(i, j - 1)] + innovation * e;
        }
    }
    let (lo, hi) = spec.beta_range;
    let width = Uniform::new_inclusive(lo, hi).map_err(|e| Error::invalid(e.to_string()))?;
    let mut beta = DVector::from_fn(p, |_, _| width.sample(&mut rng));
    let n_zero = (spec.sparsity * p as f64).round() as usize;
    for j in rand::seq::index::sample(&mut rng, p, n_zero.min(p)) {
        beta[j] = 0.0;
    }
    let z = repeated_measures_design(n, q);
    let sigma = spec.sigma2.sqrt();
    let u = DVector::from_fn(q, |_, _| rng.sample::<f64, _>(StandardNormal));
    let eta = &x * &beta + &z * &u * sigma;
    let y = eta.map(|e| if rng.random::<f64>() < sigmoid(e) { 1.0 } else { 0.0 });
    let mut theta = DVector::zeros(p + 1);
    theta.rows_mut(0, p).copy_from(&beta);
    theta[p] = sigma;
    Ok(SyntheticInstance {
        model: LogisticREModel::new(x, z, y)?,
        beta_true: beta,
        theta_true: ParamVector(theta),
    })
}
