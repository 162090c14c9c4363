//! Discrete Markov random fields
//! `f_θ(x) ∝ exp{Σ_i θ_ii B_0(x_i) + Σ_{j<i} θ_ij B(x_i, x_j)}` on `X^p`.
//!
//! The symmetric parameter matrix is stored packed: entry `(k, j)` with
//! `k ≤ j` sits at index `j(j+1)/2 + k`. The Euclidean inner product on the
//! packed vector is then the modified Frobenius product `Σ_{k≤j} θ_kj ϑ_kj`.

use std::sync::{Arc, OnceLock};

use nalgebra::DMatrix;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracles::{IidSource, InitPolicy, McOracle, SamplerKind};
use crate::prox::{BoxConstraint, ElasticNetPenalty, ParamVector, Penalty, SmoothObjective};

/// Largest `|X|^p` handled by enumeration.
pub const MAX_ENUMERATION: usize = 2_000_000;
/// Sufficient statistics are cached when `|X|^p · d` stays below this.
const CACHE_ENTRIES: usize = 4_000_000;

type PairFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
type SiteFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A configuration: one state index (into the state values) per node.
pub type Config = Vec<usize>;

#[derive(Clone)]
pub struct MrfModel {
    p: usize,
    values: Vec<f64>,
    b: PairFn,
    b0: SiteFn,
    data: Vec<Config>,
    data_mean: ParamVector,
    stats_cache: OnceLock<Option<Arc<Vec<f64>>>>,
}

impl std::fmt::Debug for MrfModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MrfModel")
            .field("p", &self.p)
            .field("values", &self.values)
            .field("n_data", &self.data.len())
            .finish()
    }
}

pub fn packed_dim(p: usize) -> usize {
    p * (p + 1) / 2
}

/// Packed index of the entry `(i, j)` of a symmetric `p × p` matrix.
pub fn packed_index(i: usize, j: usize) -> usize {
    let (k, j) = if i <= j { (i, j) } else { (j, i) };
    j * (j + 1) / 2 + k
}

pub fn pack(m: &DMatrix<f64>) -> ParamVector {
    let p = m.nrows();
    let mut out = ParamVector::zeros(packed_dim(p));
    for j in 0..p {
        for k in 0..=j {
            out[packed_index(k, j)] = m[(k, j)];
        }
    }
    out
}

pub fn unpack(theta: &ParamVector, p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(p, p, |i, j| theta[packed_index(i, j)])
}

impl MrfModel {
    /// General model over the state values `values` with pair function `b`
    /// (must be symmetric) and site function `b0`. `data` holds state
    /// indices and may be empty.
    pub fn new(
        p: usize,
        values: Vec<f64>,
        b: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        b0: impl Fn(f64) -> f64 + Send + Sync + 'static,
        data: Vec<Config>,
    ) -> Result<Self> {
        if p == 0 || values.is_empty() {
            return Err(Error::invalid("MRF needs p >= 1 and a nonempty state space"));
        }
        for x in &values {
            for y in &values {
                if b(*x, *y) != b(*y, *x) {
                    return Err(Error::invalid("pair function B must be symmetric"));
                }
            }
        }
        let mut model = MrfModel {
            p,
            values,
            b: Arc::new(b),
            b0: Arc::new(b0),
            data: Vec::new(),
            data_mean: ParamVector::zeros(packed_dim(p)),
            stats_cache: OnceLock::new(),
        };
        model.set_data(data)?;
        Ok(model)
    }

    /// Ising model on `{−1, 1}`: `B(x, y) = xy`, `B_0(x) = x`.
    pub fn ising(p: usize, data: Vec<Config>) -> Result<Self> {
        MrfModel::new(p, vec![-1.0, 1.0], |x, y| x * y, |x| x, data)
    }

    pub fn set_data(&mut self, data: Vec<Config>) -> Result<()> {
        let s = self.values.len();
        if data.iter().any(|x| x.len() != self.p || x.iter().any(|&v| v >= s)) {
            return Err(Error::invalid("data configuration has the wrong length or an unknown state"));
        }
        let mut mean = ParamVector::zeros(self.dim());
        for x in &data {
            self.add_stats(x, 1.0, &mut mean);
        }
        if !data.is_empty() {
            mean.0 /= data.len() as f64;
        }
        self.data = data;
        self.data_mean = mean;
        Ok(())
    }

    /// Replace the data by the model's own moments at `theta`, i.e. the
    /// infinite-sample limit of data drawn from `f_theta`. Without a penalty
    /// the minimizer of `−ℓ` is then `theta` itself.
    pub fn set_population(&mut self, theta: &ParamVector) -> Result<()> {
        let (_, mean) = self.enumerate(theta)?;
        self.data = Vec::new();
        self.data_mean = mean;
        Ok(())
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn n_states(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn data(&self) -> &[Config] {
        &self.data
    }

    /// `N⁻¹ Σ B̄(x^(i))`, packed.
    pub fn data_mean(&self) -> &ParamVector {
        &self.data_mean
    }

    pub fn dim(&self) -> usize {
        packed_dim(self.p)
    }

    /// `B̄(x)` as a symmetric matrix.
    pub fn suff_stats(&self, x: &[usize]) -> DMatrix<f64> {
        let v: Vec<f64> = x.iter().map(|&i| self.values[i]).collect();
        DMatrix::from_fn(self.p, self.p, |i, j| if i == j { (self.b0)(v[i]) } else { (self.b)(v[i], v[j]) })
    }

    /// Adds `w · B̄(x)` (packed) into `acc`.
    pub fn add_stats(&self, x: &[usize], w: f64, acc: &mut ParamVector) {
        for j in 0..self.p {
            let xj = self.values[x[j]];
            for k in 0..j {
                acc[packed_index(k, j)] += w * (self.b)(self.values[x[k]], xj);
            }
            acc[packed_index(j, j)] += w * (self.b0)(xj);
        }
    }

    /// `⟨θ, B̄(x)⟩`.
    pub fn energy(&self, theta: &ParamVector, x: &[usize]) -> f64 {
        let mut e = 0.0;
        for j in 0..self.p {
            let xj = self.values[x[j]];
            for k in 0..j {
                e += theta[packed_index(k, j)] * (self.b)(self.values[x[k]], xj);
            }
            e += theta[packed_index(j, j)] * (self.b0)(xj);
        }
        e
    }

    /// `osc(B)` and `osc(B_0)`.
    pub fn oscillations(&self) -> (f64, f64) {
        let mut pair = (f64::INFINITY, f64::NEG_INFINITY);
        let mut site = (f64::INFINITY, f64::NEG_INFINITY);
        for &x in &self.values {
            let s = (self.b0)(x);
            site = (site.0.min(s), site.1.max(s));
            for &y in &self.values {
                let v = (self.b)(x, y);
                pair = (pair.0.min(v), pair.1.max(v));
            }
        }
        (pair.1 - pair.0, site.1 - site.0)
    }

    /// `p((p−1)osc²(B) + osc²(B_0))`.
    pub fn lipschitz_bound(&self) -> f64 {
        let (ob, ob0) = self.oscillations();
        let p = self.p as f64;
        p * ((p - 1.0) * ob * ob + ob0 * ob0)
    }

    /// Sharper curvature bound `(p osc²(B_0) + p(p−1)/2 osc²(B))/4`: the
    /// Hessian of `−ℓ` is a covariance matrix, so its largest eigenvalue is
    /// at most its trace, and each variance is at most `osc²/4`.
    pub fn variance_lipschitz_bound(&self) -> f64 {
        let (ob, ob0) = self.oscillations();
        let p = self.p as f64;
        (p * ob0 * ob0 + 0.5 * p * (p - 1.0) * ob * ob) / 4.0
    }

    /// `|X|^p`, or an error when it exceeds the enumeration guard.
    pub fn n_configs(&self) -> Result<usize> {
        let s = self.values.len();
        let mut total: usize = 1;
        for _ in 0..self.p {
            total = total.checked_mul(s).filter(|&t| t <= MAX_ENUMERATION).ok_or_else(|| {
                Error::unsupported(format!(
                    "|X|^p exceeds {MAX_ENUMERATION}; use a Gibbs oracle instead of exact enumeration"
                ))
            })?;
        }
        Ok(total)
    }

    /// Configuration with mixed-radix index `c` (node 0 is the fastest digit).
    pub fn decode(&self, mut c: usize) -> Config {
        let s = self.values.len();
        (0..self.p)
            .map(|_| {
                let d = c % s;
                c /= s;
                d
            })
            .collect()
    }

    fn cached_stats(&self) -> Option<&Arc<Vec<f64>>> {
        self.stats_cache
            .get_or_init(|| {
                let n = self.n_configs().ok()?;
                let d = self.dim();
                if n.saturating_mul(d) > CACHE_ENTRIES {
                    return None;
                }
                let mut all = vec![0.0; n * d];
                let mut acc = ParamVector::zeros(d);
                for c in 0..n {
                    acc.fill(0.0);
                    self.add_stats(&self.decode(c), 1.0, &mut acc);
                    all[c * d..(c + 1) * d].copy_from_slice(acc.as_slice());
                }
                Some(Arc::new(all))
            })
            .as_ref()
    }

    /// Adds `w · B̄` of configuration index `c` into `acc`.
    fn add_stats_of(&self, c: usize, w: f64, acc: &mut ParamVector) {
        match self.cached_stats() {
            Some(all) => {
                let d = self.dim();
                for (a, s) in acc.iter_mut().zip(&all[c * d..(c + 1) * d]) {
                    *a += w * s;
                }
            }
            None => self.add_stats(&self.decode(c), w, acc),
        }
    }

    fn energy_of(&self, theta: &ParamVector, c: usize) -> f64 {
        match self.cached_stats() {
            Some(all) => {
                let d = self.dim();
                all[c * d..(c + 1) * d].iter().zip(theta.iter()).map(|(s, t)| s * t).sum()
            }
            None => self.energy(theta, &self.decode(c)),
        }
    }

    /// `(log Z_θ, E_θ[B̄])` by full enumeration.
    pub fn enumerate(&self, theta: &ParamVector) -> Result<(f64, ParamVector)> {
        self.check_theta(theta)?;
        let n = self.n_configs()?;
        let energies: Vec<f64> = (0..n).map(|c| self.energy_of(theta, c)).collect();
        let max = energies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        let mut mean = ParamVector::zeros(self.dim());
        for (c, e) in energies.iter().enumerate() {
            let w = (e - max).exp();
            z += w;
            self.add_stats_of(c, w, &mut mean);
        }
        mean.0 /= z;
        Ok((max + z.ln(), mean))
    }

    /// Probabilities `f_θ(x)` for every configuration index.
    pub fn probabilities(&self, theta: &ParamVector) -> Result<Vec<f64>> {
        self.check_theta(theta)?;
        let n = self.n_configs()?;
        let mut w: Vec<f64> = (0..n).map(|c| self.energy_of(theta, c)).collect();
        let max = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for v in w.iter_mut() {
            *v = (*v - max).exp();
            z += *v;
        }
        w.iter_mut().for_each(|v| *v /= z);
        Ok(w)
    }

    /// `n` i.i.d. configurations from `f_θ` by inversion of the enumerated
    /// distribution.
    pub fn sample_exact(&self, theta: &ParamVector, n: usize, rng: &mut dyn RngCore) -> Result<Vec<Config>> {
        let cdf = cumulative(&self.probabilities(theta)?);
        Ok((0..n).map(|_| self.decode(invert(&cdf, rng.random()))).collect())
    }

    /// `∇ℓ(θ) = N⁻¹ Σ B̄(x^(i)) − E_θ[B̄]` (packed).
    pub fn loglik_gradient(&self, theta: &ParamVector) -> Result<ParamVector> {
        let (_, mean) = self.enumerate(theta)?;
        Ok(self.data_mean.sub(&mean))
    }

    /// One systematic-scan Gibbs sweep: every site in turn is redrawn from
    /// its conditional given the others.
    pub fn gibbs_step(&self, theta: &ParamVector, x: &[usize], rng: &mut dyn RngCore) -> Config {
        let mut x = x.to_vec();
        let s = self.values.len();
        let mut logits = vec![0.0; s];
        for i in 0..self.p {
            for (v, l) in logits.iter_mut().enumerate() {
                let xv = self.values[v];
                let mut e = theta[packed_index(i, i)] * (self.b0)(xv);
                for (j, &xj) in x.iter().enumerate() {
                    if j != i {
                        e += theta[packed_index(i, j)] * (self.b)(xv, self.values[xj]);
                    }
                }
                *l = e;
            }
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let total: f64 = logits.iter().map(|l| (l - max).exp()).sum();
            let mut u = rng.random::<f64>() * total;
            let mut pick = s - 1;
            for (v, l) in logits.iter().enumerate() {
                u -= (l - max).exp();
                if u <= 0.0 {
                    pick = v;
                    break;
                }
            }
            x[i] = pick;
        }
        x
    }

    /// Configuration with every node drawn uniformly.
    pub fn uniform_config(&self, rng: &mut dyn RngCore) -> Config {
        (0..self.p).map(|_| rng.random_range(0..self.values.len())).collect()
    }

    /// `λ Σ_{k<j} |θ_kj|`, plus `0 ≤ θ_kj ≤ a` off the diagonal when `upper`
    /// is given; the diagonal is neither penalized nor constrained.
    pub fn penalty(&self, lambda: f64, upper: Option<f64>) -> Result<Penalty> {
        let d = self.dim();
        let mut mask = vec![false; d];
        for j in 0..self.p {
            for k in 0..j {
                mask[packed_index(k, j)] = true;
            }
        }
        let en = ElasticNetPenalty::new(lambda, 1.0, mask.clone())?;
        match upper {
            None => Ok(Penalty::ElasticNet(en)),
            Some(a) => {
                let lower = mask.iter().map(|&m| if m { 0.0 } else { f64::NEG_INFINITY }).collect();
                let upper = mask.iter().map(|&m| if m { a } else { f64::INFINITY }).collect();
                Penalty::composite(en, BoxConstraint::new(lower, upper)?)
            }
        }
    }

    /// Monte Carlo oracle for `∇(−ℓ)` with exact i.i.d. draws from `f_θ`.
    pub fn iid_oracle(&self) -> Result<McOracle<usize>> {
        self.n_configs()?;
        let model = self.clone();
        let exact = self.clone();
        Ok(McOracle::new(self.dim(), self.integrand(), SamplerKind::Iid(Box::new(EnumSampler { model, cdf: Vec::new() })))
            .with_exact_gradient(move |t| exact.gradient(t)))
    }

    /// Monte Carlo oracle for `∇(−ℓ)` driven by the Gibbs sweep. The exact
    /// gradient is attached when the model is enumerable.
    pub fn gibbs_oracle(&self, init: InitPolicy<Config>, burn_in: usize) -> McOracle<Config> {
        let model = self.clone();
        let data_mean = self.data_mean.clone();
        let stats_model = self.clone();
        let oracle = McOracle::new(
            self.dim(),
            move |_: &ParamVector, x: &Config, acc: &mut ParamVector| {
                stats_model.add_stats(x, 1.0, acc);
                acc.0 -= &data_mean.0;
            },
            SamplerKind::markov(move |t: &ParamVector, x: &Config, rng: &mut dyn RngCore| Ok(model.gibbs_step(t, x, rng)), init, burn_in),
        );
        if self.n_configs().is_ok() {
            let exact = self.clone();
            oracle.with_exact_gradient(move |t| exact.gradient(t))
        } else {
            oracle
        }
    }

    fn integrand(&self) -> impl Fn(&ParamVector, &usize, &mut ParamVector) + 'static {
        let model = self.clone();
        let data_mean = self.data_mean.clone();
        move |_, c, acc| {
            model.add_stats_of(*c, 1.0, acc);
            acc.0 -= &data_mean.0;
        }
    }

    fn check_theta(&self, theta: &ParamVector) -> Result<()> {
        if theta.dim() != self.dim() {
            return Err(Error::invalid(format!("MRF parameter must have {} packed entries, got {}", self.dim(), theta.dim())));
        }
        theta.check_finite("MRF parameter")
    }
}

/// `f = −ℓ`, evaluated by enumeration.
impl SmoothObjective for MrfModel {
    fn dim(&self) -> usize {
        packed_dim(self.p)
    }

    fn gradient(&self, theta: &ParamVector) -> Result<ParamVector> {
        let (_, mean) = self.enumerate(theta)?;
        Ok(mean.sub(&self.data_mean))
    }

    fn value(&self, theta: &ParamVector) -> Result<f64> {
        let (log_z, _) = self.enumerate(theta)?;
        Ok(log_z - theta.dot(&self.data_mean))
    }

    fn lipschitz(&self) -> Option<f64> {
        Some(self.lipschitz_bound())
    }
}

fn cumulative(probs: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    probs
        .iter()
        .map(|p| {
            acc += p;
            acc
        })
        .collect()
}

fn invert(cdf: &[f64], u: f64) -> usize {
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
}

struct EnumSampler {
    model: MrfModel,
    cdf: Vec<f64>,
}

impl IidSource<usize> for EnumSampler {
    fn prepare(&mut self, theta: &ParamVector) -> Result<()> {
        self.cdf = cumulative(&self.model.probabilities(theta)?);
        Ok(())
    }

    fn draw(&mut self, _theta: &ParamVector, rng: &mut dyn RngCore) -> Result<usize> {
        Ok(invert(&self.cdf, rng.random()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LipschitzCheck {
    pub max_ratio: f64,
    pub bound: f64,
    pub pairs: usize,
}

impl LipschitzCheck {
    pub fn passed(&self) -> bool {
        self.max_ratio <= self.bound + 1e-8
    }
}

/// Largest `‖∇ℓ(θ) − ∇ℓ(ϑ)‖/‖θ − ϑ‖` over `pairs` random pairs with
/// entries uniform on `[−1, 1]`, against the oscillation bound.
pub fn mrf_lipschitz_check(model: &MrfModel, pairs: usize, rng: &mut dyn RngCore) -> Result<LipschitzCheck> {
    let d = model.dim();
    let draw = |rng: &mut dyn RngCore| ParamVector::from_vec((0..d).map(|_| rng.random_range(-1.0..=1.0)).collect());
    let mut max_ratio: f64 = 0.0;
    let mut done = 0;
    while done < pairs {
        let a = draw(rng);
        let b = draw(rng);
        let dist = a.distance(&b);
        if dist == 0.0 {
            continue;
        }
        let diff = model.loglik_gradient(&a)?.distance(&model.loglik_gradient(&b)?);
        max_ratio = max_ratio.max(diff / dist);
        done += 1;
    }
    Ok(LipschitzCheck {
        max_ratio,
        bound: model.lipschitz_bound(),
        pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn packing_round_trip() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 5.0, 3.0, 5.0, 6.0]);
        let packed = pack(&m);
        assert_eq!(packed.as_slice(), &[1.0, 2.0, 4.0, 3.0, 5.0, 6.0]);
        assert_eq!(unpack(&packed, 3), m);
        assert_eq!(packed_index(2, 0), packed_index(0, 2));
    }

    #[test]
    fn ising_stats() {
        let model = MrfModel::ising(2, vec![]).unwrap();
        // x = (+1, −1): state indices (1, 0)
        let s = model.suff_stats(&[1, 0]);
        assert_eq!(s, DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, -1.0]));
        let one = MrfModel::ising(1, vec![]).unwrap();
        assert_eq!(one.suff_stats(&[0]), DMatrix::from_element(1, 1, -1.0));
        assert_eq!(model.oscillations(), (2.0, 2.0));
        assert_eq!(MrfModel::ising(5, vec![]).unwrap().lipschitz_bound(), 100.0);
        assert_eq!(MrfModel::ising(4, vec![]).unwrap().variance_lipschitz_bound(), 10.0);
    }

    #[test]
    fn population_moments_make_theta_stationary() {
        let mut model = MrfModel::ising(3, vec![]).unwrap();
        let theta = ParamVector::from_vec((0..6).map(|i| 0.3 * i as f64 - 0.5).collect());
        model.set_population(&theta).unwrap();
        assert!(model.gradient(&theta).unwrap().norm() < 1e-12);
        assert!(model.data().is_empty());
    }

    #[test]
    fn zero_parameter_gradient_is_data_mean() {
        let data = vec![vec![1, 1, 0], vec![1, 0, 0]];
        let model = MrfModel::ising(3, data).unwrap();
        let g = model.loglik_gradient(&ParamVector::zeros(6)).unwrap();
        assert!(g.sub(model.data_mean()).norm() < 1e-14);
        assert!((model.value(&ParamVector::zeros(6)).unwrap() - 3.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn strong_coupling_saturates() {
        let model = MrfModel::ising(2, vec![]).unwrap();
        let theta = ParamVector::from_slice(&[0.0, 20.0, 0.0]);
        let (_, mean) = model.enumerate(&theta).unwrap();
        assert!((mean[packed_index(0, 1)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gibbs_at_zero_is_uniform() {
        let model = MrfModel::ising(3, vec![]).unwrap();
        let mut rng = crate::stream(1);
        let mut counts = [0usize; 2];
        let mut x = vec![0, 0, 0];
        for _ in 0..20_000 {
            x = model.gibbs_step(&ParamVector::zeros(6), &x, &mut rng);
            counts[x[1]] += 1;
        }
        let frac = counts[1] as f64 / 20_000.0;
        assert!((frac - 0.5).abs() < 0.02, "{frac}");
    }

    #[test]
    fn enumeration_guard() {
        let big = MrfModel::ising(22, vec![]).unwrap();
        assert!(matches!(big.n_configs(), Err(Error::Unsupported(_))));
        assert!(big.gradient(&ParamVector::zeros(big.dim())).is_err());
    }

    #[test]
    fn penalty_masks_diagonal() {
        let model = MrfModel::ising(3, vec![]).unwrap();
        let pen = model.penalty(1.0, Some(2.0)).unwrap();
        let theta = ParamVector::from_slice(&[5.0, -3.0, 7.0, 1.0, 1.0, -2.0]);
        let out = pen.prox(&theta, 0.5).unwrap();
        // diagonal entries (indices 0, 2, 5) pass through; off-diagonals are
        // soft-thresholded by 0.5 then clamped to [0, 2]
        assert_eq!(out.as_slice(), &[5.0, 0.0, 7.0, 0.5, 0.5, -2.0]);
    }
}
