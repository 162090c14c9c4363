//! Property suites that check the implementation against independent
//! references: brute-force minimization for the proximal maps, the standard
//! proximal-gradient inequalities on random convex quadratics, quadrature
//! for the Polya-Gamma sampler, and the curvature and moment bounds of the
//! two likelihood models.
//!
//! Each suite returns a [`CheckOutcome`]; `passed` compares the worst
//! observed violation against the stated tolerance.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::models::logistic::{generate_synthetic, second_moment_check, SyntheticSpec};
use crate::models::mrf::{mrf_lipschitz_check, MrfModel};
use crate::models::polya_gamma::{pg_density, sample_polya_gamma};
use crate::prox::{
    composite_value, proximal_map, surrogate_value, BoxConstraint, ElasticNetPenalty, FnObjective, ParamVector, Penalty,
    SmoothObjective,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub cases: usize,
    /// Largest violation (or deviation) seen; compared with `tolerance`.
    pub worst: f64,
    pub tolerance: f64,
    pub elapsed_seconds: f64,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: &str, cases: usize, worst: f64, tolerance: f64, start: Instant) -> Self {
        CheckOutcome {
            name: name.to_string(),
            passed: worst <= tolerance,
            cases,
            worst,
            tolerance,
            elapsed_seconds: start.elapsed().as_secs_f64(),
            detail: String::new(),
        }
    }

    fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }
}

fn gauss(rng: &mut dyn RngCore) -> f64 {
    rng.sample(StandardNormal)
}

/// One-dimensional penalty ingredients, kept in plain numbers so that the
/// brute-force reference does not go through the library's penalty code.
#[derive(Clone, Copy, Debug)]
struct Scalar {
    lambda: f64,
    alpha: f64,
    penalized: bool,
    lower: f64,
    upper: f64,
}

impl Scalar {
    fn random(rng: &mut dyn RngCore, with_penalty: bool, with_box: bool) -> Self {
        let (lower, upper) = if with_box {
            let a = 3.0 * gauss(rng);
            let b = a + rng.random_range(0.0..4.0);
            let lower = if rng.random_bool(0.2) { f64::NEG_INFINITY } else { a };
            let upper = if rng.random_bool(0.2) { f64::INFINITY } else { b };
            (lower, upper)
        } else {
            (f64::NEG_INFINITY, f64::INFINITY)
        };
        Scalar {
            lambda: if with_penalty { rng.random_range(0.0..3.0) } else { 0.0 },
            alpha: rng.random_range(0.0..=1.0),
            penalized: with_penalty && rng.random_bool(0.8),
            lower,
            upper,
        }
    }

    /// `h(x) − h(y)` for `h(x) = g(x) + (x − θ)²/(2γ)`, factored so that the
    /// comparison keeps its precision near the minimum.
    fn h_diff(&self, x: f64, y: f64, theta: f64, gamma: f64) -> f64 {
        let quad = (x - y) * (x + y - 2.0 * theta) / (2.0 * gamma);
        if !self.penalized {
            return quad;
        }
        let pen = self.lambda * (0.5 * (1.0 - self.alpha) * (x - y) * (x + y) + self.alpha * (x.abs() - y.abs()));
        pen + quad
    }

    /// Golden-section minimization of `g(x) + (x − θ)²/(2γ)` over the box.
    fn brute_prox(&self, theta: f64, gamma: f64) -> f64 {
        let radius = theta.abs() + 1.0 + [self.lower, self.upper].iter().filter(|v| v.is_finite()).map(|v| v.abs()).sum::<f64>();
        let mut a = self.lower.max(theta - radius);
        let mut b = self.upper.min(theta + radius);
        let phi = 0.5 * (5f64.sqrt() - 1.0);
        let mut c = b - phi * (b - a);
        let mut d = a + phi * (b - a);
        for _ in 0..300 {
            if b - a < 1e-14 * (1.0 + b.abs()) {
                break;
            }
            if self.h_diff(c, d, theta, gamma) <= 0.0 {
                b = d;
                d = c;
                c = b - phi * (b - a);
            } else {
                a = c;
                c = d;
                d = a + phi * (b - a);
            }
        }
        0.5 * (a + b)
    }

    fn penalty(&self, kind: usize) -> Result<Penalty> {
        let en = ElasticNetPenalty::new(self.lambda, self.alpha, vec![self.penalized])?;
        let bx = BoxConstraint::new(vec![self.lower], vec![self.upper])?;
        Ok(match kind {
            0 => Penalty::ElasticNet(en),
            1 => Penalty::Box(bx),
            _ => Penalty::Composite(en, bx),
        })
    }
}

/// Proximal maps of the elastic net, the box and their composite against
/// golden-section minimization on random 1-D instances; tolerance 1e−6.
pub fn prox_oracle_equivalence(cases: usize, seed: u64) -> Result<CheckOutcome> {
    let start = Instant::now();
    let mut rng = crate::stream(seed);
    let mut worst: f64 = 0.0;
    for i in 0..cases {
        let kind = i % 3;
        let s = Scalar::random(&mut rng, kind != 1, kind != 0);
        let penalty = s.penalty(kind)?;
        let theta = 4.0 * gauss(&mut rng);
        let gamma = rng.random_range(0.01..3.0);
        let got = penalty.prox(&ParamVector::from_slice(&[theta]), gamma)?[0];
        worst = worst.max((got - s.brute_prox(theta, gamma)).abs());
    }
    Ok(CheckOutcome::new("prox matches brute-force minimization", cases, worst, 1e-6, start))
}

/// Random separable penalty in dimension `dim`: elastic net, box or both.
fn random_penalty(dim: usize, rng: &mut dyn RngCore) -> Result<Penalty> {
    let kind = rng.random_range(0..3);
    let lambda = rng.random_range(0.0..3.0);
    let alpha = rng.random_range(0.0..=1.0);
    let mask: Vec<bool> = (0..dim).map(|_| rng.random_bool(0.8)).collect();
    let en = ElasticNetPenalty::new(lambda, alpha, mask)?;
    let mut lower = Vec::with_capacity(dim);
    let mut upper = Vec::with_capacity(dim);
    for _ in 0..dim {
        let a = 2.0 * gauss(rng);
        lower.push(if rng.random_bool(0.2) { f64::NEG_INFINITY } else { a });
        let b = a + rng.random_range(0.1..4.0);
        upper.push(if rng.random_bool(0.2) { f64::INFINITY } else { b });
    }
    let bx = BoxConstraint::new(lower, upper)?;
    Ok(match kind {
        0 => Penalty::ElasticNet(en),
        1 => Penalty::Box(bx),
        _ => Penalty::Composite(en, bx),
    })
}

/// A point of `Dom(g)`: a Gaussian draw clamped into the box.
fn feasible_point(penalty: &Penalty, rng: &mut dyn RngCore) -> ParamVector {
    let mut v = ParamVector::from_vec((0..penalty.dim()).map(|_| 3.0 * gauss(rng)).collect());
    if let Penalty::Box(bx) | Penalty::Composite(_, bx) = penalty {
        for i in 0..v.dim() {
            v[i] = v[i].clamp(bx.lower[i], bx.upper[i]);
        }
    }
    v
}

/// `f(θ) = ½θᵀAθ − bᵀθ` with a random positive semidefinite `A`.
fn random_quadratic(dim: usize, rng: &mut dyn RngCore) -> FnObjective {
    let m = DMatrix::from_fn(dim, dim, |_, _| gauss(rng));
    let a = m.tr_mul(&m) / dim as f64;
    let b = DVector::from_fn(dim, |_, _| gauss(rng));
    let l = a.symmetric_eigenvalues().max().max(1e-12);
    let (a2, b2) = (a.clone(), b.clone());
    FnObjective::new(dim, move |t| ParamVector(&a * &t.0 - &b))
        .with_value(move |t| 0.5 * t.0.dot(&(&a2 * &t.0)) - b2.dot(&t.0))
        .with_lipschitz(l)
}

struct Case {
    obj: FnObjective,
    penalty: Penalty,
    l: f64,
}

fn random_case(rng: &mut dyn RngCore) -> Result<Case> {
    let dim = rng.random_range(1..=5);
    let obj = random_quadratic(dim, rng);
    let l = obj.lipschitz().expect("set above");
    Ok(Case {
        penalty: random_penalty(dim, rng)?,
        obj,
        l,
    })
}

/// Firm nonexpansiveness and the 1-Lipschitz property of the proximal map,
/// tolerance 1e−10.
pub fn firm_nonexpansiveness(cases: usize, seed: u64) -> Result<Vec<CheckOutcome>> {
    let start = Instant::now();
    let mut rng = crate::stream(seed);
    let (mut worst_firm, mut worst_lip): (f64, f64) = (0.0, 0.0);
    for _ in 0..cases {
        let dim = rng.random_range(1..=5);
        let penalty = random_penalty(dim, &mut rng)?;
        let gamma = rng.random_range(0.01..3.0);
        let x = ParamVector::from_vec((0..dim).map(|_| 4.0 * gauss(&mut rng)).collect());
        let y = ParamVector::from_vec((0..dim).map(|_| 4.0 * gauss(&mut rng)).collect());
        let (px, py) = (penalty.prox(&x, gamma)?, penalty.prox(&y, gamma)?);
        let dp = px.sub(&py);
        worst_firm = worst_firm.max(dp.norm_squared() - dp.dot(&x.sub(&y)));
        worst_lip = worst_lip.max(dp.norm() - x.distance(&y));
    }
    Ok(vec![
        CheckOutcome::new("prox is firmly nonexpansive", cases, worst_firm, 1e-10, start),
        CheckOutcome::new("prox is 1-Lipschitz", cases, worst_lip, 1e-10, start),
    ])
}

/// `γ(g(p) − g(ϑ)) ≤ −⟨p − ϑ, p − θ⟩` with `p = Prox_γ(θ)`, tolerance 1e−10.
pub fn optimality_inequality(cases: usize, seed: u64) -> Result<CheckOutcome> {
    let start = Instant::now();
    let mut rng = crate::stream(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let dim = rng.random_range(1..=5);
        let penalty = random_penalty(dim, &mut rng)?;
        let gamma = rng.random_range(0.01..3.0);
        let theta = ParamVector::from_vec((0..dim).map(|_| 4.0 * gauss(&mut rng)).collect());
        let probe = feasible_point(&penalty, &mut rng);
        let p = penalty.prox(&theta, gamma)?;
        let lhs = gamma * (penalty.value(&p) - penalty.value(&probe));
        let rhs = -p.sub(&probe).dot(&p.sub(&theta));
        worst = worst.max(lhs - rhs);
    }
    Ok(CheckOutcome::new("prox optimality inequality", cases, worst, 1e-10, start))
}

/// `Q_γ(ϑ|θ) ≥ F(ϑ)` for `γ ≤ 1/L`, tolerance 1e−10.
pub fn majorization(cases: usize, seed: u64) -> Result<CheckOutcome> {
    let start = Instant::now();
    let mut rng = crate::stream(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let c = random_case(&mut rng)?;
        let gamma = rng.random_range(0.01..=1.0) / c.l;
        let theta = feasible_point(&c.penalty, &mut rng);
        let probe = feasible_point(&c.penalty, &mut rng);
        let q = surrogate_value(&c.obj, &c.penalty, &probe, &theta, gamma)?;
        let f = composite_value(&c.obj, &c.penalty, &probe)?;
        worst = worst.max(f - q);
    }
    Ok(CheckOutcome::new("surrogate majorizes the objective", cases, worst, 1e-10, start))
}

/// `F(T_γ(θ)) − F(θ) ≤ −‖T_γ(θ) − θ‖²/(2γ)` for convex `f` and
/// `γ ≤ 1/L`, tolerance 1e−10.
pub fn descent(cases: usize, seed: u64) -> Result<CheckOutcome> {
    let start = Instant::now();
    let mut rng = crate::stream(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let c = random_case(&mut rng)?;
        let gamma = rng.random_range(0.01..=1.0) / c.l;
        let theta = feasible_point(&c.penalty, &mut rng);
        let t = proximal_map(&c.obj, &c.penalty, &theta, gamma)?;
        let lhs = composite_value(&c.obj, &c.penalty, &t)? - composite_value(&c.obj, &c.penalty, &theta)?;
        worst = worst.max(lhs + t.sub(&theta).norm_squared() / (2.0 * gamma));
    }
    Ok(CheckOutcome::new("proximal-gradient descent inequality", cases, worst, 1e-10, start))
}

/// With `S_γ(θ) = Prox_γ(θ − γH)` and `η = H − ∇f(θ)`:
/// `‖T_γ(θ) − S_γ(θ)‖ ≤ γ‖η‖` (tolerance 1e−10) and, for convex `f`,
/// `|F(S_γ(θ)) − F(T_γ(θ))| ≤ ‖η‖(γ‖η‖ + ‖θ − T_γ(θ)‖)` (tolerance 1e−8).
pub fn perturbation_bounds(cases: usize, seed: u64) -> Result<Vec<CheckOutcome>> {
    let start = Instant::now();
    let mut rng = crate::stream(seed);
    let (mut worst_map, mut worst_value): (f64, f64) = (0.0, 0.0);
    for _ in 0..cases {
        let c = random_case(&mut rng)?;
        let dim = c.obj.dim();
        let gamma = rng.random_range(0.01..=1.0) / c.l;
        let theta = ParamVector::from_vec((0..dim).map(|_| 3.0 * gauss(&mut rng)).collect());
        let scale = 10f64.powf(rng.random_range(-3.0..1.0));
        let eta = ParamVector::from_vec((0..dim).map(|_| scale * gauss(&mut rng)).collect());
        let grad = c.obj.gradient(&theta)?;
        let t = c.penalty.prox(&theta.axpy(-gamma, &grad), gamma)?;
        let h = grad.axpy(1.0, &eta);
        let s = c.penalty.prox(&theta.axpy(-gamma, &h), gamma)?;
        worst_map = worst_map.max(t.distance(&s) - gamma * eta.norm());
        let diff = (composite_value(&c.obj, &c.penalty, &s)? - composite_value(&c.obj, &c.penalty, &t)?).abs();
        let bound = eta.norm() * (gamma * eta.norm() + theta.distance(&t));
        worst_value = worst_value.max(diff - bound);
    }
    Ok(vec![
        CheckOutcome::new("perturbed prox step stays within γ‖η‖", cases, worst_map, 1e-10, start),
        CheckOutcome::new("perturbed objective change bound", cases, worst_value, 1e-8, start),
    ])
}

/// `∫ w ρ_c(w) dw` by composite Simpson on `(0, 12]`.
pub fn polya_gamma_quadrature_mean(c: f64) -> f64 {
    let n = 24_000;
    let h = 12.0 / n as f64;
    let mut s = 0.0;
    for i in 1..=n {
        let w = i as f64 * h;
        let coef = if i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        s += coef * w * pg_density(w, c);
    }
    s * h / 3.0
}

/// Sample means of `PG(1, c)` within 1% (relative) of quadrature.
pub fn polya_gamma_moments(draws: usize, seed: u64) -> Result<CheckOutcome> {
    let start = Instant::now();
    let mut rng = crate::stream(seed);
    let mut worst: f64 = 0.0;
    let mut detail = Vec::new();
    for c in [0.0, 0.5, 1.0, 2.0, 4.0] {
        let mut sum = 0.0;
        for _ in 0..draws {
            sum += sample_polya_gamma(c, &mut rng)?;
        }
        let mean = sum / draws as f64;
        let exact = polya_gamma_quadrature_mean(c);
        let rel = (mean - exact).abs() / exact;
        worst = worst.max(rel);
        detail.push(format!("c={c}: {mean:.5} vs {exact:.5}"));
    }
    Ok(CheckOutcome::new("Polya-Gamma means match quadrature", 5 * draws, worst, 0.01, start).with_detail(detail.join(", ")))
}

/// The second-moment bound `∫‖u‖²π_θ(du) ≤ √(q(2+q))` on the desk-scale
/// synthetic instance with `q` random effects (data seed `seed`), at the
/// experiments' starting point `β = 0, σ = 1` and at the generating
/// parameter; and the Lipschitz bound of the Ising likelihood gradient on
/// `p = 3` with `pairs` random pairs.
///
/// The moment bound is not universal: very unlikely data (many equal
/// responses in one group with a large `σ`) push the posterior of `u` far
/// from the prior. It is checked at these two points only.
pub fn model_bounds(qs: &[usize], chain_length: usize, pairs: usize, seed: u64) -> Result<Vec<CheckOutcome>> {
    let mut out = Vec::new();
    let mut rng = crate::substream(seed, 17);
    for &q in qs {
        let spec = SyntheticSpec {
            n_effects: q,
            seed,
            ..SyntheticSpec::desk()
        };
        let inst = generate_synthetic(&spec)?;
        let mut start_point = ParamVector::zeros(inst.model.dim());
        start_point[spec.n_covariates] = 1.0;
        for (label, theta) in [("start", &start_point), ("generating", &inst.theta_true)] {
            let start = Instant::now();
            let check = second_moment_check(theta, &inst.model, chain_length, &mut rng)?;
            let worst = check.estimate - 3.0 * check.standard_error;
            out.push(
                CheckOutcome::new(&format!("second moment bound, q = {q}, {label} point"), chain_length, worst, check.bound, start)
                    .with_detail(format!(
                        "estimate {:.4} ± {:.4}, bound {:.4}",
                        check.estimate, check.standard_error, check.bound
                    )),
            );
        }
    }
    let start = Instant::now();
    let model = MrfModel::ising(3, Vec::new())?;
    let check = mrf_lipschitz_check(&model, pairs, &mut rng)?;
    out.push(
        CheckOutcome::new("Ising gradient Lipschitz bound, p = 3", pairs, check.max_ratio, check.bound + 1e-8, start)
            .with_detail(format!("max ratio {:.4}, bound {:.1}", check.max_ratio, check.bound)),
    );
    Ok(out)
}

/// Every suite at the sizes used by the command-line `validate` verb;
/// `quick` divides the case counts by ten.
pub fn run_all(seed: u64, quick: bool) -> Result<Vec<CheckOutcome>> {
    let k = if quick { 10 } else { 1 };
    let mut out = vec![prox_oracle_equivalence(1000 / k, seed)?];
    out.extend(firm_nonexpansiveness(10_000 / k, seed + 1)?);
    out.push(optimality_inequality(10_000 / k, seed + 2)?);
    out.push(majorization(10_000 / k, seed + 3)?);
    out.push(descent(10_000 / k, seed + 4)?);
    out.extend(perturbation_bounds(10_000 / k, seed + 5)?);
    // the 1% tolerance needs the full 10⁵ draws even in quick mode
    out.push(polya_gamma_moments(100_000, seed + 6)?);
    out.extend(model_bounds(&[1, 3, 5], 5000 / k, 1000 / k, 0)?);
    Ok(out)
}
