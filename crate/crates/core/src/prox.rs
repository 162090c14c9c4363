//! Penalties with closed-form proximal maps, the proximal-gradient map
//! `T_γ(θ) = Prox_γ(θ − γ∇f(θ))` and the majorizing surrogate `Q_γ(·|θ)`.

use std::fmt;
use std::ops::{Deref, DerefMut};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense parameter vector. Entries are finite at every API boundary.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<f64>", into = "Vec<f64>")]
pub struct ParamVector(pub DVector<f64>);

impl ParamVector {
    pub fn zeros(dim: usize) -> Self {
        ParamVector(DVector::zeros(dim))
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        ParamVector(DVector::from_vec(values))
    }

    pub fn from_slice(values: &[f64]) -> Self {
        ParamVector(DVector::from_column_slice(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Rejects NaN or infinite entries.
    pub fn check_finite(&self, what: &str) -> Result<()> {
        match self.0.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(i) => Err(Error::invalid(format!(
                "{what}: non-finite entry {} at index {i}",
                self.0[i]
            ))),
        }
    }

    pub fn dot(&self, other: &ParamVector) -> f64 {
        self.0.dot(&other.0)
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn distance(&self, other: &ParamVector) -> f64 {
        (&self.0 - &other.0).norm()
    }

    /// `self + scale * other`
    pub fn axpy(&self, scale: f64, other: &ParamVector) -> ParamVector {
        let mut out = self.0.clone();
        out.axpy(scale, &other.0, 1.0);
        ParamVector(out)
    }

    pub fn sub(&self, other: &ParamVector) -> ParamVector {
        ParamVector(&self.0 - &other.0)
    }
}

impl Deref for ParamVector {
    type Target = DVector<f64>;
    fn deref(&self) -> &DVector<f64> {
        &self.0
    }
}

impl DerefMut for ParamVector {
    fn deref_mut(&mut self) -> &mut DVector<f64> {
        &mut self.0
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(v: Vec<f64>) -> Self {
        ParamVector::from_vec(v)
    }
}

impl From<ParamVector> for Vec<f64> {
    fn from(p: ParamVector) -> Self {
        p.0.as_slice().to_vec()
    }
}

impl From<DVector<f64>> for ParamVector {
    fn from(v: DVector<f64>) -> Self {
        ParamVector(v)
    }
}

impl fmt::Debug for ParamVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.0.iter()).finish()
    }
}

/// Elastic-net penalty `λ Σ_{i∈mask} ((1−α)/2 θ_i² + α|θ_i|)`.
///
/// Unmasked coordinates are not penalized, which is how the intercept-like
/// parameters (a variance, the diagonal of an interaction matrix) are
/// excluded.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElasticNetPenalty {
    pub lambda: f64,
    pub alpha: f64,
    pub mask: Vec<bool>,
}

impl ElasticNetPenalty {
    pub fn new(lambda: f64, alpha: f64, mask: Vec<bool>) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::invalid(format!("lambda must be finite and >= 0, got {lambda}")));
        }
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::invalid(format!("alpha must lie in [0, 1], got {alpha}")));
        }
        Ok(ElasticNetPenalty { lambda, alpha, mask })
    }

    /// Penalize every coordinate.
    pub fn uniform(dim: usize, lambda: f64, alpha: f64) -> Result<Self> {
        Self::new(lambda, alpha, vec![true; dim])
    }

    pub fn lasso(dim: usize, lambda: f64) -> Result<Self> {
        Self::uniform(dim, lambda, 1.0)
    }

    pub fn dim(&self) -> usize {
        self.mask.len()
    }

    pub fn value(&self, theta: &ParamVector) -> f64 {
        let (l2, l1) = theta
            .iter()
            .zip(&self.mask)
            .filter(|(_, &m)| m)
            .fold((0.0, 0.0), |(l2, l1), (v, _)| (l2 + v * v, l1 + v.abs()));
        self.lambda * (0.5 * (1.0 - self.alpha) * l2 + self.alpha * l1)
    }

    /// Scalar shrink-threshold `s_{γ,λ,α}`.
    #[inline]
    pub fn shrink(&self, value: f64, gamma: f64) -> f64 {
        let thr = gamma * self.lambda * self.alpha;
        let scale = 1.0 + gamma * self.lambda * (1.0 - self.alpha);
        if value >= thr {
            (value - thr) / scale
        } else if value <= -thr {
            (value + thr) / scale
        } else {
            0.0
        }
    }
}

/// Rectangle `{θ : lower ≤ θ ≤ upper}`; bounds may be infinite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxConstraint {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxConstraint {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::invalid(format!(
                "box bounds have lengths {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return Err(Error::invalid(format!("box bound {i}: [{lo}, {hi}] is empty")));
            }
        }
        Ok(BoxConstraint { lower, upper })
    }

    pub fn uniform(dim: usize, lower: f64, upper: f64) -> Result<Self> {
        Self::new(vec![lower; dim], vec![upper; dim])
    }

    pub fn unbounded(dim: usize) -> Self {
        BoxConstraint {
            lower: vec![f64::NEG_INFINITY; dim],
            upper: vec![f64::INFINITY; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, theta: &ParamVector) -> bool {
        theta
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (lo, hi))| *lo <= *v && *v <= *hi)
    }

    #[inline]
    fn clamp(&self, i: usize, v: f64) -> f64 {
        v.max(self.lower[i]).min(self.upper[i])
    }
}

/// Convex lower semicontinuous penalty `g` with a closed-form proximal map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Penalty {
    ElasticNet(ElasticNetPenalty),
    Box(BoxConstraint),
    /// Elastic net restricted to a rectangle; its prox is `Π_C ∘ s_{γ,λ,α}`.
    Composite(ElasticNetPenalty, BoxConstraint),
}

impl Penalty {
    /// `g ≡ 0`.
    pub fn none(dim: usize) -> Self {
        Penalty::ElasticNet(ElasticNetPenalty {
            lambda: 0.0,
            alpha: 1.0,
            mask: vec![true; dim],
        })
    }

    pub fn composite(en: ElasticNetPenalty, bx: BoxConstraint) -> Result<Self> {
        if en.dim() != bx.dim() {
            return Err(Error::invalid(format!(
                "composite penalty: elastic-net mask has length {} but box has {}",
                en.dim(),
                bx.dim()
            )));
        }
        Ok(Penalty::Composite(en, bx))
    }

    pub fn dim(&self) -> usize {
        match self {
            Penalty::ElasticNet(en) => en.dim(),
            Penalty::Box(bx) => bx.dim(),
            Penalty::Composite(en, _) => en.dim(),
        }
    }

    /// `g(θ)`, `+∞` outside the domain.
    pub fn value(&self, theta: &ParamVector) -> f64 {
        match self {
            Penalty::ElasticNet(en) => en.value(theta),
            Penalty::Box(bx) => {
                if bx.contains(theta) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            Penalty::Composite(en, bx) => {
                if bx.contains(theta) {
                    en.value(theta)
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    pub fn prox(&self, theta: &ParamVector, gamma: f64) -> Result<ParamVector> {
        match self {
            Penalty::ElasticNet(en) => prox_elastic_net(theta, gamma, en),
            Penalty::Box(bx) => prox_box(theta, bx),
            Penalty::Composite(en, bx) => {
                if en.dim() != bx.dim() {
                    return Err(Error::invalid("composite penalty with inconsistent dimensions"));
                }
                let shrunk = prox_elastic_net(theta, gamma, en)?;
                prox_box(&shrunk, bx)
            }
        }
    }
}

fn check_dim(theta: &ParamVector, dim: usize, what: &str) -> Result<()> {
    if theta.dim() != dim {
        return Err(Error::invalid(format!(
            "{what}: expected dimension {dim}, got {}",
            theta.dim()
        )));
    }
    Ok(())
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::invalid(format!("step size must be finite and > 0, got {gamma}")));
    }
    Ok(())
}

/// Componentwise soft-thresholding with ℓ2 shrinkage; unmasked coordinates
/// pass through.
pub fn prox_elastic_net(theta: &ParamVector, gamma: f64, pen: &ElasticNetPenalty) -> Result<ParamVector> {
    check_gamma(gamma)?;
    theta.check_finite("prox_elastic_net input")?;
    check_dim(theta, pen.dim(), "prox_elastic_net")?;
    let out = theta
        .iter()
        .zip(&pen.mask)
        .map(|(&v, &m)| if m { pen.shrink(v, gamma) } else { v });
    Ok(ParamVector(DVector::from_iterator(theta.dim(), out)))
}

/// Orthogonal projection onto the rectangle.
pub fn prox_box(theta: &ParamVector, bx: &BoxConstraint) -> Result<ParamVector> {
    theta.check_finite("prox_box input")?;
    check_dim(theta, bx.dim(), "prox_box")?;
    let out = theta.iter().enumerate().map(|(i, &v)| bx.clamp(i, v));
    Ok(ParamVector(DVector::from_iterator(theta.dim(), out)))
}

/// `Prox_γ(θ)` for any penalty variant.
pub fn prox(penalty: &Penalty, theta: &ParamVector, gamma: f64) -> Result<ParamVector> {
    penalty.prox(theta, gamma)
}

/// Smooth part `f` of the objective.
pub trait SmoothObjective {
    fn dim(&self) -> usize;

    fn gradient(&self, theta: &ParamVector) -> Result<ParamVector>;

    fn value(&self, _theta: &ParamVector) -> Result<f64> {
        Err(Error::unsupported("objective has no value callable"))
    }

    /// Lipschitz constant of the gradient, when known.
    fn lipschitz(&self) -> Option<f64> {
        None
    }
}

impl<T: SmoothObjective + ?Sized> SmoothObjective for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn gradient(&self, theta: &ParamVector) -> Result<ParamVector> {
        (**self).gradient(theta)
    }
    fn value(&self, theta: &ParamVector) -> Result<f64> {
        (**self).value(theta)
    }
    fn lipschitz(&self) -> Option<f64> {
        (**self).lipschitz()
    }
}

impl<T: SmoothObjective + ?Sized> SmoothObjective for std::sync::Arc<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn gradient(&self, theta: &ParamVector) -> Result<ParamVector> {
        (**self).gradient(theta)
    }
    fn value(&self, theta: &ParamVector) -> Result<f64> {
        (**self).value(theta)
    }
    fn lipschitz(&self) -> Option<f64> {
        (**self).lipschitz()
    }
}

type GradFn = Box<dyn Fn(&ParamVector) -> ParamVector + Send + Sync>;
type ValueFn = Box<dyn Fn(&ParamVector) -> f64 + Send + Sync>;

/// Objective assembled from closures.
pub struct FnObjective {
    dim: usize,
    gradient: GradFn,
    value: Option<ValueFn>,
    lipschitz: Option<f64>,
}

impl FnObjective {
    pub fn new(dim: usize, gradient: impl Fn(&ParamVector) -> ParamVector + Send + Sync + 'static) -> Self {
        FnObjective {
            dim,
            gradient: Box::new(gradient),
            value: None,
            lipschitz: None,
        }
    }

    pub fn with_value(mut self, value: impl Fn(&ParamVector) -> f64 + Send + Sync + 'static) -> Self {
        self.value = Some(Box::new(value));
        self
    }

    pub fn with_lipschitz(mut self, l: f64) -> Self {
        self.lipschitz = Some(l);
        self
    }

    /// `f ≡ 0`.
    pub fn zero(dim: usize) -> Self {
        FnObjective::new(dim, move |_| ParamVector::zeros(dim))
            .with_value(|_| 0.0)
            .with_lipschitz(0.0)
    }
}

impl SmoothObjective for FnObjective {
    fn dim(&self) -> usize {
        self.dim
    }

    fn gradient(&self, theta: &ParamVector) -> Result<ParamVector> {
        check_dim(theta, self.dim, "gradient")?;
        Ok((self.gradient)(theta))
    }

    fn value(&self, theta: &ParamVector) -> Result<f64> {
        match &self.value {
            Some(v) => Ok(v(theta)),
            None => Err(Error::unsupported("objective has no value callable")),
        }
    }

    fn lipschitz(&self) -> Option<f64> {
        self.lipschitz
    }
}

/// `F(θ) = f(θ) + g(θ)`.
pub fn composite_value<O: SmoothObjective + ?Sized>(obj: &O, penalty: &Penalty, theta: &ParamVector) -> Result<f64> {
    Ok(obj.value(theta)? + penalty.value(theta))
}

/// `T_γ(θ) = Prox_γ(θ − γ∇f(θ))`.
pub fn proximal_map<O: SmoothObjective + ?Sized>(
    obj: &O,
    penalty: &Penalty,
    theta: &ParamVector,
    gamma: f64,
) -> Result<ParamVector> {
    check_gamma(gamma)?;
    let grad = obj.gradient(theta)?;
    penalty.prox(&theta.axpy(-gamma, &grad), gamma)
}

/// `Q_γ(ϑ|θ) = f(θ) + ⟨∇f(θ), ϑ−θ⟩ + ‖ϑ−θ‖²/(2γ) + g(ϑ)`.
pub fn surrogate_value<O: SmoothObjective + ?Sized>(
    obj: &O,
    penalty: &Penalty,
    vartheta: &ParamVector,
    theta: &ParamVector,
    gamma: f64,
) -> Result<f64> {
    check_gamma(gamma)?;
    let f = obj.value(theta)?;
    let grad = obj.gradient(theta)?;
    let diff = vartheta.sub(theta);
    Ok(f + grad.dot(&diff) + diff.norm_squared() / (2.0 * gamma) + penalty.value(vartheta))
}

/// `‖θ − T_γ(θ)‖`, zero exactly on the critical set.
pub fn kkt_residual<O: SmoothObjective + ?Sized>(
    obj: &O,
    penalty: &Penalty,
    theta: &ParamVector,
    gamma: f64,
) -> Result<f64> {
    let mapped = proximal_map(obj, penalty, theta, gamma)?;
    Ok(theta.distance(&mapped))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn lasso_1d() -> (FnObjective, Penalty) {
        // f(θ) = ½(θ−2)², g = |θ|
        let obj = FnObjective::new(1, |t| ParamVector::from_slice(&[t[0] - 2.0]))
            .with_value(|t| 0.5 * (t[0] - 2.0).powi(2))
            .with_lipschitz(1.0);
        (obj, Penalty::ElasticNet(ElasticNetPenalty::lasso(1, 1.0).unwrap()))
    }

    #[test]
    fn elastic_net_zero_stays_zero() {
        for &(gamma, lambda, alpha) in &[(1.0, 1.0, 1.0), (0.3, 2.0, 0.5), (2.0, 0.0, 0.0)] {
            let pen = ElasticNetPenalty::uniform(1, lambda, alpha).unwrap();
            let out = prox_elastic_net(&ParamVector::zeros(1), gamma, &pen).unwrap();
            assert_eq!(out[0], 0.0);
        }
    }

    #[test]
    fn elastic_net_lasso_branch() {
        let pen = ElasticNetPenalty::lasso(1, 1.0).unwrap();
        let out = prox_elastic_net(&ParamVector::from_slice(&[3.0]), 1.0, &pen).unwrap();
        assert_eq!(out[0], 2.0);
    }

    #[test]
    fn elastic_net_mixed_branch() {
        // threshold γλα = 0.5, scale 1 + γλ(1−α) = 1.5 → (2 − 0.5)/1.5 = 1
        let pen = ElasticNetPenalty::uniform(1, 2.0, 0.5).unwrap();
        let out = prox_elastic_net(&ParamVector::from_slice(&[2.0]), 0.5, &pen).unwrap();
        assert_abs_diff_eq!(out[0], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn elastic_net_mask_passes_through() {
        let pen = ElasticNetPenalty::new(1.0, 1.0, vec![true, false]).unwrap();
        let out = prox_elastic_net(&ParamVector::from_slice(&[0.5, 0.5]), 1.0, &pen).unwrap();
        assert_eq!(out.as_slice(), &[0.0, 0.5]);
    }

    #[test]
    fn ridge_only_is_pure_shrinkage() {
        let pen = ElasticNetPenalty::uniform(1, 2.0, 0.0).unwrap();
        let out = prox_elastic_net(&ParamVector::from_slice(&[-3.0]), 0.5, &pen).unwrap();
        assert_abs_diff_eq!(out[0], -1.5, epsilon = 1e-15);
    }

    #[test]
    fn non_finite_input_rejected() {
        let pen = ElasticNetPenalty::lasso(2, 1.0).unwrap();
        let bad = ParamVector::from_slice(&[1.0, f64::NAN]);
        assert!(matches!(prox_elastic_net(&bad, 1.0, &pen), Err(Error::InvalidArgument(_))));
        assert!(matches!(
            prox_box(&bad, &BoxConstraint::unbounded(2)),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn bad_parameters_rejected() {
        assert!(ElasticNetPenalty::uniform(1, -1.0, 0.5).is_err());
        assert!(ElasticNetPenalty::uniform(1, 1.0, 1.5).is_err());
        assert!(BoxConstraint::new(vec![1.0], vec![0.0]).is_err());
        let pen = ElasticNetPenalty::lasso(1, 1.0).unwrap();
        assert!(prox_elastic_net(&ParamVector::zeros(1), 0.0, &pen).is_err());
    }

    #[test]
    fn box_clamps_and_is_idempotent() {
        let bx = BoxConstraint::uniform(3, 0.0, 5.0).unwrap();
        let out = prox_box(&ParamVector::from_slice(&[-1.0, 0.5, 7.0]), &bx).unwrap();
        assert_eq!(out.as_slice(), &[0.0, 0.5, 5.0]);
        assert_eq!(prox_box(&out, &bx).unwrap(), out);
        let inside = ParamVector::from_slice(&[1.0, 2.0, 3.0]);
        assert_eq!(prox_box(&inside, &bx).unwrap(), inside);
    }

    #[test]
    fn composite_threshold_then_clamp() {
        let en = ElasticNetPenalty::lasso(1, 1.0).unwrap();
        let bx = BoxConstraint::uniform(1, 0.0, 1.5).unwrap();
        let pen = Penalty::composite(en, bx).unwrap();
        let out = pen.prox(&ParamVector::from_slice(&[3.0]), 1.0).unwrap();
        assert_eq!(out[0], 1.5);
    }

    #[test]
    fn composite_dimension_mismatch() {
        let en = ElasticNetPenalty::lasso(2, 1.0).unwrap();
        let bx = BoxConstraint::unbounded(3);
        assert!(Penalty::composite(en.clone(), bx.clone()).is_err());
        assert!(Penalty::Composite(en, bx).prox(&ParamVector::zeros(2), 1.0).is_err());
    }

    #[test]
    fn box_variant_dispatches() {
        let bx = BoxConstraint::uniform(2, -1.0, 1.0).unwrap();
        let theta = ParamVector::from_slice(&[-4.0, 0.25]);
        assert_eq!(Penalty::Box(bx.clone()).prox(&theta, 3.0).unwrap(), prox_box(&theta, &bx).unwrap());
    }

    #[test]
    fn tiny_gamma_is_identity() {
        let pen = Penalty::ElasticNet(ElasticNetPenalty::uniform(3, 5.0, 0.3).unwrap());
        let theta = ParamVector::from_slice(&[1.0, -2.0, 0.3]);
        let out = pen.prox(&theta, 1e-12).unwrap();
        assert!(out.distance(&theta) < 1e-8);
    }

    #[test]
    fn penalty_value_outside_box_is_infinite() {
        let pen = Penalty::Box(BoxConstraint::uniform(1, 0.0, 1.0).unwrap());
        assert_eq!(pen.value(&ParamVector::from_slice(&[2.0])), f64::INFINITY);
        assert_eq!(pen.value(&ParamVector::from_slice(&[0.5])), 0.0);
    }

    #[test]
    fn zero_problem_map_is_identity() {
        let obj = FnObjective::zero(3);
        let pen = Penalty::none(3);
        let theta = ParamVector::from_slice(&[1.0, -7.0, 0.1]);
        assert_eq!(proximal_map(&obj, &pen, &theta, 0.7).unwrap(), theta);
        assert_eq!(kkt_residual(&obj, &pen, &theta, 0.7).unwrap(), 0.0);
    }

    #[test]
    fn lasso_1d_fixed_point() {
        let (obj, pen) = lasso_1d();
        let t = proximal_map(&obj, &pen, &ParamVector::from_slice(&[2.0]), 1.0).unwrap();
        assert_eq!(t[0], 1.0);
        let star = ParamVector::from_slice(&[1.0]);
        assert_eq!(proximal_map(&obj, &pen, &star, 1.0).unwrap(), star);
        assert!(kkt_residual(&obj, &pen, &star, 1.0).unwrap() < 1e-10);
        assert!(kkt_residual(&obj, &pen, &ParamVector::from_slice(&[2.0]), 1.0).unwrap() > 0.0);
    }

    #[test]
    fn surrogate_touches_at_theta() {
        let (obj, pen) = lasso_1d();
        let theta = ParamVector::from_slice(&[0.7]);
        let q = surrogate_value(&obj, &pen, &theta, &theta, 1.0).unwrap();
        assert_eq!(q, composite_value(&obj, &pen, &theta).unwrap());
    }

    #[test]
    fn surrogate_without_value_is_unsupported() {
        let obj = FnObjective::new(1, |t| t.clone());
        let pen = Penalty::none(1);
        let theta = ParamVector::zeros(1);
        assert!(matches!(
            surrogate_value(&obj, &pen, &theta, &theta, 1.0),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn param_vector_serde_is_plain_array() {
        let v = ParamVector::from_slice(&[1.0, 2.5]);
        let s = serde_json::to_string(&v).unwrap();
        assert_eq!(s, "[1.0,2.5]");
        assert_eq!(serde_json::from_str::<ParamVector>(&s).unwrap(), v);
    }
}
