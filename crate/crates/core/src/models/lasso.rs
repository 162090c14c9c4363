//! Least-squares objectives `f(θ) = ½‖Aθ − b‖²` and seeded lasso instances.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracles::ComponentGradient;
use crate::prox::{ParamVector, SmoothObjective};

#[derive(Clone, Debug)]
pub struct LeastSquares {
    a: DMatrix<f64>,
    b: DVector<f64>,
    lipschitz: f64,
}

impl LeastSquares {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        if a.nrows() != b.len() {
            return Err(Error::invalid(format!("A has {} rows but b has {} entries", a.nrows(), b.len())));
        }
        let gram = a.transpose() * &a;
        let lipschitz = gram.symmetric_eigenvalues().max().max(0.0);
        Ok(LeastSquares { a, b, lipschitz })
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn response(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn n_obs(&self) -> usize {
        self.a.nrows()
    }

    /// Gradients of `N·f_i` with `f_i(θ) = ½(a_iᵀθ − b_i)²`, so that their
    /// mean is `∇f`; suitable for [`crate::oracles::MinibatchOracle`].
    pub fn component_gradients(&self) -> Vec<ComponentGradient> {
        let n = self.n_obs() as f64;
        (0..self.n_obs())
            .map(|i| {
                let row: DVector<f64> = self.a.row(i).transpose();
                let bi = self.b[i];
                let g: ComponentGradient = Box::new(move |t: &ParamVector| {
                    let r = row.dot(&t.0) - bi;
                    ParamVector(&row * (n * r))
                });
                g
            })
            .collect()
    }

    fn residual(&self, theta: &ParamVector) -> DVector<f64> {
        &self.a * &theta.0 - &self.b
    }
}

impl SmoothObjective for LeastSquares {
    fn dim(&self) -> usize {
        self.a.ncols()
    }

    fn gradient(&self, theta: &ParamVector) -> Result<ParamVector> {
        if theta.dim() != self.dim() {
            return Err(Error::invalid(format!("expected dimension {}, got {}", self.dim(), theta.dim())));
        }
        Ok(ParamVector(self.a.tr_mul(&self.residual(theta))))
    }

    fn value(&self, theta: &ParamVector) -> Result<f64> {
        Ok(0.5 * self.residual(theta).norm_squared())
    }

    fn lipschitz(&self) -> Option<f64> {
        Some(self.lipschitz)
    }
}

/// Spectrum of `AᵀA`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Conditioning {
    /// i.i.d. standard normal design.
    Gaussian,
    /// `A = U diag(s) Vᵀ` with random orthonormal `U`, `V` and eigenvalues
    /// `s_j²` log-spaced from 1 down to `smallest`.
    LogSpectrum { smallest: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LassoSpec {
    pub n_obs: usize,
    pub dim: usize,
    pub n_nonzero: usize,
    pub noise_sd: f64,
    pub conditioning: Conditioning,
    pub seed: u64,
}

impl Default for LassoSpec {
    fn default() -> Self {
        LassoSpec {
            n_obs: 50,
            dim: 20,
            n_nonzero: 5,
            noise_sd: 0.1,
            conditioning: Conditioning::Gaussian,
            seed: 0,
        }
    }
}

pub struct LassoInstance {
    pub objective: LeastSquares,
    pub theta_true: ParamVector,
}

pub fn generate_lasso(spec: &LassoSpec) -> Result<LassoInstance> {
    if spec.dim == 0 || spec.n_obs == 0 || spec.n_nonzero > spec.dim {
        return Err(Error::invalid(format!("bad lasso spec {spec:?}")));
    }
    let mut rng = crate::stream(spec.seed);
    let mut gauss = |r: usize, c: usize| -> DMatrix<f64> { DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(&mut rng)) };
    let a = match spec.conditioning {
        Conditioning::Gaussian => gauss(spec.n_obs, spec.dim),
        Conditioning::LogSpectrum { smallest } => {
            if spec.n_obs < spec.dim || !(smallest > 0.0 && smallest <= 1.0) {
                return Err(Error::invalid("log-spectrum design needs n_obs >= dim and smallest in (0, 1]"));
            }
            let u = gauss(spec.n_obs, spec.dim).qr().q();
            let v = gauss(spec.dim, spec.dim).qr().q();
            let d = spec.dim.max(2) - 1;
            let s = DVector::from_fn(spec.dim, |j, _| smallest.powf(j as f64 / d as f64).sqrt());
            u * DMatrix::from_diagonal(&s) * v.transpose()
        }
    };
    let mut theta = DVector::zeros(spec.dim);
    for j in sample(&mut rng, spec.dim, spec.n_nonzero) {
        let z: f64 = StandardNormal.sample(&mut rng);
        theta[j] = z.signum() * (1.0 + z.abs());
    }
    let noise = DVector::from_fn(spec.n_obs, |_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        spec.noise_sd * z
    });
    let b = &a * &theta + noise;
    Ok(LassoInstance {
        objective: LeastSquares::new(a, b)?,
        theta_true: ParamVector(theta),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_and_lipschitz() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
        let ls = LeastSquares::new(a, DVector::from_vec(vec![2.0, 1.0])).unwrap();
        assert!((ls.lipschitz().unwrap() - 4.0).abs() < 1e-12);
        let g = ls.gradient(&ParamVector::zeros(2)).unwrap();
        assert_eq!(g.as_slice(), &[-4.0, -1.0]);
        assert_eq!(ls.value(&ParamVector::from_slice(&[1.0, 1.0])).unwrap(), 0.0);
    }

    #[test]
    fn components_average_to_gradient() {
        let inst = generate_lasso(&LassoSpec::default()).unwrap();
        let theta = ParamVector::from_vec((0..20).map(|i| (i as f64).sin()).collect());
        let comps = inst.objective.component_gradients();
        let mut mean = DVector::zeros(20);
        for c in &comps {
            mean += c(&theta).0;
        }
        mean /= comps.len() as f64;
        let exact = inst.objective.gradient(&theta).unwrap();
        assert!((mean - exact.0).norm() < 1e-10);
    }

    #[test]
    fn log_spectrum_design() {
        let spec = LassoSpec {
            conditioning: Conditioning::LogSpectrum { smallest: 1e-6 },
            ..LassoSpec::default()
        };
        let inst = generate_lasso(&spec).unwrap();
        let eig = (inst.objective.design().transpose() * inst.objective.design()).symmetric_eigenvalues();
        assert!((eig.max() - 1.0).abs() < 1e-9);
        assert!((eig.min() - 1e-6).abs() < 1e-9);
        assert_eq!(inst.theta_true.iter().filter(|v| **v != 0.0).count(), 5);
        let again = generate_lasso(&spec).unwrap();
        assert_eq!(again.objective.response(), inst.objective.response());
    }
}
