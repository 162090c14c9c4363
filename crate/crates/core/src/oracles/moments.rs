use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prox::ParamVector;

use super::GradientOracle;

pub const DEFAULT_REPLICATIONS: usize = 200;

/// Replication estimates of the bias norm `ε^(1) = ‖E[η]‖` and the second
/// moment `ε^(2) = E‖η‖²` of the oracle error `η = H − ∇f(θ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleMoments {
    pub bias_norm_estimate: f64,
    /// Delta-method standard error of the bias norm.
    pub bias_norm_se: f64,
    pub second_moment_estimate: f64,
    pub second_moment_se: f64,
    /// Componentwise mean of `η` and its standard errors.
    pub mean_error: ParamVector,
    pub mean_error_se: ParamVector,
    pub replications: usize,
}

/// Calls the oracle `replications` times at `theta` with batch `batch`.
/// Replication `r` draws from `substream(seed, r)` and starts from a reset
/// oracle, so replications are independent, including for warm-started
/// chains.
pub fn estimate_oracle_moments(
    oracle: &mut dyn GradientOracle,
    exact_gradient: &dyn Fn(&ParamVector) -> Result<ParamVector>,
    theta: &ParamVector,
    batch: usize,
    replications: usize,
    seed: u64,
) -> Result<OracleMoments> {
    if replications < 2 {
        return Err(Error::invalid(format!("moment estimates need >= 2 replications, got {replications}")));
    }
    let truth = exact_gradient(theta)?;
    let dim = truth.dim();
    let mut etas = Vec::with_capacity(replications);
    for r in 0..replications {
        oracle.reset();
        let mut rng = crate::substream(seed, r as u64);
        let out = oracle.estimate(theta, 1, batch, &mut rng)?;
        etas.push(out.gradient.sub(&truth));
    }
    oracle.reset();

    let n = replications as f64;
    let mut mean = ParamVector::zeros(dim);
    for e in &etas {
        mean.0 += &e.0;
    }
    mean.0 /= n;
    let mut var = ParamVector::zeros(dim);
    for e in &etas {
        for j in 0..dim {
            var[j] += (e[j] - mean[j]).powi(2);
        }
    }
    let se = ParamVector::from_vec(var.iter().map(|v| (v / (n - 1.0) / n).sqrt()).collect());

    let bias = mean.norm();
    let bias_se = if bias > 0.0 {
        let dir = ParamVector(&mean.0 / bias);
        let proj: Vec<f64> = etas.iter().map(|e| e.dot(&dir)).collect();
        std_error(&proj)
    } else {
        0.0
    };
    let sq: Vec<f64> = etas.iter().map(|e| e.norm_squared()).collect();
    Ok(OracleMoments {
        bias_norm_estimate: bias,
        bias_norm_se: bias_se,
        second_moment_estimate: sq.iter().sum::<f64>() / n,
        second_moment_se: std_error(&sq),
        mean_error: mean,
        mean_error_se: se,
        replications,
    })
}

fn std_error(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (var / n).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::{ExactOracle, MinibatchOracle};
    use crate::prox::{FnObjective, SmoothObjective};

    #[test]
    fn exact_oracle_has_no_error() {
        let obj = FnObjective::new(2, |t| t.clone());
        let mut oracle = ExactOracle::new(&obj);
        let m = estimate_oracle_moments(&mut oracle, &|t| obj.gradient(t), &ParamVector::from_slice(&[1.0, 2.0]), 5, 10, 0).unwrap();
        assert_eq!((m.bias_norm_estimate, m.second_moment_estimate), (0.0, 0.0));
    }

    #[test]
    fn fair_coin_second_moment_is_one() {
        let mut oracle = MinibatchOracle::new(
            1,
            vec![
                Box::new(|_: &ParamVector| ParamVector::from_slice(&[1.0])),
                Box::new(|_: &ParamVector| ParamVector::from_slice(&[-1.0])),
            ],
        )
        .unwrap();
        let zero = |_: &ParamVector| Ok(ParamVector::zeros(1));
        let m = estimate_oracle_moments(&mut oracle, &zero, &ParamVector::zeros(1), 1, DEFAULT_REPLICATIONS, 4).unwrap();
        // |η| = 1 on every draw
        assert_eq!(m.second_moment_estimate, 1.0);
        assert!(m.bias_norm_estimate < 4.0 / (DEFAULT_REPLICATIONS as f64).sqrt());
        assert!(estimate_oracle_moments(&mut oracle, &zero, &ParamVector::zeros(1), 1, 1, 4).is_err());
    }
}
