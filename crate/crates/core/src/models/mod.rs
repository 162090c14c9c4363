//! Problem instances: least squares, discrete Markov random fields and
//! logistic regression with random effects.

pub mod dataset;
pub mod lasso;
pub mod logistic;
pub mod mrf;
pub mod polya_gamma;

pub use lasso::{generate_lasso, Conditioning, LassoInstance, LassoSpec, LeastSquares};
pub use logistic::{
    generate_synthetic, logistic_loglik_mc, second_moment_check, GibbsState, LogisticOracle, LogisticREModel,
    LoglikPanel, SecondMomentCheck, SyntheticInstance, SyntheticSpec,
};
pub use mrf::{mrf_lipschitz_check, LipschitzCheck, MrfModel};
pub use polya_gamma::{polya_gamma_mean, sample_polya_gamma};
