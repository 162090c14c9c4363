//! Proximal operators, the proximal-gradient map and the KKT residual on a
//! small least-squares problem.

use stochprox::models::LeastSquares;
use stochprox::prox::{kkt_residual, proximal_map, surrogate_value};
use stochprox::{BoxConstraint, ElasticNetPenalty, ParamVector, Penalty, Result, SmoothObjective};

fn main() -> Result<()> {
    let theta = ParamVector::from_slice(&[3.0, -0.4, 1.2, -2.5]);
    let gamma = 0.5;

    // Soft thresholding at gamma*lambda, then the ridge shrink.
    let en = ElasticNetPenalty::uniform(4, 1.0, 1.0)?;
    println!("lasso prox       {:?}", Penalty::ElasticNet(en).prox(&theta, gamma)?.as_slice());
    let en = ElasticNetPenalty::uniform(4, 1.0, 0.5)?;
    println!("elastic net prox {:?}", Penalty::ElasticNet(en).prox(&theta, gamma)?.as_slice());

    // The first coordinate is left alone by the mask.
    let masked = ElasticNetPenalty::new(1.0, 1.0, vec![false, true, true, true])?;
    println!("masked prox      {:?}", Penalty::ElasticNet(masked.clone()).prox(&theta, gamma)?.as_slice());

    let bx = BoxConstraint::uniform(4, -1.0, 2.0)?;
    println!("box projection   {:?}", Penalty::Box(bx.clone()).prox(&theta, gamma)?.as_slice());
    let both = Penalty::composite(masked, bx)?;
    println!("composite prox   {:?}", both.prox(&theta, gamma)?.as_slice());

    // T_gamma on f(θ) = ‖Aθ − b‖²/(2N).
    let a = nalgebra::DMatrix::from_row_slice(3, 4, &[1.0, 0.0, 2.0, 0.0, 0.0, 1.0, 0.0, -1.0, 1.0, 1.0, 1.0, 1.0]);
    let b = nalgebra::DVector::from_vec(vec![1.0, 2.0, 0.5]);
    let f = LeastSquares::new(a, b)?;
    let pen = Penalty::ElasticNet(ElasticNetPenalty::lasso(4, 0.1)?);
    let l = f.lipschitz().unwrap();
    let g = 1.0 / l;
    let mut x = ParamVector::zeros(4);
    for n in 0..=200 {
        if n % 50 == 0 {
            let next = proximal_map(&f, &pen, &x, g)?;
            println!(
                "n={n:3}  F={:.6}  Q(T(θ)|θ)={:.6}  kkt={:.2e}",
                f.value(&x)? + pen.value(&x),
                surrogate_value(&f, &pen, &next, &x, g)?,
                kkt_residual(&f, &pen, &x, g)?
            );
        }
        x = proximal_map(&f, &pen, &x, g)?;
    }
    Ok(())
}
