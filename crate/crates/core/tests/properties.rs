//! Randomized invariants of the public API.

use proptest::prelude::*;

use stochprox::harness::{fit_log_log, sensitivity_precision, ExperimentConfig, Preset};
use stochprox::models::mrf::{pack, unpack};
use stochprox::prox::{kkt_residual, proximal_map, surrogate_value, FnObjective};
use stochprox::solvers::{check_t_gamma, make_t_sequence, weighted_running_mean, PresetId};
use stochprox::{
    BatchSchedule, BoxConstraint, ElasticNetPenalty, ParamVector, Penalty, SmoothObjective, StepSchedule, TSequence,
    WeightSchedule,
};

fn vector(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0..10.0f64, dim)
}

fn penalty(dim: usize) -> impl Strategy<Value = Penalty> {
    (0.0..3.0f64, 0.0..=1.0f64, prop::collection::vec(any::<bool>(), dim), -5.0..0.0f64, 0.0..5.0f64, 0..3u8).prop_map(
        move |(lambda, alpha, mask, lo, hi, kind)| {
            let en = ElasticNetPenalty::new(lambda, alpha, mask).unwrap();
            let bx = BoxConstraint::uniform(dim, lo, hi).unwrap();
            match kind {
                0 => Penalty::ElasticNet(en),
                1 => Penalty::Box(bx),
                _ => Penalty::composite(en, bx).unwrap(),
            }
        },
    )
}

/// `f(θ) = ½ Σ w_j (θ_j − c_j)²` with curvatures in `(0, 4]`.
fn quadratic(w: Vec<f64>, c: Vec<f64>) -> FnObjective {
    let l = w.iter().cloned().fold(0.0, f64::max);
    let (w2, c2) = (w.clone(), c.clone());
    FnObjective::new(w.len(), move |t| {
        ParamVector::from_vec(t.iter().enumerate().map(|(j, v)| w[j] * (v - c[j])).collect())
    })
    .with_value(move |t| t.iter().enumerate().map(|(j, v)| 0.5 * w2[j] * (v - c2[j]).powi(2)).sum())
    .with_lipschitz(l)
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn prox_is_firmly_nonexpansive(pen in penalty(5), x in vector(5), y in vector(5), gamma in 0.01..2.0f64) {
        let (x, y) = (ParamVector::from_vec(x), ParamVector::from_vec(y));
        let (px, py) = (pen.prox(&x, gamma).unwrap(), pen.prox(&y, gamma).unwrap());
        let lhs = px.sub(&py).norm_squared();
        let rhs = px.sub(&py).dot(&x.sub(&y));
        prop_assert!(lhs <= rhs + 1e-10 * (1.0 + rhs.abs()));
    }

    #[test]
    fn prox_satisfies_its_optimality_inequality(pen in penalty(4), x in vector(4), z in vector(4), gamma in 0.01..2.0f64) {
        // g(z) ≥ g(p) + ⟨(x − p)/γ, z − p⟩ for every feasible z
        let x = ParamVector::from_vec(x);
        let p = pen.prox(&x, gamma).unwrap();
        let z = match &pen {
            Penalty::ElasticNet(_) => ParamVector::from_vec(z),
            Penalty::Box(bx) | Penalty::Composite(_, bx) => stochprox::prox::prox_box(&ParamVector::from_vec(z), bx).unwrap(),
        };
        let lhs = pen.value(&z);
        let rhs = pen.value(&p) + x.sub(&p).dot(&z.sub(&p)) / gamma;
        prop_assert!(lhs >= rhs - 1e-9 * (1.0 + lhs.abs()));
    }

    #[test]
    fn box_prox_is_feasible_and_composite_is_projection_of_shrink(x in vector(6), gamma in 0.01..2.0f64, lambda in 0.0..3.0f64) {
        let x = ParamVector::from_vec(x);
        let en = ElasticNetPenalty::lasso(6, lambda).unwrap();
        let bx = BoxConstraint::uniform(6, -1.0, 2.0).unwrap();
        let both = Penalty::composite(en.clone(), bx.clone()).unwrap().prox(&x, gamma).unwrap();
        prop_assert!(bx.contains(&both));
        for j in 0..6 {
            prop_assert_eq!(both[j], en.shrink(x[j], gamma).clamp(-1.0, 2.0));
        }
    }

    #[test]
    fn masked_coordinates_pass_through(x in vector(5), gamma in 0.01..2.0f64, mask in prop::collection::vec(any::<bool>(), 5)) {
        let x = ParamVector::from_vec(x);
        let pen = Penalty::ElasticNet(ElasticNetPenalty::new(1.5, 0.7, mask.clone()).unwrap());
        let p = pen.prox(&x, gamma).unwrap();
        for j in 0..5 {
            if !mask[j] {
                prop_assert_eq!(p[j], x[j]);
            }
        }
    }

    #[test]
    fn surrogate_majorizes_and_step_descends(
        w in prop::collection::vec(0.1..4.0f64, 4),
        c in vector(4),
        theta in vector(4),
        pen in penalty(4),
        frac in 0.05..1.0f64,
    ) {
        let f = quadratic(w, c);
        let gamma = frac / f.lipschitz().unwrap();
        let mut theta = ParamVector::from_vec(theta);
        if let Penalty::Box(bx) | Penalty::Composite(_, bx) = &pen {
            theta = stochprox::prox::prox_box(&theta, bx).unwrap();
        }
        let next = proximal_map(&f, &pen, &theta, gamma).unwrap();
        let big_f = |t: &ParamVector| f.value(t).unwrap() + pen.value(t);
        let q = surrogate_value(&f, &pen, &next, &theta, gamma).unwrap();
        prop_assert!(big_f(&next) <= q + 1e-9 * (1.0 + q.abs()));
        prop_assert!(big_f(&next) <= big_f(&theta) + 1e-9 * (1.0 + big_f(&theta).abs()));
        // T_γ has a fixed point exactly where the residual vanishes
        let r = kkt_residual(&f, &pen, &theta, gamma).unwrap();
        prop_assert!((r - theta.distance(&next)).abs() <= 1e-12 * (1.0 + r));
    }

    #[test]
    fn t_sequences_meet_the_constant_step_condition(n in 1usize..500, gamma in 0.001..1.0f64) {
        // power sequences jump at n = 1 unless n0 is large, so they are left out
        for kind in [TSequence::Recursive, TSequence::LinearHalf, TSequence::Unit] {
            let t = make_t_sequence(kind, n).unwrap();
            prop_assert_eq!(t.len(), n + 1);
            prop_assert_eq!(t[0], 1.0);
            prop_assert!(t.iter().all(|&v| v >= 1.0));
            prop_assert!(check_t_gamma(|_| gamma, &t).passed(), "{:?}", kind);
        }
    }

    #[test]
    fn schedules_are_positive_and_monotone(c_gamma in 0.001..1.0f64, c in 0.0..1.0f64, c_b in 0.01..5.0f64, b in 0.0..3.5f64, n in 1usize..2000) {
        let steps = StepSchedule::power(c_gamma, c);
        prop_assert!(steps.gamma(n) > 0.0 && steps.gamma(n + 1) <= steps.gamma(n));
        let batches = BatchSchedule::power(c_b, b);
        prop_assert!(batches.size(n) >= 1 && batches.size(n + 1) >= batches.size(n));
    }

    #[test]
    fn running_mean_of_a_constant_is_constant(v in -5.0..5.0f64, a in -0.9..3.0f64, len in 2usize..100, start in 0usize..10) {
        let values = vec![v; len + start + 1];
        let w = WeightSchedule::new(a).unwrap();
        let means = weighted_running_mean(&values, &w, start);
        prop_assert_eq!(means.len(), len);
        prop_assert!(means.iter().all(|m| (m - v).abs() <= 1e-12 * (1.0 + v.abs())));
    }

    #[test]
    fn power_laws_are_recovered(slope in -3.0..-0.1f64, scale in 0.01..100.0f64, len in 10usize..400) {
        let x: Vec<f64> = (1..=len).map(|n| n as f64).collect();
        let y: Vec<Option<f64>> = x.iter().map(|n| Some(scale * n.powf(slope))).collect();
        let fit = fit_log_log(&x, &y, 0..len, 0).unwrap();
        prop_assert!((fit.slope - slope).abs() < 1e-9);
        prop_assert!((fit.intercept - scale.ln()).abs() < 1e-8);
    }

    #[test]
    fn support_ratios_lie_in_unit_interval(beta in prop::collection::vec(prop_oneof![Just(0.0), -3.0..3.0f64], 12),
                                           reference in prop::collection::vec(prop_oneof![Just(0.0), -3.0..3.0f64], 12)) {
        let (s, p) = sensitivity_precision(&beta, &reference).unwrap();
        for v in [s, p].into_iter().flatten() {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        let (s, p) = sensitivity_precision(&beta, &beta).unwrap();
        let nonzero = beta.iter().any(|v| *v != 0.0);
        prop_assert_eq!(s, nonzero.then_some(1.0));
        prop_assert_eq!(p, nonzero.then_some(1.0));
    }

    #[test]
    fn packing_round_trips(p in 1usize..7, seed in any::<u64>()) {
        use rand::Rng;
        let mut rng = stochprox::stream(seed);
        let theta = ParamVector::from_vec((0..p * (p + 1) / 2).map(|_| rng.random_range(-1.0..1.0)).collect());
        prop_assert_eq!(pack(&unpack(&theta, p)), theta);
    }

    #[test]
    fn configs_round_trip_and_hash_by_content(seed in any::<u64>(), n_iters in 1usize..5000, which in 0usize..19) {
        let mut config = Preset::all()[which % Preset::all().len()].config().unwrap();
        config.seed = seed;
        config.n_iters = n_iters;
        let back = ExperimentConfig::from_json(&config.to_json().unwrap()).unwrap();
        prop_assert_eq!(back.hash(), config.hash());
        prop_assert_eq!(&back, &config);
        let mut other = config.clone();
        other.seed = seed.wrapping_add(1);
        prop_assert_ne!(other.hash(), config.hash());
    }

    #[test]
    fn preset_names_parse_back(i in 0usize..13) {
        let id = PresetId::all()[i];
        prop_assert_eq!(id.name().parse::<PresetId>().unwrap(), id);
    }

    #[test]
    fn streams_are_reproducible(seed in any::<u64>(), id in 0u64..1000) {
        use rand::RngCore;
        let (mut a, mut b) = (stochprox::substream(seed, id), stochprox::substream(seed, id));
        prop_assert_eq!(a.next_u64(), b.next_u64());
        let mut c = stochprox::substream(seed, id + 1);
        prop_assert_ne!(stochprox::substream(seed, id).next_u64(), c.next_u64());
    }
}
