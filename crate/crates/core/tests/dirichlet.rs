use astra_core::dirichlet::{
    estimate_mean_norm, gamma_sum_tail, map_samples, moments, sample, sample_gamma, sample_ln_gamma, tail_report,
    DirichletParams,
};
use astra_core::rng::stream;
use astra_core::sequences::pareto_target;
use astra_core::SimplexPoint;
use proptest::prelude::*;

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let m = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / m;
    (mean, xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0))
}

#[test]
fn gamma_moments() {
    for shape in [0.05, 0.5, 1.0, 3.7] {
        let mut rng = stream(11, (shape * 100.0) as u64);
        let xs: Vec<f64> = (0..200_000).map(|_| sample_gamma(shape, &mut rng)).collect();
        let (m, v) = mean_var(&xs);
        let se = (shape / 200_000.0).sqrt();
        assert!((m - shape).abs() < 5.0 * se, "shape {shape}: mean {m}");
        assert!((v / shape - 1.0).abs() < 0.05, "shape {shape}: var {v}");
    }
}

#[test]
fn log_gamma_handles_tiny_shapes() {
    // E log G for G ~ Gamma(a) is digamma(a) ~ -1/a - gamma_e for small a.
    let a = 1e-3;
    let mut rng = stream(5, 0);
    let xs: Vec<f64> = (0..100_000).map(|_| sample_ln_gamma(a, &mut rng)).collect();
    assert!(xs.iter().all(|x| x.is_finite()));
    let (m, v) = mean_var(&xs);
    let digamma = -1.0 / a - 0.577_215_664_901_532_9 + 1.644_934 * a;
    // Var log G = trigamma(a) ~ 1/a^2.
    assert!((m - digamma).abs() < 5.0 * (v / 1e5).sqrt(), "{m} vs {digamma}");
}

#[test]
fn two_dimensional_marginal_is_beta() {
    // Dirichlet(2, 3) first coordinate is Beta(2, 3): mean 0.4, var 0.04.
    let params = DirichletParams::new(vec![2.0, 3.0]).unwrap();
    let xs = map_samples(&params, 100_000, 3, |x| x[0]).unwrap();
    let (m, v) = mean_var(&xs);
    assert!((m - 0.4).abs() < 0.003);
    assert!((v - 0.04).abs() < 0.001);
}

#[test]
fn sample_moments_match_closed_form() {
    let nu = pareto_target(0.75, 20).unwrap();
    let params = DirichletParams::from_target(&nu);
    let mo = moments(&params);
    let xs = sample(&params, 50_000, 9).unwrap();
    for i in [0, 5, 19] {
        let col: Vec<f64> = xs.iter().map(|x| x.as_slice()[i]).collect();
        let (m, v) = mean_var(&col);
        assert!((m - mo.mean.as_slice()[i]).abs() < 5.0 * (mo.variance[i] / 5e4).sqrt());
        assert!((v / mo.variance[i] - 1.0).abs() < 0.08);
        // Var X_i = nu_i (1 - nu_i) / (n + 1) when the concentration is n.
        let w = nu.as_slice()[i];
        assert!((mo.variance[i] - w * (1.0 - w) / 21.0).abs() < 1e-15);
    }
}

#[test]
fn sampling_is_deterministic_per_seed() {
    let params = DirichletParams::new(vec![0.3; 50]).unwrap();
    assert_eq!(sample(&params, 100, 4).unwrap(), sample(&params, 100, 4).unwrap());
    assert_ne!(sample(&params, 100, 4).unwrap(), sample(&params, 100, 5).unwrap());
}

#[test]
fn mean_norm_within_reference_bracket() {
    let e = estimate_mean_norm(0.75, 300, 5_000, 1).unwrap();
    assert!(e.ci.0 < e.estimate && e.estimate < e.ci.1);
    assert!(e.estimate <= e.upper_reference && e.estimate >= 0.95 * e.lower_reference);
    assert!(estimate_mean_norm(0.75, 300, 10, 1).is_err());
}

#[test]
fn gamma_tail_against_chebyshev() {
    // Var S_n = n, so P(|S_n - n| > u sqrt n) <= 1/u^2 as well.
    let g = gamma_sum_tail(500, 2.0, 50_000, 2).unwrap();
    assert!(g.passes);
    assert!(g.empirical <= 0.25);
    assert!((g.bound - 2.0 * (-1.0f64).exp()).abs() < 1e-15);
}

#[test]
fn tail_report_structure() {
    let rep = tail_report(1.0, 200, &[0.2, 0.4], 10_000, 6).unwrap();
    assert_eq!(rep.tails.len(), 2);
    assert!(rep.tails[1].p_upper <= rep.tails[0].p_upper);
    let max_ratio = rep.tails.iter().map(|t| t.ratio).fold(0.0, f64::max);
    assert_eq!(rep.c3_fit, max_ratio);
    assert!(tail_report(1.0, 200, &[0.2], 100, 6).is_err());
    assert!(tail_report(1.0, 200, &[-1.0], 10_000, 6).is_err());
}

#[test]
fn rejects_bad_parameters() {
    assert!(DirichletParams::new(vec![1.0]).is_err());
    assert!(DirichletParams::new(vec![1.0, 0.0]).is_err());
    assert!(DirichletParams::new(vec![1.0, f64::INFINITY]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn samples_lie_on_simplex(shapes in prop::collection::vec(1e-3f64..5.0, 2..40), seed in any::<u64>()) {
        let params = DirichletParams::new(shapes).unwrap();
        for x in sample(&params, 20, seed).unwrap() {
            let s: f64 = x.as_slice().iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
            prop_assert!(x.as_slice().iter().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn from_target_scales_by_dimension(w in prop::collection::vec(0.01f64..1.0, 2..30)) {
        let nu = SimplexPoint::normalize(w).unwrap();
        let p = DirichletParams::from_target(&nu);
        prop_assert!((p.total() - nu.dim() as f64).abs() < 1e-9);
        let mo = moments(&p);
        for (a, b) in mo.mean.as_slice().iter().zip(nu.as_slice()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
