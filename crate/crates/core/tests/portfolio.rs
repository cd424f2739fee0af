use astra_core::expconcave::{ConstantGenerator, CosineGenerator, Generator, LogGeometricMean};
use astra_core::portfolio::{
    diversity_weighted, equal_weighted, fgp_from_gradient, fgp_map, CosinePolicy, DiversityWeighted, Market, Policy,
    PortfolioWeights,
};
use astra_core::SimplexPoint;
use proptest::prelude::*;

fn simplex_vec(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, n).prop_map(|w| {
        let s: f64 = w.iter().sum();
        w.into_iter().map(|x| x / s).collect()
    })
}

fn pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (2usize..40).prop_flat_map(|n| (simplex_vec(n), simplex_vec(n)))
}

#[test]
fn hand_computed_fgp() {
    // p = (0.5, 0.5), v = (1, -1): <p, v> = 0, pi = (1, 0).
    let mut out = [0.0; 2];
    fgp_from_gradient(&[0.5, 0.5], &[1.0, -1.0], &mut out).unwrap();
    assert_eq!(out, [1.0, 0.0]);
    // p = (0.2, 0.8), v = (0.5, 0): <p, v> = 0.1, pi = (0.28, 0.72).
    fgp_from_gradient(&[0.2, 0.8], &[0.5, 0.0], &mut out).unwrap();
    assert!((out[0] - 0.28).abs() < 1e-15 && (out[1] - 0.72).abs() < 1e-15);
}

#[test]
fn constant_generator_gives_market() {
    let p = [0.1, 0.6, 0.3];
    let w = fgp_map(&ConstantGenerator { n: 3 }, &p).unwrap();
    assert_eq!(w.as_slice(), &p);
}

#[test]
fn geometric_mean_generator_gives_equal_weights() {
    let p = [0.1, 0.6, 0.3];
    let w = fgp_map(&LogGeometricMean { n: 3 }, &p).unwrap();
    for v in w.iter() {
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
    }
}

#[test]
fn cosine_at_center_is_market() {
    let nu = SimplexPoint::new(vec![0.5, 0.3, 0.2]).unwrap();
    let gen = CosineGenerator::sqrt_n(nu.clone(), 1.0).unwrap();
    assert_eq!(fgp_map(&gen, nu.as_slice()).unwrap().as_slice(), nu.as_slice());
}

#[test]
fn cosine_policy_latches() {
    let nu = SimplexPoint::barycenter(4).unwrap();
    let gen = CosineGenerator::sqrt_n(nu, 0.5).unwrap();
    let mut policy = CosinePolicy::new(gen, 1.0).unwrap();
    let near = [0.26, 0.24, 0.25, 0.25];
    let far = [0.7, 0.1, 0.1, 0.1];
    assert!(!policy.exited());
    assert_ne!(policy.weights(&near).unwrap().as_slice(), &near);
    assert_eq!(policy.weights(&far).unwrap().as_slice(), &far);
    assert!(policy.exited());
    assert_eq!(policy.weights(&near).unwrap().as_slice(), &near);
    policy.reset();
    assert!(!policy.exited());
    assert_ne!(policy.weights(&near).unwrap().as_slice(), &near);
}

#[test]
fn cosine_policy_rejects_exit_radius_outside_domain() {
    let gen = CosineGenerator::sqrt_n(SimplexPoint::barycenter(4).unwrap(), 1.0).unwrap();
    assert!(CosinePolicy::new(gen.clone(), 1.6).is_err());
    assert!(CosinePolicy::new(gen, 0.0).is_err());
}

#[test]
fn diversity_hand_computed() {
    // sqrt weights of (0.36, 0.64) are (0.6, 0.8), normalized (3/7, 4/7).
    let w = diversity_weighted(&[0.36, 0.64], 0.5).unwrap();
    assert!((w[0] - 3.0 / 7.0).abs() < 1e-15);
    assert!(DiversityWeighted::new(0.0).is_err());
    assert!(DiversityWeighted::new(1.5).is_err());
    assert_eq!(
        diversity_weighted(&[0.36, 0.64], 1.0).unwrap().as_slice(),
        &[0.36, 0.64]
    );
}

#[test]
fn raw_weights_validation() {
    assert!(PortfolioWeights::from_raw(vec![0.5, 0.5]).is_ok());
    assert!(PortfolioWeights::from_raw(vec![f64::NAN, 1.0]).is_err());
    assert!(PortfolioWeights::from_raw(vec![1.0, -1.0]).is_err());
    let w = PortfolioWeights::from_raw(vec![1.5, -0.5]).unwrap();
    assert!(!w.is_long_only());
    assert_eq!(w.min_weight(), -0.5);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn fgp_sums_to_one((p, x0) in pair(), scale in 0.05f64..=1.0) {
        let gen = CosineGenerator::sqrt_n(SimplexPoint::new(x0).unwrap(), scale).unwrap();
        if gen.in_domain(&p) {
            let w = fgp_map(&gen, &p).unwrap();
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        } else {
            prop_assert!(fgp_map(&gen, &p).is_err());
        }
    }

    #[test]
    fn fgp_long_only_when_gradient_small((p, x0) in pair(), scale in 0.05f64..=1.0) {
        let gen = CosineGenerator::sqrt_n(SimplexPoint::new(x0).unwrap(), scale).unwrap();
        let mut v = vec![0.0; p.len()];
        prop_assume!(gen.gradient(&p, &mut v));
        let pv: f64 = p.iter().zip(&v).map(|(a, b)| a * b).sum();
        let spread = v.iter().map(|x| x.abs()).fold(0.0, f64::max) + pv.abs();
        if spread < 1.0 {
            prop_assert!(fgp_map(&gen, &p).unwrap().is_long_only());
        }
    }

    #[test]
    fn market_and_equal_policies(p in (2usize..50).prop_flat_map(simplex_vec)) {
        let m = Market.weights(&p).unwrap();
        prop_assert_eq!(m.as_slice(), p.as_slice());
        let ew = equal_weighted(&p);
        prop_assert!(ew.iter().all(|w| (w - 1.0 / p.len() as f64).abs() < 1e-15));
    }

    #[test]
    fn diversity_preserves_ranking_and_compresses(p in (2usize..50).prop_flat_map(simplex_vec), e in 0.05f64..1.0) {
        let d = diversity_weighted(&p, e).unwrap();
        prop_assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for i in 0..p.len() {
            for j in 0..p.len() {
                if p[i] > p[j] {
                    prop_assert!(d[i] >= d[j]);
                }
            }
        }
        let pmax = p.iter().copied().fold(0.0, f64::max);
        let pmin = p.iter().copied().fold(1.0, f64::min);
        prop_assert!(d.iter().copied().fold(0.0, f64::max) <= pmax + 1e-15);
        prop_assert!(d.iter().copied().fold(1.0, f64::min) >= pmin - 1e-15);
    }
}
