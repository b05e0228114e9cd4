mod common;

use proptest::prelude::*;
use varta::{normal_cdf, normal_quantile, Marginal};

fn family() -> impl Strategy<Value = Marginal> {
    prop_oneof![
        (0.3f64..8.0, 0.1f64..20.0).prop_map(|(a, l)| Marginal::weibull(a, l).unwrap()),
        (-10.0f64..10.0, 0.05f64..10.0).prop_map(|(m, s)| Marginal::gaussian(m, s).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn cdf_of_quantile(m in family(), u in 1e-6f64..(1.0 - 1e-6)) {
        let x = m.quantile(u).unwrap();
        prop_assert!((m.cdf(x) - u).abs() < 1e-10);
    }

    #[test]
    fn quantile_of_cdf(m in family(), u in 0.001f64..0.999) {
        let x = m.quantile(u).unwrap();
        let back = m.quantile(m.cdf(x)).unwrap();
        prop_assert!((back - x).abs() <= 1e-8 * x.abs().max(1.0));
    }

    #[test]
    fn latent_round_trip(m in family(), z in -6.3f64..6.3) {
        let x = m.from_latent(z);
        prop_assert!((m.to_latent(x) - z).abs() < 1e-8);
    }

    #[test]
    fn jacobian_is_density_ratio(m in family(), z in -5.0f64..5.0) {
        let x = m.from_latent(z);
        let direct = m.log_pdf(x) - varta::gaussian::normal_log_pdf(normal_quantile(m.cdf(x)).unwrap());
        prop_assert!((m.log_jacobian_term(x) - direct).abs() < 1e-6 * direct.abs().max(1.0));
    }

    #[test]
    fn jacobian_matches_finite_difference(m in family(), z in -3.0f64..3.0) {
        let x = m.from_latent(z);
        let jac = m.log_jacobian_term(x).exp();
        let h = 1e-5 * x.abs().max(1e-3).min(1.0 / jac);
        let fd = (m.to_latent(x + h) - m.to_latent(x - h)) / (2.0 * h);
        prop_assert!((fd - jac).abs() <= 1e-5 * jac, "fd {} vs {}", fd, jac);
    }

    #[test]
    fn standard_normal_jacobian_is_zero(x in -8.0f64..8.0) {
        prop_assert_eq!(Marginal::standard_normal().log_jacobian_term(x), 0.0);
    }
}

#[test]
fn from_latent_samples_follow_the_marginal() {
    use rand_distr::{Distribution, StandardNormal};
    let mut g = common::rng(99);
    let z: Vec<f64> = (0..100_000).map(|_| StandardNormal.sample(&mut g)).collect();
    for m in [Marginal::weibull(2.0, 3.0).unwrap(), Marginal::weibull(0.7, 1.5).unwrap(), Marginal::gaussian(-2.0, 0.5).unwrap()] {
        let x: Vec<f64> = z.iter().map(|&v| m.from_latent(v)).collect();
        let d = common::ks_distance(&x, |v| m.cdf(v));
        assert!(d <= 1.63 / (x.len() as f64).sqrt(), "{m:?}: {d}");
    }
}

#[test]
fn weibull_matches_closed_form() {
    let m = Marginal::weibull(2.0, 3.0).unwrap();
    for u in [0.025, 0.5, 0.975] {
        let q = common::weibull_quantile(2.0, 3.0, u);
        assert!((m.quantile(u).unwrap() - q).abs() < 1e-12 * q);
        assert!((m.from_latent(normal_quantile(u).unwrap()) - q).abs() < 1e-9 * q);
    }
    assert!((normal_cdf(m.to_latent(3.0)) - (1.0 - (-1.0f64).exp())).abs() < 1e-14);
}

#[test]
fn empirical_marginal_from_sample() {
    let sample: Vec<f64> = (1..=99).map(|i| i as f64).collect();
    let m = Marginal::empirical(&sample).unwrap();
    assert!((m.cdf(50.0) - 0.5).abs() < 0.02);
    let z = m.to_latent(50.0);
    assert!((m.from_latent(z) - 50.0).abs() < 1e-8);
}
