mod common;

use varta::forecasting::{forecast, forecast_summary, sorted_quantile};
use varta::simulation::simulate_varta;
use varta::{Correlation, Mat, Marginal, RngSpec, TimeSeriesData, VarParams, VartaModel};

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

fn iid_weibull() -> VartaModel {
    let vp = VarParams::new(vec![Mat::zeros(2, 2)], Correlation::new(2, vec![0.4]).unwrap()).unwrap();
    VartaModel::new(vp, vec![Marginal::weibull(2.0, 3.0).unwrap(), Marginal::weibull(1.0, 1.0).unwrap()]).unwrap()
}

#[test]
fn no_dynamics_gives_marginal_quantiles() {
    let m = iid_weibull();
    let data = simulate_varta(&m, 50, &RngSpec::new(1)).unwrap();
    let fr = forecast(&m, &data, 2, 100_000, &RngSpec::new(2)).unwrap();
    for (i, (shape, scale)) in [(2.0, 3.0), (1.0, 1.0)].into_iter().enumerate() {
        for step in 0..2 {
            let d = sorted(fr.draws(step, i));
            for u in [0.025, 0.5, 0.975] {
                let q = common::weibull_quantile(shape, scale, u);
                // asymptotic SE of a sample quantile: sqrt(u(1-u)/M) / f(q)
                let se = (u * (1.0 - u) / 100_000.0).sqrt() / m.marginals[i].log_pdf(q).exp();
                let got = sorted_quantile(&d, u);
                assert!((got - q).abs() < 4.0 * se, "series {i} step {step} u {u}: {got} vs {q}");
            }
        }
    }
}

/// With `M = 1001` the 2.5%, 50% and 97.5% positions fall on order
/// statistics, so back-transformed latent quantiles equal the data-scale
/// quantiles exactly.
#[test]
fn quantiles_are_equivariant_mean_is_not() {
    let m = common::trivariate();
    let data = simulate_varta(&m, 200, &RngSpec::new(3)).unwrap();
    let fr = forecast(&m, &data, 3, 1001, &RngSpec::new(4)).unwrap();
    for step in 0..3 {
        for i in 0..3 {
            let x = sorted(fr.draws(step, i));
            let z = sorted(fr.latent_draws(step, i));
            for u in [0.025, 0.5, 0.975] {
                assert_eq!(sorted_quantile(&x, u), m.marginals[i].from_latent(sorted_quantile(&z, u)));
            }
        }
    }
    // mean: large M, strongly skewed marginal
    let skewed = VartaModel::new(m.var.clone(), vec![Marginal::weibull(1.0, 1.0).unwrap(); 3]).unwrap();
    let data = simulate_varta(&skewed, 200, &RngSpec::new(5)).unwrap();
    let fr = forecast(&skewed, &data, 1, 100_000, &RngSpec::new(6)).unwrap();
    let x = fr.draws(0, 0);
    let mz = common::mean(&fr.latent_draws(0, 0));
    let mx = common::mean(&x);
    let sd = (x.iter().map(|v| (v - mx).powi(2)).sum::<f64>() / x.len() as f64).sqrt();
    let se = sd / (x.len() as f64).sqrt();
    assert!((skewed.marginals[0].from_latent(mz) - mx).abs() > 3.0 * se);
}

#[test]
fn forecasts_are_skewed() {
    let m = VartaModel::new(common::trivariate().var, vec![Marginal::weibull(1.0, 2.0).unwrap(); 3]).unwrap();
    let data = simulate_varta(&m, 200, &RngSpec::new(7)).unwrap();
    let fr = forecast(&m, &data, 1, 50_000, &RngSpec::new(8)).unwrap();
    for i in 0..3 {
        let (s, se) = common::skewness(&fr.draws(0, i));
        assert!(s > 3.0 * se, "series {i}: {s}");
    }
}

#[test]
fn reproducible_and_conditioned_on_history() {
    let m = common::trivariate();
    let data = simulate_varta(&m, 100, &RngSpec::new(9)).unwrap();
    let a = forecast(&m, &data, 4, 300, &RngSpec::new(10)).unwrap();
    assert_eq!(a, forecast(&m, &data, 4, 300, &RngSpec::new(10)).unwrap());
    assert_ne!(a, forecast(&m, &data, 4, 300, &RngSpec::new(11)).unwrap());
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    assert_eq!(a, pool.install(|| forecast(&m, &data, 4, 300, &RngSpec::new(10)).unwrap()));
    // one-step latent mean is A z_n
    let big = forecast(&m, &data, 1, 40_000, &RngSpec::new(12)).unwrap();
    let z = varta::likelihood::latentize(&m, &data).unwrap();
    let pred = m.var.coefficients()[0].mul_vec(z.row(99));
    let omega = m.var.derive_omega().unwrap();
    for i in 0..3 {
        let se = (omega[(i, i)] / 40_000.0).sqrt();
        assert!((common::mean(&big.latent_draws(0, i)) - pred[i]).abs() < 3.5 * se);
    }
    // only the last observation matters for a VAR(1)
    let mut v = data.values().clone();
    v[(0, 0)] = 99.0;
    let other = TimeSeriesData::new(v, None).unwrap();
    assert_eq!(a, forecast(&m, &other, 4, 300, &RngSpec::new(10)).unwrap());
}

#[test]
fn summary_shape() {
    let m = common::trivariate();
    let data = simulate_varta(&m, 100, &RngSpec::new(13)).unwrap();
    let fr = forecast(&m, &data, 9, 1000, &RngSpec::new(14)).unwrap();
    let s = forecast_summary(&fr, &[0.025, 0.975]).unwrap();
    assert_eq!(s.rows.len(), 27);
    for r in &s.rows {
        assert!(r.quantiles[0] < r.median && r.median < r.quantiles[1]);
    }
    assert!(forecast(&m, &data, 0, 10, &RngSpec::new(1)).is_err());
    assert!(forecast(&m, &data, 1, 0, &RngSpec::new(1)).is_err());
    assert!(forecast_summary(&fr, &[1.0]).is_err());
}
