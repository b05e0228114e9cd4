use varta::forecasting::forecast;
use varta::gaussian::CorrelationMatrix;
use varta::likelihood::{loglik_exact_var1, TimeSeriesData, VartaModel};
use varta::linalg::Matrix;
use varta::marginals::MarginalSpec;
use varta::simulation::simulate_varta;
use varta::var_model::VarParams;
use varta::RngSpec;

fn model<T: varta::Scalar>() -> VartaModel<T> {
    let l = T::lit;
    let a = Matrix::from_rows(&[vec![l(0.5), l(0.1)], vec![l(-0.2), l(0.3)]]).unwrap();
    let vp = VarParams::new(vec![a], CorrelationMatrix::new(2, vec![l(0.4)]).unwrap()).unwrap();
    VartaModel::new(vp, vec![MarginalSpec::weibull(l(2.0), l(3.0)).unwrap(), MarginalSpec::gaussian(l(1.0), l(0.5)).unwrap()]).unwrap()
}

#[test]
fn single_and_double_precision_agree() {
    let m64 = model::<f64>();
    let m32 = model::<f32>();
    let x64 = simulate_varta(&m64, 200, &RngSpec::new(1)).unwrap();
    let x32 = TimeSeriesData::new(Matrix::from_vec(200, 2, x64.values().as_slice().iter().map(|v| *v as f32).collect()).unwrap(), None).unwrap();
    let (a, b) = (loglik_exact_var1(&m64, &x64).unwrap(), loglik_exact_var1(&m32, &x32).unwrap());
    assert!((a - b as f64).abs() < 1e-3 * a.abs(), "{a} vs {b}");
    let sim32 = simulate_varta(&m32, 200, &RngSpec::new(1)).unwrap();
    let diff = sim32.values().as_slice().iter().zip(x64.values().as_slice()).map(|(s, d)| (*s as f64 - d).abs()).fold(0.0, f64::max);
    assert!(diff < 1e-3, "{diff}");
    let fr = forecast(&m32, &x32, 3, 50, &RngSpec::new(2)).unwrap();
    assert!(fr.draws(2, 0).iter().all(|v| v.is_finite() && *v > 0.0));
}
