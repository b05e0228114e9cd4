//! Shared fixtures and independently coded oracles. Nothing here calls the
//! library's linear algebra.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use varta::gaussian::unconstrained_to_corr;
use varta::{Correlation, Mat, Marginal, VarParams, VartaModel};

pub fn rng(seed: u64) -> Xoshiro256PlusPlus {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

pub fn trivariate() -> VartaModel {
    varta::montecarlo::trivariate_truth()
}

/// Random stationary VAR(k) with a PD innovation covariance.
pub fn random_var(p: usize, k: usize, g: &mut impl Rng) -> VarParams {
    loop {
        let a: Vec<Mat> = (0..k)
            .map(|_| Mat::from_fn(p, p, |_, _| g.gen_range(-0.6..0.6) / (p * k) as f64))
            .collect();
        let v: Vec<f64> = (0..p * (p - 1) / 2).map(|_| g.gen_range(-1.0..1.0)).collect();
        let sigma = unconstrained_to_corr(&v, p).unwrap();
        if let Ok(vp) = VarParams::new(a, sigma) {
            if vp.derive_omega().and_then(|o| o.cholesky()).is_ok() {
                return vp;
            }
        }
    }
}

pub fn random_marginal(g: &mut impl Rng) -> Marginal {
    match g.gen_range(0..2) {
        0 => Marginal::weibull(g.gen_range(0.5..5.0), g.gen_range(0.2..10.0)).unwrap(),
        _ => Marginal::gaussian(g.gen_range(-5.0..5.0), g.gen_range(0.1..5.0)).unwrap(),
    }
}

pub fn sigma_of(c: &Correlation) -> Vec<Vec<f64>> {
    c.matrix().to_rows()
}

// ---- plain dense oracles on Vec<Vec<f64>> ----

pub fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let (n, m, q) = (a.len(), b.len(), b[0].len());
    let mut c = vec![vec![0.0; q]; n];
    for i in 0..n {
        for l in 0..m {
            for j in 0..q {
                c[i][j] += a[i][l] * b[l][j];
            }
        }
    }
    c
}

pub fn transpose(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    (0..a[0].len()).map(|j| a.iter().map(|r| r[j]).collect()).collect()
}

/// Lower Cholesky factor, `None` when not PD.
pub fn chol(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for j in 0..n {
        let d = a[j][j] - (0..j).map(|k| l[j][k] * l[j][k]).sum::<f64>();
        if d <= 0.0 {
            return None;
        }
        l[j][j] = d.sqrt();
        for i in j + 1..n {
            l[i][j] = (a[i][j] - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>()) / l[j][j];
        }
    }
    Some(l)
}

/// Gaussian log density `N(x; 0, cov)`.
pub fn mvn_logpdf(x: &[f64], cov: &[Vec<f64>]) -> f64 {
    let l = chol(cov).expect("PD covariance");
    let n = x.len();
    let mut y = vec![0.0; n];
    for i in 0..n {
        y[i] = (x[i] - (0..i).map(|k| l[i][k] * y[k]).sum::<f64>()) / l[i][i];
    }
    let logdet: f64 = (0..n).map(|i| l[i][i].ln()).sum::<f64>() * 2.0;
    -0.5 * (n as f64 * (2.0 * std::f64::consts::PI).ln() + logdet + y.iter().map(|v| v * v).sum::<f64>())
}

/// Exact log-likelihood of a stationary Gaussian VAR(1) path with
/// `Cov(Z_t, Z_s) = A^{t-s} Σ`, via the joint `np x np` covariance.
pub fn joint_gaussian_var1_loglik(a: &[Vec<f64>], sigma: &[Vec<f64>], z: &[Vec<f64>]) -> f64 {
    let (n, p) = (z.len(), sigma.len());
    let mut gammas = vec![sigma.to_vec()];
    for h in 1..n {
        let next = matmul(a, &gammas[h - 1]);
        gammas.push(next);
    }
    let mut cov = vec![vec![0.0; n * p]; n * p];
    for t in 0..n {
        for s in 0..=t {
            let g = &gammas[t - s];
            for i in 0..p {
                for j in 0..p {
                    cov[t * p + i][s * p + j] = g[i][j];
                    cov[s * p + j][t * p + i] = g[i][j];
                }
            }
        }
    }
    let x: Vec<f64> = z.iter().flatten().copied().collect();
    mvn_logpdf(&x, &cov)
}

/// Weibull quantile in closed form.
pub fn weibull_quantile(shape: f64, scale: f64, u: f64) -> f64 {
    scale * (-(1.0 - u).ln()).powf(1.0 / shape)
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample skewness with its `√(6/n)` reference SE.
pub fn skewness(x: &[f64]) -> (f64, f64) {
    let m = mean(x);
    let n = x.len() as f64;
    let m2 = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
    let m3 = x.iter().map(|v| (v - m).powi(3)).sum::<f64>() / n;
    (m3 / m2.powf(1.5), (6.0 / n).sqrt())
}

/// Ranks (1-based, no ties expected).
pub fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut r = vec![0.0; x.len()];
    for (pos, &i) in idx.iter().enumerate() {
        r[i] = pos as f64 + 1.0;
    }
    r
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    sxy / (sxx * syy).sqrt()
}

pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    pearson(&ranks(x), &ranks(y))
}

/// One-sample Kolmogorov–Smirnov distance against a CDF.
pub fn ks_distance(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}
