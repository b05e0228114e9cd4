//! Residual diagnostics on the latent scale: innovations, correlograms,
//! Ljung–Box whiteness tests and moment checks of the latentized data.

use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Result, VartaError};
use crate::likelihood::{latentize, TimeSeriesData, VartaModel};
use crate::linalg::Matrix;
use crate::scalar::Scalar;
use crate::simulation::var_mean;

/// Nominal-band caveat attached to every report.
pub const CAVEAT: &str = "bands and p-values are nominal white-noise references; \
they ignore estimation uncertainty in the fitted parameters and can be optimistic in small samples; \
moment flags use i.i.d. standard errors, so strongly persistent latent series can trip the mean and variance flags";

/// `η̂_t = Ẑ_t - Σ_i Â_i Ẑ_{t-i}` for `t = k+1..n`.
pub fn residuals<T: Scalar>(model: &VartaModel<T>, data: &TimeSeriesData<T>) -> Result<Matrix<T>> {
    let z = latentize(model, data)?;
    latent_residuals(model, &z)
}

pub fn latent_residuals<T: Scalar>(model: &VartaModel<T>, z: &Matrix<T>) -> Result<Matrix<T>> {
    let (p, k) = (model.dim(), model.order());
    if z.rows() <= k {
        return Err(VartaError::DataInvalid(format!("{} rows leave no residuals for a VAR({k})", z.rows())));
    }
    let mut out = Matrix::zeros(z.rows() - k, p);
    let mut mean = vec![T::zero(); p];
    for t in k..z.rows() {
        var_mean(model.var.coefficients(), z, t, &mut mean);
        for i in 0..p {
            out[(t - k, i)] = z[(t, i)] - mean[i];
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct CrossCorrelation<T: Scalar> {
    /// 1-based series indices; `values[l] = corr(x_{i,t}, x_{j,t-l})`.
    pub i: usize,
    pub j: usize,
    pub values: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Correlogram<T: Scalar> {
    pub n: usize,
    pub max_lag: usize,
    /// `1.96/√n`.
    pub band: T,
    /// `acf[i][l]`, lags `0..=max_lag`.
    pub acf: Vec<Vec<T>>,
    /// All ordered pairs `i ≠ j`, lags `0..=max_lag`.
    pub ccf: Vec<CrossCorrelation<T>>,
}

fn centered<T: Scalar>(x: &Matrix<T>, i: usize) -> (Vec<T>, T) {
    let n = T::from_usize_lossy(x.rows());
    let col = x.column(i);
    let mean = col.iter().copied().sum::<T>() / n;
    let c: Vec<T> = col.iter().map(|v| *v - mean).collect();
    let sd = (c.iter().map(|v| *v * *v).sum::<T>() / n).sqrt();
    (c, sd)
}

/// Sample correlation of `a_t` with `b_{t-lag}`, normalized by `n`.
fn lagged_corr<T: Scalar>(a: &[T], sa: T, b: &[T], sb: T, lag: usize) -> T {
    let n = a.len();
    let s: T = (lag..n).map(|t| a[t] * b[t - lag]).sum();
    s / (T::from_usize_lossy(n) * sa * sb)
}

/// Sample auto- and cross-correlations of the columns of `x` up to
/// `max_lag`, with the `±1.96/√n` white-noise band.
pub fn correlogram<T: Scalar>(x: &Matrix<T>, max_lag: usize) -> Result<Correlogram<T>> {
    let (n, p) = (x.rows(), x.cols());
    if n <= 4 * max_lag {
        return Err(VartaError::Domain(format!(
            "{n} observations are too few for {max_lag} lags (need more than {})",
            4 * max_lag
        )));
    }
    let cols: Vec<(Vec<T>, T)> = (0..p).map(|i| centered(x, i)).collect();
    let acf = cols
        .iter()
        .map(|(c, s)| (0..=max_lag).map(|l| lagged_corr(c, *s, c, *s, l)).collect())
        .collect();
    let mut ccf = Vec::new();
    for i in 0..p {
        for j in 0..p {
            if i != j {
                let ((a, sa), (b, sb)) = (&cols[i], &cols[j]);
                ccf.push(CrossCorrelation {
                    i: i + 1,
                    j: j + 1,
                    values: (0..=max_lag).map(|l| lagged_corr(a, *sa, b, *sb, l)).collect(),
                });
            }
        }
    }
    Ok(Correlogram {
        n,
        max_lag,
        band: T::lit(1.96) / T::from_usize_lossy(n).sqrt(),
        acf,
        ccf,
    })
}

impl<T: Scalar> Correlogram<T> {
    /// Lags `1..=max_lag` of series `i` outside the band.
    pub fn acf_violations(&self, i: usize) -> usize {
        self.acf[i][1..].iter().filter(|r| r.abs() > self.band).count()
    }

    /// Lags `0..=max_lag` of a cross-correlation outside the band.
    pub fn ccf_violations(&self, c: &CrossCorrelation<T>) -> usize {
        c.values.iter().filter(|r| r.abs() > self.band).count()
    }

    /// `kind,series,other,lag,value,band` rows for plotting.
    pub fn write_csv<W: Write>(&self, names: &[String], mut w: W) -> Result<()> {
        writeln!(w, "kind,series,other,lag,value,band")?;
        let band = self.band.as_f64();
        for (i, row) in self.acf.iter().enumerate() {
            for (l, v) in row.iter().enumerate() {
                writeln!(w, "acf,{},{},{l},{:?},{band:?}", names[i], names[i], v.as_f64())?;
            }
        }
        for c in &self.ccf {
            for (l, v) in c.values.iter().enumerate() {
                writeln!(w, "ccf,{},{},{l},{:?},{band:?}", names[c.i - 1], names[c.j - 1], v.as_f64())?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Portmanteau {
    pub series: usize,
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

/// Ljung–Box `Q = n(n+2) Σ_{l=1}^{L} r_l²/(n-l)` per column, referred to
/// `χ²_L`.
pub fn whiteness_test<T: Scalar>(resid: &Matrix<T>, lags: usize) -> Result<Vec<Portmanteau>> {
    if lags == 0 {
        return Err(VartaError::Domain("at least one lag is required".into()));
    }
    let cg = correlogram(resid, lags)?;
    let n = resid.rows() as f64;
    let chi = ChiSquared::new(lags as f64).map_err(|e| VartaError::Domain(e.to_string()))?;
    Ok(cg
        .acf
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let q = n * (n + 2.0)
                * (1..=lags)
                    .map(|l| r[l].as_f64().powi(2) / (n - l as f64))
                    .sum::<f64>();
            Portmanteau {
                series: i + 1,
                statistic: q,
                df: lags,
                p_value: chi.sf(q),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentCheck {
    pub series: usize,
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    /// Standard errors under `N(0, 1)`: `√(1/n)`, `√(2/n)`, `√(6/n)`, `√(24/n)`.
    pub se: [f64; 4],
    /// Names of moments more than 3 standard errors from their `N(0, 1)`
    /// value.
    pub flags: Vec<String>,
}

/// Mean, variance, skewness and excess kurtosis of each latent column,
/// flagged when more than 3 standard errors from `0, 1, 0, 0`.
pub fn gaussianity_check<T: Scalar>(latent: &Matrix<T>) -> Result<Vec<MomentCheck>> {
    let n = latent.rows();
    if n < 50 {
        return Err(VartaError::Domain(format!("{n} observations are too few for moment checks (need 50)")));
    }
    let nf = n as f64;
    let se = [(1.0 / nf).sqrt(), (2.0 / nf).sqrt(), (6.0 / nf).sqrt(), (24.0 / nf).sqrt()];
    Ok((0..latent.cols())
        .map(|i| {
            let x: Vec<f64> = latent.column(i).iter().map(|v| v.as_f64()).collect();
            let mean = x.iter().sum::<f64>() / nf;
            let m = |k: i32| x.iter().map(|v| (v - mean).powi(k)).sum::<f64>() / nf;
            let (m2, m3, m4) = (m(2), m(3), m(4));
            let skew = m3 / m2.powf(1.5);
            let kurt = m4 / (m2 * m2) - 3.0;
            let mut flags = Vec::new();
            for (name, dev, s) in [
                ("mean", mean, se[0]),
                ("variance", m2 - 1.0, se[1]),
                ("skewness", skew, se[2]),
                ("excess_kurtosis", kurt, se[3]),
            ] {
                if dev.abs() > 3.0 * s {
                    flags.push(name.to_string());
                }
            }
            MomentCheck {
                series: i + 1,
                mean,
                variance: m2,
                skewness: skew,
                excess_kurtosis: kurt,
                se,
                flags,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ResidualReport<T: Scalar> {
    pub names: Vec<String>,
    pub order: usize,
    pub max_lag: usize,
    /// `(n - k) x p` residual rows.
    pub residuals: Vec<Vec<T>>,
    pub correlogram: Correlogram<T>,
    pub whiteness: Vec<Portmanteau>,
    /// Largest number of band violations over all ordered series pairs.
    pub max_pairwise_ccf_violations: usize,
    pub moments: Vec<MomentCheck>,
    pub caveat: String,
}

/// Default number of lags: `min(20, ⌊(n-k-1)/4⌋)`, at least 1.
pub fn default_lags(n_resid: usize) -> usize {
    (n_resid.saturating_sub(1) / 4).clamp(1, 20)
}

/// Full residual analysis of a fitted model on its data.
pub fn diagnose<T: Scalar>(
    model: &VartaModel<T>,
    data: &TimeSeriesData<T>,
    max_lag: Option<usize>,
) -> Result<ResidualReport<T>> {
    let z = latentize(model, data)?;
    let resid = latent_residuals(model, &z)?;
    let lags = max_lag.unwrap_or_else(|| default_lags(resid.rows()));
    let correlogram = correlogram(&resid, lags)?;
    let whiteness = whiteness_test(&resid, lags)?;
    let max_pairwise_ccf_violations = correlogram
        .ccf
        .iter()
        .map(|c| correlogram.ccf_violations(c))
        .max()
        .unwrap_or(0);
    Ok(ResidualReport {
        names: data.names().to_vec(),
        order: model.order(),
        max_lag: lags,
        residuals: resid.to_rows(),
        correlogram,
        whiteness,
        max_pairwise_ccf_violations,
        moments: gaussianity_check(&z)?,
        caveat: CAVEAT.to_string(),
    })
}

impl<T: Scalar> ResidualReport<T> {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "Residual whiteness (Ljung-Box, {} lags)", self.max_lag);
        let _ = writeln!(out, "  {:<12} {:>6} {:>10} {:>8} {:>10}", "series", "acf>", "Q", "df", "p-value");
        for w in &self.whiteness {
            let _ = writeln!(
                out,
                "  {:<12} {:>6} {:>10.3} {:>8} {:>10.4}",
                self.names[w.series - 1],
                self.correlogram.acf_violations(w.series - 1),
                w.statistic,
                w.df,
                w.p_value
            );
        }
        let _ = writeln!(
            out,
            "  max cross-correlation band violations over series pairs: {} of {} lags (band ±{:.4})",
            self.max_pairwise_ccf_violations,
            self.max_lag + 1,
            self.correlogram.band.as_f64()
        );
        let _ = writeln!(out, "Latent moments (expected 0, 1, 0, 0)");
        let _ = writeln!(
            out,
            "  {:<12} {:>9} {:>9} {:>9} {:>9}  flags",
            "series", "mean", "variance", "skewness", "ex.kurt"
        );
        for m in &self.moments {
            let _ = writeln!(
                out,
                "  {:<12} {:>9.4} {:>9.4} {:>9.4} {:>9.4}  {}",
                self.names[m.series - 1],
                m.mean,
                m.variance,
                m.skewness,
                m.excess_kurtosis,
                if m.flags.is_empty() { "-".to_string() } else { m.flags.join(",") }
            );
        }
        let _ = writeln!(out, "note: {}", self.caveat);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::CorrelationMatrix;
    use crate::marginals::MarginalSpec;
    use crate::simulation::{simulate_latent, simulate_latent_path, simulate_varta, Initialization, RngSpec};
    use crate::var_model::VarParams;

    fn ar1(a: f64) -> VarParams<f64> {
        VarParams::new(vec![Matrix::from_rows(&[vec![a]]).unwrap()], CorrelationMatrix::identity(1)).unwrap()
    }

    #[test]
    fn residuals_recover_innovations() {
        let a = Matrix::from_rows(&[vec![0.5, 0.1], vec![-0.2, 0.3]]).unwrap();
        let vp = VarParams::new(vec![a], CorrelationMatrix::new(2, vec![0.3]).unwrap()).unwrap();
        let m = VartaModel::new(vp.clone(), vec![MarginalSpec::weibull(2.0, 3.0).unwrap(); 2]).unwrap();
        let path = simulate_latent_path(&vp, 300, &RngSpec::new(2), Initialization::Stationary).unwrap();
        let x = simulate_varta(&m, 300, &RngSpec::new(2)).unwrap();
        let r = residuals(&m, &x).unwrap();
        assert_eq!(r.rows(), 299);
        assert!(r.max_abs_diff(&path.eta.block(1, 0, 299, 2)) < 1e-8);
    }

    #[test]
    fn zero_dynamics_residuals_are_latent() {
        let m = VartaModel::new(VarParams::white_noise(2, 1), vec![MarginalSpec::standard_normal(); 2]).unwrap();
        let d = TimeSeriesData::new(Matrix::from_fn(10, 2, |t, i| (t * 3 + i) as f64 * 0.1), None).unwrap();
        assert_eq!(residuals(&m, &d).unwrap(), d.values().block(1, 0, 9, 2));
    }

    #[test]
    fn acf_of_ar1_and_lag_zero() {
        let n = 20_000;
        let z = simulate_latent(&ar1(0.5), n, &RngSpec::new(5)).unwrap();
        let cg = correlogram(&z, 5).unwrap();
        assert!((cg.acf[0][0] - 1.0).abs() < 1e-14);
        assert!((cg.acf[0][1] - 0.5).abs() < 3.0 / (n as f64).sqrt());
        assert!(correlogram(&z.block(0, 0, 20, 1), 5).is_err());
    }

    #[test]
    fn white_noise_band_rate() {
        let n = 100_000;
        let vp = VarParams::<f64>::white_noise(2, 1);
        let z = simulate_latent(&vp, n, &RngSpec::new(6)).unwrap();
        let cg = correlogram(&z, 40).unwrap();
        let outside: usize = (0..2).map(|i| cg.acf_violations(i)).sum::<usize>()
            + cg.ccf.iter().map(|c| cg.ccf_violations(c)).sum::<usize>();
        let total = 2 * 40 + 2 * 41;
        assert!((outside as f64) <= 0.1 * total as f64, "{outside} of {total}");
    }

    #[test]
    fn ljung_box_power_and_nonnegativity() {
        let z = simulate_latent(&ar1(0.9), 500, &RngSpec::new(7)).unwrap();
        let lb = whiteness_test(&z, 10).unwrap();
        assert!(lb[0].statistic >= 0.0);
        assert!(lb[0].p_value < 0.001);
        let w = simulate_latent(&VarParams::<f64>::white_noise(1, 1), 500, &RngSpec::new(8)).unwrap();
        let lb = whiteness_test(&w, 10).unwrap();
        assert!(lb[0].statistic >= 0.0 && lb[0].p_value > 0.0 && lb[0].p_value <= 1.0);
    }

    /// `Q` against a hand computation on a short series.
    #[test]
    fn ljung_box_formula() {
        let x = Matrix::from_fn(12, 1, |t, _| [1.0, -0.5, 2.0, 0.3, -1.2, 0.8, 0.1, -0.7, 1.5, -0.2, 0.4, -1.0][t]);
        let col = x.column(0);
        let mean = col.iter().sum::<f64>() / 12.0;
        let c0: f64 = col.iter().map(|v| (v - mean).powi(2)).sum();
        let r = |l: usize| (l..12).map(|t| (col[t] - mean) * (col[t - l] - mean)).sum::<f64>() / c0;
        let q = 12.0 * 14.0 * (r(1).powi(2) / 11.0 + r(2).powi(2) / 10.0);
        let lb = whiteness_test(&x, 2).unwrap();
        assert!((lb[0].statistic - q).abs() < 1e-12);
        assert!((lb[0].p_value - (-q / 2.0).exp()).abs() < 1e-12);
    }

    #[test]
    fn moment_flags() {
        let z = simulate_latent(&VarParams::<f64>::white_noise(1, 1), 5000, &RngSpec::new(3)).unwrap();
        let g = gaussianity_check(&z).unwrap();
        assert!(g[0].flags.is_empty(), "{:?}", g[0]);
        // Weibull(1, 1) data read through a Gaussian marginal: strong skewness
        let m = VartaModel::new(VarParams::white_noise(1, 1), vec![MarginalSpec::weibull(1.0, 1.0).unwrap()]).unwrap();
        let x = simulate_varta(&m, 2000, &RngSpec::new(10)).unwrap();
        let wrong = VartaModel::new(VarParams::white_noise(1, 1), vec![MarginalSpec::gaussian(1.0, 1.0).unwrap()]).unwrap();
        let g = gaussianity_check(&latentize(&wrong, &x).unwrap()).unwrap();
        assert!(g[0].flags.contains(&"skewness".to_string()));
        assert!(gaussianity_check(&z.block(0, 0, 20, 1)).is_err());
    }

    #[test]
    fn report_round_trips_and_prints() {
        let a = Matrix::from_rows(&[vec![0.5, 0.1], vec![-0.2, 0.3]]).unwrap();
        let vp = VarParams::new(vec![a], CorrelationMatrix::new(2, vec![0.3]).unwrap()).unwrap();
        let m = VartaModel::new(vp, vec![MarginalSpec::weibull(2.0, 3.0).unwrap(); 2]).unwrap();
        let x = simulate_varta(&m, 400, &RngSpec::new(12)).unwrap();
        let rep = diagnose(&m, &x, None).unwrap();
        assert_eq!(rep.max_lag, 20);
        assert_eq!(rep.residuals.len(), 399);
        let json = serde_json::to_string(&rep).unwrap();
        let back: ResidualReport<f64> = serde_json::from_str(&json).unwrap();
        assert_eq!(back.whiteness, rep.whiteness);
        assert!(rep.to_text().contains("Ljung-Box"));
        let mut buf = Vec::new();
        rep.correlogram.write_csv(&rep.names, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1 + 2 * 21 + 2 * 21);
    }
}
