//! Continuous marginal distributions `F_i` and the transform pair
//! `x ↦ Φ⁻¹(F(x))` / `z ↦ F⁻¹(Φ(z))` linking them to the latent scale.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, VartaError};
use crate::gaussian::{clamp_prob, normal_log_pdf, phi_f64, quantile_f64};
use crate::scalar::Scalar;

/// Minimum number of distinct support points of an empirical marginal.
pub const MIN_EMPIRICAL_POINTS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MarginalFamily {
    Weibull,
    Gaussian,
    Empirical,
}

impl MarginalFamily {
    /// Number of free parameters estimated for this family.
    pub fn n_params(self) -> usize {
        match self {
            MarginalFamily::Weibull | MarginalFamily::Gaussian => 2,
            MarginalFamily::Empirical => 0,
        }
    }

    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            MarginalFamily::Weibull => &["alpha", "lambda"],
            MarginalFamily::Gaussian => &["mu", "sigma"],
            MarginalFamily::Empirical => &[],
        }
    }
}

impl fmt::Display for MarginalFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MarginalFamily::Weibull => "weibull",
            MarginalFamily::Gaussian => "gaussian",
            MarginalFamily::Empirical => "empirical",
        })
    }
}

impl FromStr for MarginalFamily {
    type Err = VartaError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "weibull" => Ok(MarginalFamily::Weibull),
            "gaussian" | "normal" => Ok(MarginalFamily::Gaussian),
            "empirical" => Ok(MarginalFamily::Empirical),
            other => Err(VartaError::Config(format!("unknown marginal family '{other}'"))),
        }
    }
}

/// Piecewise-linear CDF through the plotting positions `r/(m+1)` of `m`
/// distinct sorted support points.
///
/// Below the first point and above the last the first and last slopes are
/// continued until the CDF reaches 0 and 1, so the distribution is
/// continuous and strictly increasing on a bounded support.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCdf<T> {
    /// `[lo, x_(1), …, x_(m), hi]`
    knots: Vec<T>,
}

impl<T: Scalar> EmpiricalCdf<T> {
    /// Builds the CDF from a sample; ties are merged.
    pub fn from_sample(sample: &[T]) -> Result<Self> {
        if let Some(x) = sample.iter().find(|x| !x.is_finite()) {
            return Err(VartaError::InvalidMarginal(format!(
                "empirical sample contains non-finite value {x}"
            )));
        }
        let mut xs = sample.to_vec();
        xs.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
        xs.dedup();
        let m = xs.len();
        if m < MIN_EMPIRICAL_POINTS {
            return Err(VartaError::InvalidMarginal(format!(
                "empirical marginal needs at least {MIN_EMPIRICAL_POINTS} distinct values, got {m}"
            )));
        }
        let lo = xs[0] - (xs[1] - xs[0]);
        let hi = xs[m - 1] + (xs[m - 1] - xs[m - 2]);
        let mut knots = Vec::with_capacity(m + 2);
        knots.push(lo);
        knots.extend(xs);
        knots.push(hi);
        Ok(Self { knots })
    }

    /// The distinct sorted support points.
    pub fn values(&self) -> &[T] {
        &self.knots[1..self.knots.len() - 1]
    }

    fn denom(&self) -> T {
        T::from_usize_lossy(self.knots.len() - 1)
    }

    pub fn support(&self) -> (T, T) {
        (self.knots[0], self.knots[self.knots.len() - 1])
    }

    /// Segment `r` with `knots[r] <= x < knots[r+1]`, for `x` inside the support.
    fn segment(&self, x: T) -> usize {
        let r = self.knots.partition_point(|&k| k <= x);
        r.saturating_sub(1).min(self.knots.len() - 2)
    }

    fn cdf(&self, x: T) -> T {
        let (lo, hi) = self.support();
        if x <= lo {
            return T::zero();
        }
        if x >= hi {
            return T::one();
        }
        let r = self.segment(x);
        let frac = (x - self.knots[r]) / (self.knots[r + 1] - self.knots[r]);
        (T::from_usize_lossy(r) + frac) / self.denom()
    }

    fn quantile(&self, u: T) -> T {
        let pos = u * self.denom();
        let r = pos.floor().to_usize().unwrap_or(0).min(self.knots.len() - 2);
        let frac = pos - T::from_usize_lossy(r);
        self.knots[r] + frac * (self.knots[r + 1] - self.knots[r])
    }

    fn log_pdf(&self, x: T) -> T {
        let (lo, hi) = self.support();
        if !(x > lo && x < hi) {
            return T::neg_infinity();
        }
        let r = self.segment(x);
        -(self.denom() * (self.knots[r + 1] - self.knots[r])).ln()
    }
}

/// A continuous marginal distribution family with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MarginalRepr<T>", into = "MarginalRepr<T>", bound = "")]
pub enum MarginalSpec<T: Scalar> {
    Weibull { shape: T, scale: T },
    Gaussian { mean: T, sd: T },
    Empirical(EmpiricalCdf<T>),
}

/// JSON layout: `{"family": "weibull", "shape": α, "scale": λ}`,
/// `{"family": "gaussian", "mean": μ, "sd": σ}`,
/// `{"family": "empirical", "values": [...]}`.
#[derive(Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", bound = "")]
enum MarginalRepr<T: Scalar> {
    Weibull { shape: T, scale: T },
    Gaussian { mean: T, sd: T },
    Empirical { values: Vec<T> },
}

impl<T: Scalar> TryFrom<MarginalRepr<T>> for MarginalSpec<T> {
    type Error = VartaError;

    fn try_from(r: MarginalRepr<T>) -> Result<Self> {
        match r {
            MarginalRepr::Weibull { shape, scale } => Self::weibull(shape, scale),
            MarginalRepr::Gaussian { mean, sd } => Self::gaussian(mean, sd),
            MarginalRepr::Empirical { values } => Self::empirical(&values),
        }
    }
}

impl<T: Scalar> From<MarginalSpec<T>> for MarginalRepr<T> {
    fn from(m: MarginalSpec<T>) -> Self {
        match m {
            MarginalSpec::Weibull { shape, scale } => MarginalRepr::Weibull { shape, scale },
            MarginalSpec::Gaussian { mean, sd } => MarginalRepr::Gaussian { mean, sd },
            MarginalSpec::Empirical(e) => MarginalRepr::Empirical {
                values: e.values().to_vec(),
            },
        }
    }
}

fn positive<T: Scalar>(v: T, what: &str) -> Result<()> {
    if v > T::zero() && v.is_finite() {
        Ok(())
    } else {
        Err(VartaError::InvalidMarginal(format!("{what} must be positive and finite, got {v}")))
    }
}

impl<T: Scalar> MarginalSpec<T> {
    pub fn weibull(shape: T, scale: T) -> Result<Self> {
        positive(shape, "Weibull shape")?;
        positive(scale, "Weibull scale")?;
        Ok(MarginalSpec::Weibull { shape, scale })
    }

    pub fn gaussian(mean: T, sd: T) -> Result<Self> {
        if !mean.is_finite() {
            return Err(VartaError::InvalidMarginal(format!("Gaussian mean {mean} is not finite")));
        }
        positive(sd, "Gaussian sd")?;
        Ok(MarginalSpec::Gaussian { mean, sd })
    }

    pub fn standard_normal() -> Self {
        MarginalSpec::Gaussian {
            mean: T::zero(),
            sd: T::one(),
        }
    }

    pub fn empirical(sample: &[T]) -> Result<Self> {
        EmpiricalCdf::from_sample(sample).map(MarginalSpec::Empirical)
    }

    /// Re-checks the parameter invariants.
    pub fn validate(&self) -> Result<()> {
        match *self {
            MarginalSpec::Weibull { shape, scale } => Self::weibull(shape, scale).map(drop),
            MarginalSpec::Gaussian { mean, sd } => Self::gaussian(mean, sd).map(drop),
            MarginalSpec::Empirical(_) => Ok(()),
        }
    }

    pub fn family(&self) -> MarginalFamily {
        match self {
            MarginalSpec::Weibull { .. } => MarginalFamily::Weibull,
            MarginalSpec::Gaussian { .. } => MarginalFamily::Gaussian,
            MarginalSpec::Empirical(_) => MarginalFamily::Empirical,
        }
    }

    /// Closed support `(lo, hi)`; observations must lie strictly inside.
    pub fn support(&self) -> (T, T) {
        match self {
            MarginalSpec::Weibull { .. } => (T::zero(), T::infinity()),
            MarginalSpec::Gaussian { .. } => (T::neg_infinity(), T::infinity()),
            MarginalSpec::Empirical(e) => e.support(),
        }
    }

    pub fn in_support_interior(&self, x: T) -> bool {
        let (lo, hi) = self.support();
        x.is_finite() && x > lo && x < hi
    }

    pub fn cdf(&self, x: T) -> T {
        match *self {
            MarginalSpec::Weibull { shape, scale } => {
                if x <= T::zero() {
                    T::zero()
                } else {
                    -(-(x / scale).powf(shape)).exp_m1()
                }
            }
            MarginalSpec::Gaussian { mean, sd } => T::lit(phi_f64(((x - mean) / sd).as_f64())),
            MarginalSpec::Empirical(ref e) => e.cdf(x),
        }
    }

    /// Survival function `1 - F(x)`, accurate in the upper tail.
    pub fn sf(&self, x: T) -> T {
        match *self {
            MarginalSpec::Weibull { shape, scale } => {
                if x <= T::zero() {
                    T::one()
                } else {
                    (-(x / scale).powf(shape)).exp()
                }
            }
            MarginalSpec::Gaussian { mean, sd } => T::lit(phi_f64(((mean - x) / sd).as_f64())),
            MarginalSpec::Empirical(ref e) => T::one() - e.cdf(x),
        }
    }

    /// `F⁻¹(u)` for `u ∈ (0, 1)`.
    pub fn quantile(&self, u: T) -> Result<T> {
        check_open_unit(u)?;
        Ok(self.quantile_unchecked(u))
    }

    /// Inverse survival function `F⁻¹(1 - s)` for `s ∈ (0, 1)`.
    pub fn isf(&self, s: T) -> Result<T> {
        check_open_unit(s)?;
        Ok(self.isf_unchecked(s))
    }

    fn quantile_unchecked(&self, u: T) -> T {
        match *self {
            MarginalSpec::Weibull { shape, scale } => scale * (-(-u).ln_1p()).powf(shape.recip()),
            MarginalSpec::Gaussian { mean, sd } => mean + sd * T::lit(quantile_f64(u.as_f64())),
            MarginalSpec::Empirical(ref e) => e.quantile(u),
        }
    }

    fn isf_unchecked(&self, s: T) -> T {
        match *self {
            MarginalSpec::Weibull { shape, scale } => scale * (-s.ln()).powf(shape.recip()),
            MarginalSpec::Gaussian { mean, sd } => mean - sd * T::lit(quantile_f64(s.as_f64())),
            MarginalSpec::Empirical(ref e) => e.quantile(T::one() - s),
        }
    }

    /// `log f(x)`; `-∞` outside the support.
    pub fn log_pdf(&self, x: T) -> T {
        match *self {
            MarginalSpec::Weibull { shape, scale } => {
                if !(x > T::zero()) || !x.is_finite() {
                    return T::neg_infinity();
                }
                let r = x / scale;
                (shape / scale).ln() + (shape - T::one()) * r.ln() - r.powf(shape)
            }
            MarginalSpec::Gaussian { mean, sd } => normal_log_pdf((x - mean) / sd) - sd.ln(),
            MarginalSpec::Empirical(ref e) => e.log_pdf(x),
        }
    }

    /// Latent value `Φ⁻¹(F(x))`. Probabilities are clamped to
    /// `[TAIL_CLAMP, 1 - TAIL_CLAMP]`; the upper half goes through the
    /// survival function so that tail precision is kept.
    pub fn to_latent(&self, x: T) -> T {
        if let MarginalSpec::Gaussian { mean, sd } = *self {
            return (x - mean) / sd;
        }
        let u = self.cdf(x);
        if u <= T::lit(0.5) {
            T::lit(quantile_f64(clamp_prob(u.as_f64())))
        } else {
            -T::lit(quantile_f64(clamp_prob(self.sf(x).as_f64())))
        }
    }

    /// Observation `F⁻¹(Φ(z))`.
    pub fn from_latent(&self, z: T) -> T {
        if let MarginalSpec::Gaussian { mean, sd } = *self {
            return mean + sd * z;
        }
        let zf = z.as_f64();
        if zf <= 0.0 {
            self.quantile_unchecked(T::lit(clamp_prob(phi_f64(zf))))
        } else {
            self.isf_unchecked(T::lit(clamp_prob(phi_f64(-zf))))
        }
    }

    /// `log ∂Φ⁻¹(F(x))/∂x = log f(x) - log φ(Φ⁻¹(F(x)))`; `-∞` outside the
    /// support.
    pub fn log_jacobian_term(&self, x: T) -> T {
        self.log_jacobian_from_latent(x, self.to_latent(x))
    }

    /// [`MarginalSpec::log_jacobian_term`] with `z = to_latent(x)` supplied.
    pub fn log_jacobian_from_latent(&self, x: T, z: T) -> T {
        if let MarginalSpec::Gaussian { sd, .. } = *self {
            return -sd.ln();
        }
        let lf = self.log_pdf(x);
        if lf == T::neg_infinity() {
            return lf;
        }
        lf - normal_log_pdf(z)
    }

    /// Natural parameters (`[α, λ]`, `[μ, σ]`, or none).
    pub fn params(&self) -> Vec<T> {
        match *self {
            MarginalSpec::Weibull { shape, scale } => vec![shape, scale],
            MarginalSpec::Gaussian { mean, sd } => vec![mean, sd],
            MarginalSpec::Empirical(_) => Vec::new(),
        }
    }

    /// Unconstrained coordinates used by the optimizer: log of every
    /// positive parameter, the Gaussian mean as is.
    pub fn unconstrained(&self) -> Vec<T> {
        match *self {
            MarginalSpec::Weibull { shape, scale } => vec![shape.ln(), scale.ln()],
            MarginalSpec::Gaussian { mean, sd } => vec![mean, sd.ln()],
            MarginalSpec::Empirical(_) => Vec::new(),
        }
    }

    /// Same family with parameters taken from unconstrained coordinates.
    pub fn with_unconstrained(&self, v: &[T]) -> Result<Self> {
        if v.len() != self.family().n_params() {
            return Err(VartaError::Shape(format!(
                "{} family takes {} parameters, got {}",
                self.family(),
                self.family().n_params(),
                v.len()
            )));
        }
        match self {
            MarginalSpec::Weibull { .. } => Self::weibull(v[0].exp(), v[1].exp()),
            MarginalSpec::Gaussian { .. } => Self::gaussian(v[0], v[1].exp()),
            MarginalSpec::Empirical(_) => Ok(self.clone()),
        }
    }
}

fn check_open_unit<T: Scalar>(u: T) -> Result<()> {
    if u > T::zero() && u < T::one() {
        Ok(())
    } else {
        Err(VartaError::Domain(format!("probability must lie in (0, 1), got {u}")))
    }
}

impl MarginalSpec<f64> {
    /// Univariate fit of a family to one series: maximum likelihood for
    /// Weibull (method of moments if that fails) and Gaussian, the sample
    /// itself for the empirical family.
    pub fn fit(family: MarginalFamily, sample: &[f64]) -> Result<Self> {
        if sample.iter().any(|x| !x.is_finite()) {
            return Err(VartaError::DataInvalid("non-finite value in sample".into()));
        }
        match family {
            MarginalFamily::Weibull => weibull_mle(sample).or_else(|_| weibull_moments(sample)),
            MarginalFamily::Gaussian => {
                let n = sample.len() as f64;
                if sample.len() < 2 {
                    return Err(VartaError::DataInvalid("need at least 2 values".into()));
                }
                let mean = sample.iter().sum::<f64>() / n;
                let var = sample.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
                Self::gaussian(mean, var.sqrt())
            }
            MarginalFamily::Empirical => Self::empirical(sample),
        }
    }
}

/// Weibull MLE: the shape solves the profile score equation
/// `Σ xᵅ ln x / Σ xᵅ - 1/α - mean(ln x) = 0`, which is increasing in α.
pub(crate) fn weibull_mle(sample: &[f64]) -> Result<MarginalSpec<f64>> {
    if sample.len() < 2 || sample.iter().any(|&x| x <= 0.0) {
        return Err(VartaError::DataInvalid(
            "Weibull fit needs at least 2 positive values".into(),
        ));
    }
    let n = sample.len() as f64;
    let gm = (sample.iter().map(|x| x.ln()).sum::<f64>() / n).exp();
    let logs: Vec<f64> = sample.iter().map(|x| (x / gm).ln()).collect();
    let mean_log = logs.iter().sum::<f64>() / n;
    let score = |a: f64| {
        let (mut s0, mut s1) = (0.0, 0.0);
        for &l in &logs {
            let w = (a * l).exp();
            s0 += w;
            s1 += w * l;
        }
        s1 / s0 - 1.0 / a - mean_log
    };
    let (mut lo, mut hi) = (1e-3, 1.0);
    while score(hi) < 0.0 {
        hi *= 2.0;
        if hi > 1e4 {
            return Err(VartaError::NonConvergence("Weibull shape unbounded".into()));
        }
    }
    if score(lo) > 0.0 {
        return Err(VartaError::NonConvergence("Weibull shape below bracket".into()));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if score(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    let shape = 0.5 * (lo + hi);
    let mean_pow = logs.iter().map(|l| (shape * l).exp()).sum::<f64>() / n;
    let scale = gm * mean_pow.powf(1.0 / shape);
    MarginalSpec::weibull(shape, scale)
}

/// Weibull by matching the coefficient of variation and the mean.
pub(crate) fn weibull_moments(sample: &[f64]) -> Result<MarginalSpec<f64>> {
    use libm::tgamma as gamma;
    let n = sample.len() as f64;
    if sample.len() < 2 {
        return Err(VartaError::DataInvalid("need at least 2 values".into()));
    }
    let mean = sample.iter().sum::<f64>() / n;
    let var = sample.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    if !(mean > 0.0 && var > 0.0) {
        return Err(VartaError::DataInvalid(
            "Weibull moments need positive mean and variance".into(),
        ));
    }
    let cv2 = var / (mean * mean);
    let f = |a: f64| gamma(1.0 + 2.0 / a) / gamma(1.0 + 1.0 / a).powi(2) - 1.0 - cv2;
    // f decreases in the shape
    let (mut lo, mut hi) = (0.05, 200.0);
    if f(lo) < 0.0 || f(hi) > 0.0 {
        return Err(VartaError::NonConvergence("Weibull moment shape out of range".into()));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let shape = 0.5 * (lo + hi);
    MarginalSpec::weibull(shape, mean / gamma(1.0 + 1.0 / shape))
}
