//! Log-likelihood of observed series under a VARTA model: Gaussian density of
//! the latent path plus the change-of-variables Jacobian.

use serde::{Deserialize, Serialize};

use crate::error::{Result, VartaError};
use crate::gaussian::mvn_logpdf_chol;
use crate::linalg::Matrix;
use crate::marginals::MarginalSpec;
use crate::scalar::Scalar;
use crate::var_model::VarParams;

/// Latent VAR parameters together with one marginal per series.
#[derive(Debug, Clone, PartialEq)]
pub struct VartaModel<T: Scalar> {
    pub var: VarParams<T>,
    pub marginals: Vec<MarginalSpec<T>>,
}

/// `n x p` observations in data units, one named column per series.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesData<T: Scalar> {
    values: Matrix<T>,
    names: Vec<String>,
}

/// Which likelihood to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LikelihoodKind {
    /// Exact for `k = 1`, conditional otherwise.
    #[default]
    Auto,
    /// Stationary initial term plus conditionals; `k = 1` only.
    Exact,
    /// Conditional on the first `k` observations.
    Conditional,
}

impl LikelihoodKind {
    pub fn resolve(self, k: usize) -> Result<LikelihoodKind> {
        match (self, k) {
            (LikelihoodKind::Auto, 1) | (LikelihoodKind::Exact, 1) => Ok(LikelihoodKind::Exact),
            (LikelihoodKind::Exact, _) => Err(VartaError::Config(
                "the exact likelihood is only available for k = 1".into(),
            )),
            _ => Ok(LikelihoodKind::Conditional),
        }
    }

    /// Index of the first time point that enters the likelihood.
    pub fn first_term(self, k: usize) -> Result<usize> {
        Ok(match self.resolve(k)? {
            LikelihoodKind::Exact => 0,
            _ => k,
        })
    }
}

impl<T: Scalar> VartaModel<T> {
    pub fn new(var: VarParams<T>, marginals: Vec<MarginalSpec<T>>) -> Result<Self> {
        if marginals.len() != var.dim() {
            return Err(VartaError::Shape(format!(
                "{} marginals for a {}-dimensional VAR",
                marginals.len(),
                var.dim()
            )));
        }
        for m in &marginals {
            m.validate()?;
        }
        Ok(Self { var, marginals })
    }

    pub fn dim(&self) -> usize {
        self.var.dim()
    }

    pub fn order(&self) -> usize {
        self.var.order()
    }

    /// All invariants, including stationarity and a PD `Ω`.
    pub fn validate(&self) -> Result<()> {
        for m in &self.marginals {
            m.validate()?;
        }
        self.var.validate()
    }
}

impl<T: Scalar> TimeSeriesData<T> {
    /// Rejects empty or non-finite data. Missing names become `X1..Xp`.
    pub fn new(values: Matrix<T>, names: Option<Vec<String>>) -> Result<Self> {
        let (n, p) = (values.rows(), values.cols());
        if n == 0 || p == 0 {
            return Err(VartaError::DataInvalid("data has no observations".into()));
        }
        for t in 0..n {
            for i in 0..p {
                if !values[(t, i)].is_finite() {
                    return Err(VartaError::DataInvalid(format!(
                        "non-finite value at row {}, column {}",
                        t + 1,
                        i + 1
                    )));
                }
            }
        }
        let names = match names {
            Some(v) if v.len() != p => {
                return Err(VartaError::Shape(format!("{} names for {p} columns", v.len())))
            }
            Some(v) => v,
            None => (1..=p).map(|i| format!("X{i}")).collect(),
        };
        Ok(Self { values, names })
    }

    pub fn values(&self) -> &Matrix<T> {
        &self.values
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n(&self) -> usize {
        self.values.rows()
    }

    pub fn p(&self) -> usize {
        self.values.cols()
    }

    pub fn column(&self, i: usize) -> Vec<T> {
        self.values.column(i)
    }

    /// Dimension match and every value strictly inside its marginal support.
    pub fn check_against(&self, marginals: &[MarginalSpec<T>]) -> Result<()> {
        if marginals.len() != self.p() {
            return Err(VartaError::Shape(format!(
                "data has {} series, model has {}",
                self.p(),
                marginals.len()
            )));
        }
        for t in 0..self.n() {
            for (i, m) in marginals.iter().enumerate() {
                let x = self.values[(t, i)];
                if !m.in_support_interior(x) {
                    return Err(VartaError::Support {
                        row: t + 1,
                        series: i + 1,
                        value: x.as_f64(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// `Z_it = Φ⁻¹(F_i(X_it))`.
pub fn latentize<T: Scalar>(model: &VartaModel<T>, data: &TimeSeriesData<T>) -> Result<Matrix<T>> {
    data.check_against(&model.marginals)?;
    let v = data.values();
    Ok(Matrix::from_fn(data.n(), data.p(), |t, i| model.marginals[i].to_latent(v[(t, i)])))
}

/// `X_it = F_i⁻¹(Φ(Z_it))`.
pub fn delatentize<T: Scalar>(
    marginals: &[MarginalSpec<T>],
    z: &Matrix<T>,
    names: Option<Vec<String>>,
) -> Result<TimeSeriesData<T>> {
    if marginals.len() != z.cols() {
        return Err(VartaError::Shape(format!(
            "{} marginals for {} latent columns",
            marginals.len(),
            z.cols()
        )));
    }
    let x = Matrix::from_fn(z.rows(), z.cols(), |t, i| marginals[i].from_latent(z[(t, i)]));
    TimeSeriesData::new(x, names)
}

/// Neumaier-compensated running sum.
#[derive(Clone, Copy)]
pub(crate) struct KahanSum<T> {
    sum: T,
    comp: T,
}

impl<T: Scalar> KahanSum<T> {
    pub(crate) fn new() -> Self {
        Self {
            sum: T::zero(),
            comp: T::zero(),
        }
    }

    pub(crate) fn add(&mut self, x: T) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp = self.comp + ((self.sum - t) + x);
        } else {
            self.comp = self.comp + ((x - t) + self.sum);
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> T {
        self.sum + self.comp
    }
}

/// `Σ_i Σ_{t ≥ from} log ∂Φ⁻¹(F_i(x_it))/∂x_it`; independent of `(A, ρ)`.
pub fn jacobian_part<T: Scalar>(
    marginals: &[MarginalSpec<T>],
    data: &TimeSeriesData<T>,
    from: usize,
) -> Result<T> {
    data.check_against(marginals)?;
    let mut acc = KahanSum::new();
    for t in from..data.n() {
        for (i, m) in marginals.iter().enumerate() {
            acc.add(m.log_jacobian_term(data.values()[(t, i)]));
        }
    }
    Ok(acc.value())
}

/// Sum of `log N_p(z_t; Σ_i A_i z_{t-i}, Ω)` for `t ≥ from` (`from ≥ k`).
pub fn conditional_gaussian_part<T: Scalar>(
    vp: &VarParams<T>,
    omega_chol: &Matrix<T>,
    z: &Matrix<T>,
    from: usize,
) -> Result<T> {
    let (p, k) = (vp.dim(), vp.order());
    debug_assert!(from >= k);
    let mut acc = KahanSum::new();
    let mut mean = vec![T::zero(); p];
    for t in from..z.rows() {
        mean.iter_mut().for_each(|m| *m = T::zero());
        for (lag, a) in vp.coefficients().iter().enumerate() {
            let prev = z.row(t - lag - 1);
            for (r, m) in mean.iter_mut().enumerate() {
                *m = *m + crate::linalg::dot(a.row(r), prev);
            }
        }
        acc.add(mvn_logpdf_chol(z.row(t), &mean, omega_chol)?);
    }
    Ok(acc.value())
}

fn check_length<T: Scalar>(data: &TimeSeriesData<T>, k: usize) -> Result<()> {
    if data.n() < k + 2 {
        return Err(VartaError::DataInvalid(format!(
            "{} observations are too few for a VAR({k}); need at least {}",
            data.n(),
            k + 2
        )));
    }
    Ok(())
}

fn omega_chol<T: Scalar>(vp: &VarParams<T>) -> Result<Matrix<T>> {
    vp.derive_omega()?.cholesky().map_err(|_| VartaError::OmegaNotPd)
}

/// Gaussian part of the exact VAR(1) likelihood of a latent path:
/// `log N_p(z_1; 0, Σ) + Σ_{t ≥ 2} log N_p(z_t; A z_{t-1}, Ω)`.
pub fn gaussian_part_exact<T: Scalar>(vp: &VarParams<T>, z: &Matrix<T>) -> Result<T> {
    if vp.order() != 1 {
        return Err(VartaError::Config("the exact likelihood is only available for k = 1".into()));
    }
    let chol = omega_chol(vp)?;
    let first = mvn_logpdf_chol(z.row(0), &vec![T::zero(); vp.dim()], &vp.sigma().cholesky()?)?;
    Ok(first + conditional_gaussian_part(vp, &chol, z, 1)?)
}

/// Gaussian part of the conditional likelihood of a latent path.
pub fn gaussian_part_conditional<T: Scalar>(vp: &VarParams<T>, z: &Matrix<T>) -> Result<T> {
    let chol = omega_chol(vp)?;
    conditional_gaussian_part(vp, &chol, z, vp.order())
}

/// Exact log-likelihood of a VARTA(1) model: stationary initial term,
/// Gaussian conditionals and the Jacobian over all `n` rows.
pub fn loglik_exact_var1<T: Scalar>(model: &VartaModel<T>, data: &TimeSeriesData<T>) -> Result<T> {
    if model.order() != 1 {
        return Err(VartaError::Config("the exact likelihood is only available for k = 1".into()));
    }
    check_length(data, 1)?;
    let z = latentize(model, data)?;
    Ok(gaussian_part_exact(&model.var, &z)? + jacobian_part(&model.marginals, data, 0)?)
}

/// Log-likelihood conditional on the first `k` observations; the Jacobian
/// runs over the same rows `t = k+1..n`.
pub fn loglik_conditional<T: Scalar>(model: &VartaModel<T>, data: &TimeSeriesData<T>) -> Result<T> {
    let k = model.order();
    check_length(data, k)?;
    let z = latentize(model, data)?;
    Ok(gaussian_part_conditional(&model.var, &z)? + jacobian_part(&model.marginals, data, k)?)
}

pub fn loglik<T: Scalar>(
    model: &VartaModel<T>,
    data: &TimeSeriesData<T>,
    kind: LikelihoodKind,
) -> Result<T> {
    match kind.resolve(model.order())? {
        LikelihoodKind::Exact => loglik_exact_var1(model, data),
        _ => loglik_conditional(model, data),
    }
}
