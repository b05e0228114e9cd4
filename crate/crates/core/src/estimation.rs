//! Maximum-likelihood fitting of VARTA models.
//!
//! The optimizer works on an unconstrained parameter vector
//! `β = (vec A_1, …, vec A_k, corr angles, marginal coordinates)`:
//! each `A_l` column-major, correlation angles from
//! [`corr_to_unconstrained`], and `log α, log λ` (Weibull) or `μ, log σ`
//! (Gaussian) per series. Empirical marginals contribute no coordinates.
//! Estimation works in `f64`.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::error::{Result, VartaError};
use crate::gaussian::{
    corr_to_unconstrained, mvn_logpdf_chol, normal_quantile, unconstrained_to_corr, CorrelationMatrix,
};
use crate::likelihood::{latentize, loglik, TimeSeriesData, VartaModel};
use crate::linalg::{chol_inverse, chol_log_det, Matrix};
use crate::marginals::{MarginalFamily, MarginalSpec};
use crate::optim::{self, central_gradient, LbfgsOptions, Objective};
use crate::var_model::VarParams;

pub use crate::likelihood::LikelihoodKind;

/// Objective value used where the parameters leave the stationary region or
/// `Ω` is not positive definite.
pub const BARRIER: f64 = 1e10;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Parameter groups used in reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParamGroup {
    #[serde(rename = "A")]
    A,
    #[serde(rename = "rho")]
    Rho,
    #[serde(rename = "marginal")]
    Marginal,
}

impl ParamGroup {
    pub fn label(self) -> &'static str {
        match self {
            ParamGroup::A => "A",
            ParamGroup::Rho => "rho",
            ParamGroup::Marginal => "marginal",
        }
    }
}

/// Shape of the parameter vector for a given dimension, order and set of
/// marginal families.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamLayout {
    pub p: usize,
    pub k: usize,
    pub families: Vec<MarginalFamily>,
}

impl ParamLayout {
    pub fn new(p: usize, k: usize, families: Vec<MarginalFamily>) -> Self {
        debug_assert_eq!(families.len(), p);
        Self { p, k, families }
    }

    pub fn of(model: &VartaModel<f64>) -> Self {
        Self::new(
            model.dim(),
            model.order(),
            model.marginals.iter().map(MarginalSpec::family).collect(),
        )
    }

    pub fn n_a(&self) -> usize {
        self.k * self.p * self.p
    }

    pub fn n_rho(&self) -> usize {
        self.p * (self.p - 1) / 2
    }

    pub fn n_marginal(&self) -> usize {
        self.families.iter().map(|f| f.n_params()).sum()
    }

    pub fn len(&self) -> usize {
        self.n_a() + self.n_rho() + self.n_marginal()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn marginal_offsets(&self) -> Vec<usize> {
        let mut off = self.n_a() + self.n_rho();
        self.families
            .iter()
            .map(|f| {
                let o = off;
                off += f.n_params();
                o
            })
            .collect()
    }

    /// Names in parameter-vector order: `A1[i,j]`, `rho[i,j]`, then the
    /// family's parameter names with the series index, e.g. `alpha[2]`.
    pub fn names(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.len());
        for l in 1..=self.k {
            for j in 1..=self.p {
                for i in 1..=self.p {
                    out.push(format!("A{l}[{i},{j}]"));
                }
            }
        }
        for i in 1..=self.p {
            for j in (i + 1)..=self.p {
                out.push(format!("rho[{i},{j}]"));
            }
        }
        for (s, f) in self.families.iter().enumerate() {
            for name in f.param_names() {
                out.push(format!("{name}[{}]", s + 1));
            }
        }
        out
    }

    pub fn groups(&self) -> Vec<ParamGroup> {
        let mut g = vec![ParamGroup::A; self.n_a()];
        g.extend(std::iter::repeat(ParamGroup::Rho).take(self.n_rho()));
        g.extend(std::iter::repeat(ParamGroup::Marginal).take(self.n_marginal()));
        g
    }

    /// Unconstrained vector of a model.
    pub fn pack(&self, model: &VartaModel<f64>) -> Result<Vec<f64>> {
        if ParamLayout::of(model) != *self {
            return Err(VartaError::Shape("model does not match the parameter layout".into()));
        }
        let mut beta = Vec::with_capacity(self.len());
        push_coefficients(&mut beta, model.var.coefficients(), self.p);
        beta.extend(corr_to_unconstrained(model.var.sigma())?);
        for m in &model.marginals {
            beta.extend(m.unconstrained());
        }
        Ok(beta)
    }

    /// Model from an unconstrained vector. `template` supplies the families
    /// (and the fixed empirical marginals). No stationarity check.
    pub fn unpack(&self, beta: &[f64], template: &[MarginalSpec<f64>]) -> Result<VartaModel<f64>> {
        if beta.len() != self.len() {
            return Err(VartaError::Shape(format!(
                "parameter vector has {} entries, layout needs {}",
                beta.len(),
                self.len()
            )));
        }
        let a = self.coefficients(beta)?;
        let sigma = unconstrained_to_corr(&beta[self.n_a()..self.n_a() + self.n_rho()], self.p)?;
        let marginals = self.marginals(beta, template)?;
        VartaModel::new(VarParams::new(a, sigma)?, marginals)
    }

    fn coefficients(&self, beta: &[f64]) -> Result<Vec<Matrix<f64>>> {
        let (p, pp) = (self.p, self.p * self.p);
        (0..self.k)
            .map(|l| {
                let block = &beta[l * pp..(l + 1) * pp];
                Ok(Matrix::from_fn(p, p, |i, j| block[j * p + i]))
            })
            .collect()
    }

    fn marginals(&self, beta: &[f64], template: &[MarginalSpec<f64>]) -> Result<Vec<MarginalSpec<f64>>> {
        template
            .iter()
            .zip(self.marginal_offsets())
            .map(|(m, off)| m.with_unconstrained(&beta[off..off + m.family().n_params()]))
            .collect()
    }

    /// Natural-scale parameters: A entries (same order as `β`), `ρ` in
    /// row-major upper-triangle order, then marginal parameters.
    pub fn natural(&self, model: &VartaModel<f64>) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        push_coefficients(&mut out, model.var.coefficients(), self.p);
        out.extend_from_slice(model.var.sigma().rho());
        for m in &model.marginals {
            out.extend(m.params());
        }
        out
    }
}

fn push_coefficients(out: &mut Vec<f64>, a: &[Matrix<f64>], p: usize) {
    for m in a {
        for j in 0..p {
            for i in 0..p {
                out.push(m[(i, j)]);
            }
        }
    }
}

/// Least-recently-used cache keyed by parameter bit patterns.
struct Lru<V> {
    cap: usize,
    items: VecDeque<(Vec<u64>, Rc<V>)>,
}

impl<V> Lru<V> {
    fn new(cap: usize) -> Self {
        Self {
            cap,
            items: VecDeque::with_capacity(cap),
        }
    }

    fn get_or_try_insert(&mut self, key: Vec<u64>, make: impl FnOnce() -> Result<V>) -> Result<Rc<V>> {
        if let Some(pos) = self.items.iter().position(|(k, _)| *k == key) {
            let item = self.items.remove(pos).expect("position is valid");
            let v = Rc::clone(&item.1);
            self.items.push_front(item);
            return Ok(v);
        }
        let v = Rc::new(make()?);
        if self.items.len() == self.cap {
            self.items.pop_back();
        }
        self.items.push_front((key, Rc::clone(&v)));
        Ok(v)
    }
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

/// Latent column of one series with its Jacobian sum.
struct Column {
    z: Vec<f64>,
    jac: f64,
}

/// Lag cross-products `M = Σ_t w_t w_t'`, `w_t = (z_t, z_{t-1}, …, z_{t-k})`,
/// over `t = k..n-1`, plus what the exact initial term needs.
struct Sufficient {
    m: Matrix<f64>,
    z0: Vec<f64>,
    jac: f64,
}

/// Log-likelihood evaluated through sufficient statistics. Changing `A` or
/// `ρ` costs `O((kp)³)`; changing one marginal recomputes its latent column
/// and the cross-products.
pub(crate) struct FastLikelihood<'a> {
    layout: ParamLayout,
    template: Vec<MarginalSpec<f64>>,
    data: &'a TimeSeriesData<f64>,
    exact: bool,
    columns: Vec<Lru<Column>>,
    stats: Lru<Sufficient>,
}

impl<'a> FastLikelihood<'a> {
    pub(crate) fn new(
        template: &[MarginalSpec<f64>],
        k: usize,
        data: &'a TimeSeriesData<f64>,
        kind: LikelihoodKind,
    ) -> Result<Self> {
        data.check_against(template)?;
        let p = data.p();
        if data.n() < k + 2 {
            return Err(VartaError::DataInvalid(format!(
                "{} observations are too few for a VAR({k})",
                data.n()
            )));
        }
        let exact = kind.resolve(k)? == LikelihoodKind::Exact;
        Ok(Self {
            layout: ParamLayout::new(p, k, template.iter().map(MarginalSpec::family).collect()),
            template: template.to_vec(),
            data,
            exact,
            columns: (0..p).map(|_| Lru::new(4)).collect(),
            stats: Lru::new(3),
        })
    }

    /// Number of time points entering the likelihood.
    pub(crate) fn n_terms(&self) -> usize {
        if self.exact {
            self.data.n()
        } else {
            self.data.n() - self.layout.k
        }
    }

    fn column(&mut self, series: usize, m: &MarginalSpec<f64>, key: Vec<u64>) -> Result<Rc<Column>> {
        let data = self.data;
        let from = if self.exact { 0 } else { self.layout.k };
        self.columns[series].get_or_try_insert(key, || {
            let x = data.column(series);
            let z: Vec<f64> = x.iter().map(|&v| m.to_latent(v)).collect();
            let mut acc = crate::likelihood::KahanSum::new();
            for (&v, &zv) in x[from..].iter().zip(&z[from..]) {
                acc.add(m.log_jacobian_from_latent(v, zv));
            }
            let jac = acc.value();
            if !jac.is_finite() || z.iter().any(|v| !v.is_finite()) {
                return Err(VartaError::Domain("latent transform is not finite".into()));
            }
            Ok(Column { z, jac })
        })
    }

    fn sufficient(&mut self, marginals: &[MarginalSpec<f64>], beta_marg: &[f64]) -> Result<Rc<Sufficient>> {
        let offsets: Vec<usize> = self.layout.marginal_offsets();
        let base = self.layout.n_a() + self.layout.n_rho();
        let mut cols = Vec::with_capacity(marginals.len());
        for (i, m) in marginals.iter().enumerate() {
            let start = offsets[i] - base;
            let key = bits(&beta_marg[start..start + m.family().n_params()]);
            cols.push(self.column(i, m, key)?);
        }
        let (p, k, n) = (self.layout.p, self.layout.k, self.data.n());
        self.stats.get_or_try_insert(bits(beta_marg), || {
            let d = (k + 1) * p;
            let mut m = Matrix::zeros(d, d);
            for a in 0..d {
                let (ba, ia) = (a / p, a % p);
                for b in a..d {
                    let (bb, ib) = (b / p, b % p);
                    let za = &cols[ia].z[k - ba..n - ba];
                    let zb = &cols[ib].z[k - bb..n - bb];
                    let s: f64 = za.iter().zip(zb).map(|(x, y)| x * y).sum();
                    m[(a, b)] = s;
                    m[(b, a)] = s;
                }
            }
            Ok(Sufficient {
                m,
                z0: cols.iter().map(|c| c.z[0]).collect(),
                jac: cols.iter().map(|c| c.jac).sum(),
            })
        })
    }

    /// Log-likelihood at `β`; barrier conditions come back as errors.
    pub(crate) fn loglik(&mut self, beta: &[f64]) -> Result<f64> {
        let layout = self.layout.clone();
        if beta.len() != layout.len() {
            return Err(VartaError::Shape("parameter vector length".into()));
        }
        let (p, k) = (layout.p, layout.k);
        let a = layout.coefficients(beta)?;
        let sigma = unconstrained_to_corr(&beta[layout.n_a()..layout.n_a() + layout.n_rho()], p)?;
        let marginals = layout.marginals(beta, &self.template)?;
        let vp = VarParams::new(a, sigma)?;
        let omega = vp.derive_omega()?;
        let chol = omega.cholesky().map_err(|_| VartaError::OmegaNotPd)?;

        let stats = self.sufficient(&marginals, &beta[layout.n_a() + layout.n_rho()..])?;
        let mut c = Matrix::zeros(p, (k + 1) * p);
        for i in 0..p {
            c[(i, i)] = 1.0;
        }
        for (l, al) in vp.coefficients().iter().enumerate() {
            c.set_block(0, (l + 1) * p, &al.scale(-1.0));
        }
        let s = &(&c * &stats.m) * &c.transpose();
        let omega_inv = chol_inverse(&chol);
        let mut tr = 0.0;
        for i in 0..p {
            for j in 0..p {
                tr += omega_inv[(i, j)] * s[(j, i)];
            }
        }
        let n_eff = (self.data.n() - k) as f64;
        let mut ll = -0.5 * (n_eff * (p as f64 * LN_2PI + chol_log_det(&chol)) + tr);
        if self.exact {
            ll += mvn_logpdf_chol(&stats.z0, &vec![0.0; p], &vp.sigma().cholesky()?)?;
        }
        ll += stats.jac;
        if ll.is_finite() {
            Ok(ll)
        } else {
            Err(VartaError::Domain("log-likelihood is not finite".into()))
        }
    }
}

/// Averaged negative log-likelihood with a finite barrier.
struct NegLoglik<'a, 'b> {
    lik: &'b mut FastLikelihood<'a>,
    scale: f64,
}

impl Objective for NegLoglik<'_, '_> {
    fn value(&mut self, x: &[f64]) -> f64 {
        match self.lik.loglik(x) {
            Ok(ll) => -ll / self.scale,
            Err(_) => BARRIER,
        }
    }
}

/// Fitting controls.
#[derive(Debug, Clone)]
pub struct FitOptions {
    pub likelihood: LikelihoodKind,
    pub max_iter: usize,
    /// Gradient max-norm tolerance on the per-observation objective.
    pub gtol: f64,
    /// Relative change of the objective that stops the search.
    pub ftol: f64,
    pub standard_errors: bool,
    /// Restart once from a perturbed point if the first run does not
    /// converge.
    pub restart: bool,
    /// Starting model; defaults to [`initial_values`].
    pub initial: Option<VartaModel<f64>>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            likelihood: LikelihoodKind::Auto,
            max_iter: 1000,
            gtol: 1e-6,
            ftol: 1e-10,
            standard_errors: true,
            restart: true,
            initial: None,
        }
    }
}

pub(crate) mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

/// One row of the parameter table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamInfo {
    pub name: String,
    pub group: ParamGroup,
    pub estimate: f64,
    #[serde(with = "nan_as_null")]
    pub se: f64,
    #[serde(with = "nan_as_null")]
    pub tvalue: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: VartaModel<f64>,
    pub parameters: Vec<ParamInfo>,
    pub loglik: f64,
    pub likelihood: LikelihoodKind,
    pub n_obs: usize,
    pub converged: bool,
    pub n_iter: usize,
    /// Gradient max-norm of the per-observation objective at the optimum.
    pub gradient_norm: f64,
    /// False when the observed information was not positive definite; the
    /// standard errors are then missing.
    pub se_available: bool,
    pub message: String,
}

impl FitResult {
    pub fn estimates(&self) -> Vec<f64> {
        self.parameters.iter().map(|p| p.estimate).collect()
    }

    pub fn se(&self) -> Vec<f64> {
        self.parameters.iter().map(|p| p.se).collect()
    }

    pub fn tvalues(&self) -> Vec<f64> {
        self.parameters.iter().map(|p| p.tvalue).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("fit result serializes")
    }

    /// Plain-text parameter table: multivariate relationships (A, ρ) first,
    /// then marginal parameters.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let row = |out: &mut String, p: &ParamInfo| {
            let _ = writeln!(
                out,
                "  {:<14} {:>12.4} {:>10.4} {:>9.2}",
                p.name, p.estimate, p.se, p.tvalue
            );
        };
        let header = |out: &mut String, title: &str| {
            let _ = writeln!(out, "{title}");
            let _ = writeln!(out, "  {:<14} {:>12} {:>10} {:>9}", "Parameter", "Estimate", "st.err", "t-value");
        };
        header(&mut out, "Multivariate relationships");
        for p in self.parameters.iter().filter(|p| p.group != ParamGroup::Marginal) {
            row(&mut out, p);
        }
        if self.parameters.iter().any(|p| p.group == ParamGroup::Marginal) {
            header(&mut out, "Marginal parameters");
            for p in self.parameters.iter().filter(|p| p.group == ParamGroup::Marginal) {
                row(&mut out, p);
            }
        }
        let _ = writeln!(
            out,
            "log-likelihood {:.4} ({} likelihood, n = {}), converged: {}, iterations: {}",
            self.loglik,
            match self.likelihood {
                LikelihoodKind::Exact => "exact",
                _ => "conditional",
            },
            self.n_obs,
            self.converged,
            self.n_iter
        );
        if !self.se_available {
            let _ = writeln!(out, "warning: observed information not positive definite; no standard errors");
        }
        out
    }
}

/// Sample correlation matrix of the columns of `z`.
fn sample_correlation(z: &Matrix<f64>) -> Matrix<f64> {
    let (n, p) = (z.rows(), z.cols());
    let means: Vec<f64> = (0..p).map(|i| z.column(i).iter().sum::<f64>() / n as f64).collect();
    let mut c = Matrix::<f64>::zeros(p, p);
    for t in 0..n {
        for i in 0..p {
            for j in i..p {
                c[(i, j)] += (z[(t, i)] - means[i]) * (z[(t, j)] - means[j]);
            }
        }
    }
    let d: Vec<f64> = (0..p).map(|i| c[(i, i)].sqrt()).collect();
    Matrix::from_fn(p, p, |i, j| {
        if i == j {
            1.0
        } else {
            let (a, b) = (i.min(j), i.max(j));
            c[(a, b)] / (d[a] * d[b])
        }
    })
}

/// Least-squares VAR without intercept: rows `t = k..n-1` of `z` regressed on
/// their `k` lags.
fn ols_var(z: &Matrix<f64>, k: usize) -> Result<Vec<Matrix<f64>>> {
    let (n, p) = (z.rows(), z.cols());
    let d = k * p;
    let mut xx = Matrix::zeros(d, d);
    let mut yx = Matrix::zeros(p, d);
    let mut x = vec![0.0; d];
    for t in k..n {
        for l in 0..k {
            x[l * p..(l + 1) * p].copy_from_slice(z.row(t - l - 1));
        }
        for a in 0..d {
            for b in 0..d {
                xx[(a, b)] += x[a] * x[b];
            }
            for i in 0..p {
                yx[(i, a)] += z[(t, i)] * x[a];
            }
        }
    }
    let coef = &yx * &xx.inverse()?;
    Ok((0..k).map(|l| coef.block(0, l * p, p, p)).collect())
}

/// Starting values: univariate marginal fits, least-squares VAR on the
/// latentized data, and the sample correlation of the latentized series.
/// `A` is shrunk toward zero until the spectral radius is at most 0.98 and
/// `Ω` is positive definite; `ρ` is shrunk until positive definite.
pub fn initial_values(
    data: &TimeSeriesData<f64>,
    k: usize,
    families: &[MarginalFamily],
) -> Result<VartaModel<f64>> {
    let p = data.p();
    if families.len() != p {
        return Err(VartaError::Shape(format!("{} families for {p} series", families.len())));
    }
    if k == 0 {
        return Err(VartaError::Config("VAR order must be at least 1".into()));
    }
    if data.n() <= 10 * p || data.n() < k + 2 {
        return Err(VartaError::DataInvalid(format!(
            "{} observations are too few to fit {p} series",
            data.n()
        )));
    }
    let marginals = families
        .iter()
        .enumerate()
        .map(|(i, &f)| {
            let col = data.column(i);
            if f == MarginalFamily::Weibull {
                if let Some(t) = col.iter().position(|&x| x <= 0.0) {
                    return Err(VartaError::Support {
                        row: t + 1,
                        series: i + 1,
                        value: col[t],
                    });
                }
            }
            MarginalSpec::fit(f, &col)
        })
        .collect::<Result<Vec<_>>>()?;
    let probe = VartaModel::new(VarParams::white_noise(p, k), marginals.clone())?;
    let z = latentize(&probe, data)?;

    let mut corr = sample_correlation(&z);
    let mut sigma = None;
    for _ in 0..200 {
        if let Ok(c) = CorrelationMatrix::from_matrix(&corr) {
            sigma = Some(c);
            break;
        }
        corr = Matrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { 0.9 * corr[(i, j)] });
    }
    let sigma = sigma.unwrap_or_else(|| CorrelationMatrix::identity(p));

    let a0 = ols_var(&z, k).unwrap_or_else(|_| vec![Matrix::zeros(p, p); k]);
    let mut shrink = 1.0;
    let mut var = None;
    for _ in 0..200 {
        let cand = VarParams::new(a0.iter().map(|a| a.scale(shrink)).collect(), sigma.clone())?;
        let ok = cand.spectral_radius().map(|r| r <= 0.98).unwrap_or(false) && cand.derive_omega().is_ok();
        if ok {
            var = Some(cand);
            break;
        }
        shrink *= 0.9;
    }
    let var = match var {
        Some(v) => v,
        None => VarParams::new(vec![Matrix::zeros(p, p); k], sigma)?,
    };
    VartaModel::new(var, marginals)
}

/// Standard errors from the observed information.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardErrors {
    /// Natural-scale standard errors (NaN when unavailable).
    pub se: Vec<f64>,
    /// Natural-scale covariance matrix, when available.
    pub covariance: Option<Matrix<f64>>,
}

impl StandardErrors {
    pub fn available(&self) -> bool {
        self.covariance.is_some()
    }
}

fn hessian(f: &mut impl FnMut(&[f64]) -> Result<f64>, x: &[f64], rel_step: f64) -> Result<Matrix<f64>> {
    let d = x.len();
    let h: Vec<f64> = x.iter().map(|v| rel_step * v.abs().max(1.0)).collect();
    let f0 = f(x)?;
    let mut xv = x.to_vec();
    let mut hess = Matrix::zeros(d, d);
    for i in 0..d {
        xv[i] = x[i] + h[i];
        let up = f(&xv)?;
        xv[i] = x[i] - h[i];
        let down = f(&xv)?;
        xv[i] = x[i];
        hess[(i, i)] = (up - 2.0 * f0 + down) / (h[i] * h[i]);
        for j in 0..i {
            let mut eval = |si: f64, sj: f64| {
                xv[i] = x[i] + si * h[i];
                xv[j] = x[j] + sj * h[j];
                let v = f(&xv);
                xv[i] = x[i];
                xv[j] = x[j];
                v
            };
            let v = (eval(1.0, 1.0)? - eval(1.0, -1.0)? - eval(-1.0, 1.0)? + eval(-1.0, -1.0)?)
                / (4.0 * h[i] * h[j]);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    Ok(hess)
}

fn standard_errors_at(
    lik: &mut FastLikelihood<'_>,
    layout: &ParamLayout,
    template: &[MarginalSpec<f64>],
    beta: &[f64],
) -> StandardErrors {
    let unavailable = StandardErrors {
        se: vec![f64::NAN; beta.len()],
        covariance: None,
    };
    let Ok(h) = hessian(&mut |b| lik.loglik(b), beta, 1e-4) else {
        return unavailable;
    };
    let info = h.scale(-1.0);
    let Ok(chol) = info.cholesky() else {
        return unavailable;
    };
    let cov_u = chol_inverse(&chol);
    // delta method through the unpack map
    let d = beta.len();
    let mut jac = Matrix::zeros(d, d);
    let nat = |b: &[f64]| -> Vec<f64> {
        match layout.unpack(b, template) {
            Ok(m) => layout.natural(&m),
            Err(_) => vec![f64::NAN; d],
        }
    };
    let mut bv = beta.to_vec();
    for j in 0..d {
        let step = 1e-6 * beta[j].abs().max(1.0);
        bv[j] = beta[j] + step;
        let up = nat(&bv);
        bv[j] = beta[j] - step;
        let down = nat(&bv);
        bv[j] = beta[j];
        for i in 0..d {
            jac[(i, j)] = (up[i] - down[i]) / (2.0 * step);
        }
    }
    let cov = &(&jac * &cov_u) * &jac.transpose();
    let se: Vec<f64> = cov.diagonal().iter().map(|v| if *v > 0.0 { v.sqrt() } else { f64::NAN }).collect();
    if se.iter().any(|s| !s.is_finite()) {
        return unavailable;
    }
    StandardErrors {
        se,
        covariance: Some(cov),
    }
}

/// Standard errors of `model` on `data`: the negative Hessian of the
/// log-likelihood in unconstrained coordinates (central differences, step
/// `1e-4·max(1, |β_i|)`) is inverted and mapped to natural parameters by the
/// delta method.
pub fn standard_errors(
    model: &VartaModel<f64>,
    data: &TimeSeriesData<f64>,
    kind: LikelihoodKind,
) -> Result<StandardErrors> {
    let layout = ParamLayout::of(model);
    let beta = layout.pack(model)?;
    let mut lik = FastLikelihood::new(&model.marginals, model.order(), data, kind)?;
    Ok(standard_errors_at(&mut lik, &layout, &model.marginals, &beta))
}

/// Fits a VARTA(k) model with the given marginal families by maximum
/// likelihood. Non-convergence is reported through `converged`, not as an
/// error.
pub fn fit(
    data: &TimeSeriesData<f64>,
    k: usize,
    families: &[MarginalFamily],
    options: &FitOptions,
) -> Result<FitResult> {
    let start = match &options.initial {
        Some(m) => {
            if m.order() != k || m.marginals.iter().map(MarginalSpec::family).ne(families.iter().copied()) {
                return Err(VartaError::Config("initial model does not match k and families".into()));
            }
            m.clone()
        }
        None => initial_values(data, k, families)?,
    };
    let layout = ParamLayout::of(&start);
    let template = start.marginals.clone();
    let kind = options.likelihood.resolve(k)?;
    let mut lik = FastLikelihood::new(&template, k, data, kind)?;
    let scale = lik.n_terms() as f64;
    let beta0 = layout.pack(&start)?;
    let opts = LbfgsOptions {
        max_iter: options.max_iter,
        gtol: options.gtol,
        ftol: options.ftol,
        ..Default::default()
    };

    let mut obj = NegLoglik { lik: &mut lik, scale };
    let mut res = optim::minimize(&mut obj, &beta0, &opts);
    let mut iterations = res.iterations;
    if !res.converged && options.restart {
        let perturbed: Vec<f64> = res
            .x
            .iter()
            .enumerate()
            .map(|(i, v)| v + if i % 2 == 0 { 1e-3 } else { -1e-3 } * v.abs().max(1.0))
            .collect();
        let second = optim::minimize(&mut obj, &perturbed, &opts);
        iterations += second.iterations;
        if second.converged || second.f < res.f {
            res = second;
        }
    }
    if res.f >= BARRIER {
        return Err(VartaError::NonConvergence(format!(
            "no admissible parameter values found: {}",
            res.message
        )));
    }

    let model = layout.unpack(&res.x, &template)?;
    let ll = loglik(&model, data, kind)?;
    let ses = if options.standard_errors {
        standard_errors_at(&mut lik, &layout, &template, &res.x)
    } else {
        StandardErrors {
            se: vec![f64::NAN; layout.len()],
            covariance: None,
        }
    };
    let estimates = layout.natural(&model);
    let parameters = layout
        .names()
        .into_iter()
        .zip(layout.groups())
        .zip(estimates.iter().zip(&ses.se))
        .map(|((name, group), (&estimate, &se))| ParamInfo {
            name,
            group,
            estimate,
            se,
            tvalue: estimate / se,
        })
        .collect();
    Ok(FitResult {
        model,
        parameters,
        loglik: ll,
        likelihood: kind,
        n_obs: data.n(),
        converged: res.converged,
        n_iter: iterations,
        gradient_norm: res.grad_norm,
        se_available: ses.available(),
        message: res.message,
    })
}

/// Gradient of the per-observation objective by central differences, as
/// seen by the optimizer.
pub fn objective_gradient(
    model: &VartaModel<f64>,
    data: &TimeSeriesData<f64>,
    kind: LikelihoodKind,
) -> Result<Vec<f64>> {
    let layout = ParamLayout::of(model);
    let beta = layout.pack(model)?;
    let mut lik = FastLikelihood::new(&model.marginals, model.order(), data, kind)?;
    let scale = lik.n_terms() as f64;
    let mut obj = NegLoglik { lik: &mut lik, scale };
    Ok(central_gradient(|b| obj.value(b), &beta, 1e-6))
}

/// `estimate ± z_{(1+level)/2}·se` per parameter, natural scale.
pub fn confidence_intervals(fr: &FitResult, level: f64) -> Result<Vec<(f64, f64)>> {
    if !(level > 0.0 && level < 1.0) {
        return Err(VartaError::Domain(format!("confidence level {level} outside (0, 1)")));
    }
    let z = normal_quantile(0.5 * (1.0 + level))?;
    Ok(fr
        .parameters
        .iter()
        .map(|p| (p.estimate - z * p.se, p.estimate + z * p.se))
        .collect())
}
