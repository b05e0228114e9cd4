//! Replication harness: simulate from a known model, refit, and measure
//! confidence-interval coverage, bias and RMSE as the sample size grows.
//!
//! Replication `r` at sample-size index `s` draws its data from stream
//! `s·R + r` of the master seed, so results do not depend on thread
//! scheduling.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VartaError};
use crate::estimation::{confidence_intervals, fit, nan_as_null, FitOptions, ParamGroup, ParamLayout};
use crate::gaussian::CorrelationMatrix;
use crate::likelihood::{LikelihoodKind, VartaModel};
use crate::linalg::Matrix;
use crate::marginals::{MarginalFamily, MarginalSpec};
use crate::simulation::{simulate_varta, RngSpec};
use crate::var_model::VarParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McDesign {
    pub truth: VartaModel<f64>,
    pub sample_sizes: Vec<usize>,
    pub replications: usize,
    #[serde(default = "default_level")]
    pub ci_level: f64,
    pub master_seed: RngSpec,
    #[serde(default)]
    pub likelihood: LikelihoodKind,
}

fn default_level() -> f64 {
    0.95
}

/// Trivariate Weibull benchmark: VAR(1) with a full coefficient matrix.
pub fn trivariate_truth() -> VartaModel<f64> {
    let a = Matrix::from_rows(&[
        vec![0.7, 0.2, 0.1],
        vec![0.3, 0.5, 0.2],
        vec![0.1, 0.7, -0.2],
    ])
    .expect("static matrix");
    let sigma = CorrelationMatrix::new(3, vec![0.5, 0.3, 0.7]).expect("static correlation");
    let marginals = [(2.0, 3.0), (2.0, 5.0), (3.0, 1.0)]
        .iter()
        .map(|&(s, l)| MarginalSpec::weibull(s, l).expect("static marginal"))
        .collect();
    VartaModel::new(VarParams::new(vec![a], sigma).expect("stationary"), marginals).expect("valid model")
}

/// Six-dimensional Weibull benchmark: `A_ij = 0.1` throughout (63
/// parameters).
pub fn six_dim_truth() -> VartaModel<f64> {
    let a = Matrix::from_fn(6, 6, |_, _| 0.1);
    #[rustfmt::skip]
    let rho = vec![
        0.1, 0.1, 0.1, 0.1, 0.1,
        0.4, 0.1, 0.1, 0.4,
        0.4, 0.1, 0.1,
        0.1, 0.1,
        0.1,
    ];
    let sigma = CorrelationMatrix::new(6, rho).expect("static correlation");
    let marginals = [(2.0, 3.0), (2.0, 5.0), (3.0, 1.0), (2.0, 2.0), (2.0, 4.0), (3.0, 6.0)]
        .iter()
        .map(|&(s, l)| MarginalSpec::weibull(s, l).expect("static marginal"))
        .collect();
    VartaModel::new(VarParams::new(vec![a], sigma).expect("stationary"), marginals).expect("valid model")
}

impl McDesign {
    pub fn new(truth: VartaModel<f64>, sample_sizes: Vec<usize>, replications: usize, master_seed: u64) -> Result<Self> {
        let d = Self {
            truth,
            sample_sizes,
            replications,
            ci_level: 0.95,
            master_seed: RngSpec::new(master_seed),
            likelihood: LikelihoodKind::Auto,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn trivariate(sample_sizes: Vec<usize>, replications: usize, master_seed: u64) -> Result<Self> {
        Self::new(trivariate_truth(), sample_sizes, replications, master_seed)
    }

    pub fn six_dim(sample_sizes: Vec<usize>, replications: usize, master_seed: u64) -> Result<Self> {
        Self::new(six_dim_truth(), sample_sizes, replications, master_seed)
    }

    pub fn validate(&self) -> Result<()> {
        self.truth.validate()?;
        let p = self.truth.dim();
        if self.replications == 0 {
            return Err(VartaError::Config("replications must be at least 1".into()));
        }
        if self.sample_sizes.is_empty() {
            return Err(VartaError::Config("sample_sizes must not be empty".into()));
        }
        if let Some(n) = self.sample_sizes.iter().find(|&&n| n <= 10 * p) {
            return Err(VartaError::Config(format!("sample size {n} must exceed 10·p = {}", 10 * p)));
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return Err(VartaError::Config(format!("ci_level {} outside (0, 1)", self.ci_level)));
        }
        self.likelihood.resolve(self.truth.order())?;
        Ok(())
    }

    /// Data stream of replication `r` at sample-size index `s`.
    pub fn stream(&self, s: usize, r: usize) -> RngSpec {
        self.master_seed.substream((s * self.replications + r) as u64)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let d: Self = serde_json::from_str(text).map_err(|e| VartaError::Config(format!("design: {e}")))?;
        d.validate()?;
        Ok(d)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("design serializes")
    }
}

/// Why a replication was left out of the aggregates.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureCounts {
    /// Simulation or fit returned an error.
    pub errors: usize,
    pub non_converged: usize,
    /// Converged, but the observed information was not positive definite.
    pub no_standard_errors: usize,
}

impl FailureCounts {
    pub fn total(&self) -> usize {
        self.errors + self.non_converged + self.no_standard_errors
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamStats {
    pub name: String,
    pub group: ParamGroup,
    pub truth: f64,
    #[serde(with = "nan_as_null")]
    pub coverage: f64,
    #[serde(with = "nan_as_null")]
    pub bias: f64,
    /// Mean squared error over the used replications.
    #[serde(with = "nan_as_null")]
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeResult {
    pub n: usize,
    /// Replications entering the aggregates.
    pub used: usize,
    pub failures: FailureCounts,
    pub parameters: Vec<ParamStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub design: McDesign,
    pub results: Vec<SizeResult>,
}

/// Group-level coverage and RMSE at one sample size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRow {
    pub n: usize,
    /// `None` for the all-parameter row.
    pub group: Option<ParamGroup>,
    pub size: usize,
    #[serde(with = "nan_as_null")]
    pub coverage: f64,
    /// `sqrt((1/J) Σ_j (1/R) Σ_r (θ̂_j − θ_j)²)` over the group's `J`
    /// parameters.
    #[serde(with = "nan_as_null")]
    pub rmse: f64,
}

enum Outcome {
    Used { estimates: Vec<f64>, covered: Vec<bool> },
    Error,
    NonConverged,
    NoSe,
}

fn replicate(design: &McDesign, layout_len: usize, n: usize, stream: RngSpec, truth: &[f64]) -> Outcome {
    let families: Vec<MarginalFamily> = design.truth.marginals.iter().map(MarginalSpec::family).collect();
    let opts = FitOptions {
        likelihood: design.likelihood,
        ..Default::default()
    };
    let fr = match simulate_varta(&design.truth, n, &stream).and_then(|x| fit(&x, design.truth.order(), &families, &opts)) {
        Ok(fr) => fr,
        Err(_) => return Outcome::Error,
    };
    if !fr.converged {
        return Outcome::NonConverged;
    }
    if !fr.se_available {
        return Outcome::NoSe;
    }
    let Ok(ci) = confidence_intervals(&fr, design.ci_level) else {
        return Outcome::Error;
    };
    debug_assert_eq!(ci.len(), layout_len);
    Outcome::Used {
        estimates: fr.estimates(),
        covered: ci.iter().zip(truth).map(|(&(lo, hi), &t)| lo <= t && t <= hi).collect(),
    }
}

/// Runs every replication in parallel; the report is identical for any
/// thread count.
pub fn run_mc(design: &McDesign) -> Result<McReport> {
    run_mc_with_progress(design, |_, _| {})
}

/// As [`run_mc`], calling `progress(done, total)` after each replication.
pub fn run_mc_with_progress<F>(design: &McDesign, progress: F) -> Result<McReport>
where
    F: Fn(usize, usize) + Sync,
{
    design.validate()?;
    let layout = ParamLayout::of(&design.truth);
    let truth = layout.natural(&design.truth);
    let names = layout.names();
    let groups = layout.groups();
    let r_count = design.replications;
    let total = design.sample_sizes.len() * r_count;
    let done = std::sync::atomic::AtomicUsize::new(0);

    let outcomes: Vec<Outcome> = (0..total)
        .into_par_iter()
        .map(|idx| {
            let (s, r) = (idx / r_count, idx % r_count);
            let o = replicate(design, layout.len(), design.sample_sizes[s], design.stream(s, r), &truth);
            let d = done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1;
            progress(d, total);
            o
        })
        .collect();

    let results = design
        .sample_sizes
        .iter()
        .enumerate()
        .map(|(s, &n)| {
            let mut failures = FailureCounts::default();
            let mut used = 0usize;
            let j = truth.len();
            let (mut cover, mut err, mut sq) = (vec![0usize; j], vec![0.0; j], vec![0.0; j]);
            for o in &outcomes[s * r_count..(s + 1) * r_count] {
                match o {
                    Outcome::Used { estimates, covered } => {
                        used += 1;
                        for i in 0..j {
                            let e = estimates[i] - truth[i];
                            err[i] += e;
                            sq[i] += e * e;
                            cover[i] += covered[i] as usize;
                        }
                    }
                    Outcome::Error => failures.errors += 1,
                    Outcome::NonConverged => failures.non_converged += 1,
                    Outcome::NoSe => failures.no_standard_errors += 1,
                }
            }
            let u = used as f64;
            let div = |x: f64| if used == 0 { f64::NAN } else { x / u };
            let parameters = (0..j)
                .map(|i| ParamStats {
                    name: names[i].clone(),
                    group: groups[i],
                    truth: truth[i],
                    coverage: div(cover[i] as f64),
                    bias: div(err[i]),
                    mse: div(sq[i]),
                })
                .collect();
            SizeResult {
                n,
                used,
                failures,
                parameters,
            }
        })
        .collect();
    Ok(McReport {
        design: design.clone(),
        results,
    })
}

fn aggregate(n: usize, group: Option<ParamGroup>, params: &[&ParamStats]) -> GroupRow {
    let size = params.len();
    let mean = |f: &dyn Fn(&ParamStats) -> f64| params.iter().map(|p| f(p)).sum::<f64>() / size as f64;
    GroupRow {
        n,
        group,
        size,
        coverage: mean(&|p| p.coverage),
        rmse: mean(&|p| p.mse).sqrt(),
    }
}

impl SizeResult {
    /// Mean coverage over all parameters.
    pub fn average_coverage(&self) -> f64 {
        self.parameters.iter().map(|p| p.coverage).sum::<f64>() / self.parameters.len() as f64
    }

    pub fn group(&self, g: ParamGroup) -> Option<GroupRow> {
        let ps: Vec<&ParamStats> = self.parameters.iter().filter(|p| p.group == g).collect();
        (!ps.is_empty()).then(|| aggregate(self.n, Some(g), &ps))
    }
}

/// Per sample size: one row per non-empty group (A, marginal, rho) and an
/// overall row. Overall coverage is the size-weighted mean of the group
/// coverages; overall RMSE pools all squared errors.
pub fn group_summary(report: &McReport) -> Vec<GroupRow> {
    let mut rows = Vec::new();
    for sr in &report.results {
        for g in [ParamGroup::A, ParamGroup::Marginal, ParamGroup::Rho] {
            rows.extend(sr.group(g));
        }
        let all: Vec<&ParamStats> = sr.parameters.iter().collect();
        rows.push(aggregate(sr.n, None, &all));
    }
    rows
}

impl McReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Coverage table (parameters by sample size, with an average row),
    /// followed by the grouped coverage/RMSE table and failure counts.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let level = self.design.ci_level;
        let _ = writeln!(out, "Empirical coverage of {:.0}% intervals", 100.0 * level);
        let _ = write!(out, "  {:<14}", "Parameter");
        for sr in &self.results {
            let _ = write!(out, " {:>9}", format!("n={}", sr.n));
        }
        out.push('\n');
        let Some(first) = self.results.first() else {
            return out;
        };
        for (i, p) in first.parameters.iter().enumerate() {
            let _ = write!(out, "  {:<14}", p.name);
            for sr in &self.results {
                let _ = write!(out, " {:>9.3}", sr.parameters[i].coverage);
            }
            out.push('\n');
        }
        let _ = write!(out, "  {:<14}", "Average");
        for sr in &self.results {
            let _ = write!(out, " {:>9.3}", sr.average_coverage());
        }
        out.push('\n');

        let _ = writeln!(out, "\nBy parameter group (coverage / RMSE)");
        let _ = writeln!(
            out,
            "  {:>7} {:>17} {:>17} {:>17} {:>17}",
            "n", "A", "marginal", "rho", "all"
        );
        let rows = group_summary(self);
        for sr in &self.results {
            let _ = write!(out, "  {:>7}", sr.n);
            for g in [Some(ParamGroup::A), Some(ParamGroup::Marginal), Some(ParamGroup::Rho), None] {
                match rows.iter().find(|r| r.n == sr.n && r.group == g) {
                    Some(r) => {
                        let _ = write!(out, " {:>8.3}/{:<8.4}", r.coverage, r.rmse);
                    }
                    None => {
                        let _ = write!(out, " {:>17}", "-");
                    }
                }
            }
            out.push('\n');
        }
        let _ = writeln!(out, "\nReplications used per n (of {})", self.design.replications);
        for sr in &self.results {
            let f = &sr.failures;
            let _ = writeln!(
                out,
                "  n={:<7} used {:>5}  errors {}  non-converged {}  no SE {}",
                sr.n, sr.used, f.errors, f.non_converged, f.no_standard_errors
            );
        }
        out
    }
}
