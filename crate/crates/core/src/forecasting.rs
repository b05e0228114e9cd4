//! Simulation-based forecast distributions. Parameters are treated as known
//! (plug-in); each path draws its own innovations `η ~ N(0, Ω)`.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VartaError};
use crate::likelihood::{latentize, TimeSeriesData, VartaModel};
use crate::scalar::Scalar;
use crate::simulation::{lower_mul, normal_draw, RngSpec};

/// `M x h x p` forecast sample in data units, with the latent paths that
/// produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastResult<T: Scalar> {
    paths: usize,
    horizon: usize,
    p: usize,
    names: Vec<String>,
    values: Vec<T>,
    latent: Vec<T>,
}

impl<T: Scalar> ForecastResult<T> {
    pub fn paths(&self) -> usize {
        self.paths
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    #[inline]
    fn index(&self, path: usize, step: usize, series: usize) -> usize {
        (path * self.horizon + step) * self.p + series
    }

    /// Value of `path` at horizon `step + 1` for `series` (all 0-based).
    pub fn value(&self, path: usize, step: usize, series: usize) -> T {
        self.values[self.index(path, step, series)]
    }

    pub fn latent_value(&self, path: usize, step: usize, series: usize) -> T {
        self.latent[self.index(path, step, series)]
    }

    /// All `M` draws for one horizon step and series.
    pub fn draws(&self, step: usize, series: usize) -> Vec<T> {
        (0..self.paths).map(|j| self.value(j, step, series)).collect()
    }

    pub fn latent_draws(&self, step: usize, series: usize) -> Vec<T> {
        (0..self.paths).map(|j| self.latent_value(j, step, series)).collect()
    }

    /// Long format: `horizon,series,path,value` (horizon and path 1-based).
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "horizon,series,path,value")?;
        for s in 0..self.horizon {
            for i in 0..self.p {
                for j in 0..self.paths {
                    writeln!(w, "{},{},{},{:?}", s + 1, self.names[i], j + 1, self.value(j, s, i).as_f64())?;
                }
            }
        }
        Ok(())
    }
}

/// Simulates `paths` continuations of `data` over `horizon` steps. Path `j`
/// uses stream `j` of `rng`; paths are generated in parallel.
pub fn forecast<T: Scalar>(
    model: &VartaModel<T>,
    data: &TimeSeriesData<T>,
    horizon: usize,
    paths: usize,
    rng: &RngSpec,
) -> Result<ForecastResult<T>> {
    if horizon == 0 || paths == 0 {
        return Err(VartaError::Domain("horizon and number of paths must be at least 1".into()));
    }
    let (p, k) = (model.dim(), model.order());
    if data.n() < k {
        return Err(VartaError::DataInvalid(format!(
            "{} observations cannot condition a VAR({k})",
            data.n()
        )));
    }
    let z = latentize(model, data)?;
    let omega_chol = model
        .var
        .derive_omega()?
        .cholesky()
        .map_err(|_| VartaError::OmegaNotPd)?;
    // most recent first: history[l] = Z_{n-l}
    let history: Vec<Vec<T>> = (0..k).map(|l| z.row(data.n() - 1 - l).to_vec()).collect();
    let coef = model.var.coefficients();
    let block = horizon * p;
    let mut values = vec![T::zero(); paths * block];
    let mut latent = vec![T::zero(); paths * block];
    let gens = rng.streams(paths);

    values
        .par_chunks_mut(block)
        .zip(latent.par_chunks_mut(block))
        .zip(gens.into_par_iter())
        .for_each(|((xv, zv), mut g)| {
            let mut hist = history.clone();
            let mut e = vec![T::zero(); p];
            let mut shock = vec![T::zero(); p];
            for s in 0..horizon {
                let mut next = vec![T::zero(); p];
                for (l, a) in coef.iter().enumerate() {
                    for (r, v) in next.iter_mut().enumerate() {
                        *v = *v + crate::linalg::dot(a.row(r), &hist[l]);
                    }
                }
                e.iter_mut().for_each(|v| *v = normal_draw(&mut g));
                lower_mul(&omega_chol, &e, &mut shock);
                for (v, sh) in next.iter_mut().zip(&shock) {
                    *v = *v + *sh;
                }
                for i in 0..p {
                    zv[s * p + i] = next[i];
                    xv[s * p + i] = model.marginals[i].from_latent(next[i]);
                }
                hist.rotate_right(1);
                hist[0] = next;
            }
        });

    Ok(ForecastResult {
        paths,
        horizon,
        p,
        names: data.names().to_vec(),
        values,
        latent,
    })
}

/// Quantile by linear interpolation between order statistics of a sorted
/// sample: position `(M - 1)·u`.
pub fn sorted_quantile(sorted: &[f64], u: f64) -> f64 {
    let m = sorted.len();
    if m == 1 {
        return sorted[0];
    }
    let pos = (m - 1) as f64 * u;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(m - 1);
    let frac = pos - lo as f64;
    if frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub horizon: usize,
    pub series: String,
    pub mean: f64,
    pub median: f64,
    /// Quantiles at the summary's `levels`, same order.
    pub quantiles: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastSummary {
    pub paths: usize,
    pub levels: Vec<f64>,
    pub rows: Vec<SummaryRow>,
}

/// Sample mean, median and quantiles per horizon and series.
pub fn forecast_summary<T: Scalar>(fr: &ForecastResult<T>, levels: &[f64]) -> Result<ForecastSummary> {
    if let Some(u) = levels.iter().find(|u| !(**u > 0.0 && **u < 1.0)) {
        return Err(VartaError::Domain(format!("quantile level {u} outside (0, 1)")));
    }
    let mut rows = Vec::with_capacity(fr.horizon * fr.p);
    for s in 0..fr.horizon {
        for i in 0..fr.p {
            let mut d: Vec<f64> = fr.draws(s, i).iter().map(|v| v.as_f64()).collect();
            let mean = d.iter().sum::<f64>() / d.len() as f64;
            d.sort_by(f64::total_cmp);
            rows.push(SummaryRow {
                horizon: s + 1,
                series: fr.names[i].clone(),
                mean,
                median: sorted_quantile(&d, 0.5),
                quantiles: levels.iter().map(|&u| sorted_quantile(&d, u)).collect(),
            });
        }
    }
    Ok(ForecastSummary {
        paths: fr.paths,
        levels: levels.to_vec(),
        rows,
    })
}
