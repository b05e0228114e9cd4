use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use varta::diagnostics::diagnose;
use varta::estimation::{fit, FitOptions};
use varta::forecasting::{forecast, forecast_summary};
use varta::io::{read_csv_file, read_model, write_atomic, write_csv};
use varta::montecarlo::{run_mc_with_progress, McDesign};
use varta::{LikelihoodKind, MarginalFamily, RngSpec, VartaError};

/// Latent Gaussian VAR models with arbitrary marginals.
#[derive(Parser, Debug)]
#[command(name = "varta", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a series from a model file and write it as CSV.
    Simulate {
        /// Model JSON (a fit result is accepted too).
        #[arg(long, visible_alias = "model")]
        config: PathBuf,
        /// Number of rows.
        #[arg(short, long, value_parser = clap::value_parser!(u64).range(1..))]
        n: u64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a model by maximum likelihood; prints the parameter table.
    Fit {
        /// CSV with a header row.
        #[arg(long)]
        data: PathBuf,
        /// VAR order.
        #[arg(short, long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
        k: u64,
        /// One marginal family per column (weibull, gaussian, empirical).
        #[arg(long, value_delimiter = ',', required = true)]
        families: Vec<MarginalFamily>,
        #[arg(long, default_value = "auto", value_parser = parse_kind)]
        likelihood: LikelihoodKind,
        #[arg(long, default_value_t = 1000)]
        max_iter: usize,
        /// Skip the observed-information standard errors.
        #[arg(long)]
        no_se: bool,
        /// FitResult JSON.
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate forecast paths from the end of the data.
    Forecast {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        horizon: u64,
        /// Number of simulated paths M.
        #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
        paths: u64,
        #[arg(long)]
        seed: u64,
        /// Long-format CSV of all paths.
        #[arg(long)]
        out: PathBuf,
        /// JSON summary; defaults to the CSV path with a `.summary.json`
        /// extension.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Residual diagnostics of a fitted model on its data.
    Diagnose {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Correlogram lags; defaults to min(20, (n-k-1)/4).
        #[arg(long)]
        lags: Option<usize>,
        /// ResidualReport JSON.
        #[arg(long)]
        out: PathBuf,
        /// Optional correlogram CSV.
        #[arg(long)]
        correlogram: Option<PathBuf>,
    },
    /// Monte Carlo coverage study from a design file.
    Mc {
        /// McDesign JSON.
        #[arg(long)]
        config: PathBuf,
        /// Overrides the design's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// McReport JSON.
        #[arg(long)]
        out: PathBuf,
        #[arg(short, long)]
        quiet: bool,
    },
}

fn parse_kind(s: &str) -> Result<LikelihoodKind, String> {
    serde_json::from_value(serde_json::Value::String(s.to_ascii_lowercase()))
        .map_err(|_| format!("unknown likelihood `{s}` (auto, exact, conditional)"))
}

struct Failure {
    code: u8,
    message: String,
}

impl From<VartaError> for Failure {
    fn from(e: VartaError) -> Self {
        use VartaError::*;
        let code = match e {
            Domain(_) => 2,
            Shape(_) | InvalidMarginal(_) | Support { .. } | DataInvalid(_) | Config(_) | Io(_) => 3,
            NotPositiveDefinite { .. }
            | NonStationary { .. }
            | OmegaNotPd
            | Singular
            | EigenNonConvergence
            | NonConvergence(_) => 4,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn in_file(path: &Path, e: VartaError) -> Failure {
    let mut f = Failure::from(e);
    f.message = format!("{}: {}", path.display(), f.message);
    f
}

fn json_bytes<T: serde::Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s.into_bytes()
}

fn simulate(config: &Path, n: usize, seed: u64, out: &Path) -> CmdResult {
    let model = read_model(config).map_err(|e| in_file(config, e))?;
    let x = varta::simulation::simulate_varta(&model, n, &RngSpec::new(seed))?;
    let mut buf = Vec::new();
    write_csv(&x, &mut buf)?;
    write_atomic(out, &buf)?;
    Ok(())
}

fn fit_cmd(data: &Path, k: usize, families: &[MarginalFamily], opts: FitOptions, out: &Path) -> CmdResult {
    let x = read_csv_file(data).map_err(|e| in_file(data, e))?;
    if families.len() != x.p() {
        return Err(Failure {
            code: 3,
            message: format!("{} families given for {} data columns", families.len(), x.p()),
        });
    }
    let fr = fit(&x, k, families, &opts)?;
    print!("{}", fr.table());
    write_atomic(out, &json_bytes(&fr))?;
    if !fr.converged {
        return Err(Failure {
            code: 4,
            message: format!("optimizer did not converge ({}); result written anyway", fr.message),
        });
    }
    if opts.standard_errors && !fr.se_available {
        eprintln!("warning: observed information is not positive definite; standard errors are missing");
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn forecast_cmd(
    model: &Path,
    data: &Path,
    horizon: usize,
    paths: usize,
    seed: u64,
    out: &Path,
    summary: Option<PathBuf>,
) -> CmdResult {
    let m = read_model(model).map_err(|e| in_file(model, e))?;
    let x = read_csv_file(data).map_err(|e| in_file(data, e))?;
    let fr = forecast(&m, &x, horizon, paths, &RngSpec::new(seed))?;
    let s = forecast_summary(&fr, &[0.025, 0.975])?;
    let mut buf = Vec::new();
    fr.write_csv(&mut buf)?;
    let summary = summary.unwrap_or_else(|| out.with_extension("summary.json"));
    write_atomic(out, &buf)?;
    write_atomic(&summary, &json_bytes(&s))?;
    println!("{:>7} {:<12} {:>12} {:>12} {:>12} {:>12}", "horizon", "series", "mean", "median", "q0.025", "q0.975");
    for r in &s.rows {
        println!(
            "{:>7} {:<12} {:>12.4} {:>12.4} {:>12.4} {:>12.4}",
            r.horizon, r.series, r.mean, r.median, r.quantiles[0], r.quantiles[1]
        );
    }
    Ok(())
}

fn diagnose_cmd(model: &Path, data: &Path, lags: Option<usize>, out: &Path, cg: Option<PathBuf>) -> CmdResult {
    let m = read_model(model).map_err(|e| in_file(model, e))?;
    let x = read_csv_file(data).map_err(|e| in_file(data, e))?;
    let rep = diagnose(&m, &x, lags)?;
    write_atomic(out, &json_bytes(&rep))?;
    if let Some(path) = cg {
        let mut buf = Vec::new();
        rep.correlogram.write_csv(&rep.names, &mut buf)?;
        write_atomic(&path, &buf)?;
    }
    print!("{}", rep.to_text());
    Ok(())
}

fn mc_cmd(config: &Path, seed: Option<u64>, out: &Path, quiet: bool) -> CmdResult {
    let text = std::fs::read_to_string(config).map_err(|e| in_file(config, e.into()))?;
    let mut design = McDesign::from_json(&text).map_err(|e| in_file(config, e))?;
    if let Some(s) = seed {
        design.master_seed = RngSpec::new(s);
    }
    let report = run_mc_with_progress(&design, |done, total| {
        if !quiet && (done % 50 == 0 || done == total) {
            eprintln!("replications: {done}/{total}");
        }
    })?;
    write_atomic(out, &json_bytes(&report))?;
    print!("{}", report.to_text());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Simulate { config, n, seed, out } => simulate(&config, n as usize, seed, &out),
        Command::Fit {
            data,
            k,
            families,
            likelihood,
            max_iter,
            no_se,
            out,
        } => {
            let opts = FitOptions {
                likelihood,
                max_iter,
                standard_errors: !no_se,
                ..Default::default()
            };
            fit_cmd(&data, k as usize, &families, opts, &out)
        }
        Command::Forecast {
            model,
            data,
            horizon,
            paths,
            seed,
            out,
            summary,
        } => forecast_cmd(&model, &data, horizon as usize, paths as usize, seed, &out, summary),
        Command::Diagnose {
            model,
            data,
            lags,
            out,
            correlogram,
        } => diagnose_cmd(&model, &data, lags, &out, correlogram),
        Command::Mc {
            config,
            seed,
            out,
            quiet,
        } => mc_cmd(&config, seed, &out, quiet),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
