//! Batch CLI for robust penalized MT-estimation of Poisson GLMs.
//!
//! Subcommands: `fit`, `path`, `cv`, `detect-outliers`, `simulate`, `abp`.
//! Results go to `--output`; stdout carries a one-line summary. Exit codes:
//! 0 success, 2 validation error, 3 non-convergence.

mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;

use mtglm::inference::{abp_lower_bound, detect_outliers};
use mtglm::init::{pena_yohai_init, InitConfig};
use mtglm::penalties::PenaltyKind;
use mtglm::robust_loss::{MtObjective, RhoKind};
use mtglm::selection::{fit_path, lambda_grid, rcv, FitMethod, PathConfig, RcvConfig, RicFlavor};
use mtglm::simulation::{run_monte_carlo, Design, HarnessConfig, Method, ScenarioConfig};
use mtglm::solver::{irwls_fit, kkt_residual, ml_poisson_fit, SolverConfig};
use mtglm::{families, MtError, PenaltySpec, RhoFunction};

use io::{fmt_float, load_csv};

#[derive(Parser)]
#[command(
    name = "mtglm",
    about = "Robust penalized MT-estimation for Poisson regression",
    version
)]
struct Cli {
    /// Worker threads for parallel sections (default: all cores; the
    /// MTGLM_THREADS environment variable is the fallback).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PenaltyArg {
    Lasso,
    Ridge,
    ElasticNet,
    Scad,
    Mcp,
    Bridge,
    Sign,
}

impl PenaltyArg {
    fn kind(self) -> PenaltyKind {
        match self {
            PenaltyArg::Lasso => PenaltyKind::Lasso,
            PenaltyArg::Ridge => PenaltyKind::Ridge,
            PenaltyArg::ElasticNet => PenaltyKind::ElasticNet,
            PenaltyArg::Scad => PenaltyKind::Scad,
            PenaltyArg::Mcp => PenaltyKind::Mcp,
            PenaltyArg::Bridge => PenaltyKind::Bridge,
            PenaltyArg::Sign => PenaltyKind::Sign,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum RhoArg {
    Quartic,
    Tukey,
    Square,
}

#[derive(Clone, Copy, ValueEnum)]
enum CriterionArg {
    Aic,
    Bic,
    Ebic,
}

#[derive(Clone, Copy, ValueEnum)]
enum DesignArg {
    Avy,
    Avy2,
    Amr,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

#[derive(Args)]
struct DataArgs {
    /// Input CSV (header row required).
    #[arg(long)]
    input: PathBuf,
    /// Name of the response column (nonnegative integer counts).
    #[arg(long)]
    response: String,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, value_enum, default_value_t = PenaltyArg::Lasso)]
    penalty: PenaltyArg,
    /// Elastic-net mixing, bridge exponent or SCAD/MCP shape.
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, value_enum, default_value_t = RhoArg::Quartic)]
    rho: RhoArg,
    /// Rho tuning constant.
    #[arg(long, default_value_t = mtglm::robust_loss::DEFAULT_QUARTIC_K)]
    k: f64,
}

impl ModelArgs {
    fn rho_fn(&self) -> Result<RhoFunction, MtError> {
        let kind = match self.rho {
            RhoArg::Quartic => RhoKind::Quartic,
            RhoArg::Tukey => RhoKind::TukeyBisquare,
            RhoArg::Square => RhoKind::Square,
        };
        RhoFunction::new(kind, self.k)
    }

    fn spec(&self, lambda: f64) -> Result<PenaltySpec, MtError> {
        let alpha = match self.penalty {
            PenaltyArg::Lasso => 1.0,
            PenaltyArg::Ridge => 0.0,
            _ => self.alpha,
        };
        PenaltySpec::new(self.penalty.kind(), lambda, alpha)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Fit one penalized MT model at a fixed lambda, starting from the
    /// deterministic robust initializer.
    Fit {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        lambda: f64,
        /// Fit the classical penalized Poisson ML instead of the MT.
        #[arg(long, default_value_t = false)]
        ml: bool,
        #[arg(long)]
        output: PathBuf,
    },
    /// Fit a warm-started lambda path and report information criteria.
    Path {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 50)]
        grid_points: usize,
        #[arg(long, default_value_t = 1e-3)]
        grid_ratio: f64,
        #[arg(long)]
        output: PathBuf,
    },
    /// Robust K-fold cross-validation over a lambda grid.
    Cv {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        #[arg(long, default_value_t = 20)]
        grid_points: usize,
        #[arg(long, default_value_t = 1e-3)]
        grid_ratio: f64,
        /// Required: cross-validation folds are randomized.
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        output: PathBuf,
    },
    /// Fit robustly, then bootstrap deviance residuals under the fitted
    /// model and flag observations outside the bootstrap band.
    DetectOutliers {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        lambda: f64,
        #[arg(long, default_value_t = 100_000)]
        bootstrap: usize,
        /// Required: the bootstrap is randomized.
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        output: PathBuf,
    },
    /// Monte Carlo contamination experiment; writes <output>.json and
    /// <output>.csv.
    Simulate {
        #[arg(long, value_enum)]
        design: DesignArg,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        p: usize,
        #[arg(long, default_value_t = 0.0)]
        eps: f64,
        #[arg(long, default_value_t = 0)]
        y0: u64,
        #[arg(long, default_value_t = 100)]
        reps: usize,
        /// Required: replicates are randomized.
        #[arg(long)]
        seed: u64,
        /// Comma-separated subset of: mt-lasso, mt-ridge, mt-en<alpha>,
        /// ml-lasso, ml-ridge.
        #[arg(long, default_value = "mt-lasso,ml-lasso")]
        methods: String,
        #[arg(long, value_enum, default_value_t = CriterionArg::Bic)]
        criterion: CriterionArg,
        #[arg(long, default_value_t = 50)]
        grid_points: usize,
        #[arg(long)]
        output: PathBuf,
    },
    /// Lower bound on the asymptotic breakdown point for a design.
    Abp {
        #[arg(long, value_enum)]
        design: DesignArg,
        #[arg(long)]
        p: usize,
        /// Override the design's true coefficients (comma-separated,
        /// intercept first).
        #[arg(long)]
        beta: Option<String>,
        #[arg(long, default_value_t = 100_000)]
        draws: usize,
        /// Required: the design expectation is randomized.
        #[arg(long)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = RhoArg::Quartic)]
        rho: RhoArg,
        #[arg(long, default_value_t = mtglm::robust_loss::DEFAULT_QUARTIC_K)]
        k: f64,
        #[arg(long)]
        output: PathBuf,
    },
}

fn design_of(d: DesignArg) -> Design {
    match d {
        DesignArg::Avy => Design::Avy,
        DesignArg::Avy2 => Design::Avy2,
        DesignArg::Amr => Design::Amr,
    }
}

fn criterion_of(c: CriterionArg) -> RicFlavor {
    match c {
        CriterionArg::Aic => RicFlavor::Aic,
        CriterionArg::Bic => RicFlavor::Bic,
        CriterionArg::Ebic => RicFlavor::Ebic(0.5),
    }
}

fn beta_json(beta: &DVector<f64>) -> serde_json::Value {
    serde_json::Value::Array(
        beta.iter()
            .map(|v| serde_json::Value::String(fmt_float(*v)))
            .collect(),
    )
}

fn write_output(path: &PathBuf, content: &str) -> Result<(), MtError> {
    std::fs::write(path, content)
        .map_err(|e| MtError::Config(format!("cannot write {}: {e}", path.display())))
}

fn run() -> Result<(String, bool), MtError> {
    let cli = Cli::parse();
    let threads = cli.threads.or_else(|| {
        std::env::var("MTGLM_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(t) = threads {
        if t == 0 {
            return Err(MtError::Config("--threads must be positive".into()));
        }
        mtglm::exec::configure_threads(t);
    }

    match cli.command {
        Command::Fit {
            data,
            model,
            lambda,
            ml,
            output,
        } => {
            let (dataset, _) = load_csv(&data.input, &data.response)?;
            let spec = model.spec(lambda)?;
            let rho = model.rho_fn()?;
            let solver = SolverConfig::default();
            let fit = if ml {
                ml_poisson_fit(&dataset, &spec, &solver)?
            } else {
                let init_cfg = InitConfig {
                    rho,
                    ..InitConfig::default()
                };
                let start = if dataset.p() == 0 {
                    DVector::zeros(1)
                } else {
                    pena_yohai_init(&dataset, &spec, &init_cfg)?
                };
                let table = families::poisson_table_cached(&rho)?;
                let obj = MtObjective::new(&dataset, table, rho, Some(spec));
                irwls_fit(&obj, &start, &solver)?
            };
            let kkt = if !ml && spec.mixing().is_some() {
                let table = families::poisson_table_cached(&rho)?;
                let obj = MtObjective::new(&dataset, table, rho, Some(spec));
                Some(kkt_residual(&obj, &fit.beta)?)
            } else {
                None
            };
            let doc = serde_json::json!({
                "schema": "mtglm/1",
                "kind": "fit",
                "coefficients": beta_json(&fit.beta),
                "objective": fmt_float(fit.objective),
                "loss": fmt_float(fit.loss),
                "active_set": fit.active_set,
                "iterations": fit.iterations,
                "converged": fit.converged,
                "kkt_residual": kkt.map(fmt_float),
            });
            write_output(&output, &serde_json::to_string_pretty(&doc).unwrap())?;
            Ok((
                format!(
                    "fit: objective {:.6}, {} active, converged: {}",
                    fit.objective,
                    fit.active_set.len(),
                    fit.converged
                ),
                !fit.converged,
            ))
        }
        Command::Path {
            data,
            model,
            grid_points,
            grid_ratio,
            output,
        } => {
            let (dataset, _) = load_csv(&data.input, &data.response)?;
            let spec = model.spec(1.0)?;
            let rho = model.rho_fn()?;
            let method = FitMethod::Mt(rho);
            let grid = lambda_grid(&dataset, &spec, &method, grid_points, grid_ratio)?;
            let path = fit_path(&dataset, &spec, &grid, method, &PathConfig::default())?;
            let mut csv = String::from("lambda,df,ric_aic,ric_bic,ric_ebic,size,converged\n");
            for i in 0..path.lambdas.len() {
                csv.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    fmt_float(path.lambdas[i]),
                    fmt_float(path.dfs[i]),
                    fmt_float(path.ric_aic[i]),
                    fmt_float(path.ric_bic[i]),
                    fmt_float(path.ric_ebic[i]),
                    1 + path.fits[i].active_set.len(),
                    path.fits[i].converged,
                ));
            }
            write_output(&output, &csv)?;
            Ok((
                format!(
                    "path: {} lambdas, BIC selects lambda = {:.6}",
                    path.lambdas.len(),
                    path.lambdas[path.selected_bic]
                ),
                false,
            ))
        }
        Command::Cv {
            data,
            model,
            folds,
            grid_points,
            grid_ratio,
            seed,
            output,
        } => {
            let (dataset, _) = load_csv(&data.input, &data.response)?;
            let spec = model.spec(1.0)?;
            let rho = model.rho_fn()?;
            let alpha = spec.mixing().ok_or_else(|| {
                MtError::Config("cv supports the elastic-net penalty family".into())
            })?;
            let method = FitMethod::Mt(rho);
            let grid = lambda_grid(&dataset, &spec, &method, grid_points, grid_ratio)?;
            let cfg = RcvConfig::new(folds, seed);
            let res = rcv(&dataset, spec.kind, &[alpha], &grid, rho, &cfg)?;
            let (ai, li) = res.selected;
            let doc = serde_json::json!({
                "schema": "mtglm/1",
                "kind": "cv",
                "seed": seed,
                "folds": folds,
                "alphas": res.alphas,
                "lambdas": res.lambdas.iter().map(|v| fmt_float(*v)).collect::<Vec<_>>(),
                "values": res.values.iter().map(|row| {
                    row.iter().map(|v| fmt_float(*v)).collect::<Vec<_>>()
                }).collect::<Vec<_>>(),
                "selected_alpha": res.alphas[ai],
                "selected_lambda": fmt_float(res.lambdas[li]),
            });
            write_output(&output, &serde_json::to_string_pretty(&doc).unwrap())?;
            Ok((
                format!(
                    "cv: selected lambda = {:.6} (alpha = {})",
                    res.lambdas[li], res.alphas[ai]
                ),
                false,
            ))
        }
        Command::DetectOutliers {
            data,
            model,
            lambda,
            bootstrap,
            seed,
            output,
        } => {
            if bootstrap < 1000 {
                return Err(MtError::Config(
                    "bootstrap size must be at least 1000".into(),
                ));
            }
            let (dataset, _) = load_csv(&data.input, &data.response)?;
            let spec = model.spec(lambda)?;
            let rho = model.rho_fn()?;
            let init_cfg = InitConfig {
                rho,
                ..InitConfig::default()
            };
            let start = if dataset.p() == 0 {
                DVector::zeros(1)
            } else {
                pena_yohai_init(&dataset, &spec, &init_cfg)?
            };
            let table = families::poisson_table_cached(&rho)?;
            let obj = MtObjective::new(&dataset, table, rho, Some(spec));
            let fit = irwls_fit(&obj, &start, &SolverConfig::default())?;
            let report = detect_outliers(&dataset, &fit, bootstrap, seed)?;
            let doc = serde_json::json!({
                "schema": "mtglm/1",
                "kind": "outliers",
                "seed": seed,
                "bootstrap_size": report.bootstrap_size,
                "q1": fmt_float(report.q1),
                "q2": fmt_float(report.q2),
                "residuals": report.residuals.iter().map(|v| fmt_float(*v)).collect::<Vec<_>>(),
                "flags": report.flags,
                "outlier_count": report.outlier_count,
                "clamped": report.clamped,
            });
            write_output(&output, &serde_json::to_string_pretty(&doc).unwrap())?;
            Ok((
                format!(
                    "detect-outliers: band [{:.3}, {:.3}], {} flagged",
                    report.q1, report.q2, report.outlier_count
                ),
                !fit.converged,
            ))
        }
        Command::Simulate {
            design,
            n,
            p,
            eps,
            y0,
            reps,
            seed,
            methods,
            criterion,
            grid_points,
            output,
        } => {
            let methods = parse_methods(&methods)?;
            let cfg = ScenarioConfig::new(design_of(design), n, p, eps, y0, reps, seed)?;
            let harness = HarnessConfig {
                grid_points,
                ..HarnessConfig::default()
            };
            let report = run_monte_carlo(&cfg, &methods, criterion_of(criterion), &harness)?;
            let json_path = output.with_extension("json");
            let csv_path = output.with_extension("csv");
            write_output(&json_path, &report.to_json())?;
            write_output(&csv_path, &report.to_csv())?;
            Ok((
                format!(
                    "simulate: {} methods x {} replicates -> {}, {}",
                    report.rows.len(),
                    reps,
                    json_path.display(),
                    csv_path.display()
                ),
                false,
            ))
        }
        Command::Abp {
            design,
            p,
            beta,
            draws,
            seed,
            rho,
            k,
            output,
        } => {
            let cfg = ScenarioConfig::new(design_of(design), 100, p, 0.0, 0, 1, seed)?;
            let beta_star = match beta {
                Some(text) => {
                    let vals: Result<Vec<f64>, _> =
                        text.split(',').map(|s| s.trim().parse::<f64>()).collect();
                    let vals = vals
                        .map_err(|_| MtError::Config("unparseable --beta entry".into()))?;
                    if vals.len() != p + 1 {
                        return Err(MtError::Config(format!(
                            "--beta needs {} entries (intercept first), got {}",
                            p + 1,
                            vals.len()
                        )));
                    }
                    DVector::from_vec(vals)
                }
                None => cfg.beta_star(),
            };
            let kind = match rho {
                RhoArg::Quartic => RhoKind::Quartic,
                RhoArg::Tukey => RhoKind::TukeyBisquare,
                RhoArg::Square => RhoKind::Square,
            };
            let rho_fn = RhoFunction::new(kind, k)?;
            let est = abp_lower_bound(&cfg, &beta_star, &rho_fn, draws, seed)?;
            let doc = serde_json::json!({
                "schema": "mtglm/1",
                "kind": "abp",
                "seed": seed,
                "draws": est.draws,
                "value": fmt_float(est.value),
                "std_error": fmt_float(est.std_error),
            });
            write_output(&output, &serde_json::to_string_pretty(&doc).unwrap())?;
            Ok((
                format!(
                    "abp: lower bound {:.4} (se {:.5}) from {} draws",
                    est.value, est.std_error, est.draws
                ),
                false,
            ))
        }
    }
}

fn parse_methods(text: &str) -> Result<Vec<Method>, MtError> {
    let mut out = Vec::new();
    for token in text.split(',') {
        let t = token.trim().to_ascii_lowercase();
        let method = if t == "mt-lasso" {
            Method::MtLasso
        } else if t == "mt-ridge" {
            Method::MtRidge
        } else if t == "ml-lasso" {
            Method::MlLasso
        } else if t == "ml-ridge" {
            Method::MlRidge
        } else if let Some(alpha) = t.strip_prefix("mt-en") {
            let a: f64 = alpha
                .parse()
                .map_err(|_| MtError::Config(format!("bad elastic-net mixing in '{token}'")))?;
            Method::MtElasticNet(a)
        } else {
            return Err(MtError::Config(format!("unknown method '{token}'")));
        };
        out.push(method);
    }
    if out.is_empty() {
        return Err(MtError::Config("no methods requested".into()));
    }
    Ok(out)
}

fn main() -> ExitCode {
    match run() {
        Ok((summary, nonconverged)) => {
            println!("{summary}");
            if nonconverged {
                ExitCode::from(3)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(MtError::NonConvergence(msg)) => {
            eprintln!("error: non-convergence: {msg}");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
