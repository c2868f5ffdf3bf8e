//! Monte Carlo harness: the AVY, AVY2 and AMR contamination designs,
//! response/covariate contamination, and aggregated MSE / model-size /
//! false-negative / false-positive tables comparing robust MT fits against
//! the classical penalized maximum-likelihood comparator.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::MtError;
use crate::exec;
use crate::penalties::{PenaltyKind, PenaltySpec};
use crate::robust_loss::RhoFunction;
use crate::selection::{fit_path, lambda_grid, FitMethod, PathConfig, RicFlavor};
use crate::Result;

/// Simulation designs.
///
/// AVY / AVY2: AR(1)-correlated Gaussian covariates with a single (or
/// intercept plus single) active coefficient; contamination replaces rows
/// with a fixed leverage point carrying response `y0`. AMR: uniform
/// marginals through a Gaussian copula, three active coefficients;
/// contamination rescales the conditional mean of a random subset of
/// responses by `y0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Design {
    Avy,
    Avy2,
    Amr,
}

impl Design {
    pub fn label(&self) -> &'static str {
        match self {
            Design::Avy => "AVY",
            Design::Avy2 => "AVY2",
            Design::Amr => "AMR",
        }
    }
}

/// One simulation scenario: design, dimensions, contamination and seeding.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub design: Design,
    pub n: usize,
    pub p: usize,
    /// AR(1) correlation parameter of the covariates.
    pub rho_corr: f64,
    /// Contamination fraction in [0, 0.5).
    pub epsilon: f64,
    /// Contamination size: the replacement response for AVY/AVY2, the mean
    /// multiplier for AMR. Ignored when `epsilon` is zero.
    pub y0: u64,
    pub replications: usize,
    pub master_seed: u64,
}

impl ScenarioConfig {
    pub fn new(
        design: Design,
        n: usize,
        p: usize,
        epsilon: f64,
        y0: u64,
        replications: usize,
        master_seed: u64,
    ) -> Result<Self> {
        let cfg = Self {
            design,
            n,
            p,
            rho_corr: 0.5,
            epsilon,
            y0,
            replications,
            master_seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..0.5).contains(&self.epsilon) {
            return Err(MtError::Config(format!(
                "contamination fraction must lie in [0, 0.5), got {}",
                self.epsilon
            )));
        }
        let needed = match self.design {
            Design::Avy | Design::Avy2 => 1,
            Design::Amr => 5,
        };
        if self.p < needed {
            return Err(MtError::Config(format!(
                "{} needs at least {needed} covariates, got {}",
                self.design.label(),
                self.p
            )));
        }
        if self.n < 2 {
            return Err(MtError::Config("need at least two observations".into()));
        }
        Ok(())
    }

    /// True coefficient vector (intercept first).
    pub fn beta_star(&self) -> DVector<f64> {
        let mut b = DVector::zeros(self.p + 1);
        match self.design {
            Design::Avy => {
                b[1] = 1.0;
            }
            Design::Avy2 => {
                b[0] = 2.0;
                b[1] = 1.0;
            }
            Design::Amr => {
                b[1] = 1.8;
                b[2] = 1.0;
                b[5] = 1.5;
            }
        }
        b
    }

    /// Indices (into the coefficient vector) of the true nonzero slopes.
    pub fn support(&self) -> Vec<usize> {
        let b = self.beta_star();
        (1..b.len()).filter(|&j| b[j] != 0.0).collect()
    }

    /// Draws one covariate row (length `p`) from the design distribution.
    pub fn sample_covariate_row<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let normal = rand_distr::Normal::new(0.0, 1.0).unwrap();
        match self.design {
            Design::Avy | Design::Avy2 => {
                let r = self.rho_corr;
                let innov = (1.0 - r * r).max(0.0).sqrt();
                let mut row = Vec::with_capacity(self.p);
                let mut prev = 0.0;
                for j in 0..self.p {
                    let e: f64 = rng.sample(normal);
                    let v = if j == 0 { e } else { r * prev + innov * e };
                    row.push(v);
                    prev = v;
                }
                row
            }
            Design::Amr => {
                // Gaussian copula: the latent AR(1) parameter is chosen so
                // the induced correlation of the uniform marginals matches
                // the target at lag one (2 sin(pi r / 6) inverted).
                let latent = 2.0 * (std::f64::consts::PI * self.rho_corr / 6.0).sin();
                let innov = (1.0 - latent * latent).max(0.0).sqrt();
                let mut row = Vec::with_capacity(self.p);
                let mut prev = 0.0;
                for j in 0..self.p {
                    let e: f64 = rng.sample(normal);
                    let v = if j == 0 { e } else { latent * prev + innov * e };
                    row.push(standard_normal_cdf(v));
                    prev = v;
                }
                row
            }
        }
    }
}

fn standard_normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + libm::erf(z / std::f64::consts::SQRT_2))
}

fn mix_seed(master: u64, tag: u64, idx: u64) -> u64 {
    // splitmix64 over a tagged index; cheap, stable sub-stream derivation.
    let mut z = master
        .wrapping_add(tag.wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add(idx.wrapping_mul(0xbf58_476d_1ce4_e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Draws a clean sample from the scenario's model.
pub fn generate_sample(cfg: &ScenarioConfig, seed: u64) -> Result<Dataset> {
    cfg.validate()?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let beta = cfg.beta_star();
    let mut z = DMatrix::zeros(cfg.n, cfg.p);
    let mut y = Vec::with_capacity(cfg.n);
    for i in 0..cfg.n {
        let row = cfg.sample_covariate_row(&mut rng);
        let mut eta = beta[0];
        for j in 0..cfg.p {
            z[(i, j)] = row[j];
            eta += beta[j + 1] * row[j];
        }
        let mu = eta.exp();
        let draw: f64 = rng.sample(rand_distr::Poisson::new(mu).expect("positive mean"));
        y.push(draw.round());
    }
    Dataset::from_covariates(z, y)
}

/// Applies the scenario's contamination to a clean sample.
///
/// AVY / AVY2 replace the first `ceil(eps n)` rows of a seeded shuffle with
/// the leverage point `(y0, x0 = e1 + 3 e2)`; AMR redraws each response with
/// probability `eps` from a Poisson with mean multiplied by `y0`.
pub fn contaminate(data: &Dataset, cfg: &ScenarioConfig, seed: u64) -> Result<Dataset> {
    cfg.validate()?;
    if cfg.epsilon == 0.0 {
        return Ok(data.clone());
    }
    let n = data.n();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    match cfg.design {
        Design::Avy | Design::Avy2 => {
            let m = (cfg.epsilon * n as f64).ceil() as usize;
            let mut idx: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                let j = rng.random_range(0..=i);
                idx.swap(i, j);
            }
            let mut x = data.design().clone();
            let mut y = data.y().to_vec();
            for &i in &idx[..m] {
                x[(i, 1)] = 3.0;
                for j in 2..x.ncols() {
                    x[(i, j)] = 0.0;
                }
                y[i] = cfg.y0 as f64;
            }
            Dataset::from_design(x, y)
        }
        Design::Amr => {
            let beta = cfg.beta_star();
            let eta = data.eta(&beta);
            let mut y = data.y().to_vec();
            for i in 0..n {
                if rng.random::<f64>() < cfg.epsilon {
                    let mu = cfg.y0 as f64 * eta[i].exp();
                    y[i] = if mu <= 0.0 {
                        0.0
                    } else {
                        let draw: f64 =
                            rng.sample(rand_distr::Poisson::new(mu).expect("positive mean"));
                        draw.round()
                    };
                }
            }
            Dataset::from_design(data.design().clone(), y)
        }
    }
}

/// Estimators the harness compares.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Method {
    MtLasso,
    MtRidge,
    MtElasticNet(f64),
    MlLasso,
    MlRidge,
}

impl Method {
    pub fn label(&self) -> String {
        match self {
            Method::MtLasso => "MT-lasso".into(),
            Method::MtRidge => "MT-ridge".into(),
            Method::MtElasticNet(a) => format!("MT-elastic-net({a})"),
            Method::MlLasso => "ML-lasso".into(),
            Method::MlRidge => "ML-ridge".into(),
        }
    }

    fn penalty_kind_alpha(&self) -> (PenaltyKind, f64) {
        match self {
            Method::MtLasso | Method::MlLasso => (PenaltyKind::Lasso, 1.0),
            Method::MtRidge | Method::MlRidge => (PenaltyKind::Ridge, 0.0),
            Method::MtElasticNet(a) => (PenaltyKind::ElasticNet, *a),
        }
    }

    fn fit_method(&self, rho: RhoFunction) -> FitMethod {
        match self {
            Method::MtLasso | Method::MtRidge | Method::MtElasticNet(_) => FitMethod::Mt(rho),
            Method::MlLasso | Method::MlRidge => FitMethod::Ml,
        }
    }
}

/// Harness knobs beyond the scenario itself.
#[derive(Debug, Clone, Copy)]
pub struct HarnessConfig {
    pub rho: RhoFunction,
    pub grid_points: usize,
    pub grid_ratio: f64,
    pub path: PathConfig,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        // Monte Carlo profile: tolerances well inside what the subgradient
        // certification needs (1e-4), loose enough that saturated path
        // tails do not burn the replication budget; paths stop once the
        // active set passes 90% of n.
        let mut path = PathConfig::default();
        path.solver.inner_tol = 1e-7;
        path.solver.outer_tol = 1e-7;
        path.solver.max_sweeps = 400;
        path.solver.max_outer = 60;
        Self {
            rho: RhoFunction::default_quartic(),
            grid_points: 50,
            grid_ratio: 1e-3,
            path,
        }
    }
}

/// Aggregated results for one method under one scenario.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportRow {
    pub design: String,
    pub method: String,
    pub n: usize,
    pub p: usize,
    pub epsilon: f64,
    pub y0: u64,
    pub criterion: String,
    pub replications: usize,
    pub failures: usize,
    pub mse: f64,
    pub size_median: f64,
    pub size_mad: f64,
    pub fn_median: f64,
    pub fn_mad: f64,
    pub fn_mean: f64,
    pub fp_median: f64,
    pub fp_mad: f64,
    pub fp_mean: f64,
    pub lambda_median: f64,
    /// Mean wall-clock per path fit, milliseconds. Measurement metadata:
    /// excluded from the canonical serialization used for reproducibility
    /// checks.
    pub avg_fit_millis: f64,
}

/// A full Monte Carlo report: one row per method.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub rows: Vec<ReportRow>,
}

impl MonteCarloReport {
    pub fn to_json(&self) -> String {
        let wrapped = serde_json::json!({
            "schema": "mtglm/1",
            "rows": self.rows,
        });
        serde_json::to_string_pretty(&wrapped).expect("report serializes")
    }

    /// Canonical serialization for reproducibility checks: every
    /// statistical field, no timing metadata.
    pub fn canonical_json(&self) -> String {
        let rows: Vec<serde_json::Value> = self
            .rows
            .iter()
            .map(|r| {
                serde_json::json!({
                    "design": r.design,
                    "method": r.method,
                    "n": r.n,
                    "p": r.p,
                    "epsilon": r.epsilon,
                    "y0": r.y0,
                    "criterion": r.criterion,
                    "replications": r.replications,
                    "failures": r.failures,
                    "mse": format!("{:.17e}", r.mse),
                    "size_median": format!("{:.17e}", r.size_median),
                    "size_mad": format!("{:.17e}", r.size_mad),
                    "fn_median": format!("{:.17e}", r.fn_median),
                    "fn_mad": format!("{:.17e}", r.fn_mad),
                    "fn_mean": format!("{:.17e}", r.fn_mean),
                    "fp_median": format!("{:.17e}", r.fp_median),
                    "fp_mad": format!("{:.17e}", r.fp_mad),
                    "fp_mean": format!("{:.17e}", r.fp_mean),
                    "lambda_median": format!("{:.17e}", r.lambda_median),
                })
            })
            .collect();
        serde_json::to_string_pretty(&rows).expect("report serializes")
    }

    /// Long-format CSV, one row per method/config: plot-ready with `y0` on
    /// the x axis and one series per method.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "design,method,n,p,epsilon,y0,criterion,replications,failures,mse,\
             size_median,size_mad,fn_median,fn_mad,fn_mean,fp_median,fp_mad,fp_mean,\
             lambda_median,avg_fit_millis\n",
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.3}\n",
                r.design,
                r.method,
                r.n,
                r.p,
                r.epsilon,
                r.y0,
                r.criterion,
                r.replications,
                r.failures,
                r.mse,
                r.size_median,
                r.size_mad,
                r.fn_median,
                r.fn_mad,
                r.fn_mean,
                r.fp_median,
                r.fp_mad,
                r.fp_mean,
                r.lambda_median,
                r.avg_fit_millis,
            ));
        }
        out
    }
}

fn median(sorted: &[f64]) -> f64 {
    let m = sorted.len();
    if m == 0 {
        return f64::NAN;
    }
    if m % 2 == 1 {
        sorted[m / 2]
    } else {
        0.5 * (sorted[m / 2 - 1] + sorted[m / 2])
    }
}

/// Median and (unscaled) median absolute deviation.
fn median_mad(values: &[f64]) -> (f64, f64) {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let med = median(&v);
    let mut dev: Vec<f64> = values.iter().map(|x| (x - med).abs()).collect();
    dev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    (med, median(&dev))
}

/// Rebuilds the exact dataset replicate `rep` of a scenario sees (clean
/// draw plus contamination), for inspection and certification tests.
pub fn replicate_dataset(cfg: &ScenarioConfig, rep: u64) -> Result<Dataset> {
    let clean = generate_sample(cfg, mix_seed(cfg.master_seed, 0, rep))?;
    contaminate(&clean, cfg, mix_seed(cfg.master_seed, 1, rep))
}

struct ReplicateOutcome {
    sq_err: f64,
    size: f64,
    false_neg: f64,
    false_pos: f64,
    lambda: f64,
    fit_millis: f64,
}

fn run_replicate(
    cfg: &ScenarioConfig,
    method: Method,
    criterion: RicFlavor,
    harness: &HarnessConfig,
    rep: u64,
) -> Result<ReplicateOutcome> {
    let data = replicate_dataset(cfg, rep)?;

    let (kind, alpha) = method.penalty_kind_alpha();
    let spec = PenaltySpec::new(kind, 1.0, alpha)?;
    let fit_method = method.fit_method(harness.rho);

    let start = Instant::now();
    // The lambda-max formula inflates by 1/max(alpha, 0.001); deepen the
    // grid by the same factor so ridge-like paths still reach the lightly
    // penalized regime the criteria select from.
    let ratio = harness.grid_ratio * alpha.max(0.001);
    let grid = lambda_grid(&data, &spec, &fit_method, harness.grid_points, ratio)?;
    let mut path_cfg = harness.path;
    if path_cfg.max_active.is_none() {
        path_cfg.max_active = Some(((data.n() * 9) / 10).max(3));
    }
    let path = fit_path(&data, &spec, &grid, fit_method, &path_cfg)?;
    let elapsed = start.elapsed().as_secs_f64() * 1e3;

    let sel = path.selected(criterion);
    let fit = &path.fits[sel];
    let truth = cfg.beta_star();
    let support = cfg.support();

    let mut sq_err = 0.0;
    for j in 0..truth.len() {
        sq_err += (fit.beta[j] - truth[j]) * (fit.beta[j] - truth[j]);
    }
    let false_neg = support.iter().filter(|&&j| fit.beta[j] == 0.0).count() as f64;
    let false_pos = fit
        .active_set
        .iter()
        .filter(|j| !support.contains(j))
        .count() as f64;
    // Selected variables including the intercept.
    let size = 1.0 + fit.active_set.len() as f64;

    Ok(ReplicateOutcome {
        sq_err,
        size,
        false_neg,
        false_pos,
        lambda: grid[sel],
        fit_millis: elapsed,
    })
}

fn criterion_label(flavor: RicFlavor) -> String {
    match flavor {
        RicFlavor::Aic => "AIC".into(),
        RicFlavor::Bic => "BIC".into(),
        RicFlavor::Ebic(g) => format!("EBIC({g})"),
    }
}

/// Runs the scenario for every method and aggregates per the study's
/// conventions: mean for MSE, median and MAD for Size / #FN / #FP.
///
/// Replicates are independent seeded tasks; failed replicates are counted
/// and excluded from the aggregates.
pub fn run_monte_carlo(
    cfg: &ScenarioConfig,
    methods: &[Method],
    criterion: RicFlavor,
    harness: &HarnessConfig,
) -> Result<MonteCarloReport> {
    cfg.validate()?;
    if cfg.replications == 0 {
        return Err(MtError::Config("need at least one replication".into()));
    }
    let mut rows = Vec::with_capacity(methods.len());
    for &method in methods {
        let outcomes = exec::map_indexed(cfg.replications, |rep| {
            run_replicate(cfg, method, criterion, harness, rep as u64)
        });
        let mut ok = Vec::new();
        let mut failures = 0usize;
        for o in outcomes {
            match o {
                Ok(v) => ok.push(v),
                Err(_) => failures += 1,
            }
        }
        if ok.is_empty() {
            return Err(MtError::NonConvergence(format!(
                "every replicate failed for {}",
                method.label()
            )));
        }
        let m = ok.len() as f64;
        let mse = ok.iter().map(|o| o.sq_err).sum::<f64>() / m;
        let (size_median, size_mad) =
            median_mad(&ok.iter().map(|o| o.size).collect::<Vec<_>>());
        let (fn_median, fn_mad) =
            median_mad(&ok.iter().map(|o| o.false_neg).collect::<Vec<_>>());
        let (fp_median, fp_mad) =
            median_mad(&ok.iter().map(|o| o.false_pos).collect::<Vec<_>>());
        let fn_mean = ok.iter().map(|o| o.false_neg).sum::<f64>() / m;
        let fp_mean = ok.iter().map(|o| o.false_pos).sum::<f64>() / m;
        let (lambda_median, _) =
            median_mad(&ok.iter().map(|o| o.lambda).collect::<Vec<_>>());
        let avg_fit_millis = ok.iter().map(|o| o.fit_millis).sum::<f64>() / m;
        rows.push(ReportRow {
            design: cfg.design.label().into(),
            method: method.label(),
            n: cfg.n,
            p: cfg.p,
            epsilon: cfg.epsilon,
            y0: cfg.y0,
            criterion: criterion_label(criterion),
            replications: cfg.replications,
            failures,
            mse,
            size_median,
            size_mad,
            fn_median,
            fn_mad,
            fn_mean,
            fp_median,
            fp_mad,
            fp_mean,
            lambda_median,
            avg_fit_millis,
        });
    }
    Ok(MonteCarloReport { rows })
}
