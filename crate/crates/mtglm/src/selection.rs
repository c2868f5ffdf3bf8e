//! Penalty-parameter selection: regularization paths, effective degrees of
//! freedom, robust information criteria and robust K-fold cross-validation.
//!
//! Paths are warm-started chains: the largest lambda starts at a robust
//! intercept-only anchor and each following fit starts at its predecessor.
//! Under gross contamination the penalized objective can develop a spurious
//! low basin at small lambda; continuation along the path keeps the fits on
//! the branch grown from the robust null model instead of hunting that
//! basin, which is what keeps the selected estimates bounded.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::data::Dataset;
use crate::error::MtError;
use crate::exec;
use crate::families::{poisson_table_cached, MFunctionTable};
use crate::penalties::PenaltySpec;
use crate::robust_loss::{MtObjective, RhoFunction};
use crate::solver::{irwls_fit, linearize, ml_poisson_fit_from, FitResult, SolverConfig};
use crate::Result;

/// Which estimator a path or cross-validation run fits.
#[derive(Debug, Clone, Copy)]
pub enum FitMethod {
    /// Robust MT fit with the given rho.
    Mt(RhoFunction),
    /// Classical penalized Poisson maximum likelihood.
    Ml,
}

/// Information-criterion flavors. The complexity constant is
/// `2` (AIC), `log n` (BIC) or `log n + gamma log p` (extended BIC).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RicFlavor {
    Aic,
    Bic,
    Ebic(f64),
}

/// Robust information criterion: `goodness + C(n, p) * df`.
///
/// `goodness` is whatever loss the caller supplies; path selection feeds the
/// aggregated objective `n * L_n` so that one unit of df trades off against
/// one unit of log-likelihood-scale fit, mirroring the classical criteria.
pub fn ric(goodness: f64, df: f64, flavor: RicFlavor, n: usize, p: usize) -> Result<f64> {
    let c = match flavor {
        RicFlavor::Aic => 2.0,
        RicFlavor::Bic => (n as f64).ln(),
        RicFlavor::Ebic(gamma) => {
            if !(0.0..=1.0).contains(&gamma) {
                return Err(MtError::Config(format!(
                    "extended BIC gamma must lie in [0,1], got {gamma}"
                )));
            }
            (n as f64).ln() + gamma * (p.max(1) as f64).ln()
        }
    };
    Ok(goodness + c * df)
}

/// Robust intercept-only fit: the one-dimensional MT location of the
/// transformed responses mapped back through the monotone transform table.
pub fn robust_intercept(data: &Dataset, rho: &RhoFunction, table: &MFunctionTable) -> f64 {
    let ty: Vec<f64> = data.y().iter().map(|&y| y.sqrt()).collect();
    let value = |g: f64| -> f64 { ty.iter().map(|&t| rho.rho(t - g)).sum() };
    let pad = if rho.is_bounded() { rho.tuning() } else { 1.0 };
    let lo = (ty.iter().cloned().fold(f64::INFINITY, f64::min) - pad).max(0.0);
    let hi = ty.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + pad;
    let scan = 256;
    let step = (hi - lo) / scan as f64;
    let mut best = (lo, value(lo));
    for i in 1..=scan {
        let g = lo + step * i as f64;
        let v = value(g);
        if v < best.1 {
            best = (g, v);
        }
    }
    let (mut a, mut b) = ((best.0 - step).max(lo), (best.0 + step).min(hi));
    let inv_phi = 0.618_033_988_749_894_9_f64;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (value(c), value(d));
    while b - a > 1e-12 {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = value(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = value(d);
        }
    }
    table.inverse(0.5 * (a + b))
}

fn anchor_point(data: &Dataset, method: &FitMethod) -> Result<DVector<f64>> {
    let mut beta = DVector::zeros(data.p() + 1);
    match method {
        FitMethod::Mt(rho) => {
            let table = poisson_table_cached(rho)?;
            beta[0] = robust_intercept(data, rho, &table);
        }
        FitMethod::Ml => {
            let mean_y = data.y().iter().sum::<f64>() / data.n() as f64;
            beta[0] = mean_y.max(1e-3).ln();
        }
    }
    Ok(beta)
}

/// Working correlations `(1/n) sum_i v_ij z_i` at a coefficient vector, for
/// the method's own linearization.
fn working_correlations(
    data: &Dataset,
    method: &FitMethod,
    beta: &DVector<f64>,
) -> Result<DVector<f64>> {
    match method {
        FitMethod::Mt(rho) => {
            let table = poisson_table_cached(rho)?;
            let obj = MtObjective::new(data, table, *rho, None);
            let lin = linearize(&obj, beta)?;
            Ok(lin.v.transpose() * &lin.z / data.n() as f64)
        }
        FitMethod::Ml => {
            let eta = data.eta(beta);
            let n = data.n();
            let mut acc = DVector::zeros(data.p() + 1);
            for i in 0..n {
                let mu = eta[i].clamp(-30.0, 30.0).exp();
                let resid = data.y()[i] - mu;
                acc.axpy(resid / n as f64, &data.design().row(i).transpose(), 1.0);
            }
            Ok(acc)
        }
    }
}

/// Geometric lambda grid anchored at the smallest lambda that zeroes every
/// slope in the first coordinate-descent sweep from the method's robust
/// intercept-only fit.
pub fn lambda_grid(
    data: &Dataset,
    spec: &PenaltySpec,
    method: &FitMethod,
    n_points: usize,
    ratio: f64,
) -> Result<Vec<f64>> {
    if n_points < 2 {
        return Err(MtError::Config("lambda grid needs at least 2 points".into()));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(MtError::Config(format!(
            "lambda grid ratio must lie in (0,1), got {ratio}"
        )));
    }
    let alpha = spec
        .mixing()
        .ok_or_else(|| MtError::Config("lambda grid needs an elastic-net family".into()))?;
    let anchor = anchor_point(data, method)?;
    let corr = working_correlations(data, method, &anchor)?;
    let mut max_c = 0.0f64;
    for j in 1..corr.len() {
        max_c = max_c.max(corr[j].abs());
    }
    if max_c == 0.0 {
        return Err(MtError::DegenerateInput(
            "all working regressors are zero; no usable lambda scale".into(),
        ));
    }
    let lambda_max = max_c / alpha.max(0.001);
    let factor = ratio.powf(1.0 / (n_points - 1) as f64);
    let mut grid = Vec::with_capacity(n_points);
    let mut l = lambda_max;
    for _ in 0..n_points {
        grid.push(l);
        l *= factor;
    }
    Ok(grid)
}

/// Effective degrees of freedom from the pieces of the equivalent-projection
/// matrix: active design block, diagonal weights and the ridge constant on
/// the slope block (the intercept stays unpenalized).
///
/// Returns the trace and a degeneracy flag; when the penalized normal matrix
/// is numerically singular the trace falls back to a pseudo-inverse.
pub fn df_from_parts(x_a: &DMatrix<f64>, w: &[f64], ridge: f64) -> (f64, bool) {
    let a = x_a.ncols();
    if a == 0 {
        return (0.0, false);
    }
    let n = x_a.nrows();
    let mut xtwx = DMatrix::zeros(a, a);
    for i in 0..n {
        let row = x_a.row(i);
        for r in 0..a {
            for c in r..a {
                let v = w[i] * row[r] * row[c];
                xtwx[(r, c)] += v;
                if r != c {
                    xtwx[(c, r)] += v;
                }
            }
        }
    }
    let mut penalized = xtwx.clone();
    for j in 1..a {
        penalized[(j, j)] += ridge;
    }
    match penalized.clone().lu().solve(&xtwx) {
        Some(sol) if sol.iter().all(|v: &f64| v.is_finite()) => (sol.trace(), false),
        _ => {
            let pinv = penalized
                .svd(true, true)
                .pseudo_inverse(1e-12)
                .expect("svd pseudo-inverse");
            ((pinv * &xtwx).trace(), true)
        }
    }
}

/// Degrees of freedom of a converged fit: trace of
/// `sqrt(W) X_A (X_A' W X_A + lambda (1-alpha) I)^{-1} X_A' sqrt(W)` with
/// `W` the squared linearization slope times the robust weight and the
/// intercept column always included, unpenalized.
pub fn degrees_of_freedom(
    data: &Dataset,
    fit: &FitResult,
    spec: &PenaltySpec,
    method: &FitMethod,
) -> Result<(f64, bool)> {
    let alpha = spec
        .mixing()
        .ok_or_else(|| MtError::Config("df formula covers the elastic-net family".into()))?;
    let w: Vec<f64> = match method {
        FitMethod::Mt(rho) => {
            let table = poisson_table_cached(rho)?;
            let eta = data.eta(&fit.beta);
            (0..data.n())
                .map(|i| {
                    let d = table.deriv(eta[i]);
                    d * d * fit.weights[i]
                })
                .collect()
        }
        FitMethod::Ml => fit.weights.clone(),
    };
    if w.iter().any(|&x| x < 0.0) {
        return Err(MtError::Internal("negative df weight".into()));
    }
    let cols: Vec<usize> = std::iter::once(0)
        .chain(fit.active_set.iter().cloned())
        .collect();
    let mut x_a = DMatrix::zeros(data.n(), cols.len());
    for (out, &j) in cols.iter().enumerate() {
        x_a.column_mut(out).copy_from(&data.design().column(j));
    }
    // The inner objective carries a 1/(2n) factor, so the ridge constant
    // enters the unnormalized normal matrix scaled by n; this keeps the
    // trace consistent with the shrinkage the fit actually applied.
    let ridge = data.n() as f64 * spec.lambda * (1.0 - alpha);
    Ok(df_from_parts(&x_a, &w, ridge))
}

/// A fitted regularization path with information criteria and selections.
#[derive(Debug, Clone)]
pub struct PathResult {
    /// Strictly descending lambda grid.
    pub lambdas: Vec<f64>,
    pub fits: Vec<FitResult>,
    pub dfs: Vec<f64>,
    pub ric_aic: Vec<f64>,
    pub ric_bic: Vec<f64>,
    pub ric_ebic: Vec<f64>,
    /// Start bookkeeping: `None` means the robust intercept-only anchor,
    /// `Some(i)` means warm-started from path index `i`.
    pub warm_start_from: Vec<Option<usize>>,
    pub selected_aic: usize,
    pub selected_bic: usize,
    pub selected_ebic: usize,
}

impl PathResult {
    pub fn selected(&self, flavor: RicFlavor) -> usize {
        match flavor {
            RicFlavor::Aic => self.selected_aic,
            RicFlavor::Bic => self.selected_bic,
            RicFlavor::Ebic(_) => self.selected_ebic,
        }
    }
}

/// Path-fit configuration.
#[derive(Debug, Clone, Copy)]
pub struct PathConfig {
    pub solver: SolverConfig,
    pub ebic_gamma: f64,
    /// Stop extending the path once a fit's active set exceeds this
    /// (saturated fits at the deep end of a p >= n path cost the most and
    /// are never selected). `None` fits the whole grid.
    pub max_active: Option<usize>,
}

impl Default for PathConfig {
    fn default() -> Self {
        Self {
            solver: SolverConfig::default(),
            ebic_gamma: 0.5,
            max_active: None,
        }
    }
}

/// Dispersion constant of a rho-function on the variance-stabilized scale:
/// `E[psi(r)^2] / E[psi'(r)]` under `r ~ N(0, 1/4)`, the residual law the
/// transform targets at a well-fitting model. This is the per-df in-sample
/// loss drop a noise direction buys, so dividing the loss by it puts fits
/// on the likelihood-ratio scale. A fixed constant keeps the criterion
/// scale independent of the fit (estimating it from residuals collapses in
/// the overfitted p ~ n regime) and outliers cannot move it.
pub fn rho_dispersion(rho: &RhoFunction) -> f64 {
    let sigma = 0.5;
    let steps = 4001;
    let half_width = 8.0 * sigma;
    let dx = 2.0 * half_width / (steps - 1) as f64;
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..steps {
        let u = -half_width + dx * i as f64;
        let w = (-u * u / (2.0 * sigma * sigma)).exp();
        num += rho.psi(u) * rho.psi(u) * w;
        den += rho.psi_prime(u) * w;
    }
    if den <= 0.0 || num <= 0.0 {
        return 1.0;
    }
    num / den
}

fn argmin_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

/// Fits the penalty at every lambda on the grid with warm starts and scores
/// each fit with AIC/BIC/EBIC on the aggregated objective.
pub fn fit_path(
    data: &Dataset,
    spec: &PenaltySpec,
    grid: &[f64],
    method: FitMethod,
    cfg: &PathConfig,
) -> Result<PathResult> {
    if grid.len() < 2 {
        return Err(MtError::Config("path needs at least two lambdas".into()));
    }
    for w in grid.windows(2) {
        if !(w[1] < w[0]) {
            return Err(MtError::Config(
                "lambda grid must be strictly descending".into(),
            ));
        }
    }
    let n = data.n();
    let p = data.p();
    let anchor = anchor_point(data, &method)?;

    let mut fits: Vec<FitResult> = Vec::with_capacity(grid.len());
    let mut warm_start_from = Vec::with_capacity(grid.len());
    for (i, &lam) in grid.iter().enumerate() {
        let spec_i = spec.with_lambda(lam);
        let start = if i == 0 {
            warm_start_from.push(None);
            anchor.clone()
        } else {
            warm_start_from.push(Some(i - 1));
            fits[i - 1].beta.clone()
        };
        let fit = match method {
            FitMethod::Mt(rho) => {
                let table = poisson_table_cached(&rho)?;
                let obj = MtObjective::new(data, table, rho, Some(spec_i));
                irwls_fit(&obj, &start, &cfg.solver)?
            }
            FitMethod::Ml => ml_poisson_fit_from(data, &spec_i, Some(&start), &cfg.solver)?,
        };
        let saturated = cfg
            .max_active
            .map(|cap| fit.active_set.len() > cap)
            .unwrap_or(false);
        fits.push(fit);
        if saturated && fits.len() >= 2 {
            warm_start_from.truncate(fits.len());
            break;
        }
    }
    let grid = &grid[..fits.len()];

    // Goodness of fit on the Wilks-calibrated scale: 2n L / phi, with phi
    // the rho-specific dispersion constant. One unit of df then trades off
    // against one unit of in-sample fit, as in the classical criteria; for
    // the ML method phi = 1 and this is the usual deviance-based criterion.
    // The penalty value stays out of the goodness term: it is data-free and
    // would only re-add a lambda ramp.
    let phi = match method {
        FitMethod::Mt(rho) => rho_dispersion(&rho),
        FitMethod::Ml => 1.0,
    };
    let mut dfs = Vec::with_capacity(grid.len());
    let mut ric_aic = Vec::with_capacity(grid.len());
    let mut ric_bic = Vec::with_capacity(grid.len());
    let mut ric_ebic = Vec::with_capacity(grid.len());
    for (i, fit) in fits.iter().enumerate() {
        let spec_i = spec.with_lambda(grid[i]);
        let (df, _) = degrees_of_freedom(data, fit, &spec_i, &method)?;
        let goodness = 2.0 * n as f64 * fit.loss / phi;
        ric_aic.push(ric(goodness, df, RicFlavor::Aic, n, p)?);
        ric_bic.push(ric(goodness, df, RicFlavor::Bic, n, p)?);
        ric_ebic.push(ric(goodness, df, RicFlavor::Ebic(cfg.ebic_gamma), n, p)?);
        dfs.push(df);
    }

    Ok(PathResult {
        lambdas: grid.to_vec(),
        selected_aic: argmin_first(&ric_aic),
        selected_bic: argmin_first(&ric_bic),
        selected_ebic: argmin_first(&ric_ebic),
        fits,
        dfs,
        ric_aic,
        ric_bic,
        ric_ebic,
        warm_start_from,
    })
}

/// Robust K-fold cross-validation result over an `(alpha, lambda)` grid.
#[derive(Debug, Clone)]
pub struct RcvResult {
    pub alphas: Vec<f64>,
    pub lambdas: Vec<f64>,
    /// `values[a][l]` is the weighted held-out loss for
    /// `(alphas[a], lambdas[l])`.
    pub values: Vec<Vec<f64>>,
    /// Indices of the minimizing pair (ties break toward the first entry,
    /// i.e. the larger lambda).
    pub selected: (usize, usize),
}

/// Cross-validation configuration. Held-out losses exclude the penalty term
/// by default: the penalty does not depend on the data, so keeping it would
/// just re-add a lambda ramp on top of the comparison. `include_penalty`
/// restores the literal criterion.
#[derive(Debug, Clone, Copy)]
pub struct RcvConfig {
    pub folds: usize,
    pub seed: u64,
    pub include_penalty: bool,
    pub path: PathConfig,
}

impl RcvConfig {
    pub fn new(folds: usize, seed: u64) -> Self {
        Self {
            folds,
            seed,
            include_penalty: false,
            path: PathConfig::default(),
        }
    }
}

/// Seeded fold assignment: a shuffle dealt round-robin into `k` folds, so
/// fold sizes differ by at most one.
fn fold_assignment(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        idx.swap(i, j);
    }
    let mut fold = vec![0usize; n];
    for (pos, &row) in idx.iter().enumerate() {
        fold[row] = pos % k;
    }
    fold
}

/// Held-out mean MT loss of `beta` on the listed rows.
fn holdout_loss(
    data: &Dataset,
    rows: &[usize],
    beta: &DVector<f64>,
    rho: &RhoFunction,
    table: &MFunctionTable,
) -> f64 {
    let mut acc = 0.0;
    for &i in rows {
        let eta = data.design().row(i).transpose().dot(beta);
        acc += rho.rho(data.y()[i].sqrt() - table.value(eta));
    }
    acc / rows.len() as f64
}

/// Robust K-fold cross-validation of the MT estimator over an
/// `(alpha, lambda)` grid. Each fold's fits form a warm-started path on the
/// fold complement; the criterion is the fold-size-weighted held-out loss.
pub fn rcv(
    data: &Dataset,
    kind: crate::penalties::PenaltyKind,
    alphas: &[f64],
    lambdas: &[f64],
    rho: RhoFunction,
    cfg: &RcvConfig,
) -> Result<RcvResult> {
    let n = data.n();
    let k = cfg.folds;
    if k < 2 {
        return Err(MtError::Config(
            "cross-validation needs at least 2 folds".into(),
        ));
    }
    if k > n {
        return Err(MtError::Config(format!(
            "{k} folds over {n} observations would leave empty folds"
        )));
    }
    if alphas.is_empty() || lambdas.is_empty() {
        return Err(MtError::Config("empty cross-validation grid".into()));
    }
    let table = poisson_table_cached(&rho)?;
    let assignment = fold_assignment(n, k, cfg.seed);
    let mut fold_rows: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (row, &f) in assignment.iter().enumerate() {
        fold_rows[f].push(row);
    }
    for rows in &fold_rows {
        if rows.is_empty() {
            return Err(MtError::Config("empty cross-validation fold".into()));
        }
        if n - rows.len() < 2 {
            return Err(MtError::Config(
                "a fold complement has fewer than two observations".into(),
            ));
        }
    }

    // (fold, alpha) path fits run independently.
    let jobs: Vec<(usize, usize)> = (0..k)
        .flat_map(|f| (0..alphas.len()).map(move |a| (f, a)))
        .collect();
    let per_job = exec::map_indexed(jobs.len(), |jid| {
        let (f, a) = jobs[jid];
        let train: Vec<usize> = (0..n).filter(|i| assignment[*i] != f).collect();
        let train_data = data.subset(&train)?;
        let spec = PenaltySpec::new(kind, lambdas[0], alphas[a])?;
        let path = fit_path(&train_data, &spec, lambdas, FitMethod::Mt(rho), &cfg.path)?;
        let mut losses = Vec::with_capacity(lambdas.len());
        for (li, fit) in path.fits.iter().enumerate() {
            let mut l = holdout_loss(data, &fold_rows[f], &fit.beta, &rho, &table);
            if cfg.include_penalty {
                let spec_l = spec.with_lambda(lambdas[li]);
                l += spec_l.value(fit.beta.as_slice());
            }
            losses.push(l);
        }
        Ok::<_, MtError>(losses)
    });

    let mut values = vec![vec![0.0; lambdas.len()]; alphas.len()];
    for (jid, res) in per_job.into_iter().enumerate() {
        let (f, a) = jobs[jid];
        let losses = res?;
        let weight = fold_rows[f].len() as f64 / n as f64;
        for (li, l) in losses.into_iter().enumerate() {
            values[a][li] += weight * l;
        }
    }

    let mut selected = (0, 0);
    for a in 0..alphas.len() {
        for l in 0..lambdas.len() {
            if values[a][l] < values[selected.0][selected.1] {
                selected = (a, l);
            }
        }
    }
    Ok(RcvResult {
        alphas: alphas.to_vec(),
        lambdas: lambdas.to_vec(),
        values,
        selected,
    })
}
