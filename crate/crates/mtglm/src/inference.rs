//! Asymptotic inference: sandwich covariance matrices, bootstrap
//! deviance-residual outlier detection, and the computable lower bound on
//! the asymptotic breakdown point.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::data::Dataset;
use crate::error::MtError;
use crate::exec;
use crate::families::{poisson_deviance_residual, poisson_table_cached, GlmFamily, Poisson};
use crate::robust_loss::RhoFunction;
use crate::simulation::ScenarioConfig;
use crate::solver::FitResult;
use crate::Result;

/// Empirical sandwich covariance `A^{-1} B A^{-1} / n` with its active-set
/// restriction.
#[derive(Debug, Clone)]
pub struct SandwichCovariance {
    /// Empirical mean of the per-observation Hessian.
    pub a: DMatrix<f64>,
    /// Empirical second moment of the per-observation gradient.
    pub b: DMatrix<f64>,
    /// Full-dimension covariance estimate.
    pub sigma: DMatrix<f64>,
    /// Columns (intercept first, then active slopes) of the restricted
    /// sandwich.
    pub active_columns: Vec<usize>,
    /// Active-block covariance estimate.
    pub sigma_active: DMatrix<f64>,
}

fn invert_named(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    m.clone().try_inverse().ok_or_else(|| {
        MtError::RankDeficient(format!("{what} matrix is numerically singular"))
    })
}

fn sandwich_block(
    data: &Dataset,
    beta: &DVector<f64>,
    rho: &RhoFunction,
    cols: &[usize],
    what: &str,
) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    let table = poisson_table_cached(rho)?;
    let n = data.n();
    let dim = cols.len();
    let eta = data.eta(beta);
    let mut a = DMatrix::zeros(dim, dim);
    let mut b = DMatrix::zeros(dim, dim);
    for i in 0..n {
        let e = eta[i];
        let r = data.y()[i].sqrt() - table.value(e);
        let d = table.deriv(e);
        let c = table.second(e);
        let a_coef = (rho.psi_prime(r) * d * d - rho.psi(r) * c) / n as f64;
        let g_coef = rho.psi(r) * d;
        let b_coef = g_coef * g_coef / n as f64;
        for (rr, &cr) in cols.iter().enumerate() {
            let xr = data.design()[(i, cr)];
            for (cc, &ccol) in cols.iter().enumerate().skip(rr) {
                let xx = xr * data.design()[(i, ccol)];
                a[(rr, cc)] += a_coef * xx;
                b[(rr, cc)] += b_coef * xx;
                if rr != cc {
                    a[(cc, rr)] += a_coef * xx;
                    b[(cc, rr)] += b_coef * xx;
                }
            }
        }
    }
    let a_inv = invert_named(&a, what)?;
    let mut sigma = &a_inv * &b * &a_inv / n as f64;
    // Symmetrize away rounding skew.
    let sig_t = sigma.transpose();
    sigma = (&sigma + &sig_t) * 0.5;
    Ok((a, b, sigma))
}

/// Empirical sandwich covariance of a converged MT fit, full and restricted
/// to the fitted active set.
pub fn sandwich_covariance(
    data: &Dataset,
    fit: &FitResult,
    rho: &RhoFunction,
) -> Result<SandwichCovariance> {
    let dim = data.p() + 1;
    let full_cols: Vec<usize> = (0..dim).collect();
    let (a, b, sigma) = sandwich_block(data, &fit.beta, rho, &full_cols, "full Hessian")?;
    let active_columns: Vec<usize> = std::iter::once(0)
        .chain(fit.active_set.iter().cloned())
        .collect();
    let (_, _, sigma_active) = sandwich_block(
        data,
        &fit.beta,
        rho,
        &active_columns,
        "active-set Hessian",
    )?;
    Ok(SandwichCovariance {
        a,
        b,
        sigma,
        active_columns,
        sigma_active,
    })
}

/// Bootstrap outlier report: the extreme deviance residuals reachable under
/// the fitted model, and which observations fall outside them.
#[derive(Debug, Clone)]
pub struct OutlierReport {
    pub bootstrap_size: usize,
    /// Minimum of the bootstrap deviance residuals.
    pub q1: f64,
    /// Maximum of the bootstrap deviance residuals.
    pub q2: f64,
    pub residuals: Vec<f64>,
    pub flags: Vec<bool>,
    pub outlier_count: usize,
    /// Number of bootstrap draws whose linear predictor had to be clamped.
    pub clamped: usize,
}

/// Bootstrap deviance-residual outlier detection at a fitted model: draw a
/// random design row, sample a response from its fitted Poisson mean,
/// record the deviance residual; flag sample rows outside the bootstrap
/// min/max band. `fit` should come from a robust method, otherwise the
/// band itself is distorted by the outliers.
pub fn detect_outliers(
    data: &Dataset,
    fit: &FitResult,
    bootstrap: usize,
    seed: u64,
) -> Result<OutlierReport> {
    if bootstrap == 0 {
        return Err(MtError::Config("bootstrap size must be positive".into()));
    }
    let n = data.n();
    let eta = data.eta(&fit.beta);
    let mut clamped = 0usize;
    let mus: Vec<f64> = eta
        .iter()
        .map(|&e| {
            if e > 700.0 {
                clamped += 1;
                700.0f64.exp()
            } else {
                e.exp()
            }
        })
        .collect();

    // Seeded sub-streams keep the draws independent of scheduling.
    let chunk = 65_536usize;
    let chunks = bootstrap.div_ceil(chunk);
    let extremes = exec::map_indexed(chunks, |c| {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(c as u64 + 1);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let todo = chunk.min(bootstrap - c * chunk);
        for _ in 0..todo {
            let i = rng.random_range(0..n);
            // Sampling mean capped at the generator's usable range.
            let mu = mus[i].min(1e12);
            let y: f64 = rng.sample(rand_distr::Poisson::new(mu).expect("valid mean"));
            let r = poisson_deviance_residual(y.round(), mus[i]).expect("valid residual");
            lo = lo.min(r);
            hi = hi.max(r);
        }
        (lo, hi)
    });
    let mut q1 = f64::INFINITY;
    let mut q2 = f64::NEG_INFINITY;
    for (lo, hi) in extremes {
        q1 = q1.min(lo);
        q2 = q2.max(hi);
    }

    let mut residuals = Vec::with_capacity(n);
    let mut flags = Vec::with_capacity(n);
    let mut outlier_count = 0;
    for i in 0..n {
        let r = poisson_deviance_residual(data.y()[i], mus[i])?;
        let flag = !(q1..=q2).contains(&r);
        outlier_count += flag as usize;
        residuals.push(r);
        flags.push(flag);
    }
    Ok(OutlierReport {
        bootstrap_size: bootstrap,
        q1,
        q2,
        residuals,
        flags,
        outlier_count,
        clamped,
    })
}

/// A breakdown-bound estimate with its Monte Carlo standard error.
#[derive(Debug, Clone, Copy)]
pub struct AbpEstimate {
    pub value: f64,
    pub std_error: f64,
    pub draws: usize,
}

/// Lower bound on the asymptotic breakdown point for the Poisson case:
/// `c / (1 + c)` with
/// `c = E[rho(t(y))] - E[rho(t(y) - s(x' beta))]`,
/// the expectation over the design taken by seeded Monte Carlo and the
/// expectation over the response by tail-truncated sums.
pub fn abp_lower_bound(
    design: &ScenarioConfig,
    beta_star: &DVector<f64>,
    rho: &RhoFunction,
    draws: usize,
    seed: u64,
) -> Result<AbpEstimate> {
    if draws < 2 {
        return Err(MtError::Config("breakdown bound needs at least 2 draws".into()));
    }
    let table = poisson_table_cached(rho)?;
    let family = Poisson;

    // Per-draw difference rho(t(y)) - rho(t(y) - s(eta)) in expectation over
    // y | x; its design-average is the numerator c.
    let per_draw = exec::map_indexed(draws, |i| {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(i as u64 + 1);
        let x = design.sample_covariate_row(&mut rng);
        let mut eta = beta_star[0];
        for j in 1..beta_star.len() {
            eta += beta_star[j] * x[j - 1];
        }
        let mu = eta.clamp(-300.0, 300.0).exp();
        let s = table.value(eta);
        if mu <= 0.0 {
            return 0.0;
        }
        let w = family.support_window(mu);
        let mut at_origin = 0.0;
        let mut at_fit = 0.0;
        for (y, pr) in w.iter() {
            let t = (y as f64).sqrt();
            at_origin += rho.rho(t) * pr;
            at_fit += rho.rho(t - s) * pr;
        }
        at_origin - at_fit
    });

    let m = per_draw.len() as f64;
    let mean = per_draw.iter().sum::<f64>() / m;
    let var = per_draw.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (m * (m - 1.0));
    let c = mean.max(0.0);
    let value = c / (1.0 + c);
    // Delta method through c -> c / (1 + c).
    let std_error = var.sqrt() / ((1.0 + c) * (1.0 + c));
    Ok(AbpEstimate {
        value,
        std_error,
        draws,
    })
}
