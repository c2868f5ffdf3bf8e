//! GLM family layer: the Poisson family with log link and square-root
//! transformation, plus the numerically computed robust mean transform
//! `m(mu) = argmin_g E_mu rho(t(y) - g)` tabulated over the linear predictor.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::MtError;
use crate::robust_loss::RhoFunction;
use crate::Result;

/// Relative density floor used when enumerating the effective support of a
/// count distribution. Mass outside the window is below ~1e-18 of the peak,
/// comfortably past the 1e-12 tail-truncation convention used for all
/// population quantities.
const SUPPORT_REL_FLOOR: f64 = 1e-18;

/// Effective support of a count distribution: probabilities for
/// `start..start + pmf.len()`.
#[derive(Debug, Clone)]
pub struct SupportWindow {
    pub start: u64,
    pub pmf: Vec<f64>,
}

impl SupportWindow {
    /// Iterates `(y, pmf(y))` over the window.
    pub fn iter(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        self.pmf.iter().enumerate().map(|(i, &p)| (self.start + i as u64, p))
    }
}

/// A one-parameter exponential family suitable for MT-estimation: link,
/// variance-stabilizing transformation and distribution primitives.
///
/// Only the Poisson family is implemented; the trait keeps the fitting
/// machinery family-agnostic.
pub trait GlmFamily: Send + Sync {
    /// Link function `g(mu) = eta`.
    fn link(&self, mu: f64) -> f64;
    /// Inverse link `g^{-1}(eta) = mu`.
    fn inv_link(&self, eta: f64) -> f64;
    /// Variance-stabilizing transformation `t(y)`.
    fn transform(&self, y: f64) -> f64;
    /// Probability mass at the integer `y`.
    fn pmf(&self, y: u64, mu: f64) -> f64;
    /// `P(Y <= y)`.
    fn cdf(&self, y: u64, mu: f64) -> f64;
    /// Right-continuous inverse of the cdf: smallest `q` with
    /// `cdf(q) >= prob`.
    fn quantile(&self, prob: f64, mu: f64) -> u64;
    /// `m_LS(mu) = E_mu[t(y)]`, the square-loss mean transform.
    fn mean_transform(&self, mu: f64) -> f64;
    /// Effective support window of the distribution at `mu`.
    fn support_window(&self, mu: f64) -> SupportWindow;
}

/// The Poisson family with log link and `t(y) = sqrt(y)`; the dispersion
/// convention is `a(phi) = 1`, with scale absorbed into the rho tuning
/// constant.
#[derive(Debug, Clone, Copy, Default)]
pub struct Poisson;

impl Poisson {
    fn ln_pmf(&self, y: u64, mu: f64) -> f64 {
        let yf = y as f64;
        -mu + yf * mu.ln() - libm::lgamma(yf + 1.0)
    }
}

impl GlmFamily for Poisson {
    fn link(&self, mu: f64) -> f64 {
        mu.ln()
    }

    fn inv_link(&self, eta: f64) -> f64 {
        eta.exp()
    }

    fn transform(&self, y: f64) -> f64 {
        y.sqrt()
    }

    fn pmf(&self, y: u64, mu: f64) -> f64 {
        if mu <= 0.0 {
            return if y == 0 { 1.0 } else { 0.0 };
        }
        self.ln_pmf(y, mu).exp()
    }

    fn cdf(&self, y: u64, mu: f64) -> f64 {
        if mu <= 0.0 {
            return 1.0;
        }
        let w = self.support_window(mu);
        if y < w.start {
            return 0.0;
        }
        let last = (y - w.start) as usize;
        let sum: f64 = w.pmf.iter().take(last + 1).sum();
        sum.min(1.0)
    }

    fn quantile(&self, prob: f64, mu: f64) -> u64 {
        let prob = prob.clamp(0.0, 1.0);
        if mu <= 0.0 {
            return 0;
        }
        let w = self.support_window(mu);
        let mut cum = 0.0;
        for (y, p) in w.iter() {
            cum += p;
            if cum >= prob {
                return y;
            }
        }
        w.start + w.pmf.len() as u64 - 1
    }

    fn mean_transform(&self, mu: f64) -> f64 {
        let w = self.support_window(mu);
        w.iter().map(|(y, p)| (y as f64).sqrt() * p).sum()
    }

    fn support_window(&self, mu: f64) -> SupportWindow {
        assert!(mu > 0.0, "support window needs mu > 0");
        let mode = mu.floor() as u64;
        let peak = self.ln_pmf(mode, mu).exp();
        let floor = peak * SUPPORT_REL_FLOOR;

        // Walk down from the mode, then up, with the stable pmf recursion.
        let mut below = Vec::new();
        let mut y = mode;
        let mut p = peak;
        while y > 0 {
            p *= y as f64 / mu;
            y -= 1;
            if p < floor {
                break;
            }
            below.push(p);
        }
        let start = if y == 0 && p >= floor { 0 } else { y + 1 };

        let mut pmf: Vec<f64> = below.into_iter().rev().collect();
        pmf.push(peak);
        let mut yy = mode;
        let mut pp = peak;
        loop {
            yy += 1;
            pp *= mu / yy as f64;
            if pp < floor {
                break;
            }
            pmf.push(pp);
        }
        SupportWindow { start, pmf }
    }
}

/// Expected value of `rho(t(y) - gamma)` under the family at `mu`,
/// tail-truncated per the support window.
pub fn expected_rho<F: GlmFamily>(family: &F, rho: &RhoFunction, mu: f64, gamma: f64) -> f64 {
    let w = family.support_window(mu);
    w.iter()
        .map(|(y, p)| rho.rho(family.transform(y as f64) - gamma) * p)
        .sum()
}

/// Robust mean transform `m(mu)`: the minimizer of
/// `E_mu[rho(t(y) - gamma)]` over `gamma`.
///
/// Bracketed on the derivative sign change, minimized by golden-section to
/// 1e-10 and polished by Newton steps on the first-order condition so that
/// finite differences of the result are clean.
pub fn m_value<F: GlmFamily>(family: &F, mu: f64, rho: &RhoFunction) -> Result<f64> {
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(MtError::Domain(format!("m_value needs mu > 0, got {mu}")));
    }
    let w = family.support_window(mu);
    let ty: Vec<f64> = w
        .iter()
        .map(|(y, _)| family.transform(y as f64))
        .collect();
    let probs = &w.pmf;

    let value = |g: f64| -> f64 {
        ty.iter()
            .zip(probs)
            .map(|(&t, &p)| rho.rho(t - g) * p)
            .sum()
    };
    // Derivative of the objective in gamma.
    let deriv = |g: f64| -> f64 {
        -ty.iter()
            .zip(probs)
            .map(|(&t, &p)| rho.psi(t - g) * p)
            .sum::<f64>()
    };
    let second = |g: f64| -> f64 {
        ty.iter()
            .zip(probs)
            .map(|(&t, &p)| rho.psi_prime(t - g) * p)
            .sum()
    };

    // Bracket around the region where psi can fire. For a bounded
    // redescending rho the objective is exactly flat (rho = 1) once gamma is
    // more than k away from every support point, so the search interval is
    // pinned to the transformed bulk of the distribution plus that radius;
    // it is then expanded until the derivative changes sign across it.
    let pad = if rho.is_bounded() { rho.tuning() } else { 1.0 };
    let t_lo = family.transform(family.quantile(1e-6, mu) as f64);
    let t_hi = family.transform(family.quantile(1.0 - 1e-6, mu) as f64);
    let mut a = (t_lo - pad).max(0.0);
    let mut b = (t_hi + pad).max(1e-3);
    let mut expansions = 0;
    while deriv(b) < 0.0 {
        b *= 2.0;
        expansions += 1;
        if expansions > 60 {
            return Err(MtError::DegenerateInput(format!(
                "bracket expansion for m(mu={mu}) did not find a stationary point"
            )));
        }
    }
    while deriv(a) > 0.0 && a > 0.0 {
        a = (a - pad).max(0.0);
        expansions += 1;
        if expansions > 60 {
            return Err(MtError::DegenerateInput(format!(
                "bracket expansion for m(mu={mu}) did not find a stationary point"
            )));
        }
    }

    // Coarse prescan so the golden section starts inside the right basin.
    let scan = 128;
    let scan_step = (b - a) / scan as f64;
    let mut best = (a, value(a));
    for i in 1..=scan {
        let g = a + scan_step * i as f64;
        let v = value(g);
        if v < best.1 {
            best = (g, v);
        }
    }

    // Golden-section to 1e-10 on gamma.
    let inv_phi = 0.618_033_988_749_894_9_f64;
    let (mut lo, mut hi) = (
        (best.0 - scan_step).max(a),
        (best.0 + scan_step).min(b),
    );
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let (mut fc, mut fd) = (value(c), value(d));
    while hi - lo > 1e-10 {
        if fc <= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = value(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = value(d);
        }
    }
    let mut gamma = 0.5 * (lo + hi);

    // Newton polish on the first-order condition.
    for _ in 0..8 {
        let f1 = deriv(gamma);
        let f2 = second(gamma);
        if f2 <= 0.0 {
            break;
        }
        let step = f1 / f2;
        let next = (gamma - step).clamp(a, b);
        let done = (next - gamma).abs() <= 1e-15 * gamma.abs().max(1.0);
        gamma = next;
        if done {
            break;
        }
    }
    Ok(gamma)
}

/// Tabulation of `s(eta) = m(g^{-1}(eta))` with first and second derivatives,
/// interpolated by a cubic Hermite spline.
///
/// Value, slope and curvature queries all come from the same interpolant, so
/// finite differences of the interpolated loss agree with the tabulated
/// derivatives to truncation error. Outside the grid the value continues
/// linearly with the edge slope (curvature zero) and is floored at zero on
/// the left, matching the Poisson limits `m -> 0` and `m -> infinity`.
#[derive(Debug, Clone)]
pub struct MFunctionTable {
    eta_lo: f64,
    eta_hi: f64,
    step: f64,
    values: Vec<f64>,
    slopes: Vec<f64>,
    curvatures: Vec<f64>,
}

impl MFunctionTable {
    pub fn eta_range(&self) -> (f64, f64) {
        (self.eta_lo, self.eta_hi)
    }

    pub fn grid_len(&self) -> usize {
        self.values.len()
    }

    pub fn node(&self, j: usize) -> (f64, f64, f64, f64) {
        (
            self.eta_lo + self.step * j as f64,
            self.values[j],
            self.slopes[j],
            self.curvatures[j],
        )
    }

    fn segment(&self, eta: f64) -> (usize, f64) {
        let pos = (eta - self.eta_lo) / self.step;
        let j = (pos.floor() as usize).min(self.values.len() - 2);
        (j, pos - j as f64)
    }

    /// `s(eta)`.
    pub fn value(&self, eta: f64) -> f64 {
        if eta < self.eta_lo {
            let v = self.values[0] + self.slopes[0] * (eta - self.eta_lo);
            return v.max(0.0);
        }
        if eta > self.eta_hi {
            let last = self.values.len() - 1;
            return self.values[last] + self.slopes[last] * (eta - self.eta_hi);
        }
        let (j, t) = self.segment(eta);
        let (s0, s1) = (self.values[j], self.values[j + 1]);
        let (d0, d1) = (self.slopes[j], self.slopes[j + 1]);
        let h = self.step;
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * s0
            + (t3 - 2.0 * t2 + t) * h * d0
            + (-2.0 * t3 + 3.0 * t2) * s1
            + (t3 - t2) * h * d1
    }

    /// `s'(eta)`, clamped to the boundary slope outside the grid (zero in
    /// the floored region).
    pub fn deriv(&self, eta: f64) -> f64 {
        if eta < self.eta_lo {
            let v = self.values[0] + self.slopes[0] * (eta - self.eta_lo);
            return if v > 0.0 { self.slopes[0] } else { 0.0 };
        }
        if eta > self.eta_hi {
            return self.slopes[self.values.len() - 1];
        }
        let (j, t) = self.segment(eta);
        let (s0, s1) = (self.values[j], self.values[j + 1]);
        let (d0, d1) = (self.slopes[j], self.slopes[j + 1]);
        let h = self.step;
        let t2 = t * t;
        ((6.0 * t2 - 6.0 * t) * (s0 - s1) / h)
            + (3.0 * t2 - 4.0 * t + 1.0) * d0
            + (3.0 * t2 - 2.0 * t) * d1
    }

    /// `s''(eta)`; zero outside the grid.
    pub fn second(&self, eta: f64) -> f64 {
        if eta < self.eta_lo || eta > self.eta_hi {
            return 0.0;
        }
        let (j, t) = self.segment(eta);
        let (s0, s1) = (self.values[j], self.values[j + 1]);
        let (d0, d1) = (self.slopes[j], self.slopes[j + 1]);
        let h = self.step;
        ((12.0 * t - 6.0) * (s0 - s1) / (h * h))
            + (6.0 * t - 4.0) * d0 / h
            + (6.0 * t - 2.0) * d1 / h
    }

    /// Inverse of the monotone interpolant: the `eta` with `s(eta) = target`,
    /// clamped to the grid range.
    pub fn inverse(&self, target: f64) -> f64 {
        let last = self.values.len() - 1;
        if target <= self.values[0] {
            return self.eta_lo;
        }
        if target >= self.values[last] {
            return self.eta_hi;
        }
        let (mut lo, mut hi) = (self.eta_lo, self.eta_hi);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.value(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-13 * (1.0 + lo.abs()) {
                break;
            }
        }
        0.5 * (lo + hi)
    }
}

/// Builds the `s(eta)` table for a family/rho pair.
///
/// Derivatives are centered finite differences of half-step 1e-5 on the
/// exact `m_value`; monotonicity of the tabulated values and positivity of
/// the slopes are enforced.
pub fn build_m_table<F: GlmFamily>(
    family: &F,
    rho: &RhoFunction,
    eta_range: (f64, f64),
    grid_size: usize,
) -> Result<MFunctionTable> {
    let (lo, hi) = eta_range;
    if grid_size < 200 {
        return Err(MtError::Config(format!(
            "m table needs at least 200 nodes, got {grid_size}"
        )));
    }
    if !(lo <= -10.0 && hi >= 10.0) {
        return Err(MtError::Config(
            "m table range must cover [-10, 10]".into(),
        ));
    }
    let step = (hi - lo) / (grid_size - 1) as f64;
    let h = 1e-5;

    let nodes = crate::exec::map_indexed(grid_size, |j| {
        let eta = lo + step * j as f64;
        let m0 = m_value(family, eta.exp(), rho)?;
        let mp = m_value(family, (eta + h).exp(), rho)?;
        let mm = m_value(family, (eta - h).exp(), rho)?;
        Ok::<_, MtError>((m0, (mp - mm) / (2.0 * h), (mp - 2.0 * m0 + mm) / (h * h)))
    });

    let mut values = Vec::with_capacity(grid_size);
    let mut slopes = Vec::with_capacity(grid_size);
    let mut curvatures = Vec::with_capacity(grid_size);
    for node in nodes {
        let (v, d, c) = node?;
        values.push(v);
        slopes.push(d);
        curvatures.push(c);
    }

    for j in 1..grid_size {
        if values[j] <= values[j - 1] {
            return Err(MtError::AssumptionViolation(format!(
                "tabulated m is not strictly increasing near eta = {}",
                lo + step * j as f64
            )));
        }
    }
    if slopes.iter().any(|&d| d <= 0.0) {
        return Err(MtError::AssumptionViolation(
            "tabulated m has a non-positive slope".into(),
        ));
    }

    Ok(MFunctionTable {
        eta_lo: lo,
        eta_hi: hi,
        step,
        values,
        slopes,
        curvatures,
    })
}

/// Default tabulation range and size for the Poisson family.
pub const DEFAULT_ETA_RANGE: (f64, f64) = (-12.0, 12.0);
pub const DEFAULT_GRID_SIZE: usize = 2001;

/// Returns the default-range Poisson table for `rho`, built once per
/// process and shared.
pub fn poisson_table_cached(rho: &RhoFunction) -> Result<Arc<MFunctionTable>> {
    static CACHE: OnceLock<Mutex<HashMap<(u8, u64), Arc<MFunctionTable>>>> = OnceLock::new();
    let key = (rho.kind_id(), rho.tuning().to_bits());
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(hit) = cache.lock().unwrap().get(&key) {
        return Ok(hit.clone());
    }
    let table = Arc::new(build_m_table(
        &Poisson,
        rho,
        DEFAULT_ETA_RANGE,
        DEFAULT_GRID_SIZE,
    )?);
    cache.lock().unwrap().insert(key, table.clone());
    Ok(table)
}

/// Signed square root of the per-observation Poisson deviance contribution.
pub fn poisson_deviance_residual(y: f64, mu: f64) -> Result<f64> {
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(MtError::Domain(format!(
            "deviance residual needs mu > 0, got {mu}"
        )));
    }
    if y < 0.0 || y.fract() != 0.0 {
        return Err(MtError::Domain(format!(
            "deviance residual needs an integer count, got {y}"
        )));
    }
    let dev = if y == 0.0 {
        2.0 * mu
    } else {
        2.0 * (y * (y / mu).ln() - (y - mu))
    };
    Ok((y - mu).signum() * dev.max(0.0).sqrt())
}
