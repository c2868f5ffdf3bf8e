//! Deterministic robust starting values: penalized LST fits, leave-one-out
//! sensitivity vectors, principal sensitivity components, candidate
//! generation and trimming, in two stages.
//!
//! Stage 1 searches a deterministic candidate set built from the principal
//! directions of the leave-one-out fitted-value changes and keeps the
//! candidate with the smallest penalized MT objective; stage 2 trims
//! observations that sit outside a central quantile band of their fitted
//! distribution, refits, and re-admits the ones the refit can explain. The
//! output is the recommended IRWLS starting point. Nothing here is random:
//! identical inputs give bit-identical candidates and selections.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::data::Dataset;
use crate::error::MtError;
use crate::exec;
use crate::families::{poisson_table_cached, GlmFamily, Poisson};
use crate::penalties::PenaltySpec;
use crate::robust_loss::{MtObjective, RhoFunction};
use crate::solver::{irwls_fit, FitResult, SolverConfig};
use crate::Result;

/// Knobs for the two-stage initializer.
#[derive(Debug, Clone, Copy)]
pub struct InitConfig {
    /// Trimming constant for the central quantile band.
    pub alpha_trim: f64,
    /// Number of principal sensitivity components; defaults to
    /// `min(n, p, 10)`.
    pub components: Option<usize>,
    /// Stage-1 iteration cap.
    pub max_iters: usize,
    /// Stage-1 convergence tolerance on the selected coefficients.
    pub tol: f64,
    /// Rho used by the candidate-selection MT objective.
    pub rho: RhoFunction,
    pub solver: SolverConfig,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            alpha_trim: 0.05,
            components: None,
            max_iters: 10,
            tol: 1e-6,
            rho: RhoFunction::default_quartic(),
            solver: SolverConfig::default(),
        }
    }
}

impl InitConfig {
    fn validate(&self) -> Result<()> {
        if !(self.alpha_trim > 0.0 && self.alpha_trim < 0.5) {
            return Err(MtError::Config(format!(
                "trimming constant must lie in (0, 0.5), got {}",
                self.alpha_trim
            )));
        }
        if self.max_iters == 0 {
            return Err(MtError::Config(
                "stage-1 needs at least one iteration".into(),
            ));
        }
        Ok(())
    }

    fn q_for(&self, data: &Dataset) -> usize {
        self.components
            .unwrap_or_else(|| data.n().min(data.p()).min(10))
            .min(data.n())
    }
}

/// Leave-one-out sensitivity decomposition: the `n x n` sensitivity matrix,
/// its leading right singular directions and the component scores.
#[derive(Debug, Clone)]
pub struct SensitivityDecomposition {
    /// Row `j` holds the change of all fitted transforms when row `j` is
    /// left out.
    pub r: DMatrix<f64>,
    /// Orthonormal directions, ordered by explained sensitivity.
    pub v: Vec<DVector<f64>>,
    /// Scores `z_i = R v_i`; entry `j` measures how much leaving out
    /// observation `j` moves the fit along direction `i`.
    pub z: Vec<DVector<f64>>,
    /// Leave-one-out refits that failed to converge; their sensitivity rows
    /// are zero.
    pub failed: Vec<usize>,
}

/// Penalized LST fit (square-loss rho) on a row subset, started at the
/// subset's intercept-only transform fit.
pub fn penalized_lst_fit(
    data: &Dataset,
    spec: &PenaltySpec,
    subset: &[usize],
    solver: &SolverConfig,
) -> Result<FitResult> {
    let sub = data.subset(subset)?;
    lst_fit_from(&sub, spec, None, solver)
}

/// Penalized LST fit on an already materialized dataset, optionally warm
/// started.
fn lst_fit_from(
    data: &Dataset,
    spec: &PenaltySpec,
    start: Option<&DVector<f64>>,
    solver: &SolverConfig,
) -> Result<FitResult> {
    let sq = RhoFunction::square();
    let table = poisson_table_cached(&sq)?;
    let start = match start {
        Some(b) => b.clone(),
        None => {
            let mean_t = data.y().iter().map(|&y| y.sqrt()).sum::<f64>() / data.n() as f64;
            let mut b = DVector::zeros(data.p() + 1);
            b[0] = table.inverse(mean_t);
            b
        }
    };
    let obj = MtObjective::new(data, table, sq, Some(*spec));
    irwls_fit(&obj, &start, solver)
}

/// Leading `q` right singular directions of `r` with their scores, by
/// subspace iteration with a Rayleigh-Ritz finish. Deterministic: fixed
/// internal seed, fixed stopping rule, signs normalized.
pub fn principal_components(
    r: &DMatrix<f64>,
    q: usize,
) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
    let n = r.ncols();
    let q = q.min(n).min(r.nrows());
    if q == 0 {
        return (Vec::new(), Vec::new());
    }
    let mut rng = ChaCha12Rng::seed_from_u64(0x9e37_79b9_7f4a_7c15);
    let normal = rand_distr::Normal::new(0.0, 1.0).unwrap();
    let mut basis = DMatrix::from_fn(n, q, |_, _| rng.sample::<f64, _>(normal));
    orthonormalize(&mut basis);

    let mut last_lams = vec![f64::INFINITY; q];
    for _ in 0..300 {
        let w = r * &basis;
        let lams: Vec<f64> = (0..q).map(|i| w.column(i).norm_squared()).collect();
        let mut next = r.transpose() * &w;
        orthonormalize(&mut next);
        basis = next;
        let scale = lams.iter().cloned().fold(1e-300, f64::max);
        let drift = lams
            .iter()
            .zip(&last_lams)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if drift <= 1e-11 * scale {
            break;
        }
        last_lams = lams;
    }

    // Rayleigh-Ritz: diagonalize the projected problem.
    let w = r * &basis;
    let m = w.transpose() * &w;
    let eig = nalgebra::SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..q).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap()
            .then(a.cmp(&b))
    });

    let mut vs = Vec::with_capacity(q);
    let mut zs = Vec::with_capacity(q);
    for &idx in &order {
        let mut v: DVector<f64> = &basis * eig.eigenvectors.column(idx);
        let nrm = v.norm();
        if nrm > 0.0 {
            v /= nrm;
        }
        // Sign convention: the entry of largest magnitude is positive.
        let mut lead = 0;
        for i in 1..n {
            if v[i].abs() > v[lead].abs() {
                lead = i;
            }
        }
        if v[lead] < 0.0 {
            v = -v;
        }
        zs.push(r * &v);
        vs.push(v);
    }
    (vs, zs)
}

fn orthonormalize(m: &mut DMatrix<f64>) {
    // Modified Gram-Schmidt; deterministic and adequate for thin bases.
    let cols = m.ncols();
    for j in 0..cols {
        for i in 0..j {
            let proj = m.column(i).dot(&m.column(j));
            let prev = m.column(i).clone_owned();
            m.column_mut(j).axpy(-proj, &prev, 1.0);
        }
        let nrm = m.column(j).norm();
        if nrm > 1e-300 {
            m.column_mut(j).scale_mut(1.0 / nrm);
        }
    }
}

/// Builds the sensitivity decomposition around a converged penalized LST
/// base fit: one warm-started leave-one-out refit per observation.
pub fn sensitivity_components(
    data: &Dataset,
    spec: &PenaltySpec,
    base: &FitResult,
    cfg: &InitConfig,
) -> Result<SensitivityDecomposition> {
    cfg.validate()?;
    let n = data.n();
    let sq = RhoFunction::square();
    let table = poisson_table_cached(&sq)?;
    let t_hat: Vec<f64> = data
        .eta(&base.beta)
        .iter()
        .map(|&e| table.value(e))
        .collect();

    let rows = exec::map_indexed(n, |j| {
        let keep: Vec<usize> = (0..n).filter(|&i| i != j).collect();
        let sub = data.subset(&keep)?;
        let fit = lst_fit_from(&sub, spec, Some(&base.beta), &cfg.solver)?;
        if !fit.converged {
            return Ok(None);
        }
        let eta = data.eta(&fit.beta);
        let row: Vec<f64> = (0..n).map(|i| t_hat[i] - table.value(eta[i])).collect();
        Ok::<_, MtError>(Some(row))
    });

    let mut r = DMatrix::zeros(n, n);
    let mut failed = Vec::new();
    for (j, row) in rows.into_iter().enumerate() {
        match row? {
            Some(vals) => {
                for (i, v) in vals.into_iter().enumerate() {
                    r[(j, i)] = v;
                }
            }
            None => failed.push(j),
        }
    }

    let (v, z) = principal_components(&r, cfg.q_for(data));
    Ok(SensitivityDecomposition { r, v, z, failed })
}

/// Indices kept by the central quantile band `[F^{-1}(a/2), F^{-1}(1-a/2)]`
/// of the fitted distribution at `beta`.
fn band_kept_rows(data: &Dataset, beta: &DVector<f64>, alpha: f64) -> Vec<usize> {
    let eta = data.eta(beta);
    (0..data.n())
        .filter(|&i| {
            let mu = eta[i].clamp(-300.0, 300.0).exp();
            let y = data.y()[i] as u64;
            let lo = Poisson.quantile(alpha / 2.0, mu);
            let hi = Poisson.quantile(1.0 - alpha / 2.0, mu);
            y >= lo && y <= hi
        })
        .collect()
}

/// Half-splits of the working rows ranked by a component score. Ties break
/// by row index, so the candidate sets are reproducible.
fn component_subsets(work: &[usize], score: &DVector<f64>) -> [Vec<usize>; 3] {
    let m = work.len();
    let half = m / 2;
    let keep = m - half;
    let mut by_value: Vec<usize> = (0..m).collect();
    by_value.sort_by(|&a, &b| score[a].partial_cmp(&score[b]).unwrap().then(a.cmp(&b)));
    let mut by_abs: Vec<usize> = (0..m).collect();
    by_abs.sort_by(|&a, &b| {
        score[a]
            .abs()
            .partial_cmp(&score[b].abs())
            .unwrap()
            .then(a.cmp(&b))
    });
    // Drop smallest half / largest half / largest absolute half.
    let drop_smallest: Vec<usize> = by_value[half..].iter().map(|&i| work[i]).collect();
    let drop_largest: Vec<usize> = by_value[..keep].iter().map(|&i| work[i]).collect();
    let drop_abs: Vec<usize> = by_abs[..keep].iter().map(|&i| work[i]).collect();
    [drop_smallest, drop_largest, drop_abs]
}

fn stage1_candidates(
    data: &Dataset,
    spec: &PenaltySpec,
    work: &[usize],
    prev: Option<&DVector<f64>>,
    cfg: &InitConfig,
) -> Result<Vec<DVector<f64>>> {
    let lst = penalized_lst_fit(data, spec, work, &cfg.solver)?;
    let sub = data.subset(work)?;
    let sens = sensitivity_components(&sub, spec, &lst, cfg)?;

    let mut subsets: Vec<Vec<usize>> = Vec::new();
    for z in &sens.z {
        for s in component_subsets(work, z) {
            subsets.push(s);
        }
    }
    let fits = exec::map_indexed(subsets.len(), |i| {
        let sub = data.subset(&subsets[i])?;
        lst_fit_from(&sub, spec, Some(&lst.beta), &cfg.solver)
    });

    let mut out = Vec::with_capacity(subsets.len() + 2);
    out.push(lst.beta.clone());
    out.push(prev.cloned().unwrap_or_else(|| lst.beta.clone()));
    for fit in fits.into_iter().flatten() {
        // Fits that error out (for example a degenerate trimmed design)
        // simply drop from the candidate set.
        out.push(fit.beta);
    }
    Ok(out)
}

/// Stage 1: iterative candidate search for a highly robust, possibly
/// inefficient, estimate.
pub fn stage1(data: &Dataset, spec: &PenaltySpec, cfg: &InitConfig) -> Result<DVector<f64>> {
    cfg.validate()?;
    let mt_table = poisson_table_cached(&cfg.rho)?;
    let obj = MtObjective::new(data, mt_table, cfg.rho, Some(*spec));

    let all: Vec<usize> = (0..data.n()).collect();
    let mut work = all.clone();
    let mut best: Option<(DVector<f64>, f64)> = None;

    for iter in 0..cfg.max_iters {
        if iter > 0 {
            let (beta, _) = best.as_ref().expect("previous best exists");
            work = band_kept_rows(data, beta, cfg.alpha_trim);
            if work.len() < 2 {
                work = all.clone();
            }
        }
        let prev = best.as_ref().map(|(b, _)| b.clone());
        let candidates = stage1_candidates(data, spec, &work, prev.as_ref(), cfg)?;
        if candidates.is_empty() {
            return Err(MtError::InitializationFailure(
                "stage 1 produced no candidates".into(),
            ));
        }
        let mut iter_best: Option<(DVector<f64>, f64)> = None;
        for beta in candidates {
            let val = obj.loss(&beta)?;
            let better = match &iter_best {
                Some((_, cur)) => val < *cur,
                None => true,
            };
            if better {
                iter_best = Some((beta, val));
            }
        }
        let (beta_k, val_k) = iter_best.expect("nonempty candidates");
        let done = match &best {
            Some((prev_beta, prev_val)) => {
                let change = (&beta_k - prev_beta).amax() / prev_beta.amax().max(1.0);
                change <= cfg.tol || val_k >= *prev_val - 1e-15
            }
            None => false,
        };
        if best.as_ref().map_or(true, |(_, v)| val_k <= *v) {
            best = Some((beta_k, val_k));
        }
        if done {
            break;
        }
    }
    Ok(best.expect("at least one iteration ran").0)
}

/// Stage 2: trim by the quantile band at the stage-1 fit, refit, re-admit
/// rows the refit explains, and produce the final penalized LST start.
pub fn stage2(
    data: &Dataset,
    spec: &PenaltySpec,
    beta_stage1: &DVector<f64>,
    cfg: &InitConfig,
) -> Result<DVector<f64>> {
    cfg.validate()?;
    if beta_stage1.iter().any(|v| !v.is_finite()) {
        return Err(MtError::Domain("non-finite stage-1 coefficients".into()));
    }
    let kept = band_kept_rows(data, beta_stage1, cfg.alpha_trim);
    if kept.is_empty() {
        return Err(MtError::InitializationFailure(
            "stage-2 band deleted every observation".into(),
        ));
    }
    if kept.len() < 2 {
        return Err(MtError::InitializationFailure(
            "stage-2 band left fewer than two observations".into(),
        ));
    }
    let fit2 = penalized_lst_fit(data, spec, &kept, &cfg.solver)?;

    // Re-test the deleted rows against the refit bands and restore the ones
    // now inside.
    let mut kept_mask = vec![false; data.n()];
    for &i in &kept {
        kept_mask[i] = true;
    }
    let eta2 = data.eta(&fit2.beta);
    let mut final_rows = kept.clone();
    for i in 0..data.n() {
        if kept_mask[i] {
            continue;
        }
        let mu = eta2[i].clamp(-300.0, 300.0).exp();
        let y = data.y()[i] as u64;
        let lo = Poisson.quantile(cfg.alpha_trim / 2.0, mu);
        let hi = Poisson.quantile(1.0 - cfg.alpha_trim / 2.0, mu);
        if y >= lo && y <= hi {
            final_rows.push(i);
        }
    }
    final_rows.sort_unstable();
    let final_fit = penalized_lst_fit(data, spec, &final_rows, &cfg.solver)?;
    Ok(final_fit.beta)
}

/// The full two-stage initializer; the result is the recommended IRWLS
/// starting point.
pub fn pena_yohai_init(
    data: &Dataset,
    spec: &PenaltySpec,
    cfg: &InitConfig,
) -> Result<DVector<f64>> {
    let s1 = stage1(data, spec, cfg)?;
    stage2(data, spec, &s1, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::penalties::PenaltyKind;
    use nalgebra::DMatrix;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn poisson_sample(n: usize, p: usize, beta: &[f64], seed: u64) -> Dataset {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let normal = rand_distr::Normal::new(0.0, 1.0).unwrap();
        let mut z = DMatrix::zeros(n, p);
        for i in 0..n {
            for j in 0..p {
                z[(i, j)] = rng.sample::<f64, _>(normal) * 0.7;
            }
        }
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let mut eta = beta[0];
            for j in 0..p {
                eta += beta[j + 1] * z[(i, j)];
            }
            y.push(rng.sample(rand_distr::Poisson::new(eta.exp()).unwrap()));
        }
        Dataset::from_covariates(z, y).unwrap()
    }

    /// Sample from slope-one truth with `m` rows replaced by leverage points
    /// carrying a wild response.
    fn contaminated_sample(
        n: usize,
        p: usize,
        m: usize,
        y0: f64,
        seed: u64,
    ) -> (Dataset, Vec<usize>) {
        let mut beta = vec![0.0; p + 1];
        beta[1] = 1.0;
        let clean = poisson_sample(n, p, &beta, seed);
        let mut x = clean.design().clone();
        let mut y = clean.y().to_vec();
        let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0xdead);
        let mut idx: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = rng.random_range(0..=i);
            idx.swap(i, j);
        }
        let outliers: Vec<usize> = idx[..m].to_vec();
        for &i in &outliers {
            for j in 1..=p {
                x[(i, j)] = if j == 1 { 3.0 } else { 0.0 };
            }
            y[i] = y0;
        }
        (Dataset::from_design(x, y).unwrap(), outliers)
    }

    #[test]
    fn lst_fit_rejects_tiny_subsets() {
        let data = poisson_sample(10, 1, &[0.2, 0.5], 3);
        let spec = PenaltySpec::lasso(0.01);
        assert!(penalized_lst_fit(&data, &spec, &[0], &SolverConfig::default()).is_err());
    }

    #[test]
    fn lst_fit_invariant_under_row_duplication() {
        let data = poisson_sample(25, 2, &[0.1, 0.6, -0.3], 5);
        let spec = PenaltySpec::elastic_net(0.02, 0.5).unwrap();
        let solver = SolverConfig::default();
        let all: Vec<usize> = (0..25).collect();
        let doubled: Vec<usize> = all.iter().chain(all.iter()).cloned().collect();
        let single = penalized_lst_fit(&data, &spec, &all, &solver).unwrap();
        let duped = penalized_lst_fit(&data, &spec, &doubled, &solver).unwrap();
        assert!((single.beta - duped.beta).amax() < 1e-10);
    }

    #[test]
    fn lst_fit_on_clean_rows_recovers_truth() {
        let (data, outliers) = contaminated_sample(120, 3, 12, 400.0, 11);
        let clean_rows: Vec<usize> = (0..120).filter(|i| !outliers.contains(i)).collect();
        let spec = PenaltySpec::lasso(0.005);
        let fit = penalized_lst_fit(&data, &spec, &clean_rows, &SolverConfig::default()).unwrap();
        // Seed-fixed statistical check: slope near 1, intercept near 0.
        assert!((fit.beta[1] - 1.0).abs() < 0.25, "slope off: {}", fit.beta[1]);
        assert!(fit.beta[0].abs() < 0.25, "intercept off: {}", fit.beta[0]);
    }

    #[test]
    fn rank_one_sensitivity_matrix_recovers_its_row() {
        let mut r = DMatrix::zeros(6, 6);
        for (i, v) in [3.0, -1.0, 2.0, 0.0, 0.5, -0.25].iter().enumerate() {
            r[(2, i)] = *v;
        }
        let (vs, zs) = principal_components(&r, 2);
        let row = r.row(2).transpose();
        let unit = &row / row.norm();
        // Leading direction is the nonzero row, up to sign normalization.
        let dot = vs[0].dot(&unit).abs();
        assert!((dot - 1.0).abs() < 1e-10);
        // Scores: only entry 2 is nonzero, with magnitude ||row||.
        assert!((zs[0][2].abs() - row.norm()).abs() < 1e-10);
        for j in 0..6 {
            if j != 2 {
                assert!(zs[0][j].abs() < 1e-10);
            }
        }
    }

    #[test]
    fn principal_components_match_full_svd() {
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        let normal = rand_distr::Normal::new(0.0, 1.0).unwrap();
        let r = DMatrix::from_fn(24, 24, |_, _| rng.sample::<f64, _>(normal));
        let (vs, zs) = principal_components(&r, 3);
        let svd = r.clone().svd(true, true);
        let mut sv: Vec<f64> = svd.singular_values.iter().cloned().collect();
        sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
        for i in 0..3 {
            assert!(
                (zs[i].norm() - sv[i]).abs() < 1e-8,
                "singular value {i}: {} vs {}",
                zs[i].norm(),
                sv[i]
            );
        }
        // Orthonormality.
        for a in 0..3 {
            assert!((vs[a].norm() - 1.0).abs() < 1e-10);
            for b in a + 1..3 {
                assert!(vs[a].dot(&vs[b]).abs() < 1e-8);
            }
        }
        // Ordering by explained sensitivity.
        assert!(zs[0].norm_squared() >= zs[1].norm_squared());
        assert!(zs[1].norm_squared() >= zs[2].norm_squared());
    }

    #[test]
    fn clean_data_sensitivity_is_not_concentrated() {
        let data = poisson_sample(40, 2, &[0.3, 0.5, -0.4], 23);
        let spec = PenaltySpec::lasso(0.01);
        let cfg = InitConfig::default();
        let base =
            penalized_lst_fit(&data, &spec, &(0..40).collect::<Vec<_>>(), &cfg.solver).unwrap();
        let sens = sensitivity_components(&data, &spec, &base, &cfg).unwrap();
        assert!(sens.failed.is_empty());
        let z1 = &sens.z[0];
        let max_sq = z1.iter().map(|v| v * v).fold(0.0, f64::max);
        assert!(max_sq / z1.norm_squared() < 0.5);
    }

    #[test]
    fn planted_outlier_dominates_first_component() {
        let mut data = poisson_sample(30, 2, &[0.4, 0.6, -0.2], 29);
        let mut y = data.y().to_vec();
        let mut x = data.design().clone();
        y[7] = 600.0;
        x[(7, 1)] = 2.5;
        data = Dataset::from_design(x, y).unwrap();
        let spec = PenaltySpec::lasso(0.01);
        let cfg = InitConfig::default();
        let base =
            penalized_lst_fit(&data, &spec, &(0..30).collect::<Vec<_>>(), &cfg.solver).unwrap();
        let sens = sensitivity_components(&data, &spec, &base, &cfg).unwrap();
        let z1 = &sens.z[0];
        let mut argmax = 0;
        for j in 1..30 {
            if z1[j].abs() > z1[argmax].abs() {
                argmax = j;
            }
        }
        assert_eq!(argmax, 7);
    }

    #[test]
    fn stage1_candidate_count_is_3q_plus_2() {
        let data = poisson_sample(10, 2, &[0.2, 0.4, 0.0], 31);
        let spec = PenaltySpec::lasso(0.02);
        let cfg = InitConfig::default();
        let q = cfg.q_for(&data);
        let work: Vec<usize> = (0..10).collect();
        let cands = stage1_candidates(&data, &spec, &work, None, &cfg).unwrap();
        assert_eq!(cands.len(), 3 * q + 2);
    }

    #[test]
    fn stage1_no_worse_than_full_data_lst() {
        let data = poisson_sample(60, 3, &[0.2, 0.8, 0.0, -0.5], 37);
        let spec = PenaltySpec::elastic_net(0.02, 0.8).unwrap();
        let cfg = InitConfig::default();
        let beta1 = stage1(&data, &spec, &cfg).unwrap();
        let lst =
            penalized_lst_fit(&data, &spec, &(0..60).collect::<Vec<_>>(), &cfg.solver).unwrap();
        let table = poisson_table_cached(&cfg.rho).unwrap();
        let obj = MtObjective::new(&data, table, cfg.rho, Some(spec));
        assert!(obj.loss(&beta1).unwrap() <= obj.loss(&lst.beta).unwrap() + 1e-12);
    }

    #[test]
    fn stage1_resists_contamination_where_naive_lst_breaks() {
        let (data, _) = contaminated_sample(100, 5, 10, 400.0, 41);
        // Lambda in the regime where the clean basin dominates the
        // penalized objective; the naive full-data LST is still captured.
        let spec = PenaltySpec::lasso(0.05);
        let cfg = InitConfig::default();
        let mut truth = DVector::zeros(6);
        truth[1] = 1.0;
        let beta1 = stage1(&data, &spec, &cfg).unwrap();
        let lst =
            penalized_lst_fit(&data, &spec, &(0..100).collect::<Vec<_>>(), &cfg.solver).unwrap();
        let err_robust = (&beta1 - &truth).norm();
        let err_naive = (&lst.beta - &truth).norm();
        assert!(err_robust < 1.0, "robust stage-1 error {err_robust}");
        assert!(err_naive > 1.0, "naive LST error {err_naive}");
    }

    #[test]
    fn stage2_with_vanishing_trim_returns_full_fit() {
        let data = poisson_sample(40, 2, &[0.3, 0.5, 0.2], 43);
        let spec = PenaltySpec::lasso(0.01);
        let cfg = InitConfig {
            alpha_trim: 1e-12,
            ..InitConfig::default()
        };
        let s1 = stage1(&data, &spec, &cfg).unwrap();
        let s2 = stage2(&data, &spec, &s1, &cfg).unwrap();
        let full =
            penalized_lst_fit(&data, &spec, &(0..40).collect::<Vec<_>>(), &cfg.solver).unwrap();
        assert_eq!(s2, full.beta);
    }

    #[test]
    fn stage2_keeps_planted_extremes_deleted() {
        let mut data = poisson_sample(80, 2, &[0.5, 0.6, -0.3], 47);
        let mut y = data.y().to_vec();
        // Plant responses far beyond the upper tail of their own mean.
        for &i in &[5usize, 22, 57] {
            y[i] = 900.0;
        }
        data = Dataset::from_design(data.design().clone(), y).unwrap();
        let spec = PenaltySpec::lasso(0.01);
        let cfg = InitConfig::default();
        let s1 = stage1(&data, &spec, &cfg).unwrap();
        let s2 = stage2(&data, &spec, &s1, &cfg).unwrap();
        let eta = data.eta(&s2);
        for &i in &[5usize, 22, 57] {
            let mu = eta[i].exp();
            let hi = Poisson.quantile(1.0 - cfg.alpha_trim / 2.0, mu);
            assert!(
                (data.y()[i] as u64) > hi,
                "planted row {i} sits inside the final band"
            );
        }
    }

    #[test]
    fn initializer_is_deterministic() {
        let (data, _) = contaminated_sample(60, 4, 6, 300.0, 53);
        let spec = PenaltySpec::lasso(0.02);
        let cfg = InitConfig::default();
        let a = pena_yohai_init(&data, &spec, &cfg).unwrap();
        let b = pena_yohai_init(&data, &spec, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn robust_start_beats_naive_start_under_contamination() {
        for seed in [61u64, 67, 71] {
            let (data, _) = contaminated_sample(80, 3, 8, 400.0, seed);
            let spec = PenaltySpec::new(PenaltyKind::Lasso, 0.05, 1.0).unwrap();
            let cfg = InitConfig::default();
            let table = poisson_table_cached(&cfg.rho).unwrap();
            let obj = MtObjective::new(&data, table, cfg.rho, Some(spec));
            let robust_start = pena_yohai_init(&data, &spec, &cfg).unwrap();
            let naive =
                penalized_lst_fit(&data, &spec, &(0..80).collect::<Vec<_>>(), &cfg.solver)
                    .unwrap();
            let from_robust = irwls_fit(&obj, &robust_start, &cfg.solver).unwrap();
            let from_naive = irwls_fit(&obj, &naive.beta, &cfg.solver).unwrap();
            assert!(
                from_robust.objective <= from_naive.objective + 1e-10,
                "seed {seed}: {} vs {}",
                from_robust.objective,
                from_naive.objective
            );
        }
    }
}
