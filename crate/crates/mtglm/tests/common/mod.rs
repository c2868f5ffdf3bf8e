//! Shared oracles for the acceptance suite. Everything here is independent
//! of the solver path it is used to check.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use mtglm::Dataset;

/// Plain Nelder-Mead on a boxed objective; derivative-free.
pub fn nelder_mead<F: Fn(&DVector<f64>) -> f64>(
    f: &F,
    start: &DVector<f64>,
    scale: f64,
    iters: usize,
) -> (DVector<f64>, f64) {
    let dim = start.len();
    let mut simplex: Vec<(DVector<f64>, f64)> = Vec::with_capacity(dim + 1);
    simplex.push((start.clone(), f(start)));
    for j in 0..dim {
        let mut v = start.clone();
        v[j] += scale;
        let val = f(&v);
        simplex.push((v, val));
    }
    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    for _ in 0..iters {
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
        let best = simplex[0].1;
        let worst = simplex[dim].1;
        if (worst - best).abs() < 1e-14 * (1.0 + best.abs()) {
            break;
        }
        let mut centroid = DVector::zeros(dim);
        for (v, _) in simplex.iter().take(dim) {
            centroid += v;
        }
        centroid /= dim as f64;
        let reflected = &centroid + (&centroid - &simplex[dim].0) * alpha;
        let fr = f(&reflected);
        if fr < simplex[0].1 {
            let expanded = &centroid + (&reflected - &centroid) * gamma;
            let fe = f(&expanded);
            simplex[dim] = if fe < fr {
                (expanded, fe)
            } else {
                (reflected, fr)
            };
        } else if fr < simplex[dim - 1].1 {
            simplex[dim] = (reflected, fr);
        } else {
            let contracted = &centroid + (&simplex[dim].0 - &centroid) * rho;
            let fc = f(&contracted);
            if fc < simplex[dim].1 {
                simplex[dim] = (contracted, fc);
            } else {
                let best_point = simplex[0].0.clone();
                for entry in simplex.iter_mut().skip(1) {
                    let shrunk = &best_point + (&entry.0 - &best_point) * sigma;
                    entry.1 = f(&shrunk);
                    entry.0 = shrunk;
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    simplex[0].clone()
}

/// Multi-start Nelder-Mead over the box [-3, 3]^dim: a lattice of starts
/// plus the origin, best final value wins.
pub fn multistart_simplex<F: Fn(&DVector<f64>) -> f64>(f: &F, dim: usize) -> (DVector<f64>, f64) {
    let levels = [-2.0, 0.0, 2.0];
    let mut starts: Vec<DVector<f64>> = vec![DVector::zeros(dim)];
    let combos = levels.len().pow(dim as u32);
    for c in 0..combos {
        let mut v = DVector::zeros(dim);
        let mut rem = c;
        for j in 0..dim {
            v[j] = levels[rem % levels.len()];
            rem /= levels.len();
        }
        starts.push(v);
    }
    let mut best: Option<(DVector<f64>, f64)> = None;
    for s in &starts {
        let coarse = nelder_mead(f, s, 1.0, 400);
        let fine = nelder_mead(f, &coarse.0, 0.05, 400);
        if best.as_ref().map_or(true, |(_, bv)| fine.1 < *bv) {
            best = Some(fine);
        }
    }
    best.expect("at least one start")
}

/// Seeded Poisson regression sample with independent N(0, sd^2) covariates.
pub fn poisson_sample(n: usize, p: usize, beta: &[f64], sd: f64, seed: u64) -> Dataset {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let normal = rand_distr::Normal::new(0.0, 1.0).unwrap();
    let mut z = DMatrix::zeros(n, p);
    for i in 0..n {
        for j in 0..p {
            z[(i, j)] = rng.sample::<f64, _>(normal) * sd;
        }
    }
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let mut eta = beta[0];
        for j in 0..p {
            eta += beta[j + 1] * z[(i, j)];
        }
        let draw: f64 = rng.sample(rand_distr::Poisson::new(eta.exp()).unwrap());
        y.push(draw.round());
    }
    Dataset::from_covariates(z, y).unwrap()
}
