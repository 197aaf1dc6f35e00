//! Synthetic problems with exactly known constants.
//!
//! The quadratic generator hands every worker `f_m(θ) = ½θᵀA_mθ − b_mᵀθ`
//! where all `A_m` share one seeded orthogonal eigenbasis. Worker `m` puts
//! its requested smoothness `L_m` on the first basis vector and `μ/M` on the
//! last, so `λ_max(A_m) = L_m` exactly, the global sum has `λ_max = Σ L_m`
//! and `λ_min = μ` exactly, and the optimum solves `(ΣA)θ* = Σb` in closed
//! form.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::{one_hot, DataError, Dataset};
use crate::losses::QuadraticTerm;

/// A fully specified synthetic quadratic problem.
#[derive(Debug, Clone)]
pub struct QuadraticProblem {
    pub terms: Vec<QuadraticTerm>,
    pub optimum: Vec<f64>,
    pub fstar: f64,
    /// `λ_max(Σ A_m)`, exact by construction.
    pub smoothness: f64,
    /// `λ_min(Σ A_m)`, exact by construction.
    pub strong_convexity: f64,
    /// The requested per-worker `L_m`.
    pub worker_smoothness: Vec<f64>,
}

impl QuadraticProblem {
    pub fn dim(&self) -> usize {
        self.optimum.len()
    }

    pub fn global_loss(&self, params: &[f64]) -> f64 {
        self.terms.iter().map(|t| t.loss(params)).sum()
    }
}

/// Builds per-worker `(A_m, b_m)` with `λ_max(A_m) = smoothness[m]` exactly
/// and `λ_min(Σ A_m) = mu` exactly (for `p ≥ 2`).
pub fn synthetic_quadratic(
    p: usize,
    workers: usize,
    smoothness: &[f64],
    mu: f64,
    seed: u64,
) -> Result<QuadraticProblem, DataError> {
    if p == 0 || workers == 0 {
        return Err(DataError::InfeasibleSpectrum(
            "dimension and worker count must be positive".into(),
        ));
    }
    if smoothness.len() != workers {
        return Err(DataError::InfeasibleSpectrum(format!(
            "got {} smoothness values for {} workers",
            smoothness.len(),
            workers
        )));
    }
    if mu.is_nan() || mu <= 0.0 {
        return Err(DataError::InfeasibleSpectrum(format!(
            "strong convexity mu = {mu} must be positive"
        )));
    }
    let floor = mu / workers as f64;
    for (m, &l) in smoothness.iter().enumerate() {
        if l.is_nan() || l < floor {
            return Err(DataError::InfeasibleSpectrum(format!(
                "worker {m}: L = {l} is below mu/M = {floor}"
            )));
        }
    }

    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let basis = seeded_orthogonal(p, &mut rng);

    let mut terms = Vec::with_capacity(workers);
    for &l in smoothness {
        let mut spectrum = vec![0.0; p];
        spectrum[0] = l;
        if p > 1 {
            spectrum[p - 1] = floor;
            // Interior eigenvalues stay below floor + 0.75·(L − floor): the
            // spectral gap keeps the top eigenvalue uniquely at L_m and the
            // power-iteration check fast.
            let ceiling = floor + 0.75 * (l - floor);
            for value in spectrum.iter_mut().take(p - 1).skip(1) {
                *value = rng.gen_range(floor..=ceiling);
            }
        }
        let matrix = from_spectrum(&basis, &spectrum);
        let rhs = Array1::from_shape_fn(p, |_| rng.gen_range(-1.0..1.0));
        terms.push(QuadraticTerm::new(matrix, rhs));
    }

    // Closed-form optimum: (ΣA)θ* = Σb.
    let mut a_sum = Array2::<f64>::zeros((p, p));
    let mut b_sum = Array1::<f64>::zeros(p);
    for term in &terms {
        a_sum += &term.matrix;
        b_sum += &term.rhs;
    }
    let optimum = solve_linear(&a_sum, &b_sum);
    let theta = Array1::from_vec(optimum.clone());
    let fstar = 0.5 * theta.dot(&a_sum.dot(&theta)) - b_sum.dot(&theta);

    let global_l: f64 = smoothness.iter().sum();
    let global_mu = if p > 1 { mu } else { global_l };
    Ok(QuadraticProblem {
        terms,
        optimum,
        fstar,
        smoothness: global_l,
        strong_convexity: global_mu,
        worker_smoothness: smoothness.to_vec(),
    })
}

/// Seeded random classification data with a planted linear teacher, so
/// logistic regression on it is a meaningful (and strongly convex, once
/// regularized) optimization task.
pub fn synthetic_classification(n: usize, features: usize, classes: usize, seed: u64) -> Dataset {
    assert!(n >= 1 && features >= 1 && classes >= 2);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let x = Array2::from_shape_fn((n, features), |_| rng.gen_range(-1.0..1.0));
    let teacher = Array2::from_shape_fn((classes, features), |_| rng.gen_range(-2.0..2.0));
    let logits = x.dot(&teacher.t());
    let mut labels = Vec::with_capacity(n);
    for row in logits.rows() {
        let noisy: Vec<f64> = row.iter().map(|v| v + rng.gen_range(-0.3..0.3)).collect();
        let mut best = 0;
        for (i, v) in noisy.iter().enumerate() {
            if *v > noisy[best] {
                best = i;
            }
        }
        labels.push(best);
    }
    Dataset {
        features: x,
        labels: one_hot(&labels, classes),
        name: format!("synthetic-classification-n{n}-f{features}-c{classes}"),
        classes,
    }
}

/// Random square matrix orthonormalized by modified Gram-Schmidt with one
/// re-orthogonalization pass. Columns are the shared eigenbasis.
fn seeded_orthogonal(p: usize, rng: &mut ChaCha20Rng) -> Array2<f64> {
    let mut basis = Array2::from_shape_fn((p, p), |_| rng.gen_range(-1.0..1.0));
    for col in 0..p {
        for _pass in 0..2 {
            for prev in 0..col {
                let dot: f64 = (0..p).map(|r| basis[(r, col)] * basis[(r, prev)]).sum();
                for r in 0..p {
                    basis[(r, col)] -= dot * basis[(r, prev)];
                }
            }
        }
        let norm: f64 = (0..p)
            .map(|r| basis[(r, col)] * basis[(r, col)])
            .sum::<f64>()
            .sqrt();
        // A random matrix is almost surely full rank; renormalize anyway.
        let inv = if norm > 0.0 { 1.0 / norm } else { 1.0 };
        for r in 0..p {
            basis[(r, col)] *= inv;
        }
    }
    basis
}

/// `U diag(s) Uᵀ`, symmetrized to absorb rounding.
fn from_spectrum(basis: &Array2<f64>, spectrum: &[f64]) -> Array2<f64> {
    let p = spectrum.len();
    let mut scaled = basis.clone();
    for (col, &s) in spectrum.iter().enumerate() {
        for r in 0..p {
            scaled[(r, col)] *= s;
        }
    }
    let a = scaled.dot(&basis.t());
    let mut sym = Array2::zeros((p, p));
    for i in 0..p {
        for j in 0..p {
            sym[(i, j)] = 0.5 * (a[(i, j)] + a[(j, i)]);
        }
    }
    sym
}

/// Dense Gaussian elimination with partial pivoting; the systems here are
/// tiny and well conditioned.
pub(crate) fn solve_linear(matrix: &Array2<f64>, rhs: &Array1<f64>) -> Vec<f64> {
    let n = rhs.len();
    let mut a = matrix.clone();
    let mut b = rhs.to_vec();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| {
                a[(i, col)]
                    .abs()
                    .partial_cmp(&a[(j, col)].abs())
                    .expect("finite matrix entries")
            })
            .expect("nonempty range");
        if pivot != col {
            for j in 0..n {
                let tmp = a[(col, j)];
                a[(col, j)] = a[(pivot, j)];
                a[(pivot, j)] = tmp;
            }
            b.swap(col, pivot);
        }
        let diag = a[(col, col)];
        assert!(diag != 0.0, "singular matrix in synthetic problem");
        for row in col + 1..n {
            let factor = a[(row, col)] / diag;
            if factor == 0.0 {
                continue;
            }
            for j in col..n {
                a[(row, j)] -= factor * a[(col, j)];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let mut acc = b[col];
        for j in col + 1..n {
            acc -= a[(col, j)] * x[j];
        }
        x[col] = acc / a[(col, col)];
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::WorkerObjective;

    #[test]
    fn per_worker_top_eigenvalue_matches_request() {
        let problem = synthetic_quadratic(2, 3, &[1.0, 1.0, 1.0], 0.3, 7).unwrap();
        for term in &problem.terms {
            let obj = WorkerObjective::Quadratic(term.clone());
            let l = obj.smoothness_constant().unwrap();
            assert!((l - 1.0).abs() < 1e-9, "λ_max = {l}");
        }
    }

    #[test]
    fn varied_spectra_are_hit_exactly() {
        let requested = [0.1, 0.1, 1.0, 10.0];
        let problem = synthetic_quadratic(16, 4, &requested, 0.2, 3).unwrap();
        for (term, &want) in problem.terms.iter().zip(&requested) {
            let obj = WorkerObjective::Quadratic(term.clone());
            let l = obj.smoothness_constant().unwrap();
            assert!(
                (l - want).abs() < 1e-9 * want.max(1.0),
                "λ_max = {l}, want {want}"
            );
        }
        assert_eq!(problem.smoothness, 11.2);
        assert_eq!(problem.strong_convexity, 0.2);
    }

    #[test]
    fn optimum_solves_the_normal_equations() {
        let problem = synthetic_quadratic(8, 5, &[2.0; 5], 1.0, 11).unwrap();
        let mut a_sum = Array2::<f64>::zeros((8, 8));
        let mut b_sum = Array1::<f64>::zeros(8);
        for t in &problem.terms {
            a_sum += &t.matrix;
            b_sum += &t.rhs;
        }
        let theta = Array1::from_vec(problem.optimum.clone());
        let residual = &a_sum.dot(&theta) - &b_sum;
        let norm: f64 = residual.iter().map(|r| r * r).sum::<f64>().sqrt();
        assert!(norm <= 1e-10, "residual norm {norm}");
    }

    #[test]
    fn fstar_is_a_lower_bound_on_random_points() {
        let problem = synthetic_quadratic(6, 4, &[1.0, 2.0, 3.0, 4.0], 0.8, 13).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(99);
        for _ in 0..100 {
            let theta: Vec<f64> = (0..6).map(|_| rng.gen_range(-3.0..3.0)).collect();
            assert!(problem.global_loss(&theta) >= problem.fstar - 1e-12);
        }
        assert!((problem.global_loss(&problem.optimum) - problem.fstar).abs() < 1e-12);
    }

    #[test]
    fn infeasible_spectrum_is_rejected() {
        assert!(matches!(
            synthetic_quadratic(4, 2, &[0.1, 1.0], 0.5, 0),
            Err(DataError::InfeasibleSpectrum(_))
        ));
        assert!(matches!(
            synthetic_quadratic(4, 2, &[1.0], 0.5, 0),
            Err(DataError::InfeasibleSpectrum(_))
        ));
        assert!(matches!(
            synthetic_quadratic(4, 2, &[1.0, 1.0], 0.0, 0),
            Err(DataError::InfeasibleSpectrum(_))
        ));
    }

    #[test]
    fn generation_is_deterministic_under_seed() {
        let a = synthetic_quadratic(5, 3, &[1.0, 2.0, 3.0], 0.5, 21).unwrap();
        let b = synthetic_quadratic(5, 3, &[1.0, 2.0, 3.0], 0.5, 21).unwrap();
        assert_eq!(a.optimum, b.optimum);
        assert_eq!(a.fstar, b.fstar);
        for (x, y) in a.terms.iter().zip(&b.terms) {
            assert_eq!(x.matrix, y.matrix);
            assert_eq!(x.rhs, y.rhs);
        }
    }

    #[test]
    fn synthetic_classification_is_deterministic_and_one_hot() {
        let a = synthetic_classification(50, 10, 2, 5);
        let b = synthetic_classification(50, 10, 2, 5);
        assert_eq!(a.features, b.features);
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.classes, 2);
        for row in a.labels.rows() {
            assert_eq!(row.sum(), 1.0);
        }
    }
}
