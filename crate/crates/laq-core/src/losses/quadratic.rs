//! Per-worker quadratic objective `f_m(θ) = ½·θᵀA_mθ − b_mᵀθ` with a
//! symmetric PSD matrix, used for the synthetic strongly convex problems
//! where every constant is known exactly.

use ndarray::{Array1, Array2};

use super::power_iteration_top_eigenvalue;

#[derive(Debug, Clone)]
pub struct QuadraticTerm {
    pub matrix: Array2<f64>,
    pub rhs: Array1<f64>,
}

impl QuadraticTerm {
    pub fn new(matrix: Array2<f64>, rhs: Array1<f64>) -> Self {
        assert_eq!(matrix.nrows(), matrix.ncols(), "matrix must be square");
        assert_eq!(matrix.nrows(), rhs.len(), "matrix and rhs disagree");
        QuadraticTerm { matrix, rhs }
    }

    pub fn dim(&self) -> usize {
        self.rhs.len()
    }

    pub fn loss(&self, params: &[f64]) -> f64 {
        let theta = Array1::from_vec(params.to_vec());
        let a_theta = self.matrix.dot(&theta);
        0.5 * theta.dot(&a_theta) - self.rhs.dot(&theta)
    }

    pub fn loss_and_gradient(&self, params: &[f64]) -> (f64, Vec<f64>) {
        let theta = Array1::from_vec(params.to_vec());
        let a_theta = self.matrix.dot(&theta);
        let loss = 0.5 * theta.dot(&a_theta) - self.rhs.dot(&theta);
        let grad = (&a_theta - &self.rhs).to_vec();
        (loss, grad)
    }

    /// Largest eigenvalue of `A`, i.e. the exact Lipschitz constant of the
    /// gradient. Power iteration, relative tolerance 1e−9.
    pub fn smoothness_constant(&self) -> f64 {
        power_iteration_top_eigenvalue(
            self.dim(),
            |v| {
                let x = Array1::from_vec(v.to_vec());
                self.matrix.dot(&x).to_vec()
            },
            1e-9,
        )
    }
}
