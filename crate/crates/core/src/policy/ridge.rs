use alloc::vec;
use alloc::vec::Vec;

use crate::linalg;

/// Regularized regression state `A = lambda I + sum x x^T`, `b = sum x y`.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeArmState {
    dim: usize,
    lambda: f64,
    a: Vec<f64>,
    b: Vec<f64>,
    since: usize,
}

impl RidgeArmState {
    pub fn new(dim: usize, lambda: f64) -> Self {
        let mut a = vec![0.0; dim * dim];
        for i in 0..dim {
            a[i * dim + i] = lambda;
        }
        Self {
            dim,
            lambda,
            a,
            b: vec![0.0; dim],
            since: 1,
        }
    }

    pub fn add(&mut self, x: &[f64], y: f64) {
        linalg::rank_one_update(&mut self.a, self.dim, x, 1.0);
        self.b.iter_mut().zip(x).for_each(|(b, xi)| *b += xi * y);
    }

    pub fn remove(&mut self, x: &[f64], y: f64) {
        linalg::rank_one_update(&mut self.a, self.dim, x, -1.0);
        self.b.iter_mut().zip(x).for_each(|(b, xi)| *b -= xi * y);
    }

    /// Multiplies the data terms by `gamma`, keeping the `lambda I` prior.
    pub fn discount(&mut self, gamma: f64) {
        let (p, shift) = (self.dim, (1.0 - gamma) * self.lambda);
        self.a.iter_mut().for_each(|v| *v *= gamma);
        for i in 0..p {
            self.a[i * p + i] += shift;
        }
        self.b.iter_mut().for_each(|v| *v *= gamma);
    }

    /// Back to `(lambda I, 0)` starting at round `since`.
    pub fn reset(&mut self, since: usize) {
        *self = Self {
            since,
            ..Self::new(self.dim, self.lambda)
        };
    }

    pub fn since(&self) -> usize {
        self.since
    }

    pub fn matrix(&self) -> &[f64] {
        &self.a
    }

    pub fn moment(&self) -> &[f64] {
        &self.b
    }

    pub fn fit(&self) -> RidgeFit {
        let chol = linalg::cholesky(&self.a, self.dim).expect("ridge matrix is positive definite");
        let theta = linalg::cholesky_solve(&chol, self.dim, &self.b);
        RidgeFit {
            dim: self.dim,
            chol,
            theta,
        }
    }
}

/// Factorized ridge state for one round of index evaluations.
#[derive(Debug, Clone)]
pub struct RidgeFit {
    dim: usize,
    chol: Vec<f64>,
    theta: Vec<f64>,
}

impl RidgeFit {
    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn mean(&self, x: &[f64]) -> f64 {
        linalg::dot(x, &self.theta)
    }

    /// `sqrt(x^T A^-1 x)`.
    pub fn width(&self, x: &[f64]) -> f64 {
        let mut z = x.to_vec();
        linalg::forward_substitute(&self.chol, self.dim, &mut z);
        libm::sqrt(linalg::dot(&z, &z))
    }

    /// `sqrt(x^T A^-1 M A^-1 x)` for a second weighting matrix `M`.
    pub fn sandwich_width(&self, x: &[f64], m: &[f64]) -> f64 {
        let v = linalg::cholesky_solve(&self.chol, self.dim, x);
        let mut mv = vec![0.0; self.dim];
        linalg::mat_vec(m, self.dim, &v, &mut mv);
        libm::sqrt(linalg::dot(&v, &mv).max(0.0))
    }
}
