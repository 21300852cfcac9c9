//! Solver for the game algebraic Riccati equation
//! `A^T P + P A + Q - P (B_p R^-1 B_p^T - gamma^-2 B_e T^-1 B_e^T) P = 0`.

use nalgebra::{DMatrix, Matrix4, SMatrix};

use super::GameConfig;
use crate::learning::features::{FeatureMap, Weights};
use crate::{Error, Result};

const MAX_ITERATIONS: usize = 60;

#[derive(Clone, Debug, PartialEq)]
pub struct GareProblem {
    pub a: DMatrix<f64>,
    pub b_p: DMatrix<f64>,
    pub b_e: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub t: DMatrix<f64>,
    pub gamma: f64,
}

impl GareProblem {
    pub fn new(
        a: &Matrix4<f64>,
        b_p: &SMatrix<f64, 4, 2>,
        b_e: &SMatrix<f64, 4, 2>,
        cfg: &GameConfig,
    ) -> Self {
        Self {
            a: DMatrix::from_column_slice(4, 4, a.as_slice()),
            b_p: DMatrix::from_column_slice(4, 2, b_p.as_slice()),
            b_e: DMatrix::from_column_slice(4, 2, b_e.as_slice()),
            q: DMatrix::from_column_slice(4, 4, cfg.q.as_slice()),
            r: DMatrix::from_column_slice(2, 2, cfg.r.as_slice()),
            t: DMatrix::from_column_slice(2, 2, cfg.t.as_slice()),
            gamma: cfg.gamma,
        }
    }

    /// Two decoupled double integrators driven by both players.
    pub fn double_integrator(cfg: &GameConfig) -> Self {
        let mut a = Matrix4::zeros();
        a[(0, 2)] = 1.0;
        a[(1, 3)] = 1.0;
        let mut b = SMatrix::<f64, 4, 2>::zeros();
        b[(2, 0)] = 1.0;
        b[(3, 1)] = 1.0;
        Self::new(&a, &b, &b, cfg)
    }

    fn coupling(&self) -> Result<DMatrix<f64>> {
        let r_inv = self
            .r
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::OracleUnavailable("R is singular".into()))?;
        let t_inv = self
            .t
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::OracleUnavailable("T is singular".into()))?;
        Ok(&self.b_p * r_inv * self.b_p.transpose()
            - (&self.b_e * t_inv * self.b_e.transpose()) / (self.gamma * self.gamma))
    }

    pub fn residual(&self, p: &DMatrix<f64>) -> f64 {
        let s = self.coupling().expect("validated weights");
        (self.a.transpose() * p + p * &self.a + &self.q - p * s * p).norm()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GareSolution {
    pub p: DMatrix<f64>,
    /// Frobenius norm of the Riccati residual at `p`.
    pub residual: f64,
    pub iterations: usize,
    /// Residual after each correction.
    pub residual_history: Vec<f64>,
}

impl GareSolution {
    /// Critic weights for the quadratic basis; only defined for 4x4 `P`.
    pub fn weights(&self) -> Option<Weights> {
        (self.p.shape() == (4, 4))
            .then(|| FeatureMap.matrix_to_weights(&Matrix4::from_column_slice(self.p.as_slice())))
    }
}

/// Solves `a^T X + X a + q = 0` by Kronecker vectorization.
pub fn solve_lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let at = a.transpose();
    let op = eye.kronecker(&at) + at.kronecker(&eye);
    let rhs = -DMatrix::from_column_slice(n * n, 1, q.as_slice());
    let x = op.lu().solve(&rhs)?;
    if x.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let x = DMatrix::from_column_slice(n, n, x.as_slice());
    Some((&x + x.transpose()) * 0.5)
}

fn is_hurwitz(m: &DMatrix<f64>) -> bool {
    m.clone().complex_eigenvalues().iter().all(|l| l.re < 0.0)
}

/// Bass's construction: `K = B^T W^-1` with
/// `(A + alpha I) W + W (A + alpha I)^T = 2 B B^T`, `alpha > max |Re lambda(A)|`.
fn initial_gain(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let alpha = 1.0 + a.norm();
    let shifted = a + DMatrix::<f64>::identity(n, n) * alpha;
    let w = solve_lyapunov(&shifted.transpose(), &(-(b * b.transpose()) * 2.0))
        .ok_or_else(|| Error::OracleUnavailable("initial gain solve failed".into()))?;
    let chol = w
        .clone()
        .cholesky()
        .ok_or_else(|| Error::OracleUnavailable("(A, B_p) is not stabilizable".into()))?;
    Ok(b.transpose() * chol.inverse())
}

/// Kleinman iteration for the definite equation
/// `a^T X + X a + q - X b r^-1 b^T X = 0`.
fn kleinman(a: &DMatrix<f64>, b: &DMatrix<f64>, r: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let r_inv = r
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::OracleUnavailable("R is singular".into()))?;
    let g = b * &r_inv * b.transpose();
    let residual = |x: &DMatrix<f64>| (a.transpose() * x + x * a + q - x * &g * x).norm();
    let k0 = initial_gain(a, b)?;
    let closed = a - b * &k0;
    if !is_hurwitz(&closed) {
        return Err(Error::OracleUnavailable("(A, B_p) is not stabilizable".into()));
    }
    let mut x = solve_lyapunov(&closed, &(q + k0.transpose() * r * &k0))
        .ok_or_else(|| Error::OracleUnavailable("initial Lyapunov solve failed".into()))?;
    let mut res = residual(&x);
    let tol = 1e-14 * (1.0 + q.norm());
    for _ in 0..MAX_ITERATIONS {
        if res <= tol {
            break;
        }
        let closed = a - &g * &x;
        let next = solve_lyapunov(&closed, &(q + &x * &g * &x))
            .ok_or_else(|| Error::OracleUnavailable("Kleinman step solve failed".into()))?;
        let next_res = residual(&next);
        if !next_res.is_finite() {
            return Err(Error::OracleUnavailable("Kleinman iteration diverged".into()));
        }
        if next_res >= res && res <= 1e3 * tol * (1.0 + x.norm()) {
            break;
        }
        x = next;
        res = next_res;
    }
    Ok(x)
}

/// Solves the game equation as a sum of definite corrections: each pass
/// solves an LQR equation for the pursuer channel around the current closed
/// loop, and the evader term left over by the correction becomes the next
/// state weight.
pub fn gare_solve(problem: &GareProblem) -> Result<GareSolution> {
    let s = problem.coupling()?;
    let n = problem.a.nrows();
    let t_inv = problem
        .t
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::OracleUnavailable("T is singular".into()))?;
    let e = &problem.b_e * t_inv * problem.b_e.transpose() / (problem.gamma * problem.gamma);
    let tol = 1e-13 * (1.0 + problem.q.norm());

    let mut p = DMatrix::<f64>::zeros(n, n);
    let mut weight = problem.q.clone();
    let mut history: Vec<f64> = Vec::new();
    for _ in 0..MAX_ITERATIONS {
        let a_k = &problem.a - &s * &p;
        let z = kleinman(&a_k, &problem.b_p, &problem.r, &weight)?;
        let next = &p + &z;
        let res = problem.residual(&next);
        if !res.is_finite() || next.norm() > 1e12 * (1.0 + problem.q.norm()) {
            return Err(Error::OracleUnavailable(
                "iteration diverged; gamma may be below the attenuation level".into(),
            ));
        }
        let stalled = history.last().is_some_and(|&prev| res >= prev && prev <= 1e3 * tol * (1.0 + p.norm()));
        if !stalled {
            history.push(res);
            p = (&next + next.transpose()) * 0.5;
        }
        let current = *history.last().expect("nonempty");
        if stalled || current <= tol {
            if !is_hurwitz(&(&problem.a - &s * &p)) {
                return Err(Error::OracleUnavailable(
                    "solution is not stabilizing; gamma may be below the attenuation level".into(),
                ));
            }
            return Ok(GareSolution { p, residual: current, iterations: history.len(), residual_history: history });
        }
        weight = &z * &e * &z;
        weight = (&weight + weight.transpose()) * 0.5;
    }
    Err(Error::OracleUnavailable(
        "iteration did not converge; gamma may be below the attenuation level".into(),
    ))
}
