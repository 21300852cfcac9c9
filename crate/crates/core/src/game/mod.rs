//! Zero-sum game quantities: reward, Hamiltonian residual, L2-gain
//! bookkeeping and the linear-quadratic Riccati oracle.

mod gare;

pub use gare::{gare_solve, solve_lyapunov, GareProblem, GareSolution};

use nalgebra::{Matrix2, Matrix4, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use crate::dynamics::{DriftModel, EvaderState, PursuerState};
use crate::learning::features::{FeatureMap, Weights};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameConfig {
    #[serde(with = "matrix_rows")]
    pub q: Matrix4<f64>,
    #[serde(with = "matrix_rows")]
    pub r: Matrix2<f64>,
    #[serde(with = "matrix_rows")]
    pub t: Matrix2<f64>,
    pub gamma: f64,
}

impl Default for GameConfig {
    fn default() -> Self {
        Self {
            q: Matrix4::identity(),
            r: Matrix2::identity(),
            t: Matrix2::identity(),
            gamma: 10.0,
        }
    }
}

fn is_symmetric_pd<const D: usize>(m: &nalgebra::SMatrix<f64, D, D>) -> bool
where
    nalgebra::Const<D>: nalgebra::DimMin<nalgebra::Const<D>, Output = nalgebra::Const<D>>,
{
    let sym = (m - m.transpose()).abs().max() <= 1e-12 * (1.0 + m.abs().max());
    sym && m.cholesky().is_some()
}

impl GameConfig {
    pub fn validate(&self) -> Result<()> {
        if !is_symmetric_pd(&self.q) {
            return Err(Error::Config("game.q must be symmetric positive definite".into()));
        }
        if !is_symmetric_pd(&self.r) {
            return Err(Error::Config("game.r must be symmetric positive definite".into()));
        }
        if !is_symmetric_pd(&self.t) {
            return Err(Error::Config("game.t must be symmetric positive definite".into()));
        }
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(Error::Config(format!("game.gamma must be positive, got {}", self.gamma)));
        }
        Ok(())
    }

    pub fn r_inv(&self) -> Matrix2<f64> {
        self.r.try_inverse().expect("validated R")
    }

    pub fn t_inv(&self) -> Matrix2<f64> {
        self.t.try_inverse().expect("validated T")
    }
}

/// `l = xi^T Q xi + u_n^T R u_n - gamma^2 u_e^T T u_e`.
pub fn reward(xi: &Vector4<f64>, u_n: &Vector2<f64>, u_e: &Vector2<f64>, cfg: &GameConfig) -> f64 {
    xi.dot(&(cfg.q * xi)) + u_n.dot(&(cfg.r * u_n))
        - cfg.gamma * cfg.gamma * u_e.dot(&(cfg.t * u_e))
}

/// Relative drift `F(z_p, z_e) = f_p(z_p) - f_e(z_e)` in `(position, velocity)` order.
pub fn relative_drift(model: DriftModel, z_p: &PursuerState, z_e: &EvaderState) -> Vector4<f64> {
    model.drift(z_p) - model.drift(z_e)
}

/// Pursuer stationary policy `-1/2 R^-1 g_p^T grad V`; `g_p` selects the velocity block.
pub fn pursuer_policy_from_gradient(grad_v: &Vector4<f64>, cfg: &GameConfig) -> Vector2<f64> {
    -0.5 * cfg.r_inv() * grad_v.fixed_rows::<2>(2)
}

/// Evader stationary policy `-1/(2 gamma^2) T^-1 g_e^T grad V`.
pub fn evader_policy_from_gradient(grad_v: &Vector4<f64>, cfg: &GameConfig) -> Vector2<f64> {
    -0.5 / (cfg.gamma * cfg.gamma) * cfg.t_inv() * grad_v.fixed_rows::<2>(2)
}

/// Right-hand side of the HJI equation with `grad V = J^T W` at one state.
pub fn hji_residual_at(
    w: &Weights,
    z_p: &PursuerState,
    z_e: &EvaderState,
    model: DriftModel,
    cfg: &GameConfig,
) -> f64 {
    let xi = z_p.to_vector() - z_e.to_vector();
    let grad = FeatureMap.jacobian(&xi).transpose() * w;
    let gv = grad.fixed_rows::<2>(2).into_owned();
    grad.dot(&relative_drift(model, z_p, z_e)) - 0.25 * gv.dot(&(cfg.r_inv() * gv))
        + xi.dot(&(cfg.q * xi))
        + 0.25 / (cfg.gamma * cfg.gamma) * gv.dot(&(cfg.t_inv() * gv))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HjiStats {
    pub mean_abs: f64,
    pub max_abs: f64,
}

pub fn hji_residual(
    w: &Weights,
    samples: &[(PursuerState, EvaderState)],
    model: DriftModel,
    cfg: &GameConfig,
) -> HjiStats {
    let mut sum = 0.0;
    let mut max = 0.0f64;
    for (zp, ze) in samples {
        let r = hji_residual_at(w, zp, ze, model, cfg).abs();
        sum += r;
        max = max.max(r);
    }
    HjiStats {
        mean_abs: if samples.is_empty() { 0.0 } else { sum / samples.len() as f64 },
        max_abs: max,
    }
}

/// One sample of the attenuation integrands.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct L2Sample {
    pub t: f64,
    pub xi: Vector4<f64>,
    pub u_n: Vector2<f64>,
    pub u_e: Vector2<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct L2Gain {
    /// `int (Q + u_n^T R u_n)`.
    pub lhs: f64,
    /// `gamma^2 int u_e^T T u_e`.
    pub rhs: f64,
    /// `lhs / rhs`, NaN when `rhs == 0`.
    pub ratio: f64,
    /// `int |u_e|^2`, logged against the square-integrability assumption.
    pub evader_energy: f64,
}

/// Trapezoidal accumulator for the attenuation integrals.
#[derive(Clone, Debug)]
pub struct L2Accumulator {
    cfg: GameConfig,
    last: Option<(f64, f64, f64, f64)>,
    lhs: f64,
    rhs: f64,
    energy: f64,
}

impl L2Accumulator {
    pub fn new(cfg: &GameConfig) -> Self {
        Self { cfg: *cfg, last: None, lhs: 0.0, rhs: 0.0, energy: 0.0 }
    }

    pub fn push(&mut self, s: &L2Sample) {
        let cfg = &self.cfg;
        let a = s.xi.dot(&(cfg.q * s.xi)) + s.u_n.dot(&(cfg.r * s.u_n));
        let b = cfg.gamma * cfg.gamma * s.u_e.dot(&(cfg.t * s.u_e));
        let e = s.u_e.norm_squared();
        if let Some((t0, a0, b0, e0)) = self.last {
            let h = 0.5 * (s.t - t0);
            self.lhs += h * (a0 + a);
            self.rhs += h * (b0 + b);
            self.energy += h * (e0 + e);
        }
        self.last = Some((s.t, a, b, e));
    }

    pub fn result(&self) -> L2Gain {
        L2Gain {
            lhs: self.lhs,
            rhs: self.rhs,
            ratio: if self.rhs == 0.0 { f64::NAN } else { self.lhs / self.rhs },
            evader_energy: self.energy,
        }
    }
}

pub fn l2_gain_accounting(trace: &[L2Sample], cfg: &GameConfig) -> L2Gain {
    let mut acc = L2Accumulator::new(cfg);
    for s in trace {
        acc.push(s);
    }
    acc.result()
}

/// Serializes a fixed-size matrix as a list of rows.
pub(crate) mod matrix_rows {
    use nalgebra::SMatrix;
    use serde::{de::Error as _, Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer, const R: usize, const C: usize>(
        m: &SMatrix<f64, R, C>,
        s: S,
    ) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = (0..R).map(|i| (0..C).map(|j| m[(i, j)]).collect()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>, const R: usize, const C: usize>(
        d: D,
    ) -> Result<SMatrix<f64, R, C>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        if rows.len() != R || rows.iter().any(|r| r.len() != C) {
            return Err(D::Error::custom(format!("expected a {R}x{C} matrix given as rows")));
        }
        Ok(SMatrix::from_fn(|i, j| rows[i][j]))
    }
}
