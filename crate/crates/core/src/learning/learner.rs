//! Actor-perturber-critic learner with simulated-sample (model-enhanced)
//! critic updates.
//!
//! All three laws are advanced by one explicit Euler step per control
//! period. Every derivative is evaluated from the pre-step weights, so the
//! order in which the three updates are applied has no effect.

use nalgebra::{SMatrix, SymmetricEigen, Vector2, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::{FeatureJacobian, FeatureMap, FeatureVector, Weights, FEATURE_DIM};
use crate::dynamics::{AgentState, DriftModel, EvaderState, PursuerState};
use crate::game::{
    evader_policy_from_gradient, pursuer_policy_from_gradient, relative_drift, reward, GameConfig,
};
use crate::{Error, Result};

pub type GainMatrix = SMatrix<f64, FEATURE_DIM, FEATURE_DIM>;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerConfig {
    pub k_c1: f64,
    pub k_c2: f64,
    pub k_a1: f64,
    pub k_a2: f64,
    pub k_p1: f64,
    pub k_p2: f64,
    /// Forgetting factor of the gain matrix.
    pub beta: f64,
    pub n_samples: usize,
    /// Radius of the projection ball for actor and perturber weights.
    pub w_bar: f64,
    /// `Gamma(0) = gamma0 * I`.
    pub gamma0: f64,
    pub gamma_lo: f64,
    pub gamma_hi: f64,
    /// Sampling box half-width on position coordinates (m).
    pub half_width_position: f64,
    /// Sampling box half-width on velocity coordinates (m/s).
    pub half_width_velocity: f64,
    /// Excitation threshold on `lambda_min(mean Lambda_i)`.
    pub lambda_c: f64,
    /// Initial weights, shared by critic, actor and perturber.
    pub w0: [f64; FEATURE_DIM],
}

/// Initial weights of the wheeled-robot example.
pub const DEFAULT_W0: [f64; FEATURE_DIM] = [
    0.6076, 0.9674, 1.865, 0.7862, -0.9773, 0.5243, -0.5635, 0.6471, 3.0772, -0.8426,
];

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            k_c1: 1.0,
            k_c2: 10.0,
            k_a1: 10.0,
            k_a2: 0.1,
            k_p1: 10.0,
            k_p2: 0.1,
            beta: 0.1,
            n_samples: 30,
            w_bar: 100.0,
            gamma0: 100.0,
            gamma_lo: 1e-3,
            gamma_hi: 1e4,
            half_width_position: 2.0,
            half_width_velocity: 2.0,
            lambda_c: 1e-6,
            w0: DEFAULT_W0,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("k_c1", self.k_c1),
            ("k_c2", self.k_c2),
            ("k_a1", self.k_a1),
            ("k_p1", self.k_p1),
            ("w_bar", self.w_bar),
            ("gamma0", self.gamma0),
            ("gamma_lo", self.gamma_lo),
            ("gamma_hi", self.gamma_hi),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("learner.{name} must be positive, got {v}")));
            }
        }
        let nonneg = [
            ("k_a2", self.k_a2),
            ("k_p2", self.k_p2),
            ("beta", self.beta),
            ("half_width_position", self.half_width_position),
            ("half_width_velocity", self.half_width_velocity),
            ("lambda_c", self.lambda_c),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("learner.{name} must be nonnegative, got {v}")));
            }
        }
        if self.n_samples < 1 {
            return Err(Error::Config("learner.n_samples must be at least 1".into()));
        }
        if self.gamma_lo > self.gamma_hi || !(self.gamma_lo..=self.gamma_hi).contains(&self.gamma0) {
            return Err(Error::Config("learner gamma clamps must satisfy lo <= gamma0 <= hi".into()));
        }
        if self.w0.iter().any(|w| !w.is_finite()) {
            return Err(Error::Config("learner.w0 must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LearnerState {
    pub w_c: Weights,
    pub w_a: Weights,
    pub w_p: Weights,
    pub gamma: GainMatrix,
}

impl LearnerState {
    pub fn new(cfg: &LearnerConfig) -> Self {
        let w = Weights::from_column_slice(&cfg.w0);
        Self {
            w_c: w,
            w_a: project(&w, cfg.w_bar),
            w_p: project(&w, cfg.w_bar),
            gamma: GainMatrix::identity() * cfg.gamma0,
        }
    }

    pub fn from_weights(w: Weights, gamma: GainMatrix) -> Self {
        Self { w_c: w, w_a: w, w_p: w, gamma }
    }

    pub fn is_finite(&self) -> bool {
        self.w_c.iter().chain(self.w_a.iter()).chain(self.w_p.iter()).all(|v| v.is_finite())
            && self.gamma.iter().all(|v| v.is_finite())
    }
}

fn velocity_block(jac: &FeatureJacobian) -> SMatrix<f64, FEATURE_DIM, 2> {
    jac.fixed_columns::<2>(2).into_owned()
}

/// `u_n = -1/2 R^-1 g_p^T J^T W_a`.
pub fn actor_policy(xi: &Vector4<f64>, w_a: &Weights, game: &GameConfig) -> Vector2<f64> {
    pursuer_policy_from_gradient(&(FeatureMap.jacobian(xi).transpose() * w_a), game)
}

/// `u_e = -1/(2 gamma^2) T^-1 g_e^T J^T W_p`.
pub fn perturber_policy(xi: &Vector4<f64>, w_p: &Weights, game: &GameConfig) -> Vector2<f64> {
    evader_policy_from_gradient(&(FeatureMap.jacobian(xi).transpose() * w_p), game)
}

/// Bellman quantities at one state point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointEval {
    pub xi: Vector4<f64>,
    pub jacobian: FeatureJacobian,
    pub u_n: Vector2<f64>,
    pub u_e: Vector2<f64>,
    pub phi: FeatureVector,
    /// `1 + phi^T phi`.
    pub rho: f64,
    pub reward: f64,
    pub delta: f64,
}

impl PointEval {
    /// `Lambda = phi phi^T / rho^2`.
    pub fn lambda(&self) -> GainMatrix {
        self.phi * self.phi.transpose() / (self.rho * self.rho)
    }
}

/// `delta = W_c^T phi + l` with `phi = J (F + g_p u_n - g_e u_e)`.
pub fn bellman_error(
    z_p: &PursuerState,
    z_e: &EvaderState,
    state: &LearnerState,
    model: DriftModel,
    game: &GameConfig,
) -> PointEval {
    let xi = z_p.to_vector() - z_e.to_vector();
    let jacobian = FeatureMap.jacobian(&xi);
    let u_n = actor_policy(&xi, &state.w_a, game);
    let u_e = perturber_policy(&xi, &state.w_p, game);
    let mut xi_dot = relative_drift(model, z_p, z_e);
    xi_dot[2] += u_n[0] - u_e[0];
    xi_dot[3] += u_n[1] - u_e[1];
    let phi = jacobian * xi_dot;
    let rho = 1.0 + phi.norm_squared();
    let l = reward(&xi, &u_n, &u_e, game);
    PointEval { xi, jacobian, u_n, u_e, phi, rho, reward: l, delta: state.w_c.dot(&phi) + l }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleBatch {
    pub points: Vec<PointEval>,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `(1/N) sum Lambda_i`.
    pub fn mean_lambda(&self) -> GainMatrix {
        let mut acc = GainMatrix::zeros();
        for p in &self.points {
            acc += p.lambda();
        }
        acc / self.points.len().max(1) as f64
    }
}

/// Source of simulated state points around the current pair.
#[derive(Clone, Debug)]
pub struct SampleGenerator {
    rng: ChaCha8Rng,
}

impl SampleGenerator {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(crate::rng_streams::SAMPLES);
        Self { rng }
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

/// Shifts every coordinate by an independent uniform draw in `[-h, h]`.
fn jitter<R: Rng>(z: &AgentState, hx: f64, hv: f64, rng: &mut R) -> AgentState {
    let mut draw = |h: f64| h * (2.0 * rng.random::<f64>() - 1.0);
    let dx = Vector2::new(draw(hx), draw(hx));
    let dv = Vector2::new(draw(hv), draw(hv));
    AgentState::new(z.x + dx, z.v + dv)
}

/// Draws `N` points uniformly from the box around `(z_p, z_e)` and caches
/// their Bellman quantities under the current weights.
#[allow(clippy::too_many_arguments)]
pub fn sample_batch<R: Rng>(
    z_p: &PursuerState,
    z_e: &EvaderState,
    state: &LearnerState,
    cfg: &LearnerConfig,
    model: DriftModel,
    game: &GameConfig,
    rng: &mut R,
) -> Result<SampleBatch> {
    if cfg.n_samples < 1 {
        return Err(Error::Config("learner.n_samples must be at least 1".into()));
    }
    let (hx, hv) = (cfg.half_width_position, cfg.half_width_velocity);
    let points = (0..cfg.n_samples)
        .map(|_| {
            let zp = jitter(z_p, hx, hv, rng);
            let ze = jitter(z_e, hx, hv, rng);
            bellman_error(&zp, &ze, state, model, game)
        })
        .collect();
    Ok(SampleBatch { points })
}

/// Critic gradient and gain-matrix derivative.
pub fn critic_derivative(
    state: &LearnerState,
    current: &PointEval,
    batch: &SampleBatch,
    cfg: &LearnerConfig,
) -> (Weights, GainMatrix) {
    let n = batch.len().max(1) as f64;
    let mut grad = current.phi * (cfg.k_c1 * current.delta / (current.rho * current.rho));
    let mut info = current.lambda() * cfg.k_c1;
    for p in &batch.points {
        grad += p.phi * (cfg.k_c2 / n * p.delta / (p.rho * p.rho));
        info += p.lambda() * (cfg.k_c2 / n);
    }
    let w_dot = -(state.gamma * grad);
    let g_dot = state.gamma * cfg.beta - state.gamma * info * state.gamma;
    (w_dot, g_dot)
}

/// `J_v M J_v^T w` without forming the 10x10 product.
fn coupled(jac: &FeatureJacobian, m: &nalgebra::Matrix2<f64>, w: &Weights) -> Weights {
    let jv = velocity_block(jac);
    jv * (m * (jv.transpose() * w))
}

pub fn actor_derivative(
    state: &LearnerState,
    current: &PointEval,
    batch: &SampleBatch,
    cfg: &LearnerConfig,
    game: &GameConfig,
) -> Weights {
    let r_inv = game.r_inv();
    let n = batch.len().max(1) as f64;
    let mut dw = -(state.w_a - state.w_c) * cfg.k_a1 - state.w_a * cfg.k_a2;
    let scale = |p: &PointEval| p.phi.dot(&state.w_c) / (p.rho * p.rho);
    dw += coupled(&current.jacobian, &r_inv, &state.w_a) * (0.25 * cfg.k_c1 * scale(current));
    for p in &batch.points {
        dw += coupled(&p.jacobian, &r_inv, &state.w_a) * (0.25 * cfg.k_c2 / n * scale(p));
    }
    dw
}

pub fn perturber_derivative(
    state: &LearnerState,
    current: &PointEval,
    batch: &SampleBatch,
    cfg: &LearnerConfig,
    game: &GameConfig,
) -> Weights {
    let t_inv = game.t_inv();
    let g2 = game.gamma * game.gamma;
    let n = batch.len().max(1) as f64;
    let mut dw = -(state.w_p - state.w_c) * cfg.k_p1 - state.w_p * cfg.k_p2;
    let scale = |p: &PointEval| p.phi.dot(&state.w_c) / (p.rho * p.rho);
    dw -= coupled(&current.jacobian, &t_inv, &state.w_p) * (0.25 * cfg.k_c1 / g2 * scale(current));
    for p in &batch.points {
        dw -= coupled(&p.jacobian, &t_inv, &state.w_p) * (0.25 * cfg.k_c2 / (n * g2) * scale(p));
    }
    dw
}

/// Radial projection onto the ball of radius `w_bar`.
pub fn project(w: &Weights, w_bar: f64) -> Weights {
    let n = w.norm();
    if n > w_bar {
        w * (w_bar / n)
    } else {
        *w
    }
}

/// Symmetrizes and clamps the spectrum of `Gamma` into `[lo, hi]`.
pub fn clamp_gain(gamma: &GainMatrix, lo: f64, hi: f64) -> GainMatrix {
    let sym = (gamma + gamma.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    if eig.eigenvalues.iter().all(|&l| l >= lo && l <= hi) {
        return sym;
    }
    let clamped = eig.eigenvalues.map(|l| l.clamp(lo, hi));
    let v = eig.eigenvectors;
    let out = v * GainMatrix::from_diagonal(&clamped) * v.transpose();
    (out + out.transpose()) * 0.5
}

pub fn critic_update(
    state: &LearnerState,
    current: &PointEval,
    batch: &SampleBatch,
    cfg: &LearnerConfig,
    dt: f64,
) -> (Weights, GainMatrix) {
    let (w_dot, g_dot) = critic_derivative(state, current, batch, cfg);
    (state.w_c + w_dot * dt, clamp_gain(&(state.gamma + g_dot * dt), cfg.gamma_lo, cfg.gamma_hi))
}

pub fn actor_update(
    state: &LearnerState,
    current: &PointEval,
    batch: &SampleBatch,
    cfg: &LearnerConfig,
    game: &GameConfig,
    dt: f64,
) -> Weights {
    project(&(state.w_a + actor_derivative(state, current, batch, cfg, game) * dt), cfg.w_bar)
}

pub fn perturber_update(
    state: &LearnerState,
    current: &PointEval,
    batch: &SampleBatch,
    cfg: &LearnerConfig,
    game: &GameConfig,
    dt: f64,
) -> Weights {
    project(&(state.w_p + perturber_derivative(state, current, batch, cfg, game) * dt), cfg.w_bar)
}

/// Simultaneous critic, actor and perturber step.
pub fn learner_step(
    state: &LearnerState,
    current: &PointEval,
    batch: &SampleBatch,
    cfg: &LearnerConfig,
    game: &GameConfig,
    dt: f64,
    step: usize,
) -> Result<LearnerState> {
    let (w_c, gamma) = critic_update(state, current, batch, cfg, dt);
    let next = LearnerState {
        w_c,
        gamma,
        w_a: actor_update(state, current, batch, cfg, game, dt),
        w_p: perturber_update(state, current, batch, cfg, game, dt),
    };
    if !next.is_finite() {
        return Err(Error::Numerical { step, what: "non-finite learner update".into() });
    }
    Ok(next)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExcitationReport {
    pub min_eigenvalue: f64,
    pub passes: bool,
}

/// `lambda_min((1/N) sum Lambda_i)` against the threshold `lambda_c`.
pub fn excitation_monitor(batch: &SampleBatch, lambda_c: f64) -> ExcitationReport {
    let eig = SymmetricEigen::new(batch.mean_lambda()).eigenvalues;
    let min = eig.iter().copied().fold(f64::INFINITY, f64::min).max(0.0);
    ExcitationReport { min_eigenvalue: min, passes: min >= lambda_c }
}
