//! Planar double-integrator models for the pursuer, the evader and the
//! moving obstacle, plus the bounded disturbance acting on the pursuer.
//!
//! Both robots share the per-axis drift `f(x_i, v_i)`; switching the drift
//! to [`DriftModel::Linear`] turns them into pure double integrators, which
//! is the setting where the quadratic value function is exact.

use nalgebra::{Vector2, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Position/velocity pair of a planar robot. `z = col(x, v)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AgentState {
    pub x: Vector2<f64>,
    pub v: Vector2<f64>,
}

pub type PursuerState = AgentState;
pub type EvaderState = AgentState;

impl AgentState {
    pub fn new(x: Vector2<f64>, v: Vector2<f64>) -> Self {
        Self { x, v }
    }

    pub fn zero() -> Self {
        Self::new(Vector2::zeros(), Vector2::zeros())
    }

    pub fn to_vector(&self) -> Vector4<f64> {
        Vector4::new(self.x[0], self.x[1], self.v[0], self.v[1])
    }

    pub fn from_vector(z: &Vector4<f64>) -> Self {
        Self::new(Vector2::new(z[0], z[1]), Vector2::new(z[2], z[3]))
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(self.v.iter()).all(|c| c.is_finite())
    }
}

/// Relative state `xi = z_p - z_e`. Always derived from the two agent
/// states, never integrated on its own.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RelativeState {
    pub xi: Vector4<f64>,
}

impl RelativeState {
    pub fn between(pursuer: &PursuerState, evader: &EvaderState) -> Self {
        Self {
            xi: pursuer.to_vector() - evader.to_vector(),
        }
    }

    /// Position part `xi_x`.
    pub fn position(&self) -> Vector2<f64> {
        Vector2::new(self.xi[0], self.xi[1])
    }

    /// Velocity part `xi_v`.
    pub fn velocity(&self) -> Vector2<f64> {
        Vector2::new(self.xi[2], self.xi[3])
    }
}

/// Inherent per-axis nonlinearity of the wheeled robots.
pub fn nonlinearity_f(mu1: f64, mu2: f64) -> f64 {
    0.1 * (0.08 * mu1).cos() * (0.03 * mu2).sin() - 0.1 * (0.03 * mu1).cos() * (0.08 * mu2).tanh()
        + 0.05 * mu2
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftModel {
    /// `v' = f(x, v) + u` with the robot nonlinearity applied per axis.
    #[default]
    Nonlinear,
    /// `v' = u`, the pure double integrator.
    Linear,
}

impl DriftModel {
    /// Per-axis velocity drift `f(x_i, v_i)`.
    pub fn accel(&self, state: &AgentState) -> Vector2<f64> {
        match self {
            DriftModel::Nonlinear => Vector2::new(
                nonlinearity_f(state.x[0], state.v[0]),
                nonlinearity_f(state.x[1], state.v[1]),
            ),
            DriftModel::Linear => Vector2::zeros(),
        }
    }

    /// Full drift vector field `f_p(z) = col(v, f(x, v))`.
    pub fn drift(&self, state: &AgentState) -> Vector4<f64> {
        let a = self.accel(state);
        Vector4::new(state.v[0], state.v[1], a[0], a[1])
    }
}

/// `z_p' = col(v_p, f(x_p, v_p) + u_p + d)`.
pub fn pursuer_derivative(
    model: DriftModel,
    z_p: &PursuerState,
    u_p: &Vector2<f64>,
    d: &Vector2<f64>,
) -> AgentState {
    AgentState::new(z_p.v, model.accel(z_p) + u_p + d)
}

/// `z_e' = col(v_e, f(x_e, v_e) + u_e)`.
pub fn evader_derivative(model: DriftModel, z_e: &EvaderState, u_e: &Vector2<f64>) -> AgentState {
    AgentState::new(z_e.v, model.accel(z_e) + u_e)
}

/// Saturated PD tracking law for the evader.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaderGains {
    pub k1: f64,
    pub k2: f64,
    /// Per-axis input bound `u_e_max`.
    pub u_max: f64,
    /// Subtract the drift `f(x_e, v_e)` before saturating.
    pub cancel_drift: bool,
}

impl Default for EvaderGains {
    fn default() -> Self {
        Self {
            k1: 2.0,
            k2: 2.0,
            u_max: 10.0,
            cancel_drift: false,
        }
    }
}

pub fn evader_tracking_controller(
    model: DriftModel,
    z_e: &EvaderState,
    target: &Vector2<f64>,
    gains: &EvaderGains,
) -> Vector2<f64> {
    let mut u = -gains.k1 * (z_e.x - target) - gains.k2 * z_e.v;
    if gains.cancel_drift {
        u -= model.accel(z_e);
    }
    u.map(|c| c.clamp(-gains.u_max, gains.u_max))
}

/// Obstacle drifting toward its destination with `x_o' = -k_o (x_o - x_od)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObstacleState {
    pub x: Vector2<f64>,
    pub destination: Vector2<f64>,
    pub gain: f64,
}

impl ObstacleState {
    pub fn velocity(&self) -> Vector2<f64> {
        obstacle_derivative(self)
    }

    /// Largest speed the obstacle can reach from its current position.
    pub fn speed_bound(&self) -> f64 {
        self.gain * (self.x - self.destination).norm()
    }
}

pub fn obstacle_derivative(o: &ObstacleState) -> Vector2<f64> {
    -o.gain * (o.x - o.destination)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Waveform {
    Sin,
    Cos,
}

/// One deterministic harmonic `amplitude * wave(2 pi frequency_hz t)` on `axis`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Harmonic {
    pub axis: usize,
    pub amplitude: f64,
    pub frequency_hz: f64,
    pub waveform: Waveform,
}

impl Harmonic {
    pub fn eval(&self, t: f64) -> f64 {
        let phase = 2.0 * std::f64::consts::PI * self.frequency_hz * t;
        self.amplitude
            * match self.waveform {
                Waveform::Sin => phase.sin(),
                Waveform::Cos => phase.cos(),
            }
    }
}

/// Disturbance `d(t) = d_w(t) + sum of harmonics`, with `d_w` uniform on
/// `[-random_bound, random_bound]` per axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceSpec {
    pub random_bound: f64,
    pub harmonics: Vec<Harmonic>,
}

impl DisturbanceSpec {
    /// `d1 = dw1 + 2 sin(5 pi t) + cos(2 pi t)`, `d2 = dw2 + cos(10 pi t)`, `|dw| <= 5`.
    pub fn wheeled_robot() -> Self {
        Self {
            random_bound: 5.0,
            harmonics: vec![
                Harmonic {
                    axis: 0,
                    amplitude: 2.0,
                    frequency_hz: 2.5,
                    waveform: Waveform::Sin,
                },
                Harmonic {
                    axis: 0,
                    amplitude: 1.0,
                    frequency_hz: 1.0,
                    waveform: Waveform::Cos,
                },
                Harmonic {
                    axis: 1,
                    amplitude: 1.0,
                    frequency_hz: 5.0,
                    waveform: Waveform::Cos,
                },
            ],
        }
    }

    pub fn none() -> Self {
        Self {
            random_bound: 0.0,
            harmonics: Vec::new(),
        }
    }

    pub fn deterministic(&self, t: f64) -> Vector2<f64> {
        let mut d = Vector2::zeros();
        for h in &self.harmonics {
            d[h.axis] += h.eval(t);
        }
        d
    }

    /// Per-axis envelope `random_bound + sum |amplitude|`.
    pub fn envelope(&self) -> Vector2<f64> {
        let mut e = Vector2::repeat(self.random_bound);
        for h in &self.harmonics {
            e[h.axis] += h.amplitude.abs();
        }
        e
    }

    pub fn validate(&self) -> crate::Result<()> {
        if !(self.random_bound >= 0.0) {
            return Err(crate::Error::Config(
                "disturbance.random_bound must be nonnegative".into(),
            ));
        }
        if let Some(h) = self.harmonics.iter().find(|h| h.axis > 1) {
            return Err(crate::Error::Config(format!(
                "disturbance harmonic axis {} out of range for a planar robot",
                h.axis
            )));
        }
        Ok(())
    }
}

/// Seeded disturbance source. One draw per control step.
#[derive(Clone, Debug)]
pub struct DisturbanceSampler {
    spec: DisturbanceSpec,
    rng: ChaCha8Rng,
}

impl DisturbanceSampler {
    pub fn new(spec: DisturbanceSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(crate::rng_streams::DISTURBANCE);
        Self { spec, rng }
    }

    pub fn spec(&self) -> &DisturbanceSpec {
        &self.spec
    }

    pub fn sample(&mut self, t: f64) -> Vector2<f64> {
        disturbance_sample(t, &self.spec, &mut self.rng)
    }
}

pub fn disturbance_sample<R: Rng>(t: f64, spec: &DisturbanceSpec, rng: &mut R) -> Vector2<f64> {
    let b = spec.random_bound;
    let dw = if b > 0.0 {
        Vector2::new(rng.random_range(-b..=b), rng.random_range(-b..=b))
    } else {
        Vector2::zeros()
    };
    dw + spec.deterministic(t)
}
