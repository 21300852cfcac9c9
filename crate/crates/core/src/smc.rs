//! Integral sliding surface with an adaptive-gain `tanh` sliding-mode law.
//!
//! For the double-integrator pursuer `g_p = [0; I]`, so the projection
//! `chi = g_p^+` selects the velocity block and `S(z_p) = v_p`. The
//! integral term accumulates `f + u_s + u_n` and is integrated by the same
//! RK4 pass as the plant (see [`crate::integrator::StateBundle`]); `u_r`
//! never enters it.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::dynamics::PursuerState;
use crate::{Error, Result};

/// Upper bound of `|x| - x tanh(x / rho)` in units of `rho`.
pub const TANH_GAP: f64 = 0.2785;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmcConfig {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    /// Filter time constant of `theta` (s).
    pub k4: f64,
    /// Boundary-layer width of the `tanh` law.
    pub rho: f64,
    /// Mode-switch threshold on `|s|`.
    pub epsilon: f64,
    /// Initial gain `K(0)`.
    pub k0: f64,
    /// Ceiling for `K`; reaching it is flagged in the run report.
    pub k_cap: f64,
}

impl Default for SmcConfig {
    fn default() -> Self {
        Self {
            k1: 1.0,
            k2: 10.0,
            k3: 10.0,
            k4: 10.0,
            rho: 0.1,
            epsilon: 0.1,
            k0: 10.0,
            k_cap: 1e4,
        }
    }
}

impl SmcConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("k1", self.k1),
            ("k2", self.k2),
            ("k3", self.k3),
            ("k4", self.k4),
            ("rho", self.rho),
            ("epsilon", self.epsilon),
            ("k0", self.k0),
            ("k_cap", self.k_cap),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("smc.{name} must be positive, got {v}")));
            }
        }
        if self.k_cap < self.k0.max(self.k3) {
            return Err(Error::Config("smc.k_cap must be at least max(k0, k3)".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SmcMode {
    Reaching,
    Boundary,
}

impl SmcMode {
    pub fn as_index(self) -> u8 {
        match self {
            SmcMode::Reaching => 0,
            SmcMode::Boundary => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmcState {
    /// Most recent sliding variable.
    pub s: Vector2<f64>,
    /// `S(z_p(0)) = v_p(0)`.
    pub s0: Vector2<f64>,
    pub gain: f64,
    pub theta: Vector2<f64>,
    pub gain_at_tstar: f64,
    pub t_star: Option<f64>,
    pub mode: SmcMode,
    pub cap_hit: bool,
}

impl SmcState {
    /// `theta(0) = 0`; the mode is decided by the first [`gain_update`].
    pub fn new(z_p0: &PursuerState, cfg: &SmcConfig) -> Self {
        Self {
            s: Vector2::zeros(),
            s0: z_p0.v,
            gain: cfg.k0,
            theta: Vector2::zeros(),
            gain_at_tstar: cfg.k0,
            t_star: None,
            mode: SmcMode::Reaching,
            cap_hit: false,
        }
    }
}

/// `s = v_p - v_p(0) - integral`.
pub fn sliding_variable(
    z_p: &PursuerState,
    integral_acc: &Vector2<f64>,
    state: &SmcState,
) -> Vector2<f64> {
    z_p.v - state.s0 - integral_acc
}

/// `u_r = -K tanh(s / rho)` elementwise.
pub fn robust_control(s: &Vector2<f64>, gain: f64, rho: f64) -> Vector2<f64> {
    s.map(|si| -gain * (si / rho).tanh())
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Advances the adaptive gain by one control period given the sliding
/// variable `s` measured at time `t`.
pub fn gain_update(state: &SmcState, s: &Vector2<f64>, t: f64, dt: f64, cfg: &SmcConfig) -> SmcState {
    debug_assert!(dt > 0.0);
    let mut next = *state;
    next.s = *s;
    let norm = s.norm();
    if norm > cfg.epsilon {
        next.mode = SmcMode::Reaching;
        next.gain = state.gain + (cfg.k1 + cfg.k2 * norm) * dt;
    } else {
        if state.mode == SmcMode::Reaching || state.t_star.is_none() {
            next.t_star = Some(t);
            next.gain_at_tstar = state.gain;
        }
        next.mode = SmcMode::Boundary;
        let target = s.map(sign);
        let decay = (-dt / cfg.k4).exp();
        next.theta = target + (state.theta - target) * decay;
        next.gain = cfg.k3 + next.gain_at_tstar * next.theta.norm();
    }
    if next.gain > cfg.k_cap {
        next.gain = cfg.k_cap;
        next.cap_hit = true;
    }
    next
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ReachingReport {
    pub hitting_time: Option<f64>,
    /// Fraction of samples at or after the hitting time with `|s| <= epsilon`.
    pub residence_fraction: f64,
    pub max_excursion: f64,
}

/// Summarizes a uniformly sampled `(t, |s|)` trace.
pub fn reaching_monitor(times: &[f64], norms: &[f64], epsilon: f64) -> ReachingReport {
    let hit = norms.iter().position(|&n| n <= epsilon);
    match hit {
        None => ReachingReport {
            hitting_time: None,
            residence_fraction: 0.0,
            max_excursion: norms.iter().copied().fold(0.0, f64::max),
        },
        Some(i) => {
            let tail = &norms[i..];
            let inside = tail.iter().filter(|&&n| n <= epsilon).count();
            ReachingReport {
                hitting_time: Some(times[i]),
                residence_fraction: inside as f64 / tail.len() as f64,
                max_excursion: tail.iter().copied().fold(0.0, f64::max),
            }
        }
    }
}

/// `|x| - x tanh(x / rho)`.
pub fn tanh_sign_gap(x: f64, rho: f64) -> f64 {
    x * sign(x) - x * (x / rho).tanh()
}
