//! Scenario configuration, loaded from TOML.

use std::path::Path;
use std::str::FromStr;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::dynamics::{AgentState, DisturbanceSpec, DriftModel, EvaderGains, ObstacleState};
use crate::game::GameConfig;
use crate::learning::LearnerConfig;
use crate::safeguard::{self, SafeguardConfig};
use crate::smc::SmcConfig;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControllerMode {
    /// `u_s + u_r + u_n`.
    SafeRobustRl,
    /// `u_r + u_n`.
    RobustRl,
    /// `u_s + u_n`.
    SafeguardOnly,
    /// `u_n`.
    NominalOnly,
}

impl ControllerMode {
    pub const ALL: [ControllerMode; 4] = [
        ControllerMode::SafeRobustRl,
        ControllerMode::RobustRl,
        ControllerMode::SafeguardOnly,
        ControllerMode::NominalOnly,
    ];

    pub fn uses_safeguard(self) -> bool {
        matches!(self, ControllerMode::SafeRobustRl | ControllerMode::SafeguardOnly)
    }

    pub fn uses_robust(self) -> bool {
        matches!(self, ControllerMode::SafeRobustRl | ControllerMode::RobustRl)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ControllerMode::SafeRobustRl => "safe-robust-rl",
            ControllerMode::RobustRl => "robust-rl",
            ControllerMode::SafeguardOnly => "safeguard-only",
            ControllerMode::NominalOnly => "nominal-only",
        }
    }
}

impl std::fmt::Display for ControllerMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ControllerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s.trim())
            .ok_or_else(|| {
                Error::Usage(format!(
                    "unknown mode `{s}` (expected one of safe-robust-rl, robust-rl, safeguard-only, nominal-only)"
                ))
            })
    }
}

/// Source of the nominal input `u_n`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NominalSource {
    /// Learned actor policy.
    #[default]
    Actor,
    /// Fixed input.
    Constant { u: [f64; 2] },
    /// Piecewise-constant input drawn uniformly from the disk of radius
    /// `bound`, redrawn every `hold` seconds.
    RandomBounded { bound: f64, hold: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waypoint {
    pub t_start: f64,
    pub target: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaderConfig {
    pub k1: f64,
    pub k2: f64,
    pub u_max: f64,
    #[serde(default)]
    pub cancel_drift: bool,
    /// Sorted by `t_start`; the first entry starts at 0.
    pub waypoints: Vec<Waypoint>,
    /// Infinity-norm bound on `z_e` defining the monitored set `Omega_e`.
    #[serde(default)]
    pub omega_bound: Option<f64>,
}

impl EvaderConfig {
    pub fn gains(&self) -> EvaderGains {
        EvaderGains { k1: self.k1, k2: self.k2, u_max: self.u_max, cancel_drift: self.cancel_drift }
    }

    /// Target active at time `t`.
    pub fn target_at(&self, t: f64) -> Vector2<f64> {
        let wp = self
            .waypoints
            .iter()
            .rev()
            .find(|w| w.t_start <= t)
            .unwrap_or(&self.waypoints[0]);
        Vector2::from(wp.target)
    }

    /// Waypoint schedule of the wheeled-robot example.
    pub fn reference_schedule() -> Vec<Waypoint> {
        [(0.0, [38.0, 10.0]), (6.0, [10.0, 25.0]), (10.0, [42.0, 36.0]), (15.0, [10.0, 48.0])]
            .into_iter()
            .map(|(t_start, target)| Waypoint { t_start, target })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleConfig {
    pub start: [f64; 2],
    pub destination: [f64; 2],
    pub gain: f64,
}

impl ObstacleConfig {
    pub fn initial_state(&self) -> ObstacleState {
        ObstacleState {
            x: Vector2::from(self.start),
            destination: Vector2::from(self.destination),
            gain: self.gain,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialState {
    pub pursuer_x: [f64; 2],
    pub pursuer_v: [f64; 2],
    pub evader_x: [f64; 2],
    pub evader_v: [f64; 2],
}

impl InitialState {
    pub fn pursuer(&self) -> AgentState {
        AgentState::new(Vector2::from(self.pursuer_x), Vector2::from(self.pursuer_v))
    }

    pub fn evader(&self) -> AgentState {
        AgentState::new(Vector2::from(self.evader_x), Vector2::from(self.evader_v))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub dt: f64,
    pub t_end: f64,
    pub seed: u64,
    pub mode: ControllerMode,
    /// Log every `log_every`-th step.
    pub log_every: usize,
    pub drift: DriftModel,
    /// Capture is declared once `|xi_x| < capture_radius`.
    pub capture_radius: f64,
    #[serde(default)]
    pub nominal: NominalSource,
    /// Run the learner updates; off freezes all weights.
    #[serde(default = "default_true")]
    pub learning: bool,
    pub initial: InitialState,
    pub evader: EvaderConfig,
    pub obstacle: ObstacleConfig,
    pub disturbance: DisturbanceSpec,
    pub safeguard: SafeguardConfig,
    pub smc: SmcConfig,
    pub learner: LearnerConfig,
    pub game: GameConfig,
}

fn default_true() -> bool {
    true
}

impl ScenarioConfig {
    /// Wheeled-robot example with the library defaults for every
    /// parameter it leaves open.
    pub fn reference_defaults() -> Self {
        Self {
            dt: 1e-3,
            t_end: 25.0,
            seed: 1,
            mode: ControllerMode::SafeRobustRl,
            log_every: 10,
            drift: DriftModel::Nonlinear,
            capture_radius: 1.0,
            nominal: NominalSource::Actor,
            learning: true,
            initial: InitialState {
                pursuer_x: [0.0, 0.0],
                pursuer_v: [0.0, 0.0],
                evader_x: [2.0, 5.0],
                evader_v: [0.0, 0.0],
            },
            evader: EvaderConfig {
                k1: 2.0,
                k2: 2.0,
                u_max: 10.0,
                cancel_drift: false,
                waypoints: EvaderConfig::reference_schedule(),
                omega_bound: None,
            },
            obstacle: ObstacleConfig { start: [10.0, 10.0], destination: [40.0, 40.0], gain: 0.05 },
            disturbance: DisturbanceSpec::wheeled_robot(),
            safeguard: SafeguardConfig::default(),
            smc: SmcConfig::default(),
            learner: LearnerConfig::default(),
            game: GameConfig::default(),
        }
    }

    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt + 1e-9).floor() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end > 0.0) || !self.t_end.is_finite() {
            return Err(Error::Config(format!("t_end must be positive, got {}", self.t_end)));
        }
        if self.log_every < 1 {
            return Err(Error::Config("log_every must be at least 1".into()));
        }
        if !(self.capture_radius > 0.0) {
            return Err(Error::Config("capture_radius must be positive".into()));
        }
        let ev = &self.evader;
        if ev.waypoints.is_empty() {
            return Err(Error::Config("evader.waypoints must not be empty".into()));
        }
        if ev.waypoints[0].t_start != 0.0
            || ev.waypoints.windows(2).any(|w| !(w[1].t_start > w[0].t_start))
        {
            return Err(Error::Config(
                "evader.waypoints must start at t = 0 and be strictly increasing in t_start".into(),
            ));
        }
        if !(ev.k1 >= 0.0 && ev.k2 >= 0.0 && ev.u_max > 0.0) {
            return Err(Error::Config("evader gains must be nonnegative with u_max > 0".into()));
        }
        if !(self.obstacle.gain >= 0.0) {
            return Err(Error::Config("obstacle.gain must be nonnegative".into()));
        }
        match self.nominal {
            NominalSource::RandomBounded { bound, hold } if !(bound >= 0.0 && hold > 0.0) => {
                return Err(Error::Config("nominal random-bounded needs bound >= 0 and hold > 0".into()));
            }
            _ => {}
        }
        self.disturbance.validate()?;
        self.safeguard.validate()?;
        self.smc.validate()?;
        self.learner.validate()?;
        self.game.validate()?;

        let bound = self.obstacle.initial_state().speed_bound();
        if !(self.safeguard.eta > bound) {
            return Err(Error::Config(format!(
                "safeguard.eta = {} must exceed the obstacle speed bound {bound:.6}",
                self.safeguard.eta
            )));
        }
        Ok(())
    }

    /// Refuses initial states outside the interior of the safe set.
    pub fn check_initial_safety(&self) -> Result<()> {
        let zp = self.initial.pursuer();
        let xo = Vector2::from(self.obstacle.start);
        let (b_x, phi_x1) = safeguard::phi_chain(&zp, &xo, &self.safeguard);
        let b_v = safeguard::barrier_velocity(&zp, &self.safeguard);
        if !(b_x > 0.0 && phi_x1 > 0.0 && b_v > 0.0) {
            return Err(Error::UnsafeStart(format!(
                "b_x(0) = {b_x:.6}, phi_x1(0) = {phi_x1:.6}, b_v(0) = {b_v:.6}; all must be positive"
            )));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            match missing_key(&msg) {
                Some(key) => Error::MissingKey(key),
                None => Error::Config(e.to_string()),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

fn missing_key(msg: &str) -> Option<String> {
    let rest = msg.split("missing field `").nth(1)?;
    Some(rest.split('`').next()?.to_string())
}

pub fn load_config(path: impl AsRef<Path>) -> Result<ScenarioConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::Config(format!("cannot read {}: {e}", path.display()))
    })?;
    ScenarioConfig::from_toml_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = ScenarioConfig::reference_defaults();
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(ScenarioConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn missing_key_is_named() {
        let text = ScenarioConfig::reference_defaults().to_toml_string().unwrap();
        let without: String = text.lines().filter(|l| !l.starts_with("t_end")).collect::<Vec<_>>().join("\n");
        match ScenarioConfig::from_toml_str(&without) {
            Err(Error::MissingKey(k)) => assert_eq!(k, "t_end"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn eta_must_exceed_obstacle_speed() {
        let mut cfg = ScenarioConfig::reference_defaults();
        cfg.safeguard.eta = 2.0;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn unsafe_start_is_refused() {
        let mut cfg = ScenarioConfig::reference_defaults();
        cfg.initial.pursuer_x = [9.0, 9.0];
        assert!(matches!(cfg.check_initial_safety(), Err(Error::UnsafeStart(_))));
        cfg.initial.pursuer_x = [0.0, 0.0];
        cfg.initial.pursuer_v = [-21.0, 0.0];
        assert!(matches!(cfg.check_initial_safety(), Err(Error::UnsafeStart(_))));
        assert!(ScenarioConfig::reference_defaults().check_initial_safety().is_ok());
    }

    #[test]
    fn waypoint_lookup() {
        let ev = ScenarioConfig::reference_defaults().evader;
        assert_eq!(ev.target_at(0.0), Vector2::new(38.0, 10.0));
        assert_eq!(ev.target_at(5.999), Vector2::new(38.0, 10.0));
        assert_eq!(ev.target_at(6.0), Vector2::new(10.0, 25.0));
        assert_eq!(ev.target_at(14.0), Vector2::new(42.0, 36.0));
        assert_eq!(ev.target_at(100.0), Vector2::new(10.0, 48.0));
    }

    #[test]
    fn mode_parsing() {
        for m in ControllerMode::ALL {
            assert_eq!(m.as_str().parse::<ControllerMode>().unwrap(), m);
        }
        assert!("fast".parse::<ControllerMode>().is_err());
    }
}
