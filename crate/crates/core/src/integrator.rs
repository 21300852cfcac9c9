//! Fixed-step classical Runge-Kutta integration of the closed-loop bundle.
//!
//! Controls and the disturbance are held constant over a step. The bundle
//! carries the sliding-surface accumulator next to the physical states so
//! that both see identical stage evaluations of the drift.

use nalgebra::{SVector, Vector2};

use crate::dynamics::{
    evader_derivative, obstacle_derivative, pursuer_derivative, AgentState, DriftModel,
    EvaderState, ObstacleState, PursuerState,
};
use crate::{Error, Result};

/// One classical RK4 step of `x' = f(x)`.
pub fn rk4_step<const N: usize, F>(x: &SVector<f64, N>, dt: f64, f: F) -> SVector<f64, N>
where
    F: Fn(&SVector<f64, N>) -> SVector<f64, N>,
{
    let k1 = f(x);
    let k2 = f(&(x + k1 * (0.5 * dt)));
    let k3 = f(&(x + k2 * (0.5 * dt)));
    let k4 = f(&(x + k3 * dt));
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
}

/// Everything that is integrated in continuous time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StateBundle {
    pub pursuer: PursuerState,
    pub evader: EvaderState,
    pub obstacle: ObstacleState,
    /// Running integral of `f(x_p, v_p) + u_s + u_n`.
    pub sliding_integral: Vector2<f64>,
}

/// Zero-order-hold inputs for one step.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepInputs {
    /// Total pursuer input `u_p`.
    pub u_p: Vector2<f64>,
    pub evader_input: Vector2<f64>,
    pub disturbance: Vector2<f64>,
    /// The part of `u_p` that enters the sliding-surface integrand (`u_s + u_n`).
    pub nominal_plus_safe: Vector2<f64>,
}

const BUNDLE_DIM: usize = 12;

impl StateBundle {
    fn pack(&self) -> SVector<f64, BUNDLE_DIM> {
        let p = self.pursuer.to_vector();
        let e = self.evader.to_vector();
        SVector::<f64, BUNDLE_DIM>::from_column_slice(&[
            p[0],
            p[1],
            p[2],
            p[3],
            e[0],
            e[1],
            e[2],
            e[3],
            self.obstacle.x[0],
            self.obstacle.x[1],
            self.sliding_integral[0],
            self.sliding_integral[1],
        ])
    }

    fn unpack(&self, y: &SVector<f64, BUNDLE_DIM>) -> Self {
        Self {
            pursuer: AgentState::new(Vector2::new(y[0], y[1]), Vector2::new(y[2], y[3])),
            evader: AgentState::new(Vector2::new(y[4], y[5]), Vector2::new(y[6], y[7])),
            obstacle: ObstacleState {
                x: Vector2::new(y[8], y[9]),
                ..self.obstacle
            },
            sliding_integral: Vector2::new(y[10], y[11]),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.pack().iter().all(|c| c.is_finite())
    }
}

/// Advances the bundle by `dt` with RK4. `step` is only used for fault reports.
pub fn integrate_step(
    model: DriftModel,
    bundle: &StateBundle,
    inputs: &StepInputs,
    dt: f64,
    step: usize,
) -> Result<StateBundle> {
    if !(dt > 0.0) {
        return Err(Error::Config(format!("dt must be positive, got {dt}")));
    }
    let rhs = |y: &SVector<f64, BUNDLE_DIM>| {
        let b = bundle.unpack(y);
        let dp = pursuer_derivative(model, &b.pursuer, &inputs.u_p, &inputs.disturbance);
        let de = evader_derivative(model, &b.evader, &inputs.evader_input);
        let dxo = obstacle_derivative(&b.obstacle);
        let dacc = model.accel(&b.pursuer) + inputs.nominal_plus_safe;
        SVector::<f64, BUNDLE_DIM>::from_column_slice(&[
            dp.x[0], dp.x[1], dp.v[0], dp.v[1], de.x[0], de.x[1], de.v[0], de.v[1], dxo[0], dxo[1],
            dacc[0], dacc[1],
        ])
    };
    let next = bundle.unpack(&rk4_step(&bundle.pack(), dt, rhs));
    if !next.is_finite() {
        return Err(Error::Numerical {
            step,
            what: "non-finite state after integration".into(),
        });
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Matrix2, Vector2};

    fn still_bundle() -> StateBundle {
        StateBundle {
            pursuer: AgentState::zero(),
            evader: AgentState::zero(),
            obstacle: ObstacleState {
                x: Vector2::new(5.0, 5.0),
                destination: Vector2::new(5.0, 5.0),
                gain: 0.05,
            },
            sliding_integral: Vector2::zeros(),
        }
    }

    #[test]
    fn zero_derivative_leaves_state_unchanged() {
        let b = still_bundle();
        let next = integrate_step(DriftModel::Nonlinear, &b, &StepInputs::default(), 1e-3, 0).unwrap();
        assert_eq!(next, b);
    }

    #[test]
    fn rejects_nonpositive_dt() {
        let b = still_bundle();
        assert!(integrate_step(DriftModel::Linear, &b, &StepInputs::default(), 0.0, 0).is_err());
    }

    #[test]
    fn reports_non_finite_state() {
        let mut b = still_bundle();
        b.pursuer.v[0] = f64::NAN;
        let err = integrate_step(DriftModel::Linear, &b, &StepInputs::default(), 1e-3, 17).unwrap_err();
        assert!(matches!(err, Error::Numerical { step: 17, .. }));
    }

    /// exp(A dt) for A = [[a, b], [-b, a]] is e^{a dt} * rotation(b dt).
    #[test]
    fn rk4_matches_matrix_exponential_to_fifth_order() {
        let (a, b) = (-0.3, 2.0);
        let m = Matrix2::new(a, b, -b, a);
        let x0 = Vector2::new(1.0, -0.5);
        let exact = |dt: f64| {
            let (s, c) = (b * dt).sin_cos();
            (a * dt).exp() * Matrix2::new(c, s, -s, c) * x0
        };
        let err = |dt: f64| (rk4_step(&x0, dt, |x| m * x) - exact(dt)).norm();
        let (e1, e2) = (err(0.05), err(0.025));
        // Local truncation error is O(dt^5): halving dt divides it by ~32.
        let ratio = e1 / e2;
        assert!(ratio > 28.0 && ratio < 36.0, "ratio {ratio}");
        assert!(err(1e-3) < 1e-13);
    }

    #[test]
    fn halving_dt_shows_fourth_order_self_convergence() {
        let run = |dt: f64| {
            let mut b = StateBundle {
                pursuer: AgentState::new(Vector2::new(0.0, 0.0), Vector2::new(3.0, -2.0)),
                evader: AgentState::new(Vector2::new(2.0, 5.0), Vector2::new(-1.0, 0.0)),
                obstacle: ObstacleState {
                    x: Vector2::new(10.0, 10.0),
                    destination: Vector2::new(40.0, 40.0),
                    gain: 0.05,
                },
                sliding_integral: Vector2::zeros(),
            };
            let inputs = StepInputs {
                u_p: Vector2::new(0.5, -0.2),
                evader_input: Vector2::new(-0.1, 0.3),
                disturbance: Vector2::zeros(),
                nominal_plus_safe: Vector2::new(0.5, -0.2),
            };
            let n = (2.0 / dt).round() as usize;
            for k in 0..n {
                b = integrate_step(DriftModel::Nonlinear, &b, &inputs, dt, k).unwrap();
            }
            b.pack()
        };
        let (c, m, f) = (run(0.1), run(0.05), run(0.025));
        let ratio = (c - m).norm() / (m - f).norm();
        assert!(ratio > 12.0 && ratio < 20.0, "ratio {ratio}");
    }
}
