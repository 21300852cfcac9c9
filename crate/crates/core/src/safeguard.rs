//! Robust high-order barrier chain and the energy-form safeguard `u_s`.
//!
//! The position barrier `b_x = k_p (|x_p - x_o|^2 - r_o^2)` has relative
//! degree two; its first derivative is replaced by the robust lower bound
//! `b~_x` that only needs the obstacle speed bound `eta`. The velocity
//! barrier `b_v = v_p1 - v_min` has relative degree one.
//!
//! The position constraint row is normalized by `k_p`: `constraint_rows`
//! returns `2 (x_p - x_o)^T`, which is `L_g phi_x1 / k_p`. The KKT oracle
//! divides the position constraint offset by the same factor, so its
//! feasible set is unchanged.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::dynamics::{DriftModel, PursuerState};
use crate::{Error, Result};

/// Value both barriers are clamped to inside `u_s` after a breach.
pub const BREACH_CLAMP: f64 = 1e-6;

/// Relative threshold on `det(G) / (G11 G22) = sin^2(theta)` below which
/// the Gram matrix is treated as singular.
pub const GRAM_REL_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SafeguardConfig {
    /// Position barrier scale `k_p`.
    pub k_p: f64,
    /// Minimum safety distance `r_o` (m).
    pub r_o: f64,
    /// Minimum X-velocity `v_min` (m/s).
    pub v_min: f64,
    /// Class-K slope of the first chain level.
    pub p_1: f64,
    /// Class-K slope of the CBF condition, only used by the KKT oracle
    /// (for both the position and the velocity constraint).
    pub p_2: f64,
    /// Young-inequality tradeoff `k` in the robust margin.
    pub k: f64,
    /// Obstacle speed bound `eta` (m/s).
    pub eta: f64,
    /// Position safeguard gain `K~_x`.
    pub gain_x: f64,
    /// Velocity safeguard gain `K~_v`.
    pub gain_v: f64,
    /// Use the margin coefficients printed with the wheeled-robot example,
    /// `-(k_p / 4k)|x_p - x_o|^2 - k k_p eta^2`, instead of the general
    /// `-(k_p^2 / k)|x_p - x_o|^2 - k eta^2`.
    #[serde(default)]
    pub paper_sim_variant: bool,
}

impl Default for SafeguardConfig {
    fn default() -> Self {
        Self {
            k_p: 0.1,
            r_o: 5.0,
            v_min: -20.0,
            p_1: 50.0,
            p_2: 50.0,
            k: 1.0,
            eta: 2.5,
            gain_x: 1000.0,
            gain_v: 10.0,
            paper_sim_variant: false,
        }
    }
}

impl SafeguardConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("k_p", self.k_p),
            ("r_o", self.r_o),
            ("p_1", self.p_1),
            ("p_2", self.p_2),
            ("k", self.k),
            ("eta", self.eta),
            ("gain_x", self.gain_x),
            ("gain_v", self.gain_v),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("safeguard.{name} must be positive, got {v}")));
            }
        }
        if !self.v_min.is_finite() {
            return Err(Error::Config("safeguard.v_min must be finite".into()));
        }
        Ok(())
    }

    /// Coefficients `(c_delta, c_eta)` of `b~_x = 2 k_p d.v - c_delta |d|^2 - c_eta`.
    fn margin_coefficients(&self) -> (f64, f64) {
        if self.paper_sim_variant {
            (self.k_p / (4.0 * self.k), self.k * self.k_p * self.eta * self.eta)
        } else {
            (self.k_p * self.k_p / self.k, self.k * self.eta * self.eta)
        }
    }
}

/// `b_x = k_p (|x_p - x_o|^2 - r_o^2)`.
pub fn barrier_position(z_p: &PursuerState, x_o: &Vector2<f64>, cfg: &SafeguardConfig) -> f64 {
    cfg.k_p * ((z_p.x - x_o).norm_squared() - cfg.r_o * cfg.r_o)
}

/// `b_v = v_p1 - v_min`.
pub fn barrier_velocity(z_p: &PursuerState, cfg: &SafeguardConfig) -> f64 {
    z_p.v[0] - cfg.v_min
}

/// Robust lower bound `b~_x <= b_x'` valid for any obstacle velocity with
/// norm at most `eta`.
pub fn robust_lower_derivative(
    z_p: &PursuerState,
    x_o: &Vector2<f64>,
    cfg: &SafeguardConfig,
) -> f64 {
    let delta = z_p.x - x_o;
    let (c_delta, c_eta) = cfg.margin_coefficients();
    2.0 * cfg.k_p * delta.dot(&z_p.v) - c_delta * delta.norm_squared() - c_eta
}

/// `(phi_x0, phi_x1) = (b_x, b~_x + p_1 b_x)`.
pub fn phi_chain(z_p: &PursuerState, x_o: &Vector2<f64>, cfg: &SafeguardConfig) -> (f64, f64) {
    let phi0 = barrier_position(z_p, x_o, cfg);
    (phi0, robust_lower_derivative(z_p, x_o, cfg) + cfg.p_1 * phi0)
}

/// Input rows `(beta_1, beta_2) = (2 (x_p - x_o)^T, [1, 0])`.
pub fn constraint_rows(z_p: &PursuerState, x_o: &Vector2<f64>) -> (Vector2<f64>, Vector2<f64>) {
    (2.0 * (z_p.x - x_o), Vector2::new(1.0, 0.0))
}

/// Energy function `B(h)` that blows up at the barrier boundary `h -> 0+`.
pub trait EnergyFunction {
    fn value(&self, h: f64) -> f64;
    /// `dB/dh`.
    fn gradient(&self, h: f64) -> f64;
}

/// `B(h) = 1/h`, sandwiched by `1/gamma(h)` with `gamma` the identity.
#[derive(Clone, Copy, Debug, Default)]
pub struct InverseBarrier;

impl EnergyFunction for InverseBarrier {
    fn value(&self, h: f64) -> f64 {
        1.0 / h
    }

    fn gradient(&self, h: f64) -> f64 {
        -1.0 / (h * h)
    }
}

/// Evaluated barrier chain together with the resulting safeguard input.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BarrierEval {
    pub b_x: f64,
    pub b_v: f64,
    pub tilde_b_x: f64,
    pub phi_x0: f64,
    pub phi_x1: f64,
    pub beta_1: Vector2<f64>,
    pub beta_2: Vector2<f64>,
    /// `dB_x/dphi_x1` at the (possibly clamped) barrier value.
    pub grad_b_x: f64,
    pub grad_b_v: f64,
    pub zeta_x: f64,
    pub zeta_v: f64,
    pub u_s: Vector2<f64>,
    /// `phi_x1 <= 0` or `b_v <= 0` at evaluation time.
    pub breached: bool,
}

impl BarrierEval {
    /// Pointwise bound `K~_x |beta_1| / phi_x1^2 + K~_v / b_v^2` on `|u_s|`.
    pub fn decay_bound(&self, cfg: &SafeguardConfig) -> f64 {
        let px = self.phi_x1.max(BREACH_CLAMP);
        let bv = self.b_v.max(BREACH_CLAMP);
        cfg.gain_x * self.beta_1.norm() / (px * px) + cfg.gain_v / (bv * bv)
    }
}

/// Evaluates the chain and the safeguard with arbitrary energy functions.
/// Never fails: breached barriers are clamped to [`BREACH_CLAMP`] and
/// flagged so a diagnostic run can continue.
pub fn evaluate_with<Bx: EnergyFunction, Bv: EnergyFunction>(
    z_p: &PursuerState,
    x_o: &Vector2<f64>,
    cfg: &SafeguardConfig,
    energy_x: &Bx,
    energy_v: &Bv,
) -> BarrierEval {
    let b_x = barrier_position(z_p, x_o, cfg);
    let b_v = barrier_velocity(z_p, cfg);
    let tilde_b_x = robust_lower_derivative(z_p, x_o, cfg);
    let phi_x1 = tilde_b_x + cfg.p_1 * b_x;
    let (beta_1, beta_2) = constraint_rows(z_p, x_o);
    let breached = !(phi_x1 > 0.0 && b_v > 0.0);

    let grad_b_x = energy_x.gradient(phi_x1.max(BREACH_CLAMP));
    let grad_b_v = energy_v.gradient(b_v.max(BREACH_CLAMP));
    let zeta_x = -cfg.gain_x * grad_b_x;
    let zeta_v = -cfg.gain_v * grad_b_v;
    let u_s = beta_1 * zeta_x + beta_2 * zeta_v;

    BarrierEval {
        b_x,
        b_v,
        tilde_b_x,
        phi_x0: b_x,
        phi_x1,
        beta_1,
        beta_2,
        grad_b_x,
        grad_b_v,
        zeta_x,
        zeta_v,
        u_s,
        breached,
    }
}

pub fn evaluate(z_p: &PursuerState, x_o: &Vector2<f64>, cfg: &SafeguardConfig) -> BarrierEval {
    evaluate_with(z_p, x_o, cfg, &InverseBarrier, &InverseBarrier)
}

/// Energy-form safeguard `u_s = zeta_x beta_1^T + zeta_v beta_2^T`,
/// defined on the interior `phi_x1 > 0, b_v > 0` only.
pub fn safeguard_policy(
    z_p: &PursuerState,
    x_o: &Vector2<f64>,
    cfg: &SafeguardConfig,
) -> Result<Vector2<f64>> {
    let eval = evaluate(z_p, x_o, cfg);
    if eval.breached {
        return Err(Error::SafetyBreach(format!(
            "phi_x1 = {:.6e}, b_v = {:.6e}",
            eval.phi_x1, eval.b_v
        )));
    }
    Ok(eval.u_s)
}

/// Exact information the KKT safeguard needs and the energy form does not.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KktOracleInput {
    pub model: DriftModel,
    pub disturbance: Vector2<f64>,
    pub obstacle_velocity: Vector2<f64>,
    /// `u_r + u_n`, the rest of the pursuer input.
    pub base_input: Vector2<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActiveSet {
    None,
    Position,
    Velocity,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KktSolution {
    pub u_s: Vector2<f64>,
    pub lambda_x: f64,
    pub lambda_v: f64,
    pub active: ActiveSet,
    /// Constraint values `L_j + beta_j u_s` at the solution.
    pub slack: Vector2<f64>,
}

/// Affine constraint data `L_j + beta_j mu >= 0` for the safety QP.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SafetyConstraints {
    pub offsets: Vector2<f64>,
    pub beta_1: Vector2<f64>,
    pub beta_2: Vector2<f64>,
}

impl SafetyConstraints {
    pub fn slack(&self, mu: &Vector2<f64>) -> Vector2<f64> {
        Vector2::new(
            self.offsets[0] + self.beta_1.dot(mu),
            self.offsets[1] + self.beta_2.dot(mu),
        )
    }
}

/// Builds `L_x = (a_1 + L_g phi (u_r + u_n + d)) / k_p` and
/// `L_v = a_2 + L_g b_v (u_r + u_n + d)` from exact obstacle velocity and
/// disturbance. Obstacle acceleration does not enter `phi_x1'`.
pub fn safety_constraints(
    z_p: &PursuerState,
    x_o: &Vector2<f64>,
    input: &KktOracleInput,
    cfg: &SafeguardConfig,
) -> SafetyConstraints {
    let delta = z_p.x - x_o;
    let (c_delta, _) = cfg.margin_coefficients();
    let accel = input.model.accel(z_p);
    let (_, phi_x1) = phi_chain(z_p, x_o, cfg);
    let b_v = barrier_velocity(z_p, cfg);

    // d phi_x1 / d x_p; d phi_x1 / d x_o is its negative.
    let dphi_dx = 2.0 * cfg.k_p * z_p.v - 2.0 * c_delta * delta + 2.0 * cfg.p_1 * cfg.k_p * delta;
    let alpha_1 = dphi_dx.dot(&(z_p.v - input.obstacle_velocity))
        + 2.0 * cfg.k_p * delta.dot(&accel)
        + cfg.p_2 * phi_x1;
    let alpha_2 = accel[0] + cfg.p_2 * b_v;

    let (beta_1, beta_2) = constraint_rows(z_p, x_o);
    let w = input.base_input + input.disturbance;
    SafetyConstraints {
        offsets: Vector2::new(alpha_1 / cfg.k_p + beta_1.dot(&w), alpha_2 + beta_2.dot(&w)),
        beta_1,
        beta_2,
    }
}

/// Closed-form active-set solution of
/// `min 0.5 |mu|^2  s.t.  L_j + beta_j mu >= 0, j in {x, v}`.
pub fn solve_safety_qp(c: &SafetyConstraints) -> Result<KktSolution> {
    let finish = |mu: Vector2<f64>, lx: f64, lv: f64, active| KktSolution {
        u_s: mu,
        lambda_x: lx,
        lambda_v: lv,
        active,
        slack: c.slack(&mu),
    };
    let (lx, lv) = (c.offsets[0], c.offsets[1]);
    if lx >= 0.0 && lv >= 0.0 {
        return Ok(finish(Vector2::zeros(), 0.0, 0.0, ActiveSet::None));
    }

    // Feasibility of the untouched constraint is tested with a tolerance
    // scaled to the data so that round-off does not push us to the
    // two-constraint branch.
    let tol = 1e-12 * (1.0 + lx.abs().max(lv.abs()));
    let mut best: Option<KktSolution> = None;
    let single = |row: &Vector2<f64>, offset: f64| -> Option<(f64, Vector2<f64>)> {
        let nn = row.norm_squared();
        (offset < 0.0 && nn > 0.0).then(|| {
            let lambda = -offset / nn;
            (lambda, row * lambda)
        })
    };
    if let Some((lambda, mu)) = single(&c.beta_1, lx) {
        if c.slack(&mu)[1] >= -tol {
            best = Some(finish(mu, lambda, 0.0, ActiveSet::Position));
        }
    }
    if let Some((lambda, mu)) = single(&c.beta_2, lv) {
        if c.slack(&mu)[0] >= -tol && best.is_none_or(|b| mu.norm() < b.u_s.norm()) {
            best = Some(finish(mu, 0.0, lambda, ActiveSet::Velocity));
        }
    }
    if let Some(sol) = best {
        return Ok(sol);
    }

    let gram = gram_condition(&c.beta_1, &c.beta_2);
    if !gram.is_pd {
        return Err(Error::Infeasible(format!(
            "both constraints active with singular Gram matrix (min eigenvalue {:.3e})",
            gram.min_eigenvalue
        )));
    }
    let g = gram_matrix(&c.beta_1, &c.beta_2);
    let lambda = g
        .try_inverse()
        .ok_or_else(|| Error::Infeasible("Gram matrix not invertible".into()))?
        * (-c.offsets);
    if lambda[0] < -tol || lambda[1] < -tol {
        return Err(Error::Infeasible(format!(
            "negative multipliers ({:.3e}, {:.3e}) with both constraints active",
            lambda[0], lambda[1]
        )));
    }
    let (lx, lv) = (lambda[0].max(0.0), lambda[1].max(0.0));
    let mu = c.beta_1 * lx + c.beta_2 * lv;
    Ok(finish(mu, lx, lv, ActiveSet::Both))
}

/// KKT safeguard with exact disturbance and obstacle velocity.
pub fn kkt_safeguard_oracle(
    z_p: &PursuerState,
    x_o: &Vector2<f64>,
    input: &KktOracleInput,
    cfg: &SafeguardConfig,
) -> Result<KktSolution> {
    solve_safety_qp(&safety_constraints(z_p, x_o, input, cfg))
}

pub fn gram_matrix(beta_1: &Vector2<f64>, beta_2: &Vector2<f64>) -> Matrix2<f64> {
    let off = beta_1.dot(beta_2);
    Matrix2::new(beta_1.norm_squared(), off, off, beta_2.norm_squared())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GramCondition {
    pub is_pd: bool,
    pub min_eigenvalue: f64,
    /// `|beta_1|^2 |beta_2|^2 sin^2(theta)`, equal to the Gram determinant.
    pub sin2_term: f64,
}

pub fn gram_condition(beta_1: &Vector2<f64>, beta_2: &Vector2<f64>) -> GramCondition {
    let g = gram_matrix(beta_1, beta_2);
    // Lagrange identity: det G = (beta_1 x beta_2)^2, free of cancellation.
    let cross = beta_1[0] * beta_2[1] - beta_1[1] * beta_2[0];
    let det = cross * cross;
    let half_tr = 0.5 * (g[(0, 0)] + g[(1, 1)]);
    let half_gap = 0.5 * (g[(0, 0)] - g[(1, 1)]);
    let max_eig = half_tr + (half_gap * half_gap + g[(0, 1)] * g[(0, 1)]).sqrt();
    let min_eig = if max_eig > 0.0 { det / max_eig } else { 0.0 };
    let is_pd = g[(0, 0)] > 0.0 && det > GRAM_REL_TOL * g[(0, 0)] * g[(1, 1)];
    GramCondition {
        is_pd,
        min_eigenvalue: min_eig,
        sin2_term: det,
    }
}
