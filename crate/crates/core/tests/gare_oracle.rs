use nalgebra::{DMatrix, Matrix2, Matrix4, SMatrix, Vector2, Vector4};
use pegame_core::game::{gare_solve, hji_residual, GareProblem};
use pegame_core::learning::{actor_policy, bellman_error, perturber_policy, LearnerState};
use pegame_core::{AgentState, DriftModel, Error, GameConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn game(gamma: f64) -> GameConfig {
    GameConfig { gamma, ..GameConfig::default() }
}

fn skewed_game() -> GameConfig {
    GameConfig {
        q: Matrix4::new(
            2.0, 0.3, 0.0, 0.1, //
            0.3, 1.0, 0.2, 0.0, //
            0.0, 0.2, 1.5, 0.0, //
            0.1, 0.0, 0.0, 0.8,
        ),
        r: Matrix2::new(2.0, 0.3, 0.3, 1.0),
        t: Matrix2::new(1.0, -0.2, -0.2, 0.5),
        gamma: 5.0,
    }
}

fn random_pair(rng: &mut ChaCha8Rng, scale: f64) -> (AgentState, AgentState) {
    let mut v = || scale * (2.0 * rng.random::<f64>() - 1.0);
    let zp = AgentState::new(Vector2::new(v(), v()), Vector2::new(v(), v()));
    let ze = AgentState::new(Vector2::new(v(), v()), Vector2::new(v(), v()));
    (zp, ze)
}

/// Per-axis closed form of the double-integrator game Riccati equation.
fn double_integrator_closed_form(gamma: f64) -> Matrix4<f64> {
    let s = 1.0 - 1.0 / (gamma * gamma);
    let p2 = 1.0 / s.sqrt();
    let p3 = ((2.0 * p2 + 1.0) / s).sqrt();
    let p1 = s * p2 * p3;
    let mut p = Matrix4::zeros();
    for axis in 0..2 {
        let (x, v) = (axis, axis + 2);
        p[(x, x)] = p1;
        p[(x, v)] = p2;
        p[(v, x)] = p2;
        p[(v, v)] = p3;
    }
    p
}

/// Stabilizing Riccati solution from the matrix sign function of the
/// Hamiltonian `[[A, -S], [-Q, -A^T]]`.
fn hamiltonian_sign_solution(a: &DMatrix<f64>, s: &DMatrix<f64>, q: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut h = DMatrix::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(a);
    h.view_mut((0, n), (n, n)).copy_from(&(-s));
    h.view_mut((n, 0), (n, n)).copy_from(&(-q));
    h.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));

    let mut z = h;
    for _ in 0..100 {
        let c = z.determinant().abs().powf(-1.0 / (2 * n) as f64);
        let inv = z.clone().try_inverse().expect("Hamiltonian has no imaginary-axis eigenvalues");
        let next = (&z * c + inv / c) * 0.5;
        let change = (&next - &z).norm();
        z = next;
        if change <= 1e-14 * z.norm() {
            break;
        }
    }
    let eye = DMatrix::<f64>::identity(n, n);
    let w11 = z.view((0, 0), (n, n)).into_owned();
    let w12 = z.view((0, n), (n, n)).into_owned();
    let w21 = z.view((n, 0), (n, n)).into_owned();
    let w22 = z.view((n, n), (n, n)).into_owned();
    let mut lhs = DMatrix::zeros(2 * n, n);
    lhs.view_mut((0, 0), (n, n)).copy_from(&w12);
    lhs.view_mut((n, 0), (n, n)).copy_from(&(w22 + &eye));
    let mut rhs = DMatrix::zeros(2 * n, n);
    rhs.view_mut((0, 0), (n, n)).copy_from(&(-(w11 + &eye)));
    rhs.view_mut((n, 0), (n, n)).copy_from(&(-w21));
    let p = lhs.svd(true, true).solve(&rhs, 1e-14).unwrap();
    (&p + p.transpose()) * 0.5
}

fn coupling(problem: &GareProblem) -> DMatrix<f64> {
    let r_inv = problem.r.clone().try_inverse().unwrap();
    let t_inv = problem.t.clone().try_inverse().unwrap();
    &problem.b_p * r_inv * problem.b_p.transpose()
        - &problem.b_e * t_inv * problem.b_e.transpose() / (problem.gamma * problem.gamma)
}

#[test]
fn scalar_riccati_is_one() {
    let problem = GareProblem {
        a: DMatrix::zeros(1, 1),
        b_p: DMatrix::from_element(1, 1, 1.0),
        b_e: DMatrix::zeros(1, 1),
        q: DMatrix::from_element(1, 1, 1.0),
        r: DMatrix::from_element(1, 1, 1.0),
        t: DMatrix::from_element(1, 1, 1.0),
        gamma: 10.0,
    };
    let sol = gare_solve(&problem).unwrap();
    assert!((sol.p[(0, 0)] - 1.0).abs() < 1e-12, "P = {}", sol.p[(0, 0)]);
    assert!(sol.weights().is_none());
}

#[test]
fn double_integrator_matches_closed_form() {
    for gamma in [1.5, 2.0, 10.0, 100.0] {
        let sol = gare_solve(&GareProblem::double_integrator(&game(gamma))).unwrap();
        let expected = double_integrator_closed_form(gamma);
        let got = Matrix4::from_column_slice(sol.p.as_slice());
        assert!((got - expected).norm() < 1e-10 * expected.norm(), "gamma {gamma}: {got} vs {expected}");
        assert!(sol.residual < 1e-10, "residual {}", sol.residual);

        let w = sol.weights().unwrap();
        assert!((w[0] - expected[(0, 0)]).abs() < 1e-10);
        assert!((w[2] - expected[(2, 2)]).abs() < 1e-10);
        // x1 * v1 cross term carries twice the off-diagonal entry.
        assert!((w[5] - 2.0 * expected[(0, 2)]).abs() < 1e-10);
        assert!(w[4].abs() < 1e-10 && w[9].abs() < 1e-10);
    }
}

#[test]
fn large_gamma_recovers_lqr_from_hamiltonian() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cfg = GameConfig { gamma: 1e9, ..skewed_game() };
    for _ in 0..10 {
        let a = Matrix4::from_fn(|_, _| 2.0 * rng.random::<f64>() - 1.0);
        let b = SMatrix::<f64, 4, 2>::from_fn(|_, _| 2.0 * rng.random::<f64>() - 1.0);
        let problem = GareProblem::new(&a, &b, &b, &cfg);
        let sol = gare_solve(&problem).unwrap();

        let r_inv = problem.r.clone().try_inverse().unwrap();
        let s_lqr = &problem.b_p * r_inv * problem.b_p.transpose();
        let reference = hamiltonian_sign_solution(&problem.a, &s_lqr, &problem.q);
        let err = (&sol.p - &reference).norm() / reference.norm();
        assert!(err < 1e-8, "relative error {err:e}");
        assert!(sol.residual < 1e-10, "residual {}", sol.residual);
    }
}

#[test]
fn finite_gamma_game_matches_hamiltonian() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let cfg = skewed_game();
    let mut checked = 0;
    for _ in 0..20 {
        let a = Matrix4::from_fn(|_, _| 2.0 * rng.random::<f64>() - 1.0);
        let b_p = SMatrix::<f64, 4, 2>::from_fn(|_, _| 2.0 * rng.random::<f64>() - 1.0);
        let b_e = SMatrix::<f64, 4, 2>::from_fn(|_, _| rng.random::<f64>() - 0.5);
        let problem = GareProblem::new(&a, &b_p, &b_e, &cfg);
        let res = gare_solve(&problem);
        let Ok(sol) = res else { continue };
        let reference = hamiltonian_sign_solution(&problem.a, &coupling(&problem), &problem.q);
        let err = (&sol.p - &reference).norm() / reference.norm();
        assert!(err < 1e-8, "relative error {err:e}");
        checked += 1;
    }
    assert!(checked >= 18, "only {checked} problems solvable");
}

#[test]
fn riccati_residual_never_increases() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut problems = vec![
        GareProblem::double_integrator(&game(10.0)),
        GareProblem::double_integrator(&game(1.2)),
        GareProblem::double_integrator(&skewed_game()),
    ];
    for _ in 0..5 {
        let a = Matrix4::from_fn(|_, _| 2.0 * rng.random::<f64>() - 1.0);
        let b = SMatrix::<f64, 4, 2>::from_fn(|_, _| 2.0 * rng.random::<f64>() - 1.0);
        problems.push(GareProblem::new(&a, &b, &(b * 0.3), &skewed_game()));
    }
    for problem in &problems {
        let sol = gare_solve(problem).unwrap();
        let h = &sol.residual_history;
        assert!(!h.is_empty());
        for pair in h.windows(2) {
            assert!(pair[1] <= pair[0] * (1.0 + 1e-9) + 1e-12, "history {h:?}");
        }
        assert_eq!(sol.residual, *h.last().unwrap());
        assert!(sol.residual < 1e-10);
    }
}

#[test]
fn learned_policies_are_stationary_at_the_solution() {
    let cfg = skewed_game();
    let problem = GareProblem::double_integrator(&cfg);
    let sol = gare_solve(&problem).unwrap();
    let w = sol.weights().unwrap();
    let p = Matrix4::from_column_slice(sol.p.as_slice());
    let r_inv = cfg.r.try_inverse().unwrap();
    let t_inv = cfg.t.try_inverse().unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..200 {
        let xi = Vector4::from_fn(|_, _| 4.0 * rng.random::<f64>() - 2.0);
        let px = p * xi;
        let grad_v = Vector2::new(px[2], px[3]);
        let u_n = -r_inv * grad_v;
        let u_e = -(t_inv * grad_v) / (cfg.gamma * cfg.gamma);
        let scale = 1.0 + u_n.norm();
        assert!((actor_policy(&xi, &w, &cfg) - u_n).norm() < 1e-12 * scale);
        assert!((perturber_policy(&xi, &w, &cfg) - u_e).norm() < 1e-12 * scale);
    }
}

#[test]
fn hji_residual_vanishes_at_gare_weights() {
    for cfg in [game(10.0), skewed_game()] {
        let w = gare_solve(&GareProblem::double_integrator(&cfg)).unwrap().weights().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let samples: Vec<_> = (0..1000).map(|_| random_pair(&mut rng, 3.0)).collect();
        let stats = hji_residual(&w, &samples, DriftModel::Linear, &cfg);
        assert!(stats.max_abs < 1e-8, "max residual {}", stats.max_abs);
    }
}

#[test]
fn bellman_error_vanishes_at_gare_weights() {
    let cfg = skewed_game();
    let w = gare_solve(&GareProblem::double_integrator(&cfg)).unwrap().weights().unwrap();
    let state = LearnerState::from_weights(w, nalgebra::SMatrix::identity() * 100.0);
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for _ in 0..1000 {
        let (zp, ze) = random_pair(&mut rng, 3.0);
        let eval = bellman_error(&zp, &ze, &state, DriftModel::Linear, &cfg);
        assert!(eval.delta.abs() < 1e-8, "delta {}", eval.delta);
    }
}

#[test]
fn unstabilizable_pair_is_reported() {
    let problem = GareProblem {
        a: DMatrix::identity(2, 2),
        b_p: DMatrix::zeros(2, 1),
        b_e: DMatrix::zeros(2, 1),
        q: DMatrix::identity(2, 2),
        r: DMatrix::identity(1, 1),
        t: DMatrix::identity(1, 1),
        gamma: 10.0,
    };
    assert!(matches!(gare_solve(&problem), Err(Error::OracleUnavailable(_))));
}

#[test]
fn attenuation_below_threshold_is_reported() {
    // Equal input channels: the game has no stabilizing solution for gamma <= 1.
    let err = gare_solve(&GareProblem::double_integrator(&game(0.9)));
    assert!(matches!(err, Err(Error::OracleUnavailable(_))), "{err:?}");
}
