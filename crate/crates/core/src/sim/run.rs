//! Closed-loop simulation: safeguard first, then the nominal policy, then
//! the sliding-mode follower, one RK4 step, one learner step.

use std::path::Path;

use nalgebra::{Vector2, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::{ControllerMode, NominalSource, ScenarioConfig};
use super::log::{self, TrajectoryLog};
use crate::dynamics::{evader_tracking_controller, AgentState, DisturbanceSampler, EvaderState, PursuerState};
use crate::game::{gare_solve, GareProblem, hji_residual, L2Accumulator, L2Sample};
use crate::integrator::{integrate_step, StateBundle, StepInputs};
use crate::learning::{
    actor_policy, bellman_error, excitation_monitor, learner_step, sample_batch,
    LearnerState, SampleGenerator, Weights,
};
use crate::safeguard::{self, gram_condition};
use crate::smc::{gain_update, reaching_monitor, robust_control, sliding_variable, SmcState};
use crate::{Error, Result};

const HJI_PROBES: usize = 200;

/// Summary metrics of one run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunReport {
    pub mode: String,
    pub seed: u64,
    pub dt: f64,
    pub t_end: f64,
    pub steps_completed: usize,
    pub capture_time: Option<f64>,
    pub capture_radius: f64,
    pub min_b_x: f64,
    pub min_b_v: f64,
    pub min_phi_x1: f64,
    pub b_x_violations: Vec<[f64; 2]>,
    pub b_v_violations: Vec<[f64; 2]>,
    pub safeguard_breached: bool,
    pub smc_hitting_time: Option<f64>,
    pub smc_residence_fraction: f64,
    pub smc_max_excursion: f64,
    pub smc_max_s_norm: f64,
    pub smc_gain_max: f64,
    pub smc_gain_cap_hit: bool,
    pub excitation_pass_rate: f64,
    pub final_w_c: Vec<f64>,
    pub final_w_a: Vec<f64>,
    pub final_w_p: Vec<f64>,
    pub gare_weights: Option<Vec<f64>>,
    pub critic_gare_rel_error: Option<f64>,
    pub hji_mean_initial: f64,
    pub hji_mean_final: f64,
    pub l2_lhs: f64,
    pub l2_rhs: f64,
    pub l2_ratio: Option<f64>,
    pub evader_energy: f64,
    pub evader_box_violations: usize,
    pub fault: Option<String>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub log: TrajectoryLog,
    pub report: RunReport,
    pub fault: Option<FaultInfo>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FaultInfo {
    pub step: usize,
    pub message: String,
}

/// Tracks the maximal intervals on which a signal is negative.
#[derive(Clone, Debug, Default)]
struct ViolationTracker {
    open: Option<f64>,
    last_t: f64,
    intervals: Vec<[f64; 2]>,
}

impl ViolationTracker {
    fn observe(&mut self, t: f64, value: f64) {
        if value < 0.0 {
            self.open.get_or_insert(t);
        } else if let Some(start) = self.open.take() {
            self.intervals.push([start, self.last_t]);
        }
        self.last_t = t;
    }

    fn finish(mut self) -> Vec<[f64; 2]> {
        if let Some(start) = self.open.take() {
            self.intervals.push([start, self.last_t]);
        }
        self.intervals
    }
}

struct NominalGenerator {
    source: NominalSource,
    rng: ChaCha8Rng,
    held: Vector2<f64>,
    next_draw: f64,
}

impl NominalGenerator {
    fn new(source: NominalSource, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(crate::rng_streams::NOMINAL);
        Self { source, rng, held: Vector2::zeros(), next_draw: 0.0 }
    }

    fn input(&mut self, t: f64, xi: &Vector4<f64>, learner: &LearnerState, cfg: &ScenarioConfig) -> Vector2<f64> {
        match self.source {
            NominalSource::Actor => actor_policy(xi, &learner.w_a, &cfg.game),
            NominalSource::Constant { u } => Vector2::from(u),
            NominalSource::RandomBounded { bound, hold } => {
                if t >= self.next_draw {
                    let ang = self.rng.random::<f64>() * std::f64::consts::TAU;
                    let rad = bound * self.rng.random::<f64>().sqrt();
                    self.held = Vector2::new(rad * ang.cos(), rad * ang.sin());
                    self.next_draw += hold;
                }
                self.held
            }
        }
    }
}

fn hji_probes(cfg: &ScenarioConfig) -> Vec<(PursuerState, EvaderState)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(crate::rng_streams::DIAGNOSTICS);
    let (hx, hv) = (cfg.learner.half_width_position.max(1e-3), cfg.learner.half_width_velocity.max(1e-3));
    let (zp, ze) = (cfg.initial.pursuer(), cfg.initial.evader());
    let mut jitter = |z: &AgentState| {
        let mut d = |h: f64| h * (2.0 * rng.random::<f64>() - 1.0);
        AgentState::new(z.x + Vector2::new(d(hx), d(hx)), z.v + Vector2::new(d(hv), d(hv)))
    };
    (0..HJI_PROBES).map(|_| (jitter(&zp), jitter(&ze))).collect()
}

/// Runs one scenario. Configuration errors and unsafe initial states are
/// returned as `Err`; a numerical fault mid-run yields the partial log with
/// `fault` set.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    cfg.check_initial_safety()?;

    let mode = cfg.mode;
    let dt = cfg.dt;
    let n_steps = cfg.n_steps();
    let model = cfg.drift;
    let gains = cfg.evader.gains();

    let mut bundle = StateBundle {
        pursuer: cfg.initial.pursuer(),
        evader: cfg.initial.evader(),
        obstacle: cfg.obstacle.initial_state(),
        sliding_integral: Vector2::zeros(),
    };
    let mut smc_state = SmcState::new(&bundle.pursuer, &cfg.smc);
    let mut learner = LearnerState::new(&cfg.learner);
    let mut dist = DisturbanceSampler::new(cfg.disturbance.clone(), cfg.seed);
    let mut samples = SampleGenerator::new(cfg.seed);
    let mut nominal = NominalGenerator::new(cfg.nominal, cfg.seed);

    let probes = hji_probes(cfg);
    let hji_initial = hji_residual(&learner.w_c, &probes, model, &cfg.game).mean_abs;

    let mut log = TrajectoryLog::new();
    let mut l2 = L2Accumulator::new(&cfg.game);
    let mut bx_viol = ViolationTracker::default();
    let mut bv_viol = ViolationTracker::default();
    let (mut min_bx, mut min_bv, mut min_phi) = (f64::INFINITY, f64::INFINITY, f64::INFINITY);
    let mut breached = false;
    let mut capture_time = None;
    let mut s_times = Vec::with_capacity(n_steps + 1);
    let mut s_norms = Vec::with_capacity(n_steps + 1);
    let mut gain_max = smc_state.gain;
    let mut excitation_passes = 0usize;
    let mut learner_steps = 0usize;
    let mut box_violations = 0usize;
    let mut fault = None;
    let mut steps_completed = 0;

    for k in 0..=n_steps {
        let t = k as f64 * dt;
        let zp = bundle.pursuer;
        let ze = bundle.evader;
        let xo = bundle.obstacle.x;
        let xi = zp.to_vector() - ze.to_vector();

        // Leader: the safeguard sees only the pursuer and obstacle state.
        let eval = safeguard::evaluate(&zp, &xo, &cfg.safeguard);
        let u_s = if mode.uses_safeguard() { eval.u_s } else { Vector2::zeros() };
        if mode.uses_safeguard() && eval.breached {
            breached = true;
        }
        min_bx = min_bx.min(eval.b_x);
        min_bv = min_bv.min(eval.b_v);
        min_phi = min_phi.min(eval.phi_x1);
        bx_viol.observe(t, eval.b_x);
        bv_viol.observe(t, eval.b_v);
        let gram = gram_condition(&eval.beta_1, &eval.beta_2);

        let u_n = nominal.input(t, &xi, &learner, cfg);

        // Follower: the sliding variable carries u_s only through the integral.
        let s = sliding_variable(&zp, &bundle.sliding_integral, &smc_state);
        let u_r = if mode.uses_robust() {
            robust_control(&s, smc_state.gain, cfg.smc.rho)
        } else {
            Vector2::zeros()
        };
        let u_p = u_s + u_r + u_n;

        let d = dist.sample(t);
        let target = cfg.evader.target_at(t);
        let u_e = evader_tracking_controller(model, &ze, &target, &gains);

        if capture_time.is_none() && xi.fixed_rows::<2>(0).norm() < cfg.capture_radius {
            capture_time = Some(t);
        }
        if let Some(bound) = cfg.evader.omega_bound {
            if ze.to_vector().amax() > bound {
                box_violations += 1;
            }
        }
        s_times.push(t);
        s_norms.push(s.norm());

        let current = bellman_error(&zp, &ze, &learner, model, &cfg.game);
        let batch = if cfg.learning {
            match sample_batch(&zp, &ze, &learner, &cfg.learner, model, &cfg.game, samples.rng()) {
                Ok(b) => Some(b),
                Err(e) => {
                    fault = Some(FaultInfo { step: k, message: e.to_string() });
                    break;
                }
            }
        } else {
            None
        };
        let excitation = batch.as_ref().map(|b| excitation_monitor(b, cfg.learner.lambda_c));

        if k % cfg.log_every == 0 {
            l2.push(&L2Sample { t, xi, u_n, u_e });
            let acc = l2.result();
            let mut row = Vec::with_capacity(log::column_count());
            row.push(t);
            row.extend(zp.to_vector().iter());
            row.extend(ze.to_vector().iter());
            row.extend(xo.iter());
            row.extend(xi.iter());
            for v in [u_n, u_r, u_s, u_p, u_e, d] {
                row.extend(v.iter());
            }
            row.extend([
                eval.b_x,
                eval.b_v,
                eval.phi_x1,
                s.norm(),
                smc_state.gain,
                f64::from(smc_state.mode.as_index()),
                u_r.norm(),
                u_s.norm(),
                gram.min_eigenvalue,
            ]);
            row.extend(learner.w_c.iter());
            row.extend(learner.w_a.iter());
            row.extend(learner.w_p.iter());
            row.extend([
                current.delta,
                excitation.map_or(f64::NAN, |e| e.min_eigenvalue),
                learner.gamma.norm(),
                acc.lhs,
                acc.rhs,
                acc.evader_energy,
            ]);
            log.push(row);
        }
        if k == n_steps {
            break;
        }

        smc_state = gain_update(&smc_state, &s, t, dt, &cfg.smc);
        gain_max = gain_max.max(smc_state.gain);

        let step_result = (|| -> Result<()> {
            if let (Some(batch), Some(exc)) = (&batch, excitation) {
                excitation_passes += usize::from(exc.passes);
                learner_steps += 1;
                learner = learner_step(&learner, &current, batch, &cfg.learner, &cfg.game, dt, k)?;
            }
            let inputs = StepInputs { u_p, evader_input: u_e, disturbance: d, nominal_plus_safe: u_s + u_n };
            bundle = integrate_step(model, &bundle, &inputs, dt, k)?;
            Ok(())
        })();
        if let Err(e) = step_result {
            let step = match &e {
                Error::Numerical { step, .. } => *step,
                _ => k,
            };
            fault = Some(FaultInfo { step, message: e.to_string() });
            break;
        }
        steps_completed = k + 1;
    }

    let reach = reaching_monitor(&s_times, &s_norms, cfg.smc.epsilon);
    let gare = gare_solve(&GareProblem::double_integrator(&cfg.game)).ok().and_then(|s| s.weights());
    let rel_err = gare.map(|w: Weights| (learner.w_c - w).norm() / w.norm());
    let acc = l2.result();
    let report = RunReport {
        mode: mode.to_string(),
        seed: cfg.seed,
        dt,
        t_end: cfg.t_end,
        steps_completed,
        capture_time,
        capture_radius: cfg.capture_radius,
        min_b_x: min_bx,
        min_b_v: min_bv,
        min_phi_x1: min_phi,
        b_x_violations: bx_viol.finish(),
        b_v_violations: bv_viol.finish(),
        safeguard_breached: breached,
        smc_hitting_time: reach.hitting_time,
        smc_residence_fraction: reach.residence_fraction,
        smc_max_excursion: reach.max_excursion,
        smc_max_s_norm: s_norms.iter().copied().fold(0.0, f64::max),
        smc_gain_max: gain_max,
        smc_gain_cap_hit: smc_state.cap_hit,
        excitation_pass_rate: if learner_steps == 0 { 0.0 } else { excitation_passes as f64 / learner_steps as f64 },
        final_w_c: learner.w_c.iter().copied().collect(),
        final_w_a: learner.w_a.iter().copied().collect(),
        final_w_p: learner.w_p.iter().copied().collect(),
        gare_weights: gare.map(|w| w.iter().copied().collect()),
        critic_gare_rel_error: rel_err,
        hji_mean_initial: hji_initial,
        hji_mean_final: hji_residual(&learner.w_c, &probes, model, &cfg.game).mean_abs,
        l2_lhs: acc.lhs,
        l2_rhs: acc.rhs,
        l2_ratio: acc.ratio.is_finite().then_some(acc.ratio),
        evader_energy: acc.evader_energy,
        evader_box_violations: box_violations,
        fault: fault.as_ref().map(|f| f.message.clone()),
    };
    Ok(RunOutcome { log, report, fault })
}

pub fn write_outputs(outcome: &RunOutcome, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join("trajectory.csv"))?);
    outcome.log.write_csv(&mut f)?;
    std::io::Write::flush(&mut f)?;
    std::fs::write(dir.join("report.json"), outcome.report.to_json() + "\n")?;
    Ok(())
}

#[derive(Clone, Debug)]
pub struct Comparison {
    pub runs: Vec<(ControllerMode, RunOutcome)>,
}

/// Runs every mode with the same seed, in parallel.
pub fn compare_modes(cfg: &ScenarioConfig, modes: &[ControllerMode]) -> Result<Comparison> {
    if modes.is_empty() {
        return Err(Error::Usage("compare needs at least one mode".into()));
    }
    let results: Vec<Result<RunOutcome>> = std::thread::scope(|scope| {
        let handles: Vec<_> = modes
            .iter()
            .map(|&m| {
                let mut c = cfg.clone();
                c.mode = m;
                scope.spawn(move || run_scenario(&c))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("simulation thread panicked")).collect()
    });
    let mut runs = Vec::with_capacity(modes.len());
    for (m, r) in modes.iter().zip(results) {
        runs.push((*m, r?));
    }
    Ok(Comparison { runs })
}

impl Comparison {
    /// Side-by-side table of the headline metrics.
    pub fn metric_table(&self) -> String {
        let fmt_opt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.3}"));
        type Metric<'a> = (&'static str, Box<dyn Fn(&RunReport) -> String + 'a>);
        let metrics: Vec<Metric> = vec![
            ("capture_time", Box::new(move |r| fmt_opt(r.capture_time))),
            ("min_b_x", Box::new(|r| format!("{:.4}", r.min_b_x))),
            ("min_b_v", Box::new(|r| format!("{:.4}", r.min_b_v))),
            ("b_x_violations", Box::new(|r| r.b_x_violations.len().to_string())),
            ("b_v_violations", Box::new(|r| r.b_v_violations.len().to_string())),
            ("smc_residence", Box::new(|r| format!("{:.4}", r.smc_residence_fraction))),
            ("smc_gain_max", Box::new(|r| format!("{:.3}", r.smc_gain_max))),
            ("excitation_pass", Box::new(|r| format!("{:.4}", r.excitation_pass_rate))),
            ("l2_ratio", Box::new(move |r| fmt_opt(r.l2_ratio))),
            ("fault", Box::new(|r| r.fault.clone().unwrap_or_else(|| "-".into()))),
        ];
        let mut out = format!("{:<18}", "metric");
        for (m, _) in &self.runs {
            out.push_str(&format!(" {:>16}", m.as_str()));
        }
        out.push('\n');
        for (name, f) in &metrics {
            out.push_str(&format!("{name:<18}"));
            for (_, run) in &self.runs {
                out.push_str(&format!(" {:>16}", f(&run.report)));
            }
            out.push('\n');
        }
        out
    }

    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join("trajectory.csv"))?);
        std::io::Write::write_all(&mut f, format!("mode,{}\n", log::column_names().join(",")).as_bytes())?;
        for (m, run) in &self.runs {
            for row in run.log.rows() {
                log::write_row(&mut f, Some(m.as_str()), row)?;
            }
        }
        std::io::Write::flush(&mut f)?;
        std::fs::write(dir.join("comparison.txt"), self.metric_table())?;
        for (m, run) in &self.runs {
            std::fs::write(dir.join(format!("report_{}.json", m.as_str())), run.report.to_json() + "\n")?;
        }
        Ok(())
    }
}
