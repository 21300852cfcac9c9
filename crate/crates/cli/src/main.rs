use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use pegame_core::game::{gare_solve, GareProblem};
use pegame_core::{compare_modes, load_config, run_scenario, write_outputs, ControllerMode, Error};

#[derive(Parser)]
#[command(name = "pegame", version, about = "Safe robust learning pursuit-evasion simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write trajectory.csv and report.json.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        mode: Option<ControllerMode>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        t_end: Option<f64>,
        #[arg(long)]
        log_every: Option<usize>,
    },
    /// Run several controller modes with the same seed side by side.
    Compare {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated list, e.g. `safe-robust-rl,robust-rl`.
        #[arg(long)]
        modes: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reference solutions.
    Oracle {
        #[command(subcommand)]
        which: OracleCommand,
    },
}

#[derive(Subcommand)]
enum OracleCommand {
    /// Print the GARE weights for the linear double-integrator game.
    Gare {
        #[arg(long)]
        config: PathBuf,
    },
}

const EXIT_UNSAFE: u8 = 2;
const EXIT_FAULT: u8 = 3;
const EXIT_USAGE: u8 = 64;

fn main() -> ExitCode {
    // Exit code 2 is reserved for unsafe initial states, so argument
    // errors are remapped.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            match err.downcast_ref::<Error>() {
                Some(Error::UnsafeStart(_)) => ExitCode::from(EXIT_UNSAFE),
                Some(Error::Numerical { .. }) => ExitCode::from(EXIT_FAULT),
                Some(Error::Usage(_)) => ExitCode::from(EXIT_USAGE),
                _ => ExitCode::FAILURE,
            }
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Simulate { config, mode, seed, out, dt, t_end, log_every } => {
            let mut cfg = load_config(&config)?;
            if let Some(m) = mode {
                cfg.mode = m;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(v) = dt {
                cfg.dt = v;
            }
            if let Some(v) = t_end {
                cfg.t_end = v;
            }
            if let Some(v) = log_every {
                cfg.log_every = v;
            }
            let outcome = run_scenario(&cfg)?;
            write_outputs(&outcome, &out).with_context(|| format!("writing {}", out.display()))?;
            let r = &outcome.report;
            println!(
                "{}: capture_time={} min_b_x={:.4} min_b_v={:.4} rows={}",
                r.mode,
                r.capture_time.map_or("-".into(), |t| format!("{t:.3}")),
                r.min_b_x,
                r.min_b_v,
                outcome.log.len()
            );
            if let Some(f) = &outcome.fault {
                eprintln!("numerical fault at step {}: {}", f.step, f.message);
                return Ok(ExitCode::from(EXIT_FAULT));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Compare { config, modes, out } => {
            let modes = modes
                .split(',')
                .filter(|m| !m.trim().is_empty())
                .map(str::parse)
                .collect::<Result<Vec<ControllerMode>, _>>()?;
            let cfg = load_config(&config)?;
            let cmp = compare_modes(&cfg, &modes)?;
            cmp.write(&out).with_context(|| format!("writing {}", out.display()))?;
            print!("{}", cmp.metric_table());
            if cmp.runs.iter().any(|(_, r)| r.fault.is_some()) {
                return Ok(ExitCode::from(EXIT_FAULT));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Oracle { which: OracleCommand::Gare { config } } => {
            let cfg = load_config(&config)?;
            let sol = gare_solve(&GareProblem::double_integrator(&cfg.game))?;
            let w = sol.weights().expect("4x4 problem");
            println!("iterations {}", sol.iterations);
            println!("residual {:.3e}", sol.residual);
            let joined: Vec<String> = w.iter().map(|v| format!("{v:.12}")).collect();
            println!("weights {}", joined.join(" "));
            Ok(ExitCode::SUCCESS)
        }
    }
}
