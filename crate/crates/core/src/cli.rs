//! Command-line front end.
//!
//! Exit codes: 0 success, 1 invalid configuration or parameters, 2 solver
//! failure (including a failed gradient check), 64 usage error.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::adjoint::{gradient_check, solve_adjoint};
use crate::averaged::simulate_averaged_with;
use crate::engine::{Scheme, StateHistory};
use crate::error::{Error, Result};
use crate::io::config::{Config, Experiment, ModelKind};
use crate::io::csv::{
    emit_alpha_profile, write_adjoint, write_averaged_trajectory, write_certificate, write_control,
    write_control_certificate, write_cost, write_cost_history, write_field_summary,
    write_field_trajectory, write_strategy,
};
use crate::io::manifest::Manifest;
use crate::io::presets::{preset, PRESET_NAMES};
use crate::model::{ContinuousControl, ModelParams, PulseStrategy, ScalarField, validate};
use crate::optimizer::{
    brute_force_pulse, fixed_point_pulse, projected_gradient_mixed, InteriorSampling, StepPolicy,
    StrategyResult, FIXED_POINT_MAX_ITER,
};
use crate::pde::{cost_pde, simulate_field};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_SOLVER: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

/// Largest relative error accepted by `gradient-check`.
pub const GRADIENT_TOLERANCE: f64 = 1e-4;

/// Manifest file written into every output directory.
pub const MANIFEST_FILE: &str = "manifest.txt";

#[derive(Debug, Parser)]
#[command(name = "anthracnose", version, about = "Anthracnose inhibition model: simulation and optimal control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// TOML problem configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// Overrides the configuration seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Stride of stored steps in field and costate outputs.
    #[arg(long, default_value_t = 1)]
    store_every: usize,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate the spatially-averaged model.
    SimulateAveraged(RunArgs),
    /// Simulate the reaction-diffusion model.
    SimulatePde(RunArgs),
    /// Optimal pulse strategy for the configured chemical control.
    OptimizePulse(RunArgs),
    /// Joint pulse and chemical optimization.
    OptimizeMixed(RunArgs),
    /// Exhaustive search over bang-bang pulse strategies.
    BruteForce(RunArgs),
    /// Adjoint gradients against central differences.
    GradientCheck(RunArgs),
    /// Run a built-in experiment.
    Preset {
        /// One of fig1 .. fig7.
        name: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1)]
        store_every: usize,
    },
}

/// Work performed for one configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    AlphaProfile,
    SimulateAveraged,
    SimulatePde,
    OptimizePulse,
    OptimizeMixed,
    BruteForce,
    GradientCheck,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Self::AlphaProfile => "alpha-profile",
            Self::SimulateAveraged => "simulate-averaged",
            Self::SimulatePde => "simulate-pde",
            Self::OptimizePulse => "optimize-pulse",
            Self::OptimizeMixed => "optimize-mixed",
            Self::BruteForce => "brute-force",
            Self::GradientCheck => "gradient-check",
        }
    }
}

/// Outcome of [`execute`]: `key=value` summary lines and an exit code.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub lines: Vec<String>,
    pub code: i32,
}

/// Exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidParameter(_)
        | Error::GridMismatch(_)
        | Error::StrategyTooShort { .. }
        | Error::PulseCountMismatch(_)
        | Error::ThresholdRegime { .. }
        | Error::EnumerationTooLarge { .. }
        | Error::Config(_) => EXIT_VALIDATION,
        Error::Quadrature { .. }
        | Error::LinearSolver { .. }
        | Error::FixedPointCycle { .. }
        | Error::DecimatedTrajectory { .. }
        | Error::Io(_)
        | Error::Csv(_) => EXIT_SOLVER,
    }
}

fn require_model(task: Task, config: &Config) -> Result<()> {
    let needed = match task {
        Task::SimulateAveraged => ModelKind::Averaged,
        Task::SimulatePde => ModelKind::Pde,
        _ => return Ok(()),
    };
    if config.model != needed {
        return Err(Error::Config(format!(
            "{} needs model = {:?}",
            task.name(),
            needed
        )));
    }
    Ok(())
}

fn realized_times(params: &ModelParams, steps: &[usize]) -> Vec<f64> {
    steps.iter().map(|&n| params.time.time(n)).collect()
}

/// Writes the state trajectory for `(u, v)`; averaged runs produce
/// `trajectory.csv`, spatial runs `fields.csv` and `summary.csv`.
fn write_state(
    out: &Path,
    params: &ModelParams,
    scheme: Scheme,
    u: &ContinuousControl,
    v: &PulseStrategy,
    store_every: usize,
) -> Result<Vec<usize>> {
    if params.space.len() == 1 {
        let traj = simulate_averaged_with(params, u, v, scheme)?;
        write_averaged_trajectory(&out.join("trajectory.csv"), &traj)?;
        Ok(traj.realized_steps())
    } else {
        let traj = simulate_field(params, scheme, u, v, store_every)?;
        write_field_trajectory(&out.join("fields.csv"), &traj)?;
        write_field_summary(&out.join("summary.csv"), &traj)?;
        Ok(traj.realized_steps())
    }
}

fn cost_lines(lines: &mut Vec<String>, r: &StrategyResult) {
    lines.push(format!("cost={}", r.cost.total));
    lines.push(format!("realized_pulses={}", r.realized_steps.len()));
    lines.push(format!("interventions={}", r.intervention_count()));
}

fn write_strategy_outputs(
    out: &Path,
    e: &Experiment,
    r: &StrategyResult,
    u: &ContinuousControl,
    store_every: usize,
) -> Result<()> {
    let params = &e.bundle.params;
    let costs = &e.bundle.costs;
    write_strategy(&out.join("strategy.csv"), &realized_times(params, &r.realized_steps), &r.pulses)?;
    write_certificate(&out.join("certificate.csv"), &r.certificate)?;
    write_cost(&out.join("cost.csv"), &r.cost)?;
    let steps = write_state(out, params, e.scheme, u, &r.pulses, store_every)?;
    let adj = solve_adjoint(params, e.scheme, u, &r.pulses, costs, &steps)?;
    write_adjoint(&out.join("adjoint.csv"), &adj, store_every)
}

/// Random interior base point for gradient checks: every entry uniform in
/// `[0.2, 0.8]`.
fn interior_point(params: &ModelParams, seed: u64) -> (ContinuousControl, PulseStrategy) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = params.space;
    let mut field = || {
        ScalarField::new(grid, (0..grid.len()).map(|_| rng.gen_range(0.2..=0.8)).collect())
            .expect("grid length")
    };
    let u = ContinuousControl::new((0..params.time.n_steps()).map(|_| field()).collect());
    let v = PulseStrategy::new((0..params.time.n_candidates()).map(|_| field()).collect());
    (u, v)
}

/// Runs `task` for `config`, writing every output and the manifest into `out`.
pub fn execute(task: Task, config: &Config, out: &Path, store_every: usize) -> Result<Report> {
    if store_every == 0 {
        return Err(Error::InvalidParameter("--store-every must be at least 1".into()));
    }
    require_model(task, config)?;
    let e = config.build()?;
    let report = validate(&e.bundle);
    if !report.is_ok() {
        return Err(Error::InvalidParameter(report.to_string()));
    }
    e.scheme.check(&e.bundle.params)?;
    std::fs::create_dir_all(out)?;
    Manifest::new(task.name(), e.config.clone()).write(&out.join(MANIFEST_FILE))?;

    let params = &e.bundle.params;
    let costs = &e.bundle.costs;
    let u = &e.bundle.control;
    let mut lines = Vec::new();
    let mut code = EXIT_OK;
    match task {
        Task::AlphaProfile => {
            emit_alpha_profile(params, &out.join("alpha.csv"))?;
            lines.push(format!("rows={}", params.time.n_steps() + 1));
        }
        Task::SimulateAveraged => {
            let traj = simulate_averaged_with(params, u, &e.bundle.pulses, e.scheme)?;
            write_averaged_trajectory(&out.join("trajectory.csv"), &traj)?;
            let cost = crate::averaged::cost_averaged(params, &traj, &e.bundle.pulses, u, costs)?;
            write_cost(&out.join("cost.csv"), &cost)?;
            lines.push(format!("final_theta={}", traj.final_value()));
            lines.push(format!("cost={}", cost.total));
        }
        Task::SimulatePde => {
            let full = simulate_field(params, e.scheme, u, &e.bundle.pulses, 1)?;
            let cost = cost_pde(params, &full, &e.bundle.pulses, u, costs)?;
            write_state(out, params, e.scheme, u, &e.bundle.pulses, store_every)?;
            write_cost(&out.join("cost.csv"), &cost)?;
            lines.push(format!("final_mean_theta={}", full.final_field().mean()));
            lines.push(format!("cost={}", cost.total));
        }
        Task::OptimizePulse => {
            let r = fixed_point_pulse(params, e.scheme, u, costs, FIXED_POINT_MAX_ITER)?;
            write_strategy_outputs(out, &e, &r, u, store_every)?;
            cost_lines(&mut lines, &r);
        }
        Task::OptimizeMixed => {
            let u0 = ContinuousControl::uniform(
                params.space,
                params.time.n_steps(),
                config.optimizer.initial_control,
            );
            let r = projected_gradient_mixed(params, e.scheme, costs, &u0, StepPolicy::default())?;
            let control = r.control.clone().unwrap_or(u0);
            write_strategy_outputs(out, &e, &r, &control, store_every)?;
            write_control(&out.join("control.csv"), params, &control)?;
            write_control_certificate(&out.join("control_certificate.csv"), &r.certificate)?;
            write_cost_history(&out.join("cost_history.csv"), &r.cost_history)?;
            cost_lines(&mut lines, &r);
            lines.push(format!("iterations={}", r.iterations));
            lines.push(format!("converged={}", r.converged));
        }
        Task::BruteForce => {
            let interior = InteriorSampling {
                samples: config.optimizer.interior_samples,
                seed: config.seed,
            };
            let b = brute_force_pulse(
                params,
                e.scheme,
                u,
                costs,
                config.optimizer.max_pulses,
                Some(interior),
            )?;
            let r = &b.best;
            write_strategy(&out.join("strategy.csv"), &realized_times(params, &r.realized_steps), &r.pulses)?;
            write_cost(&out.join("cost.csv"), &r.cost)?;
            let mut w = ::csv::Writer::from_path(out.join("brute_force.csv"))?;
            w.write_record(["key", "value"])?;
            w.write_record(["vertices".to_string(), b.vertices.to_string()])?;
            w.write_record(["best_cost".to_string(), format!("{}", r.cost.total)])?;
            if let Some(bi) = b.best_interior {
                w.write_record(["best_interior".to_string(), format!("{bi}")])?;
            }
            w.write_record(["interior_beating_vertex".to_string(), b.interior_beating_vertex.to_string()])?;
            w.flush()?;
            cost_lines(&mut lines, r);
            lines.push(format!("vertices={}", b.vertices));
            lines.push(format!("interior_beating_vertex={}", b.interior_beating_vertex));
        }
        Task::GradientCheck => {
            let (u, v) = interior_point(params, config.seed);
            let checks = gradient_check(
                params,
                e.scheme,
                &u,
                &v,
                costs,
                config.optimizer.directions,
                config.optimizer.fd_epsilon,
                config.seed.wrapping_add(1),
            )?;
            let mut w = ::csv::Writer::from_path(out.join("gradient_check.csv"))?;
            w.write_record(["kind", "adjoint", "finite_difference", "relative_error"])?;
            for c in &checks {
                w.write_record([
                    c.kind.name().to_string(),
                    format!("{}", c.adjoint),
                    format!("{}", c.finite_difference),
                    format!("{}", c.relative_error),
                ])?;
            }
            w.flush()?;
            let worst = checks.iter().map(|c| c.relative_error).fold(0.0, f64::max);
            lines.push(format!("comparisons={}", checks.len()));
            lines.push(format!("max_relative_error={worst}"));
            if worst > GRADIENT_TOLERANCE {
                code = EXIT_SOLVER;
            }
        }
    }
    Ok(Report { lines, code })
}

fn report(prefix: &str, result: Result<Report>) -> i32 {
    match result {
        Ok(r) => {
            for l in &r.lines {
                println!("{prefix}{l}");
            }
            r.code
        }
        Err(e) => {
            eprintln!("{prefix}error: {e}");
            exit_code(&e)
        }
    }
}

fn run_single(task: Task, args: RunArgs) -> i32 {
    let result = Config::load(&args.config).and_then(|mut cfg| {
        if let Some(s) = args.seed {
            cfg.seed = s;
        }
        execute(task, &cfg, &args.out, args.store_every)
    });
    report("", result)
}

fn run_preset(name: &str, out: &Path, seed: Option<u64>, store_every: usize) -> i32 {
    let Some(runs) = preset(name, seed.unwrap_or(0)) else {
        eprintln!("unknown preset {name:?}; expected one of {}", PRESET_NAMES.join(", "));
        return EXIT_USAGE;
    };
    let results: Vec<(String, Result<Report>)> = runs
        .par_iter()
        .map(|r| {
            let dir = out.join(&r.label);
            (r.label.clone(), execute(r.task, &r.config, &dir, store_every))
        })
        .collect();
    results
        .into_iter()
        .map(|(label, res)| report(&format!("{label}: "), res))
        .fold(EXIT_OK, |acc, c| if acc == EXIT_OK { c } else { acc })
}

/// Entry point; `argv[0]` is the program name.
pub fn run_cli(argv: &[String]) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match cli.command {
        Command::SimulateAveraged(a) => run_single(Task::SimulateAveraged, a),
        Command::SimulatePde(a) => run_single(Task::SimulatePde, a),
        Command::OptimizePulse(a) => run_single(Task::OptimizePulse, a),
        Command::OptimizeMixed(a) => run_single(Task::OptimizeMixed, a),
        Command::BruteForce(a) => run_single(Task::BruteForce, a),
        Command::GradientCheck(a) => run_single(Task::GradientCheck, a),
        Command::Preset {
            name,
            out,
            seed,
            store_every,
        } => run_preset(&name, &out, seed, store_every),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn argv(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn usage_errors() {
        assert_eq!(run_cli(&argv("anthracnose")), EXIT_USAGE);
        assert_eq!(run_cli(&argv("anthracnose frobnicate")), EXIT_USAGE);
        assert_eq!(run_cli(&argv("anthracnose simulate-averaged --out x")), EXIT_USAGE);
        assert_eq!(run_cli(&argv("anthracnose preset fig9 --out /tmp/none")), EXIT_USAGE);
        assert_eq!(run_cli(&argv("anthracnose --help")), EXIT_OK);
    }

    #[test]
    fn missing_config_is_validation_error() {
        let dir = tempfile::tempdir().unwrap();
        let a = format!(
            "anthracnose simulate-averaged --config {} --out {}",
            dir.path().join("absent.toml").display(),
            dir.path().join("o").display()
        );
        assert_eq!(run_cli(&argv(&a)), EXIT_VALIDATION);
    }

    #[test]
    fn error_codes() {
        assert_eq!(exit_code(&Error::Config("x".into())), EXIT_VALIDATION);
        assert_eq!(exit_code(&Error::Quadrature { time: 0.0 }), EXIT_SOLVER);
    }
}
