//! Built-in experiment configurations.

use crate::cli::Task;
use crate::io::config::{
    AlphaConfig, AmplitudeSpec, ChemicalConfig, Config, ControlConfig, CostsConfig,
    DiffusionConfig, GridConfig, InitialConfig, InitialMode, ModelKind, OptimizerConfig,
    TimeConfig,
};

/// Pulse candidates per unit time (weekly over a year).
pub const PULSES_PER_YEAR: f64 = 52.0;

/// Integration steps per pulse interval; gives `h = 1/1040 < 1e-3`.
pub const STEPS_PER_INTERVAL: usize = 20;

/// Unit costs swept by the averaged pulse presets.
pub const PULSE_COSTS: [f64; 3] = [0.25, 0.4, 0.5];

/// Final-state costs swept by `fig4`.
pub const FINAL_COSTS: [f64; 3] = [0.0, 0.25, 0.5];

pub const PRESET_NAMES: [&str; 7] = ["fig1", "fig2", "fig3", "fig4", "fig5", "fig6", "fig7"];

/// Averaged reference problem.
pub fn averaged_baseline() -> Config {
    Config {
        model: ModelKind::Averaged,
        scheme: None,
        seed: 0,
        time: TimeConfig {
            t_end: 1.0,
            pulse_interval: 1.0 / PULSES_PER_YEAR,
            steps_per_interval: STEPS_PER_INTERVAL,
        },
        grid: GridConfig::default(),
        alpha: AlphaConfig {
            amplitude: AmplitudeSpec::Constant(0.5 * 10f64.ln()),
            peak_time: 0.75,
            period: 0.2,
        },
        chemical: ChemicalConfig {
            sigma: 0.3,
            sigma_star: 0.0,
        },
        control: ControlConfig::default(),
        costs: CostsConfig {
            pulse: 0.4,
            continuous: 0.0,
            final_cost: 0.0,
        },
        initial: InitialConfig {
            mode: InitialMode::Uniform,
            mean: 0.4,
            floor: 0.2,
            path: None,
        },
        diffusion: DiffusionConfig::default(),
        optimizer: OptimizerConfig::default(),
    }
}

/// Spatial reference problem: 10 x 10 x 3 cells (11 x 11 x 4 points),
/// identity diffusion and the sine initial condition.
pub fn field_baseline() -> Config {
    let mut c = averaged_baseline();
    c.model = ModelKind::Pde;
    c.grid = GridConfig {
        points: [11, 11, 4],
        spacing: 1.0,
    };
    c.diffusion.coefficients = [1.0; 3];
    c.initial.mode = InitialMode::Sine;
    c.costs.pulse = 0.55;
    c
}

/// One member of a preset.
#[derive(Debug, Clone, PartialEq)]
pub struct PresetRun {
    /// Subdirectory name.
    pub label: String,
    pub task: Task,
    pub config: Config,
}

fn run(label: impl Into<String>, task: Task, config: Config) -> PresetRun {
    PresetRun {
        label: label.into(),
        task,
        config,
    }
}

/// Members of preset `name`; `seed` drives the random amplitude of `fig7`.
pub fn preset(name: &str, seed: u64) -> Option<Vec<PresetRun>> {
    let base = averaged_baseline();
    let runs = match name {
        "fig1" => vec![run("alpha", Task::AlphaProfile, base)],
        "fig2" | "fig3" => PULSE_COSTS
            .iter()
            .map(|&c| {
                let mut cfg = base.clone();
                cfg.costs.pulse = c;
                if name == "fig3" {
                    cfg.control.u = 1.0;
                }
                run(format!("c{c}"), Task::OptimizePulse, cfg)
            })
            .collect(),
        "fig4" => FINAL_COSTS
            .iter()
            .map(|&cf| {
                let mut cfg = base.clone();
                cfg.costs.pulse = 0.5;
                cfg.costs.final_cost = cf;
                run(format!("cf{cf}"), Task::OptimizePulse, cfg)
            })
            .collect(),
        "fig5" | "fig6" => {
            let mut cfg = field_baseline();
            if name == "fig6" {
                cfg.diffusion.coefficients = [10.0; 3];
            }
            vec![run("pde", Task::OptimizePulse, cfg)]
        }
        "fig7" => {
            let mut cfg = field_baseline();
            cfg.seed = seed;
            cfg.alpha.amplitude = AmplitudeSpec::Text("random".into());
            cfg.initial.mode = InitialMode::Uniform;
            vec![run("pde", Task::OptimizePulse, cfg)]
        }
        _ => return None,
    };
    Some(runs)
}
