//! TOML problem configuration.
//!
//! ```toml
//! model = "averaged"          # or "pde"
//! scheme = "semiflow"         # optional; "crank-nicolson" for pde
//! seed = 0                    # used by random amplitudes and sampling
//!
//! [time]
//! t_end = 1.0
//! pulse_interval = 0.019230769230769232
//! steps_per_interval = 20
//!
//! [grid]                      # pde only; point counts per axis
//! points = [11, 11, 4]
//! spacing = 1.0
//!
//! [alpha]
//! amplitude = 1.151292546497023   # or "random", "random:SEED", "csv:PATH"
//! peak_time = 0.75
//! period = 0.2
//!
//! [chemical]
//! sigma = 0.3
//! sigma_star = 0.0
//!
//! [control]
//! u = 0.0                     # constant chemical effort
//! v = 1.0                     # constant pulse value for simulations
//!
//! [costs]
//! pulse = 0.4
//! continuous = 0.0
//! final = 0.0
//!
//! [initial]
//! mode = "uniform"            # "sine" or "csv"
//! mean = 0.4
//! floor = 0.2                 # sine only
//! path = "rho.csv"            # csv only
//!
//! [diffusion]
//! coefficients = [1.0, 1.0, 1.0]
//!
//! [optimizer]                 # all optional
//! max_pulses = 20             # brute-force enumeration cap
//! interior_samples = 200
//! directions = 20             # gradient-check
//! fd_epsilon = 1e-5
//! initial_control = 0.5       # optimize-mixed start
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::engine::Scheme;
use crate::error::{Error, Result};
use crate::io::csv::read_field;
use crate::model::{
    build_initial_condition, build_random_amplitude, ChemicalParams, ContinuousControl, CostSpec,
    DiffusionField, InhibitionPressure, ModelParams, ProblemBundle, PulseStrategy, ScalarField,
    SpaceGrid, TimeGrid,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    #[default]
    Averaged,
    Pde,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub t_end: f64,
    pub pulse_interval: f64,
    pub steps_per_interval: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub points: [usize; 3],
    pub spacing: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            points: [1, 1, 1],
            spacing: 1.0,
        }
    }
}

/// Amplitude `a(x)`: a constant, `"random"` / `"random:SEED"`, or `"csv:PATH"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AmplitudeSpec {
    Constant(f64),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlphaConfig {
    pub amplitude: AmplitudeSpec,
    pub peak_time: f64,
    pub period: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChemicalConfig {
    pub sigma: f64,
    #[serde(default)]
    pub sigma_star: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlConfig {
    #[serde(default)]
    pub u: f64,
    #[serde(default = "one")]
    pub v: f64,
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self { u: 0.0, v: 1.0 }
    }
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostsConfig {
    pub pulse: f64,
    #[serde(default)]
    pub continuous: f64,
    #[serde(default, rename = "final")]
    pub final_cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum InitialMode {
    #[default]
    Uniform,
    Sine,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    #[serde(default)]
    pub mode: InitialMode,
    pub mean: f64,
    #[serde(default = "default_floor")]
    pub floor: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
}

fn default_floor() -> f64 {
    0.2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct DiffusionConfig {
    #[serde(default)]
    pub coefficients: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    /// Enumeration cap for `brute-force`.
    pub max_pulses: usize,
    /// Interior samples drawn by `brute-force`.
    pub interior_samples: usize,
    /// Random directions used by `gradient-check`.
    pub directions: usize,
    pub fd_epsilon: f64,
    /// Starting control of `optimize-mixed`.
    pub initial_control: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            max_pulses: 20,
            interior_samples: 200,
            directions: 20,
            fd_epsilon: 1e-5,
            initial_control: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub model: ModelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheme: Option<String>,
    #[serde(default)]
    pub seed: u64,
    pub time: TimeConfig,
    #[serde(default)]
    pub grid: GridConfig,
    pub alpha: AlphaConfig,
    pub chemical: ChemicalConfig,
    #[serde(default)]
    pub control: ControlConfig,
    pub costs: CostsConfig,
    pub initial: InitialConfig,
    #[serde(default)]
    pub diffusion: DiffusionConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
}

/// A configuration resolved into solver inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub config: Config,
    pub scheme: Scheme,
    pub bundle: ProblemBundle,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    /// Makes relative CSV paths relative to `base`.
    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &str| -> String {
            let pb = PathBuf::from(p);
            if pb.is_absolute() {
                p.to_string()
            } else {
                base.join(pb).to_string_lossy().into_owned()
            }
        };
        if let Some(p) = &self.initial.path {
            self.initial.path = Some(fix(p));
        }
        if let AmplitudeSpec::Text(t) = &self.alpha.amplitude {
            if let Some(p) = t.strip_prefix("csv:") {
                self.alpha.amplitude = AmplitudeSpec::Text(format!("csv:{}", fix(p)));
            }
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn scheme(&self) -> Result<Scheme> {
        match &self.scheme {
            Some(s) => s.parse(),
            None => Ok(match self.model {
                ModelKind::Averaged => Scheme::Semiflow,
                ModelKind::Pde => Scheme::CrankNicolson,
            }),
        }
    }

    pub fn space(&self) -> Result<SpaceGrid> {
        match self.model {
            ModelKind::Averaged => Ok(SpaceGrid::single()),
            ModelKind::Pde => SpaceGrid::new(self.grid.points, self.grid.spacing),
        }
    }

    fn amplitude(&self, grid: SpaceGrid) -> Result<ScalarField> {
        match &self.alpha.amplitude {
            AmplitudeSpec::Constant(a) => Ok(ScalarField::uniform(grid, *a)),
            AmplitudeSpec::Text(t) => {
                if let Some(path) = t.strip_prefix("csv:") {
                    return read_field(Path::new(path), grid);
                }
                let seed = match t.as_str() {
                    "random" => self.seed,
                    other => match other.strip_prefix("random:") {
                        Some(s) => s
                            .parse::<u64>()
                            .map_err(|_| Error::Config(format!("bad seed in {other:?}")))?,
                        None => {
                            return Err(Error::Config(format!(
                                "amplitude must be a number, \"random[:SEED]\" or \"csv:PATH\", got {other:?}"
                            )))
                        }
                    },
                };
                build_random_amplitude(grid, RANDOM_AMPLITUDE_MEAN, seed)
            }
        }
    }

    fn initial(&self, grid: SpaceGrid) -> Result<ScalarField> {
        match self.initial.mode {
            InitialMode::Uniform => Ok(ScalarField::uniform(grid, self.initial.mean)),
            InitialMode::Sine => build_initial_condition(grid, self.initial.mean, self.initial.floor),
            InitialMode::Csv => {
                let path = self.initial.path.as_deref().ok_or_else(|| {
                    Error::Config("initial.mode = \"csv\" needs initial.path".into())
                })?;
                read_field(Path::new(path), grid)
            }
        }
    }

    /// Builds the solver inputs; no validation beyond construction.
    pub fn build(&self) -> Result<Experiment> {
        let scheme = self.scheme()?;
        let space = self.space()?;
        let time = TimeGrid::with_pulse_interval(
            self.time.t_end,
            self.time.pulse_interval,
            self.time.steps_per_interval,
        )?;
        let d = self.diffusion.coefficients;
        let diffusion = if d == [0.0; 3] {
            DiffusionField::zero(space)
        } else {
            DiffusionField::diagonal(space, d)?
        };
        let params = ModelParams {
            alpha: InhibitionPressure::seasonal(
                self.amplitude(space)?,
                self.alpha.peak_time,
                self.alpha.period,
            ),
            initial: self.initial(space)?,
            diffusion,
            chemical: ChemicalParams {
                sigma: self.chemical.sigma,
                sigma_star: self.chemical.sigma_star,
            },
            space,
            time,
        };
        let n_steps = params.time.n_steps();
        let k = params.time.n_candidates();
        let costs = CostSpec::uniform(
            space,
            k,
            n_steps,
            self.costs.pulse,
            self.costs.continuous,
            self.costs.final_cost,
        );
        let bundle = ProblemBundle {
            control: ContinuousControl::uniform(space, n_steps, self.control.u),
            pulses: PulseStrategy::uniform(space, k, self.control.v),
            costs,
            params,
        };
        Ok(Experiment {
            config: self.clone(),
            scheme,
            bundle,
        })
    }
}

/// Mean of random amplitude fields: the averaged-model amplitude `0.5 ln 10`.
pub const RANDOM_AMPLITUDE_MEAN: f64 = 1.151_292_546_497_023;
