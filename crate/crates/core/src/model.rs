//! Problem description shared by every solver: time and space grids,
//! parameter fields, control representations and cost specifications.
//!
//! The spatially-averaged model is represented by the same types on a
//! single-point grid with unit spacing, so a "scalar field" there is just one
//! real number.

use std::f64::consts::PI;

use rand::distributions::{Distribution, Open01};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Relative tolerance used when checking that pulse times sit on the
/// integration grid.
const GRID_ALIGNMENT_TOL: f64 = 1e-9;

/// Uniform time discretization with the candidate pulse times `t_k` placed on
/// integration grid points.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    t_end: f64,
    n_steps: usize,
    candidate_steps: Vec<usize>,
}

impl TimeGrid {
    /// Builds a grid of `n_steps` equal steps on `[0, t_end]` with candidate
    /// pulses at the given step indices.
    pub fn new(t_end: f64, n_steps: usize, candidate_steps: Vec<usize>) -> Result<Self> {
        if !(t_end > 0.0) || !t_end.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "t_end must be positive, got {t_end}"
            )));
        }
        if n_steps == 0 {
            return Err(Error::InvalidParameter("n_steps must be at least 1".into()));
        }
        if candidate_steps.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter(
                "candidate pulse steps must be strictly increasing".into(),
            ));
        }
        if let Some(&last) = candidate_steps.last() {
            if last >= n_steps {
                return Err(Error::InvalidParameter(format!(
                    "candidate pulse step {last} is not before t_end (step {n_steps})"
                )));
            }
        }
        Ok(Self {
            t_end,
            n_steps,
            candidate_steps,
        })
    }

    /// Regularly spaced interventions `t_k = k * pulse_interval`, `k >= 1`,
    /// `t_k < t_end`, with `steps_per_interval` integration steps between
    /// consecutive candidates.
    pub fn with_pulse_interval(
        t_end: f64,
        pulse_interval: f64,
        steps_per_interval: usize,
    ) -> Result<Self> {
        if !(pulse_interval > 0.0) || !pulse_interval.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "pulse interval must be positive, got {pulse_interval}"
            )));
        }
        if steps_per_interval == 0 {
            return Err(Error::InvalidParameter(
                "steps_per_interval must be at least 1".into(),
            ));
        }
        let step = pulse_interval / steps_per_interval as f64;
        let ratio = t_end / step;
        let n_steps = ratio.round();
        if n_steps < 1.0 || (ratio - n_steps).abs() > GRID_ALIGNMENT_TOL * ratio.max(1.0) {
            return Err(Error::InvalidParameter(format!(
                "t_end = {t_end} is not a whole number of integration steps of {step}"
            )));
        }
        let n_steps = n_steps as usize;
        let candidates = (1..)
            .map(|k| k * steps_per_interval)
            .take_while(|&s| s < n_steps)
            .collect();
        Self::new(t_end, n_steps, candidates)
    }

    /// A grid without intervention opportunities.
    pub fn without_pulses(t_end: f64, n_steps: usize) -> Result<Self> {
        Self::new(t_end, n_steps, Vec::new())
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Integration step `h`.
    pub fn step(&self) -> f64 {
        self.t_end / self.n_steps as f64
    }

    pub fn time(&self, n: usize) -> f64 {
        if n == self.n_steps {
            self.t_end
        } else {
            n as f64 * self.step()
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|n| self.time(n)).collect()
    }

    pub fn candidate_steps(&self) -> &[usize] {
        &self.candidate_steps
    }

    pub fn candidate_times(&self) -> Vec<f64> {
        self.candidate_steps.iter().map(|&n| self.time(n)).collect()
    }

    pub fn n_candidates(&self) -> usize {
        self.candidate_steps.len()
    }

    /// Same horizon subdivision, candidate list replaced.
    pub fn with_candidates(&self, candidate_steps: Vec<usize>) -> Result<Self> {
        Self::new(self.t_end, self.n_steps, candidate_steps)
    }
}

/// Regular grid of `dims[0] x dims[1] x dims[2]` points with spacing `ds`.
///
/// Points are numbered with the first axis varying fastest.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpaceGrid {
    dims: [usize; 3],
    spacing: f64,
}

impl SpaceGrid {
    pub fn new(dims: [usize; 3], spacing: f64) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::InvalidParameter(format!(
                "grid dimensions must be at least 1, got {dims:?}"
            )));
        }
        if !(spacing > 0.0) || !spacing.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "grid spacing must be positive, got {spacing}"
            )));
        }
        Ok(Self { dims, spacing })
    }

    /// The one-point grid carrying the spatially-averaged model.
    pub fn single() -> Self {
        Self {
            dims: [1, 1, 1],
            spacing: 1.0,
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Quadrature weight of one grid point, `ds^3`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(3)
    }

    /// `|Omega|` as seen by the grid quadrature: point count times `ds^3`.
    pub fn volume(&self) -> f64 {
        self.len() as f64 * self.cell_volume()
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        debug_assert!(i < self.dims[0] && j < self.dims[1] && k < self.dims[2]);
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.dims[0];
        let rest = idx / self.dims[0];
        [i, rest % self.dims[1], rest / self.dims[1]]
    }

    /// Index offset between neighbours along `axis`.
    pub fn stride(&self, axis: usize) -> usize {
        match axis {
            0 => 1,
            1 => self.dims[0],
            _ => self.dims[0] * self.dims[1],
        }
    }
}

/// One real value per grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: SpaceGrid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: SpaceGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "field has {} values for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn uniform(grid: SpaceGrid, value: f64) -> Self {
        Self {
            grid,
            values: vec![value; grid.len()],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self::uniform(SpaceGrid::single(), value)
    }

    pub fn from_fn(grid: SpaceGrid, mut f: impl FnMut([usize; 3]) -> f64) -> Self {
        let values = (0..grid.len()).map(|idx| f(grid.coords(idx))).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> SpaceGrid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, idx: usize) -> f64 {
        self.values[idx]
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.values.len() as f64
    }

    /// Grid quadrature `sum(values) * ds^3`.
    pub fn integral(&self) -> f64 {
        self.sum() * self.grid.cell_volume()
    }

    /// Grid quadrature of the L2 norm, `(sum(values^2) * ds^3)^(1/2)`.
    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() * self.grid.cell_volume()).sqrt()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_uniform(&self) -> bool {
        self.values.iter().all(|&v| v == self.values[0])
    }
}

/// Time dependence `g(t)` of a separable inhibition pressure `a(x) g(t)`.
#[derive(Debug, Clone, PartialEq)]
pub enum TimeProfile {
    /// `(t - peak_time)^2 (1 - cos(2 pi t / period))`.
    Seasonal { peak_time: f64, period: f64 },
    /// `g = 1`.
    Constant,
    /// Piecewise constant: `levels[j]` on `[breaks[j-1], breaks[j])`.
    Piecewise { breaks: Vec<f64>, levels: Vec<f64> },
}

impl TimeProfile {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            TimeProfile::Seasonal { peak_time, period } => {
                let d = t - peak_time;
                d * d * (1.0 - (2.0 * PI * t / period).cos())
            }
            TimeProfile::Constant => 1.0,
            TimeProfile::Piecewise { breaks, levels } => {
                let j = breaks.partition_point(|&b| b <= t);
                levels[j]
            }
        }
    }
}

/// Inhibition pressure `alpha(t, x) = a(x) g(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct InhibitionPressure {
    pub amplitude: ScalarField,
    pub profile: TimeProfile,
}

impl InhibitionPressure {
    pub fn seasonal(amplitude: ScalarField, peak_time: f64, period: f64) -> Self {
        Self {
            amplitude,
            profile: TimeProfile::Seasonal { peak_time, period },
        }
    }

    pub fn constant(amplitude: ScalarField) -> Self {
        Self {
            amplitude,
            profile: TimeProfile::Constant,
        }
    }

    pub fn piecewise(amplitude: ScalarField, breaks: Vec<f64>, levels: Vec<f64>) -> Result<Self> {
        if levels.len() != breaks.len() + 1 {
            return Err(Error::InvalidParameter(
                "piecewise profile needs exactly one more level than breaks".into(),
            ));
        }
        if breaks.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter(
                "piecewise profile breaks must be increasing".into(),
            ));
        }
        Ok(Self {
            amplitude,
            profile: TimeProfile::Piecewise { breaks, levels },
        })
    }

    /// `alpha(t, x)` at grid point `point`.
    pub fn eval(&self, t: f64, point: usize) -> f64 {
        self.amplitude.get(point) * self.profile.eval(t)
    }

    /// `alpha(t, .)` over the whole grid.
    pub fn eval_field(&self, t: f64, out: &mut [f64]) {
        let g = self.profile.eval(t);
        for (o, a) in out.iter_mut().zip(self.amplitude.values()) {
            *o = a * g;
        }
    }
}

/// Free-function form of [`InhibitionPressure::eval`].
pub fn eval_inhibition_pressure(p: &InhibitionPressure, t: f64, point: usize) -> f64 {
    p.eval(t, point)
}

/// Diagonal diffusion `diag(A_1, A_2, A_3)` sampled on cell faces.
///
/// `face(axis)[p]` is the coefficient on the face between point `p` and its
/// neighbour in the positive `axis` direction. Entries on the last layer of
/// each axis belong to faces outside the domain and are kept at zero, which
/// is how the no-flux boundary is imposed.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionField {
    grid: SpaceGrid,
    faces: [Vec<f64>; 3],
}

impl DiffusionField {
    pub fn zero(grid: SpaceGrid) -> Self {
        let n = grid.len();
        Self {
            grid,
            faces: [vec![0.0; n], vec![0.0; n], vec![0.0; n]],
        }
    }

    pub fn isotropic(grid: SpaceGrid, coefficient: f64) -> Result<Self> {
        Self::diagonal(grid, [coefficient; 3])
    }

    /// Constant per-axis coefficients on every interior face.
    pub fn diagonal(grid: SpaceGrid, coefficients: [f64; 3]) -> Result<Self> {
        Self::from_fn(grid, |axis, _| coefficients[axis])
    }

    /// Interior face coefficients from `f(axis, lower_point)`.
    pub fn from_fn(grid: SpaceGrid, mut f: impl FnMut(usize, [usize; 3]) -> f64) -> Result<Self> {
        let mut field = Self::zero(grid);
        let dims = grid.dims();
        for axis in 0..3 {
            for p in 0..grid.len() {
                let c = grid.coords(p);
                if c[axis] + 1 < dims[axis] {
                    field.faces[axis][p] = f(axis, c);
                }
            }
        }
        field.check()?;
        Ok(field)
    }

    /// Takes face arrays as stored (see type docs); boundary entries must be 0.
    pub fn from_faces(grid: SpaceGrid, faces: [Vec<f64>; 3]) -> Result<Self> {
        let field = Self { grid, faces };
        field.check()?;
        Ok(field)
    }

    fn check(&self) -> Result<()> {
        let issues = self.issues();
        if issues.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(issues.join("; ")))
        }
    }

    fn issues(&self) -> Vec<String> {
        let mut out = Vec::new();
        let dims = self.grid.dims();
        for axis in 0..3 {
            let face = &self.faces[axis];
            if face.len() != self.grid.len() {
                out.push(format!(
                    "diffusion faces on axis {axis} have {} entries for {} points",
                    face.len(),
                    self.grid.len()
                ));
                continue;
            }
            if let Some(p) = face.iter().position(|&a| !(a >= 0.0) || !a.is_finite()) {
                out.push(format!(
                    "diffusion coefficient on axis {axis} at point {p} is negative or not finite"
                ));
            }
            if let Some(p) =
                (0..face.len()).find(|&p| self.grid.coords(p)[axis] + 1 == dims[axis] && face[p] != 0.0)
            {
                out.push(format!(
                    "diffusion coefficient on boundary face (axis {axis}, point {p}) must be 0"
                ));
            }
        }
        out
    }

    pub fn grid(&self) -> SpaceGrid {
        self.grid
    }

    pub fn face(&self, axis: usize) -> &[f64] {
        &self.faces[axis]
    }

    pub fn max_coefficient(&self) -> f64 {
        self.faces
            .iter()
            .flat_map(|f| f.iter().copied())
            .fold(0.0, f64::max)
    }

    pub fn is_zero(&self) -> bool {
        self.faces.iter().all(|f| f.iter().all(|&a| a == 0.0))
    }
}

/// `sigma` (attractor shift under full chemical effort) and the observability
/// threshold `sigma_star`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChemicalParams {
    pub sigma: f64,
    pub sigma_star: f64,
}

/// Chemical effort `u(t, x)`, one field per integration step, held constant
/// on `[t_n, t_{n+1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousControl {
    samples: Vec<ScalarField>,
}

impl ContinuousControl {
    pub fn new(samples: Vec<ScalarField>) -> Self {
        Self { samples }
    }

    pub fn uniform(grid: SpaceGrid, n_steps: usize, value: f64) -> Self {
        Self {
            samples: vec![ScalarField::uniform(grid, value); n_steps],
        }
    }

    /// Averaged-model control from one value per step.
    pub fn from_scalars(values: &[f64]) -> Self {
        Self {
            samples: values.iter().map(|&v| ScalarField::scalar(v)).collect(),
        }
    }

    pub fn samples(&self) -> &[ScalarField] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [ScalarField] {
        &mut self.samples
    }

    pub fn sample(&self, n: usize) -> &ScalarField {
        &self.samples[n]
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// First value of every sample (the whole control for one-point grids).
    pub fn scalars(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.get(0)).collect()
    }
}

/// Pulse intensities `v_i(x)`: entry `i` multiplies the state at the `i`-th
/// realized pulse time.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseStrategy {
    values: Vec<ScalarField>,
}

impl PulseStrategy {
    pub fn new(values: Vec<ScalarField>) -> Self {
        Self { values }
    }

    pub fn uniform(grid: SpaceGrid, count: usize, value: f64) -> Self {
        Self {
            values: vec![ScalarField::uniform(grid, value); count],
        }
    }

    pub fn from_scalars(values: &[f64]) -> Self {
        Self {
            values: values.iter().map(|&v| ScalarField::scalar(v)).collect(),
        }
    }

    pub fn values(&self) -> &[ScalarField] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [ScalarField] {
        &mut self.values
    }

    pub fn get(&self, i: usize) -> Option<&ScalarField> {
        self.values.get(i)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn scalars(&self) -> Vec<f64> {
        self.values.iter().map(|s| s.get(0)).collect()
    }

    /// Number of entries that are not the identity pulse everywhere.
    pub fn intervention_count(&self) -> usize {
        self.values
            .iter()
            .filter(|f| f.values().iter().any(|&v| v != 1.0))
            .count()
    }
}

/// Cost coefficients. The running state weight is fixed at 1.
#[derive(Debug, Clone, PartialEq)]
pub struct CostSpec {
    /// `c_i(x)`, indexed like [`PulseStrategy`].
    pub pulse_unit_costs: Vec<ScalarField>,
    /// `C(t, x)`, one field per integration step.
    pub continuous_unit_cost: Vec<ScalarField>,
    /// `C_f(x)`.
    pub final_cost: ScalarField,
}

impl CostSpec {
    pub fn uniform(
        grid: SpaceGrid,
        n_pulses: usize,
        n_steps: usize,
        pulse_cost: f64,
        continuous_cost: f64,
        final_cost: f64,
    ) -> Self {
        Self {
            pulse_unit_costs: vec![ScalarField::uniform(grid, pulse_cost); n_pulses],
            continuous_unit_cost: vec![ScalarField::uniform(grid, continuous_cost); n_steps],
            final_cost: ScalarField::uniform(grid, final_cost),
        }
    }

    /// Costs sized for every candidate pulse of `params`.
    pub fn for_params(
        params: &ModelParams,
        pulse_cost: f64,
        continuous_cost: f64,
        final_cost: f64,
    ) -> Self {
        Self::uniform(
            params.space,
            params.time.n_candidates(),
            params.time.n_steps(),
            pulse_cost,
            continuous_cost,
            final_cost,
        )
    }
}

/// Evaluated components of the cost functional `J`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CostBreakdown {
    pub running_state: f64,
    pub running_control: f64,
    pub pulse: f64,
    pub terminal: f64,
    pub total: f64,
}

impl CostBreakdown {
    pub fn new(running_state: f64, running_control: f64, pulse: f64, terminal: f64) -> Self {
        Self {
            running_state,
            running_control,
            pulse,
            terminal,
            total: running_state + running_control + pulse + terminal,
        }
    }
}

/// Complete forward-problem description.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub time: TimeGrid,
    pub space: SpaceGrid,
    pub alpha: InhibitionPressure,
    pub diffusion: DiffusionField,
    pub chemical: ChemicalParams,
    /// Initial condition `rho(x)`.
    pub initial: ScalarField,
}

impl ModelParams {
    /// Averaged-model parameters on the one-point grid.
    pub fn averaged(
        time: TimeGrid,
        profile: TimeProfile,
        amplitude: f64,
        chemical: ChemicalParams,
        theta0: f64,
    ) -> Self {
        let space = SpaceGrid::single();
        Self {
            time,
            space,
            alpha: InhibitionPressure {
                amplitude: ScalarField::scalar(amplitude),
                profile,
            },
            diffusion: DiffusionField::zero(space),
            chemical,
            initial: ScalarField::scalar(theta0),
        }
    }

    /// Spatial means of amplitude and initial condition on the one-point grid.
    /// Exact reduction when the data are uniform.
    pub fn spatial_mean(&self) -> Self {
        Self::averaged(
            self.time.clone(),
            self.alpha.profile.clone(),
            self.alpha.amplitude.mean(),
            self.chemical,
            self.initial.mean(),
        )
    }
}

/// Everything a run needs: model, costs, and the controls that are held fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemBundle {
    pub params: ModelParams,
    pub costs: CostSpec,
    pub control: ContinuousControl,
    pub pulses: PulseStrategy,
}

/// Fields `q1 * (sin(pi x1/L1) sin(pi x2/L2) sin(pi x3/L3))^(1/3) + floor`
/// with `q1` fixed so the grid mean equals `target_mean`.
pub fn build_initial_condition(grid: SpaceGrid, target_mean: f64, floor: f64) -> Result<ScalarField> {
    if !(0.0 <= floor && floor < target_mean && target_mean <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "need 0 <= floor < target_mean <= 1, got floor = {floor}, target_mean = {target_mean}"
        )));
    }
    let dims = grid.dims();
    if dims.iter().any(|&d| d < 2) {
        return Err(Error::InvalidParameter(format!(
            "sine profile vanishes on a grid with a single-point axis {dims:?}; mean cannot exceed the floor"
        )));
    }
    let shape = ScalarField::from_fn(grid, |c| {
        let prod: f64 = (0..3)
            .map(|m| {
                let last = dims[m] - 1;
                if c[m] == 0 || c[m] == last {
                    0.0
                } else {
                    (PI * c[m] as f64 / last as f64).sin()
                }
            })
            .product();
        prod.cbrt()
    });
    let shape_mean = shape.mean();
    if !(shape_mean > 0.0) {
        return Err(Error::InvalidParameter(
            "sine profile has zero mean on this grid".into(),
        ));
    }
    let q1 = (target_mean - floor) / shape_mean;
    let values: Vec<f64> = shape.values().iter().map(|s| q1 * s + floor).collect();
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max > 1.0 {
        return Err(Error::InvalidParameter(format!(
            "initial condition would peak at {max} > 1 (q1 = {q1})"
        )));
    }
    ScalarField::new(grid, values)
}

/// Seeded uniform `(0, 1)` samples rescaled to the requested grid mean.
pub fn build_random_amplitude(grid: SpaceGrid, target_mean: f64, seed: u64) -> Result<ScalarField> {
    if !(target_mean > 0.0) || !target_mean.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "target mean must be positive, got {target_mean}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<f64> = (0..grid.len()).map(|_| Open01.sample(&mut rng)).collect();
    let mean = raw.iter().sum::<f64>() / raw.len() as f64;
    let scale = target_mean / mean;
    ScalarField::new(grid, raw.into_iter().map(|v| v * scale).collect())
}

/// Every violated well-posedness condition of a bundle; empty when solvable.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub issues: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn contains(&self, needle: &str) -> bool {
        self.issues.iter().any(|s| s.contains(needle))
    }

    fn push(&mut self, msg: impl Into<String>) {
        self.issues.push(msg.into());
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for issue in &self.issues {
            writeln!(f, "{issue}")?;
        }
        Ok(())
    }
}

fn first_outside(
    fields: &[ScalarField],
    ok: impl Fn(f64) -> bool,
) -> Option<(usize, usize, f64, usize)> {
    let mut first = None;
    let mut count = 0;
    for (n, f) in fields.iter().enumerate() {
        for (p, &v) in f.values().iter().enumerate() {
            if !ok(v) {
                count += 1;
                if first.is_none() {
                    first = Some((n, p, v));
                }
            }
        }
    }
    first.map(|(n, p, v)| (n, p, v, count))
}

/// Checks the box constraints on `sigma`, `u`, `v`, the sign conditions on
/// the data, and that every field lives on the problem grid.
pub fn validate(bundle: &ProblemBundle) -> ValidationReport {
    let mut report = ValidationReport::default();
    let params = &bundle.params;
    let grid = params.space;
    let n_steps = params.time.n_steps();
    let sigma = params.chemical.sigma;

    if !(0.0..=1.0).contains(&sigma) {
        report.push(format!("sigma out of [0,1]: {sigma}"));
    }
    if !(params.chemical.sigma_star >= 0.0) {
        report.push(format!(
            "sigma_star must be >= 0: {}",
            params.chemical.sigma_star
        ));
    }

    let on_grid = |name: &str, f: &ScalarField, report: &mut ValidationReport| {
        if f.grid() != grid {
            report.push(format!("{name} is not defined on the problem grid"));
        }
    };
    on_grid("initial condition", &params.initial, &mut report);
    on_grid("inhibition amplitude", &params.alpha.amplitude, &mut report);
    on_grid("final cost", &bundle.costs.final_cost, &mut report);
    if params.diffusion.grid() != grid {
        report.push("diffusion field is not defined on the problem grid");
    }
    report.issues.extend(params.diffusion.issues());

    if let Some(p) = params.initial.values().iter().position(|v| !(0.0..=1.0).contains(v)) {
        report.push(format!(
            "initial condition out of [0,1] at point {p}: {}",
            params.initial.get(p)
        ));
    }
    if let Some(p) = params.alpha.amplitude.values().iter().position(|&a| !(a >= 0.0)) {
        report.push(format!("H1: inhibition amplitude negative at point {p}"));
    }
    match &params.alpha.profile {
        TimeProfile::Seasonal { period, .. } if !(*period > 0.0) => {
            report.push(format!("inhibition period must be positive: {period}"));
        }
        TimeProfile::Piecewise { levels, .. } if levels.iter().any(|&l| !(l >= 0.0)) => {
            report.push("H1: piecewise inhibition profile has a negative level");
        }
        _ => {}
    }

    let u = bundle.control.samples();
    if u.len() != n_steps {
        report.push(format!(
            "continuous control has {} samples for {n_steps} steps",
            u.len()
        ));
    }
    if u.iter().any(|s| s.grid() != grid) {
        report.push("continuous control is not defined on the problem grid");
    }
    if let Some((n, p, v, count)) = first_outside(u, |v| (0.0..=1.0).contains(&v)) {
        report.push(format!(
            "H6: continuous control out of [0,1] at step {n}, point {p}: {v} ({count} samples)"
        ));
    }
    if let Some((n, p, v, _)) = first_outside(u, |v| sigma * v <= 1.0 - 1e-9) {
        report.push(format!(
            "sigma * u reaches 1 at step {n}, point {p} (u = {v}); the attractor 1 - sigma u degenerates"
        ));
    }

    let v = bundle.pulses.values();
    if v.iter().any(|s| s.grid() != grid) {
        report.push("pulse strategy is not defined on the problem grid");
    }
    if let Some((i, p, val, count)) = first_outside(v, |x| (0.0..=1.0).contains(&x)) {
        report.push(format!(
            "H7: pulse value out of [0,1] at pulse {i}, point {p}: {val} ({count} values)"
        ));
    }
    if v.len() < params.time.n_candidates() {
        report.push(format!(
            "pulse strategy has {} entries for {} candidate pulse times",
            v.len(),
            params.time.n_candidates()
        ));
    }

    let costs = &bundle.costs;
    if costs.pulse_unit_costs.len() != v.len() {
        report.push(format!(
            "pulse unit costs have {} entries for a strategy of length {}",
            costs.pulse_unit_costs.len(),
            v.len()
        ));
    }
    if costs.continuous_unit_cost.len() != n_steps {
        report.push(format!(
            "continuous unit cost has {} samples for {n_steps} steps",
            costs.continuous_unit_cost.len()
        ));
    }
    let all_costs = costs
        .pulse_unit_costs
        .iter()
        .chain(costs.continuous_unit_cost.iter())
        .chain(std::iter::once(&costs.final_cost));
    if all_costs.clone().any(|f| f.grid() != grid) {
        report.push("cost fields are not defined on the problem grid");
    }
    if all_costs.flat_map(|f| f.values().iter()).any(|&c| !(c >= 0.0)) {
        report.push("costs must be nonnegative");
    }
    report
}
