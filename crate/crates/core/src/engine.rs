//! Time stepping shared by the averaged and space-dependent solvers.
//!
//! Both variants advance a vector of point values over one integration step
//! with an affine map `x -> P x + s`. The forward state, the costate and both
//! sensitivities all use the same `P`, which keeps forward and backward
//! solves discretely consistent.

use crate::error::{Error, Result};
use crate::linalg::conjugate_gradient;
use crate::model::{
    ContinuousControl, CostBreakdown, CostSpec, DiffusionField, ModelParams, PulseStrategy,
    ScalarField, SpaceGrid,
};
use crate::pde::apply_divergence_into;

/// Relative residual target for the implicit solves.
pub const CG_TOLERANCE: f64 = 1e-10;

/// Smallest admissible attractor `1 - sigma u`.
pub const ATTRACTOR_FLOOR: f64 = 1e-9;

/// Time discretization of the reaction-diffusion step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheme {
    /// Exact solution of the pointwise ODE for step-constant `alpha` and `u`
    /// (`alpha` frozen at the step midpoint). Requires zero diffusion.
    #[default]
    Semiflow,
    /// Centered differences with an implicit diffusion solve.
    CrankNicolson,
}

impl Scheme {
    /// Semiflow for the one-point averaged model, Crank-Nicolson otherwise.
    pub fn for_params(params: &ModelParams) -> Self {
        if params.space.len() == 1 && params.diffusion.is_zero() {
            Scheme::Semiflow
        } else {
            Scheme::CrankNicolson
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Semiflow => "semiflow",
            Scheme::CrankNicolson => "crank-nicolson",
        }
    }

    pub(crate) fn check(self, params: &ModelParams) -> Result<()> {
        if self == Scheme::Semiflow && !params.diffusion.is_zero() {
            return Err(Error::InvalidParameter(
                "the semiflow scheme requires zero diffusion; use Crank-Nicolson".into(),
            ));
        }
        Ok(())
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "semiflow" => Ok(Scheme::Semiflow),
            "crank-nicolson" | "cn" => Ok(Scheme::CrankNicolson),
            other => Err(Error::Config(format!("unknown scheme {other:?}"))),
        }
    }
}

/// A realized pulse: values just before (`pre`) and just after (`post`) the
/// jump at `time`, and the multiplier `v` of pulse number `index`.
#[derive(Debug, Clone, PartialEq)]
pub struct Jump<T> {
    pub index: usize,
    pub step: usize,
    pub time: f64,
    pub pre: T,
    pub post: T,
    pub v: T,
}

/// Storage usable as the payload of a [`Jump`].
pub trait PointValues {
    fn point_values(&self) -> &[f64];
}

impl PointValues for Vec<f64> {
    fn point_values(&self) -> &[f64] {
        self
    }
}

impl PointValues for ScalarField {
    fn point_values(&self) -> &[f64] {
        self.values()
    }
}

impl PointValues for f64 {
    fn point_values(&self) -> &[f64] {
        std::slice::from_ref(self)
    }
}

impl<T: PointValues> Jump<T> {
    pub fn as_slices(&self) -> Jump<&[f64]> {
        Jump {
            index: self.index,
            step: self.step,
            time: self.time,
            pre: self.pre.point_values(),
            post: self.post.point_values(),
            v: self.v.point_values(),
        }
    }
}

impl Jump<Vec<f64>> {
    pub(crate) fn into_fields(self, grid: SpaceGrid) -> Jump<ScalarField> {
        let f = |v: Vec<f64>| ScalarField::new(grid, v).expect("jump length matches grid");
        Jump {
            index: self.index,
            step: self.step,
            time: self.time,
            pre: f(self.pre),
            post: f(self.post),
            v: f(self.v),
        }
    }
}

/// `sqrt(sum theta^2 ds^3) >= sigma_star |Omega|`
pub(crate) fn threshold_met(values: &[f64], grid: SpaceGrid, sigma_star: f64) -> bool {
    let l2 = (values.iter().map(|x| x * x).sum::<f64>() * grid.cell_volume()).sqrt();
    l2 >= sigma_star * grid.volume()
}

fn check_control(params: &ModelParams, u: &ContinuousControl) -> Result<()> {
    let n = params.time.n_steps();
    if u.len() != n {
        return Err(Error::InvalidParameter(format!(
            "continuous control has {} samples for {n} steps",
            u.len()
        )));
    }
    if let Some(s) = u.samples().iter().find(|s| s.grid() != params.space) {
        return Err(Error::GridMismatch(format!(
            "control sample on grid {:?}, problem grid {:?}",
            s.grid().dims(),
            params.space.dims()
        )));
    }
    let sigma = params.chemical.sigma;
    for (n, s) in u.samples().iter().enumerate() {
        if let Some(p) = s
            .values()
            .iter()
            .position(|&x| !(1.0 - sigma * x >= ATTRACTOR_FLOOR))
        {
            return Err(Error::InvalidParameter(format!(
                "1 - sigma u = {} at step {n}, point {p} (needs sigma u <= 1 - {ATTRACTOR_FLOOR})",
                1.0 - sigma * s.get(p)
            )));
        }
    }
    Ok(())
}

fn check_fields(grid: SpaceGrid, fields: &[ScalarField], what: &str) -> Result<()> {
    if let Some(f) = fields.iter().find(|f| f.grid() != grid) {
        return Err(Error::GridMismatch(format!(
            "{what} on grid {:?}, problem grid {:?}",
            f.grid().dims(),
            grid.dims()
        )));
    }
    Ok(())
}

fn check_params(params: &ModelParams, scheme: Scheme) -> Result<()> {
    scheme.check(params)?;
    let grid = params.space;
    check_fields(grid, std::slice::from_ref(&params.initial), "initial condition")?;
    check_fields(grid, std::slice::from_ref(&params.alpha.amplitude), "inhibition amplitude")?;
    if params.diffusion.grid() != grid {
        return Err(Error::GridMismatch("diffusion field grid differs".into()));
    }
    Ok(())
}

/// The one-step map `x -> P x + s` for step `n`.
pub(crate) struct StepOperator<'a> {
    scheme: Scheme,
    diffusion: &'a DiffusionField,
    grid: SpaceGrid,
    sigma: f64,
    h: f64,
    time: f64,
    alpha: Vec<f64>,
    attractor: Vec<f64>,
    lambda: Vec<f64>,
    decay: Vec<f64>,
    scratch: Vec<f64>,
}

impl<'a> StepOperator<'a> {
    /// Overrides the integration step taken from the time grid.
    pub(crate) fn set_step(&mut self, h: f64) {
        self.h = h;
    }

    pub(crate) fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub(crate) fn new(params: &'a ModelParams, scheme: Scheme) -> Self {
        let n = params.space.len();
        Self {
            scheme,
            diffusion: &params.diffusion,
            grid: params.space,
            sigma: params.chemical.sigma,
            h: params.time.step(),
            time: 0.0,
            alpha: vec![0.0; n],
            attractor: vec![1.0; n],
            lambda: vec![0.0; n],
            decay: vec![1.0; n],
            scratch: vec![0.0; n],
        }
    }

    /// Loads coefficients for the step starting at `t` with control sample `u`.
    pub(crate) fn load(&mut self, params: &ModelParams, t: f64, u: &[f64]) {
        self.time = t;
        params.alpha.eval_field(t + 0.5 * self.h, &mut self.alpha);
        for p in 0..self.alpha.len() {
            let a = 1.0 - self.sigma * u[p];
            self.attractor[p] = a;
            self.lambda[p] = self.alpha[p] / a;
            self.decay[p] = (-self.h * self.lambda[p]).exp();
        }
    }

    pub(crate) fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    /// `out = M x = -lambda x + div(A grad x)`
    fn apply_m(&mut self, x: &[f64], out: &mut [f64]) {
        apply_divergence_into(self.diffusion, self.grid, x, out);
        for p in 0..x.len() {
            out[p] -= self.lambda[p] * x[p];
        }
    }

    /// `P x + s`: semiflow `e x + s`, Crank-Nicolson `S^{-1}(T x + s)`.
    pub(crate) fn propagate(&mut self, x: &[f64], source: &[f64]) -> Result<Vec<f64>> {
        match self.scheme {
            Scheme::Semiflow => Ok(x
                .iter()
                .zip(&self.decay)
                .zip(source)
                .map(|((xi, e), s)| e * xi + s)
                .collect()),
            Scheme::CrankNicolson => {
                let half = 0.5 * self.h;
                let mut mx = std::mem::take(&mut self.scratch);
                self.apply_m(x, &mut mx);
                let rhs: Vec<f64> = x
                    .iter()
                    .zip(&mx)
                    .zip(source)
                    .map(|((xi, mi), s)| xi + half * mi + s)
                    .collect();
                self.scratch = mx;
                self.solve_s(rhs, x)
            }
        }
    }

    /// Solves `(I - h/2 M) y = rhs`, starting from `guess`.
    fn solve_s(&mut self, rhs: Vec<f64>, guess: &[f64]) -> Result<Vec<f64>> {
        let half = 0.5 * self.h;
        if self.diffusion.is_zero() {
            return Ok(rhs
                .iter()
                .zip(&self.lambda)
                .map(|(r, l)| r / (1.0 + half * l))
                .collect());
        }
        let mut y = guess.to_vec();
        let max_iter = 10 * rhs.len();
        let diffusion = self.diffusion;
        let grid = self.grid;
        let lambda = &self.lambda;
        let apply = |x: &[f64], out: &mut [f64]| {
            apply_divergence_into(diffusion, grid, x, out);
            for p in 0..x.len() {
                out[p] = x[p] + half * lambda[p] * x[p] - half * out[p];
            }
        };
        conjugate_gradient(apply, &rhs, &mut y, CG_TOLERANCE, max_iter).map_err(|f| {
            Error::LinearSolver {
                time: self.time,
                residual: f.relative_residual,
                iterations: f.iterations,
            }
        })?;
        Ok(y)
    }

    /// Source of the state equation over this step.
    pub(crate) fn state_source(&self) -> Vec<f64> {
        match self.scheme {
            Scheme::Semiflow => self
                .attractor
                .iter()
                .zip(&self.decay)
                .map(|(a, e)| a * (1.0 - e))
                .collect(),
            Scheme::CrankNicolson => self.alpha.iter().map(|a| self.h * a).collect(),
        }
    }

    /// Source of the costate recursion over this step.
    pub(crate) fn costate_source(&self) -> Vec<f64> {
        match self.scheme {
            Scheme::Semiflow => self
                .decay
                .iter()
                .map(|e| 0.5 * self.h * (1.0 + e))
                .collect(),
            Scheme::CrankNicolson => vec![self.h; self.alpha.len()],
        }
    }

    /// `d theta_{n+1} / d u_n` at each point for the semiflow step.
    fn semiflow_control_derivative(&self, theta_plus: &[f64]) -> Vec<f64> {
        (0..theta_plus.len())
            .map(|p| {
                let a = self.attractor[p];
                let e = self.decay[p];
                let hl = self.h * self.lambda[p];
                -self.sigma * (1.0 - e + (theta_plus[p] - a) * e * hl / a)
            })
            .collect()
    }

    /// Source of the control sensitivity for direction `d` over this step.
    pub(crate) fn control_sensitivity_source(
        &self,
        theta_plus: &[f64],
        theta_next: &[f64],
        d: &[f64],
    ) -> Vec<f64> {
        match self.scheme {
            Scheme::Semiflow => self
                .semiflow_control_derivative(theta_plus)
                .iter()
                .zip(d)
                .map(|(g, di)| g * di)
                .collect(),
            Scheme::CrankNicolson => (0..d.len())
                .map(|p| {
                    let a = self.attractor[p];
                    -0.5 * self.h * self.sigma * self.alpha[p] / (a * a)
                        * d[p]
                        * (theta_plus[p] + theta_next[p])
                })
                .collect(),
        }
    }

    /// Density `dJ/du_n / (h ds^3)` at each point.
    pub(crate) fn control_gradient_density(
        &self,
        unit_cost: &[f64],
        theta_plus: &[f64],
        theta_next: &[f64],
        p_plus: &[f64],
        p_next: &[f64],
    ) -> Vec<f64> {
        match self.scheme {
            Scheme::Semiflow => {
                let g = self.semiflow_control_derivative(theta_plus);
                (0..g.len())
                    .map(|p| unit_cost[p] + (p_next[p] + 0.5 * self.h) * g[p] / self.h)
                    .collect()
            }
            Scheme::CrankNicolson => (0..unit_cost.len())
                .map(|p| {
                    let a = self.attractor[p];
                    let theta_bar = 0.5 * (theta_plus[p] + theta_next[p]);
                    let p_bar = 0.5 * (p_plus[p] + p_next[p]);
                    unit_cost[p] - self.sigma * self.alpha[p] / (a * a) * theta_bar * p_bar
                })
                .collect(),
        }
    }
}

/// Forward solve with every intermediate quantity the cost and the adjoint
/// need.
#[derive(Debug, Clone)]
pub(crate) struct ForwardRun {
    pub times: Vec<f64>,
    pub stored_steps: Vec<usize>,
    pub stored: Vec<Vec<f64>>,
    /// Grid sum of the pre-jump state at every step.
    pub sums: Vec<f64>,
    /// Grid L2 norm of the pre-jump state at every step.
    pub l2_norms: Vec<f64>,
    pub jumps: Vec<Jump<Vec<f64>>>,
    pub final_state: Vec<f64>,
}

pub(crate) fn run_forward(
    params: &ModelParams,
    scheme: Scheme,
    u: &ContinuousControl,
    v: &PulseStrategy,
    store_every: usize,
) -> Result<ForwardRun> {
    check_params(params, scheme)?;
    check_control(params, u)?;
    check_fields(params.space, v.values(), "pulse strategy")?;
    if store_every == 0 {
        return Err(Error::InvalidParameter("store_every must be at least 1".into()));
    }
    let grid = params.space;
    let n_steps = params.time.n_steps();
    let candidates = params.time.candidate_steps();
    let sigma_star = params.chemical.sigma_star;
    let mut op = StepOperator::new(params, scheme);
    let mut theta = params.initial.values().to_vec();
    let mut run = ForwardRun {
        times: params.time.times(),
        stored_steps: Vec::new(),
        stored: Vec::new(),
        sums: Vec::with_capacity(n_steps + 1),
        l2_norms: Vec::with_capacity(n_steps + 1),
        jumps: Vec::new(),
        final_state: Vec::new(),
    };
    let mut next_candidate = 0;
    for n in 0..=n_steps {
        run.sums.push(theta.iter().sum());
        run.l2_norms
            .push((theta.iter().map(|x| x * x).sum::<f64>() * grid.cell_volume()).sqrt());
        if n % store_every == 0 || n == n_steps {
            run.stored_steps.push(n);
            run.stored.push(theta.clone());
        }
        if n == n_steps {
            break;
        }
        if candidates.get(next_candidate) == Some(&n) {
            next_candidate += 1;
            if threshold_met(&theta, grid, sigma_star) {
                let index = run.jumps.len();
                let vi = v.get(index).ok_or(Error::StrategyTooShort {
                    needed: index + 1,
                    available: v.len(),
                })?;
                let post: Vec<f64> = theta.iter().zip(vi.values()).map(|(t, m)| m * t).collect();
                run.jumps.push(Jump {
                    index,
                    step: n,
                    time: run.times[n],
                    pre: std::mem::replace(&mut theta, post.clone()),
                    post,
                    v: vi.values().to_vec(),
                });
            }
        }
        op.load(params, run.times[n], u.sample(n).values());
        let source = op.state_source();
        theta = op.propagate(&theta, &source)?;
        if theta.iter().any(|x| !x.is_finite()) {
            return Err(Error::Quadrature {
                time: run.times[n + 1],
            });
        }
    }
    run.final_state = theta;
    Ok(run)
}


pub(crate) fn jump_lookup(n_steps: usize, steps: impl Iterator<Item = usize>) -> Vec<Option<usize>> {
    let mut out = vec![None; n_steps + 1];
    for (i, s) in steps.enumerate() {
        out[s] = Some(i);
    }
    out
}

/// Cost of a trajectory given by per-step pre-jump grid sums, its jumps and
/// the final state.
pub(crate) fn assemble_cost(
    params: &ModelParams,
    sums: &[f64],
    jumps: &[Jump<&[f64]>],
    final_state: &[f64],
    u: &ContinuousControl,
    costs: &CostSpec,
) -> Result<CostBreakdown> {
    let grid = params.space;
    let n_steps = params.time.n_steps();
    if sums.len() != n_steps + 1 {
        return Err(Error::InvalidParameter(format!(
            "trajectory has {} samples for {n_steps} steps",
            sums.len()
        )));
    }
    if u.len() != n_steps || costs.continuous_unit_cost.len() != n_steps {
        return Err(Error::InvalidParameter(format!(
            "control ({}) and control cost ({}) must have one sample per step ({n_steps})",
            u.len(),
            costs.continuous_unit_cost.len()
        )));
    }
    if jumps.len() > costs.pulse_unit_costs.len() {
        return Err(Error::PulseCountMismatch(format!(
            "{} realized pulses but {} pulse unit costs",
            jumps.len(),
            costs.pulse_unit_costs.len()
        )));
    }
    check_fields(grid, &costs.pulse_unit_costs, "pulse unit costs")?;
    check_fields(grid, &costs.continuous_unit_cost, "continuous unit cost")?;
    check_fields(grid, std::slice::from_ref(&costs.final_cost), "final cost")?;
    let w = grid.cell_volume();
    let h = params.time.step();

    let mut post_sums = sums.to_vec();
    for j in jumps {
        post_sums[j.step] = j.post.iter().sum();
    }
    let running_state: f64 = (0..n_steps)
        .map(|n| 0.5 * h * (post_sums[n] + sums[n + 1]))
        .sum::<f64>()
        * w;
    let running_control: f64 = u
        .samples()
        .iter()
        .zip(&costs.continuous_unit_cost)
        .map(|(un, cn)| crate::linalg::dot(un.values(), cn.values()))
        .sum::<f64>()
        * h
        * w;
    let pulse: f64 = jumps
        .iter()
        .map(|j| {
            let c = costs.pulse_unit_costs[j.index].values();
            (0..j.pre.len())
                .map(|p| c[p] * (1.0 - j.v[p]) * j.pre[p])
                .sum::<f64>()
        })
        .sum::<f64>()
        * w;
    let terminal = crate::linalg::dot(costs.final_cost.values(), final_state) * w;
    Ok(CostBreakdown::new(running_state, running_control, pulse, terminal))
}

/// Backward costate sweep. Values are pre-jump (left limits); `decide`
/// returns the multiplier used at pulse `i` given `p(tau_i^+)`.
#[derive(Debug, Clone)]
pub(crate) struct BackwardRun {
    pub values: Vec<Vec<f64>>,
    pub jumps: Vec<Jump<Vec<f64>>>,
}

pub(crate) fn run_backward(
    params: &ModelParams,
    scheme: Scheme,
    u: &ContinuousControl,
    costs: &CostSpec,
    pulse_steps: &[usize],
    mut decide: impl FnMut(usize, &[f64], &[f64]) -> Result<Vec<f64>>,
) -> Result<BackwardRun> {
    check_params(params, scheme)?;
    check_control(params, u)?;
    let grid = params.space;
    check_fields(grid, std::slice::from_ref(&costs.final_cost), "final cost")?;
    check_fields(grid, &costs.pulse_unit_costs, "pulse unit costs")?;
    if pulse_steps.len() > costs.pulse_unit_costs.len() {
        return Err(Error::PulseCountMismatch(format!(
            "{} realized pulses but {} pulse unit costs",
            pulse_steps.len(),
            costs.pulse_unit_costs.len()
        )));
    }
    let n_steps = params.time.n_steps();
    if pulse_steps.iter().any(|&s| s >= n_steps) || pulse_steps.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter(
            "realized pulse steps must be increasing and before the final time".into(),
        ));
    }
    let lookup = jump_lookup(n_steps, pulse_steps.iter().copied());
    let times = params.time.times();
    let mut op = StepOperator::new(params, scheme);
    let mut values = vec![Vec::new(); n_steps + 1];
    let mut jumps = Vec::with_capacity(pulse_steps.len());
    let mut p = costs.final_cost.values().to_vec();
    values[n_steps] = p.clone();
    for n in (0..n_steps).rev() {
        op.load(params, times[n], u.sample(n).values());
        let source = op.costate_source();
        let p_plus = op.propagate(&p, &source)?;
        if p_plus.iter().any(|x| !x.is_finite()) {
            return Err(Error::Quadrature { time: times[n] });
        }
        p = match lookup[n] {
            Some(i) => {
                let c = costs.pulse_unit_costs[i].values();
                let v = decide(i, &p_plus, c)?;
                let pre: Vec<f64> = (0..v.len())
                    .map(|x| v[x] * p_plus[x] + c[x] * (1.0 - v[x]))
                    .collect();
                jumps.push(Jump {
                    index: i,
                    step: n,
                    time: times[n],
                    pre: pre.clone(),
                    post: p_plus,
                    v,
                });
                pre
            }
            None => p_plus,
        };
        values[n] = p.clone();
    }
    jumps.reverse();
    Ok(BackwardRun { values, jumps })
}


/// Read access to a forward trajectory at integration-step resolution.
pub trait StateHistory {
    fn scheme(&self) -> Scheme;
    fn space(&self) -> SpaceGrid;
    fn n_steps(&self) -> usize;
    fn step_time(&self, n: usize) -> f64;
    /// Pre-jump state at step `n`; fails when step `n` was not stored.
    fn state(&self, n: usize) -> Result<&[f64]>;
    fn jump_count(&self) -> usize;
    fn jump(&self, i: usize) -> Jump<&[f64]>;

    fn realized_steps(&self) -> Vec<usize> {
        (0..self.jump_count()).map(|i| self.jump(i).step).collect()
    }

    /// Fails unless every step is available.
    fn require_full(&self) -> Result<()>;
}

fn jump_lookup_of(h: &dyn StateHistory) -> Vec<Option<usize>> {
    jump_lookup(h.n_steps(), (0..h.jump_count()).map(|i| h.jump(i).step))
}

/// Forward linearization around a stored trajectory.
#[derive(Debug, Clone)]
pub(crate) struct SensitivityRun {
    pub values: Vec<Vec<f64>>,
    pub jumps: Vec<Jump<Vec<f64>>>,
}

pub(crate) fn run_sensitivity(
    params: &ModelParams,
    forward: &dyn StateHistory,
    u: &ContinuousControl,
    pulse_direction: Option<&PulseStrategy>,
    control_direction: Option<&ContinuousControl>,
) -> Result<SensitivityRun> {
    forward.require_full()?;
    let scheme = forward.scheme();
    check_params(params, scheme)?;
    check_control(params, u)?;
    let n_steps = params.time.n_steps();
    if forward.n_steps() != n_steps || forward.space() != params.space {
        return Err(Error::InvalidParameter(
            "forward trajectory does not match the problem grids".into(),
        ));
    }
    let n_jumps = forward.jump_count();
    if let Some(d) = pulse_direction {
        check_fields(params.space, d.values(), "pulse direction")?;
        if d.len() < n_jumps {
            return Err(Error::PulseCountMismatch(format!(
                "direction has {} entries for {n_jumps} realized pulses",
                d.len()
            )));
        }
    }
    if let Some(d) = control_direction {
        check_fields(params.space, d.samples(), "control direction")?;
        if d.len() != n_steps {
            return Err(Error::InvalidParameter(format!(
                "control direction has {} samples for {n_steps} steps",
                d.len()
            )));
        }
    }
    let lookup = jump_lookup_of(forward);
    let mut op = StepOperator::new(params, scheme);
    let mut z = vec![0.0; params.space.len()];
    let mut values = Vec::with_capacity(n_steps + 1);
    let mut jumps = Vec::new();
    for n in 0..=n_steps {
        values.push(z.clone());
        if n == n_steps {
            break;
        }
        let theta_plus: &[f64] = match lookup[n] {
            Some(i) => {
                let j = forward.jump(i);
                let post: Vec<f64> = (0..z.len())
                    .map(|p| {
                        let d = pulse_direction.map_or(0.0, |d| d.values()[i].get(p));
                        j.v[p] * z[p] + d * j.pre[p]
                    })
                    .collect();
                jumps.push(Jump {
                    index: i,
                    step: n,
                    time: j.time,
                    pre: std::mem::replace(&mut z, post.clone()),
                    post,
                    v: j.v.to_vec(),
                });
                j.post
            }
            None => forward.state(n)?,
        };
        op.load(params, forward.step_time(n), u.sample(n).values());
        let source = match control_direction {
            Some(d) => op.control_sensitivity_source(
                theta_plus,
                forward.state(n + 1)?,
                d.sample(n).values(),
            ),
            None => vec![0.0; z.len()],
        };
        z = op.propagate(&z, &source)?;
    }
    Ok(SensitivityRun { values, jumps })
}

/// `dJ` along the linearization `z`, including the explicit control and
/// pulse terms of the direction.
pub(crate) fn linearized_cost(
    params: &ModelParams,
    forward: &dyn StateHistory,
    z: &SensitivityRun,
    costs: &CostSpec,
    pulse_direction: Option<&PulseStrategy>,
    control_direction: Option<&ContinuousControl>,
) -> Result<f64> {
    let sums: Vec<f64> = z.values.iter().map(|v| v.iter().sum()).collect();
    let zero_u = ContinuousControl::uniform(params.space, params.time.n_steps(), 0.0);
    let u_dir = control_direction.unwrap_or(&zero_u);
    let jumps: Vec<Jump<&[f64]>> = z.jumps.iter().map(|j| j.as_slices()).collect();
    let base = assemble_cost(
        params,
        &sums,
        &jumps,
        z.values.last().expect("non-empty"),
        u_dir,
        costs,
    )?;
    // assemble_cost charges c (1 - v) z^-; a pulse direction adds -c d theta^-
    let mut extra = 0.0;
    if let Some(d) = pulse_direction {
        let w = params.space.cell_volume();
        for i in 0..forward.jump_count() {
            let j = forward.jump(i);
            let c = costs.pulse_unit_costs[j.index].values();
            let dv = d.values()[j.index].values();
            extra -= (0..c.len()).map(|p| c[p] * dv[p] * j.pre[p]).sum::<f64>() * w;
        }
    }
    Ok(base.total + extra)
}
