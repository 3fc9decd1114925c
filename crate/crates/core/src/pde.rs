//! Space-dependent impulsive reaction-diffusion solver.

use crate::averaged::AveragedTrajectory;
use crate::engine::{
    assemble_cost, run_forward, Jump, Scheme, StateHistory, StepOperator,
};
use crate::error::{Error, Result};
use crate::model::{
    ContinuousControl, CostBreakdown, CostSpec, DiffusionField, ModelParams, PulseStrategy,
    ScalarField, SpaceGrid,
};

/// Seven-point face-weighted stencil of `div(A grad x)` written into `out`.
pub(crate) fn apply_divergence_into(
    diffusion: &DiffusionField,
    grid: SpaceGrid,
    x: &[f64],
    out: &mut [f64],
) {
    out.iter_mut().for_each(|o| *o = 0.0);
    for axis in 0..3 {
        let stride = grid.stride(axis);
        for (p, &a) in diffusion.face(axis).iter().enumerate() {
            if a != 0.0 {
                let q = p + stride;
                let flux = a * (x[q] - x[p]);
                out[p] += flux;
                out[q] -= flux;
            }
        }
    }
    let inv = 1.0 / (grid.spacing() * grid.spacing());
    if inv != 1.0 {
        out.iter_mut().for_each(|o| *o *= inv);
    }
}

/// Discrete `div(A grad phi)` with no-flux boundaries.
pub fn apply_divergence(diffusion: &DiffusionField, phi: &ScalarField) -> Result<ScalarField> {
    if diffusion.grid() != phi.grid() {
        return Err(Error::GridMismatch(format!(
            "diffusion on {:?}, field on {:?}",
            diffusion.grid().dims(),
            phi.grid().dims()
        )));
    }
    let mut out = vec![0.0; phi.len()];
    apply_divergence_into(diffusion, phi.grid(), phi.values(), &mut out);
    ScalarField::new(phi.grid(), out)
}

/// The linear part `M = -diag(alpha / (1 - sigma u)) + div(A grad .)` of one
/// Crank-Nicolson step, with `alpha` at the step midpoint.
#[derive(Debug, Clone)]
pub struct DiscreteOperator<'a> {
    diffusion: &'a DiffusionField,
    grid: SpaceGrid,
    lambda: Vec<f64>,
}

impl<'a> DiscreteOperator<'a> {
    pub fn new(params: &'a ModelParams, t: f64, h: f64, u_sample: &ScalarField) -> Result<Self> {
        if u_sample.grid() != params.space {
            return Err(Error::GridMismatch("control sample grid differs".into()));
        }
        let mut op = StepOperator::new(params, Scheme::CrankNicolson);
        op.set_step(h);
        op.load(params, t, u_sample.values());
        Ok(Self {
            diffusion: &params.diffusion,
            grid: params.space,
            lambda: op.lambda().to_vec(),
        })
    }

    /// Reaction rates `alpha / (1 - sigma u)`.
    pub fn reaction(&self) -> &[f64] {
        &self.lambda
    }

    pub fn apply(&self, x: &ScalarField) -> Result<ScalarField> {
        let mut out = apply_divergence(self.diffusion, x)?.into_values();
        for (o, (l, xi)) in out.iter_mut().zip(self.lambda.iter().zip(x.values())) {
            *o -= l * xi;
        }
        ScalarField::new(self.grid, out)
    }
}

/// One step `theta1 = (I - h/2 M)^{-1} [h alpha + (I + h/2 M) theta0]`.
pub fn cn_step(
    theta: &ScalarField,
    t: f64,
    h: f64,
    params: &ModelParams,
    u_sample: &ScalarField,
) -> Result<ScalarField> {
    if !(h > 0.0) {
        return Err(Error::InvalidParameter(format!("step must be positive, got {h}")));
    }
    if theta.grid() != params.space || u_sample.grid() != params.space {
        return Err(Error::GridMismatch(
            "state or control sample not on the problem grid".into(),
        ));
    }
    let mut op = StepOperator::new(params, Scheme::CrankNicolson);
    op.set_step(h);
    op.load(params, t, u_sample.values());
    let source = op.state_source();
    ScalarField::new(params.space, op.propagate(theta.values(), &source)?)
}

/// Field trajectory with left-limit storage at pulse times.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldTrajectory {
    scheme: Scheme,
    grid: SpaceGrid,
    step_times: Vec<f64>,
    store_every: usize,
    stored_steps: Vec<usize>,
    fields: Vec<ScalarField>,
    sums: Vec<f64>,
    l2_norms: Vec<f64>,
    jumps: Vec<Jump<ScalarField>>,
    final_field: ScalarField,
}

impl FieldTrajectory {
    /// Stored sample times.
    pub fn times(&self) -> Vec<f64> {
        self.stored_steps.iter().map(|&n| self.step_times[n]).collect()
    }

    pub fn stored_steps(&self) -> &[usize] {
        &self.stored_steps
    }

    pub fn fields(&self) -> &[ScalarField] {
        &self.fields
    }

    pub fn jumps(&self) -> &[Jump<ScalarField>] {
        &self.jumps
    }

    pub fn grid(&self) -> SpaceGrid {
        self.grid
    }

    pub fn store_every(&self) -> usize {
        self.store_every
    }

    /// Every integration time, stored or not.
    pub fn step_times(&self) -> &[f64] {
        &self.step_times
    }

    /// Grid mean of the pre-jump state at every integration time.
    pub fn means(&self) -> Vec<f64> {
        let n = self.grid.len() as f64;
        self.sums.iter().map(|s| s / n).collect()
    }

    /// Grid L2 norm of the pre-jump state at every integration time.
    pub fn l2_norms(&self) -> &[f64] {
        &self.l2_norms
    }

    pub fn final_field(&self) -> &ScalarField {
        &self.final_field
    }

    pub fn realized_times(&self) -> Vec<f64> {
        self.jumps.iter().map(|j| j.time).collect()
    }

    /// Smallest and largest stored or jump value.
    pub fn value_range(&self) -> (f64, f64) {
        let all = self
            .fields
            .iter()
            .chain(self.jumps.iter().map(|j| &j.post));
        all.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), f| {
            (lo.min(f.min()), hi.max(f.max()))
        })
    }
}

impl StateHistory for FieldTrajectory {
    fn scheme(&self) -> Scheme {
        self.scheme
    }

    fn space(&self) -> SpaceGrid {
        self.grid
    }

    fn n_steps(&self) -> usize {
        self.step_times.len() - 1
    }

    fn step_time(&self, n: usize) -> f64 {
        self.step_times[n]
    }

    fn state(&self, n: usize) -> Result<&[f64]> {
        if n.is_multiple_of(self.store_every) {
            return Ok(self.fields[n / self.store_every].values());
        }
        if n + 1 == self.step_times.len() {
            return Ok(self.final_field.values());
        }
        Err(Error::DecimatedTrajectory {
            store_every: self.store_every,
        })
    }

    fn jump_count(&self) -> usize {
        self.jumps.len()
    }

    fn jump(&self, i: usize) -> Jump<&[f64]> {
        self.jumps[i].as_slices()
    }

    fn require_full(&self) -> Result<()> {
        if self.store_every == 1 {
            Ok(())
        } else {
            Err(Error::DecimatedTrajectory {
                store_every: self.store_every,
            })
        }
    }
}

/// Forward run with the given scheme, storing every `store_every`-th step.
pub fn simulate_field(
    params: &ModelParams,
    scheme: Scheme,
    u: &ContinuousControl,
    v: &PulseStrategy,
    store_every: usize,
) -> Result<FieldTrajectory> {
    let run = run_forward(params, scheme, u, v, store_every)?;
    let grid = params.space;
    let field = |v: Vec<f64>| ScalarField::new(grid, v).expect("state length matches grid");
    Ok(FieldTrajectory {
        scheme,
        grid,
        step_times: run.times,
        store_every,
        stored_steps: run.stored_steps,
        fields: run.stored.into_iter().map(field).collect(),
        sums: run.sums,
        l2_norms: run.l2_norms,
        jumps: run.jumps.into_iter().map(|j| j.into_fields(grid)).collect(),
        final_field: field(run.final_state),
    })
}

/// Crank-Nicolson forward run with full storage.
pub fn simulate_pde(
    params: &ModelParams,
    u: &ContinuousControl,
    v: &PulseStrategy,
) -> Result<FieldTrajectory> {
    simulate_field(params, Scheme::CrankNicolson, u, v, 1)
}

fn check_jumps_match(jumps: &[Jump<&[f64]>], v: &PulseStrategy) -> Result<()> {
    if jumps.len() > v.len() {
        return Err(Error::PulseCountMismatch(format!(
            "trajectory has {} realized pulses but the strategy has {} entries",
            jumps.len(),
            v.len()
        )));
    }
    for j in jumps {
        if v.values()[j.index].values() != j.v {
            return Err(Error::PulseCountMismatch(format!(
                "pulse {} of the trajectory was not produced by this strategy",
                j.index
            )));
        }
    }
    Ok(())
}

/// Cost of a field trajectory (grid quadrature in space, trapezoid in time
/// split at the jumps).
pub fn cost_pde(
    params: &ModelParams,
    traj: &FieldTrajectory,
    v: &PulseStrategy,
    u: &ContinuousControl,
    costs: &CostSpec,
) -> Result<CostBreakdown> {
    if traj.grid != params.space || traj.n_steps() != params.time.n_steps() {
        return Err(Error::GridMismatch(
            "trajectory does not match the problem grids".into(),
        ));
    }
    let jumps: Vec<Jump<&[f64]>> = traj.jumps.iter().map(|j| j.as_slices()).collect();
    check_jumps_match(&jumps, v)?;
    assemble_cost(
        params,
        &traj.sums,
        &jumps,
        traj.final_field.values(),
        u,
        costs,
    )
}

pub(crate) fn cost_of_history(
    params: &ModelParams,
    sums: &[f64],
    jumps: &[Jump<&[f64]>],
    final_state: &[f64],
    v: &PulseStrategy,
    u: &ContinuousControl,
    costs: &CostSpec,
) -> Result<CostBreakdown> {
    check_jumps_match(jumps, v)?;
    assemble_cost(params, sums, jumps, final_state, u, costs)
}

/// Grid mean at every stored time. Jump multipliers become the ratio of the
/// post- and pre-jump means, so `post = v * pre` still holds.
pub fn spatial_average(traj: &FieldTrajectory) -> AveragedTrajectory {
    let times = traj.times();
    let values: Vec<f64> = traj.fields.iter().map(|f| f.mean()).collect();
    let jumps = traj
        .jumps
        .iter()
        .map(|j| {
            let pre = j.pre.mean();
            let post = j.post.mean();
            Jump {
                index: j.index,
                step: j.step,
                time: j.time,
                pre,
                post,
                v: if pre != 0.0 { post / pre } else { j.v.mean() },
            }
        })
        .collect();
    AveragedTrajectory::from_parts(
        traj.scheme,
        times,
        values,
        jumps,
        traj.store_every,
        traj.n_steps(),
    )
}
