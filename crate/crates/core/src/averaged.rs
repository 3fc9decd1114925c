//! Spatially-averaged impulsive model: a scalar ODE with multiplicative
//! jumps at the realized pulse times.

use crate::adjoint::{sensitivity_pulse, Sensitivity};
use crate::engine::{run_forward, Jump, Scheme, StateHistory};
use crate::error::{Error, Result};
use crate::model::{
    ContinuousControl, CostBreakdown, CostSpec, ModelParams, PulseStrategy, SpaceGrid,
};
use crate::pde::cost_of_history;

/// Substep bound used by [`semiflow_step`].
const SEMIFLOW_MAX_SUBSTEP: f64 = 1e-3;

/// Scalar trajectory with left-limit storage at pulse times.
#[derive(Debug, Clone, PartialEq)]
pub struct AveragedTrajectory {
    pub scheme: Scheme,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub jumps: Vec<Jump<f64>>,
    stride: usize,
    n_steps: usize,
}

impl AveragedTrajectory {
    pub(crate) fn from_parts(
        scheme: Scheme,
        times: Vec<f64>,
        values: Vec<f64>,
        jumps: Vec<Jump<f64>>,
        stride: usize,
        n_steps: usize,
    ) -> Self {
        Self {
            scheme,
            times,
            values,
            jumps,
            stride,
            n_steps,
        }
    }

    pub fn realized_times(&self) -> Vec<f64> {
        self.jumps.iter().map(|j| j.time).collect()
    }

    /// Integration step index of every stored value.
    pub fn stored_steps(&self) -> Vec<usize> {
        (0..self.values.len())
            .map(|i| (i * self.stride).min(self.n_steps))
            .collect()
    }

    pub fn final_value(&self) -> f64 {
        *self.values.last().expect("trajectory is never empty")
    }

    /// Smallest and largest value including post-jump values.
    pub fn value_range(&self) -> (f64, f64) {
        self.values
            .iter()
            .chain(self.jumps.iter().map(|j| &j.post))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
                (lo.min(x), hi.max(x))
            })
    }
}

impl StateHistory for AveragedTrajectory {
    fn scheme(&self) -> Scheme {
        self.scheme
    }

    fn space(&self) -> SpaceGrid {
        SpaceGrid::single()
    }

    fn n_steps(&self) -> usize {
        self.n_steps
    }

    fn step_time(&self, n: usize) -> f64 {
        if self.stride == 1 {
            self.times[n]
        } else {
            n as f64 * self.times[self.times.len() - 1] / self.n_steps as f64
        }
    }

    fn state(&self, n: usize) -> Result<&[f64]> {
        self.require_full()?;
        Ok(std::slice::from_ref(&self.values[n]))
    }

    fn jump_count(&self) -> usize {
        self.jumps.len()
    }

    fn jump(&self, i: usize) -> Jump<&[f64]> {
        self.jumps[i].as_slices()
    }

    fn require_full(&self) -> Result<()> {
        if self.stride == 1 {
            Ok(())
        } else {
            Err(Error::DecimatedTrajectory {
                store_every: self.stride,
            })
        }
    }
}

/// `Phi(t_to, t_from, theta_start)` for the pulse-free averaged equation
/// `dTheta/dt = alpha (1 - Theta / (1 - sigma u))`.
///
/// The span is cut into substeps of at most 1e-3 on which the coefficients
/// are frozen at the substep midpoint and the linear equation is solved
/// exactly; one Richardson extrapolation against the half-resolution pass
/// lifts the symmetric second-order rule to fourth order.
pub fn semiflow_step(
    theta_start: f64,
    t_from: f64,
    t_to: f64,
    alpha: impl Fn(f64) -> f64,
    u: impl Fn(f64) -> f64,
    sigma: f64,
) -> Result<f64> {
    if !(t_from < t_to) {
        return Err(Error::InvalidParameter(format!(
            "semiflow needs t_from < t_to, got {t_from} and {t_to}"
        )));
    }
    let span = t_to - t_from;
    let coarse_n = ((span / (2.0 * SEMIFLOW_MAX_SUBSTEP)).ceil() as usize).max(1);
    let run = |n: usize| -> Result<f64> {
        let dt = span / n as f64;
        let mut x = theta_start;
        for k in 0..n {
            let mid = t_from + (k as f64 + 0.5) * dt;
            let a = 1.0 - sigma * u(mid);
            let al = alpha(mid);
            if !al.is_finite() || !a.is_finite() || !(a > 0.0) {
                return Err(Error::Quadrature { time: mid });
            }
            let e = (-dt * al / a).exp();
            x = a + (x - a) * e;
        }
        Ok(x)
    };
    let coarse = run(coarse_n)?;
    let fine = run(2 * coarse_n)?;
    Ok(fine + (fine - coarse) / 3.0)
}

fn check_single(params: &ModelParams) -> Result<()> {
    if params.space.len() != 1 {
        return Err(Error::GridMismatch(format!(
            "the averaged model lives on the one-point grid, got {:?}",
            params.space.dims()
        )));
    }
    Ok(())
}

/// Averaged forward run with the given scheme.
pub fn simulate_averaged_with(
    params: &ModelParams,
    u: &ContinuousControl,
    v: &PulseStrategy,
    scheme: Scheme,
) -> Result<AveragedTrajectory> {
    check_single(params)?;
    let run = run_forward(params, scheme, u, v, 1)?;
    let n_steps = run.times.len() - 1;
    Ok(AveragedTrajectory {
        scheme,
        times: run.times,
        values: run.stored.into_iter().map(|s| s[0]).collect(),
        jumps: run
            .jumps
            .into_iter()
            .map(|j| Jump {
                index: j.index,
                step: j.step,
                time: j.time,
                pre: j.pre[0],
                post: j.post[0],
                v: j.v[0],
            })
            .collect(),
        stride: 1,
        n_steps,
    })
}

/// Averaged forward run with the exact per-step semiflow.
pub fn simulate_averaged(
    params: &ModelParams,
    u: &ContinuousControl,
    v: &PulseStrategy,
) -> Result<AveragedTrajectory> {
    simulate_averaged_with(params, u, v, Scheme::Semiflow)
}

/// Cost of an averaged trajectory; trapezoid in time split at the jumps.
pub fn cost_averaged(
    params: &ModelParams,
    traj: &AveragedTrajectory,
    v: &PulseStrategy,
    u: &ContinuousControl,
    costs: &CostSpec,
) -> Result<CostBreakdown> {
    check_single(params)?;
    traj.require_full()?;
    if traj.n_steps != params.time.n_steps() {
        return Err(Error::GridMismatch(
            "trajectory does not match the time grid".into(),
        ));
    }
    let jumps: Vec<Jump<&[f64]>> = traj.jumps.iter().map(|j| j.as_slices()).collect();
    cost_of_history(
        params,
        &traj.values,
        &jumps,
        std::slice::from_ref(traj.values.last().expect("non-empty")),
        v,
        u,
        costs,
    )
}

/// Forward sensitivity `z_v` of the averaged state to the pulse direction
/// `direction` around `v_base`, with the resulting `J_v`.
pub fn sensitivity_pulse_averaged(
    params: &ModelParams,
    u: &ContinuousControl,
    v_base: &PulseStrategy,
    costs: &CostSpec,
    direction: &PulseStrategy,
) -> Result<Sensitivity> {
    check_single(params)?;
    sensitivity_pulse(params, Scheme::Semiflow, u, v_base, costs, direction)
}
