//! Backward costate solves, gradients with respect to pulse and continuous
//! controls, and forward sensitivities used to cross-check them.
//!
//! The costate recursion is the exact transpose of the forward step map and
//! of the trapezoid cost quadrature, so directional derivatives assembled
//! from it agree with the forward sensitivities up to rounding.

use crate::engine::{
    jump_lookup, linearized_cost, run_backward, run_forward, run_sensitivity, Jump, Scheme,
    StateHistory, StepOperator,
};
use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use crate::linalg::dot;
use crate::model::{ContinuousControl, CostSpec, ModelParams, PulseStrategy, ScalarField, SpaceGrid};
use crate::pde::simulate_field;

/// Costate `p` with left-limit storage; jumps carry `p(tau_i)` in `pre` and
/// `p(tau_i^+)` in `post`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointTrajectory {
    pub scheme: Scheme,
    pub times: Vec<f64>,
    pub values: Vec<ScalarField>,
    pub jumps: Vec<Jump<ScalarField>>,
}

impl AdjointTrajectory {
    pub fn grid(&self) -> SpaceGrid {
        self.values[0].grid()
    }

    /// First point value at every time (the whole costate on one-point grids).
    pub fn scalars(&self) -> Vec<f64> {
        self.values.iter().map(|f| f.get(0)).collect()
    }

    /// `p(t_n^+)`.
    pub fn post_value(&self, n: usize) -> &ScalarField {
        self.jumps
            .iter()
            .find(|j| j.step == n)
            .map_or(&self.values[n], |j| &j.post)
    }

    fn post_values(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = self.values.iter().map(|f| f.values()).collect();
        for j in &self.jumps {
            out[j.step] = j.post.values();
        }
        out
    }
}

pub(crate) fn adjoint_from_backward(
    params: &ModelParams,
    scheme: Scheme,
    run: crate::engine::BackwardRun,
) -> AdjointTrajectory {
    let grid = params.space;
    let f = |v: Vec<f64>| ScalarField::new(grid, v).expect("costate length matches grid");
    AdjointTrajectory {
        scheme,
        times: params.time.times(),
        values: run.values.into_iter().map(f).collect(),
        jumps: run.jumps.into_iter().map(|j| j.into_fields(grid)).collect(),
    }
}

/// Costate for fixed `(u, v_base)` with pulses at the given step indices
/// (pulse `i` at `realized_steps[i]` uses `v_base[i]`).
pub fn solve_adjoint(
    params: &ModelParams,
    scheme: Scheme,
    u: &ContinuousControl,
    v_base: &PulseStrategy,
    costs: &CostSpec,
    realized_steps: &[usize],
) -> Result<AdjointTrajectory> {
    if let Some(f) = v_base.values().iter().find(|f| f.grid() != params.space) {
        return Err(Error::GridMismatch(format!(
            "pulse strategy on grid {:?}",
            f.grid().dims()
        )));
    }
    let run = run_backward(params, scheme, u, costs, realized_steps, |i, _, _| {
        v_base
            .get(i)
            .map(|f| f.values().to_vec())
            .ok_or(Error::StrategyTooShort {
                needed: i + 1,
                available: v_base.len(),
            })
    })?;
    Ok(adjoint_from_backward(params, scheme, run))
}

/// Averaged costate with the semiflow scheme.
pub fn solve_adjoint_averaged(
    params: &ModelParams,
    u: &ContinuousControl,
    v_base: &PulseStrategy,
    costs: &CostSpec,
    realized_steps: &[usize],
) -> Result<AdjointTrajectory> {
    solve_adjoint(params, Scheme::Semiflow, u, v_base, costs, realized_steps)
}

/// Space-dependent costate with Crank-Nicolson.
pub fn solve_adjoint_pde(
    params: &ModelParams,
    u: &ContinuousControl,
    v_base: &PulseStrategy,
    costs: &CostSpec,
    realized_steps: &[usize],
) -> Result<AdjointTrajectory> {
    solve_adjoint(params, Scheme::CrankNicolson, u, v_base, costs, realized_steps)
}

/// Gradient densities and an optional directional derivative.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GradientReport {
    /// `(p(tau_i^+) - c_i) theta(tau_i)` for each realized pulse.
    pub pulse_gradient: Vec<ScalarField>,
    /// `dJ/du` density per integration step.
    pub continuous_gradient: Vec<ScalarField>,
    pub directional_value: Option<f64>,
    weight: f64,
    step: f64,
}

impl GradientReport {
    /// `sum_i <v_bar_i, d_i>` with grid quadrature.
    pub fn pulse_directional(&self, d: &PulseStrategy) -> f64 {
        self.pulse_gradient
            .iter()
            .zip(d.values())
            .map(|(g, di)| dot(g.values(), di.values()))
            .sum::<f64>()
            * self.weight
    }

    /// `int <u_bar, d>` with grid quadrature and step-constant samples.
    pub fn continuous_directional(&self, d: &ContinuousControl) -> f64 {
        self.continuous_gradient
            .iter()
            .zip(d.samples())
            .map(|(g, di)| dot(g.values(), di.values()))
            .sum::<f64>()
            * self.weight
            * self.step
    }
}

fn check_pair(forward: &dyn StateHistory, adjoint: &AdjointTrajectory) -> Result<()> {
    if forward.scheme() != adjoint.scheme {
        return Err(Error::InvalidParameter(format!(
            "forward ({}) and adjoint ({}) schemes differ",
            forward.scheme().name(),
            adjoint.scheme.name()
        )));
    }
    if forward.n_steps() + 1 != adjoint.values.len() || forward.space() != adjoint.grid() {
        return Err(Error::GridMismatch(
            "forward and adjoint trajectories live on different grids".into(),
        ));
    }
    if forward.jump_count() != adjoint.jumps.len() {
        return Err(Error::PulseCountMismatch(format!(
            "forward has {} realized pulses, adjoint has {}",
            forward.jump_count(),
            adjoint.jumps.len()
        )));
    }
    for (i, aj) in adjoint.jumps.iter().enumerate() {
        if forward.jump(i).step != aj.step {
            return Err(Error::PulseCountMismatch(format!(
                "pulse {i} realized at step {} forward but {} in the adjoint",
                forward.jump(i).step,
                aj.step
            )));
        }
    }
    Ok(())
}

/// `v_bar_i = (p(tau_i^+) - c_i) theta(tau_i)`.
pub fn gradient_pulse(
    forward: &dyn StateHistory,
    adjoint: &AdjointTrajectory,
    costs: &CostSpec,
    direction: Option<&PulseStrategy>,
) -> Result<GradientReport> {
    check_pair(forward, adjoint)?;
    let grid = forward.space();
    if adjoint.jumps.len() > costs.pulse_unit_costs.len() {
        return Err(Error::PulseCountMismatch(format!(
            "{} realized pulses but {} pulse unit costs",
            adjoint.jumps.len(),
            costs.pulse_unit_costs.len()
        )));
    }
    let pulse_gradient: Vec<ScalarField> = adjoint
        .jumps
        .iter()
        .enumerate()
        .map(|(i, aj)| {
            let theta = forward.jump(i).pre;
            let c = costs.pulse_unit_costs[i].values();
            let vals = (0..theta.len())
                .map(|p| (aj.post.get(p) - c[p]) * theta[p])
                .collect();
            ScalarField::new(grid, vals).expect("grid length")
        })
        .collect();
    let mut report = GradientReport {
        pulse_gradient,
        continuous_gradient: Vec::new(),
        directional_value: None,
        weight: grid.cell_volume(),
        step: adjoint.times[1] - adjoint.times[0],
    };
    if let Some(d) = direction {
        if d.len() < report.pulse_gradient.len() {
            return Err(Error::PulseCountMismatch(format!(
                "direction has {} entries for {} realized pulses",
                d.len(),
                report.pulse_gradient.len()
            )));
        }
        report.directional_value = Some(report.pulse_directional(d));
    }
    Ok(report)
}

/// Pointwise `C - sigma alpha p theta / (1 - sigma u)^2`.
pub fn continuous_gradient_density(c: f64, sigma: f64, alpha: f64, p: f64, theta: f64, u: f64) -> f64 {
    let a = 1.0 - sigma * u;
    c - sigma * alpha * p * theta / (a * a)
}

/// `dJ/du` density at every step, consistent with the discrete scheme.
///
/// For Crank-Nicolson this is the pointwise density with `p` and `theta`
/// replaced by their step averages; for the semiflow it is the exact
/// derivative of the per-step map.
pub fn gradient_continuous(
    params: &ModelParams,
    forward: &dyn StateHistory,
    adjoint: &AdjointTrajectory,
    u: &ContinuousControl,
    costs: &CostSpec,
    direction: Option<&ContinuousControl>,
) -> Result<GradientReport> {
    check_pair(forward, adjoint)?;
    forward.require_full()?;
    let n_steps = params.time.n_steps();
    if forward.n_steps() != n_steps || u.len() != n_steps || costs.continuous_unit_cost.len() != n_steps {
        return Err(Error::InvalidParameter(
            "control, unit cost and trajectory must cover every step".into(),
        ));
    }
    let sigma = params.chemical.sigma;
    if let Some(n) = u
        .samples()
        .iter()
        .position(|s| s.values().iter().any(|&x| sigma * x > 1.0 - 1e-9))
    {
        return Err(Error::InvalidParameter(format!(
            "sigma u exceeds 1 - 1e-9 at step {n}"
        )));
    }
    let grid = params.space;
    let lookup = jump_lookup(n_steps, (0..forward.jump_count()).map(|i| forward.jump(i).step));
    let p_post = adjoint.post_values();
    let mut op = StepOperator::new(params, forward.scheme());
    let mut continuous_gradient = Vec::with_capacity(n_steps);
    for n in 0..n_steps {
        op.load(params, forward.step_time(n), u.sample(n).values());
        let theta_plus = match lookup[n] {
            Some(i) => forward.jump(i).post,
            None => forward.state(n)?,
        };
        let density = op.control_gradient_density(
            costs.continuous_unit_cost[n].values(),
            theta_plus,
            forward.state(n + 1)?,
            p_post[n],
            adjoint.values[n + 1].values(),
        );
        continuous_gradient.push(ScalarField::new(grid, density)?);
    }
    let mut report = GradientReport {
        pulse_gradient: Vec::new(),
        continuous_gradient,
        directional_value: None,
        weight: grid.cell_volume(),
        step: params.time.step(),
    };
    if let Some(d) = direction {
        if d.len() != n_steps {
            return Err(Error::InvalidParameter(format!(
                "direction has {} samples for {n_steps} steps",
                d.len()
            )));
        }
        report.directional_value = Some(report.continuous_directional(d));
    }
    Ok(report)
}

/// Forward linearization `z` and the directional derivative it implies.
#[derive(Debug, Clone, PartialEq)]
pub struct Sensitivity {
    pub times: Vec<f64>,
    /// Pre-jump `z` at every step.
    pub values: Vec<ScalarField>,
    pub jumps: Vec<Jump<ScalarField>>,
    /// `J_v` or `J_u` along the direction.
    pub derivative: f64,
}

impl Sensitivity {
    pub fn scalars(&self) -> Vec<f64> {
        self.values.iter().map(|f| f.get(0)).collect()
    }
}

fn sensitivity(
    params: &ModelParams,
    scheme: Scheme,
    u: &ContinuousControl,
    v_base: &PulseStrategy,
    costs: &CostSpec,
    pulse_direction: Option<&PulseStrategy>,
    control_direction: Option<&ContinuousControl>,
) -> Result<Sensitivity> {
    let forward = simulate_field(params, scheme, u, v_base, 1)?;
    let run = run_sensitivity(params, &forward, u, pulse_direction, control_direction)?;
    let derivative = linearized_cost(params, &forward, &run, costs, pulse_direction, control_direction)?;
    let grid = params.space;
    Ok(Sensitivity {
        times: params.time.times(),
        values: run
            .values
            .into_iter()
            .map(|v| ScalarField::new(grid, v).expect("grid length"))
            .collect(),
        jumps: run.jumps.into_iter().map(|j| j.into_fields(grid)).collect(),
        derivative,
    })
}

/// `z_v` for a pulse direction: `z(0) = 0`, `z(tau_i^+) = v_base_i z(tau_i)
/// + d_i theta(tau_i)`, linearized dynamics in between.
pub fn sensitivity_pulse(
    params: &ModelParams,
    scheme: Scheme,
    u: &ContinuousControl,
    v_base: &PulseStrategy,
    costs: &CostSpec,
    direction: &PulseStrategy,
) -> Result<Sensitivity> {
    sensitivity(params, scheme, u, v_base, costs, Some(direction), None)
}

/// `z_u` for a continuous-control direction around `u_base`.
pub fn sensitivity_continuous(
    params: &ModelParams,
    scheme: Scheme,
    u_base: &ContinuousControl,
    v_base: &PulseStrategy,
    costs: &CostSpec,
    direction: &ContinuousControl,
) -> Result<Sensitivity> {
    sensitivity(params, scheme, u_base, v_base, costs, None, Some(direction))
}

/// Total cost of one forward run.
pub fn evaluate_cost(
    params: &ModelParams,
    scheme: Scheme,
    u: &ContinuousControl,
    v: &PulseStrategy,
    costs: &CostSpec,
) -> Result<crate::model::CostBreakdown> {
    let run = run_forward(params, scheme, u, v, params.time.n_steps().max(1))?;
    let jumps: Vec<Jump<&[f64]>> = run.jumps.iter().map(|j| j.as_slices()).collect();
    crate::engine::assemble_cost(params, &run.sums, &jumps, &run.final_state, u, costs)
}

fn shifted_pulses(v: &PulseStrategy, d: &PulseStrategy, eps: f64) -> PulseStrategy {
    PulseStrategy::new(
        v.values()
            .iter()
            .enumerate()
            .map(|(i, f)| match d.get(i) {
                Some(di) => ScalarField::new(
                    f.grid(),
                    f.values().iter().zip(di.values()).map(|(a, b)| a + eps * b).collect(),
                )
                .expect("grid length"),
                None => f.clone(),
            })
            .collect(),
    )
}

fn shifted_control(u: &ContinuousControl, d: &ContinuousControl, eps: f64) -> ContinuousControl {
    ContinuousControl::new(
        u.samples()
            .iter()
            .zip(d.samples())
            .map(|(f, di)| {
                ScalarField::new(
                    f.grid(),
                    f.values().iter().zip(di.values()).map(|(a, b)| a + eps * b).collect(),
                )
                .expect("grid length")
            })
            .collect(),
    )
}

/// Central difference `(J(v + eps d) - J(v - eps d)) / (2 eps)`.
pub fn finite_difference_pulse(
    params: &ModelParams,
    scheme: Scheme,
    u: &ContinuousControl,
    v: &PulseStrategy,
    costs: &CostSpec,
    direction: &PulseStrategy,
    eps: f64,
) -> Result<f64> {
    let plus = evaluate_cost(params, scheme, u, &shifted_pulses(v, direction, eps), costs)?;
    let minus = evaluate_cost(params, scheme, u, &shifted_pulses(v, direction, -eps), costs)?;
    Ok((plus.total - minus.total) / (2.0 * eps))
}

/// Central difference `(J(u + eps d) - J(u - eps d)) / (2 eps)`.
pub fn finite_difference_continuous(
    params: &ModelParams,
    scheme: Scheme,
    u: &ContinuousControl,
    v: &PulseStrategy,
    costs: &CostSpec,
    direction: &ContinuousControl,
    eps: f64,
) -> Result<f64> {
    let plus = evaluate_cost(params, scheme, &shifted_control(u, direction, eps), v, costs)?;
    let minus = evaluate_cost(params, scheme, &shifted_control(u, direction, -eps), v, costs)?;
    Ok((plus.total - minus.total) / (2.0 * eps))
}

/// Which control a [`GradientComparison`] perturbs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientKind {
    Pulse,
    Continuous,
}

impl GradientKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Pulse => "pulse",
            Self::Continuous => "continuous",
        }
    }
}

/// One adjoint directional derivative next to its central difference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientComparison {
    pub kind: GradientKind,
    pub adjoint: f64,
    pub finite_difference: f64,
    /// `|adjoint - fd| / max(|adjoint|, |fd|)`.
    pub relative_error: f64,
}

fn random_field(grid: SpaceGrid, rng: &mut ChaCha8Rng) -> ScalarField {
    ScalarField::new(grid, (0..grid.len()).map(|_| rng.gen_range(-1.0..=1.0)).collect())
        .expect("grid length")
}

/// Compares adjoint and central-difference derivatives along `directions`
/// random directions per control kind, entries uniform in `[-1, 1]`.
#[allow(clippy::too_many_arguments)]
pub fn gradient_check(
    params: &ModelParams,
    scheme: Scheme,
    u: &ContinuousControl,
    v: &PulseStrategy,
    costs: &CostSpec,
    directions: usize,
    eps: f64,
    seed: u64,
) -> Result<Vec<GradientComparison>> {
    let fwd = simulate_field(params, scheme, u, v, 1)?;
    let adj = solve_adjoint(params, scheme, u, v, costs, &fwd.realized_steps())?;
    let pg = gradient_pulse(&fwd, &adj, costs, None)?;
    let cg = gradient_continuous(params, &fwd, &adj, u, costs, None)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = params.space;
    let compare = |kind, adjoint: f64, fd: f64| GradientComparison {
        kind,
        adjoint,
        finite_difference: fd,
        relative_error: (adjoint - fd).abs() / adjoint.abs().max(fd.abs()).max(f64::MIN_POSITIVE),
    };
    let mut out = Vec::with_capacity(2 * directions);
    for _ in 0..directions {
        if !v.is_empty() {
            let d = PulseStrategy::new((0..v.len()).map(|_| random_field(grid, &mut rng)).collect());
            let fd = finite_difference_pulse(params, scheme, u, v, costs, &d, eps)?;
            out.push(compare(GradientKind::Pulse, pg.pulse_directional(&d), fd));
        }
        let d = ContinuousControl::new(
            (0..u.len()).map(|_| random_field(grid, &mut rng)).collect(),
        );
        let fd = finite_difference_continuous(params, scheme, u, v, costs, &d, eps)?;
        out.push(compare(GradientKind::Continuous, cg.continuous_directional(&d), fd));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::averaged::simulate_averaged;
    use crate::model::{ChemicalParams, DiffusionField, InhibitionPressure, TimeGrid, TimeProfile};

    fn scalar_params(alpha: f64, sigma: f64, n_steps: usize, candidates: Vec<usize>) -> ModelParams {
        ModelParams::averaged(
            TimeGrid::new(1.0, n_steps, candidates).unwrap(),
            TimeProfile::Constant,
            alpha,
            ChemicalParams {
                sigma,
                sigma_star: 0.0,
            },
            0.4,
        )
    }

    #[test]
    fn terminal_value_is_final_cost() {
        let p = scalar_params(1.0, 0.3, 50, vec![]);
        let u = ContinuousControl::uniform(p.space, 50, 0.0);
        let costs = CostSpec::uniform(p.space, 0, 50, 0.0, 0.0, 0.37);
        let adj = solve_adjoint_averaged(&p, &u, &PulseStrategy::new(vec![]), &costs, &[]).unwrap();
        assert_eq!(adj.values[50].get(0), 0.37);
    }

    #[test]
    fn constant_pressure_costate_closed_form() {
        let n = 2000;
        let p = scalar_params(1.0, 0.3, n, vec![]);
        let u = ContinuousControl::uniform(p.space, n, 0.0);
        let costs = CostSpec::uniform(p.space, 0, n, 0.0, 0.0, 0.0);
        let adj = solve_adjoint_averaged(&p, &u, &PulseStrategy::new(vec![]), &costs, &[]).unwrap();
        let exact = 1.0 - (-1.0f64).exp();
        let p0 = adj.values[0].get(0);
        assert!((p0 - exact).abs() < 1e-7, "{p0}");
        assert!((p0 - 0.6321206).abs() < 1e-6);
    }

    #[test]
    fn jump_formula_applied_exactly() {
        let p = scalar_params(1.0, 0.3, 20, vec![10]);
        let u = ContinuousControl::uniform(p.space, 20, 0.0);
        let costs = CostSpec::uniform(p.space, 1, 20, 0.3, 0.0, 0.5);
        let adj = solve_adjoint_averaged(&p, &u, &PulseStrategy::from_scalars(&[0.0]), &costs, &[10]).unwrap();
        assert_eq!(adj.jumps[0].pre.get(0), 0.3);
        assert_eq!(adj.values[10].get(0), 0.3);
        let adj = solve_adjoint_averaged(&p, &u, &PulseStrategy::from_scalars(&[0.25]), &costs, &[10]).unwrap();
        let j = &adj.jumps[0];
        assert_eq!(j.pre.get(0), 0.25 * j.post.get(0) + 0.3 * 0.75);
    }

    #[test]
    fn pure_integration_without_pressure_or_diffusion() {
        let g = SpaceGrid::new([3, 2, 2], 1.0).unwrap();
        let n = 40;
        let params = ModelParams {
            time: TimeGrid::without_pulses(1.0, n).unwrap(),
            space: g,
            alpha: InhibitionPressure::constant(ScalarField::uniform(g, 0.0)),
            diffusion: DiffusionField::zero(g),
            chemical: ChemicalParams {
                sigma: 0.3,
                sigma_star: 0.0,
            },
            initial: ScalarField::uniform(g, 0.4),
        };
        let cf = ScalarField::from_fn(g, |c| 0.1 * c[0] as f64);
        let mut costs = CostSpec::uniform(g, 0, n, 0.0, 0.0, 0.0);
        costs.final_cost = cf.clone();
        let u = ContinuousControl::uniform(g, n, 0.0);
        let adj = solve_adjoint_pde(&params, &u, &PulseStrategy::new(vec![]), &costs, &[]).unwrap();
        for (k, f) in adj.values.iter().enumerate() {
            let t = params.time.time(k);
            for idx in 0..g.len() {
                assert!((f.get(idx) - cf.get(idx) - (1.0 - t)).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn zero_final_cost_gives_zero_terminal_costate() {
        let g = SpaceGrid::new([2, 2, 2], 1.0).unwrap();
        let n = 10;
        let params = ModelParams {
            time: TimeGrid::without_pulses(1.0, n).unwrap(),
            space: g,
            alpha: InhibitionPressure::constant(ScalarField::uniform(g, 1.0)),
            diffusion: DiffusionField::isotropic(g, 1.0).unwrap(),
            chemical: ChemicalParams {
                sigma: 0.3,
                sigma_star: 0.0,
            },
            initial: ScalarField::uniform(g, 0.4),
        };
        let costs = CostSpec::uniform(g, 0, n, 0.0, 0.0, 0.0);
        let u = ContinuousControl::uniform(g, n, 0.0);
        let adj = solve_adjoint_pde(&params, &u, &PulseStrategy::new(vec![]), &costs, &[]).unwrap();
        assert!(adj.values[n].values().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn density_arithmetic() {
        assert!((continuous_gradient_density(0.5, 0.3, 1.0, 0.5, 0.4, 0.0) - 0.44).abs() < 1e-15);
        assert_eq!(continuous_gradient_density(0.2, 0.0, 3.0, 0.5, 0.4, 0.7), 0.2);
    }

    #[test]
    fn zero_sigma_gradient_is_pure_cost() {
        let p = scalar_params(1.0, 0.0, 30, vec![]);
        let u = ContinuousControl::uniform(p.space, 30, 0.5);
        let v = PulseStrategy::new(vec![]);
        let costs = CostSpec::uniform(p.space, 0, 30, 0.0, 0.07, 0.1);
        let fwd = simulate_averaged(&p, &u, &v).unwrap();
        let adj = solve_adjoint_averaged(&p, &u, &v, &costs, &[]).unwrap();
        let g = gradient_continuous(&p, &fwd, &adj, &u, &costs, None).unwrap();
        for f in &g.continuous_gradient {
            assert!((f.get(0) - 0.07).abs() < 1e-15);
        }
        let z = sensitivity_continuous(&p, Scheme::Semiflow, &u, &v, &costs, &u).unwrap();
        assert!(z.values.iter().all(|f| f.get(0) == 0.0));
    }

    #[test]
    fn zero_direction_gives_zero_directional_value() {
        let p = scalar_params(1.0, 0.3, 30, vec![10, 20]);
        let u = ContinuousControl::uniform(p.space, 30, 0.0);
        let v = PulseStrategy::from_scalars(&[0.5, 0.5]);
        let costs = CostSpec::uniform(p.space, 2, 30, 0.3, 0.0, 0.1);
        let fwd = simulate_averaged(&p, &u, &v).unwrap();
        let adj = solve_adjoint_averaged(&p, &u, &v, &costs, &fwd.realized_steps()).unwrap();
        let g = gradient_pulse(&fwd, &adj, &costs, Some(&PulseStrategy::from_scalars(&[0.0, 0.0]))).unwrap();
        assert_eq!(g.directional_value, Some(0.0));
    }

    #[test]
    fn mismatched_pulse_sets_rejected() {
        let p = scalar_params(1.0, 0.3, 30, vec![10, 20]);
        let u = ContinuousControl::uniform(p.space, 30, 0.0);
        let v = PulseStrategy::from_scalars(&[0.5, 0.5]);
        let costs = CostSpec::uniform(p.space, 2, 30, 0.3, 0.0, 0.1);
        let fwd = simulate_averaged(&p, &u, &v).unwrap();
        let adj = solve_adjoint_averaged(&p, &u, &v, &costs, &[10]).unwrap();
        assert!(gradient_pulse(&fwd, &adj, &costs, None).is_err());
    }

    #[test]
    fn stationary_cost_gives_zero_coefficient() {
        let p = scalar_params(1.0, 0.3, 30, vec![15]);
        let u = ContinuousControl::uniform(p.space, 30, 0.0);
        let v = PulseStrategy::from_scalars(&[0.5]);
        let mut costs = CostSpec::uniform(p.space, 1, 30, 0.0, 0.0, 0.1);
        let free = solve_adjoint_averaged(&p, &u, &v, &CostSpec::uniform(p.space, 0, 30, 0.0, 0.0, 0.1), &[]).unwrap();
        costs.pulse_unit_costs[0] = free.values[15].clone();
        let fwd = simulate_averaged(&p, &u, &v).unwrap();
        let adj = solve_adjoint_averaged(&p, &u, &v, &costs, &[15]).unwrap();
        let g = gradient_pulse(&fwd, &adj, &costs, None).unwrap();
        assert_eq!(g.pulse_gradient[0].get(0), 0.0);
    }
}
