//! Strategy computation: the backward bang-bang sweep, an exhaustive vertex
//! oracle, the threshold fixed point, projected gradient for mixed controls,
//! and first-order certificates.

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::adjoint::{
    adjoint_from_backward, evaluate_cost, gradient_continuous, gradient_pulse, solve_adjoint,
    AdjointTrajectory,
};
use crate::engine::{run_backward, run_forward, Jump, Scheme, StateHistory, StepOperator};
use crate::error::{Error, Result};
use crate::model::{
    ContinuousControl, CostBreakdown, CostSpec, ModelParams, PulseStrategy, ScalarField,
};
use crate::pde::{simulate_field, FieldTrajectory};

/// `|p - c|` below which a pulse is left out.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Slack allowed on first-order sign conditions.
pub const CERTIFICATE_TOLERANCE: f64 = 1e-8;

/// Hard cap on enumerated binary coordinates.
pub const ENUMERATION_CAP: usize = 20;

/// Sign data behind one pulse decision.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseCertificate {
    pub index: usize,
    pub step: usize,
    pub time: f64,
    /// `p(tau_i^+)`.
    pub p_plus: ScalarField,
    pub unit_cost: ScalarField,
    pub v: ScalarField,
}

impl PulseCertificate {
    /// `p(tau_i^+) - c_i`; positive means intervening pays off.
    pub fn margin(&self) -> ScalarField {
        ScalarField::new(
            self.p_plus.grid(),
            self.p_plus
                .values()
                .iter()
                .zip(self.unit_cost.values())
                .map(|(p, c)| p - c)
                .collect(),
        )
        .expect("grid length")
    }
}

/// Switching data for one control sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlCertificate {
    pub step: usize,
    pub time: f64,
    /// `C - sigma alpha p theta / (1 - sigma)` with step-averaged `p`, `theta`.
    pub margin: ScalarField,
    pub u: ScalarField,
}

impl ControlCertificate {
    /// Per point: `Some(true)` when `u` sits at the bound the margin selects
    /// (0 for a positive margin, 1 for a negative one), `None` when
    /// `|margin| <= tol`.
    pub fn agreement(&self, tol: f64, bound_tol: f64) -> Vec<Option<bool>> {
        self.margin
            .values()
            .iter()
            .zip(self.u.values())
            .map(|(&m, &u)| {
                if m > tol {
                    Some(u <= bound_tol)
                } else if m < -tol {
                    Some(u >= 1.0 - bound_tol)
                } else {
                    None
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Certificate {
    pub pulses: Vec<PulseCertificate>,
    pub controls: Vec<ControlCertificate>,
}

impl Certificate {
    /// Fraction of decided control samples (`|margin| > tol`) that agree with
    /// the switching rule, and the number decided.
    pub fn control_agreement(&self, tol: f64, bound_tol: f64) -> (f64, usize) {
        let mut decided = 0usize;
        let mut agree = 0usize;
        for c in &self.controls {
            for a in c.agreement(tol, bound_tol).into_iter().flatten() {
                decided += 1;
                agree += a as usize;
            }
        }
        if decided == 0 {
            (1.0, 0)
        } else {
            (agree as f64 / decided as f64, decided)
        }
    }
}

/// A computed strategy with its cost and optimality evidence.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyResult {
    pub scheme: Scheme,
    pub pulses: PulseStrategy,
    pub control: Option<ContinuousControl>,
    pub cost: CostBreakdown,
    pub certificate: Certificate,
    pub realized_steps: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after every accepted iterate (iterative methods only).
    pub cost_history: Vec<f64>,
    pub diagnostics: Vec<String>,
}

impl StrategyResult {
    /// Realized pulse steps where `v` differs from 1 somewhere.
    pub fn intervention_steps(&self) -> Vec<usize> {
        self.realized_steps
            .iter()
            .zip(self.pulses.values())
            .filter(|(_, v)| v.values().iter().any(|&x| x != 1.0))
            .map(|(&s, _)| s)
            .collect()
    }

    pub fn intervention_count(&self) -> usize {
        self.intervention_steps().len()
    }
}

fn bang_bang(p_plus: &[f64], c: &[f64]) -> Vec<f64> {
    p_plus
        .iter()
        .zip(c)
        .map(|(p, c)| if *p > c + TIE_TOLERANCE { 0.0 } else { 1.0 })
        .collect()
}

/// Backward sweep deciding every pulse in `steps` from the sign of
/// `p(tau_i^+) - c_i`.
fn sweep(
    params: &ModelParams,
    scheme: Scheme,
    u: &ContinuousControl,
    costs: &CostSpec,
    steps: &[usize],
) -> Result<(PulseStrategy, AdjointTrajectory)> {
    let run = run_backward(params, scheme, u, costs, steps, |_, p, c| Ok(bang_bang(p, c)))?;
    let grid = params.space;
    let pulses = PulseStrategy::new(
        run.jumps
            .iter()
            .map(|j| ScalarField::new(grid, j.v.clone()).expect("grid length"))
            .collect(),
    );
    Ok((pulses, adjoint_from_backward(params, scheme, run)))
}

fn pulse_certificate(adjoint: &AdjointTrajectory, costs: &CostSpec) -> Vec<PulseCertificate> {
    adjoint
        .jumps
        .iter()
        .map(|j: &Jump<ScalarField>| PulseCertificate {
            index: j.index,
            step: j.step,
            time: j.time,
            p_plus: j.post.clone(),
            unit_cost: costs.pulse_unit_costs[j.index].clone(),
            v: j.v.clone(),
        })
        .collect()
}

fn zero_control(params: &ModelParams) -> ContinuousControl {
    ContinuousControl::uniform(params.space, params.time.n_steps(), 0.0)
}

/// Constructive optimal pulse strategy for `sigma_star = 0`: one backward
/// sweep, pulses decided on the fly.
pub fn optimal_pulse(
    params: &ModelParams,
    scheme: Scheme,
    u: &ContinuousControl,
    costs: &CostSpec,
) -> Result<StrategyResult> {
    let sigma_star = params.chemical.sigma_star;
    if sigma_star != 0.0 {
        return Err(Error::ThresholdRegime { sigma_star });
    }
    let steps = params.time.candidate_steps().to_vec();
    let (pulses, adjoint) = sweep(params, scheme, u, costs, &steps)?;
    let cost = evaluate_cost(params, scheme, u, &pulses, costs)?;
    Ok(StrategyResult {
        scheme,
        certificate: Certificate {
            pulses: pulse_certificate(&adjoint, costs),
            controls: Vec::new(),
        },
        pulses,
        control: None,
        cost,
        realized_steps: steps,
        iterations: 1,
        converged: true,
        cost_history: vec![cost.total],
        diagnostics: Vec::new(),
    })
}

/// Optional interior sampling for [`brute_force_pulse`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InteriorSampling {
    pub samples: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BruteForceResult {
    pub best: StrategyResult,
    pub vertices: usize,
    /// Lowest cost among the interior samples.
    pub best_interior: Option<f64>,
    /// Interior samples strictly cheaper than the best vertex.
    pub interior_beating_vertex: usize,
}

fn strategy_from_coordinates(params: &ModelParams, coords: &[f64]) -> PulseStrategy {
    let n = params.space.len();
    PulseStrategy::new(
        coords
            .chunks(n)
            .map(|c| ScalarField::new(params.space, c.to_vec()).expect("grid length"))
            .collect(),
    )
}

/// Exhaustive search over `{0, 1}` for every pulse coordinate (pulse times
/// times grid points).
pub fn brute_force_pulse(
    params: &ModelParams,
    scheme: Scheme,
    u: &ContinuousControl,
    costs: &CostSpec,
    max_pulses: usize,
    interior: Option<InteriorSampling>,
) -> Result<BruteForceResult> {
    let k = params.time.n_candidates();
    let coordinates = k * params.space.len();
    let cap = max_pulses.min(ENUMERATION_CAP);
    if coordinates > cap {
        return Err(Error::EnumerationTooLarge { coordinates, cap });
    }
    let vertex = |mask: u64| -> Vec<f64> {
        (0..coordinates)
            .map(|j| if mask >> j & 1 == 1 { 1.0 } else { 0.0 })
            .collect()
    };
    // coordinate 0 as most significant bit, so integer order is lexicographic
    let lex_key = |mask: u64| -> u64 {
        if coordinates == 0 {
            0
        } else {
            mask.reverse_bits() >> (64 - coordinates)
        }
    };
    let n_vertices = 1usize << coordinates;
    let (best_cost, best_mask) = (0..n_vertices as u64)
        .into_par_iter()
        .map(|mask| {
            let v = strategy_from_coordinates(params, &vertex(mask));
            evaluate_cost(params, scheme, u, &v, costs).map(|c| (c.total, mask))
        })
        .try_reduce_with(|a, b| {
            let ord = a.0.total_cmp(&b.0).then(lex_key(a.1).cmp(&lex_key(b.1)));
            Ok(if ord.is_le() { a } else { b })
        })
        .expect("at least one vertex")?;
    let pulses = strategy_from_coordinates(params, &vertex(best_mask));
    let run = run_forward(params, scheme, u, &pulses, params.time.n_steps())?;
    let cost = evaluate_cost(params, scheme, u, &pulses, costs)?;

    let (best_interior, beating) = match interior {
        Some(s) if s.samples > 0 && coordinates > 0 => {
            let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
            let dist = Uniform::new_inclusive(0.0, 1.0);
            let samples: Vec<Vec<f64>> = (0..s.samples)
                .map(|_| (0..coordinates).map(|_| dist.sample(&mut rng)).collect())
                .collect();
            let costs_found: Vec<f64> = samples
                .par_iter()
                .map(|c| {
                    evaluate_cost(params, scheme, u, &strategy_from_coordinates(params, c), costs)
                        .map(|b| b.total)
                })
                .collect::<Result<_>>()?;
            let best = costs_found.iter().copied().fold(f64::INFINITY, f64::min);
            let beating = costs_found.iter().filter(|&&c| c < best_cost).count();
            (Some(best), beating)
        }
        _ => (None, 0),
    };
    Ok(BruteForceResult {
        best: StrategyResult {
            scheme,
            pulses,
            control: None,
            cost,
            certificate: Certificate::default(),
            realized_steps: run.jumps.iter().map(|j| j.step).collect(),
            iterations: n_vertices,
            converged: true,
            cost_history: Vec::new(),
            diagnostics: Vec::new(),
        },
        vertices: n_vertices,
        best_interior,
        interior_beating_vertex: beating,
    })
}

/// Default iteration cap of [`fixed_point_pulse`].
pub const FIXED_POINT_MAX_ITER: usize = 50;

fn padded(v: &PulseStrategy, params: &ModelParams) -> PulseStrategy {
    let mut values = v.values().to_vec();
    values.resize(
        params.time.n_candidates().max(values.len()),
        ScalarField::uniform(params.space, 1.0),
    );
    PulseStrategy::new(values)
}

fn realized(
    params: &ModelParams,
    scheme: Scheme,
    u: &ContinuousControl,
    v: &PulseStrategy,
) -> Result<Vec<usize>> {
    let run = run_forward(params, scheme, u, v, params.time.n_steps())?;
    Ok(run.jumps.iter().map(|j| j.step).collect())
}

/// Alternates forward runs (which pulses are realized) and backward sweeps
/// (what to do at them) until the realized set stops changing.
pub fn fixed_point_pulse(
    params: &ModelParams,
    scheme: Scheme,
    u: &ContinuousControl,
    costs: &CostSpec,
    max_iter: usize,
) -> Result<StrategyResult> {
    if params.chemical.sigma_star == 0.0 {
        return optimal_pulse(params, scheme, u, costs);
    }
    let ones = PulseStrategy::uniform(params.space, params.time.n_candidates(), 1.0);
    let mut history = vec![realized(params, scheme, u, &ones)?];
    let mut last = None;
    for it in 1..=max_iter {
        let current = history.last().expect("non-empty").clone();
        let (pulses, adjoint) = sweep(params, scheme, u, costs, &current)?;
        let next = realized(params, scheme, u, &padded(&pulses, params))?;
        if next == current {
            let cost = evaluate_cost(params, scheme, u, &pulses, costs)?;
            return Ok(StrategyResult {
                scheme,
                certificate: Certificate {
                    pulses: pulse_certificate(&adjoint, costs),
                    controls: Vec::new(),
                },
                pulses,
                control: None,
                cost,
                realized_steps: current,
                iterations: it,
                converged: true,
                cost_history: Vec::new(),
                diagnostics: Vec::new(),
            });
        }
        if history[..history.len() - 1].contains(&next) {
            return Err(Error::FixedPointCycle {
                first: next,
                second: current,
            });
        }
        last = Some((pulses, adjoint, current));
        history.push(next);
    }
    let (pulses, adjoint, steps) = last.expect("at least one iteration");
    let full = padded(&pulses, params);
    let cost = evaluate_cost(params, scheme, u, &full, costs)?;
    Ok(StrategyResult {
        scheme,
        certificate: Certificate {
            pulses: pulse_certificate(&adjoint, costs),
            controls: Vec::new(),
        },
        pulses: full,
        control: None,
        cost,
        realized_steps: steps,
        iterations: max_iter,
        converged: false,
        cost_history: Vec::new(),
        diagnostics: vec![format!(
            "realized pulse set still changing after {max_iter} iterations"
        )],
    })
}

/// Step-size policy of [`projected_gradient_mixed`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepPolicy {
    pub initial_step: f64,
    pub shrink: f64,
    pub max_halvings: usize,
    pub max_iterations: usize,
    /// Stop when the control moves less than this (grid L2 in space-time).
    pub control_tolerance: f64,
    /// Stop when the objective drops by less than this.
    pub cost_tolerance: f64,
    /// Also try a step toward the bang-bang target of the switching rule and
    /// keep whichever candidate lowers the objective more.
    pub switch_steps: bool,
}

impl Default for StepPolicy {
    fn default() -> Self {
        Self {
            initial_step: 1.0,
            shrink: 0.5,
            max_halvings: 40,
            max_iterations: 200,
            control_tolerance: 1e-6,
            cost_tolerance: 1e-10,
            switch_steps: true,
        }
    }
}

/// `C - sigma alpha p theta / (1 - sigma)` per step with `p`, `theta`
/// averaged over the step.
pub fn switching_margins(
    params: &ModelParams,
    forward: &dyn StateHistory,
    adjoint: &AdjointTrajectory,
    u: &ContinuousControl,
    costs: &CostSpec,
) -> Result<Vec<ScalarField>> {
    forward.require_full()?;
    let sigma = params.chemical.sigma;
    let n_steps = params.time.n_steps();
    let lookup = crate::engine::jump_lookup(n_steps, forward.realized_steps().into_iter());
    let mut op = StepOperator::new(params, forward.scheme());
    let mut out = Vec::with_capacity(n_steps);
    for n in 0..n_steps {
        op.load(params, forward.step_time(n), u.sample(n).values());
        let theta_plus = match lookup[n] {
            Some(i) => forward.jump(i).post,
            None => forward.state(n)?,
        };
        let theta_next = forward.state(n + 1)?;
        let p_plus = adjoint.post_value(n).values();
        let p_next = adjoint.values[n + 1].values();
        let c = costs.continuous_unit_cost[n].values();
        let alpha = op.alpha();
        let vals = (0..c.len())
            .map(|p| {
                let theta = 0.5 * (theta_plus[p] + theta_next[p]);
                let pp = 0.5 * (p_plus[p] + p_next[p]);
                c[p] - sigma * alpha[p] * pp * theta / (1.0 - sigma)
            })
            .collect();
        out.push(ScalarField::new(params.space, vals)?);
    }
    Ok(out)
}

fn control_distance(params: &ModelParams, a: &ContinuousControl, b: &ContinuousControl) -> f64 {
    let w = params.space.cell_volume() * params.time.step();
    let s: f64 = a
        .samples()
        .iter()
        .zip(b.samples())
        .flat_map(|(x, y)| x.values().iter().zip(y.values()).map(|(p, q)| (p - q) * (p - q)))
        .sum();
    (s * w).sqrt()
}

fn map_control(
    u: &ContinuousControl,
    other: &[ScalarField],
    f: impl Fn(f64, f64) -> f64,
) -> ContinuousControl {
    ContinuousControl::new(
        u.samples()
            .iter()
            .zip(other)
            .map(|(s, o)| {
                ScalarField::new(
                    s.grid(),
                    s.values().iter().zip(o.values()).map(|(&x, &y)| f(x, y)).collect(),
                )
                .expect("grid length")
            })
            .collect(),
    )
}

struct Iterate {
    u: ContinuousControl,
    inner: StrategyResult,
}

impl Iterate {
    fn cost(&self) -> f64 {
        self.inner.cost.total
    }
}

fn full_state(
    params: &ModelParams,
    scheme: Scheme,
    it: &Iterate,
    costs: &CostSpec,
) -> Result<(FieldTrajectory, AdjointTrajectory)> {
    let fwd = simulate_field(params, scheme, &it.u, &it.inner.pulses, 1)?;
    let adj = solve_adjoint(params, scheme, &it.u, &it.inner.pulses, costs, &fwd.realized_steps())?;
    Ok((fwd, adj))
}

/// Projected gradient on `u` with the pulse strategy re-optimized by
/// [`optimal_pulse`] after every control update.
pub fn projected_gradient_mixed(
    params: &ModelParams,
    scheme: Scheme,
    costs: &CostSpec,
    u0: &ContinuousControl,
    policy: StepPolicy,
) -> Result<StrategyResult> {
    let sigma = params.chemical.sigma;
    if sigma == 0.0 {
        let u = zero_control(params);
        let mut r = optimal_pulse(params, scheme, &u, costs)?;
        r.control = Some(u);
        r.diagnostics.push("sigma = 0: the control has no effect".into());
        return Ok(r);
    }
    if !(sigma < 1.0) {
        return Err(Error::InvalidParameter(
            "mixed optimization needs sigma < 1 so that u = 1 is admissible".into(),
        ));
    }
    let zeros: Vec<ScalarField> = u0.samples().to_vec();
    let clamp = |u: &ContinuousControl| map_control(u, &zeros, |x, _| x.clamp(0.0, 1.0));
    let inner = |u: ContinuousControl| -> Result<Iterate> {
        let r = optimal_pulse(params, scheme, &u, costs)?;
        Ok(Iterate { u, inner: r })
    };
    let mut current = inner(clamp(u0))?;
    let mut history = vec![current.cost()];
    let mut diagnostics = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < policy.max_iterations {
        iterations += 1;
        let (fwd, adj) = full_state(params, scheme, &current, costs)?;
        let grad = gradient_continuous(params, &fwd, &adj, &current.u, costs, None)?;
        let mut accepted: Option<Iterate> = None;

        let mut gamma = policy.initial_step;
        for _ in 0..=policy.max_halvings {
            let trial_u = map_control(&current.u, &grad.continuous_gradient, |x, g| {
                (x - gamma * g).clamp(0.0, 1.0)
            });
            if control_distance(params, &trial_u, &current.u) == 0.0 {
                break;
            }
            let trial = inner(trial_u)?;
            if trial.cost() < current.cost() {
                accepted = Some(trial);
                break;
            }
            gamma *= policy.shrink;
        }

        if policy.switch_steps {
            let margins = switching_margins(params, &fwd, &adj, &current.u, costs)?;
            let target = map_control(&current.u, &margins, |x, m| {
                if m > 0.0 {
                    0.0
                } else if m < 0.0 {
                    1.0
                } else {
                    x
                }
            });
            let mut beta = 1.0;
            for _ in 0..=policy.max_halvings {
                let trial_u = map_control(&current.u, target.samples(), |x, t| {
                    (x + beta * (t - x)).clamp(0.0, 1.0)
                });
                if control_distance(params, &trial_u, &current.u) == 0.0 {
                    break;
                }
                let trial = inner(trial_u)?;
                if trial.cost() < current.cost() {
                    if accepted.as_ref().is_none_or(|a| trial.cost() < a.cost()) {
                        accepted = Some(trial);
                    }
                    break;
                }
                beta *= policy.shrink;
            }
        }

        let Some(next) = accepted else {
            converged = true;
            diagnostics.push(format!(
                "no descent step found at iteration {iterations}; iterate is stationary"
            ));
            break;
        };
        let du = control_distance(params, &next.u, &current.u);
        let dj = current.cost() - next.cost();
        current = next;
        history.push(current.cost());
        if du <= policy.control_tolerance || dj <= policy.cost_tolerance {
            converged = true;
            break;
        }
    }
    if !converged {
        diagnostics.push(format!(
            "iteration cap {} reached",
            policy.max_iterations
        ));
    }
    let (fwd, adj) = full_state(params, scheme, &current, costs)?;
    let margins = switching_margins(params, &fwd, &adj, &current.u, costs)?;
    let controls = margins
        .into_iter()
        .enumerate()
        .map(|(n, margin)| ControlCertificate {
            step: n,
            time: params.time.time(n),
            margin,
            u: current.u.sample(n).clone(),
        })
        .collect();
    let Iterate { u, inner: mut r } = current;
    r.certificate.controls = controls;
    r.control = Some(u);
    r.iterations = iterations;
    r.converged = converged;
    r.cost_history = history;
    r.diagnostics = diagnostics;
    Ok(r)
}

/// Where a first-order sign condition failed.
#[derive(Debug, Clone, PartialEq)]
pub enum ViolationSite {
    Pulse { index: usize, point: usize },
    Control { step: usize, point: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub site: ViolationSite,
    pub value: f64,
    /// Derivative of `J` along the coordinate.
    pub derivative: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CertificateReport {
    pub checked: usize,
    pub violations: Vec<Violation>,
}

impl CertificateReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

fn sign_violation(value: f64, derivative: f64) -> bool {
    let up_ok = value >= 1.0 || derivative >= -CERTIFICATE_TOLERANCE;
    let down_ok = value <= 0.0 || -derivative >= -CERTIFICATE_TOLERANCE;
    !(up_ok && down_ok)
}

/// Checks that no admissible coordinate direction decreases `J` at first
/// order (slack 1e-8).
pub fn certificate_check(
    result: &StrategyResult,
    params: &ModelParams,
    costs: &CostSpec,
) -> Result<CertificateReport> {
    let scheme = result.scheme;
    let u = result.control.clone().unwrap_or_else(|| zero_control(params));
    let v = padded(&result.pulses, params);
    let fwd = simulate_field(params, scheme, &u, &v, 1)?;
    let adj = solve_adjoint(params, scheme, &u, &v, costs, &fwd.realized_steps())?;
    let w = params.space.cell_volume();
    let mut report = CertificateReport::default();
    let pg = gradient_pulse(&fwd, &adj, costs, None)?;
    for (i, g) in pg.pulse_gradient.iter().enumerate() {
        for (p, &gv) in g.values().iter().enumerate() {
            let value = v.values()[i].get(p);
            let derivative = w * gv;
            report.checked += 1;
            if sign_violation(value, derivative) {
                report.violations.push(Violation {
                    site: ViolationSite::Pulse { index: i, point: p },
                    value,
                    derivative,
                });
            }
        }
    }
    if result.control.is_some() {
        let h = params.time.step();
        let cg = gradient_continuous(params, &fwd, &adj, &u, costs, None)?;
        for (n, g) in cg.continuous_gradient.iter().enumerate() {
            for (p, &gv) in g.values().iter().enumerate() {
                let value = u.sample(n).get(p);
                let derivative = h * w * gv;
                report.checked += 1;
                if sign_violation(value, derivative) {
                    report.violations.push(Violation {
                        site: ViolationSite::Control { step: n, point: p },
                        value,
                        derivative,
                    });
                }
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ChemicalParams, TimeGrid, TimeProfile};

    fn params(n_steps: usize, every: usize, sigma_star: f64) -> ModelParams {
        let candidates = (1..).map(|k| k * every).take_while(|&s| s < n_steps).collect();
        ModelParams::averaged(
            TimeGrid::new(1.0, n_steps, candidates).unwrap(),
            TimeProfile::Seasonal {
                peak_time: 0.75,
                period: 0.2,
            },
            0.5 * 10f64.ln(),
            ChemicalParams {
                sigma: 0.3,
                sigma_star,
            },
            0.4,
        )
    }

    #[test]
    fn expensive_pulses_never_used() {
        let p = params(200, 20, 0.0);
        let u = zero_control(&p);
        let costs = CostSpec::for_params(&p, 1.0 + 0.5, 0.0, 0.5);
        let r = optimal_pulse(&p, Scheme::Semiflow, &u, &costs).unwrap();
        assert_eq!(r.intervention_count(), 0);
        assert!(r.pulses.scalars().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn free_pulses_always_used() {
        let p = params(200, 20, 0.0);
        let u = zero_control(&p);
        let costs = CostSpec::for_params(&p, 0.0, 0.0, 0.0);
        let r = optimal_pulse(&p, Scheme::Semiflow, &u, &costs).unwrap();
        assert!(r.pulses.scalars().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn threshold_regime_rejected() {
        let p = params(200, 20, 0.1);
        let costs = CostSpec::for_params(&p, 0.3, 0.0, 0.0);
        assert!(matches!(
            optimal_pulse(&p, Scheme::Semiflow, &zero_control(&p), &costs),
            Err(Error::ThresholdRegime { .. })
        ));
    }

    #[test]
    fn single_pulse_two_case_comparison() {
        let p = params(100, 50, 0.0);
        assert_eq!(p.time.n_candidates(), 1);
        let costs = CostSpec::for_params(&p, 5.0, 0.0, 0.0);
        let bf = brute_force_pulse(&p, Scheme::Semiflow, &zero_control(&p), &costs, 10, None).unwrap();
        assert_eq!(bf.best.pulses.scalars(), vec![1.0]);
        assert_eq!(bf.vertices, 2);
    }

    #[test]
    fn enumeration_cap_enforced() {
        let p = params(1000, 40, 0.0);
        let costs = CostSpec::for_params(&p, 0.3, 0.0, 0.0);
        assert!(matches!(
            brute_force_pulse(&p, Scheme::Semiflow, &zero_control(&p), &costs, 30, None),
            Err(Error::EnumerationTooLarge { cap: 20, .. })
        ));
    }

    #[test]
    fn brute_force_matches_sweep() {
        let p = params(200, 20, 0.0);
        let u = zero_control(&p);
        for c in [0.02, 0.05, 0.1] {
            let costs = CostSpec::for_params(&p, c, 0.0, 0.1);
            let opt = optimal_pulse(&p, Scheme::Semiflow, &u, &costs).unwrap();
            let bf = brute_force_pulse(&p, Scheme::Semiflow, &u, &costs, 20, None).unwrap();
            assert!((opt.cost.total - bf.best.cost.total).abs() <= 1e-10);
        }
    }

    #[test]
    fn fixed_point_passthrough_and_unreachable_threshold() {
        let p = params(200, 20, 0.0);
        let u = zero_control(&p);
        let costs = CostSpec::for_params(&p, 0.05, 0.0, 0.0);
        let a = optimal_pulse(&p, Scheme::Semiflow, &u, &costs).unwrap();
        let b = fixed_point_pulse(&p, Scheme::Semiflow, &u, &costs, FIXED_POINT_MAX_ITER).unwrap();
        assert_eq!(a, b);
        let p2 = params(200, 20, 2.0);
        let r = fixed_point_pulse(&p2, Scheme::Semiflow, &u, &costs, FIXED_POINT_MAX_ITER).unwrap();
        assert!(r.pulses.is_empty());
        assert!(r.certificate.pulses.is_empty());
        assert!(r.converged);
    }

    #[test]
    fn certificate_holds_for_sweep_and_fails_after_flip() {
        let p = params(200, 20, 0.0);
        let u = zero_control(&p);
        let costs = CostSpec::for_params(&p, 0.05, 0.0, 0.0);
        let r = optimal_pulse(&p, Scheme::Semiflow, &u, &costs).unwrap();
        assert!(certificate_check(&r, &p, &costs).unwrap().is_ok());
        let i = r
            .certificate
            .pulses
            .iter()
            .position(|c| c.margin().get(0) > 1e-3)
            .expect("some pulse is used");
        let mut flipped = r.clone();
        flipped.pulses.values_mut()[i] = ScalarField::scalar(1.0);
        assert!(!certificate_check(&flipped, &p, &costs).unwrap().is_ok());
    }

    #[test]
    fn zero_sigma_mixed_returns_pulse_optimum() {
        let mut p = params(200, 20, 0.0);
        p.chemical.sigma = 0.0;
        let u0 = ContinuousControl::uniform(p.space, 200, 0.5);
        let costs = CostSpec::for_params(&p, 0.05, 0.05, 0.0);
        let r = projected_gradient_mixed(&p, Scheme::Semiflow, &costs, &u0, StepPolicy::default()).unwrap();
        let opt = optimal_pulse(&p, Scheme::Semiflow, &zero_control(&p), &costs).unwrap();
        assert_eq!(r.pulses, opt.pulses);
        assert!(r.control.unwrap().scalars().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn huge_control_cost_switches_control_off() {
        let p = params(200, 20, 0.0);
        let u0 = ContinuousControl::uniform(p.space, 200, 0.5);
        let costs = CostSpec::for_params(&p, 0.05, 10.0, 0.0);
        let r = projected_gradient_mixed(&p, Scheme::Semiflow, &costs, &u0, StepPolicy::default()).unwrap();
        assert!(r.control.unwrap().scalars().iter().all(|&x| x == 0.0));
        assert!(r.cost_history.windows(2).all(|w| w[1] < w[0]));
    }
}
