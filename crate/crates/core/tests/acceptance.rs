//! Acceptance suite: one PASS/FAIL line per criterion.

mod common;

use std::path::Path;
use std::time::{Duration, Instant};

use anthracnose::adjoint::{
    gradient_check, gradient_continuous, gradient_pulse, sensitivity_continuous, sensitivity_pulse,
    solve_adjoint,
};
use anthracnose::averaged::simulate_averaged_with;
use anthracnose::cli::run_cli;
use anthracnose::io::config::InitialMode;
use anthracnose::io::presets::{averaged_baseline, field_baseline, FINAL_COSTS, PULSE_COSTS};
use anthracnose::model::{
    validate, ContinuousControl, CostSpec, DiffusionField, ModelParams, PulseStrategy, ScalarField,
    TimeGrid,
};
use anthracnose::optimizer::{
    brute_force_pulse, optimal_pulse, projected_gradient_mixed, InteriorSampling, StepPolicy,
};
use anthracnose::pde::{apply_divergence, simulate_field};
use anthracnose::{Scheme, StateHistory};
use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn secs(d: Duration) -> String {
    format!("{:.2}s", d.as_secs_f64())
}

/// Forward-invariance of [0, 1] on 100 random bundles.
fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..100 {
        let spatial = i % 2 == 1;
        let grid = if spatial {
            random_grid(&mut rng, [10, 10, 3])
        } else {
            anthracnose::model::SpaceGrid::single()
        };
        let every = rng.gen_range(10..=100);
        let threshold = rng.gen_bool(0.3);
        let (b, scheme) = random_bundle(&mut rng, grid, 1000, every, threshold);
        let report = validate(&b);
        if !report.is_ok() {
            return Err(format!("bundle {i} failed validation: {report}"));
        }
        let (l, h) = if spatial {
            simulate_field(&b.params, scheme, &b.control, &b.pulses, 1)
                .map_err(|e| format!("bundle {i}: {e}"))?
                .value_range()
        } else {
            simulate_averaged_with(&b.params, &b.control, &b.pulses, scheme)
                .map_err(|e| format!("bundle {i}: {e}"))?
                .value_range()
        };
        lo = lo.min(l);
        hi = hi.max(h);
    }
    let t = start.elapsed();
    ensure(
        lo >= -1e-6 && hi <= 1.0 + 1e-6 && t < Duration::from_secs(120),
        format!("range [{lo:e}, {hi}] over 100 bundles in {}", secs(t)),
    )
}

/// Closed form `a + (theta - a) exp(-alpha t / a)` with jumps.
fn closed_form(alpha: f64, a: f64, theta0: f64, times: &[f64], pulses: &[(f64, f64)]) -> Vec<f64> {
    times
        .iter()
        .map(|&t| {
            let mut theta = theta0;
            let mut t0 = 0.0;
            for &(tau, v) in pulses.iter().filter(|(tau, _)| *tau < t) {
                theta = a + (theta - a) * (-alpha * (tau - t0) / a).exp();
                theta *= v;
                t0 = tau;
            }
            a + (theta - a) * (-alpha * (t - t0) / a).exp()
        })
        .collect()
}

fn criterion_2() -> Outcome {
    let (alpha, sigma, u, theta0) = (3.0, 0.3, 0.5, 0.4);
    let a = 1.0 - sigma * u;
    let params = constant_averaged(alpha, sigma, theta0, 1000, 50);
    let k = params.time.n_candidates();
    let vs: Vec<f64> = (0..k).map(|i| 0.3 + 0.05 * i as f64).collect();
    let ctrl = ContinuousControl::uniform(params.space, 1000, u);
    let traj = simulate_averaged_with(&params, &ctrl, &PulseStrategy::from_scalars(&vs), Scheme::Semiflow)
        .map_err(|e| e.to_string())?;
    let taus: Vec<(f64, f64)> = params.time.candidate_times().into_iter().zip(vs).collect();
    let exact = closed_form(alpha, a, theta0, &traj.times, &taus);
    let rel = traj
        .values
        .iter()
        .zip(&exact)
        .map(|(x, e)| (x - e).abs() / e.abs())
        .fold(0.0, f64::max);

    let mut errors = Vec::new();
    for n in [25, 50, 100, 200] {
        let p = constant_averaged(alpha, sigma, theta0, n, n);
        let ctrl = ContinuousControl::uniform(p.space, n, u);
        let tr = simulate_field(&p, Scheme::CrankNicolson, &ctrl, &PulseStrategy::new(vec![]), 1)
            .map_err(|e| e.to_string())?;
        let e = closed_form(alpha, a, theta0, &[1.0], &[])[0];
        errors.push((tr.final_field().get(0) - e).abs());
    }
    let ratios: Vec<f64> = errors.windows(2).map(|w| w[0] / w[1]).collect();
    ensure(
        rel <= 1e-8 && ratios.iter().all(|r| (3.5..=4.5).contains(r)),
        format!("averaged max relative error {rel:e}; PDE 1x1x1 error ratios {ratios:?}"),
    )
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst: f64 = 0.0;
    let mut uniform_max: f64 = 0.0;
    for _ in 0..100 {
        let grid = random_grid(&mut rng, [10, 10, 3]);
        let a = random_diffusion(&mut rng, grid, 10.0);
        let phi = random_field(&mut rng, grid, -1.0, 1.0);
        let out = apply_divergence(&a, &phi).map_err(|e| e.to_string())?;
        let scale: f64 = out.values().iter().map(|x| x.abs()).sum();
        if scale > 0.0 {
            worst = worst.max(out.sum().abs() / scale);
        }
        let flat = ScalarField::uniform(grid, rng.gen_range(0.0..=1.0));
        let z = apply_divergence(&a, &flat).map_err(|e| e.to_string())?;
        uniform_max = uniform_max.max(z.values().iter().map(|x| x.abs()).fold(0.0, f64::max));
    }
    ensure(
        worst <= 1e-12 && uniform_max == 0.0,
        format!("max relative sum {worst:e}; max |stencil(uniform)| {uniform_max:e}"),
    )
}

fn uniform_spatial(params: &ModelParams, v: &PulseStrategy) -> PulseStrategy {
    PulseStrategy::new(
        v.values()
            .iter()
            .map(|f| ScalarField::uniform(params.space, f.get(0)))
            .collect(),
    )
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let mut cfg = field_baseline();
    cfg.initial.mode = InitialMode::Uniform;
    let e = cfg.build().map_err(|e| e.to_string())?;
    let pde = &e.bundle.params;
    let avg = pde.spatial_mean();
    let scheme = Scheme::CrankNicolson;
    let u_avg = ContinuousControl::uniform(avg.space, avg.time.n_steps(), 0.0);
    let costs_avg = CostSpec::for_params(&avg, e.config.costs.pulse, 0.0, 0.0);
    let avg_opt = optimal_pulse(&avg, scheme, &u_avg, &costs_avg).map_err(|e| e.to_string())?;
    let v_field = uniform_spatial(pde, &avg_opt.pulses);

    let field = simulate_field(pde, scheme, &e.bundle.control, &v_field, 1).map_err(|e| e.to_string())?;
    let scalar = simulate_averaged_with(&avg, &u_avg, &avg_opt.pulses, scheme).map_err(|e| e.to_string())?;
    let mut dev: f64 = 0.0;
    for (f, s) in field.fields().iter().zip(&scalar.values) {
        dev = dev.max(f.values().iter().map(|x| (x - s).abs()).fold(0.0, f64::max));
    }
    for (fj, sj) in field.jumps().iter().zip(&scalar.jumps) {
        dev = dev.max(fj.post.values().iter().map(|x| (x - sj.post).abs()).fold(0.0, f64::max));
    }
    let semiflow = simulate_averaged_with(&avg, &u_avg, &avg_opt.pulses, Scheme::Semiflow)
        .map_err(|e| e.to_string())?;
    let scheme_gap = semiflow
        .values
        .iter()
        .zip(&scalar.values)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);

    let mut sets = Vec::new();
    let mut all_uniform = true;
    for d in [1.0, 10.0] {
        let mut p = pde.clone();
        p.diffusion = DiffusionField::isotropic(p.space, d).map_err(|e| e.to_string())?;
        let r = optimal_pulse(&p, scheme, &e.bundle.control, &e.bundle.costs).map_err(|e| e.to_string())?;
        all_uniform &= r.pulses.values().iter().all(|f| f.is_uniform());
        sets.push(r.intervention_steps());
    }
    let avg_set = avg_opt.intervention_steps();
    let t = start.elapsed();
    ensure(
        dev < 1e-8 && sets[0] == sets[1] && sets[0] == avg_set && all_uniform && t < Duration::from_secs(60),
        format!(
            "max |theta(x,t) - Theta(t)| {dev:e}; {} interventions for A = I and {} for A = 10I, uniform {all_uniform}, equal to averaged {}; semiflow vs CN gap {scheme_gap:e}; {}",
            sets[0].len(),
            sets[1].len(),
            sets[0] == avg_set,
            secs(t)
        ),
    )
}

fn interior(rng: &mut ChaCha8Rng, params: &ModelParams) -> (ContinuousControl, PulseStrategy) {
    let grid = params.space;
    let u = ContinuousControl::new(
        (0..params.time.n_steps()).map(|_| random_field(rng, grid, 0.2, 0.8)).collect(),
    );
    let v = PulseStrategy::new(
        (0..params.time.n_candidates()).map(|_| random_field(rng, grid, 0.2, 0.8)).collect(),
    );
    (u, v)
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let t1 = averaged_baseline().build().map_err(|e| e.to_string())?;
    let mut small = field_baseline();
    small.grid.points = [3, 3, 2];
    small.alpha.amplitude = anthracnose::io::config::AmplitudeSpec::Text("random:4".into());
    small.time.steps_per_interval = 4;
    small.initial.mode = InitialMode::Uniform;
    let t2 = small.build().map_err(|e| e.to_string())?;
    let mut fd_worst: f64 = 0.0;
    let mut dual_worst: f64 = 0.0;
    let mut checks = 0;
    for (e, cases) in [(&t1, 10), (&t2, 10)] {
        let params = &e.bundle.params;
        let mut costs = e.bundle.costs.clone();
        costs.continuous_unit_cost = vec![ScalarField::uniform(params.space, 0.05); params.time.n_steps()];
        costs.final_cost = ScalarField::uniform(params.space, 0.25);
        for _ in 0..cases {
            let (u, v) = interior(&mut rng, params);
            let seed = rng.gen();
            let cmp = gradient_check(params, e.scheme, &u, &v, &costs, 1, 1e-5, seed)
                .map_err(|e| e.to_string())?;
            for c in &cmp {
                fd_worst = fd_worst.max(c.relative_error);
                checks += 1;
            }
            let fwd = simulate_field(params, e.scheme, &u, &v, 1).map_err(|e| e.to_string())?;
            let adj = solve_adjoint(params, e.scheme, &u, &v, &costs, &fwd.realized_steps())
                .map_err(|e| e.to_string())?;
            let (du, dv) = interior(&mut rng, params);
            let jv = gradient_pulse(&fwd, &adj, &costs, Some(&dv)).map_err(|e| e.to_string())?;
            let ju = gradient_continuous(params, &fwd, &adj, &u, &costs, Some(&du)).map_err(|e| e.to_string())?;
            let zv = sensitivity_pulse(params, e.scheme, &u, &v, &costs, &dv).map_err(|e| e.to_string())?;
            let zu = sensitivity_continuous(params, e.scheme, &u, &v, &costs, &du).map_err(|e| e.to_string())?;
            for (a, z) in [
                (jv.directional_value.unwrap(), zv.derivative),
                (ju.directional_value.unwrap(), zu.derivative),
            ] {
                dual_worst = dual_worst.max((a - z).abs() / a.abs().max(z.abs()));
            }
        }
    }
    ensure(
        fd_worst <= 1e-4 && dual_worst <= 1e-6,
        format!("{checks} finite-difference comparisons, max relative error {fd_worst:e}; sensitivity duality max {dual_worst:e}"),
    )
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut instances: Vec<(String, ModelParams, Scheme, ContinuousControl, CostSpec)> = Vec::new();
    {
        let e = averaged_baseline().build().map_err(|e| e.to_string())?;
        let mut p = e.bundle.params.clone();
        p.time = TimeGrid::with_pulse_interval(10.0 / 52.0, 1.0 / 52.0, 20).map_err(|e| e.to_string())?;
        let costs = CostSpec::for_params(&p, 0.4, 0.0, 0.0);
        let u = ContinuousControl::uniform(p.space, p.time.n_steps(), 0.0);
        instances.push(("baseline T=10/52".into(), p, Scheme::Semiflow, u, costs));
    }
    for i in 0..5 {
        let every = rng.gen_range(40..=100);
        let (b, scheme) = random_bundle(&mut rng, anthracnose::model::SpaceGrid::single(), 400, every, false);
        instances.push((format!("random averaged {i}"), b.params, scheme, b.control, b.costs));
    }
    {
        let grid = anthracnose::model::SpaceGrid::new([2, 1, 1], 1.0).map_err(|e| e.to_string())?;
        let (b, scheme) = random_bundle(&mut rng, grid, 200, 40, false);
        instances.push(("random 2-point PDE".into(), b.params, scheme, b.control, b.costs));
    }
    let mut gap: f64 = 0.0;
    let mut beaten = 0;
    let mut slowest = Duration::ZERO;
    let mut most = 0;
    for (i, (_, p, scheme, u, costs)) in instances.iter().enumerate() {
        let start = Instant::now();
        most = most.max(p.time.n_candidates());
        let sweep = optimal_pulse(p, *scheme, u, costs).map_err(|e| e.to_string())?;
        let sampling = InteriorSampling {
            samples: 200,
            seed: 1000 + i as u64,
        };
        let bf = brute_force_pulse(p, *scheme, u, costs, 20, Some(sampling)).map_err(|e| e.to_string())?;
        gap = gap.max((sweep.cost.total - bf.best.cost.total).abs());
        beaten += bf.interior_beating_vertex;
        slowest = slowest.max(start.elapsed());
    }
    ensure(
        most <= 10 && gap <= 1e-10 && beaten == 0 && slowest < Duration::from_secs(60),
        format!(
            "{} instances with at most {most} candidates, max |J(sweep) - J(enumeration)| {gap:e}, interior samples beating the best vertex {beaten}, slowest {}",
            instances.len(),
            secs(slowest)
        ),
    )
}

fn pulse_sets(u: f64) -> Result<Vec<Vec<usize>>, String> {
    PULSE_COSTS
        .iter()
        .map(|&c| {
            let mut cfg = averaged_baseline();
            cfg.costs.pulse = c;
            cfg.control.u = u;
            let e = cfg.build().map_err(|e| e.to_string())?;
            let b = &e.bundle;
            let r = optimal_pulse(&b.params, e.scheme, &b.control, &b.costs).map_err(|e| e.to_string())?;
            Ok(r.intervention_steps())
        })
        .collect()
}

fn criterion_7() -> Outcome {
    let plain = pulse_sets(0.0)?;
    let chem = pulse_sets(1.0)?;
    let counts: Vec<usize> = plain.iter().map(Vec::len).collect();
    let chem_counts: Vec<usize> = chem.iter().map(Vec::len).collect();
    let decreasing = counts.windows(2).all(|w| w[1] < w[0]);
    let nested = plain.windows(2).all(|w| is_subset(&w[1], &w[0]));
    let reduced = chem_counts.iter().zip(&counts).all(|(c, p)| c <= p);
    ensure(
        decreasing && nested && reduced,
        format!("counts {counts:?} for c = {PULSE_COSTS:?}, nested {nested}; with u = 1: {chem_counts:?}"),
    )
}

fn criterion_8() -> Outcome {
    let sets: Vec<Vec<usize>> = FINAL_COSTS
        .iter()
        .chain(&[0.6, 10.0])
        .map(|&cf| {
            let mut cfg = averaged_baseline();
            cfg.costs.pulse = 0.5;
            cfg.costs.final_cost = cf;
            let e = cfg.build().map_err(|e| e.to_string())?;
            let b = &e.bundle;
            let r = optimal_pulse(&b.params, e.scheme, &b.control, &b.costs).map_err(|e| e.to_string())?;
            Ok(r.intervention_steps())
        })
        .collect::<Result<_, String>>()?;
    let saturated = sets[3] == sets[4];
    let nested = sets[..3].windows(2).all(|w| is_subset(&w[0], &w[1]));
    let counts: Vec<usize> = sets.iter().map(Vec::len).collect();
    ensure(
        saturated && nested,
        format!("counts {counts:?} for C_f = [0, 0.25, 0.5, 0.6, 10]; C_f 0.6 vs 10 identical {saturated}; nested {nested}"),
    )
}

fn criterion_9() -> Outcome {
    let mut details = Vec::new();
    let mut ok = true;
    for continuous in [0.05, 0.001] {
        let mut cfg = averaged_baseline();
        cfg.costs.continuous = continuous;
        let e = cfg.build().map_err(|e| e.to_string())?;
        let p = &e.bundle.params;
        let u0 = ContinuousControl::uniform(p.space, p.time.n_steps(), 0.5);
        let r = projected_gradient_mixed(p, e.scheme, &e.bundle.costs, &u0, StepPolicy::default())
            .map_err(|e| e.to_string())?;
        let monotone = r.cost_history.windows(2).all(|w| w[1] <= w[0]);
        let (agree, decided) = r.certificate.control_agreement(1e-6, 1e-9);
        let on = r
            .control
            .as_ref()
            .map_or(0, |u| u.samples().iter().filter(|s| s.get(0) > 0.0).count());
        ok &= monotone && r.converged && r.iterations <= 200 && agree >= 0.99;
        details.push(format!(
            "C = {continuous}: {} iterations, converged {}, non-increasing {monotone}, agreement {:.4} on {decided} samples, u > 0 on {on} steps",
            r.iterations, r.converged, agree
        ));
    }
    ensure(ok, details.join("; "))
}

fn collect_files(dir: &Path, out: &mut Vec<(String, Vec<u8>)>) {
    let mut entries: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_files(&p, out);
        } else {
            out.push((p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()));
        }
    }
}

fn criterion_10() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut compared = 0;
    for (name, extra) in [("fig2", ""), ("fig7", " --seed 17 --store-every 52")] {
        let mut snapshots = Vec::new();
        for run in 0..2 {
            let out = dir.path().join(format!("{name}-{run}"));
            let argv: Vec<String> = format!("anthracnose preset {name} --out {}{extra}", out.display())
                .split_whitespace()
                .map(String::from)
                .collect();
            let code = run_cli(&argv);
            if code != 0 {
                return Err(format!("preset {name} exited with {code}"));
            }
            let mut files = Vec::new();
            collect_files(&out, &mut files);
            snapshots.push(files);
        }
        if snapshots[0] != snapshots[1] {
            return Err(format!("preset {name} outputs differ between runs"));
        }
        compared += snapshots[0].len();
    }
    Ok(format!("{compared} files byte-identical across repeated fig2 and fig7 runs"))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        ("invariance of [0, 1]", criterion_1),
        ("closed-form oracle", criterion_2),
        ("conservation", criterion_3),
        ("uniformity reduction", criterion_4),
        ("gradient fidelity", criterion_5),
        ("optimality oracle", criterion_6),
        ("pulse cost sweep with and without chemical control", criterion_7),
        ("final cost saturation", criterion_8),
        ("mixed descent", criterion_9),
        ("reproducibility", criterion_10),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let (status, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {} {status}: {name} ({detail}) [{}]", i + 1, secs(start.elapsed()));
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
