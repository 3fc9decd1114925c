#![allow(dead_code)]

use anthracnose::model::{
    ChemicalParams, ContinuousControl, CostSpec, DiffusionField, InhibitionPressure, ModelParams,
    ProblemBundle, PulseStrategy, ScalarField, SpaceGrid, TimeGrid, TimeProfile,
};
use anthracnose::Scheme;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn random_field(rng: &mut ChaCha8Rng, grid: SpaceGrid, lo: f64, hi: f64) -> ScalarField {
    ScalarField::new(grid, (0..grid.len()).map(|_| rng.gen_range(lo..=hi)).collect()).unwrap()
}

pub fn random_grid(rng: &mut ChaCha8Rng, max: [usize; 3]) -> SpaceGrid {
    SpaceGrid::new(
        [
            rng.gen_range(1..=max[0]),
            rng.gen_range(1..=max[1]),
            rng.gen_range(1..=max[2]),
        ],
        rng.gen_range(0.5..=2.0),
    )
    .unwrap()
}

pub fn random_diffusion(rng: &mut ChaCha8Rng, grid: SpaceGrid, max: f64) -> DiffusionField {
    DiffusionField::from_fn(grid, |_, _| rng.gen_range(0.0..=max)).unwrap()
}

/// Candidate steps every `every` steps strictly inside `(0, n_steps)`.
pub fn candidates(n_steps: usize, every: usize) -> Vec<usize> {
    (1..).map(|k| k * every).take_while(|&s| s < n_steps).collect()
}

/// A random problem on `grid` with `n_steps` steps over `[0, 1]`, random
/// controls and costs; spatial grids get random diffusion and Crank-Nicolson.
pub fn random_bundle(
    rng: &mut ChaCha8Rng,
    grid: SpaceGrid,
    n_steps: usize,
    pulse_every: usize,
    threshold: bool,
) -> (ProblemBundle, Scheme) {
    let time = TimeGrid::new(1.0, n_steps, candidates(n_steps, pulse_every)).unwrap();
    let amplitude = random_field(rng, grid, 0.0, 5.0);
    let alpha = if rng.gen_bool(0.5) {
        InhibitionPressure::seasonal(amplitude, rng.gen_range(0.0..=1.0), rng.gen_range(0.1..=1.0))
    } else {
        InhibitionPressure {
            amplitude,
            profile: TimeProfile::Constant,
        }
    };
    let spatial = grid.len() > 1;
    let diffusion = if spatial {
        random_diffusion(rng, grid, 10.0)
    } else {
        DiffusionField::zero(grid)
    };
    let sigma_star = if threshold { rng.gen_range(0.0..=0.6) } else { 0.0 };
    let params = ModelParams {
        time,
        space: grid,
        alpha,
        diffusion,
        chemical: ChemicalParams {
            sigma: rng.gen_range(0.0..=0.95),
            sigma_star,
        },
        initial: random_field(rng, grid, 0.0, 1.0),
    };
    let k = params.time.n_candidates();
    let control = ContinuousControl::new((0..n_steps).map(|_| random_field(rng, grid, 0.0, 1.0)).collect());
    let pulses = PulseStrategy::new((0..k).map(|_| random_field(rng, grid, 0.0, 1.0)).collect());
    let costs = CostSpec::for_params(
        &params,
        rng.gen_range(0.0..=1.0),
        rng.gen_range(0.0..=0.2),
        rng.gen_range(0.0..=1.0),
    );
    let scheme = if spatial { Scheme::CrankNicolson } else { Scheme::Semiflow };
    (
        ProblemBundle {
            params,
            costs,
            control,
            pulses,
        },
        scheme,
    )
}

/// Averaged problem with constant `alpha` and the given candidates.
pub fn constant_averaged(alpha: f64, sigma: f64, theta0: f64, n_steps: usize, every: usize) -> ModelParams {
    ModelParams::averaged(
        TimeGrid::new(1.0, n_steps, candidates(n_steps, every)).unwrap(),
        TimeProfile::Constant,
        alpha,
        ChemicalParams {
            sigma,
            sigma_star: 0.0,
        },
        theta0,
    )
}

/// Step indices where `v` is not 1.
pub fn intervention_set(steps: &[usize], pulses: &PulseStrategy) -> Vec<usize> {
    steps
        .iter()
        .zip(pulses.values())
        .filter(|(_, v)| v.values().iter().any(|&x| x != 1.0))
        .map(|(&s, _)| s)
        .collect()
}

pub fn is_subset(a: &[usize], b: &[usize]) -> bool {
    a.iter().all(|x| b.contains(x))
}
