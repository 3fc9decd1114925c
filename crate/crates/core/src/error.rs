use thiserror::Error;

/// Errors raised by the solvers, optimizers and I/O front end.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("non-finite integrand at t = {time}")]
    Quadrature { time: f64 },

    #[error("linear solver did not converge at t = {time}: relative residual {residual:.3e} after {iterations} iterations")]
    LinearSolver {
        time: f64,
        residual: f64,
        iterations: usize,
    },

    #[error("pulse strategy has {available} entries but pulse number {needed} was realized")]
    StrategyTooShort { needed: usize, available: usize },

    #[error("pulse count mismatch: {0}")]
    PulseCountMismatch(String),

    #[error("constructive pulse optimization requires sigma_star = 0 (got {sigma_star}); use fixed_point_pulse")]
    ThresholdRegime { sigma_star: f64 },

    #[error("enumeration over {coordinates} binary coordinates exceeds the cap of {cap}")]
    EnumerationTooLarge { coordinates: usize, cap: usize },

    #[error("realized pulse sets cycle between {first:?} and {second:?}")]
    FixedPointCycle {
        first: Vec<usize>,
        second: Vec<usize>,
    },

    #[error("trajectory storage is decimated (every {store_every} steps); full storage is required here")]
    DecimatedTrajectory { store_every: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
