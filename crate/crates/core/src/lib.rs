//! Impulsive reaction-diffusion model of anthracnose inhibition with
//! adjoint-based optimization of pulse (pruning) and continuous (chemical)
//! controls.
//!
//! The crate offers two model variants sharing one set of types:
//!
//! * the spatially-averaged scalar model ([`averaged`]), a one-point grid;
//! * the space-dependent reaction-diffusion model ([`pde`]).
//!
//! [`adjoint`] provides costates and gradients, [`optimizer`] the strategy
//! computations, and [`io`] / [`cli`] the configuration and CSV front end.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod adjoint;
pub mod averaged;
pub mod cli;
mod engine;
pub mod error;
pub mod io;
pub mod linalg;
pub mod model;
pub mod optimizer;
pub mod pde;

pub use engine::{Jump, PointValues, Scheme, StateHistory};
pub use error::{Error, Result};
