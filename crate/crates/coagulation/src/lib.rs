//! Self-similar profiles of Smoluchowski's coagulation equation for
//! homogeneity-zero kernels close to the constant kernel.
//!
//! The crate computes mass-one self-similar profiles as fixed points of the
//! coagulation integral map, evaluates their desingularized Laplace
//! transforms Q(q) = ∫ (1 - e^{-qx}) f(x) dx together with the first-order
//! equation those transforms satisfy, locates the transform singularity,
//! runs a time-dependent sectional simulation for the dynamic-scaling
//! comparison, and verifies a ledger of quantitative estimates (integral
//! bounds, regularity and decay exponents, moment growth, and the
//! contraction property behind uniqueness of the profiles).
//!
//! Start with the runnable examples (`cargo run --example ...`), or with the
//! `coag` binary for file-based workflows.

mod error;
mod grid;
mod integrate;
mod kernel;
mod profile;
mod quad;
mod solver;

pub use error::{Error, Result};
pub use grid::Grid;
pub use kernel::{CoagulationKernel, ValidationReport};
pub use profile::{Profile, Tail, TailFit};
pub use solver::{
    apply_map, residual, seed_exponential, seed_gamma, seed_perturbed, solve, SolveResult,
    SolveSettings,
};
