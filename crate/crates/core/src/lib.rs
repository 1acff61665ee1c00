//! Numerical laboratory for the Fourier-analytic treatment of discrepancy
//! of random set systems.
//!
//! A random `m × n` incidence matrix `A` and a uniformly random coloring
//! `x ∈ {±1}ⁿ` give the signed discrepancy `D = Ax`. Adding an independent
//! smoothing vector `R` yields `X = D + R`, and `Pr[X = 0] > 0` certifies a
//! coloring with `‖Ax‖∞ ≤ Δ`. The crate evaluates the transforms `D̂`, `R̂`
//! and `X̂`, inverts them by Monte Carlo and by exact enumeration, checks the
//! analytic inequalities that drive the argument, and searches for low
//! discrepancy colorings directly.

pub mod error;
pub mod fourier;
pub mod harness;
pub mod inversion;
pub mod rng;
pub mod setsystem;
pub mod smoothing;
pub mod solvers;

pub use error::{Error, Result};
