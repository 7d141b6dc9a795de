//! Discrete-time model of a generation / demand / storage triple.
//!
//! Storage evolves by a clamped recursion on the step balance `B = G − D`.
//! The probability that the next step can be absorbed by storage is computed
//! from the balance distribution (numerical cross-correlation of densities,
//! or closed forms for a known generation and Weibull demand) and checked
//! against seeded Monte Carlo frequencies.

pub mod balance;
pub mod cli;
pub mod dist;
pub mod montecarlo;
pub mod results;
pub mod rng;
pub mod scenario;
pub mod storage;
pub mod validate;
