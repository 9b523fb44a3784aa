//! Oligopoly pricing games under model-free Nash equilibrium seeking, with
//! and without deceptive dithering.
//!
//! The crate is `no_std` and only needs `alloc`. Modules, bottom-up:
//!
//! - [`numerics`]: dense solves, eigenvalues, root finding, RK4.
//! - [`oligopoly`]: market model, its quadratic form and Nash equilibrium.
//! - [`deception`]: perturbed pseudogradient, stability set, attainability.
//! - [`deceptive_game`]: the game the victims effectively play.
//! - [`dynamics`]: full, averaged, reduced and boundary-layer simulations.
#![no_std]
#![deny(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod deception;
pub mod deceptive_game;
pub mod dynamics;
mod error;
pub mod numerics;
pub mod oligopoly;

pub use deception::{
    AttainabilityFailure, AttainabilityResult, DeceptionTopology, Deceiver, LambdaMatrix,
    PerturbedPseudogradient, SearchConfig,
};
pub use deceptive_game::{DeceptiveGame, DesirabilityReport, NashVerdict, PriceDirection};
pub use dynamics::{
    AveragedResidual, CostModel, ModelKind, NesTuning, Ratio, Sample, SimConfig, SimState,
    SteadyState, Trajectory,
};
pub use error::Error;
pub use numerics::{DenseMatrix, NumericsError};
pub use oligopoly::{Aggregates, OligopolyParams, QuadraticGame};
