//! Simulation of a point-contact detector continuously monitoring an
//! unstable quantum-dot electron.
//!
//! The library integrates Bloch-type quantum rate equations for the
//! detector counting statistics, the dot-plus-continuum decay (flat and
//! Lorentzian densities of states), and the count-resolved joint dynamics.
//! Derived observables cover survival probabilities, average detector
//! current, decoherence-broadened line shapes, and the Zeno / anti-Zeno
//! modification of the decay rate behind a resonance cavity.
//!
//! Units: `hbar = 1` and electron charge `e = 1` throughout. Energies and
//! rates share one reference unit; times are measured in its inverse.

pub mod cavity;
pub mod cli;
pub mod core;
pub mod detector;
mod error;
pub mod fit;
pub mod flat_decay;
pub mod integrator;

pub use crate::core::{
    validate_params, derived_rates, ContinuumGrid, CountResolvedState, ModelParams, TracedState,
    Trajectory,
};
pub use error::{Error, Result};
