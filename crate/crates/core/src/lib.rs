//! Simulation of the quantum state of light emitted by correlated emitters.

pub mod density;
pub mod dynamics;
pub mod cascade;
pub mod error;
pub mod modes;
pub mod operator;
pub mod runner;
pub mod space;
pub mod states;
pub mod tomography;

pub use density::{DensityState, TraceMap};
pub use dynamics::{evolve, evolve_with, EvolveOptions, LindbladModel, StepControl, TimeGrid, Trajectory};
pub use error::{Error, Result};
pub use modes::{cascade_profile, mode_spectrum, principal_modes, CascadeProfile, ModeDecomposition, TemporalMode};
pub use operator::{CMatrix, OperatorMatrix, C64};
pub use space::{build_space, CompositeSpace, Factor, FactorKind};
