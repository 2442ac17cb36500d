//! Optimally controlled transition paths between the stable states of the
//! 1-D Ginzburg-Landau equation.

pub mod config;
pub mod error;
pub mod experiments;
pub mod grid;
pub mod linalg;
pub mod model;
pub mod schemes;
pub mod solver;

pub use config::Settings;
pub use error::{Error, Result};
pub use experiments::{SweepMode, SweepResult, SweepSpec};
pub use grid::{Field, PathPair, SpaceTimeGrid};
pub use model::{ModelParams, StablePair};
pub use schemes::{Diagnostics, Problem, SchemeKind};
pub use solver::{LadderPlan, SeedKind, SolveReport, SolverConfig, Stage};
