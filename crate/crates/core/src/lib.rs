//! Simulation toolkit for measurement-modified quantum dynamics.
//!
//! Three engines share one state layer:
//!
//! * [`two_level`]: a resonantly driven two-state system observed at fixed
//!   intervals (quantum Zeno effect), with closed forms and Monte-Carlo
//!   trajectories.
//! * [`rotor`]: the kicked-rotor quantum map with a configurable
//!   phase-randomizing measurement schedule (dynamical localization and its
//!   destruction).
//! * [`decay`]: survival-probability laws and the short-time perturbative
//!   decay integral.
//!
//! [`analysis`] turns ensemble results into diffusion, localization and
//! break-time estimates; [`config`] and [`run`] drive the command line tool.

pub mod analysis;
pub mod bessel;
pub mod config;
pub mod decay;
pub mod ensemble;
pub mod error;
pub mod quadrature;
pub mod rng;
pub mod rotor;
pub mod run;
pub mod state;
pub mod two_level;
pub mod verify;

pub use ensemble::{EnsembleResult, Series};
pub use error::{Error, Result};
pub use rng::RngStream;
pub use state::{LabelSet, ProbabilityDistribution, StateVector};
