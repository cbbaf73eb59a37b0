//! Reactive navigation with smoothed safety velocity cones.
//!
//! A robot moving with single-integrator dynamics is steered towards a target
//! by a proportional law. Near obstacles, the inward component of the
//! velocity is removed progressively, using only the range and bearing of the
//! nearest obstacle return from a simulated range sensor.
//!
//! Crate layout:
//! - [`geometry`]: implicit obstacles, oriented distance and projection Jacobians
//! - [`sensor`]: ray-marched range scans
//! - [`controller`]: the blended feedback law and its unsmoothed counterpart
//! - [`simulator`]: closed-loop integration and batches
//! - [`analysis`]: undesired equilibria, Jacobian spectra and certificates
//! - [`scenario`]: JSON scenarios and shipped presets

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod controller;
pub mod geometry;
pub mod scenario;
pub mod sensor;
pub mod simulator;

pub use controller::{ControlOutput, ControllerParams, Mode};
pub use geometry::{oriented_distance, signed_distance, ImplicitObstacle, Point, Shape, World};
pub use scenario::{load_scenario, AnyScenario, Scenario};
pub use sensor::{ScanConfig, Scanner};
pub use simulator::{simulate, SimConfig, TerminalStatus, Trajectory};
