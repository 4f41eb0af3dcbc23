//! Localization of a ground emitter from frequency-of-arrival measurements
//! taken through a single moving satellite.
//!
//! The pipeline is: [`scenario`] builds the pass and injects ephemeris and
//! oscillator errors, [`measurement`] synthesizes the observed interference
//! and reference frequencies, [`calibration`] removes the mismatch seen on
//! the reference, [`solver`] solves the location-related equations on the
//! sphere, and [`harness`] runs Monte-Carlo studies over all of it.

// `!(x > 0.0)` is used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod error;
pub mod geodesy;
pub mod harness;
pub mod measurement;
pub mod scenario;
pub mod solver;

pub use calibration::{calibrate_and_reduce, CalibratedObservation, CalibrationContext};
pub use error::{Error, Result};
pub use geodesy::{ecef_to_geodetic, geodetic_to_ecef, unit_vector_between, EarthModel, GeodeticPoint, Vec3};
pub use harness::{ExperimentConfig, RmseReport, RmseRow, SolverOptions, Sweep, TrialOutcome};
pub use measurement::{synthesize, Measurement};
pub use scenario::{load_scenario, Method, Mode, OrbitKind, SatelliteSample, Scenario};
pub use solver::{newton_solve, LocationEstimate, ResidualSystem, Selection, SolverConfig};
