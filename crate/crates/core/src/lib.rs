//! Scenario-driven agent-based transport simulation for phased reopening
//! studies, plus sociability indicators computed from detection logs.
//!
//! The crate is organised bottom-up:
//!
//! * [`netio`] loads the road network CSVs and a GTFS subset.
//! * [`population`] generates agents and suppresses work tours for
//!   work-from-home phases.
//! * [`choice`] holds the logit machinery (MNL, nested logit, flattening).
//! * [`engine`] executes plans on the network and runs the replanning loop.
//! * [`calibrate`] perturbs alternative-specific constants towards targets.
//! * [`scenario`] composes everything into reopening-phase scenario matrices.
//! * [`sociability`] computes distancing and density metrics from detections.
//! * [`toy`] builds the desk-scale toy city used by tests and the CLI.

pub mod calibrate;
pub mod choice;
pub mod engine;
pub mod error;
pub mod manifest;
pub mod netio;
pub mod population;
pub mod scenario;
pub mod seeding;
pub mod sociability;
pub mod toy;

pub use error::{Error, Result};

/// Seconds in the nominal simulated day.
pub const DAY_SECONDS: u32 = 24 * 3600;
/// Latest representable time of day (GTFS allows after-midnight service).
pub const MAX_TIME: u32 = 30 * 3600;
