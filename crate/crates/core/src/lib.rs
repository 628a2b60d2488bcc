//! Monitoring, assessment and what-if simulation of resistance-training lifts.
//!
//! The crate is organised as a pipeline:
//!
//! * [`vision`] detects interest points on the load, tracks them with a
//!   pyramidal affine Lucas-Kanade tracker and fuses the tracks into one robust
//!   displacement signal.
//! * [`kinematics`] converts pixels to metres, segments concentric efforts and
//!   differentiates the elevation signal (finite differences or a smoothing
//!   spline with a zero initial-velocity constraint).
//! * [`dynamics`] maps motion to the force exerted against the load and back.
//! * [`capability`] holds the gridded capability profile, reconstructs it from
//!   set-ending repetitions and interpolates the unmeasured part of the plane.
//! * [`fatigue`] implements the variable-fatigue model together with the
//!   maximal-exertion and minimal-fatigue exertion policies.
//! * [`simulation`] runs whole sets, searches the one-repetition maximum and
//!   compares predictions with measurements.

pub mod capability;
pub mod dynamics;
pub mod error;
pub mod fatigue;
pub mod formats;
pub mod kinematics;
pub mod linalg;
pub mod pipeline;
pub mod simulation;
pub mod synth;
pub mod units;
pub mod vision;

pub use error::{Error, Result};
