//! Calibration and air-data estimation for a 5-channel differential-pressure
//! multihole probe.
//!
//! The pipeline runs raw wind-tunnel runs through [`preprocess`], fits three
//! polynomial models in [`calibrate`], and applies the resulting
//! [`CalibrationBundle`](calibrate::CalibrationBundle) to live frames in
//! [`estimate`]. [`design`] compares probe hardware variants, [`flight`]
//! checks estimates against autopilot references, and [`synth`] is a forward
//! model of the probe used to generate test data.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod calibrate;
pub mod design;
pub mod error;
pub mod estimate;
pub mod filter;
pub mod flight;
pub mod lstsq;
pub mod model;
pub mod poly;
pub mod preprocess;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
pub use model::{
    validate_frame, BodyVelocity, CalibrationRun, Envelope, FlowState, PressureFrame,
    ProbePortLayout,
};
