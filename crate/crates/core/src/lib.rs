//! Multi-rail power acquisition and analysis.
//!
//! The pipeline is: a [`dut_synth::Scenario`] describes rail currents over
//! time, [`capture`] samples it through the ADC model into a pre/post
//! trigger window, [`trace_codec`] stores that as a `.ptrc` trace, and
//! [`analysis`] works on decoded traces. [`pmbus`] models the slow on-board
//! telemetry path used as a baseline.

pub mod analysis;
pub mod capture;
pub mod cli;
pub mod dut_synth;
pub mod pmbus;
pub mod rail_model;
pub mod timebase;
pub mod trace_codec;
