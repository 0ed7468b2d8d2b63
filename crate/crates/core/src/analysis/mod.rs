//! Trace analytics: energy, spectra, frame detection and the comparison
//! between the high-rate path and PMBus telemetry.

mod compare;
mod detect;
mod energy;
pub mod plot;
mod spectrum;

use thiserror::Error;

pub use compare::{compare_pmbus, zoh_resample, PmbusComparison};
pub use detect::{
    detect_frames, detect_in_series, match_events, DetectParams, DetectedEvent, MatchStats,
    SeriesEvent,
};
pub use energy::{energy, power_series, trapezoid, EnergyReport, PowerSeries};
pub use spectrum::{alias_frequency, power_spectrum, psd, Spectrum, Window};

use crate::rail_model::{self, RailConfig};
use crate::trace_codec::TraceFile;

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("unknown rail `{0}`")]
    UnknownRail(String),
    #[error("window [{t0_ns}, {t1_ns}] ns outside trace span")]
    WindowOutsideTrace { t0_ns: u64, t1_ns: u64 },
    #[error("segment too short: {0} samples")]
    SegmentTooShort(usize),
    #[error("baseline window of {window} samples longer than trace of {len}")]
    WindowLongerThanTrace { window: usize, len: usize },
    #[error("no PMBus records for rail `{0}`")]
    NoPmbusRecords(String),
    #[error("trace holds no frames")]
    EmptyTrace,
}

pub(crate) fn lookup_rail<'a>(
    trace: &'a TraceFile,
    name: &str,
) -> Result<&'a RailConfig, AnalysisError> {
    trace
        .rail(name)
        .ok_or_else(|| AnalysisError::UnknownRail(name.to_string()))
}

/// Rail current in amperes for every captured frame.
pub fn current_series(trace: &TraceFile, rail: &RailConfig) -> Vec<f64> {
    let adc = trace.header.adc();
    trace
        .frames()
        .map(|f| {
            rail_model::sense_to_current(
                rail_model::code_to_voltage(f[usize::from(rail.i_channel)], &adc),
                rail,
            )
        })
        .collect()
}

/// Rail voltage in volts for every captured frame.
pub fn voltage_series(trace: &TraceFile, rail: &RailConfig) -> Vec<f64> {
    let adc = trace.header.adc();
    trace
        .frames()
        .map(|f| rail_model::code_to_voltage(f[usize::from(rail.v_channel)], &adc))
        .collect()
}
