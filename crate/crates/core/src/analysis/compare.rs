use super::{
    current_series, detect_frames, detect_in_series, lookup_rail, match_events, AnalysisError,
    DetectParams,
};
use crate::timebase;
use crate::trace_codec::TraceFile;

/// High-rate path versus PMBus telemetry for one rail.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PmbusComparison {
    pub rail_id: u8,
    pub records: usize,
    /// Frames covered by the held PMBus series.
    pub frames: usize,
    pub highrate_mean_a: f64,
    pub pmbus_mean_a: f64,
    pub mean_abs_error_a: f64,
    /// Fraction of high-rate frame events that detection on the PMBus
    /// series also finds.
    pub recall: f64,
    pub detectable: bool,
}

/// Holds each `(timestamp, value)` sample until the next one. Times before
/// the first sample get `None`. Both inputs must be sorted.
pub fn zoh_resample(samples: &[(u64, f64)], timestamps_ns: &[u64]) -> Vec<Option<f64>> {
    let mut out = Vec::with_capacity(timestamps_ns.len());
    let mut next = 0;
    let mut held = None;
    for &ts in timestamps_ns {
        while next < samples.len() && samples[next].0 <= ts {
            held = Some(samples[next].1);
            next += 1;
        }
        out.push(held);
    }
    out
}

/// Resamples the rail's PMBus current onto the frame grid and compares it
/// with the high-rate current, both in level and in frame visibility.
pub fn compare_pmbus(
    trace: &TraceFile,
    rail: &str,
    params: &DetectParams,
) -> Result<PmbusComparison, AnalysisError> {
    let cfg = lookup_rail(trace, rail)?;
    let samples: Vec<(u64, f64)> = trace
        .pmbus_for(cfg.rail_id)
        .map(|r| (r.timestamp_ns, r.amps()))
        .collect();
    if samples.is_empty() {
        return Err(AnalysisError::NoPmbusRecords(rail.to_string()));
    }
    let timestamps = trace.frame_timestamps();
    let highrate = current_series(trace, cfg);
    let held = zoh_resample(&samples, &timestamps);
    let skip = held.iter().take_while(|v| v.is_none()).count();
    if skip == held.len() {
        return Err(AnalysisError::NoPmbusRecords(rail.to_string()));
    }
    let pmbus: Vec<f64> = held[skip..]
        .iter()
        .map(|v| v.expect("held after first record"))
        .collect();
    let highrate = &highrate[skip..];
    let n = pmbus.len() as f64;

    let highrate_mean_a = highrate.iter().sum::<f64>() / n;
    let pmbus_mean_a = pmbus.iter().sum::<f64>() / n;
    let mean_abs_error_a = pmbus
        .iter()
        .zip(highrate)
        .map(|(p, h)| (p - h).abs())
        .sum::<f64>()
        / n;

    let fs = trace.header.sample_rate_hz;
    let cutoff = timestamps[skip];
    let reference: Vec<u64> = detect_frames(trace, rail, params)?
        .into_iter()
        .map(|e| e.t_start_ns)
        .filter(|&t| t >= cutoff)
        .collect();
    let found: Vec<u64> = match detect_in_series(&pmbus, fs, params) {
        Ok(events) => events.iter().map(|e| timestamps[skip + e.start]).collect(),
        Err(AnalysisError::WindowLongerThanTrace { .. }) => Vec::new(),
        Err(e) => return Err(e),
    };
    let tolerance = 2 * timebase::timestamp_of_frame(1, fs) + 1;
    let recall = if reference.is_empty() {
        0.0
    } else {
        match_events(&found, &reference, tolerance).recall()
    };

    Ok(PmbusComparison {
        rail_id: cfg.rail_id,
        records: samples.len(),
        frames: pmbus.len(),
        highrate_mean_a,
        pmbus_mean_a,
        mean_abs_error_a,
        recall,
        detectable: recall >= 0.5,
    })
}
