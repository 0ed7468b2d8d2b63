//! Frame-event detection on a rail's current.
//!
//! The baseline is a rolling median with a rolling MAD-based deviation,
//! refreshed every eighth of the baseline window. A sample enters an event
//! above `baseline + k_sigma * sigma` and leaves it at or below
//! `baseline + hysteresis_fraction * k_sigma * sigma`. Events shorter than
//! `min_duration_s` are discarded.

use super::{lookup_rail, AnalysisError};
use crate::rail_model;
use crate::timebase;
use crate::trace_codec::TraceFile;

/// MAD to standard deviation for Gaussian noise.
const MAD_TO_SIGMA: f64 = 1.4826;
const BASELINE_HOPS_PER_WINDOW: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectParams {
    pub baseline_window_s: f64,
    pub k_sigma: f64,
    pub min_duration_s: f64,
    pub hysteresis_fraction: f64,
}

impl DetectParams {
    /// 10 ms baseline, 6 sigma, two sample periods minimum, 50 % hysteresis.
    pub fn for_rate(sample_rate_hz: u32) -> Self {
        DetectParams {
            baseline_window_s: 0.010,
            k_sigma: 6.0,
            min_duration_s: 2.0 / f64::from(sample_rate_hz),
            hysteresis_fraction: 0.5,
        }
    }
}

impl Default for DetectParams {
    fn default() -> Self {
        DetectParams::for_rate(rail_model::DEFAULT_SAMPLE_RATE_HZ)
    }
}

/// Event in sample indices; `end` is exclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeriesEvent {
    pub start: usize,
    pub end: usize,
    pub peak: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectedEvent {
    pub t_start_ns: u64,
    /// Stamp of the first sample after the event.
    pub t_end_ns: u64,
    pub peak_current_a: f64,
    pub rail_id: u8,
}

fn median_in_place(buf: &mut [f64]) -> f64 {
    let n = buf.len();
    let mid = n / 2;
    let (lower, upper, _) = buf.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    if n % 2 == 1 {
        upper
    } else {
        let below = lower
            .iter()
            .copied()
            .max_by(f64::total_cmp)
            .expect("n >= 2");
        (below + upper) / 2.0
    }
}

/// Baseline and sigma for every sample.
fn rolling_baseline(values: &[f64], window: usize) -> (Vec<f64>, Vec<f64>) {
    let n = values.len();
    let hop = (window / BASELINE_HOPS_PER_WINDOW).max(1);
    let mut base = vec![0.0; n];
    let mut sigma = vec![0.0; n];
    let mut scratch = Vec::with_capacity(window);
    let mut seg = 0;
    while seg < n {
        let seg_end = (seg + hop).min(n);
        let mid = (seg + seg_end) / 2;
        let lo = mid.saturating_sub(window / 2).min(n - window);
        scratch.clear();
        scratch.extend_from_slice(&values[lo..lo + window]);
        let m = median_in_place(&mut scratch);
        for v in scratch.iter_mut() {
            *v = (*v - m).abs();
        }
        let s = MAD_TO_SIGMA * median_in_place(&mut scratch);
        base[seg..seg_end].fill(m);
        sigma[seg..seg_end].fill(s);
        seg = seg_end;
    }
    (base, sigma)
}

/// Runs the detector over a uniformly sampled series.
pub fn detect_in_series(
    values: &[f64],
    sample_rate_hz: u32,
    params: &DetectParams,
) -> Result<Vec<SeriesEvent>, AnalysisError> {
    let fs = f64::from(sample_rate_hz);
    let window = ((params.baseline_window_s * fs).round() as usize).max(1);
    if window > values.len() {
        return Err(AnalysisError::WindowLongerThanTrace {
            window,
            len: values.len(),
        });
    }
    let min_samples = ((params.min_duration_s * fs - 1e-6).ceil().max(1.0)) as usize;
    let (base, sigma) = rolling_baseline(values, window);

    let mut events = Vec::new();
    let mut open: Option<(usize, usize)> = None;
    for (k, &x) in values.iter().enumerate() {
        let enter = params.k_sigma * sigma[k];
        let excess = x - base[k];
        match open {
            None => {
                if excess > enter {
                    open = Some((k, k));
                }
            }
            Some((start, peak)) => {
                if excess <= params.hysteresis_fraction * enter {
                    if k - start >= min_samples {
                        events.push(SeriesEvent {
                            start,
                            end: k,
                            peak,
                        });
                    }
                    open = None;
                } else if x > values[peak] {
                    open = Some((start, k));
                }
            }
        }
    }
    if let Some((start, peak)) = open {
        if values.len() - start >= min_samples {
            events.push(SeriesEvent {
                start,
                end: values.len(),
                peak,
            });
        }
    }
    Ok(events)
}

/// Frame events on the rail's current channel.
///
/// Works on the raw codes: every threshold is relative to the rolling
/// baseline and deviation, so the result equals detection in amperes.
pub fn detect_frames(
    trace: &TraceFile,
    rail: &str,
    params: &DetectParams,
) -> Result<Vec<DetectedEvent>, AnalysisError> {
    let rail = lookup_rail(trace, rail)?;
    let fs = trace.header.sample_rate_hz;
    let codes: Vec<f64> = trace
        .channel_codes(rail.i_channel)
        .into_iter()
        .map(f64::from)
        .collect();
    let events = detect_in_series(&codes, fs, params)?;
    let first = trace.first_frame_index().unwrap_or(0);
    let adc = trace.header.adc();
    Ok(events
        .into_iter()
        .map(|e| DetectedEvent {
            t_start_ns: timebase::timestamp_of_frame(first + e.start as u64, fs),
            t_end_ns: timebase::timestamp_of_frame(first + e.end as u64, fs),
            peak_current_a: rail_model::sense_to_current(
                rail_model::code_to_voltage(codes[e.peak] as u16, &adc),
                rail,
            ),
            rail_id: rail.rail_id,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatchStats {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

impl MatchStats {
    pub fn recall(&self) -> f64 {
        let total = self.true_positives + self.false_negatives;
        if total == 0 {
            0.0
        } else {
            self.true_positives as f64 / total as f64
        }
    }

    pub fn precision(&self) -> f64 {
        let total = self.true_positives + self.false_positives;
        if total == 0 {
            0.0
        } else {
            self.true_positives as f64 / total as f64
        }
    }
}

/// One-to-one greedy matching of sorted start times within `tolerance_ns`.
pub fn match_events(detected_ns: &[u64], reference_ns: &[u64], tolerance_ns: u64) -> MatchStats {
    let (mut i, mut j, mut tp) = (0, 0, 0);
    while i < detected_ns.len() && j < reference_ns.len() {
        let (d, r) = (detected_ns[i], reference_ns[j]);
        if d.abs_diff(r) <= tolerance_ns {
            tp += 1;
            i += 1;
            j += 1;
        } else if d < r {
            i += 1;
        } else {
            j += 1;
        }
    }
    MatchStats {
        true_positives: tp,
        false_positives: detected_ns.len() - tp,
        false_negatives: reference_ns.len() - tp,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn params() -> DetectParams {
        DetectParams {
            baseline_window_s: 0.01,
            k_sigma: 6.0,
            min_duration_s: 2.0 / 225_000.0,
            hysteresis_fraction: 0.5,
        }
    }

    fn noisy(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = Normal::new(1000.0f64, 1.0).unwrap();
        (0..n).map(|_| d.sample(&mut rng).round()).collect()
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median_in_place(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median_in_place(&mut [4.0, 1.0, 3.0, 2.0]), 2.5);
        assert_eq!(median_in_place(&mut [7.0]), 7.0);
    }

    #[test]
    fn flat_noise_gives_no_events() {
        let x = noisy(100_000, 1);
        assert!(detect_in_series(&x, 225_000, &params()).unwrap().is_empty());
    }

    #[test]
    fn pulses_are_found_at_their_start() {
        let mut x = noisy(50_000, 2);
        let starts = [3000usize, 10_000, 10_300, 40_000];
        for s in starts {
            for v in &mut x[s..s + 3] {
                *v += 600.0;
            }
        }
        let ev = detect_in_series(&x, 225_000, &params()).unwrap();
        let got: Vec<usize> = ev.iter().map(|e| e.start).collect();
        assert_eq!(got, starts);
        assert!(ev.iter().all(|e| e.end - e.start == 3));
    }

    #[test]
    fn single_sample_spike_is_too_short() {
        let mut x = noisy(20_000, 3);
        x[7000] += 600.0;
        assert!(detect_in_series(&x, 225_000, &params()).unwrap().is_empty());
    }

    #[test]
    fn hysteresis_holds_event_through_a_dip() {
        // unit Gaussian noise: enter near +6, exit near +3, the dip sits at +4.5
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = Normal::new(1000.0f64, 1.0).unwrap();
        let mut x: Vec<f64> = (0..10_000).map(|_| d.sample(&mut rng)).collect();
        x[5000..5006].copy_from_slice(&[1020.0, 1020.0, 1004.5, 1020.0, 1021.0, 1020.0]);
        let ev = detect_in_series(&x, 225_000, &params()).unwrap();
        assert_eq!(
            ev,
            vec![SeriesEvent {
                start: 5000,
                end: 5006,
                peak: 5004
            }]
        );

        let no_hysteresis = DetectParams {
            hysteresis_fraction: 1.0,
            ..params()
        };
        let ev = detect_in_series(&x, 225_000, &no_hysteresis).unwrap();
        assert_eq!(ev.len(), 2);
    }

    #[test]
    fn window_longer_than_series() {
        assert_eq!(
            detect_in_series(&[0.0; 100], 225_000, &params()),
            Err(AnalysisError::WindowLongerThanTrace {
                window: 2250,
                len: 100
            })
        );
    }

    #[test]
    fn event_at_series_end_is_closed() {
        let mut x = vec![0.0; 3000];
        x[2995..].fill(5.0);
        let ev = detect_in_series(&x, 225_000, &params()).unwrap();
        assert_eq!(
            ev,
            vec![SeriesEvent {
                start: 2995,
                end: 3000,
                peak: 2995
            }]
        );
    }

    #[test]
    fn matching() {
        let m = match_events(&[100, 205, 900], &[100, 200, 300, 905], 5);
        assert_eq!(
            m,
            MatchStats {
                true_positives: 3,
                false_positives: 0,
                false_negatives: 1
            }
        );
        assert_eq!(m.recall(), 0.75);
        assert_eq!(m.precision(), 1.0);
        let none = match_events(&[], &[], 5);
        assert_eq!((none.recall(), none.precision()), (0.0, 0.0));
    }

    #[test]
    fn constant_offset_does_not_change_events() {
        let mut x = noisy(30_000, 4);
        for s in [1000usize, 15_000, 29_000] {
            for v in &mut x[s..s + 3] {
                *v += 400.0;
            }
        }
        let shifted: Vec<f64> = x.iter().map(|v| v + 1234.0).collect();
        assert_eq!(
            detect_in_series(&x, 225_000, &params()).unwrap(),
            detect_in_series(&shifted, 225_000, &params()).unwrap()
        );
    }
}
