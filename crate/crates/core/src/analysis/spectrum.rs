use std::f64::consts::PI;

use rustfft::{num_complex::Complex, FftPlanner};

use super::AnalysisError;
use crate::rail_model;
use crate::trace_codec::TraceFile;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    Rect,
    Hann,
}

impl std::str::FromStr for Window {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rect" => Ok(Window::Rect),
            "hann" => Ok(Window::Hann),
            other => Err(format!("unknown window `{other}` (rect|hann)")),
        }
    }
}

/// One-sided power spectrum over `[0, f_s/2]`.
///
/// `magnitudes[k]` is the signal power falling into bin `k`, normalized so
/// that with a rectangular window the bins sum to the sum of squared input
/// samples. Divide by `bin_hz` for a density.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub bin_hz: f64,
    pub magnitudes: Vec<f64>,
    pub window: Window,
}

impl Spectrum {
    pub fn frequency(&self, bin: usize) -> f64 {
        bin as f64 * self.bin_hz
    }

    pub fn total_power(&self) -> f64 {
        self.magnitudes.iter().sum()
    }

    /// Strongest bin at or above `min_hz`, as `(frequency, power)`.
    pub fn dominant_peak(&self, min_hz: f64) -> Option<(f64, f64)> {
        self.magnitudes
            .iter()
            .enumerate()
            .filter(|(k, _)| self.frequency(*k) >= min_hz)
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(k, p)| (self.frequency(k), *p))
    }
}

/// Folds `f` into the first Nyquist zone of `f_s`.
pub fn alias_frequency(f: f64, sample_rate_hz: f64) -> f64 {
    let r = f.rem_euclid(sample_rate_hz);
    if r <= sample_rate_hz / 2.0 {
        r
    } else {
        sample_rate_hz - r
    }
}

fn window_weights(window: Window, n: usize) -> Vec<f64> {
    match window {
        Window::Rect => vec![1.0; n],
        // periodic Hann
        Window::Hann => (0..n)
            .map(|k| 0.5 - 0.5 * (2.0 * PI * k as f64 / n as f64).cos())
            .collect(),
    }
}

/// Spectrum of `samples`, truncated to the largest power-of-two length.
pub fn power_spectrum(
    samples: &[f64],
    sample_rate_hz: f64,
    window: Window,
) -> Result<Spectrum, AnalysisError> {
    if samples.len() < 2 {
        return Err(AnalysisError::SegmentTooShort(samples.len()));
    }
    let n = 1usize << samples.len().ilog2();
    let w = window_weights(window, n);
    let mean_sq_w = w.iter().map(|x| x * x).sum::<f64>() / n as f64;

    let mut buf: Vec<Complex<f64>> = samples[..n]
        .iter()
        .zip(&w)
        .map(|(x, wk)| Complex::new(x * wk, 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);

    let norm = 1.0 / (n as f64 * mean_sq_w);
    let half = n / 2;
    let magnitudes = (0..=half)
        .map(|k| {
            let p = buf[k].norm_sqr() * norm;
            if k == 0 || k == half {
                p
            } else {
                2.0 * p
            }
        })
        .collect();
    Ok(Spectrum {
        bin_hz: sample_rate_hz / n as f64,
        magnitudes,
        window,
    })
}

/// Spectrum of one channel (in volts) over frames `start .. start + len`.
pub fn psd(
    trace: &TraceFile,
    channel: u8,
    start: usize,
    len: usize,
    window: Window,
) -> Result<Spectrum, AnalysisError> {
    let adc = trace.header.adc();
    let volts: Vec<f64> = trace
        .frames()
        .skip(start)
        .take(len)
        .map(|f| rail_model::code_to_voltage(f[usize::from(channel)], &adc))
        .collect();
    power_spectrum(&volts, f64::from(adc.sample_rate_hz), window)
}
