use super::{lookup_rail, AnalysisError};
use crate::trace_codec::TraceFile;

/// Trapezoidal integral of uniformly spaced samples.
pub fn trapezoid(values: &[f64], dt: f64) -> f64 {
    values.windows(2).map(|w| (w[0] + w[1]) * 0.5 * dt).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerSeries {
    pub rail_id: u8,
    pub timestamps_ns: Vec<u64>,
    pub power_w: Vec<f64>,
}

/// Same-frame V x I; the channels are sampled simultaneously.
pub fn power_series(trace: &TraceFile, rail: &str) -> Result<PowerSeries, AnalysisError> {
    let rail = lookup_rail(trace, rail)?;
    let volts = super::voltage_series(trace, rail);
    let amps = super::current_series(trace, rail);
    Ok(PowerSeries {
        rail_id: rail.rail_id,
        timestamps_ns: trace.frame_timestamps(),
        power_w: volts.iter().zip(&amps).map(|(v, i)| v * i).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyReport {
    pub joules: f64,
    /// Frames inside the window.
    pub frames: usize,
    /// `sum (p_k + p_{k+1})` over the window with `p = v_code * i_code`.
    /// Exact, so energies of adjacent windows add up without rounding.
    pub code_sum: u128,
}

impl EnergyReport {
    pub fn mean_power_w(&self, sample_rate_hz: u32) -> f64 {
        if self.frames < 2 {
            return 0.0;
        }
        self.joules / ((self.frames - 1) as f64 / f64::from(sample_rate_hz))
    }
}

/// Trapezoidal energy over frames stamped within `[t0_ns, t1_ns]`.
///
/// The sum runs over integer code products and is scaled to joules once at
/// the end: `E = lsb^2 / (gain * shunt) * dt / 2 * code_sum`.
pub fn energy(
    trace: &TraceFile,
    rail: &str,
    t0_ns: u64,
    t1_ns: u64,
) -> Result<EnergyReport, AnalysisError> {
    let rail = lookup_rail(trace, rail)?;
    let (first, last) = trace.span_ns().ok_or(AnalysisError::EmptyTrace)?;
    if t0_ns > t1_ns || t0_ns < first || t1_ns > last {
        return Err(AnalysisError::WindowOutsideTrace { t0_ns, t1_ns });
    }
    let (v, i) = (usize::from(rail.v_channel), usize::from(rail.i_channel));
    let products = trace
        .frame_timestamps()
        .into_iter()
        .zip(trace.frames())
        .filter(|(ts, _)| (t0_ns..=t1_ns).contains(ts))
        .map(|(_, f)| u128::from(f[v]) * u128::from(f[i]));

    let mut frames = 0usize;
    let mut code_sum = 0u128;
    let mut prev: Option<u128> = None;
    for p in products {
        if let Some(q) = prev {
            code_sum += p + q;
        }
        prev = Some(p);
        frames += 1;
    }

    let adc = trace.header.adc();
    let lsb = adc.lsb_volts();
    let scale = lsb * lsb / rail.transimpedance() * adc.sample_period_s() * 0.5;
    Ok(EnergyReport {
        joules: scale * code_sum as f64,
        frames,
        code_sum,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rail_model::{self, default_rails, CHANNELS};
    use crate::timebase::timestamp_of_frame;
    use crate::trace_codec::{SampleBlock, TraceHeader};

    #[test]
    fn trapezoid_examples() {
        // constant 1 W for exactly 1 s at 1 kHz
        let ones = vec![1.0; 1001];
        assert!((trapezoid(&ones, 1e-3) - 1.0).abs() < 1e-12);
        // linear ramp 0 -> 1 W over 1 s
        let ramp: Vec<f64> = (0..=1000).map(|k| k as f64 / 1000.0).collect();
        assert!((trapezoid(&ramp, 1e-3) - 0.5).abs() < 1e-6);
        assert_eq!(trapezoid(&[3.0], 1e-3), 0.0);
        assert_eq!(trapezoid(&[], 1e-3), 0.0);
    }

    fn trace_with(codes: impl Fn(u64) -> (u16, u16), n: u64) -> TraceFile {
        let mut t = TraceFile::new(TraceHeader {
            sample_rate_hz: 225_000,
            block_frames: 64,
            rails: default_rails(),
        });
        for b in 0..n.div_ceil(64) {
            let frames = (b * 64..((b + 1) * 64).min(n))
                .map(|k| {
                    let mut f = [0u16; CHANNELS];
                    (f[0], f[1]) = codes(k);
                    f
                })
                .collect();
            t.blocks.push(SampleBlock {
                timestamp_ns: timestamp_of_frame(b * 64, 225_000),
                frames,
            });
        }
        t
    }

    #[test]
    fn constant_power_energy_matches_product() {
        let n = 22_501; // 0.1 s of intervals
        let t = trace_with(|_| (6554, 3277), n);
        let e = energy(&t, "VCCINT", 0, timestamp_of_frame(n - 1, 225_000)).unwrap();
        let adc = t.header.adc();
        let p = rail_model::code_to_voltage(6554, &adc)
            * rail_model::sense_to_current(
                rail_model::code_to_voltage(3277, &adc),
                &t.header.rails[0],
            );
        assert!((e.joules - p * 0.1).abs() < 1e-12);
        assert_eq!(e.frames, n as usize);
        let ps = power_series(&t, "VCCINT").unwrap();
        let alt = trapezoid(&ps.power_w, 1.0 / 225_000.0);
        assert!((alt - e.joules).abs() < 1e-12);
    }

    #[test]
    fn zero_width_window_is_zero() {
        let t = trace_with(|_| (6554, 3277), 100);
        let ts = timestamp_of_frame(10, 225_000);
        let e = energy(&t, "VCCINT", ts, ts).unwrap();
        assert_eq!((e.joules, e.frames), (0.0, 1));
    }

    #[test]
    fn window_must_lie_inside_trace() {
        let t = trace_with(|_| (1, 1), 100);
        let last = timestamp_of_frame(99, 225_000);
        assert!(matches!(
            energy(&t, "VCCINT", 0, last + 1),
            Err(AnalysisError::WindowOutsideTrace { .. })
        ));
        assert!(matches!(
            energy(&t, "VCCINT", 10, 5),
            Err(AnalysisError::WindowOutsideTrace { .. })
        ));
        assert_eq!(
            energy(&t, "X", 0, 0),
            Err(AnalysisError::UnknownRail("X".into()))
        );
    }

    #[test]
    fn additivity_is_exact_on_grid() {
        let t = trace_with(
            |k| (6000 + (k % 97) as u16, 3000 + (k * 7 % 1013) as u16),
            5000,
        );
        let ts = |k| timestamp_of_frame(k, 225_000);
        for split in [1u64, 64, 1999, 4998] {
            let whole = energy(&t, "VCCINT", ts(0), ts(4999)).unwrap();
            let a = energy(&t, "VCCINT", ts(0), ts(split)).unwrap();
            let b = energy(&t, "VCCINT", ts(split), ts(4999)).unwrap();
            assert_eq!(a.code_sum + b.code_sum, whole.code_sum);
            assert!((a.joules + b.joules - whole.joules).abs() <= 1e-15 * whole.joules);
        }
    }
}
