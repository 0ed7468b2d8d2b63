//! 500 kHz regulator ripple sampled at 225 kSPS shows up at 50 kHz.

use railscope::analysis::{alias_frequency, psd, Window};
use railscope::capture::{run_capture, CaptureConfig};
use railscope::dut_synth::Scenario;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let s = Scenario::visual_servoing();
    let cap = run_capture(&s, &CaptureConfig::for_scenario(&s))?;
    let fs = f64::from(s.adc.sample_rate_hz);
    println!(
        "predicted alias of {} kHz at {} kSPS: {} kHz",
        s.ripple_hz / 1e3,
        fs / 1e3,
        alias_frequency(s.ripple_hz, fs) / 1e3
    );

    // VCCINT and VCCPINT carry a load step at the trigger, which dominates their low bins
    for name in ["VCCINT", "VCCAUX", "VCCPINT", "PHY2_VCCIO"] {
        let rail = cap.trace.rail(name).unwrap();
        let spec = psd(
            &cap.trace,
            rail.i_channel,
            0,
            cap.trace.frame_count(),
            Window::Hann,
        )?;
        let (f, p) = spec.dominant_peak(3.0 * spec.bin_hz).unwrap();
        println!(
            "{name:<10} dominant peak {:>9.1} Hz  ({:.3e} V^2, bin {:.3} Hz)",
            f, p, spec.bin_hz
        );
    }
    Ok(())
}
