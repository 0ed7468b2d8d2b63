//! Per-rail energy of the PL phase (before the trigger) and the PS phase.

use railscope::analysis::energy;
use railscope::capture::{run_capture, CaptureConfig};
use railscope::dut_synth::Scenario;
use railscope::timebase;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let s = Scenario::visual_servoing();
    let mut cfg = CaptureConfig::for_scenario(&s);
    cfg.pretrigger_s = 0.5;
    let cap = run_capture(&s, &cfg)?;
    let t = &cap.trace;
    let fs = s.adc.sample_rate_hz;
    let (first, last) = t.span_ns().unwrap();
    let trig = t.triggers[0].timestamp_ns;
    let before = timebase::timestamp_of_frame(cap.trigger_frame - 1, fs);

    println!(
        "PL window {:.3}..{:.3} s, PS window {:.3}..{:.3} s",
        first as f64 * 1e-9,
        before as f64 * 1e-9,
        trig as f64 * 1e-9,
        last as f64 * 1e-9
    );
    println!("rail        PL energy [mJ]  PL power [mW]  PS energy [mJ]  PS power [mW]");
    for r in s.rails.iter().take(5) {
        let name = &r.config.name;
        let pl = energy(t, name, first, before)?;
        let ps = energy(t, name, trig, last)?;
        println!(
            "{name:<10} {:>14.3} {:>14.2} {:>15.3} {:>14.2}",
            pl.joules * 1e3,
            pl.mean_power_w(fs) * 1e3,
            ps.joules * 1e3,
            ps.mean_power_w(fs) * 1e3
        );
    }

    // adjacent windows add up exactly
    let a = energy(t, "VCCINT", first, trig)?;
    let b = energy(t, "VCCINT", trig, last)?;
    let whole = energy(t, "VCCINT", first, last)?;
    println!(
        "additivity: {} + {} == {}: {}",
        a.code_sum,
        b.code_sum,
        whole.code_sum,
        a.code_sum + b.code_sum == whole.code_sum
    );
    Ok(())
}
