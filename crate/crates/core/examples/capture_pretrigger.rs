//! Runs the acquisition model with the default pre/post-trigger window.

use railscope::capture::{run_capture, CaptureConfig};
use railscope::dut_synth::Scenario;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let s = Scenario::visual_servoing();
    let cfg = CaptureConfig::for_scenario(&s);
    println!(
        "ring: {} blocks of {} frames ({:.1} ms), pretrigger {} s, posttrigger {} s",
        cfg.ring_capacity_blocks(),
        cfg.block_frames,
        cfg.ring_capacity_blocks() as f64 * f64::from(cfg.block_frames)
            / f64::from(cfg.adc.sample_rate_hz)
            * 1e3,
        cfg.pretrigger_s,
        cfg.posttrigger_s
    );

    let start = std::time::Instant::now();
    let cap = run_capture(&s, &cfg)?;
    let t = &cap.trace;
    let (first, last) = t.span_ns().expect("non-empty capture");
    let trig = t.triggers[0].timestamp_ns;
    println!("captured in {:.2} s", start.elapsed().as_secs_f64());
    println!(
        "frames {} in {} blocks, span {:.6} .. {:.6} s",
        t.frame_count(),
        t.blocks.len(),
        first as f64 * 1e-9,
        last as f64 * 1e-9
    );
    println!(
        "trigger frame {} at {:.6} s, history {:.1} ms",
        cap.trigger_frame,
        trig as f64 * 1e-9,
        (trig - first) as f64 * 1e-6
    );
    println!("PMBus records: {}", t.pmbus.len());

    let mut early = s.clone();
    early.trigger = Some(railscope::dut_synth::TriggerSpec::AtTime { t_s: 0.05 });
    let cap = run_capture(&early, &cfg)?;
    println!(
        "trigger at 50 ms: pre-trigger truncated = {}, first frame at {} ns",
        cap.pre_truncated,
        cap.trace.span_ns().unwrap().0
    );
    Ok(())
}
