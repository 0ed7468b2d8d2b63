//! Builds the visual-servoing scenario and prints its structure.
//!
//! `cargo run --example synth_visual_servoing -- s.json` also writes it out.

use railscope::dut_synth::{frame_event_times, Scenario};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let s = Scenario::visual_servoing();
    s.validate()?;
    println!(
        "duration {} s, seed {:#x}, ripple {} kHz",
        s.duration_s,
        s.seed,
        s.ripple_hz / 1e3
    );
    for (i, f) in s.frames.iter().enumerate() {
        let times = frame_event_times(f)?;
        println!(
            "schedule {i}: {:?} on {} ({} B, {:.3} us on wire, {} frames every {} ms, burst {} mA)",
            f.direction,
            s.rail(f.rail_id)?.config.name,
            f.frame_bytes,
            f.frame_duration()? * 1e6,
            times.len(),
            f.period_s * 1e3,
            f.burst_current_a * 1e3
        );
    }
    println!("trigger at {:.9} s", s.trigger_time()?);

    for t in [0.5, 1.001, 1.5] {
        print!("t = {t} s:");
        for r in &s.rails {
            print!(
                " {}={:.4}A",
                r.config.name,
                s.eval_rail(r.config.rail_id, t)?.amps
            );
        }
        println!();
    }

    if let Some(path) = std::env::args().nth(1) {
        std::fs::write(&path, s.to_json())?;
        println!("wrote {path}");
    }
    Ok(())
}
