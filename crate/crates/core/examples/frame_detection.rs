//! Finds the camera's Ethernet frames on the PHY2 VccIO current.

use railscope::analysis::{detect_frames, match_events, DetectParams};
use railscope::capture::{run_capture, CaptureConfig};
use railscope::dut_synth::{frame_event_times, Scenario};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let s = Scenario::visual_servoing();
    let mut cfg = CaptureConfig::for_scenario(&s);
    // keep the whole reception window, not just the last 160 ms
    cfg.pretrigger_s = 1.1;
    let cap = run_capture(&s, &cfg)?;

    let params = DetectParams::default();
    println!("{params:?}");
    let truth: Vec<u64> = frame_event_times(&s.frames[0])?
        .iter()
        .map(|(a, _)| (a * 1e9).ceil() as u64)
        .collect();
    let tol = (2e9 / f64::from(s.adc.sample_rate_hz)) as u64;

    for name in ["PHY2_VCCIO", "PHY2_CORE", "PHY1_CORE", "VCCINT"] {
        let events = detect_frames(&cap.trace, name, &params)?;
        print!("{name:<10} {:>5} events", events.len());
        if name == "PHY2_VCCIO" {
            let starts: Vec<u64> = events.iter().map(|e| e.t_start_ns).collect();
            let m = match_events(&starts, &truth, tol);
            print!("  recall {:.3} precision {:.3}", m.recall(), m.precision());
        }
        println!();
    }
    for e in detect_frames(&cap.trace, "PHY2_VCCIO", &params)?
        .iter()
        .take(3)
    {
        println!(
            "  {} .. {} ns, peak {:.4} A",
            e.t_start_ns, e.t_end_ns, e.peak_current_a
        );
    }
    Ok(())
}
