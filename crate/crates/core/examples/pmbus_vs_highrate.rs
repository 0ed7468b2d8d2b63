//! The coarse PMBus path against the 225 kSPS path on the same capture.

use railscope::analysis::{compare_pmbus, DetectParams};
use railscope::capture::{pmbus_rate_per_rail, run_capture, CaptureConfig};
use railscope::dut_synth::Scenario;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let s = Scenario::visual_servoing();
    let mut cfg = CaptureConfig::for_scenario(&s);
    cfg.pretrigger_s = 1.1;
    cfg.pmbus_rails = vec![0, 1, 2, 3, 8];
    let cap = run_capture(&s, &cfg)?;
    println!(
        "{} SPS aggregate, {} SPS per rail",
        cfg.pmbus_rate_sps,
        pmbus_rate_per_rail(&cfg)
    );

    println!("rail       records  high-rate mean  PMBus mean  mean |err|  frame recall");
    for id in &cfg.pmbus_rails {
        let name = &s.rail(*id)?.config.name;
        let c = compare_pmbus(&cap.trace, name, &DetectParams::default())?;
        println!(
            "{name:<10} {:>7}  {:>12.4} A  {:>8.4} A  {:>8.4} A  {:>12.3}",
            c.records, c.highrate_mean_a, c.pmbus_mean_a, c.mean_abs_error_a, c.recall
        );
    }
    Ok(())
}
