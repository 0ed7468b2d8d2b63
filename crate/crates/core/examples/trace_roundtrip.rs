//! Writes a capture as `.ptrc`, reads it back and exports a CSV excerpt.

use railscope::capture::{run_capture, CaptureConfig};
use railscope::dut_synth::Scenario;
use railscope::trace_codec;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let s = Scenario::visual_servoing();
    let cap = run_capture(&s, &CaptureConfig::for_scenario(&s))?;

    let path = std::env::temp_dir().join("railscope_example.ptrc");
    let file = std::fs::File::create(&path)?;
    trace_codec::encode_to(&cap.trace, std::io::BufWriter::new(file))?;
    let bytes = std::fs::read(&path)?;
    println!(
        "{}: {} bytes (header {})",
        path.display(),
        bytes.len(),
        cap.trace.header.encoded_len()
    );

    let decoded = trace_codec::decode(&bytes)?;
    println!("round trip exact: {}", decoded.trace == cap.trace);

    let cut = trace_codec::decode(&bytes[..bytes.len() - 100])?;
    println!(
        "truncated file: {} warning(s), {} of {} blocks kept",
        cut.warnings,
        cut.trace.blocks.len(),
        cap.trace.blocks.len()
    );

    let csv = trace_codec::export_csv(&decoded.trace, &["VCCINT", "PHY2_VCCIO"], true)?;
    for line in csv.lines().take(4) {
        println!("{line}");
    }
    std::fs::remove_file(&path)?;
    Ok(())
}
