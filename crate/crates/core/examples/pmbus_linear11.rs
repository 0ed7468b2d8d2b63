//! LINEAR11 encoding and the resolution of the PMBus telemetry path.

use railscope::dut_synth::Scenario;
use railscope::pmbus::{self, linear11_decode, linear11_encode, Exponents, Linear11};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for (value, e) in [(1.0, -8), (0.1, -5), (0.36, -5), (-0.5, -5), (1e6, 0)] {
        let x = linear11_encode(value, e);
        println!(
            "{value:>9} @ 2^{e:<3} -> {:#06x} (mantissa {:>5}, exponent {:>3}) -> {}",
            x.raw(),
            x.mantissa(),
            x.exponent(),
            linear11_decode(x)
        );
    }
    println!("raw 0xD200 = {}", Linear11(0xD200).value());

    let ex = Exponents::default();
    println!(
        "steps: voltage {:.3} mV, current {:.2} mA",
        pmbus::step(ex.voltage) * 1e3,
        pmbus::step(ex.current) * 1e3
    );

    let s = Scenario::visual_servoing();
    for (rail, t_ns) in [
        (0u8, 500_000_000u64),
        (3, 1_200_000_000),
        (8, 1_000_000_000),
    ] {
        let r = pmbus::pmbus_read(&s, rail, t_ns, ex)?;
        let truth = s.eval_rail(rail, t_ns as f64 * 1e-9)?;
        println!(
            "rail {rail} at {t_ns} ns: PMBus {:.4} V {:.5} A, true {:.4} V {:.5} A",
            r.volts(),
            r.amps(),
            truth.volts,
            truth.amps
        );
    }
    Ok(())
}
