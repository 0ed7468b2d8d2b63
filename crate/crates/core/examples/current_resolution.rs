//! ADC and sense-amplifier resolution for the default rail setup.

use railscope::rail_model::{self, default_rails, AdcConfig};

fn main() {
    let adc = AdcConfig::default();
    println!(
        "ADC: {} bit, {} V full scale, {} SPS",
        adc.bits(),
        adc.full_scale_volts(),
        adc.sample_rate_hz
    );
    println!("voltage LSB: {:.3} uV", adc.lsb_volts() * 1e6);
    for rail in default_rails() {
        println!(
            "{:<10} V ch{:>2}  I ch{:>2}  gain {:>4}  shunt {:.3} ohm  current LSB {:.2} uA",
            rail.name,
            rail.v_channel,
            rail.i_channel,
            rail.amp_gain,
            rail.shunt_ohms,
            rail_model::current_lsb(&rail, &adc) * 1e6
        );
    }

    let rail = &default_rails()[0];
    for amps in [0.0, 0.001, 0.1, 1.0, 2.5] {
        let code = rail_model::quantize_voltage(rail_model::current_to_sense(amps, rail), &adc);
        let back = rail_model::sense_to_current(rail_model::code_to_voltage(code, &adc), rail);
        println!("{amps:>6} A -> code {code:>5} -> {back:.6} A");
    }
}
