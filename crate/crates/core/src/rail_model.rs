//! Sense-circuit math for the monitored supply rails.
//!
//! Every rail is digitized on two ADC channels: the rail voltage directly
//! and the amplified shunt drop. The converters are unipolar, 16 bit, with a
//! 10 V input range, so one code is `10 / 65536` V.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of simultaneously sampled channels (three six-channel converters).
pub const CHANNELS: usize = 18;
/// Converter resolution in bits.
pub const ADC_BITS: u32 = 16;
/// Converter input range in volts.
pub const FULL_SCALE_VOLTS: f64 = 10.0;
/// Highest per-converter sampling rate.
pub const MAX_SAMPLE_RATE_HZ: u32 = 630_000;
/// Effective rate once all converters share the MCU bus.
pub const DEFAULT_SAMPLE_RATE_HZ: u32 = 225_000;

const CODE_SPAN: f64 = (1u32 << ADC_BITS) as f64;

#[derive(Debug, Error, PartialEq)]
pub enum RailError {
    #[error("sample rate {0} Hz outside 1..={MAX_SAMPLE_RATE_HZ}")]
    SampleRate(u32),
    #[error("rail `{name}`: {reason}")]
    InvalidRail { name: String, reason: String },
    #[error("channel {channel} claimed by both `{first}` and `{second}`")]
    ChannelConflict {
        channel: u8,
        first: String,
        second: String,
    },
    #[error("rail `{name}` has id {id} but sits at position {position}")]
    RailIdOrder {
        name: String,
        id: u8,
        position: usize,
    },
    #[error("more than {CHANNELS}/2 rails configured ({0})")]
    TooManyRails(usize),
}

/// Converter configuration. Only the sampling rate is adjustable; range,
/// resolution and channel count are properties of the hardware.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdcConfig {
    pub sample_rate_hz: u32,
}

impl Default for AdcConfig {
    fn default() -> Self {
        AdcConfig {
            sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ,
        }
    }
}

impl AdcConfig {
    pub fn new(sample_rate_hz: u32) -> Result<Self, RailError> {
        let adc = AdcConfig { sample_rate_hz };
        adc.validate()?;
        Ok(adc)
    }

    pub fn validate(&self) -> Result<(), RailError> {
        if self.sample_rate_hz == 0 || self.sample_rate_hz > MAX_SAMPLE_RATE_HZ {
            return Err(RailError::SampleRate(self.sample_rate_hz));
        }
        Ok(())
    }

    pub fn full_scale_volts(&self) -> f64 {
        FULL_SCALE_VOLTS
    }

    pub fn bits(&self) -> u32 {
        ADC_BITS
    }

    pub fn channels(&self) -> usize {
        CHANNELS
    }

    /// Voltage step of one code.
    pub fn lsb_volts(&self) -> f64 {
        FULL_SCALE_VOLTS / CODE_SPAN
    }

    pub fn sample_period_s(&self) -> f64 {
        1.0 / f64::from(self.sample_rate_hz)
    }
}

/// Board section a rail belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum RailGroup {
    Dut,
    Phy1,
    Phy2,
    Hdmi,
}

impl RailGroup {
    pub fn to_u8(self) -> u8 {
        match self {
            RailGroup::Dut => 0,
            RailGroup::Phy1 => 1,
            RailGroup::Phy2 => 2,
            RailGroup::Hdmi => 3,
        }
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        Some(match v {
            0 => RailGroup::Dut,
            1 => RailGroup::Phy1,
            2 => RailGroup::Phy2,
            3 => RailGroup::Hdmi,
            _ => return None,
        })
    }
}

/// One monitored supply rail and the two channels that digitize it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RailConfig {
    pub rail_id: u8,
    pub name: String,
    pub shunt_ohms: f64,
    pub amp_gain: f64,
    pub v_channel: u8,
    pub i_channel: u8,
    pub group: RailGroup,
}

impl RailConfig {
    /// Rail with the default sense parameters (gain 50, 0.1 Ω shunt).
    pub fn new(rail_id: u8, name: &str, group: RailGroup, v_channel: u8, i_channel: u8) -> Self {
        RailConfig {
            rail_id,
            name: name.to_string(),
            shunt_ohms: 0.1,
            amp_gain: 50.0,
            v_channel,
            i_channel,
            group,
        }
    }

    /// Ohms of transimpedance from rail current to sense voltage.
    pub fn transimpedance(&self) -> f64 {
        self.amp_gain * self.shunt_ohms
    }

    pub fn validate(&self) -> Result<(), RailError> {
        let bad = |reason: &str| {
            Err(RailError::InvalidRail {
                name: self.name.clone(),
                reason: reason.to_string(),
            })
        };
        if self.name.is_empty() || self.name.len() > u8::MAX as usize {
            return bad("name must be 1..=255 bytes");
        }
        if !(self.shunt_ohms.is_finite() && self.shunt_ohms > 0.0) {
            return bad("shunt_ohms must be positive");
        }
        if !(self.amp_gain.is_finite() && self.amp_gain > 0.0) {
            return bad("amp_gain must be positive");
        }
        if usize::from(self.v_channel) >= CHANNELS || usize::from(self.i_channel) >= CHANNELS {
            return bad("channel index out of range");
        }
        if self.v_channel == self.i_channel {
            return bad("voltage and current share a channel");
        }
        Ok(())
    }
}

/// Checks a full rail table: each rail valid, ids equal to table position,
/// and no channel claimed twice.
pub fn validate_rails(rails: &[RailConfig]) -> Result<(), RailError> {
    if rails.len() > CHANNELS / 2 {
        return Err(RailError::TooManyRails(rails.len()));
    }
    let mut owner: [Option<&str>; CHANNELS] = [None; CHANNELS];
    for (position, rail) in rails.iter().enumerate() {
        rail.validate()?;
        if usize::from(rail.rail_id) != position {
            return Err(RailError::RailIdOrder {
                name: rail.name.clone(),
                id: rail.rail_id,
                position,
            });
        }
        for ch in [rail.v_channel, rail.i_channel] {
            if let Some(first) = owner[usize::from(ch)] {
                return Err(RailError::ChannelConflict {
                    channel: ch,
                    first: first.to_string(),
                    second: rail.name.clone(),
                });
            }
            owner[usize::from(ch)] = Some(&rail.name);
        }
    }
    Ok(())
}

pub fn find_rail<'a>(rails: &'a [RailConfig], name: &str) -> Option<&'a RailConfig> {
    rails.iter().find(|r| r.name == name)
}

pub fn code_to_voltage(code: u16, adc: &AdcConfig) -> f64 {
    f64::from(code) * adc.full_scale_volts() / CODE_SPAN
}

/// Round-to-nearest with clamping to the code range.
pub fn quantize_voltage(v: f64, adc: &AdcConfig) -> u16 {
    let code = (v / adc.lsb_volts()).round();
    code.clamp(0.0, f64::from(u16::MAX)) as u16
}

pub fn sense_to_current(v_sense: f64, rail: &RailConfig) -> f64 {
    v_sense / rail.transimpedance()
}

/// Sense voltage produced by `amps` through the rail's shunt and amplifier.
pub fn current_to_sense(amps: f64, rail: &RailConfig) -> f64 {
    amps * rail.transimpedance()
}

/// Current step represented by one code on the rail's sense channel.
pub fn current_lsb(rail: &RailConfig, adc: &AdcConfig) -> f64 {
    adc.lsb_volts() / rail.transimpedance()
}

/// Default channel map: five DUT rails followed by the core and I/O rails of
/// both PHYs, each rail on an adjacent (V, I) channel pair.
pub fn default_rails() -> Vec<RailConfig> {
    const MAP: [(&str, RailGroup); 9] = [
        ("VCCINT", RailGroup::Dut),
        ("VCCAUX", RailGroup::Dut),
        ("VCCBRAM", RailGroup::Dut),
        ("VCCPINT", RailGroup::Dut),
        ("VCCPAUX", RailGroup::Dut),
        ("PHY1_CORE", RailGroup::Phy1),
        ("PHY1_VCCIO", RailGroup::Phy1),
        ("PHY2_CORE", RailGroup::Phy2),
        ("PHY2_VCCIO", RailGroup::Phy2),
    ];
    MAP.iter()
        .enumerate()
        .map(|(i, (name, group))| {
            RailConfig::new(i as u8, name, *group, 2 * i as u8, 2 * i as u8 + 1)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn adc() -> AdcConfig {
        AdcConfig::default()
    }

    #[test]
    fn lsb_is_exact_power_of_two_fraction() {
        assert_eq!(adc().lsb_volts(), 10.0 / 65536.0);
        assert_eq!(adc().lsb_volts() * 65536.0, 10.0);
    }

    #[test]
    fn code_to_voltage_examples() {
        assert_eq!(code_to_voltage(0, &adc()), 0.0);
        assert_eq!(code_to_voltage(32768, &adc()), 5.0);
        assert!((code_to_voltage(65535, &adc()) - 9.99984741).abs() < 1e-8);
    }

    #[test]
    fn quantize_examples() {
        assert_eq!(quantize_voltage(-0.1, &adc()), 0);
        assert_eq!(quantize_voltage(5.0, &adc()), 32768);
        assert_eq!(quantize_voltage(10.5, &adc()), 65535);
        // 1.0 / lsb = 6553.6
        assert_eq!(quantize_voltage(1.0, &adc()), 6554);
    }

    #[test]
    fn sense_conversion_examples() {
        let rail = RailConfig::new(0, "R", RailGroup::Phy1, 0, 1);
        assert_eq!(sense_to_current(0.0, &rail), 0.0);
        assert!((sense_to_current(0.5, &rail) - 0.1).abs() < 1e-15);
        let one_lsb = sense_to_current(adc().lsb_volts(), &rail);
        assert!((one_lsb * 1e6 - 30.52).abs() < 0.005);
    }

    #[test]
    fn current_lsb_examples() {
        let mut rail = RailConfig::new(0, "R", RailGroup::Phy1, 0, 1);
        assert!((current_lsb(&rail, &adc()) * 1e6 - 30.5176).abs() < 1e-3);
        rail.amp_gain = 1.0;
        rail.shunt_ohms = 1.0;
        assert!((current_lsb(&rail, &adc()) * 1e6 - 152.5879).abs() < 1e-3);
        rail.amp_gain = 100.0;
        rail.shunt_ohms = 0.002;
        assert!((current_lsb(&rail, &adc()) * 1e6 - 762.939).abs() < 1e-3);
    }

    #[test]
    fn round_trip_every_code() {
        for c in 0..=u16::MAX {
            assert_eq!(quantize_voltage(code_to_voltage(c, &adc()), &adc()), c);
        }
    }

    #[test]
    fn sample_rate_bounds() {
        assert!(AdcConfig::new(630_000).is_ok());
        assert_eq!(AdcConfig::new(630_001), Err(RailError::SampleRate(630_001)));
        assert!(AdcConfig::new(0).is_err());
    }

    #[test]
    fn default_map_is_a_bijection() {
        let rails = default_rails();
        validate_rails(&rails).unwrap();
        let mut used: Vec<u8> = rails
            .iter()
            .flat_map(|r| [r.v_channel, r.i_channel])
            .collect();
        used.sort_unstable();
        used.dedup();
        assert_eq!(used.len(), 2 * rails.len());
        assert_eq!(used.len(), CHANNELS);
    }

    #[test]
    fn rejects_bad_rails() {
        let mut rails = default_rails();
        rails[1].v_channel = rails[0].i_channel;
        assert!(matches!(
            validate_rails(&rails),
            Err(RailError::ChannelConflict { channel: 1, .. })
        ));

        let mut rails = default_rails();
        rails[2].shunt_ohms = 0.0;
        assert!(matches!(
            validate_rails(&rails),
            Err(RailError::InvalidRail { .. })
        ));

        let mut rails = default_rails();
        rails[3].i_channel = rails[3].v_channel;
        assert!(validate_rails(&rails).is_err());

        let mut rails = default_rails();
        rails.swap(0, 1);
        assert!(matches!(
            validate_rails(&rails),
            Err(RailError::RailIdOrder { .. })
        ));
    }

    #[test]
    fn group_codes_round_trip() {
        for g in [
            RailGroup::Dut,
            RailGroup::Phy1,
            RailGroup::Phy2,
            RailGroup::Hdmi,
        ] {
            assert_eq!(RailGroup::from_u8(g.to_u8()), Some(g));
        }
        assert_eq!(RailGroup::from_u8(4), None);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn quantization_error_within_half_lsb(v in 0.0f64..(10.0 - 10.0 / 131072.0)) {
                let adc = AdcConfig::default();
                let err = (code_to_voltage(quantize_voltage(v, &adc), &adc) - v).abs();
                prop_assert!(err <= adc.lsb_volts() / 2.0 + 1e-15);
            }

            #[test]
            fn sense_conversion_is_linear(v in -10.0f64..10.0, a in -100.0f64..100.0,
                                          gain in 0.1f64..1000.0, shunt in 1e-4f64..10.0) {
                let mut rail = RailConfig::new(0, "R", RailGroup::Dut, 0, 1);
                rail.amp_gain = gain;
                rail.shunt_ohms = shunt;
                let lhs = sense_to_current(a * v, &rail);
                let rhs = a * sense_to_current(v, &rail);
                prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1e-300));
            }
        }
    }
}
