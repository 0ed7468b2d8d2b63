//! LINEAR11 telemetry and the coarse supply-controller readout path.
//!
//! A LINEAR11 word packs a 5-bit two's-complement exponent into bits 15..11
//! and an 11-bit two's-complement mantissa into bits 10..0; the value is
//! `mantissa * 2^exponent`.

use crate::dut_synth::{Scenario, ScenarioError};

pub const MANTISSA_MIN: i16 = -1024;
pub const MANTISSA_MAX: i16 = 1023;
pub const EXPONENT_MIN: i8 = -16;
pub const EXPONENT_MAX: i8 = 15;

/// Voltage exponent: 3.9 mV steps.
pub const DEFAULT_VOLTAGE_EXPONENT: i8 = -8;
/// Current exponent: 31.25 mA steps.
pub const DEFAULT_CURRENT_EXPONENT: i8 = -5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Linear11(pub u16);

impl Linear11 {
    pub fn from_parts(mantissa: i16, exponent: i8) -> Self {
        debug_assert!((MANTISSA_MIN..=MANTISSA_MAX).contains(&mantissa));
        debug_assert!((EXPONENT_MIN..=EXPONENT_MAX).contains(&exponent));
        Linear11((((exponent as u16) & 0x1F) << 11) | ((mantissa as u16) & 0x7FF))
    }

    pub fn raw(self) -> u16 {
        self.0
    }

    pub fn exponent(self) -> i8 {
        // sign-extend the top five bits
        ((self.0 as i16) >> 11) as i8
    }

    pub fn mantissa(self) -> i16 {
        ((self.0 << 5) as i16) >> 5
    }

    pub fn value(self) -> f64 {
        linear11_decode(self)
    }
}

/// Quantization step for a given exponent.
pub fn step(exponent: i8) -> f64 {
    2f64.powi(i32::from(exponent))
}

/// Encodes `value` with a fixed exponent; the mantissa saturates at the
/// ends of its range. `exponent` is clamped into [-16, 15].
pub fn linear11_encode(value: f64, exponent: i8) -> Linear11 {
    let exponent = exponent.clamp(EXPONENT_MIN, EXPONENT_MAX);
    let m = (value / step(exponent)).round();
    let m = m.clamp(f64::from(MANTISSA_MIN), f64::from(MANTISSA_MAX)) as i16;
    Linear11::from_parts(m, exponent)
}

pub fn linear11_decode(x: Linear11) -> f64 {
    f64::from(x.mantissa()) * step(x.exponent())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PmbusRecord {
    pub timestamp_ns: u64,
    pub rail_id: u8,
    pub v: Linear11,
    pub i: Linear11,
}

impl PmbusRecord {
    pub fn volts(&self) -> f64 {
        self.v.value()
    }

    pub fn amps(&self) -> f64 {
        self.i.value()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Exponents {
    pub voltage: i8,
    pub current: i8,
}

impl Default for Exponents {
    fn default() -> Self {
        Exponents {
            voltage: DEFAULT_VOLTAGE_EXPONENT,
            current: DEFAULT_CURRENT_EXPONENT,
        }
    }
}

/// Instantaneous controller reading of one rail (no on-device averaging).
pub fn pmbus_read(
    scenario: &Scenario,
    rail_id: u8,
    timestamp_ns: u64,
    exponents: Exponents,
) -> Result<PmbusRecord, ScenarioError> {
    let t = timestamp_ns as f64 * 1e-9;
    let sample = scenario.eval_rail(rail_id, t)?;
    Ok(PmbusRecord {
        timestamp_ns,
        rail_id,
        v: linear11_encode(sample.volts, exponents.voltage),
        i: linear11_encode(sample.amps, exponents.current),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encode_examples() {
        for e in EXPONENT_MIN..=EXPONENT_MAX {
            let x = linear11_encode(0.0, e);
            assert_eq!(x.mantissa(), 0);
            assert_eq!(x.value(), 0.0);
        }
        let x = linear11_encode(0.1, -5);
        assert_eq!((x.mantissa(), x.exponent()), (3, -5));
        assert_eq!(x.value(), 0.09375);
        let x = linear11_encode(100.0, -5);
        assert_eq!(x.mantissa(), 1023);
        assert!((x.value() - 31.97).abs() < 0.005);
        assert_eq!(linear11_encode(-100.0, -5).mantissa(), -1024);
    }

    #[test]
    fn decode_examples() {
        assert_eq!(linear11_decode(Linear11::from_parts(1, 0)), 1.0);
        assert_eq!(linear11_decode(Linear11::from_parts(3, -5)), 0.09375);
        assert_eq!(linear11_decode(Linear11::from_parts(-1024, -16)), -0.015625);
        // bit layout: e = -16 -> 0b10000, m = -1024 -> 0b100_0000_0000
        assert_eq!(Linear11::from_parts(-1024, -16).raw(), 0x8400);
        assert_eq!(Linear11::from_parts(1, 0).raw(), 0x0001);
    }

    #[test]
    fn every_raw_word_survives_decode_encode() {
        for raw in 0..=u16::MAX {
            let x = Linear11(raw);
            assert!((MANTISSA_MIN..=MANTISSA_MAX).contains(&x.mantissa()));
            assert_eq!(
                linear11_encode(x.value(), x.exponent()),
                x,
                "raw {raw:#06x}"
            );
        }
    }

    #[test]
    fn quantization_bound_on_dense_grid() {
        for e in EXPONENT_MIN..=EXPONENT_MAX {
            let s = step(e);
            let lo = f64::from(MANTISSA_MIN) * s;
            let hi = f64::from(MANTISSA_MAX) * s;
            let n = 20_000;
            let mut prev = i16::MIN;
            for k in 0..=n {
                let v = lo + (hi - lo) * f64::from(k) / f64::from(n);
                let x = linear11_encode(v, e);
                assert!((x.value() - v).abs() <= s / 2.0, "e={e} v={v}");
                assert!(x.mantissa() >= prev, "monotone");
                prev = x.mantissa();
            }
        }
    }

    #[test]
    fn default_current_step_is_tens_of_ma() {
        assert_eq!(step(DEFAULT_CURRENT_EXPONENT), 0.03125);
    }

    #[test]
    fn read_quantizes_true_current() {
        let s = Scenario::quiet(1.0, 1.0, 0.1);
        let r = pmbus_read(&s, 0, 500_000_000, Exponents::default()).unwrap();
        assert_eq!(r.amps(), 0.09375);
        assert!((r.amps() - 0.1).abs() < step(-5));
        assert_eq!(r.volts(), 1.0);

        let zero = Scenario::quiet(1.0, 1.0, 0.0);
        assert_eq!(
            pmbus_read(&zero, 3, 0, Exponents::default())
                .unwrap()
                .amps(),
            0.0
        );
        assert!(pmbus_read(&zero, 30, 0, Exponents::default()).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn encode_is_monotone(a in -1e5f64..1e5, b in -1e5f64..1e5, e in -16i8..=15) {
                let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                prop_assert!(linear11_encode(lo, e).mantissa() <= linear11_encode(hi, e).mantissa());
            }
        }
    }
}
