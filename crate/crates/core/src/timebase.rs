//! Integer sample clock. Frame `k` is stamped `floor(k * 1e9 / f_s)` ns,
//! evaluated exactly in 128-bit arithmetic so stamps never drift.

const NS_PER_S: u128 = 1_000_000_000;

pub fn timestamp_of_frame(k: u64, sample_rate_hz: u32) -> u64 {
    (u128::from(k) * NS_PER_S / u128::from(sample_rate_hz)) as u64
}

/// Inverse of [`timestamp_of_frame`]: the unique frame whose stamp is `ts`
/// (for stamps that came from the clock), or the first frame stamped at or
/// after `ts` otherwise.
pub fn frame_at_or_after(ts: u64, sample_rate_hz: u32) -> u64 {
    let num = u128::from(ts) * u128::from(sample_rate_hz);
    num.div_ceil(NS_PER_S) as u64
}

/// Simulation time of frame `k` in seconds.
pub fn frame_time_s(k: u64, sample_rate_hz: u32) -> f64 {
    k as f64 / f64::from(sample_rate_hz)
}

/// First sample tick at or after `t` seconds. Values within a part per
/// billion of a tick snap to it so grid-aligned inputs are not pushed one
/// tick late by rounding.
pub fn tick_at_or_after(t: f64, sample_rate_hz: u32) -> u64 {
    if t <= 0.0 {
        return 0;
    }
    let x = t * f64::from(sample_rate_hz);
    let nearest = x.round();
    if (x - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest as u64
    } else {
        x.ceil() as u64
    }
}

/// Last sample tick at or before `t` seconds, with the same snapping.
pub fn tick_at_or_before(t: f64, sample_rate_hz: u32) -> u64 {
    if t <= 0.0 {
        return 0;
    }
    let x = t * f64::from(sample_rate_hz);
    let nearest = x.round();
    if (x - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest as u64
    } else {
        x.floor() as u64
    }
}
