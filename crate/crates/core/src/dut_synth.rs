//! Deterministic synthetic device under test.
//!
//! A [`Scenario`] describes every rail's waveform as a superposition of an
//! idle draw, workload phases, rectangular Ethernet frame pulses, switching
//! ripple and seeded Gaussian noise. Evaluation is a pure function of
//! `(scenario, rail, t)`, so any sampler can query any instant in any order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rail_model::{self, AdcConfig, RailConfig, RailError, RailGroup};

/// Preamble plus start-of-frame delimiter (8) and minimum inter-frame gap (12).
pub const ETHERNET_WIRE_OVERHEAD_BYTES: u32 = 20;
pub const MIN_FRAME_BYTES: u32 = 64;
pub const MAX_FRAME_BYTES: u32 = 1518;
pub const GIGABIT: f64 = 1e9;
pub const DEFAULT_RIPPLE_HZ: f64 = 500_000.0;

#[derive(Debug, Error, PartialEq)]
pub enum ScenarioError {
    #[error("frame size {0} B outside Ethernet limits {MIN_FRAME_BYTES}..={MAX_FRAME_BYTES}")]
    FrameSize(u32),
    #[error("line rate must be positive")]
    LineRate,
    #[error("unknown rail id {0}")]
    UnknownRail(u8),
    #[error("unknown frame schedule {0}")]
    UnknownSchedule(usize),
    #[error("no trigger")]
    NoTrigger,
    #[error("trigger wants frame {n} but schedule only has {count}")]
    TriggerBeyondSchedule { n: u32, count: u32 },
    #[error("trigger schedule {0} is not an ingress schedule")]
    TriggerNotIngress(usize),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Rail(#[from] RailError),
    #[error("scenario document: {0}")]
    Json(String),
}

/// Extra load drawn between `start_s` (inclusive) and `end_s` (exclusive).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub start_s: f64,
    pub end_s: f64,
    pub extra_current_a: f64,
}

impl Phase {
    fn active(&self, t: f64) -> bool {
        self.start_s <= t && t < self.end_s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RailWaveformSpec {
    pub nominal_volts: f64,
    pub idle_current_a: f64,
    #[serde(default)]
    pub ripple_amp_a: f64,
    #[serde(default)]
    pub noise_rms_a: f64,
    #[serde(default)]
    pub phases: Vec<Phase>,
    /// Static relative deviation of the fitted shunt from its nominal value
    /// (e.g. `0.01` for a shunt at the edge of a 1 % tolerance band).
    #[serde(default)]
    pub shunt_error: f64,
}

/// A rail as it appears in the scenario document: its sense configuration
/// plus the waveform it carries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRail {
    #[serde(flatten)]
    pub config: RailConfig,
    #[serde(flatten)]
    pub waveform: RailWaveformSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Ingress,
    Egress,
}

/// Periodic frame traffic leaving a current signature on one rail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameSchedule {
    pub rail_id: u8,
    pub direction: Direction,
    pub frame_bytes: u32,
    pub period_s: f64,
    pub count: u32,
    pub first_arrival_s: f64,
    /// Zero models traffic that leaves no visible trace on the rail.
    pub burst_current_a: f64,
    #[serde(default = "default_line_rate")]
    pub line_rate_bps: f64,
}

fn default_line_rate() -> f64 {
    GIGABIT
}

impl FrameSchedule {
    pub fn frame_duration(&self) -> Result<f64, ScenarioError> {
        frame_duration(self.frame_bytes, self.line_rate_bps)
    }

    fn start_of(&self, k: u32) -> f64 {
        self.first_arrival_s + f64::from(k) * self.period_s
    }

    /// Whether a frame of this schedule is on the wire at `t`.
    fn active(&self, t: f64, duration: f64) -> bool {
        if self.count == 0 || t < self.first_arrival_s {
            return false;
        }
        let guess = ((t - self.first_arrival_s) / self.period_s).floor();
        // probe neighbours as well so rounding in the division cannot skip a pulse edge
        let lo = (guess - 1.0).max(0.0);
        let hi = (guess + 1.0).min(f64::from(self.count - 1));
        let mut k = lo;
        while k <= hi {
            let start = self.start_of(k as u32);
            if start <= t && t < start + duration {
                return true;
            }
            k += 1.0;
        }
        false
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum TriggerSpec {
    /// Fires at the end of the `n`-th frame of an ingress schedule.
    AfterNFrames {
        #[serde(default)]
        schedule: usize,
        n: u32,
    },
    AtTime {
        t_s: f64,
    },
}

/// Periodic burst of system current, e.g. storage writes on the monitor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityBurst {
    pub start_s: f64,
    pub on_s: f64,
    pub period_s: f64,
    pub count: u32,
    pub current_a: f64,
}

impl ActivityBurst {
    fn current_at(&self, t: f64) -> f64 {
        if self.count == 0 || t < self.start_s {
            return 0.0;
        }
        let k = ((t - self.start_s) / self.period_s).floor();
        if k >= f64::from(self.count) {
            return 0.0;
        }
        let start = self.start_s + k * self.period_s;
        if t >= start && t < start + self.on_s {
            self.current_a
        } else {
            0.0
        }
    }
}

/// Parasitic offset from return current through the shared ground: the
/// activity current times `r_ground_ohms`, added to both channels of the
/// listed rails.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundOffsetSpec {
    pub r_ground_ohms: f64,
    #[serde(default)]
    pub activity: Vec<ActivityBurst>,
    #[serde(default)]
    pub rails: Vec<u8>,
}

impl GroundOffsetSpec {
    pub fn activity_current(&self, t: f64) -> f64 {
        self.activity.iter().map(|b| b.current_at(t)).sum()
    }

    pub fn offset_volts(&self, rail_id: u8, t: f64) -> f64 {
        if self.r_ground_ohms == 0.0 || !self.rails.contains(&rail_id) {
            return 0.0;
        }
        self.r_ground_ohms * self.activity_current(t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub duration_s: f64,
    pub seed: u64,
    #[serde(default)]
    pub adc: AdcConfig,
    #[serde(default = "default_ripple_hz")]
    pub ripple_hz: f64,
    pub rails: Vec<ScenarioRail>,
    #[serde(default)]
    pub frames: Vec<FrameSchedule>,
    #[serde(default)]
    pub trigger: Option<TriggerSpec>,
    #[serde(default)]
    pub ground_offset: GroundOffsetSpec,
}

fn default_ripple_hz() -> f64 {
    DEFAULT_RIPPLE_HZ
}

/// True rail state at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RailSample {
    /// Rail voltage including any ground-offset error.
    pub volts: f64,
    pub amps: f64,
    /// Ground-offset error present on this rail's channels.
    pub offset_volts: f64,
}

/// Time on the wire of one frame, including preamble and inter-frame gap.
pub fn frame_duration(frame_bytes: u32, line_rate_bps: f64) -> Result<f64, ScenarioError> {
    if !(MIN_FRAME_BYTES..=MAX_FRAME_BYTES).contains(&frame_bytes) {
        return Err(ScenarioError::FrameSize(frame_bytes));
    }
    if !(line_rate_bps.is_finite() && line_rate_bps > 0.0) {
        return Err(ScenarioError::LineRate);
    }
    Ok(f64::from(frame_bytes + ETHERNET_WIRE_OVERHEAD_BYTES) * 8.0 / line_rate_bps)
}

/// `(start, end)` of every frame in the schedule.
pub fn frame_event_times(schedule: &FrameSchedule) -> Result<Vec<(f64, f64)>, ScenarioError> {
    let dur = schedule.frame_duration()?;
    Ok((0..schedule.count)
        .map(|k| {
            let start = schedule.start_of(k);
            (start, start + dur)
        })
        .collect())
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn noise_sample(seed: u64, rail_id: u8, t: f64) -> f64 {
    let key = splitmix64(seed ^ splitmix64(u64::from(rail_id) + 1) ^ t.to_bits());
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    StandardNormal.sample(&mut rng)
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let scenario: Scenario =
            serde_json::from_str(text).map_err(|e| ScenarioError::Json(e.to_string()))?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("scenario serializes");
        s.push('\n');
        s
    }

    pub fn rail_configs(&self) -> Vec<RailConfig> {
        self.rails.iter().map(|r| r.config.clone()).collect()
    }

    pub fn rail(&self, rail_id: u8) -> Result<&ScenarioRail, ScenarioError> {
        self.rails
            .get(usize::from(rail_id))
            .filter(|r| r.config.rail_id == rail_id)
            .ok_or(ScenarioError::UnknownRail(rail_id))
    }

    pub fn rail_by_name(&self, name: &str) -> Option<&ScenarioRail> {
        self.rails.iter().find(|r| r.config.name == name)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let invalid = |msg: String| Err(ScenarioError::Invalid(msg));
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return invalid("duration_s must be positive".into());
        }
        self.adc.validate()?;
        if !(self.ripple_hz.is_finite() && self.ripple_hz >= 0.0) {
            return invalid("ripple_hz must be non-negative".into());
        }
        rail_model::validate_rails(&self.rail_configs())?;
        for rail in &self.rails {
            let w = &rail.waveform;
            let name = &rail.config.name;
            if !(w.nominal_volts.is_finite() && w.nominal_volts > 0.0) {
                return invalid(format!("{name}: nominal_volts must be positive"));
            }
            if !(w.idle_current_a.is_finite() && w.idle_current_a >= 0.0) {
                return invalid(format!("{name}: idle_current_a must be non-negative"));
            }
            if !(w.noise_rms_a >= 0.0 && w.ripple_amp_a.is_finite()) {
                return invalid(format!("{name}: noise/ripple out of range"));
            }
            let mut phases: Vec<&Phase> = w.phases.iter().collect();
            phases.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
            for p in &phases {
                if p.end_s.is_nan() || p.end_s < p.start_s {
                    return invalid(format!("{name}: phase ends before it starts"));
                }
            }
            if phases
                .windows(2)
                .any(|pair| pair[1].start_s < pair[0].end_s)
            {
                return invalid(format!("{name}: overlapping phases"));
            }
        }
        for (idx, sched) in self.frames.iter().enumerate() {
            self.rail(sched.rail_id)?;
            let dur = sched.frame_duration()?;
            if sched.count > 0 {
                if sched.period_s.is_nan() || sched.period_s <= dur {
                    return invalid(format!(
                        "schedule {idx}: period_s must exceed frame duration"
                    ));
                }
                let last_end = sched.start_of(sched.count - 1) + dur;
                if sched.first_arrival_s < 0.0 || last_end > self.duration_s {
                    return invalid(format!(
                        "schedule {idx}: frames fall outside [0, duration_s]"
                    ));
                }
            }
        }
        let g = &self.ground_offset;
        if g.r_ground_ohms.is_nan() || g.r_ground_ohms < 0.0 {
            return invalid("ground_offset.r_ground_ohms must be non-negative".into());
        }
        for id in &g.rails {
            self.rail(*id)?;
        }
        if let Some(TriggerSpec::AfterNFrames { schedule, .. }) = &self.trigger {
            if *schedule >= self.frames.len() {
                return Err(ScenarioError::UnknownSchedule(*schedule));
            }
        }
        Ok(())
    }

    /// Rail voltage and current at `t`.
    ///
    /// Current is `idle + phases + frame pulses + ripple + noise`, summed in
    /// that order.
    pub fn eval_rail(&self, rail_id: u8, t: f64) -> Result<RailSample, ScenarioError> {
        let rail = self.rail(rail_id)?;
        let w = &rail.waveform;

        let mut amps = w.idle_current_a;
        for phase in &w.phases {
            if phase.active(t) {
                amps += phase.extra_current_a;
            }
        }
        for sched in self.frames.iter().filter(|s| s.rail_id == rail_id) {
            if sched.burst_current_a != 0.0 && sched.active(t, sched.frame_duration()?) {
                amps += sched.burst_current_a;
            }
        }
        if w.ripple_amp_a != 0.0 {
            amps += w.ripple_amp_a * (2.0 * std::f64::consts::PI * self.ripple_hz * t).sin();
        }
        if w.noise_rms_a > 0.0 {
            amps += w.noise_rms_a * noise_sample(self.seed, rail_id, t);
        }

        let offset_volts = self.ground_offset.offset_volts(rail_id, t);
        Ok(RailSample {
            volts: w.nominal_volts + offset_volts,
            amps,
            offset_volts,
        })
    }

    /// Time at which the trigger line asserts.
    pub fn trigger_time(&self) -> Result<f64, ScenarioError> {
        match self.trigger.as_ref().ok_or(ScenarioError::NoTrigger)? {
            TriggerSpec::AtTime { t_s } => Ok(*t_s),
            TriggerSpec::AfterNFrames { schedule, n } => {
                let sched = self
                    .frames
                    .get(*schedule)
                    .ok_or(ScenarioError::UnknownSchedule(*schedule))?;
                if sched.direction != Direction::Ingress {
                    return Err(ScenarioError::TriggerNotIngress(*schedule));
                }
                if *n == 0 || *n > sched.count {
                    return Err(ScenarioError::TriggerBeyondSchedule {
                        n: *n,
                        count: sched.count,
                    });
                }
                Ok(sched.start_of(n - 1) + sched.frame_duration()?)
            }
        }
    }

    /// Camera stream into PHY2 with PL processing during reception and PS
    /// processing after the trigger, which fires on the 1000th frame.
    pub fn visual_servoing() -> Scenario {
        let adc = AdcConfig::default();
        let configs = rail_model::default_rails();
        let one_lsb = rail_model::current_lsb(&configs[0], &adc);

        let camera = FrameSchedule {
            rail_id: 8,
            direction: Direction::Ingress,
            frame_bytes: MAX_FRAME_BYTES,
            period_s: 1e-3,
            count: 1000,
            first_arrival_s: 1e-3,
            burst_current_a: 0.020,
            line_rate_bps: GIGABIT,
        };
        let duration_s = 2.0;
        let trigger_s =
            camera.start_of(camera.count - 1) + camera.frame_duration().expect("valid frame");

        let pl = |extra| {
            vec![Phase {
                start_s: 0.0,
                end_s: trigger_s,
                extra_current_a: extra,
            }]
        };
        let ps = |extra| {
            vec![Phase {
                start_s: trigger_s,
                end_s: duration_s,
                extra_current_a: extra,
            }]
        };
        // (nominal V, idle A, ripple A, phases)
        let waveforms: [(f64, f64, f64, Vec<Phase>); 9] = [
            (1.0, 0.320, 0.004, pl(0.180)),
            (1.8, 0.085, 0.003, vec![]),
            (1.0, 0.012, 0.0005, pl(0.006)),
            (1.0, 0.240, 0.004, ps(0.350)),
            (1.8, 0.120, 0.002, ps(0.030)),
            (1.8, 0.210, 0.0, vec![]),
            (3.3, 0.035, 0.0, vec![]),
            (1.2, 0.095, 0.0, vec![]),
            (3.3, 0.028, 0.0, vec![]),
        ];
        let rails = configs
            .into_iter()
            .zip(waveforms)
            .map(
                |(config, (nominal_volts, idle_current_a, ripple_amp_a, phases))| ScenarioRail {
                    config,
                    waveform: RailWaveformSpec {
                        nominal_volts,
                        idle_current_a,
                        ripple_amp_a,
                        noise_rms_a: one_lsb,
                        phases,
                        shunt_error: 0.0,
                    },
                },
            )
            .collect();

        let frames = vec![
            camera,
            // acknowledgements out of PHY2: no visible signature
            FrameSchedule {
                rail_id: 7,
                direction: Direction::Egress,
                frame_bytes: MIN_FRAME_BYTES,
                period_s: 10e-3,
                count: 100,
                first_arrival_s: 5e-3,
                burst_current_a: 0.0,
                line_rate_bps: GIGABIT,
            },
            // Linux network traffic out of PHY1, visible on its core rail
            FrameSchedule {
                rail_id: 5,
                direction: Direction::Egress,
                frame_bytes: MAX_FRAME_BYTES,
                period_s: 4e-3,
                count: 400,
                first_arrival_s: 2.5e-3,
                burst_current_a: 0.012,
                line_rate_bps: GIGABIT,
            },
        ];

        Scenario {
            duration_s,
            seed: 0x5EED_0702,
            adc,
            ripple_hz: DEFAULT_RIPPLE_HZ,
            rails,
            frames,
            trigger: Some(TriggerSpec::AfterNFrames {
                schedule: 0,
                n: 1000,
            }),
            ground_offset: GroundOffsetSpec {
                r_ground_ohms: 0.004,
                activity: vec![ActivityBurst {
                    start_s: 0.0,
                    on_s: 2e-3,
                    period_s: 20e-3,
                    count: 100,
                    current_a: 0.08,
                }],
                rails: vec![2],
            },
        }
    }

    /// A scenario with the default rail map where every rail carries a
    /// constant current and nothing else. Handy as a starting point.
    pub fn quiet(duration_s: f64, volts: f64, amps: f64) -> Scenario {
        let rails = rail_model::default_rails()
            .into_iter()
            .map(|config| ScenarioRail {
                config,
                waveform: RailWaveformSpec {
                    nominal_volts: volts,
                    idle_current_a: amps,
                    ripple_amp_a: 0.0,
                    noise_rms_a: 0.0,
                    phases: vec![],
                    shunt_error: 0.0,
                },
            })
            .collect();
        Scenario {
            duration_s,
            seed: 0,
            adc: AdcConfig::default(),
            ripple_hz: DEFAULT_RIPPLE_HZ,
            rails,
            frames: vec![],
            trigger: None,
            ground_offset: GroundOffsetSpec::default(),
        }
    }

    pub fn group_rails(&self, group: RailGroup) -> impl Iterator<Item = &ScenarioRail> {
        self.rails.iter().filter(move |r| r.config.group == group)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn frame_duration_examples() {
        assert!(close(frame_duration(1518, 1e9).unwrap(), 12.304e-6, 1e-15));
        assert!(close(frame_duration(64, 1e9).unwrap(), 0.672e-6, 1e-15));
        assert!(close(frame_duration(1518, 2e9).unwrap(), 6.152e-6, 1e-15));
    }

    #[test]
    fn frame_duration_rejects_non_ethernet_sizes() {
        assert_eq!(frame_duration(63, 1e9), Err(ScenarioError::FrameSize(63)));
        assert_eq!(
            frame_duration(1519, 1e9),
            Err(ScenarioError::FrameSize(1519))
        );
        assert_eq!(frame_duration(64, 0.0), Err(ScenarioError::LineRate));
    }

    fn single_rail(idle: f64, ripple: f64) -> Scenario {
        let mut s = Scenario::quiet(1.0, 1.0, idle);
        s.rails[0].waveform.ripple_amp_a = ripple;
        s
    }

    #[test]
    fn baseline_only() {
        let s = single_rail(0.2, 0.0);
        for t in [0.0, 0.123, 0.999] {
            let r = s.eval_rail(0, t).unwrap();
            assert_eq!((r.volts, r.amps), (1.0, 0.2));
        }
    }

    #[test]
    fn ripple_peak_adds_amplitude() {
        let s = single_rail(0.2, 0.01);
        // quarter period of 500 kHz
        let t = 0.5e-6;
        let r = s.eval_rail(0, t).unwrap();
        assert!(close(r.amps, 0.21, 1e-12));
    }

    #[test]
    fn frame_burst_adds_current() {
        let mut s = single_rail(0.2, 0.0);
        s.frames.push(FrameSchedule {
            rail_id: 0,
            direction: Direction::Ingress,
            frame_bytes: 1518,
            period_s: 1e-3,
            count: 3,
            first_arrival_s: 1e-3,
            burst_current_a: 0.05,
            line_rate_bps: GIGABIT,
        });
        s.validate().unwrap();
        assert!(close(
            s.eval_rail(0, 2e-3 + 5e-6).unwrap().amps,
            0.25,
            1e-15
        ));
        assert_eq!(s.eval_rail(0, 2e-3 + 13e-6).unwrap().amps, 0.2);
        assert_eq!(s.eval_rail(0, 0.5e-3).unwrap().amps, 0.2);
        // after the last frame
        assert_eq!(s.eval_rail(0, 4e-3 + 5e-6).unwrap().amps, 0.2);
    }

    #[test]
    fn unknown_rail_is_an_error() {
        let s = single_rail(0.2, 0.0);
        assert_eq!(s.eval_rail(42, 0.0), Err(ScenarioError::UnknownRail(42)));
    }

    #[test]
    fn event_times_examples() {
        let mut sched = FrameSchedule {
            rail_id: 0,
            direction: Direction::Ingress,
            frame_bytes: 1518,
            period_s: 1e-3,
            count: 0,
            first_arrival_s: 1e-3,
            burst_current_a: 0.05,
            line_rate_bps: GIGABIT,
        };
        assert!(frame_event_times(&sched).unwrap().is_empty());
        sched.count = 3;
        let ev = frame_event_times(&sched).unwrap();
        let starts: Vec<f64> = ev.iter().map(|e| e.0).collect();
        assert!(
            close(starts[0], 1e-3, 1e-15)
                && close(starts[1], 2e-3, 1e-15)
                && close(starts[2], 3e-3, 1e-15)
        );
        assert!(ev.iter().all(|(a, b)| close(b - a, 12.304e-6, 1e-15)));
        sched.count = 1000;
        let ev = frame_event_times(&sched).unwrap();
        assert_eq!(ev.len(), 1000);
        assert!(ev.last().unwrap().1 < 2.0);
    }

    #[test]
    fn trigger_time_examples() {
        let mut s = Scenario::visual_servoing();
        assert!(close(s.trigger_time().unwrap(), 1.0 + 12.304e-6, 1e-12));
        s.trigger = Some(TriggerSpec::AfterNFrames { schedule: 0, n: 1 });
        assert!(close(s.trigger_time().unwrap(), 1.012304e-3, 1e-15));
        s.trigger = Some(TriggerSpec::AtTime { t_s: 0.5 });
        assert_eq!(s.trigger_time().unwrap(), 0.5);
        s.trigger = Some(TriggerSpec::AfterNFrames {
            schedule: 0,
            n: 1001,
        });
        assert_eq!(
            s.trigger_time(),
            Err(ScenarioError::TriggerBeyondSchedule {
                n: 1001,
                count: 1000
            })
        );
        s.trigger = Some(TriggerSpec::AfterNFrames { schedule: 1, n: 1 });
        assert_eq!(s.trigger_time(), Err(ScenarioError::TriggerNotIngress(1)));
        s.trigger = None;
        assert_eq!(s.trigger_time(), Err(ScenarioError::NoTrigger));
    }

    #[test]
    fn preset_is_valid_and_round_trips_through_json() {
        let s = Scenario::visual_servoing();
        s.validate().unwrap();
        let back = Scenario::from_json(&s.to_json()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn validation_catches_bad_documents() {
        let mut s = Scenario::visual_servoing();
        s.frames[0].rail_id = 12;
        assert_eq!(s.validate(), Err(ScenarioError::UnknownRail(12)));

        let mut s = Scenario::visual_servoing();
        s.duration_s = 0.5;
        assert!(matches!(s.validate(), Err(ScenarioError::Invalid(_))));

        let mut s = Scenario::visual_servoing();
        s.rails[0].waveform.phases.push(Phase {
            start_s: 0.5,
            end_s: 1.5,
            extra_current_a: 0.1,
        });
        assert!(
            matches!(s.validate(), Err(ScenarioError::Invalid(m)) if m.contains("overlapping"))
        );

        let mut s = Scenario::visual_servoing();
        s.frames[0].period_s = 10e-6;
        assert!(s.validate().is_err());

        assert!(matches!(
            Scenario::from_json("{"),
            Err(ScenarioError::Json(_))
        ));
    }

    #[test]
    fn ground_offset_only_on_designated_rails() {
        let s = Scenario::visual_servoing();
        let during = s.eval_rail(2, 1e-3).unwrap();
        assert!(close(during.offset_volts, 0.004 * 0.08, 1e-15));
        assert!(close(during.volts, 1.0 + 0.004 * 0.08, 1e-15));
        let idle = s.eval_rail(2, 5e-3).unwrap();
        assert_eq!(idle.offset_volts, 0.0);
        assert_eq!(s.eval_rail(0, 1e-3).unwrap().offset_volts, 0.0);
    }

    #[test]
    fn noise_is_deterministic_and_seeded() {
        let s = Scenario::visual_servoing();
        let a = s.eval_rail(1, 0.25).unwrap();
        let b = s.eval_rail(1, 0.25).unwrap();
        assert_eq!(a.amps.to_bits(), b.amps.to_bits());
        let mut other = s.clone();
        other.seed ^= 1;
        assert_ne!(other.eval_rail(1, 0.25).unwrap().amps, a.amps);
    }

    #[test]
    fn noise_has_requested_rms() {
        let mut s = single_rail(0.0, 0.0);
        s.rails[0].waveform.noise_rms_a = 1e-3;
        let n = 20_000;
        let mean_sq: f64 = (0..n)
            .map(|k| s.eval_rail(0, k as f64 * 1e-5).unwrap().amps.powi(2))
            .sum::<f64>()
            / n as f64;
        assert!(close(mean_sq.sqrt(), 1e-3, 5e-5), "rms {}", mean_sq.sqrt());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn superposition_is_exact(t in 0.0f64..2.0, rail in 0u8..9) {
                let mut s = Scenario::visual_servoing();
                for r in &mut s.rails { r.waveform.noise_rms_a = 0.0; }
                let got = s.eval_rail(rail, t).unwrap().amps;

                let w = &s.rails[rail as usize].waveform;
                let mut expect = w.idle_current_a;
                for p in &w.phases {
                    if p.start_s <= t && t < p.end_s { expect += p.extra_current_a; }
                }
                for sched in s.frames.iter().filter(|f| f.rail_id == rail && f.burst_current_a != 0.0) {
                    let on = frame_event_times(sched).unwrap().iter().any(|(a, b)| *a <= t && t < *b);
                    if on { expect += sched.burst_current_a; }
                }
                if w.ripple_amp_a != 0.0 {
                    expect += w.ripple_amp_a * (2.0 * std::f64::consts::PI * s.ripple_hz * t).sin();
                }
                prop_assert_eq!(got.to_bits(), expect.to_bits());
            }

            #[test]
            fn zero_burst_egress_changes_nothing(t in 0.0f64..2.0) {
                let base = Scenario::visual_servoing();
                let mut with = base.clone();
                with.frames.push(FrameSchedule {
                    rail_id: 8,
                    direction: Direction::Egress,
                    frame_bytes: 1518,
                    period_s: 1e-4,
                    count: 10_000,
                    first_arrival_s: 0.0,
                    burst_current_a: 0.0,
                    line_rate_bps: GIGABIT,
                });
                with.validate().unwrap();
                for rail in 0..9u8 {
                    prop_assert_eq!(base.eval_rail(rail, t).unwrap(), with.eval_rail(rail, t).unwrap());
                }
            }

            #[test]
            fn frame_intervals_within_duration(count in 0u32..500, period_ms in 0.02f64..4.0, first in 0.0f64..0.5) {
                let sched = FrameSchedule {
                    rail_id: 0,
                    direction: Direction::Ingress,
                    frame_bytes: 1518,
                    period_s: period_ms * 1e-3,
                    count,
                    first_arrival_s: first,
                    burst_current_a: 0.01,
                    line_rate_bps: GIGABIT,
                };
                let mut s = Scenario::quiet(3.0, 1.0, 0.1);
                s.frames.push(sched.clone());
                prop_assume!(s.validate().is_ok());
                for (a, b) in frame_event_times(&sched).unwrap() {
                    prop_assert!(a >= 0.0 && b <= s.duration_s && a < b);
                }
            }
        }
    }
}
