//! Acquisition firmware model.
//!
//! All 18 channels are sampled at one instant per frame on a fixed clock.
//! Frames are grouped into blocks stamped with the time of their first
//! frame. Until the trigger line fires, blocks circulate through a ring
//! buffer sized to hold at least the pre-trigger window; once it fires the
//! ring is flushed and subsequent blocks go straight to the output until the
//! post-trigger window is complete. PMBus polls run round-robin over their
//! rails at a low aggregate rate across the same span.

use std::sync::mpsc;
use std::thread;

use thiserror::Error;

use crate::dut_synth::{Scenario, ScenarioError};
use crate::pmbus::{self, Exponents};
use crate::rail_model::{self, AdcConfig, RailConfig, CHANNELS};
use crate::timebase;
use crate::trace_codec::{Frame, SampleBlock, TraceFile, TraceHeader, TriggerEvent, TriggerSource};

pub const MIN_PRETRIGGER_S: f64 = 0.150;
pub const DEFAULT_PRETRIGGER_S: f64 = 0.160;
pub const DEFAULT_POSTTRIGGER_S: f64 = 0.5;
pub const DEFAULT_BLOCK_FRAMES: u16 = 64;
pub const DEFAULT_PMBUS_RATE_SPS: u32 = 125;
pub const MAX_PMBUS_RATE_SPS: u32 = 1000;

const QUEUE_DEPTH: usize = 64;

#[derive(Debug, Error, PartialEq)]
pub enum CaptureError {
    #[error("no trigger")]
    NoTrigger,
    #[error("invalid capture config: {0}")]
    Config(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

impl From<rail_model::RailError> for CaptureError {
    fn from(e: rail_model::RailError) -> Self {
        CaptureError::Config(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaptureConfig {
    pub adc: AdcConfig,
    pub rails: Vec<RailConfig>,
    pub block_frames: u16,
    pub pretrigger_s: f64,
    pub posttrigger_s: f64,
    /// Aggregate poll rate shared by all `pmbus_rails`.
    pub pmbus_rate_sps: u32,
    pub pmbus_rails: Vec<u8>,
    pub pmbus_exponents: Exponents,
}

impl CaptureConfig {
    /// Defaults for a scenario: its ADC and rails, 64-frame blocks, 160 ms
    /// pre-trigger, 0.5 s post-trigger, 125 SPS PMBus over the DUT rails.
    pub fn for_scenario(scenario: &Scenario) -> Self {
        let rails = scenario.rail_configs();
        let pmbus_rails = rails
            .iter()
            .filter(|r| r.group == rail_model::RailGroup::Dut)
            .map(|r| r.rail_id)
            .collect();
        CaptureConfig {
            adc: scenario.adc,
            rails,
            block_frames: DEFAULT_BLOCK_FRAMES,
            pretrigger_s: DEFAULT_PRETRIGGER_S,
            posttrigger_s: DEFAULT_POSTTRIGGER_S,
            pmbus_rate_sps: DEFAULT_PMBUS_RATE_SPS,
            pmbus_rails,
            pmbus_exponents: Exponents::default(),
        }
    }

    pub fn validate(&self) -> Result<(), CaptureError> {
        self.adc.validate()?;
        rail_model::validate_rails(&self.rails)?;
        let fail = |m: &str| Err(CaptureError::Config(m.to_string()));
        if self.block_frames == 0 {
            return fail("block_frames must be at least 1");
        }
        if !(self.pretrigger_s >= MIN_PRETRIGGER_S && self.pretrigger_s.is_finite()) {
            return fail("pretrigger_s must be at least 0.150 s");
        }
        if !(self.posttrigger_s >= 0.0 && self.posttrigger_s.is_finite()) {
            return fail("posttrigger_s must be non-negative");
        }
        if self.pmbus_rate_sps > MAX_PMBUS_RATE_SPS {
            return fail("pmbus_rate_sps above 1000");
        }
        if !self.pmbus_rails.is_empty() && self.pmbus_rate_sps == 0 {
            return fail("pmbus_rate_sps must be positive when polling rails");
        }
        for id in &self.pmbus_rails {
            if !self.rails.iter().any(|r| r.rail_id == *id) {
                return fail(&format!("pmbus rail {id} not configured"));
            }
        }
        Ok(())
    }

    fn check_against(&self, scenario: &Scenario) -> Result<(), CaptureError> {
        if self.adc != scenario.adc {
            return Err(CaptureError::Config(
                "ADC config differs from scenario".into(),
            ));
        }
        if self.rails.len() != scenario.rails.len()
            || self
                .rails
                .iter()
                .zip(&scenario.rails)
                .any(|(a, b)| *a != b.config)
        {
            return Err(CaptureError::Config("rails do not match scenario".into()));
        }
        Ok(())
    }

    pub fn pretrigger_frames(&self) -> u64 {
        timebase::tick_at_or_after(self.pretrigger_s, self.adc.sample_rate_hz)
    }

    /// Ring capacity: enough whole blocks before the trigger block to cover
    /// the pre-trigger window, plus the trigger block itself.
    pub fn ring_capacity_blocks(&self) -> usize {
        let b = u64::from(self.block_frames);
        (self.pretrigger_frames().div_ceil(b) + 1) as usize
    }

    pub fn header(&self) -> TraceHeader {
        TraceHeader {
            sample_rate_hz: self.adc.sample_rate_hz,
            block_frames: self.block_frames,
            rails: self.rails.clone(),
        }
    }
}

/// Fixed-capacity FIFO that overwrites its oldest entry when full.
#[derive(Debug, Clone)]
pub struct RingBuffer<T> {
    slots: Vec<Option<T>>,
    write: usize,
    len: usize,
}

impl<T> RingBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "ring buffer needs at least one slot");
        RingBuffer {
            slots: (0..capacity).map(|_| None).collect(),
            write: 0,
            len: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.slots.len()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Stores `item`, returning the entry it displaced, if any.
    pub fn push(&mut self, item: T) -> Option<T> {
        let old = self.slots[self.write].replace(item);
        self.write = (self.write + 1) % self.slots.len();
        if old.is_none() {
            self.len += 1;
        }
        old
    }

    /// Removes everything, oldest first.
    pub fn drain(&mut self) -> Vec<T> {
        let cap = self.slots.len();
        let start = (self.write + cap - self.len) % cap;
        let out = (0..self.len)
            .filter_map(|i| self.slots[(start + i) % cap].take())
            .collect();
        self.len = 0;
        self.write = 0;
        out
    }
}

/// Result of one triggered capture.
#[derive(Debug, Clone, PartialEq)]
pub struct Capture {
    pub trace: TraceFile,
    pub trigger_frame: u64,
    /// Fewer than `pretrigger_s` of history existed before the trigger.
    pub pre_truncated: bool,
    /// The scenario ended before `posttrigger_s` elapsed.
    pub post_truncated: bool,
}

/// Frame and block bounds of one capture.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CapturePlan {
    pub trigger_frame: u64,
    pub last_frame: u64,
    pub ring_blocks: usize,
    pub first_block: u64,
    pub trigger_block: u64,
    pub last_block: u64,
    pub pre_truncated: bool,
    pub post_truncated: bool,
}

pub fn plan_capture(
    scenario: &Scenario,
    config: &CaptureConfig,
) -> Result<CapturePlan, CaptureError> {
    config.validate()?;
    config.check_against(scenario)?;
    let fs = config.adc.sample_rate_hz;
    let t_trig = match scenario.trigger_time() {
        Ok(t) => t,
        Err(ScenarioError::NoTrigger) => return Err(CaptureError::NoTrigger),
        Err(e) => return Err(e.into()),
    };
    let scenario_last = timebase::tick_at_or_before(scenario.duration_s, fs);
    let trigger_frame = timebase::tick_at_or_after(t_trig, fs);
    if t_trig.is_nan() || t_trig < 0.0 || trigger_frame > scenario_last {
        return Err(CaptureError::NoTrigger);
    }
    let wanted_last = trigger_frame + timebase::tick_at_or_after(config.posttrigger_s, fs);
    let last_frame = wanted_last.min(scenario_last);

    let b = u64::from(config.block_frames);
    let ring_blocks = config.ring_capacity_blocks();
    let trigger_block = trigger_frame / b;
    let first_block = (trigger_block + 1).saturating_sub(ring_blocks as u64);
    Ok(CapturePlan {
        trigger_frame,
        last_frame,
        ring_blocks,
        first_block,
        trigger_block,
        last_block: last_frame / b,
        pre_truncated: trigger_frame - first_block * b < config.pretrigger_frames(),
        post_truncated: wanted_last > scenario_last,
    })
}

pub fn timestamp_of_frame(k: u64, config: &CaptureConfig) -> u64 {
    timebase::timestamp_of_frame(k, config.adc.sample_rate_hz)
}

/// All channels at instant `t`. Each rail drives its voltage channel
/// directly and its current channel through shunt and amplifier; channels
/// without a rail read zero.
pub fn sample_frame(
    scenario: &Scenario,
    rails: &[RailConfig],
    adc: &AdcConfig,
    t: f64,
) -> Result<Frame, ScenarioError> {
    let mut frame = [0u16; CHANNELS];
    for rail in rails {
        let s = scenario.eval_rail(rail.rail_id, t)?;
        let shunt_error = scenario.rail(rail.rail_id)?.waveform.shunt_error;
        let sense =
            rail_model::current_to_sense(s.amps, rail) * (1.0 + shunt_error) + s.offset_volts;
        frame[usize::from(rail.v_channel)] = rail_model::quantize_voltage(s.volts, adc);
        frame[usize::from(rail.i_channel)] = rail_model::quantize_voltage(sense, adc);
    }
    Ok(frame)
}

/// Samples block `index`, clipped to end at `last_frame`.
pub fn sample_block(
    scenario: &Scenario,
    config: &CaptureConfig,
    index: u64,
    last_frame: u64,
) -> Result<SampleBlock, ScenarioError> {
    let fs = config.adc.sample_rate_hz;
    let first = index * u64::from(config.block_frames);
    let end = (first + u64::from(config.block_frames) - 1).min(last_frame);
    let frames = (first..=end)
        .map(|k| {
            sample_frame(
                scenario,
                &config.rails,
                &config.adc,
                timebase::frame_time_s(k, fs),
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SampleBlock {
        timestamp_ns: timebase::timestamp_of_frame(first, fs),
        frames,
    })
}

/// Bus time for one poll: READ_VOUT then READ_IOUT, about 47 bit times
/// each at 400 kHz.
pub const PMBUS_READ_LATENCY_NS: u64 = 235_000;

/// Round-robin PMBus polls with stamps in `[from_ns, to_ns]`. Poll `j` is
/// issued at `floor(j * 1e9 / rate)`, reads rail `pmbus_rails[j % n]` and
/// is sampled and stamped when the read completes, `PMBUS_READ_LATENCY_NS`
/// later.
pub fn pmbus_poll_schedule(config: &CaptureConfig, from_ns: u64, to_ns: u64) -> Vec<(u64, u8)> {
    let rails = &config.pmbus_rails;
    let rate = config.pmbus_rate_sps;
    if rails.is_empty() || rate == 0 || from_ns > to_ns {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut j = timebase::frame_at_or_after(from_ns.saturating_sub(PMBUS_READ_LATENCY_NS), rate);
    loop {
        let ts = timebase::timestamp_of_frame(j, rate) + PMBUS_READ_LATENCY_NS;
        if ts > to_ns {
            break;
        }
        if ts >= from_ns {
            out.push((ts, rails[(j % rails.len() as u64) as usize]));
        }
        j += 1;
    }
    out
}

/// Per-rail poll rate.
pub fn pmbus_rate_per_rail(config: &CaptureConfig) -> f64 {
    if config.pmbus_rails.is_empty() {
        0.0
    } else {
        f64::from(config.pmbus_rate_sps) / config.pmbus_rails.len() as f64
    }
}

/// Consumer side: ring until the trigger block, then straight through.
struct BlockSink {
    ring: RingBuffer<SampleBlock>,
    out: Vec<SampleBlock>,
    trigger_block: u64,
}

impl BlockSink {
    fn accept(&mut self, index: u64, block: SampleBlock) {
        if index < self.trigger_block {
            self.ring.push(block);
        } else if index == self.trigger_block {
            self.ring.push(block);
            self.out = self.ring.drain();
        } else {
            self.out.push(block);
        }
    }
}

fn finish(
    scenario: &Scenario,
    config: &CaptureConfig,
    plan: &CapturePlan,
    blocks: Vec<SampleBlock>,
) -> Result<Capture, CaptureError> {
    let mut trace = TraceFile::new(config.header());
    trace.blocks = blocks;
    let (first_ns, last_ns) = trace.span_ns().expect("capture holds the trigger frame");
    for (ts, rail) in pmbus_poll_schedule(config, first_ns, last_ns) {
        trace.pmbus.push(pmbus::pmbus_read(
            scenario,
            rail,
            ts,
            config.pmbus_exponents,
        )?);
    }
    trace.triggers.push(TriggerEvent {
        timestamp_ns: timestamp_of_frame(plan.trigger_frame, config),
        source: TriggerSource::ExternalLine,
    });
    Ok(Capture {
        trace,
        trigger_frame: plan.trigger_frame,
        pre_truncated: plan.pre_truncated,
        post_truncated: plan.post_truncated,
    })
}

/// Single-threaded reference path.
pub fn run_capture_sequential(
    scenario: &Scenario,
    config: &CaptureConfig,
) -> Result<Capture, CaptureError> {
    let plan = plan_capture(scenario, config)?;
    let mut sink = BlockSink {
        ring: RingBuffer::new(plan.ring_blocks),
        out: Vec::new(),
        trigger_block: plan.trigger_block,
    };
    for index in 0..=plan.last_block {
        sink.accept(
            index,
            sample_block(scenario, config, index, plan.last_frame)?,
        );
    }
    finish(scenario, config, &plan, sink.out)
}

/// Sampler and block writer on separate threads joined by a bounded
/// single-producer/single-consumer queue. Output is identical to
/// [`run_capture_sequential`].
pub fn run_capture(scenario: &Scenario, config: &CaptureConfig) -> Result<Capture, CaptureError> {
    let plan = plan_capture(scenario, config)?;
    let (tx, rx) = mpsc::sync_channel::<(u64, SampleBlock)>(QUEUE_DEPTH);

    let (produced, blocks) = thread::scope(|s| {
        let producer = s.spawn(move || -> Result<(), ScenarioError> {
            for index in 0..=plan.last_block {
                let block = sample_block(scenario, config, index, plan.last_frame)?;
                if tx.send((index, block)).is_err() {
                    break;
                }
            }
            Ok(())
        });
        let mut sink = BlockSink {
            ring: RingBuffer::new(plan.ring_blocks),
            out: Vec::new(),
            trigger_block: plan.trigger_block,
        };
        for (index, block) in rx {
            sink.accept(index, block);
        }
        (producer.join().expect("sampler thread panicked"), sink.out)
    });
    produced?;
    finish(scenario, config, &plan, blocks)
}
