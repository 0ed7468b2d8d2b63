//! Raw capture format (`.ptrc`).
//!
//! The stream is written strictly front to back, the same way the firmware
//! streams blocks onto an SD card without a filesystem. All integers are
//! little-endian.
//!
//! ```text
//! header   "PTRC" | version u16 = 1 | channel_count u8 = 18
//!          | sample_rate_hz u32 | block_frames u16 | rail_count u8
//!          | rail_count x { name_len u8, name, shunt_uohm u32,
//!                           gain_milli u32, v_channel u8, i_channel u8, group u8 }
//! records  0x01 block   { timestamp_ns u64, frame_count u16, frame_count x 18 x u16 }
//!          0x02 pmbus   { timestamp_ns u64, rail_id u8, v_linear11 u16, i_linear11 u16 }
//!          0x03 trigger { timestamp_ns u64, source u8 }
//! ```
//!
//! Records appear in nondecreasing timestamp order. A record cut short at
//! the end of the stream is dropped and counted as a warning.

use std::fmt::Write as _;
use std::io::{self, Write};

use thiserror::Error;

use crate::pmbus::{Linear11, PmbusRecord};
use crate::rail_model::{self, AdcConfig, RailConfig, RailGroup, CHANNELS};
use crate::timebase;

pub const MAGIC: [u8; 4] = *b"PTRC";
pub const VERSION: u16 = 1;
pub const FILE_EXTENSION: &str = "ptrc";

pub const TAG_BLOCK: u8 = 0x01;
pub const TAG_PMBUS: u8 = 0x02;
pub const TAG_TRIGGER: u8 = 0x03;

const FIXED_HEADER_LEN: usize = 4 + 2 + 1 + 4 + 2 + 1;
const BLOCK_PREFIX_LEN: usize = 8 + 2;
const PMBUS_LEN: usize = 8 + 1 + 2 + 2;
const TRIGGER_LEN: usize = 8 + 1;

/// One simultaneous sample of every channel.
pub type Frame = [u16; CHANNELS];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleBlock {
    /// Time of the first frame in the block.
    pub timestamp_ns: u64,
    pub frames: Vec<Frame>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TriggerSource {
    ExternalLine,
}

impl TriggerSource {
    fn to_u8(self) -> u8 {
        match self {
            TriggerSource::ExternalLine => 0,
        }
    }

    fn from_u8(v: u8) -> Option<Self> {
        (v == 0).then_some(TriggerSource::ExternalLine)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TriggerEvent {
    pub timestamp_ns: u64,
    pub source: TriggerSource,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceHeader {
    pub sample_rate_hz: u32,
    pub block_frames: u16,
    pub rails: Vec<RailConfig>,
}

impl TraceHeader {
    pub fn adc(&self) -> AdcConfig {
        AdcConfig {
            sample_rate_hz: self.sample_rate_hz,
        }
    }

    pub fn encoded_len(&self) -> usize {
        FIXED_HEADER_LEN
            + self
                .rails
                .iter()
                .map(|r| 1 + r.name.len() + 4 + 4 + 3)
                .sum::<usize>()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceFile {
    pub header: TraceHeader,
    pub blocks: Vec<SampleBlock>,
    pub pmbus: Vec<PmbusRecord>,
    pub triggers: Vec<TriggerEvent>,
}

impl TraceFile {
    pub fn new(header: TraceHeader) -> Self {
        TraceFile {
            header,
            blocks: Vec::new(),
            pmbus: Vec::new(),
            triggers: Vec::new(),
        }
    }

    pub fn frame_count(&self) -> usize {
        self.blocks.iter().map(|b| b.frames.len()).sum()
    }

    pub fn frames(&self) -> impl Iterator<Item = &Frame> {
        self.blocks.iter().flat_map(|b| b.frames.iter())
    }

    /// Per-frame timestamps, reconstructed from each block's stamp and the
    /// nominal rate.
    pub fn frame_timestamps(&self) -> Vec<u64> {
        let fs = self.header.sample_rate_hz;
        let mut out = Vec::with_capacity(self.frame_count());
        for block in &self.blocks {
            let k0 = timebase::frame_at_or_after(block.timestamp_ns, fs);
            out.extend(
                (0..block.frames.len() as u64).map(|j| timebase::timestamp_of_frame(k0 + j, fs)),
            );
        }
        out
    }

    /// Global frame index of the first captured frame.
    pub fn first_frame_index(&self) -> Option<u64> {
        self.blocks
            .first()
            .map(|b| timebase::frame_at_or_after(b.timestamp_ns, self.header.sample_rate_hz))
    }

    pub fn channel_codes(&self, channel: u8) -> Vec<u16> {
        let ch = usize::from(channel);
        self.frames().map(|f| f[ch]).collect()
    }

    pub fn rail(&self, name: &str) -> Option<&RailConfig> {
        rail_model::find_rail(&self.header.rails, name)
    }

    /// Timestamps of the first and last frame.
    pub fn span_ns(&self) -> Option<(u64, u64)> {
        let fs = self.header.sample_rate_hz;
        let first = self.first_frame_index()?;
        let n = self.frame_count() as u64;
        (n > 0).then(|| {
            (
                timebase::timestamp_of_frame(first, fs),
                timebase::timestamp_of_frame(first + n - 1, fs),
            )
        })
    }

    pub fn pmbus_for(&self, rail_id: u8) -> impl Iterator<Item = &PmbusRecord> {
        self.pmbus.iter().filter(move |r| r.rail_id == rail_id)
    }
}

/// Append-only encoder over any byte sink.
pub struct TraceWriter<W: Write> {
    out: W,
    channels: usize,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(mut out: W, header: &TraceHeader) -> io::Result<Self> {
        out.write_all(&MAGIC)?;
        out.write_all(&VERSION.to_le_bytes())?;
        out.write_all(&[CHANNELS as u8])?;
        out.write_all(&header.sample_rate_hz.to_le_bytes())?;
        out.write_all(&header.block_frames.to_le_bytes())?;
        out.write_all(&[header.rails.len() as u8])?;
        for rail in &header.rails {
            let name = rail.name.as_bytes();
            out.write_all(&[name.len() as u8])?;
            out.write_all(name)?;
            out.write_all(&to_fixed(rail.shunt_ohms, 1e6).to_le_bytes())?;
            out.write_all(&to_fixed(rail.amp_gain, 1e3).to_le_bytes())?;
            out.write_all(&[rail.v_channel, rail.i_channel, rail.group.to_u8()])?;
        }
        Ok(TraceWriter {
            out,
            channels: CHANNELS,
        })
    }

    pub fn write_block(&mut self, block: &SampleBlock) -> io::Result<()> {
        let mut buf =
            Vec::with_capacity(1 + BLOCK_PREFIX_LEN + block.frames.len() * self.channels * 2);
        buf.push(TAG_BLOCK);
        buf.extend_from_slice(&block.timestamp_ns.to_le_bytes());
        buf.extend_from_slice(&(block.frames.len() as u16).to_le_bytes());
        for frame in &block.frames {
            for code in frame {
                buf.extend_from_slice(&code.to_le_bytes());
            }
        }
        self.out.write_all(&buf)
    }

    pub fn write_pmbus(&mut self, rec: &PmbusRecord) -> io::Result<()> {
        let mut buf = [0u8; 1 + PMBUS_LEN];
        buf[0] = TAG_PMBUS;
        buf[1..9].copy_from_slice(&rec.timestamp_ns.to_le_bytes());
        buf[9] = rec.rail_id;
        buf[10..12].copy_from_slice(&rec.v.raw().to_le_bytes());
        buf[12..14].copy_from_slice(&rec.i.raw().to_le_bytes());
        self.out.write_all(&buf)
    }

    pub fn write_trigger(&mut self, ev: &TriggerEvent) -> io::Result<()> {
        let mut buf = [0u8; 1 + TRIGGER_LEN];
        buf[0] = TAG_TRIGGER;
        buf[1..9].copy_from_slice(&ev.timestamp_ns.to_le_bytes());
        buf[9] = ev.source.to_u8();
        self.out.write_all(&buf)
    }

    pub fn finish(mut self) -> io::Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

/// Fixed-point field: rounded and saturated to the u32 range.
fn to_fixed(v: f64, scale: f64) -> u32 {
    (v * scale).round().clamp(0.0, f64::from(u32::MAX)) as u32
}

enum RecordRef<'a> {
    Block(&'a SampleBlock),
    Pmbus(&'a PmbusRecord),
    Trigger(&'a TriggerEvent),
}

/// Streams `trace` into `out`, interleaving all records by timestamp
/// (blocks before PMBus before triggers at equal stamps).
pub fn encode_to<W: Write>(trace: &TraceFile, out: W) -> io::Result<W> {
    let mut records: Vec<(u64, u8, RecordRef<'_>)> =
        Vec::with_capacity(trace.blocks.len() + trace.pmbus.len() + trace.triggers.len());
    records.extend(
        trace
            .blocks
            .iter()
            .map(|b| (b.timestamp_ns, TAG_BLOCK, RecordRef::Block(b))),
    );
    records.extend(
        trace
            .pmbus
            .iter()
            .map(|p| (p.timestamp_ns, TAG_PMBUS, RecordRef::Pmbus(p))),
    );
    records.extend(
        trace
            .triggers
            .iter()
            .map(|t| (t.timestamp_ns, TAG_TRIGGER, RecordRef::Trigger(t))),
    );
    records.sort_by_key(|(ts, tag, _)| (*ts, *tag));

    let mut w = TraceWriter::new(out, &trace.header)?;
    for (_, _, rec) in &records {
        match rec {
            RecordRef::Block(b) => w.write_block(b)?,
            RecordRef::Pmbus(p) => w.write_pmbus(p)?,
            RecordRef::Trigger(t) => w.write_trigger(t)?,
        }
    }
    w.finish()
}

pub fn encode(trace: &TraceFile) -> Vec<u8> {
    encode_to(trace, Vec::new()).expect("writing to a Vec cannot fail")
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DecodeError {
    #[error("not a trace")]
    NotATrace,
    #[error("unsupported trace version {0}")]
    Unsupported(u16),
    #[error("truncated header")]
    TruncatedHeader,
    #[error("invalid header: {0}")]
    InvalidHeader(String),
    #[error("corrupt at offset {0}")]
    Corrupt(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub trace: TraceFile,
    /// Records dropped because the stream ended inside them.
    pub warnings: usize,
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let s = self.buf.get(self.pos..end)?;
        self.pos = end;
        Some(s)
    }

    fn u8(&mut self) -> Option<u8> {
        self.take(1).map(|b| b[0])
    }

    fn u16(&mut self) -> Option<u16> {
        self.take(2).map(|b| u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4)
            .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }
}

fn decode_header(r: &mut Reader<'_>) -> Result<TraceHeader, DecodeError> {
    let magic = r.take(4).ok_or(DecodeError::NotATrace)?;
    if magic != MAGIC {
        return Err(DecodeError::NotATrace);
    }
    let version = r.u16().ok_or(DecodeError::TruncatedHeader)?;
    if version != VERSION {
        return Err(DecodeError::Unsupported(version));
    }
    let channels = r.u8().ok_or(DecodeError::TruncatedHeader)?;
    if usize::from(channels) != CHANNELS {
        return Err(DecodeError::InvalidHeader(format!(
            "channel count {channels}"
        )));
    }
    let sample_rate_hz = r.u32().ok_or(DecodeError::TruncatedHeader)?;
    let block_frames = r.u16().ok_or(DecodeError::TruncatedHeader)?;
    if sample_rate_hz == 0 || block_frames == 0 {
        return Err(DecodeError::InvalidHeader(
            "zero sample rate or block size".into(),
        ));
    }
    let rail_count = r.u8().ok_or(DecodeError::TruncatedHeader)?;
    let mut rails = Vec::with_capacity(usize::from(rail_count));
    for rail_id in 0..rail_count {
        let len = r.u8().ok_or(DecodeError::TruncatedHeader)?;
        let name = r
            .take(usize::from(len))
            .ok_or(DecodeError::TruncatedHeader)?;
        let name = std::str::from_utf8(name)
            .map_err(|_| DecodeError::InvalidHeader(format!("rail {rail_id} name is not UTF-8")))?
            .to_string();
        let shunt = r.u32().ok_or(DecodeError::TruncatedHeader)?;
        let gain = r.u32().ok_or(DecodeError::TruncatedHeader)?;
        let v_channel = r.u8().ok_or(DecodeError::TruncatedHeader)?;
        let i_channel = r.u8().ok_or(DecodeError::TruncatedHeader)?;
        let group = r.u8().ok_or(DecodeError::TruncatedHeader)?;
        let group = RailGroup::from_u8(group)
            .ok_or_else(|| DecodeError::InvalidHeader(format!("rail {rail_id} group {group}")))?;
        rails.push(RailConfig {
            rail_id,
            name,
            shunt_ohms: f64::from(shunt) / 1e6,
            amp_gain: f64::from(gain) / 1e3,
            v_channel,
            i_channel,
            group,
        });
    }
    rail_model::validate_rails(&rails).map_err(|e| DecodeError::InvalidHeader(e.to_string()))?;
    Ok(TraceHeader {
        sample_rate_hz,
        block_frames,
        rails,
    })
}

/// Decodes a complete stream. Never reads past the slice; any malformed
/// input ends in an error or a (possibly shortened) trace.
pub fn decode(bytes: &[u8]) -> Result<Decoded, DecodeError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let header = decode_header(&mut r)?;
    let block_frames = header.block_frames;
    let rail_count = header.rails.len();
    let mut trace = TraceFile::new(header);
    let mut warnings = 0;
    let mut last_ts = 0u64;

    while r.remaining() > 0 {
        let start = r.pos;
        let tag = r.u8().expect("remaining > 0");
        let body = match tag {
            TAG_BLOCK => {
                let Some(prefix) = r.take(BLOCK_PREFIX_LEN) else {
                    warnings += 1;
                    break;
                };
                let ts = u64::from_le_bytes(prefix[..8].try_into().unwrap());
                let n = u16::from_le_bytes([prefix[8], prefix[9]]);
                if n == 0 || n > block_frames {
                    return Err(DecodeError::Corrupt(start));
                }
                let Some(data) = r.take(usize::from(n) * CHANNELS * 2) else {
                    warnings += 1;
                    break;
                };
                let frames = data
                    .chunks_exact(CHANNELS * 2)
                    .map(|row| {
                        let mut f = [0u16; CHANNELS];
                        for (code, pair) in f.iter_mut().zip(row.chunks_exact(2)) {
                            *code = u16::from_le_bytes([pair[0], pair[1]]);
                        }
                        f
                    })
                    .collect();
                (
                    ts,
                    RecordBody::Block(SampleBlock {
                        timestamp_ns: ts,
                        frames,
                    }),
                )
            }
            TAG_PMBUS => {
                let Some(b) = r.take(PMBUS_LEN) else {
                    warnings += 1;
                    break;
                };
                let ts = u64::from_le_bytes(b[..8].try_into().unwrap());
                let rail_id = b[8];
                if usize::from(rail_id) >= rail_count {
                    return Err(DecodeError::Corrupt(start));
                }
                let rec = PmbusRecord {
                    timestamp_ns: ts,
                    rail_id,
                    v: Linear11(u16::from_le_bytes([b[9], b[10]])),
                    i: Linear11(u16::from_le_bytes([b[11], b[12]])),
                };
                (ts, RecordBody::Pmbus(rec))
            }
            TAG_TRIGGER => {
                let Some(b) = r.take(TRIGGER_LEN) else {
                    warnings += 1;
                    break;
                };
                let ts = u64::from_le_bytes(b[..8].try_into().unwrap());
                let source = TriggerSource::from_u8(b[8]).ok_or(DecodeError::Corrupt(start))?;
                (
                    ts,
                    RecordBody::Trigger(TriggerEvent {
                        timestamp_ns: ts,
                        source,
                    }),
                )
            }
            _ => return Err(DecodeError::Corrupt(start)),
        };
        let (ts, body) = body;
        if ts < last_ts {
            return Err(DecodeError::Corrupt(start));
        }
        last_ts = ts;
        match body {
            RecordBody::Block(b) => trace.blocks.push(b),
            RecordBody::Pmbus(p) => trace.pmbus.push(p),
            RecordBody::Trigger(t) => trace.triggers.push(t),
        }
    }
    Ok(Decoded { trace, warnings })
}

enum RecordBody {
    Block(SampleBlock),
    Pmbus(PmbusRecord),
    Trigger(TriggerEvent),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExportError {
    #[error("unknown rail `{0}`")]
    UnknownRail(String),
}

/// CSV with one row per frame: `timestamp_ns` then V and I for each
/// selected rail (all rails when `rails` is empty). Raw codes, or volts and
/// amperes with six decimals when `engineering_units` is set.
pub fn export_csv(
    trace: &TraceFile,
    rails: &[&str],
    engineering_units: bool,
) -> Result<String, ExportError> {
    let selected: Vec<&RailConfig> = if rails.is_empty() {
        trace.header.rails.iter().collect()
    } else {
        rails
            .iter()
            .map(|name| {
                trace
                    .rail(name)
                    .ok_or_else(|| ExportError::UnknownRail(name.to_string()))
            })
            .collect::<Result<_, _>>()?
    };
    let adc = trace.header.adc();

    let mut out = String::from("timestamp_ns");
    for rail in &selected {
        let _ = write!(out, ",{0}_V,{0}_I", rail.name);
    }
    out.push('\n');

    for (ts, frame) in trace.frame_timestamps().into_iter().zip(trace.frames()) {
        let _ = write!(out, "{ts}");
        for rail in &selected {
            let v = frame[usize::from(rail.v_channel)];
            let i = frame[usize::from(rail.i_channel)];
            if engineering_units {
                let volts = rail_model::code_to_voltage(v, &adc);
                let amps = rail_model::sense_to_current(rail_model::code_to_voltage(i, &adc), rail);
                let _ = write!(out, ",{volts:.6},{amps:.6}");
            } else {
                let _ = write!(out, ",{v},{i}");
            }
        }
        out.push('\n');
    }
    Ok(out)
}
