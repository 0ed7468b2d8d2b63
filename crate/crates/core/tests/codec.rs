use proptest::prelude::*;

use railscope::pmbus::{Linear11, PmbusRecord};
use railscope::rail_model::{RailConfig, RailGroup, CHANNELS};
use railscope::trace_codec::{
    decode, encode, DecodeError, SampleBlock, TraceFile, TraceHeader, TriggerEvent, TriggerSource,
};

fn rail(i: usize, name: String, shunt_uohm: u32, gain_milli: u32, group: u8) -> RailConfig {
    let mut r = RailConfig::new(
        i as u8,
        &name,
        RailGroup::from_u8(group).unwrap(),
        (2 * i) as u8,
        (2 * i + 1) as u8,
    );
    r.shunt_ohms = f64::from(shunt_uohm) / 1e6;
    r.amp_gain = f64::from(gain_milli) / 1e3;
    r
}

fn header() -> impl Strategy<Value = TraceHeader> {
    let rails = prop::collection::vec(
        ("[A-Z_0-9]{1,16}", 1u32..10_000_000, 1u32..1_000_000, 0u8..4),
        0..=9,
    )
    .prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(i, (n, s, g, grp))| rail(i, n, s, g, grp))
            .collect()
    });
    (1u32..=630_000, 1u16..=64, rails).prop_map(|(sample_rate_hz, block_frames, rails)| {
        TraceHeader {
            sample_rate_hz,
            block_frames,
            rails,
        }
    })
}

fn trace() -> impl Strategy<Value = TraceFile> {
    header()
        .prop_flat_map(|h| {
            let bf = usize::from(h.block_frames);
            let nrails = h.rails.len() as u8;
            let blocks = prop::collection::vec(
                (
                    0u64..10_000,
                    prop::collection::vec(prop::array::uniform18(any::<u16>()), 1..=bf),
                ),
                0..6,
            );
            let pmbus = if nrails == 0 {
                Just(Vec::new()).boxed()
            } else {
                prop::collection::vec((0u64..10_000, 0..nrails, any::<u16>(), any::<u16>()), 0..10)
                    .boxed()
            };
            let triggers = prop::collection::vec(0u64..10_000, 0..3);
            (Just(h), blocks, pmbus, triggers)
        })
        .prop_map(|(h, blocks, pmbus, triggers)| {
            let mut t = TraceFile::new(h);
            let mut clock = 0;
            for (dt, frames) in blocks {
                clock += dt;
                t.blocks.push(SampleBlock {
                    timestamp_ns: clock,
                    frames,
                });
            }
            let mut clock = 0;
            for (dt, rail_id, v, i) in pmbus {
                clock += dt;
                t.pmbus.push(PmbusRecord {
                    timestamp_ns: clock,
                    rail_id,
                    v: Linear11(v),
                    i: Linear11(i),
                });
            }
            let mut clock = 0;
            for dt in triggers {
                clock += dt;
                t.triggers.push(TriggerEvent {
                    timestamp_ns: clock,
                    source: TriggerSource::ExternalLine,
                });
            }
            t
        })
}

proptest! {
    #[test]
    fn round_trip_is_bit_exact(t in trace()) {
        let bytes = encode(&t);
        let back = decode(&bytes).unwrap();
        prop_assert_eq!(back.warnings, 0);
        prop_assert_eq!(&back.trace, &t);
        prop_assert_eq!(encode(&back.trace), bytes);
    }

    #[test]
    fn encoded_size_matches_layout(t in trace()) {
        let records: usize = t.blocks.iter().map(|b| 1 + 8 + 2 + b.frames.len() * CHANNELS * 2).sum::<usize>()
            + t.pmbus.len() * (1 + 8 + 1 + 2 + 2)
            + t.triggers.len() * (1 + 8 + 1);
        prop_assert_eq!(encode(&t).len(), t.header.encoded_len() + records);
    }

    /// Cutting a file anywhere after the header loses at most the last
    /// record, and what survives is a prefix of the original.
    #[test]
    fn truncation_keeps_a_prefix(t in trace(), cut in any::<prop::sample::Index>()) {
        let bytes = encode(&t);
        let hlen = t.header.encoded_len();
        let at = hlen + cut.index(bytes.len() - hlen + 1);
        let d = decode(&bytes[..at]).unwrap();
        prop_assert!(d.warnings <= 1);
        prop_assert!(t.blocks.starts_with(&d.trace.blocks));
        prop_assert!(t.pmbus.starts_with(&d.trace.pmbus));
        prop_assert!(t.triggers.starts_with(&d.trace.triggers));
    }

    #[test]
    fn arbitrary_bytes_never_panic(bytes in prop::collection::vec(any::<u8>(), 0..512)) {
        let _ = decode(&bytes);
    }

    #[test]
    fn arbitrary_payload_after_magic_never_panics(tail in prop::collection::vec(any::<u8>(), 0..512)) {
        let mut bytes = b"PTRC\x01\x00".to_vec();
        bytes.extend(tail);
        let _ = decode(&bytes);
    }
}

#[test]
fn header_truncation_is_an_error_not_a_warning() {
    let t = TraceFile::new(TraceHeader {
        sample_rate_hz: 225_000,
        block_frames: 64,
        rails: vec![rail(0, "A".into(), 100_000, 50_000, 0)],
    });
    let bytes = encode(&t);
    for cut in 6..bytes.len() {
        assert!(
            matches!(decode(&bytes[..cut]), Err(DecodeError::TruncatedHeader)),
            "cut {cut}"
        );
    }
    assert!(matches!(decode(&bytes[..3]), Err(DecodeError::NotATrace)));
}
