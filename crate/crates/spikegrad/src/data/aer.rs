//! AER event-stream parsing and time binning (34x34, two polarities).
//!
//! Events are 5 bytes each: `x`, `y`, then polarity in bit 7 of the third
//! byte and a 23-bit microsecond timestamp in its remaining bits plus the
//! last two bytes, big-endian.

use std::path::Path;

use crate::error::{Error, Result};

/// Sensor width/height of the event files handled here.
pub const SENSOR_DIM: usize = 34;
/// Input neurons per event tensor: two polarity channels of 34x34 pixels.
pub const EVENT_INPUTS: usize = 2 * SENSOR_DIM * SENSOR_DIM;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Event {
    pub x: u8,
    pub y: u8,
    pub polarity: u8,
    pub timestamp_us: u32,
}

/// A time-ordered list of events.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EventStream {
    pub events: Vec<Event>,
}

/// Decode a 5-byte-per-event AER buffer. Coordinates are validated against
/// the 34x34 sensor; events are sorted by timestamp after decoding.
pub fn parse_aer_bytes(bytes: &[u8]) -> Result<EventStream> {
    if bytes.len() % 5 != 0 {
        return Err(Error::Data(format!(
            "AER buffer length {} is not a multiple of 5 (trailing partial event)",
            bytes.len()
        )));
    }
    let mut events = Vec::with_capacity(bytes.len() / 5);
    for (k, chunk) in bytes.chunks_exact(5).enumerate() {
        let (x, y) = (chunk[0], chunk[1]);
        if usize::from(x) >= SENSOR_DIM || usize::from(y) >= SENSOR_DIM {
            return Err(Error::Data(format!(
                "event {k}: coordinates ({x}, {y}) outside the {SENSOR_DIM}x{SENSOR_DIM} sensor"
            )));
        }
        let polarity = chunk[2] >> 7;
        let timestamp_us = (u32::from(chunk[2] & 0x7F) << 16)
            | (u32::from(chunk[3]) << 8)
            | u32::from(chunk[4]);
        events.push(Event { x, y, polarity, timestamp_us });
    }
    events.sort_by_key(|e| e.timestamp_us);
    Ok(EventStream { events })
}

/// Load one AER sample file.
pub fn load_nmnist_sample(path: &Path) -> Result<EventStream> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    parse_aer_bytes(&bytes)
}

/// Serialize events back into the 5-byte layout (timestamps must fit in
/// 23 bits).
pub fn write_aer_bytes(stream: &EventStream) -> Vec<u8> {
    let mut out = Vec::with_capacity(stream.events.len() * 5);
    for e in &stream.events {
        debug_assert!(e.timestamp_us < (1 << 23));
        out.push(e.x);
        out.push(e.y);
        out.push((e.polarity << 7) | ((e.timestamp_us >> 16) as u8 & 0x7F));
        out.push((e.timestamp_us >> 8) as u8);
        out.push(e.timestamp_us as u8);
    }
    out
}

/// Bin a stream into a binary spike tensor `[t * EVENT_INPUTS + channel]`
/// with 1 ms bins clamped to `t_bins`. The channel index is
/// `polarity * 34 * 34 + y * 34 + x`; multiple events in one bin saturate
/// to a single spike.
pub fn bin_events(stream: &EventStream, t_bins: usize) -> Vec<u8> {
    let mut out = vec![0u8; t_bins * EVENT_INPUTS];
    for e in &stream.events {
        let bin = ((e.timestamp_us / 1000) as usize).min(t_bins - 1);
        let channel = usize::from(e.polarity) * SENSOR_DIM * SENSOR_DIM
            + usize::from(e.y) * SENSOR_DIM
            + usize::from(e.x);
        out[bin * EVENT_INPUTS + channel] = 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decode_known_bytes() {
        let stream = parse_aer_bytes(&[0x05, 0x0A, 0x80, 0x00, 0x64]).unwrap();
        assert_eq!(
            stream.events,
            vec![Event { x: 5, y: 10, polarity: 1, timestamp_us: 100 }]
        );
    }

    #[test]
    fn empty_buffer_is_empty_stream() {
        assert!(parse_aer_bytes(&[]).unwrap().events.is_empty());
    }

    #[test]
    fn partial_event_is_error() {
        let err = parse_aer_bytes(&[0u8; 7]).unwrap_err();
        assert!(err.to_string().contains("partial"));
    }

    #[test]
    fn out_of_range_coordinates_are_error() {
        let err = parse_aer_bytes(&[34, 0, 0, 0, 0]).unwrap_err();
        assert!(err.to_string().contains("coordinates"));
    }

    #[test]
    fn events_are_sorted_after_load() {
        let bytes = write_aer_bytes(&EventStream {
            events: vec![
                Event { x: 1, y: 1, polarity: 0, timestamp_us: 5000 },
                Event { x: 2, y: 2, polarity: 1, timestamp_us: 100 },
            ],
        });
        let stream = parse_aer_bytes(&bytes).unwrap();
        assert!(stream.events.windows(2).all(|w| w[0].timestamp_us <= w[1].timestamp_us));
    }

    #[test]
    fn binning_rules() {
        let stream = EventStream {
            events: vec![
                Event { x: 0, y: 0, polarity: 0, timestamp_us: 0 },
                // Same pixel/polarity inside bin 0: saturates.
                Event { x: 3, y: 1, polarity: 1, timestamp_us: 100 },
                Event { x: 3, y: 1, polarity: 1, timestamp_us: 900 },
                // Far beyond the horizon: clamped into the last bin.
                Event { x: 7, y: 2, polarity: 0, timestamp_us: 350_000 },
            ],
        };
        let binned = bin_events(&stream, 300);
        assert_eq!(binned.iter().map(|&x| u32::from(x)).sum::<u32>(), 3);
        assert_eq!(binned[0], 1);
        let ch = SENSOR_DIM * SENSOR_DIM + SENSOR_DIM + 3;
        assert_eq!(binned[ch], 1);
        let ch_late = 2 * SENSOR_DIM + 7;
        assert_eq!(binned[299 * EVENT_INPUTS + ch_late], 1);
    }

    #[test]
    fn roundtrip_random_streams() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let n = rng.gen_range(0..40);
            let mut events: Vec<Event> = (0..n)
                .map(|_| Event {
                    x: rng.gen_range(0..34),
                    y: rng.gen_range(0..34),
                    polarity: rng.gen_range(0..2),
                    timestamp_us: rng.gen_range(0..(1 << 23)),
                })
                .collect();
            events.sort_by_key(|e| e.timestamp_us);
            let stream = EventStream { events };
            let parsed = parse_aer_bytes(&write_aer_bytes(&stream)).unwrap();
            assert_eq!(parsed, stream);
        }
    }
}
