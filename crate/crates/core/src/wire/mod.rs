//! Batch wire format.
//!
//! One batch is an absolute meta block followed by records that carry only
//! small relative offsets:
//!
//! ```text
//! "KSB1" | station u32 | ref_time u64 | ref_lat i32 | ref_lon i32 | count u16     (26 bytes)
//! record: kind u8 | rel_time u16 | rel_lat i16 | rel_lon i16 | payload_len u16 | payload
//! ```
//!
//! All integers are little-endian. Absolute coordinates use 1e-7 degree
//! units, relative coordinates 1e-6 degrees, relative time 10 ms. Payload
//! layouts per record kind live in [`payload`]; `.ksb` framing in [`frame`].

pub mod frame;
pub mod payload;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::GeoPosition;
use crate::messages::{Record, RecordKind, StationId, TimestampMs};

pub use frame::{read_frame, read_ksb, write_frame, write_ksb, FrameError, MAX_FRAME_LEN};
pub use payload::{decode_record, decode_records, encode_record};

pub const MAGIC: [u8; 4] = *b"KSB1";
pub const HEADER_LEN: usize = 26;
pub const RECORD_HEAD_LEN: usize = 9;

/// Relative time unit in milliseconds.
pub const REL_TIME_UNIT_MS: u64 = 10;
/// Largest magnitude of a relative coordinate, in 1e-6 degrees.
pub const MAX_REL_COORD: i32 = 32_767;
pub const MAX_RECORDS: usize = u16::MAX as usize;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WireError {
    #[error("bad magic, expected KSB1")]
    BadMagic,
    #[error("input truncated at byte {0}")]
    Truncated(usize),
    #[error("unknown record kind {0}")]
    UnknownKind(u8),
    #[error("{0} trailing bytes after last record")]
    TrailingBytes(usize),
    #[error("record {index} exceeds the relative delta ranges")]
    DeltaOverflow { index: usize },
    #[error("meta block declares {declared} records but envelope holds {actual}")]
    CountMismatch { declared: u16, actual: usize },
    #[error("malformed {kind:?} payload: {reason}")]
    BadPayload { kind: RecordKind, reason: &'static str },
    #[error("{field} = {value} cannot be represented on the wire")]
    ValueOutOfRange { field: &'static str, value: f64 },
}

/// Position quantized to 1e-7 degrees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct FixedPosition {
    pub lat_e7: i32,
    pub lon_e7: i32,
}

impl FixedPosition {
    pub fn from_geo(p: GeoPosition) -> Self {
        FixedPosition {
            lat_e7: (p.lat * 1e7).round() as i32,
            lon_e7: (p.lon * 1e7).round() as i32,
        }
    }

    pub fn to_geo(self) -> GeoPosition {
        GeoPosition {
            lat: f64::from(self.lat_e7) / 1e7,
            lon: f64::from(self.lon_e7) / 1e7,
        }
    }

    pub fn is_valid(self) -> bool {
        (-900_000_000..=900_000_000).contains(&self.lat_e7)
            && (-1_800_000_000..=1_800_000_000).contains(&self.lon_e7)
    }
}

/// Rounds a position to wire resolution.
pub fn quantize_position(p: GeoPosition) -> GeoPosition {
    FixedPosition::from_geo(p).to_geo()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetaBlock {
    pub station: StationId,
    pub ref_time: TimestampMs,
    pub ref_position: FixedPosition,
    pub record_count: u16,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeltaRecord {
    pub kind: u8,
    /// 10 ms units after `ref_time`.
    pub rel_time: u16,
    /// 1e-6 degree units from the reference position.
    pub rel_lat: i16,
    pub rel_lon: i16,
    pub payload: Vec<u8>,
}

impl DeltaRecord {
    fn encoded_len(&self) -> usize {
        RECORD_HEAD_LEN + self.payload.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchEnvelope {
    pub meta: MetaBlock,
    pub records: Vec<DeltaRecord>,
}

impl BatchEnvelope {
    /// Envelope with `record_count` taken from `records`.
    ///
    /// Panics if there are more than 65535 records.
    pub fn new(station: StationId, ref_time: TimestampMs, ref_position: FixedPosition, records: Vec<DeltaRecord>) -> Self {
        let record_count = u16::try_from(records.len()).expect("at most 65535 records per envelope");
        BatchEnvelope {
            meta: MetaBlock {
                station,
                ref_time,
                ref_position,
                record_count,
            },
            records,
        }
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + self.records.iter().map(DeltaRecord::encoded_len).sum::<usize>()
    }

    /// Absolute time of a record.
    pub fn absolute_time(&self, r: &DeltaRecord) -> TimestampMs {
        self.meta.ref_time + REL_TIME_UNIT_MS * u64::from(r.rel_time)
    }
}

/// Size of the same records stored with an absolute u64 time and two i32
/// coordinates each instead of the meta block plus relative offsets.
pub fn naive_encoded_len(e: &BatchEnvelope) -> usize {
    e.records.iter().map(|r| 1 + 8 + 4 + 4 + 2 + r.payload.len()).sum()
}

pub fn encode_batch(e: &BatchEnvelope) -> Result<Vec<u8>, WireError> {
    if usize::from(e.meta.record_count) != e.records.len() {
        return Err(WireError::CountMismatch {
            declared: e.meta.record_count,
            actual: e.records.len(),
        });
    }
    let mut out = Vec::with_capacity(e.encoded_len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&e.meta.station.0.to_le_bytes());
    out.extend_from_slice(&e.meta.ref_time.to_le_bytes());
    out.extend_from_slice(&e.meta.ref_position.lat_e7.to_le_bytes());
    out.extend_from_slice(&e.meta.ref_position.lon_e7.to_le_bytes());
    out.extend_from_slice(&e.meta.record_count.to_le_bytes());
    for (index, r) in e.records.iter().enumerate() {
        // i16::MIN is outside the symmetric offset range
        if r.rel_lat == i16::MIN || r.rel_lon == i16::MIN {
            return Err(WireError::DeltaOverflow { index });
        }
        let len = u16::try_from(r.payload.len()).map_err(|_| WireError::DeltaOverflow { index })?;
        out.push(r.kind);
        out.extend_from_slice(&r.rel_time.to_le_bytes());
        out.extend_from_slice(&r.rel_lat.to_le_bytes());
        out.extend_from_slice(&r.rel_lon.to_le_bytes());
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(&r.payload);
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], WireError> {
        let bytes = self.bytes(N)?;
        Ok(bytes.try_into().expect("length checked"))
    }

    fn bytes(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(WireError::Truncated(self.buf.len())),
        }
    }
}

pub fn decode_batch(bytes: &[u8]) -> Result<BatchEnvelope, WireError> {
    let mut rd = Reader { buf: bytes, pos: 0 };
    let magic: [u8; 4] = match rd.take() {
        Ok(m) => m,
        // a short buffer that does not even start with the magic is not ours
        Err(e) => {
            return if MAGIC.starts_with(bytes) {
                Err(e)
            } else {
                Err(WireError::BadMagic)
            }
        }
    };
    if magic != MAGIC {
        return Err(WireError::BadMagic);
    }
    let station = StationId(u32::from_le_bytes(rd.take()?));
    let ref_time = u64::from_le_bytes(rd.take()?);
    let lat_e7 = i32::from_le_bytes(rd.take()?);
    let lon_e7 = i32::from_le_bytes(rd.take()?);
    let record_count = u16::from_le_bytes(rd.take()?);

    let mut records = Vec::with_capacity(usize::from(record_count).min(bytes.len() / RECORD_HEAD_LEN));
    for _ in 0..record_count {
        let [kind] = rd.take::<1>()?;
        if RecordKind::from_code(kind).is_none() {
            return Err(WireError::UnknownKind(kind));
        }
        let rel_time = u16::from_le_bytes(rd.take()?);
        let rel_lat = i16::from_le_bytes(rd.take()?);
        let rel_lon = i16::from_le_bytes(rd.take()?);
        let len = u16::from_le_bytes(rd.take()?);
        let payload = rd.bytes(usize::from(len))?.to_vec();
        records.push(DeltaRecord {
            kind,
            rel_time,
            rel_lat,
            rel_lon,
            payload,
        });
    }
    if rd.pos != bytes.len() {
        return Err(WireError::TrailingBytes(bytes.len() - rd.pos));
    }
    Ok(BatchEnvelope {
        meta: MetaBlock {
            station,
            ref_time,
            ref_position: FixedPosition { lat_e7, lon_e7 },
            record_count,
        },
        records,
    })
}

/// Greedily packs time-sorted records into as few envelopes as the delta
/// ranges allow. Each envelope's reference is its first record.
///
/// Times are rounded to 10 ms steps after the reference and positions to
/// 1e-7 degrees; decoding the output yields the quantized records.
pub fn plan_batches(records: &[Record], station: StationId) -> Result<Vec<BatchEnvelope>, WireError> {
    let mut out = Vec::new();
    let mut current: Option<(MetaBlock, Vec<DeltaRecord>)> = None;

    for record in records {
        if let Some((meta, deltas)) = current.as_mut() {
            if deltas.len() < MAX_RECORDS {
                if let Some(d) = encode_record(meta, record)? {
                    deltas.push(d);
                    continue;
                }
            }
        }
        if let Some((meta, deltas)) = current.take() {
            out.push(BatchEnvelope::new(meta.station, meta.ref_time, meta.ref_position, deltas));
        }
        let meta = MetaBlock {
            station,
            ref_time: record.time,
            ref_position: FixedPosition::from_geo(record.position),
            record_count: 0,
        };
        let first = encode_record(&meta, record)?.expect("a record always fits its own envelope");
        current = Some((meta, vec![first]));
    }
    if let Some((meta, deltas)) = current {
        out.push(BatchEnvelope::new(meta.station, meta.ref_time, meta.ref_position, deltas));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::CourseDeg;
    use crate::messages::{CamExtract, ObjectClassification};

    fn cam(t: u64, lat: f64, lon: f64) -> Record {
        Record::cam(CamExtract {
            originator: StationId(201),
            generation_time: t,
            position: GeoPosition::new(lat, lon).unwrap(),
            speed: 10.33,
            course: CourseDeg::new(90.0).unwrap(),
            classification: ObjectClassification::PassengerCar,
        })
    }

    #[test]
    fn empty_envelope_is_header_only() {
        let e = BatchEnvelope::new(StationId(7), 1_600_000_000_000, FixedPosition::default(), vec![]);
        let bytes = encode_batch(&e).unwrap();
        assert_eq!(bytes.len(), 26);
        assert_eq!(&bytes[..4], b"KSB1");
        assert_eq!(decode_batch(&bytes).unwrap(), e);
    }

    #[test]
    fn single_cam_record_layout() {
        let r = cam(1_000, 49.2339473, 6.9828387);
        let env = plan_batches(&[r], StationId(7)).unwrap().pop().unwrap();
        let d = &env.records[0];
        assert_eq!((d.rel_time, d.rel_lat, d.rel_lon), (0, 0, 0));
        let bytes = encode_batch(&env).unwrap();
        assert_eq!(bytes.len(), HEADER_LEN + RECORD_HEAD_LEN + d.payload.len());
        // kind, then the zero offsets
        assert_eq!(bytes[26], 1);
        assert_eq!(&bytes[27..33], &[0; 6]);
        assert_eq!(u16::from_le_bytes([bytes[33], bytes[34]]) as usize, d.payload.len());
    }

    #[test]
    fn header_fields_little_endian() {
        let e = BatchEnvelope::new(
            StationId(0x0102_0304),
            0x1122_3344_5566_7788,
            FixedPosition {
                lat_e7: -1,
                lon_e7: 2,
            },
            vec![],
        );
        let b = encode_batch(&e).unwrap();
        assert_eq!(&b[4..8], &[4, 3, 2, 1]);
        assert_eq!(&b[8..16], &[0x88, 0x77, 0x66, 0x55, 0x44, 0x33, 0x22, 0x11]);
        assert_eq!(&b[16..20], &[0xff; 4]);
        assert_eq!(&b[20..24], &[2, 0, 0, 0]);
        assert_eq!(&b[24..26], &[0, 0]);
    }

    #[test]
    fn decode_errors() {
        let e = BatchEnvelope::new(
            StationId(1),
            5,
            FixedPosition::default(),
            vec![DeltaRecord {
                kind: 3,
                rel_time: 1,
                rel_lat: -2,
                rel_lon: 3,
                payload: vec![1, 2, 3],
            }],
        );
        let mut b = encode_batch(&e).unwrap();
        assert_eq!(decode_batch(&b[..HEADER_LEN]), Err(WireError::Truncated(HEADER_LEN)));
        assert!(matches!(decode_batch(&b[..b.len() - 1]), Err(WireError::Truncated(_))));
        assert!(matches!(decode_batch(&b[..10]), Err(WireError::Truncated(_))));
        assert_eq!(decode_batch(b"KS"), Err(WireError::Truncated(2)));
        assert_eq!(decode_batch(b"XX"), Err(WireError::BadMagic));
        b.push(0);
        assert_eq!(decode_batch(&b), Err(WireError::TrailingBytes(1)));
        b.pop();
        b[26] = 99;
        assert_eq!(decode_batch(&b), Err(WireError::UnknownKind(99)));
        b[0] = b'X';
        assert_eq!(decode_batch(&b), Err(WireError::BadMagic));
    }

    #[test]
    fn encode_rejects_overflowing_records() {
        let mut e = BatchEnvelope::new(
            StationId(1),
            5,
            FixedPosition::default(),
            vec![DeltaRecord {
                kind: 1,
                rel_time: 0,
                rel_lat: i16::MIN,
                rel_lon: 0,
                payload: vec![],
            }],
        );
        assert_eq!(encode_batch(&e), Err(WireError::DeltaOverflow { index: 0 }));
        e.records[0].rel_lat = 0;
        e.records[0].payload = vec![0; 70_000];
        assert_eq!(encode_batch(&e), Err(WireError::DeltaOverflow { index: 0 }));
        e.records.clear();
        assert!(matches!(encode_batch(&e), Err(WireError::CountMismatch { .. })));
    }

    #[test]
    fn plan_single_area_single_envelope() {
        let records: Vec<Record> = (0..100).map(|i| cam(1_000_000 + i * 100, 49.2339 + i as f64 * 1e-6, 6.98)).collect();
        let batches = plan_batches(&records, StationId(3)).unwrap();
        assert_eq!(batches.len(), 1);
        assert_eq!(batches[0].records.len(), 100);
        assert_eq!(batches[0].meta.ref_time, 1_000_000);
    }

    #[test]
    fn plan_splits_on_position_overflow() {
        // about 5 km north
        let records = vec![cam(1_000, 49.0, 7.0), cam(1_010, 49.045, 7.0)];
        let batches = plan_batches(&records, StationId(3)).unwrap();
        assert_eq!(batches.len(), 2);
    }

    #[test]
    fn plan_splits_on_time_overflow() {
        let records = vec![cam(0, 49.0, 7.0), cam(655_350, 49.0, 7.0), cam(655_360, 49.0, 7.0)];
        let batches = plan_batches(&records, StationId(3)).unwrap();
        assert_eq!(batches.len(), 2);
        assert_eq!(batches[0].records.len(), 2);
    }

    #[test]
    fn plan_splits_on_record_count() {
        let records: Vec<Record> = (0..70_000).map(|_| cam(1_000, 49.0, 7.0)).collect();
        let batches = plan_batches(&records, StationId(3)).unwrap();
        assert_eq!(batches.len(), 2);
        assert_eq!(batches[0].records.len(), MAX_RECORDS);
        assert_eq!(batches[1].records.len(), 70_000 - MAX_RECORDS);
    }

    #[test]
    fn packing_beats_naive_absolute_encoding() {
        let records: Vec<Record> = (0..50).map(|i| cam(1_000 + i * 100, 49.2339 + i as f64 * 2e-6, 6.98)).collect();
        let env = plan_batches(&records, StationId(3)).unwrap().pop().unwrap();
        let packed = encode_batch(&env).unwrap().len();
        assert!((packed as f64) < 0.7 * naive_encoded_len(&env) as f64);
    }
}
