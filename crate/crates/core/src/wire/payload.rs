//! Kind-specific payload layouts.
//!
//! Every payload starts with one byte holding the sub-1e-6 degree residual of
//! the record position (`(dlat + 5) * 11 + (dlon + 5)`, each residual in
//! 1e-7 degrees within `-5..=4`), so record positions survive the wire at
//! full 1e-7 resolution. Physical values are fixed-point:
//!
//! | kind | layout after the residual byte |
//! |------|--------------------------------|
//! | 1 CAM | originator u32, speed u16 (0.01 m/s), course u16 (0.1 deg), class u8 |
//! | 2 CPM detection | originator u32, object u16, class u8, speed u16, course u16 |
//! | 3 SPAT | intersection u32, signal group u16, phase u8 |
//! | 4 VUT sensor | group u8, then group fields (see [`encode_reading`]) |
//! | 5 driver | valence u8, arousal u8, heart rate u16 (0 = none), self-reported u8 |
//! | 6 environment | validity u32 s, radius u32 (0.1 m), temperature i16 (0.1 C), precipitation u16 (0.1 mm/h), wind u16 (0.01 m/s), wind dir u16 (0.1 deg), light u32 (0.1 lx), visibility u32 (0.1 m), pressure u16 (0.1 hPa), humidity u16 (0.1 %), clouds u16 (0.1 %) |
//! | 7 hazard | kind u8, source u32 |

use super::{BatchEnvelope, DeltaRecord, FixedPosition, MetaBlock, WireError, MAX_REL_COORD, REL_TIME_UNIT_MS};
use crate::geo::CourseDeg;
use crate::messages::{
    CamExtract, CpmDetection, DoorPosition, DriverStateSample, EnvironmentSample, ExteriorLights, HazardEvent,
    HazardKind, ObjectClassification, Record, RecordBody, RecordKind, SensorGroup, SignalPhase, SpatExtract,
    StationId, VutReading, DOOR_COUNT,
};

struct Out(Vec<u8>);

impl Out {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn i8(&mut self, v: i8) {
        self.0.push(v as u8);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn i16(&mut self, v: i16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
}

struct In<'a> {
    buf: &'a [u8],
    kind: RecordKind,
}

impl<'a> In<'a> {
    fn bad(&self, reason: &'static str) -> WireError {
        WireError::BadPayload { kind: self.kind, reason }
    }
    fn take<const N: usize>(&mut self) -> Result<[u8; N], WireError> {
        if self.buf.len() < N {
            return Err(self.bad("too short"));
        }
        let (head, rest) = self.buf.split_at(N);
        self.buf = rest;
        Ok(head.try_into().expect("length checked"))
    }
    fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take::<1>()?[0])
    }
    fn i8(&mut self) -> Result<i8, WireError> {
        Ok(self.take::<1>()?[0] as i8)
    }
    fn u16(&mut self) -> Result<u16, WireError> {
        Ok(u16::from_le_bytes(self.take()?))
    }
    fn i16(&mut self) -> Result<i16, WireError> {
        Ok(i16::from_le_bytes(self.take()?))
    }
    fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_le_bytes(self.take()?))
    }
    fn flag(&mut self) -> Result<bool, WireError> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            _ => Err(self.bad("flag byte not 0 or 1")),
        }
    }
    fn course(&mut self) -> Result<CourseDeg, WireError> {
        let q = self.u16()?;
        if q >= 3600 {
            return Err(self.bad("course out of range"));
        }
        Ok(CourseDeg::new(f64::from(q) / 10.0).expect("checked range"))
    }
    fn finish(self) -> Result<(), WireError> {
        if self.buf.is_empty() {
            Ok(())
        } else {
            Err(self.bad("unexpected trailing payload bytes"))
        }
    }
}

fn fixed(field: &'static str, value: f64, scale: f64, min: f64, max: f64) -> Result<f64, WireError> {
    let q = (value * scale).round();
    if q.is_finite() && q >= min && q <= max {
        Ok(q)
    } else {
        Err(WireError::ValueOutOfRange { field, value })
    }
}

fn fixed_u16(field: &'static str, value: f64, scale: f64) -> Result<u16, WireError> {
    fixed(field, value, scale, 0.0, f64::from(u16::MAX)).map(|q| q as u16)
}

fn fixed_i16(field: &'static str, value: f64, scale: f64) -> Result<i16, WireError> {
    fixed(field, value, scale, f64::from(i16::MIN), f64::from(i16::MAX)).map(|q| q as i16)
}

fn fixed_u32(field: &'static str, value: f64, scale: f64) -> Result<u32, WireError> {
    fixed(field, value, scale, 0.0, f64::from(u32::MAX)).map(|q| q as u32)
}

fn course_q(c: CourseDeg) -> u16 {
    let q = (c.value() * 10.0).round() as u16;
    if q >= 3600 {
        0
    } else {
        q
    }
}

/// Splits an offset in 1e-7 degrees into (1e-6 steps, residual in -5..=4).
fn split_offset(d: i64) -> (i64, i64) {
    let coarse = (d + 5).div_euclid(10);
    (coarse, d - coarse * 10)
}

/// Encodes `record` relative to `meta`.
///
/// Returns `Ok(None)` when the record's time or position falls outside the
/// delta ranges of this meta block.
pub fn encode_record(meta: &MetaBlock, record: &Record) -> Result<Option<DeltaRecord>, WireError> {
    if record.time < meta.ref_time {
        return Ok(None);
    }
    let rel_time = (record.time - meta.ref_time + REL_TIME_UNIT_MS / 2) / REL_TIME_UNIT_MS;
    let Ok(rel_time) = u16::try_from(rel_time) else {
        return Ok(None);
    };
    let p = FixedPosition::from_geo(record.position);
    let (rel_lat, fine_lat) = split_offset(i64::from(p.lat_e7) - i64::from(meta.ref_position.lat_e7));
    let (rel_lon, fine_lon) = split_offset(i64::from(p.lon_e7) - i64::from(meta.ref_position.lon_e7));
    let limit = i64::from(MAX_REL_COORD);
    if rel_lat.abs() > limit || rel_lon.abs() > limit {
        return Ok(None);
    }

    let mut out = Out(Vec::with_capacity(32));
    out.u8(((fine_lat + 5) * 11 + (fine_lon + 5)) as u8);
    encode_body(&mut out, &record.body)?;
    Ok(Some(DeltaRecord {
        kind: record.kind().code(),
        rel_time,
        rel_lat: rel_lat as i16,
        rel_lon: rel_lon as i16,
        payload: out.0,
    }))
}

fn encode_body(out: &mut Out, body: &RecordBody) -> Result<(), WireError> {
    match body {
        RecordBody::Cam(c) => {
            out.u32(c.originator.0);
            out.u16(fixed_u16("speed", c.speed, 100.0)?);
            out.u16(course_q(c.course));
            out.u8(c.classification.code());
        }
        RecordBody::CpmDetection { originator, detection } => {
            out.u32(originator.0);
            let id = u16::try_from(detection.object_id).map_err(|_| WireError::ValueOutOfRange {
                field: "object_id",
                value: f64::from(detection.object_id),
            })?;
            out.u16(id);
            out.u8(detection.classification.code());
            out.u16(fixed_u16("speed", detection.speed, 100.0)?);
            out.u16(course_q(detection.course));
        }
        RecordBody::Spat(s) => {
            out.u32(s.intersection_id);
            out.u16(s.signal_group);
            out.u8(s.phase.code());
        }
        RecordBody::VutSensor(r) => encode_reading(out, r)?,
        RecordBody::DriverState(d) => {
            if !d.is_valid() {
                return Err(WireError::ValueOutOfRange {
                    field: "driver state",
                    value: f64::from(d.valence) * 10.0 + f64::from(d.arousal),
                });
            }
            out.u8(d.valence);
            out.u8(d.arousal);
            out.u16(d.heart_rate_bpm.unwrap_or(0));
            out.u8(u8::from(d.self_reported));
        }
        RecordBody::Environment(e) => {
            out.u32(e.validity_duration);
            out.u32(fixed_u32("area_radius", e.area_radius, 10.0)?);
            out.i16(fixed_i16("temperature_c", e.temperature_c, 10.0)?);
            out.u16(fixed_u16("precipitation_mm_h", e.precipitation_mm_h, 10.0)?);
            out.u16(fixed_u16("wind_speed_ms", e.wind_speed_ms, 100.0)?);
            out.u16(course_q(e.wind_direction));
            out.u32(fixed_u32("illuminance_lux", e.illuminance_lux, 10.0)?);
            out.u32(fixed_u32("visibility_m", e.visibility_m, 10.0)?);
            out.u16(fixed_u16("pressure_hpa", e.pressure_hpa, 10.0)?);
            if !(0.0..=100.0).contains(&e.humidity_pct) {
                return Err(WireError::ValueOutOfRange {
                    field: "humidity_pct",
                    value: e.humidity_pct,
                });
            }
            if !(0.0..=100.0).contains(&e.cloudiness_pct) {
                return Err(WireError::ValueOutOfRange {
                    field: "cloudiness_pct",
                    value: e.cloudiness_pct,
                });
            }
            out.u16(fixed_u16("humidity_pct", e.humidity_pct, 10.0)?);
            out.u16(fixed_u16("cloudiness_pct", e.cloudiness_pct, 10.0)?);
        }
        RecordBody::Hazard(h) => {
            out.u8(h.kind.code());
            out.u32(h.source.0);
        }
    }
    Ok(())
}

/// VUT sensor groups:
///
/// * dynamics: speed u16 (0.01 m/s), accel long/lat i16 (0.01 m/s2), yaw rate i16 (0.01 deg/s),
///   steering angle i16 (0.1 deg), steering velocity i16 (0.1 deg/s)
/// * brake: bit set (actuated, ABS, panic)
/// * gnss: course u16 (0.1 deg); position is the record position
/// * body: clutch u8, gear i8, doors u8 (2 bits each), lights u8
/// * rain: intensity u8 (0..=7), wiper u8
fn encode_reading(out: &mut Out, r: &VutReading) -> Result<(), WireError> {
    out.u8(r.group().code());
    match *r {
        VutReading::Dynamics {
            speed,
            accel_longitudinal,
            accel_lateral,
            yaw_rate,
            steering_wheel_angle,
            steering_wheel_velocity,
        } => {
            out.u16(fixed_u16("speed", speed, 100.0)?);
            out.i16(fixed_i16("accel_longitudinal", accel_longitudinal, 100.0)?);
            out.i16(fixed_i16("accel_lateral", accel_lateral, 100.0)?);
            out.i16(fixed_i16("yaw_rate", yaw_rate, 100.0)?);
            out.i16(fixed_i16("steering_wheel_angle", steering_wheel_angle, 10.0)?);
            out.i16(fixed_i16("steering_wheel_velocity", steering_wheel_velocity, 10.0)?);
        }
        VutReading::Brake {
            brake_actuated,
            abs_active,
            panic_braking,
        } => {
            out.u8(u8::from(brake_actuated) | u8::from(abs_active) << 1 | u8::from(panic_braking) << 2);
        }
        VutReading::Gnss { course, .. } => out.u16(course_q(course)),
        VutReading::Body {
            clutch_pressed,
            gear,
            door_positions,
            exterior_lights,
        } => {
            if gear < -1 {
                return Err(WireError::ValueOutOfRange {
                    field: "gear",
                    value: f64::from(gear),
                });
            }
            out.u8(u8::from(clutch_pressed));
            out.i8(gear);
            let doors = door_positions
                .iter()
                .enumerate()
                .fold(0u8, |acc, (i, d)| acc | d.code() << (2 * i));
            out.u8(doors);
            out.u8(exterior_lights.0 & ExteriorLights::MASK);
        }
        VutReading::Rain {
            rain_intensity,
            wiper_active,
        } => {
            if rain_intensity > 7 {
                return Err(WireError::ValueOutOfRange {
                    field: "rain_intensity",
                    value: f64::from(rain_intensity),
                });
            }
            out.u8(rain_intensity);
            out.u8(u8::from(wiper_active));
        }
    }
    Ok(())
}

/// Reconstructs the absolute record from a delta record.
pub fn decode_record(meta: &MetaBlock, d: &DeltaRecord) -> Result<Record, WireError> {
    let kind = RecordKind::from_code(d.kind).ok_or(WireError::UnknownKind(d.kind))?;
    let mut inp = In { buf: &d.payload, kind };
    let fine = inp.u8()?;
    if fine > 120 {
        return Err(inp.bad("position residual out of range"));
    }
    let fine_lat = i64::from(fine / 11) - 5;
    let fine_lon = i64::from(fine % 11) - 5;
    let lat_e7 = i64::from(meta.ref_position.lat_e7) + i64::from(d.rel_lat) * 10 + fine_lat;
    let lon_e7 = i64::from(meta.ref_position.lon_e7) + i64::from(d.rel_lon) * 10 + fine_lon;
    let fixed = match (i32::try_from(lat_e7), i32::try_from(lon_e7)) {
        (Ok(lat_e7), Ok(lon_e7)) => FixedPosition { lat_e7, lon_e7 },
        _ => return Err(inp.bad("position out of range")),
    };
    if !fixed.is_valid() {
        return Err(inp.bad("position out of range"));
    }
    let position = fixed.to_geo();
    let time = meta
        .ref_time
        .checked_add(REL_TIME_UNIT_MS * u64::from(d.rel_time))
        .ok_or_else(|| inp.bad("time overflow"))?;

    let record = match kind {
        RecordKind::Cam => {
            let originator = StationId(inp.u32()?);
            let speed = f64::from(inp.u16()?) / 100.0;
            let course = inp.course()?;
            let classification = ObjectClassification::from_code(u32::from(inp.u8()?));
            Record::cam(CamExtract {
                originator,
                generation_time: time,
                position,
                speed,
                course,
                classification,
            })
        }
        RecordKind::CpmDetection => {
            let originator = StationId(inp.u32()?);
            let object_id = u32::from(inp.u16()?);
            let classification = ObjectClassification::from_code(u32::from(inp.u8()?));
            let speed = f64::from(inp.u16()?) / 100.0;
            let course = inp.course()?;
            Record::cpm_detection(
                originator,
                time,
                CpmDetection {
                    object_id,
                    classification,
                    position,
                    speed,
                    course,
                },
            )
        }
        RecordKind::Spat => {
            let intersection_id = inp.u32()?;
            let signal_group = inp.u16()?;
            let phase = SignalPhase::from_code(inp.u8()?);
            Record::spat(
                SpatExtract {
                    intersection_id,
                    signal_group,
                    phase,
                    change_time: time,
                },
                position,
            )
        }
        RecordKind::VutSensor => Record::vut_sensor(time, position, decode_reading(&mut inp, position)?),
        RecordKind::DriverState => {
            let valence = inp.u8()?;
            let arousal = inp.u8()?;
            let hr = inp.u16()?;
            let self_reported = inp.flag()?;
            let d = DriverStateSample {
                timestamp: time,
                valence,
                arousal,
                heart_rate_bpm: (hr != 0).then_some(hr),
                self_reported,
            };
            if !d.is_valid() {
                return Err(inp.bad("valence/arousal outside 1..=5"));
            }
            Record::driver(d, position)
        }
        RecordKind::Environment => {
            let validity_duration = inp.u32()?;
            let area_radius = f64::from(inp.u32()?) / 10.0;
            let temperature_c = f64::from(inp.i16()?) / 10.0;
            let precipitation_mm_h = f64::from(inp.u16()?) / 10.0;
            let wind_speed_ms = f64::from(inp.u16()?) / 100.0;
            let wind_direction = inp.course()?;
            let illuminance_lux = f64::from(inp.u32()?) / 10.0;
            let visibility_m = f64::from(inp.u32()?) / 10.0;
            let pressure_hpa = f64::from(inp.u16()?) / 10.0;
            let humidity = inp.u16()?;
            let clouds = inp.u16()?;
            if humidity > 1000 || clouds > 1000 {
                return Err(inp.bad("percentage above 100"));
            }
            Record::environment(EnvironmentSample {
                timestamp: time,
                validity_duration,
                area_center: position,
                area_radius,
                temperature_c,
                precipitation_mm_h,
                wind_speed_ms,
                wind_direction,
                illuminance_lux,
                visibility_m,
                pressure_hpa,
                humidity_pct: f64::from(humidity) / 10.0,
                cloudiness_pct: f64::from(clouds) / 10.0,
            })
        }
        RecordKind::Hazard => {
            let kind = HazardKind::from_code(inp.u8()?);
            let source = StationId(inp.u32()?);
            Record::hazard(HazardEvent {
                kind,
                timestamp: time,
                position,
                source,
            })
        }
    };
    inp.finish()?;
    Ok(record)
}

fn decode_reading(inp: &mut In<'_>, position: crate::geo::GeoPosition) -> Result<VutReading, WireError> {
    let group = SensorGroup::from_code(inp.u8()?).ok_or_else(|| inp.bad("unknown sensor group"))?;
    Ok(match group {
        SensorGroup::Dynamics => VutReading::Dynamics {
            speed: f64::from(inp.u16()?) / 100.0,
            accel_longitudinal: f64::from(inp.i16()?) / 100.0,
            accel_lateral: f64::from(inp.i16()?) / 100.0,
            yaw_rate: f64::from(inp.i16()?) / 100.0,
            steering_wheel_angle: f64::from(inp.i16()?) / 10.0,
            steering_wheel_velocity: f64::from(inp.i16()?) / 10.0,
        },
        SensorGroup::Brake => {
            let bits = inp.u8()?;
            if bits > 0b111 {
                return Err(inp.bad("unknown brake flags"));
            }
            VutReading::Brake {
                brake_actuated: bits & 1 != 0,
                abs_active: bits & 2 != 0,
                panic_braking: bits & 4 != 0,
            }
        }
        SensorGroup::Gnss => VutReading::Gnss {
            position,
            course: inp.course()?,
        },
        SensorGroup::Body => {
            let clutch_pressed = inp.flag()?;
            let gear = inp.i8()?;
            if gear < -1 {
                return Err(inp.bad("gear below reverse"));
            }
            let doors = inp.u8()?;
            let mut door_positions = [DoorPosition::Closed; DOOR_COUNT];
            for (i, d) in door_positions.iter_mut().enumerate() {
                let code = (doors >> (2 * i)) & 0b11;
                if code == 3 {
                    return Err(inp.bad("unknown door position"));
                }
                *d = DoorPosition::from_code(code);
            }
            let lights = inp.u8()?;
            if lights & !ExteriorLights::MASK != 0 {
                return Err(inp.bad("unknown light flags"));
            }
            VutReading::Body {
                clutch_pressed,
                gear,
                door_positions,
                exterior_lights: ExteriorLights(lights),
            }
        }
        SensorGroup::Rain => {
            let rain_intensity = inp.u8()?;
            if rain_intensity > 7 {
                return Err(inp.bad("rain intensity above 7"));
            }
            VutReading::Rain {
                rain_intensity,
                wiper_active: inp.flag()?,
            }
        }
    })
}

/// Decodes every record of an envelope; the first malformed one rejects the batch.
pub fn decode_records(e: &BatchEnvelope) -> Result<Vec<Record>, WireError> {
    e.records.iter().map(|d| decode_record(&e.meta, d)).collect()
}
